//! Injective match enumeration and the dangling condition.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{EdgeId, GraphError, InstanceGraph, Morphism, NodeId, TypeGraph};

/// Enumerates all injective typed morphisms `pattern -> host`, sorted.
///
/// Both graphs are validated against `tg` first; a graph that is not typed
/// over `tg` is rejected.
pub fn enumerate_matches(
    tg: &TypeGraph,
    pattern: &InstanceGraph,
    host: &InstanceGraph,
) -> Result<Vec<Morphism>, GraphError> {
    pattern
        .validate(tg)
        .map_err(|_| GraphError::TypeGraphMismatch)?;
    host.validate(tg)
        .map_err(|_| GraphError::TypeGraphMismatch)?;
    Ok(find_matches(pattern, host, &Morphism::new()))
}

/// Enumerates injective matches extending the partial assignment `seed`.
///
/// Seed entries that are inconsistent (wrong type, missing host element,
/// non-injective) simply yield no matches. The result is sorted.
pub fn find_matches(
    pattern: &InstanceGraph,
    host: &InstanceGraph,
    seed: &Morphism,
) -> Vec<Morphism> {
    let mut out = Vec::new();
    let search = Search::new(pattern, host);
    search.run(seed, &mut |m| {
        out.push(m);
        true
    });
    out.sort();
    out
}

/// Returns the first match (in search order) for which `accept` holds.
pub fn find_first_match(
    pattern: &InstanceGraph,
    host: &InstanceGraph,
    seed: &Morphism,
    mut accept: impl FnMut(&Morphism) -> bool,
) -> Option<Morphism> {
    let mut found = None;
    Search::new(pattern, host).run(seed, &mut |m| {
        if accept(&m) {
            found = Some(m);
            false
        } else {
            true
        }
    });
    found
}

/// True iff `pattern` embeds injectively into `host`.
pub fn embeds(pattern: &InstanceGraph, host: &InstanceGraph) -> bool {
    find_first_match(pattern, host, &Morphism::new(), |_| true).is_some()
}

/// Returns a host edge that would be left dangling by deleting the images of
/// `deleted_nodes`, i.e. an edge incident to such an image that is not the
/// image of one of `deleted_edges`.
pub fn find_dangling_edge(
    host: &InstanceGraph,
    m: &Morphism,
    deleted_nodes: &BTreeSet<NodeId>,
    deleted_edges: &BTreeSet<EdgeId>,
) -> Option<EdgeId> {
    let doomed_nodes: BTreeSet<&NodeId> = deleted_nodes.iter().filter_map(|n| m.node(n)).collect();
    if doomed_nodes.is_empty() {
        return None;
    }
    let doomed_edges: BTreeSet<&EdgeId> = deleted_edges.iter().filter_map(|e| m.edge(e)).collect();
    host.edges()
        .find(|(id, e)| {
            (doomed_nodes.contains(&e.source) || doomed_nodes.contains(&e.target))
                && !doomed_edges.contains(id)
        })
        .map(|(id, _)| id.clone())
}

/// The dangling condition: deleting the images of `deleted_nodes` together
/// with the images of `deleted_edges` leaves no dangling host edge.
pub fn check_dangling(
    host: &InstanceGraph,
    m: &Morphism,
    deleted_nodes: &BTreeSet<NodeId>,
    deleted_edges: &BTreeSet<EdgeId>,
) -> bool {
    find_dangling_edge(host, m, deleted_nodes, deleted_edges).is_none()
}

type Degrees = BTreeMap<(String, bool), usize>;

struct Search<'a> {
    pattern: &'a InstanceGraph,
    host: &'a InstanceGraph,
    /// Pattern nodes in assignment order.
    order: Vec<NodeId>,
    /// Per ordered pair of nodes: edge-type multiset between them.
    pattern_between: BTreeMap<(NodeId, NodeId), BTreeMap<String, usize>>,
    host_between: BTreeMap<(NodeId, NodeId), BTreeMap<String, usize>>,
    pattern_deg: BTreeMap<NodeId, Degrees>,
    host_deg: BTreeMap<NodeId, Degrees>,
    host_by_type: BTreeMap<String, Vec<NodeId>>,
}

fn degrees(g: &InstanceGraph) -> BTreeMap<NodeId, Degrees> {
    let mut out: BTreeMap<NodeId, Degrees> = g
        .nodes()
        .map(|(n, _)| (n.clone(), Degrees::new()))
        .collect();
    for (_, e) in g.edges() {
        *out.get_mut(&e.source)
            .unwrap()
            .entry((e.ty.clone(), true))
            .or_default() += 1;
        *out.get_mut(&e.target)
            .unwrap()
            .entry((e.ty.clone(), false))
            .or_default() += 1;
    }
    out
}

fn between(g: &InstanceGraph) -> BTreeMap<(NodeId, NodeId), BTreeMap<String, usize>> {
    let mut out: BTreeMap<(NodeId, NodeId), BTreeMap<String, usize>> = BTreeMap::new();
    for (_, e) in g.edges() {
        *out.entry((e.source.clone(), e.target.clone()))
            .or_default()
            .entry(e.ty.clone())
            .or_default() += 1;
    }
    out
}

impl<'a> Search<'a> {
    fn new(pattern: &'a InstanceGraph, host: &'a InstanceGraph) -> Self {
        let mut host_by_type: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
        for (n, ty) in host.nodes() {
            host_by_type
                .entry(ty.to_string())
                .or_default()
                .push(n.clone());
        }
        let pattern_between = between(pattern);
        // Greedy connectivity-first order keeps adjacency pruning effective.
        let mut order: Vec<NodeId> = Vec::new();
        let mut remaining: BTreeSet<NodeId> = pattern.node_ids();
        while !remaining.is_empty() {
            let best = remaining
                .iter()
                .max_by_key(|n| {
                    let links = order
                        .iter()
                        .filter(|o| {
                            pattern_between.contains_key(&((*n).clone(), (*o).clone()))
                                || pattern_between.contains_key(&((*o).clone(), (*n).clone()))
                        })
                        .count();
                    let ty = pattern.node_type(n).unwrap_or_default();
                    let cands = host_by_type.get(ty).map_or(0, Vec::len);
                    // max_by_key keeps the last maximum; reverse id order makes ties pick the smallest id
                    (
                        links,
                        std::cmp::Reverse(cands),
                        std::cmp::Reverse((*n).clone()),
                    )
                })
                .cloned()
                .unwrap();
            remaining.remove(&best);
            order.push(best);
        }
        Search {
            pattern,
            host,
            order,
            pattern_between,
            host_between: between(host),
            pattern_deg: degrees(pattern),
            host_deg: degrees(host),
            host_by_type,
        }
    }

    fn run(&self, seed: &Morphism, emit: &mut dyn FnMut(Morphism) -> bool) {
        // Validate the seed's node part up front.
        let mut nodes = BTreeMap::new();
        let mut used = BTreeSet::new();
        for (p, h) in &seed.nodes {
            match (self.pattern.node_type(p), self.host.node_type(h)) {
                (Some(a), Some(b)) if a == b && used.insert(h.clone()) => {
                    nodes.insert(p.clone(), h.clone());
                }
                _ => return,
            }
        }
        if seed.nodes.iter().any(|(p, h)| !self.degree_ok(p, h)) {
            return;
        }
        let seeded: Vec<(&NodeId, &NodeId)> = nodes.iter().collect();
        for (i, (a, ha)) in seeded.iter().enumerate() {
            for (b, hb) in &seeded[i..] {
                if !self.adjacent_ok(a, ha, b, hb) {
                    return;
                }
            }
        }
        self.assign_nodes(0, &mut nodes, &mut used, seed, emit);
    }

    fn degree_ok(&self, p: &NodeId, h: &NodeId) -> bool {
        let pd = &self.pattern_deg[p];
        let hd = &self.host_deg[h];
        pd.iter()
            .all(|(k, c)| hd.get(k).copied().unwrap_or(0) >= *c)
    }

    fn count(
        map: &BTreeMap<(NodeId, NodeId), BTreeMap<String, usize>>,
        a: &NodeId,
        b: &NodeId,
    ) -> Option<BTreeMap<String, usize>> {
        map.get(&(a.clone(), b.clone())).cloned()
    }

    /// Edge multiplicities between two assigned pattern nodes fit the host.
    fn adjacent_ok(&self, a: &NodeId, ha: &NodeId, b: &NodeId, hb: &NodeId) -> bool {
        let pairs = if a == b {
            vec![(a, ha, a, ha)]
        } else {
            vec![(a, ha, b, hb), (b, hb, a, ha)]
        };
        pairs.into_iter().all(|(x, hx, y, hy)| {
            let Some(need) = Self::count(&self.pattern_between, x, y) else {
                return true;
            };
            let have = Self::count(&self.host_between, hx, hy).unwrap_or_default();
            need.iter()
                .all(|(ty, c)| have.get(ty).copied().unwrap_or(0) >= *c)
        })
    }

    fn assign_nodes(
        &self,
        idx: usize,
        nodes: &mut BTreeMap<NodeId, NodeId>,
        used: &mut BTreeSet<NodeId>,
        seed: &Morphism,
        emit: &mut dyn FnMut(Morphism) -> bool,
    ) -> bool {
        if idx == self.order.len() {
            let mut edges = BTreeMap::new();
            let mut used_edges = BTreeSet::new();
            let pattern_edges: Vec<_> = self.pattern.edges().collect();
            return self.assign_edges(
                0,
                &pattern_edges,
                nodes,
                &mut edges,
                &mut used_edges,
                seed,
                emit,
            );
        }
        let p = &self.order[idx];
        if nodes.contains_key(p) {
            return self.assign_nodes(idx + 1, nodes, used, seed, emit);
        }
        let ty = self.pattern.node_type(p).unwrap();
        let Some(cands) = self.host_by_type.get(ty) else {
            return true;
        };
        for h in cands {
            if used.contains(h) || !self.degree_ok(p, h) {
                continue;
            }
            let consistent = nodes.iter().all(|(q, hq)| self.adjacent_ok(p, h, q, hq))
                && self.adjacent_ok(p, h, p, h);
            if !consistent {
                continue;
            }
            nodes.insert(p.clone(), h.clone());
            used.insert(h.clone());
            let go_on = self.assign_nodes(idx + 1, nodes, used, seed, emit);
            nodes.remove(p);
            used.remove(h);
            if !go_on {
                return false;
            }
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn assign_edges(
        &self,
        idx: usize,
        pattern_edges: &[(&EdgeId, &crate::graph::Edge)],
        nodes: &BTreeMap<NodeId, NodeId>,
        edges: &mut BTreeMap<EdgeId, EdgeId>,
        used: &mut BTreeSet<EdgeId>,
        seed: &Morphism,
        emit: &mut dyn FnMut(Morphism) -> bool,
    ) -> bool {
        if idx == pattern_edges.len() {
            return emit(Morphism {
                nodes: nodes.clone(),
                edges: edges.clone(),
            });
        }
        let (pid, pe) = pattern_edges[idx];
        let (hs, ht) = (&nodes[&pe.source], &nodes[&pe.target]);
        let forced = seed.edge(pid);
        for (hid, he) in self.host.edges() {
            if he.ty != pe.ty || &he.source != hs || &he.target != ht || used.contains(hid) {
                continue;
            }
            if forced.is_some_and(|f| f != hid) {
                continue;
            }
            edges.insert(pid.clone(), hid.clone());
            used.insert(hid.clone());
            let go_on = self.assign_edges(idx + 1, pattern_edges, nodes, edges, used, seed, emit);
            edges.remove(pid);
            used.remove(hid);
            if !go_on {
                return false;
            }
        }
        true
    }
}
