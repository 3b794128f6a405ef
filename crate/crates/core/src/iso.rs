//! Canonical labeling for small typed multigraphs.
//!
//! Colour refinement on node types and typed neighbourhoods, followed by
//! individualisation of the first smallest non-singleton cell. Each leaf of the
//! search tree yields a certificate; the lexicographically smallest one is the
//! canonical form. Transposition twins are pruned, which keeps graphs with
//! many interchangeable nodes cheap.

use std::collections::BTreeMap;

use crate::graph::{InstanceGraph, NodeId};

/// An id-independent certificate: two graphs are isomorphic iff their
/// canonical forms are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm {
    pub node_types: Vec<String>,
    pub edges: Vec<(usize, usize, String)>,
}

impl std::fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}]", self.node_types.join(","))?;
        for (s, t, ty) in &self.edges {
            write!(f, " {s}-{ty}->{t}")?;
        }
        Ok(())
    }
}

struct Indexed {
    types: Vec<String>,
    /// (source, target, type) with node indices.
    edges: Vec<(usize, usize, String)>,
    /// Per node: (edge type, outgoing?, neighbour).
    adj: Vec<Vec<(String, bool, usize)>>,
}


/// Edge type, outgoing flag and neighbour colour.
type Neighbour = (String, bool, usize);
impl Indexed {
    fn new(g: &InstanceGraph) -> Self {
        let ids: Vec<&NodeId> = g.nodes().map(|(n, _)| n).collect();
        let index: BTreeMap<&NodeId, usize> =
            ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let types: Vec<String> = g.nodes().map(|(_, t)| t.to_string()).collect();
        let mut adj = vec![Vec::new(); types.len()];
        let mut edges = Vec::new();
        for (_, e) in g.edges() {
            let (s, t) = (index[&e.source], index[&e.target]);
            adj[s].push((e.ty.clone(), true, t));
            adj[t].push((e.ty.clone(), false, s));
            edges.push((s, t, e.ty.clone()));
        }
        Indexed { types, edges, adj }
    }

    fn initial_colours(&self) -> Vec<usize> {
        rank(&self.types)
    }

    /// Refines until the number of colour classes is stable.
    fn refine(&self, mut colours: Vec<usize>) -> Vec<usize> {
        loop {
            let sigs: Vec<(usize, Vec<Neighbour>)> = (0..colours.len())
                .map(|v| {
                    let mut nb: Vec<Neighbour> = self.adj[v]
                        .iter()
                        .map(|(ty, out, w)| (ty.clone(), *out, colours[*w]))
                        .collect();
                    nb.sort();
                    (colours[v], nb)
                })
                .collect();
            let next = rank(&sigs);
            if count_classes(&next) == count_classes(&colours) {
                return next;
            }
            colours = next;
        }
    }

    fn certificate(&self, colours: &[usize]) -> CanonicalForm {
        // colours are a permutation of 0..n at a leaf
        let mut node_types = vec![String::new(); colours.len()];
        for (v, c) in colours.iter().enumerate() {
            node_types[*c] = self.types[v].clone();
        }
        let mut edges: Vec<(usize, usize, String)> = self
            .edges
            .iter()
            .map(|(s, t, ty)| (colours[*s], colours[*t], ty.clone()))
            .collect();
        edges.sort();
        CanonicalForm { node_types, edges }
    }

    /// True when swapping `u` and `v` maps the edge multiset onto itself.
    fn transposition_is_automorphism(&self, u: usize, v: usize) -> bool {
        if self.types[u] != self.types[v] {
            return false;
        }
        let swap = |x: usize| {
            if x == u {
                v
            } else if x == v {
                u
            } else {
                x
            }
        };
        let mut a = self.edges.clone();
        let mut b: Vec<(usize, usize, String)> = self
            .edges
            .iter()
            .map(|(s, t, ty)| (swap(*s), swap(*t), ty.clone()))
            .collect();
        a.sort();
        b.sort();
        a == b
    }

    fn search(&self, colours: Vec<usize>, best: &mut Option<CanonicalForm>) {
        let n = colours.len();
        let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, c) in colours.iter().enumerate() {
            cells.entry(*c).or_default().push(v);
        }
        if cells.len() == n {
            let cert = self.certificate(&colours);
            if best.as_ref().is_none_or(|b| cert < *b) {
                *best = Some(cert);
            }
            return;
        }
        let (&cell_colour, cell) = cells
            .iter()
            .filter(|(_, vs)| vs.len() > 1)
            .min_by_key(|(c, vs)| (vs.len(), **c))
            .unwrap();
        let mut tried: Vec<usize> = Vec::new();
        for &v in cell {
            if tried
                .iter()
                .any(|&u| self.transposition_is_automorphism(u, v))
            {
                continue;
            }
            tried.push(v);
            // Individualise v: it sorts before the rest of its cell.
            let split: Vec<(usize, usize)> = colours
                .iter()
                .enumerate()
                .map(|(w, c)| (*c, usize::from(!(w == v && *c == cell_colour))))
                .collect();
            let refined = self.refine(rank(&split));
            self.search(refined, best);
        }
    }
}

fn rank<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn count_classes(colours: &[usize]) -> usize {
    let mut c = colours.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Computes the canonical form of `g`.
pub fn canonical_form(g: &InstanceGraph) -> CanonicalForm {
    let idx = Indexed::new(g);
    if idx.types.is_empty() {
        return CanonicalForm {
            node_types: Vec::new(),
            edges: Vec::new(),
        };
    }
    let start = idx.refine(idx.initial_colours());
    let mut best = None;
    idx.search(start, &mut best);
    best.expect("search visits at least one leaf")
}

pub fn are_isomorphic(a: &InstanceGraph, b: &InstanceGraph) -> bool {
    a.node_count() == b.node_count()
        && a.edge_count() == b.edge_count()
        && canonical_form(a) == canonical_form(b)
}
