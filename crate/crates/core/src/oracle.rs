//! Brute-force cross-check of the static analysis.
//!
//! Hosts are explored breadth-first from the empty graph (deduplicated up to
//! isomorphism); every concrete two-step sequence is classified by id
//! tracking and explicit reversal, and compared with the static verdicts.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dependency::{
    classify_transformation_pair, dependency_reasons, extract_reason,
    universally_sequentially_independent, DependencyError, PairClass, Span,
};
use crate::dpo::{apply, DirectTransformation};
use crate::graph::{InstanceGraph, Morphism};
use crate::iso::{canonical_form, CanonicalForm};
use crate::matching::find_matches;
use crate::rule::Rule;

/// Non-isomorphic hosts reachable from the empty graph in at most
/// `max_depth` steps, in discovery order.
pub fn reachable_hosts(rules: &[Rule], max_depth: usize) -> Vec<InstanceGraph> {
    let mut seen: BTreeSet<CanonicalForm> = BTreeSet::new();
    let start = InstanceGraph::new();
    seen.insert(canonical_form(&start));
    let mut out = vec![start.clone()];
    let mut frontier = vec![start];
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for g in &frontier {
            for t in all_steps(rules, g) {
                if seen.insert(canonical_form(&t.result)) {
                    next.push(t.result.clone());
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every applicable direct transformation from `host`.
pub fn all_steps(rules: &[Rule], host: &InstanceGraph) -> Vec<DirectTransformation> {
    rules.iter().flat_map(|r| steps_of(r, host)).collect()
}

pub fn steps_of(rule: &Rule, host: &InstanceGraph) -> Vec<DirectTransformation> {
    find_matches(rule.lhs(), host, &Morphism::new())
        .into_iter()
        .filter_map(|m| apply(rule, host, &m).ok())
        .collect()
}

/// Tries to swap two chained steps: `rb` at the same ids on the original
/// host, then `ra` at its original match. True iff both apply and the end
/// graphs are isomorphic.
pub fn reversible(
    ra: &Rule,
    rb: &Rule,
    t1: &DirectTransformation,
    t2: &DirectTransformation,
) -> bool {
    let g = &t1.host;
    if t2.matching.validate(rb.lhs(), g, true).is_err() {
        return false;
    }
    let Ok(first) = apply(rb, g, &t2.matching) else {
        return false;
    };
    if t1.matching.validate(ra.lhs(), &first.result, true).is_err() {
        return false;
    }
    let Ok(second) = apply(ra, &first.result, &t1.matching) else {
        return false;
    };
    canonical_form(&second.result) == canonical_form(&t2.result)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairVerdict {
    pub first: String,
    pub second: String,
    pub static_independent: bool,
    pub brute_force_independent: bool,
    /// Concrete sequences examined for this ordered pair.
    pub sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub max_depth: usize,
    pub hosts: usize,
    pub sequences: usize,
    pub produce_use_sequences: usize,
    pub pairs: Vec<PairVerdict>,
    pub disagreements: Vec<String>,
}

impl OracleReport {
    pub fn agrees(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Compares static reasons and independence verdicts with exhaustive
/// enumeration over hosts reachable in `max_depth` steps.
pub fn compare_with_brute_force(
    rules: &[Rule],
    max_depth: usize,
) -> Result<OracleReport, DependencyError> {
    let hosts = reachable_hosts(rules, max_depth);
    let api: Vec<&Rule> = rules.iter().filter(|r| !r.is_bootstrap()).collect();
    let by_name: BTreeMap<&str, &Rule> = rules.iter().map(|r| (r.name(), r)).collect();

    let mut reported: BTreeMap<(String, String), BTreeSet<Span>> = BTreeMap::new();
    let mut static_indep: BTreeMap<(String, String), bool> = BTreeMap::new();
    for a in &api {
        for b in &api {
            let key = (a.name().to_string(), b.name().to_string());
            let spans = dependency_reasons(a, b)?
                .into_iter()
                .map(|r| r.span)
                .collect();
            reported.insert(key.clone(), spans);
            static_indep.insert(key, universally_sequentially_independent(a, b)?);
        }
    }

    let mut disagreements = Vec::new();
    let mut brute_indep: BTreeMap<(String, String), bool> =
        static_indep.keys().map(|k| (k.clone(), true)).collect();
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut sequences = 0;
    let mut produce_use = 0;
    for (hi, host) in hosts.iter().enumerate() {
        for t1 in api.iter().flat_map(|r| steps_of(r, host)) {
            let ra = by_name[t1.rule.as_str()];
            for t2 in api.iter().flat_map(|r| steps_of(r, &t1.result)) {
                let rb = by_name[t2.rule.as_str()];
                let key = (t1.rule.clone(), t2.rule.clone());
                sequences += 1;
                *counts.entry(key.clone()).or_default() += 1;
                let class = classify_transformation_pair(&t1, &t2)?;
                let extracted = extract_reason(ra, &t1, &t2);
                let known = extracted
                    .as_ref()
                    .is_some_and(|s| reported[&key].contains(s));
                if class == PairClass::ProduceUse {
                    produce_use += 1;
                }
                if (class == PairClass::ProduceUse) != known {
                    disagreements.push(format!(
                        "host #{hi}: {} then {} classified {:?}, extracted span {}",
                        key.0,
                        key.1,
                        class,
                        if extracted.is_some() {
                            "not reported"
                        } else {
                            "missing"
                        }
                    ));
                }
                let swap = reversible(ra, rb, &t1, &t2);
                if !swap {
                    brute_indep.insert(key.clone(), false);
                }
                if swap && class != PairClass::Independent {
                    disagreements.push(format!(
                        "host #{hi}: {} then {} classified {:?} but the steps can be swapped",
                        key.0, key.1, class
                    ));
                }
            }
        }
    }

    let mut pairs = Vec::new();
    for (key, s) in &static_indep {
        let b = brute_indep[key];
        if *s != b {
            disagreements.push(format!(
                "({}, {}): static independence {s}, exhaustive reversal {b}",
                key.0, key.1
            ));
        }
        pairs.push(PairVerdict {
            first: key.0.clone(),
            second: key.1.clone(),
            static_independent: *s,
            brute_force_independent: b,
            sequences: counts.get(key).copied().unwrap_or(0),
        });
    }
    Ok(OracleReport {
        max_depth,
        hosts: hosts.len(),
        sequences,
        produce_use_sequences: produce_use,
        pairs,
        disagreements,
    })
}

/// A three-step sequence in which the last step uses an element created by
/// the first, with a different rule in between.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndirectFlow {
    pub start: InstanceGraph,
    pub rules: [String; 3],
    pub used_created: Vec<String>,
}

pub fn find_indirect_flow(
    rules: &[Rule],
    source: &str,
    sink: &str,
    max_depth: usize,
) -> Option<IndirectFlow> {
    let src = rules.iter().find(|r| r.name() == source)?;
    let snk = rules.iter().find(|r| r.name() == sink)?;
    let middle: Vec<&Rule> = rules
        .iter()
        .filter(|r| r.name() != source && r.name() != sink)
        .collect();
    for host in reachable_hosts(rules, max_depth) {
        for t1 in steps_of(src, &host) {
            let created = t1.created_nodes();
            for t2 in middle.iter().flat_map(|r| steps_of(r, &t1.result)) {
                for t3 in steps_of(snk, &t2.result) {
                    let used: Vec<String> = t3
                        .matching
                        .nodes
                        .values()
                        .filter(|n| created.contains(*n))
                        .map(|n| n.to_string())
                        .collect();
                    if !used.is_empty() {
                        return Some(IndirectFlow {
                            start: host,
                            rules: [t1.rule.clone(), t2.rule.clone(), t3.rule.clone()],
                            used_created: used,
                        });
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeType, NodeType, TypeGraph};
    use crate::rule::{ChangeTag::*, RuleBuilder};
    use std::sync::Arc;

    fn toy() -> Vec<Rule> {
        let tg = Arc::new(
            TypeGraph::new(
                vec![NodeType::new("A"), NodeType::new("T")],
                vec![EdgeType::new("A.ts", "A", "T")],
            )
            .unwrap(),
        );
        vec![
            RuleBuilder::new("createA")
                .node("a", "A", Create)
                .bootstrap()
                .build(&tg)
                .unwrap(),
            RuleBuilder::new("createIncidentT")
                .node("a", "A", Preserve)
                .node("t", "T", Create)
                .edge("e", "A.ts", "a", "t", Create)
                .build(&tg)
                .unwrap(),
            RuleBuilder::new("deleteT")
                .node("t", "T", Delete)
                .build(&tg)
                .unwrap(),
            RuleBuilder::new("deleteIncidentA")
                .node("a", "A", Delete)
                .node("t", "T", Preserve)
                .edge("e", "A.ts", "a", "t", Delete)
                .build(&tg)
                .unwrap(),
        ]
    }

    #[test]
    fn reachable_hosts_are_deduplicated() {
        let hosts = reachable_hosts(&toy(), 2);
        let forms: BTreeSet<_> = hosts.iter().map(canonical_form).collect();
        assert_eq!(forms.len(), hosts.len());
        assert!(hosts[0].is_empty());
    }

    #[test]
    fn toy_system_agrees_with_brute_force() {
        let report = compare_with_brute_force(&toy(), 3).unwrap();
        assert!(report.agrees(), "{:#?}", report.disagreements);
        assert!(report.produce_use_sequences > 0);
    }

    #[test]
    fn indirect_flow_through_delete_incident_a() {
        let flow = find_indirect_flow(&toy(), "createIncidentT", "deleteT", 2).unwrap();
        assert_eq!(flow.rules[1], "deleteIncidentA");
    }
}
