//! Candidate rule extraction by cycle enumeration on the simple graph.
//!
//! A rule with body length `m` has an injective grounding exactly when its
//! `m + 1` grounding entities form a closed walk in the train graph: a
//! simple cycle of `m + 1` distinct entities for `m ≥ 2`, or two distinct
//! directed labels on one entity pair for `m = 1`. Cycles are therefore
//! enumerated once each, anchored at their smallest entity, and every
//! (head edge, orientation, label combination) of a cycle is expanded into
//! a candidate rule.
//!
//! From each anchor `e`, all simple paths of at most `k = ⌈(L+1)/2⌉` edges
//! are collected under the constraint that every non-anchor entity exceeds
//! `e` in id order. Two paths sharing a terminal close a cycle; requiring
//! the first path to be the longer of the two (by at most one edge) and to
//! leave the anchor through the smaller neighbor makes each cycle appear
//! exactly once. Anchors are independent, so the search runs in parallel
//! and the resulting rule set is identical for any worker count.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::kg::{EntityId, KnowledgeGraph, RelationId, SimpleGraph};

use super::{RelationPath, Rule};

/// Candidate-mining parameters.
#[derive(Debug, Clone)]
pub struct MiningConfig {
    /// Maximum rule body length L; cycles up to L + 1 edges are used.
    pub max_body_len: usize,
    /// Upper bound on labeled rules expanded from a single entity cycle;
    /// cycles that would exceed it are skipped and tallied.
    pub max_expansion_per_cycle: u64,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            max_body_len: 3,
            max_expansion_per_cycle: 4096,
            workers: 0,
        }
    }
}

/// Mining diagnostics; identical for every worker count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MiningStats {
    /// Simple cycles of ≥ 3 entities enumerated (each counted once).
    pub cycles_found: u64,
    /// Cycles skipped because their label expansion exceeded the cap.
    pub cycles_skipped: u64,
}

/// Enumerate every rule `p ⇒ r` with `|p| ≤ max_body_len` that has at least
/// one injective grounding in the train split. Output is deduplicated and
/// sorted by (head, body); for length-1 rules the body label must differ
/// from the head, since a single triple grounds `r ⇒ r` only trivially.
pub fn mine_candidate_rules(
    kg: &KnowledgeGraph,
    sg: &SimpleGraph,
    config: &MiningConfig,
) -> (Vec<Rule>, MiningStats) {
    assert!(kg.is_augmented(), "mining requires an augmented graph");
    assert!(config.max_body_len >= 1);
    assert!(config.max_expansion_per_cycle >= 1);

    let run = || -> (HashSet<(Vec<RelationId>, RelationId)>, MiningStats) {
        (0..kg.num_entities() as u32)
            .into_par_iter()
            .map(|anchor| mine_anchor(sg, EntityId(anchor), config))
            .reduce(
                || (HashSet::new(), MiningStats::default()),
                |(mut a_set, mut a_stats), (mut b_set, b_stats)| {
                    if a_set.len() < b_set.len() {
                        std::mem::swap(&mut a_set, &mut b_set);
                    }
                    a_set.extend(b_set);
                    a_stats.cycles_found += b_stats.cycles_found;
                    a_stats.cycles_skipped += b_stats.cycles_skipped;
                    (a_set, a_stats)
                },
            )
    };
    let (set, stats) = if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("failed to build mining thread pool");
        pool.install(run)
    } else {
        run()
    };

    let mut rules: Vec<Rule> = set
        .into_iter()
        .map(|(body, head)| Rule::unscored(RelationPath::new(body), head))
        .collect();
    rules.sort_by(|a, b| a.head.cmp(&b.head).then(a.body.cmp(&b.body)));
    (rules, stats)
}

/// Rules and cycle counts discovered from one anchor entity.
fn mine_anchor(
    sg: &SimpleGraph,
    anchor: EntityId,
    config: &MiningConfig,
) -> (HashSet<(Vec<RelationId>, RelationId)>, MiningStats) {
    let mut rules = HashSet::new();
    let mut stats = MiningStats::default();

    // Length-1 rules: two distinct directed labels on one edge, read in the
    // same direction. Anchoring at the smaller endpoint visits each edge once.
    for &x in sg.neighbors(anchor) {
        if x < anchor {
            continue;
        }
        let forward = sg.labels(anchor, x);
        let backward: Vec<RelationId> = forward.iter().map(|r| r.inverse()).collect();
        for labels in [&forward, &backward] {
            for &body in labels {
                for &head in labels {
                    if body != head {
                        rules.insert((vec![body], head));
                    }
                }
            }
        }
    }

    if config.max_body_len < 2 {
        return (rules, stats);
    }

    // Simple paths from the anchor, grouped by terminal entity.
    let k = (config.max_body_len + 2) / 2; // ⌈(L+1)/2⌉
    let mut by_terminal: HashMap<EntityId, Vec<Vec<EntityId>>> = HashMap::new();
    let mut path = vec![anchor];
    collect_paths(sg, anchor, k, &mut path, &mut by_terminal);

    let max_cycle = config.max_body_len + 1;
    for (terminal, paths) in &by_terminal {
        for p1 in paths {
            for p2 in paths {
                let (l1, l2) = (p1.len() - 1, p2.len() - 1);
                if l1 != l2 && l1 != l2 + 1 {
                    continue;
                }
                if p1[1] >= p2[1] {
                    continue;
                }
                let size = l1 + l2;
                if size < 3 || size > max_cycle {
                    continue;
                }
                if !interiors_disjoint(p1, p2) {
                    continue;
                }
                // Cycle: anchor, p1 interior, terminal, p2 interior reversed.
                let mut cycle = Vec::with_capacity(size);
                cycle.extend_from_slice(&p1[..p1.len() - 1]);
                cycle.push(*terminal);
                cycle.extend(p2[1..p2.len() - 1].iter().rev());
                if expand_cycle(sg, &cycle, config, &mut rules) {
                    stats.cycles_found += 1;
                } else {
                    stats.cycles_skipped += 1;
                }
            }
        }
    }
    (rules, stats)
}

/// Depth-first enumeration of simple paths of ≤ `k` edges whose non-anchor
/// entities all exceed the anchor.
fn collect_paths(
    sg: &SimpleGraph,
    anchor: EntityId,
    k: usize,
    path: &mut Vec<EntityId>,
    by_terminal: &mut HashMap<EntityId, Vec<Vec<EntityId>>>,
) {
    let current = *path.last().unwrap();
    for &next in sg.neighbors(current) {
        if next <= anchor || path.contains(&next) {
            continue;
        }
        path.push(next);
        by_terminal.entry(next).or_default().push(path.clone());
        if path.len() <= k {
            collect_paths(sg, anchor, k, path, by_terminal);
        }
        path.pop();
    }
}

fn interiors_disjoint(p1: &[EntityId], p2: &[EntityId]) -> bool {
    let i1 = &p1[1..p1.len() - 1];
    let i2 = &p2[1..p2.len() - 1];
    i1.iter().all(|v| !i2.contains(v))
}

/// Expand one entity cycle into labeled rules: every edge in either
/// orientation can serve as the head, and the body reads the remaining
/// edges from head entity to tail entity with all label combinations.
/// Returns false (emitting nothing) when the expansion exceeds the cap.
fn expand_cycle(
    sg: &SimpleGraph,
    cycle: &[EntityId],
    config: &MiningConfig,
    rules: &mut HashSet<(Vec<RelationId>, RelationId)>,
) -> bool {
    let size = cycle.len();
    let label_lists: Vec<Vec<RelationId>> = (0..size)
        .map(|i| sg.labels(cycle[i], cycle[(i + 1) % size]))
        .collect();

    // Cost check before expanding anything.
    let mut total: u64 = 0;
    for head_idx in 0..size {
        let mut product: u64 = 1;
        for (i, labels) in label_lists.iter().enumerate() {
            if i != head_idx {
                product = product.saturating_mul(labels.len() as u64);
            }
        }
        total = total.saturating_add(product.saturating_mul(2 * label_lists[head_idx].len() as u64));
        if total > config.max_expansion_per_cycle {
            return false;
        }
    }

    for head_idx in 0..size {
        for forward in [true, false] {
            // Walk from head entity to tail entity over the other edges.
            // Head edge (v_i, v_{i+1}); forward orientation predicts
            // (v_i, r, v_{i+1}), so the body walks v_i → v_{i-1} → … → v_{i+1}.
            let mut steps: Vec<Vec<RelationId>> = Vec::with_capacity(size - 1);
            if forward {
                for back in 0..size - 1 {
                    let from = cycle[(head_idx + size - back) % size];
                    let to = cycle[(head_idx + size - back - 1) % size];
                    steps.push(sg.labels(from, to));
                }
            } else {
                for fwd in 1..size {
                    let from = cycle[(head_idx + fwd) % size];
                    let to = cycle[(head_idx + fwd + 1) % size];
                    steps.push(sg.labels(from, to));
                }
            }
            let head_labels = if forward {
                label_lists[head_idx].clone()
            } else {
                label_lists[head_idx].iter().map(|r| r.inverse()).collect()
            };
            let mut body = vec![RelationId(0); size - 1];
            emit_combinations(&steps, 0, &mut body, &head_labels, rules);
        }
    }
    true
}

fn emit_combinations(
    steps: &[Vec<RelationId>],
    depth: usize,
    body: &mut Vec<RelationId>,
    head_labels: &[RelationId],
    rules: &mut HashSet<(Vec<RelationId>, RelationId)>,
) {
    if depth == steps.len() {
        for &head in head_labels {
            rules.insert((body.clone(), head));
        }
        return;
    }
    for &label in &steps[depth] {
        body[depth] = label;
        emit_combinations(steps, depth + 1, body, head_labels, rules);
    }
}
