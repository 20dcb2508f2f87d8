//! Injective path-grounding counts and the rule-concatenation entity ranking.
//!
//! `mul(h, e, p)` is the number of walks from `h` to `e` that follow the
//! directed relations of `p` through the train split without visiting any
//! entity twice (endpoints included). These counts are both the REE ranking
//! signal and the raw feature values of the softmax-regression models.

use std::collections::HashMap;

use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::ree::Rule;

/// Grounding counts from a fixed start entity along a fixed path; entities
/// absent from the map have count 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultiplicityTable {
    counts: HashMap<EntityId, u64>,
}

impl MultiplicityTable {
    pub fn get(&self, e: EntityId) -> u64 {
        self.counts.get(&e).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, u64)> + '_ {
        self.counts.iter().map(|(&e, &c)| (e, c))
    }

    /// Entries sorted by count descending, entity id ascending.
    pub fn ranked_entries(&self) -> Vec<(EntityId, u64)> {
        let mut entries: Vec<(EntityId, u64)> = self.iter().collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        entries
    }
}

/// Reusable walker so repeated queries do not reallocate the visited map.
#[derive(Debug, Default)]
pub struct MultiplicityCounter {
    visited: Vec<u32>,
    epoch: u32,
}

impl MultiplicityCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count injective groundings of `path` starting at `h`.
    pub fn count(
        &mut self,
        kg: &KnowledgeGraph,
        h: EntityId,
        path: &[RelationId],
    ) -> MultiplicityTable {
        assert!(!path.is_empty(), "path must have at least one relation");
        self.visited.resize(kg.num_entities(), 0);
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.visited.iter_mut().for_each(|v| *v = 0);
            self.epoch = 1;
        }
        let mut table = MultiplicityTable::default();
        self.visited[h.index()] = self.epoch;
        self.walk(kg, h, path, &mut table);
        self.visited[h.index()] = 0;
        table
    }

    fn walk(
        &mut self,
        kg: &KnowledgeGraph,
        current: EntityId,
        rest: &[RelationId],
        table: &mut MultiplicityTable,
    ) {
        let (relation, tail) = rest.split_first().unwrap();
        for &(_, next) in kg.neighbors(current, *relation) {
            if self.visited[next.index()] == self.epoch {
                continue;
            }
            if tail.is_empty() {
                *table.counts.entry(next).or_insert(0) += 1;
            } else {
                self.visited[next.index()] = self.epoch;
                self.walk(kg, next, tail, table);
                self.visited[next.index()] = 0;
            }
        }
    }
}

/// One-shot wrapper around [`MultiplicityCounter::count`].
pub fn path_targets(kg: &KnowledgeGraph, h: EntityId, path: &[RelationId]) -> MultiplicityTable {
    MultiplicityCounter::new().count(kg, h, path)
}

/// The walk-reversal dual of a path: reversed order, every relation inverted.
pub fn reverse_inverted(path: &[RelationId]) -> Vec<RelationId> {
    path.iter().rev().map(|r| r.inverse()).collect()
}

/// Rank candidate tails for `(h, r, ?)` by concatenating per-rule rankings.
///
/// Rules must arrive sorted by confidence descending. For each rule the
/// candidates are ordered by grounding count descending (entity id breaks
/// ties) and appended if not already ranked; entities no rule produces are
/// excluded entirely.
pub fn ree_rank_entities(kg: &KnowledgeGraph, rules: &[Rule], h: EntityId) -> Vec<EntityId> {
    let mut counter = MultiplicityCounter::new();
    let mut position = vec![false; kg.num_entities()];
    let mut ranking = Vec::new();
    for rule in rules {
        let table = counter.count(kg, h, rule.body.relations());
        for (e, _) in table.ranked_entries() {
            if !position[e.index()] {
                position[e.index()] = true;
                ranking.push(e);
            }
        }
    }
    ranking
}
