//! Filtered link-prediction protocol: candidate filtering, deterministic
//! ranking, MRR/HITS aggregation and validation-driven grid selection.
//!
//! Every test triple asks two queries. Tail prediction scores `(h, r, ?)`
//! directly; head prediction `(?, r, t)` is rewritten as `(t, r⁻¹, ?)`,
//! which is exact on an inverse-augmented store. Candidates known to answer
//! the query in any split are removed (the target itself always stays), and
//! ranks break score ties by entity id so reruns are reproducible.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::akglg::{AkglgModel, GroupKind};
use crate::grounding::{ree_rank_entities, MultiplicityCounter};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::pbf::{combine_scores, CombineConfig, QueryFeatures, RelationModel};
use crate::ree::Rule;

/// A link-prediction query in tail form: score candidates `e` for
/// `(anchor, relation, e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Query {
    pub anchor: EntityId,
    pub relation: RelationId,
}

impl Query {
    /// Tail query `(h, r, ?)` of a triple.
    pub fn tail_of(t: &Triple) -> (Query, EntityId) {
        (
            Query {
                anchor: t.head,
                relation: t.relation,
            },
            t.tail,
        )
    }

    /// Head query `(?, r, t)` of a triple, rewritten as `(t, r⁻¹, ?)`.
    pub fn head_of(t: &Triple) -> (Query, EntityId) {
        (
            Query {
                anchor: t.tail,
                relation: t.relation.inverse(),
            },
            t.head,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Tail,
    Head,
}

/// Known answers per (anchor, relation) over all three splits, used to
/// filter competing true entities out of a candidate set.
#[derive(Debug, Clone)]
pub struct FilterIndex {
    known: HashMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl FilterIndex {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        assert!(
            kg.is_augmented(),
            "filtering requires the inverse-augmented store"
        );
        let mut known: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        for split in [crate::kg::Split::Train, crate::kg::Split::Valid, crate::kg::Split::Test] {
            for t in kg.split(split) {
                known.entry((t.head, t.relation)).or_default().push(t.tail);
            }
        }
        for tails in known.values_mut() {
            tails.sort_unstable();
            tails.dedup();
        }
        FilterIndex { known }
    }

    pub fn known_tails(&self, anchor: EntityId, relation: RelationId) -> &[EntityId] {
        self.known
            .get(&(anchor, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// All entities minus the known answers of the query, with the true target
/// always retained. Ascending by id.
pub fn filtered_candidates(
    index: &FilterIndex,
    num_entities: usize,
    query: &Query,
    target: EntityId,
) -> Vec<EntityId> {
    let mut keep = vec![true; num_entities];
    for &e in index.known_tails(query.anchor, query.relation) {
        keep[e.index()] = false;
    }
    keep[target.index()] = true;
    keep.iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(EntityId(i as u32)))
        .collect()
}

/// Deterministic rank: one plus the number of strictly better candidates,
/// plus equal-scoring candidates with a smaller entity id.
pub fn rank_of(candidates: &[EntityId], scores: &[f64], target: EntityId) -> u32 {
    let target_pos = candidates
        .iter()
        .position(|&e| e == target)
        .expect("target must be in the candidate set");
    let target_score = scores[target_pos];
    let mut rank = 1;
    for (&e, &s) in candidates.iter().zip(scores) {
        if e == target {
            continue;
        }
        if s > target_score || (s == target_score && e < target) {
            rank += 1;
        }
    }
    rank
}

/// Scores candidates of one query. `f64::NEG_INFINITY` marks a candidate
/// the scorer cannot rank at all (an unranked REE target scores 0
/// reciprocal rank).
pub trait QueryScorer: Sync {
    fn score(&self, query: &Query, candidates: &[EntityId]) -> Vec<f64>;
}

/// Scores straight from the embedding model.
pub struct EmbeddingScorer<'a> {
    model: &'a AkglgModel,
    /// Composed entity rows for the factored fast path (empty for LINE).
    composed: Vec<f64>,
    row: usize,
}

impl<'a> EmbeddingScorer<'a> {
    pub fn new(model: &'a AkglgModel) -> Self {
        let (composed, row) = match model.kind() {
            GroupKind::Line => (Vec::new(), 0),
            _ => (
                model.composed_entity_matrix(),
                model.dim() * model.kind().width(),
            ),
        };
        EmbeddingScorer {
            model,
            composed,
            row,
        }
    }
}

impl QueryScorer for EmbeddingScorer<'_> {
    fn score(&self, query: &Query, candidates: &[EntityId]) -> Vec<f64> {
        match self.model.kind() {
            GroupKind::Line => candidates
                .iter()
                .map(|&e| self.model.score_triple(query.anchor, query.relation, e))
                .collect(),
            kind => {
                let ch = self.model.composed_entity(query.anchor);
                let cr = self.model.composed_relation(query.relation);
                let mut q = vec![0.0; self.row];
                match kind {
                    GroupKind::Sign => {
                        for i in 0..self.row {
                            q[i] = ch[i] * cr[i];
                        }
                    }
                    GroupKind::Circle => {
                        for i in 0..self.model.dim() {
                            q[2 * i] = ch[2 * i] * cr[2 * i] - ch[2 * i + 1] * cr[2 * i + 1];
                            q[2 * i + 1] = ch[2 * i] * cr[2 * i + 1] + ch[2 * i + 1] * cr[2 * i];
                        }
                    }
                    GroupKind::Line => unreachable!(),
                }
                candidates
                    .iter()
                    .map(|&e| {
                        let row = &self.composed[e.index() * self.row..(e.index() + 1) * self.row];
                        q.iter().zip(row).map(|(a, b)| a * b).sum()
                    })
                    .collect()
            }
        }
    }
}

/// Scores by the REE ranking: candidates get the negated position in the
/// concatenated per-rule ranking, unranked candidates score −∞.
pub struct ReeScorer<'a> {
    kg: &'a KnowledgeGraph,
    rules_by_head: &'a std::collections::BTreeMap<RelationId, Vec<Rule>>,
}

impl<'a> ReeScorer<'a> {
    pub fn new(
        kg: &'a KnowledgeGraph,
        rules_by_head: &'a std::collections::BTreeMap<RelationId, Vec<Rule>>,
    ) -> Self {
        ReeScorer { kg, rules_by_head }
    }
}

impl QueryScorer for ReeScorer<'_> {
    fn score(&self, query: &Query, candidates: &[EntityId]) -> Vec<f64> {
        let empty = Vec::new();
        let rules = self.rules_by_head.get(&query.relation).unwrap_or(&empty);
        let ranking = ree_rank_entities(self.kg, rules, query.anchor);
        let mut position = vec![f64::NEG_INFINITY; self.kg.num_entities()];
        for (pos, e) in ranking.iter().enumerate() {
            position[e.index()] = -(pos as f64);
        }
        candidates.iter().map(|&e| position[e.index()]).collect()
    }
}

/// The path-based framework: embedding and softmax-regression scores turned
/// into per-query distributions and mixed with weight λ.
pub struct PbfScorer<'a> {
    kg: &'a KnowledgeGraph,
    embedding: EmbeddingScorer<'a>,
    models: &'a HashMap<RelationId, RelationModel>,
    pub lambda: f64,
}

impl<'a> PbfScorer<'a> {
    pub fn new(
        kg: &'a KnowledgeGraph,
        model: &'a AkglgModel,
        models: &'a HashMap<RelationId, RelationModel>,
        lambda: f64,
    ) -> Self {
        PbfScorer {
            kg,
            embedding: EmbeddingScorer::new(model),
            models,
            lambda,
        }
    }
}

impl QueryScorer for PbfScorer<'_> {
    fn score(&self, query: &Query, candidates: &[EntityId]) -> Vec<f64> {
        let emb = self.embedding.score(query, candidates);
        let sr: Vec<Option<f64>> = match self.models.get(&query.relation) {
            None => vec![None; candidates.len()],
            Some(model) => {
                let mut counter = MultiplicityCounter::new();
                let features =
                    QueryFeatures::compute(self.kg, query.anchor, &model.paths, &mut counter);
                candidates
                    .iter()
                    .map(|&e| {
                        if features.is_zero(e) {
                            None
                        } else {
                            Some(model.score(&features.vector(e)))
                        }
                    })
                    .collect()
            }
        };
        combine_scores(
            &emb,
            &sr,
            CombineConfig {
                lambda: self.lambda,
            },
        )
    }
}

/// One evaluated query.
#[derive(Debug, Clone, Serialize)]
pub struct QueryRecord {
    pub anchor: EntityId,
    pub relation: RelationId,
    pub target: EntityId,
    pub direction: Direction,
    /// Filtered rank of the target, or `None` when the scorer left the
    /// target unranked.
    pub rank: Option<u32>,
}

impl QueryRecord {
    pub fn reciprocal_rank(&self) -> f64 {
        match self.rank {
            Some(r) => 1.0 / r as f64,
            None => 0.0,
        }
    }
}

/// Filtered ranks plus the aggregate metrics derived from them.
#[derive(Debug, Clone, Serialize)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    #[serde(skip)]
    pub records: Vec<QueryRecord>,
}

impl RankingReport {
    pub fn from_records(records: Vec<QueryRecord>) -> Self {
        let n = records.len();
        let hits = |k: u32| -> f64 {
            records
                .iter()
                .filter(|r| r.rank.is_some_and(|rank| rank <= k))
                .count() as f64
                / n.max(1) as f64
        };
        RankingReport {
            mrr: records.iter().map(QueryRecord::reciprocal_rank).sum::<f64>() / n.max(1) as f64,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            n_queries: n,
            records,
        }
    }
}

/// Run the filtered protocol: two queries per forward test triple (inverse
/// triples in the slice are skipped as duplicates of the same facts).
/// Queries are scored in parallel; the record order is fixed by the input.
pub fn evaluate<S: QueryScorer>(
    scorer: &S,
    kg: &KnowledgeGraph,
    index: &FilterIndex,
    triples: &[Triple],
) -> RankingReport {
    let queries: Vec<(Query, EntityId, Direction)> = triples
        .iter()
        .filter(|t| !t.relation.is_inverse())
        .flat_map(|t| {
            let (tq, tt) = Query::tail_of(t);
            let (hq, ht) = Query::head_of(t);
            [(tq, tt, Direction::Tail), (hq, ht, Direction::Head)]
        })
        .collect();
    let records: Vec<QueryRecord> = queries
        .par_iter()
        .map(|(query, target, direction)| {
            let candidates = filtered_candidates(index, kg.num_entities(), query, *target);
            let scores = scorer.score(query, &candidates);
            let target_pos = candidates.iter().position(|e| e == target).unwrap();
            let rank = if scores[target_pos] == f64::NEG_INFINITY {
                None
            } else {
                Some(rank_of(&candidates, &scores, *target))
            };
            QueryRecord {
                anchor: query.anchor,
                relation: query.relation,
                target: *target,
                direction: *direction,
                rank,
            }
        })
        .collect();
    RankingReport::from_records(records)
}

/// One grid point of the validation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPoint {
    pub lambda: f64,
    pub max_path_len: usize,
    pub learning_rate: f64,
    pub l2_coeff: f64,
}

/// Pick the configuration maximizing validation MRR. Ties prefer smaller λ,
/// then shorter path limit, then smaller learning rate, then smaller L2.
/// Returns the winning index and its MRR.
pub fn select_hyperparameters<F>(grid: &[HyperPoint], mut validation_mrr: F) -> Option<(usize, f64)>
where
    F: FnMut(&HyperPoint) -> f64,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, point) in grid.iter().enumerate() {
        let mrr = validation_mrr(point);
        let better = match best {
            None => true,
            Some((bi, bm)) => {
                let b = &grid[bi];
                mrr > bm
                    || (mrr == bm
                        && (point.lambda, point.max_path_len, point.learning_rate, point.l2_coeff)
                            < (b.lambda, b.max_path_len, b.learning_rate, b.l2_coeff))
            }
        };
        if better {
            best = Some((i, mrr));
        }
    }
    best
}
