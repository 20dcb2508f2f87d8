//! Per-relation softmax regression over path-multiplicity features, and the
//! score mixing that combines it with the embedding model.
//!
//! For a query `(h, r, ?)` and candidate `e`, feature `i` is
//! `mul(h, e, pᵢ) / M` with `M` the maximum of `mul(h, ·, pᵢ)` over all
//! entities, so every component lies in [0, 1] and a path that never fires
//! from `h` contributes zeros. Each relation trains its own weight vector
//! against sampled negatives under a cross-entropy loss; positives whose
//! feature vector is zero are skipped and zero-feature entities are never
//! sampled as negatives.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grounding::{MultiplicityCounter, MultiplicityTable};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::ree::RelationPath;

const MODEL_MAGIC: &[u8; 8] = b"KGLPSRM1";

#[derive(Error, Debug)]
pub enum PbfError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad relation-model file {path}: {reason}")]
    Format { path: String, reason: String },
}

/// Grounding tables of one query head against a fixed path list; the basis
/// for feature vectors, negative pools and softmax-regression scores.
#[derive(Debug, Clone)]
pub struct QueryFeatures {
    tables: Vec<MultiplicityTable>,
    max: Vec<u64>,
}

impl QueryFeatures {
    pub fn compute(
        kg: &KnowledgeGraph,
        h: EntityId,
        paths: &[RelationPath],
        counter: &mut MultiplicityCounter,
    ) -> Self {
        let tables: Vec<MultiplicityTable> = paths
            .iter()
            .map(|p| counter.count(kg, h, p.relations()))
            .collect();
        let max = tables.iter().map(|t| t.max_count()).collect();
        QueryFeatures { tables, max }
    }

    pub fn num_paths(&self) -> usize {
        self.tables.len()
    }

    /// Rescaled feature vector of one candidate.
    pub fn vector(&self, e: EntityId) -> Vec<f64> {
        self.tables
            .iter()
            .zip(&self.max)
            .map(|(table, &m)| {
                if m == 0 {
                    0.0
                } else {
                    table.get(e) as f64 / m as f64
                }
            })
            .collect()
    }

    pub fn is_zero(&self, e: EntityId) -> bool {
        self.tables.iter().all(|t| t.get(e) == 0)
    }

    /// Entities with at least one nonzero feature, ascending by id.
    pub fn nonzero_entities(&self) -> Vec<EntityId> {
        let mut set = BTreeSet::new();
        for table in &self.tables {
            for (e, _) in table.iter() {
                set.insert(e);
            }
        }
        set.into_iter().collect()
    }
}

/// Feature vectors for an explicit candidate list.
pub fn build_features(
    kg: &KnowledgeGraph,
    h: EntityId,
    candidates: &[EntityId],
    paths: &[RelationPath],
) -> Vec<Vec<f64>> {
    let mut counter = MultiplicityCounter::new();
    let features = QueryFeatures::compute(kg, h, paths, &mut counter);
    candidates.iter().map(|&e| features.vector(e)).collect()
}

/// Sample up to `count` negatives uniformly without replacement from the
/// entities with nonzero features, excluding the positive tail. Returns
/// fewer (possibly none) when the pool is small; the result is sorted, so
/// it is a set and deterministic for a fixed seed.
pub fn sample_negatives(
    features: &QueryFeatures,
    positive_tail: EntityId,
    count: usize,
    seed: u64,
) -> Vec<EntityId> {
    assert!(count >= 1);
    let mut pool: Vec<EntityId> = features
        .nonzero_entities()
        .into_iter()
        .filter(|&e| e != positive_tail)
        .collect();
    if pool.len() > count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..count {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool.sort_unstable();
    }
    pool
}

/// Softmax-regression training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SrTrainConfig {
    pub learning_rate: f64,
    pub l2_coeff: f64,
    pub batch_size: usize,
    pub num_batches: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for SrTrainConfig {
    fn default() -> Self {
        SrTrainConfig {
            learning_rate: 0.1,
            l2_coeff: 0.01,
            batch_size: 100,
            num_batches: 500,
            negatives_per_positive: 50,
            seed: 0,
        }
    }
}

/// One training example: the positive candidate's features first, negatives
/// after it.
#[derive(Debug, Clone)]
pub struct SrExample {
    pub candidates: Vec<Vec<f64>>,
}

/// Mean cross-entropy of `examples` under `theta` plus the L2 penalty.
pub fn sr_loss(theta: &[f64], examples: &[SrExample], l2_coeff: f64) -> f64 {
    let ce: f64 = examples
        .iter()
        .map(|ex| {
            let scores: Vec<f64> = ex.candidates.iter().map(|v| dot(theta, v)).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            lse - scores[0]
        })
        .sum();
    ce / examples.len() as f64 + l2_coeff * theta.iter().map(|t| t * t).sum::<f64>()
}

/// Gradient companion of [`sr_loss`]; `grad` is overwritten.
pub fn sr_loss_and_grad(
    theta: &[f64],
    examples: &[SrExample],
    l2_coeff: f64,
    grad: &mut [f64],
) -> f64 {
    let inv = 1.0 / examples.len() as f64;
    for (g, t) in grad.iter_mut().zip(theta) {
        *g = 2.0 * l2_coeff * t;
    }
    let mut ce = 0.0;
    for ex in examples {
        let scores: Vec<f64> = ex.candidates.iter().map(|v| dot(theta, v)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        ce += lse - scores[0];
        for (ci, v) in ex.candidates.iter().enumerate() {
            let residual = (scores[ci] - lse).exp() - if ci == 0 { 1.0 } else { 0.0 };
            for (g, x) in grad.iter_mut().zip(v) {
                *g += inv * residual * x;
            }
        }
    }
    ce * inv + l2_coeff * theta.iter().map(|t| t * t).sum::<f64>()
}

/// Plain SGD over batches sampled with replacement; returns the weight
/// vector and the per-batch losses. Deterministic for a fixed seed.
pub fn train_softmax_regression(
    examples: &[SrExample],
    num_paths: usize,
    config: &SrTrainConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut theta = vec![0.0; num_paths];
    let mut grad = vec![0.0; num_paths];
    let mut losses = Vec::with_capacity(config.num_batches);
    if examples.is_empty() {
        return (theta, losses);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.num_batches {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(examples[rng.gen_range(0..examples.len())].clone());
        }
        let loss = sr_loss_and_grad(&theta, &batch, config.l2_coeff, &mut grad);
        losses.push(loss);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= config.learning_rate * g;
        }
    }
    (theta, losses)
}

/// A trained softmax-regression model for one directed relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel {
    pub relation: RelationId,
    pub relation_name: String,
    pub paths: Vec<RelationPath>,
    pub theta: Vec<f64>,
    /// True when every positive was skipped for lack of features.
    pub feature_starved: bool,
    pub config: SrTrainConfig,
}

impl RelationModel {
    /// Raw softmax-regression score of one candidate feature vector.
    pub fn score(&self, features: &[f64]) -> f64 {
        dot(&self.theta, features)
    }
}

/// Build training examples and fit the relation's weight vector.
///
/// Positives are the train triples of `r`; grounding tables are shared
/// across triples with the same head. Positives with a zero feature vector
/// or an empty negative pool are skipped; if everything is skipped the
/// model is flagged feature-starved and keeps `θ = 0`.
pub fn train_relation_model(
    kg: &KnowledgeGraph,
    r: RelationId,
    paths: Vec<RelationPath>,
    config: &SrTrainConfig,
) -> RelationModel {
    let mut examples = Vec::new();
    if !paths.is_empty() {
        let mut counter = MultiplicityCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut cached: Option<(EntityId, QueryFeatures)> = None;
        let mut triples: Vec<Triple> = kg.triples_of(r).to_vec();
        triples.sort_unstable();
        for t in &triples {
            let recompute = match &cached {
                Some((h, _)) => *h != t.head,
                None => true,
            };
            if recompute {
                let f = QueryFeatures::compute(kg, t.head, &paths, &mut counter);
                cached = Some((t.head, f));
            }
            let features = &cached.as_ref().unwrap().1;
            let negative_seed = rng.gen::<u64>();
            if features.is_zero(t.tail) {
                continue;
            }
            let negatives = sample_negatives(
                features,
                t.tail,
                config.negatives_per_positive,
                negative_seed,
            );
            if negatives.is_empty() {
                continue;
            }
            let mut candidates = Vec::with_capacity(negatives.len() + 1);
            candidates.push(features.vector(t.tail));
            candidates.extend(negatives.iter().map(|&e| features.vector(e)));
            examples.push(SrExample { candidates });
        }
    }
    let feature_starved = examples.is_empty();
    let (theta, _) = train_softmax_regression(&examples, paths.len(), config);
    RelationModel {
        relation: r,
        relation_name: kg.relation_name(r),
        paths,
        theta,
        feature_starved,
        config: config.clone(),
    }
}

/// Score-mixing weight, λ on the grid {0, 0.1, …, 1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineConfig {
    pub lambda: f64,
}

impl CombineConfig {
    pub fn grid() -> Vec<f64> {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    }
}

/// Mix embedding and softmax-regression scores over one candidate set.
///
/// Both families become per-query softmax distributions first; a candidate
/// with a zero feature vector (`None` regression score) gets probability 0
/// on the regression side. `λ = 1` reproduces the embedding ranking and
/// `λ = 0` the regression ranking among nonzero-feature candidates.
pub fn combine_scores(
    embedding_scores: &[f64],
    regression_scores: &[Option<f64>],
    config: CombineConfig,
) -> Vec<f64> {
    assert_eq!(embedding_scores.len(), regression_scores.len());
    assert!(
        (0.0..=1.0).contains(&config.lambda),
        "lambda must lie in [0, 1]"
    );
    let p_emb = softmax(embedding_scores);
    let finite: Vec<f64> = regression_scores.iter().filter_map(|s| *s).collect();
    let p_sr_values = softmax(&finite);
    let mut p_sr = vec![0.0; regression_scores.len()];
    let mut next = 0;
    for (out, s) in p_sr.iter_mut().zip(regression_scores) {
        if s.is_some() {
            *out = p_sr_values[next];
            next += 1;
        }
    }
    p_emb
        .iter()
        .zip(&p_sr)
        .map(|(e, s)| config.lambda * e + (1.0 - config.lambda) * s)
        .collect()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RelationModel {
    /// Binary layout: magic, dataset hash, directed relation id, name,
    /// starved flag, path list (ids), θ, then the training echo.
    pub fn save(&self, path: &Path, dataset_hash: [u8; 32]) -> Result<(), PbfError> {
        let io_err = |e: std::io::Error| PbfError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
        put(MODEL_MAGIC)?;
        put(&dataset_hash)?;
        put(&self.relation.0.to_le_bytes())?;
        put(&(self.relation_name.len() as u32).to_le_bytes())?;
        put(self.relation_name.as_bytes())?;
        put(&[u8::from(self.feature_starved)])?;
        put(&(self.paths.len() as u32).to_le_bytes())?;
        for p in &self.paths {
            put(&(p.len() as u32).to_le_bytes())?;
            for r in p.relations() {
                put(&r.0.to_le_bytes())?;
            }
        }
        for t in &self.theta {
            put(&t.to_le_bytes())?;
        }
        put(&self.config.learning_rate.to_le_bytes())?;
        put(&self.config.l2_coeff.to_le_bytes())?;
        put(&(self.config.batch_size as u64).to_le_bytes())?;
        put(&(self.config.num_batches as u64).to_le_bytes())?;
        put(&(self.config.negatives_per_positive as u64).to_le_bytes())?;
        put(&self.config.seed.to_le_bytes())?;
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<(RelationModel, [u8; 32]), PbfError> {
        let io_err = |e: std::io::Error| PbfError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let bad = |reason: &str| PbfError::Format {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let file = fs::File::open(path).map_err(io_err)?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("wrong magic"));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash).map_err(io_err)?;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io_err)?;
        let relation = RelationId(u32::from_le_bytes(b4));
        r.read_exact(&mut b4).map_err(io_err)?;
        let name_len = u32::from_le_bytes(b4) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io_err)?;
        let relation_name = String::from_utf8(name_bytes).map_err(|_| bad("name is not UTF-8"))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(io_err)?;
        r.read_exact(&mut b4).map_err(io_err)?;
        let num_paths = u32::from_le_bytes(b4) as usize;
        let mut paths = Vec::with_capacity(num_paths);
        for _ in 0..num_paths {
            r.read_exact(&mut b4).map_err(io_err)?;
            let len = u32::from_le_bytes(b4) as usize;
            let mut rels = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b4).map_err(io_err)?;
                rels.push(RelationId(u32::from_le_bytes(b4)));
            }
            paths.push(RelationPath::new(rels));
        }
        let mut b8 = [0u8; 8];
        let mut theta = Vec::with_capacity(num_paths);
        for _ in 0..num_paths {
            r.read_exact(&mut b8).map_err(io_err)?;
            theta.push(f64::from_le_bytes(b8));
        }
        r.read_exact(&mut b8).map_err(io_err)?;
        let learning_rate = f64::from_le_bytes(b8);
        r.read_exact(&mut b8).map_err(io_err)?;
        let l2_coeff = f64::from_le_bytes(b8);
        r.read_exact(&mut b8).map_err(io_err)?;
        let batch_size = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8).map_err(io_err)?;
        let num_batches = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8).map_err(io_err)?;
        let negatives_per_positive = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8).map_err(io_err)?;
        let seed = u64::from_le_bytes(b8);
        Ok((
            RelationModel {
                relation,
                relation_name,
                paths,
                theta,
                feature_starved: flag[0] != 0,
                config: SrTrainConfig {
                    learning_rate,
                    l2_coeff,
                    batch_size,
                    num_batches,
                    negatives_per_positive,
                    seed,
                },
            },
            hash,
        ))
    }
}
