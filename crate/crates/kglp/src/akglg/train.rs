//! Embedding training: full-softmax multiclass log-loss over all entities
//! for each tail query `(h, r, ?)` drawn from the augmented train split,
//! plus a per-example nuclear-3-norm penalty on the composed vectors of
//! `h`, `r` and `t`, optimized with Adagrad.
//!
//! SIGN and CIRCLE instances are parameterized directly on composed vectors
//! (the DistMult and ComplEx forms); the attention/point view is recovered by
//! magnitude decomposition when the model is assembled. LINE trains group
//! points with attentions fixed at 1 and the 3-norm applied to the points.
//! Head queries never appear: the inverse triples added by augmentation turn
//! them into tail queries against the `r⁻¹` embedding.

use super::{AkglgModel, GroupKind};
use crate::kg::{KnowledgeGraph, Triple};
use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("training requires an inverse-augmented graph")]
    NotAugmented,
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
}

/// Embedding training hyperparameters. All values must be positive; `seed`
/// pins initialization and batch order so single-worker runs are bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    /// Nuclear-3-norm coefficient.
    pub reg_coeff: f64,
    /// Adagrad initial step.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Std-dev of the Gaussian parameter init.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            reg_coeff: 0.05,
            learning_rate: 0.1,
            epochs: 25,
            batch_size: 1000,
            seed: 0,
            init_scale: 1e-3,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        for (name, ok) in [
            ("dim", self.dim > 0),
            ("reg_coeff", self.reg_coeff >= 0.0),
            ("learning_rate", self.learning_rate > 0.0),
            ("epochs", self.epochs > 0),
            ("batch_size", self.batch_size > 0),
            ("init_scale", self.init_scale > 0.0),
        ] {
            if !ok {
                return Err(TrainError::BadConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Trainable parameter matrices in row-major layout. Row width is
/// `dim · width` (composed complex rows for CIRCLE, reals otherwise).
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(row: usize, num_entities: usize, num_relations: usize) -> Self {
        ParamSet {
            entities: vec![0.0; num_entities * row],
            relations: vec![0.0; num_relations * row],
        }
    }

    fn random<R: Rng>(
        row: usize,
        num_entities: usize,
        num_relations: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut draw = |count: usize| -> Vec<f64> {
            (0..count)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        ParamSet {
            entities: draw(num_entities * row),
            relations: draw(num_relations * row),
        }
    }
}

/// The training objective for one group instance: exposes loss and analytic
/// gradients so the optimizer and the finite-difference checks share one
/// code path.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: GroupKind,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    reg_coeff: f64,
}

/// Reusable scratch buffers for [`Objective::loss_and_grad`].
#[derive(Debug, Default)]
pub struct Workspace {
    scores: Vec<f64>,
    queries: Vec<f64>,
    grad_queries: Vec<f64>,
    losses: Vec<f64>,
    colsum: Vec<f64>,
    sqnorm: Vec<f64>,
}

impl Objective {
    pub fn new(
        kind: GroupKind,
        dim: usize,
        num_entities: usize,
        num_relations_directed: usize,
        reg_coeff: f64,
    ) -> Self {
        Objective {
            kind,
            dim,
            num_entities,
            num_relations: num_relations_directed,
            reg_coeff,
        }
    }

    /// Scalars per parameter row.
    pub fn row_width(&self) -> usize {
        self.dim * self.kind.width()
    }

    pub fn init_params<R: Rng>(&self, scale: f64, rng: &mut R) -> ParamSet {
        ParamSet::random(
            self.row_width(),
            self.num_entities,
            self.num_relations,
            scale,
            rng,
        )
    }

    pub fn zero_params(&self) -> ParamSet {
        ParamSet::zeros(self.row_width(), self.num_entities, self.num_relations)
    }

    /// Mean loss over `examples` (cross entropy plus the 3-norm penalty).
    pub fn loss(&self, params: &ParamSet, examples: &[Triple], ws: &mut Workspace) -> f64 {
        self.forward(params, examples, ws)
    }

    /// Mean loss and its gradient; `grad` is fully overwritten.
    pub fn loss_and_grad(
        &self,
        params: &ParamSet,
        examples: &[Triple],
        grad: &mut ParamSet,
        ws: &mut Workspace,
    ) -> f64 {
        let loss = self.forward(params, examples, ws);
        self.backward(params, examples, grad, ws);
        loss
    }

    /// Scores, per-row softmax residuals (left in `ws.scores`) and mean loss.
    fn forward(&self, params: &ParamSet, examples: &[Triple], ws: &mut Workspace) -> f64 {
        let row = self.row_width();
        let b = examples.len();
        let n = self.num_entities;
        ws.queries.resize(b * row, 0.0);
        ws.scores.resize(b * n, 0.0);
        ws.losses.resize(b, 0.0);

        // Query rows.
        for (bi, ex) in examples.iter().enumerate() {
            let h = &params.entities[ex.head.index() * row..(ex.head.index() + 1) * row];
            let r = &params.relations[ex.relation.index() * row..(ex.relation.index() + 1) * row];
            let q = &mut ws.queries[bi * row..(bi + 1) * row];
            match self.kind {
                GroupKind::Circle => {
                    for i in 0..self.dim {
                        q[2 * i] = h[2 * i] * r[2 * i] - h[2 * i + 1] * r[2 * i + 1];
                        q[2 * i + 1] = h[2 * i] * r[2 * i + 1] + h[2 * i + 1] * r[2 * i];
                    }
                }
                GroupKind::Sign => {
                    for i in 0..row {
                        q[i] = h[i] * r[i];
                    }
                }
                GroupKind::Line => {
                    for i in 0..row {
                        q[i] = h[i] + r[i];
                    }
                }
            }
        }

        // Scores against every entity. SIGN/CIRCLE score is the dot product
        // of the query row with the composed entity row. LINE uses
        // −(u − e)² summed, which equals 2u·e − ‖e‖² up to a per-query
        // constant that cancels in the softmax and its gradient.
        let q_view = ArrayView2::from_shape((b, row), &ws.queries).unwrap();
        let e_view = ArrayView2::from_shape((n, row), &params.entities).unwrap();
        let mut s_view = ArrayViewMut2::from_shape((b, n), &mut ws.scores).unwrap();
        let alpha = if self.kind == GroupKind::Line { 2.0 } else { 1.0 };
        general_mat_mul(alpha, &q_view, &e_view.t(), 0.0, &mut s_view);
        if self.kind == GroupKind::Line {
            ws.sqnorm.resize(n, 0.0);
            ws.sqnorm
                .par_iter_mut()
                .zip(params.entities.par_chunks(row))
                .for_each(|(out, erow)| {
                    *out = erow.iter().map(|v| v * v).sum();
                });
            let sqnorm = &ws.sqnorm;
            ws.scores.par_chunks_mut(n).for_each(|srow| {
                for (s, nz) in srow.iter_mut().zip(sqnorm.iter()) {
                    *s -= nz;
                }
            });
        }

        // Row-wise log-softmax: loss per example, residual p − y in place.
        let targets: Vec<usize> = examples.iter().map(|ex| ex.tail.index()).collect();
        ws.losses
            .par_iter_mut()
            .zip(ws.scores.par_chunks_mut(n))
            .zip(targets.par_iter())
            .for_each(|((loss, srow), &t)| {
                let max = srow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + srow.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                *loss = lse - srow[t];
                for s in srow.iter_mut() {
                    *s = (*s - lse).exp();
                }
                srow[t] -= 1.0;
            });

        let ce: f64 = ws.losses.iter().sum();
        let reg: f64 = examples
            .iter()
            .map(|ex| {
                self.reg_rows(params, ex)
                    .into_iter()
                    .map(|row| self.cube_norm(row))
                    .sum::<f64>()
            })
            .sum();
        (ce + self.reg_coeff * reg) / b as f64
    }

    /// Gradient of the mean loss given the residuals left by `forward`.
    fn backward(
        &self,
        params: &ParamSet,
        examples: &[Triple],
        grad: &mut ParamSet,
        ws: &mut Workspace,
    ) {
        let row = self.row_width();
        let b = examples.len();
        let n = self.num_entities;
        let inv_b = 1.0 / b as f64;
        ws.grad_queries.resize(b * row, 0.0);
        grad.relations.iter_mut().for_each(|g| *g = 0.0);

        let d_view = ArrayView2::from_shape((b, n), &ws.scores).unwrap();
        let e_view = ArrayView2::from_shape((n, row), &params.entities).unwrap();
        let q_view = ArrayView2::from_shape((b, row), &ws.queries).unwrap();

        // grad wrt query rows: δ · E (doubled for LINE).
        let alpha = if self.kind == GroupKind::Line { 2.0 } else { 1.0 } * inv_b;
        let mut gq_view = ArrayViewMut2::from_shape((b, row), &mut ws.grad_queries).unwrap();
        general_mat_mul(alpha, &d_view, &e_view, 0.0, &mut gq_view);

        // grad wrt candidate entity rows: δᵀ · Q, fully overwriting.
        let mut ge_view = ArrayViewMut2::from_shape((n, row), &mut grad.entities).unwrap();
        general_mat_mul(alpha, &d_view.t(), &q_view, 0.0, &mut ge_view);
        if self.kind == GroupKind::Line {
            // −(u − e)² contributes −2e per unit of residual mass.
            ws.colsum.resize(n, 0.0);
            ws.colsum.iter_mut().for_each(|z| *z = 0.0);
            for bi in 0..b {
                for (z, d) in ws.colsum.iter_mut().zip(&ws.scores[bi * n..(bi + 1) * n]) {
                    *z += d;
                }
            }
            let colsum = &ws.colsum;
            grad.entities
                .par_chunks_mut(row)
                .zip(params.entities.par_chunks(row))
                .zip(colsum.par_iter())
                .for_each(|((grow, erow), &z)| {
                    for (g, e) in grow.iter_mut().zip(erow.iter()) {
                        *g -= 2.0 * inv_b * z * e;
                    }
                });
        }

        // Chain query gradients into h and r rows, plus the 3-norm pulls.
        for (bi, ex) in examples.iter().enumerate() {
            let gq = ws.grad_queries[bi * row..(bi + 1) * row].to_vec();
            let hi = ex.head.index() * row;
            let ri = ex.relation.index() * row;
            match self.kind {
                GroupKind::Circle => {
                    for i in 0..self.dim {
                        let (hr, him) = (params.entities[hi + 2 * i], params.entities[hi + 2 * i + 1]);
                        let (rr, rim) = (params.relations[ri + 2 * i], params.relations[ri + 2 * i + 1]);
                        let (gr, gi) = (gq[2 * i], gq[2 * i + 1]);
                        // grad_h = gq ∘ conj(r), grad_r = gq ∘ conj(h)
                        grad.entities[hi + 2 * i] += gr * rr + gi * rim;
                        grad.entities[hi + 2 * i + 1] += gi * rr - gr * rim;
                        grad.relations[ri + 2 * i] += gr * hr + gi * him;
                        grad.relations[ri + 2 * i + 1] += gi * hr - gr * him;
                    }
                }
                GroupKind::Sign => {
                    for (i, g) in gq.iter().enumerate() {
                        grad.entities[hi + i] += g * params.relations[ri + i];
                        grad.relations[ri + i] += g * params.entities[hi + i];
                    }
                }
                GroupKind::Line => {
                    for (i, g) in gq.iter().enumerate() {
                        grad.entities[hi + i] += g;
                        grad.relations[ri + i] += g;
                    }
                }
            }
            self.add_reg_grad(params, ex, inv_b, grad);
        }
    }

    /// Rows regularized for one example: composed h, r and t.
    fn reg_rows<'p>(&self, params: &'p ParamSet, ex: &Triple) -> [&'p [f64]; 3] {
        let row = self.row_width();
        let h = ex.head.index() * row;
        let r = ex.relation.index() * row;
        let t = ex.tail.index() * row;
        [
            &params.entities[h..h + row],
            &params.relations[r..r + row],
            &params.entities[t..t + row],
        ]
    }

    /// Σᵢ |cᵢ|³ with |·| the coordinate magnitude (complex for CIRCLE).
    fn cube_norm(&self, row: &[f64]) -> f64 {
        match self.kind {
            GroupKind::Circle => row
                .chunks_exact(2)
                .map(|c| {
                    let m = c[0].hypot(c[1]);
                    m * m * m
                })
                .sum(),
            _ => row.iter().map(|v| v.abs().powi(3)).sum(),
        }
    }

    fn add_reg_grad(&self, params: &ParamSet, ex: &Triple, inv_b: f64, grad: &mut ParamSet) {
        let row = self.row_width();
        let scale = 3.0 * self.reg_coeff * inv_b;
        let offsets = [
            (true, ex.head.index() * row),
            (false, ex.relation.index() * row),
            (true, ex.tail.index() * row),
        ];
        for (is_entity, off) in offsets {
            let (src, dst): (&[f64], &mut [f64]) = if is_entity {
                (&params.entities, &mut grad.entities)
            } else {
                (&params.relations, &mut grad.relations)
            };
            match self.kind {
                GroupKind::Circle => {
                    for i in 0..self.dim {
                        let (re, im) = (src[off + 2 * i], src[off + 2 * i + 1]);
                        let mag = re.hypot(im);
                        dst[off + 2 * i] += scale * mag * re;
                        dst[off + 2 * i + 1] += scale * mag * im;
                    }
                }
                _ => {
                    for i in 0..row {
                        let v = src[off + i];
                        dst[off + i] += scale * v.abs() * v;
                    }
                }
            }
        }
    }
}

/// A trained model together with its per-epoch mean losses.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: AkglgModel,
    pub epoch_losses: Vec<f64>,
}

/// Train embeddings on the augmented train split.
///
/// Deterministic for a fixed seed: initialization and batch order come from
/// a seeded stream and every parameter is updated by exactly one task per
/// batch, so the result does not depend on the worker count.
pub fn train(
    kg: &KnowledgeGraph,
    kind: GroupKind,
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    if !kg.is_augmented() {
        return Err(TrainError::NotAugmented);
    }
    config.validate()?;
    let objective = Objective::new(
        kind,
        config.dim,
        kg.num_entities(),
        kg.num_relations_directed(),
        config.reg_coeff,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = objective.init_params(config.init_scale, &mut rng);
    let mut grad = objective.zero_params();
    let mut acc = objective.zero_params();
    let mut ws = Workspace::default();

    let examples: Vec<Triple> = kg.train().to_vec();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Triple> = chunk.iter().map(|&i| examples[i]).collect();
            let loss = objective.loss_and_grad(&params, &batch, &mut grad, &mut ws);
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss * batch.len() as f64;
            adagrad_step(
                &mut params.entities,
                &grad.entities,
                &mut acc.entities,
                config.learning_rate,
            );
            adagrad_step(
                &mut params.relations,
                &grad.relations,
                &mut acc.relations,
                config.learning_rate,
            );
        }
        let mean = epoch_loss / examples.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }

    let model = assemble_model(kg, kind, config, &params);
    Ok(TrainedModel {
        model,
        epoch_losses,
    })
}

fn adagrad_step(params: &mut [f64], grad: &[f64], acc: &mut [f64], lr: f64) {
    params
        .par_chunks_mut(4096)
        .zip(grad.par_chunks(4096))
        .zip(acc.par_chunks_mut(4096))
        .for_each(|((p_chunk, g_chunk), a_chunk)| {
            for ((p, &g), a) in p_chunk.iter_mut().zip(g_chunk).zip(a_chunk.iter_mut()) {
                *a += g * g;
                *p -= lr * g / (a.sqrt() + 1e-10);
            }
        });
}

/// Decompose the optimized parameters into the attention/point view.
fn assemble_model(
    kg: &KnowledgeGraph,
    kind: GroupKind,
    config: &TrainConfig,
    params: &ParamSet,
) -> AkglgModel {
    AkglgModel::from_composed(
        kind,
        config.dim,
        &params.entities,
        &params.relations,
        kg.entity_names().to_vec(),
        kg.relation_names().to_vec(),
        kg.fingerprint(),
        config.seed,
    )
}
