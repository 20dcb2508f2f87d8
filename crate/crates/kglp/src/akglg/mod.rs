//! Attentioned knowledge-graph embeddings on a product Lie group.
//!
//! Entities and relations carry a non-negative attention vector and a point
//! on `Gⁿ` for one of three base groups: `SIGN` ({−1, 1} under real
//! multiplication), `CIRCLE` (unit complex numbers under complex
//! multiplication) and `LINE` (ℝ under addition). The triple score is
//!
//! ```text
//! score(h, r, t) = Σᵢ w_h,i · w_r,i · w_t,i · d_G(g_h,i +_G g_r,i, g_t,i)
//! ```
//!
//! Composing attention and point coordinate-wise recovers the classical
//! factored models: SIGN composes to DistMult's trilinear product and CIRCLE
//! to ComplEx's Re-trilinear-with-conjugate form, which is what
//! [`score_equivalence_check`] verifies. Each relation is embedded twice,
//! once for tail prediction (`r`) and once for head prediction (`r⁻¹`), so
//! relation slots are indexed by directed relation id.

mod io;
mod train;

pub use io::ModelIoError;
pub use train::{train, Objective, ParamSet, TrainConfig, TrainError, TrainedModel, Workspace};

use crate::kg::{EntityId, RelationId};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Base Lie group of the embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// {−1, 1} under real multiplication; d(x, y) = 1 if x = y else −1.
    Sign,
    /// Unit complex numbers under complex multiplication; d(x, y) = Re(x·ȳ).
    Circle,
    /// ℝ under addition; d(x, y) = −(x − y)².
    Line,
}

impl GroupKind {
    /// Scalars stored per group coordinate (2 for circle: re, im).
    pub fn width(self) -> usize {
        match self {
            GroupKind::Circle => 2,
            _ => 1,
        }
    }

    /// Group operation on a single coordinate.
    pub fn op(self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        match self {
            GroupKind::Sign | GroupKind::Circle => {
                // Sign uses only the real component; the complex formula
                // degenerates to real multiplication there.
                [a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]]
            }
            GroupKind::Line => [a[0] + b[0], 0.0],
        }
    }

    pub fn identity(self) -> [f64; 2] {
        match self {
            GroupKind::Sign | GroupKind::Circle => [1.0, 0.0],
            GroupKind::Line => [0.0, 0.0],
        }
    }

    pub fn inverse(self, a: [f64; 2]) -> [f64; 2] {
        match self {
            GroupKind::Sign => a,
            // Unit magnitude: the inverse is the conjugate.
            GroupKind::Circle => [a[0], -a[1]],
            GroupKind::Line => [-a[0], 0.0],
        }
    }

    /// Per-coordinate similarity d_G.
    pub fn similarity(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        match self {
            GroupKind::Sign => {
                if a[0] == b[0] {
                    1.0
                } else {
                    -1.0
                }
            }
            GroupKind::Circle => a[0] * b[0] + a[1] * b[1],
            GroupKind::Line => -(a[0] - b[0]) * (a[0] - b[0]),
        }
    }

    /// Draw a random group element, used by sampling-based checks.
    pub fn sample<R: Rng>(self, rng: &mut R) -> [f64; 2] {
        match self {
            GroupKind::Sign => [if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0],
            GroupKind::Circle => {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                [theta.cos(), theta.sin()]
            }
            GroupKind::Line => [rng.gen_range(-2.0..2.0), 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Sign => "sign",
            GroupKind::Circle => "circle",
            GroupKind::Line => "line",
        }
    }

    pub fn parse(s: &str) -> Option<GroupKind> {
        match s {
            "sign" => Some(GroupKind::Sign),
            "circle" => Some(GroupKind::Circle),
            "line" => Some(GroupKind::Line),
            _ => None,
        }
    }
}

/// A point on `Gⁿ`, stored as `n × width` scalars (circle coordinates are
/// interleaved re, im).
#[derive(Debug, Clone, PartialEq)]
pub struct PointVec {
    pub kind: GroupKind,
    pub data: Vec<f64>,
}

impl PointVec {
    pub fn identity(kind: GroupKind, dim: usize) -> Self {
        let mut data = vec![0.0; dim * kind.width()];
        if kind != GroupKind::Line {
            for i in 0..dim {
                data[i * kind.width()] = 1.0;
            }
        }
        PointVec { kind, data }
    }

    pub fn dim(&self) -> usize {
        self.data.len() / self.kind.width()
    }

    pub fn coord(&self, i: usize) -> [f64; 2] {
        match self.kind.width() {
            2 => [self.data[2 * i], self.data[2 * i + 1]],
            _ => [self.data[i], 0.0],
        }
    }

    fn set_coord(&mut self, i: usize, v: [f64; 2]) {
        match self.kind.width() {
            2 => {
                self.data[2 * i] = v[0];
                self.data[2 * i + 1] = v[1];
            }
            _ => self.data[i] = v[0],
        }
    }

    /// Coordinate-wise group operation.
    pub fn op(&self, other: &PointVec) -> PointVec {
        assert_eq!(self.kind, other.kind);
        assert_eq!(self.data.len(), other.data.len());
        let mut out = PointVec::identity(self.kind, self.dim());
        for i in 0..self.dim() {
            out.set_coord(i, self.kind.op(self.coord(i), other.coord(i)));
        }
        out
    }

    /// Coordinate-wise similarity vector d_G(self, other).
    pub fn similarity(&self, other: &PointVec) -> Vec<f64> {
        assert_eq!(self.kind, other.kind);
        (0..self.dim())
            .map(|i| self.kind.similarity(self.coord(i), other.coord(i)))
            .collect()
    }
}

/// Attentioned embeddings for every entity and directed relation.
///
/// Attention rows have length `dim`; point rows have length
/// `dim · kind.width()`. Relation rows are indexed by directed relation id,
/// so row `2r` predicts tails of relation `r` and row `2r + 1` heads.
#[derive(Debug, Clone)]
pub struct AkglgModel {
    kind: GroupKind,
    dim: usize,
    num_entities: usize,
    num_relations_directed: usize,
    entity_attention: Vec<f64>,
    relation_attention: Vec<f64>,
    entity_points: Vec<f64>,
    relation_points: Vec<f64>,
    /// Names carried along so the model file is self-contained.
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    dataset_hash: [u8; 32],
    seed: u64,
}

impl AkglgModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: GroupKind,
        dim: usize,
        entity_attention: Vec<f64>,
        relation_attention: Vec<f64>,
        entity_points: Vec<f64>,
        relation_points: Vec<f64>,
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        dataset_hash: [u8; 32],
        seed: u64,
    ) -> Self {
        let num_entities = entity_names.len();
        let num_relations_directed = relation_names.len() * 2;
        assert_eq!(entity_attention.len(), num_entities * dim);
        assert_eq!(relation_attention.len(), num_relations_directed * dim);
        let w = kind.width();
        assert_eq!(entity_points.len(), num_entities * dim * w);
        assert_eq!(relation_points.len(), num_relations_directed * dim * w);
        debug_assert!(entity_attention.iter().chain(&relation_attention).all(|&a| a >= 0.0));
        AkglgModel {
            kind,
            dim,
            num_entities,
            num_relations_directed,
            entity_attention,
            relation_attention,
            entity_points,
            relation_points,
            entity_names,
            relation_names,
            dataset_hash,
            seed,
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations_directed(&self) -> usize {
        self.num_relations_directed
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn dataset_hash(&self) -> [u8; 32] {
        self.dataset_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entity_attention(&self, e: EntityId) -> &[f64] {
        let i = e.index();
        &self.entity_attention[i * self.dim..(i + 1) * self.dim]
    }

    pub fn relation_attention(&self, r: RelationId) -> &[f64] {
        let i = r.index();
        &self.relation_attention[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entity_point(&self, e: EntityId) -> PointVec {
        let w = self.kind.width();
        let i = e.index();
        PointVec {
            kind: self.kind,
            data: self.entity_points[i * self.dim * w..(i + 1) * self.dim * w].to_vec(),
        }
    }

    pub fn relation_point(&self, r: RelationId) -> PointVec {
        let w = self.kind.width();
        let i = r.index();
        PointVec {
            kind: self.kind,
            data: self.relation_points[i * self.dim * w..(i + 1) * self.dim * w].to_vec(),
        }
    }

    /// AKGLG triple score: attention-gated coordinate-wise similarity of
    /// `g_h +_G g_r` against `g_t`.
    pub fn score_triple(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let wh = self.entity_attention(h);
        let wr = self.relation_attention(r);
        let wt = self.entity_attention(t);
        let gh = self.entity_point(h);
        let gr = self.relation_point(r);
        let gt = self.entity_point(t);
        let mut score = 0.0;
        for i in 0..self.dim {
            let moved = self.kind.op(gh.coord(i), gr.coord(i));
            score += wh[i] * wr[i] * wt[i] * self.kind.similarity(moved, gt.coord(i));
        }
        score
    }

    /// Composed vector `w ∘ g` of an entity, in point layout (`dim · width`
    /// scalars). For CIRCLE this is the ComplEx complex vector, for SIGN the
    /// DistMult real vector.
    pub fn composed_entity(&self, e: EntityId) -> Vec<f64> {
        compose(
            self.kind,
            self.entity_attention(e),
            &self.entity_point(e).data,
        )
    }

    pub fn composed_relation(&self, r: RelationId) -> Vec<f64> {
        compose(
            self.kind,
            self.relation_attention(r),
            &self.relation_point(r).data,
        )
    }

    /// All composed entity rows as one `num_entities × dim·width` matrix.
    pub fn composed_entity_matrix(&self) -> Vec<f64> {
        let w = self.kind.width();
        let mut out = vec![0.0; self.num_entities * self.dim * w];
        for e in 0..self.num_entities {
            let row = compose(
                self.kind,
                &self.entity_attention[e * self.dim..(e + 1) * self.dim],
                &self.entity_points[e * self.dim * w..(e + 1) * self.dim * w],
            );
            out[e * self.dim * w..(e + 1) * self.dim * w].copy_from_slice(&row);
        }
        out
    }
}

impl AkglgModel {
    /// Build the attention/point view from composed vectors (one row per
    /// entity, then per directed relation, in point layout). CIRCLE rows
    /// split into magnitude and phase, SIGN rows into magnitude and sign;
    /// LINE rows are taken as points with unit attentions.
    #[allow(clippy::too_many_arguments)]
    pub fn from_composed(
        kind: GroupKind,
        dim: usize,
        entity_rows: &[f64],
        relation_rows: &[f64],
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        dataset_hash: [u8; 32],
        seed: u64,
    ) -> Self {
        let row = dim * kind.width();
        let split = |composed: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let count = composed.len() / row.max(1);
            let mut attention = Vec::with_capacity(count * dim);
            let mut points = Vec::with_capacity(composed.len());
            for i in 0..count {
                let crow = &composed[i * row..(i + 1) * row];
                let (a, p) = match kind {
                    GroupKind::Circle => decompose_circle(crow),
                    GroupKind::Sign => decompose_sign(crow),
                    GroupKind::Line => (vec![1.0; dim], crow.to_vec()),
                };
                attention.extend_from_slice(&a);
                points.extend_from_slice(&p);
            }
            (attention, points)
        };
        let (ea, ep) = split(entity_rows);
        let (ra, rp) = split(relation_rows);
        AkglgModel::new(
            kind,
            dim,
            ea,
            ra,
            ep,
            rp,
            entity_names,
            relation_names,
            dataset_hash,
            seed,
        )
    }
}

/// Element-wise `w ∘ g` in point layout.
pub fn compose(kind: GroupKind, attention: &[f64], point: &[f64]) -> Vec<f64> {
    let w = kind.width();
    assert_eq!(point.len(), attention.len() * w);
    let mut out = vec![0.0; point.len()];
    for i in 0..attention.len() {
        for c in 0..w {
            out[i * w + c] = attention[i] * point[i * w + c];
        }
    }
    out
}

/// Split a composed CIRCLE vector `c` (interleaved re, im) into its
/// magnitude attention and unit point. A zero coordinate maps to attention 0
/// with the point at the group identity.
pub fn decompose_circle(composed: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(composed.len() % 2, 0);
    let n = composed.len() / 2;
    let mut attention = vec![0.0; n];
    let mut point = vec![0.0; 2 * n];
    for i in 0..n {
        let (re, im) = (composed[2 * i], composed[2 * i + 1]);
        let mag = re.hypot(im);
        attention[i] = mag;
        if mag == 0.0 {
            point[2 * i] = 1.0;
            point[2 * i + 1] = 0.0;
        } else {
            point[2 * i] = re / mag;
            point[2 * i + 1] = im / mag;
        }
    }
    (attention, point)
}

/// Split a composed SIGN vector into magnitude attention and ±1 point
/// (zero maps to the identity +1).
pub fn decompose_sign(composed: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let attention: Vec<f64> = composed.iter().map(|c| c.abs()).collect();
    let point: Vec<f64> = composed
        .iter()
        .map(|&c| if c < 0.0 { -1.0 } else { 1.0 })
        .collect();
    (attention, point)
}

/// Outcome of [`score_equivalence_check`].
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub max_abs_deviation: f64,
    /// Triple realizing the worst deviation.
    pub worst: Option<(EntityId, RelationId, EntityId)>,
}

impl EquivalenceReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_abs_deviation < tolerance
    }
}

/// Verify the factored-model identities on random triples: the AKGLG score
/// must match the trilinear product of composed vectors (SIGN → DistMult)
/// or its Re-with-conjugate form (CIRCLE → ComplEx).
///
/// Panics on a LINE model, which has no factored counterpart.
pub fn score_equivalence_check<R: Rng>(
    model: &AkglgModel,
    samples: usize,
    rng: &mut R,
) -> EquivalenceReport {
    assert!(
        matches!(model.kind(), GroupKind::Sign | GroupKind::Circle),
        "equivalence check applies to SIGN and CIRCLE instances"
    );
    let mut report = EquivalenceReport {
        samples,
        max_abs_deviation: 0.0,
        worst: None,
    };
    if model.num_entities() == 0 || model.num_relations_directed() == 0 {
        return report;
    }
    for _ in 0..samples {
        let h = EntityId(rng.gen_range(0..model.num_entities()) as u32);
        let r = RelationId(rng.gen_range(0..model.num_relations_directed()) as u32);
        let t = EntityId(rng.gen_range(0..model.num_entities()) as u32);
        let akglg = model.score_triple(h, r, t);
        let factored = factored_score(
            model.kind(),
            &model.composed_entity(h),
            &model.composed_relation(r),
            &model.composed_entity(t),
        );
        let dev = (akglg - factored).abs();
        if dev >= report.max_abs_deviation {
            report.max_abs_deviation = dev;
            report.worst = Some((h, r, t));
        }
    }
    report
}

/// Factored-model score over composed vectors: DistMult's trilinear product
/// for SIGN, ComplEx's `Re(c_h ∘ c_r · conj(c_t))` for CIRCLE.
pub fn factored_score(kind: GroupKind, ch: &[f64], cr: &[f64], ct: &[f64]) -> f64 {
    match kind {
        GroupKind::Sign => ch
            .iter()
            .zip(cr.iter())
            .zip(ct.iter())
            .map(|((h, r), t)| h * r * t)
            .sum(),
        GroupKind::Circle => {
            let n = ch.len() / 2;
            let mut score = 0.0;
            for i in 0..n {
                let (hr, hi) = (ch[2 * i], ch[2 * i + 1]);
                let (rr, ri) = (cr[2 * i], cr[2 * i + 1]);
                let (tr, ti) = (ct[2 * i], ct[2 * i + 1]);
                let qr = hr * rr - hi * ri;
                let qi = hr * ri + hi * rr;
                score += qr * tr + qi * ti;
            }
            score
        }
        GroupKind::Line => panic!("no factored form for the LINE instance"),
    }
}

/// Build a model with random attentions and group points; test helper shared
/// by the equivalence and REE suites.
pub fn random_model<R: Rng>(
    kind: GroupKind,
    dim: usize,
    num_entities: usize,
    num_relations_raw: usize,
    rng: &mut R,
) -> AkglgModel {
    let nr = num_relations_raw * 2;
    let attn = |count: usize, rng: &mut R| -> Vec<f64> {
        (0..count * dim).map(|_| rng.gen_range(0.0..2.0)).collect()
    };
    let points = |count: usize, rng: &mut R| -> Vec<f64> {
        let w = kind.width();
        let mut data = vec![0.0; count * dim * w];
        for i in 0..count * dim {
            let p = kind.sample(rng);
            for c in 0..w {
                data[i * w + c] = p[c];
            }
        }
        data
    };
    let entity_names = (0..num_entities).map(|i| format!("e{i}")).collect();
    let relation_names = (0..num_relations_raw).map(|i| format!("r{i}")).collect();
    AkglgModel::new(
        kind,
        dim,
        attn(num_entities, rng),
        attn(nr, rng),
        points(num_entities, rng),
        points(nr, rng),
        entity_names,
        relation_names,
        [0u8; 32],
        0,
    )
}
