//! Rule evaluation based on embeddings.
//!
//! A rule `(r₁, …, r_n) ⇒ r` is scored without counting groundings: the body
//! path is composed on the group (`g_p = g_{r₁} +_G … +_G g_{r_n}`), its
//! attention is the normalized element-wise geometric mean of the body
//! attentions, and the confidence is the attention-gated similarity between
//! the path and the head relation, mirroring the triple score. Candidate
//! rules come from [`mining`], which enumerates simple cycles of the train
//! graph so that every emitted rule has at least one injective grounding.

pub mod mining;

pub use mining::{mine_candidate_rules, MiningConfig, MiningStats};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::akglg::{AkglgModel, PointVec};
use crate::kg::{KnowledgeGraph, RelationId};

#[derive(Error, Debug)]
pub enum RuleIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad rules file {path}:{line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Ordered sequence of directed relations forming a rule body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationPath(Vec<RelationId>);

impl RelationPath {
    pub fn new(relations: Vec<RelationId>) -> Self {
        assert!(!relations.is_empty(), "rule bodies have length >= 1");
        RelationPath(relations)
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Rules grouped by head relation, ordered by directed id.
pub type RulesByHead = BTreeMap<RelationId, Vec<Rule>>;

/// A first-order path rule `body ⇒ head` with its REE confidence once scored.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub body: RelationPath,
    pub head: RelationId,
    pub confidence: Option<f64>,
}

impl Rule {
    pub fn unscored(body: RelationPath, head: RelationId) -> Self {
        Rule {
            body,
            head,
            confidence: None,
        }
    }
}

/// Compose the body relations on the group, coordinate-wise.
pub fn path_embedding(model: &AkglgModel, path: &RelationPath) -> PointVec {
    let mut relations = path.relations().iter();
    let first = relations.next().expect("non-empty path");
    let mut point = model.relation_point(*first);
    for r in relations {
        point = point.op(&model.relation_point(*r));
    }
    point
}

/// Normalized element-wise geometric mean of the body attentions.
///
/// A single zero coordinate anywhere on the path zeroes that coordinate, and
/// an all-zero product yields the zero vector rather than a normalization
/// error.
pub fn path_attention(model: &AkglgModel, path: &RelationPath) -> Vec<f64> {
    let n = model.dim();
    let mut product = vec![1.0; n];
    for r in path.relations() {
        for (p, w) in product.iter_mut().zip(model.relation_attention(*r)) {
            *p *= w;
        }
    }
    let exponent = 1.0 / path.len() as f64;
    for p in product.iter_mut() {
        *p = p.powf(exponent);
    }
    let norm = product.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm > 0.0 {
        for p in product.iter_mut() {
            *p /= norm;
        }
    }
    product
}

/// REE confidence: attention-gated similarity between the composed body and
/// the head relation. Rules whose head is `r⁻¹` are scored against the
/// head-prediction embedding automatically, because relation slots are
/// indexed by directed id.
pub fn rule_confidence(model: &AkglgModel, rule: &Rule) -> f64 {
    let path_attn = path_attention(model, &rule.body);
    let head_attn = model.relation_attention(rule.head);
    let path_point = path_embedding(model, &rule.body);
    let head_point = model.relation_point(rule.head);
    let similarities = path_point.similarity(&head_point);
    path_attn
        .iter()
        .zip(head_attn)
        .zip(similarities)
        .map(|((wp, wh), d)| wp * wh * d)
        .sum()
}

/// Score every rule with [`rule_confidence`] in parallel.
pub fn score_rules(model: &AkglgModel, rules: Vec<Rule>) -> Vec<Rule> {
    rules
        .into_par_iter()
        .map(|mut rule| {
            rule.confidence = Some(rule_confidence(model, &rule));
            rule
        })
        .collect()
}

/// Keep the `per_head_limit` highest-confidence rules for each head relation
/// (inverse heads are distinct heads), sorted by confidence descending with
/// ties broken toward shorter, then lexicographically smaller bodies.
pub fn select_top_rules(rules: Vec<Rule>, per_head_limit: usize) -> RulesByHead {
    assert!(per_head_limit >= 1);
    let mut by_head: BTreeMap<RelationId, Vec<Rule>> = BTreeMap::new();
    for rule in rules {
        by_head.entry(rule.head).or_default().push(rule);
    }
    for list in by_head.values_mut() {
        list.sort_by(|a, b| {
            let ca = a.confidence.expect("rules must be scored");
            let cb = b.confidence.expect("rules must be scored");
            cb.partial_cmp(&ca)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.body.len().cmp(&b.body.len()))
                .then(a.body.cmp(&b.body))
        });
        list.truncate(per_head_limit);
    }
    by_head
}

/// Write grouped rules as TSV: `head_relation  body  confidence`, heads in
/// directed-id order, bodies comma-joined with inverses prefixed `INV:`.
pub fn write_rules_tsv(
    path: &Path,
    kg: &KnowledgeGraph,
    rules: &RulesByHead,
    dataset_hash: [u8; 32],
) -> Result<(), RuleIoError> {
    let io_err = |e: std::io::Error| RuleIoError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut out = String::new();
    out.push_str("# kglp-rules v1\n");
    out.push_str(&format!("# dataset_sha256: {}\n", hex(&dataset_hash)));
    out.push_str("head_relation\tbody\tconfidence\n");
    for (head, list) in rules {
        for rule in list {
            let body = rule
                .body
                .relations()
                .iter()
                .map(|r| kg.relation_name(*r))
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                kg.relation_name(*head),
                body,
                rule.confidence.expect("rules must be scored")
            ));
        }
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(out.as_bytes()).map_err(io_err)
}

/// Read a rules TSV (either our own output or an externally supplied list in
/// the same format). Returns rules grouped by head plus the dataset hash
/// found in the header, if any.
pub fn read_rules_tsv(
    path: &Path,
    kg: &KnowledgeGraph,
) -> Result<(RulesByHead, Option<[u8; 32]>), RuleIoError> {
    let io_err = |e: std::io::Error| RuleIoError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let bad = |line: usize, reason: String| RuleIoError::Format {
        path: path.display().to_string(),
        line,
        reason,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut rules = RulesByHead::new();
    let mut hash = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if let Some(rest) = line.strip_prefix("# dataset_sha256: ") {
            hash = unhex(rest.trim());
            continue;
        }
        if line.starts_with('#') || line.is_empty() || line.starts_with("head_relation\t") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(lineno + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let head = kg
            .relation_id(fields[0])
            .ok_or_else(|| bad(lineno + 1, format!("unknown relation `{}`", fields[0])))?;
        let body: Result<Vec<RelationId>, RuleIoError> = fields[1]
            .split(',')
            .map(|name| {
                kg.relation_id(name)
                    .ok_or_else(|| bad(lineno + 1, format!("unknown relation `{name}`")))
            })
            .collect();
        let confidence: f64 = fields[2]
            .parse()
            .map_err(|_| bad(lineno + 1, format!("bad confidence `{}`", fields[2])))?;
        rules.entry(head).or_default().push(Rule {
            body: RelationPath::new(body?),
            head,
            confidence: Some(confidence),
        });
    }
    Ok((rules, hash))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks_exact(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::akglg::{random_model, AkglgModel, GroupKind};
    use crate::kg::augment_inverses;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rid(i: u32) -> RelationId {
        RelationId(i)
    }

    #[test]
    fn single_relation_path_embeds_to_its_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let model = random_model(GroupKind::Circle, 8, 4, 3, &mut rng);
        let path = RelationPath::new(vec![rid(2)]);
        assert_eq!(path_embedding(&model, &path), model.relation_point(rid(2)));
    }

    #[test]
    fn line_path_embedding_adds() {
        let model = AkglgModel::new(
            GroupKind::Line,
            1,
            vec![1.0],
            vec![1.0, 1.0],
            vec![0.0],
            vec![0.2, 0.3],
            vec!["e".into()],
            vec!["r".into()],
            [0; 32],
            0,
        );
        let path = RelationPath::new(vec![rid(0), rid(1)]);
        let point = path_embedding(&model, &path);
        assert!((point.coord(0)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn circle_path_embedding_matches_complex_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = random_model(GroupKind::Circle, 16, 3, 4, &mut rng);
        for _ in 0..50 {
            let path = RelationPath::new(
                (0..3)
                    .map(|_| rid(rng.gen_range(0..model.num_relations_directed()) as u32))
                    .collect(),
            );
            let got = path_embedding(&model, &path);
            // Independent fold with explicit complex arithmetic.
            for i in 0..model.dim() {
                let mut acc = (1.0f64, 0.0f64);
                for r in path.relations() {
                    let c = model.relation_point(*r).coord(i);
                    acc = (acc.0 * c[0] - acc.1 * c[1], acc.0 * c[1] + acc.1 * c[0]);
                }
                let g = got.coord(i);
                assert!((g[0] - acc.0).abs() < 1e-12);
                assert!((g[1] - acc.1).abs() < 1e-12);
            }
        }
    }

    fn model_with_attentions(attns: Vec<(Vec<f64>, Vec<f64>)>) -> AkglgModel {
        // Circle model, dim from first attention, unit points everywhere.
        let dim = attns[0].0.len();
        let nr = attns.len();
        let mut relation_attention = Vec::new();
        for (fwd, bwd) in &attns {
            relation_attention.extend_from_slice(fwd);
            relation_attention.extend_from_slice(bwd);
        }
        let points = vec![[1.0, 0.0]; dim * 2 * nr]
            .into_iter()
            .flatten()
            .collect();
        AkglgModel::new(
            GroupKind::Circle,
            dim,
            vec![1.0; dim],
            relation_attention,
            vec![[1.0, 0.0]; dim].into_iter().flatten().collect(),
            points,
            vec!["e".into()],
            (0..nr).map(|i| format!("r{i}")).collect(),
            [0; 32],
            0,
        )
    }

    #[test]
    fn path_attention_geometric_mean_and_normalization() {
        let model = model_with_attentions(vec![
            (vec![4.0, 0.0], vec![1.0, 1.0]),
            (vec![1.0, 1.0], vec![1.0, 1.0]),
        ]);
        let path = RelationPath::new(vec![rid(0), rid(2)]);
        let attn = path_attention(&model, &path);
        assert!((attn[0] - 1.0).abs() < 1e-12);
        assert_eq!(attn[1], 0.0);
    }

    #[test]
    fn path_attention_single_relation_normalizes() {
        let model = model_with_attentions(vec![(vec![1.0, 1.0], vec![1.0, 1.0])]);
        let path = RelationPath::new(vec![rid(0)]);
        let attn = path_attention(&model, &path);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((attn[0] - inv_sqrt2).abs() < 1e-12);
        assert!((attn[1] - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn path_attention_zero_propagates_and_all_zero_is_zero_vector() {
        let model = model_with_attentions(vec![
            (vec![0.0, 0.0], vec![1.0, 1.0]),
            (vec![1.0, 1.0], vec![1.0, 1.0]),
        ]);
        let path = RelationPath::new(vec![rid(0), rid(2)]);
        let attn = path_attention(&model, &path);
        assert_eq!(attn, vec![0.0, 0.0]);
        let norm: f64 = attn.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_attention_norm_is_zero_or_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let model = random_model(GroupKind::Circle, 10, 2, 4, &mut rng);
            let len = rng.gen_range(1..=3);
            let path = RelationPath::new(
                (0..len)
                    .map(|_| rid(rng.gen_range(0..model.num_relations_directed()) as u32))
                    .collect(),
            );
            let attn = path_attention(&model, &path);
            let norm: f64 = attn.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(
                norm.abs() < 1e-12 || (norm - 1.0).abs() < 1e-12,
                "norm {norm}"
            );
        }
    }

    #[test]
    fn self_rule_confidence_is_sqrt_dim_for_unit_attention() {
        let model = model_with_attentions(vec![(vec![1.0, 1.0], vec![1.0, 1.0])]);
        let rule = Rule {
            body: RelationPath::new(vec![rid(0)]),
            head: rid(0),
            confidence: None,
        };
        let conf = rule_confidence(&model, &rule);
        assert!((conf - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_head_attention_annihilates_confidence() {
        let model = model_with_attentions(vec![
            (vec![1.0, 1.0], vec![1.0, 1.0]),
            (vec![0.0, 0.0], vec![1.0, 1.0]),
        ]);
        let rule = Rule {
            body: RelationPath::new(vec![rid(0)]),
            head: rid(2),
            confidence: None,
        };
        assert_eq!(rule_confidence(&model, &rule), 0.0);
    }

    #[test]
    fn confidence_matches_independent_formula_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for kind in [GroupKind::Sign, GroupKind::Circle, GroupKind::Line] {
            let model = random_model(kind, 12, 3, 5, &mut rng);
            for _ in 0..40 {
                let len = rng.gen_range(1..=3);
                let body: Vec<RelationId> = (0..len)
                    .map(|_| rid(rng.gen_range(0..model.num_relations_directed()) as u32))
                    .collect();
                let head = rid(rng.gen_range(0..model.num_relations_directed()) as u32);
                let rule = Rule {
                    body: RelationPath::new(body.clone()),
                    head,
                    confidence: None,
                };
                let got = rule_confidence(&model, &rule);

                // Straight-line reimplementation.
                let n = model.dim();
                let mut prod = vec![1.0; n];
                for r in &body {
                    for (p, w) in prod.iter_mut().zip(model.relation_attention(*r)) {
                        *p *= w;
                    }
                }
                for p in prod.iter_mut() {
                    *p = p.powf(1.0 / len as f64);
                }
                let norm = prod.iter().map(|p| p * p).sum::<f64>().sqrt();
                if norm > 0.0 {
                    prod.iter_mut().for_each(|p| *p /= norm);
                }
                let mut expect = 0.0;
                for (i, p) in prod.iter().enumerate() {
                    let mut acc = model.kind().identity();
                    for r in &body {
                        acc = model.kind().op(acc, model.relation_point(*r).coord(i));
                    }
                    let d = model
                        .kind()
                        .similarity(acc, model.relation_point(head).coord(i));
                    expect += p * model.relation_attention(head)[i] * d;
                }
                assert!(
                    (got - expect).abs() < 1e-12,
                    "{kind:?}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn self_rule_beats_rotated_head_on_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            // Two relations with equal strictly-positive attentions but
            // different points: the self-rule must win.
            let dim = 6;
            let attn: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..2.0)).collect();
            let mut relation_attention = Vec::new();
            for _ in 0..4 {
                relation_attention.extend_from_slice(&attn);
            }
            let mut points = Vec::new();
            let mut r0_points = Vec::new();
            for _ in 0..dim {
                let p = GroupKind::Circle.sample(&mut rng);
                r0_points.extend_from_slice(&p);
            }
            points.extend_from_slice(&r0_points); // r0 forward
            points.extend_from_slice(&r0_points); // r0 inverse slot, unused
            let mut r1_points = Vec::new();
            for i in 0..dim {
                let p = GroupKind::Circle.sample(&mut rng);
                // Force a genuinely different point in every coordinate.
                let q = [r0_points[2 * i], r0_points[2 * i + 1]];
                if (p[0] - q[0]).abs() + (p[1] - q[1]).abs() < 1e-3 {
                    r1_points.extend_from_slice(&[-q[0], -q[1]]);
                } else {
                    r1_points.extend_from_slice(&p);
                }
            }
            points.extend_from_slice(&r1_points);
            points.extend_from_slice(&r1_points);
            let model = AkglgModel::new(
                GroupKind::Circle,
                dim,
                vec![1.0; dim],
                relation_attention,
                vec![[1.0, 0.0]; dim].into_iter().flatten().collect(),
                points,
                vec!["e".into()],
                vec!["r0".into(), "r1".into()],
                [0; 32],
                0,
            );
            let self_rule = Rule {
                body: RelationPath::new(vec![rid(0)]),
                head: rid(0),
                confidence: None,
            };
            let cross_rule = Rule {
                body: RelationPath::new(vec![rid(0)]),
                head: rid(2),
                confidence: None,
            };
            assert!(rule_confidence(&model, &self_rule) >= rule_confidence(&model, &cross_rule));
        }
    }

    #[test]
    fn top_rules_sorted_and_truncated() {
        let body = |ids: &[u32]| RelationPath::new(ids.iter().map(|&i| rid(i)).collect());
        let rule = |b: &[u32], conf: f64| Rule {
            body: body(b),
            head: rid(0),
            confidence: Some(conf),
        };
        let rules = vec![rule(&[1], 2.0), rule(&[2], 1.0), rule(&[3], 3.0)];
        let top = select_top_rules(rules, 2);
        let list = &top[&rid(0)];
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].confidence, Some(3.0));
        assert_eq!(list[1].confidence, Some(2.0));
    }

    #[test]
    fn top_rules_undersupply_returns_all() {
        let rules: Vec<Rule> = (0..17)
            .map(|i| Rule {
                body: RelationPath::new(vec![rid(i + 1)]),
                head: rid(0),
                confidence: Some(i as f64),
            })
            .collect();
        let top = select_top_rules(rules, 1000);
        assert_eq!(top[&rid(0)].len(), 17);
    }

    #[test]
    fn top_rules_tie_break_prefers_shorter_bodies() {
        let rules = vec![
            Rule {
                body: RelationPath::new(vec![rid(1), rid(2)]),
                head: rid(0),
                confidence: Some(1.0),
            },
            Rule {
                body: RelationPath::new(vec![rid(3)]),
                head: rid(0),
                confidence: Some(1.0),
            },
        ];
        let top = select_top_rules(rules, 10);
        assert_eq!(top[&rid(0)][0].body.len(), 1);
    }

    #[test]
    fn rules_tsv_round_trip() {
        let kg = crate::kg::KnowledgeGraph::from_named_triples(&[("a", "r1", "b"), ("b", "r2", "c")]);
        let kg = augment_inverses(kg).unwrap();
        let r1 = kg.relation_id("r1").unwrap();
        let r2 = kg.relation_id("r2").unwrap();
        let rules = vec![
            Rule {
                body: RelationPath::new(vec![r1, r2.inverse()]),
                head: r1,
                confidence: Some(1.25),
            },
            Rule {
                body: RelationPath::new(vec![r2]),
                head: r1.inverse(),
                confidence: Some(-0.5),
            },
        ];
        let grouped = select_top_rules(rules, 10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.tsv");
        let hash = kg.fingerprint();
        write_rules_tsv(&path, &kg, &grouped, hash).unwrap();
        let (loaded, loaded_hash) = read_rules_tsv(&path, &kg).unwrap();
        assert_eq!(loaded_hash, Some(hash));
        assert_eq!(loaded, grouped);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("r1\tr1,INV:r2\t1.25"));
        assert!(text.contains("INV:r1\tr2\t-0.5"));
    }
}
