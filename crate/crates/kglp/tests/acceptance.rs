//! Acceptance suite. One line per criterion is printed (run with
//! `cargo test --test acceptance -- --nocapture` to see them all).
//!
//! Criteria 1–5 are property checks against independent oracles and always
//! run. Criteria 6–10 reproduce benchmark numbers at desk scale and need
//! the datasets on disk: set `KGLP_DATA_DIR` (default `./data`) to a
//! directory containing `WN18RR/`, `FB15k-237/`, … with train.txt,
//! valid.txt and test.txt each; they report SKIP when the data is absent.
//! Criterion 9 is the extended dimension-trend run and is `#[ignore]`d by
//! default; run it with `cargo test --test acceptance -- --ignored`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use kglp::akglg::{
    self, random_model, score_equivalence_check, GroupKind, Objective, TrainConfig, Workspace,
};
use kglp::eval::{
    evaluate, filtered_candidates, rank_of, select_hyperparameters, EmbeddingScorer, FilterIndex,
    HyperPoint, PbfScorer, Query, QueryScorer, ReeScorer,
};
use kglp::grounding::path_targets;
use kglp::kg::{augment_inverses, to_simple_graph, EntityId, KnowledgeGraph, RelationId, Triple};
use kglp::pbf::{train_relation_model, CombineConfig, SrExample, SrTrainConfig};
use kglp::ree::{
    mine_candidate_rules, score_rules, select_top_rules, MiningConfig, RelationPath, Rule,
};

fn pass(criterion: &str, detail: String) {
    println!("criterion {criterion}: PASS — {detail}");
}

fn skip(criterion: &str, detail: String) {
    println!("criterion {criterion}: SKIP — {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: score identities AKGLG↔DistMult and AKGLG↔ComplEx.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_score_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for kind in [GroupKind::Sign, GroupKind::Circle] {
        let model = random_model(kind, 32, 50, 7, &mut rng);
        let report = score_equivalence_check(&model, 10_000, &mut rng);
        assert!(
            report.passes(1e-9),
            "{kind:?} identity broken: deviation {} at {:?}",
            report.max_abs_deviation,
            report.worst
        );
        worst = worst.max(report.max_abs_deviation);
    }
    pass(
        "1",
        format!("both identities hold over 10,000 triples each (max |dev| {worst:.3e} < 1e-9)"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: grounding multiplicities against brute-force enumeration.
// ---------------------------------------------------------------------------

/// Brute-force injective-walk count over the raw triple list; shares no code
/// with `grounding`.
fn oracle_mul(kg: &KnowledgeGraph, h: EntityId, path: &[RelationId]) -> HashMap<EntityId, u64> {
    fn recurse(
        kg: &KnowledgeGraph,
        at: EntityId,
        rest: &[RelationId],
        used: &mut Vec<EntityId>,
        out: &mut HashMap<EntityId, u64>,
    ) {
        let (r, tail) = rest.split_first().unwrap();
        for t in kg.train() {
            if t.head != at || t.relation != *r || used.contains(&t.tail) {
                continue;
            }
            if tail.is_empty() {
                *out.entry(t.tail).or_insert(0) += 1;
            } else {
                used.push(t.tail);
                recurse(kg, t.tail, tail, used, out);
                used.pop();
            }
        }
    }
    let mut out = HashMap::new();
    recurse(kg, h, path, &mut vec![h], &mut out);
    out
}

fn random_kg(rng: &mut ChaCha8Rng, max_entities: u32, max_raw_relations: u32) -> KnowledgeGraph {
    let ne = rng.gen_range(3..=max_entities);
    let nr = rng.gen_range(1..=max_raw_relations);
    let ntr = rng.gen_range(4..=(3 * ne));
    let triples: Vec<Triple> = (0..ntr)
        .map(|_| {
            Triple::new(
                EntityId(rng.gen_range(0..ne)),
                RelationId::forward(rng.gen_range(0..nr)),
                EntityId(rng.gen_range(0..ne)),
            )
        })
        .collect();
    let names = (0..ne).map(|i| format!("e{i}")).collect();
    let rels = (0..nr).map(|i| format!("r{i}")).collect();
    augment_inverses(KnowledgeGraph::from_parts(
        names,
        rels,
        triples,
        vec![],
        vec![],
        false,
    ))
    .unwrap()
}

#[test]
fn criterion_2_grounding_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut checks = 0usize;
    for _ in 0..200 {
        let kg = random_kg(&mut rng, 30, 5);
        let nr = kg.num_relations_directed() as u32;
        for _ in 0..5 {
            let h = EntityId(rng.gen_range(0..kg.num_entities() as u32));
            let len = rng.gen_range(1..=3);
            let path: Vec<RelationId> =
                (0..len).map(|_| RelationId(rng.gen_range(0..nr))).collect();
            let table = path_targets(&kg, h, &path);
            let expect = oracle_mul(&kg, h, &path);
            let got: HashMap<EntityId, u64> = table.iter().collect();
            assert_eq!(got, expect, "mul mismatch at h={h:?}, path={path:?}");
            checks += 1;
        }
    }
    pass(
        "2",
        format!("mul(h, ·, p) matches brute force on 200 random graphs ({checks} tables)"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: mining soundness/completeness and schedule independence.
// ---------------------------------------------------------------------------

/// Injective-walk existence over the raw triple list, independent of both
/// the miner and the grounding module.
fn oracle_walk_exists(
    kg: &KnowledgeGraph,
    from: EntityId,
    to: EntityId,
    body: &[RelationId],
    used: &mut Vec<EntityId>,
) -> bool {
    let (r, rest) = body.split_first().unwrap();
    for t in kg.train() {
        if t.head != from || t.relation != *r || used.contains(&t.tail) {
            continue;
        }
        if rest.is_empty() {
            if t.tail == to {
                return true;
            }
        } else if t.tail != to {
            used.push(t.tail);
            let found = oracle_walk_exists(kg, t.tail, to, rest, used);
            used.pop();
            if found {
                return true;
            }
        }
    }
    false
}

fn oracle_rules(kg: &KnowledgeGraph, max_len: usize) -> HashSet<(Vec<RelationId>, RelationId)> {
    let nr = kg.num_relations_directed() as u32;
    let mut bodies: Vec<Vec<RelationId>> = vec![Vec::new()];
    let mut all_bodies = Vec::new();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &bodies {
            for r in 0..nr {
                let mut body = prefix.clone();
                body.push(RelationId(r));
                next.push(body);
            }
        }
        all_bodies.extend(next.iter().cloned());
        bodies = next;
    }
    let mut out = HashSet::new();
    for body in &all_bodies {
        for head in 0..nr {
            let head = RelationId(head);
            if body.len() == 1 && body[0] == head {
                continue;
            }
            let grounded = kg.triples_of(head).iter().any(|t| {
                t.head != t.tail && oracle_walk_exists(kg, t.head, t.tail, body, &mut vec![t.head])
            });
            if grounded {
                out.insert((body.clone(), head));
            }
        }
    }
    out
}

#[test]
fn criterion_3_mining_oracle_and_schedule_independence() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for round in 0..100 {
        let kg = random_kg(&mut rng, 20, 3);
        let sg = to_simple_graph(&kg);
        let max_len = rng.gen_range(1..=3);
        let mut per_worker = Vec::new();
        for workers in [1, 4, 8] {
            let (rules, stats) = mine_candidate_rules(
                &kg,
                &sg,
                &MiningConfig {
                    max_body_len: max_len,
                    max_expansion_per_cycle: u64::MAX,
                    workers,
                },
            );
            per_worker.push((rules, stats));
        }
        assert_eq!(per_worker[0], per_worker[1], "round {round}: workers 1 vs 4");
        assert_eq!(per_worker[0], per_worker[2], "round {round}: workers 1 vs 8");
        let got: HashSet<(Vec<RelationId>, RelationId)> = per_worker[0]
            .0
            .iter()
            .map(|r| (r.body.relations().to_vec(), r.head))
            .collect();
        let expect = oracle_rules(&kg, max_len);
        assert_eq!(got, expect, "round {round}: rule sets differ (L={max_len})");
    }
    pass(
        "3",
        "mined rules equal brute-force grounding enumeration on 100 graphs, \
         identical for worker counts {1, 4, 8}"
            .to_string(),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic gradients against central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_gradient_checks() {
    // Embedding loss with the nuclear-3-norm regularizer.
    let kg = KnowledgeGraph::from_named_triples(&[
        ("a", "r", "b"),
        ("b", "s", "c"),
        ("c", "r", "d"),
        ("d", "s", "a"),
        ("a", "s", "c"),
    ]);
    let kg = augment_inverses(kg).unwrap();
    let examples = kg.train().to_vec();
    let mut worst_embedding = 0.0f64;
    for kind in [GroupKind::Sign, GroupKind::Circle, GroupKind::Line] {
        let objective = Objective::new(
            kind,
            4,
            kg.num_entities(),
            kg.num_relations_directed(),
            0.05,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let mut params = objective.init_params(0.5, &mut rng);
        let mut grad = objective.zero_params();
        let mut ws = Workspace::default();
        objective.loss_and_grad(&params, &examples, &mut grad, &mut ws);
        let eps = 1e-5;
        let n_ent = params.entities.len();
        let total = n_ent + params.relations.len();
        for idx in 0..total {
            let read = |p: &akglg::ParamSet| {
                if idx < n_ent {
                    p.entities[idx]
                } else {
                    p.relations[idx - n_ent]
                }
            };
            let write = |p: &mut akglg::ParamSet, v: f64| {
                if idx < n_ent {
                    p.entities[idx] = v;
                } else {
                    p.relations[idx - n_ent] = v;
                }
            };
            let orig = read(&params);
            write(&mut params, orig + eps);
            let up = objective.loss(&params, &examples, &mut ws);
            write(&mut params, orig - eps);
            let down = objective.loss(&params, &examples, &mut ws);
            write(&mut params, orig);
            let numeric = (up - down) / (2.0 * eps);
            let analytic = if idx < n_ent {
                grad.entities[idx]
            } else {
                grad.relations[idx - n_ent]
            };
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-4, "{kind:?} param {idx}: rel error {rel}");
            worst_embedding = worst_embedding.max(rel);
        }
    }

    // Softmax-regression loss.
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let examples: Vec<SrExample> = (0..10)
        .map(|_| SrExample {
            candidates: (0..5)
                .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect(),
        })
        .collect();
    let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut grad = vec![0.0; 4];
    kglp::pbf::sr_loss_and_grad(&theta, &examples, 0.01, &mut grad);
    let mut worst_sr = 0.0f64;
    let eps = 1e-6;
    for i in 0..theta.len() {
        let mut up = theta.clone();
        up[i] += eps;
        let mut down = theta.clone();
        down[i] -= eps;
        let numeric = (kglp::pbf::sr_loss(&up, &examples, 0.01)
            - kglp::pbf::sr_loss(&down, &examples, 0.01))
            / (2.0 * eps);
        let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-8);
        assert!(rel < 1e-4, "sr component {i}: rel error {rel}");
        worst_sr = worst_sr.max(rel);
    }
    pass(
        "4",
        format!(
            "gradients match central differences (embedding max rel {worst_embedding:.2e}, \
             regression max rel {worst_sr:.2e}, both < 1e-4)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: filtered evaluation protocol on a hand-built 10-triple store.
// ---------------------------------------------------------------------------

struct TableScorer {
    scores: HashMap<(EntityId, RelationId, EntityId), f64>,
}

impl QueryScorer for TableScorer {
    fn score(&self, query: &Query, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&e| {
                self.scores
                    .get(&(query.anchor, query.relation, e))
                    .copied()
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

#[test]
fn criterion_5_evaluation_protocol() {
    // Ten triples over entities a..e: six train, two valid, two test.
    let names: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
    let rels: Vec<String> = vec!["r".into(), "s".into()];
    let e = |i: u32| EntityId(i);
    let (a, b, c, d, ee) = (e(0), e(1), e(2), e(3), e(4));
    let r = RelationId::forward(0);
    let s = RelationId::forward(1);
    let train = vec![
        Triple::new(a, r, b),
        Triple::new(b, r, c),
        Triple::new(a, s, c),
        Triple::new(c, s, d),
        Triple::new(d, r, a),
        Triple::new(ee, r, b),
    ];
    let valid = vec![Triple::new(a, r, c), Triple::new(b, s, d)];
    let test = vec![Triple::new(a, r, d), Triple::new(ee, s, a)];
    let kg = KnowledgeGraph::from_parts(names, rels, train, valid, test, false);
    let kg = augment_inverses(kg).unwrap();
    let index = FilterIndex::build(&kg);

    let mut scores = HashMap::new();
    // (a, r, ?) target d: candidates {a, d, e} after filtering b, c; e
    // outranks d once.
    scores.insert((a, r, d), 2.0);
    scores.insert((a, r, ee), 3.0);
    scores.insert((a, r, a), 1.0);
    // (d, r⁻¹, ?) target a: nothing filtered, a wins outright.
    scores.insert((d, r.inverse(), a), 5.0);
    scores.insert((d, r.inverse(), ee), 2.0);
    scores.insert((d, r.inverse(), b), 1.0);
    scores.insert((d, r.inverse(), c), 1.0);
    // (e, s, ?) target a: three-way tie at the top, id tie-break ranks a 1st.
    scores.insert((ee, s, a), 2.0);
    scores.insert((ee, s, b), 2.0);
    scores.insert((ee, s, c), 2.0);
    // (a, s⁻¹, ?) target e: one strictly better candidate.
    scores.insert((a, s.inverse(), ee), 4.0);
    scores.insert((a, s.inverse(), b), 6.0);
    let scorer = TableScorer { scores };

    let report = evaluate(&scorer, &kg, &index, kg.test());
    // Hand-computed: filtered ranks are [2, 1, 1, 2].
    let ranks: Vec<Option<u32>> = report.records.iter().map(|rec| rec.rank).collect();
    assert_eq!(ranks, vec![Some(2), Some(1), Some(1), Some(2)]);
    assert_eq!(report.n_queries, 4);
    assert_eq!(report.mrr, 0.75);
    assert_eq!(report.hits1, 0.5);
    assert_eq!(report.hits3, 1.0);
    assert_eq!(report.hits10, 1.0);

    // Filtered rank never exceeds the raw rank on random cases.
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..100 {
        let kg = random_kg(&mut rng, 15, 3);
        let index = FilterIndex::build(&kg);
        let t = kg.train()[rng.gen_range(0..kg.train().len())];
        let (query, target) = Query::tail_of(&t);
        let all: Vec<EntityId> = (0..kg.num_entities() as u32).map(EntityId).collect();
        let scores: HashMap<(EntityId, RelationId, EntityId), f64> = all
            .iter()
            .map(|&cand| {
                (
                    (query.anchor, query.relation, cand),
                    rng.gen_range(0..6) as f64,
                )
            })
            .collect();
        let scorer = TableScorer { scores };
        let raw = rank_of(&all, &scorer.score(&query, &all), target);
        let filtered = filtered_candidates(&index, kg.num_entities(), &query, target);
        let frank = rank_of(&filtered, &scorer.score(&query, &filtered), target);
        assert!(frank <= raw, "filtered {frank} > raw {raw}");
    }
    pass(
        "5",
        "hand-computed MRR 0.75 / HITS@1 0.5 / HITS@3 1.0 reproduced exactly; \
         filtered ≤ raw on 100 random cases"
            .to_string(),
    );
}

// ---------------------------------------------------------------------------
// Always-run pipeline rehearsal at synthetic desk scale: the full chain the
// dataset-gated criteria drive, on a generated compositional graph.
// ---------------------------------------------------------------------------

/// Random chain-composition graph: r2 ∘ r1 edges imply an `r` edge, plus
/// uniform noise. Split into train/valid/test on the `r` facts.
fn synthetic_composition_kg(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let ne = 40u32;
    let mut train = Vec::new();
    let mut r_facts = Vec::new();
    let e = |i: u32| format!("n{i}");
    for i in 0..ne {
        let j = rng.gen_range(0..ne);
        let k = rng.gen_range(0..ne);
        if i != j {
            train.push((e(i), "r1".to_string(), e(j)));
        }
        if j != k {
            train.push((e(j), "r2".to_string(), e(k)));
        }
        if i != k && i != j && j != k {
            r_facts.push((e(i), "r".to_string(), e(k)));
        }
    }
    for _ in 0..20 {
        let i = rng.gen_range(0..ne);
        let j = rng.gen_range(0..ne);
        if i != j {
            train.push((e(i), "noise".to_string(), e(j)));
        }
    }
    r_facts.sort();
    r_facts.dedup();
    let n_test = (r_facts.len() / 5).max(1);
    let test_facts = r_facts.split_off(r_facts.len() - n_test);
    let valid_facts = r_facts.split_off(r_facts.len() - n_test.min(r_facts.len()));
    train.extend(r_facts);

    let to_triples = |facts: &[(String, String, String)],
                      emap: &mut Vec<String>,
                      rmap: &mut Vec<String>|
     -> Vec<Triple> {
        facts
            .iter()
            .map(|(h, r, t)| {
                let intern = |names: &mut Vec<String>, v: &str| -> u32 {
                    match names.iter().position(|n| n == v) {
                        Some(i) => i as u32,
                        None => {
                            names.push(v.to_string());
                            names.len() as u32 - 1
                        }
                    }
                };
                let hid = intern(emap, h);
                let rid = intern(rmap, r);
                let tid = intern(emap, t);
                Triple::new(EntityId(hid), RelationId::forward(rid), EntityId(tid))
            })
            .collect()
    };
    let mut emap = Vec::new();
    let mut rmap = Vec::new();
    let train_t = to_triples(&train, &mut emap, &mut rmap);
    let valid_t = to_triples(&valid_facts, &mut emap, &mut rmap);
    let test_t = to_triples(&test_facts, &mut emap, &mut rmap);
    augment_inverses(KnowledgeGraph::from_parts(
        emap, rmap, train_t, valid_t, test_t, false,
    ))
    .unwrap()
}

#[test]
fn synthetic_pipeline_rehearsal() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let kg = synthetic_composition_kg(&mut rng);
    let index = FilterIndex::build(&kg);

    // Stage 1: embeddings.
    let trained = akglg::train(
        &kg,
        GroupKind::Circle,
        &TrainConfig {
            dim: 24,
            reg_coeff: 0.01,
            learning_rate: 0.1,
            epochs: 80,
            batch_size: 64,
            seed: 5,
            init_scale: 1e-3,
        },
    )
    .unwrap();
    let model = &trained.model;
    let emb_scorer = EmbeddingScorer::new(model);
    let emb_test = evaluate(&emb_scorer, &kg, &index, kg.test());
    // Random guessing over ~40 filtered candidates has MRR near 0.1.
    assert!(
        emb_test.mrr > 0.2,
        "embedding scorer failed to learn: MRR {}",
        emb_test.mrr
    );

    // Stage 2: rules.
    let sg = to_simple_graph(&kg);
    let (candidates, _) = mine_candidate_rules(
        &kg,
        &sg,
        &MiningConfig {
            max_body_len: 2,
            ..MiningConfig::default()
        },
    );
    assert!(!candidates.is_empty());
    let scored = score_rules(model, candidates);
    let top = select_top_rules(scored, 1000);
    let ree_scorer = ReeScorer::new(&kg, &top);
    let ree_test = evaluate(&ree_scorer, &kg, &index, kg.test());
    assert!(
        ree_test.mrr > 0.2,
        "REE scorer failed to rank: MRR {}",
        ree_test.mrr
    );

    // The composition rule should sit near the top of r's list.
    let r = kg.relation_id("r").unwrap();
    let r1 = kg.relation_id("r1").unwrap();
    let r2 = kg.relation_id("r2").unwrap();
    let r_rules = &top[&r];
    let position = r_rules
        .iter()
        .position(|rule| rule.body.relations() == [r1, r2])
        .expect("composition rule was not mined");
    assert!(
        position < 20,
        "composition rule ranked too low: {position} of {}",
        r_rules.len()
    );

    // Stage 3: per-relation regression models.
    let sr_config = SrTrainConfig {
        num_batches: 200,
        seed: 5,
        ..SrTrainConfig::default()
    };
    let mut relation_models = HashMap::new();
    for (head, list) in &top {
        let mut seen = HashSet::new();
        let paths: Vec<RelationPath> = list
            .iter()
            .filter(|rule| seen.insert(rule.body.clone()))
            .take(100)
            .map(|rule| rule.body.clone())
            .collect();
        relation_models.insert(*head, train_relation_model(&kg, *head, paths, &sr_config));
    }

    // Stage 4: λ grid on validation, final report on test.
    let grid: Vec<HyperPoint> = CombineConfig::grid()
        .into_iter()
        .map(|lambda| HyperPoint {
            lambda,
            max_path_len: 2,
            learning_rate: sr_config.learning_rate,
            l2_coeff: sr_config.l2_coeff,
        })
        .collect();
    let (best, best_valid_mrr) = select_hyperparameters(&grid, |point| {
        let scorer = PbfScorer::new(&kg, model, &relation_models, point.lambda);
        evaluate(&scorer, &kg, &index, kg.valid()).mrr
    })
    .unwrap();
    let emb_valid = evaluate(&emb_scorer, &kg, &index, kg.valid()).mrr;
    assert!(
        best_valid_mrr >= emb_valid - 1e-12,
        "λ grid should never fall below the pure embedding point (λ = 1): {best_valid_mrr} < {emb_valid}"
    );
    let pbf_scorer = PbfScorer::new(&kg, model, &relation_models, grid[best].lambda);
    let pbf_test = evaluate(&pbf_scorer, &kg, &index, kg.test());
    assert!(pbf_test.mrr > 0.2);
    println!(
        "synthetic rehearsal: embedding MRR {:.3}, REE MRR {:.3}, PBF MRR {:.3} (λ {})",
        emb_test.mrr, ree_test.mrr, pbf_test.mrr, grid[best].lambda
    );
}

// ---------------------------------------------------------------------------
// Dataset-gated desk-scale criteria.
// ---------------------------------------------------------------------------

fn data_dir() -> PathBuf {
    std::env::var_os("KGLP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn load_benchmark(name: &str) -> Option<KnowledgeGraph> {
    let dir = data_dir().join(name);
    if !dir.is_dir() {
        return None;
    }
    let (kg, _) = kglp::kg::load_dataset(
        &dir.join("train.txt"),
        &dir.join("valid.txt"),
        &dir.join("test.txt"),
    )
    .unwrap_or_else(|e| panic!("failed to load {name}: {e}"));
    Some(augment_inverses(kg).unwrap())
}

#[test]
fn dataset_statistics_match_published_counts() {
    let mut any = false;
    for (name, entities, relations, train, valid, test) in [
        ("WN18", 40_943, 18, 141_442, 5_000, 5_000),
        ("WN18RR", 40_943, 11, 86_835, 3_034, 3_134),
        ("FB15k-237", 14_541, 237, 272_115, 17_535, 20_466),
    ] {
        let dir = data_dir().join(name);
        if !dir.is_dir() {
            skip("stats", format!("{name} not found under {}", data_dir().display()));
            continue;
        }
        any = true;
        let (kg, _) = kglp::kg::load_dataset(
            &dir.join("train.txt"),
            &dir.join("valid.txt"),
            &dir.join("test.txt"),
        )
        .unwrap();
        assert_eq!(kg.num_entities(), entities, "{name} entity count");
        assert_eq!(kg.num_relations_raw(), relations, "{name} relation count");
        assert_eq!(kg.train().len(), train, "{name} train triple count");
        assert_eq!(kg.valid().len(), valid, "{name} valid triple count");
        assert_eq!(kg.test().len(), test, "{name} test triple count");
        let augmented = augment_inverses(kg).unwrap();
        assert_eq!(augmented.num_relations_directed(), relations * 2);
        assert_eq!(augmented.train().len(), train * 2);
        pass("stats", format!("{name} counts match the published statistics"));
    }
    if !any {
        skip("stats", "no benchmark datasets mounted".to_string());
    }
}

/// Shared WN18RR artifacts for criteria 6–8.
struct Wn18rrRun {
    kg: KnowledgeGraph,
    index: FilterIndex,
    model: kglp::akglg::AkglgModel,
    emb_valid_mrr: f64,
    emb_test_mrr: f64,
}

fn run_wn18rr_embeddings(kg: KnowledgeGraph) -> Wn18rrRun {
    let index = FilterIndex::build(&kg);
    let config = TrainConfig {
        dim: 500,
        reg_coeff: 0.05,
        learning_rate: 0.1,
        epochs: 25,
        batch_size: 1000,
        seed: 1,
        init_scale: 1e-3,
    };
    let trained = akglg::train(&kg, GroupKind::Circle, &config).expect("training failed");
    let model = trained.model;
    let scorer = EmbeddingScorer::new(&model);
    let emb_valid_mrr = evaluate(&scorer, &kg, &index, kg.valid()).mrr;
    let emb_test_mrr = evaluate(&scorer, &kg, &index, kg.test()).mrr;
    Wn18rrRun {
        kg,
        index,
        model,
        emb_valid_mrr,
        emb_test_mrr,
    }
}

#[test]
fn criteria_6_7_8_wn18rr_desk_scale() {
    let Some(kg) = load_benchmark("WN18RR") else {
        for c in ["6", "7", "8"] {
            skip(c, format!("WN18RR not found under {}", data_dir().display()));
        }
        return;
    };

    // Criterion 6: CIRCLE embeddings, dim 500.
    let run = run_wn18rr_embeddings(kg);
    assert!(
        run.emb_test_mrr >= 0.45,
        "criterion 6 failed: embedding test MRR {} < 0.45",
        run.emb_test_mrr
    );
    pass(
        "6",
        format!("WN18RR ComplEx-form test MRR {:.4} ≥ 0.45", run.emb_test_mrr),
    );

    // Criterion 7: REE scorer, path limit selected from {1, 2, 3}.
    let sg = to_simple_graph(&run.kg);
    let (candidates, stats) = mine_candidate_rules(
        &run.kg,
        &sg,
        &MiningConfig {
            max_body_len: 3,
            ..MiningConfig::default()
        },
    );
    println!(
        "  mined {} candidates ({} cycles, {} skipped)",
        candidates.len(),
        stats.cycles_found,
        stats.cycles_skipped
    );
    let scored = score_rules(&run.model, candidates);
    let by_limit: Vec<(usize, BTreeMap<RelationId, Vec<Rule>>)> = [1usize, 2, 3]
        .iter()
        .map(|&limit| {
            let subset: Vec<Rule> = scored
                .iter()
                .filter(|rule| rule.body.len() <= limit)
                .cloned()
                .collect();
            (limit, select_top_rules(subset, 1000))
        })
        .collect();
    let grid: Vec<HyperPoint> = by_limit
        .iter()
        .map(|(limit, _)| HyperPoint {
            lambda: 0.0,
            max_path_len: *limit,
            learning_rate: 0.0,
            l2_coeff: 0.0,
        })
        .collect();
    let (chosen, chosen_valid) = select_hyperparameters(&grid, |point| {
        let rules = &by_limit
            .iter()
            .find(|(limit, _)| *limit == point.max_path_len)
            .unwrap()
            .1;
        let scorer = ReeScorer::new(&run.kg, rules);
        evaluate(&scorer, &run.kg, &run.index, run.kg.valid()).mrr
    })
    .unwrap();
    let best_rules = &by_limit[chosen].1;
    let ree_scorer = ReeScorer::new(&run.kg, best_rules);
    let ree_test = evaluate(&ree_scorer, &run.kg, &run.index, run.kg.test()).mrr;
    assert!(
        ree_test >= 0.40,
        "criterion 7 failed: REE test MRR {ree_test} < 0.40"
    );
    pass(
        "7",
        format!(
            "WN18RR REE test MRR {ree_test:.4} ≥ 0.40 (path limit {}, validation MRR {chosen_valid:.4})",
            by_limit[chosen].0
        ),
    );

    // Criterion 8: PBF with REE paths must beat the embedding baseline on
    // validation and reach 0.46 test MRR.
    let mut best: Option<(f64, f64, HashMap<RelationId, kglp::pbf::RelationModel>, f64)> = None;
    for &sr_lr in &[0.1, 0.01] {
        for &sr_l2 in &[0.01, 0.001] {
            let sr_config = SrTrainConfig {
                learning_rate: sr_lr,
                l2_coeff: sr_l2,
                seed: 1,
                ..SrTrainConfig::default()
            };
            use rayon::prelude::*;
            let models: HashMap<RelationId, kglp::pbf::RelationModel> = best_rules
                .iter()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|(head, list)| {
                    let mut seen = HashSet::new();
                    let paths: Vec<RelationPath> = list
                        .iter()
                        .filter(|rule| seen.insert(rule.body.clone()))
                        .take(100)
                        .map(|rule| rule.body.clone())
                        .collect();
                    (*head, train_relation_model(&run.kg, *head, paths, &sr_config))
                })
                .collect();
            for lambda in CombineConfig::grid() {
                let scorer = PbfScorer::new(&run.kg, &run.model, &models, lambda);
                let mrr = evaluate(&scorer, &run.kg, &run.index, run.kg.valid()).mrr;
                let better = best.as_ref().is_none_or(|(m, ..)| mrr > *m);
                if better {
                    best = Some((mrr, lambda, models.clone(), sr_lr));
                }
            }
        }
    }
    let (pbf_valid, lambda, models, _) = best.unwrap();
    assert!(
        pbf_valid >= run.emb_valid_mrr + 0.005,
        "criterion 8 failed: PBF validation MRR {pbf_valid} does not exceed embedding {} by 0.005",
        run.emb_valid_mrr
    );
    let scorer = PbfScorer::new(&run.kg, &run.model, &models, lambda);
    let pbf_test = evaluate(&scorer, &run.kg, &run.index, run.kg.test()).mrr;
    assert!(
        pbf_test >= 0.46,
        "criterion 8 failed: PBF test MRR {pbf_test} < 0.46"
    );
    pass(
        "8",
        format!(
            "WN18RR PBF validation MRR {pbf_valid:.4} ≥ embedding {:.4} + 0.005; \
             test MRR {pbf_test:.4} ≥ 0.46 (λ {lambda})",
            run.emb_valid_mrr
        ),
    );
}

#[test]
#[ignore = "extended: FB15k-237 dimension trend, hours of runtime"]
fn criterion_9_fb15k237_dimension_trend() {
    let Some(kg) = load_benchmark("FB15k-237") else {
        skip("9", format!("FB15k-237 not found under {}", data_dir().display()));
        return;
    };
    let index = FilterIndex::build(&kg);
    let sg = to_simple_graph(&kg);
    let (candidates, _) = mine_candidate_rules(
        &kg,
        &sg,
        &MiningConfig {
            max_body_len: 3,
            ..MiningConfig::default()
        },
    );
    let mut mrrs = Vec::new();
    for dim in [50usize, 100, 500] {
        let trained = akglg::train(
            &kg,
            GroupKind::Circle,
            &TrainConfig {
                dim,
                reg_coeff: 0.05,
                learning_rate: 0.1,
                epochs: 25,
                batch_size: 1000,
                seed: 1,
                init_scale: 1e-3,
            },
        )
        .expect("training failed");
        let scored = score_rules(&trained.model, candidates.clone());
        let top = select_top_rules(scored, 1000);
        let scorer = ReeScorer::new(&kg, &top);
        let mrr = evaluate(&scorer, &kg, &index, kg.test()).mrr;
        println!("  dim {dim}: REE test MRR {mrr:.4}");
        mrrs.push(mrr);
    }
    assert!(
        mrrs[1] >= mrrs[0] - 0.01 && mrrs[2] >= mrrs[1] - 0.01,
        "criterion 9 failed: MRRs {mrrs:?} are not nondecreasing within 0.01"
    );
    assert!(
        (mrrs[1] - 0.259).abs() <= 0.05,
        "criterion 9 failed: dim-100 MRR {} outside 0.259 ± 0.05",
        mrrs[1]
    );
    pass(
        "9",
        format!("FB15k-237 REE MRR trend {mrrs:?} nondecreasing; dim-100 within ±0.05 of 0.259"),
    );
}

#[test]
fn criterion_10_fb15k237_ree_speed() {
    let Some(kg) = load_benchmark("FB15k-237") else {
        skip("10", format!("FB15k-237 not found under {}", data_dir().display()));
        return;
    };
    // A small model suffices: the criterion times candidate scoring, not
    // training quality.
    let trained = akglg::train(
        &kg,
        GroupKind::Circle,
        &TrainConfig {
            dim: 100,
            reg_coeff: 0.05,
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 1000,
            seed: 1,
            init_scale: 1e-3,
        },
    )
    .expect("training failed");
    let sg = to_simple_graph(&kg);
    let start = Instant::now();
    let (candidates, stats) = mine_candidate_rules(
        &kg,
        &sg,
        &MiningConfig {
            max_body_len: 3,
            ..MiningConfig::default()
        },
    );
    let mined = start.elapsed();
    let scoring_start = Instant::now();
    let scored = score_rules(&trained.model, candidates);
    let scoring = scoring_start.elapsed();
    assert!(
        scoring.as_secs() < 1800,
        "criterion 10 failed: scoring {} rules took {scoring:?}",
        scored.len()
    );
    pass(
        "10",
        format!(
            "scored {} FB15k-237 candidates in {scoring:?} (< 30 min; mining took {mined:?}, \
             {} cycles skipped)",
            scored.len(),
            stats.cycles_skipped
        ),
    );
}
