//! Batch pipeline driver: ingest TSV datasets, train embeddings, mine and
//! score rules, train per-relation regression models, and evaluate scorers
//! under the filtered protocol.
//!
//! Every stage stamps its output with the SHA-256 of the interned dataset,
//! and every consumer checks the stamp, so artifacts from different dataset
//! versions cannot be mixed silently. Exit codes: 0 success, 2 usage or
//! input error, 3 numeric failure.

mod config;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kglp::akglg::{self, AkglgModel, GroupKind, TrainError};
use kglp::eval::{
    evaluate, select_hyperparameters, EmbeddingScorer, FilterIndex, HyperPoint, PbfScorer,
    QueryScorer, RankingReport, ReeScorer,
};
use kglp::kg::{self, KnowledgeGraph, RelationId, Split};
use kglp::pbf::{train_relation_model, RelationModel, SrTrainConfig};
use kglp::ree::{self, mine_candidate_rules, MiningConfig, Rule};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "kglp", version, about = "Knowledge-graph link prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory containing train.txt, valid.txt and test.txt.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 keeps the runtime default).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train embeddings and write the model file plus a loss log.
    TrainEmbeddings {
        #[command(flatten)]
        common: CommonArgs,
        /// Group instance: sign, circle or line.
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        /// Nuclear-3-norm coefficient.
        #[arg(long)]
        reg: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Mine candidate rules, score them with REE and write the rules TSV.
    MineRules {
        #[command(flatten)]
        common: CommonArgs,
        /// Model file (defaults to <out>/model.akglg).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        max_path_len: Option<usize>,
        /// Rules kept per head relation.
        #[arg(long)]
        rules_per_relation: Option<usize>,
        #[arg(long)]
        expansion_cap: Option<u64>,
    },
    /// Train one softmax-regression model per relation from the rules TSV.
    TrainPbf {
        #[command(flatten)]
        common: CommonArgs,
        /// Rules TSV (defaults to <out>/rules.tsv).
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Paths used per relation.
        #[arg(long)]
        paths_per_relation: Option<usize>,
        #[arg(long)]
        sr_lr: Option<f64>,
        #[arg(long)]
        sr_l2: Option<f64>,
        #[arg(long)]
        sr_batches: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
    },
    /// Rank test (or validation) queries and write the metrics JSON.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scorer: embedding, ree or pbf.
        #[arg(long)]
        scorer: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Relation-model directory (defaults to <out>/pbf).
        #[arg(long)]
        pbf_dir: Option<PathBuf>,
        /// Mixing weight; when absent for pbf it is selected on validation.
        #[arg(long)]
        lambda: Option<f64>,
        /// Split to evaluate: test or valid.
        #[arg(long)]
        split: Option<String>,
        /// Optional per-query TSV dump.
        #[arg(long)]
        per_query: Option<PathBuf>,
    },
}

/// Stage failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

type StageResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::TrainEmbeddings {
            common,
            group,
            dim,
            reg,
            lr,
            epochs,
            batch_size,
        } => RunConfig::load(&common.config)
            .map(|mut c| {
                c.apply_common(&common);
                c.set_opt("group", group);
                c.set_opt("dim", dim.map(|v| v.to_string()));
                c.set_opt("reg", reg.map(|v| v.to_string()));
                c.set_opt("lr", lr.map(|v| v.to_string()));
                c.set_opt("epochs", epochs.map(|v| v.to_string()));
                c.set_opt("batch-size", batch_size.map(|v| v.to_string()));
                c
            })
            .and_then(|c| cmd_train_embeddings(&c)),
        Command::MineRules {
            common,
            model,
            max_path_len,
            rules_per_relation,
            expansion_cap,
        } => RunConfig::load(&common.config)
            .map(|mut c| {
                c.apply_common(&common);
                c.set_opt("model", model.map(|p| p.display().to_string()));
                c.set_opt("max-path-len", max_path_len.map(|v| v.to_string()));
                c.set_opt(
                    "rules-per-relation",
                    rules_per_relation.map(|v| v.to_string()),
                );
                c.set_opt("expansion-cap", expansion_cap.map(|v| v.to_string()));
                c
            })
            .and_then(|c| cmd_mine_rules(&c)),
        Command::TrainPbf {
            common,
            rules,
            paths_per_relation,
            sr_lr,
            sr_l2,
            sr_batches,
            negatives,
        } => RunConfig::load(&common.config)
            .map(|mut c| {
                c.apply_common(&common);
                c.set_opt("rules", rules.map(|p| p.display().to_string()));
                c.set_opt(
                    "paths-per-relation",
                    paths_per_relation.map(|v| v.to_string()),
                );
                c.set_opt("sr-lr", sr_lr.map(|v| v.to_string()));
                c.set_opt("sr-l2", sr_l2.map(|v| v.to_string()));
                c.set_opt("sr-batches", sr_batches.map(|v| v.to_string()));
                c.set_opt("negatives", negatives.map(|v| v.to_string()));
                c
            })
            .and_then(|c| cmd_train_pbf(&c)),
        Command::Evaluate {
            common,
            scorer,
            model,
            rules,
            pbf_dir,
            lambda,
            split,
            per_query,
        } => RunConfig::load(&common.config)
            .map(|mut c| {
                c.apply_common(&common);
                c.set_opt("scorer", scorer);
                c.set_opt("model", model.map(|p| p.display().to_string()));
                c.set_opt("rules", rules.map(|p| p.display().to_string()));
                c.set_opt("pbf-dir", pbf_dir.map(|p| p.display().to_string()));
                c.set_opt("lambda", lambda.map(|v| v.to_string()));
                c.set_opt("split", split);
                c.set_opt("per-query", per_query.map(|p| p.display().to_string()));
                c
            })
            .and_then(|c| cmd_evaluate(&c)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn setup_workers(config: &RunConfig) -> StageResult {
    let workers = config.usize_or("workers", 0)?;
    if workers > 0 {
        // The GEMM pool reads this once, before first use.
        std::env::set_var("MATMUL_NUM_THREADS", workers.to_string());
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::usage(format!("failed to set worker count: {e}")))?;
    }
    Ok(())
}

fn load_augmented(config: &RunConfig) -> Result<KnowledgeGraph, Failure> {
    let dataset = config.path("dataset")?;
    if !dataset.is_dir() {
        return Err(Failure::usage(format!(
            "dataset directory {} does not exist",
            dataset.display()
        )));
    }
    let (kg, stats) = kg::load_dataset(
        &dataset.join("train.txt"),
        &dataset.join("valid.txt"),
        &dataset.join("test.txt"),
    )
    .map_err(|e| Failure::usage(e.to_string()))?;
    let dropped: usize = stats.duplicates_dropped.iter().sum();
    if dropped > 0 {
        log::warn!("dropped {dropped} duplicate lines");
    }
    kg::augment_inverses(kg).map_err(|e| Failure::usage(e.to_string()))
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, Failure> {
    let out = config.path("out")?;
    fs::create_dir_all(&out)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn check_hash(kind: &str, artifact: [u8; 32], kg: &KnowledgeGraph) -> StageResult {
    if artifact != kg.fingerprint() {
        return Err(Failure::usage(format!(
            "{kind} was built from a different dataset (stale artifact mix)"
        )));
    }
    Ok(())
}

fn cmd_train_embeddings(config: &RunConfig) -> StageResult {
    setup_workers(config)?;
    let kg = load_augmented(config)?;
    let out = out_dir(config)?;
    let group = GroupKind::parse(&config.str_or("group", "circle"))
        .ok_or_else(|| Failure::usage("group must be sign, circle or line"))?;
    let train_config = akglg::TrainConfig {
        dim: config.usize_or("dim", 200)?,
        reg_coeff: config.f64_or("reg", 0.05)?,
        learning_rate: config.f64_or("lr", 0.1)?,
        epochs: config.usize_or("epochs", 25)?,
        batch_size: config.usize_or("batch-size", 1000)?,
        seed: config.u64_or("seed", 0)?,
        init_scale: config.f64_or("init-scale", 1e-3)?,
    };
    log::info!("training {group:?} embeddings: {kg}");
    let trained = akglg::train(&kg, group, &train_config).map_err(|e| match e {
        TrainError::Diverged { .. } => Failure::numeric(e.to_string()),
        other => Failure::usage(other.to_string()),
    })?;
    let model_path = out.join("model.akglg");
    trained
        .model
        .save(&model_path)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mut log_text = String::from("epoch\tmean_loss\n");
    for (epoch, loss) in trained.epoch_losses.iter().enumerate() {
        log_text.push_str(&format!("{epoch}\t{loss}\n"));
    }
    fs::write(out.join("train_log.tsv"), log_text).map_err(|e| Failure::usage(e.to_string()))?;
    log::info!("wrote {}", model_path.display());
    Ok(())
}

fn cmd_mine_rules(config: &RunConfig) -> StageResult {
    setup_workers(config)?;
    let kg = load_augmented(config)?;
    let out = out_dir(config)?;
    let model_path = config.path_or("model", &out.join("model.akglg"));
    let model = AkglgModel::load(&model_path).map_err(|e| Failure::usage(e.to_string()))?;
    check_hash("model", model.dataset_hash(), &kg)?;

    let mining = MiningConfig {
        max_body_len: config.usize_or("max-path-len", 3)?,
        max_expansion_per_cycle: config.u64_or("expansion-cap", 4096)?,
        workers: 0,
    };
    let sg = kg::to_simple_graph(&kg);
    let (candidates, stats) = mine_candidate_rules(&kg, &sg, &mining);
    log::info!(
        "mined {} candidate rules ({} cycles, {} skipped by the expansion cap)",
        candidates.len(),
        stats.cycles_found,
        stats.cycles_skipped
    );
    let scored = ree::score_rules(&model, candidates);
    let limit = config.usize_or("rules-per-relation", 1000)?;
    let top = ree::select_top_rules(scored, limit);
    let rules_path = out.join("rules.tsv");
    ree::write_rules_tsv(&rules_path, &kg, &top, kg.fingerprint())
        .map_err(|e| Failure::usage(e.to_string()))?;
    log::info!("wrote {}", rules_path.display());
    Ok(())
}

fn cmd_train_pbf(config: &RunConfig) -> StageResult {
    setup_workers(config)?;
    let kg = load_augmented(config)?;
    let out = out_dir(config)?;
    let rules_path = config.path_or("rules", &out.join("rules.tsv"));
    if !rules_path.is_file() {
        return Err(Failure::usage(format!(
            "rules file {} does not exist",
            rules_path.display()
        )));
    }
    let (rules, hash) =
        ree::read_rules_tsv(&rules_path, &kg).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(hash) = hash {
        check_hash("rules file", hash, &kg)?;
    }
    let paths_per_relation = config.usize_or("paths-per-relation", 100)?;
    let sr_config = SrTrainConfig {
        learning_rate: config.f64_or("sr-lr", 0.1)?,
        l2_coeff: config.f64_or("sr-l2", 0.01)?,
        batch_size: config.usize_or("sr-batch-size", 100)?,
        num_batches: config.usize_or("sr-batches", 500)?,
        negatives_per_positive: config.usize_or("negatives", 50)?,
        seed: config.u64_or("seed", 0)?,
    };
    let pbf_dir = out.join("pbf");
    fs::create_dir_all(&pbf_dir).map_err(|e| Failure::usage(e.to_string()))?;

    let jobs: Vec<(RelationId, Vec<kglp::ree::RelationPath>)> = rules
        .iter()
        .map(|(head, list)| (*head, paths_of(list, paths_per_relation)))
        .collect();
    use rayon::prelude::*;
    let models: Vec<RelationModel> = jobs
        .into_par_iter()
        .map(|(head, paths)| train_relation_model(&kg, head, paths, &sr_config))
        .collect();

    let hash = kg.fingerprint();
    let mut starved = Vec::new();
    for model in &models {
        let path = pbf_dir.join(format!("rel_{}.srm", model.relation.0));
        model
            .save(&path, hash)
            .map_err(|e| Failure::usage(e.to_string()))?;
        if model.feature_starved {
            starved.push(model.relation_name.clone());
        }
    }
    let summary = serde_json::json!({
        "dataset_sha256": hex(&hash),
        "relations_trained": models.len(),
        "feature_starved": starved,
        "paths_per_relation": paths_per_relation,
        "seed": sr_config.seed,
    });
    fs::write(
        pbf_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap(),
    )
    .map_err(|e| Failure::usage(e.to_string()))?;
    log::info!(
        "trained {} relation models ({} feature-starved)",
        models.len(),
        starved.len()
    );
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Unique body paths of the top rules, highest confidence first.
fn paths_of(rules: &[Rule], limit: usize) -> Vec<kglp::ree::RelationPath> {
    let mut seen = std::collections::HashSet::new();
    let mut paths = Vec::new();
    for rule in rules {
        if paths.len() == limit {
            break;
        }
        if seen.insert(rule.body.clone()) {
            paths.push(rule.body.clone());
        }
    }
    paths
}

fn cmd_evaluate(config: &RunConfig) -> StageResult {
    setup_workers(config)?;
    let kg = load_augmented(config)?;
    let out = out_dir(config)?;
    let scorer_name = config.str_or("scorer", "embedding");
    let split = match config.str_or("split", "test").as_str() {
        "test" => Split::Test,
        "valid" => Split::Valid,
        other => {
            return Err(Failure::usage(format!(
                "split must be test or valid, got `{other}`"
            )))
        }
    };
    let index = FilterIndex::build(&kg);
    let triples = kg.split(split).to_vec();

    let mut chosen_lambda = config.f64_opt("lambda")?;
    if let Some(lambda) = chosen_lambda {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Failure::usage("lambda must lie in [0, 1]"));
        }
    }
    let report = match scorer_name.as_str() {
        "embedding" => {
            let model = load_model(config, &out, &kg)?;
            run_eval(&EmbeddingScorer::new(&model), &kg, &index, &triples)?
        }
        "ree" => {
            let rules = load_rules(config, &out, &kg)?;
            run_eval(&ReeScorer::new(&kg, &rules), &kg, &index, &triples)?
        }
        "pbf" => {
            let model = load_model(config, &out, &kg)?;
            let relation_models = load_relation_models(config, &out, &kg)?;
            let lambda = match chosen_lambda {
                Some(l) => l,
                None => {
                    // Select λ on validation MRR over the declared grid.
                    let valid = kg.split(Split::Valid).to_vec();
                    let grid: Vec<HyperPoint> = kglp::pbf::CombineConfig::grid()
                        .into_iter()
                        .map(|lambda| HyperPoint {
                            lambda,
                            max_path_len: 0,
                            learning_rate: 0.0,
                            l2_coeff: 0.0,
                        })
                        .collect();
                    let (idx, mrr) = select_hyperparameters(&grid, |point| {
                        let scorer = PbfScorer::new(&kg, &model, &relation_models, point.lambda);
                        evaluate(&scorer, &kg, &index, &valid).mrr
                    })
                    .ok_or_else(|| Failure::usage("empty lambda grid"))?;
                    log::info!(
                        "selected lambda {} (validation MRR {mrr})",
                        grid[idx].lambda
                    );
                    grid[idx].lambda
                }
            };
            chosen_lambda = Some(lambda);
            let scorer = PbfScorer::new(&kg, &model, &relation_models, lambda);
            run_eval(&scorer, &kg, &index, &triples)?
        }
        other => {
            return Err(Failure::usage(format!(
                "scorer must be embedding, ree or pbf, got `{other}`"
            )))
        }
    };

    let mut echo: HashMap<String, String> = config.echo();
    if let Some(lambda) = chosen_lambda {
        echo.insert("lambda".into(), lambda.to_string());
    }
    let document = serde_json::json!({
        "dataset": config.path("dataset")?.display().to_string(),
        "scorer": scorer_name,
        "mrr": report.mrr,
        "hits1": report.hits1,
        "hits3": report.hits3,
        "hits10": report.hits10,
        "n_queries": report.n_queries,
        "config": echo,
        "seed": config.u64_or("seed", 0)?,
    });
    let json = serde_json::to_string_pretty(&document).unwrap();
    let metrics_path = out.join(format!("metrics_{scorer_name}.json"));
    fs::write(&metrics_path, &json).map_err(|e| Failure::usage(e.to_string()))?;
    println!("{json}");

    if let Some(per_query) = config.path_opt("per-query") {
        let mut text = String::from("anchor\trelation\ttarget\tdirection\trank\n");
        for r in &report.records {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                kg.entity_name(r.anchor),
                kg.relation_name(r.relation),
                kg.entity_name(r.target),
                match r.direction {
                    kglp::eval::Direction::Tail => "tail",
                    kglp::eval::Direction::Head => "head",
                },
                r.rank.map_or_else(|| "unranked".into(), |v| v.to_string()),
            ));
        }
        fs::write(&per_query, text).map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn run_eval<S: QueryScorer>(
    scorer: &S,
    kg: &KnowledgeGraph,
    index: &FilterIndex,
    triples: &[kglp::kg::Triple],
) -> Result<RankingReport, Failure> {
    let report = evaluate(scorer, kg, index, triples);
    if !report.mrr.is_finite() {
        return Err(Failure::numeric("non-finite MRR"));
    }
    Ok(report)
}

fn load_model(config: &RunConfig, out: &Path, kg: &KnowledgeGraph) -> Result<AkglgModel, Failure> {
    let path = config.path_or("model", &out.join("model.akglg"));
    let model = AkglgModel::load(&path).map_err(|e| Failure::usage(e.to_string()))?;
    check_hash("model", model.dataset_hash(), kg)?;
    Ok(model)
}

fn load_rules(
    config: &RunConfig,
    out: &Path,
    kg: &KnowledgeGraph,
) -> Result<std::collections::BTreeMap<RelationId, Vec<Rule>>, Failure> {
    let path = config.path_or("rules", &out.join("rules.tsv"));
    let (rules, hash) = ree::read_rules_tsv(&path, kg).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(hash) = hash {
        check_hash("rules file", hash, kg)?;
    }
    Ok(rules)
}

fn load_relation_models(
    config: &RunConfig,
    out: &Path,
    kg: &KnowledgeGraph,
) -> Result<HashMap<RelationId, RelationModel>, Failure> {
    let dir = config.path_or("pbf-dir", &out.join("pbf"));
    if !dir.is_dir() {
        return Err(Failure::usage(format!(
            "relation-model directory {} does not exist",
            dir.display()
        )));
    }
    let mut models = HashMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Failure::usage(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "srm"))
        .collect();
    entries.sort();
    for path in entries {
        let (model, hash) =
            RelationModel::load(&path).map_err(|e| Failure::usage(e.to_string()))?;
        check_hash("relation model", hash, kg)?;
        models.insert(model.relation, model);
    }
    Ok(models)
}
