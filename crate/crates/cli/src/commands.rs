//! The four pipeline commands. Each writes its primary outputs into an
//! output directory guarded by a lock file and returns a report for the
//! caller to print.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use slimnas_core::datasets::{generate, LabeledSet};
use slimnas_core::evaluator::evaluate_supernet;
use slimnas_core::evolution::{default_baseline, SearchOutcome};
use slimnas_core::runlog::RunLog;
use slimnas_core::supernet::{train_standalone, train_supernet, SupernetWeights, TrainHistory};
use slimnas_core::{
    evaluate_cost, run_search, satisfies, ArchConfig, BackboneSkeleton, Cached, Evaluator, ResourceCost,
    SearchOptions, SupernetEvaluator, SurrogateEvaluator,
};

use crate::config::{EvaluatorKind, RunConfig};
use crate::error::CliError;
use crate::trends::{trends_from_log, TrendReport};

pub const WEIGHTS_FILE: &str = "supernet.snas";
pub const HISTORY_FILE: &str = "train_history.jsonl";
pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const SUMMARY_JSON: &str = "summary.json";
pub const RETRAIN_TXT: &str = "retrain.txt";
pub const RETRAIN_JSON: &str = "retrain.json";
pub const BEST_MODEL: &str = "best_model.snas";
pub const BEST_SKELETON: &str = "best_model.skeleton.json";
pub const TRENDS_TXT: &str = "trends.txt";
pub const TRENDS_JSON: &str = "trends.json";
const LOCK_FILE: &str = ".lock";

/// Exclusive use of an output directory for the lifetime of the value.
#[derive(Debug)]
pub struct OutDir {
    dir: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        let lock = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(OutDir {
                dir: dir.to_path_buf(),
                lock,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked {
                dir: dir.to_path_buf(),
                lock,
            }),
            Err(e) => Err(CliError::io(format!("creating {}", lock.display()))(e)),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(CliError::io(format!("writing {}", path.display())))?;
        Ok(path)
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} worker threads: {e}")))
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub weights: PathBuf,
    pub history: PathBuf,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub max_val_accuracy: f64,
    pub min_val_accuracy: f64,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trained {} epochs", self.epochs);
        if let Some(l) = self.final_loss {
            let _ = writeln!(s, "final summed sandwich loss {l:.4}");
        }
        let _ = writeln!(s, "val accuracy: full width {:.4}, narrowest {:.4}", self.max_val_accuracy, self.min_val_accuracy);
        let _ = writeln!(s, "weights: {}", self.weights.display());
        let _ = writeln!(s, "history: {}", self.history.display());
        s
    }
}

fn history_jsonl(history: &TrainHistory) -> String {
    let mut s = String::new();
    for e in &history.epochs {
        let _ = writeln!(s, "{}", serde_json::to_string(e).expect("epoch serializes"));
    }
    s
}

pub fn train_supernet_cmd(cfg: &RunConfig, out: &Path) -> Result<TrainReport, CliError> {
    let out = OutDir::acquire(out)?;
    let sk = &cfg.skeleton;
    let (train, val) = generate(&cfg.dataset)?;
    let init = SupernetWeights::init(sk, cfg.train.seed);
    let (weights, history) = train_supernet(init, sk, &train, &cfg.train)?;
    let weights_path = out.path(WEIGHTS_FILE);
    weights.save(&weights_path)?;
    let history_path = out.write(HISTORY_FILE, history_jsonl(&history))?;
    Ok(TrainReport {
        weights: weights_path,
        history: history_path,
        epochs: history.epochs.len(),
        final_loss: history.epochs.last().map(|e| e.total),
        max_val_accuracy: evaluate_supernet(&weights, sk, &ArchConfig::max(sk), &val)?.score(),
        min_val_accuracy: evaluate_supernet(&weights, sk, &ArchConfig::min(sk), &val)?.score(),
    })
}

// --------------------------------------------------------------- search

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub rank: usize,
    pub config: String,
    pub params: u64,
    pub flops: u64,
    pub fitness: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    pub run_id: String,
    pub evaluator: String,
    pub seed: u64,
    pub generations: usize,
    pub evaluations: usize,
    pub top_n: Vec<SummaryRow>,
}

impl SearchSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run {} (evaluator {}, seed {})", self.run_id, self.evaluator, self.seed);
        let _ = writeln!(s, "{} generations, {} evaluations", self.generations, self.evaluations);
        let width = self.top_n.iter().map(|r| r.config.len()).max().unwrap_or(0).max(6);
        let _ = writeln!(s, "{:>4}  {:<width$}  {:>10}  {:>12}  {:>8}", "rank", "config", "params", "flops", "fitness");
        for r in &self.top_n {
            let _ = writeln!(
                s,
                "{:>4}  {:<width$}  {:>10}  {:>12}  {:>8.6}",
                r.rank, r.config, r.params, r.flops, r.fitness
            );
        }
        s
    }
}

#[derive(Debug)]
pub struct SearchReport {
    pub summary: SearchSummary,
    pub log_path: PathBuf,
    pub outcome: SearchOutcome,
}

fn verify_top_n(sk: &BackboneSkeleton, cfg: &RunConfig, outcome: &SearchOutcome) -> Result<(), CliError> {
    for c in &outcome.top_n {
        let cost: ResourceCost = evaluate_cost(sk, &c.config)?;
        if cost != c.cost || !satisfies(&cost, &cfg.constraints) {
            return Err(CliError::Internal(format!(
                "top-n entry {} fails the post-hoc cost check ({cost})",
                c.config
            )));
        }
    }
    Ok(())
}

fn search_with<E: Evaluator>(cfg: &RunConfig, evaluator: &E) -> Result<SearchOutcome, CliError> {
    let sk = &cfg.skeleton;
    let ev = &cfg.evolution;
    let baseline = match cfg.baseline() {
        Some(b) => b,
        None => default_baseline(sk, &cfg.constraints, ev.seed, ev.max_sample_retries)?,
    };
    let options = SearchOptions {
        workers: cfg.workers,
        record_wall_time: cfg.record_wall_time,
    };
    let mut outcome = run_search(sk, &cfg.constraints, ev, evaluator, &baseline, options)?;
    outcome.log.header.config = Some(cfg.effective());
    Ok(outcome)
}

pub fn search_cmd(cfg: &RunConfig, weights: Option<&Path>, out: &Path) -> Result<SearchReport, CliError> {
    let sk = &cfg.skeleton;
    let outcome = match cfg.evaluator.kind {
        EvaluatorKind::Surrogate => {
            let ev = Cached::new(SurrogateEvaluator::new(sk.searchable_count(), cfg.evaluator.surrogate_seed));
            search_with(cfg, &ev)?
        }
        EvaluatorKind::Supernet => {
            let path = weights.ok_or_else(|| {
                CliError::Usage("supernet evaluation needs --weights (or set evaluator.kind = \"surrogate\")".into())
            })?;
            let w = SupernetWeights::load(path)?;
            let (_, val) = generate(&cfg.dataset)?;
            let ev = Cached::new(SupernetEvaluator::new(&w, sk, &val)?);
            search_with(cfg, &ev)?
        }
    };
    verify_top_n(sk, cfg, &outcome)?;

    let header = &outcome.log.header;
    let summary = SearchSummary {
        run_id: header.run_id.clone(),
        evaluator: header.evaluator.clone(),
        seed: header.seed,
        generations: cfg.evolution.epochs,
        evaluations: outcome.evaluations,
        top_n: outcome
            .top_n
            .iter()
            .enumerate()
            .map(|(i, c)| SummaryRow {
                rank: i + 1,
                config: c.config.encode(),
                params: c.cost.params,
                flops: c.cost.flops,
                fitness: c.fitness.score(),
            })
            .collect(),
    };

    let out = OutDir::acquire(out)?;
    let log_path = out.write(RUNLOG_FILE, outcome.log.to_jsonl())?;
    out.write(SUMMARY_TXT, summary.to_text())?;
    out.write(SUMMARY_JSON, json_pretty(&summary))?;
    Ok(SearchReport {
        summary,
        log_path,
        outcome,
    })
}

// -------------------------------------------------------------- retrain

#[derive(Debug, Clone, Serialize)]
pub struct RetrainRow {
    pub rank: usize,
    pub config: String,
    pub params: u64,
    pub flops: u64,
    pub val_accuracy: f64,
    /// Accuracy of the same architecture read from the supernet, when
    /// weights were supplied.
    pub inherited_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrainReport {
    pub warnings: Vec<String>,
    pub ranking: Vec<RetrainRow>,
    pub best_model: PathBuf,
}

impl RetrainReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self.ranking.iter().map(|r| r.config.len()).max().unwrap_or(0).max(6);
        let _ = writeln!(
            s,
            "{:>4}  {:<width$}  {:>10}  {:>12}  {:>8}  {:>9}",
            "rank", "config", "params", "flops", "val_acc", "inherited"
        );
        for r in &self.ranking {
            let inherited = r.inherited_accuracy.map_or_else(|| "-".into(), |a| format!("{a:.4}"));
            let _ = writeln!(
                s,
                "{:>4}  {:<width$}  {:>10}  {:>12}  {:>8.4}  {:>9}",
                r.rank, r.config, r.params, r.flops, r.val_accuracy, inherited
            );
        }
        let _ = writeln!(s, "best model: {}", self.best_model.display());
        s
    }
}

/// Splits a comma-separated `--archs` value.
pub fn parse_archs(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(String::from)
        .collect()
}

struct Retrained {
    config: ArchConfig,
    cost: ResourceCost,
    skeleton: BackboneSkeleton,
    weights: SupernetWeights,
    val_accuracy: f64,
    inherited: Option<f64>,
    final_loss: Option<f64>,
}

fn retrain_one(
    cfg: &RunConfig,
    config: &ArchConfig,
    train: &LabeledSet,
    val: &LabeledSet,
    supernet: Option<&SupernetWeights>,
) -> Result<Retrained, CliError> {
    let sk = &cfg.skeleton;
    let standalone = sk.materialize(config)?;
    let fixed = ArchConfig::max(&standalone);
    let init = SupernetWeights::init(&standalone, cfg.train.seed);
    let (weights, history) = train_standalone(init, &standalone, &fixed, train, &cfg.retrain_config())?;
    let val_accuracy = evaluate_supernet(&weights, &standalone, &fixed, val)?.score();
    let inherited = supernet
        .map(|w| evaluate_supernet(w, sk, config, val).map(|f| f.score()))
        .transpose()?;
    Ok(Retrained {
        config: config.clone(),
        cost: evaluate_cost(sk, config)?,
        skeleton: standalone,
        weights,
        val_accuracy,
        inherited,
        final_loss: history.epochs.last().map(|e| e.total),
    })
}

pub fn retrain_cmd(
    cfg: &RunConfig,
    archs: &[String],
    weights: Option<&Path>,
    out: &Path,
) -> Result<RetrainReport, CliError> {
    let sk = &cfg.skeleton;
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    let mut configs = Vec::new();
    for a in archs {
        let c = ArchConfig::decode(a, sk)?;
        if seen.insert(c.clone()) {
            configs.push(c);
        } else {
            warnings.push(format!("duplicate architecture {a} ignored"));
        }
    }
    if configs.is_empty() {
        return Err(CliError::Usage("no architectures to retrain".into()));
    }
    let supernet = weights.map(SupernetWeights::load).transpose()?;
    if let Some(w) = &supernet {
        w.check_skeleton(sk)?;
    }

    let out = OutDir::acquire(out)?;
    let (train, val) = generate(&cfg.dataset)?;
    let run = |c: &ArchConfig| retrain_one(cfg, c, &train, &val, supernet.as_ref());
    let mut results: Vec<Retrained> = if cfg.workers > 1 {
        pool(cfg.workers)?.install(|| configs.par_iter().map(run).collect::<Result<_, _>>())?
    } else {
        configs.iter().map(run).collect::<Result<_, _>>()?
    };
    results.sort_by(|a, b| {
        b.val_accuracy
            .total_cmp(&a.val_accuracy)
            .then(a.cost.params.cmp(&b.cost.params))
            .then(a.cost.flops.cmp(&b.cost.flops))
            .then_with(|| a.config.cmp(&b.config))
    });

    let best = &results[0];
    let best_model = out.path(BEST_MODEL);
    best.weights.save(&best_model)?;
    out.write(BEST_SKELETON, json_pretty(&best.skeleton))?;

    let report = RetrainReport {
        warnings,
        ranking: results
            .iter()
            .enumerate()
            .map(|(i, r)| RetrainRow {
                rank: i + 1,
                config: r.config.encode(),
                params: r.cost.params,
                flops: r.cost.flops,
                val_accuracy: r.val_accuracy,
                inherited_accuracy: r.inherited,
                final_loss: r.final_loss,
            })
            .collect(),
        best_model,
    };
    out.write(RETRAIN_TXT, report.to_text())?;
    out.write(RETRAIN_JSON, json_pretty(&report))?;
    Ok(report)
}

// --------------------------------------------------------------- trends

pub fn report_trends_cmd(log_path: &Path, out: Option<&Path>) -> Result<TrendReport, CliError> {
    let log = RunLog::read(log_path)?;
    let report = trends_from_log(&log)?;
    if let Some(dir) = out {
        let out = OutDir::acquire(dir)?;
        out.write(TRENDS_TXT, report.to_text())?;
        out.write(TRENDS_JSON, json_pretty(&report))?;
    }
    Ok(report)
}
