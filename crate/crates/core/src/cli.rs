//! Run configuration and the subcommands behind the `anedl` binary.
//!
//! Config files are TOML. Every section is optional and falls back to the
//! defaults below; `seed` is required and unknown keys are rejected.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GenSpec, OpenSetDataset};
use crate::error::{Error, Result};
use crate::losses::{KlMode, NegativeMode};
use crate::metrics::{score_histogram, ScoreHistogram};
use crate::network::Checkpoint;
use crate::training::{evaluate_test, train_with_observer, RunReport, SelectionMetric, TrainConfig};

pub const LOG_FILE: &str = "log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const ABLATION_SEEDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory holding `dataset.jsonl` and `truth.jsonl`.
    pub dataset: PathBuf,
    /// Directory for logs, checkpoints and tables.
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { dataset: "runs/default/data".into(), output: "runs/default".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { histogram_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub data: GenSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            paths: PathsConfig::default(),
            data: GenSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        let unlabeled = self.data.unlabeled_inliers + self.data.unlabeled_outliers;
        self.train.validate(self.data.num_classes(), unlabeled)
    }
}

/// Split sizes printed by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub labeled: usize,
    pub unlabeled: usize,
    pub unlabeled_outliers: usize,
    pub test: usize,
    pub test_outliers: usize,
}

pub fn cmd_generate(cfg: &RunConfig, out_dir: &Path) -> Result<SplitSizes> {
    let ds = OpenSetDataset::generate(&cfg.data, cfg.seed)?;
    ds.write_files(out_dir)?;
    Ok(SplitSizes {
        labeled: ds.labeled().len(),
        unlabeled: ds.unlabeled_len(),
        unlabeled_outliers: ds.truth().unlabeled.iter().filter(|t| !t.is_inlier()).count(),
        test: ds.test_features().len(),
        test_outliers: ds.truth().test.iter().filter(|t| !t.is_inlier()).count(),
    })
}

fn load_dataset(cfg: &RunConfig) -> Result<OpenSetDataset> {
    OpenSetDataset::read_files(&cfg.paths.dataset).map_err(|e| {
        Error::Io(format!("cannot load dataset from {} ({e}); run `anedl generate` first", cfg.paths.dataset.display()))
    })
}

/// Trains on the dataset at `paths.dataset`, streaming one JSON line per
/// epoch to `<output>/log.jsonl` and writing `<output>/checkpoint.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<RunReport>> {
    let ds = load_dataset(cfg)?;
    fs::create_dir_all(&cfg.paths.output)?;
    let mut log = fs::File::create(cfg.paths.output.join(LOG_FILE))?;
    let outcome = train_with_observer(&ds, &cfg.train, &cfg.data.augment, cfg.seed, |r| {
        let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(log, "{line}")?;
        Ok(())
    })?;
    log.flush()?;
    let ck = Checkpoint::new(&outcome.model, &outcome.optimizer, &outcome.rng, outcome.reports.len());
    ck.save(&cfg.paths.output.join(CHECKPOINT_FILE))?;
    Ok(outcome.reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub m: usize,
    pub num_classes: usize,
    /// `None` when the test split lacks inliers or outliers.
    pub auroc: Option<f64>,
    pub error_rate: f64,
    pub inliers: usize,
    pub outliers: usize,
    pub histogram: ScoreHistogram,
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, m: Option<usize>) -> Result<EvalSummary> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_dataset(cfg)?;
    eval_checkpoint(cfg, &ck, &ds, m)
}

fn eval_checkpoint(cfg: &RunConfig, ck: &Checkpoint, ds: &OpenSetDataset, m: Option<usize>) -> Result<EvalSummary> {
    let model = ck.model()?;
    let k = model.num_classes();
    if k != ds.num_classes() {
        return Err(Error::DimensionMismatch { expected: ds.num_classes(), got: k });
    }
    if ck.shape.input_dim != ds.dim() {
        return Err(Error::DimensionMismatch { expected: ds.dim(), got: ck.shape.input_dim });
    }
    let m = m.unwrap_or_else(|| cfg.train.resolved_top_m(k));
    if m == 0 || m > k {
        return Err(Error::OutOfRange(format!("M = {m} outside 1..={k}")));
    }
    let ev = evaluate_test(&model, ds, m)?;
    Ok(EvalSummary {
        m,
        num_classes: k,
        auroc: ev.auroc,
        error_rate: ev.error_rate,
        inliers: ev.scores.iter().filter(|s| s.is_inlier).count(),
        outliers: ev.scores.iter().filter(|s| !s.is_inlier).count(),
        histogram: score_histogram(&ev.scores, cfg.eval.histogram_bins),
    })
}

/// M ∈ {1, K/4, K/2, K}, rounded up and deduplicated.
pub fn sweep_values(k: usize) -> Vec<usize> {
    let mut ms: Vec<usize> = [1, k.div_ceil(4), k.div_ceil(2), k].into_iter().map(|m| m.clamp(1, k)).collect();
    ms.dedup();
    ms
}

pub fn cmd_sweep(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<EvalSummary>> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_dataset(cfg)?;
    sweep_values(ck.shape.num_classes).into_iter().map(|m| eval_checkpoint(cfg, &ck, &ds, Some(m))).collect()
}

/// One cell of the ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub config: RunConfig,
}

fn negative_name(mode: NegativeMode) -> &'static str {
    match mode {
        NegativeMode::Adaptive => "ano",
        NegativeMode::Uniform => "no_without_adaptive",
        NegativeMode::Off => "neither",
    }
}

/// {ANO, NO without adaptive weight, neither} × {KL-ORI, KL β₁₀₀, KL β₂₀₀}
/// × {calibrated, top-M selection}, every other setting copied from `base`.
pub fn ablation_grid(base: &RunConfig) -> Vec<AblationCell> {
    let mut cells = Vec::new();
    for negative in [NegativeMode::Adaptive, NegativeMode::Uniform, NegativeMode::Off] {
        for (kl, p) in [(KlMode::Original, None), (KlMode::Strengthened, Some(100.0)), (KlMode::Strengthened, Some(200.0))] {
            for selection in [SelectionMetric::Calibrated, SelectionMetric::TopM] {
                let mut config = base.clone();
                config.train.variant.negative = negative;
                config.train.variant.kl = kl;
                if let Some(p) = p {
                    config.train.weights.target_p = p;
                }
                config.train.selection = selection;
                let kl_name = match p {
                    None => "kl_ori".to_string(),
                    Some(p) => format!("kl_beta{p}"),
                };
                let sel_name = match selection {
                    SelectionMetric::Calibrated => "calibrated",
                    SelectionMetric::TopM => "top_m",
                };
                cells.push(AblationCell { name: format!("{}/{kl_name}/{sel_name}", negative_name(negative)), config });
            }
        }
    }
    cells
}

/// Dotted paths of every leaf that differs between two configs.
pub fn config_diff(a: &RunConfig, b: &RunConfig) -> Vec<String> {
    fn walk(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        use serde_json::Value;
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&path, x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), out);
                }
            }
            _ if a != b => out.push(prefix.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    let a = serde_json::to_value(a).expect("config serializes");
    let b = serde_json::to_value(b).expect("config serializes");
    walk("", &a, &b, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub negative: String,
    pub kl: String,
    pub target_p: f64,
    pub selection: String,
    pub seeds: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub error_rate_mean: f64,
    pub error_rate_std: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Final-epoch test AUROC and error rate of one seeded run. The dataset is
/// generated from the same seed as the model.
pub fn run_once(cfg: &RunConfig, seed: u64) -> Result<(f64, f64)> {
    let ds = OpenSetDataset::generate(&cfg.data, seed)?;
    let outcome = train_with_observer(&ds, &cfg.train, &cfg.data.augment, seed, |_| Ok(()))?;
    let last = outcome.reports.last().ok_or_else(|| Error::Config("train.epochs_total must be > 0".into()))?;
    let auroc = last
        .test_auroc
        .ok_or_else(|| Error::Config("ablation needs test outliers to compute AUROC".into()))?;
    Ok((auroc, last.test_error_rate))
}

/// Runs the given cells over seeds `seed, seed+1, …` in parallel and
/// aggregates them in cell order.
pub fn run_ablation(cells: &[AblationCell], seeds: usize) -> Result<Vec<AblationRow>> {
    let jobs: Vec<(usize, u64)> =
        (0..cells.len()).flat_map(|c| (0..seeds as u64).map(move |s| (c, s))).collect();
    let results: Vec<Result<(f64, f64)>> =
        jobs.par_iter().map(|&(c, s)| run_once(&cells[c].config, cells[c].config.seed + s)).collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(cells
        .iter()
        .zip(results.chunks(seeds))
        .map(|(cell, runs)| {
            let aurocs: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let errors: Vec<f64> = runs.iter().map(|r| r.1).collect();
            let (auroc_mean, auroc_std) = mean_std(&aurocs);
            let (error_rate_mean, error_rate_std) = mean_std(&errors);
            let v = &cell.config.train.variant;
            AblationRow {
                cell: cell.name.clone(),
                negative: negative_name(v.negative).into(),
                kl: match v.kl {
                    KlMode::Original => "original".into(),
                    KlMode::Strengthened => "strengthened".into(),
                },
                target_p: cell.config.train.weights.target_p,
                selection: match cell.config.train.selection {
                    SelectionMetric::Calibrated => "calibrated".into(),
                    SelectionMetric::TopM => "top_m".into(),
                },
                seeds: runs.len(),
                auroc_mean,
                auroc_std,
                error_rate_mean,
                error_rate_std,
            }
        })
        .collect())
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the full grid, writing `<output>/ablation.csv` and the per-cell
/// configs to `<output>/ablation_configs.json`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    let cells = ablation_grid(cfg);
    fs::create_dir_all(&cfg.paths.output)?;
    let configs = serde_json::to_string_pretty(&cells).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(cfg.paths.output.join("ablation_configs.json"), configs + "\n")?;
    let rows = run_ablation(&cells, ABLATION_SEEDS)?;
    write_ablation_csv(&rows, &cfg.paths.output.join("ablation.csv"))?;
    Ok(rows)
}
