//! Synthetic open-set data: K inlier Gaussians, J outlier Gaussians, and the
//! weak / strong feature-space augmentations.
//!
//! Training code only ever sees a [`TrainingView`]; the ground truth of the
//! unlabeled pool and of the test split is reachable through
//! [`OpenSetDataset::truth`] for evaluation.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    /// Per-coordinate dropout probability of the strong view.
    pub p_drop: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self { sigma_weak: 0.05, sigma_strong: 0.25, p_drop: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    pub dim: usize,
    pub inlier_means: Vec<Vec<f64>>,
    pub inlier_std: f64,
    pub outlier_means: Vec<Vec<f64>>,
    pub outlier_std: f64,
    /// Minimum distance between any outlier and any inlier center.
    pub min_separation: f64,
    pub labeled_per_class: usize,
    pub unlabeled_inliers: usize,
    pub unlabeled_outliers: usize,
    pub test_inliers: usize,
    pub test_outliers: usize,
    pub augment: AugmentSpec,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            inlier_means: vec![vec![2.0, 2.0], vec![2.0, -2.0], vec![-2.0, 2.0], vec![-2.0, -2.0]],
            inlier_std: 1.0,
            outlier_means: vec![vec![0.0, 0.0], vec![6.0, 0.0]],
            outlier_std: 0.5,
            min_separation: 2.0,
            labeled_per_class: 50,
            unlabeled_inliers: 1400,
            unlabeled_outliers: 600,
            test_inliers: 200,
            test_outliers: 200,
            augment: AugmentSpec::default(),
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl GenSpec {
    pub fn num_classes(&self) -> usize {
        self.inlier_means.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("data.dim must be > 0".into()));
        }
        if self.num_classes() < 2 {
            return Err(Error::Config("data.inlier_means needs at least 2 classes".into()));
        }
        for (name, means) in [("inlier_means", &self.inlier_means), ("outlier_means", &self.outlier_means)] {
            if let Some(m) = means.iter().find(|m| m.len() != self.dim || m.iter().any(|v| !v.is_finite())) {
                return Err(Error::Config(format!("data.{name}: center {m:?} is not a finite {}-vector", self.dim)));
            }
        }
        for (name, s) in [("inlier_std", self.inlier_std), ("outlier_std", self.outlier_std)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("data.{name} must be > 0, got {s}")));
            }
        }
        if self.labeled_per_class == 0 {
            return Err(Error::Config("data.labeled_per_class must be > 0".into()));
        }
        if self.unlabeled_inliers + self.unlabeled_outliers == 0 {
            return Err(Error::Config("data: the unlabeled pool is empty".into()));
        }
        if self.test_inliers == 0 {
            return Err(Error::Config("data.test_inliers must be > 0".into()));
        }
        if (self.unlabeled_outliers > 0 || self.test_outliers > 0) && self.outlier_means.is_empty() {
            return Err(Error::Config("data: outliers requested but outlier_means is empty".into()));
        }
        for o in &self.outlier_means {
            for m in &self.inlier_means {
                let d = distance(o, m);
                if d < self.min_separation {
                    return Err(Error::Config(format!(
                        "data: outlier center {o:?} is {d:.3} from inlier center {m:?} (< min_separation {})",
                        self.min_separation
                    )));
                }
            }
        }
        let a = &self.augment;
        if !(a.sigma_weak >= 0.0 && a.sigma_strong >= a.sigma_weak && a.sigma_strong.is_finite()) {
            return Err(Error::Config("data.augment: need 0 <= sigma_weak <= sigma_strong".into()));
        }
        if !(0.0..=1.0).contains(&a.p_drop) {
            return Err(Error::Config(format!("data.augment.p_drop must lie in [0, 1], got {}", a.p_drop)));
        }
        Ok(())
    }
}

/// Ground truth for an unlabeled or test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Inlier(usize),
    /// Index of the outlier cluster.
    Outlier(usize),
}

impl Truth {
    pub fn is_inlier(self) -> bool {
        matches!(self, Truth::Inlier(_))
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Truth::Inlier(c) => Some(c),
            Truth::Outlier(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: usize,
}

/// Evaluation-only ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HiddenTruth {
    pub unlabeled: Vec<Truth>,
    pub test: Vec<Truth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetDataset {
    num_classes: usize,
    dim: usize,
    labeled: Vec<LabeledSample>,
    unlabeled: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
    truth: HiddenTruth,
}

/// Everything the training loop may read.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    pub num_classes: usize,
    pub dim: usize,
    pub labeled: &'a [LabeledSample],
    pub unlabeled: &'a [Vec<f64>],
}

fn gaussian(rng: &mut ChaCha8Rng, mean: &[f64], std: f64) -> Vec<f64> {
    mean.iter().map(|m| m + std * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

impl OpenSetDataset {
    /// Draws the labeled, unlabeled and test splits. Deterministic in `seed`.
    pub fn generate(spec: &GenSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = spec.num_classes();
        let j = spec.outlier_means.len().max(1);

        let mut labeled = Vec::with_capacity(k * spec.labeled_per_class);
        for y in 0..k {
            for _ in 0..spec.labeled_per_class {
                labeled.push(LabeledSample { x: gaussian(&mut rng, &spec.inlier_means[y], spec.inlier_std), y });
            }
        }

        let draw = |rng: &mut ChaCha8Rng, n_in: usize, n_out: usize| {
            let mut rows: Vec<(Vec<f64>, Truth)> = Vec::with_capacity(n_in + n_out);
            for i in 0..n_in {
                let c = i % k;
                rows.push((gaussian(rng, &spec.inlier_means[c], spec.inlier_std), Truth::Inlier(c)));
            }
            for i in 0..n_out {
                let c = i % j;
                rows.push((gaussian(rng, &spec.outlier_means[c], spec.outlier_std), Truth::Outlier(c)));
            }
            rows.shuffle(rng);
            rows.into_iter().unzip::<_, _, Vec<_>, Vec<_>>()
        };
        let (unlabeled, unlabeled_truth) = draw(&mut rng, spec.unlabeled_inliers, spec.unlabeled_outliers);
        let (test, test_truth) = draw(&mut rng, spec.test_inliers, spec.test_outliers);

        Ok(Self {
            num_classes: k,
            dim: spec.dim,
            labeled,
            unlabeled,
            test,
            truth: HiddenTruth { unlabeled: unlabeled_truth, test: test_truth },
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labeled(&self) -> &[LabeledSample] {
        &self.labeled
    }

    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn test_features(&self) -> &[Vec<f64>] {
        &self.test
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView { num_classes: self.num_classes, dim: self.dim, labeled: &self.labeled, unlabeled: &self.unlabeled }
    }

    /// Ground truth of the unlabeled pool and the test split. Evaluation only.
    pub fn truth(&self) -> &HiddenTruth {
        &self.truth
    }

    pub fn unlabeled_features(&self) -> &[Vec<f64>] {
        &self.unlabeled
    }

    /// Writes `dataset.jsonl` (split-tagged features) and `truth.jsonl`
    /// (evaluation-only labels) into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut data = BufWriter::new(fs::File::create(dir.join(DATASET_FILE))?);
        let line = |r: &DataRecord| serde_json::to_string(r).expect("record serializes");
        writeln!(data, "{}", line(&DataRecord::Meta { num_classes: self.num_classes, dim: self.dim }))?;
        for s in &self.labeled {
            writeln!(data, "{}", line(&DataRecord::Labeled { x: s.x.clone(), y: s.y }))?;
        }
        for x in &self.unlabeled {
            writeln!(data, "{}", line(&DataRecord::Unlabeled { x: x.clone() }))?;
        }
        for x in &self.test {
            writeln!(data, "{}", line(&DataRecord::Test { x: x.clone() }))?;
        }
        data.flush()?;

        let mut truth = BufWriter::new(fs::File::create(dir.join(TRUTH_FILE))?);
        for (index, t) in self.truth.unlabeled.iter().enumerate() {
            let r = TruthRecord { split: Split::Unlabeled, index, truth: *t };
            writeln!(truth, "{}", serde_json::to_string(&r).expect("record serializes"))?;
        }
        for (index, t) in self.truth.test.iter().enumerate() {
            let r = TruthRecord { split: Split::Test, index, truth: *t };
            writeln!(truth, "{}", serde_json::to_string(&r).expect("record serializes"))?;
        }
        truth.flush()?;
        Ok(())
    }

    pub fn read_files(dir: &Path) -> Result<Self> {
        let path = dir.join(DATASET_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut meta = None;
        let (mut labeled, mut unlabeled, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let record: DataRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            match record {
                DataRecord::Meta { num_classes, dim } => meta = Some((num_classes, dim)),
                DataRecord::Labeled { x, y } => labeled.push(LabeledSample { x, y }),
                DataRecord::Unlabeled { x } => unlabeled.push(x),
                DataRecord::Test { x } => test.push(x),
            }
        }
        let (num_classes, dim) =
            meta.ok_or_else(|| Error::Config(format!("{}: missing meta record", path.display())))?;

        let path = dir.join(TRUTH_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut truth = HiddenTruth {
            unlabeled: vec![Truth::Outlier(usize::MAX); unlabeled.len()],
            test: vec![Truth::Outlier(usize::MAX); test.len()],
        };
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let r: TruthRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            let slot = match r.split {
                Split::Unlabeled => truth.unlabeled.get_mut(r.index),
                Split::Test => truth.test.get_mut(r.index),
            };
            *slot.ok_or_else(|| Error::Config(format!("{}:{}: index out of range", path.display(), n + 1)))? =
                r.truth;
        }

        let ds = Self { num_classes, dim, labeled, unlabeled, test, truth };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let rows = self.labeled.iter().map(|s| &s.x).chain(&self.unlabeled).chain(&self.test);
        if rows.into_iter().any(|x| x.len() != self.dim) {
            return Err(Error::Config(format!("dataset rows must have dimension {}", self.dim)));
        }
        if let Some(s) = self.labeled.iter().find(|s| s.y >= self.num_classes) {
            return Err(Error::Config(format!("labeled class {} >= K = {}", s.y, self.num_classes)));
        }
        if self.truth.unlabeled.iter().chain(&self.truth.test).any(|t| *t == Truth::Outlier(usize::MAX)) {
            return Err(Error::Config("truth sidecar does not cover every sample".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Split {
    Unlabeled,
    Test,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "split", rename_all = "snake_case", deny_unknown_fields)]
enum DataRecord {
    Meta { num_classes: usize, dim: usize },
    Labeled { x: Vec<f64>, y: usize },
    Unlabeled { x: Vec<f64> },
    Test { x: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthRecord {
    split: Split,
    index: usize,
    truth: Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Weak,
    Strong,
}

/// Weak: x + N(0, σ_w²). Strong: x + N(0, σ_s²), then each coordinate zeroed
/// with probability p_drop.
pub fn augment<R: Rng + ?Sized>(x: &[f64], strength: Strength, spec: &AugmentSpec, rng: &mut R) -> Vec<f64> {
    match strength {
        Strength::Weak => x.iter().map(|v| v + spec.sigma_weak * rng.sample::<f64, _>(StandardNormal)).collect(),
        Strength::Strong => x
            .iter()
            .map(|v| {
                let noisy = v + spec.sigma_strong * rng.sample::<f64, _>(StandardNormal);
                if rng.random::<f64>() < spec.p_drop {
                    0.0
                } else {
                    noisy
                }
            })
            .collect(),
    }
}

pub fn augment_seeded(x: &[f64], strength: Strength, spec: &AugmentSpec, seed: u64) -> Vec<f64> {
    augment(x, strength, spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Weak and strong views of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPair {
    pub weak: Vec<f64>,
    pub strong: Vec<f64>,
}

impl AugmentationPair {
    pub fn draw<R: Rng + ?Sized>(x: &[f64], spec: &AugmentSpec, rng: &mut R) -> Self {
        let weak = augment(x, Strength::Weak, spec, rng);
        let strong = augment(x, Strength::Strong, spec, rng);
        Self { weak, strong }
    }
}
