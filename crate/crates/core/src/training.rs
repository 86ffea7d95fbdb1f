//! Two-stage training: E_FM pre-training epochs without the FixMatch term,
//! then self-training epochs that re-select confident unlabeled inliers
//! before every epoch.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentSpec, OpenSetDataset, Strength, TrainingView};
use crate::dirichlet::top_m_evidence;
use crate::error::{Error, Result};
use crate::losses::{
    argmax, loss_anedl, softmax, LabeledOutputs, LossBreakdown, LossWeights, ObjectiveVariant, OneHot,
    UnlabeledOutputs,
};
use crate::metrics::{auroc, default_top_m, error_rate, score_inference, ScoredSample};
use crate::network::{NetworkShape, OptimizerConfig, OptimizerState, TwoHeadModel};

/// Uncertainty metric used to rank unlabeled samples for self-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// EDL evidence α_k̂ at the Softmax pseudo-label k̂.
    #[default]
    Calibrated,
    /// Sum of the top-M evidence entries (the inference score).
    TopM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub extractor: Vec<usize>,
    pub edl_hidden: Vec<usize>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self { extractor: vec![32, 16], edl_hidden: vec![32, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// E_FM: epochs trained without the FixMatch term.
    pub epochs_pretrain: usize,
    pub epochs_total: usize,
    pub steps_per_epoch: usize,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    /// Number of unlabeled samples selected as inliers; `None` means half the pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_o: Option<usize>,
    /// M for the top-M evidence score; `None` means ⌈K/2⌉.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_m: Option<usize>,
    pub selection: SelectionMetric,
    pub weights: LossWeights,
    pub variant: ObjectiveVariant,
    pub optimizer: OptimizerConfig,
    pub architecture: ArchitectureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_pretrain: 10,
            epochs_total: 40,
            steps_per_epoch: 64,
            batch_labeled: 64,
            batch_unlabeled: 128,
            top_o: None,
            top_m: None,
            selection: SelectionMetric::Calibrated,
            weights: LossWeights::default(),
            variant: ObjectiveVariant::default(),
            optimizer: OptimizerConfig::default(),
            architecture: ArchitectureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_classes: usize, unlabeled_len: usize) -> Result<()> {
        if self.epochs_pretrain > self.epochs_total {
            return Err(Error::Config(format!(
                "train.epochs_pretrain ({}) exceeds train.epochs_total ({})",
                self.epochs_pretrain, self.epochs_total
            )));
        }
        for (name, v) in [
            ("steps_per_epoch", self.steps_per_epoch),
            ("batch_labeled", self.batch_labeled),
            ("batch_unlabeled", self.batch_unlabeled),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be > 0")));
            }
        }
        if let Some(o) = self.top_o {
            if o > unlabeled_len {
                return Err(Error::Config(format!("train.top_o ({o}) exceeds the unlabeled pool ({unlabeled_len})")));
            }
        }
        if let Some(m) = self.top_m {
            if m == 0 || m > num_classes {
                return Err(Error::Config(format!("train.top_m ({m}) outside 1..={num_classes}")));
            }
        }
        self.weights.validate()?;
        self.optimizer.validate()
    }

    pub fn resolved_top_o(&self, unlabeled_len: usize) -> usize {
        self.top_o.unwrap_or(unlabeled_len / 2).min(unlabeled_len)
    }

    pub fn resolved_top_m(&self, num_classes: usize) -> usize {
        self.top_m.unwrap_or_else(|| default_top_m(num_classes))
    }

    pub fn network_shape(&self, input_dim: usize, num_classes: usize) -> NetworkShape {
        NetworkShape {
            input_dim,
            extractor: self.architecture.extractor.clone(),
            edl_hidden: self.architecture.edl_hidden.clone(),
            num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected unlabeled indices, best metric first.
    pub indices: Vec<usize>,
    /// Metric value for every unlabeled sample, in pool order.
    pub metrics: Vec<f64>,
}

/// Ranks the unlabeled pool by the selection metric and keeps the top `top_o`.
/// Ties are broken by the lower index.
pub fn select_inliers(
    model: &TwoHeadModel,
    unlabeled: &[Vec<f64>],
    top_o: usize,
    metric: SelectionMetric,
    top_m: usize,
) -> Result<SelectionResult> {
    let pass = model.forward(unlabeled)?;
    let metrics = pass
        .logits
        .iter()
        .zip(&pass.alpha)
        .map(|(logits, alpha)| match metric {
            SelectionMetric::Calibrated => Ok(alpha.alpha()[argmax(logits).0]),
            SelectionMetric::TopM => top_m_evidence(alpha, top_m),
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..metrics.len()).collect();
    order.sort_by(|&a, &b| metrics[b].total_cmp(&metrics[a]).then(a.cmp(&b)));
    order.truncate(top_o.min(metrics.len()));
    Ok(SelectionResult { indices: order, metrics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    SelfTraining,
}

/// One line of the per-epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epoch: usize,
    pub stage: Stage,
    /// Mean over the epoch's steps.
    pub losses: LossBreakdown,
    /// `None` when the split lacks inliers or outliers.
    pub test_auroc: Option<f64>,
    pub test_error_rate: f64,
    pub unlabeled_auroc: Option<f64>,
    pub selected: usize,
    /// Fraction of the selected samples that are true inliers (reporting only).
    pub selected_inlier_fraction: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `None` when the split lacks inliers or outliers.
    pub auroc: Option<f64>,
    pub error_rate: f64,
    pub scores: Vec<ScoredSample>,
}

/// Test-split AUROC (top-M evidence score) and inlier error rate (Softmax argmax).
pub fn evaluate_test(model: &TwoHeadModel, dataset: &OpenSetDataset, top_m: usize) -> Result<Evaluation> {
    evaluate_split(model, dataset.test_features(), &dataset.truth().test, top_m)
}

fn evaluate_split(
    model: &TwoHeadModel,
    xs: &[Vec<f64>],
    truth: &[crate::data::Truth],
    top_m: usize,
) -> Result<Evaluation> {
    let pass = model.forward(xs)?;
    let mut scores = Vec::with_capacity(xs.len());
    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    for ((logits, alpha), t) in pass.logits.iter().zip(&pass.alpha).zip(truth) {
        scores.push(ScoredSample { score: score_inference(alpha, top_m)?, is_inlier: t.is_inlier() });
        if let Some(c) = t.class() {
            preds.push(argmax(logits).0);
            labels.push(c);
        }
    }
    let auroc = if scores.iter().any(|s| s.is_inlier) && scores.iter().any(|s| !s.is_inlier) {
        Some(auroc(&scores)?)
    } else {
        None
    };
    Ok(Evaluation { auroc, error_rate: error_rate(&preds, &labels)?, scores })
}

/// Cycles through a permutation of `0..n`, reshuffling whenever it runs out.
#[derive(Debug, Clone)]
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, cursor: 0 }
    }

    fn reshuffle(&mut self, rng: &mut ChaCha8Rng) {
        self.order.shuffle(rng);
        self.cursor = 0;
    }

    fn batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.reshuffle(rng);
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Derives independent sub-seeds (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MODEL_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TwoHeadModel,
    pub optimizer: OptimizerState,
    pub reports: Vec<RunReport>,
    pub rng: ChaCha8Rng,
}

/// Loss breakdown and head gradients of a single optimization step.
struct StepResult {
    parts: LossBreakdown,
}

struct Trainer<'a> {
    view: TrainingView<'a>,
    config: &'a TrainConfig,
    augment: &'a AugmentSpec,
    model: TwoHeadModel,
    opt: OptimizerState,
    rng: ChaCha8Rng,
    labeled_sampler: Sampler,
    unlabeled_sampler: Sampler,
}

impl Trainer<'_> {
    fn step(&mut self, selected_mask: &[bool]) -> Result<StepResult> {
        let k = self.view.num_classes;
        let lab = self.labeled_sampler.batch(self.config.batch_labeled, &mut self.rng);
        let unl = self.unlabeled_sampler.batch(self.config.batch_unlabeled, &mut self.rng);

        let mut inputs = Vec::with_capacity(lab.len() + 2 * unl.len());
        for &i in &lab {
            inputs.push(augment(&self.view.labeled[i].x, Strength::Weak, self.augment, &mut self.rng));
        }
        for &i in &unl {
            inputs.push(augment(&self.view.unlabeled[i], Strength::Weak, self.augment, &mut self.rng));
        }
        for &i in &unl {
            inputs.push(augment(&self.view.unlabeled[i], Strength::Strong, self.augment, &mut self.rng));
        }
        let pass = self.model.forward(&inputs)?;

        let n_l = lab.len();
        let n_u = unl.len();
        let labeled = lab
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                Ok(LabeledOutputs {
                    logits: pass.logits[j].clone(),
                    alpha: pass.alpha[j].clone(),
                    label: OneHot::from_class(k, self.view.labeled[i].y)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let unlabeled: Vec<UnlabeledOutputs> = (0..n_u)
            .map(|j| UnlabeledOutputs {
                logits_weak: pass.logits[n_l + j].clone(),
                logits_strong: pass.logits[n_l + n_u + j].clone(),
                alpha_weak: pass.alpha[n_l + j].clone(),
                alpha_strong: pass.alpha[n_l + n_u + j].clone(),
            })
            .collect();
        let selected: Vec<usize> = unl.iter().enumerate().filter(|(_, &i)| selected_mask[i]).map(|(j, _)| j).collect();

        let loss = loss_anedl(&labeled, &selected, &unlabeled, &self.config.weights, &self.config.variant)?;
        if !loss.parts.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at step {}: {:?}",
                self.opt.step_count, loss.parts
            )));
        }

        let mut grad_logits = Vec::with_capacity(inputs.len());
        let mut grad_alpha = Vec::with_capacity(inputs.len());
        for g in loss.labeled {
            grad_logits.push(g.logits);
            grad_alpha.push(g.alpha);
        }
        let mut strong_logits = Vec::with_capacity(n_u);
        let mut strong_alpha = Vec::with_capacity(n_u);
        for g in loss.unlabeled {
            grad_logits.push(g.logits_weak);
            grad_alpha.push(g.alpha_weak);
            strong_logits.push(g.logits_strong);
            strong_alpha.push(g.alpha_strong);
        }
        grad_logits.extend(strong_logits);
        grad_alpha.extend(strong_alpha);

        let grads = self.model.backward(&pass, &grad_logits, &grad_alpha).map_err(|e| {
            Error::NonFinite(format!("step {}: {e}; losses {:?}", self.opt.step_count, loss.parts))
        })?;
        self.opt.step(&mut self.model, &grads)?;
        Ok(StepResult { parts: loss.parts })
    }
}

/// Runs the full two-stage schedule and returns the model with one report per epoch.
pub fn train(dataset: &OpenSetDataset, config: &TrainConfig, augment_spec: &AugmentSpec, seed: u64) -> Result<TrainOutcome> {
    train_with_observer(dataset, config, augment_spec, seed, |_| Ok(()))
}

/// [`train`], calling `observe` with each epoch's report as soon as it is ready.
pub fn train_with_observer<F>(
    dataset: &OpenSetDataset,
    config: &TrainConfig,
    augment_spec: &AugmentSpec,
    seed: u64,
    mut observe: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&RunReport) -> Result<()>,
{
    let view = dataset.training_view();
    let k = view.num_classes;
    config.validate(k, view.unlabeled.len())?;
    if view.labeled.is_empty() || view.unlabeled.is_empty() {
        return Err(Error::EmptyBatch("training needs labeled and unlabeled data"));
    }
    let top_o = config.resolved_top_o(view.unlabeled.len());
    let top_m = config.resolved_top_m(k);

    let model = TwoHeadModel::new(config.network_shape(view.dim, k), derive_seed(seed, MODEL_STREAM))?;
    let total_steps = (config.epochs_total * config.steps_per_epoch) as u64;
    let opt = OptimizerState::new(config.optimizer.clone(), total_steps, model.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TRAIN_STREAM));
    let labeled_sampler = Sampler::new(view.labeled.len(), &mut rng);
    let unlabeled_sampler = Sampler::new(view.unlabeled.len(), &mut rng);
    let mut trainer =
        Trainer { view, config, augment: augment_spec, model, opt, rng, labeled_sampler, unlabeled_sampler };

    let mut reports = Vec::with_capacity(config.epochs_total);
    for epoch in 1..=config.epochs_total {
        let stage = if epoch <= config.epochs_pretrain { Stage::Pretrain } else { Stage::SelfTraining };
        let mut mask = vec![false; view.unlabeled.len()];
        let mut selected_indices = Vec::new();
        if stage == Stage::SelfTraining {
            let sel = select_inliers(&trainer.model, view.unlabeled, top_o, config.selection, top_m)?;
            for &i in &sel.indices {
                mask[i] = true;
            }
            selected_indices = sel.indices;
        }
        let learning_rate = trainer.opt.current_learning_rate();

        let mut sums = LossBreakdown::default();
        for _ in 0..config.steps_per_epoch {
            let r = trainer.step(&mask).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch} ({stage:?}): {msg}")),
                other => other,
            })?;
            sums.ce += r.parts.ce;
            sums.fixmatch += r.parts.fixmatch;
            sums.ano += r.parts.ano;
            sums.con += r.parts.con;
            sums.total += r.parts.total;
        }
        let n = config.steps_per_epoch as f64;
        let losses = LossBreakdown {
            ce: sums.ce / n,
            fixmatch: sums.fixmatch / n,
            ano: sums.ano / n,
            con: sums.con / n,
            total: sums.total / n,
        };

        let test = evaluate_test(&trainer.model, dataset, top_m)?;
        let truth = &dataset.truth().unlabeled;
        let unlabeled_eval = evaluate_split(&trainer.model, dataset.unlabeled_features(), truth, top_m)?;
        let selected_inlier_fraction = (!selected_indices.is_empty()).then(|| {
            selected_indices.iter().filter(|&&i| truth[i].is_inlier()).count() as f64 / selected_indices.len() as f64
        });
        let report = RunReport {
            epoch,
            stage,
            losses,
            test_auroc: test.auroc,
            test_error_rate: test.error_rate,
            unlabeled_auroc: unlabeled_eval.auroc,
            selected: selected_indices.len(),
            selected_inlier_fraction,
            learning_rate,
        };
        observe(&report)?;
        reports.push(report);
    }

    Ok(TrainOutcome { model: trainer.model, optimizer: trainer.opt, reports, rng: trainer.rng })
}

/// Softmax-head class probabilities for a batch.
pub fn predict_proba(model: &TwoHeadModel, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(model.forward(xs)?.logits.iter().map(|l| softmax(l)).collect())
}
