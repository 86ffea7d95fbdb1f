//! Objective terms for the two heads.
//!
//! EDL-side terms are functions of the concentration vector α and return
//! ∂loss/∂α; Softmax-side terms are functions of logits and return
//! ∂loss/∂logits. All gradients are closed-form.

use serde::{Deserialize, Serialize};

use crate::dirichlet::{fim_logdet_with_grad, kl_dirichlet, ConcentrationVector};
use crate::error::{Error, Result};
use crate::specfn::raw::{digamma, tetragamma, trigamma};

/// A scalar loss and its gradient with respect to α (or logits).
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossValue {
    fn zero(k: usize) -> Self {
        Self { value: 0.0, grad: vec![0.0; k] }
    }
}

/// A one-hot label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    k: usize,
    class: usize,
}

impl OneHot {
    pub fn from_class(k: usize, class: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::NotOneHot(format!("class {class} >= K = {k}")));
        }
        Ok(Self { k, class })
    }

    pub fn new(y: &[f64]) -> Result<Self> {
        let ones: Vec<usize> = y.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
        let zeros = y.iter().filter(|v| **v == 0.0).count();
        if ones.len() != 1 || zeros + 1 != y.len() {
            return Err(Error::NotOneHot(format!("{y:?}")));
        }
        Ok(Self { k: y.len(), class: ones[0] })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.k];
        y[self.class] = 1.0;
        y
    }

    fn at(&self, k: usize) -> f64 {
        if k == self.class {
            1.0
        } else {
            0.0
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if self.k == k {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: k, got: self.k })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the Fisher log-determinant in the negative (unlabeled) loss.
    pub lambda1: f64,
    /// Weight of the Fisher log-determinant in the positive (labeled) loss.
    pub lambda2: f64,
    pub lambda_pedl: f64,
    pub lambda_nedl: f64,
    pub lambda_con: f64,
    /// Target concentration P at the true class for labeled KL.
    pub target_p: f64,
    /// FixMatch confidence threshold τ. τ = 1 disables pseudo-labeling.
    pub fixmatch_threshold: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            lambda_pedl: 1.0,
            lambda_nedl: 1.0,
            lambda_con: 0.05,
            target_p: 100.0,
            fixmatch_threshold: 0.95,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_pedl", self.lambda_pedl),
            ("lambda_nedl", self.lambda_nedl),
            ("lambda_con", self.lambda_con),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("weights.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.target_p.is_finite() || self.target_p < 1.0 {
            return Err(Error::Config(format!("weights.target_p must be >= 1, got {}", self.target_p)));
        }
        let tau = self.fixmatch_threshold;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("weights.fixmatch_threshold must lie in (0, 1], got {tau}")));
        }
        Ok(())
    }
}

/// How the unlabeled negative term is formed (ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Trigamma-weighted negative optimization.
    #[default]
    Adaptive,
    /// Negative optimization with every ψ⁽¹⁾(α_k) weight replaced by 1.
    Uniform,
    /// No unlabeled term; labeled data gets the classical EDL squared-error loss.
    Off,
}

/// KL regularizer applied to labeled samples (ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// KL to (1, …, P, …, 1).
    #[default]
    Strengthened,
    /// KL of the misleading-evidence vector to the uniform Dirichlet.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveVariant {
    pub negative: NegativeMode,
    pub kl: KlMode,
    /// Consistency gradient flows into both augmentations when true,
    /// otherwise the weak branch is a fixed target.
    pub consistency_symmetric: bool,
}

impl Default for ObjectiveVariant {
    fn default() -> Self {
        Self { negative: NegativeMode::Adaptive, kl: KlMode::Strengthened, consistency_symmetric: true }
    }
}

/// Σ_k c_k(α) w(α_k) with c_k = (t_k − p_k)² [+ p_k(1−p_k)/(α₀+1)] and
/// w = ψ⁽¹⁾ when `adaptive`, else 1.
fn weighted_squared_error(alpha: &[f64], target: &dyn Fn(usize) -> f64, with_variance: bool, adaptive: bool) -> LossValue {
    let a0: f64 = alpha.iter().sum();
    let n = alpha.len();
    let mut c = Vec::with_capacity(n);
    let mut dc_dp = Vec::with_capacity(n);
    let mut dc_da0 = Vec::with_capacity(n);
    for (k, &a) in alpha.iter().enumerate() {
        let p = a / a0;
        let r = target(k) - p;
        let (mut ck, mut gk, mut hk) = (r * r, -2.0 * r, 0.0);
        if with_variance {
            ck += p * (1.0 - p) / (a0 + 1.0);
            gk += (1.0 - 2.0 * p) / (a0 + 1.0);
            hk -= p * (1.0 - p) / ((a0 + 1.0) * (a0 + 1.0));
        }
        c.push(ck);
        dc_dp.push(gk);
        dc_da0.push(hk);
    }
    let (w, dw): (Vec<f64>, Vec<f64>) = if adaptive {
        alpha.iter().map(|&a| (trigamma(a), tetragamma(a))).unzip()
    } else {
        (vec![1.0; n], vec![0.0; n])
    };

    let value = c.iter().zip(&w).map(|(c, w)| c * w).sum();
    // ∂p_j/∂α_k = (δ_jk − p_j)/α₀
    let shared: f64 = (0..n).map(|j| w[j] * (dc_da0[j] - dc_dp[j] * alpha[j] / (a0 * a0))).sum();
    let grad = (0..n).map(|k| w[k] * dc_dp[k] / a0 + shared + c[k] * dw[k]).collect();
    LossValue { value, grad }
}

fn sub_scaled_logdet(mut lv: LossValue, cv: &ConcentrationVector, lambda: f64) -> Result<LossValue> {
    if lambda != 0.0 {
        let (ld, ld_grad) = fim_logdet_with_grad(cv)?;
        lv.value -= lambda * ld;
        for (g, d) in lv.grad.iter_mut().zip(ld_grad) {
            *g -= lambda * d;
        }
    }
    Ok(lv)
}

/// Adaptive negative EDL loss for an unlabeled sample:
/// Σ_k (1/K − α_k/α₀)² ψ⁽¹⁾(α_k) − λ₁ log|I(α)|.
pub fn loss_nedl(cv: &ConcentrationVector, w: &LossWeights) -> Result<LossValue> {
    loss_nedl_with(cv, w, true)
}

/// [`loss_nedl`] with the trigamma weights optionally replaced by 1.
pub fn loss_nedl_with(cv: &ConcentrationVector, w: &LossWeights, adaptive: bool) -> Result<LossValue> {
    let uniform = 1.0 / cv.k() as f64;
    let lv = weighted_squared_error(cv.alpha(), &|_| uniform, false, adaptive);
    sub_scaled_logdet(lv, cv, w.lambda1)
}

/// Positive EDL loss for a labeled sample:
/// Σ_k [(y_k − p_k)² + α_k(α₀−α_k)/(α₀²(α₀+1))] ψ⁽¹⁾(α_k) − λ₂ log|I(α)|.
pub fn loss_pedl(cv: &ConcentrationVector, y: &OneHot, w: &LossWeights) -> Result<LossValue> {
    y.check_k(cv.k())?;
    let lv = weighted_squared_error(cv.alpha(), &|k| y.at(k), true, true);
    sub_scaled_logdet(lv, cv, w.lambda2)
}

/// Classical EDL squared-error loss Σ_k (y_k − p_k)² + p_k(1−p_k)/(α₀+1).
pub fn loss_edl_mse(cv: &ConcentrationVector, y: &OneHot) -> Result<LossValue> {
    y.check_k(cv.k())?;
    Ok(weighted_squared_error(cv.alpha(), &|k| y.at(k), true, false))
}

/// KL(Dir(α) ‖ Dir(β)) with gradient (α_k − β_k)ψ⁽¹⁾(α_k) − (α₀ − β₀)ψ⁽¹⁾(α₀).
pub fn loss_kl_strengthened(cv: &ConcentrationVector, target: &ConcentrationVector) -> Result<LossValue> {
    let value = kl_dirichlet(cv, target)?;
    let a0 = cv.precision();
    let b0 = target.precision();
    let tg0 = trigamma(a0);
    let grad = cv
        .alpha()
        .iter()
        .zip(target.alpha())
        .map(|(&a, &b)| (a - b) * trigamma(a) - (a0 - b0) * tg0)
        .collect();
    Ok(LossValue { value, grad })
}

/// KL(Dir(α̂) ‖ Dir(1)) with α̂ = α ⊙ (1 − y) + y.
pub fn loss_kl_original(cv: &ConcentrationVector, y: &OneHot) -> Result<LossValue> {
    y.check_k(cv.k())?;
    let mut masked = cv.alpha().to_vec();
    masked[y.class()] = 1.0;
    let masked = ConcentrationVector::new(masked)?;
    let ones = ConcentrationVector::uniform(cv.k())?;
    let mut lv = loss_kl_strengthened(&masked, &ones)?;
    lv.grad[y.class()] = 0.0;
    Ok(lv)
}

/// Squared distance between the evidence of two augmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub grad_strong: Vec<f64>,
    pub grad_weak: Vec<f64>,
}

/// ‖α_s − α_w‖².
pub fn loss_consistency(cv_strong: &ConcentrationVector, cv_weak: &ConcentrationVector) -> Result<PairLoss> {
    cv_weak.ensure_same_k(cv_strong)?;
    let diff: Vec<f64> = cv_strong.alpha().iter().zip(cv_weak.alpha()).map(|(s, w)| s - w).collect();
    Ok(PairLoss {
        value: diff.iter().map(|d| d * d).sum(),
        grad_strong: diff.iter().map(|d| 2.0 * d).collect(),
        grad_weak: diff.iter().map(|d| -2.0 * d).collect(),
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("logits {logits:?}")))
    }
}

fn cross_entropy(logits: &[f64], class: usize) -> LossValue {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let mut grad = softmax(logits);
    grad[class] -= 1.0;
    LossValue { value: log_sum - logits[class], grad }
}

/// −log softmax(logits)_y with gradient softmax(logits) − y.
pub fn loss_ce(logits: &[f64], y: &OneHot) -> Result<LossValue> {
    check_logits(logits)?;
    y.check_k(logits.len())?;
    Ok(cross_entropy(logits, y.class()))
}

/// FixMatch term: cross-entropy of the strong view against the hard
/// pseudo-label of the weak view when its confidence reaches τ.
///
/// The returned gradient is with respect to `logits_strong`; the weak branch
/// is a stopped target and receives no gradient. τ = 1 never masks in.
pub fn loss_fixmatch(logits_weak: &[f64], logits_strong: &[f64], tau: f64) -> Result<LossValue> {
    check_logits(logits_weak)?;
    check_logits(logits_strong)?;
    if logits_weak.len() != logits_strong.len() {
        return Err(Error::DimensionMismatch { expected: logits_weak.len(), got: logits_strong.len() });
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::OutOfRange(format!("fixmatch threshold {tau} outside (0, 1]")));
    }
    let probs = softmax(logits_weak);
    let (pseudo, conf) = argmax(&probs);
    if tau >= 1.0 || conf < tau {
        return Ok(LossValue::zero(logits_strong.len()));
    }
    Ok(cross_entropy(logits_strong, pseudo))
}

/// Index and value of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

#[derive(Debug, Clone)]
pub struct LabeledEvidence {
    pub alpha: ConcentrationVector,
    pub label: OneHot,
}

/// Adaptive negative optimization loss over a labeled and an unlabeled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AnoLoss {
    pub value: f64,
    /// λ_P-EDL-weighted labeled mean.
    pub positive: f64,
    /// λ_N-EDL-weighted unlabeled mean.
    pub negative: f64,
    pub grad_labeled: Vec<Vec<f64>>,
    pub grad_unlabeled: Vec<Vec<f64>>,
}

fn labeled_kl(cv: &ConcentrationVector, y: &OneHot, w: &LossWeights, mode: KlMode) -> Result<LossValue> {
    match mode {
        KlMode::Strengthened => {
            let target = ConcentrationVector::one_hot_target(cv.k(), y.class(), w.target_p)?;
            loss_kl_strengthened(cv, &target)
        }
        KlMode::Original => loss_kl_original(cv, y),
    }
}

fn add_into(acc: &mut LossValue, other: LossValue) {
    acc.value += other.value;
    for (a, b) in acc.grad.iter_mut().zip(other.grad) {
        *a += b;
    }
}

/// λ_P (1/N_l) Σ (L^P-EDL + L^KL) + λ_N (1/N_u) Σ (L^N-EDL + L^KL),
/// labeled KL targets (1,…,P,…,1), unlabeled KL targets 1.
pub fn loss_ano(labeled: &[LabeledEvidence], unlabeled: &[ConcentrationVector], w: &LossWeights) -> Result<AnoLoss> {
    loss_ano_with(labeled, unlabeled, w, &ObjectiveVariant::default())
}

pub fn loss_ano_with(
    labeled: &[LabeledEvidence],
    unlabeled: &[ConcentrationVector],
    w: &LossWeights,
    variant: &ObjectiveVariant,
) -> Result<AnoLoss> {
    if labeled.is_empty() {
        return Err(Error::EmptyBatch("labeled"));
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptyBatch("unlabeled"));
    }

    let scale_l = w.lambda_pedl / labeled.len() as f64;
    let mut positive = 0.0;
    let mut grad_labeled = Vec::with_capacity(labeled.len());
    for s in labeled {
        let mut term = match variant.negative {
            NegativeMode::Off => loss_edl_mse(&s.alpha, &s.label)?,
            _ => loss_pedl(&s.alpha, &s.label, w)?,
        };
        add_into(&mut term, labeled_kl(&s.alpha, &s.label, w, variant.kl)?);
        positive += scale_l * term.value;
        grad_labeled.push(term.grad.into_iter().map(|g| scale_l * g).collect());
    }

    let scale_u = w.lambda_nedl / unlabeled.len() as f64;
    let mut negative = 0.0;
    let mut grad_unlabeled = Vec::with_capacity(unlabeled.len());
    for cv in unlabeled {
        let term = match variant.negative {
            NegativeMode::Off => None,
            mode => {
                let mut term = loss_nedl_with(cv, w, mode == NegativeMode::Adaptive)?;
                add_into(&mut term, loss_kl_strengthened(cv, &ConcentrationVector::uniform(cv.k())?)?);
                Some(term)
            }
        };
        match term {
            Some(term) => {
                negative += scale_u * term.value;
                grad_unlabeled.push(term.grad.into_iter().map(|g| scale_u * g).collect());
            }
            None => grad_unlabeled.push(vec![0.0; cv.k()]),
        }
    }

    Ok(AnoLoss { value: positive + negative, positive, negative, grad_labeled, grad_unlabeled })
}

/// Both head outputs for one labeled sample.
#[derive(Debug, Clone)]
pub struct LabeledOutputs {
    pub logits: Vec<f64>,
    pub alpha: ConcentrationVector,
    pub label: OneHot,
}

/// Both head outputs for the weak and strong views of one unlabeled sample.
#[derive(Debug, Clone)]
pub struct UnlabeledOutputs {
    pub logits_weak: Vec<f64>,
    pub logits_strong: Vec<f64>,
    pub alpha_weak: ConcentrationVector,
    pub alpha_strong: ConcentrationVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub fixmatch: f64,
    pub ano: f64,
    /// Unweighted consistency mean; enters the total as λ_CON · con.
    pub con: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrad {
    pub logits: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledGrad {
    pub logits_weak: Vec<f64>,
    pub logits_strong: Vec<f64>,
    pub alpha_weak: Vec<f64>,
    pub alpha_strong: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnedlLoss {
    pub parts: LossBreakdown,
    pub labeled: Vec<LabeledGrad>,
    pub unlabeled: Vec<UnlabeledGrad>,
}

/// L_CE(D_l) + L_FM(I_u) + L_ANO(D_l, D_u) + λ_CON L_CON(D_u).
///
/// `selected` indexes into `unlabeled`; those samples form I_u and the
/// FixMatch term is their mean. ANO uses the weak-view evidence.
pub fn loss_anedl(
    labeled: &[LabeledOutputs],
    selected: &[usize],
    unlabeled: &[UnlabeledOutputs],
    w: &LossWeights,
    variant: &ObjectiveVariant,
) -> Result<AnedlLoss> {
    if labeled.is_empty() {
        return Err(Error::EmptyBatch("labeled"));
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptyBatch("unlabeled"));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= unlabeled.len()) {
        return Err(Error::OutOfRange(format!(
            "selected index {bad} outside unlabeled batch of {}",
            unlabeled.len()
        )));
    }

    let mut parts = LossBreakdown::default();
    let n_l = labeled.len() as f64;
    let mut labeled_grads = Vec::with_capacity(labeled.len());
    for s in labeled {
        let ce = loss_ce(&s.logits, &s.label)?;
        parts.ce += ce.value / n_l;
        labeled_grads.push(LabeledGrad {
            logits: ce.grad.into_iter().map(|g| g / n_l).collect(),
            alpha: vec![0.0; s.alpha.k()],
        });
    }

    let mut unlabeled_grads: Vec<UnlabeledGrad> = unlabeled
        .iter()
        .map(|u| UnlabeledGrad {
            logits_weak: vec![0.0; u.logits_weak.len()],
            logits_strong: vec![0.0; u.logits_strong.len()],
            alpha_weak: vec![0.0; u.alpha_weak.k()],
            alpha_strong: vec![0.0; u.alpha_strong.k()],
        })
        .collect();

    if !selected.is_empty() {
        let n_s = selected.len() as f64;
        for &i in selected {
            let u = &unlabeled[i];
            let fm = loss_fixmatch(&u.logits_weak, &u.logits_strong, w.fixmatch_threshold)?;
            parts.fixmatch += fm.value / n_s;
            for (g, d) in unlabeled_grads[i].logits_strong.iter_mut().zip(fm.grad) {
                *g += d / n_s;
            }
        }
    }

    let labeled_ev: Vec<LabeledEvidence> = labeled
        .iter()
        .map(|s| LabeledEvidence { alpha: s.alpha.clone(), label: s.label.clone() })
        .collect();
    let weak: Vec<ConcentrationVector> = unlabeled.iter().map(|u| u.alpha_weak.clone()).collect();
    let ano = loss_ano_with(&labeled_ev, &weak, w, variant)?;
    parts.ano = ano.value;
    for (g, d) in labeled_grads.iter_mut().zip(ano.grad_labeled) {
        g.alpha = d;
    }
    for (g, d) in unlabeled_grads.iter_mut().zip(ano.grad_unlabeled) {
        g.alpha_weak = d;
    }

    let n_u = unlabeled.len() as f64;
    let scale = w.lambda_con / n_u;
    for (u, g) in unlabeled.iter().zip(unlabeled_grads.iter_mut()) {
        let con = loss_consistency(&u.alpha_strong, &u.alpha_weak)?;
        parts.con += con.value / n_u;
        for (acc, d) in g.alpha_strong.iter_mut().zip(&con.grad_strong) {
            *acc += scale * d;
        }
        if variant.consistency_symmetric {
            for (acc, d) in g.alpha_weak.iter_mut().zip(&con.grad_weak) {
                *acc += scale * d;
            }
        }
    }

    parts.total = parts.ce + parts.fixmatch + parts.ano + w.lambda_con * parts.con;
    Ok(AnedlLoss { parts, labeled: labeled_grads, unlabeled: unlabeled_grads })
}

/// ψ(α_k) − ψ(α₀), the expected log-probability under Dir(α).
pub fn expected_log_prob(cv: &ConcentrationVector) -> Vec<f64> {
    let dg0 = digamma(cv.precision());
    cv.alpha().iter().map(|&a| digamma(a) - dg0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cv(a: &[f64]) -> ConcentrationVector {
        ConcentrationVector::new(a.to_vec()).unwrap()
    }

    fn weights() -> LossWeights {
        LossWeights::default()
    }

    #[test]
    fn nedl_uniform_alpha_is_pure_logdet() {
        let a = cv(&[3.0, 3.0, 3.0, 3.0]);
        let lv = loss_nedl(&a, &weights()).unwrap();
        let ld = crate::dirichlet::fim_logdet(&a).unwrap();
        assert!((lv.value + 0.1 * ld).abs() < 1e-14);
    }

    #[test]
    fn nedl_reference_value() {
        // mpmath evaluation of the formula at λ₁ = 0.1
        let lv = loss_nedl(&cv(&[10.0, 1.0, 1.0]), &weights()).unwrap();
        assert!((lv.value - 0.626_396_398_746_656_2).abs() < 1e-12);
    }

    #[test]
    fn pedl_reference_values() {
        let y = OneHot::from_class(2, 0).unwrap();
        let lv = loss_pedl(&cv(&[1.0, 1.0]), &y, &weights()).unwrap();
        let ld = crate::dirichlet::fim_logdet(&cv(&[1.0, 1.0])).unwrap();
        let expected = 2.0 * (0.25 + 1.0 / 12.0) * PI * PI / 6.0 - 0.1 * ld;
        assert!((lv.value - expected).abs() < 1e-12);
        assert!((lv.value - 1.150_397_858_941_454_9).abs() < 1e-12);

        let y = OneHot::from_class(3, 1).unwrap();
        let lv = loss_pedl(&cv(&[3.0, 7.0, 2.0]), &y, &weights()).unwrap();
        assert!((lv.value - 0.662_375_679_984_268_4).abs() < 1e-12);
    }

    #[test]
    fn pedl_bracket_vanishes_for_confident_truth() {
        let w = LossWeights { lambda2: 0.0, ..weights() };
        let y = OneHot::from_class(3, 2).unwrap();
        let lv = loss_pedl(&cv(&[1.0, 1.0, 1e6]), &y, &w).unwrap();
        assert!(lv.value.abs() < 1e-5, "{}", lv.value);
    }

    #[test]
    fn kl_losses() {
        let a = cv(&[2.0, 5.0, 1.5]);
        let lv = loss_kl_strengthened(&a, &a).unwrap();
        assert!(lv.value.abs() < 1e-12);
        assert!(lv.grad.iter().all(|g| g.abs() < 1e-12));

        let target = ConcentrationVector::one_hot_target(3, 0, 100.0).unwrap();
        let lv = loss_kl_strengthened(&cv(&[1.0, 1.0, 1.0]), &target).unwrap();
        assert!((lv.value - 139.972_856_477_730_6).abs() < 1e-9);

        let y = OneHot::from_class(2, 1).unwrap();
        assert!(loss_kl_original(&cv(&[1.0, 8.0]), &y).unwrap().value.abs() < 1e-14);
        let lv = loss_kl_original(&cv(&[5.0, 1.0]), &y).unwrap();
        assert!((lv.value - 0.809_437_912_434_100_4).abs() < 1e-12);
        assert_eq!(lv.grad[1], 0.0);
    }

    #[test]
    fn consistency_examples() {
        let l = loss_consistency(&cv(&[3.0, 1.0]), &cv(&[1.0, 1.0])).unwrap();
        assert_eq!(l.value, 4.0);
        assert_eq!(l.grad_strong, vec![4.0, 0.0]);
        assert_eq!(l.grad_weak, vec![-4.0, 0.0]);
        assert!(loss_consistency(&cv(&[3.0, 1.0]), &cv(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let y = OneHot::from_class(4, 2).unwrap();
        let lv = loss_ce(&[0.3; 4], &y).unwrap();
        assert!((lv.value - 4f64.ln()).abs() < 1e-14);
        let lv = loss_ce(&[0.0, 0.0, 50.0, 0.0], &y).unwrap();
        assert!(lv.value.abs() < 1e-10);
        assert!(loss_ce(&[0.0, f64::NAN, 0.0, 0.0], &y).is_err());
    }

    #[test]
    fn fixmatch_examples() {
        let lv = loss_fixmatch(&[0.1, 0.2, 0.0, 0.0], &[3.0, 0.0, 0.0, 0.0], 0.95).unwrap();
        assert_eq!(lv.value, 0.0);
        assert!(lv.grad.iter().all(|g| *g == 0.0));

        let lv = loss_fixmatch(&[0.0, 0.0, 800.0, 0.0], &[1.0; 4], 0.95).unwrap();
        assert!((lv.value - 4f64.ln()).abs() < 1e-14);

        let lv = loss_fixmatch(&[0.0, 0.0, 800.0, 0.0], &[1.0; 4], 1.0).unwrap();
        assert_eq!(lv.value, 0.0);
    }

    #[test]
    fn one_hot_validation() {
        assert!(OneHot::new(&[0.0, 1.0, 0.0]).is_ok());
        assert!(OneHot::new(&[0.0, 1.0, 1.0]).is_err());
        assert!(OneHot::new(&[0.0, 0.5, 0.5]).is_err());
        assert!(OneHot::new(&[0.0, 0.0]).is_err());
        assert!(OneHot::from_class(3, 3).is_err());
        let y = OneHot::from_class(3, 1).unwrap();
        assert!(matches!(loss_pedl(&cv(&[1.0, 1.0]), &y, &weights()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ano_zero_weights_and_empty_batches() {
        let w = LossWeights { lambda_pedl: 0.0, lambda_nedl: 0.0, ..weights() };
        let l = vec![LabeledEvidence { alpha: cv(&[4.0, 1.0]), label: OneHot::from_class(2, 0).unwrap() }];
        let u = vec![cv(&[2.0, 3.0])];
        assert_eq!(loss_ano(&l, &u, &w).unwrap().value, 0.0);
        assert!(matches!(loss_ano(&[], &u, &w), Err(Error::EmptyBatch(_))));
        assert!(matches!(loss_ano(&l, &[], &w), Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn weights_validation() {
        assert!(weights().validate().is_ok());
        assert!(LossWeights { lambda1: -0.1, ..weights() }.validate().is_err());
        assert!(LossWeights { target_p: 0.5, ..weights() }.validate().is_err());
        assert!(LossWeights { fixmatch_threshold: 0.0, ..weights() }.validate().is_err());
        assert!(LossWeights { lambda_con: f64::NAN, ..weights() }.validate().is_err());
    }
}
