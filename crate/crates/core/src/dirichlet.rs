//! Dirichlet evidence and the closed-form quantities derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfn::raw::{digamma, lgamma, tetragamma, trigamma};

/// Concentration parameters α of a Dirichlet over K ≥ 2 classes, every entry ≥ 1.
///
/// α = e + 1 where e is the non-negative evidence emitted by the EDL head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConcentrationVector {
    alpha: Vec<f64>,
}

impl ConcentrationVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidConcentration(format!(
                "need at least 2 classes, got {}",
                alpha.len()
            )));
        }
        if let Some((k, a)) = alpha.iter().enumerate().find(|(_, a)| !a.is_finite() || **a < 1.0) {
            return Err(Error::InvalidConcentration(format!(
                "alpha[{k}] = {a} (entries must be finite and >= 1)"
            )));
        }
        Ok(Self { alpha })
    }

    /// Builds α = e + 1 from non-negative evidence.
    pub fn from_evidence(evidence: &[f64]) -> Result<Self> {
        Self::new(evidence.iter().map(|e| e + 1.0).collect())
    }

    /// α = 1 (no evidence for any class).
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    /// Target Dirichlet (1, …, P, …, 1) with P at `class`.
    pub fn one_hot_target(k: usize, class: usize, p: f64) -> Result<Self> {
        if class >= k {
            return Err(Error::OutOfRange(format!("class {class} >= K = {k}")));
        }
        let mut alpha = vec![1.0; k];
        alpha[class] = p;
        Self::new(alpha)
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn evidence(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a - 1.0).collect()
    }

    /// α₀ = Σ α_k.
    pub fn precision(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub(crate) fn ensure_same_k(&self, other: &Self) -> Result<()> {
        if self.k() == other.k() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.k(), got: other.k() })
        }
    }
}

impl TryFrom<Vec<f64>> for ConcentrationVector {
    type Error = Error;

    fn try_from(alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<ConcentrationVector> for Vec<f64> {
    fn from(cv: ConcentrationVector) -> Self {
        cv.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSummary {
    /// p̂_k = α_k / α₀
    pub expected_prob: Vec<f64>,
    /// S = α₀
    pub precision: f64,
    /// u = K / α₀
    pub vacuity: f64,
}

pub fn summarize(cv: &ConcentrationVector) -> DirichletSummary {
    let s = cv.precision();
    DirichletSummary {
        expected_prob: cv.alpha().iter().map(|a| a / s).collect(),
        precision: s,
        vacuity: cv.k() as f64 / s,
    }
}

/// log-determinant of the Dirichlet Fisher information
/// I_jk = ψ⁽¹⁾(α_j)δ_jk − ψ⁽¹⁾(α₀), via the matrix-determinant lemma:
/// Σ_k ln ψ⁽¹⁾(α_k) + ln(1 − ψ⁽¹⁾(α₀) Σ_k 1/ψ⁽¹⁾(α_k)).
pub fn fim_logdet(cv: &ConcentrationVector) -> Result<f64> {
    fim_logdet_with_grad(cv).map(|(v, _)| v)
}

/// [`fim_logdet`] together with its gradient with respect to α.
pub fn fim_logdet_with_grad(cv: &ConcentrationVector) -> Result<(f64, Vec<f64>)> {
    let a0 = cv.precision();
    let tg0 = trigamma(a0);
    let qg0 = tetragamma(a0);
    let tg: Vec<f64> = cv.alpha().iter().map(|&a| trigamma(a)).collect();
    let inv_sum: f64 = tg.iter().map(|t| 1.0 / t).sum();
    let inner = 1.0 - tg0 * inv_sum;
    if inner.is_nan() || inner <= 0.0 || inner.is_infinite() {
        return Err(Error::Numeric(format!(
            "Fisher information determinant factor {inner} is not positive; alpha outside supported range"
        )));
    }
    let value = tg.iter().map(|t| t.ln()).sum::<f64>() + inner.ln();

    // d inner / dα_k = −ψ⁽²⁾(α₀) Σ 1/ψ⁽¹⁾ + ψ⁽¹⁾(α₀) ψ⁽²⁾(α_k) / ψ⁽¹⁾(α_k)²
    let grad = cv
        .alpha()
        .iter()
        .zip(&tg)
        .map(|(&a, &t)| {
            let qg = tetragamma(a);
            let d_inner = -qg0 * inv_sum + tg0 * qg / (t * t);
            qg / t + d_inner / inner
        })
        .collect();
    Ok((value, grad))
}

/// D_KL(Dir(α) ‖ Dir(β)).
pub fn kl_dirichlet(cv: &ConcentrationVector, target: &ConcentrationVector) -> Result<f64> {
    cv.ensure_same_k(target)?;
    let a0 = cv.precision();
    let b0 = target.precision();
    let dg0 = digamma(a0);
    let mut value = lgamma(a0) - lgamma(b0);
    for (&a, &b) in cv.alpha().iter().zip(target.alpha()) {
        value += lgamma(b) - lgamma(a) + (a - b) * (digamma(a) - dg0);
    }
    // Rounding can leave −1e-16 at α = β.
    Ok(value.max(0.0))
}

/// ln B(α) + (α₀ − K)ψ(α₀) − Σ (α_k − 1)ψ(α_k).
pub fn differential_entropy(cv: &ConcentrationVector) -> f64 {
    let a0 = cv.precision();
    let k = cv.k() as f64;
    let ln_beta = cv.alpha().iter().map(|&a| lgamma(a)).sum::<f64>() - lgamma(a0);
    let tail: f64 = cv.alpha().iter().map(|&a| (a - 1.0) * digamma(a)).sum();
    ln_beta + (a0 - k) * digamma(a0) - tail
}

/// Mutual information between the label and the categorical parameter,
/// H[E p] − E H[p].
pub fn mutual_information(cv: &ConcentrationVector) -> f64 {
    let a0 = cv.precision();
    let dg_next0 = digamma(a0 + 1.0);
    let mi: f64 = cv
        .alpha()
        .iter()
        .map(|&a| {
            let p = a / a0;
            -p * p.ln() + p * (digamma(a + 1.0) - dg_next0)
        })
        .sum();
    mi.max(0.0)
}

/// Sum of the `m` largest concentration entries.
pub fn top_m_evidence(cv: &ConcentrationVector, m: usize) -> Result<f64> {
    if m == 0 || m > cv.k() {
        return Err(Error::OutOfRange(format!("m = {m} outside 1..={}", cv.k())));
    }
    let mut sorted = cv.alpha().to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[..m].iter().sum())
}
