//! Outlier-detection and classification metrics.

use serde::{Deserialize, Serialize};

use crate::dirichlet::{top_m_evidence, ConcentrationVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    /// Higher means more inlier-like.
    pub score: f64,
    pub is_inlier: bool,
}

/// Inference-time inlier score: the sum of the `m` largest evidence entries.
pub fn score_inference(cv: &ConcentrationVector, m: usize) -> Result<f64> {
    top_m_evidence(cv, m)
}

/// ⌈K/2⌉
pub fn default_top_m(k: usize) -> usize {
    k.div_ceil(2).max(1)
}

/// P(score_inlier > score_outlier) with ties counted ½, via the Mann–Whitney
/// rank sum with mid-ranks for tied groups.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite(format!("score {}", s.score)));
    }
    let n_in = samples.iter().filter(|s| s.is_inlier).count();
    let n_out = samples.len() - n_in;
    if n_in == 0 || n_out == 0 {
        return Err(Error::OutOfRange(format!("AUROC needs both classes (inliers {n_in}, outliers {n_out})")));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_unstable_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));

    // Twice the inlier rank sum keeps mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && samples[order[j + 1]].score == samples[order[i]].score {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the mid-rank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let inliers_in_group = order[i..=j].iter().filter(|&&o| samples[o].is_inlier).count() as u128;
        twice_rank_sum += twice_mid * inliers_in_group;
        i = j + 1;
    }
    let n_in = n_in as u128;
    let twice_u = twice_rank_sum - n_in * (n_in + 1);
    Ok(twice_u as f64 / (2 * n_in * n_out as u128) as f64)
}

pub fn error_rate(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), got: predictions.len() });
    }
    if truths.is_empty() {
        return Err(Error::EmptyBatch("error_rate"));
    }
    let wrong = predictions.iter().zip(truths).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truths.len() as f64)
}

/// Per-bin counts of inlier and outlier scores over a shared range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub edges: Vec<f64>,
    pub inlier_counts: Vec<usize>,
    pub outlier_counts: Vec<usize>,
}

pub fn score_histogram(samples: &[ScoredSample], bins: usize) -> ScoreHistogram {
    let bins = bins.max(1);
    let lo = samples.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if samples.is_empty() { (0.0, 1.0) } else if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut inlier_counts = vec![0; bins];
    let mut outlier_counts = vec![0; bins];
    for s in samples {
        let b = (((s.score - lo) / width) as usize).min(bins - 1);
        if s.is_inlier {
            inlier_counts[b] += 1;
        } else {
            outlier_counts[b] += 1;
        }
    }
    ScoreHistogram { edges, inlier_counts, outlier_counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(score: f64, is_inlier: bool) -> ScoredSample {
        ScoredSample { score, is_inlier }
    }

    #[test]
    fn auroc_examples() {
        let sep = [s(5.0, true), s(4.0, true), s(1.0, false), s(0.5, false)];
        assert_eq!(auroc(&sep).unwrap(), 1.0);
        let ties = [s(2.0, true), s(2.0, false), s(2.0, true)];
        assert_eq!(auroc(&ties).unwrap(), 0.5);
        // pairs (in, out): (3,1) win, (3,2) win, (3,3) tie, (1,1) tie, (1,2) loss, (1,3) loss
        let mixed = [s(3.0, true), s(1.0, true), s(1.0, false), s(2.0, false), s(3.0, false), s(0.0, true)];
        // third inlier 0.0 loses all three
        assert!((auroc(&mixed).unwrap() - 3.0 / 9.0).abs() < 1e-15);
        assert!(auroc(&[s(1.0, true)]).is_err());
        assert!(auroc(&[s(f64::NAN, true), s(1.0, false)]).is_err());
    }

    #[test]
    fn error_rate_examples() {
        assert_eq!(error_rate(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(error_rate(&[0, 0], &[1, 1]).unwrap(), 1.0);
        let p = [0, 1, 2, 3, 0, 1, 2, 3, 0, 1];
        let t = [0, 1, 2, 3, 0, 1, 2, 0, 1, 2];
        assert!((error_rate(&p, &t).unwrap() - 0.3).abs() < 1e-15);
        assert!(error_rate(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn inference_score() {
        let cv = ConcentrationVector::new(vec![5.0, 3.0, 2.0, 1.5]).unwrap();
        assert_eq!(score_inference(&cv, 2).unwrap(), 8.0);
        assert_eq!(score_inference(&cv, 4).unwrap(), cv.precision());
        assert!(score_inference(&cv, 5).is_err());
        assert_eq!(default_top_m(4), 2);
        assert_eq!(default_top_m(55), 28);
    }

    #[test]
    fn histogram_counts_everything() {
        let xs: Vec<ScoredSample> = (0..50).map(|i| s(i as f64 * 0.1, i % 3 == 0)).collect();
        let h = score_histogram(&xs, 7);
        assert_eq!(h.edges.len(), 8);
        assert_eq!(h.inlier_counts.iter().sum::<usize>() + h.outlier_counts.iter().sum::<usize>(), 50);
    }
}
