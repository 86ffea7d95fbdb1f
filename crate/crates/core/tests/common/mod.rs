//! Independent oracles and checkers shared by the integration tests.
//!
//! Nothing here calls into the crate's special functions, so a bug there
//! cannot cancel out against the same bug in an oracle.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-7;
pub const MC_SEED: u64 = 20_240_601;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Frozen mpmath values (50 significant digits, rounded to f64):
/// (x, lgamma, digamma, trigamma, tetragamma).
pub const SPECFN_REFERENCE: &[(f64, f64, f64, f64, f64)] = &[
    (1e-3, 6.907178885383853, -1000.5755719318103, 1000001.6425331959, -2000000002.3976324),
    (0.1, 2.252712651734206, -10.423754940411078, 101.43329915079276, -2001.861457378344),
    (0.5, 0.5723649429247001, -1.9635100260214235, 4.934802200544679, -16.82879664423432),
    (1.0, 0.0, -0.5772156649015329, 1.6449340668482264, -2.4041138063191885),
    (2.5, 0.2846828704729192, 0.7031566406452432, 0.49035775610023485, -0.2362040516417274),
    (7.3, 7.147892523022249, 1.9178203356379862, 0.14679576813142708, -0.02151081444162025),
    (10.0, 12.801827480081469, 2.251752589066721, 0.10516633568168575, -0.011049834970802067),
    (33.3, 82.60372358165495, 3.490467238520243, 0.030485444095338887, -0.0009292903678115171),
    (1000.0, 5905.220423209181, 6.907255195648812, 0.0010005001666666333, -1.0010004999998333e-06),
    (1e6, 12815504.569147611, 13.815510057964191, 1.0000005000001667e-06, -1.0000010000005e-12),
];

/// Lanczos (g = 7, n = 9) log-gamma for x > 0, with reflection below ½.
pub fn lanczos_lgamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_beta(a: &[f64]) -> f64 {
    a.iter().map(|&x| lanczos_lgamma(x)).sum::<f64>() - lanczos_lgamma(a.iter().sum())
}

/// ∫₀¹ g(ln p, ln(1−p)) dp by tanh-sinh quadrature. `g` receives logs so the
/// integrand can be evaluated without cancellation near the endpoints.
pub fn tanh_sinh(g: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / 128.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let n = (4.5 / h) as i64;
    for i in -n..=n {
        let t = i as f64 * h;
        let s = 2.0 * half_pi * t.sinh();
        // p = 1/(1+e^{−s}), 1−p = 1/(1+e^{s})
        let ln_p = -(-s).exp().ln_1p();
        let ln_q = -s.exp().ln_1p();
        let dp = 2.0 * half_pi * t.cosh() * (ln_p + ln_q).exp();
        if dp == 0.0 {
            continue;
        }
        sum += g(ln_p, ln_q) * dp;
    }
    sum * h
}

/// KL(Beta(a)‖Beta(b)) with normalizers also obtained by quadrature.
pub fn kl_quadrature_k2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let log_kernel = |c: [f64; 2], lp: f64, lq: f64| (c[0] - 1.0) * lp + (c[1] - 1.0) * lq;
    let za = tanh_sinh(|lp, lq| log_kernel(a, lp, lq).exp());
    let zb = tanh_sinh(|lp, lq| log_kernel(b, lp, lq).exp());
    let cross = tanh_sinh(|lp, lq| {
        let ka = log_kernel(a, lp, lq);
        ka.exp() * (ka - log_kernel(b, lp, lq))
    });
    cross / za - za.ln() + zb.ln()
}

/// Differential entropy of Beta(a) by quadrature.
pub fn entropy_quadrature_k2(a: [f64; 2]) -> f64 {
    let log_kernel = |lp: f64, lq: f64| (a[0] - 1.0) * lp + (a[1] - 1.0) * lq;
    let z = tanh_sinh(|lp, lq| log_kernel(lp, lq).exp());
    let m = tanh_sinh(|lp, lq| {
        let k = log_kernel(lp, lq);
        k.exp() * k
    });
    z.ln() - m / z
}

pub fn sample_dirichlet(alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = alpha.iter().map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng)).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

/// Sample mean and standard error of `f` over `n` Dirichlet(α) draws. The
/// integrand receives log p to keep tiny components finite.
pub fn dirichlet_mc(alpha: &[f64], n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let mut r = rng(seed);
    let gammas: Vec<Gamma<f64>> = alpha.iter().map(|&a| Gamma::new(a, 1.0).unwrap()).collect();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut log_p = vec![0.0; alpha.len()];
    for _ in 0..n {
        let mut total = 0.0;
        for (lp, g) in log_p.iter_mut().zip(&gammas) {
            let v: f64 = g.sample(&mut r);
            total += v;
            *lp = v.ln();
        }
        let ln_total = total.ln();
        log_p.iter_mut().for_each(|lp| *lp -= ln_total);
        let v = f(&log_p);
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean) * nf / (nf - 1.0);
    (mean, (var.max(0.0) / nf).sqrt())
}

/// Monte-Carlo KL(Dir(α)‖Dir(β)) as E_α[ln Dir(p|α) − ln Dir(p|β)].
pub fn kl_monte_carlo(alpha: &[f64], beta: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let c = ln_beta(beta) - ln_beta(alpha);
    dirichlet_mc(alpha, n, seed, |lp| c + alpha.iter().zip(beta).zip(lp).map(|((a, b), l)| (a - b) * l).sum::<f64>())
}

/// log|det A| by Gaussian elimination with partial pivoting; `None` if
/// the determinant is not positive.
pub fn dense_logdet(mut a: Vec<Vec<f64>>) -> Option<f64> {
    let n = a.len();
    let mut logdet = 0.0;
    let mut sign = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        if pivot != col {
            a.swap(pivot, col);
            sign = -sign;
        }
        let d = a[col][col];
        if d < 0.0 {
            sign = -sign;
        }
        logdet += d.abs().ln();
        for row in col + 1..n {
            let f = a[row][col] / d;
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    (sign > 0.0).then_some(logdet)
}

/// Trigamma by direct summation Σ 1/(x+n)² with an integral tail, used only
/// to build the dense Fisher matrix independently of the crate.
pub fn trigamma_series(x: f64) -> f64 {
    let n = 2000;
    let head: f64 = (0..n).map(|i| 1.0 / ((x + i as f64) * (x + i as f64))).sum();
    let y = x + n as f64;
    // Euler–Maclaurin tail: 1/y + 1/(2y²) + 1/(6y³) − 1/(30y⁵)
    head + 1.0 / y + 0.5 / (y * y) + 1.0 / (6.0 * y.powi(3)) - 1.0 / (30.0 * y.powi(5))
}

/// Dense Fisher information of Dir(α): diag(ψ1(α)) − ψ1(α₀)·𝟙𝟙ᵀ.
pub fn dense_fisher(alpha: &[f64]) -> Vec<Vec<f64>> {
    let t0 = trigamma_series(alpha.iter().sum());
    (0..alpha.len())
        .map(|i| {
            (0..alpha.len())
                .map(|j| if i == j { trigamma_series(alpha[i]) - t0 } else { -t0 })
                .collect()
        })
        .collect()
}

/// AUROC by counting every inlier-outlier pair; ties count ½.
pub fn auroc_pairwise(scores: &[(f64, bool)]) -> f64 {
    let (mut wins2, mut pairs) = (0u128, 0u128);
    for &(si, inlier_i) in scores {
        if !inlier_i {
            continue;
        }
        for &(so, inlier_o) in scores {
            if inlier_o {
                continue;
            }
            pairs += 1;
            wins2 += if si > so { 2 } else if si == so { 1 } else { 0 };
        }
    }
    wins2 as f64 / (2 * pairs) as f64
}

pub fn random_alpha(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(1.01..50.0)).collect()
}

/// Largest violation ratio of analytic vs central-difference gradients:
/// ≤ 1 means every coordinate passes at the shared tolerances.
pub fn fd_violation(f: &dyn Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        let err = (numeric - analytic[i]).abs();
        let allowed = FD_ABS_TOL.max(FD_REL_TOL * numeric.abs().max(analytic[i].abs()));
        worst = worst.max(err / allowed);
    }
    worst
}

/// One line of the acceptance report.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}
