//! Log-gamma and polygamma functions of order 0, 1 and 2 for positive reals.
//!
//! Every function shifts its argument upward with the matching recurrence
//! until it reaches [`ASYMPTOTIC_THRESHOLD`], then evaluates the Stirling /
//! Bernoulli asymptotic series. With eight terms at x ≥ 10 the truncation
//! error is below 1e-17 relative, so the shift loop dominates rounding.

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A strictly positive, finite real.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("expected a finite positive real, got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PositiveReal {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

/// ln Γ(x).
pub fn lgamma(x: PositiveReal) -> f64 {
    let mut x = x.get();
    // ln Γ(x) = ln Γ(x + n) − ln(x (x+1) … (x+n−1))
    let mut prod = 1.0;
    while x < ASYMPTOTIC_THRESHOLD {
        prod *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series - prod.ln()
}

/// ψ(x) = d ln Γ(x) / dx.
pub fn digamma(x: PositiveReal) -> f64 {
    let mut x = x.get();
    let mut acc = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let series = inv2
        * (-1.0 / 12.0
            + inv2
                * (1.0 / 120.0
                    + inv2
                        * (-1.0 / 252.0
                            + inv2
                                * (1.0 / 240.0
                                    + inv2
                                        * (-1.0 / 132.0
                                            + inv2 * (691.0 / 32_760.0 + inv2 * (-1.0 / 12.0)))))));
    acc + x.ln() - 0.5 / x + series
}

/// ψ⁽¹⁾(x), the trigamma function. Strictly positive and decreasing.
pub fn trigamma(x: PositiveReal) -> f64 {
    let mut x = x.get();
    let mut acc = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2
                            * (1.0 / 42.0
                                + inv2
                                    * (-1.0 / 30.0
                                        + inv2
                                            * (5.0 / 66.0
                                                + inv2 * (-691.0 / 2730.0 + inv2 * (7.0 / 6.0)))))));
    acc + series
}

/// ψ⁽²⁾(x), the tetragamma function. Needed for gradients of trigamma-weighted losses.
pub fn tetragamma(x: PositiveReal) -> f64 {
    let mut x = x.get();
    let mut acc = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = -inv2
        - inv2 * inv
        + inv2
            * inv2
            * (-0.5
                + inv2
                    * (1.0 / 6.0
                        + inv2
                            * (-1.0 / 6.0
                                + inv2
                                    * (3.0 / 10.0
                                        + inv2 * (-5.0 / 6.0 + inv2 * (691.0 / 210.0))))));
    acc + series
}

/// Unchecked variants for callers that have already validated their inputs
/// (e.g. entries of a [`crate::dirichlet::ConcentrationVector`], all ≥ 1).
pub(crate) mod raw {
    use super::PositiveReal;

    #[inline]
    fn pos(x: f64) -> PositiveReal {
        debug_assert!(x.is_finite() && x > 0.0, "special function argument {x}");
        PositiveReal(x)
    }

    #[inline]
    pub fn lgamma(x: f64) -> f64 {
        super::lgamma(pos(x))
    }

    #[inline]
    pub fn digamma(x: f64) -> f64 {
        super::digamma(pos(x))
    }

    #[inline]
    pub fn trigamma(x: f64) -> f64 {
        super::trigamma(pos(x))
    }

    #[inline]
    pub fn tetragamma(x: f64) -> f64 {
        super::tetragamma(pos(x))
    }
}
