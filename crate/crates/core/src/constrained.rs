//! Zero-mean constraint correction.
//!
//! When the innovation law satisfies `int psi dP = 0`, the estimator
//! `kappa_tilde(a) = kappa_tilde - a * mean(psi(X_j))` stays consistent for
//! every `a`; the variance is minimised at the projection coefficient
//! `a* = int h_* psi dP / int psi^2 dP`, estimated from the bucket table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::numeric::compensated_sum;
use crate::smooth::{ConstraintSpec, SmoothFunction};
use crate::ustat::{BetaSequence, UStatResult};

/// Fraction of empty buckets above which `a_star_hat` is flagged unreliable.
pub const EMPTY_BUCKET_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AStarEstimate {
    pub a_star_hat: f64,
    pub empty_buckets: usize,
    pub empty_bucket_fraction: f64,
    pub unreliable: bool,
}

/// `a_star_hat = sum_j psi(X_j) sum_r H[r][j] / sum_j psi(X_j)^2`.
pub fn a_star_hat(x: &[f64], result: &UStatResult, psi: &ConstraintSpec) -> Result<AStarEstimate> {
    if x.len() != result.buckets.n() {
        return Err(Error::InvalidArgument(format!(
            "{} observations but the bucket table has {} rows",
            x.len(),
            result.buckets.n()
        )));
    }
    let denom = compensated_sum(x.iter().map(|&v| psi.psi(v).powi(2)));
    if denom <= 0.0 {
        return Err(Error::Degenerate("psi vanishes at every observation".into()));
    }
    let mut empty = 0;
    let num = compensated_sum(x.iter().enumerate().map(|(j, &v)| {
        let (s, e) = result.buckets.slot_sum(j);
        empty += e;
        psi.psi(v) * s
    }));
    let fraction = result.buckets.empty_fraction();
    Ok(AStarEstimate {
        a_star_hat: num / denom,
        empty_buckets: empty,
        empty_bucket_fraction: fraction,
        unreliable: fraction > EMPTY_BUCKET_LIMIT,
    })
}

/// `kappa_tilde - a * (1/n) sum_j psi(X_j)`.
pub fn constrained_estimate(result: &UStatResult, a: f64, x: &[f64], psi: &ConstraintSpec) -> f64 {
    if a == 0.0 {
        return result.kappa_tilde;
    }
    let mean_psi = compensated_sum(x.iter().map(|&v| psi.psi(v))) / x.len() as f64;
    result.kappa_tilde - a * mean_psi
}

/// Per-observation estimates `sum_r H[r][j] - m * kappa_tilde` of `h_*(X_j)`.
pub fn influence_estimates(result: &UStatResult) -> Vec<f64> {
    let mk = result.m as f64 * result.kappa_tilde;
    (0..result.n).map(|j| result.buckets.slot_sum(j).0 - mk).collect()
}

fn signed_sums(beta: &BetaSequence) -> Result<(f64, f64)> {
    match beta {
        BetaSequence::Finite { values } => Ok((
            values.iter().sum(),
            values.iter().map(|b| b * b).sum(),
        )),
        BetaSequence::Geometric { scale, ratio } => {
            if ratio.abs() >= 1.0 {
                return Err(Error::RateUnattainable { ratio: ratio.abs() });
            }
            Ok((scale / (1.0 - ratio), scale * scale / (1.0 - ratio * ratio)))
        }
        BetaSequence::Bounded { .. } => Err(Error::Unavailable(
            "closed-form a* for a sequence known only up to a tail bound",
        )),
    }
}

/// Closed form of `a*` for `psi(x) = x` and `h` a polynomial of degree at
/// most 2: `a* = c1 sum beta_r + c2 mu3 sum beta_r^2 / mu2`.
pub fn a_star_closed_form(spec: &InnovationSpec, beta: &BetaSequence, h: &SmoothFunction) -> Result<f64> {
    let coef = h
        .polynomial_coefficients()
        .ok_or_else(|| Error::InvalidArgument(format!("no closed-form a* for h = {}", h.name())))?;
    if coef.len() > 3 && coef[3..].iter().any(|&c| c != 0.0) {
        return Err(Error::InvalidArgument("closed-form a* needs degree <= 2".into()));
    }
    let c1 = coef.get(1).copied().unwrap_or(0.0);
    let c2 = coef.get(2).copied().unwrap_or(0.0);
    let (sum, sq) = signed_sums(beta)?;
    let mut a = c1 * sum;
    if c2 != 0.0 {
        a += c2 * spec.moment(3)? * sq / spec.moment(2)?;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ustat::ustat_exact;

    #[test]
    fn tiny_instance_by_hand() {
        let x = [1.0, 2.0, 3.0];
        let h = SmoothFunction::square();
        let res = ustat_exact(&x, &[1.0, 0.5], &h, 100).unwrap();
        let psi = ConstraintSpec::identity();
        // Pairs (i, j) -> (x_i + x_j / 2)^2:
        // (1,2) 4, (1,3) 6.25, (2,1) 6.25, (2,3) 12.25, (3,1) 12.25, (3,2) 16.
        let s1 = (4.0 + 6.25) / 2.0 + (6.25 + 12.25) / 2.0;
        let s2 = (6.25 + 12.25) / 2.0 + (4.0 + 16.0) / 2.0;
        let s3 = (12.25 + 16.0) / 2.0 + (6.25 + 12.25) / 2.0;
        let want = (s1 + 2.0 * s2 + 3.0 * s3) / 14.0;
        let got = a_star_hat(&x, &res, &psi).unwrap();
        assert!((got.a_star_hat - want).abs() < 1e-13);
        assert_eq!(got.empty_buckets, 0);
        assert_eq!(constrained_estimate(&res, 1.0, &x, &psi), 7.5);
        assert_eq!(constrained_estimate(&res, 0.0, &x, &psi), 9.5);
    }

    #[test]
    fn constant_kernel() {
        let x = [0.5, -1.0, 2.0, 0.25];
        let res = ustat_exact(&x, &[1.0, 0.3], &SmoothFunction::constant(3.0), 100).unwrap();
        let psi = ConstraintSpec::identity();
        let a = a_star_hat(&x, &res, &psi).unwrap().a_star_hat;
        let sum: f64 = x.iter().sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        assert!((a - 3.0 * 2.0 * sum / sq).abs() < 1e-13);
        assert!(influence_estimates(&res).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_residual_leaves_estimate() {
        let x = [1.0, -1.0, 2.0, -2.0];
        let res = ustat_exact(&x, &[1.0], &SmoothFunction::square(), 100).unwrap();
        let psi = ConstraintSpec::identity();
        for a in [-3.0, 0.5, 10.0] {
            assert_eq!(constrained_estimate(&res, a, &x, &psi), res.kappa_tilde);
        }
    }

    #[test]
    fn degenerate_psi() {
        let x = [0.0, 0.0, 0.0];
        let res = ustat_exact(&x, &[1.0], &SmoothFunction::square(), 100).unwrap();
        assert!(matches!(
            a_star_hat(&x, &res, &ConstraintSpec::identity()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn closed_forms() {
        let gamma = InnovationSpec::centered_gamma(3.0).unwrap();
        let normal = InnovationSpec::standard_normal();
        let geo = BetaSequence::geometric(1.0, 0.5);
        let sq = SmoothFunction::square();
        let a = a_star_closed_form(&gamma, &geo, &sq).unwrap();
        assert!((a - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(a_star_closed_form(&normal, &geo, &sq).unwrap(), 0.0);
        let fin = BetaSequence::finite(vec![1.0, 0.5]);
        assert_eq!(
            a_star_closed_form(&gamma, &fin, &SmoothFunction::identity()).unwrap(),
            1.5
        );
        assert!(a_star_closed_form(&gamma, &geo, &SmoothFunction::abs()).is_err());
    }
}
