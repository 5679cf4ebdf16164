//! Parameter estimation and the substitution estimator on estimated
//! innovations.
//!
//! The pipeline recovers `X_{n,j}(theta_hat)` from the path, runs the
//! U-statistic with `alpha_r = delta_{r-1}(theta_hat)`, and applies the
//! constraint correction with `psi` evaluated at the recovered innovations.
//! One tuple sample serves both `kappa_tilde` and `a_star_hat`.

use serde::{Deserialize, Serialize};

use crate::constrained::{a_star_hat, influence_estimates};
use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::numeric::{compensated_sum, mean};
use crate::process::{CoefficientModel, ModelName, ProcessPath};
use crate::rng::SeedStream;
use crate::smooth::{ConstraintSpec, SmoothFunction};
use crate::ustat::{ustat, UStatConfig, UStatResult};

/// Distance from the domain boundary used when clipping `theta_hat`.
pub const DOMAIN_MARGIN: f64 = 1e-3;

/// How `theta_hat` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMethod {
    /// Least squares (AR1 only).
    LeastSquares,
    /// Autocorrelation matching (MA1, ARMA11; least squares for AR1).
    MomentMatch,
    /// Single score step from the least-squares estimate (AR1 only).
    OneStep,
    /// Root of the score equation, the fixed point of the one-step map (AR1 only).
    ScoreRoot,
    /// The true parameter of a simulated path.
    Known,
}

impl ThetaMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThetaMethod::LeastSquares => "least-squares",
            ThetaMethod::MomentMatch => "moment-match",
            ThetaMethod::OneStep => "one-step",
            ThetaMethod::ScoreRoot => "score-root",
            ThetaMethod::Known => "known",
        }
    }
}

/// Source of `mu2` and `I(P)` in the score-based estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nuisance {
    /// Values from the innovation spec.
    #[default]
    Oracle,
    /// Residual moments of the initial fit.
    PlugIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: Vec<f64>,
    pub method: ThetaMethod,
    pub clipped: bool,
    pub warnings: Vec<String>,
}

fn sum_products(y: &[f64], lag: usize) -> f64 {
    compensated_sum(y.windows(lag + 1).map(|w| w[0] * w[lag]))
}

/// `sum_j Y_{j-1} Y_j / sum_j Y_{j-1}^2` over `j = 1..n`.
pub fn least_squares_ar1(path: &ProcessPath) -> Result<f64> {
    let y = path.from_zero();
    let den = compensated_sum(y[..y.len() - 1].iter().map(|v| v * v));
    if den <= 0.0 {
        return Err(Error::Degenerate("all lagged observations are zero".into()));
    }
    Ok(sum_products(y, 1) / den)
}

/// Lag-`k` autocorrelation of `Y_1..Y_n` about the known mean 0.
fn autocorrelation(path: &ProcessPath, k: usize) -> Result<f64> {
    let y = path.obs();
    let c0 = compensated_sum(y.iter().map(|v| v * v));
    if c0 <= 0.0 {
        return Err(Error::Degenerate("path is identically zero".into()));
    }
    if y.len() <= k {
        return Err(Error::InvalidArgument(format!("lag {k} needs n > {k}")));
    }
    Ok(sum_products(y, k) / c0)
}

/// Invertible solution of `rho = theta / (1 + theta^2)`.
pub fn invert_ma1_autocorrelation(rho: f64) -> Result<f64> {
    if !rho.is_finite() || rho.abs() > 0.5 {
        return Err(Error::NoInvertibleRoot(rho));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - (1.0 - 4.0 * rho * rho).max(0.0).sqrt()) / (2.0 * rho))
}

/// ARMA(1,1) parameters from the first two autocorrelations.
///
/// With `phi = rho2 / rho1`, the moving-average parameter solves
/// `(rho1 - phi) t^2 + (1 + phi^2 - 2 rho1 phi) t + (rho1 - phi) = 0`; the
/// roots multiply to 1 and the one inside the unit interval is returned.
pub fn invert_arma11_autocorrelations(rho1: f64, rho2: f64) -> Result<[f64; 2]> {
    if rho1.abs() < 1e-8 {
        return Err(Error::Degenerate(
            "lag-1 autocorrelation vanishes; ARMA(1,1) moments do not identify phi".into(),
        ));
    }
    let phi = rho2 / rho1;
    let a = rho1 - phi;
    let b = 1.0 + phi * phi - 2.0 * rho1 * phi;
    if a.abs() < 1e-14 {
        return Ok([phi, 0.0]);
    }
    let disc = b * b - 4.0 * a * a;
    if disc < 0.0 {
        return Err(Error::NoInvertibleRoot(rho1));
    }
    // Numerically stable smaller root.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let t = a / q;
    Ok([phi, t])
}

/// Point estimate of `theta` with clipping into the domain interior.
pub fn estimate_theta(path: &ProcessPath, model: &CoefficientModel, method: ThetaMethod) -> Result<ThetaEstimate> {
    let raw = match (model.named(), method) {
        (_, ThetaMethod::Known) => path
            .true_theta
            .clone()
            .ok_or_else(|| Error::InvalidArgument("path carries no true parameter".into()))?,
        (Some(ModelName::Ar1), ThetaMethod::LeastSquares | ThetaMethod::MomentMatch) => {
            vec![least_squares_ar1(path)?]
        }
        (Some(ModelName::Ma1), ThetaMethod::MomentMatch) => {
            vec![invert_ma1_autocorrelation(autocorrelation(path, 1)?)?]
        }
        (Some(ModelName::Arma11), ThetaMethod::MomentMatch) => {
            invert_arma11_autocorrelations(autocorrelation(path, 1)?, autocorrelation(path, 2)?)?
                .to_vec()
        }
        (_, ThetaMethod::OneStep | ThetaMethod::ScoreRoot) => {
            return Err(Error::InvalidArgument(
                "score-based estimators need the innovation spec; use one_step_efficient_ar1 or score_root_ar1"
                    .into(),
            ))
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "method {} is not available for model {}",
                method.as_str(),
                model.name()
            )))
        }
    };
    Ok(finish_estimate(model, raw, method))
}

fn finish_estimate(model: &CoefficientModel, raw: Vec<f64>, method: ThetaMethod) -> ThetaEstimate {
    let mut warnings = Vec::new();
    let (theta, clipped) = if model.check_domain(&raw).is_ok() {
        (raw, false)
    } else {
        let (t, _) = model.clip_to_interior(&raw, DOMAIN_MARGIN);
        warnings.push(format!(
            "theta_hat {raw:?} outside the domain of {}; clipped to {t:?}",
            model.name()
        ));
        (t, true)
    };
    ThetaEstimate {
        theta,
        method,
        clipped,
        warnings,
    }
}

fn nuisance_values(path: &ProcessPath, theta: f64, spec: &InnovationSpec, nuisance: Nuisance) -> Result<(f64, f64)> {
    let (_, info) = spec.score_and_info()?;
    match nuisance {
        Nuisance::Oracle => Ok((spec.moment(2)?, info)),
        Nuisance::PlugIn => {
            let y = path.from_zero();
            let resid: Vec<f64> = y.windows(2).map(|w| w[1] - theta * w[0]).collect();
            let mu2 = compensated_sum(resid.iter().map(|e| e * e)) / resid.len() as f64;
            let scores: Vec<f64> = resid.iter().filter_map(|&e| spec.score(e).ok()).filter(|s| s.is_finite()).collect();
            if scores.is_empty() || mu2 <= 0.0 {
                return Err(Error::Degenerate("no residual inside the score support".into()));
            }
            let info = compensated_sum(scores.iter().map(|s| s * s)) / scores.len() as f64;
            Ok((mu2, info))
        }
    }
}

/// `sum_j Y_{j-1} l(Y_j - theta Y_{j-1})`, NaN when a residual leaves the support.
fn ar1_score_sum(y: &[f64], theta: f64, spec: &InnovationSpec) -> Result<f64> {
    let mut acc = crate::numeric::CompensatedSum::new();
    for w in y.windows(2) {
        acc.add(w[0] * spec.score(w[1] - theta * w[0])?);
    }
    Ok(acc.value())
}

/// One score step from `theta_init`:
/// `theta# = theta_init - (1 - theta_init^2) / (n mu2 I) sum_j Y_{j-1} l(Y_j - theta_init Y_{j-1})`.
pub fn one_step_efficient_ar1(
    path: &ProcessPath,
    theta_init: f64,
    spec: &InnovationSpec,
    nuisance: Nuisance,
) -> Result<f64> {
    let (mu2, info) = nuisance_values(path, theta_init, spec, nuisance)?;
    let y = path.from_zero();
    let n = path.n() as f64;
    let s = ar1_score_sum(y, theta_init, spec)?;
    if !s.is_finite() {
        return Err(Error::Degenerate(format!(
            "a residual at theta = {theta_init} falls outside the innovation support"
        )));
    }
    Ok(theta_init - (1.0 - theta_init * theta_init) / (n * mu2 * info) * s)
}

/// Root of the AR(1) score equation `sum_j Y_{j-1} l(Y_j - theta Y_{j-1}) = 0`.
///
/// For log-concave innovation densities the sum is nondecreasing in `theta`,
/// so the root is bracketed on the set of `theta` keeping all residuals in
/// the support and found by bisection. This is the limit of iterating the
/// one-step map and shares its influence function.
pub fn score_root_ar1(path: &ProcessPath, spec: &InnovationSpec) -> Result<f64> {
    spec.fisher_info()?;
    let y = path.from_zero();
    let (lo_sup, hi_sup) = spec.support();
    let mut lo = -1.0 + DOMAIN_MARGIN;
    let mut hi = 1.0 - DOMAIN_MARGIN;
    // Residual Y_j - theta Y_{j-1} must stay inside (lo_sup, hi_sup).
    for w in y.windows(2) {
        let (y0, y1) = (w[0], w[1]);
        if y0 == 0.0 {
            continue;
        }
        // The residual is decreasing in theta when y0 > 0, increasing otherwise.
        if lo_sup.is_finite() {
            let t = (y1 - lo_sup) / y0;
            if y0 > 0.0 {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
        }
        if hi_sup.is_finite() {
            let t = (y1 - hi_sup) / y0;
            if y0 > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
    }
    if !(lo < hi) {
        return Err(Error::Degenerate("no parameter keeps every residual in the support".into()));
    }
    // Stay strictly inside the feasible interval.
    let width = hi - lo;
    let (mut a, mut b) = (lo + 1e-12 * width, hi - 1e-12 * width);
    let fa = ar1_score_sum(y, a, spec)?;
    let fb = ar1_score_sum(y, b, spec)?;
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::Degenerate("score undefined at the bracket ends".into()));
    }
    if fa >= 0.0 {
        return Ok(a);
    }
    if fb <= 0.0 {
        return Ok(b);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if ar1_score_sum(y, mid, spec)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Runs the requested method, including the score-based ones for AR1.
pub fn estimate_theta_with_spec(
    path: &ProcessPath,
    model: &CoefficientModel,
    method: ThetaMethod,
    spec: &InnovationSpec,
    nuisance: Nuisance,
) -> Result<ThetaEstimate> {
    match method {
        ThetaMethod::OneStep | ThetaMethod::ScoreRoot => {
            if !model.is_ar1() {
                return Err(Error::InvalidArgument(format!(
                    "method {} is only implemented for ar1",
                    method.as_str()
                )));
            }
            let t = if method == ThetaMethod::OneStep {
                let init = least_squares_ar1(path)?;
                one_step_efficient_ar1(path, init, spec, nuisance)?
            } else {
                score_root_ar1(path, spec)?
            };
            Ok(finish_estimate(model, vec![t], method))
        }
        _ => estimate_theta(path, model, method),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    /// `sum_j (X_{n,j}(theta_hat) - X_j)^2`, available for simulated paths.
    pub innovation_ss_resid: Option<f64>,
    pub empty_bucket_fraction: f64,
    pub a_star_unreliable: bool,
    pub rate_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kappa_hat: f64,
    pub kappa_tilde: f64,
    pub theta_hat: Vec<f64>,
    pub theta_method: ThetaMethod,
    pub a_star_hat: f64,
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub draws: u64,
    pub partitions: usize,
    pub sampling_se: f64,
    pub se_plugin: f64,
    pub diagnostics: EstimateDiagnostics,
}

/// Everything produced by one substitution run.
#[derive(Debug, Clone)]
pub struct SubstitutionRun {
    pub report: EstimateReport,
    pub innovations: Vec<f64>,
    pub ustat: UStatResult,
}

/// Inputs to the plug-in standard error besides the bucket table.
pub struct SeInputs<'a> {
    pub innovations: &'a [f64],
    pub psi: &'a ConstraintSpec,
    pub a_star_hat: f64,
    /// Gradient of the target with respect to `theta` and the per-observation
    /// influence of `theta_hat`; empty when the parameter is known.
    pub theta_terms: Option<(Vec<f64>, Vec<Vec<f64>>)>,
}

/// Sample SD of `h_*(X_j) - a* psi(X_j) + grad . w_j` over `sqrt(n)`.
pub fn plugin_se(result: &UStatResult, inputs: &SeInputs<'_>) -> Result<f64> {
    let n = result.n;
    if inputs.innovations.len() != n || result.buckets.n() != n {
        return Err(Error::InvalidArgument("bucket table does not match the innovations".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("plug-in SE needs n >= 2".into()));
    }
    let hstar = influence_estimates(result);
    let terms: Vec<f64> = (0..n)
        .map(|j| {
            let mut v = hstar[j] - inputs.a_star_hat * inputs.psi.psi(inputs.innovations[j]);
            if let Some((grad, w)) = &inputs.theta_terms {
                v += grad.iter().zip(&w[j]).map(|(g, wj)| g * wj).sum::<f64>();
            }
            v
        })
        .collect();
    Ok((crate::numeric::variance(&terms) / n as f64).sqrt())
}

/// `(1/n) sum_j h'(Y_j) sum_s grad delta_s(theta) X_{n,j-s}`, the derivative
/// of the target in `theta` with the innovations held fixed.
pub fn target_gradient(
    path: &ProcessPath,
    model: &CoefficientModel,
    theta: &[f64],
    innovations: &[f64],
    h: &SmoothFunction,
    tol: f64,
) -> Result<Vec<f64>> {
    let d = model.dim();
    let tb = model.tail_bound(theta)?;
    let mut lags = 1usize;
    while tb.c * tb.a.powi(lags as i32) / (1.0 - tb.a) > tol && lags < innovations.len() {
        lags += 1;
    }
    let grads: Vec<Vec<f64>> = (1..=lags).map(|s| model.delta_dot(theta, s)).collect();
    let y = path.obs();
    let mut out = vec![0.0; d];
    for j in 0..y.len() {
        let hp = h.derivative(y[j]);
        if hp == 0.0 {
            continue;
        }
        for (s, g) in grads.iter().enumerate() {
            let Some(idx) = j.checked_sub(s + 1) else { break };
            let x = innovations[idx];
            for k in 0..d {
                out[k] += hp * g[k] * x;
            }
        }
    }
    let n = y.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Declared per-observation influence `w_j` of `theta_hat`, or `None` when
/// the method has none.
pub fn theta_influence(
    path: &ProcessPath,
    model: &CoefficientModel,
    est: &ThetaEstimate,
    innovations: &[f64],
    spec: Option<&InnovationSpec>,
) -> Result<Option<Vec<Vec<f64>>>> {
    let y = path.from_zero();
    let theta = est.theta[0];
    let n = innovations.len();
    Ok(match (model.named(), est.method) {
        (_, ThetaMethod::Known) => Some(vec![vec![0.0; model.dim()]; n]),
        (Some(ModelName::Ar1), ThetaMethod::LeastSquares | ThetaMethod::MomentMatch) => {
            let mu2 = compensated_sum(innovations.iter().map(|e| e * e)) / n as f64;
            let c = (1.0 - theta * theta) / mu2;
            Some((0..n).map(|j| vec![c * y[j] * innovations[j]]).collect())
        }
        (Some(ModelName::Ar1), ThetaMethod::OneStep | ThetaMethod::ScoreRoot) => {
            let Some(spec) = spec else { return Ok(None) };
            let (mu2, info) = (spec.moment(2)?, spec.fisher_info()?);
            let c = -(1.0 - theta * theta) / (mu2 * info);
            Some(
                (0..n)
                    .map(|j| {
                        let l = spec.score(innovations[j]).unwrap_or(f64::NAN);
                        vec![if l.is_finite() { c * y[j] * l } else { 0.0 }]
                    })
                    .collect(),
            )
        }
        (Some(ModelName::Ma1), ThetaMethod::MomentMatch) => {
            // Delta method through rho = theta / (1 + theta^2).
            let obs = path.obs();
            let c0 = compensated_sum(obs.iter().map(|v| v * v)) / n as f64;
            let rho = theta / (1.0 + theta * theta);
            let drho = (1.0 - theta * theta) / (1.0 + theta * theta).powi(2);
            let g = 1.0 / drho;
            Some(
                (0..n)
                    .map(|j| {
                        let next = obs.get(j + 1).copied().unwrap_or(0.0);
                        vec![g * (obs[j] * next - rho * obs[j] * obs[j]) / c0]
                    })
                    .collect(),
            )
        }
        _ => None,
    })
}

/// Substitution estimator `kappa_hat = kappa_tilde(theta_hat) - a_star_hat * mean psi(X_{n,j}(theta_hat))`.
#[allow(clippy::too_many_arguments)]
pub fn substitution_estimate(
    path: &ProcessPath,
    model: &CoefficientModel,
    est: &ThetaEstimate,
    h: &SmoothFunction,
    psi: &ConstraintSpec,
    cfg: &UStatConfig,
    stream: &SeedStream,
    spec: Option<&InnovationSpec>,
) -> Result<SubstitutionRun> {
    let mut warnings = est.warnings.clone();
    let (theta, clipped) = model.clip_to_interior(&est.theta, DOMAIN_MARGIN);
    if clipped && !est.clipped {
        warnings.push(format!("theta_hat clipped to {theta:?}"));
    }
    model.check_domain(&theta)?;
    let innovations = model.recover_innovations(path, &theta)?;
    let beta: Vec<f64> = (0..cfg.m).map(|s| model.delta(&theta, s)).collect();
    let result = ustat(&innovations, &beta, h, cfg, stream)?;
    let a = a_star_hat(&innovations, &result, psi)?;
    if a.unreliable {
        warnings.push(format!(
            "a_star_hat unreliable: {:.2}% of buckets are empty",
            100.0 * a.empty_bucket_fraction
        ));
    }
    let mean_psi = compensated_sum(innovations.iter().map(|&v| psi.psi(v))) / innovations.len() as f64;
    let kappa_hat = result.kappa_tilde - a.a_star_hat * mean_psi;

    let est_used = ThetaEstimate {
        theta: theta.clone(),
        ..est.clone()
    };
    let theta_terms = match theta_influence(path, model, &est_used, &innovations, spec)? {
        Some(w) => {
            let grad = target_gradient(path, model, &theta, &innovations, h, 1e-10)?;
            Some((grad, w))
        }
        None => {
            warnings.push(format!(
                "no declared influence for theta_hat ({}); se_plugin ignores parameter uncertainty",
                est.method.as_str()
            ));
            None
        }
    };
    let se = plugin_se(
        &result,
        &SeInputs {
            innovations: &innovations,
            psi,
            a_star_hat: a.a_star_hat,
            theta_terms,
        },
    )?;
    let innovation_ss_resid = path.true_innovations.as_ref().map(|truth| {
        compensated_sum(truth.iter().zip(&innovations).map(|(t, e)| (t - e).powi(2)))
    });
    let draws = result.tuples_used;
    let report = EstimateReport {
        kappa_hat,
        kappa_tilde: result.kappa_tilde,
        theta_hat: theta,
        theta_method: est.method,
        a_star_hat: a.a_star_hat,
        m: cfg.m,
        r: path.r(),
        n: path.n(),
        draws,
        partitions: cfg.partitions,
        sampling_se: result.sampling_se,
        se_plugin: se,
        diagnostics: EstimateDiagnostics {
            innovation_ss_resid,
            empty_bucket_fraction: a.empty_bucket_fraction,
            a_star_unreliable: a.unreliable,
            rate_warnings: warnings,
        },
    };
    Ok(SubstitutionRun {
        report,
        innovations,
        ustat: result,
    })
}

/// Constrained U-statistic on known innovations with coefficients `beta`.
pub struct KnownInnovationsRun {
    pub kappa_hat: f64,
    pub a_star_hat: f64,
    pub se_plugin: f64,
    pub ustat: UStatResult,
}

pub fn known_innovations_estimate(
    x: &[f64],
    beta: &[f64],
    h: &SmoothFunction,
    psi: &ConstraintSpec,
    cfg: &UStatConfig,
    stream: &SeedStream,
) -> Result<KnownInnovationsRun> {
    let result = ustat(x, beta, h, cfg, stream)?;
    let a = a_star_hat(x, &result, psi)?;
    let kappa_hat = result.kappa_tilde - a.a_star_hat * mean(&x.iter().map(|&v| psi.psi(v)).collect::<Vec<_>>());
    let se = plugin_se(
        &result,
        &SeInputs {
            innovations: x,
            psi,
            a_star_hat: a.a_star_hat,
            theta_terms: None,
        },
    )?;
    Ok(KnownInnovationsRun {
        kappa_hat,
        a_star_hat: a.a_star_hat,
        se_plugin: se,
        ustat: result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(pre: &[f64], obs: &[f64]) -> ProcessPath {
        ProcessPath::new(pre.to_vec(), obs.to_vec()).unwrap()
    }

    #[test]
    fn least_squares_geometric_path() {
        let p = path(&[1.0], &[0.5, 0.25]);
        assert_eq!(least_squares_ar1(&p).unwrap(), 0.5);
        assert!(least_squares_ar1(&path(&[0.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn ma1_inversion() {
        assert_eq!(invert_ma1_autocorrelation(0.0).unwrap(), 0.0);
        assert!((invert_ma1_autocorrelation(0.4).unwrap() - 0.5).abs() < 1e-15);
        assert!((invert_ma1_autocorrelation(-0.4).unwrap() + 0.5).abs() < 1e-15);
        assert!(matches!(
            invert_ma1_autocorrelation(0.6),
            Err(Error::NoInvertibleRoot(_))
        ));
    }

    #[test]
    fn arma11_inversion_round_trip() {
        for (phi, th) in [(0.5, 0.2), (-0.4, 0.3), (0.8, -0.5), (0.3, 0.0)] {
            // Autocorrelations of (1 - phi B) Y = (1 - th B) X.
            let rho1 = (1.0 - phi * th) * (phi - th) / (1.0 + th * th - 2.0 * phi * th);
            let rho2 = phi * rho1;
            let [p, t] = invert_arma11_autocorrelations(rho1, rho2).unwrap();
            assert!((p - phi).abs() < 1e-12 && (t - th).abs() < 1e-12, "{phi} {th}: {p} {t}");
        }
    }

    #[test]
    fn normal_score_step_matches_least_squares_direction() {
        let model = CoefficientModel::ar1();
        let spec = InnovationSpec::standard_normal();
        let p = model
            .simulate(&[0.5], &spec, 4000, 5, &SeedStream::new(4), 1e-12)
            .unwrap();
        let ls = least_squares_ar1(&p).unwrap();
        // At the LS estimate the Gaussian score sum vanishes.
        let step = one_step_efficient_ar1(&p, ls, &spec, Nuisance::Oracle).unwrap();
        assert!((step - ls).abs() < 1e-12);
        let root = score_root_ar1(&p, &spec).unwrap();
        assert!((root - ls).abs() < 1e-9);
    }

    #[test]
    fn score_root_respects_gamma_support() {
        let model = CoefficientModel::ar1();
        let spec = InnovationSpec::centered_gamma(3.0).unwrap();
        let p = model
            .simulate(&[0.5], &spec, 3000, 5, &SeedStream::new(9), 1e-12)
            .unwrap();
        let t = score_root_ar1(&p, &spec).unwrap();
        let y = p.from_zero();
        assert!(y.windows(2).all(|w| w[1] - t * w[0] > -3.0));
        assert!((t - 0.5).abs() < 0.1);
    }

    #[test]
    fn white_noise_substitution_reduces_to_mean_of_squares() {
        let model = CoefficientModel::ar1();
        let p = path(&[0.3], &[1.0, -2.0, 0.5, 1.5, -0.25]);
        let est = ThetaEstimate {
            theta: vec![0.0],
            method: ThetaMethod::Known,
            clipped: false,
            warnings: vec![],
        };
        let run = substitution_estimate(
            &p,
            &model,
            &est,
            &SmoothFunction::square(),
            &ConstraintSpec::identity(),
            &UStatConfig::exact(1),
            &SeedStream::new(0),
            None,
        )
        .unwrap();
        let y = p.obs();
        let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / 5.0;
        let ybar = y.iter().sum::<f64>() / 5.0;
        let want = mean_sq - run.report.a_star_hat * ybar;
        assert!((run.report.kappa_hat - want).abs() < 1e-13);
    }

    #[test]
    fn clipping_is_reported() {
        let model = CoefficientModel::ar1();
        let e = finish_estimate(&model, vec![1.2], ThetaMethod::LeastSquares);
        assert!(e.clipped);
        assert!((e.theta[0] - 0.999).abs() < 1e-15);
        assert_eq!(e.warnings.len(), 1);
    }
}
