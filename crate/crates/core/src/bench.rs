//! Competing estimators of `E[h(Y_0)]` for AR(1) data, their closed-form
//! asymptotic variances, the Monte Carlo comparison study and the
//! directional-derivative check of the influence function.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::numeric::{compensated_sum, simpson, CompensatedSum};
use crate::plugin::{
    estimate_theta, least_squares_ar1, score_root_ar1, substitution_estimate, Nuisance,
    ThetaEstimate, ThetaMethod,
};
use crate::process::{default_pre_observations, CoefficientModel, ModelName, ProcessPath, DEFAULT_TAIL_TOL};
use crate::rng::SeedStream;
use crate::smooth::{ConstraintSpec, SmoothFunction, SmoothSpec};
use crate::ustat::{choose_m, influence_h_star_many, BetaSequence, UStatConfig};

/// `(1/n) sum_j h(Y_j)`.
pub fn empirical_estimator(path: &ProcessPath, h: &SmoothFunction) -> f64 {
    let y = path.obs();
    compensated_sum(y.iter().map(|&v| h.eval(v))) / y.len() as f64
}

/// `(1/n) sum_j (Y_j - theta Y_{j-1})^k`.
pub fn mu_hat(path: &ProcessPath, theta: f64, k: i32) -> f64 {
    let y = path.from_zero();
    compensated_sum(y.windows(2).map(|w| (w[1] - theta * w[0]).powi(k))) / path.n() as f64
}

/// Improved empirical estimator of `sigma^2` and its correction coefficient
/// `c = mu3_hat / ((1 + theta*) mu2_hat)`.
pub fn improved_empirical_sigma2_with_coef(path: &ProcessPath) -> Result<(f64, f64)> {
    let theta = least_squares_ar1(path)?;
    let mu2 = mu_hat(path, theta, 2);
    let mu3 = mu_hat(path, theta, 3);
    let den = (1.0 + theta) * mu2;
    if den.abs() < 1e-12 {
        return Err(Error::Degenerate("(1 + theta*) mu2_hat vanishes".into()));
    }
    let c = mu3 / den;
    let y = path.obs();
    let est = compensated_sum(y.iter().map(|&v| v * v - c * v)) / y.len() as f64;
    Ok((est, c))
}

/// `(1/n) sum_j (Y_j^2 - mu3_hat / ((1 + theta*) mu2_hat) Y_j)`.
pub fn improved_empirical_sigma2(path: &ProcessPath) -> Result<f64> {
    Ok(improved_empirical_sigma2_with_coef(path)?.0)
}

/// `mu2*_hat / (1 - theta^2)` with `mu2*_hat = mu2_hat - (mu3_hat / mu2_hat) mu1_hat`,
/// residual moments taken at `residual_theta`.
pub fn simple_efficient_sigma2_at(path: &ProcessPath, theta: f64, residual_theta: f64) -> Result<f64> {
    if theta.abs() >= 1.0 {
        return Err(Error::Domain {
            model: "ar1".into(),
            theta: vec![theta],
        });
    }
    let mu1 = mu_hat(path, residual_theta, 1);
    let mu2 = mu_hat(path, residual_theta, 2);
    let mu3 = mu_hat(path, residual_theta, 3);
    let star = if mu1 == 0.0 { mu2 } else { mu2 - mu3 / mu2 * mu1 };
    Ok(star / (1.0 - theta * theta))
}

/// Simple efficient estimator with residual moments at the least-squares fit.
pub fn simple_efficient_sigma2(path: &ProcessPath, theta_sharp: f64) -> Result<f64> {
    let ls = least_squares_ar1(path)?;
    simple_efficient_sigma2_at(path, theta_sharp, ls)
}

/// Innovation moments entering the closed-form variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub fisher_info: Option<f64>,
}

impl Moments {
    pub fn of(spec: &InnovationSpec) -> Self {
        let (mu2, mu3, mu4) = spec.moments234();
        Self {
            mu2,
            mu3,
            mu4,
            fisher_info: spec.fisher_info().ok(),
        }
    }

    fn info(&self) -> Result<f64> {
        self.fisher_info.ok_or(Error::Unavailable("Fisher information"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceKind {
    Empirical,
    Improved,
    UstatLs,
    Efficient,
}

/// Asymptotic variance of `sqrt(n)(estimate - sigma^2)` for AR(1), `h(x) = x^2`.
pub fn asymptotic_variance(which: VarianceKind, theta0: f64, m: &Moments) -> Result<f64> {
    let t2 = theta0 * theta0;
    let one = 1.0 - t2;
    let scale = 1.0 / (one * one);
    let base = m.mu4 - m.mu2 * m.mu2;
    let skew = m.mu3 * m.mu3 / m.mu2;
    Ok(match which {
        VarianceKind::Empirical => scale * (base + 4.0 * m.mu2 * m.mu2 * t2 / one),
        VarianceKind::Improved => scale * (base + 4.0 * m.mu2 * m.mu2 * t2 / one - skew),
        // h_* - a* psi contributes (base - skew) scale; the least-squares
        // term adds grad^2 (1 - theta^2) with grad = 2 mu2 theta / (1 - theta^2)^2.
        VarianceKind::UstatLs => {
            let grad = 2.0 * m.mu2 * theta0 * scale;
            scale * (base - skew) + grad * grad * one
        }
        VarianceKind::Efficient => {
            scale * (base + 4.0 * m.mu2 * t2 / (m.info()? * one) - skew)
        }
    })
}

/// Relative asymptotic variance increase over the efficient estimator.
pub fn relative_variance_increase(which: VarianceKind, theta0: f64, m: &Moments) -> Result<f64> {
    let info = m.info()?;
    let t2 = theta0 * theta0;
    let one = 1.0 - t2;
    let gap = 4.0 * t2 * m.mu2 * (m.mu2 * info - 1.0);
    let den = info * one * (m.mu4 - m.mu2 * m.mu2 - m.mu3 * m.mu3 / m.mu2) + 4.0 * t2 * m.mu2;
    match which {
        VarianceKind::Empirical => Ok((info * one * m.mu3 * m.mu3 / m.mu2 + gap) / den),
        VarianceKind::Improved | VarianceKind::UstatLs => Ok(gap / den),
        VarianceKind::Efficient => Ok(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    Empirical,
    ImprovedEmpirical,
    UstatLs,
    UstatOnestep,
    SimpleEfficient,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::Empirical => "empirical",
            EstimatorId::ImprovedEmpirical => "improved-empirical",
            EstimatorId::UstatLs => "ustat-ls",
            EstimatorId::UstatOnestep => "ustat-onestep",
            EstimatorId::SimpleEfficient => "simple-efficient",
        }
    }

    fn variance_kind(&self) -> VarianceKind {
        match self {
            EstimatorId::Empirical => VarianceKind::Empirical,
            EstimatorId::ImprovedEmpirical => VarianceKind::Improved,
            EstimatorId::UstatLs => VarianceKind::UstatLs,
            EstimatorId::UstatOnestep | EstimatorId::SimpleEfficient => VarianceKind::Efficient,
        }
    }

    fn needs_ar1_square(&self) -> bool {
        matches!(
            self,
            EstimatorId::ImprovedEmpirical | EstimatorId::SimpleEfficient | EstimatorId::UstatOnestep
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelName,
    pub theta0: Vec<f64>,
    pub innovations: InnovationSpec,
    pub h: SmoothSpec,
    pub n: usize,
    /// Pre-observations; `None` means `ceil((log n)^1.1)`.
    pub r: Option<usize>,
    pub replications: usize,
    pub estimators: Vec<EstimatorId>,
    pub seed: u64,
    /// U-statistic order; `None` means [`choose_m`] with `c = 1`, `eps = 0.1`.
    pub m: Option<usize>,
    /// Tuple draws; `None` means `200 n m`.
    pub draws: Option<u64>,
    pub partitions: usize,
    #[serde(default)]
    pub nuisance: Nuisance,
}

impl StudyConfig {
    /// AR(1) study with every estimator and automatic `r`, `m`, `B`.
    pub fn ar1(theta0: f64, innovations: InnovationSpec, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            model: ModelName::Ar1,
            theta0: vec![theta0],
            innovations,
            h: SmoothSpec::Square,
            n,
            r: None,
            replications,
            estimators: vec![
                EstimatorId::Empirical,
                EstimatorId::ImprovedEmpirical,
                EstimatorId::UstatLs,
                EstimatorId::SimpleEfficient,
            ],
            seed,
            m: None,
            draws: None,
            partitions: 1,
            nuisance: Nuisance::Oracle,
        }
    }

    pub fn coefficient_model(&self) -> CoefficientModel {
        match self.model {
            ModelName::Ar1 => CoefficientModel::ar1(),
            ModelName::Ma1 => CoefficientModel::ma1(),
            ModelName::Arma11 => CoefficientModel::arma11(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Config("a study needs at least 2 replications".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimator list is empty".into()));
        }
        if self.n < 8 {
            return Err(Error::Config("a study needs n >= 8".into()));
        }
        self.innovations.clone().validated()?;
        self.coefficient_model().check_domain(&self.theta0)?;
        let h = SmoothFunction::from_spec(&self.h)?;
        for e in &self.estimators {
            if e.needs_ar1_square() && (self.model != ModelName::Ar1 || !h.is_square()) {
                return Err(Error::Config(format!(
                    "estimator {} needs model ar1 and h = square",
                    e.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Auto fields filled in.
    pub fn resolve(&self) -> Result<ResolvedStudy> {
        self.validate()?;
        let model = self.coefficient_model();
        let mut warnings = Vec::new();
        let r = self.r.unwrap_or_else(|| default_pre_observations(self.n, 1.0, 0.1));
        let m = match self.m {
            Some(m) => m,
            None => {
                let beta = BetaSequence::from_model(&model, &self.theta0, 1e-12)?;
                let choice = choose_m(self.n, &beta, 1.0, 0.1)?;
                warnings.extend(choice.warnings);
                choice.m
            }
        };
        if m == 0 || m > self.n {
            return Err(Error::InvalidOrder { m, n: self.n });
        }
        let draws = self.draws.unwrap_or_else(|| UStatConfig::auto_draws(self.n, m));
        Ok(ResolvedStudy {
            r,
            m,
            draws,
            partitions: self.partitions.max(1),
            warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedStudy {
    pub r: usize,
    pub m: usize,
    pub draws: u64,
    pub partitions: usize,
    pub warnings: Vec<String>,
}

/// One CSV row. Ratio rows carry the measured ratio in `mean` and the
/// difference to the closed form in `bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub estimator: String,
    pub mean: f64,
    pub bias: Option<f64>,
    pub n_var: Option<f64>,
    pub target: Option<f64>,
    pub rel_dev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub resolved: ResolvedStudy,
    pub truth: f64,
    pub rows: Vec<StudyRow>,
    pub ratios: Vec<StudyRow>,
    pub replications_used: usize,
    pub replications_failed: usize,
    pub failure_messages: Vec<String>,
    /// Per-replication estimates, one vector per estimator in list order.
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl StudyResult {
    pub fn row(&self, name: &str) -> Option<&StudyRow> {
        self.rows.iter().chain(&self.ratios).find(|r| r.estimator == name)
    }

    /// CSV with columns `estimator,mean,bias,n_var,target,rel_dev`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("estimator,mean,bias,n_var,target,rel_dev\n");
        for r in self.rows.iter().chain(&self.ratios) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.estimator,
                r.mean,
                fmt_opt(r.bias),
                fmt_opt(r.n_var),
                fmt_opt(r.target),
                fmt_opt(r.rel_dev)
            );
        }
        s
    }
}

/// `E[h(Y_0)]` under the stationary law: closed form for square, identity
/// and constants, otherwise a Monte Carlo value from a dedicated stream.
pub fn stationary_expectation(
    model: &CoefficientModel,
    theta: &[f64],
    spec: &InnovationSpec,
    h: &SmoothFunction,
    stream: &SeedStream,
) -> Result<f64> {
    if h.is_constant() {
        return Ok(h.eval(0.0));
    }
    let beta = BetaSequence::from_model(model, theta, 1e-14)?;
    let horizon = beta.horizon(1e-14)?.max(1);
    let coef = beta.head(horizon);
    if let Some(c) = h.polynomial_coefficients() {
        if c.len() <= 3 {
            let sq: f64 = coef.iter().map(|b| b * b).sum();
            return Ok(c[0] + c.get(2).copied().unwrap_or(0.0) * spec.moment(2)? * sq);
        }
    }
    let mut rng = stream.rng();
    let mut x = vec![0.0; horizon];
    let mut acc = CompensatedSum::new();
    let draws = 1_000_000;
    for _ in 0..draws {
        spec.fill(&mut rng, &mut x);
        acc.add(h.eval(coef.iter().zip(&x).map(|(b, v)| b * v).sum()));
    }
    Ok(acc.value() / draws as f64)
}

/// Estimates of one replication, in the order of `cfg.estimators`.
pub fn replicate(cfg: &StudyConfig, resolved: &ResolvedStudy, index: u64) -> Result<Vec<f64>> {
    let model = cfg.coefficient_model();
    let h = SmoothFunction::from_spec(&cfg.h)?;
    let psi = ConstraintSpec::identity();
    let root = SeedStream::new(cfg.seed).derive("replication", index);
    let path = model.simulate(
        &cfg.theta0,
        &cfg.innovations,
        cfg.n,
        resolved.r,
        &root.derive("path", 0),
        DEFAULT_TAIL_TOL,
    )?;
    let ucfg = UStatConfig::incomplete(resolved.m, resolved.draws).with_partitions(resolved.partitions);
    // Common random numbers: both U-statistics use the same tuple stream.
    let ustream = root.derive("ustat", 0);
    let mut ls: Option<ThetaEstimate> = None;
    let mut sharp: Option<f64> = None;
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for e in &cfg.estimators {
        let v = match e {
            EstimatorId::Empirical => empirical_estimator(&path, &h),
            EstimatorId::ImprovedEmpirical => improved_empirical_sigma2(&path)?,
            EstimatorId::UstatLs => {
                if ls.is_none() {
                    ls = Some(estimate_theta(&path, &model, ThetaMethod::MomentMatch)?);
                }
                let est = ls.as_ref().expect("set above");
                substitution_estimate(&path, &model, est, &h, &psi, &ucfg, &ustream, Some(&cfg.innovations))?
                    .report
                    .kappa_hat
            }
            EstimatorId::UstatOnestep | EstimatorId::SimpleEfficient => {
                if sharp.is_none() {
                    sharp = Some(score_root_ar1(&path, &cfg.innovations)?);
                }
                let t = sharp.expect("set above");
                if *e == EstimatorId::SimpleEfficient {
                    simple_efficient_sigma2(&path, t)?
                } else {
                    let est = ThetaEstimate {
                        theta: vec![t],
                        method: ThetaMethod::ScoreRoot,
                        clipped: false,
                        warnings: vec![],
                    };
                    substitution_estimate(&path, &model, &est, &h, &psi, &ucfg, &ustream, Some(&cfg.innovations))?
                        .report
                        .kappa_hat
                }
            }
        };
        if !v.is_finite() {
            return Err(Error::Degenerate(format!("{} produced {v}", e.as_str())));
        }
        out.push(v);
    }
    Ok(out)
}

fn mean_and_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = compensated_sum(v.iter().copied()) / n;
    let var = compensated_sum(v.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, var)
}

/// Runs `N` replications of simulate-then-estimate with shared paths across
/// estimators. Replications run in parallel; results are assembled in
/// replication order so the output does not depend on the schedule.
pub fn monte_carlo_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let resolved = cfg.resolve()?;
    let model = cfg.coefficient_model();
    let h = SmoothFunction::from_spec(&cfg.h)?;
    let truth = stationary_expectation(
        &model,
        &cfg.theta0,
        &cfg.innovations,
        &h,
        &SeedStream::new(cfg.seed).derive("truth", 0),
    )?;
    let outcomes: Vec<Result<Vec<f64>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|i| replicate(cfg, &resolved, i))
        .collect();
    let k = cfg.estimators.len();
    let mut estimates = vec![Vec::with_capacity(cfg.replications); k];
    let mut failed = 0;
    let mut messages = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => {
                for (col, x) in estimates.iter_mut().zip(v) {
                    col.push(x);
                }
            }
            Err(e) => {
                failed += 1;
                if messages.len() < 10 {
                    messages.push(format!("replication {i}: {e}"));
                }
            }
        }
    }
    let used = cfg.replications - failed;
    if used < 2 {
        return Err(Error::Degenerate(format!(
            "only {used} replications succeeded; first failures: {messages:?}"
        )));
    }
    let closed_forms = model.is_ar1() && h.is_square();
    let moments = Moments::of(&cfg.innovations);
    let theta0 = cfg.theta0[0];
    let nf = cfg.n as f64;
    let mut rows = Vec::with_capacity(k);
    for (e, col) in cfg.estimators.iter().zip(&estimates) {
        let (mean, var) = mean_and_var(col);
        let target = if closed_forms {
            asymptotic_variance(e.variance_kind(), theta0, &moments).ok()
        } else {
            None
        };
        let n_var = nf * var;
        rows.push(StudyRow {
            estimator: e.as_str().to_string(),
            mean,
            bias: Some(mean - truth),
            n_var: Some(n_var),
            target,
            rel_dev: target.map(|t| (n_var - t) / t),
        });
    }
    let mut ratios = Vec::new();
    let find = |id: EstimatorId| {
        cfg.estimators
            .iter()
            .position(|e| *e == id)
            .and_then(|i| rows[i].n_var)
    };
    if closed_forms && moments.fisher_info.is_some() {
        if let Some(v_eff) = find(EstimatorId::SimpleEfficient) {
            for (id, name, kind) in [
                (EstimatorId::Empirical, "ratio_empirical", VarianceKind::Empirical),
                (EstimatorId::ImprovedEmpirical, "ratio_improved", VarianceKind::Improved),
            ] {
                if let Some(v) = find(id) {
                    let measured = (v - v_eff) / v_eff;
                    let target = relative_variance_increase(kind, theta0, &moments)?;
                    ratios.push(StudyRow {
                        estimator: name.to_string(),
                        mean: measured,
                        bias: Some(measured - target),
                        n_var: None,
                        target: Some(target),
                        rel_dev: (target != 0.0).then(|| (measured - target) / target),
                    });
                }
            }
        }
    }
    Ok(StudyResult {
        config: cfg.clone(),
        resolved,
        truth,
        rows,
        ratios,
        replications_used: used,
        replications_failed: failed,
        failure_messages: messages,
        estimates,
    })
}

/// Bounded perturbation direction `g` with `int g dP = 0`.
#[derive(Clone)]
pub struct Direction {
    pub name: String,
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Upper bound on `|g|`.
    pub bound: f64,
}

impl std::fmt::Debug for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Direction")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .finish()
    }
}

const DIRECTION_INTERVALS: usize = 20_000;

impl Direction {
    /// Recentres `raw` (with `|raw| <= raw_bound`) under `spec` and, if
    /// asked, scales it to unit `L2(P)` norm.
    pub fn new(
        name: &str,
        raw: impl Fn(f64) -> f64 + Send + Sync + 'static,
        raw_bound: f64,
        spec: &InnovationSpec,
        normalize: bool,
    ) -> Result<Self> {
        let (a, b) = spec
            .integration_range()
            .ok_or(Error::Unavailable("density for the perturbation direction"))?;
        let pdf = |x: f64| spec.pdf(x).unwrap_or(0.0);
        let mean = simpson(|x| raw(x) * pdf(x), a, b, DIRECTION_INTERVALS);
        let scale = if normalize {
            let var = simpson(|x| (raw(x) - mean).powi(2) * pdf(x), a, b, DIRECTION_INTERVALS);
            if var <= 0.0 {
                return Err(Error::Degenerate("direction is constant under P".into()));
            }
            1.0 / var.sqrt()
        } else {
            1.0
        };
        Ok(Self {
            name: name.to_string(),
            bound: (raw_bound + mean.abs()) * scale,
            g: Arc::new(move |x| (raw(x) - mean) * scale),
        })
    }

    /// `min(x^2, c^2) - 1`, recentred and normalised.
    pub fn truncated_quadratic(spec: &InnovationSpec, c: f64) -> Result<Self> {
        let c2 = c * c;
        Self::new("truncated-quadratic", move |x| (x * x).min(c2) - 1.0, (c2 - 1.0).abs().max(1.0), spec, true)
    }

    /// `min(|x|, c)`, recentred.
    pub fn clipped_abs(spec: &InnovationSpec, c: f64) -> Result<Self> {
        Self::new("clipped-abs", move |x| x.abs().min(c), c, spec, false)
    }

    /// `clamp(x, -c, c)`, recentred; odd, so orthogonal to even `h_*` under a symmetric `P`.
    pub fn clipped_identity(spec: &InnovationSpec, c: f64) -> Result<Self> {
        Self::new("clipped-identity", move |x| x.clamp(-c, c), c, spec, false)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub direction: String,
    pub slope: f64,
    pub target: f64,
    pub rel_error: f64,
    pub eps: Vec<f64>,
    pub kappa_eps: Vec<f64>,
    pub horizon: usize,
    pub mc: usize,
    pub target_mc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckConfig {
    pub eps: Vec<f64>,
    pub mc: usize,
    pub target_mc: usize,
    pub quadrature_intervals: usize,
    pub tail_tol: f64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.02, 0.05, 0.1, 0.15],
            mc: 1_000_000,
            target_mc: 50_000,
            quadrature_intervals: 400,
            tail_tol: 1e-10,
        }
    }
}

/// Least-squares quadratic through `(x_i, y_i)`; returns `(c0, c1, c2)`.
fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    let mut a = [[0.0f64; 4]; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let p = [1.0, xi, xi * xi];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += p[r] * p[c];
            }
            a[r][3] += p[r] * yi;
        }
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Degenerate("quadratic fit needs three distinct points".into()));
        }
        a.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..4 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Ok([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// Derivative of `eps -> E_{P_eps}[h(S)]`, `dP_eps = (1 + eps g) dP`, at 0,
/// compared with `int h_* g dP`.
///
/// `E_{P_eps}` is estimated by self-normalised importance weights
/// `prod_r (1 + eps g(X_r))` over the series horizon, with one sample shared
/// by all `eps`; the slope is the linear coefficient of a quadratic fit that
/// includes `eps = 0`. The target integrates a Monte Carlo `h_*` (own
/// stream) against `g` by Simpson's rule.
pub fn gradient_check(
    spec: &InnovationSpec,
    beta: &BetaSequence,
    h: &SmoothFunction,
    g: &Direction,
    cfg: &GradientCheckConfig,
    stream: &SeedStream,
) -> Result<GradientReport> {
    if cfg.eps.is_empty() || cfg.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("eps grid must be nonempty and positive".into()));
    }
    let eps_max = cfg.eps.iter().fold(0.0f64, |m, &e| m.max(e));
    if eps_max * g.bound >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "weights 1 + eps g can be nonpositive (eps {eps_max}, sup |g| <= {})",
            g.bound
        )));
    }
    if cfg.mc == 0 || cfg.target_mc == 0 {
        return Err(Error::InvalidArgument("gradient check needs mc >= 1".into()));
    }
    let horizon = beta.horizon(cfg.tail_tol)?.max(1);
    let coef = beta.head(horizon);
    let mut eps = vec![0.0];
    eps.extend(cfg.eps.iter().copied());
    let mut num = vec![CompensatedSum::new(); eps.len()];
    let mut den = vec![CompensatedSum::new(); eps.len()];
    let mut rng = stream.derive("weights", 0).rng();
    let mut x = vec![0.0; horizon];
    let mut gx = vec![0.0; horizon];
    for _ in 0..cfg.mc {
        spec.fill(&mut rng, &mut x);
        let s: f64 = coef.iter().zip(&x).map(|(b, v)| b * v).sum();
        let hs = h.eval(s);
        for (gi, &xi) in gx.iter_mut().zip(&x) {
            *gi = g.eval(xi);
        }
        for (k, &e) in eps.iter().enumerate() {
            let w: f64 = gx.iter().map(|gi| 1.0 + e * gi).product();
            num[k].add(w * hs);
            den[k].add(w);
        }
    }
    let kappa: Vec<f64> = num.iter().zip(&den).map(|(a, b)| a.value() / b.value()).collect();
    let [_, slope, _] = quadratic_fit(&eps, &kappa)?;

    let (a, b) = spec
        .integration_range()
        .ok_or(Error::Unavailable("density for the gradient target"))?;
    let intervals = (cfg.quadrature_intervals + cfg.quadrature_intervals % 2).max(2);
    let step = (b - a) / intervals as f64;
    let nodes: Vec<f64> = (0..=intervals).map(|i| a + i as f64 * step).collect();
    let hstar = influence_h_star_many(spec, beta, h, &nodes, cfg.target_mc, &stream.derive("target", 0), cfg.tail_tol)?;
    let mut acc = CompensatedSum::new();
    for (i, (&xn, &hv)) in nodes.iter().zip(&hstar).enumerate() {
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc.add(w * hv * g.eval(xn) * spec.pdf(xn).unwrap_or(0.0));
    }
    let target = acc.value() * step / 3.0;
    Ok(GradientReport {
        direction: g.name.clone(),
        slope,
        target,
        rel_error: if target != 0.0 { (slope - target).abs() / target.abs() } else { slope.abs() },
        eps,
        kappa_eps: kappa,
        horizon,
        mc: cfg.mc,
        target_mc: cfg.target_mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_moments() -> Moments {
        Moments::of(&InnovationSpec::centered_gamma(3.0).unwrap())
    }

    #[test]
    fn closed_form_variances() {
        let m = gamma_moments();
        let v = |k| asymptotic_variance(k, 0.5, &m).unwrap();
        assert!((v(VarianceKind::Empirical) - 48.0 / 0.5625).abs() < 1e-12);
        assert!((v(VarianceKind::Improved) - 64.0).abs() < 1e-12);
        assert!((v(VarianceKind::UstatLs) - 64.0).abs() < 1e-12);
        assert!((v(VarianceKind::Efficient) - 28.0 / 0.5625).abs() < 1e-12);
        let r = |k| relative_variance_increase(k, 0.5, &m).unwrap();
        assert!((r(VarianceKind::Empirical) - 15.0 / 21.0).abs() < 1e-14);
        assert!((r(VarianceKind::Improved) - 6.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn variances_coincide_without_skew_at_zero() {
        let m = Moments::of(&InnovationSpec::centered_laplace(1.0).unwrap());
        let base = m.mu4 - m.mu2 * m.mu2;
        for k in [
            VarianceKind::Empirical,
            VarianceKind::Improved,
            VarianceKind::UstatLs,
            VarianceKind::Efficient,
        ] {
            assert!((asymptotic_variance(k, 0.0, &m).unwrap() - base).abs() < 1e-12);
        }
        let normal = Moments::of(&InnovationSpec::standard_normal());
        assert_eq!(relative_variance_increase(VarianceKind::Improved, 0.7, &normal).unwrap(), 0.0);
        let two = Moments::of(&InnovationSpec::two_point(0.3, 1.0).unwrap());
        assert!(asymptotic_variance(VarianceKind::Efficient, 0.5, &two).is_err());
    }

    #[test]
    fn small_estimator_examples() {
        let p = ProcessPath::new(vec![0.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert!((empirical_estimator(&p, &SmoothFunction::square()) - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(empirical_estimator(&p, &SmoothFunction::constant(2.0)), 2.0);
        assert!((mu_hat(&p, 0.0, 2) - 14.0 / 3.0).abs() < 1e-15);
        let g = ProcessPath::new(vec![1.0], vec![0.5, 0.25]).unwrap();
        assert_eq!(mu_hat(&g, 0.5, 2), 0.0);
        assert_eq!(simple_efficient_sigma2_at(&g, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let x = [0.0, 0.1, 0.2, 0.5];
        let y: Vec<f64> = x.iter().map(|t| 1.0 - 2.0 * t + 3.0 * t * t).collect();
        let c = quadratic_fit(&x, &y).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-12 && (c[2] - 3.0).abs() < 1e-11);
    }

    #[test]
    fn smoke_study() {
        let spec = InnovationSpec::centered_gamma(3.0).unwrap();
        let mut cfg = StudyConfig::ar1(0.5, spec, 50, 2, 1);
        cfg.draws = Some(2000);
        let res = monte_carlo_study(&cfg).unwrap();
        assert_eq!(res.replications_used, 2);
        assert_eq!(res.rows.len(), 4);
        assert_eq!(res.ratios.len(), 2);
        assert!(res.rows.iter().all(|r| r.target.is_some()));
        assert!(res.to_csv().starts_with("estimator,mean,bias,n_var,target,rel_dev\n"));
    }

    #[test]
    fn constant_functional_has_zero_slope() {
        let spec = InnovationSpec::standard_normal();
        let g = Direction::truncated_quadratic(&spec, 3.0).unwrap();
        let cfg = GradientCheckConfig {
            mc: 2000,
            target_mc: 100,
            ..Default::default()
        };
        let r = gradient_check(
            &spec,
            &BetaSequence::geometric(1.0, 0.5),
            &SmoothFunction::constant(2.0),
            &g,
            &cfg,
            &SeedStream::new(1),
        )
        .unwrap();
        assert!(r.slope.abs() < 1e-9);
        assert_eq!(r.target, 0.0);
    }
}
