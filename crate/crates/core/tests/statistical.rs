//! Monte Carlo checks of estimator behaviour against closed-form targets.
//! AR(1) at 0.5 with centered Gamma(3, 1) innovations unless stated:
//! mu2 = 3, mu3 = 6, mu4 = 45, I = 1, sigma^2 = 4.

use std::sync::OnceLock;

use rayon::prelude::*;

use linproc_ustat::bench::{improved_empirical_sigma2, improved_empirical_sigma2_with_coef, mu_hat, simple_efficient_sigma2};
use linproc_ustat::plugin::{
    estimate_theta, known_innovations_estimate, least_squares_ar1, one_step_efficient_ar1, score_root_ar1,
    substitution_estimate, Nuisance, ThetaEstimate, ThetaMethod,
};
use linproc_ustat::process::DEFAULT_TAIL_TOL;
use linproc_ustat::ustat::{BetaSequence, UStatConfig};
use linproc_ustat::{CoefficientModel, ConstraintSpec, InnovationSpec, SeedStream, SmoothFunction};

const N: usize = 2000;
const REPS: u64 = 500;
const THETA0: f64 = 0.5;
const SIGMA2: f64 = 4.0;

fn gamma3() -> InnovationSpec {
    InnovationSpec::centered_gamma(3.0).unwrap()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

fn n_var(v: &[f64], n: usize) -> f64 {
    mean_var(v).1 * n as f64
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

struct Rep {
    ls: f64,
    /// `None` when a residual at the initial fit leaves the gamma support.
    one_step: Option<f64>,
    root: f64,
    improved: f64,
    simple_efficient: f64,
    kappa_hat: f64,
    se_plugin: f64,
    kappa_tilde_hat: f64,
    kappa_tilde_true: f64,
    known_tilde: f64,
    known_hat: f64,
    known_se: f64,
}

fn sample() -> &'static Vec<Rep> {
    static CELL: OnceLock<Vec<Rep>> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = CoefficientModel::ar1();
        let spec = gamma3();
        let h = SmoothFunction::square();
        let psi = ConstraintSpec::identity();
        let m = 5;
        let ucfg = UStatConfig::incomplete(m, UStatConfig::auto_draws(N, m));
        let root = SeedStream::new(31);
        (0..REPS)
            .into_par_iter()
            .map(|i| {
                let rs = root.derive("replication", i);
                let path = model.simulate(&[THETA0], &spec, N, 10, &rs.derive("path", 0), DEFAULT_TAIL_TOL).unwrap();
                let ls = least_squares_ar1(&path).unwrap();
                let est = estimate_theta(&path, &model, ThetaMethod::LeastSquares).unwrap();
                let ustream = rs.derive("ustat", 0);
                let run = substitution_estimate(&path, &model, &est, &h, &psi, &ucfg, &ustream, Some(&spec)).unwrap();
                let at_truth = ThetaEstimate {
                    theta: vec![THETA0],
                    method: ThetaMethod::Known,
                    clipped: false,
                    warnings: vec![],
                };
                let truth_run =
                    substitution_estimate(&path, &model, &at_truth, &h, &psi, &ucfg, &ustream, Some(&spec)).unwrap();
                let x = path.true_innovations.clone().unwrap();
                let beta = BetaSequence::geometric(1.0, THETA0).head(m);
                let known = known_innovations_estimate(&x, &beta, &h, &psi, &ucfg, &rs.derive("known", 0)).unwrap();
                let root_theta = score_root_ar1(&path, &spec).unwrap();
                Rep {
                    ls,
                    one_step: one_step_efficient_ar1(&path, ls, &spec, Nuisance::Oracle).ok(),
                    root: root_theta,
                    improved: improved_empirical_sigma2(&path).unwrap(),
                    simple_efficient: simple_efficient_sigma2(&path, root_theta).unwrap(),
                    kappa_hat: run.report.kappa_hat,
                    se_plugin: run.report.se_plugin,
                    kappa_tilde_hat: run.report.kappa_tilde,
                    kappa_tilde_true: truth_run.report.kappa_tilde,
                    known_tilde: known.ustat.kappa_tilde,
                    known_hat: known.kappa_hat,
                    known_se: known.se_plugin,
                }
            })
            .collect()
    })
}

fn column(f: impl Fn(&Rep) -> f64) -> Vec<f64> {
    sample().iter().map(f).collect()
}

#[test]
fn least_squares_variance() {
    let v = n_var(&column(|r| r.ls), N);
    assert!(within(v, 0.75, 0.15), "n var of LS = {v}");
}

#[test]
fn one_step_variance_reaches_information_bound() {
    // (1 - theta^2) / (mu2 I) = 0.25
    let ok: Vec<f64> = sample().iter().filter_map(|r| r.one_step).collect();
    let v = n_var(&ok, N);
    eprintln!("one-step defined in {} of {REPS} replications", ok.len());
    assert!(within(v, 0.25, 0.15), "n var of one-step = {v} over {} replications", ok.len());
}

#[test]
fn score_root_variance_reaches_information_bound() {
    let v = n_var(&column(|r| r.root), N);
    assert!(within(v, 0.25, 0.15), "n var of score root = {v}");
}

#[test]
fn improved_empirical_mean_and_variance() {
    let c = column(|r| r.improved);
    let (m, var) = mean_var(&c);
    let se = (var / c.len() as f64).sqrt();
    assert!((m - SIGMA2).abs() <= 3.0 * se, "mean {m}, se {se}");
    assert!(within(var * N as f64, 64.0, 0.15), "n var {}", var * N as f64);
}

#[test]
fn simple_efficient_variance() {
    let v = n_var(&column(|r| r.simple_efficient), N);
    assert!(within(v, 28.0 / 0.5625, 0.15), "n var {v}");
}

#[test]
fn substitution_estimate_mean_and_variance() {
    let c = column(|r| r.kappa_hat);
    let (m, var) = mean_var(&c);
    let se = (var / c.len() as f64).sqrt();
    assert!((m - SIGMA2).abs() <= 3.0 * se, "mean {m}, se {se}");
    assert!(within(var * N as f64, 64.0, 0.15), "n var {}", var * N as f64);
}

#[test]
fn plugin_intervals_cover() {
    let covered = sample()
        .iter()
        .filter(|r| (r.kappa_hat - SIGMA2).abs() <= 1.96 * r.se_plugin)
        .count() as f64
        / REPS as f64;
    assert!((0.92..=0.98).contains(&covered), "coverage {covered}");
}

#[test]
fn known_innovations_standard_error() {
    // sqrt(64 - (8/3)^2 * 3)
    let target = (64.0f64 - 64.0 / 3.0).sqrt();
    let mean_se = column(|r| r.known_se).iter().sum::<f64>() / REPS as f64;
    let scaled = mean_se * (N as f64).sqrt();
    assert!(within(scaled, target, 0.20), "se * sqrt(n) = {scaled}, target {target}");
}

#[test]
fn constraint_correction_reduces_variance() {
    let plain = n_var(&column(|r| r.known_tilde), N);
    let corrected = n_var(&column(|r| r.known_hat), N);
    assert!(within(plain, 64.0, 0.15), "plain {plain}");
    assert!(within(corrected, 64.0 - 64.0 / 3.0, 0.15), "corrected {corrected}");
    assert!(corrected < plain, "plain {plain}, corrected {corrected}");
}

#[test]
fn linearization_slope_in_theta() {
    // d/dtheta mu2 / (1 - theta^2) = 2 theta mu2 / (1 - theta^2)^2
    let target = 2.0 * THETA0 * 3.0 / (0.75f64 * 0.75);
    let (dx, dy): (Vec<f64>, Vec<f64>) =
        sample().iter().map(|r| (r.ls - THETA0, r.kappa_tilde_hat - r.kappa_tilde_true)).unzip();
    let (mx, _) = mean_var(&dx);
    let (my, _) = mean_var(&dy);
    let sxy: f64 = dx.iter().zip(&dy).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = dx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    assert!(within(slope, target, 0.10), "slope {slope}, target {target}");
}

#[test]
fn improved_correction_coefficient_converges() {
    let path = CoefficientModel::ar1()
        .simulate(&[THETA0], &gamma3(), 100_000, 10, &SeedStream::new(32), DEFAULT_TAIL_TOL)
        .unwrap();
    let (_, c) = improved_empirical_sigma2_with_coef(&path).unwrap();
    assert!((c - 4.0 / 3.0).abs() < 0.15, "c = {c}");
    let mu3 = mu_hat(&path, least_squares_ar1(&path).unwrap(), 3);
    // sd of the residual third moment is sqrt(mu6 - mu3^2) / sqrt(n) = sqrt(1899) / sqrt(n)
    let se = (1899.0f64 / 100_000.0).sqrt();
    assert!((mu3 - 6.0).abs() <= 4.0 * se, "mu3_hat {mu3}");
}

#[test]
fn a_star_error_shrinks_with_n() {
    let spec = gamma3();
    let beta_seq = BetaSequence::geometric(1.0, THETA0);
    let h = SmoothFunction::square();
    let reps = 16u64;
    let errs: Vec<f64> = [500usize, 2000, 8000]
        .iter()
        .map(|&n| {
            let m = linproc_ustat::ustat::choose_m(n, &beta_seq, 1.0, 0.1).unwrap().m;
            let beta = beta_seq.head(m);
            let cfg = UStatConfig::incomplete(m, UStatConfig::auto_draws(n, m));
            (0..reps)
                .into_par_iter()
                .map(|i| {
                    let s = SeedStream::new(33).derive("n", n as u64).derive("rep", i);
                    let x = spec.sample(n, &s.derive("x", 0));
                    let run =
                        known_innovations_estimate(&x, &beta, &h, &ConstraintSpec::identity(), &cfg, &s.derive("u", 0))
                            .unwrap();
                    (run.a_star_hat - 8.0 / 3.0).abs()
                })
                .sum::<f64>()
                / reps as f64
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "mean abs errors {errs:?}");
}

#[test]
fn symmetric_innovations_gain_nothing_from_correction() {
    let spec = InnovationSpec::standard_normal();
    let h = SmoothFunction::square();
    let m = 5;
    let beta = BetaSequence::geometric(1.0, THETA0).head(m);
    let cfg = UStatConfig::incomplete(m, UStatConfig::auto_draws(N, m));
    let pairs: Vec<(f64, f64)> = (0..300u64)
        .into_par_iter()
        .map(|i| {
            let s = SeedStream::new(34).derive("rep", i);
            let x = spec.sample(N, &s.derive("x", 0));
            let run = known_innovations_estimate(&x, &beta, &h, &ConstraintSpec::identity(), &cfg, &s.derive("u", 0))
                .unwrap();
            (run.ustat.kappa_tilde, run.kappa_hat)
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    // a* = 0 here; both match int h_*^2 dP = 2 / 0.5625, and their ratio sits
    // inside the Monte Carlo band of two independent replication variances.
    let target = 2.0 / 0.5625;
    let (plain, corrected) = (n_var(&a, N), n_var(&b, N));
    assert!(within(plain, target, 0.15), "plain {plain}");
    assert!(within(corrected, target, 0.15), "corrected {corrected}");
    let band = 2.0 * (4.0 / (a.len() as f64 - 1.0)).sqrt();
    assert!((corrected / plain - 1.0).abs() <= band, "variance ratio {}", corrected / plain);
}

/// Mean of `kappa_hat` over replications at `n` for a non-AR(1) model, and its SE.
fn substitution_mean(model: &CoefficientModel, theta: &[f64], n: usize, reps: u64) -> (f64, f64) {
    let spec = gamma3();
    let h = SmoothFunction::square();
    let v: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = SeedStream::new(35).derive(model.name(), n as u64).derive("rep", i);
            let path = model.simulate(theta, &spec, n, 12, &s.derive("path", 0), DEFAULT_TAIL_TOL).unwrap();
            let est = estimate_theta(&path, model, ThetaMethod::MomentMatch).unwrap();
            let beta = BetaSequence::from_model(model, &est.theta, 1e-12).unwrap();
            let m = linproc_ustat::ustat::choose_m(n, &beta, 1.0, 0.1).unwrap().m;
            let cfg = UStatConfig::incomplete(m, UStatConfig::auto_draws(n, m));
            substitution_estimate(&path, model, &est, &h, &ConstraintSpec::identity(), &cfg, &s.derive("u", 0), Some(&spec))
                .unwrap()
                .report
                .kappa_hat
        })
        .collect();
    let (m, var) = mean_var(&v);
    (m, (var / reps as f64).sqrt())
}

#[test]
fn substitution_consistency_ma1() {
    // E[Y^2] = mu2 (1 + theta^2)
    let target = 3.0 * 1.25;
    for n in [500, 2000] {
        let (m, se) = substitution_mean(&CoefficientModel::ma1(), &[0.5], n, 60);
        assert!((m - target).abs() <= 4.0 * se, "n = {n}: mean {m}, se {se}");
    }
}

#[test]
fn substitution_consistency_arma11() {
    let model = CoefficientModel::arma11();
    let theta = [0.5, 0.3];
    // Weights 1, (t1 - t2) t1^(s-1): mu2 (1 + (t1 - t2)^2 / (1 - t1^2)).
    let target = 3.0 * (1.0 + 0.04 / 0.75);
    for n in [500, 2000] {
        let (m, se) = substitution_mean(&model, &theta, n, 60);
        assert!((m - target).abs() <= 4.0 * se, "n = {n}: mean {m}, se {se}, target {target}");
    }
}
