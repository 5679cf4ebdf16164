//! C ABI for `linproc-ustat`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_simulate`
//! style functions and released with the matching `*_free`. Every fallible
//! function returns a [`LinprocStatus`]; the message of the last failure on the
//! calling thread is available from [`linproc_last_error_message`].

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use linproc_ustat::bench::{asymptotic_variance, Moments, VarianceKind};
use linproc_ustat::plugin::{estimate_theta_with_spec, substitution_estimate, EstimateReport, Nuisance, ThetaMethod};
use linproc_ustat::process::DEFAULT_TAIL_TOL;
use linproc_ustat::ustat::{choose_m, ustat_exact, ustat_incomplete, BetaSequence, UStatConfig};
use linproc_ustat::{CoefficientModel, ConstraintSpec, Error, InnovationSpec, ProcessPath, SeedStream, SmoothFunction};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinprocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Parameter outside the model domain or a boundary problem.
    Numerical = 3,
    /// Output buffer too small; the required length is reported.
    BufferTooSmall = 4,
    Unavailable = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinprocModel {
    Ar1 = 0,
    Ma1 = 1,
    Arma11 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinprocFamily {
    StandardNormal = 0,
    /// `param1` = shape.
    CenteredGamma = 1,
    /// `param1` = scale.
    CenteredLaplace = 2,
    /// `param1` = half width.
    CenteredUniform = 3,
    /// `param1` = p, `param2` = upper value.
    TwoPoint = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LinprocInnovations {
    pub family: LinprocFamily,
    pub param1: f64,
    pub param2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinprocTargetKind {
    Square = 0,
    Identity = 1,
    Abs = 2,
    /// `cos(param x)`.
    CosT = 3,
    /// Constant `param`.
    Constant = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LinprocTarget {
    pub kind: LinprocTargetKind,
    pub param: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinprocThetaMethod {
    LeastSquares = 0,
    MomentMatch = 1,
    OneStep = 2,
    ScoreRoot = 3,
    Known = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinprocVarianceKind {
    Empirical = 0,
    Improved = 1,
    UstatLs = 2,
    Efficient = 3,
}

/// Opaque observed path `Y_{-r}, ..., Y_n`.
pub struct LinprocPath(ProcessPath);

/// Opaque estimation report.
pub struct LinprocReport(EstimateReport);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> LinprocStatus {
    match e {
        Error::Unavailable(_) => LinprocStatus::Unavailable,
        e if e.is_numerical() => LinprocStatus::Numerical,
        _ => LinprocStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (LinprocStatus, String)>) -> LinprocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LinprocStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside linproc".into());
            LinprocStatus::Internal
        }
    }
}

fn lift<T>(r: Result<T, Error>) -> Result<T, (LinprocStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (LinprocStatus, String) {
    (LinprocStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (LinprocStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn model_of(m: LinprocModel) -> CoefficientModel {
    match m {
        LinprocModel::Ar1 => CoefficientModel::ar1(),
        LinprocModel::Ma1 => CoefficientModel::ma1(),
        LinprocModel::Arma11 => CoefficientModel::arma11(),
    }
}

fn spec_of(i: &LinprocInnovations) -> Result<InnovationSpec, Error> {
    match i.family {
        LinprocFamily::StandardNormal => Ok(InnovationSpec::standard_normal()),
        LinprocFamily::CenteredGamma => InnovationSpec::centered_gamma(i.param1),
        LinprocFamily::CenteredLaplace => InnovationSpec::centered_laplace(i.param1),
        LinprocFamily::CenteredUniform => InnovationSpec::centered_uniform(i.param1),
        LinprocFamily::TwoPoint => InnovationSpec::two_point(i.param1, i.param2),
    }
}

fn target_of(t: &LinprocTarget) -> SmoothFunction {
    match t.kind {
        LinprocTargetKind::Square => SmoothFunction::square(),
        LinprocTargetKind::Identity => SmoothFunction::identity(),
        LinprocTargetKind::Abs => SmoothFunction::abs(),
        LinprocTargetKind::CosT => SmoothFunction::cos_t(t.param),
        LinprocTargetKind::Constant => SmoothFunction::constant(t.param),
    }
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`) and returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn linproc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Simulates a stationary path with `r` pre-observations and `n` observations.
///
/// # Safety
/// `theta` must point to `theta_len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn linproc_path_simulate(
    model: LinprocModel,
    theta: *const f64,
    theta_len: usize,
    innovations: LinprocInnovations,
    n: usize,
    r: usize,
    seed: u64,
    out: *mut *mut LinprocPath,
) -> LinprocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let theta = slice_in(theta, theta_len, "theta")?;
        let spec = lift(spec_of(&innovations))?;
        let path = lift(model_of(model).simulate(
            theta,
            &spec,
            n,
            r,
            &SeedStream::new(seed).derive("simulate", 0),
            DEFAULT_TAIL_TOL,
        ))?;
        *out = Box::into_raw(Box::new(LinprocPath(path)));
        Ok(())
    })
}

/// Builds a path from `r + 1` pre-observations `Y_{-r}..Y_0` and `n` observations.
///
/// # Safety
/// The arrays must hold the stated number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn linproc_path_from_values(
    pre: *const f64,
    pre_len: usize,
    obs: *const f64,
    obs_len: usize,
    out: *mut *mut LinprocPath,
) -> LinprocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pre = slice_in(pre, pre_len, "pre")?;
        let obs = slice_in(obs, obs_len, "obs")?;
        let path = lift(ProcessPath::new(pre.to_vec(), obs.to_vec()))?;
        *out = Box::into_raw(Box::new(LinprocPath(path)));
        Ok(())
    })
}

/// Reports `n` and `r` of a path.
///
/// # Safety
/// `path` must come from this library; `n` and `r` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn linproc_path_dims(path: *const LinprocPath, n: *mut usize, r: *mut usize) -> LinprocStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        if n.is_null() || r.is_null() {
            return Err(null("n or r"));
        }
        *n = p.0.n();
        *r = p.0.r();
        Ok(())
    })
}

/// Copies `Y_{-r}, ..., Y_n` into `buf`; `*needed` receives `r + 1 + n`.
///
/// # Safety
/// `buf` must hold `len` doubles (or be null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn linproc_path_values(
    path: *const LinprocPath,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> LinprocStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let v = p.0.all_values();
        if !needed.is_null() {
            *needed = v.len();
        }
        if len < v.len() || buf.is_null() {
            return Err((LinprocStatus::BufferTooSmall, format!("need {} doubles", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Releases a path. Null is ignored.
///
/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn linproc_path_free(path: *mut LinprocPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Complete U-statistic over all injective `m`-tuples of `x`.
///
/// # Safety
/// `x` holds `n` doubles, `beta` holds `m`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn linproc_ustat_exact(
    x: *const f64,
    n: usize,
    beta: *const f64,
    m: usize,
    target: LinprocTarget,
    enumeration_cap: u64,
    out: *mut f64,
) -> LinprocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice_in(x, n, "x")?;
        let beta = slice_in(beta, m, "beta")?;
        let r = lift(ustat_exact(x, beta, &target_of(&target), enumeration_cap))?;
        *out = r.kappa_tilde;
        Ok(())
    })
}

/// Incomplete U-statistic from `draws` sampled tuples; `se` may be null.
///
/// # Safety
/// `x` holds `n` doubles, `beta` holds `m`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn linproc_ustat_incomplete(
    x: *const f64,
    n: usize,
    beta: *const f64,
    m: usize,
    target: LinprocTarget,
    draws: u64,
    seed: u64,
    partitions: usize,
    out: *mut f64,
    se: *mut f64,
) -> LinprocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice_in(x, n, "x")?;
        let beta = slice_in(beta, m, "beta")?;
        let r = lift(ustat_incomplete(
            x,
            beta,
            &target_of(&target),
            draws,
            &SeedStream::new(seed).derive("ustat", 0),
            partitions,
        ))?;
        *out = r.kappa_tilde;
        if !se.is_null() {
            *se = r.sampling_se;
        }
        Ok(())
    })
}

/// Substitution estimate of `E[h(Y_0)]` from a path. `m == 0` and
/// `draws == 0` select the automatic order and `B = 200 n m`.
///
/// # Safety
/// `path` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn linproc_estimate(
    path: *const LinprocPath,
    model: LinprocModel,
    method: LinprocThetaMethod,
    innovations: LinprocInnovations,
    target: LinprocTarget,
    m: usize,
    draws: u64,
    seed: u64,
    out: *mut *mut LinprocReport,
) -> LinprocStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = model_of(model);
        let spec = lift(spec_of(&innovations))?;
        let method = match method {
            LinprocThetaMethod::LeastSquares => ThetaMethod::LeastSquares,
            LinprocThetaMethod::MomentMatch => ThetaMethod::MomentMatch,
            LinprocThetaMethod::OneStep => ThetaMethod::OneStep,
            LinprocThetaMethod::ScoreRoot => ThetaMethod::ScoreRoot,
            LinprocThetaMethod::Known => ThetaMethod::Known,
        };
        let est = lift(estimate_theta_with_spec(&p.0, &model, method, &spec, Nuisance::Oracle))?;
        let n = p.0.n();
        let m = if m == 0 {
            let beta = lift(BetaSequence::from_model(&model, &est.theta, 1e-12))?;
            lift(choose_m(n.max(8), &beta, 1.0, 0.1))?.m.min(n)
        } else {
            m
        };
        let draws = if draws == 0 { UStatConfig::auto_draws(n, m) } else { draws };
        let run = lift(substitution_estimate(
            &p.0,
            &model,
            &est,
            &target_of(&target),
            &ConstraintSpec::identity(),
            &UStatConfig::incomplete(m, draws),
            &SeedStream::new(seed).derive("ustat", 0),
            Some(&spec),
        ))?;
        *out = Box::into_raw(Box::new(LinprocReport(run.report)));
        Ok(())
    })
}

/// Point estimate, plug-in standard error and `a_star_hat` of a report.
///
/// # Safety
/// `report` must come from this library; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn linproc_report_values(
    report: *const LinprocReport,
    kappa_hat: *mut f64,
    se_plugin: *mut f64,
    a_star_hat: *mut f64,
) -> LinprocStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if !kappa_hat.is_null() {
            *kappa_hat = r.0.kappa_hat;
        }
        if !se_plugin.is_null() {
            *se_plugin = r.0.se_plugin;
        }
        if !a_star_hat.is_null() {
            *a_star_hat = r.0.a_star_hat;
        }
        Ok(())
    })
}

/// Writes the report as NUL-terminated JSON; `*needed` receives the length
/// including the NUL.
///
/// # Safety
/// `buf` must hold `len` bytes (or be null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn linproc_report_json(
    report: *const LinprocReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> LinprocStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let s = serde_json::to_string(&r.0).map_err(|e| (LinprocStatus::Internal, e.to_string()))?;
        if !needed.is_null() {
            *needed = s.len() + 1;
        }
        if buf.is_null() || len < s.len() + 1 {
            return Err((LinprocStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1)));
        }
        ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
        *buf.add(s.len()) = 0;
        Ok(())
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn linproc_report_free(report: *mut LinprocReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Closed-form asymptotic variance for AR(1) with `h(x) = x^2`. Pass a
/// negative `fisher_info` when it is unavailable.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn linproc_asymptotic_variance(
    kind: LinprocVarianceKind,
    theta0: f64,
    mu2: f64,
    mu3: f64,
    mu4: f64,
    fisher_info: f64,
    out: *mut f64,
) -> LinprocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = Moments {
            mu2,
            mu3,
            mu4,
            fisher_info: (fisher_info >= 0.0).then_some(fisher_info),
        };
        let kind = match kind {
            LinprocVarianceKind::Empirical => VarianceKind::Empirical,
            LinprocVarianceKind::Improved => VarianceKind::Improved,
            LinprocVarianceKind::UstatLs => VarianceKind::UstatLs,
            LinprocVarianceKind::Efficient => VarianceKind::Efficient,
        };
        *out = lift(asymptotic_variance(kind, theta0, &m))?;
        Ok(())
    })
}

/// Runs the tiny-instance oracle suite; returns `Ok` only if every case passed.
///
/// # Safety
/// `passed` and `total` may be null.
#[no_mangle]
pub unsafe extern "C" fn linproc_selftest(seed: u64, passed: *mut usize, total: *mut usize) -> LinprocStatus {
    guard(|| {
        let out = linproc_ustat::cli::selftest(seed);
        let ok = out.iter().filter(|o| o.passed).count();
        if !passed.is_null() {
            *passed = ok;
        }
        if !total.is_null() {
            *total = out.len();
        }
        if ok == out.len() {
            Ok(())
        } else {
            Err((LinprocStatus::Numerical, format!("{} of {} self-test cases failed", out.len() - ok, out.len())))
        }
    })
}
