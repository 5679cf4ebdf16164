//! Causal invertible linear processes indexed by a finite-dimensional parameter.
//!
//! A model supplies the moving-average coefficients `delta_s(theta)` and the
//! autoregressive (inversion) coefficients `gamma_s(theta)`:
//!
//! ```text
//! Y_t = X_t + sum_{s>=1} delta_s(theta) X_{t-s}
//! X_t = Y_t + sum_{s>=1} gamma_s(theta) Y_{t-s}
//! ```
//!
//! Innovations are recovered from a path with the truncated inversion
//! `X_{n,j}(theta) = Y_j + sum_{s=1}^{r+j} gamma_s(theta) Y_{j-s}`, which uses
//! every lag back to the first pre-observation `Y_{-r}`.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::rng::SeedStream;

/// ARMA(1,1) parameters closer than this are treated as a cancelling pair.
pub const ARMA_CANCELLATION_GAP: f64 = 1e-6;

/// Default tolerance for simulation burn-in and MA truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Geometric decay constants: `|c_s(theta)| + |grad c_s(theta)| <= c * a^s`
/// for all `theta` within `eta` of the reference parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub c: f64,
    pub a: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefFamily {
    Delta,
    Gamma,
}

type CoefFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], usize) -> Vec<f64> + Send + Sync>;

/// Coefficient families for a model not covered by the named ones.
#[derive(Clone)]
pub struct CustomModel {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta: CoefFn,
    pub gamma: CoefFn,
    pub delta_dot: GradFn,
    pub gamma_dot: GradFn,
    pub tail: TailBound,
}

#[derive(Clone)]
enum Kind {
    Ar1,
    Ma1,
    Arma11,
    Custom(Arc<CustomModel>),
}

#[derive(Clone)]
pub struct CoefficientModel {
    kind: Kind,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientModel({})", self.name())
    }
}

/// Serializable model name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Ar1,
    Ma1,
    Arma11,
}

impl From<ModelName> for CoefficientModel {
    fn from(n: ModelName) -> Self {
        match n {
            ModelName::Ar1 => CoefficientModel::ar1(),
            ModelName::Ma1 => CoefficientModel::ma1(),
            ModelName::Arma11 => CoefficientModel::arma11(),
        }
    }
}

#[inline]
fn ipow(x: f64, k: usize) -> f64 {
    x.powi(k as i32)
}

impl CoefficientModel {
    /// `Y_t = theta Y_{t-1} + X_t`.
    pub fn ar1() -> Self {
        Self { kind: Kind::Ar1 }
    }

    /// `Y_t = X_t + theta X_{t-1}`.
    pub fn ma1() -> Self {
        Self { kind: Kind::Ma1 }
    }

    /// `Y_t - theta1 Y_{t-1} = X_t - theta2 X_{t-1}`.
    pub fn arma11() -> Self {
        Self { kind: Kind::Arma11 }
    }

    pub fn custom(model: CustomModel) -> Result<Self> {
        if model.lower.len() != model.upper.len() || model.lower.is_empty() {
            return Err(Error::InvalidArgument(
                "custom model domain bounds must have equal nonzero length".into(),
            ));
        }
        if !(model.tail.a > 0.0 && model.tail.a < 1.0) {
            return Err(Error::RateUnattainable {
                ratio: model.tail.a,
            });
        }
        Ok(Self {
            kind: Kind::Custom(Arc::new(model)),
        })
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            Kind::Ar1 => "ar1",
            Kind::Ma1 => "ma1",
            Kind::Arma11 => "arma11",
            Kind::Custom(c) => &c.name,
        }
    }

    pub fn named(&self) -> Option<ModelName> {
        match self.kind {
            Kind::Ar1 => Some(ModelName::Ar1),
            Kind::Ma1 => Some(ModelName::Ma1),
            Kind::Arma11 => Some(ModelName::Arma11),
            Kind::Custom(_) => None,
        }
    }

    pub fn is_ar1(&self) -> bool {
        matches!(self.kind, Kind::Ar1)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Ar1 | Kind::Ma1 => 1,
            Kind::Arma11 => 2,
            Kind::Custom(c) => c.lower.len(),
        }
    }

    pub fn check_domain(&self, theta: &[f64]) -> Result<()> {
        let bad = || Error::Domain {
            model: self.name().to_string(),
            theta: theta.to_vec(),
        };
        if theta.len() != self.dim() || theta.iter().any(|t| !t.is_finite()) {
            return Err(bad());
        }
        let ok = match &self.kind {
            Kind::Ar1 | Kind::Ma1 => theta[0].abs() < 1.0,
            Kind::Arma11 => {
                theta[0].abs() < 1.0
                    && theta[1].abs() < 1.0
                    && (theta[0] - theta[1]).abs() >= ARMA_CANCELLATION_GAP
            }
            Kind::Custom(c) => theta
                .iter()
                .zip(c.lower.iter().zip(&c.upper))
                .all(|(t, (lo, hi))| t > lo && t < hi),
        };
        if ok {
            Ok(())
        } else {
            Err(bad())
        }
    }

    /// Moves `theta` into the domain interior, at least `margin` from the
    /// boundary. Returns the clipped value and whether clipping happened.
    pub fn clip_to_interior(&self, theta: &[f64], margin: f64) -> (Vec<f64>, bool) {
        let mut out = theta.to_vec();
        let (lo, hi): (Vec<f64>, Vec<f64>) = match &self.kind {
            Kind::Custom(c) => (c.lower.clone(), c.upper.clone()),
            _ => (vec![-1.0; self.dim()], vec![1.0; self.dim()]),
        };
        for (t, (l, h)) in out.iter_mut().zip(lo.iter().zip(&hi)) {
            if !t.is_finite() {
                *t = 0.5 * (l + h);
            }
            *t = t.clamp(l + margin, h - margin);
        }
        if let Kind::Arma11 = self.kind {
            if (out[0] - out[1]).abs() < ARMA_CANCELLATION_GAP {
                let shift = if out[1] > 0.0 { -1.0 } else { 1.0 };
                out[1] += shift * 2.0 * ARMA_CANCELLATION_GAP;
            }
        }
        let changed = out != theta;
        (out, changed)
    }

    /// `delta_s(theta)`, with `delta_0 = 1`.
    #[inline]
    pub fn delta(&self, theta: &[f64], s: usize) -> f64 {
        if s == 0 {
            return 1.0;
        }
        match &self.kind {
            Kind::Ar1 => ipow(theta[0], s),
            Kind::Ma1 => {
                if s == 1 {
                    theta[0]
                } else {
                    0.0
                }
            }
            Kind::Arma11 => (theta[0] - theta[1]) * ipow(theta[0], s - 1),
            Kind::Custom(c) => (c.delta)(theta, s),
        }
    }

    /// `gamma_s(theta)`, with `gamma_0 = 1`.
    #[inline]
    pub fn gamma(&self, theta: &[f64], s: usize) -> f64 {
        if s == 0 {
            return 1.0;
        }
        match &self.kind {
            Kind::Ar1 => {
                if s == 1 {
                    -theta[0]
                } else {
                    0.0
                }
            }
            Kind::Ma1 => ipow(-theta[0], s),
            Kind::Arma11 => (theta[1] - theta[0]) * ipow(theta[1], s - 1),
            Kind::Custom(c) => (c.gamma)(theta, s),
        }
    }

    pub fn delta_dot(&self, theta: &[f64], s: usize) -> Vec<f64> {
        if s == 0 {
            return vec![0.0; self.dim()];
        }
        match &self.kind {
            Kind::Ar1 => vec![s as f64 * ipow(theta[0], s - 1)],
            Kind::Ma1 => vec![if s == 1 { 1.0 } else { 0.0 }],
            Kind::Arma11 => {
                let (t1, t2) = (theta[0], theta[1]);
                let lead = ipow(t1, s - 1);
                let inner = if s >= 2 {
                    (t1 - t2) * (s - 1) as f64 * ipow(t1, s - 2)
                } else {
                    0.0
                };
                vec![lead + inner, -lead]
            }
            Kind::Custom(c) => (c.delta_dot)(theta, s),
        }
    }

    pub fn gamma_dot(&self, theta: &[f64], s: usize) -> Vec<f64> {
        if s == 0 {
            return vec![0.0; self.dim()];
        }
        match &self.kind {
            Kind::Ar1 => vec![if s == 1 { -1.0 } else { 0.0 }],
            Kind::Ma1 => vec![-(s as f64) * ipow(-theta[0], s - 1)],
            Kind::Arma11 => {
                let (t1, t2) = (theta[0], theta[1]);
                let lead = ipow(t2, s - 1);
                let inner = if s >= 2 {
                    (t2 - t1) * (s - 1) as f64 * ipow(t2, s - 2)
                } else {
                    0.0
                };
                vec![-lead, lead + inner]
            }
            Kind::Custom(c) => (c.gamma_dot)(theta, s),
        }
    }

    /// First `count` coefficients `c_1, ..., c_count` of a family.
    pub fn coefficients(&self, theta: &[f64], family: CoefFamily, count: usize) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        Ok((1..=count)
            .map(|s| match family {
                CoefFamily::Delta => self.delta(theta, s),
                CoefFamily::Gamma => self.gamma(theta, s),
            })
            .collect())
    }

    /// First `count` gradients of a family.
    pub fn coefficient_gradients(
        &self,
        theta: &[f64],
        family: CoefFamily,
        count: usize,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_domain(theta)?;
        Ok((1..=count)
            .map(|s| match family {
                CoefFamily::Delta => self.delta_dot(theta, s),
                CoefFamily::Gamma => self.gamma_dot(theta, s),
            })
            .collect())
    }

    /// Decay constants valid on a ball around `theta0`.
    pub fn tail_bound(&self, theta0: &[f64]) -> Result<TailBound> {
        self.check_domain(theta0)?;
        if let Kind::Custom(c) = &self.kind {
            return Ok(c.tail);
        }
        let rho = theta0.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let eta = (1.0 - rho) / 4.0;
        let b = rho + eta;
        let a = rho + 2.0 * eta;
        // Upper bounds on |c_s| + ||grad c_s|| over the ball, using |theta_i| <= b.
        let bound = |s: usize| -> f64 {
            let sf = s as f64;
            let geo_with_grad = ipow(b, s) + sf * ipow(b, s - 1);
            match self.kind {
                Kind::Ar1 | Kind::Ma1 => geo_with_grad.max(if s == 1 { b + 1.0 } else { 0.0 }),
                Kind::Arma11 => {
                    2.0 * ipow(b, s) + 2.0 * ipow(b, s - 1) + 2.0 * (sf - 1.0) * ipow(b, s - 1)
                }
                Kind::Custom(_) => unreachable!(),
            }
        };
        let mut c = 0.0f64;
        let mut s = 1;
        loop {
            let ratio = bound(s) / ipow(a, s);
            c = c.max(ratio);
            // bound(s)/a^s is eventually decreasing; stop once it is negligible.
            if s > 10 && ratio < 1e-3 * c {
                break;
            }
            s += 1;
            if s > 100_000 {
                break;
            }
        }
        Ok(TailBound { c, a, eta })
    }

    /// Burn-in length `B` with `C a^B < tol (1 - a)`.
    fn burn_in(&self, theta0: &[f64], tail_tol: f64) -> Result<usize> {
        let tb = self.tail_bound(theta0)?;
        let target = tail_tol * (1.0 - tb.a) / tb.c;
        Ok(((target.ln() / tb.a.ln()).ceil().max(0.0)) as usize)
    }

    /// Simulates a stationary path with `r` pre-observations and `n` observations.
    pub fn simulate(
        &self,
        theta0: &[f64],
        spec: &InnovationSpec,
        n: usize,
        r: usize,
        stream: &SeedStream,
        tail_tol: f64,
    ) -> Result<ProcessPath> {
        self.check_domain(theta0)?;
        if n == 0 {
            return Err(Error::InvalidArgument("path length n must be >= 1".into()));
        }
        if !(tail_tol > 0.0) {
            return Err(Error::InvalidArgument("tail_tol must be positive".into()));
        }
        let len = r + 1 + n;
        let mut rng = stream.rng();
        let mut values = vec![0.0; len];
        let innov: Vec<f64> = match &self.kind {
            Kind::Ar1 | Kind::Arma11 => {
                let burn = self.burn_in(theta0, tail_tol)?;
                let mut x = vec![0.0; burn + len];
                spec.fill(&mut rng, &mut x);
                let (phi, ma) = match self.kind {
                    Kind::Ar1 => (theta0[0], 0.0),
                    _ => (theta0[0], theta0[1]),
                };
                let mut y_prev = 0.0;
                let mut x_prev = 0.0;
                for (t, &xt) in x.iter().enumerate() {
                    let y = phi * y_prev + xt - ma * x_prev;
                    if t >= burn {
                        values[t - burn] = y;
                    }
                    y_prev = y;
                    x_prev = xt;
                }
                x.split_off(burn)
            }
            Kind::Ma1 => {
                let mut x = vec![0.0; len + 1];
                spec.fill(&mut rng, &mut x);
                for t in 0..len {
                    values[t] = x[t + 1] + theta0[0] * x[t];
                }
                x.split_off(1)
            }
            Kind::Custom(c) => {
                let tb = c.tail;
                if tb.a >= 1.0 {
                    return Err(Error::RateUnattainable { ratio: tb.a });
                }
                let target = tail_tol * (1.0 - tb.a) / tb.c;
                let lags = ((target.ln() / tb.a.ln()).ceil().max(1.0)) as usize;
                let delta: Vec<f64> = (1..=lags).map(|s| (c.delta)(theta0, s)).collect();
                let mut x = vec![0.0; lags + len];
                spec.fill(&mut rng, &mut x);
                for t in 0..len {
                    let i = t + lags;
                    let mut y = x[i];
                    for (s, d) in delta.iter().enumerate() {
                        y += d * x[i - s - 1];
                    }
                    values[t] = y;
                }
                x.split_off(lags)
            }
        };
        let true_innovations = innov[r + 1..].to_vec();
        Ok(ProcessPath {
            values,
            r,
            true_theta: Some(theta0.to_vec()),
            true_innovations: Some(true_innovations),
        })
    }

    /// Truncated innovation recovery `X_{n,1}(theta), ..., X_{n,n}(theta)`.
    pub fn recover_innovations(&self, path: &ProcessPath, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        let r = path.r;
        let n = path.n();
        let v = &path.values;
        let out = match &self.kind {
            Kind::Ar1 => (0..n)
                .map(|j| v[r + 1 + j] - theta[0] * v[r + j])
                .collect(),
            Kind::Ma1 => {
                // Z_t = Y_t - theta Z_{t-1}, started at Z_{-r} = Y_{-r}.
                let mut z = 0.0;
                let mut out = Vec::with_capacity(n);
                for (t, &y) in v.iter().enumerate() {
                    z = y - theta[0] * z;
                    if t > r {
                        out.push(z);
                    }
                }
                out
            }
            Kind::Arma11 => {
                // A_t = sum_{s>=1} theta2^{s-1} Y_{t-s}, truncated at Y_{-r}.
                let (t1, t2) = (theta[0], theta[1]);
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(n);
                for t in 1..v.len() {
                    acc = v[t - 1] + t2 * acc;
                    if t > r {
                        out.push(v[t] + (t2 - t1) * acc);
                    }
                }
                out
            }
            Kind::Custom(c) => {
                let max_lag = r + n;
                let gamma: Vec<f64> = (1..=max_lag).map(|s| (c.gamma)(theta, s)).collect();
                (1..=n)
                    .map(|j| {
                        let i = r + j;
                        let mut x = v[i];
                        for s in 1..=(r + j) {
                            x += gamma[s - 1] * v[i - s];
                        }
                        x
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    /// Truncated `xi_j = sum_{s=1}^{truncation} grad gamma_s(theta) Y_{j-s}`, j = 1..n.
    pub fn xi_vectors(
        &self,
        path: &ProcessPath,
        theta: &[f64],
        truncation: usize,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_domain(theta)?;
        if truncation > path.r + 1 {
            return Err(Error::InsufficientPreObservations {
                needed: truncation - 1,
                available: path.r,
            });
        }
        let d = self.dim();
        let grads: Vec<Vec<f64>> = (1..=truncation).map(|s| self.gamma_dot(theta, s)).collect();
        let v = &path.values;
        let r = path.r;
        Ok((1..=path.n())
            .map(|j| {
                let mut xi = vec![0.0; d];
                for (s, g) in grads.iter().enumerate() {
                    let y = v[r + j - s - 1];
                    for (xk, gk) in xi.iter_mut().zip(g) {
                        *xk += gk * y;
                    }
                }
                xi
            })
            .collect())
    }
}

/// Default number of pre-observations, `ceil(c (log n)^(1 + eps))`.
pub fn default_pre_observations(n: usize, c: f64, eps: f64) -> usize {
    if n < 2 {
        return 1;
    }
    (c * (n as f64).ln().powf(1.0 + eps)).ceil().max(1.0) as usize
}

/// Observations `Y_{-r}, ..., Y_n`, optionally with simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessPath {
    /// `Y_{-r}, ..., Y_0, Y_1, ..., Y_n`.
    values: Vec<f64>,
    r: usize,
    pub true_theta: Option<Vec<f64>>,
    pub true_innovations: Option<Vec<f64>>,
}

impl ProcessPath {
    pub fn new(pre_obs: Vec<f64>, obs: Vec<f64>) -> Result<Self> {
        if pre_obs.is_empty() {
            return Err(Error::InsufficientPreObservations {
                needed: 0,
                available: 0,
            });
        }
        if obs.is_empty() {
            return Err(Error::InvalidArgument("path needs at least one observation".into()));
        }
        let r = pre_obs.len() - 1;
        let mut values = pre_obs;
        values.extend(obs);
        Ok(Self {
            values,
            r,
            true_theta: None,
            true_innovations: None,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.values.len() - self.r - 1
    }

    /// `Y_t` for `-r <= t <= n`.
    pub fn y(&self, t: isize) -> f64 {
        self.values[(t + self.r as isize) as usize]
    }

    pub fn pre_obs(&self) -> &[f64] {
        &self.values[..=self.r]
    }

    pub fn obs(&self) -> &[f64] {
        &self.values[self.r + 1..]
    }

    /// `Y_0, ..., Y_n`.
    pub fn from_zero(&self) -> &[f64] {
        &self.values[self.r..]
    }

    pub fn all_values(&self) -> &[f64] {
        &self.values
    }

    /// Drops the earliest pre-observations so that `r' = r_new <= r`.
    pub fn with_pre_observations(&self, r_new: usize) -> Result<Self> {
        if r_new > self.r {
            return Err(Error::InsufficientPreObservations {
                needed: r_new,
                available: self.r,
            });
        }
        Ok(Self {
            values: self.values[self.r - r_new..].to_vec(),
            r: r_new,
            true_theta: self.true_theta.clone(),
            true_innovations: self.true_innovations.clone(),
        })
    }

    /// CSV with columns `index,y[,innovation]`, index running from `-r` to `n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let with_innov = self.true_innovations.is_some();
        if with_innov {
            writeln!(w, "index,y,innovation")?;
        } else {
            writeln!(w, "index,y")?;
        }
        for (i, y) in self.values.iter().enumerate() {
            let t = i as isize - self.r as isize;
            match (&self.true_innovations, t >= 1) {
                (Some(x), true) => writeln!(w, "{t},{y},{}", x[(t - 1) as usize])?,
                (Some(_), false) => writeln!(w, "{t},{y},")?,
                (None, _) => writeln!(w, "{t},{y}")?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty path CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "index" || cols[1] != "y" {
            return Err(Error::InvalidArgument(format!("unexpected CSV header {header:?}")));
        }
        let with_innov = cols.get(2) == Some(&"innovation");
        let mut first: Option<isize> = None;
        let mut values = Vec::new();
        let mut innov = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse_err =
                |what: &str| Error::InvalidArgument(format!("line {}: bad {what}", lineno + 2));
            let t: isize = fields[0].trim().parse().map_err(|_| parse_err("index"))?;
            let y: f64 = fields
                .get(1)
                .ok_or_else(|| parse_err("y"))?
                .trim()
                .parse()
                .map_err(|_| parse_err("y"))?;
            let start = *first.get_or_insert(t);
            if t != start + values.len() as isize {
                return Err(Error::InvalidArgument(format!(
                    "line {}: index {t} is not consecutive",
                    lineno + 2
                )));
            }
            values.push(y);
            if with_innov && t >= 1 {
                let x: f64 = fields
                    .get(2)
                    .ok_or_else(|| parse_err("innovation"))?
                    .trim()
                    .parse()
                    .map_err(|_| parse_err("innovation"))?;
                innov.push(x);
            }
        }
        let start = first.ok_or_else(|| Error::InvalidArgument("path CSV has no rows".into()))?;
        if start > 0 {
            return Err(Error::InvalidArgument(format!(
                "path CSV starts at index {start}: pre-observations Y_(-r)..Y_0 are required (r >= 0)"
            )));
        }
        let r = (-start) as usize;
        if values.len() < r + 2 {
            return Err(Error::InvalidArgument("path needs at least one observation".into()));
        }
        let obs = values.split_off(r + 1);
        let mut path = ProcessPath::new(values, obs)?;
        if with_innov {
            path.true_innovations = Some(innov);
        }
        Ok(path)
    }
}
