//! U-statistics of increasing order for `E[h(sum_r beta_r X_r)]`.
//!
//! Given i.i.d. `X_1, ..., X_n`, coefficients `beta_1, ..., beta_m` and a
//! target `h`, the statistic averages `h(beta_1 X_{i(1)} + ... + beta_m X_{i(m)})`
//! over all injective index tuples `i`. Besides the point estimate every run
//! fills the bucket table `H[r][j]`: the mean of `h(S_i)` over the tuples with
//! `i(r) = j`. The bucket table feeds the constraint correction and the
//! per-observation influence estimates.
//!
//! Two evaluation modes exist. [`ustat_exact`] enumerates all
//! `n! / (n - m)!` tuples and is limited to small instances.
//! [`ustat_incomplete`] draws tuples uniformly (partial Fisher-Yates shuffle
//! per draw) and is unbiased for the exact statistic conditional on the data.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::numeric::CompensatedSum;
use crate::process::CoefficientModel;
use crate::rng::SeedStream;
use crate::smooth::{Growth, SmoothFunction};

/// Default cap on the number of enumerated tuples.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Draws per bucket used by the automatic choice of `B`.
pub const AUTO_DRAWS_PER_BUCKET: usize = 200;

/// Largest `m` accepted by the permutation-averaged [`kernel`].
pub const MAX_DIRECT_KERNEL_ORDER: usize = 8;

/// Coefficient sequence `beta_1, beta_2, ...` with a certified tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaSequence {
    /// `beta_r = 0` beyond the listed values.
    Finite { values: Vec<f64> },
    /// `beta_r = scale * ratio^(r-1)`.
    Geometric { scale: f64, ratio: f64 },
    /// Listed values, then unknown terms with `|beta_r| <= c * a^r`.
    Bounded { values: Vec<f64>, c: f64, a: f64 },
}

impl BetaSequence {
    pub fn finite(values: Vec<f64>) -> Self {
        BetaSequence::Finite { values }
    }

    pub fn geometric(scale: f64, ratio: f64) -> Self {
        BetaSequence::Geometric { scale, ratio }
    }

    /// `alpha_r = delta_{r-1}(theta)` for a linear-process model.
    pub fn from_model(model: &CoefficientModel, theta: &[f64], tol: f64) -> Result<Self> {
        model.check_domain(theta)?;
        if model.is_ar1() {
            return Ok(Self::geometric(1.0, theta[0]));
        }
        if model.named() == Some(crate::process::ModelName::Ma1) {
            return Ok(Self::finite(vec![1.0, theta[0]]));
        }
        let tb = model.tail_bound(theta)?;
        // |alpha_r| = |delta_{r-1}| <= (c / a) a^r.
        let c = tb.c / tb.a;
        let a = tb.a;
        let mut len = 1usize;
        while c * a.powi(len as i32 + 1) / (1.0 - a) > tol && len < 100_000 {
            len += 1;
        }
        let values = (0..len).map(|s| model.delta(theta, s)).collect();
        Ok(BetaSequence::Bounded { values, c, a })
    }

    /// `beta_r` for `r >= 1` (0 past the listed part of a bounded sequence).
    pub fn get(&self, r: usize) -> f64 {
        debug_assert!(r >= 1);
        match self {
            BetaSequence::Finite { values } | BetaSequence::Bounded { values, .. } => {
                values.get(r - 1).copied().unwrap_or(0.0)
            }
            BetaSequence::Geometric { scale, ratio } => scale * ratio.powi(r as i32 - 1),
        }
    }

    pub fn head(&self, m: usize) -> Vec<f64> {
        (1..=m).map(|r| self.get(r)).collect()
    }

    /// Geometric decay ratio, `None` for finite sequences.
    pub fn decay_ratio(&self) -> Option<f64> {
        match self {
            BetaSequence::Finite { .. } => None,
            BetaSequence::Geometric { ratio, .. } => Some(ratio.abs()),
            BetaSequence::Bounded { a, .. } => Some(*a),
        }
    }

    fn check_rate(&self) -> Result<()> {
        match self.decay_ratio() {
            Some(a) if a >= 1.0 => Err(Error::RateUnattainable { ratio: a }),
            _ => Ok(()),
        }
    }

    /// Last nonzero index of a finite sequence.
    pub fn finite_order(&self) -> Option<usize> {
        match self {
            BetaSequence::Finite { values } => {
                Some(values.iter().rposition(|&b| b != 0.0).map_or(0, |i| i + 1))
            }
            _ => None,
        }
    }

    /// Upper bound on `sum_{r > m} |beta_r|` (exact for finite and geometric).
    pub fn tail_abs_sum(&self, m: usize) -> Result<f64> {
        self.check_rate()?;
        Ok(match self {
            BetaSequence::Finite { values } => values.iter().skip(m).map(|b| b.abs()).sum(),
            BetaSequence::Geometric { scale, ratio } => {
                scale.abs() * ratio.abs().powi(m as i32) / (1.0 - ratio.abs())
            }
            BetaSequence::Bounded { values, c, a } => {
                let listed: f64 = values.iter().skip(m).map(|b| b.abs()).sum();
                let from = values.len().max(m) + 1;
                listed + c * a.powi(from as i32) / (1.0 - a)
            }
        })
    }

    pub fn abs_sum(&self) -> Result<f64> {
        self.tail_abs_sum(0)
    }

    /// Smallest `M` with `sum_{r > M} |beta_r| <= tol`.
    pub fn horizon(&self, tol: f64) -> Result<usize> {
        self.check_rate()?;
        if let Some(p) = self.finite_order() {
            return Ok(p);
        }
        let mut m = 1;
        while self.tail_abs_sum(m)? > tol {
            m += 1;
            if m > 1_000_000 {
                return Err(Error::RateUnattainable {
                    ratio: self.decay_ratio().unwrap_or(1.0),
                });
            }
        }
        Ok(m)
    }
}

/// Outcome of [`choose_m`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderChoice {
    pub m: usize,
    pub clipped: bool,
    pub warnings: Vec<String>,
}

/// Order `m = max(2, ceil(c (log n)^(1 + eps)))`, clipped so that `m^4 <= n / 2`.
///
/// Finite coefficient sequences of order `p` get `m = p`.
pub fn choose_m(n: usize, beta: &BetaSequence, c: f64, eps: f64) -> Result<OrderChoice> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("choose_m needs n >= 8, got {n}")));
    }
    beta.check_rate()?;
    if let Some(p) = beta.finite_order() {
        return Ok(OrderChoice {
            m: p.clamp(1, n),
            clipped: false,
            warnings: Vec::new(),
        });
    }
    let nf = n as f64;
    let wanted = ((c * nf.ln().powf(1.0 + eps)).ceil() as usize).max(2);
    let mut cap = (nf / 2.0).powf(0.25).floor() as usize;
    while (cap + 1).pow(4) * 2 <= n {
        cap += 1;
    }
    while cap > 1 && cap.pow(4) * 2 > n {
        cap -= 1;
    }
    let cap = cap.max(1);
    let mut warnings = Vec::new();
    let clipped = wanted > cap;
    let m = if clipped {
        warnings.push(format!(
            "m clipped from {wanted} to {cap} so that m^4 <= n/2 (n = {n})"
        ));
        cap
    } else {
        wanted
    };
    let tail = nf.sqrt() * beta.tail_abs_sum(m)?;
    if tail > 0.1 {
        warnings.push(format!(
            "rate condition endangered: sqrt(n) * sum_(r>m) |beta_r| = {tail:.4} > 0.1"
        ));
    }
    Ok(OrderChoice {
        m,
        clipped,
        warnings,
    })
}

/// Symmetric kernel: mean of `h(beta . x_pi)` over all permutations `pi`.
pub fn kernel(x: &[f64], beta: &[f64], h: &SmoothFunction) -> Result<f64> {
    let m = x.len();
    if m != beta.len() || m == 0 {
        return Err(Error::InvalidArgument(
            "kernel needs equally long nonempty x and beta".into(),
        ));
    }
    if m > MAX_DIRECT_KERNEL_ORDER {
        return Err(Error::KernelTooLarge(m));
    }
    // Heap's algorithm over index permutations.
    let mut perm: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    let eval = |perm: &[usize]| h.eval(perm.iter().zip(beta).map(|(&i, b)| b * x[i]).sum());
    let mut acc = CompensatedSum::new();
    acc.add(eval(&perm));
    let mut count = 1u64;
    let mut i = 1;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            acc.add(eval(&perm));
            count += 1;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(acc.value() / count as f64)
}

/// Evaluation mode of the U-statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    Incomplete { draws: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UStatConfig {
    pub m: usize,
    pub mode: Mode,
    pub enumeration_cap: u64,
    /// Number of independent sampling partitions; results depend on it.
    pub partitions: usize,
}

impl UStatConfig {
    pub fn exact(m: usize) -> Self {
        Self {
            m,
            mode: Mode::Exact,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            partitions: 1,
        }
    }

    pub fn incomplete(m: usize, draws: u64) -> Self {
        Self {
            m,
            mode: Mode::Incomplete { draws },
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            partitions: 1,
        }
    }

    /// `B = 200 n m`, so each bucket receives about 200 draws.
    pub fn auto_draws(n: usize, m: usize) -> u64 {
        (AUTO_DRAWS_PER_BUCKET * n * m) as u64
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions.max(1);
        self
    }
}

/// Bucket sums and counts for `H[r][j]`, stored slot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    n: usize,
    m: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl BucketTable {
    fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            sums: vec![0.0; n * m],
            counts: vec![0; n * m],
        }
    }

    #[inline]
    fn deposit(&mut self, r: usize, j: usize, value: f64) {
        let k = r * self.n + j;
        self.sums[k] += value;
        self.counts[k] += 1;
    }

    fn merge(&mut self, other: &BucketTable) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of tuples with `i(r) = j` (slots and observations 0-based).
    pub fn count(&self, r: usize, j: usize) -> u64 {
        self.counts[r * self.n + j]
    }

    /// `H[r][j]`, or `None` for an empty bucket.
    pub fn mean(&self, r: usize, j: usize) -> Option<f64> {
        let k = r * self.n + j;
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    /// `sum_r H[r][j]` with empty buckets contributing 0, and the number of
    /// empty buckets met.
    pub fn slot_sum(&self, j: usize) -> (f64, usize) {
        let mut s = 0.0;
        let mut empty = 0;
        for r in 0..self.m {
            match self.mean(r, j) {
                Some(v) => s += v,
                None => empty += 1,
            }
        }
        (s, empty)
    }

    pub fn empty_buckets(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }

    pub fn empty_fraction(&self) -> f64 {
        self.empty_buckets() as f64 / self.counts.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UStatResult {
    pub kappa_tilde: f64,
    pub m: usize,
    pub n: usize,
    pub mode: Mode,
    pub tuples_used: u64,
    /// Monte Carlo standard error of an incomplete statistic (0 when exact).
    pub sampling_se: f64,
    /// Bound on `|E h(S) - E h(S^(m))|`, when the caller supplied the tail.
    pub truncation_bound: Option<f64>,
    pub buckets: BucketTable,
}

/// JSON summary of a [`UStatResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UStatSummary {
    pub kappa_tilde: f64,
    pub sampling_se: f64,
    pub tuples_used: u64,
    pub m: usize,
    pub mode: String,
    pub truncation_bound: Option<f64>,
}

impl UStatResult {
    pub fn summary(&self) -> UStatSummary {
        UStatSummary {
            kappa_tilde: self.kappa_tilde,
            sampling_se: self.sampling_se,
            tuples_used: self.tuples_used,
            m: self.m,
            mode: match self.mode {
                Mode::Exact => "exact".into(),
                Mode::Incomplete { .. } => "incomplete".into(),
            },
            truncation_bound: self.truncation_bound,
        }
    }
}

/// `n! / (n - m)!` as a float.
pub fn injective_tuple_count(n: usize, m: usize) -> f64 {
    (0..m).map(|k| (n - k) as f64).product()
}

fn check_inputs(x: &[f64], beta: &[f64]) -> Result<()> {
    let (n, m) = (x.len(), beta.len());
    if m == 0 || m > n {
        return Err(Error::InvalidOrder { m, n });
    }
    Ok(())
}

/// Complete enumeration over all injective `m`-tuples.
pub fn ustat_exact(
    x: &[f64],
    beta: &[f64],
    h: &SmoothFunction,
    enumeration_cap: u64,
) -> Result<UStatResult> {
    check_inputs(x, beta)?;
    let (n, m) = (x.len(), beta.len());
    let total = injective_tuple_count(n, m);
    if total > enumeration_cap as f64 {
        return Err(Error::EnumerationCap {
            tuples: total,
            cap: enumeration_cap,
        });
    }
    struct Walk<'a> {
        x: &'a [f64],
        beta: &'a [f64],
        h: &'a SmoothFunction,
        used: Vec<bool>,
        tuple: Vec<usize>,
        acc: CompensatedSum,
        buckets: BucketTable,
    }
    impl Walk<'_> {
        fn go(&mut self, slot: usize, partial: f64) {
            if slot == self.beta.len() {
                let v = self.h.eval(partial);
                self.acc.add(v);
                for (r, &j) in self.tuple.iter().enumerate() {
                    self.buckets.deposit(r, j, v);
                }
                return;
            }
            for j in 0..self.x.len() {
                if self.used[j] {
                    continue;
                }
                self.used[j] = true;
                self.tuple[slot] = j;
                self.go(slot + 1, partial + self.beta[slot] * self.x[j]);
                self.used[j] = false;
            }
        }
    }
    let mut walk = Walk {
        x,
        beta,
        h,
        used: vec![false; n],
        tuple: vec![0; m],
        acc: CompensatedSum::new(),
        buckets: BucketTable::new(n, m),
    };
    walk.go(0, 0.0);
    let tuples = total as u64;
    Ok(UStatResult {
        kappa_tilde: walk.acc.value() / total,
        m,
        n,
        mode: Mode::Exact,
        tuples_used: tuples,
        sampling_se: 0.0,
        truncation_bound: None,
        buckets: walk.buckets,
    })
}

struct PartitionAcc {
    sum: CompensatedSum,
    sumsq: CompensatedSum,
    buckets: BucketTable,
    draws: u64,
}

fn sample_partition(
    x: &[f64],
    beta: &[f64],
    h: &SmoothFunction,
    draws: u64,
    stream: &SeedStream,
) -> PartitionAcc {
    let (n, m) = (x.len(), beta.len());
    let mut rng = stream.rng();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut acc = PartitionAcc {
        sum: CompensatedSum::new(),
        sumsq: CompensatedSum::new(),
        buckets: BucketTable::new(n, m),
        draws,
    };
    for _ in 0..draws {
        // Partial Fisher-Yates: idx[0..m] becomes a uniform injective tuple.
        // The array stays a permutation, so it need not be reset between draws.
        let mut s = 0.0;
        for (k, b) in beta.iter().enumerate() {
            let pick = rng.random_range(k..n);
            idx.swap(k, pick);
            s += b * x[idx[k]];
        }
        let v = h.eval(s);
        acc.sum.add(v);
        acc.sumsq.add(v * v);
        for (r, &j) in idx[..m].iter().enumerate() {
            acc.buckets.deposit(r, j, v);
        }
    }
    acc
}

/// Incomplete U-statistic from `draws` uniformly sampled injective tuples.
///
/// The draws are split over `partitions` independent streams derived from
/// `stream`; for a fixed partition count the result is bit-identical
/// whatever the thread schedule.
pub fn ustat_incomplete(
    x: &[f64],
    beta: &[f64],
    h: &SmoothFunction,
    draws: u64,
    stream: &SeedStream,
    partitions: usize,
) -> Result<UStatResult> {
    check_inputs(x, beta)?;
    if draws == 0 {
        return Err(Error::InvalidArgument("incomplete U-statistic needs B >= 1".into()));
    }
    let (n, m) = (x.len(), beta.len());
    let parts = partitions.max(1) as u64;
    let accs: Vec<PartitionAcc> = (0..parts)
        .into_par_iter()
        .map(|p| {
            let share = draws / parts + u64::from(p < draws % parts);
            sample_partition(x, beta, h, share, &stream.derive("ustat-partition", p))
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sumsq = CompensatedSum::new();
    let mut buckets = BucketTable::new(n, m);
    let mut total = 0u64;
    for a in &accs {
        sum.merge(&a.sum);
        sumsq.merge(&a.sumsq);
        buckets.merge(&a.buckets);
        total += a.draws;
    }
    let b = total as f64;
    let mean = sum.value() / b;
    let se = if total > 1 {
        let var = ((sumsq.value() - b * mean * mean) / (b - 1.0)).max(0.0);
        (var / b).sqrt()
    } else {
        f64::NAN
    };
    Ok(UStatResult {
        kappa_tilde: mean,
        m,
        n,
        mode: Mode::Incomplete { draws: total },
        tuples_used: total,
        sampling_se: se,
        truncation_bound: None,
        buckets,
    })
}

/// Runs the configured mode. An incomplete request with `B >= n!/(n-m)!`
/// falls back to complete enumeration.
pub fn ustat(
    x: &[f64],
    beta: &[f64],
    h: &SmoothFunction,
    cfg: &UStatConfig,
    stream: &SeedStream,
) -> Result<UStatResult> {
    if beta.len() != cfg.m {
        return Err(Error::InvalidArgument(format!(
            "config order m = {} but {} coefficients supplied",
            cfg.m,
            beta.len()
        )));
    }
    check_inputs(x, beta)?;
    match cfg.mode {
        Mode::Exact => ustat_exact(x, beta, h, cfg.enumeration_cap),
        Mode::Incomplete { draws } => {
            let total = injective_tuple_count(x.len(), cfg.m);
            if draws as f64 >= total && total <= cfg.enumeration_cap as f64 {
                ustat_exact(x, beta, h, cfg.enumeration_cap)
            } else {
                ustat_incomplete(x, beta, h, draws, stream, cfg.partitions)
            }
        }
    }
}

/// Default tail tolerance for truncating series in Monte Carlo helpers.
pub const DEFAULT_SERIES_TOL: f64 = 1e-10;

/// Monte Carlo estimate of the influence function `h_*` at each point of `xs`.
///
/// `h_*(x) = sum_r (E[h(S) | X_r = x] - E[h(S)])`. A single sample of `mc`
/// truncated series is shared by every `r` and every `x`.
pub fn influence_h_star_many(
    spec: &InnovationSpec,
    beta: &BetaSequence,
    h: &SmoothFunction,
    xs: &[f64],
    mc: usize,
    stream: &SeedStream,
    tail_tol: f64,
) -> Result<Vec<f64>> {
    if mc == 0 {
        return Err(Error::InvalidArgument("influence_h_star needs mc >= 1".into()));
    }
    let horizon = beta.horizon(tail_tol)?.max(1);
    let coef = beta.head(horizon);
    let mut rng = stream.rng();
    let mut draws = vec![0.0; horizon];
    let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); xs.len()];
    for _ in 0..mc {
        spec.fill(&mut rng, &mut draws);
        let s: f64 = coef.iter().zip(&draws).map(|(b, x)| b * x).sum();
        let hs = h.eval(s);
        for (a, &x) in acc.iter_mut().zip(xs) {
            let mut d = 0.0;
            for (b, xr) in coef.iter().zip(&draws) {
                d += h.eval(s + b * (x - xr)) - hs;
            }
            a.add(d);
        }
    }
    Ok(acc.iter().map(|a| a.value() / mc as f64).collect())
}

/// Single-point version of [`influence_h_star_many`].
pub fn influence_h_star(
    spec: &InnovationSpec,
    beta: &BetaSequence,
    h: &SmoothFunction,
    x: f64,
    mc: usize,
    stream: &SeedStream,
) -> Result<f64> {
    Ok(influence_h_star_many(spec, beta, h, &[x], mc, stream, DEFAULT_SERIES_TOL)?[0])
}

/// Diagnostic `K * sum_{r>m} |beta_r|` bounding `|E h(S) - E h(S^(m))|`, with
/// `K = 2 C2 (1 + sum |beta_r|)^(2p-1) (1 + E X^2 + E|X|^(2p))`.
pub fn truncation_bound(
    beta: &BetaSequence,
    growth: &Growth,
    spec: &InnovationSpec,
    m: usize,
) -> Result<f64> {
    let p = growth.p;
    let mu2 = spec.moment(2)?;
    let abs2p = spec
        .abs_moment(2.0 * p)
        .map_err(|_| Error::Unavailable("moment of order 2p"))?;
    let k = 2.0 * growth.c2 * (1.0 + beta.abs_sum()?).powf(2.0 * p - 1.0) * (1.0 + mu2 + abs2p);
    Ok(k * beta.tail_abs_sum(m)?)
}
