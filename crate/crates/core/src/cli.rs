//! Run configuration, command dispatch and the self-test used by the
//! `linproc` binary.
//!
//! Configuration is TOML. Command-line flags override file values; every
//! artifact carries the resolved configuration (auto fields filled in).

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{
    gradient_check, monte_carlo_study, Direction, EstimatorId, GradientCheckConfig, GradientReport,
    StudyConfig,
};
use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::plugin::{estimate_theta_with_spec, substitution_estimate, EstimateReport, Nuisance, ThetaMethod};
use crate::process::{default_pre_observations, CoefficientModel, ModelName, ProcessPath, DEFAULT_TAIL_TOL};
use crate::rng::SeedStream;
use crate::smooth::{ConstraintSpec, SmoothFunction, SmoothSpec};
use crate::ustat::{choose_m, BetaSequence, Mode, UStatConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_SELFTEST: i32 = 3;

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Estimate,
    Study,
    GradientCheck,
    Selftest,
}

/// A count that may be left to automatic resolution (`"auto"` in TOML).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Auto<T> {
    #[default]
    Auto,
    Value(T),
}

impl<T: Copy> Auto<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(*v),
        }
    }
}

impl<T: Serialize> Serialize for Auto<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Auto::Auto => s.serialize_str("auto"),
            Auto::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Auto<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Text(String),
            Value(T),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Text(s) if s == "auto" => Ok(Auto::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got {s:?}"))),
            Raw::Value(v) => Ok(Auto::Value(v)),
        }
    }
}

impl<T: std::str::FromStr> std::str::FromStr for Auto<T> {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Auto::Auto);
        }
        s.parse().map(Auto::Value).map_err(|_| format!("expected a number or auto, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub name: ModelName,
    pub theta: Vec<f64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            name: ModelName::Ar1,
            theta: vec![0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    Exact,
    #[default]
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleBlock {
    pub n: usize,
    pub r: Auto<usize>,
    pub m: Auto<usize>,
    pub draws: Auto<u64>,
    pub mode: ModeChoice,
    pub enumeration_cap: u64,
}

impl Default for SampleBlock {
    fn default() -> Self {
        Self {
            n: 2000,
            r: Auto::Auto,
            m: Auto::Auto,
            draws: Auto::Auto,
            mode: ModeChoice::Incomplete,
            enumeration_cap: crate::ustat::DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateBlock {
    /// Path CSV; when absent a path is simulated from the model block.
    pub input: Option<PathBuf>,
    /// `None` picks least squares for ar1 and moment matching otherwise.
    pub method: Option<ThetaMethod>,
    pub nuisance: Nuisance,
}

impl Default for EstimateBlock {
    fn default() -> Self {
        Self {
            input: None,
            method: None,
            nuisance: Nuisance::Oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyBlock {
    pub replications: usize,
    pub estimators: Vec<EstimatorId>,
}

impl Default for StudyBlock {
    fn default() -> Self {
        Self {
            replications: 1000,
            estimators: vec![
                EstimatorId::Empirical,
                EstimatorId::ImprovedEmpirical,
                EstimatorId::UstatLs,
                EstimatorId::SimpleEfficient,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DirectionSpec {
    TruncatedQuadratic { c: f64 },
    ClippedAbs { c: f64 },
    ClippedIdentity { c: f64 },
}

impl DirectionSpec {
    pub fn build(&self, spec: &InnovationSpec) -> Result<Direction> {
        match *self {
            DirectionSpec::TruncatedQuadratic { c } => Direction::truncated_quadratic(spec, c),
            DirectionSpec::ClippedAbs { c } => Direction::clipped_abs(spec, c),
            DirectionSpec::ClippedIdentity { c } => Direction::clipped_identity(spec, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientBlock {
    pub directions: Vec<DirectionSpec>,
    pub eps: Vec<f64>,
    pub mc: usize,
    pub target_mc: usize,
    pub quadrature_intervals: usize,
}

impl Default for GradientBlock {
    fn default() -> Self {
        let d = GradientCheckConfig::default();
        Self {
            directions: vec![
                DirectionSpec::TruncatedQuadratic { c: 3.0 },
                DirectionSpec::ClippedAbs { c: 2.5 },
            ],
            eps: d.eps,
            mc: d.mc,
            target_mc: d.target_mc,
            quadrature_intervals: d.quadrature_intervals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_partitions() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Number of independent tuple-sampling partitions; results depend on it.
    #[serde(default = "default_partitions")]
    pub partitions: usize,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default = "InnovationSpec::standard_normal")]
    pub innovations: InnovationSpec,
    #[serde(default = "default_target")]
    pub target: SmoothSpec,
    #[serde(default)]
    pub sample: SampleBlock,
    #[serde(default)]
    pub estimate: EstimateBlock,
    #[serde(default)]
    pub study: StudyBlock,
    #[serde(default)]
    pub gradient: GradientBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_target() -> SmoothSpec {
    SmoothSpec::Square
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

/// Flag overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub partitions: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub r: Option<Auto<usize>>,
    pub m: Option<Auto<usize>>,
    pub draws: Option<Auto<u64>>,
    pub replications: Option<usize>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.partitions {
            self.partitions = v;
        }
        if let Some(v) = &o.theta {
            self.model.theta = v.clone();
        }
        if let Some(v) = o.n {
            self.sample.n = v;
        }
        if let Some(v) = o.r {
            self.sample.r = v;
        }
        if let Some(v) = o.m {
            self.sample.m = v;
        }
        if let Some(v) = o.draws {
            self.sample.draws = v;
        }
        if let Some(v) = o.replications {
            self.study.replications = v;
        }
        if let Some(v) = &o.input {
            self.estimate.input = Some(v.clone());
        }
        if let Some(v) = &o.out {
            self.output.dir = v.clone();
        }
    }

    pub fn coefficient_model(&self) -> CoefficientModel {
        match self.model.name {
            ModelName::Ar1 => CoefficientModel::ar1(),
            ModelName::Ma1 => CoefficientModel::ma1(),
            ModelName::Arma11 => CoefficientModel::arma11(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::Config("partitions must be >= 1".into()));
        }
        self.innovations
            .validated()
            .map_err(|e| Error::Config(format!("innovations: {e}")))?;
        SmoothFunction::from_spec(&self.target).map_err(|e| Error::Config(format!("target: {e}")))?;
        let model = self.coefficient_model();
        if self.model.theta.len() != model.dim() {
            return Err(Error::Config(format!(
                "model {} needs {} parameter(s), got {}",
                model.name(),
                model.dim(),
                self.model.theta.len()
            )));
        }
        if self.sample.n == 0 {
            return Err(Error::Config("sample.n must be >= 1".into()));
        }
        Ok(())
    }

    fn study_config(&self) -> StudyConfig {
        StudyConfig {
            model: self.model.name,
            theta0: self.model.theta.clone(),
            innovations: self.innovations,
            h: self.target.clone(),
            n: self.sample.n,
            r: self.sample.r.value(),
            replications: self.study.replications,
            estimators: self.study.estimators.clone(),
            seed: self.seed,
            m: self.sample.m.value(),
            draws: self.sample.draws.value(),
            partitions: self.partitions,
            nuisance: self.estimate.nuisance,
        }
    }
}

/// Artifacts produced by a command, as `(file name, contents)`.
pub type Artifacts = Vec<(String, String)>;

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: Command,
    config: &'a RunConfig,
    seed_key: String,
    resolved: serde_json::Value,
    result: T,
}

fn envelope<T: Serialize>(command: Command, cfg: &RunConfig, resolved: serde_json::Value, result: T) -> String {
    to_json(&Envelope {
        command,
        config: cfg,
        seed_key: SeedStream::new(cfg.seed).key_hex(),
        resolved,
        result,
    })
}

fn resolve_r(cfg: &RunConfig) -> usize {
    cfg.sample
        .r
        .value()
        .unwrap_or_else(|| default_pre_observations(cfg.sample.n, 1.0, 0.1))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let model = cfg.coefficient_model();
    let r = resolve_r(cfg);
    let path = model.simulate(
        &cfg.model.theta,
        &cfg.innovations,
        cfg.sample.n,
        r,
        &SeedStream::new(cfg.seed).derive("simulate", 0),
        DEFAULT_TAIL_TOL,
    )?;
    let mut csv = Vec::new();
    path.write_csv(&mut csv)?;
    let meta = envelope(
        Command::Simulate,
        cfg,
        serde_json::json!({ "r": r, "n": cfg.sample.n, "tail_tol": DEFAULT_TAIL_TOL }),
        serde_json::json!({ "path_csv": "path.csv" }),
    );
    Ok(vec![
        ("path.csv".into(), String::from_utf8(csv).expect("ascii")),
        ("path.json".into(), meta),
    ])
}

fn load_path(cfg: &RunConfig) -> Result<(ProcessPath, String)> {
    let model = cfg.coefficient_model();
    match &cfg.estimate.input {
        Some(p) => {
            let file = fs::File::open(p)
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))?;
            let path = ProcessPath::read_csv(BufReader::new(file)).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })?;
            let path = match cfg.sample.r.value() {
                None => path,
                Some(r) if r <= path.r() => path.with_pre_observations(r)?,
                Some(r) => {
                    return Err(Error::Config(format!(
                        "sample.r = {r} but {} holds only {} pre-observations",
                        p.display(),
                        path.r()
                    )))
                }
            };
            Ok((path, p.display().to_string()))
        }
        None => {
            let r = resolve_r(cfg);
            let path = model.simulate(
                &cfg.model.theta,
                &cfg.innovations,
                cfg.sample.n,
                r,
                &SeedStream::new(cfg.seed).derive("simulate", 0),
                DEFAULT_TAIL_TOL,
            )?;
            Ok((path, "simulated".into()))
        }
    }
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<(Artifacts, EstimateReport)> {
    cfg.validate()?;
    let model = cfg.coefficient_model();
    let (path, source) = load_path(cfg)?;
    let h = SmoothFunction::from_spec(&cfg.target)?;
    let method = cfg.estimate.method.unwrap_or(if model.is_ar1() {
        ThetaMethod::LeastSquares
    } else {
        ThetaMethod::MomentMatch
    });
    let est = estimate_theta_with_spec(&path, &model, method, &cfg.innovations, cfg.estimate.nuisance)?;
    let n = path.n();
    let mut warnings = Vec::new();
    let m = match cfg.sample.m.value() {
        Some(m) => m,
        None => {
            let beta = BetaSequence::from_model(&model, &est.theta, 1e-12)?;
            let c = choose_m(n.max(8), &beta, 1.0, 0.1)?;
            warnings.extend(c.warnings);
            c.m.min(n)
        }
    };
    let ucfg = match cfg.sample.mode {
        ModeChoice::Exact => UStatConfig::exact(m),
        ModeChoice::Incomplete => UStatConfig::incomplete(
            m,
            cfg.sample.draws.value().unwrap_or_else(|| UStatConfig::auto_draws(n, m)),
        ),
    }
    .with_partitions(cfg.partitions);
    let ucfg = UStatConfig {
        enumeration_cap: cfg.sample.enumeration_cap,
        ..ucfg
    };
    let run = substitution_estimate(
        &path,
        &model,
        &est,
        &h,
        &ConstraintSpec::identity(),
        &ucfg,
        &SeedStream::new(cfg.seed).derive("ustat", 0),
        Some(&cfg.innovations),
    )?;
    let mut report = run.report;
    warnings.append(&mut report.diagnostics.rate_warnings);
    report.diagnostics.rate_warnings = warnings;
    let mode = match ucfg.mode {
        Mode::Exact => "exact",
        Mode::Incomplete { .. } => "incomplete",
    };
    let json = envelope(
        Command::Estimate,
        cfg,
        serde_json::json!({
            "source": source, "r": path.r(), "n": n, "m": m,
            "draws": report.draws, "mode": mode, "partitions": ucfg.partitions,
            "theta_method": method,
            "ustat": run.ustat.summary(),
        }),
        &report,
    );
    Ok((vec![("estimate.json".into(), json)], report))
}

pub fn cmd_study(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let sc = cfg.study_config();
    let res = monte_carlo_study(&sc)?;
    let json = envelope(
        Command::Study,
        cfg,
        serde_json::to_value(&res.resolved).expect("serialisable"),
        &res,
    );
    Ok(vec![("study.csv".into(), res.to_csv()), ("study.json".into(), json)])
}

pub fn cmd_gradient_check(cfg: &RunConfig) -> Result<(Artifacts, Vec<GradientReport>)> {
    cfg.validate()?;
    let model = cfg.coefficient_model();
    let beta = BetaSequence::from_model(&model, &cfg.model.theta, 1e-12)?;
    let h = SmoothFunction::from_spec(&cfg.target)?;
    let gc = GradientCheckConfig {
        eps: cfg.gradient.eps.clone(),
        mc: cfg.gradient.mc,
        target_mc: cfg.gradient.target_mc,
        quadrature_intervals: cfg.gradient.quadrature_intervals,
        tail_tol: 1e-10,
    };
    let root = SeedStream::new(cfg.seed).derive("gradient-check", 0);
    let mut reports = Vec::new();
    for (i, d) in cfg.gradient.directions.iter().enumerate() {
        let g = d.build(&cfg.innovations)?;
        reports.push(gradient_check(&cfg.innovations, &beta, &h, &g, &gc, &root.derive("direction", i as u64))?);
    }
    let json = envelope(
        Command::GradientCheck,
        cfg,
        serde_json::json!({ "horizon": reports.first().map(|r| r.horizon) }),
        &reports,
    );
    Ok((vec![("gradient_check.json".into(), json)], reports))
}

/// Outcome of one self-test case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Tiny-instance oracle suite: complete enumeration against hand values,
/// brute-force conditional sums and the sampling engine.
pub fn selftest(seed: u64) -> Vec<CheckOutcome> {
    use crate::constrained::{a_star_hat, constrained_estimate};
    use crate::ustat::{kernel, ustat, ustat_exact, ustat_incomplete};
    use rand::Rng;

    let mut out = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        out.push(CheckOutcome {
            name: name.into(),
            passed,
            detail,
        })
    };
    let sq = SmoothFunction::square();
    let id = SmoothFunction::identity();
    let x3 = [1.0, 2.0, 3.0];

    match (
        ustat_exact(&x3, &[1.0, 0.5], &id, 100),
        ustat_exact(&x3, &[1.0, 0.5], &sq, 100),
    ) {
        (Ok(a), Ok(b)) => {
            let h11 = b.buckets.mean(0, 0).unwrap_or(f64::NAN);
            check(
                "exact enumeration of the 3-point instance",
                (a.kappa_tilde - 3.0).abs() < 1e-14 && (b.kappa_tilde - 9.5).abs() < 1e-14 && (h11 - 5.125).abs() < 1e-14,
                format!("identity {} (3), square {} (9.5), H11 {} (5.125)", a.kappa_tilde, b.kappa_tilde, h11),
            );
            let psi = ConstraintSpec::identity();
            let c = constrained_estimate(&b, 1.0, &x3, &psi);
            check("constraint correction with a = 1", (c - 7.5).abs() < 1e-14, format!("{c} (7.5)"));
            let a_hat = a_star_hat(&x3, &b, &psi).map(|a| a.a_star_hat).unwrap_or(f64::NAN);
            // Brute force over the six ordered pairs.
            let mut num = 0.0;
            for (j, &xj) in x3.iter().enumerate() {
                let mut s = 0.0;
                for slot in 0..2 {
                    let (mut acc, mut cnt) = (0.0, 0.0);
                    for (k, &xk) in x3.iter().enumerate() {
                        if k != j {
                            let v = if slot == 0 { xj + 0.5 * xk } else { xk + 0.5 * xj };
                            acc += v * v;
                            cnt += 1.0;
                        }
                    }
                    s += acc / cnt;
                }
                num += xj * s;
            }
            let want = num / 14.0;
            check("a_star_hat by hand enumeration", (a_hat - want).abs() < 1e-12, format!("{a_hat} ({want})"));
        }
        (a, b) => check("exact enumeration of the 3-point instance", false, format!("{a:?} {b:?}")),
    }

    let k = kernel(&[1.0, 2.0], &[1.0, 0.5], &id).unwrap_or(f64::NAN);
    let k2 = kernel(&[1.0, 2.0], &[1.0, 1.0], &sq).unwrap_or(f64::NAN);
    check("kernel permutation averages", k == 2.25 && k2 == 9.0, format!("{k} (2.25), {k2} (9)"));

    let root = SeedStream::new(seed).derive("selftest", 0);
    let mut rng = root.rng();
    let mut worst = 0.0f64;
    let mut forced_ok = true;
    for case in 0..20u64 {
        let n = rng.random_range(3..=8usize);
        let m = rng.random_range(1..=3usize.min(n));
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let beta: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let exact = ustat_exact(&x, &beta, &sq, 1_000_000);
        let inc = ustat_incomplete(&x, &beta, &sq, 20_000, &root.derive("case", case), 1);
        match (exact, inc) {
            (Ok(e), Ok(i)) => {
                let z = if i.sampling_se > 0.0 {
                    (i.kappa_tilde - e.kappa_tilde).abs() / i.sampling_se
                } else {
                    (i.kappa_tilde - e.kappa_tilde).abs() * 1e12
                };
                worst = worst.max(z);
                let total = crate::ustat::injective_tuple_count(n, m) as u64;
                let forced = ustat(&x, &beta, &sq, &UStatConfig::incomplete(m, total), &root);
                forced_ok &= forced.map(|f| (f.kappa_tilde - e.kappa_tilde).abs() <= 1e-12 * e.kappa_tilde.abs().max(1.0)).unwrap_or(false);
            }
            _ => worst = f64::INFINITY,
        }
    }
    check("incomplete sampling agrees with enumeration", worst <= 4.0, format!("largest |z| = {worst:.3}"));
    check("forced enumeration equals exact mode", forced_ok, String::new());

    // Sum over slots of bucket means equals m times the conditional kernel mean.
    let x = [0.3, -1.2, 2.0, 0.7, -0.4];
    let beta = [1.0, -0.6, 0.25];
    let mut max_err = 0.0f64;
    if let Ok(res) = ustat_exact(&x, &beta, &sq, 1000) {
        for j in 0..x.len() {
            let others: Vec<usize> = (0..x.len()).filter(|&k| k != j).collect();
            let (mut acc, mut cnt) = (0.0, 0.0);
            for a in 0..others.len() {
                for b in a + 1..others.len() {
                    let v = kernel(&[x[j], x[others[a]], x[others[b]]], &beta, &sq).unwrap_or(f64::NAN);
                    acc += v;
                    cnt += 1.0;
                }
            }
            let rhs = 3.0 * acc / cnt;
            max_err = max_err.max((res.buckets.slot_sum(j).0 - rhs).abs());
        }
    } else {
        max_err = f64::INFINITY;
    }
    check("bucket sums match conditional enumeration", max_err < 1e-12, format!("max error {max_err:e}"));

    let m = crate::bench::Moments::of(&InnovationSpec::centered_gamma(3.0).expect("valid"));
    let v = crate::bench::asymptotic_variance(crate::bench::VarianceKind::Improved, 0.5, &m).unwrap_or(f64::NAN);
    check("closed-form improved variance", (v - 64.0).abs() < 1e-12, format!("{v} (64)"));
    out
}

pub fn cmd_selftest(cfg: &RunConfig) -> (Artifacts, Vec<CheckOutcome>) {
    let outcomes = selftest(cfg.seed);
    let json = envelope(Command::Selftest, cfg, serde_json::json!({}), &outcomes);
    (vec![("selftest.json".into(), json)], outcomes)
}

pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, content) in artifacts {
        let p = dir.join(name);
        fs::write(&p, content)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_has_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.sample.n, 2000);
        assert_eq!(c.sample.m, Auto::Auto);
        assert_eq!(c.target, SmoothSpec::Square);
        assert_eq!(c.innovations, InnovationSpec::standard_normal());
    }

    #[test]
    fn parses_sections() {
        let c = RunConfig::from_toml(
            r#"
            seed = 9
            [model]
            name = "ma1"
            theta = [0.4]
            [innovations]
            family = "centered-gamma"
            shape = 3.0
            [target]
            name = "cos-t"
            t = 0.5
            [sample]
            n = 500
            m = 3
            draws = "auto"
            [study]
            estimators = ["empirical", "ustat-ls"]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.name, ModelName::Ma1);
        assert_eq!(c.sample.m, Auto::Value(3));
        assert_eq!(c.target, SmoothSpec::CosT { t: 0.5 });
        assert_eq!(c.study.estimators.len(), 2);
        let back = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&back).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_auto() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[sample]\nm = \"many\"").is_err());
    }

    #[test]
    fn selftest_passes() {
        let out = selftest(1);
        assert!(out.iter().all(|o| o.passed), "{out:?}");
    }
}
