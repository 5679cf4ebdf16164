//! Innovation distributions: exact moments, location score, Fisher information
//! and reproducible sampling.
//!
//! All families are centered, so the tabulated moments `mu(k)` are raw moments
//! of a mean-zero variable. The centered gamma family is `Gamma(k, 1) - k`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InnovationSpec {
    StandardNormal,
    /// `Gamma(shape, 1)` shifted by `-shape`; finite Fisher information needs `shape > 2`.
    CenteredGamma { shape: f64 },
    CenteredLaplace { scale: f64 },
    CenteredUniform { half_width: f64 },
    /// Takes `upper > 0` with probability `p`, and `-p * upper / (1 - p)` otherwise.
    TwoPoint { p: f64, upper: f64 },
}

impl InnovationSpec {
    pub fn standard_normal() -> Self {
        InnovationSpec::StandardNormal
    }

    pub fn centered_gamma(shape: f64) -> Result<Self> {
        if !(shape > 2.0 && shape.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "centered-gamma shape must exceed 2, got {shape}"
            )));
        }
        Ok(InnovationSpec::CenteredGamma { shape })
    }

    pub fn centered_laplace(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "laplace scale must be positive, got {scale}"
            )));
        }
        Ok(InnovationSpec::CenteredLaplace { scale })
    }

    pub fn centered_uniform(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "uniform half-width must be positive, got {half_width}"
            )));
        }
        Ok(InnovationSpec::CenteredUniform { half_width })
    }

    pub fn two_point(p: f64, upper: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "two-point needs 0 < p < 1 and upper > 0, got p={p}, upper={upper}"
            )));
        }
        Ok(InnovationSpec::TwoPoint { p, upper })
    }

    /// Re-checks parameter constraints, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        match self {
            InnovationSpec::StandardNormal => Ok(self),
            InnovationSpec::CenteredGamma { shape } => Self::centered_gamma(shape),
            InnovationSpec::CenteredLaplace { scale } => Self::centered_laplace(scale),
            InnovationSpec::CenteredUniform { half_width } => Self::centered_uniform(half_width),
            InnovationSpec::TwoPoint { p, upper } => Self::two_point(p, upper),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InnovationSpec::StandardNormal => "standard-normal",
            InnovationSpec::CenteredGamma { .. } => "centered-gamma",
            InnovationSpec::CenteredLaplace { .. } => "centered-laplace",
            InnovationSpec::CenteredUniform { .. } => "centered-uniform",
            InnovationSpec::TwoPoint { .. } => "two-point",
        }
    }

    /// Lower value of the two-point law.
    fn two_point_lower(p: f64, upper: f64) -> f64 {
        -p * upper / (1.0 - p)
    }

    /// Raw moment `E[X^k]` for `k` in `1..=4`.
    pub fn moment(&self, k: usize) -> Result<f64> {
        if !(1..=4).contains(&k) {
            return Err(Error::UnsupportedMoment(k));
        }
        if k == 1 {
            return Ok(0.0);
        }
        let v = match *self {
            InnovationSpec::StandardNormal => [1.0, 0.0, 3.0][k - 2],
            InnovationSpec::CenteredGamma { shape } => {
                [shape, 2.0 * shape, 3.0 * shape * shape + 6.0 * shape][k - 2]
            }
            InnovationSpec::CenteredLaplace { scale } => {
                let b2 = scale * scale;
                [2.0 * b2, 0.0, 24.0 * b2 * b2][k - 2]
            }
            InnovationSpec::CenteredUniform { half_width } => {
                let w2 = half_width * half_width;
                [w2 / 3.0, 0.0, w2 * w2 / 5.0][k - 2]
            }
            InnovationSpec::TwoPoint { p, upper } => {
                let lower = Self::two_point_lower(p, upper);
                let k = k as i32;
                p * upper.powi(k) + (1.0 - p) * lower.powi(k)
            }
        };
        Ok(v)
    }

    /// `(mu2, mu3, mu4)`.
    pub fn moments234(&self) -> (f64, f64, f64) {
        (
            self.moment(2).expect("tabulated"),
            self.moment(3).expect("tabulated"),
            self.moment(4).expect("tabulated"),
        )
    }

    /// `E[|X|^q]` for even `q` in `{2, 4}`; other orders are not tabulated.
    pub fn abs_moment(&self, q: f64) -> Result<f64> {
        if q == 2.0 {
            self.moment(2)
        } else if q == 4.0 {
            self.moment(4)
        } else {
            Err(Error::Unavailable("absolute moment of this order"))
        }
    }

    /// Location score `f'/f`. Returns NaN outside the support.
    pub fn score(&self, x: f64) -> Result<f64> {
        match *self {
            InnovationSpec::StandardNormal => Ok(-x),
            InnovationSpec::CenteredGamma { shape } => {
                let z = x + shape;
                Ok(if z > 0.0 {
                    (shape - 1.0) / z - 1.0
                } else {
                    f64::NAN
                })
            }
            InnovationSpec::CenteredLaplace { scale } => Ok(if x > 0.0 {
                -1.0 / scale
            } else if x < 0.0 {
                1.0 / scale
            } else {
                0.0
            }),
            _ => Err(Error::Unavailable("location score")),
        }
    }

    /// Fisher information for location.
    pub fn fisher_info(&self) -> Result<f64> {
        match *self {
            InnovationSpec::StandardNormal => Ok(1.0),
            InnovationSpec::CenteredGamma { shape } => Ok(1.0 / (shape - 2.0)),
            InnovationSpec::CenteredLaplace { scale } => Ok(1.0 / (scale * scale)),
            _ => Err(Error::Unavailable("Fisher information")),
        }
    }

    pub fn has_score(&self) -> bool {
        self.fisher_info().is_ok()
    }

    /// Score function together with the Fisher information.
    pub fn score_and_info(&self) -> Result<(impl Fn(f64) -> f64 + Copy, f64)> {
        let info = self.fisher_info()?;
        let spec = *self;
        Ok((move |x: f64| spec.score(x).unwrap_or(f64::NAN), info))
    }

    /// Open interval containing the support (infinite ends where unbounded).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            InnovationSpec::CenteredGamma { shape } => (-shape, f64::INFINITY),
            InnovationSpec::CenteredUniform { half_width } => (-half_width, half_width),
            InnovationSpec::TwoPoint { p, upper } => (Self::two_point_lower(p, upper), upper),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Lebesgue density, if the family has one.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match *self {
            InnovationSpec::StandardNormal => {
                Some((-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
            }
            InnovationSpec::CenteredGamma { shape } => {
                let z = x + shape;
                Some(if z > 0.0 {
                    ((shape - 1.0) * z.ln() - z - ln_gamma(shape)).exp()
                } else {
                    0.0
                })
            }
            InnovationSpec::CenteredLaplace { scale } => {
                Some((-x.abs() / scale).exp() / (2.0 * scale))
            }
            InnovationSpec::CenteredUniform { half_width } => Some(if x.abs() <= half_width {
                0.5 / half_width
            } else {
                0.0
            }),
            InnovationSpec::TwoPoint { .. } => None,
        }
    }

    /// Finite interval carrying all but a negligible amount of probability,
    /// used for numerical integration against the density.
    pub fn integration_range(&self) -> Option<(f64, f64)> {
        match *self {
            InnovationSpec::StandardNormal => Some((-12.0, 12.0)),
            InnovationSpec::CenteredGamma { shape } => Some((-shape, 60.0 + 10.0 * shape)),
            InnovationSpec::CenteredLaplace { scale } => Some((-45.0 * scale, 45.0 * scale)),
            InnovationSpec::CenteredUniform { half_width } => Some((-half_width, half_width)),
            InnovationSpec::TwoPoint { .. } => None,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InnovationSpec::StandardNormal => StandardNormal.sample(rng),
            InnovationSpec::CenteredGamma { shape } => {
                Gamma::new(shape, 1.0).expect("validated shape").sample(rng) - shape
            }
            InnovationSpec::CenteredLaplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                let mag = -(1.0 - 2.0 * u.abs()).ln();
                scale * mag * u.signum()
            }
            InnovationSpec::CenteredUniform { half_width } => {
                half_width * (2.0 * rng.random::<f64>() - 1.0)
            }
            InnovationSpec::TwoPoint { p, upper } => {
                if rng.random::<f64>() < p {
                    upper
                } else {
                    Self::two_point_lower(p, upper)
                }
            }
        }
    }

    /// Fills `out` with i.i.d. draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            InnovationSpec::CenteredGamma { shape } => {
                let g = Gamma::new(shape, 1.0).expect("validated shape");
                for x in out.iter_mut() {
                    *x = g.sample(rng) - shape;
                }
            }
            _ => {
                for x in out.iter_mut() {
                    *x = self.draw(rng);
                }
            }
        }
    }

    /// `n` i.i.d. draws; identical `(spec, stream)` give identical output.
    pub fn sample(&self, n: usize, stream: &SeedStream) -> Vec<f64> {
        let mut rng = stream.rng();
        let mut out = vec![0.0; n];
        self.fill(&mut rng, &mut out);
        out
    }
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn first_moment_is_zero_for_every_family() {
        for spec in [
            InnovationSpec::standard_normal(),
            InnovationSpec::centered_gamma(3.0).unwrap(),
            InnovationSpec::centered_laplace(0.7).unwrap(),
            InnovationSpec::centered_uniform(2.0).unwrap(),
            InnovationSpec::two_point(0.3, 1.5).unwrap(),
        ] {
            assert_eq!(spec.moment(1).unwrap(), 0.0, "{}", spec.name());
            let (m2, _, m4) = spec.moments234();
            assert!(m2 > 0.0 && m4 >= m2 * m2);
        }
    }

    #[test]
    fn tabulated_moments_match_quadrature() {
        // Integration oracle against the density.
        for spec in [
            InnovationSpec::standard_normal(),
            InnovationSpec::centered_gamma(3.0).unwrap(),
            InnovationSpec::centered_laplace(1.3).unwrap(),
            InnovationSpec::centered_uniform(2.0).unwrap(),
        ] {
            let (a, b) = spec.integration_range().unwrap();
            for k in 1..=4 {
                let q = simpson(|x| x.powi(k as i32) * spec.pdf(x).unwrap(), a, b, 200_000);
                let exact = spec.moment(k).unwrap();
                assert!(
                    (q - exact).abs() < 1e-6 * (1.0 + exact.abs()),
                    "{} k={k}: {q} vs {exact}",
                    spec.name()
                );
            }
        }
        let n = InnovationSpec::standard_normal();
        assert_eq!(n.moment(4).unwrap(), 3.0);
        let g = InnovationSpec::centered_gamma(3.0).unwrap();
        assert_eq!(g.moment(3).unwrap(), 6.0);
        assert_eq!(g.moments234(), (3.0, 6.0, 45.0));
    }

    #[test]
    fn unsupported_moment_order() {
        let n = InnovationSpec::standard_normal();
        assert_eq!(n.moment(5), Err(Error::UnsupportedMoment(5)));
        assert_eq!(n.moment(0), Err(Error::UnsupportedMoment(0)));
    }

    #[test]
    fn fisher_information_matches_quadrature() {
        for spec in [
            InnovationSpec::standard_normal(),
            InnovationSpec::centered_gamma(3.0).unwrap(),
            InnovationSpec::centered_gamma(5.5).unwrap(),
            InnovationSpec::centered_laplace(0.5).unwrap(),
        ] {
            let (a, b) = spec.integration_range().unwrap();
            let info = spec.fisher_info().unwrap();
            let q = simpson(
                |x| {
                    let f = spec.pdf(x).unwrap();
                    if f > 0.0 {
                        spec.score(x).unwrap().powi(2) * f
                    } else {
                        0.0
                    }
                },
                // The gamma integrand has a nonzero limit at the left end.
                a + 1e-9,
                b,
                400_000,
            );
            assert!((q - info).abs() < 1e-4 * info, "{}: {q} vs {info}", spec.name());
            let (m2, _, _) = spec.moments234();
            assert!(m2 * info >= 1.0 - 1e-12);
        }
        let g = InnovationSpec::centered_gamma(3.0).unwrap();
        assert_eq!(g.fisher_info().unwrap(), 1.0);
        assert_eq!(InnovationSpec::standard_normal().score(1.5).unwrap(), -1.5);
    }

    #[test]
    fn score_unavailable_without_density() {
        let tp = InnovationSpec::two_point(0.5, 1.0).unwrap();
        assert!(matches!(tp.score_and_info(), Err(Error::Unavailable(_))));
        let u = InnovationSpec::centered_uniform(1.0).unwrap();
        assert!(matches!(u.fisher_info(), Err(Error::Unavailable(_))));
    }

    #[test]
    fn two_point_support_and_determinism() {
        let tp = InnovationSpec::two_point(0.5, 1.0).unwrap();
        let s = SeedStream::new(9).derive("tp", 0);
        let xs = tp.sample(4, &s);
        assert!(xs.iter().all(|&x| x == 1.0 || x == -1.0));
        assert_eq!(xs, tp.sample(4, &s));
    }

    #[test]
    fn normal_sample_mean_is_near_zero() {
        let xs = InnovationSpec::standard_normal().sample(100_000, &SeedStream::new(1));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 4.0 / (1e5f64).sqrt());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(InnovationSpec::centered_gamma(2.0).is_err());
        assert!(InnovationSpec::centered_laplace(-1.0).is_err());
        assert!(InnovationSpec::two_point(1.0, 1.0).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(3.0) - 2f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }
}
