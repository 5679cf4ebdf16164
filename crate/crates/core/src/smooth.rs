//! Target functions `h` with growth constants.
//!
//! Each function carries `p` and constants `C1, C2` with
//! `|h(x)| <= C1 (1 + |x|^p)` and
//! `|h(x + y) - h(x)| <= C2 (1 + |x|^p)(|y| + |y|^p)`, plus `q, C3` with
//! `|h'(x)| <= C3 (1 + |x|)^q`. The constants only feed diagnostics.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Square,
    Identity,
    Abs,
    Cos(f64),
    Constant(f64),
    Poly(Vec<f64>),
    Custom { h: RealFn, h_prime: RealFn },
}

/// Growth constants of a [`SmoothFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub p: f64,
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Clone)]
pub struct SmoothFunction {
    name: String,
    kind: Kind,
    growth: Growth,
}

impl fmt::Debug for SmoothFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothFunction")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .finish()
    }
}

/// Serializable description of a registry function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum SmoothSpec {
    Square,
    Identity,
    Abs,
    CosT { t: f64 },
    Constant { value: f64 },
    Poly { coefficients: Vec<f64> },
}

impl SmoothFunction {
    pub fn square() -> Self {
        Self {
            name: "square".into(),
            kind: Kind::Square,
            growth: Growth {
                p: 2.0,
                q: 1.0,
                c1: 1.0,
                c2: 1.0,
                c3: 2.0,
            },
        }
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            kind: Kind::Identity,
            growth: Growth {
                p: 1.0,
                q: 0.0,
                c1: 1.0,
                c2: 0.5,
                c3: 1.0,
            },
        }
    }

    pub fn abs() -> Self {
        Self {
            name: "abs".into(),
            kind: Kind::Abs,
            growth: Growth {
                p: 1.0,
                q: 0.0,
                c1: 1.0,
                c2: 0.5,
                c3: 1.0,
            },
        }
    }

    /// `x -> cos(t x)`.
    pub fn cos_t(t: f64) -> Self {
        Self {
            name: format!("cos_t({t})"),
            kind: Kind::Cos(t),
            growth: Growth {
                p: 1.0,
                q: 0.0,
                c1: 1.0,
                c2: 0.5 * t.abs(),
                c3: t.abs(),
            },
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            name: format!("constant({value})"),
            kind: Kind::Constant(value),
            growth: Growth {
                p: 1.0,
                q: 0.0,
                c1: value.abs(),
                c2: 0.0,
                c3: 0.0,
            },
        }
    }

    /// `c0 + c1 x + ... + ck x^k`.
    pub fn poly(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "polynomial needs at least one finite coefficient".into(),
            ));
        }
        let degree = coefficients
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0);
        let p = degree.max(1) as f64;
        let c1 = coefficients.iter().map(|c| c.abs()).sum();
        // (x+y)^i - x^i has 2^i - 1 cross terms, each bounded by (1+|x|^p)(|y|+|y|^p).
        let c2 = coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c.abs() * ((1u64 << i) - 1) as f64)
            .sum();
        let c3 = coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| i as f64 * c.abs())
            .sum();
        Ok(Self {
            name: format!("poly({coefficients:?})"),
            kind: Kind::Poly(coefficients),
            growth: Growth {
                p,
                q: degree.saturating_sub(1) as f64,
                c1,
                c2,
                c3,
            },
        })
    }

    /// A user-supplied function; the growth constants must be supplied too.
    pub fn custom(
        name: impl Into<String>,
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
        h_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        growth: Growth,
    ) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Custom {
                h: Arc::new(h),
                h_prime: Arc::new(h_prime),
            },
            growth,
        }
    }

    pub fn from_spec(spec: &SmoothSpec) -> Result<Self> {
        Ok(match spec {
            SmoothSpec::Square => Self::square(),
            SmoothSpec::Identity => Self::identity(),
            SmoothSpec::Abs => Self::abs(),
            SmoothSpec::CosT { t } => Self::cos_t(*t),
            SmoothSpec::Constant { value } => Self::constant(*value),
            SmoothSpec::Poly { coefficients } => Self::poly(coefficients.clone())?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn is_square(&self) -> bool {
        matches!(self.kind, Kind::Square)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, Kind::Constant(_))
    }

    /// Polynomial coefficients `c0, c1, ...` when `h` is a polynomial.
    pub fn polynomial_coefficients(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Square => Some(vec![0.0, 0.0, 1.0]),
            Kind::Identity => Some(vec![0.0, 1.0]),
            Kind::Constant(c) => Some(vec![*c]),
            Kind::Poly(c) => Some(c.clone()),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Square => x * x,
            Kind::Identity => x,
            Kind::Abs => x.abs(),
            Kind::Cos(t) => (t * x).cos(),
            Kind::Constant(c) => *c,
            Kind::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            Kind::Custom { h, .. } => h(x),
        }
    }

    /// Almost-everywhere derivative (`abs` uses `sign(x)`, 0 at the kink).
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Square => 2.0 * x,
            Kind::Identity => 1.0,
            Kind::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Kind::Cos(t) => -t * (t * x).sin(),
            Kind::Constant(_) => 0.0,
            Kind::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &ci)| acc * x + i as f64 * ci),
            Kind::Custom { h_prime, .. } => h_prime(x),
        }
    }
}

/// Constraint function `psi` with `∫ psi dP = 0`.
#[derive(Clone)]
pub struct ConstraintSpec {
    psi: Option<(RealFn, RealFn)>,
    lipschitz: f64,
}

impl fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSpec")
            .field("identity", &self.psi.is_none())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl ConstraintSpec {
    /// `psi(x) = x`, the mean-zero constraint.
    pub fn identity() -> Self {
        Self {
            psi: None,
            lipschitz: 1.0,
        }
    }

    pub fn custom(
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::InvalidArgument(
                "psi needs a finite Lipschitz constant".into(),
            ));
        }
        Ok(Self {
            psi: Some((Arc::new(psi), Arc::new(psi_prime))),
            lipschitz,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.psi.is_none()
    }

    pub fn lipschitz_const(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    pub fn psi(&self, x: f64) -> f64 {
        match &self.psi {
            None => x,
            Some((f, _)) => f(x),
        }
    }

    #[inline]
    pub fn psi_prime(&self, x: f64) -> f64 {
        match &self.psi {
            None => 1.0,
            Some((_, d)) => d(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Vec<SmoothFunction> {
        vec![
            SmoothFunction::square(),
            SmoothFunction::identity(),
            SmoothFunction::abs(),
            SmoothFunction::cos_t(1.7),
            SmoothFunction::constant(7.0),
            SmoothFunction::poly(vec![1.0, -2.0, 0.5]).unwrap(),
            SmoothFunction::poly(vec![0.3, 1.5]).unwrap(),
        ]
    }

    fn grid() -> Vec<f64> {
        (-400..=400).map(|i| i as f64 * 0.25).collect()
    }

    #[test]
    fn growth_bounds_hold_on_wide_grid() {
        for h in registry() {
            let g = h.growth();
            for &x in &grid() {
                let hx = h.eval(x);
                assert!(
                    hx.abs() <= g.c1 * (1.0 + x.abs().powf(g.p)) + 1e-9,
                    "{} C1 at {x}",
                    h.name()
                );
                assert!(
                    h.derivative(x).abs() <= g.c3 * (1.0 + x.abs()).powf(g.q) + 1e-9,
                    "{} C3 at {x}",
                    h.name()
                );
            }
            for &x in grid().iter().step_by(7) {
                for &y in grid().iter().step_by(11) {
                    let lhs = (h.eval(x + y) - h.eval(x)).abs();
                    let rhs = g.c2 * (1.0 + x.abs().powf(g.p)) * (y.abs() + y.abs().powf(g.p));
                    assert!(lhs <= rhs + 1e-9, "{} C2 at ({x},{y}): {lhs} > {rhs}", h.name());
                }
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        for h in registry() {
            for &x in &[-3.1, -0.4, 0.7, 2.2] {
                let e = 1e-6;
                let fd = (h.eval(x + e) - h.eval(x - e)) / (2.0 * e);
                assert!((fd - h.derivative(x)).abs() < 1e-5, "{} at {x}", h.name());
            }
        }
    }

    #[test]
    fn poly_evaluates_horner() {
        let p = SmoothFunction::poly(vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 2.0);
        assert_eq!(p.derivative(2.0), -2.0 + 2.0);
        assert!(SmoothFunction::poly(vec![]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let s = SmoothSpec::CosT { t: 0.5 };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"name":"cos-t","t":0.5}"#);
        let h = SmoothFunction::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(h.eval(0.0), 1.0);
    }
}
