//! Concave components of the concave-convex (CC) loss family.
//!
//! A robust loss is the composition `g(s(y, f))` of a nondecreasing concave
//! function `g` with an ordinary convex loss `s`. The derivative of `g`
//! evaluated at the current loss of an observation is that observation's
//! robustness weight: observations with large loss receive small weight.
//!
//! Weights returned by [`Concave::weight`] are normalized by `sup g'` so the
//! largest attainable weight is exactly 1. Objective values always use the
//! un-normalized `g`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Lower bound used for gcave's `delta` when `0 < sigma < 1`.
pub const GCAVE_DELTA_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConcaveKind {
    Hcave,
    Acave,
    Bcave,
    Ccave,
    Dcave,
    Ecave,
    Gcave,
    Tcave,
}

impl ConcaveKind {
    pub const ALL: [ConcaveKind; 8] = [
        ConcaveKind::Hcave,
        ConcaveKind::Acave,
        ConcaveKind::Bcave,
        ConcaveKind::Ccave,
        ConcaveKind::Dcave,
        ConcaveKind::Ecave,
        ConcaveKind::Gcave,
        ConcaveKind::Tcave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConcaveKind::Hcave => "hcave",
            ConcaveKind::Acave => "acave",
            ConcaveKind::Bcave => "bcave",
            ConcaveKind::Ccave => "ccave",
            ConcaveKind::Dcave => "dcave",
            ConcaveKind::Ecave => "ecave",
            ConcaveKind::Gcave => "gcave",
            ConcaveKind::Tcave => "tcave",
        }
    }
}

impl fmt::Display for ConcaveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConcaveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConcaveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = ConcaveKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown concave component '{s}', expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// User-facing description of a concave component.
///
/// `delta` is only read for ecave (required) and is ignored for every other
/// kind; gcave derives its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcaveSpec {
    pub kind: ConcaveKind,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl ConcaveSpec {
    pub fn new(kind: ConcaveKind, sigma: f64) -> Self {
        ConcaveSpec {
            kind,
            sigma,
            delta: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn validate(&self) -> Result<Concave> {
        Concave::new(*self)
    }
}

/// A validated concave component with derived constants cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concave {
    spec: ConcaveSpec,
    /// Effective delta (ecave: user value, gcave: derived, otherwise 0).
    delta: f64,
    /// Slope of the linear branch for ecave and gcave.
    slope: f64,
    /// `sup_{z >= 0} g'(z)`.
    norm: f64,
}

impl Concave {
    pub fn new(spec: ConcaveSpec) -> Result<Self> {
        let kind = spec.kind;
        let sigma = spec.sigma;
        let invalid = |reason: String| Error::InvalidConcave {
            kind: kind.name(),
            reason,
        };
        if !sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite, got {sigma}")));
        }
        match kind {
            ConcaveKind::Tcave if sigma < 0.0 => {
                return Err(invalid(format!("sigma must be >= 0, got {sigma}")))
            }
            ConcaveKind::Tcave => {}
            _ if sigma <= 0.0 => return Err(invalid(format!("sigma must be > 0, got {sigma}"))),
            _ => {}
        }

        let (delta, slope, norm) = match kind {
            ConcaveKind::Ecave => {
                let delta = spec
                    .delta
                    .ok_or_else(|| invalid("delta is required".into()))?;
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(invalid(format!("delta must be > 0, got {delta}")));
                }
                let slope = 2.0 * (-delta / sigma).exp() / (PI * sigma * delta).sqrt();
                if !(slope > 0.0 && slope.is_finite()) {
                    return Err(invalid(format!(
                        "linear-branch slope is degenerate for sigma={sigma}, delta={delta}"
                    )));
                }
                (delta, slope, slope)
            }
            ConcaveKind::Gcave => {
                let delta = if sigma >= 1.0 {
                    (sigma - 1.0) / 2.0
                } else {
                    GCAVE_DELTA_MIN
                };
                // 0^0 = 1 covers sigma = 1.
                let slope = delta.powf(sigma - 1.0) / (1.0 + delta).powf(sigma + 1.0);
                if !(slope > 0.0 && slope.is_finite()) {
                    return Err(invalid(format!(
                        "linear-branch slope is degenerate for sigma={sigma}"
                    )));
                }
                (delta, slope, slope)
            }
            _ => (0.0, 0.0, 1.0),
        };

        Ok(Concave {
            spec,
            delta,
            slope,
            norm,
        })
    }

    pub fn spec(&self) -> ConcaveSpec {
        self.spec
    }

    pub fn kind(&self) -> ConcaveKind {
        self.spec.kind
    }

    pub fn sigma(&self) -> f64 {
        self.spec.sigma
    }

    /// Effective `delta` (derived for gcave, user-set for ecave, 0 otherwise).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `sup_{z >= 0} g'(z)`, the constant weights are divided by.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Branch points where `g` switches formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        let s = self.sigma();
        match self.kind() {
            ConcaveKind::Hcave | ConcaveKind::Bcave => vec![s * s / 2.0],
            ConcaveKind::Acave => vec![s * s * PI * PI / 2.0],
            ConcaveKind::Ecave | ConcaveKind::Gcave => vec![self.delta],
            ConcaveKind::Tcave => vec![s],
            ConcaveKind::Ccave | ConcaveKind::Dcave => vec![],
        }
    }

    fn check_domain(z: f64) -> Result<()> {
        if z >= 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "concave component evaluated at z={z}, expected z >= 0"
            )))
        }
    }

    /// `g(z)`.
    pub fn value(&self, z: f64) -> Result<f64> {
        Self::check_domain(z)?;
        Ok(self.value_unchecked(z))
    }

    /// Un-normalized `g'(z)`, using the left-hand branch at kinks.
    pub fn derivative(&self, z: f64) -> Result<f64> {
        Self::check_domain(z)?;
        Ok(self.derivative_unchecked(z))
    }

    /// Robustness weight `g'(z) / sup g'`, in `[0, 1]`.
    pub fn weight(&self, z: f64) -> Result<f64> {
        Self::check_domain(z)?;
        Ok(self.weight_unchecked(z))
    }

    pub(crate) fn weight_unchecked(&self, z: f64) -> f64 {
        (self.derivative_unchecked(z) / self.norm).clamp(0.0, 1.0)
    }

    pub(crate) fn value_unchecked(&self, z: f64) -> f64 {
        let s = self.sigma();
        match self.kind() {
            ConcaveKind::Hcave => {
                if z <= s * s / 2.0 {
                    z
                } else {
                    s * (2.0 * z).sqrt() - s * s / 2.0
                }
            }
            ConcaveKind::Acave => {
                if z <= s * s * PI * PI / 2.0 {
                    s * s * (1.0 - ((2.0 * z).sqrt() / s).cos())
                } else {
                    2.0 * s * s
                }
            }
            ConcaveKind::Bcave => {
                let cube = if z <= s * s / 2.0 {
                    (1.0 - 2.0 * z / (s * s)).powi(3)
                } else {
                    0.0
                };
                s * s / 6.0 * (1.0 - cube)
            }
            ConcaveKind::Ccave => -s * s * (-z / (s * s)).exp_m1(),
            ConcaveKind::Dcave => {
                let e = (-s).exp();
                ((1.0 + z).ln() - (1.0 + z * e).ln()) / -(-s).exp_m1()
            }
            ConcaveKind::Ecave => {
                let d = self.delta;
                if z <= d {
                    self.slope * z
                } else {
                    erf((z / s).sqrt()) - erf((d / s).sqrt()) + self.slope * d
                }
            }
            ConcaveKind::Gcave => {
                let d = self.delta;
                if z <= d {
                    self.slope * z
                } else {
                    (z / (1.0 + z)).powf(s) / s - (d / (1.0 + d)).powf(s) / s
                        + d.powf(s) / (1.0 + d).powf(s + 1.0)
                }
            }
            ConcaveKind::Tcave => z.min(s),
        }
    }

    pub(crate) fn derivative_unchecked(&self, z: f64) -> f64 {
        let s = self.sigma();
        match self.kind() {
            ConcaveKind::Hcave => {
                if z <= s * s / 2.0 {
                    1.0
                } else {
                    s / (2.0 * z).sqrt()
                }
            }
            ConcaveKind::Acave => {
                if z == 0.0 {
                    1.0
                } else if z <= s * s * PI * PI / 2.0 {
                    let r = (2.0 * z).sqrt();
                    s * (r / s).sin() / r
                } else {
                    0.0
                }
            }
            ConcaveKind::Bcave => {
                if z <= s * s / 2.0 {
                    (1.0 - 2.0 * z / (s * s)).powi(2)
                } else {
                    0.0
                }
            }
            ConcaveKind::Ccave => (-z / (s * s)).exp(),
            ConcaveKind::Dcave => 1.0 / ((1.0 + z) * (1.0 + z * (-s).exp())),
            ConcaveKind::Ecave => {
                if z <= self.delta {
                    self.slope
                } else {
                    (-z / s).exp() / (PI * s * z).sqrt()
                }
            }
            ConcaveKind::Gcave => {
                if z <= self.delta {
                    self.slope
                } else {
                    z.powf(s - 1.0) / (1.0 + z).powf(s + 1.0)
                }
            }
            ConcaveKind::Tcave => {
                if z <= s {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cc(kind: ConcaveKind, sigma: f64) -> Concave {
        ConcaveSpec::new(kind, sigma).validate().unwrap()
    }

    fn all_kinds(sigma: f64) -> Vec<Concave> {
        ConcaveKind::ALL
            .into_iter()
            .map(|k| {
                let spec = ConcaveSpec::new(k, sigma);
                let spec = if k == ConcaveKind::Ecave {
                    spec.with_delta(0.5)
                } else {
                    spec
                };
                spec.validate().unwrap()
            })
            .collect()
    }

    #[test]
    fn value_examples() {
        assert_eq!(cc(ConcaveKind::Ccave, 1.0).value(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(cc(ConcaveKind::Hcave, 1.0).value(2.0).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(cc(ConcaveKind::Tcave, 1.0).value(2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            cc(ConcaveKind::Bcave, 2.0).value(3.0).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn weight_examples() {
        assert_eq!(cc(ConcaveKind::Ccave, 1.0).weight(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            cc(ConcaveKind::Ccave, 1.0).weight(1.0).unwrap(),
            0.367_879_441_171_442_3,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(cc(ConcaveKind::Hcave, 1.0).weight(2.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(cc(ConcaveKind::Tcave, 1.0).weight(2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(cc(ConcaveKind::Bcave, 2.0).weight(1.0).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn validation() {
        assert!(ConcaveSpec::new(ConcaveKind::Ccave, 10.0).validate().is_ok());
        let err = ConcaveSpec::new(ConcaveKind::Hcave, 0.0).validate().unwrap_err();
        assert!(err.to_string().contains("sigma must be > 0"), "{err}");
        let g = cc(ConcaveKind::Gcave, 2.0);
        assert_eq!(g.delta(), 0.5);
        assert_eq!(cc(ConcaveKind::Gcave, 0.5).delta(), GCAVE_DELTA_MIN);
        assert!(ConcaveSpec::new(ConcaveKind::Tcave, 0.0).validate().is_ok());
        assert!(ConcaveSpec::new(ConcaveKind::Tcave, -1.0).validate().is_err());
        assert!(ConcaveSpec::new(ConcaveKind::Ecave, 1.0).validate().is_err());
        assert!(ConcaveSpec::new(ConcaveKind::Ecave, 1.0)
            .with_delta(0.0)
            .validate()
            .is_err());
        assert!("xcave".parse::<ConcaveKind>().is_err());
        assert_eq!("bcave".parse::<ConcaveKind>().unwrap(), ConcaveKind::Bcave);
    }

    #[test]
    fn negative_z_is_a_domain_error() {
        let c = cc(ConcaveKind::Ccave, 1.0);
        assert!(matches!(c.value(-1e-3), Err(Error::Domain(_))));
        assert!(matches!(c.weight(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tcave_kink_keeps_observation() {
        assert_eq!(cc(ConcaveKind::Tcave, 1.0).weight(1.0).unwrap(), 1.0);
        let t0 = cc(ConcaveKind::Tcave, 0.0);
        assert_eq!(t0.weight(0.0).unwrap(), 1.0);
        assert_eq!(t0.weight(1e-12).unwrap(), 0.0);
        assert_eq!(t0.value(5.0).unwrap(), 0.0);
    }

    #[test]
    fn acave_limit_at_zero() {
        let a = cc(ConcaveKind::Acave, 3.0);
        assert_eq!(a.weight(0.0).unwrap(), 1.0);
        assert!((a.weight(1e-14).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_monotone_bounded_and_reach_one() {
        for sigma in [0.3, 1.0, 2.5, 10.0] {
            for c in all_kinds(sigma) {
                let grid: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
                let mut prev = f64::INFINITY;
                let mut max_w: f64 = 0.0;
                for &z in &grid {
                    let w = c.weight(z).unwrap();
                    assert!((0.0..=1.0).contains(&w), "{} sigma={sigma} z={z} w={w}", c.kind());
                    assert!(w <= prev + 1e-12, "{} not nonincreasing at z={z}", c.kind());
                    prev = w;
                    max_w = max_w.max(w);
                }
                assert!((max_w - 1.0).abs() < 1e-9, "{} sup weight {max_w}", c.kind());
            }
        }
    }

    #[test]
    fn values_concave_on_grid() {
        for sigma in [0.5, 1.0, 4.0] {
            for c in all_kinds(sigma) {
                let g: Vec<f64> = (0..600).map(|i| c.value(i as f64 * 0.05).unwrap()).collect();
                for w in g.windows(3) {
                    let chord = 0.5 * (w[0] + w[2]);
                    assert!(w[1] >= chord - 1e-9, "{} not concave", c.kind());
                }
                for pair in g.windows(2) {
                    assert!(pair[1] >= pair[0] - 1e-12, "{} decreasing", c.kind());
                }
            }
        }
    }

    #[test]
    fn gcave_sigma_one_has_zero_delta() {
        let g = cc(ConcaveKind::Gcave, 1.0);
        assert_eq!(g.delta(), 0.0);
        assert_eq!(g.weight(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(g.weight(1.0).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn spec_serializes_with_lowercase_kind() {
        let s = ConcaveSpec::new(ConcaveKind::Bcave, 10.0);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"bcave","sigma":10.0}"#);
        let back: ConcaveSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
