//! Convex loss components: value, first and second derivative with respect to
//! the score, and the saturated-model value used to shift losses to be
//! nonnegative.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Lower bound applied to the AFT second derivative.
pub const AFT_MIN_HESSIAN: f64 = 1e-6;
/// Floor for softmax / sigmoid curvature, which can underflow to zero.
pub const MIN_HESSIAN: f64 = 1e-16;
/// Scores above this value are clamped inside exponentials of Poisson and
/// Tweedie Hessians.
pub const MAX_EXP_SCORE: f64 = 30.0;

/// Convex loss family with its parameters.
///
/// Serialized with the objective strings familiar from xgboost
/// (`reg:squarederror`, `count:poisson`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective")]
pub enum Loss {
    #[serde(rename = "reg:squarederror")]
    Squared,
    #[serde(rename = "binary:logitraw")]
    Logistic,
    #[serde(rename = "binary:hinge")]
    Hinge,
    #[serde(rename = "count:poisson")]
    Poisson,
    #[serde(rename = "reg:gamma")]
    Gamma,
    #[serde(rename = "reg:tweedie")]
    Tweedie { tweedie_power: f64 },
    #[serde(rename = "multi:softprob")]
    Multinomial { num_class: usize },
    #[serde(rename = "survival:aft")]
    AftNormal { aft_scale: f64 },
}

/// Loss kind without parameters, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Squared,
    Logistic,
    Hinge,
    Poisson,
    Gamma,
    Tweedie,
    Multinomial,
    AftNormal,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Squared,
        LossKind::Logistic,
        LossKind::Hinge,
        LossKind::Poisson,
        LossKind::Gamma,
        LossKind::Tweedie,
        LossKind::Multinomial,
        LossKind::AftNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "reg:squarederror",
            LossKind::Logistic => "binary:logitraw",
            LossKind::Hinge => "binary:hinge",
            LossKind::Poisson => "count:poisson",
            LossKind::Gamma => "reg:gamma",
            LossKind::Tweedie => "reg:tweedie",
            LossKind::Multinomial => "multi:softprob",
            LossKind::AftNormal => "survival:aft",
        }
    }

    /// Kind of label this loss consumes.
    pub fn label_kind(self) -> LabelKind {
        match self {
            LossKind::Multinomial => LabelKind::Class,
            LossKind::AftNormal => LabelKind::Interval,
            _ => LabelKind::Value,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown loss '{s}', expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Value,
    Class,
    Interval,
}

/// Response of a single observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    /// Real response; `-1`/`+1` for margin losses.
    Value(f64),
    /// Class index for multinomial loss.
    Class(usize),
    /// Censoring interval `[lower, upper]`; `upper` may be `+inf`.
    Interval { lower: f64, upper: f64 },
}

impl Label {
    pub fn value(self) -> Option<f64> {
        match self {
            Label::Value(y) => Some(y),
            _ => None,
        }
    }

    pub fn kind(self) -> LabelKind {
        match self {
            Label::Value(_) => LabelKind::Value,
            Label::Class(_) => LabelKind::Class,
            Label::Interval { .. } => LabelKind::Interval,
        }
    }
}

impl Loss {
    /// Builds a loss from its command-line name and optional parameters.
    pub fn from_kind(
        kind: LossKind,
        num_class: Option<usize>,
        tweedie_power: Option<f64>,
        aft_scale: Option<f64>,
    ) -> Result<Self> {
        let loss = match kind {
            LossKind::Squared => Loss::Squared,
            LossKind::Logistic => Loss::Logistic,
            LossKind::Hinge => Loss::Hinge,
            LossKind::Poisson => Loss::Poisson,
            LossKind::Gamma => Loss::Gamma,
            LossKind::Tweedie => Loss::Tweedie {
                tweedie_power: tweedie_power.unwrap_or(1.5),
            },
            LossKind::Multinomial => Loss::Multinomial {
                num_class: num_class.ok_or_else(|| {
                    Error::InvalidConfig("multi:softprob requires num_class".into())
                })?,
            },
            LossKind::AftNormal => Loss::AftNormal {
                aft_scale: aft_scale.unwrap_or(1.0),
            },
        };
        loss.validate()?;
        Ok(loss)
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Loss::Squared => LossKind::Squared,
            Loss::Logistic => LossKind::Logistic,
            Loss::Hinge => LossKind::Hinge,
            Loss::Poisson => LossKind::Poisson,
            Loss::Gamma => LossKind::Gamma,
            Loss::Tweedie { .. } => LossKind::Tweedie,
            Loss::Multinomial { .. } => LossKind::Multinomial,
            Loss::AftNormal { .. } => LossKind::AftNormal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Tweedie { tweedie_power: p } if !(p > 1.0 && p < 2.0) => Err(
                Error::InvalidConfig(format!("tweedie_power must lie in (1, 2), got {p}")),
            ),
            Loss::Multinomial { num_class } if num_class < 2 => Err(Error::InvalidConfig(
                format!("num_class must be >= 2, got {num_class}"),
            )),
            Loss::AftNormal { aft_scale } if !(aft_scale > 0.0 && aft_scale.is_finite()) => Err(
                Error::InvalidConfig(format!("aft_scale must be > 0, got {aft_scale}")),
            ),
            _ => Ok(()),
        }
    }

    /// Number of scores per observation.
    pub fn n_outputs(&self) -> usize {
        match *self {
            Loss::Multinomial { num_class } => num_class,
            _ => 1,
        }
    }

    /// Maps raw scores to the response scale: sigmoid for logistic, softmax
    /// for multinomial, `exp` for log-link and survival losses, identity
    /// otherwise.
    pub fn transform(&self, score: &[f64]) -> Vec<f64> {
        match *self {
            Loss::Logistic => vec![sigmoid(score[0])],
            Loss::Multinomial { .. } => softmax(score),
            Loss::Poisson | Loss::Gamma | Loss::Tweedie { .. } | Loss::AftNormal { .. } => {
                score.iter().map(|f| f.exp()).collect()
            }
            Loss::Squared | Loss::Hinge => score.to_vec(),
        }
    }

    /// Checks that `label` is admissible for this loss.
    pub fn check_label(&self, label: Label) -> std::result::Result<(), String> {
        match (*self, label) {
            (Loss::Squared, Label::Value(y)) if y.is_finite() => Ok(()),
            (Loss::Logistic | Loss::Hinge, Label::Value(y)) if y == 1.0 || y == -1.0 => Ok(()),
            (Loss::Logistic | Loss::Hinge, Label::Value(y)) => {
                Err(format!("margin losses need y in {{-1, +1}}, got {y}"))
            }
            (Loss::Poisson | Loss::Tweedie { .. }, Label::Value(y)) if y >= 0.0 && y.is_finite() => {
                Ok(())
            }
            (Loss::Poisson | Loss::Tweedie { .. }, Label::Value(y)) => {
                Err(format!("count responses must be finite and >= 0, got {y}"))
            }
            (Loss::Gamma, Label::Value(y)) if y > 0.0 && y.is_finite() => Ok(()),
            (Loss::Gamma, Label::Value(y)) => {
                Err(format!("gamma responses must be finite and > 0, got {y}"))
            }
            (Loss::Squared, Label::Value(y)) => Err(format!("response must be finite, got {y}")),
            (Loss::Multinomial { num_class }, Label::Class(c)) if c < num_class => Ok(()),
            (Loss::Multinomial { num_class }, Label::Class(c)) => {
                Err(format!("class index {c} out of range for {num_class} classes"))
            }
            (Loss::AftNormal { .. }, Label::Interval { lower, upper }) => {
                if !(lower > 0.0 && lower.is_finite()) {
                    Err(format!("lower bound must be finite and > 0, got {lower}"))
                } else if !(upper >= lower) || upper.is_nan() {
                    Err(format!("upper bound {upper} is below lower bound {lower}"))
                } else {
                    Ok(())
                }
            }
            (loss, label) => Err(format!(
                "{:?} label does not fit loss {}",
                label.kind(),
                loss.kind()
            )),
        }
    }

    pub fn check_labels(&self, labels: &[Label]) -> Result<()> {
        for (index, &label) in labels.iter().enumerate() {
            self.check_label(label)
                .map_err(|reason| Error::InvalidLabel { index, reason })?;
        }
        Ok(())
    }

    fn check(&self, label: Label, score: &[f64]) -> Result<()> {
        self.check_label(label)
            .map_err(|reason| Error::InvalidLabel { index: 0, reason })?;
        if score.len() != self.n_outputs() {
            return Err(Error::Domain(format!(
                "expected {} scores, got {}",
                self.n_outputs(),
                score.len()
            )));
        }
        Ok(())
    }

    /// Un-shifted loss `s(y, f)`.
    pub fn raw_loss(&self, label: Label, score: &[f64]) -> Result<f64> {
        self.check(label, score)?;
        Ok(self.raw_loss_unchecked(label, score))
    }

    /// First and second derivatives with respect to the score(s).
    pub fn grad_hess(&self, label: Label, score: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(label, score)?;
        let mut d = vec![0.0; score.len()];
        let mut h = vec![0.0; score.len()];
        self.grad_hess_into(label, score, &mut d, &mut h);
        Ok((d, h))
    }

    /// `inf_f s(y, f)`.
    pub fn saturated_value(&self, label: Label) -> Result<f64> {
        self.check_label(label)
            .map_err(|reason| Error::InvalidLabel { index: 0, reason })?;
        Ok(self.saturated_unchecked(label))
    }

    /// `min_i saturated_value(label_i)`; subtracting it makes every loss
    /// nonnegative.
    pub fn shift_constant(&self, labels: &[Label]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_labels(labels)?;
        Ok(labels
            .iter()
            .map(|&l| self.saturated_unchecked(l))
            .fold(f64::INFINITY, f64::min))
    }

    pub(crate) fn raw_loss_unchecked(&self, label: Label, score: &[f64]) -> f64 {
        match (*self, label) {
            (Loss::Squared, Label::Value(y)) => 0.5 * (y - score[0]).powi(2),
            (Loss::Logistic, Label::Value(y)) => softplus(-y * score[0]),
            (Loss::Hinge, Label::Value(y)) => (1.0 - y * score[0]).max(0.0),
            (Loss::Poisson, Label::Value(y)) => {
                let f = score[0];
                f.exp() - y * f
            }
            (Loss::Gamma, Label::Value(y)) => {
                let f = score[0];
                2.0 * (y * (-f).exp() - 1.0 - y.ln() + f)
            }
            (Loss::Tweedie { tweedie_power: p }, Label::Value(y)) => {
                let f = score[0];
                -y * ((1.0 - p) * f).exp() / (1.0 - p) + ((2.0 - p) * f).exp() / (2.0 - p)
            }
            (Loss::Multinomial { .. }, Label::Class(c)) => log_sum_exp(score) - score[c],
            (Loss::AftNormal { aft_scale }, Label::Interval { lower, upper }) => {
                aft_normal(lower, upper, aft_scale, score[0]).0
            }
            _ => unreachable!("label validated against loss"),
        }
    }

    pub(crate) fn grad_hess_into(&self, label: Label, score: &[f64], d: &mut [f64], h: &mut [f64]) {
        match (*self, label) {
            (Loss::Squared, Label::Value(y)) => {
                d[0] = score[0] - y;
                h[0] = 1.0;
            }
            (Loss::Logistic, Label::Value(y)) => {
                let m = y * score[0];
                // d = -y * sigmoid(-m), h = sigmoid(m) * sigmoid(-m)
                let p_neg = sigmoid(-m);
                d[0] = -y * p_neg;
                h[0] = (sigmoid(m) * p_neg).max(MIN_HESSIAN);
            }
            (Loss::Hinge, Label::Value(y)) => {
                d[0] = if y * score[0] < 1.0 { -y } else { 0.0 };
                h[0] = 1.0;
            }
            (Loss::Poisson, Label::Value(y)) => {
                let f = score[0];
                d[0] = f.exp() - y;
                h[0] = f.min(MAX_EXP_SCORE).exp();
            }
            (Loss::Gamma, Label::Value(y)) => {
                let t = y * (-score[0]).exp();
                d[0] = 2.0 * (1.0 - t);
                h[0] = 2.0 * t;
            }
            (Loss::Tweedie { tweedie_power: p }, Label::Value(y)) => {
                let f = score[0];
                d[0] = -y * ((1.0 - p) * f).exp() + ((2.0 - p) * f).exp();
                let fc = f.min(MAX_EXP_SCORE);
                h[0] = -y * (1.0 - p) * ((1.0 - p) * fc).exp() + (2.0 - p) * ((2.0 - p) * fc).exp();
            }
            (Loss::Multinomial { .. }, Label::Class(c)) => {
                let lse = log_sum_exp(score);
                for (j, &f) in score.iter().enumerate() {
                    let p = (f - lse).exp();
                    d[j] = if j == c { p - 1.0 } else { p };
                    h[j] = (p * (1.0 - p)).max(MIN_HESSIAN);
                }
            }
            (Loss::AftNormal { aft_scale }, Label::Interval { lower, upper }) => {
                let (_, g, hh) = aft_normal(lower, upper, aft_scale, score[0]);
                d[0] = g;
                h[0] = hh.max(AFT_MIN_HESSIAN);
            }
            _ => unreachable!("label validated against loss"),
        }
    }

    pub(crate) fn saturated_unchecked(&self, label: Label) -> f64 {
        match (*self, label) {
            (Loss::Squared | Loss::Hinge | Loss::Gamma | Loss::Logistic, _) => 0.0,
            (Loss::Multinomial { .. }, _) => 0.0,
            (Loss::Poisson, Label::Value(y)) => {
                if y == 0.0 {
                    0.0
                } else {
                    y - y * y.ln()
                }
            }
            (Loss::Tweedie { .. }, Label::Value(y)) => {
                if y == 0.0 {
                    0.0
                } else {
                    self.raw_loss_unchecked(label, &[y.ln()])
                }
            }
            (Loss::AftNormal { aft_scale }, Label::Interval { lower, upper }) => {
                if upper.is_infinite() {
                    0.0
                } else {
                    // The normal density is symmetric, so the interval mass
                    // peaks at the midpoint of the log bounds.
                    let f = 0.5 * (lower.ln() + upper.ln());
                    aft_normal(lower, upper, aft_scale, f).0
                }
            }
            _ => unreachable!("label validated against loss"),
        }
    }

    /// Baseline score from weighted labels.
    pub(crate) fn base_score(&self, labels: &[Label], weights: &[f64]) -> Vec<f64> {
        let weighted_mean = || {
            let mut num = crate::sum::Accumulator::default();
            let mut den = crate::sum::Accumulator::default();
            for (&l, &w) in labels.iter().zip(weights) {
                if w > 0.0 {
                    num.add_product(w, l.value().unwrap_or(0.0));
                    den.add(w);
                }
            }
            num.value() / den.value()
        };
        match *self {
            Loss::Squared => vec![weighted_mean()],
            Loss::Logistic | Loss::Hinge => vec![0.0],
            Loss::Multinomial { num_class } => vec![0.0; num_class],
            Loss::Poisson | Loss::Gamma | Loss::Tweedie { .. } => {
                vec![weighted_mean().max(1e-8).ln()]
            }
            Loss::AftNormal { .. } => {
                let mut pts: Vec<(f64, f64)> = labels
                    .iter()
                    .zip(weights)
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(l, &w)| match *l {
                        Label::Interval { lower, .. } => (lower, w),
                        _ => unreachable!("label validated against loss"),
                    })
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let total: f64 = pts.iter().map(|p| p.1).sum();
                let mut acc = 0.0;
                let median = pts
                    .iter()
                    .find(|p| {
                        acc += p.1;
                        acc >= 0.5 * total
                    })
                    .map_or(1.0, |p| p.0);
                vec![median.ln()]
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of a score vector.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn ln_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `ln Q(z)` where `Q(z) = 1 - Phi(z)`, accurate far into the upper tail.
fn ln_normal_sf(z: f64) -> f64 {
    if z < 37.0 {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        ln_normal_pdf(z) - z.ln() + series.ln()
    }
}

/// `ln(e^a - e^b)` for `a > b`.
fn ln_diff_exp(a: f64, b: f64) -> f64 {
    a + (-(b - a).exp()).ln_1p()
}

/// Negative log-likelihood of a normal AFT model on `ln t` with location
/// `f` and scale `rho`, together with its first and second derivative in `f`.
fn aft_normal(lower: f64, upper: f64, rho: f64, f: f64) -> (f64, f64, f64) {
    let zl = (lower.ln() - f) / rho;
    if lower == upper {
        let loss = -ln_normal_pdf(zl) + (rho * lower).ln();
        return (loss, -zl / rho, 1.0 / (rho * rho));
    }
    let ln_mass = if upper.is_infinite() {
        ln_normal_sf(zl)
    } else {
        let zu = (upper.ln() - f) / rho;
        if zl >= 0.0 {
            ln_diff_exp(ln_normal_sf(zl), ln_normal_sf(zu))
        } else if zu <= 0.0 {
            ln_diff_exp(ln_normal_sf(-zu), ln_normal_sf(-zl))
        } else {
            let tails = (0.5 * erfc(zu / std::f64::consts::SQRT_2))
                + (0.5 * erfc(-zl / std::f64::consts::SQRT_2));
            (-tails).ln_1p()
        }
    };
    // a = phi(z) / mass for each bound, with phi(inf) = 0.
    let al = (ln_normal_pdf(zl) - ln_mass).exp();
    let (au, zu_au) = if upper.is_infinite() {
        (0.0, 0.0)
    } else {
        let zu = (upper.ln() - f) / rho;
        let au = (ln_normal_pdf(zu) - ln_mass).exp();
        (au, zu * au)
    };
    let grad = (au - al) / rho;
    let hess = (zu_au - zl * al + (au - al).powi(2)) / (rho * rho);
    (-ln_mass, grad, hess)
}
