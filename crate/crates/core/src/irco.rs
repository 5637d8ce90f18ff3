//! Iteratively reweighted boosting with a concave robustification.
//!
//! Each outer step computes shifted losses `z_i` under the current model,
//! turns them into observation weights through the concave component, and
//! fits the weighted booster. A step whose weighted surrogate does not improve
//! on the current model is rejected and the loop stops, so the objective
//! trace never increases beyond rounding.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::booster::{fit_boosted, BoostConfig, BoosterModel};
use crate::concave::{Concave, ConcaveSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::sum::Accumulator;

/// Relative objective increase above which an outer step is an error.
pub const MM_VIOLATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterMode {
    /// Every outer step boosts from scratch.
    #[default]
    Refit,
    /// Every outer step adds rounds to the previous model.
    Continue,
}

impl std::str::FromStr for OuterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refit" => Ok(OuterMode::Refit),
            "continue" => Ok(OuterMode::Continue),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode '{other}', expected refit or continue"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrcoConfig {
    pub outer_iterations: usize,
    pub tolerance: f64,
    pub mode: OuterMode,
}

impl Default for IrcoConfig {
    fn default() -> Self {
        IrcoConfig {
            outer_iterations: 10,
            tolerance: 1e-6,
            mode: OuterMode::Refit,
        }
    }
}

impl IrcoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 {
            return Err(Error::InvalidConfig("outer iterations must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Why the outer loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// All outer iterations ran.
    MaxIterations,
    /// The relative objective decrease fell below the tolerance.
    Converged,
    /// The weighted refit did not lower the weighted loss; the previous model
    /// was kept.
    SurrogateIncrease,
    /// Every observation received weight zero.
    ZeroWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrcoResult {
    pub model: BoosterModel,
    /// Weights of `model`'s shifted losses, one per observation.
    pub weight_update: Vec<f64>,
    /// Objective of the starting fit followed by one entry per completed
    /// outer step.
    pub rho_trace: Vec<f64>,
    /// Boosting rounds in the returned model.
    pub niter: usize,
    pub stop: StopReason,
    pub shift_c: f64,
    pub loss: Loss,
    pub concave: ConcaveSpec,
    pub boost: BoostConfig,
    pub irco: IrcoConfig,
}

impl IrcoResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: IrcoResult = serde_json::from_str(s)?;
        r.model.validate()?;
        Ok(r)
    }
}

/// `z_i = s(y_i, f_i) - shift_c`. Rounding can put a fitted loss a hair
/// below the saturated value; such entries are clamped to 0.
pub fn shifted_losses(model: &BoosterModel, data: &Dataset, shift_c: f64) -> Result<Vec<f64>> {
    model.loss.check_labels(data.labels())?;
    let scores = model.predict(data.features(), None)?;
    let loss = model.loss;
    let z: Vec<f64> = (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = scores.row(i);
            let s = loss.raw_loss_unchecked(data.labels()[i], row.as_slice().expect("standard layout"));
            (s - shift_c).max(0.0)
        })
        .collect();
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "loss",
            round: model.n_rounds,
            observation: i,
        });
    }
    Ok(z)
}

fn rho_of(cc: &Concave, z: &[f64]) -> f64 {
    let mut acc = Accumulator::default();
    for &v in z {
        acc.add(cc.value_unchecked(v));
    }
    acc.value()
}

/// `sum_i g(z_i)` for the model's scores on `data`.
pub fn objective_rho(model: &BoosterModel, data: &Dataset, cc: &Concave, shift_c: f64) -> Result<f64> {
    Ok(rho_of(cc, &shifted_losses(model, data, shift_c)?))
}

/// Per-observation weights `g'(z_i) / sup g'` for the model's scores.
pub fn weight_snapshot(model: &BoosterModel, data: &Dataset, cc: &Concave, shift_c: f64) -> Result<Vec<f64>> {
    let z = shifted_losses(model, data, shift_c)?;
    Ok(z.iter().map(|&v| cc.weight_unchecked(v)).collect())
}

fn surrogate(weights: &[f64], z: &[f64]) -> f64 {
    let mut acc = Accumulator::default();
    for (&w, &v) in weights.iter().zip(z) {
        if w > 0.0 {
            acc.add_product(w, v);
        }
    }
    acc.value()
}

/// Runs the reweighting loop. The starting model is a unit-weight fit with
/// `boost`; each outer step refits (or continues) with the weights of the
/// current model.
pub fn irboost(
    data: &Dataset,
    loss: &Loss,
    concave: &ConcaveSpec,
    boost: &BoostConfig,
    irco: &IrcoConfig,
) -> Result<IrcoResult> {
    loss.validate()?;
    boost.validate()?;
    irco.validate()?;
    let cc = concave.validate()?;
    let shift_c = loss.shift_constant(data.labels())?;
    let n = data.n_rows();

    let mut model = fit_boosted(data, &vec![1.0; n], loss, boost, None)?;
    let mut z = shifted_losses(&model, data, shift_c)?;
    let mut rho = rho_of(&cc, &z);
    let mut rho_trace = vec![rho];
    debug!("outer 0: rho = {rho}");
    let mut stop = StopReason::MaxIterations;

    for k in 1..=irco.outer_iterations {
        let weights: Vec<f64> = z.iter().map(|&v| cc.weight_unchecked(v)).collect();
        if weights.iter().all(|&w| w == 0.0) {
            warn!("all weights vanished at outer iteration {k}; stopping");
            stop = StopReason::ZeroWeights;
            break;
        }
        let init = match irco.mode {
            OuterMode::Refit => None,
            OuterMode::Continue => Some(&model),
        };
        let candidate = fit_boosted(data, &weights, loss, boost, init)?;
        let z_new = shifted_losses(&candidate, data, shift_c)?;

        let before = surrogate(&weights, &z);
        let after = surrogate(&weights, &z_new);
        if after > before {
            debug!("outer {k}: surrogate rose from {before} to {after}; keeping the previous model");
            stop = StopReason::SurrogateIncrease;
            break;
        }

        let rho_new = rho_of(&cc, &z_new);
        let increase = rho_new - rho;
        if increase > MM_VIOLATION_TOLERANCE * rho.abs() {
            return Err(Error::MmViolation { iteration: k, increase });
        }
        if increase > 0.0 {
            warn!("objective rose by {increase:e} at outer iteration {k}");
        }
        debug!("outer {k}: rho = {rho_new}");
        rho_trace.push(rho_new);
        model = candidate;
        z = z_new;
        let decrease = (rho - rho_new) / rho.max(1e-12);
        rho = rho_new;
        if decrease < irco.tolerance {
            stop = StopReason::Converged;
            break;
        }
    }

    let weight_update = z.iter().map(|&v| cc.weight_unchecked(v)).collect();
    Ok(IrcoResult {
        niter: model.n_rounds,
        stop,
        model,
        weight_update,
        rho_trace,
        shift_c,
        loss: *loss,
        concave: *concave,
        boost: boost.clone(),
        irco: *irco,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concave::ConcaveKind;
    use crate::data::gen_contaminated_regression;
    use crate::loss::Label;
    use ndarray::Array2;

    fn small_config(nrounds: usize) -> BoostConfig {
        BoostConfig {
            nrounds,
            max_depth: 2,
            ..BoostConfig::default()
        }
    }

    fn line_data(y: &[f64]) -> Dataset {
        let x = Array2::from_shape_fn((y.len(), 1), |(i, _)| i as f64);
        Dataset::new(x, y.iter().map(|&v| Label::Value(v)).collect(), None).unwrap()
    }

    #[test]
    fn huge_tcave_matches_unit_weight_fit() {
        let d = line_data(&[1.0, 3.0, -2.0, 7.0, 0.5, 4.0]);
        let boost = small_config(5);
        let cc = ConcaveSpec::new(ConcaveKind::Tcave, 1e12);
        let r = irboost(&d, &Loss::Squared, &cc, &boost, &IrcoConfig::default()).unwrap();
        let plain = fit_boosted(&d, &[1.0; 6], &Loss::Squared, &boost, None).unwrap();
        assert_eq!(r.model.to_json().unwrap(), plain.to_json().unwrap());
        assert!(r.weight_update.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn rho_of_known_losses() {
        let cc = ConcaveSpec::new(ConcaveKind::Ccave, 1.0).validate().unwrap();
        let rho = rho_of(&cc, &[0.0, 1.0, 2.0]);
        let oracle = (1.0 - (-1.0f64).exp()) + (1.0 - (-2.0f64).exp());
        assert!((rho - oracle).abs() < 1e-15);
        assert!((rho - 1.496785).abs() < 1e-6);
        let t0 = ConcaveSpec::new(ConcaveKind::Tcave, 0.0).validate().unwrap();
        assert_eq!(rho_of(&t0, &[0.0, 3.0, 9.0]), 0.0);
    }

    #[test]
    fn perfect_fit_has_zero_rho_and_unit_weights() {
        // A single leaf at the common label fits exactly.
        let d = line_data(&[2.0, 2.0, 2.0]);
        let model = fit_boosted(&d, &[1.0; 3], &Loss::Squared, &small_config(1), None).unwrap();
        let cc = ConcaveSpec::new(ConcaveKind::Bcave, 2.0).validate().unwrap();
        assert_eq!(objective_rho(&model, &d, &cc, 0.0).unwrap(), 0.0);
        assert_eq!(weight_snapshot(&model, &d, &cc, 0.0).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn bcave_snapshot_branches() {
        // A model with no trees and base score 0 gives z = y^2 / 2.
        let y = [0.0, 2f64.sqrt(), 6f64.sqrt()];
        let d = line_data(&y);
        let model = BoosterModel {
            loss: Loss::Squared,
            config: BoostConfig::default(),
            base_score: vec![0.0],
            n_features: 1,
            n_rounds: 0,
            feature_names: None,
            trees: vec![],
        };
        let cc = ConcaveSpec::new(ConcaveKind::Bcave, 2.0).validate().unwrap();
        let w = weight_snapshot(&model, &d, &cc, 0.0).unwrap();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.25).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn weight_update_matches_snapshot_and_trace_descends() {
        let g = gen_contaminated_regression(60, 3, 3, 30.0, 1.0, 2).unwrap();
        let cc = ConcaveSpec::new(ConcaveKind::Bcave, 10.0);
        let r = irboost(&g.data, &Loss::Squared, &cc, &small_config(20), &IrcoConfig::default()).unwrap();
        let snap = weight_snapshot(&r.model, &g.data, &cc.validate().unwrap(), r.shift_c).unwrap();
        assert_eq!(snap, r.weight_update);
        assert!(r.rho_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(r.weight_update.iter().all(|&w| (0.0..=1.0).contains(&w)));
        assert_eq!(r.niter, 20);
    }

    #[test]
    fn continue_mode_accumulates_rounds() {
        let g = gen_contaminated_regression(40, 2, 2, 20.0, 1.0, 8).unwrap();
        let irco = IrcoConfig {
            outer_iterations: 4,
            tolerance: 0.0,
            mode: OuterMode::Continue,
        };
        let cc = ConcaveSpec::new(ConcaveKind::Acave, 1.0);
        let r = irboost(&g.data, &Loss::Squared, &cc, &small_config(10), &irco).unwrap();
        assert_eq!(r.niter, 10 * r.rho_trace.len());
    }

    #[test]
    fn result_json_round_trip() {
        let d = line_data(&[1.0, 2.0, 8.0, 3.0]);
        let cc = ConcaveSpec::new(ConcaveKind::Hcave, 1.0);
        let r = irboost(&d, &Loss::Squared, &cc, &small_config(3), &IrcoConfig::default()).unwrap();
        let back = IrcoResult::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rejects_bad_config() {
        let d = line_data(&[1.0, 2.0]);
        let cc = ConcaveSpec::new(ConcaveKind::Hcave, 1.0);
        let bad = IrcoConfig {
            outer_iterations: 0,
            ..IrcoConfig::default()
        };
        assert!(irboost(&d, &Loss::Squared, &cc, &small_config(2), &bad).is_err());
        let bad_cc = ConcaveSpec::new(ConcaveKind::Hcave, -1.0);
        assert!(irboost(&d, &Loss::Squared, &bad_cc, &small_config(2), &IrcoConfig::default()).is_err());
    }
}
