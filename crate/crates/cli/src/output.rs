//! CSV writers for command output.

use std::io::Write;

use ccboost::BoosterModel;
use ndarray::Array2;

pub fn write_weights(w: impl Write, weights: &[f64]) -> ccboost::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["index", "weight"])?;
    for (i, v) in weights.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rho(w: impl Write, trace: &[f64]) -> ccboost::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["iteration", "rho"])?;
    for (k, v) in trace.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions(
    w: impl Write,
    model: &BoosterModel,
    scores: &Array2<f64>,
    transform: bool,
) -> ccboost::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let k = scores.ncols();
    if k == 1 {
        w.write_record(["prediction"])?;
    } else {
        w.write_record((0..k).map(|j| format!("class{j}")))?;
    }
    for row in scores.outer_iter() {
        let row = row.to_vec();
        let values = if transform { model.loss.transform(&row) } else { row };
        w.write_record(values.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Features with positive total gain, largest first, with their share of
/// the total.
pub fn write_importance(w: impl Write, model: &BoosterModel) -> ccboost::Result<()> {
    let rows: Vec<(usize, f64)> = model
        .feature_importance()
        .into_iter()
        .filter(|&(_, g)| g > 0.0)
        .collect();
    let total: f64 = rows.iter().map(|r| r.1).sum();
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["feature", "gain", "share"])?;
    for (f, g) in rows {
        w.write_record([model.feature_name(f), g.to_string(), (g / total).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
