//! Evaluation metrics. Inputs are raw model scores unless stated otherwise.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::loss::{Label, Loss, LossKind};

fn values(labels: &[Label]) -> Result<Vec<f64>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.value().ok_or_else(|| Error::InvalidLabel {
                index: i,
                reason: "expected a scalar label".into(),
            })
        })
        .collect()
}

fn check_len(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n != m {
        return Err(Error::InvalidConfig(format!("{m} predictions for {n} labels")));
    }
    Ok(())
}

pub fn mse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(y.len(), pred.len())?;
    Ok(y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(y.len(), pred.len())?;
    Ok(y.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Fraction of margins whose sign differs from the label in {-1, +1}.
/// A zero margin counts as an error.
pub fn sign_error(y: &[f64], margin: &[f64]) -> Result<f64> {
    check_len(y.len(), margin.len())?;
    let wrong = y.iter().zip(margin).filter(|&(&y, &f)| !(y * f > 0.0)).count();
    Ok(wrong as f64 / y.len() as f64)
}

/// Fraction of rows whose highest score is not the labelled class. Ties go
/// to the lowest class index.
pub fn argmax_error(classes: &[usize], scores: ArrayView2<f64>) -> Result<f64> {
    check_len(classes.len(), scores.nrows())?;
    let wrong = scores
        .outer_iter()
        .zip(classes)
        .filter(|(row, &c)| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best != c
        })
        .count();
    Ok(wrong as f64 / classes.len() as f64)
}

/// Mean of `2 (y ln(y / mu) - (y - mu))` over rows, with `mu` the predicted
/// mean.
pub fn poisson_deviance(y: &[f64], mu: &[f64]) -> Result<f64> {
    check_len(y.len(), mu.len())?;
    let mut total = 0.0;
    for (i, (&y, &m)) in y.iter().zip(mu).enumerate() {
        if !(m > 0.0) {
            return Err(Error::Domain(format!("predicted mean {m} at row {i} is not positive")));
        }
        let term = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
        total += 2.0 * (term - (y - m));
    }
    Ok(total / y.len() as f64)
}

/// Harrell's concordance index for interval labels and predicted log times.
///
/// A pair `(i, j)` is comparable when `i` has an observed event
/// (`lower == upper`) and `upper_i < lower_j`. It is concordant when the
/// prediction for `i` is smaller; tied predictions count one half.
pub fn concordance(labels: &[Label], pred: &[f64]) -> Result<f64> {
    check_len(labels.len(), pred.len())?;
    let mut bounds = Vec::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        match *l {
            Label::Interval { lower, upper } => bounds.push((lower, upper)),
            _ => {
                return Err(Error::InvalidLabel {
                    index: i,
                    reason: "concordance needs interval labels".into(),
                })
            }
        }
    }
    let mut comparable = 0u64;
    let mut score = 0u64; // in half units
    for (i, &(lo_i, hi_i)) in bounds.iter().enumerate() {
        if lo_i != hi_i {
            continue;
        }
        for (j, &(lo_j, _)) in bounds.iter().enumerate() {
            if i == j || !(hi_i < lo_j) {
                continue;
            }
            comparable += 1;
            score += if pred[i] < pred[j] {
                2
            } else if pred[i] == pred[j] {
                1
            } else {
                0
            };
        }
    }
    if comparable == 0 {
        return Err(Error::Domain("no comparable pairs".into()));
    }
    Ok(score as f64 / (2 * comparable) as f64)
}

/// A named metric value.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub value: f64,
}

/// Metrics appropriate to the loss, computed from raw scores (`n x k`).
pub fn evaluate(loss: &Loss, labels: &[Label], scores: ArrayView2<f64>) -> Result<Vec<Metric>> {
    check_len(labels.len(), scores.nrows())?;
    loss.check_labels(labels)?;
    let first: Vec<f64> = scores.column(0).to_vec();
    let metric = |name, value| Metric { name, value };
    Ok(match loss.kind() {
        LossKind::Squared => {
            let y = values(labels)?;
            vec![metric("mse", mse(&y, &first)?), metric("mae", mae(&y, &first)?)]
        }
        LossKind::Logistic | LossKind::Hinge => {
            vec![metric("error", sign_error(&values(labels)?, &first)?)]
        }
        LossKind::Poisson | LossKind::Gamma | LossKind::Tweedie => {
            let y = values(labels)?;
            let mu: Vec<f64> = first.iter().map(|f| f.exp()).collect();
            vec![
                metric("poisson_deviance", poisson_deviance(&y, &mu)?),
                metric("mae", mae(&y, &mu)?),
            ]
        }
        LossKind::Multinomial => {
            let classes: Vec<usize> = labels
                .iter()
                .map(|l| match *l {
                    Label::Class(c) => c,
                    _ => unreachable!("labels checked above"),
                })
                .collect();
            vec![metric("error", argmax_error(&classes, scores)?)]
        }
        LossKind::AftNormal => vec![metric("concordance", concordance(labels, &first)?)],
    })
}
