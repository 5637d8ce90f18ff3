//! Newton boosting over regression trees with per-observation case weights.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::sum::Accumulator;
use crate::tree::{fit_tree_with, Node, RegressionTree, RowStats, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub nrounds: usize,
    /// Shrinkage applied to every tree, in `(0, 1]`.
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub reg_alpha: f64,
    /// Minimum split gain.
    pub gamma: f64,
    pub max_depth: usize,
    pub min_child_hessian: f64,
    pub subsample: f64,
    pub seed: u64,
    /// Overrides the loss-specific starting score when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_score: Option<f64>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            nrounds: 100,
            learning_rate: 0.3,
            reg_lambda: 1.0,
            reg_alpha: 0.0,
            gamma: 0.0,
            max_depth: 6,
            min_child_hessian: 0.0,
            subsample: 1.0,
            seed: 0,
            base_score: None,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.nrounds == 0 {
            return bad("nrounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning rate must lie in (0, 1], got {}", self.learning_rate));
        }
        for (name, v) in [
            ("lambda", self.reg_lambda),
            ("alpha", self.reg_alpha),
            ("gamma", self.gamma),
            ("min_child_hessian", self.min_child_hessian),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must lie in (0, 1], got {}", self.subsample));
        }
        if let Some(b) = self.base_score {
            if !b.is_finite() {
                return bad(format!("base score must be finite, got {b}"));
            }
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.reg_lambda,
            alpha: self.reg_alpha,
            gamma: self.gamma,
            min_child_hessian: self.min_child_hessian,
        }
    }
}

/// Additive tree ensemble. Round `m` owns trees
/// `m * n_outputs .. (m + 1) * n_outputs`, one per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoosterModel {
    pub loss: Loss,
    pub config: BoostConfig,
    pub base_score: Vec<f64>,
    pub n_features: usize,
    pub n_rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
    pub trees: Vec<RegressionTree>,
}

impl BoosterModel {
    pub fn n_outputs(&self) -> usize {
        self.loss.n_outputs()
    }

    pub fn round(&self, m: usize) -> &[RegressionTree] {
        let k = self.n_outputs();
        &self.trees[m * k..(m + 1) * k]
    }

    /// Checks internal consistency, e.g. after deserializing an untrusted
    /// document.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("malformed model: {msg}")));
        self.loss.validate()?;
        let k = self.n_outputs();
        if self.base_score.len() != k {
            return bad(format!("{} base scores for {k} outputs", self.base_score.len()));
        }
        if self.trees.len() != self.n_rounds * k {
            return bad(format!("{} trees for {} rounds", self.trees.len(), self.n_rounds));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return bad(format!("tree {t} has no nodes"));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Node::Split {
                    feature, left, right, ..
                } = *node
                {
                    let n = tree.nodes.len();
                    if feature >= self.n_features || left <= i || right <= i || left >= n || right >= n {
                        return bad(format!("tree {t} node {i} has invalid links"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: BoosterModel = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    /// Raw scores, one row per observation and one column per output:
    /// `base_score + learning_rate * sum of tree outputs` over rounds in
    /// `[begin, end)` (all rounds when `range` is `None`). The base score is
    /// always included.
    pub fn predict(&self, features: ArrayView2<f64>, range: Option<(usize, usize)>) -> Result<Array2<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                found: features.ncols(),
            });
        }
        let (begin, end) = range.unwrap_or((0, self.n_rounds));
        if begin > end || end > self.n_rounds {
            return Err(Error::InvalidConfig(format!(
                "iteration range {begin}:{end} outside 0:{}",
                self.n_rounds
            )));
        }
        let k = self.n_outputs();
        let n = features.nrows();
        let mut out = Array2::zeros((n, k));
        // Same accumulation order as training, so warm starts see
        // bit-identical scores.
        for r in 0..n {
            for j in 0..k {
                let mut s = self.base_score[j];
                for m in begin..end {
                    s += self.config.learning_rate * self.trees[m * k + j].predict_view(&features, r);
                }
                out[[r, j]] = s;
            }
        }
        Ok(out)
    }

    /// Total split gain per feature, sorted by decreasing gain (ties by
    /// feature index). Unused features appear with gain 0.
    pub fn feature_importance(&self) -> Vec<(usize, f64)> {
        let mut gain = vec![0.0; self.n_features];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain: g, .. } = *node {
                    gain[feature] += g;
                }
            }
        }
        let mut out: Vec<(usize, f64)> = gain.into_iter().enumerate().collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn feature_name(&self, f: usize) -> String {
        self.feature_names
            .as_ref()
            .and_then(|n| n.get(f).cloned())
            .unwrap_or_else(|| format!("f{f}"))
    }

    /// Human-readable dump of every tree.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let k = self.n_outputs();
        for (t, tree) in self.trees.iter().enumerate() {
            if k > 1 {
                out.push_str(&format!("booster[{}] class {}:\n", t / k, t % k));
            } else {
                out.push_str(&format!("booster[{t}]:\n"));
            }
            tree.dump(self.feature_names.as_deref(), &mut out);
        }
        out
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} case weights for {n} observations",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "case weight {} at observation {i} must be finite and >= 0",
            weights[i]
        )));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(())
}

/// Runs `config.nrounds` Newton boosting rounds on the weighted loss
/// `sum_i w_i s(y_i, f_i)`. With `init` the new rounds are appended to a
/// copy of that model and boosting continues from its scores.
///
/// Rows with zero weight take no part in tree growing but still receive
/// predictions.
pub fn fit_boosted(
    data: &Dataset,
    weights: &[f64],
    loss: &Loss,
    config: &BoostConfig,
    init: Option<&BoosterModel>,
) -> Result<BoosterModel> {
    loss.validate()?;
    config.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_weights(weights, n)?;
    loss.check_labels(data.labels())?;
    let k = loss.n_outputs();
    let features = data.features();

    let mut model = match init {
        Some(m) => {
            if m.loss != *loss {
                return Err(Error::InvalidConfig("initial model was fit with a different loss".into()));
            }
            if m.n_features != data.n_features() {
                return Err(Error::FeatureMismatch {
                    expected: m.n_features,
                    found: data.n_features(),
                });
            }
            if m.config.learning_rate != config.learning_rate {
                return Err(Error::InvalidConfig(
                    "initial model was fit with a different learning rate".into(),
                ));
            }
            m.validate()?;
            let mut m = m.clone();
            m.config = config.clone();
            m
        }
        None => BoosterModel {
            loss: *loss,
            config: config.clone(),
            base_score: match config.base_score {
                Some(b) => vec![b; k],
                None => loss.base_score(data.labels(), weights),
            },
            n_features: data.n_features(),
            n_rounds: 0,
            feature_names: data.feature_names().map(<[String]>::to_vec),
            trees: Vec::new(),
        },
    };

    // Scores, row-major n x k.
    let mut scores = model.predict(features, None)?.into_raw_vec_and_offset().0;
    let positive: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    let params = config.tree_params();
    let mut grad = vec![vec![0.0; n]; k];
    let mut hess = vec![vec![0.0; n]; k];
    let mut d = vec![0.0; k];
    let mut h = vec![0.0; k];

    for m in 0..config.nrounds {
        let global_round = model.n_rounds;
        for &i in &positive {
            let label = data.labels()[i];
            loss.grad_hess_into(label, &scores[i * k..(i + 1) * k], &mut d, &mut h);
            for j in 0..k {
                if !d[j].is_finite() || !h[j].is_finite() {
                    return Err(Error::NonFinite {
                        what: if d[j].is_finite() { "hessian" } else { "gradient" },
                        round: m,
                        observation: i,
                    });
                }
                grad[j][i] = d[j];
                hess[j][i] = h[j];
            }
        }

        let rows = sample_rows(&positive, config.subsample, config.seed, global_round);
        for j in 0..k {
            let stats = RowStats {
                grad: &grad[j],
                hess: &hess[j],
                weight: Some(weights),
            };
            let tree = fit_tree_with(stats, features, &rows, &params);
            for i in 0..n {
                scores[i * k + j] += config.learning_rate * tree.predict_view(&features, i);
            }
            model.trees.push(tree);
        }
        model.n_rounds += 1;
    }
    Ok(model)
}

fn sample_rows(positive: &[usize], fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    if fraction >= 1.0 {
        return positive.to_vec();
    }
    let count = ((fraction * positive.len() as f64).round() as usize).clamp(1, positive.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(round as u64));
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, positive.len(), count)
        .into_iter()
        .map(|i| positive[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// `sum_i w_i s(y_i, f_i)` for the model's scores on `data`.
pub fn weighted_loss(model: &BoosterModel, data: &Dataset, weights: &[f64]) -> Result<f64> {
    let scores = model.predict(data.features(), None)?;
    weighted_loss_at(&model.loss, data, &scores, weights)
}

pub(crate) fn weighted_loss_at(loss: &Loss, data: &Dataset, scores: &Array2<f64>, weights: &[f64]) -> Result<f64> {
    let mut acc = Accumulator::default();
    for (i, (&label, &w)) in data.labels().iter().zip(weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        let row = scores.row(i);
        let s = loss.raw_loss_unchecked(label, row.as_slice().expect("standard layout"));
        if !s.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                round: 0,
                observation: i,
            });
        }
        acc.add_product(w, s);
    }
    Ok(acc.value())
}
