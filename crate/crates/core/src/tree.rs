//! Regression trees grown by exact greedy split search on Newton statistics.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sum::Accumulator;

/// Split scans touching fewer cells than this stay on the calling thread.
const PARALLEL_SPLIT_WORK: usize = 16_384;

/// Penalties and limits that shape a single tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 6,
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_hessian: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

/// Binary regression tree stored as a flat node array; node 0 is the root.
/// A row goes left when `x[feature] < threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value, cover: 0.0 }],
        }
    }

    fn leaf_node(&self, row: impl Fn(usize) -> f64) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row(feature) < threshold { left } else { right },
            }
        }
    }

    /// Output for a single feature row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_node(|f| row[f])] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub(crate) fn predict_view(&self, features: &ArrayView2<f64>, r: usize) -> f64 {
        match self.nodes[self.leaf_node(|f| features[[r, f]])] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Indented text dump, one node per line.
    pub fn dump(&self, names: Option<&[String]>, out: &mut String) {
        fn go(t: &RegressionTree, i: usize, depth: usize, names: Option<&[String]>, out: &mut String) {
            let pad = "\t".repeat(depth);
            match t.nodes[i] {
                Node::Leaf { value, cover } => {
                    let _ = writeln!(out, "{pad}{i}:leaf={value},cover={cover}");
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    gain,
                    cover,
                } => {
                    let name = names
                        .and_then(|n| n.get(feature).cloned())
                        .unwrap_or_else(|| format!("f{feature}"));
                    let _ = writeln!(
                        out,
                        "{pad}{i}:[{name}<{threshold}] yes={left},no={right},gain={gain},cover={cover}"
                    );
                    go(t, left, depth + 1, names, out);
                    go(t, right, depth + 1, names, out);
                }
            }
        }
        go(self, 0, 0, names, out);
    }
}

/// `T_alpha(g)`: soft-thresholding of a gradient sum.
pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// Optimal leaf value `-T_alpha(G) / (H + lambda)`; 0 when `H + lambda = 0`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let den = h + lambda;
    if den > 0.0 {
        -soft_threshold(g, alpha) / den
    } else {
        0.0
    }
}

/// Structure score `T_alpha(G)^2 / (H + lambda)`.
pub fn split_score(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let den = h + lambda;
    if den > 0.0 {
        soft_threshold(g, alpha).powi(2) / den
    } else {
        0.0
    }
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, g: f64, h: f64, p: &TreeParams) -> f64 {
    0.5 * (split_score(gl, hl, p.lambda, p.alpha) + split_score(gr, hr, p.lambda, p.alpha)
        - split_score(g, h, p.lambda, p.alpha))
        - p.gamma
}

/// Best threshold on one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub threshold: f64,
    pub gain: f64,
    /// Indices (into the input slices) of rows with value below the threshold.
    pub left_rows: Vec<usize>,
}

/// Finds the best split of rows on a single feature.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Returns `None` when fewer than two rows are given or no candidate has
/// positive gain. Ties keep the smallest threshold.
pub fn best_split(values: &[f64], grad: &[f64], hess: &[f64], params: &TreeParams) -> Option<Split> {
    assert_eq!(values.len(), grad.len());
    assert_eq!(values.len(), hess.len());
    if values.len() < 2 {
        return None;
    }
    let stats = RowStats {
        grad,
        hess,
        weight: None,
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let (g, h) = stats.totals(&order);
    let best = scan_sorted(&order, |r| values[r], &stats, g, h, params)?;
    let mut left_rows = order[..best.left_count].to_vec();
    left_rows.sort_unstable();
    Some(Split {
        threshold: best.threshold,
        gain: best.gain,
        left_rows,
    })
}

/// Per-row Newton statistics with optional case weights. A row's
/// contribution is `w * grad` and `w * hess`, accumulated exactly.
#[derive(Clone, Copy)]
pub(crate) struct RowStats<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub weight: Option<&'a [f64]>,
}

impl RowStats<'_> {
    #[inline]
    fn add(&self, g: &mut Accumulator, h: &mut Accumulator, r: usize) {
        match self.weight {
            Some(w) => {
                g.add_product(w[r], self.grad[r]);
                h.add_product(w[r], self.hess[r]);
            }
            None => {
                g.add(self.grad[r]);
                h.add(self.hess[r]);
            }
        }
    }

    fn totals(&self, rows: &[usize]) -> (Accumulator, Accumulator) {
        let mut g = Accumulator::default();
        let mut h = Accumulator::default();
        for &r in rows {
            self.add(&mut g, &mut h, r);
        }
        (g, h)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    threshold: f64,
    gain: f64,
    left_count: usize,
}

fn scan_sorted(
    sorted: &[usize],
    value: impl Fn(usize) -> f64,
    stats: &RowStats,
    total_g: Accumulator,
    total_h: Accumulator,
    params: &TreeParams,
) -> Option<Candidate> {
    let g = total_g.value();
    let h = total_h.value();
    let mut gl = Accumulator::default();
    let mut hl = Accumulator::default();
    let mut best: Option<Candidate> = None;
    for k in 0..sorted.len().saturating_sub(1) {
        stats.add(&mut gl, &mut hl, sorted[k]);
        let lo = value(sorted[k]);
        let hi = value(sorted[k + 1]);
        if lo >= hi {
            continue;
        }
        let left_h = hl.value();
        let right_h = total_h.sub(&hl).value();
        if left_h < params.min_child_hessian || right_h < params.min_child_hessian {
            continue;
        }
        let gain = split_gain(gl.value(), left_h, total_g.sub(&gl).value(), right_h, g, h, params);
        if gain > best.map_or(0.0, |b| b.gain) {
            let mid = lo + 0.5 * (hi - lo);
            let threshold = if mid > lo { mid } else { hi };
            best = Some(Candidate {
                threshold,
                gain,
                left_count: k + 1,
            });
        }
    }
    best
}

/// Fits one tree to Newton statistics over the given rows.
pub fn fit_tree(
    grad: &[f64],
    hess: &[f64],
    features: ArrayView2<f64>,
    rows: &[usize],
    params: &TreeParams,
) -> RegressionTree {
    let stats = RowStats {
        grad,
        hess,
        weight: None,
    };
    fit_tree_with(stats, features, rows, params)
}

pub(crate) fn fit_tree_with(
    stats: RowStats,
    features: ArrayView2<f64>,
    rows: &[usize],
    params: &TreeParams,
) -> RegressionTree {
    let n_features = features.ncols();
    let sorted: Vec<Vec<usize>> = (0..n_features)
        .map(|f| {
            let mut order = rows.to_vec();
            order.sort_by(|&a, &b| {
                features[[a, f]]
                    .total_cmp(&features[[b, f]])
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();
    let mut builder = Builder {
        features,
        stats,
        params,
        nodes: Vec::new(),
        go_left: vec![false; features.nrows()],
    };
    if n_features == 0 {
        let (g, h) = stats.totals(rows);
        builder.push_leaf(g.value(), h.value());
    } else {
        builder.grow(sorted, 0);
    }
    RegressionTree {
        nodes: builder.nodes,
    }
}

struct Builder<'a> {
    features: ArrayView2<'a, f64>,
    stats: RowStats<'a>,
    params: &'a TreeParams,
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

impl Builder<'_> {
    fn push_leaf(&mut self, g: f64, h: f64) -> usize {
        self.nodes.push(Node::Leaf {
            value: leaf_weight(g, h, self.params.lambda, self.params.alpha),
            cover: h,
        });
        self.nodes.len() - 1
    }

    fn find_split(&self, sorted: &[Vec<usize>], g: Accumulator, h: Accumulator) -> Option<(usize, Candidate)> {
        let scan = |f: usize| {
            scan_sorted(&sorted[f], |r| self.features[[r, f]], &self.stats, g, h, self.params)
        };
        let work = sorted.len() * sorted[0].len();
        let per_feature: Vec<Option<Candidate>> = if work >= PARALLEL_SPLIT_WORK {
            (0..sorted.len()).into_par_iter().map(scan).collect()
        } else {
            (0..sorted.len()).map(scan).collect()
        };
        // Fixed feature order: lowest index wins ties.
        let mut best: Option<(usize, Candidate)> = None;
        for (f, c) in per_feature.into_iter().enumerate() {
            if let Some(c) = c {
                if best.is_none_or(|(_, b)| c.gain > b.gain) {
                    best = Some((f, c));
                }
            }
        }
        best
    }

    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let (g, h) = self.stats.totals(&sorted[0]);
        let split = if depth < self.params.max_depth && sorted[0].len() >= 2 {
            self.find_split(&sorted, g, h)
        } else {
            None
        };
        let Some((feature, cand)) = split else {
            return self.push_leaf(g.value(), h.value());
        };

        for &r in &sorted[0] {
            self.go_left[r] = self.features[[r, feature]] < cand.threshold;
        }
        let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .into_iter()
            .map(|rows| rows.into_iter().partition(|&r| self.go_left[r]))
            .unzip();

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            cover: 0.0,
        });
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[idx] = Node::Split {
            feature,
            threshold: cand.threshold,
            left: l,
            right: r,
            gain: cand.gain,
            cover: h.value(),
        };
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn unpenalized(max_depth: usize) -> TreeParams {
        TreeParams {
            max_depth,
            lambda: 0.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_hessian: 0.0,
        }
    }

    #[test]
    fn leaf_weight_examples() {
        assert_eq!(leaf_weight(-6.0, 3.0, 0.0, 0.0), 2.0);
        assert_eq!(leaf_weight(-6.0, 3.0, 1.0, 0.0), 1.5);
        assert_eq!(leaf_weight(-6.0, 3.0, 1.0, 1.0), 1.25);
        assert_eq!(leaf_weight(-6.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(leaf_weight(0.5, 2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn best_split_examples() {
        let x = [1.0, 2.0, 3.0];
        let g = [-1.0, -1.0, -4.0];
        let h = [1.0, 1.0, 1.0];
        let s = best_split(&x, &g, &h, &unpenalized(2)).unwrap();
        assert_eq!(s.threshold, 2.5);
        assert!((s.gain - 3.0).abs() < 1e-12);
        assert_eq!(s.left_rows, vec![0, 1]);

        let p = TreeParams {
            gamma: 3.5,
            ..unpenalized(2)
        };
        assert!(best_split(&x, &g, &h, &p).is_none());

        assert!(best_split(&[1.0, 1.0], &[-1.0, 5.0], &[1.0, 1.0], &unpenalized(2)).is_none());
        assert!(best_split(&[1.0], &[-1.0], &[1.0], &unpenalized(2)).is_none());
    }

    #[test]
    fn min_child_hessian_blocks_thin_children() {
        let p = TreeParams {
            min_child_hessian: 1.5,
            ..unpenalized(2)
        };
        let s = best_split(&[1.0, 2.0, 3.0], &[-1.0, -1.0, -4.0], &[1.0; 3], &p);
        assert!(s.is_none());
    }

    #[test]
    fn fit_tree_examples() {
        let x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let g = [-1.0, -1.0, -4.0];
        let h = [1.0; 3];
        let t = fit_tree(&g, &h, x.view(), &[0, 1, 2], &unpenalized(2));
        assert_eq!(t.predict_row(&[1.0]), 1.0);
        assert_eq!(t.predict_row(&[2.0]), 1.0);
        assert_eq!(t.predict_row(&[3.0]), 4.0);
        assert_eq!(t.depth(), 1);
        match t.nodes[0] {
            Node::Split {
                threshold, gain, ..
            } => {
                assert_eq!(threshold, 2.5);
                assert!((gain - 3.0).abs() < 1e-12);
            }
            _ => panic!("expected root split"),
        }

        let zero = fit_tree(&[0.0; 3], &h, x.view(), &[0, 1, 2], &unpenalized(3));
        assert_eq!(zero.nodes, vec![Node::Leaf { value: 0.0, cover: 3.0 }]);

        let flat = Array2::from_elem((3, 2), 7.0);
        let t = fit_tree(&g, &h, flat.view(), &[0, 1, 2], &unpenalized(3));
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict_row(&[7.0, 7.0]), 2.0);
    }

    #[test]
    fn depth_zero_is_single_leaf() {
        let x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let t = fit_tree(&[-1.0, -2.0, -3.0], &[1.0; 3], x.view(), &[0, 1, 2], &unpenalized(0));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[0.0]), 2.0);
    }

    #[test]
    fn tie_prefers_lowest_feature_then_smallest_threshold() {
        // Two identical columns: the split must land on feature 0.
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]).unwrap();
        let g = [-1.0, 1.0, -1.0, 1.0];
        let t = fit_tree(&g, &[1.0; 4], x.view(), &[0, 1, 2, 3], &unpenalized(1));
        if let Node::Split { feature, .. } = t.nodes[0] {
            assert_eq!(feature, 0);
        }
        // Symmetric gains at 1.5 and 3.5: smallest threshold wins.
        let s = best_split(&[1.0, 2.0, 3.0, 4.0], &[-1.0, 0.0, 0.0, -1.0], &[1.0; 4], &unpenalized(1))
            .unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn rows_subset_respected() {
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = [-1.0, -1.0, -4.0, 100.0];
        let t = fit_tree(&g, &[1.0; 4], x.view(), &[0, 1, 2], &unpenalized(2));
        assert_eq!(t.predict_row(&[4.0]), 4.0);
    }

    #[test]
    fn dump_format() {
        let x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let t = fit_tree(&[-1.0, -1.0, -4.0], &[1.0; 3], x.view(), &[0, 1, 2], &unpenalized(2));
        let mut s = String::new();
        t.dump(Some(&["x".to_string()]), &mut s);
        assert_eq!(s, "0:[x<2.5] yes=1,no=2,gain=3,cover=3\n\t1:leaf=1,cover=2\n\t2:leaf=4,cover=1\n");
    }
}
