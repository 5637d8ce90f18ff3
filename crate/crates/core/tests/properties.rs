use ccboost::irco::shifted_losses;
use ccboost::tree::best_split;
use ccboost::{
    fit_boosted, irboost, BoostConfig, Concave, ConcaveKind, ConcaveSpec, Dataset, IrcoConfig, Label, Loss,
    TreeParams,
};
use ndarray::Array2;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ConcaveKind> {
    prop::sample::select(ConcaveKind::ALL.to_vec())
}

fn spec(kind: ConcaveKind, sigma: f64) -> ConcaveSpec {
    let spec = ConcaveSpec::new(kind, sigma);
    if kind == ConcaveKind::Ecave {
        spec.with_delta(1.0)
    } else {
        spec
    }
}

fn dataset(n: usize, p: usize, xs: &[f64], ys: &[f64]) -> Dataset {
    let x = Array2::from_shape_vec((n, p), xs[..n * p].to_vec()).unwrap();
    let labels = ys[..n].iter().map(|&y| Label::Value(y)).collect();
    Dataset::new(x, labels, None).unwrap()
}

fn small_config(nrounds: usize) -> BoostConfig {
    BoostConfig {
        nrounds,
        max_depth: 3,
        ..BoostConfig::default()
    }
}

/// Best split by enumerating every midpoint threshold with plain sums.
fn oracle_gain(x: &[f64], g: &[f64], h: &[f64], lambda: f64) -> Option<f64> {
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let mut best: Option<f64> = None;
    for w in distinct.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let (mut gl, mut hl) = (0.0, 0.0);
        for i in 0..x.len() {
            if x[i] < t {
                gl += g[i];
                hl += h[i];
            }
        }
        let gain = 0.5 * (score(gl, hl) + score(gt - gl, ht - hl) - score(gt, ht));
        if gain > 0.0 && best.is_none_or(|b| gain > b) {
            best = Some(gain);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn weights_lie_in_unit_interval_and_decrease(
        kind in kind(),
        sigma in 0.05f64..20.0,
        mut zs in prop::collection::vec(0.0f64..200.0, 2..40),
    ) {
        let cc = Concave::new(spec(kind, sigma)).unwrap();
        zs.sort_by(f64::total_cmp);
        let ws: Vec<f64> = zs.iter().map(|&z| cc.weight(z).unwrap()).collect();
        for &w in &ws {
            prop_assert!((0.0..=1.0).contains(&w));
        }
        for pair in ws.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn concave_values_are_nondecreasing(
        kind in kind(),
        sigma in 0.05f64..20.0,
        a in 0.0f64..100.0,
        b in 0.0f64..100.0,
    ) {
        let cc = Concave::new(spec(kind, sigma)).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cc.value(lo).unwrap() <= cc.value(hi).unwrap() + 1e-12);
    }

    #[test]
    fn shifted_losses_are_nonnegative(
        n in 3usize..30,
        xs in prop::collection::vec(-5.0f64..5.0, 60),
        ys in prop::collection::vec(0.0f64..20.0, 30),
        rounds in 0usize..4,
    ) {
        let data = dataset(n, 2, &xs, &ys);
        for loss in [Loss::Squared, Loss::Poisson] {
            let model = fit_boosted(&data, &vec![1.0; n], &loss, &small_config(rounds.max(1)), None).unwrap();
            let c = loss.shift_constant(data.labels()).unwrap();
            for z in shifted_losses(&model, &data, c).unwrap() {
                prop_assert!(z >= 0.0);
            }
        }
    }

    #[test]
    fn split_gain_matches_enumeration(
        xs in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 2.0, 3.5, 7.0]), 2..25),
        gs in prop::collection::vec(-3.0f64..3.0, 25),
        hs in prop::collection::vec(0.1f64..2.0, 25),
        lambda in 0.0f64..2.0,
    ) {
        let n = xs.len();
        let params = TreeParams { lambda, ..TreeParams::default() };
        let got = best_split(&xs, &gs[..n], &hs[..n], &params).map(|s| s.gain);
        let want = oracle_gain(&xs, &gs[..n], &hs[..n], lambda);
        match (got, want) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0)),
            (None, None) => {}
            (a, b) => prop_assert!(a.or(b).unwrap() < 1e-9, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn training_is_deterministic(
        xs in prop::collection::vec(-5.0f64..5.0, 60),
        ys in prop::collection::vec(-5.0f64..5.0, 30),
        seed in any::<u64>(),
    ) {
        let data = dataset(30, 2, &xs, &ys);
        let boost = BoostConfig { subsample: 0.7, seed, ..small_config(5) };
        let spec = ConcaveSpec::new(ConcaveKind::Acave, 1.0);
        let irco = IrcoConfig { outer_iterations: 3, ..IrcoConfig::default() };
        let a = irboost(&data, &Loss::Squared, &spec, &boost, &irco).unwrap();
        let b = irboost(&data, &Loss::Squared, &spec, &boost, &irco).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn objective_trace_never_rises(
        xs in prop::collection::vec(-5.0f64..5.0, 80),
        ys in prop::collection::vec(-5.0f64..5.0, 40),
        kind in kind(),
    ) {
        let data = dataset(40, 2, &xs, &ys);
        let result = irboost(&data, &Loss::Squared, &spec(kind, 1.0), &small_config(10), &IrcoConfig::default()).unwrap();
        for pair in result.rho_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-6 * pair[0].abs());
        }
    }

    #[test]
    fn unpenalized_fit_ignores_weight_scale(
        xs in prop::collection::vec(-5.0f64..5.0, 60),
        ys in prop::collection::vec(-5.0f64..5.0, 30),
        ws in prop::collection::vec(0.1f64..2.0, 30),
        scale in 0.01f64..100.0,
    ) {
        let data = dataset(30, 2, &xs, &ys);
        let config = BoostConfig { reg_lambda: 0.0, ..small_config(5) };
        let scaled: Vec<f64> = ws.iter().map(|w| w * scale).collect();
        let a = fit_boosted(&data, &ws, &Loss::Squared, &config, None).unwrap();
        let b = fit_boosted(&data, &scaled, &Loss::Squared, &config, None).unwrap();
        let pa = a.predict(data.features(), None).unwrap();
        let pb = b.predict(data.features(), None).unwrap();
        for (u, v) in pa.iter().zip(pb.iter()) {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }
}
