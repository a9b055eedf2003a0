//! Randomised invariants of the density estimator, selection rule, split
//! protocol and early-warning scan.

use proptest::prelude::*;

use rwpnn::data::{fit_normalizer, apply_normalizer, inject_drift, split, DriftSpec, SplitSpec, TimeSeriesDataset};
use rwpnn::detector::{f1_at_threshold, candidate_thresholds, rolling_delta_scan, select_view_and_threshold};
use rwpnn::mrwpn::{MrwpnModel, ReceptiveFieldSet};
use rwpnn::wavelet::{bspline_eval, FrameGrid, SplineOrder};
use rwpnn::window::Window;

fn order_strategy() -> impl Strategy<Value = SplineOrder> {
    prop_oneof![Just(SplineOrder::Linear), Just(SplineOrder::Quadratic), Just(SplineOrder::Cubic)]
}

fn toy_dataset(values: &[f64], anomalies: usize) -> TimeSeriesDataset {
    let windows: Vec<Window> = values.iter().map(|&v| Window::new(2, 1, vec![v, -v]).unwrap()).collect();
    let n = windows.len();
    let labels = (0..n).map(|i| i >= n - anomalies).collect();
    TimeSeriesDataset::new("toy", windows, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn densities_are_nonnegative(
        order in order_strategy(),
        j0 in 1u32..4,
        points in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..60),
        query in (-0.2..1.2f64, -0.2..1.2f64),
    ) {
        let grid = FrameGrid::new(j0, order, 2).unwrap();
        let mut model = MrwpnModel::new(grid, ReceptiveFieldSet::default());
        for (a, b) in &points {
            model.update_online(&[*a, *b]).unwrap();
        }
        let est = model.estimate_density(&[query.0, query.1]).unwrap();
        prop_assert!(est.per_view.iter().all(|&p| p >= 0.0 && p.is_finite()));
    }

    #[test]
    fn partition_of_unity(order in order_strategy(), x in -100.0..100.0f64) {
        let base = x.floor() as i64;
        let sum: f64 = (base - 5..=base + 5).map(|k| bspline_eval(order, x - k as f64)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spline_is_symmetric_about_its_centre(order in order_strategy(), t in 0.0..2.0f64) {
        let m = order.order() as f64;
        let a = bspline_eval(order, m / 2.0 - t);
        let b = bspline_eval(order, m / 2.0 + t);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ema_weights_sum_to_one_minus_decay(alpha in 0.001..0.9f64, n in 1usize..80) {
        // 1-D, one frame fully inside: Σ_s α(1−α)^(n−s) = 1 − (1−α)^n
        let grid = FrameGrid::new(1, SplineOrder::Linear, 1).unwrap();
        let mut model = MrwpnModel::new(grid.clone(), ReceptiveFieldSet::single(alpha).unwrap());
        let frame = grid.index_of(&[1]).unwrap();
        for _ in 0..n {
            model.update_online(&[0.5]).unwrap();
        }
        let phi = grid.radial_frame_eval(frame, &[0.5]).unwrap();
        let expected = phi * (1.0 - (1.0 - alpha).powi(n as i32));
        prop_assert!((model.coefficient(frame, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn selection_is_never_beaten(
        rows in prop::collection::vec((prop::collection::vec(0u8..12, 3), any::<bool>()), 2..40),
    ) {
        let mut labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        labels[0] = true;
        labels[1] = false;
        let densities: Vec<Vec<f64>> = rows.iter().map(|r| r.0.iter().map(|&v| v as f64).collect()).collect();
        let chosen = select_view_and_threshold(&densities, &labels).unwrap();
        for v in 0..3 {
            let col: Vec<f64> = densities.iter().map(|r| r[v]).collect();
            for beta in candidate_thresholds(&col) {
                prop_assert!(f1_at_threshold(&col, &labels, beta) <= chosen.f1);
            }
        }
    }

    #[test]
    fn selection_is_scale_free(
        rows in prop::collection::vec((prop::collection::vec(1u8..50, 2), any::<bool>()), 2..40),
        factor in 0.01..100.0f64,
    ) {
        let mut labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        labels[0] = true;
        labels[1] = false;
        let densities: Vec<Vec<f64>> = rows.iter().map(|r| r.0.iter().map(|&v| v as f64).collect()).collect();
        let scaled: Vec<Vec<f64>> = densities.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect();
        let a = select_view_and_threshold(&densities, &labels).unwrap();
        let b = select_view_and_threshold(&scaled, &labels).unwrap();
        prop_assert_eq!(a.view, b.view);
        prop_assert_eq!(a.f1, b.f1);
        let predict = |d: &[Vec<f64>], view: usize, beta: f64| d.iter().map(|r| r[view] < beta).collect::<Vec<_>>();
        prop_assert_eq!(predict(&densities, a.view, a.threshold), predict(&scaled, b.view, b.threshold));
    }

    #[test]
    fn split_partitions_the_dataset(
        normals in 2usize..120,
        anomalies in 1usize..40,
        p in 0.05..0.95f64,
        seed in any::<u64>(),
    ) {
        let values: Vec<f64> = (0..normals + anomalies).map(|i| i as f64).collect();
        let ds = toy_dataset(&values, anomalies);
        let s = split(&ds, &SplitSpec::new(p, seed).unwrap()).unwrap();
        let mut ids: Vec<usize> = [&s.train, &s.v1, &s.v2, &s.test].iter().flat_map(|d| d.ids().to_vec()).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..ds.len()).collect::<Vec<_>>());
        prop_assert!(s.train.labels().iter().chain(s.v1.labels()).all(|&l| !l));
        prop_assert!(s.v2.labels().iter().all(|&l| l));
        prop_assert_eq!(s.train.len(), ((1.0 - p) * normals as f64 + 1e-9).floor() as usize);
        let again = split(&ds, &SplitSpec::new(p, seed).unwrap()).unwrap();
        prop_assert_eq!(again.test.ids(), s.test.ids());
    }

    #[test]
    fn normalisation_is_idempotent(values in prop::collection::vec(-1e3..1e3f64, 2..50)) {
        let ds = toy_dataset(&values, 0);
        let scaler = fit_normalizer(ds.windows()).unwrap();
        let mut once = ds.clone();
        apply_normalizer(&scaler, &mut once).unwrap();
        let again_scaler = fit_normalizer(once.windows()).unwrap();
        let mut twice = once.clone();
        apply_normalizer(&again_scaler, &mut twice).unwrap();
        for (a, b) in once.windows().iter().zip(twice.windows()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn drift_touches_exactly_the_reported_windows(
        n in 1usize..200,
        fraction in 0.0..=1.0f64,
        seed in any::<u64>(),
    ) {
        let values: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let ds = toy_dataset(&values, 0);
        let spec = DriftSpec { fraction, ..DriftSpec::default() };
        let (drifted, changed) = inject_drift(&ds, &spec, seed).unwrap();
        prop_assert_eq!(changed.len(), (fraction * n as f64 + 1e-9).floor() as usize);
        for (i, (a, b)) in ds.windows().iter().zip(drifted.windows()).enumerate() {
            let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert_eq!(same, changed.binary_search(&i).is_err());
        }
    }

    #[test]
    fn early_warning_is_shift_equivariant(
        series in prop::collection::vec(1e-6..10.0f64, 12..80),
        prefix in prop::collection::vec(1e-6..10.0f64, 0..20),
        window in 1usize..6,
        delta in 0.01..2.0f64,
    ) {
        prop_assume!(series.len() >= 2 * window);
        let base = rolling_delta_scan(&series, window, delta, 1e-12).unwrap();
        let shifted_series: Vec<f64> = prefix.iter().chain(&series).copied().collect();
        let shifted = rolling_delta_scan(&shifted_series, window, delta, 1e-12).unwrap();
        let k = prefix.len();
        for r in &base {
            let s = shifted.iter().find(|q| q.t == r.t + k).unwrap();
            prop_assert_eq!(s.alert, r.alert);
            prop_assert!((s.delta - r.delta).abs() < 1e-9);
        }
    }

    #[test]
    fn early_warning_ignores_density_scale(
        series in prop::collection::vec(1e-6..10.0f64, 10..60),
        factor in 1e-3..1e3f64,
    ) {
        let a = rolling_delta_scan(&series, 5, 0.5, 1e-300).unwrap();
        let scaled: Vec<f64> = series.iter().map(|p| p * factor).collect();
        let b = rolling_delta_scan(&scaled, 5, 0.5, 1e-300).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.delta - y.delta).abs() < 1e-9);
        }
    }
}

#[test]
fn benchmark_sized_split_counts() {
    for (normals, anomalies, train, validation, test) in [(6402, 762, 5121, 1633, 410), (295, 114, 236, 138, 35)] {
        let values: Vec<f64> = (0..normals + anomalies).map(|i| i as f64).collect();
        let ds = toy_dataset(&values, anomalies);
        let s = split(&ds, &SplitSpec::new(0.2, 7).unwrap()).unwrap();
        assert_eq!(s.train.len(), train);
        assert_eq!(s.v1.len() + s.v2.len(), validation);
        assert_eq!(s.test.len(), test);
    }
}

#[test]
fn split_of_one_hundred_and_twenty() {
    let values: Vec<f64> = (0..120).map(f64::from).collect();
    let ds = toy_dataset(&values, 20);
    let s = split(&ds, &SplitSpec::new(0.5, 0).unwrap()).unwrap();
    assert_eq!((s.train.len(), s.v1.len(), s.v2.len()), (50, 25, 10));
    assert_eq!(s.test.len(), 35);
    assert_eq!(s.test.anomaly_count(), 10);
}
