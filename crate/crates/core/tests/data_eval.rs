//! CSV loading, drift injection and experiment reporting.

use rwpnn::data::{inject_drift, load_csv, read_csv, write_csv, CsvSchema, DriftSpec, TimeSeriesDataset};
use rwpnn::detector::PipelineConfig;
use rwpnn::experiment::run_experiment;
use rwpnn::metrics::compute_metrics;
use rwpnn::synthetic::{sine_burst_corpus, SineBurstSpec};
use rwpnn::window::Window;
use rwpnn::Error;

#[test]
fn csv_round_trip_is_exact() {
    let spec = SineBurstSpec {
        normals: 7,
        anomalies: 3,
        window_len: 5,
        ..SineBurstSpec::default()
    };
    let ds = sine_burst_corpus(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.csv");
    for has_header in [false, true] {
        let schema = CsvSchema {
            has_header,
            ..CsvSchema::new(5, 1)
        };
        write_csv(&path, &ds, &schema).unwrap();
        let back = load_csv(&path, &schema).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.windows().iter().zip(ds.windows()) {
            assert_eq!(a.values(), b.values());
        }
    }
}

#[test]
fn multivariate_rows_are_timestep_major() {
    let text = "0,1,10,2,20,3,30\n1,4,40,5,50,6,60\n";
    let ds = read_csv(text.as_bytes(), &CsvSchema::new(3, 2), "mv".into()).unwrap();
    assert_eq!(ds.labels(), &[false, true]);
    let w = &ds.windows()[1];
    assert_eq!(w.rows().nth(2).unwrap(), &[6.0, 60.0]);
}

#[test]
fn malformed_rows_report_their_position() {
    let schema = CsvSchema::new(2, 1);
    let err = read_csv("0,1,2\n0,1\n".as_bytes(), &schema, "x".into()).unwrap_err();
    assert!(matches!(err, Error::Parse { row: 2, .. }));
    let err = read_csv("0,1,2\n2,1,2\n".as_bytes(), &schema, "x".into()).unwrap_err();
    assert!(matches!(err, Error::Parse { row: 2, .. }));
    let err = read_csv("0,1,abc\n".as_bytes(), &schema, "x".into()).unwrap_err();
    assert!(matches!(err, Error::Parse { row: 1, .. }));
}

#[test]
fn drift_count_on_a_wafer_sized_test_split() {
    let windows: Vec<Window> = (0..410).map(|i| Window::new(1, 1, vec![i as f64]).unwrap()).collect();
    let ds = TimeSeriesDataset::new("t", windows, vec![false; 410]).unwrap();
    let (_, changed) = inject_drift(&ds, &DriftSpec::default(), 1).unwrap();
    assert_eq!(changed.len(), 123);
}

#[test]
fn drift_noise_has_the_requested_moments() {
    let n = 4000;
    let windows: Vec<Window> = (0..n).map(|_| Window::new(10, 1, vec![0.0; 10]).unwrap()).collect();
    let ds = TimeSeriesDataset::new("z", windows, vec![false; n]).unwrap();
    let spec = DriftSpec {
        fraction: 1.0,
        ..DriftSpec::default()
    };
    let (drifted, _) = inject_drift(&ds, &spec, 5).unwrap();
    let all: Vec<f64> = drifted.windows().iter().flat_map(|w| w.values().to_vec()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
    assert!((mean - 0.3).abs() < 0.01, "mean {mean}");
    assert!((var - 0.2).abs() < 0.01, "variance {var}");
}

#[test]
fn metrics_on_a_known_confusion() {
    let predicted = [true, true, false, false, true];
    let actual = [true, false, true, false, true];
    let m = compute_metrics(&predicted, &actual).unwrap();
    assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn experiment_reports_every_repeat() {
    let spec = SineBurstSpec {
        normals: 40,
        anomalies: 10,
        window_len: 12,
        ..SineBurstSpec::default()
    };
    let ds = sine_burst_corpus(&spec).unwrap();
    let mut cfg = PipelineConfig {
        encoder: vec![4, 2],
        decoder: vec![2, 4],
        j0: 1,
        ..PipelineConfig::default()
    };
    cfg.train.max_epochs = 3;
    let report = run_experiment(&ds, 0.4, Some(&DriftSpec::default()), &cfg, 3, 11).unwrap();
    assert_eq!(report.repeats.len(), 3);
    assert_eq!(report.repeats.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![11, 12, 13]);
    assert!(report.drifted.is_some());
    let jsonl = report.to_jsonl().unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    for line in jsonl.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let again = run_experiment(&ds, 0.4, Some(&DriftSpec::default()), &cfg, 3, 11).unwrap();
    assert_eq!(report, again);
    assert!(matches!(
        run_experiment(&ds, 0.4, None, &cfg, 0, 0),
        Err(Error::InvalidConfig(_))
    ));
}
