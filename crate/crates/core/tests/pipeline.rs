//! End-to-end fitting, persistence and early warning on a small corpus.

use rwpnn::data::{normalize, split, SplitSpec};
use rwpnn::detector::{DetectionModel, EarlyWarningConfig, PipelineConfig};
use rwpnn::synthetic::{sine_burst_corpus, SineBurstSpec};
use rwpnn::window::Window;
use rwpnn::Error;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        encoder: vec![8, 2],
        decoder: vec![2, 8],
        j0: 1,
        ..PipelineConfig::default()
    };
    cfg.train.learning_rate = 5e-3;
    cfg.train.max_epochs = 15;
    cfg.train.early_stop_patience = 5;
    cfg
}

fn fitted() -> (DetectionModel, rwpnn::data::Splits) {
    let spec = SineBurstSpec {
        normals: 60,
        anomalies: 15,
        window_len: 24,
        ..SineBurstSpec::default()
    };
    let (ds, _) = normalize(&sine_burst_corpus(&spec).unwrap()).unwrap();
    let splits = split(&ds, &SplitSpec::new(0.4, 3).unwrap()).unwrap();
    let (model, report) = DetectionModel::fit_pipeline(&splits.train, &splits.v1, &splits.v2, &small_config()).unwrap();
    assert!(!report.train.epochs.is_empty());
    assert!(report.selection.f1 > 0.0 && report.selection.f1 <= 1.0);
    assert_eq!(model.view, report.selection.view);
    (model, splits)
}

#[test]
fn saved_model_predicts_identically() {
    let (model, splits) = fitted();
    let dir = tempfile::tempdir().unwrap();
    model.save_dir(dir.path()).unwrap();
    let loaded = DetectionModel::load_dir(dir.path()).unwrap();
    assert_eq!(model.detect(&splits.test).unwrap(), loaded.detect(&splits.test).unwrap());
    let w = &splits.test.windows()[0];
    assert_eq!(
        model.early_warning_trace(w).unwrap(),
        loaded.early_warning_trace(w).unwrap()
    );
}

#[test]
fn detection_records_follow_the_threshold() {
    let (model, splits) = fitted();
    let records = model.detect(&splits.test).unwrap();
    assert_eq!(records.len(), splits.test.len());
    for (r, &id) in records.iter().zip(splits.test.ids()) {
        assert_eq!(r.window_id, id);
        assert!(r.score >= 0.0);
        let expected = if r.score < model.threshold { "anomaly" } else { "normal" };
        assert_eq!(r.label, expected);
        assert_eq!(r.view_index, model.view);
    }
}

#[test]
fn early_warning_trace_covers_every_timestep() {
    let (model, splits) = fitted();
    let w = &splits.test.windows()[0];
    let trace = model.early_warning_trace(w).unwrap();
    assert_eq!(trace.len(), w.len());
    assert!(trace.iter().all(|p| *p >= 0.0 && p.is_finite()));
    let scan = model.early_warning_scan(w, &EarlyWarningConfig::default()).unwrap();
    let warmup = model.early_warning.as_ref().unwrap().warmup;
    assert!(warmup <= w.len() - 2 * 5);
    assert_eq!(scan.len(), w.len() - warmup - 2 * 5 + 1);
    assert_eq!(scan[0].t, warmup + 2 * 5 - 1);
}

#[test]
fn level_shift_raises_an_alert_after_the_shift() {
    let (model, _) = fitted();
    let t0 = 24;
    for (before, after) in [(0.5, 0.0), (0.5, 1.0), (0.0, 1.0)] {
        let values: Vec<f64> = (0..48).map(|t| if t < t0 { before } else { after }).collect();
        let w = Window::new(48, 1, values).unwrap();
        let scan = model.early_warning_scan(&w, &EarlyWarningConfig::default()).unwrap();
        let first = scan.iter().find(|r| r.alert).map(|r| r.t);
        println!("{before} -> {after}: first alert {first:?}");
        assert!(scan.iter().filter(|r| r.t < t0).all(|r| !r.alert));
        assert!(first.is_some_and(|t| t <= t0 + 2 * 5), "{before} -> {after}: {first:?}");
    }
}

#[test]
fn missing_model_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = DetectionModel::load_dir(dir.path().join("absent")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn single_class_validation_is_rejected() {
    let spec = SineBurstSpec {
        normals: 30,
        anomalies: 0,
        window_len: 16,
        ..SineBurstSpec::default()
    };
    let ds = sine_burst_corpus(&spec).unwrap();
    let train = ds.subset(&(0..20).collect::<Vec<_>>());
    let v1 = ds.subset(&(20..30).collect::<Vec<_>>());
    let v2 = ds.subset(&[]);
    let mut cfg = small_config();
    cfg.train.max_epochs = 2;
    let err = DetectionModel::fit_pipeline(&train, &v1, &v2, &cfg).unwrap_err();
    assert!(matches!(err, Error::SingleClass));
}
