use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rwpnn::codec::write_atomic;
use rwpnn::data::{
    apply_normalizer, fit_normalizer, inject_drift, load_csv, split, write_csv, CsvSchema, DriftSpec, SplitSpec,
    TimeSeriesDataset,
};
use rwpnn::detector::{DetectionModel, EarlyWarningConfig};
use rwpnn::experiment::DRIFT_SEED_SALT;
use rwpnn::metrics::{compute_metrics, Metrics};
use rwpnn::synthetic::sine_burst_corpus;
use serde::Serialize;
use serde_json::json;

use crate::config::{load_synth, require_file, RunConfig};
use crate::ConfigError;

/// CSV layout the model was trained on, stored next to the model files.
pub const SCHEMA_FILE: &str = "schema.json";

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn evaluate(model: &DetectionModel, test: &TimeSeriesDataset) -> Result<Metrics> {
    let predictions = test
        .windows()
        .iter()
        .map(|w| model.classify_window(w).map(|c| c.anomaly))
        .collect::<rwpnn::Result<Vec<_>>>()?;
    Ok(compute_metrics(&predictions, test.labels())?)
}

pub fn synth(out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut spec = load_synth(config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let ds = sine_burst_corpus(&spec)?;
    write_csv(out, &ds, &CsvSchema::new(ds.window_len(), ds.dim()))?;
    println!(
        "wrote {} windows ({} anomalous, length {}) to {}",
        ds.len(),
        ds.anomaly_count(),
        ds.window_len(),
        out.display()
    );
    Ok(())
}

pub fn train(config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    let dataset = load_csv(&cfg.dataset, &cfg.csv)?;

    let mut splits = split(&dataset, &SplitSpec::new(cfg.split_p, cfg.seed)?)?;
    let scaler = fit_normalizer(splits.train.windows())?;
    for ds in [&mut splits.train, &mut splits.v1, &mut splits.v2, &mut splits.test] {
        apply_normalizer(&scaler, ds)?;
    }
    let mut pipeline = cfg.pipeline.clone();
    pipeline.train.seed = cfg.seed;
    let (mut model, report) = DetectionModel::fit_pipeline(&splits.train, &splits.v1, &splits.v2, &pipeline)?;

    let clean = evaluate(&model, &splits.test)?;
    let drifted = match &cfg.drift {
        Some(spec) => {
            let (test, _) = inject_drift(&splits.test, spec, cfg.seed ^ DRIFT_SEED_SALT)?;
            Some(evaluate(&model, &test)?)
        }
        None => None,
    };
    model.input_scaler = Some(scaler);

    create_dir(&out)?;
    model.save_dir(&out)?;
    write_json(&out.join(SCHEMA_FILE), &cfg.csv)?;
    write_text(&out.join("train_report.jsonl"), &report.train.to_jsonl())?;
    write_json(&out.join("selection.json"), &report.selection)?;
    write_json(
        &out.join("split.json"),
        &json!({
            "seed": cfg.seed,
            "p": cfg.split_p,
            "train": splits.train.ids(),
            "v1": splits.v1.ids(),
            "v2": splits.v2.ids(),
            "test": splits.test.ids(),
        }),
    )?;
    write_json(&out.join("metrics.json"), &json!({ "test": clean, "drifted": drifted }))?;

    println!(
        "trained {} epochs (best {}); view {} threshold {:e}; validation F1 {:.4}; test F1 {:.4}",
        report.train.epochs.len(),
        report.train.best_epoch,
        report.selection.view,
        report.selection.threshold,
        report.selection.f1,
        clean.f1
    );
    if let Some(d) = drifted {
        println!("drifted test F1 {:.4}", d.f1);
    }
    println!("model written to {}", out.display());
    Ok(())
}

struct Loaded {
    model: DetectionModel,
    data: TimeSeriesDataset,
}

fn load_model_and_data(model_dir: &Path, data: &Path) -> Result<Loaded> {
    require_file(model_dir)?;
    require_file(data)?;
    let model = DetectionModel::load_dir(model_dir)?;
    let schema_path = model_dir.join(SCHEMA_FILE);
    let text = fs::read_to_string(&schema_path).with_context(|| format!("reading {}", schema_path.display()))?;
    let schema: CsvSchema = serde_json::from_str(&text)
        .map_err(|e| ConfigError::Config(format!("{}: {e}", schema_path.display())))?;
    let data = load_csv(data, &schema)?;
    Ok(Loaded { model, data })
}

pub fn detect(model_dir: &Path, data: &Path, out: &Path, drift: bool, seed: u64) -> Result<()> {
    let Loaded { mut model, mut data } = load_model_and_data(model_dir, data)?;
    if drift {
        // Drift is defined on the normalised scale the model was fitted on.
        if let Some(scaler) = model.input_scaler.take() {
            apply_normalizer(&scaler, &mut data)?;
        }
        data = inject_drift(&data, &DriftSpec::default(), seed)?.0;
    }
    let records = model.detect(&data)?;
    let predictions: Vec<bool> = records.iter().map(|r| r.label == "anomaly").collect();
    let metrics = compute_metrics(&predictions, data.labels())?;

    create_dir(out)?;
    write_text(&out.join("detections.jsonl"), &jsonl(&records)?)?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "windows": data.len(),
            "flagged": predictions.iter().filter(|&&p| p).count(),
            "drift": if drift { Some(DriftSpec::default()) } else { None },
            "metrics": metrics,
        }),
    )?;
    println!(
        "{} windows, {} flagged; precision {:.4} recall {:.4} F1 {:.4}",
        data.len(),
        predictions.iter().filter(|&&p| p).count(),
        metrics.precision,
        metrics.recall,
        metrics.f1
    );
    Ok(())
}

#[derive(Serialize)]
struct AlertRecord {
    window_id: usize,
    t: usize,
    delta: f64,
    threshold: f64,
}

pub fn earlywarn(model_dir: &Path, data: &Path, out: &Path, window: usize, delta: Option<f64>) -> Result<()> {
    let cfg = EarlyWarningConfig {
        window,
        alert_threshold: delta,
        ..EarlyWarningConfig::default()
    };
    cfg.validate().map_err(|e| ConfigError::Config(e.to_string()))?;
    let Loaded { model, data } = load_model_and_data(model_dir, data)?;
    let fitted = model
        .early_warning
        .as_ref()
        .ok_or(rwpnn::Error::NotFitted("early-warning density model"))?;
    let threshold = delta.unwrap_or(fitted.threshold);

    let mut trace = String::from("window_id,t,density,delta,alert\n");
    let mut alerts = Vec::new();
    let mut windows_alerted = 0;
    for (w, &id) in data.windows().iter().zip(data.ids()) {
        let series = model.early_warning_trace(w)?;
        let scan = fitted.scan(&series, window, threshold, cfg.log_floor)?;
        let mut any = false;
        for (t, p) in series.iter().enumerate() {
            let rec = scan.iter().find(|r| r.t == t);
            match rec {
                Some(r) => writeln!(trace, "{id},{t},{p:e},{:e},{}", r.delta, u8::from(r.alert))?,
                None => writeln!(trace, "{id},{t},{p:e},,0")?,
            }
        }
        for r in scan.iter().filter(|r| r.alert) {
            any = true;
            alerts.push(AlertRecord {
                window_id: id,
                t: r.t,
                delta: r.delta,
                threshold,
            });
        }
        windows_alerted += usize::from(any);
    }

    create_dir(out)?;
    write_text(&out.join("trace.csv"), &trace)?;
    write_text(&out.join("alerts.jsonl"), &jsonl(&alerts)?)?;
    println!(
        "{} alerts in {} of {} windows (s = {window}, delta = {threshold:e})",
        alerts.len(),
        windows_alerted,
        data.len()
    );
    Ok(())
}

/// Equal-width bins over `values`; returns `(lower edges, width, counts per class)`.
fn histogram(values: &[f64], labels: &[bool], bins: usize) -> (f64, f64, Vec<[usize; 2]>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![[0usize; 2]; bins];
    for (&v, &anomaly) in values.iter().zip(labels) {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b][usize::from(anomaly)] += 1;
    }
    (lo, width, counts)
}

pub fn plot(model_dir: &Path, data: &Path, out: &Path, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(ConfigError::Config("bins must be >= 1".into()).into());
    }
    let Loaded { model, data } = load_model_and_data(model_dir, data)?;
    let records = model.detect(&data)?;
    let floor = f64::MIN_POSITIVE;
    let log_scores: Vec<f64> = records.iter().map(|r| r.score.max(floor).log10()).collect();

    let mut scores = String::from("window_id,label,score,log10_score,predicted\n");
    for ((r, &actual), ls) in records.iter().zip(data.labels()).zip(&log_scores) {
        writeln!(
            scores,
            "{},{},{:e},{ls},{}",
            r.window_id,
            if actual { "anomaly" } else { "normal" },
            r.score,
            r.label
        )?;
    }
    let (lo, width, counts) = histogram(&log_scores, data.labels(), bins);
    let mut hist = String::from("bin_start,bin_end,normal,anomaly\n");
    for (i, [normal, anomaly]) in counts.iter().enumerate() {
        let start = lo + i as f64 * width;
        writeln!(hist, "{start},{},{normal},{anomaly}", start + width)?;
    }

    let mean_of = |class: bool| {
        let v: Vec<f64> = records
            .iter()
            .zip(data.labels())
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r.score)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    create_dir(out)?;
    write_text(&out.join("scores.csv"), &scores)?;
    write_text(&out.join("histogram.csv"), &hist)?;
    write_json(
        &out.join("plot_summary.json"),
        &json!({
            "threshold_log10": model.threshold.max(floor).log10(),
            "mean_normal_density": mean_of(false),
            "mean_anomaly_density": mean_of(true),
        }),
    )?;
    println!("wrote scores.csv and histogram.csv ({bins} bins) to {}", out.display());
    Ok(())
}
