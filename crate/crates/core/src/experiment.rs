//! Repeated split → normalise → fit → evaluate runs.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::data::{apply_normalizer, fit_normalizer, inject_drift, split, DriftSpec, SplitSpec, TimeSeriesDataset};
use crate::detector::{DetectionModel, PipelineConfig, Selection};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, mean_std, Metrics};

/// Seed offset separating drift noise from the split/training stream.
pub const DRIFT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub clean: Metrics,
    pub drifted: Option<Metrics>,
    pub selection: Selection,
    pub best_epoch: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

impl MetricSummary {
    pub fn of(metrics: &[Metrics]) -> Self {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&metrics.iter().map(f).collect::<Vec<_>>());
        MetricSummary {
            precision: pick(|m| m.precision),
            recall: pick(|m| m.recall),
            f1: pick(|m| m.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub p: f64,
    pub repeats: Vec<RepeatResult>,
    pub clean: MetricSummary,
    pub drifted: Option<MetricSummary>,
}

impl ExperimentReport {
    /// One JSON object per repeat followed by the aggregate.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.repeats {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        let aggregate = serde_json::json!({
            "dataset": self.dataset,
            "p": self.p,
            "aggregate": { "clean": self.clean, "drifted": self.drifted },
        });
        out.push_str(&aggregate.to_string());
        out.push('\n');
        Ok(out)
    }

    pub fn summary_table(&self) -> String {
        let row = |name: &str, s: &MetricSummary| {
            format!(
                "{name:<8} {:>7.4} ± {:<7.4} {:>7.4} ± {:<7.4} {:>7.4} ± {:<7.4}\n",
                s.precision.mean, s.precision.std, s.recall.mean, s.recall.std, s.f1.mean, s.f1.std
            )
        };
        let mut out = format!(
            "{} (P = {}, {} repeats)\n{:<8} {:^17} {:^17} {:^17}\n",
            self.dataset,
            self.p,
            self.repeats.len(),
            "",
            "precision",
            "recall",
            "F1"
        );
        out.push_str(&row("clean", &self.clean));
        if let Some(d) = &self.drifted {
            out.push_str(&row("drifted", d));
        }
        out
    }
}

/// Runs one repeat with `seed`.
pub fn run_repeat(
    dataset: &TimeSeriesDataset,
    p: f64,
    drift: Option<&DriftSpec>,
    config: &PipelineConfig,
    repeat: usize,
    seed: u64,
) -> Result<RepeatResult> {
    let mut splits = split(dataset, &SplitSpec::new(p, seed)?)?;
    let scaler = fit_normalizer(splits.train.windows())?;
    for ds in [&mut splits.train, &mut splits.v1, &mut splits.v2, &mut splits.test] {
        apply_normalizer(&scaler, ds)?;
    }
    let mut cfg = config.clone();
    cfg.train.seed = seed;
    let (model, report) = DetectionModel::fit_pipeline(&splits.train, &splits.v1, &splits.v2, &cfg)?;

    let evaluate = |test: &TimeSeriesDataset| -> Result<Metrics> {
        let predictions = test
            .windows()
            .iter()
            .map(|w| model.classify_window(w).map(|c| c.anomaly))
            .collect::<Result<Vec<_>>>()?;
        compute_metrics(&predictions, test.labels())
    };
    let clean = evaluate(&splits.test)?;
    let drifted = match drift {
        Some(spec) => {
            let (test, _) = inject_drift(&splits.test, spec, seed ^ DRIFT_SEED_SALT)?;
            Some(evaluate(&test)?)
        }
        None => None,
    };
    Ok(RepeatResult {
        repeat,
        seed,
        clean,
        drifted,
        selection: report.selection,
        best_epoch: report.train.best_epoch,
        train_size: splits.train.len(),
        validation_size: splits.v1.len() + splits.v2.len(),
        test_size: splits.test.len(),
    })
}

/// Repeats the protocol `repeats` times with seeds `seed, seed+1, …`,
/// re-splitting every time. Repeats run on separate threads and are
/// reported in seed order.
pub fn run_experiment(
    dataset: &TimeSeriesDataset,
    p: f64,
    drift: Option<&DriftSpec>,
    config: &PipelineConfig,
    repeats: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    if let Some(d) = drift {
        d.validate()?;
    }
    let results: Vec<Result<RepeatResult>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..repeats)
            .map(|r| {
                let s = seed.wrapping_add(r as u64);
                scope.spawn(move || run_repeat(dataset, p, drift, config, r, s))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("repeat thread panicked"))
            .collect()
    });
    let repeats = results.into_iter().collect::<Result<Vec<_>>>()?;
    let clean = MetricSummary::of(&repeats.iter().map(|r| r.clean).collect::<Vec<_>>());
    let drifted = if drift.is_some() {
        Some(MetricSummary::of(
            &repeats.iter().filter_map(|r| r.drifted).collect::<Vec<_>>(),
        ))
    } else {
        None
    };
    Ok(ExperimentReport {
        dataset: dataset.name.clone(),
        p,
        repeats,
        clean,
        drifted,
    })
}
