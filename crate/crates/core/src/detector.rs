//! View/threshold selection, window classification and the rolling
//! early-warning monitor built on top of the encoder and the MRWPN.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Architecture, RecurrentAutoencoder, TrainConfig, TrainReport};
use crate::codec;
use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::metrics::f1_from_counts;
use crate::mrwpn::{MrwpnModel, ReceptiveFieldSet};
use crate::scaling::MinMaxScaler;
use crate::wavelet::{FrameGrid, SplineOrder};
use crate::window::Window;

pub const AUTOENCODER_FILE: &str = "autoencoder.bin";
pub const MRWPN_FILE: &str = "mrwpn.bin";
pub const EARLY_WARNING_FILE: &str = "earlywarn.bin";
pub const DETECTOR_FILE: &str = "detector.json";
const DETECTOR_VERSION: u32 = 1;

/// JSON has no infinities; non-finite floats are written as strings.
pub mod json_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else if v.is_nan() {
            Repr::Text("nan".into()).serialize(s)
        } else if *v > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Text("-inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

/// Chosen view index, threshold and the validation F1 they reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub view: usize,
    #[serde(with = "json_float")]
    pub threshold: f64,
    pub f1: f64,
}

/// F1 of the rule `density < threshold ⇒ anomaly`.
pub fn f1_at_threshold(densities: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&d, &l) in densities.iter().zip(labels) {
        match (d < threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    f1_from_counts(tp, fp, fn_).f1
}

/// Candidate thresholds of one view: `-∞`, midpoints between consecutive
/// distinct sorted densities, `+∞`.
pub fn candidate_thresholds(densities: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = densities.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(f64::NEG_INFINITY);
    for pair in sorted.windows(2) {
        out.push(midpoint(pair[0], pair[1]));
    }
    out.push(f64::INFINITY);
    out
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    // adjacent floats: the midpoint rounds onto `a`, and `b` still separates them
    if m > a && m <= b {
        m
    } else {
        b
    }
}

/// Searches every view and every candidate threshold for the highest F1
/// of `density < β ⇒ anomaly`. Ties go to the lowest view, then the
/// smallest threshold.
///
/// `densities` is `[N × views]`; `labels[i]` is `true` for anomalies.
pub fn select_view_and_threshold(densities: &[Vec<f64>], labels: &[bool]) -> Result<Selection> {
    if densities.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} density rows for {} labels",
            densities.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let views = densities[0].len();
    if views == 0 || densities.iter().any(|r| r.len() != views) {
        return Err(Error::Shape("density rows must share a positive view count".into()));
    }
    if densities.iter().flatten().any(|d| d.is_nan()) {
        return Err(Error::InvalidConfig("NaN density".into()));
    }

    let mut best = Selection {
        view: 0,
        threshold: f64::NEG_INFINITY,
        f1: -1.0,
    };
    for view in 0..views {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| densities[a][view].total_cmp(&densities[b][view]));

        // β = -∞ flags nothing
        let (mut tp, mut fp) = (0usize, 0usize);
        let consider = |beta: f64, tp: usize, fp: usize, best: &mut Selection| {
            let f1 = f1_from_counts(tp, fp, positives - tp).f1;
            if f1 > best.f1 {
                *best = Selection {
                    view,
                    threshold: beta,
                    f1,
                };
            }
        };
        consider(f64::NEG_INFINITY, tp, fp, &mut best);
        let mut i = 0;
        while i < order.len() {
            let value = densities[order[i]][view];
            while i < order.len() && densities[order[i]][view] == value {
                if labels[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            let beta = if i < order.len() {
                midpoint(value, densities[order[i]][view])
            } else {
                f64::INFINITY
            };
            consider(beta, tp, fp, &mut best);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyWarningConfig {
    /// Rolling-mean window `s`.
    pub window: usize,
    /// Alert threshold `δ`; `None` uses the value fitted on training data.
    pub alert_threshold: Option<f64>,
    /// Quantile of training deltas used as the fitted `δ`.
    pub quantile: f64,
    pub log_floor: f64,
    /// Leading timesteps left out of fitting and of the delta scan while the
    /// encoder state settles from zero. Fixed when the model is fitted.
    pub warmup: usize,
}

impl Default for EarlyWarningConfig {
    fn default() -> Self {
        EarlyWarningConfig {
            window: 5,
            alert_threshold: None,
            quantile: 0.99,
            log_floor: 1e-12,
            warmup: 10,
        }
    }
}

impl EarlyWarningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("early-warning window must be >= 1".into()));
        }
        if self.alert_threshold.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::InvalidConfig("alert threshold must be positive".into()));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) || !(self.log_floor > 0.0) {
            return Err(Error::InvalidConfig("quantile must be in (0, 1] and log_floor positive".into()));
        }
        Ok(())
    }
}

/// One point of the early-warning scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarningRecord {
    pub t: usize,
    pub delta: f64,
    pub alert: bool,
}

/// Rolling log-density deltas of a density series.
///
/// `smoothed_t` is the trailing mean of `ln(max(p_t, floor))` over `s`
/// steps and `delta_t = |smoothed_t − smoothed_{t−s}|`, reported for
/// `t ≥ 2s − 1`. An alert fires where `delta_t > threshold`.
pub fn rolling_delta_scan(densities: &[f64], window: usize, threshold: f64, log_floor: f64) -> Result<Vec<WarningRecord>> {
    if window == 0 {
        return Err(Error::InvalidConfig("rolling window must be >= 1".into()));
    }
    if densities.len() < 2 * window {
        return Err(Error::Shape(format!(
            "series of {} points is shorter than twice the rolling window ({})",
            densities.len(),
            2 * window
        )));
    }
    let logs: Vec<f64> = densities.iter().map(|&p| p.max(log_floor).ln()).collect();
    let mut smoothed = vec![f64::NAN; logs.len()];
    let mut sum: f64 = logs[..window - 1].iter().sum();
    for t in window - 1..logs.len() {
        sum += logs[t];
        if t >= window {
            sum -= logs[t - window];
        }
        if t % 256 == 0 {
            // re-summing keeps long series free of drift in the running sum
            sum = logs[t + 1 - window..=t].iter().sum();
        }
        smoothed[t] = sum / window as f64;
    }
    Ok((2 * window - 1..logs.len())
        .map(|t| {
            let delta = (smoothed[t] - smoothed[t - window]).abs();
            WarningRecord {
                t,
                delta,
                alert: delta > threshold,
            }
        })
        .collect())
}

/// Per-timestep density model on the encoder's hidden sequence.
#[derive(Debug, Clone)]
pub struct EarlyWarningModel {
    pub scaler: MinMaxScaler,
    pub mrwpn: MrwpnModel,
    pub view: usize,
    pub window: usize,
    pub threshold: f64,
    pub log_floor: f64,
    pub warmup: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EarlyWarningMeta {
    scaler: MinMaxScaler,
    view: usize,
    window: usize,
    #[serde(with = "json_float")]
    threshold: f64,
    log_floor: f64,
    warmup: usize,
}

/// Hyperparameters of the full pipeline; the input width comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    pub train: TrainConfig,
    pub j0: u32,
    pub order: SplineOrder,
    pub gammas: ReceptiveFieldSet,
    pub early_warning: EarlyWarningConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let arch = Architecture::desk(1);
        PipelineConfig {
            encoder: arch.encoder,
            decoder: arch.decoder,
            train: TrainConfig::default(),
            j0: 2,
            order: SplineOrder::Quadratic,
            gammas: ReceptiveFieldSet::default(),
            early_warning: EarlyWarningConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        self.architecture(input_dim).validate()?;
        self.train.validate()?;
        self.early_warning.validate()?;
        let latent = self.encoder.last().copied().unwrap_or(0);
        FrameGrid::new(self.j0, self.order, latent)?;
        Ok(())
    }
}

/// Score and decision for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub anomaly: bool,
    pub score: f64,
}

/// Output record of window-level detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub window_id: usize,
    pub score: f64,
    pub label: String,
    pub view_index: usize,
    #[serde(with = "json_float")]
    pub threshold: f64,
}

/// A fitted detector: frozen autoencoder, window-level MRWPN, and the
/// selected view and threshold.
#[derive(Debug, Clone)]
pub struct DetectionModel {
    pub autoencoder: RecurrentAutoencoder,
    pub mrwpn: MrwpnModel,
    pub view: usize,
    pub threshold: f64,
    /// Raw-input normalisation applied before encoding, when set.
    pub input_scaler: Option<MinMaxScaler>,
    pub early_warning: Option<EarlyWarningModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectorMeta {
    version: u32,
    view: usize,
    #[serde(with = "json_float")]
    threshold: f64,
    input_scaler: Option<MinMaxScaler>,
    early_warning: Option<EarlyWarningMeta>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub train: TrainReport,
    pub selection: Selection,
}

fn prepare(model: &DetectionModel, window: &Window) -> Result<Window> {
    match &model.input_scaler {
        Some(s) => {
            let mut w = window.clone();
            if s.dim() != w.dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.dim(),
                    got: w.dim(),
                });
            }
            s.transform_in_place(w.values_mut());
            Ok(w)
        }
        None => Ok(window.clone()),
    }
}

/// Per-view densities of the normalised latent of each window.
pub fn latent_densities(autoencoder: &RecurrentAutoencoder, mrwpn: &MrwpnModel, windows: &[Window]) -> Result<Vec<Vec<f64>>> {
    windows
        .iter()
        .map(|w| {
            let latent = autoencoder.encode(w)?.latent;
            let x = autoencoder.latent_normalize(&latent)?;
            Ok(mrwpn.estimate_density(&x)?.per_view)
        })
        .collect()
}

fn quantile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Some(values[rank - 1])
}

fn fit_early_warning(
    autoencoder: &RecurrentAutoencoder,
    train: &[Window],
    cfg: &PipelineConfig,
) -> Result<EarlyWarningModel> {
    let sequences = train
        .iter()
        .map(|w| autoencoder.encode(w).map(|e| e.sequence))
        .collect::<Result<Vec<_>>>()?;
    // short windows keep at least one full pair of rolling windows
    let shortest = sequences.iter().map(Vec::len).min().unwrap_or(0);
    let warmup = cfg
        .early_warning
        .warmup
        .min(shortest.saturating_sub(2 * cfg.early_warning.window));
    let settled = || sequences.iter().flat_map(|s| &s[warmup..]);
    let dim = autoencoder.latent_dim();
    let scaler = MinMaxScaler::fit(dim, settled().map(Vec::as_slice))?;
    let grid = FrameGrid::new(cfg.j0, cfg.order, dim)?;
    let mut mrwpn = MrwpnModel::new(grid, cfg.gammas.clone());
    for y in settled() {
        mrwpn.update_online(&scaler.transform(y)?)?;
    }
    // longest memory
    let view = mrwpn.num_views() - 1;
    let mut model = EarlyWarningModel {
        scaler,
        mrwpn,
        view,
        window: cfg.early_warning.window,
        threshold: f64::INFINITY,
        log_floor: cfg.early_warning.log_floor,
        warmup,
    };
    let threshold = match cfg.early_warning.alert_threshold {
        Some(d) => d,
        None => {
            let mut deltas = Vec::new();
            for seq in &sequences {
                let series = model.density_series(seq)?;
                if let Ok(recs) = model.scan(&series, model.window, f64::INFINITY, model.log_floor) {
                    deltas.extend(recs.iter().map(|r| r.delta));
                }
            }
            quantile(&mut deltas, cfg.early_warning.quantile).unwrap_or(f64::INFINITY)
        }
    };
    model.threshold = threshold;
    Ok(model)
}

impl EarlyWarningModel {
    /// Rolling-delta scan of a full-length density trace, skipping the
    /// warm-up steps; record times refer to the full trace.
    pub fn scan(&self, series: &[f64], window: usize, threshold: f64, log_floor: f64) -> Result<Vec<WarningRecord>> {
        let start = self.warmup.min(series.len());
        let mut records = rolling_delta_scan(&series[start..], window, threshold, log_floor)?;
        for r in &mut records {
            r.t += start;
        }
        Ok(records)
    }

    fn density_series(&self, sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
        sequence
            .iter()
            .map(|y| {
                let x = self.scaler.transform(y)?;
                Ok(self.mrwpn.estimate_density(&x)?.per_view[self.view])
            })
            .collect()
    }
}

impl DetectionModel {
    /// Fits the density stage on a frozen, trained autoencoder.
    pub fn fit_density(
        autoencoder: RecurrentAutoencoder,
        train: &TimeSeriesDataset,
        v1: &TimeSeriesDataset,
        v2: &TimeSeriesDataset,
        cfg: &PipelineConfig,
    ) -> Result<(DetectionModel, Selection)> {
        let grid = FrameGrid::new(cfg.j0, cfg.order, autoencoder.latent_dim())?;
        let mut mrwpn = MrwpnModel::new(grid, cfg.gammas.clone());
        for w in train.windows() {
            let latent = autoencoder.encode(w)?.latent;
            mrwpn.update_online(&autoencoder.latent_normalize(&latent)?)?;
        }

        let validation = v1.concat(v2)?;
        let densities = latent_densities(&autoencoder, &mrwpn, validation.windows())?;
        let selection = select_view_and_threshold(&densities, validation.labels())?;

        let early_warning = Some(fit_early_warning(&autoencoder, train.windows(), cfg)?);
        Ok((
            DetectionModel {
                autoencoder,
                mrwpn,
                view: selection.view,
                threshold: selection.threshold,
                input_scaler: None,
                early_warning,
            },
            selection,
        ))
    }

    /// Trains the autoencoder on `train` (early stopping on `v1`), streams the
    /// training latents through the MRWPN and picks the view and threshold on
    /// `v1 ∪ v2`. Inputs must already be normalised.
    pub fn fit_pipeline(
        train: &TimeSeriesDataset,
        v1: &TimeSeriesDataset,
        v2: &TimeSeriesDataset,
        cfg: &PipelineConfig,
    ) -> Result<(DetectionModel, PipelineReport)> {
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        cfg.validate(train.dim())?;
        let mut autoencoder = RecurrentAutoencoder::new(cfg.architecture(train.dim()), cfg.train.seed)?;
        let report = autoencoder.train(train.windows(), v1.windows(), &cfg.train)?;
        let (model, selection) = DetectionModel::fit_density(autoencoder, train, v1, v2, cfg)?;
        Ok((
            model,
            PipelineReport {
                train: report,
                selection,
            },
        ))
    }

    /// Density of `window` under the selected view.
    pub fn score(&self, window: &Window) -> Result<f64> {
        let w = prepare(self, window)?;
        let latent = self.autoencoder.encode(&w)?.latent;
        let x = self.autoencoder.latent_normalize(&latent)?;
        Ok(self.mrwpn.estimate_density(&x)?.per_view[self.view])
    }

    pub fn classify_window(&self, window: &Window) -> Result<Classification> {
        let score = self.score(window)?;
        Ok(Classification {
            anomaly: score < self.threshold,
            score,
        })
    }

    pub fn detect(&self, dataset: &TimeSeriesDataset) -> Result<Vec<DetectionRecord>> {
        dataset
            .windows()
            .iter()
            .zip(dataset.ids())
            .map(|(w, &id)| {
                let c = self.classify_window(w)?;
                Ok(DetectionRecord {
                    window_id: id,
                    score: c.score,
                    label: if c.anomaly { "anomaly" } else { "normal" }.into(),
                    view_index: self.view,
                    threshold: self.threshold,
                })
            })
            .collect()
    }

    fn early_warning_model(&self) -> Result<&EarlyWarningModel> {
        self.early_warning
            .as_ref()
            .ok_or(Error::NotFitted("early-warning density model"))
    }

    /// Per-timestep density of the encoder's hidden sequence.
    pub fn early_warning_trace(&self, window: &Window) -> Result<Vec<f64>> {
        let ew = self.early_warning_model()?;
        let w = prepare(self, window)?;
        ew.density_series(&self.autoencoder.encode(&w)?.sequence)
    }

    /// Rolling-delta alerts over one window's per-timestep densities.
    /// `cfg.alert_threshold = None` uses the fitted threshold.
    pub fn early_warning_scan(&self, window: &Window, cfg: &EarlyWarningConfig) -> Result<Vec<WarningRecord>> {
        cfg.validate()?;
        let ew = self.early_warning_model()?;
        let series = self.early_warning_trace(window)?;
        let threshold = cfg.alert_threshold.unwrap_or(ew.threshold);
        ew.scan(&series, cfg.window, threshold, cfg.log_floor)
    }

    /// Writes the model into `dir` (created if missing).
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.autoencoder.save(dir.join(AUTOENCODER_FILE))?;
        self.mrwpn.save(dir.join(MRWPN_FILE))?;
        let early_warning = self.early_warning.as_ref().map(|ew| EarlyWarningMeta {
            scaler: ew.scaler.clone(),
            view: ew.view,
            window: ew.window,
            threshold: ew.threshold,
            log_floor: ew.log_floor,
            warmup: ew.warmup,
        });
        if let Some(ew) = &self.early_warning {
            ew.mrwpn.save(dir.join(EARLY_WARNING_FILE))?;
        }
        let meta = DetectorMeta {
            version: DETECTOR_VERSION,
            view: self.view,
            threshold: self.threshold,
            input_scaler: self.input_scaler.clone(),
            early_warning,
        };
        let text = serde_json::to_string_pretty(&meta)?;
        codec::write_atomic(&dir.join(DETECTOR_FILE), text.as_bytes())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(DETECTOR_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DetectorMeta = serde_json::from_str(&text)?;
        if meta.version != DETECTOR_VERSION {
            return Err(Error::VersionMismatch {
                found: meta.version,
                expected: DETECTOR_VERSION,
            });
        }
        let autoencoder = RecurrentAutoencoder::load(dir.join(AUTOENCODER_FILE))?;
        let mrwpn = MrwpnModel::load(dir.join(MRWPN_FILE))?;
        if meta.view >= mrwpn.num_views() {
            return Err(Error::InvalidConfig(format!(
                "selected view {} but the model has {} views",
                meta.view,
                mrwpn.num_views()
            )));
        }
        let early_warning = match meta.early_warning {
            Some(m) => Some(EarlyWarningModel {
                scaler: m.scaler,
                mrwpn: MrwpnModel::load(dir.join(EARLY_WARNING_FILE))?,
                view: m.view,
                window: m.window,
                threshold: m.threshold,
                log_floor: m.log_floor,
                warmup: m.warmup,
            }),
            None => None,
        };
        Ok(DetectionModel {
            autoencoder,
            mrwpn,
            view: meta.view,
            threshold: meta.threshold,
            input_scaler: meta.input_scaler,
            early_warning,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_single_view() {
        let d = vec![vec![0.9], vec![0.8], vec![0.1], vec![0.2]];
        let labels = [false, false, true, true];
        let s = select_view_and_threshold(&d, &labels).unwrap();
        assert_eq!(s.view, 0);
        assert!((s.threshold - 0.5).abs() < 1e-15);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn all_equal_densities_flag_everything() {
        let labels = [true, false, false, true, false, false, false];
        let d = vec![vec![0.4]; labels.len()];
        let s = select_view_and_threshold(&d, &labels).unwrap();
        let (a, n) = (2.0, labels.len() as f64);
        assert!((s.f1 - 2.0 * a / (a + n)).abs() < 1e-15);
        assert_eq!(s.threshold, f64::INFINITY);
    }

    #[test]
    fn picks_the_separable_view() {
        let d = vec![vec![0.1, 0.9], vec![0.8, 0.8], vec![0.7, 0.1], vec![0.2, 0.2]];
        let labels = [false, false, true, true];
        let s = select_view_and_threshold(&d, &labels).unwrap();
        assert_eq!(s.view, 1);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let d = vec![vec![0.1], vec![0.2]];
        assert!(matches!(select_view_and_threshold(&d, &[false, false]), Err(Error::SingleClass)));
        assert!(matches!(select_view_and_threshold(&d, &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn tie_break_prefers_smallest_threshold() {
        // β = 0.15 and β = +∞ both reach F1 = 2/3
        let values = [0.1, 0.2, 0.3, 0.4];
        let labels = [true, false, false, true];
        let d: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let s = select_view_and_threshold(&d, &labels).unwrap();
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.threshold - 0.15).abs() < 1e-15);
        assert_eq!(f1_at_threshold(&values, &labels, f64::INFINITY), s.f1);
    }

    #[test]
    fn infinite_threshold_flags_everything() {
        assert_eq!(f1_at_threshold(&[1e300, 0.0], &[true, false], f64::INFINITY), 2.0 / 3.0);
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a < m && m <= b);
    }

    #[test]
    fn constant_series_has_no_alerts() {
        let recs = rolling_delta_scan(&[0.3; 40], 5, 1e-9, 1e-12).unwrap();
        assert_eq!(recs.len(), 40 - 9);
        assert!(recs.iter().all(|r| r.delta == 0.0 && !r.alert));
    }

    #[test]
    fn infinite_delta_never_alerts() {
        let series: Vec<f64> = (0..50).map(|t| if t < 25 { 1.0 } else { 1e-9 }).collect();
        let recs = rolling_delta_scan(&series, 5, f64::INFINITY, 1e-12).unwrap();
        assert!(recs.iter().all(|r| !r.alert));
    }

    #[test]
    fn short_series_rejected() {
        assert!(rolling_delta_scan(&[1.0; 9], 5, 0.1, 1e-12).is_err());
        assert!(rolling_delta_scan(&[1.0; 10], 5, 0.1, 1e-12).is_ok());
    }

    #[test]
    fn json_float_round_trip() {
        let s = Selection {
            view: 1,
            threshold: f64::INFINITY,
            f1: 0.5,
        };
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"inf\""));
        let back: Selection = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        for threshold in [0.9615384615384616, 0.1 + 0.2, f64::MIN_POSITIVE, 1.0 - f64::EPSILON] {
            let s = Selection { threshold, ..s };
            let back: Selection = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
            assert_eq!(back.threshold.to_bits(), threshold.to_bits());
        }
    }

    #[test]
    fn quantile_nearest_rank() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&mut v, 0.99), Some(99.0));
        assert_eq!(quantile(&mut [], 0.5), None);
    }
}
