//! Dataset ingestion, normalisation, the train/validation/test split and
//! synthetic concept-drift injection.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::MinMaxScaler;
use crate::window::Window;

/// Windows with binary labels (`true` = anomaly). `ids` keep each window's
/// position in the originally loaded file across splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    len: usize,
    dim: usize,
    windows: Vec<Window>,
    labels: Vec<bool>,
    ids: Vec<usize>,
}

impl TimeSeriesDataset {
    pub fn new(name: impl Into<String>, windows: Vec<Window>, labels: Vec<bool>) -> Result<Self> {
        let ids = (0..windows.len()).collect();
        Self::with_ids(name, windows, labels, ids)
    }

    pub fn with_ids(
        name: impl Into<String>,
        windows: Vec<Window>,
        labels: Vec<bool>,
        ids: Vec<usize>,
    ) -> Result<Self> {
        if windows.len() != labels.len() || windows.len() != ids.len() {
            return Err(Error::Shape(format!(
                "{} windows, {} labels, {} ids",
                windows.len(),
                labels.len(),
                ids.len()
            )));
        }
        let (len, dim) = windows.first().map_or((0, 0), |w| (w.len(), w.dim()));
        if windows.iter().any(|w| w.len() != len || w.dim() != dim) {
            return Err(Error::Shape("windows do not share one shape".into()));
        }
        Ok(TimeSeriesDataset {
            name: name.into(),
            len,
            dim,
            windows,
            labels,
            ids,
        })
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn windows_mut(&mut self) -> &mut [Window] {
        &mut self.windows
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&a| a).count()
    }

    /// Fraction of anomalous windows.
    pub fn anomaly_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.anomaly_count() as f64 / self.len() as f64
        }
    }

    /// Sub-dataset of the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> TimeSeriesDataset {
        TimeSeriesDataset {
            name: self.name.clone(),
            len: self.len,
            dim: self.dim,
            windows: positions.iter().map(|&p| self.windows[p].clone()).collect(),
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
        }
    }

    /// Concatenation of two datasets with the same window shape.
    pub fn concat(&self, other: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        let mut windows = self.windows.clone();
        windows.extend_from_slice(&other.windows);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        TimeSeriesDataset::with_ids(self.name.clone(), windows, labels, ids)
    }
}

/// CSV layout: one window per row, `label, v_1, …, v_{L·n}` with values
/// timestep-major (all `n` dimensions of step 0, then step 1, …).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub window_len: usize,
    pub dim: usize,
    pub has_header: bool,
    pub normal_label: String,
    pub anomaly_label: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            window_len: 0,
            dim: 1,
            has_header: false,
            normal_label: "0".into(),
            anomaly_label: "1".into(),
        }
    }
}

impl CsvSchema {
    pub fn new(window_len: usize, dim: usize) -> Self {
        CsvSchema {
            window_len,
            dim,
            ..Default::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, schema, name)
}

pub fn read_csv(reader: impl std::io::Read, schema: &CsvSchema, name: String) -> Result<TimeSeriesDataset> {
    if schema.window_len == 0 || schema.dim == 0 {
        return Err(Error::InvalidConfig("csv schema needs window_len and dim".into()));
    }
    let expected = schema.window_len * schema.dim;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1 + usize::from(schema.has_header);
        let record = record?;
        if record.len() != expected + 1 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", expected + 1, record.len()),
            });
        }
        let label = &record[0];
        let is_anomaly = if label == schema.normal_label {
            false
        } else if label == schema.anomaly_label {
            true
        } else {
            return Err(Error::Parse {
                row,
                message: format!("unknown label {label:?}"),
            });
        };
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("column {}: not a number: {cell:?}", c + 2),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        windows.push(Window::new(schema.window_len, schema.dim, values)?);
        labels.push(is_anomaly);
    }
    TimeSeriesDataset::new(name, windows, labels)
}

/// Writes values with 17 significant digits, which round-trips every f64.
pub fn write_csv(path: impl AsRef<Path>, dataset: &TimeSeriesDataset, schema: &CsvSchema) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().from_writer(&mut buf);
        if schema.has_header {
            let mut header = vec!["label".to_string()];
            for t in 0..dataset.window_len() {
                for d in 0..dataset.dim() {
                    header.push(format!("t{t}_d{d}"));
                }
            }
            w.write_record(&header)?;
        }
        for (win, &label) in dataset.windows().iter().zip(dataset.labels()) {
            let mut row = Vec::with_capacity(win.values().len() + 1);
            row.push(if label {
                schema.anomaly_label.clone()
            } else {
                schema.normal_label.clone()
            });
            row.extend(win.values().iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::codec::write_atomic(path, &buf)
}

/// Fits per-dimension min-max statistics over every timestep of `windows`.
pub fn fit_normalizer(windows: &[Window]) -> Result<MinMaxScaler> {
    let dim = windows
        .first()
        .map(Window::dim)
        .ok_or(Error::Empty("cannot fit normalisation on no windows"))?;
    MinMaxScaler::fit(dim, windows.iter().flat_map(|w| w.rows()))
}

/// Maps every window into `[0, 1]^n` with `scaler`, clamping out-of-range values.
pub fn apply_normalizer(scaler: &MinMaxScaler, dataset: &mut TimeSeriesDataset) -> Result<()> {
    if scaler.dim() != dataset.dim() && !dataset.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: scaler.dim(),
            got: dataset.dim(),
        });
    }
    for w in dataset.windows_mut() {
        scaler.transform_in_place(w.values_mut());
    }
    Ok(())
}

/// Normalises a dataset with statistics fitted on itself.
pub fn normalize(dataset: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, MinMaxScaler)> {
    let scaler = fit_normalizer(dataset.windows())?;
    let mut out = dataset.clone();
    apply_normalizer(&scaler, &mut out)?;
    Ok((out, scaler))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Held-out proportion `P ∈ (0, 1)`.
    pub p: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidConfig(format!("split proportion {p} outside (0, 1)")));
        }
        Ok(SplitSpec { p, seed })
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    /// Normal windows for fitting.
    pub train: TimeSeriesDataset,
    /// Normal windows for early stopping and threshold selection.
    pub v1: TimeSeriesDataset,
    /// Anomalous windows for threshold selection.
    pub v2: TimeSeriesDataset,
    /// Held-out normals followed by held-out anomalies.
    pub test: TimeSeriesDataset,
}

impl Splits {
    /// `v1 ∪ v2`, used to choose the view and threshold.
    pub fn validation(&self) -> Result<TimeSeriesDataset> {
        self.v1.concat(&self.v2)
    }
}

/// `⌊fraction · count⌋`, tolerant of representation error in the fraction.
fn floor_share(fraction: f64, count: usize) -> usize {
    ((fraction * count as f64) + 1e-9).floor().min(count as f64) as usize
}

/// Splits by class: normals go `(1−P)` to train, then `(1−P)` of the rest to
/// `v1` and the remainder to test; anomalies go `(1−P)` to `v2` and the rest
/// to test. Each class is shuffled under the seed first.
pub fn split(dataset: &TimeSeriesDataset, spec: &SplitSpec) -> Result<Splits> {
    SplitSpec::new(spec.p, spec.seed)?;
    let mut normals: Vec<usize> = (0..dataset.len()).filter(|&i| !dataset.labels[i]).collect();
    let mut anomalies: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i]).collect();
    if normals.is_empty() || anomalies.is_empty() {
        return Err(Error::Empty("split needs both normal and anomalous windows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    normals.shuffle(&mut rng);
    anomalies.shuffle(&mut rng);

    let keep = 1.0 - spec.p;
    let n_train = floor_share(keep, normals.len());
    let n_v1 = floor_share(keep, normals.len() - n_train);
    let n_v2 = floor_share(keep, anomalies.len());

    let (train, rest) = normals.split_at(n_train);
    let (v1, test_normals) = rest.split_at(n_v1);
    let (v2, test_anomalies) = anomalies.split_at(n_v2);
    let test: Vec<usize> = test_normals.iter().chain(test_anomalies).copied().collect();
    Ok(Splits {
        train: dataset.subset(train),
        v1: dataset.subset(v1),
        v2: dataset.subset(v2),
        test: dataset.subset(&test),
    })
}

/// Additive Gaussian drift on a random subset of windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSpec {
    pub fraction: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec {
            fraction: 0.3,
            mean: 0.3,
            variance: 0.2,
        }
    }
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::InvalidConfig(format!("drift fraction {} outside [0, 1]", self.fraction)));
        }
        if !(self.variance > 0.0) || !self.mean.is_finite() {
            return Err(Error::InvalidConfig("drift variance must be positive".into()));
        }
        Ok(())
    }
}

/// Adds i.i.d. `N(mean, variance)` noise to every value of
/// `⌊fraction·N⌋` uniformly chosen windows. Values are not re-clamped.
/// Returns the drifted dataset and the sorted positions that changed.
pub fn inject_drift(
    dataset: &TimeSeriesDataset,
    spec: &DriftSpec,
    seed: u64,
) -> Result<(TimeSeriesDataset, Vec<usize>)> {
    spec.validate()?;
    let mut out = dataset.clone();
    let count = floor_share(spec.fraction, dataset.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, dataset.len(), count).into_vec();
    chosen.sort_unstable();
    let std_dev = spec.variance.max(1e-12).sqrt();
    let noise = Normal::new(spec.mean, std_dev).expect("finite positive std");
    for &p in &chosen {
        for v in out.windows[p].values_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok((out, chosen))
}
