//! Multi-receptive-field wavelet probabilistic network.
//!
//! One coefficient vector per forgetting factor ("view"), all sharing the same
//! frame lattice. Each online update moves the relevant coefficients towards
//! the frame values at the new point and decays every other coefficient:
//!
//! ```text
//! ŵ[b, i] ← (1 − α_i)·ŵ[b, i] + α_i·Φ_b(x)   for relevant b
//! ŵ[f, i] ← (1 − α_i)·ŵ[f, i]                 otherwise
//! ```
//!
//! The decay of non-relevant frames is applied lazily: each view stores
//! `ŵ = scale · raw` so an update only touches the relevant entries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::wavelet::{FrameGrid, RelevantScratch, SplineOrder};

const MAGIC: &[u8; 8] = b"RWPNNMRW";
const VERSION: u32 = 1;

/// Scales below this are folded back into the raw coefficients.
const RESCALE_FLOOR: f64 = 1e-150;

/// Ordered set of forgetting factors, strictly descending, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ReceptiveFieldSet(Vec<f64>);

impl ReceptiveFieldSet {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidConfig("receptive field set is empty".into()));
        }
        if let Some(bad) = gammas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "forgetting factor {bad} outside (0, 1]"
            )));
        }
        if gammas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(
                "forgetting factors must be strictly descending".into(),
            ));
        }
        Ok(ReceptiveFieldSet(gammas))
    }

    /// Builds `1 / windows[i]` from effective window lengths.
    pub fn from_windows(windows: &[f64]) -> Result<Self> {
        Self::new(windows.iter().map(|w| 1.0 / w).collect())
    }

    pub fn single(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ReceptiveFieldSet {
    fn default() -> Self {
        ReceptiveFieldSet::from_windows(&[1.0, 10.0, 100.0, 500.0, 1000.0]).unwrap()
    }
}

impl TryFrom<Vec<f64>> for ReceptiveFieldSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ReceptiveFieldSet::new(v)
    }
}

impl From<ReceptiveFieldSet> for Vec<f64> {
    fn from(set: ReceptiveFieldSet) -> Vec<f64> {
        set.0
    }
}

/// Density of one point under every view.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub per_view: Vec<f64>,
    /// Number of relevant frames `M_c` visited.
    pub relevant_count: usize,
}

#[derive(Debug, Clone)]
struct View {
    alpha: f64,
    scale: f64,
    raw: Vec<f64>,
    /// For `alpha == 1`: frames written by the last update.
    last_written: Vec<usize>,
}

impl View {
    fn new(alpha: f64, frames: usize) -> Self {
        View {
            alpha,
            scale: 1.0,
            raw: vec![0.0; frames],
            last_written: Vec::new(),
        }
    }

    fn update(&mut self, indices: &[usize], values: &[f64]) {
        if self.alpha >= 1.0 {
            for &i in &self.last_written {
                self.raw[i] = 0.0;
            }
            self.scale = 1.0;
            self.last_written.clear();
            for (&b, &phi) in indices.iter().zip(values) {
                self.raw[b] = phi;
                self.last_written.push(b);
            }
            return;
        }
        let keep = 1.0 - self.alpha;
        let mut next = self.scale * keep;
        if next < RESCALE_FLOOR {
            self.materialize();
            next = keep;
        }
        self.scale = next;
        let step = self.alpha / next;
        for (&b, &phi) in indices.iter().zip(values) {
            self.raw[b] += step * phi;
        }
    }

    fn materialize(&mut self) {
        let s = self.scale;
        for r in &mut self.raw {
            *r *= s;
        }
        self.scale = 1.0;
    }

    fn coefficient(&self, frame: usize) -> f64 {
        self.scale * self.raw[frame]
    }
}

/// Frame coefficients `ŵ` of shape `[M × |Γ|]` plus the lattice they live on.
#[derive(Debug, Clone)]
pub struct MrwpnModel {
    grid: FrameGrid,
    fields: ReceptiveFieldSet,
    views: Vec<View>,
    points_seen: u64,
}

impl MrwpnModel {
    pub fn new(grid: FrameGrid, fields: ReceptiveFieldSet) -> Self {
        let views = fields
            .as_slice()
            .iter()
            .map(|&a| View::new(a, grid.len()))
            .collect();
        MrwpnModel {
            grid,
            fields,
            views,
            points_seen: 0,
        }
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn fields(&self) -> &ReceptiveFieldSet {
        &self.fields
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn points_seen(&self) -> u64 {
        self.points_seen
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Streams one point into every view.
    pub fn update_online(&mut self, x: &[f64]) -> Result<()> {
        let mut scratch = RelevantScratch::default();
        self.update_with(x, &mut scratch)
    }

    /// Streams many points in order.
    pub fn update_stream<'a, I>(&mut self, points: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut scratch = RelevantScratch::default();
        for x in points {
            self.update_with(x, &mut scratch)?;
        }
        Ok(())
    }

    fn update_with(&mut self, x: &[f64], scratch: &mut RelevantScratch) -> Result<()> {
        self.check_dim(x)?;
        self.grid.relevant_into(x, scratch);
        for view in &mut self.views {
            view.update(&scratch.indices, &scratch.values);
        }
        self.points_seen += 1;
        Ok(())
    }

    /// `p̂_i(x) = Σ_b ŵ[b, i]·Φ_b(x)` over the relevant frames of `x`.
    pub fn estimate_density(&self, x: &[f64]) -> Result<DensityEstimate> {
        self.check_dim(x)?;
        let mut scratch = RelevantScratch::default();
        self.grid.relevant_into(x, &mut scratch);
        let per_view = self
            .views
            .iter()
            .map(|v| {
                let acc: f64 = scratch
                    .indices
                    .iter()
                    .zip(&scratch.values)
                    .map(|(&b, &phi)| v.raw[b] * phi)
                    .sum();
                v.scale * acc
            })
            .collect();
        Ok(DensityEstimate {
            per_view,
            relevant_count: scratch.indices.len(),
        })
    }

    pub fn coefficient(&self, frame: usize, view: usize) -> f64 {
        self.views[view].coefficient(frame)
    }

    /// Coefficients of one view, indexed by frame.
    pub fn view_coefficients(&self, view: usize) -> Vec<f64> {
        let v = &self.views[view];
        (0..self.grid.len()).map(|f| v.coefficient(f)).collect()
    }

    /// Row-major `[M × |Γ|]` coefficient matrix.
    pub fn coefficient_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len() * self.views.len());
        for f in 0..self.grid.len() {
            for v in &self.views {
                out.push(v.coefficient(f));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(MAGIC, VERSION);
        enc.u32(self.grid.j0());
        enc.u32(self.grid.order().order());
        enc.u32(self.grid.dim() as u32);
        enc.u32(self.views.len() as u32);
        enc.u64(self.points_seen);
        enc.f64s(self.fields.as_slice());
        let scales: Vec<f64> = self.views.iter().map(|v| v.scale).collect();
        enc.f64s(&scales);
        let mut raw = Vec::with_capacity(self.grid.len() * self.views.len());
        for f in 0..self.grid.len() {
            raw.extend(self.views.iter().map(|v| v.raw[f]));
        }
        enc.f64s(&raw);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, MAGIC, VERSION, "MRWPN model")?;
        let j0 = dec.u32()?;
        let order = SplineOrder::from_order(dec.u32()?)?;
        let dim = dec.u32()? as usize;
        let n_views = dec.u32()? as usize;
        let points_seen = dec.u64()?;
        let gammas = dec.f64s(n_views)?;
        let scales = dec.f64s(n_views)?;
        let grid = FrameGrid::new(j0, order, dim)?;
        let matrix = dec.f64s(grid.len().saturating_mul(n_views))?;
        dec.finish()?;

        let fields = ReceptiveFieldSet::new(gammas)?;
        let mut model = MrwpnModel::new(grid, fields);
        if let Some(bad) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!("invalid coefficient scale {bad}")));
        }
        for (v, &s) in model.views.iter_mut().zip(&scales) {
            v.scale = s;
        }
        for (f, row) in matrix.chunks_exact(n_views).enumerate() {
            for (v, &w) in row.iter().enumerate() {
                model.views[v].raw[f] = w;
            }
        }
        for v in &mut model.views {
            if v.alpha >= 1.0 {
                v.last_written = (0..v.raw.len()).filter(|&f| v.raw[f] != 0.0).collect();
            }
        }
        model.points_seen = points_seen;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        codec::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path.as_ref())?)
    }
}

/// Stationary estimate `ŵ_k = (1/N)·Σ_i Φ_k(X_i)` over a batch.
pub fn update_batch(grid: &FrameGrid, data: &[Vec<f64>]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Empty("batch coefficient estimate needs data"));
    }
    let mut acc = vec![0.0; grid.len()];
    let mut scratch = RelevantScratch::default();
    for x in data {
        if x.len() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: x.len(),
            });
        }
        grid.relevant_into(x, &mut scratch);
        for (&b, &phi) in scratch.indices.iter().zip(&scratch.values) {
            acc[b] += phi;
        }
    }
    let inv = 1.0 / data.len() as f64;
    acc.iter_mut().for_each(|w| *w *= inv);
    Ok(acc)
}

/// Evaluates `Σ_k w_k·Φ_k(x)` for an explicit coefficient vector.
pub fn reconstruct_density(grid: &FrameGrid, coefficients: &[f64], x: &[f64]) -> Result<f64> {
    if coefficients.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} coefficients for a grid of {} frames",
            coefficients.len(),
            grid.len()
        )));
    }
    let relevant = grid.find_relevant_frames(x)?;
    let mut sum = 0.0;
    for b in relevant {
        sum += coefficients[b] * grid.radial_frame_eval(b, x)?;
    }
    Ok(sum)
}

/// Feeds `stream` to one multi-view model and to one single-view model per
/// forgetting factor, and reports whether every view's coefficients agree
/// bit for bit.
pub fn ensemble_equivalence_check(
    grid: &FrameGrid,
    fields: &ReceptiveFieldSet,
    stream: &[Vec<f64>],
) -> Result<bool> {
    let mut joint = MrwpnModel::new(grid.clone(), fields.clone());
    joint.update_stream(stream.iter().map(Vec::as_slice))?;
    for (i, &alpha) in fields.as_slice().iter().enumerate() {
        let mut single = MrwpnModel::new(grid.clone(), ReceptiveFieldSet::single(alpha)?);
        single.update_stream(stream.iter().map(Vec::as_slice))?;
        let a = joint.view_coefficients(i);
        let b = single.view_coefficients(0);
        if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}
