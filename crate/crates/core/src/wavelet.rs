//! Closed-form B-spline scaling functions and the radial frame lattice built on them.
//!
//! A frame function at resolution `j0` and integer translation `k` is
//!
//! ```text
//! Φ(x) = 2^(n·j0/2) · N_m(‖2^j0·x − k‖₂ + m/2)
//! ```
//!
//! where `N_m` is the cardinal B-spline of order `m` supported on `[0, m]`.
//! Translations run over `{−u, …, 2^j0 + u}` in every dimension, so the
//! lattice covers `[0, 1]^n` with `u` padding frames on each side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of frames a grid may hold.
pub const DEFAULT_FRAME_BUDGET: usize = 10_000_000;

/// Order of the B-spline used as scaling function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum SplineOrder {
    Linear,
    Quadratic,
    Cubic,
}

impl SplineOrder {
    pub const ALL: [SplineOrder; 3] = [SplineOrder::Linear, SplineOrder::Quadratic, SplineOrder::Cubic];

    pub fn from_order(m: u32) -> Result<Self> {
        match m {
            2 => Ok(SplineOrder::Linear),
            3 => Ok(SplineOrder::Quadratic),
            4 => Ok(SplineOrder::Cubic),
            other => Err(Error::InvalidOrder(other)),
        }
    }

    /// The spline order `m`; the support of `N_m` is `[0, m]`.
    pub fn order(self) -> u32 {
        match self {
            SplineOrder::Linear => 2,
            SplineOrder::Quadratic => 3,
            SplineOrder::Cubic => 4,
        }
    }

    /// Number of padding translations on each side of the unit interval.
    pub fn boundary_pad(self) -> i64 {
        match self {
            SplineOrder::Linear | SplineOrder::Quadratic => 1,
            SplineOrder::Cubic => 2,
        }
    }

    fn half_support(self) -> f64 {
        self.order() as f64 / 2.0
    }
}

impl TryFrom<u32> for SplineOrder {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        SplineOrder::from_order(m)
    }
}

impl From<SplineOrder> for u32 {
    fn from(order: SplineOrder) -> u32 {
        order.order()
    }
}

/// Evaluates the cardinal B-spline `N_m(x)` in closed form.
pub fn bspline_eval(order: SplineOrder, x: f64) -> f64 {
    match order {
        SplineOrder::Linear => {
            if (0.0..1.0).contains(&x) {
                x
            } else if (1.0..2.0).contains(&x) {
                2.0 - x
            } else {
                0.0
            }
        }
        SplineOrder::Quadratic => {
            if (0.0..1.0).contains(&x) {
                0.5 * x * x
            } else if (1.0..2.0).contains(&x) {
                let d = x - 1.5;
                0.75 - d * d
            } else if (2.0..3.0).contains(&x) {
                let d = x - 3.0;
                0.5 * d * d
            } else {
                0.0
            }
        }
        SplineOrder::Cubic => {
            let value = if (0.0..1.0).contains(&x) {
                x * x * x
            } else if (1.0..2.0).contains(&x) {
                ((-3.0 * x + 12.0) * x - 12.0) * x + 4.0
            } else if (2.0..3.0).contains(&x) {
                ((3.0 * x - 24.0) * x + 60.0) * x - 44.0
            } else if (3.0..4.0).contains(&x) {
                let d = 4.0 - x;
                d * d * d
            } else {
                0.0
            };
            // the middle pieces can round to -0.0 or tiny negatives at the knots
            (value / 6.0).max(0.0)
        }
    }
}

/// The frame lattice: resolution, spline order, dimension and the ordered
/// set of translation vectors.
///
/// Frame indices enumerate translations row-major over dimensions with `k`
/// ascending, i.e. the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    j0: u32,
    order: SplineOrder,
    dim: usize,
    per_dim: usize,
    total: usize,
}

impl FrameGrid {
    pub fn new(j0: u32, order: SplineOrder, dim: usize) -> Result<Self> {
        Self::with_budget(j0, order, dim, DEFAULT_FRAME_BUDGET)
    }

    pub fn with_budget(j0: u32, order: SplineOrder, dim: usize, budget: usize) -> Result<Self> {
        if j0 < 1 {
            return Err(Error::InvalidConfig("resolution j0 must be >= 1".into()));
        }
        if j0 > 30 {
            return Err(Error::InvalidConfig(format!("resolution j0 = {j0} is too large")));
        }
        if dim < 1 {
            return Err(Error::InvalidConfig("dimension must be >= 1".into()));
        }
        let per_dim = (1usize << j0) + 2 * order.boundary_pad() as usize + 1;
        let frames = (per_dim as u128)
            .checked_pow(dim.min(u32::MAX as usize) as u32)
            .unwrap_or(u128::MAX);
        if frames > budget as u128 {
            return Err(Error::FrameBudget {
                per_dim,
                dim,
                frames,
                budget,
            });
        }
        Ok(FrameGrid {
            j0,
            order,
            dim,
            per_dim,
            total: frames as usize,
        })
    }

    pub fn j0(&self) -> u32 {
        self.j0
    }

    pub fn order(&self) -> SplineOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Translations per dimension, `2^j0 + 2u + 1`.
    pub fn per_dim_count(&self) -> usize {
        self.per_dim
    }

    /// Total number of frames `M`.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Smallest translation value, `-u`.
    pub fn k_min(&self) -> i64 {
        -self.order.boundary_pad()
    }

    /// Largest translation value, `2^j0 + u`.
    pub fn k_max(&self) -> i64 {
        (1i64 << self.j0) + self.order.boundary_pad()
    }

    fn scale(&self) -> f64 {
        (1u64 << self.j0) as f64
    }

    /// `2^(n·j0/2)`
    pub fn amplitude(&self) -> f64 {
        2f64.powf(self.dim as f64 * self.j0 as f64 / 2.0)
    }

    /// Translation vector of frame `index`.
    pub fn translation(&self, index: usize) -> Result<Vec<i64>> {
        if index >= self.total {
            return Err(Error::FrameIndexOutOfRange {
                index,
                total: self.total,
            });
        }
        let mut k = vec![0i64; self.dim];
        let mut rest = index;
        for slot in k.iter_mut().rev() {
            *slot = (rest % self.per_dim) as i64 + self.k_min();
            rest /= self.per_dim;
        }
        Ok(k)
    }

    /// Flat index of a translation vector, if it lies on the lattice.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let mut index = 0usize;
        for &kd in k {
            if kd < self.k_min() || kd > self.k_max() {
                return None;
            }
            index = index * self.per_dim + (kd - self.k_min()) as usize;
        }
        Some(index)
    }

    /// All translation vectors in index order.
    pub fn translations(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.total).map(move |i| self.translation(i).expect("index in range"))
    }

    /// Support of a translation in one dimension, `[2^-j0 (k - m/2), 2^-j0 (k + m/2)]`.
    pub fn support(&self, k: i64) -> (f64, f64) {
        let h = self.order.half_support();
        let inv = 1.0 / self.scale();
        ((k as f64 - h) * inv, (k as f64 + h) * inv)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluates frame `index` at `x`.
    pub fn radial_frame_eval(&self, index: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let k = self.translation(index)?;
        Ok(self.frame_value(&k, x))
    }

    /// Frame value for an explicit translation vector (no lattice check).
    pub(crate) fn frame_value(&self, k: &[i64], x: &[f64]) -> f64 {
        let scale = self.scale();
        let r2: f64 = k
            .iter()
            .zip(x)
            .map(|(&kd, &xd)| {
                let d = scale * xd - kd as f64;
                d * d
            })
            .sum();
        self.amplitude() * bspline_eval(self.order, r2.sqrt() + self.order.half_support())
    }

    /// Translations in one dimension whose support contains `xd`, ascending.
    fn relevant_1d(&self, xd: f64, out: &mut Vec<i64>) {
        out.clear();
        if !xd.is_finite() {
            return;
        }
        let s = self.scale() * xd;
        let h = self.order.half_support();
        let lo = ((s - h).ceil() as i64 - 1).max(self.k_min());
        let hi = ((s + h).floor() as i64 + 1).min(self.k_max());
        for k in lo..=hi {
            let (a, b) = self.support(k);
            if xd >= a && xd <= b {
                out.push(k);
            }
        }
    }

    /// Indices of every frame whose support contains `x` in all dimensions,
    /// ascending. Points outside the lattice yield an empty set.
    pub fn find_relevant_frames(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        let mut scratch = RelevantScratch::default();
        self.relevant_into(x, &mut scratch);
        Ok(scratch.indices)
    }

    /// Fills `scratch` with relevant indices and the matching frame values.
    pub(crate) fn relevant_into(&self, x: &[f64], scratch: &mut RelevantScratch) {
        scratch.indices.clear();
        scratch.values.clear();
        scratch.per_dim.resize_with(self.dim, Vec::new);
        for (d, &xd) in x.iter().enumerate() {
            let mut ks = std::mem::take(&mut scratch.per_dim[d]);
            self.relevant_1d(xd, &mut ks);
            let empty = ks.is_empty();
            scratch.per_dim[d] = ks;
            if empty {
                return;
            }
        }

        // Cartesian product in row-major order; `digits` is an odometer over per_dim lists.
        let scale = self.scale();
        let half = self.order.half_support();
        let amp = self.amplitude();
        let mut digits = vec![0usize; self.dim];
        loop {
            let mut index = 0usize;
            let mut r2 = 0.0;
            for d in 0..self.dim {
                let kd = scratch.per_dim[d][digits[d]];
                index = index * self.per_dim + (kd - self.k_min()) as usize;
                let diff = scale * x[d] - kd as f64;
                r2 += diff * diff;
            }
            scratch.indices.push(index);
            scratch
                .values
                .push(amp * bspline_eval(self.order, r2.sqrt() + half));

            let mut d = self.dim;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                digits[d] += 1;
                if digits[d] < scratch.per_dim[d].len() {
                    break;
                }
                digits[d] = 0;
            }
        }
    }
}

/// Reusable buffers for relevant-frame search.
#[derive(Debug, Default, Clone)]
pub(crate) struct RelevantScratch {
    pub(crate) indices: Vec<usize>,
    pub(crate) values: Vec<f64>,
    per_dim: Vec<Vec<i64>>,
}
