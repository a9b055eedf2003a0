use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges narrower than this are treated as constant and map to 0.5.
pub const DEGENERATE_RANGE: f64 = 1e-9;

/// Per-dimension min-max scaling into `[0, 1]` with clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::Shape(format!(
                "scaler min has {} dims, max has {}",
                min.len(),
                max.len()
            )));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidConfig("scaler min must not exceed max".into()));
        }
        Ok(MinMaxScaler { min, max })
    }

    /// Fits per-dimension extrema over `rows`, each of length `dim`.
    pub fn fit<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut seen = false;
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (d, &v) in row.iter().enumerate() {
                if v.is_finite() {
                    min[d] = min[d].min(v);
                    max[d] = max[d].max(v);
                }
            }
            seen = true;
        }
        if !seen {
            return Err(Error::Empty("cannot fit a scaler without data"));
        }
        for d in 0..dim {
            if min[d] > max[d] {
                // no finite value in this dimension
                min[d] = 0.0;
                max[d] = 0.0;
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn transform_value(&self, d: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[d], self.max[d]);
        let range = hi - lo;
        if range < DEGENERATE_RANGE {
            return 0.5;
        }
        if v.is_nan() {
            return 0.5;
        }
        ((v - lo) / range).clamp(0.0, 1.0)
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(d, &v)| self.transform_value(d, v))
            .collect())
    }

    /// Applies the scaling to every row of a row-major buffer in place.
    pub fn transform_in_place(&self, values: &mut [f64]) {
        let dim = self.dim();
        for (i, v) in values.iter_mut().enumerate() {
            *v = self.transform_value(i % dim, *v);
        }
    }
}
