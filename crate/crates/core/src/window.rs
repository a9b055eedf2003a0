use crate::error::{Error, Result};

/// A length-`L` window of `n`-dimensional observations, stored timestep-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    len: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Window {
    pub fn new(len: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if len == 0 || dim == 0 {
            return Err(Error::Shape("window length and width must be positive".into()));
        }
        if values.len() != len * dim {
            return Err(Error::Shape(format!(
                "window of {len}x{dim} needs {} values, got {}",
                len * dim,
                values.len()
            )));
        }
        Ok(Window { len, dim, values })
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Window {
            len,
            dim,
            values: vec![0.0; len * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged window rows".into()));
        }
        Window::new(rows.len(), dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// The window with its timesteps in reverse order.
    pub fn reversed(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.rows().rev() {
            values.extend_from_slice(row);
        }
        Window { values, ..*self }
    }
}
