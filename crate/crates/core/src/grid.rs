use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Uniform grid `[x_min, x_max]` with `n_cells` cells (`n_cells + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Default for GridSpec {
    /// `[-40, 40]` with `2^16` cells.
    fn default() -> Self {
        Self {
            x_min: -40.0,
            x_max: 40.0,
            n_cells: 1 << 16,
        }
    }
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min < x_max) || n_cells < 2 || !x_min.is_finite() || !x_max.is_finite() {
            return Err(LabError::Invalid(format!(
                "bad grid [{x_min}, {x_max}] with {n_cells} cells"
            )));
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.x(i)).collect()
    }

    /// Index of the node at `x`, if `x` is a node up to rounding.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let pos = (x - self.x_min) / self.step();
        let i = pos.round();
        ((pos - i).abs() < 1e-6 && i >= 0.0 && i <= self.n_cells as f64).then_some(i as usize)
    }
}
