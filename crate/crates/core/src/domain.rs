//! Axis-aligned cubes `[lo, hi]^d` used as input and output domains.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: f64,
    pub hi: f64,
    pub dim: usize,
}

impl Cube {
    pub fn new(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return invalid(format!("cube bounds must satisfy lo < hi, got [{lo}, {hi}]"));
        }
        if dim == 0 {
            return invalid("cube dimension must be at least 1");
        }
        Ok(Self { lo, hi, dim })
    }

    /// The symmetric cube `[-gamma, gamma]^d`.
    pub fn symmetric(gamma: f64, dim: usize) -> Result<Self> {
        if !(gamma > 0.0) {
            return invalid(format!("half-width must be positive, got {gamma}"));
        }
        Self::new(-gamma, gamma, dim)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.hi + self.lo)
    }

    pub fn side(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|&v| v >= self.lo && v <= self.hi)
    }

    /// Tensor grid with `n` points per axis including both endpoints, in
    /// row-major order (last axis fastest).
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axis: Vec<f64> = if n == 1 {
            vec![self.center()]
        } else {
            (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect()
        };
        tensor_points(&axis, self.dim)
    }

    /// Maps a point of the unit cube `[0,1]^d` into this cube.
    pub fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        t.iter().map(|&s| self.lo + s * (self.hi - self.lo)).collect()
    }
}

/// All `d`-tuples drawn from `axis`, last coordinate varying fastest.
pub fn tensor_points(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let n = axis.len();
    let total = n.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        out.push(idx.iter().map(|&i| axis[i]).collect());
        for j in (0..dim).rev() {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
        }
    }
    out
}
