//! Ball covers of hypercubes and the partitions of unity subordinate to them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{tensor_points, Cube};
use crate::error::{check_dim, invalid, Error, Result};

/// Finitely many balls of a common radius whose centers lie in `domain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub domain: Cube,
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
}

impl Cover {
    pub fn new(domain: Cube, centers: Vec<Vec<f64>>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return invalid(format!("cover radius must be positive, got {radius}"));
        }
        if centers.is_empty() {
            return invalid("a cover needs at least one center");
        }
        for c in &centers {
            check_dim(domain.dim, c.len())?;
            if !domain.contains(c) {
                return invalid(format!("center {c:?} lies outside the domain"));
            }
        }
        Ok(Self { domain, centers, radius })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// Distance from `x` to the nearest center.
    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        self.centers.iter().map(|c| dist(x, c)).fold(f64::INFINITY, f64::min)
    }
}

/// Upper bound `(ceil(γ√d/δ) + 1)^d` on the size of [`cover_hypercube`].
pub fn cover_cardinality_bound(gamma: f64, dim: usize, radius: f64) -> f64 {
    ((gamma * (dim as f64).sqrt() / radius).ceil() + 1.0).powi(dim as i32)
}

/// Uniform-grid cover of `[-γ, γ]^d` by balls of radius `δ`.
///
/// Centers are the midpoints of `n^d` equal cells with `n = floor(γ√d/δ) + 1`,
/// so every cell's half-diagonal is strictly below `δ`.
pub fn cover_hypercube(gamma: f64, dim: usize, radius: f64) -> Result<Cover> {
    if !(radius > 0.0) {
        return invalid(format!("cover radius must be positive, got {radius}"));
    }
    let domain = Cube::symmetric(gamma, dim)?;
    let n = (gamma * (dim as f64).sqrt() / radius).floor() as usize + 1;
    let h = 2.0 * gamma / n as f64;
    let axis: Vec<f64> = (0..n).map(|i| -gamma + (i as f64 + 0.5) * h).collect();
    Cover::new(domain, tensor_points(&axis, dim), radius)
}

/// Outcome of [`verify_cover`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverCheck {
    pub passed: bool,
    pub samples: usize,
    /// Largest distance from a sample to its nearest center.
    pub max_distance: f64,
    /// `max_distance - radius`, positive when some sample is uncovered.
    pub max_uncovered: f64,
}

/// Draws `samples` uniform points of the domain (plus its corners) and checks
/// that each lies within the radius of some center.
pub fn verify_cover(cover: &Cover, samples: usize, seed: u64) -> CoverCheck {
    let d = cover.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = tensor_points(&[cover.domain.lo, cover.domain.hi], d);
    for _ in 0..samples.max(1) {
        points.push((0..d).map(|_| rng.gen_range(cover.domain.lo..=cover.domain.hi)).collect());
    }
    let max_distance = points.iter().map(|p| cover.nearest_distance(p)).fold(0.0, f64::max);
    CoverCheck {
        passed: max_distance <= cover.radius,
        samples: points.len(),
        max_distance,
        max_uncovered: max_distance - cover.radius,
    }
}

/// Squared-hinge Shepard weights `ρ_m / Σ ρ_j` with `ρ_m = max(0, δ - |x - c_m|)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub cover: Cover,
}

impl PartitionOfUnity {
    pub fn new(cover: Cover) -> Self {
        Self { cover }
    }

    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        shepard_weights(&self.cover, x)
    }

    /// `Σ_m z_m ω_m(x)`.
    pub fn blend(&self, z: &[f64], x: &[f64]) -> Result<f64> {
        check_dim(self.cover.len(), z.len())?;
        let w = self.weights(x)?;
        Ok(w.iter().zip(z).map(|(a, b)| a * b).sum())
    }
}

pub fn shepard_weights(cover: &Cover, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(cover.dim(), x.len())?;
    let mut rho: Vec<f64> = cover
        .centers
        .iter()
        .map(|c| {
            let gap = cover.radius - dist(x, c);
            if gap > 0.0 {
                gap * gap
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = rho.iter().sum();
    if !(total > 0.0) {
        return Err(Error::BrokenCover(x.to_vec()));
    }
    rho.iter_mut().for_each(|r| *r /= total);
    Ok(rho)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
