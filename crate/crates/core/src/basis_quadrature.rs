//! Orthonormal Fourier and Legendre bases on a cube, Gauss–Legendre rules,
//! and the sampling matrix `A` that recovers span coefficients from grid
//! values.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::approx_builder::FunctionOracle;
use crate::domain::{tensor_points, Cube};
use crate::error::{check_dim, invalid, Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return invalid("Gauss-Legendre order must be at least 1");
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                dp = legendre_and_derivative(n, x).1;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = if (1.0 - x * x).abs() < 1e-300 {
        let s = if x > 0.0 || n as usize % 2 == 1 { 1.0 } else { -1.0 };
        s * n * (n + 1.0) / 2.0
    } else {
        n * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, d)
}

fn legendre_value(n: usize, x: f64) -> f64 {
    legendre_and_derivative(n, x).0
}

/// Tensor-product quadrature rule on a cube.
#[derive(Clone, Debug)]
pub struct TensorRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    /// Composite Gauss–Legendre rule with `panels` equal panels of `order`
    /// nodes per axis.
    pub fn composite(domain: &Cube, panels: usize, order: usize) -> Result<Self> {
        if panels == 0 {
            return invalid("need at least one panel");
        }
        let (x, w) = gauss_legendre(order)?;
        let h = domain.side() / panels as f64;
        let mut axis_nodes = Vec::with_capacity(panels * order);
        let mut axis_weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = domain.lo + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                axis_nodes.push(a + 0.5 * h * (xi + 1.0));
                axis_weights.push(0.5 * h * wi);
            }
        }
        let nodes = tensor_points(&axis_nodes, domain.dim);
        let weights = tensor_points(&axis_weights, domain.dim)
            .into_iter()
            .map(|ws| ws.iter().product())
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn integrate(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// `L²` norm of `f` under this rule.
    pub fn l2_norm(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.integrate(&|x| f(x).powi(2)).max(0.0).sqrt()
    }
}

/// One-dimensional factor of a tensor-product basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisFactor {
    Const,
    Sin(u32),
    Cos(u32),
    Legendre(u32),
}

impl AxisFactor {
    fn is_fourier(self) -> bool {
        !matches!(self, AxisFactor::Legendre(_))
    }

    fn frequency(self) -> u32 {
        match self {
            AxisFactor::Const | AxisFactor::Legendre(_) => 0,
            AxisFactor::Sin(k) | AxisFactor::Cos(k) => k,
        }
    }

    fn eval(self, t: f64, gamma: f64) -> f64 {
        match self {
            AxisFactor::Const => 1.0 / (2.0 * gamma).sqrt(),
            AxisFactor::Sin(k) => (k as f64 * PI * t / gamma).sin() / gamma.sqrt(),
            AxisFactor::Cos(k) => (k as f64 * PI * t / gamma).cos() / gamma.sqrt(),
            AxisFactor::Legendre(n) => {
                ((2 * n + 1) as f64 / (2.0 * gamma)).sqrt() * legendre_value(n as usize, t / gamma)
            }
        }
    }

    fn sup(self, gamma: f64) -> f64 {
        match self {
            AxisFactor::Const => 1.0 / (2.0 * gamma).sqrt(),
            AxisFactor::Sin(0) => 0.0,
            AxisFactor::Sin(_) | AxisFactor::Cos(_) => 1.0 / gamma.sqrt(),
            AxisFactor::Legendre(n) => ((2 * n + 1) as f64 / (2.0 * gamma)).sqrt(),
        }
    }

    fn lipschitz(self, gamma: f64) -> f64 {
        match self {
            AxisFactor::Const => 0.0,
            AxisFactor::Sin(k) | AxisFactor::Cos(k) => k as f64 * PI / gamma / gamma.sqrt(),
            AxisFactor::Legendre(n) => {
                let n = n as f64;
                ((2.0 * n + 1.0) / (2.0 * gamma)).sqrt() * n * (n + 1.0) / (2.0 * gamma)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Fourier,
    Legendre,
}

/// Finite orthonormal family of tensor-product functions on `domain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalBasis {
    pub kind: BasisKind,
    pub domain: Cube,
    /// One factor per axis for each basis function.
    pub modes: Vec<Vec<AxisFactor>>,
}

impl OrthonormalBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn eval(&self, k: usize, x: &[f64]) -> f64 {
        let (c, g) = (self.domain.center(), self.domain.half_width());
        self.modes[k].iter().zip(x).map(|(f, xi)| f.eval(xi - c, g)).product()
    }

    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|k| self.eval(k, x)).collect()
    }

    /// `Σ_k α_k ω_k(x)`.
    pub fn combine(&self, alpha: &[f64], x: &[f64]) -> f64 {
        alpha.iter().enumerate().map(|(k, a)| if *a == 0.0 { 0.0 } else { a * self.eval(k, x) }).sum()
    }

    pub fn sup_bound(&self, k: usize) -> f64 {
        let g = self.domain.half_width();
        self.modes[k].iter().map(|f| f.sup(g)).product()
    }

    /// Euclidean Lipschitz bound of basis function `k`.
    pub fn lipschitz_bound(&self, k: usize) -> f64 {
        let g = self.domain.half_width();
        let f = &self.modes[k];
        let mut sq = 0.0;
        for j in 0..f.len() {
            let mut term = f[j].lipschitz(g);
            for (i, other) in f.iter().enumerate() {
                if i != j {
                    term *= other.sup(g);
                }
            }
            sq += term * term;
        }
        sq.sqrt()
    }

    pub fn max_frequency(&self) -> u32 {
        self.modes.iter().flatten().map(|f| f.frequency()).max().unwrap_or(0)
    }

    pub fn max_degree(&self) -> u32 {
        self.modes
            .iter()
            .flatten()
            .map(|f| if let AxisFactor::Legendre(n) = f { *n } else { 0 })
            .max()
            .unwrap_or(0)
    }
}

/// The 1-D sequence `sin(πx/γ), cos(πx/γ), sin(2πx/γ), ...` truncated to `count`.
pub fn fourier_modes_1d(count: usize) -> Vec<Vec<AxisFactor>> {
    (0..count)
        .map(|i| {
            let k = (i / 2 + 1) as u32;
            vec![if i % 2 == 0 { AxisFactor::Sin(k) } else { AxisFactor::Cos(k) }]
        })
        .collect()
}

/// Tensor-product sine/cosine basis, normalized in `L²([-γ, γ]^d)`.
pub fn fourier_basis(dim: usize, gamma: f64, modes: Vec<Vec<AxisFactor>>) -> Result<OrthonormalBasis> {
    fourier_basis_on(Cube::symmetric(gamma, dim)?, modes)
}

/// Fourier basis on an arbitrary cube, periodic with the cube's side.
pub fn fourier_basis_on(domain: Cube, modes: Vec<Vec<AxisFactor>>) -> Result<OrthonormalBasis> {
    if modes.is_empty() {
        return invalid("a basis needs at least one mode");
    }
    for m in &modes {
        check_dim(domain.dim, m.len())?;
        if !m.iter().all(|f| f.is_fourier()) || m.contains(&AxisFactor::Sin(0)) || m.contains(&AxisFactor::Cos(0)) {
            return invalid(format!("{m:?} is not a Fourier mode"));
        }
    }
    Ok(OrthonormalBasis { kind: BasisKind::Fourier, domain, modes })
}

/// All tensor products of normalized Legendre polynomials with per-axis
/// degree at most `max_degree`.
pub fn legendre_basis(dim: usize, gamma: f64, max_degree: u32) -> Result<OrthonormalBasis> {
    legendre_basis_on(Cube::symmetric(gamma, dim)?, max_degree)
}

pub fn legendre_basis_on(domain: Cube, max_degree: u32) -> Result<OrthonormalBasis> {
    let degrees: Vec<f64> = (0..=max_degree).map(|n| n as f64).collect();
    let modes = tensor_points(&degrees, domain.dim)
        .into_iter()
        .map(|m| m.into_iter().map(|n| AxisFactor::Legendre(n as u32)).collect())
        .collect();
    Ok(OrthonormalBasis { kind: BasisKind::Legendre, domain, modes })
}

/// Sampling grid and matrix `A` with `A · [u(x_1), ..., u(x_n)] = α` for
/// every `u = Σ α_k ω_k` in the span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureEncoding {
    pub basis: OrthonormalBasis,
    pub grid: Vec<Vec<f64>>,
    /// Row `k` holds `β_j ω_k(x_j)`.
    pub matrix: Vec<Vec<f64>>,
}

impl QuadratureEncoding {
    pub fn n_x(&self) -> usize {
        self.grid.len()
    }

    pub fn b_u(&self) -> usize {
        self.matrix.len()
    }

    /// Largest absolute row sum of `A`.
    pub fn c_a(&self) -> f64 {
        self.matrix.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn sample(&self, u: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        self.grid.iter().map(|x| u(x)).collect()
    }

    pub fn encode(&self, samples: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_x(), samples.len())?;
        Ok(self.matrix.iter().map(|r| r.iter().zip(samples).map(|(a, b)| a * b).sum()).collect())
    }

    /// Largest `|A ω_k(grid) - e_k|` over all basis functions.
    pub fn recovery_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.basis.len() {
            let s = self.sample(&|x| self.basis.eval(k, x));
            let alpha = self.encode(&s).expect("grid length matches");
            for (j, a) in alpha.iter().enumerate() {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((a - target).abs());
            }
        }
        worst
    }
}

/// Tolerance of the construction-time recovery self-test.
pub const RECOVERY_TOLERANCE: f64 = 1e-10;

/// Builds the default encoding: Gauss–Legendre nodes with `max_degree + 1`
/// points per axis for Legendre bases, and a periodic uniform grid with
/// `2·max_frequency + 1` points per axis for Fourier bases.
pub fn build_encoding(basis: &OrthonormalBasis) -> Result<QuadratureEncoding> {
    let per_axis = match basis.kind {
        BasisKind::Legendre => basis.max_degree() as usize + 1,
        BasisKind::Fourier => 2 * basis.max_frequency() as usize + 1,
    };
    build_encoding_with(basis, per_axis)
}

/// Builds an encoding with `per_axis` grid points per axis and rejects it if
/// the recovery self-test fails.
pub fn build_encoding_with(basis: &OrthonormalBasis, per_axis: usize) -> Result<QuadratureEncoding> {
    if per_axis == 0 {
        return invalid("grid needs at least one point per axis");
    }
    let dom = &basis.domain;
    let (c, g) = (dom.center(), dom.half_width());
    let (axis, axis_w): (Vec<f64>, Vec<f64>) = match basis.kind {
        BasisKind::Legendre => {
            let (x, w) = gauss_legendre(per_axis)?;
            (x.iter().map(|t| c + g * t).collect(), w.iter().map(|wi| g * wi).collect())
        }
        BasisKind::Fourier => {
            let h = dom.side() / per_axis as f64;
            ((0..per_axis).map(|i| dom.lo + i as f64 * h).collect(), vec![h; per_axis])
        }
    };
    let grid = tensor_points(&axis, dom.dim);
    let weights: Vec<f64> = tensor_points(&axis_w, dom.dim).into_iter().map(|w| w.iter().product()).collect();
    let matrix = (0..basis.len())
        .map(|k| grid.iter().zip(&weights).map(|(x, w)| w * basis.eval(k, x)).collect())
        .collect();
    let enc = QuadratureEncoding { basis: basis.clone(), grid, matrix };
    let err = enc.recovery_error();
    if !(err <= RECOVERY_TOLERANCE) {
        return Err(Error::Encoding(format!(
            "{per_axis} points per axis recover span coefficients only to {err:.3e}"
        )));
    }
    Ok(enc)
}

/// The span element `Σ α_k ω_k` with Lipschitz and sup bounds summed from
/// the per-function bounds.
pub fn reconstruct(alpha: &[f64], basis: &OrthonormalBasis) -> Result<FunctionOracle> {
    check_dim(basis.len(), alpha.len())?;
    let lip = alpha.iter().enumerate().map(|(k, a)| a.abs() * basis.lipschitz_bound(k)).sum();
    let sup = alpha.iter().enumerate().map(|(k, a)| a.abs() * basis.sup_bound(k)).sum();
    let b = basis.clone();
    let a = alpha.to_vec();
    Ok(FunctionOracle::new(move |x: &[f64]| b.combine(&a, x), basis.domain.clone(), lip, sup))
}
