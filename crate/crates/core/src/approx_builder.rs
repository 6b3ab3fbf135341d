//! Explicit ReLU approximators built weight by weight: the bump `ψ`, the
//! sawtooth product network, tensor-product bumps on a uniform grid, and the
//! grid expansions that approximate Lipschitz functions and functionals.
//!
//! A grid expansion `Σ_k a_k q_k(x)` is stored as one bump template plus the
//! grid and the coefficients. Every bump network is the template with a
//! shifted first-layer bias, so [`BumpLayout::bump_network`] materializes it
//! exactly, and evaluation only visits bumps whose support contains the point
//! (all other bumps evaluate to exactly zero).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis_quadrature::{QuadratureEncoding, TensorRule};
use crate::cover_pou::{shepard_weights, verify_cover, Cover};
use crate::domain::{tensor_points, Cube};
use crate::error::{check_dim, invalid, Error, Result};
use crate::relu_net::{
    parallel_sum, structural_checks, Check, ConformanceReport, Layer, NetworkClassSpec, ProbeBox, ReluNetwork,
    Workspace,
};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A function on a cube with declared Lipschitz and sup bounds.
#[derive(Clone)]
pub struct FunctionOracle {
    f: ScalarFn,
    pub domain: Cube,
    pub lipschitz: f64,
    pub sup_bound: f64,
}

impl fmt::Debug for FunctionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionOracle")
            .field("domain", &self.domain)
            .field("lipschitz", &self.lipschitz)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl FunctionOracle {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, domain: Cube, lipschitz: f64, sup_bound: f64) -> Self {
        Self { f: Arc::new(f), domain, lipschitz, sup_bound }
    }

    pub fn from_arc(f: ScalarFn, domain: Cube, lipschitz: f64, sup_bound: f64) -> Self {
        Self { f, domain, lipschitz, sup_bound }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn function(&self) -> ScalarFn {
        self.f.clone()
    }

    /// Largest observed difference quotient and value over random samples.
    pub fn spot_check(&self, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.domain.dim;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| rng.gen_range(self.domain.lo..=self.domain.hi)).collect()
        };
        let (mut ratio, mut sup) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let (x, y) = (draw(&mut rng), draw(&mut rng));
            let (fx, fy) = (self.eval(&x), self.eval(&y));
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist > 0.0 {
                ratio = ratio.max((fx - fy).abs() / dist);
            }
            sup = sup.max(fx.abs()).max(fy.abs());
        }
        (ratio, sup)
    }
}

type FunctionalFn = Arc<dyn Fn(&dyn Fn(&[f64]) -> f64) -> f64 + Send + Sync>;

/// A real-valued map on functions with declared Lipschitz bound (against
/// the `L²` distance of its inputs) and sup bound.
#[derive(Clone)]
pub struct FunctionalOracle {
    f: FunctionalFn,
    pub lipschitz: f64,
    pub sup_bound: f64,
}

impl fmt::Debug for FunctionalOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalOracle")
            .field("lipschitz", &self.lipschitz)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

fn default_rule(domain: &Cube) -> TensorRule {
    let (panels, order) = match domain.dim {
        1 => (64, 8),
        2 => (24, 6),
        _ => (6, 4),
    };
    TensorRule::composite(domain, panels, order).expect("valid rule parameters")
}

impl FunctionalOracle {
    pub fn new(
        f: impl Fn(&dyn Fn(&[f64]) -> f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        sup_bound: f64,
    ) -> Self {
        Self { f: Arc::new(f), lipschitz, sup_bound }
    }

    pub fn eval(&self, u: &dyn Fn(&[f64]) -> f64) -> f64 {
        (self.f)(u)
    }

    pub fn eval_oracle(&self, u: &FunctionOracle) -> f64 {
        self.eval(&|x| u.eval(x))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, 0.0, c.abs())
    }

    /// `∫_Ω u` for inputs bounded by `input_sup`.
    pub fn integral(domain: &Cube, input_sup: f64) -> Self {
        let rule = Arc::new(default_rule(domain));
        let vol = domain.volume();
        Self::new(move |u| rule.integrate(u), vol.sqrt(), vol * input_sup)
    }

    /// `|Ω|⁻¹ ∫_Ω u` for inputs bounded by `input_sup`.
    pub fn average(domain: &Cube, input_sup: f64) -> Self {
        let rule = Arc::new(default_rule(domain));
        let vol = domain.volume();
        Self::new(move |u| rule.integrate(u) / vol, 1.0 / vol.sqrt(), input_sup)
    }

    /// `‖u‖²` on inputs with `‖u‖ ≤ radius`.
    pub fn squared_norm(domain: &Cube, radius: f64) -> Self {
        let rule = Arc::new(default_rule(domain));
        Self::new(move |u| rule.integrate(&|x| u(x).powi(2)), 2.0 * radius, radius * radius)
    }

    /// `⟨u, ω_k⟩` for inputs with `‖u‖ ≤ radius`.
    pub fn basis_coefficient(basis: &crate::basis_quadrature::OrthonormalBasis, k: usize, radius: f64) -> Self {
        let rule = Arc::new(TensorRule::composite(&basis.domain, 16, 12).expect("valid rule"));
        let b = basis.clone();
        Self::new(move |u| rule.integrate(&|x| u(x) * b.eval(k, x)), 1.0, radius)
    }
}

/// Declared class of admissible inputs: Lipschitz and sup bounds on a cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFamily {
    pub domain: Cube,
    pub lipschitz: f64,
    pub sup_bound: f64,
}

/// Closed form of the bump: 1 on `|a| < 1`, 0 on `|a| > 2`, `2 - |a|` between.
pub fn psi(a: f64) -> f64 {
    let t = a.abs();
    if t < 1.0 {
        1.0
    } else if t > 2.0 {
        0.0
    } else {
        2.0 - t
    }
}

/// `ψ(scale · x_axis)` as a depth-3 network on `R^dim`, computed as
/// `relu(2 - |a|) - relu(1 - |a|)` with `|a| = relu(a) + relu(-a)`.
fn axis_psi(dim: usize, axis: usize, scale: f64) -> Result<ReluNetwork> {
    let mut first = vec![0.0; 2 * dim];
    first[axis] = scale;
    first[dim + axis] = -scale;
    ReluNetwork::new(vec![
        Layer::new(2, dim, first, vec![0.0, 0.0])?,
        Layer::new(2, 2, vec![-1.0, -1.0, -1.0, -1.0], vec![2.0, 1.0])?,
        Layer::new(1, 2, vec![1.0, -1.0], vec![0.0])?,
    ])
}

/// The bump `ψ` as an exact ReLU network.
pub fn build_psi() -> ReluNetwork {
    axis_psi(1, 0, 1.0).expect("fixed shapes")
}

/// Upper limit on squaring stages; later stages change the output by less
/// than `M² 2^-61`, below double precision.
pub const MAX_PRODUCT_STAGES: usize = 30;

/// Stage count for the product network on `[-bound, bound]²` with tolerance `eps`.
pub fn product_stages(bound: f64, eps: f64) -> usize {
    let nominal = (3.0 * bound * bound / eps).log2().ceil();
    // smallest m with bound² 2^(-2m-1) < eps
    let tight = (((bound * bound / eps).log2() - 1.0) / 2.0).floor() + 1.0;
    let m = nominal.max(tight).max(1.0);
    if m.is_finite() {
        (m as usize).min(MAX_PRODUCT_STAGES)
    } else {
        MAX_PRODUCT_STAGES
    }
}

/// Worst-case error of the product network with `stages` squaring stages.
pub fn product_error_bound(bound: f64, stages: usize) -> f64 {
    bound * bound * 2f64.powi(-2 * stages as i32 - 1)
}

/// `xy = M²((|x+y|/2M)² - (|x-y|/2M)²)` with each square replaced by the
/// sawtooth interpolant `t - Σ_s g_s(t)/4^s`.
///
/// The units of the two squares are interleaved so that equal arguments
/// cancel exactly in the output sum; this makes `×̃(0, y) = ×̃(x, 0) = 0`.
fn product_network(bound: f64, stages: usize) -> Result<ReluNetwork> {
    let unit = |blk: usize, role: usize| 2 * role + blk;
    let c = 1.0 / (2.0 * bound);
    let mut layers = vec![Layer::from_rows(
        &[vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]],
        vec![0.0; 4],
    )?];
    let mut w = vec![0.0; 8 * 4];
    let mut b = vec![0.0; 8];
    for blk in 0..2 {
        for r in 0..4 {
            w[unit(blk, r) * 4 + 2 * blk] = c;
            w[unit(blk, r) * 4 + 2 * blk + 1] = c;
        }
        b[unit(blk, 1)] = -0.5;
        b[unit(blk, 2)] = -1.0;
    }
    layers.push(Layer::new(8, 4, w, b)?);
    for s in 1..stages {
        let q = 0.25f64.powi(s as i32);
        let mut w = vec![0.0; 64];
        let mut b = vec![0.0; 8];
        for blk in 0..2 {
            let col = |r| unit(blk, r);
            for r in 0..3 {
                w[col(r) * 8 + col(0)] = 2.0;
                w[col(r) * 8 + col(1)] = -4.0;
                w[col(r) * 8 + col(2)] = 2.0;
            }
            b[col(1)] = -0.5;
            b[col(2)] = -1.0;
            w[col(3) * 8 + col(0)] = -2.0 * q;
            w[col(3) * 8 + col(1)] = 4.0 * q;
            w[col(3) * 8 + col(2)] = -2.0 * q;
            w[col(3) * 8 + col(3)] = 1.0;
        }
        layers.push(Layer::new(8, 8, w, b)?);
    }
    let q = 0.25f64.powi(stages as i32);
    let m2 = bound * bound;
    let tail = [-2.0 * q, 4.0 * q, -2.0 * q, 1.0];
    let mut out = vec![0.0; 8];
    for r in 0..4 {
        out[unit(0, r)] = m2 * tail[r];
        out[unit(1, r)] = -m2 * tail[r];
    }
    layers.push(Layer::new(1, 8, out, vec![0.0])?);
    ReluNetwork::new(layers)
}

/// Network `×̃` with `|×̃(x, y) - xy| < eps` for `|x|, |y| ≤ bound`.
pub fn build_product(bound: f64, eps: f64) -> Result<ReluNetwork> {
    if !(bound > 0.0) || !bound.is_finite() {
        return invalid(format!("product bound must be positive, got {bound}"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("product tolerance must lie in (0, 1), got {eps}"));
    }
    product_network(bound, product_stages(bound, eps))
}

/// Class budget of the product network with `stages` stages.
pub fn product_budget(bound: f64, stages: usize) -> NetworkClassSpec {
    NetworkClassSpec {
        d_in: 2,
        d_out: 1,
        depth: stages + 2,
        width: 8,
        nonzeros: 30 * stages + 6,
        magnitude: 4f64.max(bound * bound).max(1.0 / (2.0 * bound)),
        output_bound: 2.0 * bound * bound,
    }
}

/// Parameters of one tensor-product bump family on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub dim: usize,
    pub per_axis: usize,
    /// Argument scale of `ψ`: `3(N-1)/(2γ)`.
    pub scale: f64,
    pub eps_prod_requested: f64,
    pub stages: usize,
    pub product_bound: f64,
    /// Guaranteed product error with the chosen stage count.
    pub eps_prod_achieved: f64,
}

impl BumpSpec {
    pub fn new(domain: &Cube, per_axis: usize, eps_prod: f64) -> Result<Self> {
        if per_axis < 2 {
            return invalid("a bump grid needs at least two points per axis");
        }
        if !(eps_prod > 0.0) {
            return invalid(format!("product tolerance must be positive, got {eps_prod}"));
        }
        let dim = domain.dim;
        let eps = eps_prod.min(0.1 / dim as f64);
        let bound = 1.0 + dim as f64 * eps;
        let stages = if dim == 1 { 0 } else { product_stages(bound, eps) };
        let achieved = if dim == 1 { 0.0 } else { product_error_bound(bound, stages) };
        Ok(Self {
            dim,
            per_axis,
            scale: 3.0 * (per_axis - 1) as f64 / domain.side(),
            eps_prod_requested: eps_prod,
            stages,
            product_bound: bound,
            eps_prod_achieved: achieved,
        })
    }

    /// Bound on `|q_k - φ_k|` from the product chain.
    pub fn bump_error(&self) -> f64 {
        (self.dim as f64 - 1.0) * self.eps_prod_achieved
    }

    pub fn depth(&self) -> usize {
        if self.dim == 1 {
            3
        } else {
            3 + (self.dim - 1) * (self.stages + 1)
        }
    }

    pub fn width(&self) -> usize {
        if self.dim == 1 {
            2
        } else {
            (2 * self.dim).max(2 * (self.dim - 2) + 8)
        }
    }

    pub fn nonzeros(&self) -> usize {
        let (d, m) = (self.dim, self.stages);
        let carry: usize = (1..d).map(|j| (j - 1) * (2 * m + 8)).sum();
        12 * d + (d - 1) * (30 * m + 22) + carry
    }

    /// Largest entry of the bump at `center`, given the encoder's largest entry.
    pub fn magnitude(&self, center_sup: f64, encoder_sup: f64) -> f64 {
        let m2 = self.product_bound * self.product_bound;
        (self.scale * center_sup.max(encoder_sup).max(1.0)).max(4.0).max(m2)
    }

    pub fn output_bound(&self) -> f64 {
        1.0 + self.bump_error()
    }
}

/// `Π_j ψ(scale (x_j - c_j))`.
pub fn tensor_bump(center: &[f64], scale: f64, x: &[f64]) -> f64 {
    center.iter().zip(x).map(|(c, v)| psi(scale * (v - c))).product()
}

/// The bump at the origin of `R^dim`: `×̃(ψ_1, ×̃(ψ_2, ...))` over the per-axis
/// factors `ψ(scale · x_j)`.
fn bump_template(spec: &BumpSpec) -> Result<ReluNetwork> {
    let d = spec.dim;
    let axes = (0..d).map(|j| axis_psi(d, j, spec.scale)).collect::<Result<Vec<_>>>()?;
    let mut net = ReluNetwork::fan_out(&axes)?;
    if d == 1 {
        return Ok(net);
    }
    let prod = product_network(spec.product_bound, spec.stages)?;
    for k in (0..d - 1).rev() {
        let step = if k == 0 {
            prod.clone()
        } else {
            ReluNetwork::stack(&[ReluNetwork::identity(k, 1)?, prod.clone()])?
        };
        net = ReluNetwork::compose(&step, &net)?;
    }
    Ok(net)
}

/// The bump network centered at `center` on a grid with `per_axis` points
/// per axis over `[-γ, γ]^d`.
pub fn build_bump(center: &[f64], per_axis: usize, gamma: f64, eps_prod: f64) -> Result<ReluNetwork> {
    let domain = Cube::symmetric(gamma, center.len())?;
    let spec = BumpSpec::new(&domain, per_axis, eps_prod)?;
    Ok(bump_template(&spec)?.shift_input(center))
}

/// Uniform grid with `per_axis` points per axis, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpGrid {
    pub domain: Cube,
    pub per_axis: usize,
}

impl BumpGrid {
    pub fn len(&self) -> usize {
        self.per_axis.saturating_pow(self.domain.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of grid points as a float (no overflow for large grids).
    pub fn size(&self) -> f64 {
        (self.per_axis as f64).powi(self.domain.dim as i32)
    }

    pub fn spacing(&self) -> f64 {
        self.domain.side() / (self.per_axis - 1) as f64
    }

    fn coord(&self, i: usize) -> f64 {
        self.domain.lo + self.spacing() * i as f64
    }

    /// Grid point with flat index `k` (last axis fastest).
    pub fn point(&self, k: usize) -> Vec<f64> {
        let d = self.domain.dim;
        let mut out = vec![0.0; d];
        let mut rem = k;
        for j in (0..d).rev() {
            out[j] = self.coord(rem % self.per_axis);
            rem /= self.per_axis;
        }
        out
    }

    /// Flat indices of every bump that may be nonzero at `z`.
    pub fn candidates(&self, z: &[f64], scale: f64) -> Vec<usize> {
        let h = self.spacing();
        let n = self.per_axis as i64;
        let mut axes: Vec<Vec<usize>> = Vec::with_capacity(z.len());
        for &v in z {
            let t = (v - self.domain.lo) / h;
            if !t.is_finite() {
                return Vec::new();
            }
            let i0 = t.floor() as i64;
            let list: Vec<usize> = (i0 - 1..=i0 + 2)
                .filter(|i| *i >= 0 && *i < n)
                .map(|i| i as usize)
                .filter(|&i| (scale * (v - self.coord(i))).abs() < 2.5)
                .collect();
            if list.is_empty() {
                return Vec::new();
            }
            axes.push(list);
        }
        let mut out = vec![0usize];
        for list in axes {
            let mut next = Vec::with_capacity(out.len() * list.len());
            for base in &out {
                for i in &list {
                    next.push(base * self.per_axis + i);
                }
            }
            out = next;
        }
        out
    }
}

/// Aggregate structure of `Σ_k a_k q_k` realized as one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionStructure {
    pub depth: usize,
    pub width: usize,
    pub nonzeros: usize,
    pub magnitude: f64,
    pub max_bump_nonzeros: usize,
    pub max_bump_magnitude: f64,
}

/// Grid of shifted bump networks, optionally preceded by a linear encoder.
#[derive(Clone, Debug)]
pub struct BumpLayout {
    pub grid: BumpGrid,
    pub spec: BumpSpec,
    template: ReluNetwork,
    encoder: Option<Vec<Vec<f64>>>,
    encoded: Option<ReluNetwork>,
}

impl BumpLayout {
    pub fn new(domain: Cube, per_axis: usize, eps_prod: f64, encoder: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let spec = BumpSpec::new(&domain, per_axis, eps_prod)?;
        let template = bump_template(&spec)?;
        let encoded = match &encoder {
            Some(a) => {
                check_dim(domain.dim, a.len())?;
                Some(template.prepend_linear(a)?)
            }
            None => None,
        };
        Ok(Self { grid: BumpGrid { domain, per_axis }, spec, template, encoder, encoded })
    }

    pub fn input_dim(&self) -> usize {
        self.net().input_dim()
    }

    fn net(&self) -> &ReluNetwork {
        self.encoded.as_ref().unwrap_or(&self.template)
    }

    pub fn template(&self) -> &ReluNetwork {
        &self.template
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        match &self.encoder {
            Some(a) => a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect(),
            None => x.to_vec(),
        }
    }

    fn encoder_sup(&self) -> f64 {
        self.encoder.as_ref().map_or(1.0, |a| a.iter().flatten().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// The bump network for grid point `k`.
    pub fn bump_network(&self, k: usize) -> ReluNetwork {
        let bias = self.template.shifted_first_bias(&self.grid.point(k));
        self.net().with_first_bias(bias).expect("bias length matches")
    }

    /// Value of bump `k` at `x`, with the same arithmetic as [`bump_network`](Self::bump_network).
    pub fn bump_value(&self, k: usize, x: &[f64], ws: &mut Workspace) -> f64 {
        let bias = self.template.shifted_first_bias(&self.grid.point(k));
        self.net().forward_with_first_bias(x, &bias, ws)[0]
    }

    /// `(k, q_k(x))` for every bump that is nonzero at `x`.
    pub fn active(&self, x: &[f64], ws: &mut Workspace) -> Vec<(usize, f64)> {
        let z = self.encode(x);
        self.grid
            .candidates(&z, self.spec.scale)
            .into_iter()
            .filter_map(|k| {
                let v = self.bump_value(k, x, ws);
                (v != 0.0).then_some((k, v))
            })
            .collect()
    }

    /// Declared class of each bump network.
    pub fn bump_budget(&self) -> NetworkClassSpec {
        let center_sup = self.grid.domain.lo.abs().max(self.grid.domain.hi.abs());
        NetworkClassSpec {
            d_in: self.input_dim(),
            d_out: 1,
            depth: self.spec.depth(),
            width: self.spec.width(),
            nonzeros: self.spec.nonzeros() + if self.encoder.is_some() { self.encoded_extra() } else { 0 },
            magnitude: self.spec.magnitude(center_sup, self.encoder_sup()),
            output_bound: self.spec.output_bound(),
        }
    }

    // The encoder turns each first-layer row into a dense row of length n_x.
    fn encoded_extra(&self) -> usize {
        2 * self.spec.dim * self.input_dim()
    }

    /// Structure of `Σ_k coef(k) q_k` as a single network.
    pub fn structure(&self, coef: &(dyn Fn(usize) -> f64 + Sync)) -> ExpansionStructure {
        let net = self.net();
        let layers = net.layers();
        let last = &layers[layers.len() - 1];
        let first = &layers[0];
        let nnz = |v: &[f64]| v.iter().filter(|x| **x != 0.0).count();
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let inner_nnz: usize = nnz(first.weights())
            + layers[1..layers.len() - 1].iter().map(|l| nnz(l.weights()) + nnz(l.bias())).sum::<usize>();
        let inner_sup = layers[1..layers.len() - 1]
            .iter()
            .map(|l| sup(l.weights()).max(sup(l.bias())))
            .fold(sup(first.weights()), f64::max);
        let last_nnz = nnz(last.weights()) + nnz(last.bias());
        let last_sup = sup(last.weights()).max(sup(last.bias()));
        let per_bump: Vec<(usize, usize, f64, f64)> = (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                let bias = self.template.shifted_first_bias(&self.grid.point(k));
                let a = coef(k);
                let bias_nnz = nnz(&bias);
                let in_sum = if a != 0.0 { nnz(last.weights()) } else { 0 };
                (
                    inner_nnz + bias_nnz + last_nnz,
                    inner_nnz + bias_nnz + in_sum,
                    inner_sup.max(sup(&bias)).max(last_sup),
                    inner_sup.max(sup(&bias)).max(a.abs() * last_sup),
                )
            })
            .collect();
        ExpansionStructure {
            depth: net.depth(),
            width: net.max_width() * self.grid.len(),
            nonzeros: per_bump.iter().map(|p| p.1).sum(),
            magnitude: per_bump.iter().map(|p| p.3).fold(0.0, f64::max),
            max_bump_nonzeros: per_bump.iter().map(|p| p.0).max().unwrap_or(0),
            max_bump_magnitude: per_bump.iter().map(|p| p.2).fold(0.0, f64::max),
        }
    }
}

/// Source of expansion coefficients.
#[derive(Clone)]
pub enum Coefficients {
    Dense(Vec<f64>),
    /// Evaluated at grid points on demand.
    Lazy(ScalarFn),
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficients::Dense(v) => write!(f, "Dense({} values)", v.len()),
            Coefficients::Lazy(_) => write!(f, "Lazy"),
        }
    }
}

/// `x -> Σ_k a_k q_k(x)` over a bump grid.
#[derive(Clone, Debug)]
pub struct BumpExpansion {
    pub layout: BumpLayout,
    pub coefficients: Coefficients,
}

impl BumpExpansion {
    pub fn input_dim(&self) -> usize {
        self.layout.input_dim()
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        match &self.coefficients {
            Coefficients::Dense(v) => v[k],
            Coefficients::Lazy(f) => f(&self.layout.grid.point(k)),
        }
    }

    pub fn eval_with(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.layout.active(x, ws).into_iter().map(|(k, v)| self.coefficient(k) * v).sum()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.eval_with(x, &mut Workspace::default()))
    }

    /// The whole expansion as one dense network. Refuses above `max_entries`
    /// stored entries.
    pub fn to_network(&self, max_entries: usize) -> Result<ReluNetwork> {
        let g = self.layout.grid.len();
        let w = self.layout.net().max_width() * g;
        let estimate = (w as f64).powi(2) * self.layout.spec.depth() as f64;
        if estimate > max_entries as f64 {
            return Err(Error::SizeCap { what: "dense expansion entries".into(), requested: estimate, cap: max_entries as f64 });
        }
        let nets: Vec<ReluNetwork> = (0..g).map(|k| self.layout.bump_network(k)).collect();
        let coefs: Vec<f64> = (0..g).map(|k| self.coefficient(k)).collect();
        Ok(parallel_sum(&nets, &coefs)?.0)
    }

    pub fn structure(&self) -> ExpansionStructure {
        self.layout.structure(&|k| self.coefficient(k))
    }

    /// Checks the expansion against its declared aggregate class and each
    /// bump against the bump class. The output bound uses `sampled_sup`.
    pub fn conformance(&self, declared: &NetworkClassSpec, sampled_sup: f64) -> ConformanceReport {
        let s = self.structure();
        let bump = self.layout.bump_budget();
        let template_sup = {
            let h = self.layout.grid.spacing();
            let d = self.layout.spec.dim;
            let probe = ProbeBox::cube(-h, h, d, 40_000);
            let mut ws = Workspace::default();
            probe
                .points()
                .iter()
                .map(|x| self.layout.template.forward_with(x, &mut ws)[0].abs())
                .fold(0.0, f64::max)
        };
        let mut checks = vec![
            Check::equal("d_in", self.input_dim() as f64, declared.d_in as f64),
            Check::at_most("depth", s.depth as f64, declared.depth as f64),
            Check::at_most("width", s.width as f64, declared.width as f64),
            Check::at_most("nonzeros", s.nonzeros as f64, declared.nonzeros as f64),
            Check::at_most("magnitude", s.magnitude, declared.magnitude),
            Check::at_most("output_bound", sampled_sup, declared.output_bound),
        ];
        checks.extend(structural_checks(&self.layout.bump_network(0), &bump).into_iter().map(|mut c| {
            c.name = format!("bump_{}", c.name);
            c
        }));
        checks.push(Check::at_most("bump_nonzeros_all", s.max_bump_nonzeros as f64, bump.nonzeros as f64));
        checks.push(Check::at_most("bump_magnitude_all", s.max_bump_magnitude, bump.magnitude));
        checks.push(Check::at_most("bump_output_bound", template_sup, bump.output_bound));
        ConformanceReport { checks }
    }
}

/// Size limits that turn oversized constructions into refusals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeCaps {
    /// Grid points of a function approximator.
    pub max_grid: usize,
    /// Cover size `c_U` of the general functional construction.
    pub max_cover: usize,
    /// Grid points of the general functional construction.
    pub max_functional_grid: usize,
    /// Grids above this size keep their coefficients lazy.
    pub max_dense_coefficients: usize,
}

impl Default for SizeCaps {
    fn default() -> Self {
        Self { max_grid: 1_000_000, max_cover: 4, max_functional_grid: 1_000_000, max_dense_coefficients: 1_000_000 }
    }
}

/// Metadata of a constructed approximator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub kind: String,
    pub eps: f64,
    pub input_dim: usize,
    /// Dimension of the bump grid (`d₁`, `c_U` or `b_U`).
    pub grid_dim: usize,
    pub per_axis: usize,
    pub grid_points: f64,
    pub cover_size: Option<usize>,
    pub b_u: Option<usize>,
    pub target_lipschitz: f64,
    pub target_sup: f64,
    pub bump: BumpSpec,
    pub bump_budget: NetworkClassSpec,
    /// Aggregate budget; `None` when the counts overflow.
    pub declared: Option<NetworkClassSpec>,
    pub measured_sup_error: Option<f64>,
    pub measured_nonzeros: Option<usize>,
    pub measured_magnitude: Option<f64>,
}

/// Approximator plus metadata.
#[derive(Clone, Debug)]
pub struct Approximation {
    pub expansion: BumpExpansion,
    pub report: ApproxReport,
}

impl Approximation {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.expansion.eval(x)
    }

    /// Fills the measured fields of the report from structure and `sup_error`.
    pub fn record_measurements(&mut self, sup_error: f64) {
        let s = self.expansion.structure();
        self.report.measured_sup_error = Some(sup_error);
        self.report.measured_nonzeros = Some(s.nonzeros);
        self.report.measured_magnitude = Some(s.magnitude);
    }

    pub fn conformance(&self, sampled_sup: f64) -> Option<ConformanceReport> {
        self.report.declared.as_ref().map(|d| self.expansion.conformance(d, sampled_sup))
    }
}

/// Points per axis for a Lipschitz target: `ceil(4√d γ L / ε) + 1`, at least 2.
pub fn grid_per_axis(dim: usize, gamma: f64, lipschitz: f64, eps: f64) -> usize {
    let n = (4.0 * (dim as f64).sqrt() * gamma * lipschitz / eps).ceil() + 1.0;
    if n.is_finite() {
        (n as usize).max(2)
    } else {
        usize::MAX
    }
}

struct Plan {
    per_axis: usize,
    grid_points: f64,
    eps_prod: f64,
}

fn plan(domain: &Cube, lipschitz: f64, sup: f64, eps: f64) -> Result<Plan> {
    if !(eps > 0.0) {
        return invalid(format!("tolerance must be positive, got {eps}"));
    }
    if !(lipschitz >= 0.0 && sup >= 0.0) {
        return invalid("declared bounds must be nonnegative");
    }
    let d = domain.dim;
    let per_axis = grid_per_axis(d, domain.half_width(), lipschitz, eps);
    let grid_points = (per_axis as f64).powi(d as i32);
    let eps_prod = if sup > 0.0 { eps / (2.0 * d as f64 * grid_points * sup) } else { 0.1 / d as f64 };
    Ok(Plan { per_axis, grid_points, eps_prod })
}

fn aggregate_budget(layout: &BumpLayout, coef_sup: f64, eps: f64) -> Option<NetworkClassSpec> {
    let bump = layout.bump_budget();
    let g = layout.grid.size();
    if g * bump.nonzeros as f64 > usize::MAX as f64 / 2.0 {
        return None;
    }
    let g = layout.grid.len();
    let m2 = layout.spec.product_bound.powi(2);
    Some(NetworkClassSpec {
        d_in: layout.input_dim(),
        d_out: 1,
        depth: bump.depth,
        width: bump.width * g,
        nonzeros: bump.nonzeros * g,
        magnitude: bump.magnitude.max(coef_sup * m2.max(1.0)),
        output_bound: coef_sup + eps,
    })
}

fn assemble(
    kind: &str,
    domain: Cube,
    lipschitz: f64,
    sup: f64,
    eps: f64,
    grid_cap: Option<usize>,
    dense_cap: usize,
    encoder: Option<Vec<Vec<f64>>>,
    target: ScalarFn,
) -> Result<Approximation> {
    let p = plan(&domain, lipschitz, sup, eps)?;
    if let Some(cap) = grid_cap {
        if p.grid_points > cap as f64 {
            return Err(Error::SizeCap { what: format!("{kind} grid points"), requested: p.grid_points, cap: cap as f64 });
        }
    }
    let grid_dim = domain.dim;
    let layout = BumpLayout::new(domain, p.per_axis, p.eps_prod, encoder)?;
    let coefficients = if p.grid_points <= dense_cap as f64 {
        let grid = &layout.grid;
        Coefficients::Dense((0..grid.len()).into_par_iter().map(|k| target(&grid.point(k))).collect())
    } else {
        Coefficients::Lazy(target)
    };
    let report = ApproxReport {
        kind: kind.to_string(),
        eps,
        input_dim: layout.input_dim(),
        grid_dim,
        per_axis: p.per_axis,
        grid_points: p.grid_points,
        cover_size: None,
        b_u: None,
        target_lipschitz: lipschitz,
        target_sup: sup,
        bump: layout.spec.clone(),
        bump_budget: layout.bump_budget(),
        declared: aggregate_budget(&layout, sup, eps),
        measured_sup_error: None,
        measured_nonzeros: None,
        measured_magnitude: None,
    };
    Ok(Approximation { expansion: BumpExpansion { layout, coefficients }, report })
}

/// `Σ_k u(c_k) q_k` over the uniform grid with
/// `N = ceil(4√d₁ γ₁ L_U / ε) + 1` points per axis.
pub fn build_function_approximator(u: &FunctionOracle, eps: f64, caps: &SizeCaps) -> Result<Approximation> {
    let f = u.function();
    assemble(
        "function",
        u.domain.clone(),
        u.lipschitz,
        u.sup_bound,
        eps,
        Some(caps.max_grid),
        caps.max_dense_coefficients.max(caps.max_grid),
        None,
        f,
    )
}

/// Largest cover radius for which the functional construction meets `eps`.
pub fn required_cover_radius(family: &InputFamily, f: &FunctionalOracle, eps: f64) -> f64 {
    let vol_root = family.domain.volume().sqrt();
    eps / (2.0 * vol_root * f.lipschitz * family.lipschitz)
}

/// `[u(c_1), ..., u(c_M)]` at the cover centers.
pub fn sample_on_cover(cover: &Cover, u: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    cover.centers.iter().map(|c| u(c)).collect()
}

/// Approximates `f` on `family` through the values of `u` at the cover
/// centers: `g(z) = f(Σ_m z_m ω_m)` is approximated on `[-β_U, β_U]^{c_U}`
/// with tolerance `eps / 2`.
pub fn build_functional_approximator(
    f: &FunctionalOracle,
    family: &InputFamily,
    cover: &Cover,
    eps: f64,
    caps: &SizeCaps,
) -> Result<Approximation> {
    check_dim(family.domain.dim, cover.dim())?;
    let needed = required_cover_radius(family, f, eps);
    if cover.radius > needed * (1.0 + 1e-12) {
        return invalid(format!("cover radius {} exceeds the admissible {needed}", cover.radius));
    }
    let c_u = cover.len();
    if c_u > caps.max_cover {
        return Err(Error::SizeCap { what: "cover size".into(), requested: c_u as f64, cap: caps.max_cover as f64 });
    }
    if !verify_cover(cover, 10_000, 0).passed {
        return invalid("cover does not cover its domain");
    }
    let beta = family.sup_bound.max(1e-9);
    let domain = Cube::symmetric(beta, c_u)?;
    let lip = f.lipschitz * family.domain.volume().sqrt();
    let cover_c = cover.clone();
    let fc = f.clone();
    let target: ScalarFn = Arc::new(move |z: &[f64]| {
        fc.eval(&|x: &[f64]| match shepard_weights(&cover_c, x) {
            Ok(w) => w.iter().zip(z).map(|(a, b)| a * b).sum(),
            Err(_) => 0.0,
        })
    });
    let mut approx = assemble(
        "functional",
        domain,
        lip,
        f.sup_bound,
        eps / 2.0,
        Some(caps.max_functional_grid),
        caps.max_dense_coefficients,
        None,
        target,
    )?;
    approx.report.eps = eps;
    approx.report.cover_size = Some(c_u);
    if let Some(d) = approx.report.declared.as_mut() {
        d.output_bound = f.sup_bound + eps;
    }
    Ok(approx)
}

/// Coefficient box half-width `(2γ₁)^{d₁/2} β_U` of the low-dimensional construction.
pub fn coefficient_box(encoding: &QuadratureEncoding, input_sup: f64) -> f64 {
    encoding.basis.domain.volume().sqrt() * input_sup
}

/// Approximates `f` on span inputs through the encoder `A`:
/// `g(z) = f(Σ_m z_m ω_m)` is approximated on the coefficient box and the
/// network input is `ũ` on the encoding grid.
pub fn build_functional_approximator_lowdim(
    f: &FunctionalOracle,
    encoding: &QuadratureEncoding,
    input_sup: f64,
    eps: f64,
    caps: &SizeCaps,
) -> Result<Approximation> {
    let err = encoding.recovery_error();
    if !(err <= 1e-8) {
        return Err(Error::Encoding(format!("encoder recovers coefficients only to {err:.3e}")));
    }
    let b_u = encoding.b_u();
    let half = coefficient_box(encoding, input_sup).max(1e-9);
    let domain = Cube::symmetric(half, b_u)?;
    let basis = encoding.basis.clone();
    let fc = f.clone();
    let target: ScalarFn = Arc::new(move |z: &[f64]| fc.eval(&|x: &[f64]| basis.combine(z, x)));
    let mut approx = assemble(
        "functional-lowdim",
        domain,
        f.lipschitz,
        f.sup_bound,
        eps,
        None,
        caps.max_dense_coefficients,
        Some(encoding.matrix.clone()),
        target,
    )?;
    approx.report.b_u = Some(b_u);
    Ok(approx)
}

/// Sample points for sup-norm checks: at least `4(N-1)+1` points per axis
/// (several per bump piece) and at least `10⁴` in total, capped at `max_points`.
pub fn verification_points(domain: &Cube, per_axis: usize, max_points: usize) -> Vec<Vec<f64>> {
    let d = domain.dim as u32;
    let floor_total = (10_000f64).powf(1.0 / d as f64).ceil() as usize;
    let mut n = floor_total.max(4 * per_axis.saturating_sub(1) + 1);
    while n > 2 && (n as f64).powi(d as i32) > max_points as f64 {
        n -= 1;
    }
    domain.grid(n)
}

/// Largest `|target(x) - approx(x)|` and `|approx(x)|` over `points`.
pub fn sup_error(expansion: &BumpExpansion, target: &(dyn Fn(&[f64]) -> f64 + Sync), points: &[Vec<f64>]) -> (f64, f64) {
    points
        .par_iter()
        .map_init(Workspace::default, |ws, x| {
            let v = expansion.eval_with(x, ws);
            ((target(x) - v).abs(), v.abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

/// Deterministic test family: constants `±β`, ramps of slope `±L` along the
/// first axis, and `random` clamped sums of absolute-value ridges.
pub fn lipschitz_test_family(family: &InputFamily, random: usize, seed: u64) -> Vec<FunctionOracle> {
    let (dom, lip, beta) = (family.domain.clone(), family.lipschitz, family.sup_bound);
    let center = dom.center();
    let mut out = vec![
        FunctionOracle::new(move |_| beta, dom.clone(), 0.0, beta),
        FunctionOracle::new(move |_| -beta, dom.clone(), 0.0, beta),
        FunctionOracle::new(move |x| (lip * (x[0] - center)).clamp(-beta, beta), dom.clone(), lip, beta),
        FunctionOracle::new(move |x| (-lip * (x[0] - center)).clamp(-beta, beta), dom.clone(), lip, beta),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dom.dim;
    for _ in 0..random {
        let ridges = 3;
        let budget = lip * rng.gen_range(0.5..1.0);
        let mut raw: Vec<f64> = (0..ridges).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let total: f64 = raw.iter().map(|v: &f64| v.abs()).sum::<f64>().max(1e-12);
        raw.iter_mut().for_each(|v| *v *= budget / total);
        let dirs: Vec<Vec<f64>> = (0..ridges)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let offsets: Vec<f64> =
            (0..ridges).map(|_| rng.gen_range(-dom.half_width()..dom.half_width())).collect();
        let shift = rng.gen_range(-0.5 * beta..=0.5 * beta);
        let f = move |x: &[f64]| {
            let mut acc = shift;
            for i in 0..ridges {
                let proj: f64 = dirs[i].iter().zip(x).map(|(a, b)| a * (b - center)).sum();
                acc += raw[i] * (proj - offsets[i]).abs();
            }
            acc.clamp(-beta, beta)
        };
        out.push(FunctionOracle::new(f, dom.clone(), lip, beta));
    }
    out
}

/// Points of the tensor grid with `n` points per axis over `[-h, h]^d`.
pub fn local_grid(h: f64, dim: usize, n: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..n).map(|i| -h + 2.0 * h * i as f64 / (n - 1) as f64).collect();
    tensor_points(&axis, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis_quadrature::{build_encoding, fourier_basis, fourier_modes_1d};
    use crate::cover_pou::cover_hypercube;
    use crate::relu_net::conforms;

    #[test]
    fn psi_values() {
        let net = build_psi();
        assert_eq!(net.eval_scalar(&[0.0]).unwrap(), 1.0);
        assert_eq!(net.eval_scalar(&[3.0]).unwrap(), 0.0);
        assert_eq!(net.eval_scalar(&[1.5]).unwrap(), 0.5);
        for i in 0..=10_000 {
            let a = -4.0 + 8.0 * i as f64 / 10_000.0;
            assert!((net.eval_scalar(&[a]).unwrap() - psi(a)).abs() <= 1e-12);
        }
    }

    #[test]
    fn product_contract() {
        let net = build_product(1.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = rng.gen_range(-1.0..1.0);
            assert!(net.eval_scalar(&[x, 0.0]).unwrap().abs() <= 0.01);
            assert_eq!(net.eval_scalar(&[0.0, x]).unwrap(), 0.0);
        }
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            for j in 0..200 {
                let x = -1.0 + 2.0 * i as f64 / 199.0;
                let y = -1.0 + 2.0 * j as f64 / 199.0;
                worst = worst.max((net.eval_scalar(&[x, y]).unwrap() - x * y).abs());
            }
        }
        assert!(worst < 0.01, "{worst}");
        let fine = build_product(1.0, 0.001).unwrap();
        assert!(fine.depth() - net.depth() <= 8);
        assert!(build_product(1.0, 1.5).is_err());
        assert!(build_product(0.0, 0.1).is_err());
    }

    #[test]
    fn product_budget_matches_construction() {
        for (bound, eps) in [(1.0, 0.1), (2.5, 1e-4), (0.3, 0.05)] {
            let net = build_product(bound, eps).unwrap();
            let spec = product_budget(bound, product_stages(bound, eps));
            let probe = ProbeBox::cube(-bound, bound, 2, 2500);
            let r = conforms(&net, &spec, &probe);
            assert!(r.passed(), "{:?}", r.failures());
            assert_eq!(net.count_params(), spec.nonzeros);
        }
    }

    #[test]
    fn product_small_bound_meets_contract() {
        let (bound, eps) = (0.1, 0.5);
        let net = build_product(bound, eps).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let x = -bound + 2.0 * bound * i as f64 / 49.0;
                let y = -bound + 2.0 * bound * j as f64 / 49.0;
                assert!((net.eval_scalar(&[x, y]).unwrap() - x * y).abs() < eps);
            }
        }
    }

    #[test]
    fn one_dimensional_bump_is_exact() {
        let n = 11;
        let c = [0.4];
        let net = build_bump(&c, n, 1.0, 1e-3).unwrap();
        let s = 3.0 * (n - 1) as f64 / 2.0;
        for i in 0..=4000 {
            let x = -1.0 + i as f64 / 2000.0;
            assert!((net.eval_scalar(&[x]).unwrap() - tensor_bump(&c, s, &[x])).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_dimensional_bump_tracks_product_of_factors() {
        let n = 5;
        let c = [0.5, -0.5];
        let eps = 1e-3;
        let net = build_bump(&c, n, 1.0, eps).unwrap();
        let s = 3.0 * (n - 1) as f64 / 2.0;
        assert!((net.eval_scalar(&c).unwrap() - 1.0).abs() <= 2.0 * eps);
        let mut worst: f64 = 0.0;
        for p in Cube::symmetric(1.0, 2).unwrap().grid(200) {
            worst = worst.max((net.eval_scalar(&p).unwrap() - tensor_bump(&c, s, &p)).abs());
        }
        assert!(worst <= 2.0 * eps, "{worst}");
    }

    #[test]
    fn bumps_vanish_exactly_off_support() {
        for d in 1..=3 {
            let net = build_bump(&vec![0.0; d], 9, 1.0, 1e-4).unwrap();
            let mut far = vec![0.0; d];
            far[d - 1] = 0.9;
            assert_eq!(net.eval_scalar(&far).unwrap(), 0.0);
            far[0] = -0.95;
            assert_eq!(net.eval_scalar(&far).unwrap(), 0.0);
        }
    }

    #[test]
    fn bump_budget_formulas_hold() {
        for d in 1..=4 {
            for (n, eps) in [(3, 1e-2), (7, 1e-6)] {
                let dom = Cube::symmetric(1.0, d).unwrap();
                let layout = BumpLayout::new(dom, n, eps, None).unwrap();
                let budget = layout.bump_budget();
                let probe = ProbeBox::cube(-1.0, 1.0, d, 20_000);
                for k in [0, layout.grid.len() / 2, layout.grid.len() - 1] {
                    let r = conforms(&layout.bump_network(k), &budget, &probe);
                    assert!(r.passed(), "d={d} n={n}: {:?}", r.failures());
                }
                assert_eq!(layout.template().depth(), budget.depth);
                assert_eq!(layout.template().max_width(), budget.width);
            }
        }
    }

    #[test]
    fn partition_of_unity_from_networks() {
        for d in 1..=2 {
            let dom = Cube::symmetric(1.0, d).unwrap();
            let layout = BumpLayout::new(dom.clone(), 6, 1e-3, None).unwrap();
            let s = layout.spec.scale;
            let mut ws = Workspace::default();
            for x in dom.grid(if d == 1 { 5000 } else { 150 }) {
                let exact: f64 =
                    (0..layout.grid.len()).map(|k| tensor_bump(&layout.grid.point(k), s, &x)).sum();
                assert!((exact - 1.0).abs() <= 1e-12);
                let active = layout.active(&x, &mut ws);
                let direct: f64 = (0..layout.grid.len()).map(|k| layout.bump_value(k, &x, &mut ws)).sum();
                let sparse: f64 = active.iter().map(|p| p.1).sum();
                assert!((direct - sparse).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn sparse_evaluation_matches_materialized_network() {
        let dom = Cube::symmetric(1.0, 2).unwrap();
        let u = FunctionOracle::new(|x| 0.5 * x[0] - 0.25 * x[1].abs(), dom.clone(), 0.6, 0.75);
        let approx = build_function_approximator(&u, 0.9, &SizeCaps::default()).unwrap();
        let net = approx.expansion.to_network(50_000_000).unwrap();
        let s = approx.expansion.structure();
        assert_eq!(net.depth(), s.depth);
        assert_eq!(net.max_width(), s.width);
        assert_eq!(net.count_params(), s.nonzeros);
        assert_eq!(net.max_abs_param(), s.magnitude);
        for x in dom.grid(40) {
            assert!((net.eval_scalar(&x).unwrap() - approx.eval(&x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn function_approximator_examples() {
        let dom = Cube::symmetric(1.0, 1).unwrap();
        let caps = SizeCaps::default();
        let zero = FunctionOracle::new(|_| 0.0, dom.clone(), 0.0, 0.0);
        let a = build_function_approximator(&zero, 0.1, &caps).unwrap();
        assert!(matches!(&a.expansion.coefficients, Coefficients::Dense(v) if v.iter().all(|c| *c == 0.0)));
        let id = FunctionOracle::new(|x| x[0], dom.clone(), 1.0, 1.0);
        let mut a = build_function_approximator(&id, 0.1, &caps).unwrap();
        assert_eq!(a.report.per_axis, 41);
        let pts = verification_points(&dom, a.report.per_axis, 1_000_000);
        assert!(pts.len() >= 10_000);
        let (err, sup) = sup_error(&a.expansion, &|x| x[0], &pts);
        assert!(err <= 0.1, "{err}");
        a.record_measurements(err);
        let report = a.conformance(sup).unwrap();
        assert!(report.passed(), "{:?}", report.failures());
        assert!(a.report.measured_nonzeros.unwrap() <= a.report.declared.as_ref().unwrap().nonzeros);
    }

    #[test]
    fn halving_eps_doubles_grid() {
        let dom = Cube::symmetric(1.0, 1).unwrap();
        let caps = SizeCaps::default();
        let u = FunctionOracle::new(|x| x[0].sin(), dom, 1.0, 1.0);
        let mut prev: Option<i64> = None;
        for eps in [0.2, 0.1, 0.05, 0.025] {
            let n = build_function_approximator(&u, eps, &caps).unwrap().report.per_axis as i64;
            if let Some(p) = prev {
                assert!(((n - 1) - 2 * (p - 1)).abs() <= 1);
            }
            prev = Some(n);
        }
    }

    #[test]
    fn oversized_grid_is_refused() {
        let dom = Cube::symmetric(1.0, 3).unwrap();
        let u = FunctionOracle::new(|x| x[0], dom, 1.0, 1.0);
        let caps = SizeCaps { max_grid: 1000, ..SizeCaps::default() };
        assert!(matches!(build_function_approximator(&u, 0.05, &caps), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn functional_average_on_small_family() {
        let dom = Cube::symmetric(1.0, 1).unwrap();
        let family = InputFamily { domain: dom.clone(), lipschitz: 0.25, sup_bound: 0.5 };
        let f = FunctionalOracle::average(&dom, family.sup_bound);
        let eps = 0.25;
        let cover = cover_hypercube(1.0, 1, required_cover_radius(&family, &f, eps)).unwrap();
        let approx = build_functional_approximator(&f, &family, &cover, eps, &SizeCaps::default()).unwrap();
        for u in lipschitz_test_family(&family, 10, 3) {
            let z = sample_on_cover(&cover, &|x| u.eval(x));
            let err = (f.eval_oracle(&u) - approx.eval(&z).unwrap()).abs();
            assert!(err <= eps, "{err}");
        }
    }

    #[test]
    fn constant_functional() {
        let dom = Cube::symmetric(1.0, 1).unwrap();
        let family = InputFamily { domain: dom.clone(), lipschitz: 1.0, sup_bound: 1.0 };
        let f = FunctionalOracle::constant(0.7);
        let cover = cover_hypercube(1.0, 1, 0.6).unwrap();
        let approx = build_functional_approximator(&f, &family, &cover, 0.1, &SizeCaps::default()).unwrap();
        for u in lipschitz_test_family(&family, 10, 4) {
            let z = sample_on_cover(&cover, &|x| u.eval(x));
            assert!((approx.eval(&z).unwrap() - 0.7).abs() <= 0.1);
        }
    }

    #[test]
    fn large_cover_is_refused() {
        let dom = Cube::symmetric(1.0, 1).unwrap();
        let family = InputFamily { domain: dom.clone(), lipschitz: std::f64::consts::PI, sup_bound: 1.0 };
        let f = FunctionalOracle::integral(&dom, 1.0);
        let eps = 0.25;
        let cover = cover_hypercube(1.0, 1, required_cover_radius(&family, &f, eps)).unwrap();
        let r = build_functional_approximator(&f, &family, &cover, eps, &SizeCaps::default());
        assert!(matches!(r, Err(Error::SizeCap { .. })));
        let coarse = cover_hypercube(1.0, 1, 1.0).unwrap();
        assert!(build_functional_approximator(&f, &family, &coarse, eps, &SizeCaps::default()).is_err());
    }

    #[test]
    fn lowdim_linear_functional_and_annihilation() {
        let basis = fourier_basis(1, 1.0, fourier_modes_1d(2)).unwrap();
        let enc = build_encoding(&basis).unwrap();
        let f = FunctionalOracle::basis_coefficient(&basis, 0, 4.0);
        let eps = 0.2;
        let approx = build_functional_approximator_lowdim(&f, &enc, 2.0, eps, &SizeCaps::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let alpha = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let ut = enc.sample(&|x| basis.combine(&alpha, x));
            let out = approx.eval(&ut).unwrap();
            assert!((out - alpha[0]).abs() <= eps);
            let shifted: Vec<f64> = ut.iter().map(|v| v + 0.3).collect();
            assert!((approx.eval(&shifted).unwrap() - out).abs() <= 1e-10);
        }
        let zero = approx.eval(&vec![0.0; enc.n_x()]).unwrap();
        assert!(zero.abs() <= eps);
    }
}
