//! Dense feedforward ReLU networks: evaluation, composition, conformance
//! checks against a network class, and reverse-mode gradients.
//!
//! A network with layers `(W_1, b_1), ..., (W_L, b_L)` computes
//! `W_L relu(W_{L-1} ... relu(W_1 x + b_1) ... + b_{L-1}) + b_L`.
//! Weights are stored row-major with shape `(out, in)`.

use serde::{Deserialize, Serialize};

use crate::domain::tensor_points;
use crate::error::{check_dim, invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("layer dimensions must be at least 1");
        }
        check_dim(rows * cols, weights.len())?;
        check_dim(rows, bias.len())?;
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return invalid("layer entries must be finite");
        }
        Ok(Self { rows, cols, weights, bias })
    }

    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return invalid("ragged weight rows");
        }
        Self::new(r, c, rows.concat(), bias)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols], vec![0.0; rows])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    fn nonzeros(&self) -> usize {
        self.weights.iter().chain(self.bias.iter()).filter(|v| **v != 0.0).count()
    }

    fn max_abs(&self) -> f64 {
        self.weights.iter().chain(self.bias.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `out = W x + bias`.
    fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc + bias[r]);
        }
    }

    /// `self ∘ inner` as a single affine map (no activation in between).
    fn after(&self, inner: &Layer) -> Layer {
        let (rows, mid, cols) = (self.rows, self.cols, inner.cols);
        let mut weights = vec![0.0; rows * cols];
        let mut bias = self.bias.clone();
        for r in 0..rows {
            for k in 0..mid {
                let a = self.weights[r * mid + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..cols {
                    weights[r * cols + c] += a * inner.weights[k * cols + c];
                }
                bias[r] += a * inner.bias[k];
            }
        }
        Layer { rows, cols, weights, bias }
    }
}

/// A feedforward ReLU network. Immutable once built; evaluation is read-only.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerRepr>,
}

impl Serialize for ReluNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = NetworkRepr {
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    weights: l.weights.chunks(l.cols).map(|r| r.to_vec()).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReluNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = NetworkRepr::deserialize(d)?;
        let layers = repr
            .layers
            .into_iter()
            .map(|l| Layer::from_rows(&l.weights, l.bias))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let net = ReluNetwork::new(layers).map_err(serde::de::Error::custom)?;
        if net.input_dim() != repr.input_dim || net.output_dim() != repr.output_dim {
            return Err(serde::de::Error::custom("recorded dimensions disagree with layers"));
        }
        Ok(net)
    }
}

/// Reusable buffers for allocation-free evaluation.
#[derive(Default, Clone, Debug)]
pub struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Pre-activations of every layer from one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }

    /// Signs of hidden pre-activations, used to detect kink crossings.
    pub fn pattern(&self) -> Vec<bool> {
        let hidden = &self.pre[..self.pre.len() - 1];
        hidden.iter().flat_map(|z| z.iter().map(|v| *v > 0.0)).collect()
    }
}

/// Gradient buffers with the same shape as a network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl NetGradient {
    pub fn zeros_like(net: &ReluNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NetGradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }
}

impl ReluNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("a network needs at least one layer");
        }
        for pair in layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(Error::DimensionMismatch { expected: pair[0].rows, got: pair[1].cols });
            }
        }
        Ok(Self { layers })
    }

    /// A single affine layer `x -> W x + b`.
    pub fn affine(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        Self::new(vec![Layer::from_rows(rows, bias)?])
    }

    /// Identity on `R^dim` realized with depth `depth`, using the pair
    /// `t = relu(t) - relu(-t)` when `depth >= 2`.
    pub fn identity(dim: usize, depth: usize) -> Result<Self> {
        if dim == 0 || depth == 0 {
            return invalid("identity needs positive dimension and depth");
        }
        let eye = |n: usize| {
            let mut w = vec![0.0; n * n];
            for i in 0..n {
                w[i * n + i] = 1.0;
            }
            w
        };
        if depth == 1 {
            return Self::new(vec![Layer::new(dim, dim, eye(dim), vec![0.0; dim])?]);
        }
        let mut first = vec![0.0; 2 * dim * dim];
        let mut last = vec![0.0; 2 * dim * dim];
        for i in 0..dim {
            first[i * dim + i] = 1.0;
            first[(dim + i) * dim + i] = -1.0;
            last[i * 2 * dim + i] = 1.0;
            last[i * 2 * dim + dim + i] = -1.0;
        }
        let mut layers = vec![Layer::new(2 * dim, dim, first, vec![0.0; 2 * dim])?];
        for _ in 0..depth - 2 {
            layers.push(Layer::new(2 * dim, 2 * dim, eye(2 * dim), vec![0.0; 2 * dim])?);
        }
        layers.push(Layer::new(dim, 2 * dim, last, vec![0.0; dim])?);
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// Largest hidden width; the output width when there is no hidden layer.
    pub fn max_width(&self) -> usize {
        let hidden = &self.layers[..self.layers.len() - 1];
        hidden.iter().map(|l| l.rows).max().unwrap_or_else(|| self.output_dim())
    }

    /// Number of strictly nonzero weights and biases.
    pub fn count_params(&self) -> usize {
        self.layers.iter().map(Layer::nonzeros).sum()
    }

    /// Total number of stored entries, zero or not.
    pub fn dense_len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers.iter().map(Layer::max_abs).fold(0.0, f64::max)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut ws = Workspace::default();
        Ok(self.run(x, None, &mut ws).to_vec())
    }

    /// Scalar-output convenience wrapper around [`forward`](Self::forward).
    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64> {
        check_dim(1, self.output_dim())?;
        Ok(self.forward(x)?[0])
    }

    /// Evaluates with caller-owned buffers. Panics on dimension mismatch.
    pub fn forward_with<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        self.run(x, None, ws)
    }

    /// Evaluates with the first-layer bias replaced by `first_bias`.
    /// Identical arithmetic to evaluating the network whose first bias was
    /// overwritten, without building it.
    pub fn forward_with_first_bias<'w>(
        &self,
        x: &[f64],
        first_bias: &[f64],
        ws: &'w mut Workspace,
    ) -> &'w [f64] {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        assert_eq!(first_bias.len(), self.layers[0].rows, "first bias length");
        self.run(x, Some(first_bias), ws)
    }

    fn run<'w>(&self, x: &[f64], first_bias: Option<&[f64]>, ws: &'w mut Workspace) -> &'w [f64] {
        let Workspace { a, b } = ws;
        let first = &self.layers[0];
        first.affine_into(x, first_bias.unwrap_or(&first.bias), a);
        for layer in &self.layers[1..] {
            a.iter_mut().for_each(|v| *v = v.max(0.0));
            layer.affine_into(a, &layer.bias, b);
            std::mem::swap(a, b);
        }
        a
    }

    /// Forward pass that keeps every pre-activation for [`backward`](Self::backward).
    pub fn trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z = Vec::new();
        self.layers[0].affine_into(x, &self.layers[0].bias, &mut z);
        pre.push(z);
        for layer in &self.layers[1..] {
            let h: Vec<f64> = pre.last().unwrap().iter().map(|v: &f64| v.max(0.0)).collect();
            let mut z = Vec::new();
            layer.affine_into(&h, &layer.bias, &mut z);
            pre.push(z);
        }
        Trace { input: x.to_vec(), pre }
    }

    /// Accumulates `d(out . grad_out)/d(params)` into `grad`. The ReLU
    /// derivative at 0 is taken as 0.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad: &mut NetGradient) {
        assert_eq!(grad_out.len(), self.output_dim(), "output gradient length");
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input: Vec<f64> = if l == 0 {
                trace.input.clone()
            } else {
                trace.pre[l - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let gw = &mut grad.weights[l];
            for r in 0..layer.rows {
                let d = delta[r];
                grad.bias[l][r] += d;
                if d != 0.0 {
                    for c in 0..layer.cols {
                        gw[r * layer.cols + c] += d * input[c];
                    }
                }
            }
            if l > 0 {
                let mut next = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    for c in 0..layer.cols {
                        next[c] += d * layer.weights[r * layer.cols + c];
                    }
                }
                for (n, z) in next.iter_mut().zip(&trace.pre[l - 1]) {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
    }

    /// Number of stored parameters (dense), the layout used by flat views.
    pub fn flat_len(&self) -> usize {
        self.dense_len()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    /// Overwrites parameters from a flat slice; returns the count consumed.
    pub fn assign_flat(&mut self, flat: &[f64]) -> usize {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        k
    }

    /// `outer ∘ inner`, fusing inner's last affine map into outer's first.
    pub fn compose(outer: &ReluNetwork, inner: &ReluNetwork) -> Result<ReluNetwork> {
        check_dim(outer.input_dim(), inner.output_dim())?;
        let mut layers = inner.layers[..inner.layers.len() - 1].to_vec();
        layers.push(outer.layers[0].after(&inner.layers[inner.layers.len() - 1]));
        layers.extend_from_slice(&outer.layers[1..]);
        ReluNetwork::new(layers)
    }

    /// Same function with depth increased to `depth` by appending identity pairs.
    pub fn pad_to_depth(&self, depth: usize) -> Result<ReluNetwork> {
        if depth < self.depth() {
            return invalid(format!("cannot pad depth {} down to {depth}", self.depth()));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        let id = ReluNetwork::identity(self.output_dim(), depth - self.depth() + 1)?;
        ReluNetwork::compose(&id, self)
    }

    /// Block-diagonal stacking: input and output are the concatenations of the
    /// parts' inputs and outputs.
    pub fn stack(nets: &[ReluNetwork]) -> Result<ReluNetwork> {
        Self::combine(nets, false)
    }

    /// Parallel evaluation on a shared input with concatenated outputs.
    pub fn fan_out(nets: &[ReluNetwork]) -> Result<ReluNetwork> {
        Self::combine(nets, true)
    }

    fn combine(nets: &[ReluNetwork], shared_input: bool) -> Result<ReluNetwork> {
        if nets.is_empty() {
            return invalid("cannot combine an empty sequence of networks");
        }
        if shared_input {
            let d = nets[0].input_dim();
            for n in nets {
                check_dim(d, n.input_dim())?;
            }
        }
        let depth = nets.iter().map(|n| n.depth()).max().unwrap();
        let padded = nets.iter().map(|n| n.pad_to_depth(depth)).collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let parts: Vec<&Layer> = padded.iter().map(|n| &n.layers[l]).collect();
            let rows: usize = parts.iter().map(|p| p.rows).sum();
            let cols: usize = if l == 0 && shared_input {
                parts[0].cols
            } else {
                parts.iter().map(|p| p.cols).sum()
            };
            let mut weights = vec![0.0; rows * cols];
            let mut bias = Vec::with_capacity(rows);
            let (mut r0, mut c0) = (0, 0);
            for p in parts {
                for r in 0..p.rows {
                    for c in 0..p.cols {
                        weights[(r0 + r) * cols + c0 + c] = p.weights[r * p.cols + c];
                    }
                }
                bias.extend_from_slice(&p.bias);
                r0 += p.rows;
                if !(l == 0 && shared_input) {
                    c0 += p.cols;
                }
            }
            layers.push(Layer::new(rows, cols, weights, bias)?);
        }
        ReluNetwork::new(layers)
    }

    /// The network `x -> self(A x)`, with `A` fused into the first layer.
    pub fn prepend_linear(&self, a: &[Vec<f64>]) -> Result<ReluNetwork> {
        let lin = ReluNetwork::affine(a, vec![0.0; a.len()])?;
        ReluNetwork::compose(self, &lin)
    }

    /// First-layer bias of `x -> self(x - shift)`.
    pub fn shifted_first_bias(&self, shift: &[f64]) -> Vec<f64> {
        let l = &self.layers[0];
        assert_eq!(shift.len(), l.cols, "shift dimension");
        let mut bias = l.bias.clone();
        for r in 0..l.rows {
            let mut acc = 0.0;
            for c in 0..l.cols {
                acc += l.weights[r * l.cols + c] * shift[c];
            }
            bias[r] -= acc;
        }
        bias
    }

    /// The network `x -> self(x - shift)`.
    pub fn shift_input(&self, shift: &[f64]) -> ReluNetwork {
        let mut out = self.clone();
        out.layers[0].bias = self.shifted_first_bias(shift);
        out
    }

    /// Replaces the first-layer bias.
    pub fn with_first_bias(&self, bias: Vec<f64>) -> Result<ReluNetwork> {
        check_dim(self.layers[0].rows, bias.len())?;
        let mut out = self.clone();
        out.layers[0].bias = bias;
        Ok(out)
    }

    /// Multiplies the output by `s`.
    pub fn scale_output(&self, s: f64) -> ReluNetwork {
        let mut out = self.clone();
        let last = out.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= s);
        last.bias.iter_mut().for_each(|b| *b *= s);
        out
    }
}

/// Network computing `CL_a(t) = min(max(t, -a), a)` as
/// `-relu(-relu(t + a) + 2a) + a`.
pub fn clip_network(a: f64) -> Result<ReluNetwork> {
    if !(a >= 0.0) || !a.is_finite() {
        return invalid(format!("clip bound must be finite and nonnegative, got {a}"));
    }
    ReluNetwork::new(vec![
        Layer::new(1, 1, vec![1.0], vec![a])?,
        Layer::new(1, 1, vec![-1.0], vec![2.0 * a])?,
        Layer::new(1, 1, vec![-1.0], vec![a])?,
    ])
}

/// Scalar clip with the same value as [`clip_network`].
pub fn clip(t: f64, a: f64) -> f64 {
    -(-(t + a).max(0.0) + 2.0 * a).max(0.0) + a
}

/// Derivative of the clip network: 1 strictly inside `(-a, a)`, else 0.
pub fn clip_derivative(t: f64, a: f64) -> f64 {
    let h1 = t + a;
    let h2 = -h1.max(0.0) + 2.0 * a;
    if h1 > 0.0 && h2 > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Parameters introduced by depth padding in [`parallel_sum`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingReport {
    pub depth: usize,
    pub padded_branches: usize,
    pub padding_params: usize,
}

/// One network computing `Σ_k coefficients[k] * nets[k](x)`.
pub fn parallel_sum(nets: &[ReluNetwork], coefficients: &[f64]) -> Result<(ReluNetwork, PaddingReport)> {
    if nets.is_empty() {
        return invalid("parallel_sum needs at least one network");
    }
    check_dim(nets.len(), coefficients.len())?;
    for n in nets {
        check_dim(1, n.output_dim())?;
        check_dim(nets[0].input_dim(), n.input_dim())?;
    }
    let depth = nets.iter().map(|n| n.depth()).max().unwrap();
    let mut padding_params = 0;
    let mut padded_branches = 0;
    for n in nets {
        if n.depth() < depth {
            padded_branches += 1;
            padding_params += n.pad_to_depth(depth)?.count_params().saturating_sub(n.count_params());
        }
    }
    let wide = ReluNetwork::fan_out(nets)?;
    let sum = ReluNetwork::affine(&[coefficients.to_vec()], vec![0.0])?;
    let net = ReluNetwork::compose(&sum, &wide)?;
    Ok((net, PaddingReport { depth, padded_branches, padding_params }))
}

/// The class `(d_in, d_out, L, p, K, κ, R)` of networks with depth at most
/// `depth`, hidden width at most `width`, at most `nonzeros` nonzero
/// parameters, entries bounded by `magnitude` and outputs bounded by
/// `output_bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkClassSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub depth: usize,
    pub width: usize,
    pub nonzeros: usize,
    pub magnitude: f64,
    pub output_bound: f64,
}

impl NetworkClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 || self.depth == 0 || self.width == 0 || self.nonzeros == 0 {
            return invalid("class budgets must be positive");
        }
        if !(self.magnitude > 0.0 && self.output_bound > 0.0) {
            return invalid("magnitude and output bounds must be positive");
        }
        Ok(())
    }
}

/// Axis-aligned box used to probe output magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Upper bound on the number of grid points evaluated.
    pub max_points: usize,
}

impl ProbeBox {
    pub fn cube(lo: f64, hi: f64, dim: usize, max_points: usize) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim], max_points }
    }

    /// Tensor grid with as many points per axis as `max_points` allows.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        let mut n = ((self.max_points.max(2) as f64).powf(1.0 / d as f64)).floor() as usize;
        n = n.max(2);
        while n > 2 && n.pow(d as u32) > self.max_points.max(2usize.pow(d as u32)) {
            n -= 1;
        }
        let unit: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        tensor_points(&unit, d)
            .into_iter()
            .map(|t| t.iter().enumerate().map(|(j, s)| self.lo[j] + s * (self.hi[j] - self.lo[j])).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub budget: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, budget: f64) -> Self {
        Self { name: name.to_string(), measured, budget, passed: measured <= budget }
    }

    pub fn equal(name: &str, measured: f64, budget: f64) -> Self {
        Self { name: name.to_string(), measured, budget, passed: measured == budget }
    }
}

/// Result of [`conforms`]; each check passes or fails on its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Structural checks only (everything except the sampled output bound).
pub fn structural_checks(net: &ReluNetwork, spec: &NetworkClassSpec) -> Vec<Check> {
    vec![
        Check::equal("d_in", net.input_dim() as f64, spec.d_in as f64),
        Check::equal("d_out", net.output_dim() as f64, spec.d_out as f64),
        Check::at_most("depth", net.depth() as f64, spec.depth as f64),
        Check::at_most("width", net.max_width() as f64, spec.width as f64),
        Check::at_most("nonzeros", net.count_params() as f64, spec.nonzeros as f64),
        Check::at_most("magnitude", net.max_abs_param(), spec.magnitude),
    ]
}

/// Checks `net` against every budget of `spec`; the output bound is
/// certified by sampling `probe`.
pub fn conforms(net: &ReluNetwork, spec: &NetworkClassSpec, probe: &ProbeBox) -> ConformanceReport {
    let mut checks = structural_checks(net, spec);
    let sup = if probe.lo.len() == net.input_dim() {
        let mut ws = Workspace::default();
        probe
            .points()
            .iter()
            .map(|x| net.forward_with(x, &mut ws).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0f64, f64::max)
    } else {
        f64::INFINITY
    };
    checks.push(Check::at_most("output_bound", sup, spec.output_bound));
    ConformanceReport { checks }
}
