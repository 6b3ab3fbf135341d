//! DeepONet models `CL_β(Σ_k a_k(ũ) q_k(y))`: trainable dense instances
//! with exact gradients, and operators assembled from explicit bump
//! constructions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_builder::{grid_per_axis, BumpLayout, ScalarFn};
use crate::basis_quadrature::QuadratureEncoding;
use crate::domain::Cube;
use crate::error::{check_dim, invalid, Error, Result};
use crate::problems::ProblemSetup;
use crate::relu_net::{clip, clip_derivative, parallel_sum, Layer, NetGradient, NetworkClassSpec, ReluNetwork, Trace, Workspace};

/// Where the branch input `ũ` is sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDescriptor {
    /// `quadrature` (encoding grid) or `cover` (cover centers).
    pub kind: String,
    pub points: Vec<Vec<f64>>,
}

/// Anything that maps a sampled input function and output points to values.
pub trait OperatorModel: Sync {
    fn input_dim(&self) -> usize;
    fn predict(&self, input: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetModel {
    pub branches: Vec<ReluNetwork>,
    pub trunks: Vec<ReluNetwork>,
    pub clip: f64,
    pub input: InputDescriptor,
}

/// Gradient of the training loss in the flat parameter layout of
/// [`DeepOnetModel::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientRecord {
    pub values: Vec<f64>,
}

/// One supervised value `v ≈ G(u_input)(point)`.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub input: usize,
    pub point: &'a [f64],
    pub value: f64,
}

/// Shapes of a trainable model: dense branch and trunk nets of the given
/// depth and width, `pairs` of them, clipped at `clip`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainableArch {
    pub branch: NetworkClassSpec,
    pub trunk: NetworkClassSpec,
    pub pairs: usize,
    pub clip: f64,
}

impl TrainableArch {
    /// Dense nets with `depth` affine maps and hidden width `width`.
    pub fn dense(input_dim: usize, output_dim: usize, pairs: usize, depth: usize, width: usize, clip: f64) -> Self {
        let spec = |d_in: usize| NetworkClassSpec {
            d_in,
            d_out: 1,
            depth,
            width,
            nonzeros: dense_count(d_in, depth, width),
            magnitude: f64::INFINITY,
            output_bound: f64::INFINITY,
        };
        Self { branch: spec(input_dim), trunk: spec(output_dim), pairs, clip }
    }

    pub fn param_count(&self) -> usize {
        self.pairs
            * (dense_count(self.branch.d_in, self.branch.depth, self.branch.width)
                + dense_count(self.trunk.d_in, self.trunk.depth, self.trunk.width))
    }
}

fn dense_count(d_in: usize, depth: usize, width: usize) -> usize {
    if depth == 1 {
        return d_in + 1;
    }
    (d_in + 1) * width + (depth - 2) * (width + 1) * width + width + 1
}

fn dense_net(spec: &NetworkClassSpec, rng: &mut ChaCha8Rng, zero_last: bool) -> Result<ReluNetwork> {
    if spec.depth == 0 || spec.width == 0 {
        return invalid("depth and width must be positive");
    }
    let mut dims = vec![spec.d_in];
    dims.extend(std::iter::repeat(spec.width).take(spec.depth - 1));
    dims.push(spec.d_out);
    let mut layers = Vec::with_capacity(spec.depth);
    for (l, w) in dims.windows(2).enumerate() {
        let (fan_in, rows) = (w[0], w[1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive variance");
        let weights: Vec<f64> = if zero_last && l == spec.depth - 1 {
            vec![0.0; rows * fan_in]
        } else {
            (0..rows * fan_in).map(|_| normal.sample(rng)).collect()
        };
        layers.push(Layer::new(rows, fan_in, weights, vec![0.0; rows])?);
    }
    ReluNetwork::new(layers)
}

/// Dense model with He-scaled Gaussian weights and zero biases. With
/// `zero_last` the final layer of every net starts at zero.
pub fn init_trainable(arch: &TrainableArch, input: InputDescriptor, seed: u64, zero_last: bool) -> Result<DeepOnetModel> {
    if arch.pairs == 0 {
        return invalid("a DeepONet needs at least one branch/trunk pair");
    }
    check_dim(arch.branch.d_in, input.points.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branches = (0..arch.pairs).map(|_| dense_net(&arch.branch, &mut rng, zero_last)).collect::<Result<_>>()?;
    let trunks = (0..arch.pairs).map(|_| dense_net(&arch.trunk, &mut rng, zero_last)).collect::<Result<_>>()?;
    DeepOnetModel::new(branches, trunks, arch.clip, input)
}

struct Pass {
    branch: Vec<Vec<Trace>>,
    trunk: Vec<Vec<Trace>>,
    sums: Vec<f64>,
}

impl DeepOnetModel {
    pub fn new(branches: Vec<ReluNetwork>, trunks: Vec<ReluNetwork>, clip: f64, input: InputDescriptor) -> Result<Self> {
        if branches.is_empty() || branches.len() != trunks.len() {
            return invalid("branch and trunk counts must be equal and positive");
        }
        if !(clip >= 0.0) {
            return invalid(format!("clip bound must be nonnegative, got {clip}"));
        }
        for (b, t) in branches.iter().zip(&trunks) {
            check_dim(branches[0].input_dim(), b.input_dim())?;
            check_dim(trunks[0].input_dim(), t.input_dim())?;
            check_dim(1, b.output_dim())?;
            check_dim(1, t.output_dim())?;
        }
        check_dim(branches[0].input_dim(), input.points.len())?;
        Ok(Self { branches, trunks, clip, input })
    }

    pub fn pairs(&self) -> usize {
        self.branches.len()
    }

    pub fn output_dim(&self) -> usize {
        self.trunks[0].input_dim()
    }

    /// `Σ_k a_k(ũ) q_k(y)` before clipping.
    pub fn pre_clip(&self, input: &[f64], point: &[f64]) -> Result<f64> {
        check_dim(self.branches[0].input_dim(), input.len())?;
        check_dim(self.output_dim(), point.len())?;
        let mut ws = Workspace::default();
        let a: Vec<f64> = self.branches.iter().map(|b| b.forward_with(input, &mut ws)[0]).collect();
        Ok(self.trunks.iter().zip(&a).map(|(t, ak)| ak * t.forward_with(point, &mut ws)[0]).sum())
    }

    pub fn evaluate(&self, input: &[f64], point: &[f64]) -> Result<f64> {
        Ok(clip(self.pre_clip(input, point)?, self.clip))
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().chain(&self.trunks).map(|n| n.flat_len()).sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.branches.iter().chain(&self.trunks).map(|n| n.count_params()).sum()
    }

    pub fn max_abs_param(&self) -> f64 {
        self.branches.iter().chain(&self.trunks).map(|n| n.max_abs_param()).fold(0.0, f64::max)
    }

    /// Branch parameters first, then trunk parameters, each net in layer order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for n in self.branches.iter().chain(&self.trunks) {
            n.flatten_into(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.param_count(), flat.len())?;
        let mut k = 0;
        for n in self.branches.iter_mut().chain(self.trunks.iter_mut()) {
            k += n.assign_flat(&flat[k..]);
        }
        Ok(())
    }

    /// Clamps every parameter to `[-kappa, kappa]`.
    pub fn clamp_params(&mut self, kappa: f64) {
        for n in self.branches.iter_mut().chain(self.trunks.iter_mut()) {
            for l in n.layers_mut() {
                l.weights_mut().iter_mut().for_each(|w| *w = w.clamp(-kappa, kappa));
                l.bias_mut().iter_mut().for_each(|b| *b = b.clamp(-kappa, kappa));
            }
        }
    }

    /// Multiplies the last layer of every branch net by `s`.
    pub fn scale_branches(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.branches = self.branches.iter().map(|b| b.scale_output(s)).collect();
        out
    }

    fn check_queries(&self, inputs: &[Vec<f64>], queries: &[Query]) -> Result<()> {
        if queries.is_empty() {
            return invalid("loss needs a nonempty batch");
        }
        for u in inputs {
            check_dim(self.branches[0].input_dim(), u.len())?;
        }
        for q in queries {
            if q.input >= inputs.len() {
                return invalid(format!("query refers to input {} of {}", q.input, inputs.len()));
            }
            check_dim(self.output_dim(), q.point.len())?;
        }
        Ok(())
    }

    fn forward_pass(&self, input: &[f64], points: &[&[f64]]) -> Pass {
        let branch: Vec<Vec<Trace>> = vec![self.branches.iter().map(|b| b.trace(input)).collect()];
        let trunk: Vec<Vec<Trace>> = points.iter().map(|y| self.trunks.iter().map(|t| t.trace(y)).collect()).collect();
        let sums = trunk
            .iter()
            .map(|ts| ts.iter().zip(&branch[0]).map(|(t, b)| b.output()[0] * t.output()[0]).sum())
            .collect();
        Pass { branch, trunk, sums }
    }

    /// Mean squared loss over the queries and its exact gradient. Work is
    /// split into fixed chunks of inputs and reduced in order, so the result
    /// does not depend on the thread count.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], queries: &[Query]) -> Result<(f64, GradientRecord)> {
        self.check_queries(inputs, queries)?;
        let mut groups: BTreeMap<usize, Vec<&Query>> = BTreeMap::new();
        for q in queries {
            groups.entry(q.input).or_default().push(q);
        }
        let groups: Vec<(usize, Vec<&Query>)> = groups.into_iter().collect();
        let count = queries.len() as f64;
        let partials: Vec<(f64, Vec<NetGradient>)> = groups
            .par_chunks(8)
            .map(|chunk| {
                let mut grads: Vec<NetGradient> =
                    self.branches.iter().chain(&self.trunks).map(NetGradient::zeros_like).collect();
                let mut loss = 0.0;
                let n = self.pairs();
                for (i, qs) in chunk {
                    let pts: Vec<&[f64]> = qs.iter().map(|q| q.point).collect();
                    let pass = self.forward_pass(&inputs[*i], &pts);
                    let mut branch_grad = vec![0.0; n];
                    for (j, q) in qs.iter().enumerate() {
                        let s = pass.sums[j];
                        let r = clip(s, self.clip) - q.value;
                        loss += r * r;
                        let g = 2.0 * r / count * clip_derivative(s, self.clip);
                        if g == 0.0 {
                            continue;
                        }
                        for k in 0..n {
                            let a = pass.branch[0][k].output()[0];
                            let t = pass.trunk[j][k].output()[0];
                            branch_grad[k] += g * t;
                            self.trunks[k].backward(&pass.trunk[j][k], &[g * a], &mut grads[n + k]);
                        }
                    }
                    for k in 0..n {
                        if branch_grad[k] != 0.0 {
                            self.branches[k].backward(&pass.branch[0][k], &[branch_grad[k]], &mut grads[k]);
                        }
                    }
                }
                (loss, grads)
            })
            .collect();
        let mut loss = 0.0;
        let mut total: Vec<NetGradient> = self.branches.iter().chain(&self.trunks).map(NetGradient::zeros_like).collect();
        for (l, g) in &partials {
            loss += l;
            for (t, p) in total.iter_mut().zip(g) {
                t.add_assign(p);
            }
        }
        let mut values = Vec::with_capacity(self.param_count());
        for g in &total {
            g.flatten_into(&mut values);
        }
        Ok((loss / count, GradientRecord { values }))
    }

    /// Mean squared loss only.
    pub fn loss(&self, inputs: &[Vec<f64>], queries: &[Query]) -> Result<f64> {
        self.check_queries(inputs, queries)?;
        let mut ws = Workspace::default();
        let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut total = 0.0;
        for q in queries {
            let a = cache
                .entry(q.input)
                .or_insert_with(|| self.branches.iter().map(|b| b.forward_with(&inputs[q.input], &mut Workspace::default())[0]).collect());
            let s: f64 = self.trunks.iter().zip(a.iter()).map(|(t, ak)| ak * t.forward_with(q.point, &mut ws)[0]).sum();
            total += (clip(s, self.clip) - q.value).powi(2);
        }
        Ok(total / queries.len() as f64)
    }

    /// Activation signs of every net and clip regime at every query.
    fn regime(&self, inputs: &[Vec<f64>], queries: &[Query]) -> Vec<bool> {
        let mut out = Vec::new();
        for q in queries {
            let pass = self.forward_pass(&inputs[q.input], &[q.point]);
            for t in pass.branch[0].iter().chain(&pass.trunk[0]) {
                out.extend(t.pattern());
            }
            let s = pass.sums[0];
            out.push(s + self.clip > 0.0);
            out.push(s - self.clip < 0.0);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        Self::new(m.branches, m.trunks, m.clip, m.input)
    }
}

impl OperatorModel for DeepOnetModel {
    fn input_dim(&self) -> usize {
        self.branches[0].input_dim()
    }

    fn predict(&self, input: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), input.len())?;
        let mut ws = Workspace::default();
        let a: Vec<f64> = self.branches.iter().map(|b| b.forward_with(input, &mut ws)[0]).collect();
        points
            .iter()
            .map(|y| {
                check_dim(self.output_dim(), y.len())?;
                let s: f64 = self.trunks.iter().zip(&a).map(|(t, ak)| ak * t.forward_with(y, &mut ws)[0]).sum();
                Ok(clip(s, self.clip))
            })
            .collect()
    }
}

/// Outcome of [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub checked: usize,
    /// Parameters whose perturbation crossed a ReLU or clip kink.
    pub skipped: usize,
    pub max_rel_error: f64,
}

/// Compares the exact gradient with central differences of step `h` on
/// `samples` random parameters.
pub fn finite_difference_check(
    model: &DeepOnetModel,
    inputs: &[Vec<f64>],
    queries: &[Query],
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<FdReport> {
    let (_, grad) = model.loss_and_gradient(inputs, queries)?;
    let base = model.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    let mut attempts = 0;
    while checked < samples && attempts < 20 * samples {
        attempts += 1;
        let idx = rng.gen_range(0..base.len());
        let mut p = base.clone();
        p[idx] = base[idx] + h;
        probe.set_params(&p)?;
        let (plus, regime_plus) = (probe.loss(inputs, queries)?, probe.regime(inputs, queries));
        p[idx] = base[idx] - h;
        probe.set_params(&p)?;
        let (minus, regime_minus) = (probe.loss(inputs, queries)?, probe.regime(inputs, queries));
        if regime_plus != regime_minus {
            skipped += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * h);
        let g = grad.values[idx];
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
        checked += 1;
    }
    Ok(FdReport { checked, skipped, max_rel_error: worst })
}

/// Tolerance split and grid sizes of a constructed operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub eps: f64,
    pub eps_trunk: f64,
    pub eps_branch: f64,
    /// Trunk grid points per axis and in total (`N`).
    pub trunk_per_axis: usize,
    pub pairs: f64,
    /// Branch grid points per axis and in total.
    pub branch_per_axis: usize,
    pub branch_grid: f64,
    pub b_u: usize,
    pub d2: usize,
    pub coefficient_box: f64,
    pub output_lipschitz: f64,
    pub output_sup: f64,
    pub operator_lipschitz: f64,
    pub trunk_budget: NetworkClassSpec,
    pub branch_bump_budget: NetworkClassSpec,
    /// Nonzero parameters of the whole model from the declared budgets.
    pub total_params: f64,
}

/// DeepONet whose trunk nets are bumps on a uniform grid `{c_k}` of the
/// output domain and whose branch nets approximate `u -> G(u)(c_k)` by a
/// shared bump grid in coefficient space behind the encoder. Branch
/// coefficients are computed on demand from the operator.
#[derive(Clone)]
pub struct ConstructedOperator {
    pub setup: ProblemSetup,
    pub encoding: QuadratureEncoding,
    pub trunk: BumpLayout,
    pub branch: BumpLayout,
    pub clip: f64,
    pub report: ConstructionReport,
}

impl std::fmt::Debug for ConstructedOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstructedOperator").field("report", &self.report).finish()
    }
}

/// Builds the operator approximation for the span class of `setup` with
/// target sup error `eps`: trunk tolerance `eps/2`, per-branch tolerance
/// `eps/(4N)`.
pub fn build_constructive_operator(setup: &ProblemSetup, encoding: &QuadratureEncoding, eps: f64) -> Result<ConstructedOperator> {
    if !(eps > 0.0) {
        return invalid(format!("tolerance must be positive, got {eps}"));
    }
    let err = encoding.recovery_error();
    if !(err <= 1e-8) {
        return Err(Error::Encoding(format!("encoder recovers coefficients only to {err:.3e}")));
    }
    if encoding.basis != setup.basis {
        return invalid("encoding basis differs from the problem basis");
    }
    let out = setup.operator.output_domain();
    let d2 = out.dim;
    let eps_trunk = eps / 2.0;
    let l_v = setup.output_lipschitz();
    let beta_v = setup.output_sup();
    let trunk_n = grid_per_axis(d2, out.half_width(), l_v, eps_trunk);
    let pairs = (trunk_n as f64).powi(d2 as i32);
    if pairs > 1e7 {
        return Err(Error::SizeCap { what: "trunk grid points".into(), requested: pairs, cap: 1e7 });
    }
    let trunk_prod = eps_trunk / (2.0 * d2 as f64 * pairs * beta_v.max(1e-12));
    let trunk = BumpLayout::new(out, trunk_n, trunk_prod, None)?;

    let eps_branch = eps_trunk / (2.0 * pairs);
    let b_u = encoding.b_u();
    let c_alpha = encoding.basis.domain.volume().sqrt() * setup.input_sup();
    let z_domain = Cube::symmetric(c_alpha.max(1e-9), b_u)?;
    let l_g = setup.operator_lipschitz();
    let branch_n = grid_per_axis(b_u, c_alpha, l_g, eps_branch);
    let branch_grid = (branch_n as f64).powi(b_u as i32);
    if branch_grid > 1e18 {
        return Err(Error::SizeCap { what: "branch grid points".into(), requested: branch_grid, cap: 1e18 });
    }
    let box_sup = setup.output_sup_for(setup.span_sup(c_alpha));
    let branch_prod = eps_branch / (2.0 * b_u as f64 * branch_grid * box_sup.max(1e-12));
    let branch = BumpLayout::new(z_domain, branch_n, branch_prod, Some(encoding.matrix.clone()))?;

    let trunk_budget = trunk.bump_budget();
    let bump = branch.bump_budget();
    let total_params = pairs * (trunk_budget.nonzeros as f64 + branch_grid * (bump.nonzeros as f64 + 1.0));
    let report = ConstructionReport {
        eps,
        eps_trunk,
        eps_branch,
        trunk_per_axis: trunk_n,
        pairs,
        branch_per_axis: branch_n,
        branch_grid,
        b_u,
        d2,
        coefficient_box: c_alpha,
        output_lipschitz: l_v,
        output_sup: beta_v,
        operator_lipschitz: l_g,
        trunk_budget,
        branch_bump_budget: bump,
        total_params,
    };
    Ok(ConstructedOperator { setup: setup.clone(), encoding: encoding.clone(), trunk, branch, clip: beta_v, report })
}

impl ConstructedOperator {
    /// `(G(z_j), b_j(ũ))` for every branch bump active at `input`.
    fn active_outputs(&self, input: &[f64]) -> Result<Vec<(ScalarFn, f64)>> {
        let mut ws = Workspace::default();
        self.branch
            .active(input, &mut ws)
            .into_iter()
            .map(|(j, b)| Ok((self.setup.solve(&self.branch.grid.point(j))?, b)))
            .collect()
    }

    /// Branch outputs `a_k(ũ)` for the listed trunk indices.
    pub fn branch_values(&self, input: &[f64], trunk_indices: &[usize]) -> Result<Vec<f64>> {
        check_dim(self.encoding.n_x(), input.len())?;
        let act = self.active_outputs(input)?;
        Ok(trunk_indices
            .iter()
            .map(|&k| {
                let c = self.trunk.grid.point(k);
                act.iter().map(|(g, b)| b * g(&c)).sum()
            })
            .collect())
    }

    pub fn pre_clip(&self, input: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dim(self.encoding.n_x(), input.len())?;
        let act = self.active_outputs(input)?;
        let mut ws = Workspace::default();
        let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
        points
            .iter()
            .map(|y| {
                check_dim(self.trunk.grid.domain.dim, y.len())?;
                let mut s = 0.0;
                for (k, q) in self.trunk.active(y, &mut ws) {
                    let a = *cache.entry(k).or_insert_with(|| {
                        let c = self.trunk.grid.point(k);
                        act.iter().map(|(g, b)| b * g(&c)).sum()
                    });
                    s += a * q;
                }
                Ok(s)
            })
            .collect()
    }

    /// Materializes the operator as a [`DeepOnetModel`] with one dense
    /// branch network per trunk bump. Refuses above `max_branch_bumps`
    /// branch grid points.
    pub fn to_model(&self, max_branch_bumps: usize) -> Result<DeepOnetModel> {
        let g = self.branch.grid.len();
        if g > max_branch_bumps || self.report.branch_grid > max_branch_bumps as f64 {
            return Err(Error::SizeCap { what: "branch grid points".into(), requested: self.report.branch_grid, cap: max_branch_bumps as f64 });
        }
        let bumps: Vec<ReluNetwork> = (0..g).map(|j| self.branch.bump_network(j)).collect();
        let outputs: Vec<ScalarFn> =
            (0..g).map(|j| self.setup.solve(&self.branch.grid.point(j))).collect::<Result<_>>()?;
        let mut branches = Vec::with_capacity(self.trunk.grid.len());
        let mut trunks = Vec::with_capacity(self.trunk.grid.len());
        for k in 0..self.trunk.grid.len() {
            let c = self.trunk.grid.point(k);
            let coefs: Vec<f64> = outputs.iter().map(|g| g(&c)).collect();
            branches.push(parallel_sum(&bumps, &coefs)?.0);
            trunks.push(self.trunk.bump_network(k));
        }
        let input = InputDescriptor { kind: "quadrature".into(), points: self.encoding.grid.clone() };
        DeepOnetModel::new(branches, trunks, self.clip, input)
    }
}

impl OperatorModel for ConstructedOperator {
    fn input_dim(&self) -> usize {
        self.encoding.n_x()
    }

    fn predict(&self, input: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.pre_clip(input, points)?.into_iter().map(|s| clip(s, self.clip)).collect())
    }
}

/// Sup error of `model` against the operator over `inputs` span draws and an
/// `n_y`-point uniform grid of the output domain.
pub fn operator_sup_error(model: &dyn OperatorModel, setup: &ProblemSetup, grid: &[Vec<f64>], inputs: usize, n_y: usize, seed: u64) -> Result<f64> {
    let ys = setup.operator.output_domain().grid(n_y);
    let errs: Vec<Result<f64>> = (0..inputs)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::problems::sample_rng(seed, i as u64);
            let (u, _) = crate::problems::sample_input(&setup.basis, setup.coef_bound, &mut rng)?;
            let ut: Vec<f64> = grid.iter().map(|x| u.eval(x)).collect();
            let truth = setup.operator.apply(&u)?;
            let pred = model.predict(&ut, &ys)?;
            Ok(ys.iter().zip(&pred).map(|(y, p)| (truth(y) - p).abs()).fold(0.0, f64::max))
        })
        .collect();
    errs.into_iter().try_fold(0.0f64, |m, e| Ok(m.max(e?)))
}
