//! Example operators with reference solvers (forced pendulum, periodic
//! transport), span input sampling, and noisy operator datasets.

use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_builder::{FunctionOracle, ScalarFn};
use crate::basis_quadrature::{fourier_basis_on, fourier_modes_1d, AxisFactor, BasisKind, OrthonormalBasis};
use crate::domain::Cube;
use crate::error::{check_dim, invalid, Error, Result};

/// RK4 trajectory of the forced pendulum on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: f64,
    pub angle: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.angle.len() - 1
    }

    /// `(v₁(t), v₂(t))` by linear interpolation between steps; `t` is clamped to `[0, T]`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let s = self.steps();
        let pos = (t / self.horizon).clamp(0.0, 1.0) * s as f64;
        let i = (pos.floor() as usize).min(s - 1);
        let w = pos - i as f64;
        let lerp = |v: &[f64]| if w == 0.0 { v[i] } else { (1.0 - w) * v[i] + w * v[i + 1] };
        (lerp(&self.angle), lerp(&self.velocity))
    }
}

/// Solves `v₁' = v₂, v₂' = -γ sin v₁ + u(t)` from rest with classical RK4.
pub fn pendulum_solve(forcing: &dyn Fn(f64) -> f64, gravity: f64, horizon: f64, steps: usize) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return invalid(format!("pendulum horizon must be positive, got {horizon}"));
    }
    if steps < 2 {
        return invalid(format!("pendulum needs at least 2 steps, got {steps}"));
    }
    let h = horizon / steps as f64;
    let rhs = |t: f64, a: f64, v: f64| (v, -gravity * a.sin() + forcing(t));
    let mut angle = Vec::with_capacity(steps + 1);
    let mut velocity = Vec::with_capacity(steps + 1);
    let (mut a, mut v) = (0.0, 0.0);
    angle.push(a);
    velocity.push(v);
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, a, v);
        let k2 = rhs(t + h / 2.0, a + h / 2.0 * k1.0, v + h / 2.0 * k1.1);
        let k3 = rhs(t + h / 2.0, a + h / 2.0 * k2.0, v + h / 2.0 * k2.1);
        let k4 = rhs(t + h, a + h * k3.0, v + h * k3.1);
        a += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        angle.push(a);
        velocity.push(v);
    }
    Ok(Trajectory { horizon, angle, velocity })
}

/// Periodic wrap of `x` into `[lo, hi]`; points already inside are untouched.
pub fn wrap_periodic(x: f64, domain: &Cube) -> f64 {
    if x >= domain.lo && x <= domain.hi {
        x
    } else {
        domain.lo + (x - domain.lo).rem_euclid(domain.side())
    }
}

/// Exact solution `v(x) = u(x + T c)` of `v_t = c · ∇v` with periodic wrapping.
pub fn transport_solve(u: &FunctionOracle, velocity: &[f64], time: f64) -> Result<FunctionOracle> {
    check_dim(u.domain.dim, velocity.len())?;
    let shift: Vec<f64> = velocity.iter().map(|c| c * time).collect();
    let f = u.function();
    let dom = u.domain.clone();
    let wrapped = dom.clone();
    Ok(FunctionOracle::new(
        move |x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(xi, s)| wrap_periodic(xi + s, &wrapped)).collect();
            f(&y)
        },
        dom,
        u.lipschitz,
        u.sup_bound,
    ))
}

/// Coefficients of `x -> Σ α_k ω_k(x + shift)` in the same Fourier basis.
/// Fails when the basis is not closed under translation.
pub fn shifted_coefficients(basis: &OrthonormalBasis, alpha: &[f64], shift: &[f64]) -> Result<Vec<f64>> {
    check_dim(basis.len(), alpha.len())?;
    check_dim(basis.dim(), shift.len())?;
    if basis.kind != BasisKind::Fourier {
        return invalid("translation is only closed on Fourier spans");
    }
    let g = basis.domain.half_width();
    let mut out = vec![0.0; basis.len()];
    for (k, mode) in basis.modes.iter().enumerate() {
        let mut terms: Vec<(Vec<AxisFactor>, f64)> = vec![(Vec::new(), alpha[k])];
        for (f, s) in mode.iter().zip(shift) {
            let parts: Vec<(AxisFactor, f64)> = match *f {
                AxisFactor::Sin(n) => {
                    let th = n as f64 * std::f64::consts::PI * s / g;
                    vec![(AxisFactor::Sin(n), th.cos()), (AxisFactor::Cos(n), th.sin())]
                }
                AxisFactor::Cos(n) => {
                    let th = n as f64 * std::f64::consts::PI * s / g;
                    vec![(AxisFactor::Cos(n), th.cos()), (AxisFactor::Sin(n), -th.sin())]
                }
                other => vec![(other, 1.0)],
            };
            terms = terms
                .into_iter()
                .flat_map(|(prefix, w)| {
                    parts.iter().map(move |(p, pw)| {
                        let mut m = prefix.clone();
                        m.push(*p);
                        (m, w * pw)
                    })
                })
                .collect();
        }
        for (m, w) in terms {
            if w == 0.0 {
                continue;
            }
            match basis.modes.iter().position(|b| *b == m) {
                Some(j) => out[j] += w,
                None => return invalid(format!("mode {m:?} missing from the basis")),
            }
        }
    }
    Ok(out)
}

/// A solution operator `G: U -> V` with a declared Lipschitz bound
/// (sup norm of outputs against `L²` distance of inputs).
pub trait OperatorProblem: Send + Sync {
    fn name(&self) -> String;
    fn output_domain(&self) -> Cube;
    fn lipschitz(&self, basis: &OrthonormalBasis) -> f64;
    fn apply(&self, u: &FunctionOracle) -> Result<ScalarFn>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transport {
    pub domain: Cube,
    pub velocity: Vec<f64>,
    pub time: f64,
}

impl OperatorProblem for Transport {
    fn name(&self) -> String {
        "transport".into()
    }

    fn output_domain(&self) -> Cube {
        self.domain.clone()
    }

    /// `√J · max_j sup |ω_j|`.
    fn lipschitz(&self, basis: &OrthonormalBasis) -> f64 {
        let sup = (0..basis.len()).map(|k| basis.sup_bound(k)).fold(0.0, f64::max);
        (basis.len() as f64).sqrt() * sup
    }

    fn apply(&self, u: &FunctionOracle) -> Result<ScalarFn> {
        Ok(transport_solve(u, &self.velocity, self.time)?.function())
    }
}

/// Forced pendulum on `[0, T]`; the output is the angle (or the angular
/// velocity) as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub gravity: f64,
    pub horizon: f64,
    pub steps: usize,
    pub output_velocity: bool,
}

impl OperatorProblem for Pendulum {
    fn name(&self) -> String {
        "pendulum".into()
    }

    fn output_domain(&self) -> Cube {
        Cube::new(0.0, self.horizon, 1).expect("positive horizon")
    }

    /// Gronwall: `√T · exp((1 + γ) T)`.
    fn lipschitz(&self, _basis: &OrthonormalBasis) -> f64 {
        self.horizon.sqrt() * ((1.0 + self.gravity.abs()) * self.horizon).exp()
    }

    fn apply(&self, u: &FunctionOracle) -> Result<ScalarFn> {
        check_dim(1, u.domain.dim)?;
        let traj = pendulum_solve(&|t| u.eval(&[t]), self.gravity, self.horizon, self.steps)?;
        let vel = self.output_velocity;
        Ok(Arc::new(move |y: &[f64]| {
            let (a, v) = traj.eval(y[0]);
            if vel {
                v
            } else {
                a
            }
        }))
    }
}

/// Serializable choice of example problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Transport {
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default = "one")]
        velocity: f64,
        #[serde(default = "half")]
        time: f64,
        #[serde(default = "two")]
        modes: usize,
        #[serde(default = "one")]
        coef_bound: f64,
    },
    Pendulum {
        #[serde(default = "one")]
        gravity: f64,
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default = "pendulum_steps")]
        steps: usize,
        #[serde(default = "two")]
        modes: usize,
        #[serde(default = "one")]
        coef_bound: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn two() -> usize {
    2
}

fn pendulum_steps() -> usize {
    1000
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Transport { gamma: 1.0, velocity: 1.0, time: 0.5, modes: 2, coef_bound: 1.0 }
    }
}

/// Operator, input basis and coefficient bound `C` of a span input class
/// `{Σ a_j ω_j : |a_j| ≤ C}`.
#[derive(Clone)]
pub struct ProblemSetup {
    pub config: ProblemConfig,
    pub operator: Arc<dyn OperatorProblem>,
    pub basis: OrthonormalBasis,
    pub coef_bound: f64,
}

impl std::fmt::Debug for ProblemSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSetup").field("config", &self.config).finish()
    }
}

impl ProblemConfig {
    pub fn setup(&self) -> Result<ProblemSetup> {
        match self.clone() {
            ProblemConfig::Transport { gamma, velocity, time, modes, coef_bound } => {
                let domain = Cube::symmetric(gamma, 1)?;
                let basis = fourier_basis_on(domain.clone(), fourier_modes_1d(modes))?;
                let op = Transport { domain, velocity: vec![velocity], time };
                Ok(ProblemSetup { config: self.clone(), operator: Arc::new(op), basis, coef_bound })
            }
            ProblemConfig::Pendulum { gravity, horizon, steps, modes, coef_bound } => {
                let domain = Cube::new(0.0, horizon, 1)?;
                let basis = fourier_basis_on(domain, fourier_modes_1d(modes))?;
                let op = Pendulum { gravity, horizon, steps, output_velocity: false };
                Ok(ProblemSetup { config: self.clone(), operator: Arc::new(op), basis, coef_bound })
            }
        }
    }
}

impl ProblemSetup {
    pub fn input_lipschitz(&self) -> f64 {
        self.coef_bound * (0..self.basis.len()).map(|k| self.basis.lipschitz_bound(k)).sum::<f64>()
    }

    pub fn input_sup(&self) -> f64 {
        self.span_sup(self.coef_bound)
    }

    pub fn operator_lipschitz(&self) -> f64 {
        self.operator.lipschitz(&self.basis)
    }

    /// Sup bound of outputs for inputs with sup at most `input_sup`.
    pub fn output_sup_for(&self, input_sup: f64) -> f64 {
        match &self.config {
            ProblemConfig::Transport { .. } => input_sup,
            ProblemConfig::Pendulum { gravity, horizon, .. } => horizon * horizon * (gravity.abs() + input_sup),
        }
    }

    pub fn output_sup(&self) -> f64 {
        self.output_sup_for(self.input_sup())
    }

    /// Lipschitz bound of the output functions over the input class.
    pub fn output_lipschitz(&self) -> f64 {
        match &self.config {
            ProblemConfig::Transport { .. } => self.input_lipschitz(),
            ProblemConfig::Pendulum { gravity, horizon, .. } => horizon * (gravity.abs() + self.input_sup()),
        }
    }

    /// Sup bound of span elements whose coefficients lie in `[-c, c]`.
    pub fn span_sup(&self, c: f64) -> f64 {
        c * (0..self.basis.len()).map(|k| self.basis.sup_bound(k)).sum::<f64>()
    }

    /// Applies the operator to the span element with coefficients `alpha`.
    pub fn solve(&self, alpha: &[f64]) -> Result<ScalarFn> {
        let u = crate::basis_quadrature::reconstruct(alpha, &self.basis)?;
        self.operator.apply(&u)
    }
}

/// Span input with i.i.d. uniform coefficients on `[-C, C]`; the returned
/// oracle carries the derived Lipschitz and sup bounds of the whole class.
pub fn sample_input(basis: &OrthonormalBasis, coef_bound: f64, rng: &mut impl Rng) -> Result<(FunctionOracle, Vec<f64>)> {
    if !(coef_bound >= 0.0) {
        return invalid(format!("coefficient bound must be nonnegative, got {coef_bound}"));
    }
    let dist = Uniform::new_inclusive(-coef_bound, coef_bound);
    let alpha: Vec<f64> = (0..basis.len()).map(|_| dist.sample(rng)).collect();
    let lip = coef_bound * (0..basis.len()).map(|k| basis.lipschitz_bound(k)).sum::<f64>();
    let sup = coef_bound * (0..basis.len()).map(|k| basis.sup_bound(k)).sum::<f64>();
    let b = basis.clone();
    let a = alpha.clone();
    let u = FunctionOracle::new(move |x: &[f64]| b.combine(&a, x), basis.domain.clone(), lip, sup);
    Ok((u, alpha))
}

/// Independent random stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Noisy samples of an operator on a fixed input grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorDataset {
    pub problem: ProblemConfig,
    pub grid_kind: String,
    pub grid: Vec<Vec<f64>>,
    pub coefficients: Vec<Vec<f64>>,
    /// `n × n_x` input samples `ũ_i`.
    pub inputs: Vec<Vec<f64>>,
    /// `n × n_y × d₂` output locations.
    pub points: Vec<Vec<Vec<f64>>>,
    /// `n × n_y` noisy output values.
    pub values: Vec<Vec<f64>>,
    pub sigma: f64,
    pub seed: u64,
}

impl OperatorDataset {
    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_x(&self) -> usize {
        self.grid.len()
    }

    pub fn n_y(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn d2(&self) -> usize {
        self.points.first().and_then(|p| p.first()).map_or(0, |y| y.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Self = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, n_x, n_y) = (self.n(), self.n_x(), self.n_y());
        let ok = self.coefficients.len() == n
            && self.inputs.iter().all(|u| u.len() == n_x)
            && self.points.len() == n
            && self.values.len() == n
            && self.points.iter().all(|p| p.len() == n_y && p.iter().all(|y| y.len() == self.d2()))
            && self.values.iter().all(|v| v.len() == n_y);
        if ok {
            Ok(())
        } else {
            Err(Error::Malformed("dataset arrays have inconsistent shapes".into()))
        }
    }
}

/// Draws `n` span inputs, samples each on `grid`, and records `n_y` noisy
/// operator values at uniform points of the output domain. Sample `i` uses
/// its own stream, so the result does not depend on the thread count.
pub fn make_dataset(
    setup: &ProblemSetup,
    grid: &[Vec<f64>],
    grid_kind: &str,
    n: usize,
    n_y: usize,
    sigma: f64,
    seed: u64,
) -> Result<OperatorDataset> {
    if n == 0 || n_y == 0 {
        return invalid("a dataset needs n ≥ 1 and n_y ≥ 1");
    }
    if !(sigma >= 0.0) {
        return invalid(format!("noise scale must be nonnegative, got {sigma}"));
    }
    for x in grid {
        check_dim(setup.basis.dim(), x.len())?;
    }
    let out = setup.operator.output_domain();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rows: Vec<Result<_>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let (u, alpha) = sample_input(&setup.basis, setup.coef_bound, &mut rng)?;
            let input: Vec<f64> = grid.iter().map(|x| u.eval(x)).collect();
            let v = setup.operator.apply(&u)?;
            let pts: Vec<Vec<f64>> =
                (0..n_y).map(|_| (0..out.dim).map(|_| rng.gen_range(out.lo..=out.hi)).collect()).collect();
            let vals: Vec<f64> = pts
                .iter()
                .map(|y| {
                    let clean = v(y);
                    if sigma > 0.0 {
                        clean + noise.sample(&mut rng)
                    } else {
                        clean
                    }
                })
                .collect();
            Ok((alpha, input, pts, vals))
        })
        .collect();
    let mut ds = OperatorDataset {
        problem: setup.config.clone(),
        grid_kind: grid_kind.to_string(),
        grid: grid.to_vec(),
        coefficients: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        sigma,
        seed,
    };
    for r in rows {
        let (a, u, p, v) = r?;
        ds.coefficients.push(a);
        ds.inputs.push(u);
        ds.points.push(p);
        ds.values.push(v);
    }
    Ok(ds)
}

/// Largest observed `‖G(u₁) - G(u₂)‖_∞ / ‖u₁ - u₂‖_{L²}` over random span
/// pairs; the sup is taken over `probe` output points.
pub fn empirical_lipschitz(setup: &ProblemSetup, pairs: usize, probe: usize, seed: u64) -> Result<f64> {
    let out = setup.operator.output_domain();
    let ys = out.grid(probe);
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let (u1, a1) = sample_input(&setup.basis, setup.coef_bound, &mut rng)?;
        let (u2, a2) = sample_input(&setup.basis, setup.coef_bound, &mut rng)?;
        let (g1, g2) = (setup.operator.apply(&u1)?, setup.operator.apply(&u2)?);
        let num = ys.iter().map(|y| (g1(y) - g2(y)).abs()).fold(0.0, f64::max);
        let den = a1.iter().zip(&a2).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis_quadrature::{build_encoding, fourier_basis};

    fn transport(modes: usize, time: f64) -> ProblemSetup {
        ProblemConfig::Transport { gamma: 1.0, velocity: 1.0, time, modes, coef_bound: 1.0 }.setup().unwrap()
    }

    #[test]
    fn unforced_pendulum_stays_at_rest() {
        let tr = pendulum_solve(&|_| 0.0, 1.0, 2.0, 100).unwrap();
        assert!(tr.angle.iter().chain(&tr.velocity).all(|v| *v == 0.0));
        assert!(pendulum_solve(&|_| 0.0, 1.0, 0.0, 100).is_err());
        assert!(pendulum_solve(&|_| 0.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn pendulum_is_fourth_order() {
        let u = |t: f64| (3.0 * t).sin() + 0.5;
        let end = |s| {
            let tr = pendulum_solve(&u, 2.0, 2.0, s).unwrap();
            *tr.angle.last().unwrap()
        };
        let mut errs = Vec::new();
        for s in [16, 32, 64, 128] {
            errs.push((end(s) - end(2 * s)).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 4.0).abs() < 0.5, "{order}");
        }
    }

    #[test]
    fn pendulum_matches_fine_reference() {
        let fine = pendulum_solve(&|_| 1.0, 1.0, 1.0, 1 << 20).unwrap();
        let coarse = pendulum_solve(&|_| 1.0, 1.0, 1.0, 1 << 12).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let (a, b) = (fine.eval(t), coarse.eval(t));
            assert!((a.0 - b.0).abs() <= 1e-8 && (a.1 - b.1).abs() <= 1e-8);
        }
    }

    #[test]
    fn transport_examples() {
        let dom = Cube::symmetric(1.0, 1).unwrap();
        let u = FunctionOracle::new(|x| (std::f64::consts::PI * x[0]).sin(), dom, std::f64::consts::PI, 1.0);
        let same = transport_solve(&u, &[1.0], 0.0).unwrap();
        let shifted = transport_solve(&u, &[1.0], 0.5).unwrap();
        for i in 0..=200 {
            let x = -1.0 + i as f64 / 100.0;
            assert_eq!(same.eval(&[x]), u.eval(&[x]));
            assert!((shifted.eval(&[x]) - (std::f64::consts::PI * x).cos()).abs() <= 1e-12);
        }
    }

    #[test]
    fn transport_agrees_with_phase_shift() {
        let setup = transport(6, 0.37);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (_, alpha) = sample_input(&setup.basis, 1.0, &mut rng).unwrap();
            let direct = setup.solve(&alpha).unwrap();
            let beta = shifted_coefficients(&setup.basis, &alpha, &[0.37]).unwrap();
            for x in Cube::symmetric(1.0, 1).unwrap().grid(101) {
                assert!((direct(&x) - setup.basis.combine(&beta, &x)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn phase_shift_in_two_dimensions() {
        use AxisFactor::*;
        let modes = vec![vec![Sin(1), Cos(2)], vec![Cos(1), Cos(2)], vec![Sin(1), Sin(2)], vec![Cos(1), Sin(2)]];
        let basis = fourier_basis(2, 1.0, modes).unwrap();
        let alpha = [0.3, -0.7, 0.2, 0.9];
        let shift = [0.2, -0.45];
        let beta = shifted_coefficients(&basis, &alpha, &shift).unwrap();
        for x in Cube::symmetric(1.0, 2).unwrap().grid(15) {
            let y = [x[0] + shift[0], x[1] + shift[1]];
            assert!((basis.combine(&alpha, &y) - basis.combine(&beta, &x)).abs() <= 1e-12);
        }
        let open = fourier_basis(1, 1.0, vec![vec![Sin(1)]]).unwrap();
        assert!(shifted_coefficients(&open, &[1.0], &[0.3]).is_err());
    }

    #[test]
    fn transport_lipschitz_ratio() {
        let setup = transport(3, 0.5);
        let ratio = empirical_lipschitz(&setup, 100, 512, 5).unwrap();
        assert!(ratio <= 3f64.sqrt(), "{ratio}");
        assert!((setup.operator_lipschitz() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pendulum_lipschitz_ratio_is_bounded() {
        let setup = ProblemConfig::Pendulum { gravity: 1.0, horizon: 1.0, steps: 256, modes: 2, coef_bound: 1.0 }
            .setup()
            .unwrap();
        let ratio = empirical_lipschitz(&setup, 30, 200, 6).unwrap();
        assert!(ratio > 0.0 && ratio <= setup.operator_lipschitz());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (u, _) = sample_input(&setup.basis, 1.0, &mut rng).unwrap();
            let v = setup.operator.apply(&u).unwrap();
            let ys = Cube::new(0.0, 1.0, 1).unwrap().grid(400);
            let vals: Vec<f64> = ys.iter().map(|y| v(y)).collect();
            assert!(vals.iter().all(|x| x.abs() <= setup.output_sup()));
            for w in vals.windows(2) {
                assert!((w[1] - w[0]).abs() <= setup.output_lipschitz() / 399.0 + 1e-12);
            }
        }
    }

    #[test]
    fn sampled_inputs() {
        let basis = fourier_basis(1, 1.0, fourier_modes_1d(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (u, a) = sample_input(&basis, 0.0, &mut rng).unwrap();
        assert!(a.iter().all(|v| *v == 0.0) && u.eval(&[0.3]) == 0.0);
        let mut sum = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let (_, a) = sample_input(&basis, 2.0, &mut rng).unwrap();
            assert!(a.iter().all(|v| v.abs() <= 2.0));
            sum += a[0];
        }
        let band = 3.0 * 2.0 / (12.0 * draws as f64).sqrt();
        assert!((sum / draws as f64).abs() <= band);
        let (u, _) = sample_input(&basis, 1.0, &mut rng).unwrap();
        let (lip, sup) = u.spot_check(2000, 3);
        assert!(lip <= u.lipschitz && sup <= u.sup_bound);
    }

    #[test]
    fn noiseless_dataset_matches_solver() {
        let setup = transport(3, 0.5);
        let enc = build_encoding(&setup.basis).unwrap();
        let ds = make_dataset(&setup, &enc.grid, "quadrature", 5, 7, 0.0, 11).unwrap();
        assert_eq!((ds.n(), ds.n_x(), ds.n_y(), ds.d2()), (5, enc.n_x(), 7, 1));
        for i in 0..5 {
            let g = setup.solve(&ds.coefficients[i]).unwrap();
            for (y, v) in ds.points[i].iter().zip(&ds.values[i]) {
                assert!(y[0] >= -1.0 && y[0] <= 1.0);
                assert_eq!(g(y), *v);
            }
            let recovered = enc.encode(&ds.inputs[i]).unwrap();
            for (a, b) in recovered.iter().zip(&ds.coefficients[i]) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn noise_variance() {
        let setup = transport(2, 0.5);
        let enc = build_encoding(&setup.basis).unwrap();
        let sigma = 0.3;
        let noisy = make_dataset(&setup, &enc.grid, "quadrature", 100, 1000, sigma, 4).unwrap();
        let mut diffs = Vec::new();
        for i in 0..100 {
            let g = setup.solve(&noisy.coefficients[i]).unwrap();
            for (y, v) in noisy.points[i].iter().zip(&noisy.values[i]) {
                diffs.push(v - g(y));
            }
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() <= 0.05, "{var}");
    }

    #[test]
    fn datasets_are_reproducible() {
        let setup = ProblemConfig::Pendulum { gravity: 1.0, horizon: 1.0, steps: 64, modes: 2, coef_bound: 0.5 }
            .setup()
            .unwrap();
        let enc = build_encoding(&setup.basis).unwrap();
        let a = make_dataset(&setup, &enc.grid, "quadrature", 6, 5, 0.01, 9).unwrap();
        let b = make_dataset(&setup, &enc.grid, "quadrature", 6, 5, 0.01, 9).unwrap();
        let (ta, tb) = (a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(ta, tb);
        let back = OperatorDataset::from_json(&ta).unwrap();
        assert_eq!(back, a);
        assert!(a.points.iter().flatten().all(|y| y[0] >= 0.0 && y[0] <= 1.0));
        let c = make_dataset(&setup, &enc.grid, "quadrature", 6, 5, 0.01, 10).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn malformed_dataset_is_rejected() {
        let setup = transport(2, 0.5);
        let enc = build_encoding(&setup.basis).unwrap();
        let mut ds = make_dataset(&setup, &enc.grid, "quadrature", 2, 3, 0.0, 1).unwrap();
        ds.values[1].pop();
        assert!(matches!(OperatorDataset::from_json(&ds.to_json().unwrap()), Err(Error::Malformed(_))));
        assert!(make_dataset(&setup, &enc.grid, "quadrature", 0, 3, 0.0, 1).is_err());
    }
}
