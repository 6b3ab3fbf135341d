//! Empirical risk minimization, Monte-Carlo generalization estimates, and
//! size sweeps fitted with log-log power laws.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis_quadrature::build_encoding;
use crate::deeponet::{init_trainable, DeepOnetModel, InputDescriptor, OperatorModel, Query, TrainableArch};
use crate::error::{check_dim, invalid, Error, Result};
use crate::problems::{make_dataset, sample_input, sample_rng, OperatorDataset, ProblemConfig, ProblemSetup};
use crate::theory_bounds::{RateCase, RateKind};

/// Adam with optional per-step magnitude clamping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
    /// Mini-batch size; `None` means `min(256, n·n_y)`.
    pub batch: Option<usize>,
    /// Parameters are clamped to `[-kappa, kappa]` after every step.
    pub kappa: Option<f64>,
    /// Number of evenly spaced loss checkpoints besides step 0.
    pub checkpoints: usize,
    /// Cosine decay of the step size down to `lr * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub seed: u64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 10_000,
            batch: None,
            kappa: None,
            checkpoints: 20,
            final_lr_fraction: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DeepOnetModel,
    /// `(step, full training loss)` at the checkpoints.
    pub trace: Vec<(usize, f64)>,
    /// Set when the loss or gradient stopped being finite.
    pub failed: bool,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.1)
    }
}

fn dataset_queries(ds: &OperatorDataset) -> Vec<Query<'_>> {
    let mut out = Vec::with_capacity(ds.n() * ds.n_y());
    for (i, (pts, vals)) in ds.points.iter().zip(&ds.values).enumerate() {
        for (y, v) in pts.iter().zip(vals) {
            out.push(Query { input: i, point: y, value: *v });
        }
    }
    out
}

/// Minimizes the mean squared loss over every `(u_i, y_ij, v_ij)` triple of
/// `dataset` with mini-batch Adam.
pub fn erm_train(model: DeepOnetModel, dataset: &OperatorDataset, settings: &AdamSettings) -> Result<TrainOutcome> {
    dataset.validate()?;
    check_dim(model.input_dim(), dataset.n_x())?;
    check_dim(model.output_dim(), dataset.d2())?;
    if !(settings.lr > 0.0) || settings.batch == Some(0) {
        return invalid("step size and batch size must be positive");
    }
    let queries = dataset_queries(dataset);
    let total = queries.len();
    let batch = settings.batch.unwrap_or(256).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut order: Vec<usize> = (0..total).collect();
    let mut cursor = total;

    let mut model = model;
    let mut params = model.params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let every = (settings.steps / settings.checkpoints.max(1)).max(1);
    let mut trace = vec![(0, model.loss(&dataset.inputs, &queries)?)];
    let mut failed = !trace[0].1.is_finite();
    let mut picked: Vec<Query> = Vec::with_capacity(batch);

    for step in 1..=settings.steps {
        if failed {
            break;
        }
        let (_, grad) = if batch == total {
            model.loss_and_gradient(&dataset.inputs, &queries)?
        } else {
            if cursor + batch > total {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picked.clear();
            picked.extend(order[cursor..cursor + batch].iter().map(|&k| queries[k]));
            cursor += batch;
            model.loss_and_gradient(&dataset.inputs, &picked)?
        };
        if grad.values.iter().any(|g| !g.is_finite()) {
            failed = true;
            break;
        }
        let progress = step as f64 / settings.steps as f64;
        let decay = settings.final_lr_fraction + (1.0 - settings.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = settings.lr * decay;
        let (c1, c2) = (1.0 - settings.beta1.powi(step as i32), 1.0 - settings.beta2.powi(step as i32));
        for (((p, g), m), v) in params.iter_mut().zip(&grad.values).zip(&mut m).zip(&mut v) {
            *m = settings.beta1 * *m + (1.0 - settings.beta1) * g;
            *v = settings.beta2 * *v + (1.0 - settings.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + settings.epsilon);
        }
        model.set_params(&params)?;
        if let Some(k) = settings.kappa {
            model.clamp_params(k);
            params = model.params();
        }
        if step % every == 0 || step == settings.steps {
            let loss = model.loss(&dataset.inputs, &queries)?;
            trace.push((step, loss));
            failed = !loss.is_finite();
        }
    }
    Ok(TrainOutcome { model, trace, failed })
}

/// Replaces the values of `dataset` by the model's own predictions.
pub fn relabel(dataset: &OperatorDataset, model: &dyn OperatorModel) -> Result<OperatorDataset> {
    let mut out = dataset.clone();
    for (i, vals) in out.values.iter_mut().enumerate() {
        *vals = model.predict(&dataset.inputs[i], &dataset.points[i])?;
    }
    out.sigma = 0.0;
    Ok(out)
}

/// Monte-Carlo sizes of a generalization estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub functions: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self { functions: 200, points: 64, seed: 0x7e57 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationEstimate {
    pub mean: f64,
    /// Standard error over the per-function averages.
    pub se: f64,
}

/// Estimates `E (model(ũ)(y) - G(u)(y))²` with fresh span inputs and uniform
/// output points; `grid` must be the grid the model was trained on.
pub fn estimate_generalization(
    model: &dyn OperatorModel,
    setup: &ProblemSetup,
    grid: &[Vec<f64>],
    test: &TestConfig,
) -> Result<GeneralizationEstimate> {
    if test.functions == 0 || test.points == 0 {
        return invalid("test sizes must be at least 1");
    }
    check_dim(model.input_dim(), grid.len())?;
    let out = setup.operator.output_domain();
    let per_fn: Vec<Result<f64>> = (0..test.functions)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(test.seed, i as u64);
            let (u, _) = sample_input(&setup.basis, setup.coef_bound, &mut rng)?;
            let ut: Vec<f64> = grid.iter().map(|x| u.eval(x)).collect();
            let ys: Vec<Vec<f64>> =
                (0..test.points).map(|_| (0..out.dim).map(|_| rng.gen_range(out.lo..=out.hi)).collect()).collect();
            let truth = setup.operator.apply(&u)?;
            let pred = model.predict(&ut, &ys)?;
            Ok(ys.iter().zip(&pred).map(|(y, p)| (p - truth(y)).powi(2)).sum::<f64>() / test.points as f64)
        })
        .collect();
    let per_fn: Vec<f64> = per_fn.into_iter().collect::<Result<_>>()?;
    let n = per_fn.len() as f64;
    let mean = per_fn.iter().sum::<f64>() / n;
    let se = if per_fn.len() > 1 {
        (per_fn.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(GeneralizationEstimate { mean, se })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Least squares line through `(log size, log error)`. Points with a
/// nonpositive coordinate are dropped with a warning. A fit with no residual
/// reports `r2 = 1`, including the constant case.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| {
            let ok = *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite();
            if !ok {
                log::warn!("dropping point ({x}, {y}) from the power-law fit");
            }
            ok
        })
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if kept.len() < 2 || !(sxx > 0.0) {
        return invalid("a power-law fit needs at least two distinct positive sizes");
    }
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = kept.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = kept.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_res <= 1e-24 * (1.0 + ss_tot) {
        1.0
    } else if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    Ok(PowerLawFit { slope, intercept, r2, used: kept.len(), excluded: points.len() - kept.len() })
}

/// What a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Total sample count `n·n_y`, split as `n = size / n_y`.
    Data,
    /// Number of branch/trunk pairs.
    Model,
}

/// Dense DeepONet shape used by a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSettings {
    pub pairs: usize,
    pub depth: usize,
    pub width: usize,
    /// Output clip level; `None` uses the problem's output sup bound.
    pub clip: Option<f64>,
}

impl Default for ArchSettings {
    fn default() -> Self {
        Self { pairs: 4, depth: 3, width: 16, clip: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub problem: ProblemConfig,
    pub variable: SweepVariable,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `n_y` of every dataset.
    pub points_per_function: usize,
    /// `n·n_y` held fixed in a model sweep.
    pub data_size: usize,
    pub sigma: f64,
    pub arch: ArchSettings,
    pub optimizer: AdamSettings,
    pub test: TestConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::transport_data_scaling()
    }
}

impl SweepConfig {
    /// Transport with two input modes, `n·n_y` from 2⁸ to 2¹⁴, five seeds.
    pub fn transport_data_scaling() -> Self {
        Self {
            problem: ProblemConfig::default(),
            variable: SweepVariable::Data,
            sizes: (8..=14).map(|k| 1usize << k).collect(),
            seeds: (0..5).collect(),
            points_per_function: 16,
            data_size: 4096,
            sigma: 0.01,
            arch: ArchSettings::default(),
            optimizer: AdamSettings { steps: 4000, final_lr_fraction: 0.01, lr: 3e-3, ..AdamSettings::default() },
            test: TestConfig::default(),
        }
    }

    /// Same problem with the pair count swept at a fixed data size.
    pub fn transport_model_scaling() -> Self {
        Self { variable: SweepVariable::Model, sizes: vec![1, 2, 4, 8], ..Self::transport_data_scaling() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return invalid("sizes: a sweep needs at least 3 points");
        }
        if self.sizes.windows(2).any(|w| w[1] < w[0]) {
            return invalid("sizes: must be ascending");
        }
        if self.seeds.len() < 3 {
            return invalid("seeds: at least 3 replicas are needed for medians");
        }
        if self.points_per_function == 0 {
            return invalid("points_per_function: must be positive");
        }
        if self.variable == SweepVariable::Data && self.sizes.iter().any(|s| *s < self.points_per_function) {
            return invalid("sizes: every data size must be at least points_per_function");
        }
        if self.sizes.contains(&0) {
            return invalid("sizes: must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub size: usize,
    pub seed: u64,
    pub n: usize,
    pub n_y: usize,
    pub pairs: usize,
    pub n_params: usize,
    pub train_loss_final: f64,
    /// Last few checkpoint losses.
    pub loss_tail: Vec<f64>,
    pub test_mse: f64,
    pub test_se: f64,
    pub wall_ms: u64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub variable: SweepVariable,
    pub cells: Vec<CellResult>,
    /// `(size, median test error)` over the replicas that did not fail.
    pub medians: Vec<(usize, f64)>,
    pub fit: Option<PowerLawFit>,
    pub theory_slope: Option<f64>,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[k] } else { 0.5 * (values[k - 1] + values[k]) })
}

/// Medians per size and the log-log fit on them.
pub fn summarize(cells: &[CellResult], sizes: &[usize]) -> (Vec<(usize, f64)>, Option<PowerLawFit>) {
    let mut distinct = sizes.to_vec();
    distinct.dedup();
    let medians: Vec<(usize, f64)> = distinct
        .iter()
        .filter_map(|&s| {
            let mut errs: Vec<f64> = cells.iter().filter(|c| c.size == s && !c.failed).map(|c| c.test_mse).collect();
            median(&mut errs).map(|m| (s, m))
        })
        .collect();
    // Each median enters once per configured occurrence so degenerate
    // sweeps keep their weights.
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .filter_map(|s| medians.iter().find(|m| m.0 == *s).map(|m| (m.0 as f64, m.1)))
        .collect();
    (medians, fit_power_law(&pts).ok())
}

fn run_cell(config: &SweepConfig, setup: &ProblemSetup, grid: &[Vec<f64>], size: usize, seed: u64) -> Result<CellResult> {
    let start = Instant::now();
    let n_y = config.points_per_function;
    let (total, pairs) = match config.variable {
        SweepVariable::Data => (size, config.arch.pairs),
        SweepVariable::Model => (config.data_size, size),
    };
    let n = (total / n_y).max(1);
    let cell_seed = mix(seed, size as u64);
    let ds = make_dataset(setup, grid, "quadrature", n, n_y, config.sigma, cell_seed)?;
    let clip = config.arch.clip.unwrap_or_else(|| setup.output_sup());
    let arch = TrainableArch::dense(grid.len(), ds.d2(), pairs, config.arch.depth, config.arch.width, clip);
    let input = InputDescriptor { kind: "quadrature".into(), points: grid.to_vec() };
    let model = init_trainable(&arch, input, mix(cell_seed, 1), false)?;
    let settings = AdamSettings { seed: mix(cell_seed, 2), ..config.optimizer.clone() };
    let outcome = erm_train(model, &ds, &settings)?;
    let est = if outcome.failed {
        GeneralizationEstimate { mean: f64::NAN, se: f64::NAN }
    } else {
        estimate_generalization(&outcome.model, setup, grid, &config.test)?
    };
    let tail = outcome.trace.iter().rev().take(3).rev().map(|t| t.1).collect();
    Ok(CellResult {
        size,
        seed,
        n,
        n_y,
        pairs,
        n_params: outcome.model.param_count(),
        train_loss_final: outcome.final_loss(),
        loss_tail: tail,
        test_mse: est.mean,
        test_se: est.se,
        wall_ms: start.elapsed().as_millis() as u64,
        failed: outcome.failed || !est.mean.is_finite(),
    })
}

/// Trains one replica per `(size, seed)` cell, in parallel, and fits a power
/// law to the per-size medians. A cell that errors or diverges is recorded as
/// failed and the sweep continues.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let setup = config.problem.setup()?;
    let encoding = build_encoding(&setup.basis)?;
    let grid = encoding.grid.clone();
    let jobs: Vec<(usize, u64)> = config.sizes.iter().flat_map(|&s| config.seeds.iter().map(move |&r| (s, r))).collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(size, seed)| {
            run_cell(config, &setup, &grid, size, seed).unwrap_or_else(|e| {
                log::warn!("cell (size {size}, seed {seed}) failed: {e}");
                CellResult {
                    size,
                    seed,
                    n: 0,
                    n_y: config.points_per_function,
                    pairs: 0,
                    n_params: 0,
                    train_loss_final: f64::NAN,
                    loss_tail: Vec::new(),
                    test_mse: f64::NAN,
                    test_se: f64::NAN,
                    wall_ms: 0,
                    failed: true,
                }
            })
        })
        .collect();
    let (medians, fit) = summarize(&cells, &config.sizes);
    let b_u = setup.basis.len();
    let d2 = setup.operator.output_domain().dim;
    let theory_slope = match config.variable {
        SweepVariable::Data => RateCase::new(RateKind::LowdimGen, setup.basis.dim(), d2, Some(b_u)).map(|c| c.exponent()).ok(),
        // Squared error against the pair count.
        SweepVariable::Model => RateCase::new(RateKind::LowdimApprox, setup.basis.dim(), d2, Some(b_u)).map(|c| 2.0 * c.exponent()).ok(),
    };
    Ok(SweepResult { config_hash: config.hash(), variable: config.variable, cells, medians, fit, theory_slope })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    size: usize,
    seed: u64,
    train_loss_final: f64,
    test_mse: f64,
    test_se: f64,
    n_params: usize,
    wall_ms: u64,
    status: &'a str,
    config_hash: &'a str,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub theory_slope: Option<f64>,
    pub gap: Option<f64>,
    pub medians: Vec<(usize, f64)>,
    pub failed_cells: usize,
    pub config_hash: String,
}

impl SweepResult {
    pub fn summary(&self) -> SweepSummary {
        let slope = self.fit.as_ref().map(|f| f.slope);
        SweepSummary {
            slope,
            intercept: self.fit.as_ref().map(|f| f.intercept),
            r2: self.fit.as_ref().map(|f| f.r2),
            theory_slope: self.theory_slope,
            gap: slope.zip(self.theory_slope).map(|(a, b)| a - b),
            medians: self.medians.clone(),
            failed_cells: self.cells.iter().filter(|c| c.failed).count(),
            config_hash: self.config_hash.clone(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for c in &self.cells {
            w.serialize(CsvRow {
                size: c.size,
                seed: c.seed,
                train_loss_final: c.train_loss_final,
                test_mse: c.test_mse,
                test_se: c.test_se,
                n_params: c.n_params,
                wall_ms: c.wall_ms,
                status: if c.failed { "failed" } else { "ok" },
                config_hash: &self.config_hash,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Log-log plot of the medians with the fitted line and the theoretical
    /// slope drawn through the first median.
    pub fn svg(&self) -> String {
        let (w, h, pad) = (640.0, 480.0, 60.0);
        let pts: Vec<(f64, f64)> =
            self.medians.iter().filter(|m| m.1 > 0.0).map(|m| ((m.0 as f64).log10(), m.1.log10())).collect();
        let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
        s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        if pts.is_empty() {
            s.push_str("</svg>\n");
            return s;
        }
        let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
        let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
        let line_at = |slope: f64, icpt: f64, x: f64| icpt + slope * x;
        if let Some(f) = &self.fit {
            for x in [x0, x1] {
                let y = line_at(f.slope, f.intercept / std::f64::consts::LN_10, x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        let theory = self.theory_slope.map(|t| (t, pts[0].1 - t * pts[0].0));
        if let Some((t, c)) = theory {
            for x in [x0, x1] {
                y0 = y0.min(line_at(t, c, x));
                y1 = y1.max(line_at(t, c, x));
            }
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", h - pad, w - pad, h - pad);
        let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>", h - pad);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"14\">log10 size</text>", w / 2.0 - 30.0, h - 15.0);
        let _ = writeln!(s, "<text x=\"10\" y=\"{}\" font-size=\"14\">log10 error</text>", pad - 20.0);
        let _ = writeln!(s, "<text x=\"{pad}\" y=\"{}\" font-size=\"11\">{x0:.2}</text>", h - pad + 15.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"11\">{x1:.2}</text>", w - pad - 20.0, h - pad + 15.0);
        let _ = writeln!(s, "<text x=\"5\" y=\"{}\" font-size=\"11\">{y0:.2}</text>", h - pad);
        let _ = writeln!(s, "<text x=\"5\" y=\"{}\" font-size=\"11\">{y1:.2}</text>", pad + 5.0);
        if let Some(f) = &self.fit {
            let c = f.intercept / std::f64::consts::LN_10;
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"steelblue\" stroke-width=\"2\"/>",
                px(x0),
                py(line_at(f.slope, c, x0)),
                px(x1),
                py(line_at(f.slope, c, x1))
            );
            let _ = writeln!(s, "<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"steelblue\">fit slope {:.3} (R² {:.3})</text>", w - 260.0, f.slope, f.r2);
        }
        if let Some((t, c)) = theory {
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>",
                px(x0),
                py(line_at(t, c, x0)),
                px(x1),
                py(line_at(t, c, x1))
            );
            let _ = writeln!(s, "<text x=\"{}\" y=\"36\" font-size=\"12\" fill=\"firebrick\">theory slope {t:.3}</text>", w - 260.0);
        }
        for (x, y) in &pts {
            let _ = writeln!(s, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"black\"/>", px(*x), py(*y));
        }
        let _ = writeln!(s, "<!-- config {} -->", self.config_hash);
        s.push_str("</svg>\n");
        s
    }

    /// Writes `sweep.csv`, `summary.json` and optionally `plot.svg` into `dir`.
    pub fn write_outputs(&self, dir: &Path, plot: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(&dir.join("sweep.csv"))?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary())?)?;
        if plot {
            std::fs::write(dir.join("plot.svg"), self.svg())?;
        }
        Ok(())
    }
}

/// Reads a CSV written by [`SweepResult::write_csv`] back into cells.
pub fn read_cells(path: &Path) -> Result<(Vec<CellResult>, String)> {
    #[derive(Deserialize)]
    struct Row {
        size: usize,
        seed: u64,
        train_loss_final: f64,
        test_mse: f64,
        test_se: f64,
        n_params: usize,
        wall_ms: u64,
        status: String,
        config_hash: String,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut cells = Vec::new();
    let mut hash = String::new();
    for row in r.deserialize() {
        let row: Row = row?;
        hash = row.config_hash;
        cells.push(CellResult {
            size: row.size,
            seed: row.seed,
            n: 0,
            n_y: 0,
            pairs: 0,
            n_params: row.n_params,
            train_loss_final: row.train_loss_final,
            loss_tail: Vec::new(),
            test_mse: row.test_mse,
            test_se: row.test_se,
            wall_ms: row.wall_ms,
            failed: row.status != "ok",
        });
    }
    if cells.is_empty() {
        return Err(Error::Malformed(format!("{} has no rows", path.display())));
    }
    Ok((cells, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis_quadrature::build_encoding;

    fn transport(modes: usize) -> ProblemSetup {
        ProblemConfig::Transport { gamma: 1.0, velocity: 1.0, time: 0.5, modes, coef_bound: 1.0 }.setup().unwrap()
    }

    fn tiny(seed: u64, zero_last: bool) -> (ProblemSetup, Vec<Vec<f64>>, DeepOnetModel) {
        let setup = transport(2);
        let grid = build_encoding(&setup.basis).unwrap().grid;
        let arch = TrainableArch::dense(grid.len(), 1, 2, 3, 8, 10.0);
        let input = InputDescriptor { kind: "quadrature".into(), points: grid.clone() };
        let model = init_trainable(&arch, input, seed, zero_last).unwrap();
        (setup, grid, model)
    }

    struct Zero(usize);

    impl OperatorModel for Zero {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn predict(&self, _: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
            Ok(vec![0.0; points.len()])
        }
    }

    #[test]
    fn self_realizable_target_is_fit() {
        let (setup, grid, teacher) = tiny(11, false);
        let ds = make_dataset(&setup, &grid, "quadrature", 8, 8, 0.0, 3).unwrap();
        let ds = relabel(&ds, &teacher).unwrap();
        let (_, _, student) = tiny(12, false);
        let settings = AdamSettings { steps: 20_000, lr: 3e-3, final_lr_fraction: 0.01, ..AdamSettings::default() };
        let out = erm_train(student, &ds, &settings).unwrap();
        assert!(!out.failed);
        assert!(out.final_loss() <= out.trace[0].1);
        assert!(out.final_loss() <= 1e-6, "final loss {}", out.final_loss());
    }

    #[test]
    fn zero_target_zero_init_starts_at_zero() {
        let (setup, grid, model) = tiny(1, true);
        let mut ds = make_dataset(&setup, &grid, "quadrature", 4, 4, 0.0, 1).unwrap();
        ds.values.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
        let out = erm_train(model, &ds, &AdamSettings { steps: 5, ..AdamSettings::default() }).unwrap();
        assert_eq!(out.trace[0].1, 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (setup, grid, model) = tiny(5, false);
        let ds = make_dataset(&setup, &grid, "quadrature", 16, 8, 0.01, 9).unwrap();
        let s = AdamSettings { steps: 200, batch: Some(32), checkpoints: 10, seed: 4, ..AdamSettings::default() };
        let a = erm_train(model.clone(), &ds, &s).unwrap();
        let b = erm_train(model, &ds, &s).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn divergence_is_flagged() {
        let (setup, grid, model) = tiny(5, false);
        let mut ds = make_dataset(&setup, &grid, "quadrature", 4, 4, 0.0, 9).unwrap();
        ds.values[0][0] = f64::NAN;
        let out = erm_train(model, &ds, &AdamSettings { steps: 3, ..AdamSettings::default() }).unwrap();
        assert!(out.failed);
    }

    #[test]
    fn clamping_holds_every_step() {
        let (setup, grid, model) = tiny(2, false);
        let ds = make_dataset(&setup, &grid, "quadrature", 8, 4, 0.0, 2).unwrap();
        let out = erm_train(model, &ds, &AdamSettings { steps: 50, lr: 0.1, kappa: Some(0.3), ..AdamSettings::default() }).unwrap();
        assert!(out.model.max_abs_param() <= 0.3);
    }

    #[test]
    fn zero_model_matches_parseval() {
        let setup = transport(4);
        let grid = build_encoding(&setup.basis).unwrap().grid;
        let test = TestConfig { functions: 2000, points: 32, seed: 5 };
        let est = estimate_generalization(&Zero(grid.len()), &setup, &grid, &test).unwrap();
        // ‖G(u)‖² = Σ α_j² with α_j uniform on [-1, 1], averaged over |Ω| = 2.
        let exact = 4.0 / 3.0 / 2.0;
        assert!((est.mean - exact).abs() <= 3.0 * est.se, "{est:?} vs {exact}");
        // The same draws measured in coefficient space.
        let coef: f64 = (0..test.functions)
            .map(|i| {
                let (_, a) = sample_input(&setup.basis, 1.0, &mut sample_rng(test.seed, i as u64)).unwrap();
                a.iter().map(|x| x * x).sum::<f64>() / 2.0
            })
            .sum::<f64>()
            / test.functions as f64;
        assert!((est.mean - coef).abs() <= 3.0 * est.se);
    }

    #[test]
    fn standard_error_halves_when_size_quadruples() {
        let setup = transport(2);
        let grid = build_encoding(&setup.basis).unwrap().grid;
        let mut ratios = Vec::new();
        for seed in 0..5 {
            let a = estimate_generalization(&Zero(grid.len()), &setup, &grid, &TestConfig { functions: 400, points: 16, seed }).unwrap();
            let b = estimate_generalization(&Zero(grid.len()), &setup, &grid, &TestConfig { functions: 1600, points: 16, seed: seed + 100 })
                .unwrap();
            ratios.push(b.se / a.se);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 0.5).abs() <= 0.15, "{ratios:?}");
    }

    #[test]
    fn estimate_ignores_training_noise() {
        let (setup, grid, model) = tiny(3, false);
        let test = TestConfig { functions: 20, points: 8, seed: 1 };
        let a = estimate_generalization(&model, &setup, &grid, &test).unwrap();
        let b = estimate_generalization(&model, &setup, &grid, &test).unwrap();
        assert_eq!(a, b);
        assert!(estimate_generalization(&model, &setup, &grid, &TestConfig { functions: 0, ..test }).is_err());
    }

    #[test]
    fn power_law_examples() {
        let f = fit_power_law(&[(1.0, 1.0), (10.0, 0.01)]).unwrap();
        assert!((f.slope + 2.0).abs() <= 1e-12);
        let f = fit_power_law(&[(1.0, 3.0), (10.0, 3.0)]).unwrap();
        assert!(f.slope.abs() <= 1e-12 && f.r2 == 1.0);
        let pts: Vec<(f64, f64)> = (0..6).map(|k| 10f64.powi(k)).map(|x| (x, 4.0 * x.powf(-2.0))).collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.slope + 2.0).abs() <= 1e-12 && (f.r2 - 1.0).abs() <= 1e-12);
        assert!((f.intercept - 4f64.ln()).abs() <= 1e-9);
        let with_bad = [(1.0, 1.0), (2.0, -1.0), (10.0, 0.01)];
        assert_eq!(fit_power_law(&with_bad).unwrap().excluded, 1);
        assert!(fit_power_law(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn noisy_power_law_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let x = 2f64.powf(k as f64 / 3.0);
                (x, 2.5 * x.powf(-0.4) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.slope + 0.4).abs() <= 0.05);
    }

    fn cell(size: usize, seed: u64, mse: f64) -> CellResult {
        CellResult {
            size,
            seed,
            n: 1,
            n_y: 1,
            pairs: 1,
            n_params: 1,
            train_loss_final: 0.0,
            loss_tail: vec![],
            test_mse: mse,
            test_se: 0.0,
            wall_ms: 0,
            failed: false,
        }
    }

    #[test]
    fn summaries_of_injected_results() {
        let sizes = vec![10, 100, 1000];
        let cells: Vec<CellResult> =
            sizes.iter().flat_map(|&s| (0..3).map(move |r| cell(s, r, 4.0 * (s as f64).powi(-2) * (1.0 + 0.1 * r as f64 - 0.1)))).collect();
        let (medians, fit) = summarize(&cells, &sizes);
        assert_eq!(medians.len(), 3);
        let fit = fit.unwrap();
        assert!((fit.slope + 2.0).abs() <= 1e-12 && (fit.r2 - 1.0).abs() <= 1e-12);

        let same = vec![64, 64, 64];
        let cells: Vec<CellResult> = (0..3).map(|r| cell(64, r, 0.5)).collect();
        let (medians, fit) = summarize(&cells, &same);
        assert_eq!(medians, vec![(64, 0.5)]);
        assert!(fit.is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn sweep_config_checks() {
        let mut c = SweepConfig::default();
        assert!(c.validate().is_ok());
        c.seeds = vec![1, 2];
        assert!(c.validate().is_err());
        let mut c = SweepConfig { sizes: vec![64, 32, 128], ..SweepConfig::default() };
        assert!(c.validate().is_err());
        c.sizes = vec![64, 128];
        assert!(c.validate().is_err());
        assert_eq!(SweepConfig::default().hash(), SweepConfig::default().hash());
        assert_ne!(SweepConfig::default().hash(), SweepConfig { sigma: 0.02, ..SweepConfig::default() }.hash());
    }

    #[test]
    fn small_sweep_runs_and_reproduces() {
        let config = SweepConfig {
            sizes: vec![32, 64, 128],
            seeds: vec![0, 1, 2],
            points_per_function: 8,
            optimizer: AdamSettings { steps: 30, ..AdamSettings::default() },
            test: TestConfig { functions: 10, points: 8, seed: 1 },
            ..SweepConfig::default()
        };
        let a = run_sweep(&config).unwrap();
        let b = run_sweep(&config).unwrap();
        assert_eq!(a.cells.len(), 9);
        assert_eq!(a.medians, b.medians);
        assert!((a.theory_slope.unwrap() + 2.0 / 7.0).abs() <= 1e-12);
        let dir = std::env::temp_dir().join(format!("opscale-sweep-{}", std::process::id()));
        a.write_outputs(&dir, true).unwrap();
        let (cells, hash) = read_cells(&dir.join("sweep.csv")).unwrap();
        assert_eq!(cells.len(), 9);
        assert_eq!(hash, config.hash());
        let summary: SweepSummary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary.config_hash, hash);
        assert!(std::fs::read_to_string(dir.join("plot.svg")).unwrap().contains(&hash));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
