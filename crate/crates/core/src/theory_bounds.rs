//! Order-level architecture budgets, the log covering-number bound of the
//! DeepONet class, and predicted error-versus-size curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::relu_net::NetworkClassSpec;

/// Real-valued class sizes; budgets from order formulas rarely fit `usize`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSizes {
    pub depth: f64,
    pub width: f64,
    pub nonzeros: f64,
    pub magnitude: f64,
    pub output_bound: f64,
}

impl From<&NetworkClassSpec> for ClassSizes {
    fn from(s: &NetworkClassSpec) -> Self {
        Self {
            depth: s.depth as f64,
            width: s.width as f64,
            nonzeros: s.nonzeros as f64,
            magnitude: s.magnitude,
            output_bound: s.output_bound,
        }
    }
}

impl ClassSizes {
    pub fn ones() -> Self {
        Self { depth: 1.0, width: 1.0, nonzeros: 1.0, magnitude: 1.0, output_bound: 1.0 }
    }

    /// Rounds up into a class spec; `None` if any count is not representable.
    pub fn to_spec(&self, d_in: usize) -> Option<NetworkClassSpec> {
        let count = |v: f64| (v.is_finite() && v >= 0.0 && v < 1e18).then(|| v.ceil() as usize);
        Some(NetworkClassSpec {
            d_in,
            d_out: 1,
            depth: count(self.depth)?,
            width: count(self.width)?,
            nonzeros: count(self.nonzeros)?,
            magnitude: self.magnitude,
            output_bound: self.output_bound,
        })
    }
}

/// `log H` and the log covering-number bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringBound {
    pub log_h: f64,
    pub log_bound: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// Log of the covering number bound of `{Σ_k a_k q_k}` at scale `theta`,
/// with trunk nets from `trunk` on inputs bounded by `gamma2` and branch nets
/// from `branch` on inputs bounded by `beta_u`:
///
/// `H = N (R₁L₁(p₁γ₂+2)(κ₁p₁)^{L₁-1} + R₂L₂(p₂β_U+2)(κ₂p₂)^{L₂-1})`,
/// `log 𝒩 ≤ NK₁ log(2L₁p₁²κ₁H/θ) + NK₂ log(2L₂p₂²κ₂H/θ)`.
///
/// Everything is evaluated in log space.
pub fn covering_bound(
    trunk: &ClassSizes,
    branch: &ClassSizes,
    pairs: f64,
    theta: f64,
    gamma2: f64,
    beta_u: f64,
) -> Result<CoveringBound> {
    if !(theta > 0.0) {
        return invalid(format!("covering scale must be positive, got {theta}"));
    }
    if !(pairs > 0.0) {
        return invalid("pair count must be positive");
    }
    let term = |c: &ClassSizes, radius: f64| {
        c.output_bound.ln() + c.depth.ln() + (c.width * radius + 2.0).ln() + (c.depth - 1.0) * (c.magnitude * c.width).ln()
    };
    let log_h = pairs.ln() + log_sum_exp(term(trunk, gamma2), term(branch, beta_u));
    let factor = |c: &ClassSizes| {
        pairs * c.nonzeros * ((2.0 * c.depth).ln() + 2.0 * c.width.ln() + c.magnitude.ln() + log_h - theta.ln())
    };
    Ok(CoveringBound { log_h, log_bound: factor(trunk) + factor(branch) })
}

/// Outcome of one finite-difference monotonicity probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub parameter: String,
    pub increasing: bool,
    pub passed: bool,
}

/// Perturbs each size upward from a baseline and checks the direction in
/// which the covering bound moves.
pub fn monotonicity_probes() -> Vec<Probe> {
    let base_t = ClassSizes { depth: 3.0, width: 4.0, nonzeros: 20.0, magnitude: 2.0, output_bound: 1.0 };
    let base_b = ClassSizes { depth: 4.0, width: 6.0, nonzeros: 50.0, magnitude: 3.0, output_bound: 2.0 };
    let (pairs, theta, g2, bu) = (5.0, 0.1, 1.0, 1.0);
    let eval = |t: &ClassSizes, b: &ClassSizes, n: f64, th: f64| covering_bound(t, b, n, th, g2, bu).unwrap().log_bound;
    let base = eval(&base_t, &base_b, pairs, theta);
    let mut out = Vec::new();
    let mut push = |name: &str, value: f64, increasing: bool| {
        let passed = if increasing { value > base } else { value < base };
        out.push(Probe { parameter: name.to_string(), increasing, passed });
    };
    push("N", eval(&base_t, &base_b, pairs * 1.5, theta), true);
    push("theta", eval(&base_t, &base_b, pairs, theta * 2.0), false);
    type Field = fn(&mut ClassSizes) -> &mut f64;
    let fields: [(&str, Field); 4] = [
        ("K", |c| &mut c.nonzeros),
        ("L", |c| &mut c.depth),
        ("p", |c| &mut c.width),
        ("kappa", |c| &mut c.magnitude),
    ];
    for (name, field) in fields {
        let mut t = base_t;
        *field(&mut t) *= 1.5;
        push(&format!("{name}1"), eval(&t, &base_b, pairs, theta), true);
        let mut b = base_b;
        *field(&mut b) *= 1.5;
        push(&format!("{name}2"), eval(&base_t, &b, pairs, theta), true);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    GeneralApprox,
    GeneralGen,
    LowdimApprox,
    LowdimGen,
}

impl FromStr for RateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general-approx" => Ok(Self::GeneralApprox),
            "general-gen" => Ok(Self::GeneralGen),
            "lowdim-approx" => Ok(Self::LowdimApprox),
            "lowdim-gen" => Ok(Self::LowdimGen),
            other => invalid(format!("unknown rate case '{other}'")),
        }
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GeneralApprox => "general-approx",
            Self::GeneralGen => "general-gen",
            Self::LowdimApprox => "lowdim-approx",
            Self::LowdimGen => "lowdim-gen",
        })
    }
}

/// Which error-versus-size law to evaluate, with its dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCase {
    pub kind: RateKind,
    pub d1: usize,
    pub d2: usize,
    pub b_u: Option<usize>,
}

impl RateCase {
    pub fn new(kind: RateKind, d1: usize, d2: usize, b_u: Option<usize>) -> Result<Self> {
        let lowdim = matches!(kind, RateKind::LowdimApprox | RateKind::LowdimGen);
        if lowdim && b_u.is_none() {
            return invalid(format!("{kind} needs b_U"));
        }
        if !lowdim && b_u.is_some() {
            return invalid(format!("{kind} does not take b_U"));
        }
        if d1 == 0 || d2 == 0 {
            return invalid("dimensions must be positive");
        }
        Ok(Self { kind, d1, d2, b_u })
    }

    /// Power of the size (low-dimensional cases) or of `log s / log log s`
    /// (general cases).
    pub fn exponent(&self) -> f64 {
        let (d1, d2) = (self.d1 as f64, self.d2 as f64);
        let b = self.b_u.unwrap_or(0) as f64;
        match self.kind {
            RateKind::GeneralApprox => -1.0 / d1,
            RateKind::GeneralGen => -2.0 / d1,
            RateKind::LowdimApprox => -1.0 / ((d2 + 1.0) * b + d2),
            RateKind::LowdimGen => -2.0 / (2.0 + (d2 + 1.0) * b + d2),
        }
    }

    /// The exponent as `numerator / denominator`.
    pub fn exponent_ratio(&self) -> (i64, u64) {
        let (d1, d2, b) = (self.d1 as u64, self.d2 as u64, self.b_u.unwrap_or(0) as u64);
        match self.kind {
            RateKind::GeneralApprox => (-1, d1),
            RateKind::GeneralGen => (-2, d1),
            RateKind::LowdimApprox => (-1, (d2 + 1) * b + d2),
            RateKind::LowdimGen => (-2, 2 + (d2 + 1) * b + d2),
        }
    }

    /// Whether the law is a power of `log s / log log s`.
    pub fn is_log_law(&self) -> bool {
        matches!(self.kind, RateKind::GeneralApprox | RateKind::GeneralGen)
    }

    pub fn formula(&self) -> String {
        let var = match self.kind {
            RateKind::GeneralApprox | RateKind::LowdimApprox => "N#",
            _ => "n*n_y",
        };
        if self.is_log_law() {
            format!("(log({var})/log(log({var})))^({})", self.exponent())
        } else {
            format!("({var})^({})", self.exponent())
        }
    }

    /// Unnormalized law at one size.
    pub fn raw(&self, size: f64) -> f64 {
        if self.is_log_law() {
            (size.ln() / size.ln().ln()).powf(self.exponent())
        } else {
            size.powf(self.exponent())
        }
    }
}

/// Predicted error at each size, normalized to 1 at the smallest size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub sizes: Vec<f64>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub formula: String,
}

pub fn rate_predict(case: &RateCase, sizes: &[f64]) -> Result<RateCurve> {
    if sizes.is_empty() {
        return invalid("no sizes given");
    }
    let floor = if case.is_log_law() { std::f64::consts::E.powi(2) } else { 0.0 };
    if let Some(bad) = sizes.iter().find(|s| !(**s > floor) && !(case.is_log_law() && **s == floor)) {
        return invalid(format!("size {bad} is below the admissible floor {floor}"));
    }
    let smallest = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = case.raw(smallest);
    Ok(RateCurve {
        sizes: sizes.to_vec(),
        values: sizes.iter().map(|s| case.raw(*s) / reference).collect(),
        exponent: case.exponent(),
        formula: case.formula(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremTag {
    T1,
    T2,
    T8,
    T10,
}

impl FromStr for TheoremTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(Self::T1),
            "T2" => Ok(Self::T2),
            "T8" => Ok(Self::T8),
            "T10" => Ok(Self::T10),
            other => invalid(format!("unknown theorem tag '{other}'")),
        }
    }
}

/// Inputs to [`theory_architecture`]. Unset constants default to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub eps: Option<f64>,
    /// `n · n_y` for the data-driven budgets.
    pub samples: Option<f64>,
    pub d1: usize,
    pub d2: usize,
    pub b_u: Option<usize>,
    /// Cover size; defaults to `C ε^{-d₁}`.
    pub c_u: Option<f64>,
    /// Sampling grid size of the low-dimensional branch input.
    pub n_x: Option<f64>,
    pub constant: f64,
    pub output_bound: f64,
}

impl Default for TheoryInputs {
    fn default() -> Self {
        Self { eps: None, samples: None, d1: 1, d2: 1, b_u: None, c_u: None, n_x: None, constant: 1.0, output_bound: 1.0 }
    }
}

/// Order-level budgets with every hidden constant set to the supplied value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryArchitecture {
    pub tag: TheoremTag,
    pub eps: f64,
    pub pairs: f64,
    pub trunk: ClassSizes,
    pub branch: ClassSizes,
    pub branch_input_dim: f64,
}

pub fn theory_architecture(tag: TheoremTag, inp: &TheoryInputs) -> Result<TheoryArchitecture> {
    let c = inp.constant;
    let (d1, d2) = (inp.d1 as f64, inp.d2 as f64);
    let need_b = || inp.b_u.map(|b| b as f64).ok_or_else(|| Error::InvalidArgument(format!("{tag:?} needs b_U")));
    let need_samples = || {
        inp.samples
            .filter(|s| *s > 1.0)
            .ok_or_else(|| Error::InvalidArgument(format!("{tag:?} needs n·n_y > 1")))
    };
    let eps = match tag {
        TheoremTag::T1 | TheoremTag::T8 => inp.eps.ok_or_else(|| Error::InvalidArgument(format!("{tag:?} needs ε")))?,
        TheoremTag::T2 => match (inp.eps, inp.samples) {
            (Some(e), _) => e,
            (None, Some(s)) if s > std::f64::consts::E => (s.ln() / s.ln().ln()).powf(-1.0 / d1),
            _ => return invalid("T2 needs ε or n·n_y > e"),
        },
        TheoremTag::T10 => need_samples()?.powf(-1.0 / (2.0 + (d2 + 1.0) * need_b()? + d2)),
    };
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("ε must lie in (0, 1), got {eps}"));
    }
    let li = (1.0 / eps).ln();
    let trunk = ClassSizes { depth: c * li, width: c, nonzeros: c * li, magnitude: c / eps, output_bound: 1.0 };
    let pairs = c * eps.powf(-d2);
    let r = inp.output_bound;
    let (branch, input_dim) = match tag {
        TheoremTag::T1 => {
            let cu = inp.c_u.unwrap_or(c * eps.powf(-d1));
            let depth = c * (cu * cu * cu.ln().max(0.0) + cu * cu * li);
            let width = c * cu.sqrt() * eps.powf(-(d2 + 1.0) * cu);
            let branch = ClassSizes {
                depth,
                width,
                nonzeros: width * depth,
                magnitude: c * cu.powf(cu / 2.0 + 1.0) * eps.powf(-(d2 + 1.0) * (cu + 1.0)),
                output_bound: r,
            };
            (branch, cu)
        }
        TheoremTag::T2 => {
            let c1 = c;
            let input_dim = c * eps.powf(-c1 * eps.powf(-d1));
            let width = c * eps.powf(-c1 * (d2 + 1.0) * eps.powf(-d1 * (d2 + 1.0)));
            let branch = ClassSizes {
                depth: c * li,
                width,
                nonzeros: width * li,
                magnitude: c * eps.powf(-(d2 + 1.0)),
                output_bound: r,
            };
            (branch, input_dim)
        }
        TheoremTag::T8 | TheoremTag::T10 => {
            let b = need_b()?;
            let n_x = inp.n_x.unwrap_or(b);
            let width = c * eps.powf(-(d2 + 1.0) * b);
            let branch = ClassSizes {
                depth: c * li,
                width,
                nonzeros: width * (li + n_x),
                magnitude: c * eps.powf(-(d2 + 1.0) * (b + 1.0)),
                output_bound: r,
            };
            (branch, n_x)
        }
    };
    Ok(TheoryArchitecture { tag, eps, pairs, trunk, branch, branch_input_dim: input_dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_covering_bound() {
        let one = ClassSizes::ones();
        let b = covering_bound(&one, &one, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((b.log_h - 6f64.ln()).abs() <= 1e-12);
        assert!((b.log_bound - 144f64.ln()).abs() <= 1e-12);
        assert!(covering_bound(&one, &one, 1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn covering_bound_matches_direct_formula() {
        let t = ClassSizes { depth: 3.0, width: 2.0, nonzeros: 7.0, magnitude: 1.5, output_bound: 1.0 };
        let b = ClassSizes { depth: 2.0, width: 3.0, nonzeros: 9.0, magnitude: 2.0, output_bound: 2.0 };
        let (n, theta, g2, bu) = (2.0, 0.5, 1.0, 0.7);
        let h = n * (1.0 * 3.0 * (2.0 * g2 + 2.0) * (1.5f64 * 2.0).powi(2) + 2.0 * 2.0 * (3.0 * bu + 2.0) * (2.0f64 * 3.0).powi(1));
        let direct = (n * 7.0) * (2.0 * 3.0 * 4.0 * 1.5 * h / theta).ln() + (n * 9.0) * (2.0 * 2.0 * 9.0 * 2.0 * h / theta).ln();
        let got = covering_bound(&t, &b, n, theta, g2, bu).unwrap();
        assert!((got.log_h - h.ln()).abs() <= 1e-12);
        assert!((got.log_bound - direct).abs() <= 1e-9 * direct.abs());
    }

    #[test]
    fn covering_bound_survives_huge_budgets() {
        let big = ClassSizes { depth: 400.0, width: 1e4, nonzeros: 1e9, magnitude: 1e6, output_bound: 10.0 };
        let b = covering_bound(&big, &big, 1e6, 1e-3, 1.0, 1.0).unwrap();
        assert!(b.log_h.is_finite() && b.log_bound.is_finite());
    }

    #[test]
    fn probes_pass() {
        let probes = monotonicity_probes();
        assert_eq!(probes.len(), 10);
        for p in probes {
            assert!(p.passed, "{p:?}");
        }
    }

    #[test]
    fn exponents() {
        let g = RateCase::new(RateKind::LowdimGen, 1, 1, Some(2)).unwrap();
        assert!((g.exponent() + 2.0 / 7.0).abs() <= 1e-15);
        let a = RateCase::new(RateKind::LowdimApprox, 1, 1, Some(1)).unwrap();
        assert!((a.exponent() + 1.0 / 3.0).abs() <= 1e-15);
        assert_eq!(g.exponent_ratio(), (-2, 7));
        assert_eq!(a.exponent_ratio(), (-1, 3));
        assert!(RateCase::new(RateKind::LowdimGen, 1, 1, None).is_err());
        assert!("bogus".parse::<RateKind>().is_err());
    }

    #[test]
    fn general_laws_follow_the_table() {
        for d1 in 1..=3 {
            let approx = RateCase::new(RateKind::GeneralApprox, d1, 1, None).unwrap();
            let gen = RateCase::new(RateKind::GeneralGen, d1, 1, None).unwrap();
            for s in [10.0f64, 1e3, 1e6] {
                let ratio = s.ln() / s.ln().ln();
                assert!((approx.raw(s) - ratio.powf(-1.0 / d1 as f64)).abs() <= 1e-14);
                assert!((gen.raw(s) - ratio.powf(-2.0 / d1 as f64)).abs() <= 1e-14);
            }
            assert_eq!(approx.formula(), format!("(log(N#)/log(log(N#)))^({})", -1.0 / d1 as f64));
        }
    }

    #[test]
    fn curves_normalize_and_decrease() {
        let sizes: Vec<f64> = (4..=14).map(|k| 2f64.powi(k)).collect();
        for kind in [RateKind::GeneralApprox, RateKind::GeneralGen] {
            let curve = rate_predict(&RateCase::new(kind, 2, 1, None).unwrap(), &sizes).unwrap();
            assert_eq!(curve.values[0], 1.0);
            for w in curve.values.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
        let case = RateCase::new(RateKind::GeneralGen, 1, 1, None).unwrap();
        assert!(rate_predict(&case, &[3.0]).is_err());
    }

    #[test]
    fn lowdim_slope_is_recovered() {
        let case = RateCase::new(RateKind::LowdimGen, 1, 1, Some(2)).unwrap();
        let c = rate_predict(&case, &[256.0, 16384.0]).unwrap();
        let slope = (c.values[1] / c.values[0]).ln() / (16384f64 / 256.0).ln();
        assert!((slope + 2.0 / 7.0).abs() <= 1e-12);
    }

    #[test]
    fn theorem_budgets() {
        let t8 = theory_architecture(
            TheoremTag::T8,
            &TheoryInputs { eps: Some(0.1), b_u: Some(2), ..TheoryInputs::default() },
        )
        .unwrap();
        assert!((t8.pairs - 10.0).abs() <= 1e-9);
        let t10 = theory_architecture(
            TheoremTag::T10,
            &TheoryInputs { samples: Some(2f64.powi(14)), b_u: Some(2), ..TheoryInputs::default() },
        )
        .unwrap();
        assert!((t10.pairs - 2f64.powi(14).powf(1.0 / 7.0)).abs() <= 1e-9);
        let k = |eps: f64| {
            theory_architecture(TheoremTag::T1, &TheoryInputs { eps: Some(eps), c_u: Some(2.0), ..TheoryInputs::default() })
                .unwrap()
                .branch
                .magnitude
        };
        assert!(k(0.05) > k(0.1));
        assert!("T9".parse::<TheoremTag>().is_err());
        assert!(theory_architecture(TheoremTag::T8, &TheoryInputs { eps: Some(0.1), ..TheoryInputs::default() }).is_err());
        let t2 = theory_architecture(TheoremTag::T2, &TheoryInputs { eps: Some(0.5), ..TheoryInputs::default() }).unwrap();
        assert!(t2.branch_input_dim > 1.0 && t2.branch.width.is_finite());
    }

    #[test]
    fn sizes_convert_to_specs() {
        let s = ClassSizes { depth: 2.3, width: 4.0, nonzeros: 10.1, magnitude: 3.0, output_bound: 1.0 };
        let spec = s.to_spec(3).unwrap();
        assert_eq!((spec.depth, spec.nonzeros), (3, 11));
        assert!(ClassSizes { width: f64::INFINITY, ..s }.to_spec(3).is_none());
    }
}
