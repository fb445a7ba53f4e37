//! Data generators for the two simulation studies and the rejection-rate
//! harness that drives them.
//!
//! The convex scenario draws responses from a mixture phi F1 + (1 - phi) F2
//! of a surface linear in x and a genuinely nonlinear one, so phi = 1 puts
//! the null (FLM) exactly true. The mixed scenario draws the response from
//! the PS-ANOVA mixed model itself, with the two non-FLM variance components
//! set per scenario point and the FLM component fixed at variance 4.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::design::{build_psanova_design, quadrature_weights, QuadratureRule};
use crate::error::{Error, Result};
use crate::hypothesis::{
    test_knownsig1, test_linear_in_t, test_linearity_bonferroni, test_linearity_bootstrap,
    test_linearity_equalvc, test_no_effect, TestMethod, TestOptions,
};
use crate::seed;

/// Functional predictors X(t) = sum_{j=1..4} xi_j phi_j(t) with
/// xi_j ~ N(0, 8 j^-2) and the sine/cosine system, observed at `j` equally
/// spaced points on [0, 1].
pub fn gen_predictors(n: usize, j: usize, seed_value: u64) -> (DMatrix<f64>, Vec<f64>) {
    assert!(j >= 4, "need at least four observation points");
    let grid: Vec<f64> = (0..j).map(|i| i as f64 / (j - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    let pi = std::f64::consts::PI;
    let mut x = DMatrix::zeros(n, j);
    for i in 0..n {
        let xi: Vec<f64> = (1..=4)
            .map(|k| rng.sample::<f64, _>(StandardNormal) * (8.0 / (k * k) as f64).sqrt())
            .collect();
        for (c, &t) in grid.iter().enumerate() {
            x[(i, c)] = xi[0] * (pi * t).sin()
                + xi[1] * (pi * t).cos()
                + xi[2] * (2.0 * pi * t).sin()
                + xi[3] * (2.0 * pi * t).cos();
        }
    }
    (x, grid)
}

/// Surface linear in x: F1(x, t) = 2 x sin(pi t).
fn f1(x: f64, t: f64) -> f64 {
    2.0 * x * (std::f64::consts::PI * t).sin()
}

/// Nonlinear surface: F2(x, t) = 10 cos(pi (-x/8 + t/4 - 5)). The angular
/// scaling makes the cosine genuinely curved over the predictor range and
/// balances the two surfaces' signal contributions.
fn f2(x: f64, t: f64) -> f64 {
    10.0 * (std::f64::consts::PI * (-x / 8.0 + t / 4.0 - 5.0)).cos()
}

/// Convex-combination responses: Y_i is the trapezoid integral of
/// phi F1 + (1 - phi) F2 along curve i plus standard normal noise.
pub fn gen_response_convex(
    x: &DMatrix<f64>,
    grid: &[f64],
    phi: f64,
    seed_value: u64,
) -> DVector<f64> {
    assert!((0.0..=1.0).contains(&phi), "phi must lie in [0, 1]");
    let n = x.nrows();
    let quad = quadrature_weights(1, grid, QuadratureRule::Trapezoid)
        .expect("caller provides a valid grid");
    let weights = quad.weights().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    DVector::from_fn(n, |i, _| {
        let mut acc = 0.0;
        for (j, &t) in grid.iter().enumerate() {
            let xv = x[(i, j)];
            acc += weights[j] * (phi * f1(xv, t) + (1.0 - phi) * f2(xv, t));
        }
        acc + rng.sample::<f64, _>(StandardNormal)
    })
}

/// A mixed-model draw together with the true random effects (the quasi-
/// oracle test needs the FLM block).
#[derive(Debug, Clone)]
pub struct MixedTruth {
    pub y: DVector<f64>,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    pub b3: DVector<f64>,
}

/// Mixed-scenario responses: the PS-ANOVA design of the supplied curves is
/// built, b1 ~ N(0, 4 I), b_j ~ N(0, sigma_j^2 I) for j = 2, 3, and
/// Y = X beta + sum Z_j b_j + eps with beta = (1, 0.01, 0.01) and standard
/// normal errors.
pub fn gen_response_mixed(
    x: &DMatrix<f64>,
    grid: &[f64],
    sigma2_2: f64,
    sigma2_3: f64,
    kx: usize,
    kt: usize,
    seed_value: u64,
) -> Result<MixedTruth> {
    if sigma2_2 < 0.0 || sigma2_3 < 0.0 {
        return Err(Error::parameter("variances must be nonnegative"));
    }
    let n = x.nrows();
    let placeholder = DVector::zeros(n);
    let data = FunctionalDataset::new(placeholder, x.clone(), grid.to_vec())?;
    let quad = quadrature_weights(n, grid, QuadratureRule::Trapezoid)?;
    let design = build_psanova_design(&data, kx, kt, &quad)?;
    let beta = DVector::from_vec(vec![1.0, 0.01, 0.01]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    let b1 = DVector::from_fn(design.q1(), |_, _| {
        rng.sample::<f64, _>(StandardNormal) * 2.0
    });
    let b2 = DVector::from_fn(design.q2(), |_, _| {
        rng.sample::<f64, _>(StandardNormal) * sigma2_2.sqrt()
    });
    let b3 = DVector::from_fn(design.q3(), |_, _| {
        rng.sample::<f64, _>(StandardNormal) * sigma2_3.sqrt()
    });
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &design.x * beta + &design.z1 * &b1 + &design.z2 * &b2 + &design.z3 * &b3 + eps;
    Ok(MixedTruth { y, b1, b2, b3 })
}

/// Scenario grid of a rejection study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum Scenario {
    /// Convex-combination truth over a grid of phi values.
    Convex { phi: Vec<f64> },
    /// Mixed-model truth over (sigma2_2, sigma2_3) pairs.
    Mixed { variance_pairs: Vec<(f64, f64)> },
}

impl Scenario {
    fn name(&self) -> &'static str {
        match self {
            Scenario::Convex { .. } => "convex",
            Scenario::Mixed { .. } => "mixed",
        }
    }

    fn points(&self) -> Vec<ScenarioPoint> {
        match self {
            Scenario::Convex { phi } => phi.iter().map(|&p| ScenarioPoint::Phi(p)).collect(),
            Scenario::Mixed { variance_pairs } => variance_pairs
                .iter()
                .map(|&(a, b)| ScenarioPoint::Variances(a, b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ScenarioPoint {
    Phi(f64),
    Variances(f64, f64),
}

impl ScenarioPoint {
    fn label(&self) -> String {
        match self {
            ScenarioPoint::Phi(p) => format!("phi={p}"),
            ScenarioPoint::Variances(a, b) => format!("s2_2={a},s2_3={b}"),
        }
    }

    fn key(&self) -> u64 {
        match self {
            ScenarioPoint::Phi(p) => seed::point_key(&[1.0, *p]),
            ScenarioPoint::Variances(a, b) => seed::point_key(&[2.0, *a, *b]),
        }
    }
}

/// Full description of a rejection-rate study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub n: usize,
    #[serde(default = "default_j")]
    pub j: usize,
    pub reps: usize,
    #[serde(default = "default_k")]
    pub kx: usize,
    #[serde(default = "default_k")]
    pub kt: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_nsim")]
    pub nsim: usize,
    #[serde(default = "default_nboot")]
    pub nboot: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    #[serde(default)]
    pub quadrature: QuadratureRuleConfig,
}

fn default_j() -> usize {
    30
}
fn default_k() -> usize {
    10
}
fn default_alphas() -> Vec<f64> {
    vec![0.05]
}
fn default_nsim() -> usize {
    2000
}
fn default_nboot() -> usize {
    500
}

/// Serializable mirror of the quadrature rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRuleConfig {
    Midpoint,
    #[default]
    Trapezoid,
}

impl From<QuadratureRuleConfig> for QuadratureRule {
    fn from(c: QuadratureRuleConfig) -> Self {
        match c {
            QuadratureRuleConfig::Midpoint => QuadratureRule::Midpoint,
            QuadratureRuleConfig::Trapezoid => QuadratureRule::Trapezoid,
        }
    }
}

const METHOD_NAMES: [(&str, TestMethod); 6] = [
    ("equalvc", TestMethod::EqualVc),
    ("bonferroni", TestMethod::Bonferroni),
    ("bootstrap", TestMethod::Bootstrap),
    ("knownsig1", TestMethod::KnownSig1),
    ("no-effect", TestMethod::NoEffect),
    ("linear-in-t", TestMethod::LinearInT),
];

fn parse_method(name: &str) -> Option<TestMethod> {
    METHOD_NAMES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, m)| *m)
}

impl StudyConfig {
    /// Validates the whole configuration, returning every violation at once.
    pub fn validate(&self) -> std::result::Result<Vec<TestMethod>, Vec<String>> {
        let mut errors = Vec::new();
        if self.reps == 0 {
            errors.push("reps must be at least 1".to_string());
        }
        if self.n <= 10 {
            errors.push(format!("n must exceed 10, got {}", self.n));
        }
        if self.j < 4 {
            errors.push(format!("j must be at least 4, got {}", self.j));
        }
        if self.kx < 4 || self.kt < 4 {
            errors.push(format!(
                "kx and kt must be at least 4, got ({}, {})",
                self.kx, self.kt
            ));
        }
        if self.nsim == 0 {
            errors.push("nsim must be at least 1".to_string());
        }
        match &self.scenario {
            Scenario::Convex { phi } => {
                if phi.is_empty() {
                    errors.push("convex scenario needs at least one phi value".to_string());
                }
                for &p in phi {
                    if !(0.0..=1.0).contains(&p) {
                        errors.push(format!("phi must lie in [0, 1], got {p}"));
                    }
                }
            }
            Scenario::Mixed { variance_pairs } => {
                if variance_pairs.is_empty() {
                    errors.push("mixed scenario needs at least one variance pair".to_string());
                }
                for &(a, b) in variance_pairs {
                    if a < 0.0 || b < 0.0 {
                        errors.push(format!("variances must be nonnegative, got ({a}, {b})"));
                    }
                }
            }
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                errors.push(format!("alpha must lie in (0, 1), got {a}"));
            }
        }
        if self.alphas.is_empty() {
            errors.push("at least one alpha level is required".to_string());
        }
        let mut methods = Vec::new();
        if self.methods.is_empty() {
            errors.push("at least one method is required".to_string());
        }
        for name in &self.methods {
            match parse_method(name) {
                Some(m) => {
                    if m == TestMethod::KnownSig1 && matches!(self.scenario, Scenario::Convex { .. })
                    {
                        errors.push(
                            "knownsig1 needs the mixed scenario (it uses the true random effects)"
                                .to_string(),
                        );
                    }
                    methods.push(m);
                }
                None => errors.push(format!(
                    "unknown method '{name}'; allowed: {}",
                    METHOD_NAMES
                        .iter()
                        .map(|(n, _)| *n)
                        .collect::<Vec<_>>()
                        .join(", ")
                )),
            }
        }
        if errors.is_empty() {
            Ok(methods)
        } else {
            Err(errors)
        }
    }
}

/// One row of the aggregated rejection table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionRow {
    pub scenario: String,
    pub point: String,
    pub method: String,
    pub alpha: f64,
    pub reject_rate: f64,
    pub mcse: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Aggregated study output.
#[derive(Debug, Clone, Serialize)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
    /// Set when more than 2% of replicates failed anywhere.
    pub flagged: bool,
    pub total_failures: usize,
}

impl RejectionTable {
    /// Renders the table as CSV with a fixed header.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("scenario,point,method,alpha,reject_rate,mcse,reps,failures\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario, r.point, r.method, r.alpha, r.reject_rate, r.mcse, r.reps, r.failures
            ));
        }
        out
    }
}

struct RepOutcome {
    point_idx: usize,
    /// p-value per method, None when the replicate failed for that method.
    p_values: Vec<Option<f64>>,
}

fn method_tag(m: TestMethod) -> u64 {
    match m {
        TestMethod::EqualVc => 11,
        TestMethod::Bonferroni => 12,
        TestMethod::Bootstrap => 13,
        TestMethod::KnownSig1 => 14,
        TestMethod::NoEffect => 15,
        TestMethod::LinearInT => 16,
    }
}

/// Runs the full rejection study described by `config`. Replicates are
/// independent and deterministic: the data seed for a replicate derives from
/// (master seed, scenario-point value, replicate index), so disjoint point
/// subsets reproduce the joint run exactly.
pub fn run_rejection_study(config: &StudyConfig) -> Result<RejectionTable> {
    let methods = config
        .validate()
        .map_err(|errs| Error::parameter(errs.join("; ")))?;
    let points = config.scenario.points();
    let rule: QuadratureRule = config.quadrature.into();

    let mut outcomes: Vec<RepOutcome> = Vec::with_capacity(points.len() * config.reps);
    for (point_idx, point) in points.iter().enumerate() {
        let point_seed = seed::derive(config.seed, point.key());
        let mut point_outcomes: Vec<RepOutcome> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = seed::derive(point_seed, rep as u64);
                run_one_rep(config, &methods, *point, point_idx, rep_seed, rule)
            })
            .collect();
        outcomes.append(&mut point_outcomes);
    }

    // Aggregate.
    let mut rows = Vec::new();
    let mut total_failures = 0usize;
    for (point_idx, point) in points.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            let ps: Vec<Option<f64>> = outcomes
                .iter()
                .filter(|o| o.point_idx == point_idx)
                .map(|o| o.p_values[mi])
                .collect();
            let failures = ps.iter().filter(|p| p.is_none()).count();
            total_failures += failures;
            let ok: Vec<f64> = ps.iter().flatten().copied().collect();
            for &alpha in &config.alphas {
                let rejections = ok.iter().filter(|&&p| p <= alpha).count();
                let n_ok = ok.len();
                let rate = if n_ok > 0 {
                    rejections as f64 / n_ok as f64
                } else {
                    f64::NAN
                };
                let mcse = if n_ok > 0 {
                    (rate * (1.0 - rate) / n_ok as f64).sqrt()
                } else {
                    f64::NAN
                };
                rows.push(RejectionRow {
                    scenario: config.scenario.name().to_string(),
                    point: point.label(),
                    method: m.as_str().to_string(),
                    alpha,
                    reject_rate: rate,
                    mcse,
                    reps: n_ok,
                    failures,
                });
            }
        }
    }
    let total_cells = points.len() * methods.len() * config.reps;
    let flagged = (total_failures as f64) > 0.02 * total_cells as f64;
    Ok(RejectionTable {
        rows,
        flagged,
        total_failures,
    })
}

fn run_one_rep(
    config: &StudyConfig,
    methods: &[TestMethod],
    point: ScenarioPoint,
    point_idx: usize,
    rep_seed: u64,
    rule: QuadratureRule,
) -> RepOutcome {
    let (x, grid) = gen_predictors(config.n, config.j, seed::derive(rep_seed, 1));
    let (data, truth) = match point {
        ScenarioPoint::Phi(phi) => {
            let y = gen_response_convex(&x, &grid, phi, seed::derive(rep_seed, 2));
            (FunctionalDataset::new(y, x, grid), None)
        }
        ScenarioPoint::Variances(s2, s3) => {
            match gen_response_mixed(
                &x,
                &grid,
                s2,
                s3,
                config.kx,
                config.kt,
                seed::derive(rep_seed, 2),
            ) {
                Ok(t) => (
                    FunctionalDataset::new(t.y.clone(), x, grid),
                    Some(t),
                ),
                Err(_) => {
                    return RepOutcome {
                        point_idx,
                        p_values: vec![None; methods.len()],
                    }
                }
            }
        }
    };
    let data = match data {
        Ok(d) => d,
        Err(_) => {
            return RepOutcome {
                point_idx,
                p_values: vec![None; methods.len()],
            }
        }
    };

    let p_values = methods
        .iter()
        .map(|&m| {
            let opts = TestOptions {
                kx: config.kx,
                kt: config.kt,
                rule,
                nsim: config.nsim,
                seed: seed::derive2(rep_seed, 3, method_tag(m)),
                alpha: config.alphas[0],
                shared_nuisance_fit: true,
            };
            let result = match m {
                TestMethod::EqualVc => test_linearity_equalvc(&data, &opts),
                TestMethod::Bonferroni => test_linearity_bonferroni(&data, &opts),
                TestMethod::Bootstrap => test_linearity_bootstrap(&data, &opts, config.nboot),
                TestMethod::KnownSig1 => {
                    let t = truth.as_ref().expect("validated: mixed scenario");
                    test_knownsig1(&data, &t.b1, &opts)
                }
                TestMethod::NoEffect => test_no_effect(&data, &opts),
                TestMethod::LinearInT => test_linear_in_t(&data, &opts),
            };
            result.ok().map(|r| r.p_value)
        })
        .collect();
    RepOutcome {
        point_idx,
        p_values,
    }
}
