//! Hypothesis tests for scalar-on-function regression.
//!
//! Linearity of the regression (the FLM as the null model against the FGAM)
//! is tested through the PS-ANOVA mixed form, where linearity is exactly
//! "both non-FLM variance components are zero". Because exact theory exists
//! only for a single tested component, the procedures reduce to that case in
//! different ways:
//!
//! * `EqualVC` assumes the two non-FLM components share one variance and
//!   merges their blocks, leaving a single pseudo-RLRT;
//! * `Bonferroni` tests the components separately (the other fixed at zero)
//!   and doubles the smaller p-value;
//! * `Bootstrap` compares merged-block REML fits against a parametric
//!   bootstrap of the null fit;
//! * `KnownSig1` is the simulation-only quasi-oracle that removes the true
//!   FLM random effect instead of its BLUP.
//!
//! The FLM-level tests are `NoEffect` (maximum-likelihood LRT of the FLM
//! against the intercept-only model) and `LinearInT` (exact RLRT that the
//! surface slope is linear in t).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::FunctionalDataset;
use crate::design::{
    build_flm_design, build_psanova_design, quadrature_weights, QuadratureRule,
};
use crate::error::{Error, Result};
use crate::lmm::{fit_mixed_model, FitMethod, MixedModelSpec};
use crate::rlrt::{pseudo_response, pvalue_from_null, RlrtNullSample, SpectralDesign};
use crate::seed;

/// Test procedure tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    EqualVc,
    Bonferroni,
    Bootstrap,
    KnownSig1,
    NoEffect,
    LinearInT,
}

impl TestMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestMethod::EqualVc => "equalvc",
            TestMethod::Bonferroni => "bonferroni",
            TestMethod::Bootstrap => "bootstrap",
            TestMethod::KnownSig1 => "knownsig1",
            TestMethod::NoEffect => "no-effect",
            TestMethod::LinearInT => "linear-in-t",
        }
    }
}

/// Common knobs shared by the test procedures.
#[derive(Debug, Clone)]
pub struct TestOptions {
    pub kx: usize,
    pub kt: usize,
    pub rule: QuadratureRule,
    /// Null-sample size for the spectral simulation (or parametric refits
    /// for the no-effect test).
    pub nsim: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Share one full-model REML fit between the two Bonferroni sub-tests
    /// (the default); switch off to re-estimate the nuisance BLUP from a
    /// two-block fit per sub-test.
    pub shared_nuisance_fit: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            kx: 10,
            kt: 10,
            rule: QuadratureRule::Trapezoid,
            nsim: 10_000,
            seed: 0,
            alpha: 0.05,
            shared_nuisance_fit: true,
        }
    }
}

/// Per-sub-test null-sample summaries carried in the result.
#[derive(Debug, Clone, Serialize)]
pub struct NullSummary {
    pub zero_fraction: f64,
    pub q90: f64,
    pub q95: f64,
    pub q99: f64,
}

impl NullSummary {
    fn from_sample(s: &RlrtNullSample) -> Self {
        Self {
            zero_fraction: s.zero_fraction(),
            q90: s.quantile(0.90),
            q95: s.quantile(0.95),
            q99: s.quantile(0.99),
        }
    }
}

/// Outcome of one test invocation.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub method: TestMethod,
    /// One statistic per sub-test (two for Bonferroni-style procedures).
    pub statistics: Vec<f64>,
    /// Matching per-sub-test p-values.
    pub p_values: Vec<f64>,
    /// Reported (multiplicity-adjusted) p-value.
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub nsim: usize,
    pub seed: u64,
    /// Labels of the tested components.
    pub components: Vec<String>,
    /// Variance estimates under the alternative, for diagnostics.
    pub variance_estimates: Vec<(String, f64)>,
    pub null_summaries: Vec<NullSummary>,
    /// Bootstrap refits that failed (always zero for spectral procedures).
    pub refit_failures: usize,
    /// Set when more than 5% of bootstrap refits failed.
    pub unreliable: bool,
}

impl TestResult {
    fn new(method: TestMethod, opts: &TestOptions) -> Self {
        Self {
            method,
            statistics: Vec::new(),
            p_values: Vec::new(),
            p_value: 1.0,
            reject: false,
            alpha: opts.alpha,
            nsim: opts.nsim,
            seed: opts.seed,
            components: Vec::new(),
            variance_estimates: Vec::new(),
            null_summaries: Vec::new(),
            refit_failures: 0,
            unreliable: false,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::parameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n, a.ncols() + b.ncols());
    m.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    m.view_mut((0, a.ncols()), (n, b.ncols())).copy_from(b);
    m
}

/// Linearity test assuming the two non-FLM components share one variance:
/// Z2 and Z3 merge into a single block, the FLM component is removed via its
/// BLUP, and the remaining single component is tested with the exact
/// one-component machinery.
pub fn test_linearity_equalvc(data: &FunctionalDataset, opts: &TestOptions) -> Result<TestResult> {
    check_alpha(opts.alpha)?;
    let quad = quadrature_weights(data.n(), data.grid(), opts.rule)?;
    let design = build_psanova_design(data, opts.kx, opts.kt, &quad)?;
    let z23 = concat_columns(&design.z2, &design.z3);
    let spec = MixedModelSpec::new(
        data.response().clone(),
        design.x.clone(),
        vec![design.z1.clone(), z23.clone()],
    )?;
    let fit = fit_mixed_model(&spec, FitMethod::Reml)?;
    let pseudo = pseudo_response(&fit, &spec, 0)?;

    let machine = SpectralDesign::new(&design.x, &z23)?;
    let stat = machine.observed_statistic(&pseudo)?;
    let null = machine.simulate_null(opts.nsim, seed::derive(opts.seed, 1))?;
    let p = pvalue_from_null(stat, &null);

    let mut out = TestResult::new(TestMethod::EqualVc, opts);
    out.statistics = vec![stat];
    out.p_values = vec![p];
    out.p_value = p;
    out.reject = p <= opts.alpha;
    out.components = vec!["sigma2_23".into()];
    out.variance_estimates = vec![
        ("sigma2_error".into(), fit.sigma2_error),
        ("sigma2_1".into(), fit.sigma2_blocks[0]),
        ("sigma2_23".into(), fit.sigma2_blocks[1]),
    ];
    out.null_summaries = vec![NullSummary::from_sample(&null)];
    Ok(out)
}

/// Two separate pseudo-RLRTs (each non-FLM component with the other fixed at
/// zero), Bonferroni-combined: the reported p-value is min(1, 2 min(p2, p3)).
pub fn test_linearity_bonferroni(
    data: &FunctionalDataset,
    opts: &TestOptions,
) -> Result<TestResult> {
    check_alpha(opts.alpha)?;
    let quad = quadrature_weights(data.n(), data.grid(), opts.rule)?;
    let design = build_psanova_design(data, opts.kx, opts.kt, &quad)?;

    let mut variance_estimates = Vec::new();
    // The nuisance BLUP comes from one shared full-model fit by default.
    let shared_pseudo = if opts.shared_nuisance_fit {
        let spec = MixedModelSpec::new(
            data.response().clone(),
            design.x.clone(),
            vec![design.z1.clone(), design.z2.clone(), design.z3.clone()],
        )?;
        let fit = fit_mixed_model(&spec, FitMethod::Reml)?;
        variance_estimates = vec![
            ("sigma2_error".into(), fit.sigma2_error),
            ("sigma2_1".into(), fit.sigma2_blocks[0]),
            ("sigma2_2".into(), fit.sigma2_blocks[1]),
            ("sigma2_3".into(), fit.sigma2_blocks[2]),
        ];
        Some(pseudo_response(&fit, &spec, 0)?)
    } else {
        None
    };

    let mut statistics = Vec::new();
    let mut p_values = Vec::new();
    let mut null_summaries = Vec::new();
    for (tag, z_tested, label) in [
        (2u64, &design.z2, "sigma2_2"),
        (3u64, &design.z3, "sigma2_3"),
    ] {
        let pseudo = match &shared_pseudo {
            Some(p) => p.clone(),
            None => {
                let spec = MixedModelSpec::new(
                    data.response().clone(),
                    design.x.clone(),
                    vec![design.z1.clone(), z_tested.clone()],
                )?;
                let fit = fit_mixed_model(&spec, FitMethod::Reml)?;
                if variance_estimates.is_empty() {
                    variance_estimates.push(("sigma2_error".into(), fit.sigma2_error));
                }
                variance_estimates.push((format!("{label}_alt"), fit.sigma2_blocks[1]));
                pseudo_response(&fit, &spec, 0)?
            }
        };
        let machine = SpectralDesign::new(&design.x, z_tested)?;
        let stat = machine.observed_statistic(&pseudo)?;
        let null = machine.simulate_null(opts.nsim, seed::derive(opts.seed, tag))?;
        statistics.push(stat);
        p_values.push(pvalue_from_null(stat, &null));
        null_summaries.push(NullSummary::from_sample(&null));
    }

    let p = (2.0 * p_values[0].min(p_values[1])).min(1.0);
    let mut out = TestResult::new(TestMethod::Bonferroni, opts);
    out.statistics = statistics;
    out.p_values = p_values;
    out.p_value = p;
    out.reject = p <= opts.alpha;
    out.components = vec!["sigma2_2".into(), "sigma2_3".into()];
    out.variance_estimates = variance_estimates;
    out.null_summaries = null_summaries;
    Ok(out)
}

/// Quasi-oracle variant of the Bonferroni procedure for simulation studies:
/// the true FLM random effect is subtracted instead of its BLUP, so each
/// sub-test sits exactly in the one-component framework.
pub fn test_knownsig1(
    data: &FunctionalDataset,
    true_b1: &DVector<f64>,
    opts: &TestOptions,
) -> Result<TestResult> {
    check_alpha(opts.alpha)?;
    let quad = quadrature_weights(data.n(), data.grid(), opts.rule)?;
    let design = build_psanova_design(data, opts.kx, opts.kt, &quad)?;
    if true_b1.len() != design.q1() {
        return Err(Error::shape(format!(
            "true b1 has length {}, expected q1 = {}",
            true_b1.len(),
            design.q1()
        )));
    }
    let pseudo = data.response() - &design.z1 * true_b1;

    let mut statistics = Vec::new();
    let mut p_values = Vec::new();
    let mut null_summaries = Vec::new();
    for (tag, z_tested) in [(2u64, &design.z2), (3u64, &design.z3)] {
        let machine = SpectralDesign::new(&design.x, z_tested)?;
        let stat = machine.observed_statistic(&pseudo)?;
        let null = machine.simulate_null(opts.nsim, seed::derive(opts.seed, tag))?;
        statistics.push(stat);
        p_values.push(pvalue_from_null(stat, &null));
        null_summaries.push(NullSummary::from_sample(&null));
    }
    let p = (2.0 * p_values[0].min(p_values[1])).min(1.0);
    let mut out = TestResult::new(TestMethod::KnownSig1, opts);
    out.statistics = statistics;
    out.p_values = p_values;
    out.p_value = p;
    out.reject = p <= opts.alpha;
    out.components = vec!["sigma2_2".into(), "sigma2_3".into()];
    out.null_summaries = null_summaries;
    Ok(out)
}

/// Parametric-bootstrap linearity test: REML ratio between the merged-block
/// alternative and the FLM null, with the null distribution from refits on
/// data simulated out of the fitted null model.
pub fn test_linearity_bootstrap(
    data: &FunctionalDataset,
    opts: &TestOptions,
    nboot: usize,
) -> Result<TestResult> {
    check_alpha(opts.alpha)?;
    if nboot < 500 {
        return Err(Error::parameter(format!(
            "parametric bootstrap needs at least 500 refits, got {nboot}"
        )));
    }
    let quad = quadrature_weights(data.n(), data.grid(), opts.rule)?;
    let design = build_psanova_design(data, opts.kx, opts.kt, &quad)?;
    let z23 = concat_columns(&design.z2, &design.z3);
    let spec_alt = MixedModelSpec::new(
        data.response().clone(),
        design.x.clone(),
        vec![design.z1.clone(), z23.clone()],
    )?;
    let spec_null = MixedModelSpec::new(
        data.response().clone(),
        design.x.clone(),
        vec![design.z1.clone()],
    )?;
    let fit_alt = fit_mixed_model(&spec_alt, FitMethod::Reml)?;
    let fit_null = fit_mixed_model(&spec_null, FitMethod::Reml)?;
    let stat = (2.0 * (fit_alt.criterion - fit_null.criterion)).max(0.0);

    // Simulate from the fitted null: y* = X beta + Z1 b1* + eps*.
    let n = data.n();
    let q1 = design.q1();
    let fixed_mean = &design.x * &fit_null.beta;
    let sd_b1 = fit_null.sigma2_blocks[0].max(0.0).sqrt();
    let sd_e = fit_null.sigma2_error.max(0.0).sqrt();
    let mut boot_stats = Vec::with_capacity(nboot);
    let mut failures = 0usize;
    use rand_distr::StandardNormal;
    for b in 0..nboot {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(opts.seed, 100));
        rng.set_stream(b as u64 + 1);
        let b1 = DVector::from_fn(q1, |_, _| rng.sample::<f64, _>(StandardNormal) * sd_b1);
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * sd_e);
        let y_b = &fixed_mean + &design.z1 * b1 + eps;
        let alt = MixedModelSpec::new(y_b.clone(), design.x.clone(), vec![
            design.z1.clone(),
            z23.clone(),
        ])
        .and_then(|s| fit_mixed_model(&s, FitMethod::Reml).map(|f| f.criterion));
        let null = MixedModelSpec::new(y_b, design.x.clone(), vec![design.z1.clone()])
            .and_then(|s| fit_mixed_model(&s, FitMethod::Reml).map(|f| f.criterion));
        match (alt, null) {
            (Ok(a), Ok(n0)) => boot_stats.push((2.0 * (a - n0)).max(0.0)),
            _ => failures += 1,
        }
    }
    let ok = boot_stats.len();
    if ok == 0 {
        return Err(Error::numerical("every bootstrap refit failed"));
    }
    let exceed = boot_stats.iter().filter(|&&s| s >= stat).count();
    let p = (1.0 + exceed as f64) / (ok as f64 + 1.0);

    let mut out = TestResult::new(TestMethod::Bootstrap, opts);
    out.statistics = vec![stat];
    out.p_values = vec![p];
    out.p_value = p;
    out.reject = p <= opts.alpha;
    out.nsim = nboot;
    out.components = vec!["sigma2_23".into()];
    out.variance_estimates = vec![
        ("sigma2_error".into(), fit_alt.sigma2_error),
        ("sigma2_1".into(), fit_alt.sigma2_blocks[0]),
        ("sigma2_23".into(), fit_alt.sigma2_blocks[1]),
    ];
    out.refit_failures = failures;
    out.unreliable = (failures as f64) > 0.05 * nboot as f64;
    Ok(out)
}

/// Profiled maximum-likelihood machinery for the FLM, reused across the
/// parametric refits of the no-effect test. The quadratic form decomposes
/// through the projected eigenvalues; the log-determinant needs the raw
/// eigenvalues of Z'Z.
struct FlmMlMachine {
    spectral: SpectralDesign,
    /// Positive eigenvalues of Z'Z.
    nu: Vec<f64>,
    grid: Vec<f64>,
    n: usize,
}

impl FlmMlMachine {
    fn new(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Self> {
        let spectral = SpectralDesign::new(x, z)?;
        let ztz = z.transpose() * z;
        let eig = SymmetricEigen::new(ztz);
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let mut nu: Vec<f64> = eig
            .eigenvalues
            .iter()
            .copied()
            .filter(|&v| v > 1e-12 * max)
            .collect();
        nu.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut grid = vec![0.0];
        for i in 0..200 {
            let e = -5.0 + 15.0 * i as f64 / 199.0;
            grid.push(10f64.powf(e) / nu[0]);
        }
        Ok(Self {
            spectral,
            nu,
            grid,
            n: x.nrows(),
        })
    }

    /// Profiled ML log-likelihood of the FLM, maximized over the variance
    /// ratio, up to the constant -n/2 (log 2 pi + 1).
    fn ml_alternative(&self, y: &DVector<f64>) -> f64 {
        let (w2, tail, _rtr) = self.spectral.quadform_parts(y);
        let n = self.n as f64;
        let objective = |l: f64| -> f64 {
            let mut quad = tail;
            for (&m, &w) in self.spectral.mu().iter().zip(&w2) {
                quad += w / (1.0 + l * m);
            }
            let logdet: f64 = self.nu.iter().map(|&v| (1.0 + l * v).ln()).sum();
            -0.5 * (n * (quad / n).max(f64::MIN_POSITIVE).ln() + logdet)
        };
        let mut best = objective(0.0);
        let mut best_i = 0;
        for (i, &l) in self.grid.iter().enumerate().skip(1) {
            let v = objective(l);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        if best_i > 0 {
            let lo = self.grid[best_i - 1];
            let hi = if best_i + 1 < self.grid.len() {
                self.grid[best_i + 1]
            } else {
                self.grid[best_i] * 10.0
            };
            const INV_PHI: f64 = 0.618_033_988_749_894_9;
            let (mut a, mut b) = (lo, hi);
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let mut fc = objective(c);
            let mut fd = objective(d);
            for _ in 0..80 {
                if fc > fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = objective(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = objective(d);
                }
            }
            best = best.max(fc.max(fd));
        }
        best
    }

    /// ML log-likelihood of the intercept-only null on the same constant
    /// scale.
    fn ml_null(&self, y: &DVector<f64>) -> f64 {
        let n = self.n as f64;
        let mean = y.sum() / n;
        let rss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        -0.5 * n * (rss / n).max(f64::MIN_POSITIVE).ln()
    }

    fn statistic(&self, y: &DVector<f64>) -> f64 {
        (2.0 * (self.ml_alternative(y) - self.ml_null(y))).max(0.0)
    }
}

/// No-effect test: maximum-likelihood LRT of the FLM against the
/// intercept-only model (the fixed effects differ between the hypotheses, so
/// a restricted LRT does not apply). The null distribution comes from
/// parametric simulation out of the fitted null.
pub fn test_no_effect(data: &FunctionalDataset, opts: &TestOptions) -> Result<TestResult> {
    check_alpha(opts.alpha)?;
    let quad = quadrature_weights(data.n(), data.grid(), opts.rule)?;
    let design = build_flm_design(data, opts.kt, &quad)?;
    let machine = FlmMlMachine::new(&design.x, &design.z1)?;
    let stat = machine.statistic(data.response());

    // Fitted null: intercept beta0, residual variance by ML.
    let n = data.n();
    let mean = data.response().sum() / n as f64;
    let sd = (data
        .response()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();

    use rand_distr::StandardNormal;
    use rayon::prelude::*;
    let null_seed = seed::derive(opts.seed, 7);
    let mut null_stats: Vec<f64> = (0..opts.nsim)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(null_seed);
            rng.set_stream(i as u64 + 1);
            let y = DVector::from_fn(n, |_, _| {
                mean + sd * rng.sample::<f64, _>(StandardNormal)
            });
            machine.statistic(&y)
        })
        .collect();
    null_stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let exceed = null_stats.len() - null_stats.partition_point(|&v| v < stat);
    let p = (1.0 + exceed as f64) / (opts.nsim as f64 + 1.0);

    let mut out = TestResult::new(TestMethod::NoEffect, opts);
    out.statistics = vec![stat];
    out.p_values = vec![p];
    out.p_value = p;
    out.reject = p <= opts.alpha;
    out.components = vec!["beta_2".into(), "beta_3".into(), "sigma2_1".into()];
    Ok(out)
}

/// Exact RLRT that the surface slope is linear in t: within the FLM, tests
/// the single smooth variance component with no nuisance component.
pub fn test_linear_in_t(data: &FunctionalDataset, opts: &TestOptions) -> Result<TestResult> {
    check_alpha(opts.alpha)?;
    let quad = quadrature_weights(data.n(), data.grid(), opts.rule)?;
    let design = build_flm_design(data, opts.kt, &quad)?;
    let machine = SpectralDesign::new(&design.x, &design.z1)?;
    let stat = machine.observed_statistic(data.response())?;
    let null = machine.simulate_null(opts.nsim, seed::derive(opts.seed, 4))?;
    let p = pvalue_from_null(stat, &null);

    let mut out = TestResult::new(TestMethod::LinearInT, opts);
    out.statistics = vec![stat];
    out.p_values = vec![p];
    out.p_value = p;
    out.reject = p <= opts.alpha;
    out.components = vec!["sigma2_1".into()];
    out.null_summaries = vec![NullSummary::from_sample(&null)];
    Ok(out)
}
