//! Gaussian linear mixed models with up to three independent random-effect
//! blocks, each with covariance sigma_j^2 I.
//!
//! Estimation profiles the residual variance and the fixed effects out of the
//! REML (or ML) criterion and optimizes the remaining log variance ratios by
//! Nelder-Mead from three deterministic starting points. All linear algebra
//! runs through a Cholesky factorization of the q x q system, never an N x N
//! inverse; a dense path exists only as a gradient/likelihood oracle.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum number of random-effect blocks supported by the fitter.
pub const MAX_BLOCKS: usize = 3;

/// Variance ratios below this threshold are reported as exactly zero.
pub const ZERO_RATIO_TOL: f64 = 1e-8;

/// Maximum Nelder-Mead iterations per starting point.
pub const MAX_ITERATIONS: usize = 500;

/// Stop once the criterion improves by less than this within the simplex.
pub const CONVERGENCE_TOL: f64 = 1e-9;

/// Estimation criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Reml,
    Ml,
}

/// Response, fixed-effect design, and random-effect blocks of one model.
#[derive(Debug, Clone)]
pub struct MixedModelSpec {
    y: DVector<f64>,
    x: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
}

impl MixedModelSpec {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::shape(format!(
                "X has {} rows for {} responses",
                x.nrows(),
                n
            )));
        }
        if x.ncols() == 0 || x.ncols() >= n {
            return Err(Error::parameter(
                "fixed-effect design must have 1..N columns",
            ));
        }
        if blocks.len() > MAX_BLOCKS {
            return Err(Error::parameter(format!(
                "at most {MAX_BLOCKS} random-effect blocks are supported, got {}",
                blocks.len()
            )));
        }
        for (j, z) in blocks.iter().enumerate() {
            if z.nrows() != n {
                return Err(Error::shape(format!(
                    "random block {j} has {} rows for {} responses",
                    z.nrows(),
                    n
                )));
            }
            if z.ncols() == 0 {
                return Err(Error::parameter(format!("random block {j} has no columns")));
            }
        }
        Ok(Self { y, x, blocks })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|z| z.ncols()).collect()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
}

/// Result of a variance-component fit.
#[derive(Debug, Clone)]
pub struct VarianceComponentFit {
    pub method: FitMethod,
    pub beta: DVector<f64>,
    pub blups: Vec<DVector<f64>>,
    pub sigma2_error: f64,
    pub sigma2_blocks: Vec<f64>,
    /// REML or ML log-likelihood at the reported estimates.
    pub criterion: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-block flag: the variance estimate landed on the zero boundary.
    pub boundary: Vec<bool>,
    /// The residual variance hit its lower floor (degenerate residual).
    pub sigma2_floored: bool,
}

impl VarianceComponentFit {
    /// Fitted values X beta + sum_j Z_j b_j for the spec the fit came from.
    pub fn fitted_values(&self, spec: &MixedModelSpec) -> DVector<f64> {
        let mut f = spec.x() * &self.beta;
        for (z, b) in spec.blocks().iter().zip(&self.blups) {
            f += z * b;
        }
        f
    }

    pub fn variance_ratios(&self) -> Vec<f64> {
        self.sigma2_blocks
            .iter()
            .map(|s| s / self.sigma2_error)
            .collect()
    }
}

/// Sufficient statistics shared by every criterion evaluation.
struct CrossProducts {
    n: usize,
    p: usize,
    dims: Vec<usize>,
    ztz: DMatrix<f64>,
    ztx: DMatrix<f64>,
    zty: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    logdet_xtx: f64,
}

impl CrossProducts {
    fn new(spec: &MixedModelSpec) -> Result<Self> {
        let n = spec.n();
        let p = spec.p();
        let dims = spec.block_dims();
        let q: usize = dims.iter().sum();
        let mut z = DMatrix::zeros(n, q);
        let mut at = 0;
        for blk in spec.blocks() {
            z.view_mut((0, at), (n, blk.ncols())).copy_from(blk);
            at += blk.ncols();
        }
        let xtx = spec.x().transpose() * spec.x();
        let logdet_xtx = Cholesky::new(xtx.clone())
            .ok_or_else(|| {
                Error::parameter("fixed-effect design is rank deficient".to_string())
            })?
            .l()
            .diagonal()
            .iter()
            .map(|d| 2.0 * d.ln())
            .sum();
        Ok(Self {
            n,
            p,
            dims,
            ztz: z.transpose() * &z,
            ztx: z.transpose() * spec.x(),
            zty: z.transpose() * spec.y(),
            xtx,
            xty: spec.x().transpose() * spec.y(),
            yty: spec.y().dot(spec.y()),
            logdet_xtx,
        })
    }

    fn q(&self) -> usize {
        self.ztz.nrows()
    }

    /// Per-column sqrt of the variance ratios, expanded block-wise.
    fn scale_vector(&self, ratios: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.q());
        let mut at = 0;
        for (j, &dim) in self.dims.iter().enumerate() {
            let s = ratios[j].max(0.0).sqrt();
            for i in 0..dim {
                g[at + i] = s;
            }
            at += dim;
        }
        g
    }
}

/// Everything the optimizer and downstream consumers need from one
/// evaluation at fixed variance ratios.
struct Evaluation {
    /// Profiled residual sum of squares y' P y.
    ypy: f64,
    logdet_v: f64,
    logdet_xvx: f64,
    beta: DVector<f64>,
    /// M^{-1} G Z' r, kept for BLUP recovery (b = G * this).
    scaled_effects: DVector<f64>,
    g: DVector<f64>,
}

fn evaluate(cp: &CrossProducts, ratios: &[f64]) -> Result<Evaluation> {
    let q = cp.q();
    let g = cp.scale_vector(ratios);
    // M = I + G Z'Z G
    let mut m = DMatrix::zeros(q, q);
    for r in 0..q {
        for c in 0..q {
            m[(r, c)] = g[r] * cp.ztz[(r, c)] * g[c];
        }
        m[(r, r)] += 1.0;
    }
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::numerical("Henderson system not positive definite"))?;
    let logdet_v: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();

    // G Z' [X : y]
    let mut gzx = cp.ztx.clone();
    for r in 0..q {
        for c in 0..cp.p {
            gzx[(r, c)] *= g[r];
        }
    }
    let mut gzy = cp.zty.clone();
    for r in 0..q {
        gzy[r] *= g[r];
    }
    let minv_gzx = chol.solve(&gzx);
    let minv_gzy = chol.solve(&gzy);

    let xvx = &cp.xtx - gzx.transpose() * &minv_gzx;
    let xvy = &cp.xty - gzx.transpose() * &minv_gzy;
    let yvy = cp.yty - gzy.dot(&minv_gzy);

    let chol_x = Cholesky::new(xvx)
        .ok_or_else(|| Error::numerical("X' V^-1 X not positive definite"))?;
    let logdet_xvx: f64 = chol_x.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let beta = chol_x.solve(&xvy);
    let ypy = (yvy - xvy.dot(&beta)).max(0.0);

    // Residual pieces for BLUPs: M^{-1} G Z' (y - X beta).
    let gzr = &gzy - &gzx * &beta;
    let scaled_effects = chol.solve(&gzr);

    Ok(Evaluation {
        ypy,
        logdet_v,
        logdet_xvx,
        beta,
        scaled_effects,
        g,
    })
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Restricted log-likelihood at the supplied variances, with the fixed
/// effects profiled out at their GLS value. Includes the log-determinant
/// normalization that makes the value invariant to reparameterizations of
/// the fixed-effect columns.
pub fn restricted_log_likelihood(
    spec: &MixedModelSpec,
    sigma2_error: f64,
    sigma2_blocks: &[f64],
) -> Result<f64> {
    let cp = CrossProducts::new(spec)?;
    restricted_with_cp(&cp, spec, sigma2_error, sigma2_blocks)
}

fn check_variances(spec: &MixedModelSpec, sigma2_error: f64, sigma2_blocks: &[f64]) -> Result<()> {
    if sigma2_error <= 0.0 {
        return Err(Error::parameter("residual variance must be positive"));
    }
    if sigma2_blocks.len() != spec.num_blocks() {
        return Err(Error::shape(format!(
            "{} variances supplied for {} blocks",
            sigma2_blocks.len(),
            spec.num_blocks()
        )));
    }
    if sigma2_blocks.iter().any(|&s| s < 0.0) {
        return Err(Error::parameter("block variances must be nonnegative"));
    }
    Ok(())
}

fn restricted_with_cp(
    cp: &CrossProducts,
    spec: &MixedModelSpec,
    sigma2_error: f64,
    sigma2_blocks: &[f64],
) -> Result<f64> {
    check_variances(spec, sigma2_error, sigma2_blocks)?;
    let ratios: Vec<f64> = sigma2_blocks.iter().map(|s| s / sigma2_error).collect();
    let ev = evaluate(cp, &ratios)?;
    let df = (cp.n - cp.p) as f64;
    Ok(-0.5
        * (df * LN_2PI
            + df * sigma2_error.ln()
            + ev.logdet_v
            + ev.logdet_xvx
            - cp.logdet_xtx
            + ev.ypy / sigma2_error))
}

/// Marginal (ML) log-likelihood at the supplied variances with beta at its
/// GLS value.
pub fn ml_log_likelihood(
    spec: &MixedModelSpec,
    sigma2_error: f64,
    sigma2_blocks: &[f64],
) -> Result<f64> {
    check_variances(spec, sigma2_error, sigma2_blocks)?;
    let cp = CrossProducts::new(spec)?;
    let ratios: Vec<f64> = sigma2_blocks.iter().map(|s| s / sigma2_error).collect();
    let ev = evaluate(&cp, &ratios)?;
    let n = cp.n as f64;
    Ok(-0.5 * (n * LN_2PI + n * sigma2_error.ln() + ev.logdet_v + ev.ypy / sigma2_error))
}

/// Criterion with the residual variance profiled out as well, as used inside
/// the optimizer. Larger is better.
fn profiled_criterion(cp: &CrossProducts, method: FitMethod, ratios: &[f64]) -> Result<f64> {
    let ev = evaluate(cp, ratios)?;
    let value = match method {
        FitMethod::Reml => {
            let df = (cp.n - cp.p) as f64;
            let s2 = (ev.ypy / df).max(f64::MIN_POSITIVE);
            -0.5 * (df * (LN_2PI + 1.0)
                + df * s2.ln()
                + ev.logdet_v
                + ev.logdet_xvx
                - cp.logdet_xtx)
        }
        FitMethod::Ml => {
            let n = cp.n as f64;
            let s2 = (ev.ypy / n).max(f64::MIN_POSITIVE);
            -0.5 * (n * (LN_2PI + 1.0) + n * s2.ln() + ev.logdet_v)
        }
    };
    Ok(value)
}

/// Minimal Nelder-Mead on R^d. Deterministic; returns the best vertex, its
/// value, and the iteration count. `f` returns the value to MINIMIZE.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    step: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64, usize, bool) {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(start.to_vec());
    for i in 0..d {
        let mut v = start.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[d];
        let second_worst = order[d - 1];
        if (values[worst] - values[best]).abs() < tol {
            converged = true;
            break;
        }
        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; d];
        for &i in order.iter().take(d) {
            for k in 0..d {
                centroid[k] += simplex[i][k] / d as f64;
            }
        }
        let reflect: Vec<f64> = (0..d)
            .map(|k| centroid[k] + alpha * (centroid[k] - simplex[worst][k]))
            .collect();
        let f_reflect = f(&reflect);
        if f_reflect < values[best] {
            let expand: Vec<f64> = (0..d)
                .map(|k| centroid[k] + gamma * (reflect[k] - centroid[k]))
                .collect();
            let f_expand = f(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let contract: Vec<f64> = (0..d)
                .map(|k| centroid[k] + rho * (simplex[worst][k] - centroid[k]))
                .collect();
            let f_contract = f(&contract);
            if f_contract < values[worst] {
                simplex[worst] = contract;
                values[worst] = f_contract;
            } else {
                // Shrink towards the best vertex.
                let best_point = simplex[best].clone();
                for i in 0..=d {
                    if i == best {
                        continue;
                    }
                    for k in 0..d {
                        simplex[i][k] = best_point[k] + sigma * (simplex[i][k] - best_point[k]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..=d {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best], iterations, converged)
}

/// Deterministic starting ratios for the optimizer.
const START_RATIOS: [f64; 3] = [1e-3, 1.0, 1e3];

/// Fits the mixed model by REML or ML.
///
/// The log variance ratios are optimized by Nelder-Mead from three
/// deterministic starts; ratios below [`ZERO_RATIO_TOL`] are snapped to the
/// boundary and the boundary candidates are re-evaluated exactly, so a true
/// zero component is reported as exactly zero.
pub fn fit_mixed_model(spec: &MixedModelSpec, method: FitMethod) -> Result<VarianceComponentFit> {
    if spec.n() <= spec.p() + 1 {
        return Err(Error::parameter(format!(
            "need N > p + 1 (N = {}, p = {})",
            spec.n(),
            spec.p()
        )));
    }
    let cp = CrossProducts::new(spec)?;
    let m = spec.num_blocks();

    let mut candidates: Vec<Vec<f64>> = vec![vec![0.0; m]];
    let mut iterations = 0;
    let mut any_converged = m == 0;
    if m > 0 {
        for start in START_RATIOS {
            let u0 = vec![start.ln(); m];
            let (u_best, _, iters, conv) = nelder_mead(
                |u| {
                    let ratios: Vec<f64> = u.iter().map(|&v| v.clamp(-46.0, 46.0).exp()).collect();
                    match profiled_criterion(&cp, method, &ratios) {
                        Ok(c) => -c,
                        Err(_) => f64::INFINITY,
                    }
                },
                &u0,
                1.0,
                MAX_ITERATIONS,
                CONVERGENCE_TOL,
            );
            iterations += iters;
            any_converged |= conv;
            let ratios: Vec<f64> = u_best
                .iter()
                .map(|&v| {
                    let r = v.clamp(-46.0, 46.0).exp();
                    if r < ZERO_RATIO_TOL {
                        0.0
                    } else {
                        r
                    }
                })
                .collect();
            // Boundary variants: zero out any coordinate that drifted small.
            for j in 0..m {
                if ratios[j] > 0.0 && ratios[j] < 1e-4 {
                    let mut variant = ratios.clone();
                    variant[j] = 0.0;
                    candidates.push(variant);
                }
            }
            candidates.push(ratios);
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in &candidates {
        if let Ok(c) = profiled_criterion(&cp, method, cand) {
            if best.as_ref().map_or(true, |(b, _)| c > *b) {
                best = Some((c, cand.clone()));
            }
        }
    }
    let (_, ratios) =
        best.ok_or_else(|| Error::numerical("criterion evaluation failed at every candidate"))?;

    let ev = evaluate(&cp, &ratios)?;
    let df = match method {
        FitMethod::Reml => (cp.n - cp.p) as f64,
        FitMethod::Ml => cp.n as f64,
    };
    let mut sigma2_error = ev.ypy / df;
    let mean_y = spec.y().sum() / spec.n() as f64;
    let var_y = spec.y().iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / spec.n() as f64;
    let floor = 1e-12 * var_y.max(f64::MIN_POSITIVE);
    let sigma2_floored = sigma2_error < floor;
    if sigma2_floored {
        sigma2_error = floor;
    }
    // Zero snapping also applies on the absolute variance scale, so block
    // variances that only survive because the residual variance collapsed
    // are still reported as boundary zeros.
    let ratios: Vec<f64> = ratios
        .iter()
        .map(|&r| if r * sigma2_error <= floor { 0.0 } else { r })
        .collect();
    let ev = evaluate(&cp, &ratios)?;
    let sigma2_blocks: Vec<f64> = ratios.iter().map(|r| r * sigma2_error).collect();

    let criterion = match method {
        FitMethod::Reml => restricted_with_cp(&cp, spec, sigma2_error, &sigma2_blocks)?,
        FitMethod::Ml => ml_log_likelihood(spec, sigma2_error, &sigma2_blocks)?,
    };

    // Recover per-block BLUPs: b = G * scaled_effects.
    let mut blups = Vec::with_capacity(m);
    let mut at = 0;
    for &dim in &cp.dims {
        let mut b = DVector::zeros(dim);
        for i in 0..dim {
            b[i] = ev.g[at + i] * ev.scaled_effects[at + i];
        }
        blups.push(b);
        at += dim;
    }

    Ok(VarianceComponentFit {
        method,
        beta: ev.beta,
        blups,
        sigma2_error,
        sigma2_blocks: sigma2_blocks.clone(),
        criterion,
        iterations,
        converged: any_converged,
        boundary: ratios.iter().map(|&r| r == 0.0).collect(),
        sigma2_floored,
    })
}

/// Best linear unbiased predictors of the random effects at the fit's
/// variance estimates: b_j = sigma_j^2 Z_j' Sigma^{-1} (y - X beta),
/// computed through the same q x q system as the fit.
pub fn predict_random_effects(
    fit: &VarianceComponentFit,
    spec: &MixedModelSpec,
) -> Result<Vec<DVector<f64>>> {
    let cp = CrossProducts::new(spec)?;
    let ratios: Vec<f64> = fit
        .sigma2_blocks
        .iter()
        .map(|s| s / fit.sigma2_error)
        .collect();
    if ratios.len() != cp.dims.len() {
        return Err(Error::shape("fit does not match spec block count"));
    }
    let ev = evaluate(&cp, &ratios)?;
    let mut blups = Vec::with_capacity(cp.dims.len());
    let mut at = 0;
    for &dim in &cp.dims {
        let mut b = DVector::zeros(dim);
        for i in 0..dim {
            b[i] = ev.g[at + i] * ev.scaled_effects[at + i];
        }
        blups.push(b);
        at += dim;
    }
    Ok(blups)
}

/// Analytic score of the restricted log-likelihood with respect to
/// (sigma_e^2, sigma_1^2, ..., sigma_m^2), computed through the dense
/// covariance matrix. Intended for verification against finite differences,
/// not for fitting.
pub fn restricted_likelihood_gradient(
    spec: &MixedModelSpec,
    sigma2_error: f64,
    sigma2_blocks: &[f64],
) -> Result<Vec<f64>> {
    check_variances(spec, sigma2_error, sigma2_blocks)?;
    let n = spec.n();
    let mut sigma = DMatrix::<f64>::identity(n, n) * sigma2_error;
    for (z, &s2) in spec.blocks().iter().zip(sigma2_blocks) {
        if s2 > 0.0 {
            sigma += z * z.transpose() * s2;
        }
    }
    let chol = Cholesky::new(sigma)
        .ok_or_else(|| Error::numerical("covariance not positive definite"))?;
    let sigma_inv = chol.inverse();
    let xt_si = spec.x().transpose() * &sigma_inv;
    let xtsx = &xt_si * spec.x();
    let xtsx_inv = Cholesky::new(xtsx)
        .ok_or_else(|| Error::numerical("X' Sigma^-1 X not positive definite"))?
        .inverse();
    // P = Sigma^-1 - Sigma^-1 X (X' Sigma^-1 X)^-1 X' Sigma^-1
    let p_mat = &sigma_inv - xt_si.transpose() * xtsx_inv * &xt_si;
    let py = &p_mat * spec.y();
    let mut grads = Vec::with_capacity(1 + spec.num_blocks());
    // d/dsigma_e^2 with G = I.
    let tr_p = p_mat.trace();
    grads.push(-0.5 * (tr_p - py.dot(&py)));
    for z in spec.blocks() {
        let pz = &p_mat * z;
        // tr(P Z Z') = ||P^{1/2} Z||^2-style sum without forming N x N.
        let tr = pz.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
        let zty_p = z.transpose() * &py;
        grads.push(-0.5 * (tr - zty_p.dot(&zty_p)));
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_spec(n: usize, p: usize, dims: &[usize], seed: u64) -> MixedModelSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for r in 0..n {
            x[(r, 0)] = 1.0;
        }
        let blocks: Vec<DMatrix<f64>> = dims
            .iter()
            .map(|&q| DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        MixedModelSpec::new(y, x, blocks).unwrap()
    }

    fn simulate_one_block(
        n: usize,
        q: usize,
        sigma2_e: f64,
        sigma2_1: f64,
        seed: u64,
    ) -> MixedModelSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        for r in 0..n {
            x[(r, 0)] = 1.0;
        }
        let z = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_vec(vec![1.0, -0.5]);
        let b = DVector::from_fn(q, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * sigma2_1.sqrt()
        });
        let eps = DVector::from_fn(n, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * sigma2_e.sqrt()
        });
        let y = &x * beta + &z * b + eps;
        MixedModelSpec::new(y, x, vec![z]).unwrap()
    }

    /// Dense brute-force restricted likelihood with explicit covariance
    /// inversion, including the |X'X| normalization.
    fn dense_reml(spec: &MixedModelSpec, s2e: f64, s2: &[f64]) -> f64 {
        let n = spec.n();
        let p = spec.p();
        let mut sigma = DMatrix::<f64>::identity(n, n) * s2e;
        for (z, &s) in spec.blocks().iter().zip(s2) {
            sigma += z * z.transpose() * s;
        }
        let sigma_inv = sigma.clone().try_inverse().unwrap();
        let xtsx = spec.x().transpose() * &sigma_inv * spec.x();
        let xtx = spec.x().transpose() * spec.x();
        let beta = xtsx.clone().try_inverse().unwrap() * spec.x().transpose() * &sigma_inv
            * spec.y();
        let r = spec.y() - spec.x() * beta;
        let quad = (r.transpose() * &sigma_inv * &r)[(0, 0)];
        -0.5 * ((n - p) as f64 * LN_2PI
            + sigma.determinant().ln()
            + xtsx.determinant().ln()
            - xtx.determinant().ln()
            + quad)
    }

    #[test]
    fn restricted_likelihood_matches_dense_oracle() {
        let spec = random_spec(20, 3, &[4, 5], 1);
        for (s2e, s2) in [(1.0, vec![0.5, 2.0]), (0.3, vec![4.0, 0.0]), (2.0, vec![0.0, 0.0])] {
            let fast = restricted_log_likelihood(&spec, s2e, &s2).unwrap();
            let dense = dense_reml(&spec, s2e, &s2);
            assert_abs_diff_eq!(fast, dense, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_variances_reduce_to_ols_restricted_likelihood() {
        let spec = random_spec(25, 3, &[4], 2);
        let s2e = 1.7;
        let ll = restricted_log_likelihood(&spec, s2e, &[0.0]).unwrap();
        // OLS residual-based restricted likelihood.
        let x = spec.x();
        let beta = (x.transpose() * x).try_inverse().unwrap() * x.transpose() * spec.y();
        let rss = (spec.y() - x * beta).norm_squared();
        let df = (spec.n() - spec.p()) as f64;
        let expected = -0.5 * (df * (LN_2PI + s2e.ln()) + rss / s2e);
        assert_abs_diff_eq!(ll, expected, epsilon = 1e-8);
    }

    #[test]
    fn restricted_likelihood_invariant_to_fixed_effect_reparameterization() {
        let spec = random_spec(24, 3, &[5], 3);
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, -1.0, 0.0, 0.5, 4.0, 1.0, -2.0, 0.1],
        );
        let x2 = spec.x() * a;
        let spec2 = MixedModelSpec::new(spec.y().clone(), x2, spec.blocks().to_vec()).unwrap();
        let l1 = restricted_log_likelihood(&spec, 0.8, &[1.3]).unwrap();
        let l2 = restricted_log_likelihood(&spec2, 0.8, &[1.3]).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-8);
    }

    #[test]
    fn reml_and_ml_differ_by_the_projection_determinant() {
        let spec = random_spec(22, 3, &[4], 4);
        let (s2e, s2) = (0.9, vec![1.1]);
        let lr = restricted_log_likelihood(&spec, s2e, &s2).unwrap();
        let lm = ml_log_likelihood(&spec, s2e, &s2).unwrap();
        // Dense evaluation of the correction term.
        let n = spec.n();
        let mut sigma = DMatrix::<f64>::identity(n, n) * s2e;
        sigma += &spec.blocks()[0] * spec.blocks()[0].transpose() * s2[0];
        let sigma_inv = sigma.try_inverse().unwrap();
        let xtsx = spec.x().transpose() * &sigma_inv * spec.x();
        let xtx = spec.x().transpose() * spec.x();
        let correction = -0.5
            * (xtsx.determinant().ln() - xtx.determinant().ln()
                - spec.p() as f64 * LN_2PI);
        assert_abs_diff_eq!(lr - lm, correction, epsilon = 1e-8);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let spec = random_spec(20, 2, &[3, 4], 5);
        let s2e = 0.7;
        let s2 = vec![1.2, 0.6];
        let grads = restricted_likelihood_gradient(&spec, s2e, &s2).unwrap();
        // Central differences on the log-variance scale, step 1e-5.
        let h: f64 = 1e-5;
        let eval = |se: f64, sb: &[f64]| restricted_log_likelihood(&spec, se, sb).unwrap();
        let all = [s2e, s2[0], s2[1]];
        for (k, &v) in all.iter().enumerate() {
            let (up, down) = (v * (h).exp(), v * (-h).exp());
            let (f_up, f_down) = match k {
                0 => (eval(up, &s2), eval(down, &s2)),
                _ => {
                    let mut su = s2.clone();
                    let mut sd = s2.clone();
                    su[k - 1] = up;
                    sd[k - 1] = down;
                    (eval(s2e, &su), eval(s2e, &sd))
                }
            };
            // d/d log sigma^2 = sigma^2 * d/d sigma^2.
            let numeric = (f_up - f_down) / (2.0 * h);
            let analytic = grads[k] * v;
            assert!(
                (numeric - analytic).abs() <= 1e-4 * analytic.abs().max(1.0),
                "component {k}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn fit_recovers_known_variances_within_mc_error() {
        let reps = 12;
        let (mut se_sum, mut s1_sum) = (0.0, 0.0);
        let mut s1_vals = Vec::new();
        for r in 0..reps {
            let spec = simulate_one_block(500, 12, 1.0, 4.0, 100 + r);
            let fit = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
            se_sum += fit.sigma2_error;
            s1_sum += fit.sigma2_blocks[0];
            s1_vals.push(fit.sigma2_blocks[0]);
        }
        let se_mean = se_sum / reps as f64;
        let s1_mean = s1_sum / reps as f64;
        let s1_sd = (s1_vals
            .iter()
            .map(|v| (v - s1_mean).powi(2))
            .sum::<f64>()
            / (reps - 1) as f64)
            .sqrt();
        let mcse = s1_sd / (reps as f64).sqrt();
        assert!(
            (s1_mean - 4.0).abs() <= 3.0 * mcse,
            "sigma1^2 mean {s1_mean} vs truth 4 (mcse {mcse})"
        );
        assert!((se_mean - 1.0).abs() < 0.3, "sigma_e^2 mean {se_mean}");
    }

    #[test]
    fn criterion_at_optimum_dominates_truth() {
        let spec = simulate_one_block(120, 8, 1.0, 2.0, 7);
        let fit = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        let at_truth = restricted_log_likelihood(&spec, 1.0, &[2.0]).unwrap();
        assert!(fit.criterion >= at_truth - 1e-8);
    }

    #[test]
    fn response_in_fixed_effect_span_floors_residual_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let mut x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        for r in 0..n {
            x[(r, 0)] = 1.0;
        }
        let z = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * DVector::from_vec(vec![2.0, 3.0]);
        let spec = MixedModelSpec::new(y, x, vec![z]).unwrap();
        let fit = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        assert!(fit.sigma2_floored);
        assert_eq!(fit.sigma2_blocks[0], 0.0);
        assert!(fit.boundary[0]);
        assert!(fit.sigma2_error > 0.0);
    }

    #[test]
    fn zero_variance_means_zero_blup() {
        let spec = random_spec(30, 2, &[5], 9);
        let fit = VarianceComponentFit {
            method: FitMethod::Reml,
            beta: DVector::zeros(2),
            blups: vec![DVector::zeros(5)],
            sigma2_error: 1.0,
            sigma2_blocks: vec![0.0],
            criterion: 0.0,
            iterations: 0,
            converged: true,
            boundary: vec![true],
            sigma2_floored: false,
        };
        let blups = predict_random_effects(&fit, &spec).unwrap();
        assert_eq!(blups[0].amax(), 0.0);
    }

    #[test]
    fn blups_match_dense_oracle() {
        let spec = simulate_one_block(20, 4, 1.0, 3.0, 10);
        let fit = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        let blups = predict_random_effects(&fit, &spec).unwrap();
        // Dense: b = sigma1^2 Z' Sigma^-1 (y - X beta).
        let n = spec.n();
        let z = &spec.blocks()[0];
        let mut sigma = DMatrix::<f64>::identity(n, n) * fit.sigma2_error;
        sigma += z * z.transpose() * fit.sigma2_blocks[0];
        let sigma_inv = sigma.try_inverse().unwrap();
        let r = spec.y() - spec.x() * &fit.beta;
        let dense = z.transpose() * sigma_inv * r * fit.sigma2_blocks[0];
        assert!((dense - &blups[0]).amax() <= 1e-8);
        assert!((&blups[0] - &fit.blups[0]).amax() <= 1e-10);
    }

    #[test]
    fn blup_norm_shrinks_with_variance() {
        let spec = simulate_one_block(60, 6, 1.0, 2.0, 11);
        let mut norms = Vec::new();
        for s1 in [2.0, 0.5, 0.05, 0.0] {
            let fit = VarianceComponentFit {
                method: FitMethod::Reml,
                beta: {
                    // GLS beta at these variances via the dense path.
                    let n = spec.n();
                    let z = &spec.blocks()[0];
                    let mut sigma = DMatrix::<f64>::identity(n, n);
                    sigma += z * z.transpose() * s1;
                    let si = sigma.try_inverse().unwrap();
                    let xtsx = spec.x().transpose() * &si * spec.x();
                    xtsx.try_inverse().unwrap() * spec.x().transpose() * si * spec.y()
                },
                blups: vec![],
                sigma2_error: 1.0,
                sigma2_blocks: vec![s1],
                criterion: 0.0,
                iterations: 0,
                converged: true,
                boundary: vec![s1 == 0.0],
                sigma2_floored: false,
            };
            let blups = predict_random_effects(&fit, &spec).unwrap();
            norms.push(blups[0].norm());
        }
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "norms not shrinking: {norms:?}");
        }
        assert_eq!(*norms.last().unwrap(), 0.0);
    }

    #[test]
    fn weighted_residual_orthogonality_holds_at_the_fit() {
        let spec = simulate_one_block(40, 5, 1.0, 2.0, 12);
        let fit = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        // First block row of the Henderson normal equations: the full
        // residual, weighted by the inverse residual variance, is orthogonal
        // to the fixed-effect columns. Equivalently y - Xb - Zu equals
        // Sigma^-1 (y - Xb) up to the sigma_e^2 factor, and GLS kills the
        // X projection of that vector.
        let resid = spec.y() - fit.fitted_values(&spec);
        let weighted = spec.x().transpose() * resid / fit.sigma2_error;
        assert!(weighted.amax() <= 1e-6 * spec.y().amax().max(1.0));
    }

    #[test]
    fn fitting_is_deterministic() {
        let spec = simulate_one_block(80, 6, 1.0, 0.7, 13);
        let f1 = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        let f2 = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        assert_eq!(f1.sigma2_error, f2.sigma2_error);
        assert_eq!(f1.sigma2_blocks, f2.sigma2_blocks);
        assert_eq!(f1.beta, f2.beta);
    }

    #[test]
    fn rejects_rank_deficient_fixed_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 20;
        let mut x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        for r in 0..n {
            x[(r, 0)] = 1.0;
            let v = x[(r, 1)];
            x[(r, 2)] = 2.0 * v; // exact collinearity
        }
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let spec = MixedModelSpec::new(y, x, vec![]).unwrap();
        assert!(fit_mixed_model(&spec, FitMethod::Reml).is_err());
    }
}
