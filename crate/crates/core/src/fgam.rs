//! Model-level fitting and evaluation: the functional linear model, the
//! tensor-product surface fit with GCV-chosen smoothing, and the PS-ANOVA
//! mixed-model fit (FGAMM) estimated by REML.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::FunctionalDataset;
use crate::design::{
    self, build_flm_design, build_psanova_design, build_tensor_design, quadrature_weights,
    QuadratureOperator, TensorDesign,
};
use crate::error::{Error, Result};
use crate::lmm::{fit_mixed_model, FitMethod, MixedModelSpec};
use crate::splines::{self, MarginalBasis};

/// GCV search grid: this many log-uniform points per axis on
/// [`GCV_LAMBDA_RANGE`], followed by one refinement pass around the minimum.
pub const GCV_GRID_SIZE: usize = 21;
pub const GCV_LAMBDA_RANGE: (f64, f64) = (1e-4, 1e8);

/// A fitted scalar-on-function regression model.
#[derive(Debug, Clone)]
pub struct FgamFit {
    pub quad: QuadratureOperator,
    pub x_range: (f64, f64),
    /// Fitted means on the training data.
    pub fitted: DVector<f64>,
    pub warnings: Vec<String>,
    pub params: FitParams,
}

/// Parameterization-specific pieces of a fit.
#[derive(Debug, Clone)]
pub enum FitParams {
    /// FLM: fixed part [1 : x : x*t] plus the t-smooth block of the surface
    /// slope.
    Flm {
        basis_t: MarginalBasis,
        beta: DVector<f64>,
        b1: DVector<f64>,
        sigma2_error: f64,
        sigma2_1: f64,
        criterion: f64,
    },
    /// FGAMM: PS-ANOVA mixed model with three variance components.
    PsAnova {
        basis_x: MarginalBasis,
        basis_t: MarginalBasis,
        beta: DVector<f64>,
        b: [DVector<f64>; 3],
        sigma2_error: f64,
        sigma2: [f64; 3],
        criterion: f64,
    },
    /// Standard tensor-product fit with fixed smoothing parameters chosen by
    /// GCV.
    Tensor {
        basis_x: MarginalBasis,
        basis_t: MarginalBasis,
        theta: DVector<f64>,
        lambda: (f64, f64),
        gcv: f64,
        edf: f64,
    },
}

impl FgamFit {
    pub fn model_name(&self) -> &'static str {
        match &self.params {
            FitParams::Flm { .. } => "flm",
            FitParams::PsAnova { .. } => "fgamm",
            FitParams::Tensor { .. } => "fgam-gcv",
        }
    }
}

/// Prediction output with boundary-clamping diagnostics.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub clamped_points: usize,
    pub warnings: Vec<String>,
}

/// Surface values on an (x, t) grid split into the four additive pieces of
/// the tensor decomposition. Components sum to `total` exactly.
#[derive(Debug, Clone)]
pub struct SurfaceDecomposition {
    pub x_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// beta_0 + beta_1 x (+ beta_2 t) + beta_3 x t.
    pub parametric: DMatrix<f64>,
    /// f_1(t) + x f_2(t); only the x-linear part is present for PS-ANOVA
    /// fits, where f_1 is dropped for identifiability.
    pub linear_x_smooth_t: DMatrix<f64>,
    /// g_1(x) + t g_2(x).
    pub smooth_x_parametric_t: DMatrix<f64>,
    /// Fully nonparametric interaction h(x, t).
    pub smooth_both: DMatrix<f64>,
    pub total: DMatrix<f64>,
}

fn check_dense_fit_preconditions(data: &FunctionalDataset) -> Result<()> {
    if data.n() <= 10 {
        return Err(Error::parameter(format!(
            "need more than 10 curves, got {}",
            data.n()
        )));
    }
    // Near-constant predictor curves leave nothing for the surface to vary
    // over.
    let (lo, hi) = data.predictor_range();
    let scale = lo.abs().max(hi.abs()).max(1.0);
    if hi - lo <= 1e-10 * scale {
        return Err(Error::DegenerateDesign(
            "predictor curves are near-constant".into(),
        ));
    }
    Ok(())
}

/// Fits the FGAMM: PS-ANOVA design, three-block mixed model, REML.
pub fn fit_fgamm(
    data: &FunctionalDataset,
    kx: usize,
    kt: usize,
    quad: &QuadratureOperator,
) -> Result<FgamFit> {
    check_dense_fit_preconditions(data)?;
    let d = build_psanova_design(data, kx, kt, quad)?;
    let spec = MixedModelSpec::new(
        data.response().clone(),
        d.x.clone(),
        vec![d.z1.clone(), d.z2.clone(), d.z3.clone()],
    )?;
    let fit = fit_mixed_model(&spec, FitMethod::Reml)?;
    let fitted = fit.fitted_values(&spec);
    Ok(FgamFit {
        quad: quad.clone(),
        x_range: d.x_range,
        fitted,
        warnings: Vec::new(),
        params: FitParams::PsAnova {
            basis_x: d.basis_x,
            basis_t: d.basis_t,
            beta: fit.beta,
            b: [
                fit.blups[0].clone(),
                fit.blups[1].clone(),
                fit.blups[2].clone(),
            ],
            sigma2_error: fit.sigma2_error,
            sigma2: [
                fit.sigma2_blocks[0],
                fit.sigma2_blocks[1],
                fit.sigma2_blocks[2],
            ],
            criterion: fit.criterion,
        },
    })
}

/// Fits the FLM as a one-component mixed model by REML.
pub fn fit_flm(
    data: &FunctionalDataset,
    kt: usize,
    quad: &QuadratureOperator,
) -> Result<FgamFit> {
    check_dense_fit_preconditions(data)?;
    let d = build_flm_design(data, kt, quad)?;
    let spec = MixedModelSpec::new(data.response().clone(), d.x.clone(), vec![d.z1.clone()])?;
    let fit = fit_mixed_model(&spec, FitMethod::Reml)?;
    let fitted = fit.fitted_values(&spec);
    Ok(FgamFit {
        quad: quad.clone(),
        x_range: d.x_range,
        fitted,
        warnings: Vec::new(),
        params: FitParams::Flm {
            basis_t: d.basis_t,
            beta: fit.beta,
            b1: fit.blups[0].clone(),
            sigma2_error: fit.sigma2_error,
            sigma2_1: fit.sigma2_blocks[0],
            criterion: fit.criterion,
        },
    })
}

/// Solves the penalized least-squares problem (C'C + S) theta = C'y through
/// a symmetric eigendecomposition, dropping directions that are null for
/// both the data and the penalty. Returns (theta, rss, edf).
fn penalized_solve(
    c: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64, f64)> {
    let ctc = c.transpose() * c;
    let cty = c.transpose() * y;
    let a = &ctc + s;
    let k = cty.len();
    // Jacobi balancing keeps the rank decision scale-free: with extreme
    // smoothing the penalty block dwarfs C'C by many orders of magnitude and
    // an unbalanced eigen threshold would discard genuine data directions.
    let mut d = DVector::zeros(k);
    for i in 0..k {
        let v = a[(i, i)];
        d[i] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let mut b = a;
    for r in 0..k {
        for c2 in 0..k {
            b[(r, c2)] /= d[r] * d[c2];
        }
    }
    let eig = SymmetricEigen::new(b);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max_ev <= 0.0 {
        return Err(Error::numerical("penalized system is identically zero"));
    }
    let tol = 1e-12 * max_ev;
    // theta = D^-1/2 V E^+ V' D^-1/2 C'y; directions null for both the data
    // and the penalty are dropped (they do not affect fitted values).
    let scaled_cty = DVector::from_fn(k, |i, _| cty[i] / d[i]);
    let vt_cty = eig.eigenvectors.transpose() * scaled_cty;
    let mut coef = DVector::zeros(k);
    for i in 0..k {
        if eig.eigenvalues[i] > tol {
            coef[i] = vt_cty[i] / eig.eigenvalues[i];
        }
    }
    let mut theta = &eig.eigenvectors * coef;
    for i in 0..k {
        theta[i] /= d[i];
    }
    let resid = y - c * &theta;
    let rss = resid.norm_squared();
    // edf = tr(H) through the same eigenbasis, with C'C balanced the same
    // way.
    let mut ctc_scaled = ctc;
    for r in 0..k {
        for c2 in 0..k {
            ctc_scaled[(r, c2)] /= d[r] * d[c2];
        }
    }
    let m = eig.eigenvectors.transpose() * ctc_scaled * &eig.eigenvectors;
    let mut edf = 0.0;
    for i in 0..k {
        if eig.eigenvalues[i] > tol {
            edf += m[(i, i)] / eig.eigenvalues[i];
        }
    }
    Ok((theta, rss, edf))
}

/// Penalized tensor fit at fixed smoothing parameters; exposed for the
/// reparameterization-equivalence checks.
pub fn fit_tensor_at(
    design: &TensorDesign,
    y: &DVector<f64>,
    lambda_x: f64,
    lambda_t: f64,
) -> Result<(DVector<f64>, DVector<f64>, f64, f64)> {
    let s = design.penalty(lambda_x, lambda_t)?;
    let (theta, rss, edf) = penalized_solve(&design.model_matrix, y, &s)?;
    let fitted = &design.model_matrix * &theta;
    Ok((theta, fitted, rss, edf))
}

/// Ridge fit of the null/range split at fixed smoothing parameters: the
/// unpenalized block plus the diagonal prior-precision ridge. Returns fitted
/// values; used as the second route of the equivalence oracle.
pub fn fit_split_ridge_at(
    design: &TensorDesign,
    y: &DVector<f64>,
    lambda_x: f64,
    lambda_t: f64,
) -> Result<DVector<f64>> {
    let split = design.split_penalty_nullspace(lambda_x, lambda_t)?;
    let n = y.len();
    let (p, q) = (split.xn.ncols(), split.zp.ncols());
    let mut m = DMatrix::zeros(n, p + q);
    m.view_mut((0, 0), (n, p)).copy_from(&split.xn);
    m.view_mut((0, p), (n, q)).copy_from(&split.zp);
    let mut penalty = DMatrix::zeros(p + q, p + q);
    for i in 0..q {
        penalty[(p + i, p + i)] = split.prior_precision[i];
    }
    let (coef, _, _) = penalized_solve(&m, y, &penalty)?;
    Ok(&m * coef)
}

fn log_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let f = i as f64 / (len - 1) as f64;
            lo.ln().exp() * (hi / lo).powf(f)
        })
        .collect()
}

/// Fits the tensor-product FGAM with (lambda_x, lambda_t) minimizing
/// GCV = N RSS / (N - tr H)^2 over a log grid with one refinement pass.
pub fn fit_fgam_gcv(
    data: &FunctionalDataset,
    kx: usize,
    kt: usize,
    quad: &QuadratureOperator,
) -> Result<FgamFit> {
    check_dense_fit_preconditions(data)?;
    let design = build_tensor_design(data, kx, kt, quad)?;
    let y = data.response();
    let n = data.n() as f64;

    let mut warnings = Vec::new();
    let evaluate_gcv = |lx: f64, lt: f64| -> Result<f64> {
        let s = design.penalty(lx, lt)?;
        let (_, rss, edf) = penalized_solve(&design.model_matrix, y, &s)?;
        if edf >= n {
            return Err(Error::numerical(format!(
                "effective degrees of freedom {edf} reach the sample size"
            )));
        }
        Ok(n * rss / (n - edf).powi(2))
    };

    let coarse = log_grid(GCV_LAMBDA_RANGE.0, GCV_LAMBDA_RANGE.1, GCV_GRID_SIZE);
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (i, &lx) in coarse.iter().enumerate() {
        for (j, &lt) in coarse.iter().enumerate() {
            let g = evaluate_gcv(lx, lt)?;
            if g < best.0 {
                best = (g, i, j);
            }
        }
    }
    let (_, bi, bj) = best;
    if bi == 0 || bj == 0 || bi + 1 == coarse.len() || bj + 1 == coarse.len() {
        warnings.push(format!(
            "GCV minimizer on the search-grid boundary (lambda_x = {:.3e}, lambda_t = {:.3e})",
            coarse[bi], coarse[bj]
        ));
    }
    // One refinement pass over the surrounding cells.
    let refine_axis = |idx: usize| -> (f64, f64) {
        let lo = coarse[idx.saturating_sub(1)];
        let hi = coarse[(idx + 1).min(coarse.len() - 1)];
        (lo, hi)
    };
    let (lx_lo, lx_hi) = refine_axis(bi);
    let (lt_lo, lt_hi) = refine_axis(bj);
    let fine_x = log_grid(lx_lo, lx_hi, 11);
    let fine_t = log_grid(lt_lo, lt_hi, 11);
    let mut best_fine = (best.0, coarse[bi], coarse[bj]);
    for &lx in &fine_x {
        for &lt in &fine_t {
            let g = evaluate_gcv(lx, lt)?;
            if g < best_fine.0 {
                best_fine = (g, lx, lt);
            }
        }
    }
    let (gcv, lambda_x, lambda_t) = best_fine;
    let s = design.penalty(lambda_x, lambda_t)?;
    let (theta, rss, edf) = penalized_solve(&design.model_matrix, y, &s)?;
    let _ = rss;
    let fitted = &design.model_matrix * &theta;

    let basis_x = splines::marginal_mixed_transform(design.basis_x.clone())?;
    let basis_t = splines::marginal_mixed_transform(design.basis_t.clone())?;
    Ok(FgamFit {
        quad: quad.clone(),
        x_range: design.x_range,
        fitted,
        warnings,
        params: FitParams::Tensor {
            basis_x,
            basis_t,
            theta,
            lambda: (lambda_x, lambda_t),
            gcv,
            edf,
        },
    })
}

impl FgamFit {
    /// Predicted means for new curves observed on `grid`. Quadrature weights
    /// are re-derived for the supplied grid with the training rule; predictor
    /// values outside the training range are clamped with a warning.
    pub fn predict(&self, predictors: &DMatrix<f64>, grid: &[f64]) -> Result<Prediction> {
        let m = predictors.nrows();
        if predictors.ncols() != grid.len() {
            return Err(Error::shape(format!(
                "{} grid points for curves with {} observations",
                grid.len(),
                predictors.ncols()
            )));
        }
        let quad = quadrature_weights(m, grid, self.quad.rule())?;
        let j = grid.len();
        let vec_x = DVector::from_fn(m * j, |k, _| predictors[(k / j, k % j)]);
        // Observation times are clamped into the training t-domain so the
        // stored basis stays valid on slightly different grids.
        let (t_lo, t_hi) = match &self.params {
            FitParams::Flm { basis_t, .. } => basis_t.knots.domain(),
            FitParams::PsAnova { basis_t, .. } => basis_t.knots.domain(),
            FitParams::Tensor { basis_t, .. } => basis_t.knots.domain(),
        };
        let vec_t = DVector::from_fn(m * j, |k, _| grid[k % j].clamp(t_lo, t_hi));

        let (mean, clamped) = match &self.params {
            FitParams::Flm { basis_t, beta, b1, .. } => {
                let (a, b) = basis_t.knots.domain();
                let _ = (a, b);
                let (x, z1) = design::flm_blocks(basis_t, &vec_x, &vec_t, &quad)?;
                (x * beta + z1 * b1, 0)
            }
            FitParams::PsAnova {
                basis_x,
                basis_t,
                beta,
                b,
                ..
            } => {
                let (x, z1, z2, z3, clamped) =
                    design::psanova_blocks(basis_x, basis_t, &vec_x, &vec_t, &quad)?;
                (
                    x * beta + z1 * &b[0] + z2 * &b[1] + z3 * &b[2],
                    clamped,
                )
            }
            FitParams::Tensor {
                basis_x,
                basis_t,
                theta,
                ..
            } => {
                let (bx, clamped) = basis_x.knots.eval_clamp_counting(vec_x.as_slice());
                let bt = basis_t
                    .knots
                    .eval(vec_t.as_slice(), splines::DomainPolicy::Clamp)?;
                let boxed = design::box_product(&bx, &bt)?;
                (quad.apply(&boxed)? * theta, clamped)
            }
        };
        let mut warnings = Vec::new();
        if clamped > 0 {
            warnings.push(format!(
                "{clamped} predictor values outside the training range [{:.6}, {:.6}] were clamped",
                self.x_range.0, self.x_range.1
            ));
        }
        Ok(Prediction {
            mean,
            clamped_points: clamped,
            warnings,
        })
    }

    /// Surface-slope coefficient function of the FLM parameterization:
    /// beta(t) = beta_1 + beta_3 t + f_2(t). Errors for tensor fits.
    pub fn coefficient_function(&self, t_grid: &[f64]) -> Result<DVector<f64>> {
        match &self.params {
            FitParams::Flm { basis_t, beta, b1, .. } => {
                let (zt, _) = basis_t.zpart_at(t_grid);
                let mut out = zt * b1;
                for (i, &t) in t_grid.iter().enumerate() {
                    out[i] += beta[1] + beta[2] * t;
                }
                Ok(out)
            }
            FitParams::PsAnova {
                basis_t, beta, b, ..
            } => {
                let (zt, _) = basis_t.zpart_at(t_grid);
                let mut out = zt * &b[0];
                for (i, &t) in t_grid.iter().enumerate() {
                    out[i] += beta[1] + beta[2] * t;
                }
                Ok(out)
            }
            FitParams::Tensor { .. } => Err(Error::parameter(
                "coefficient function is defined for the FLM/PS-ANOVA parameterizations",
            )),
        }
    }

    /// Evaluates the fitted surface on the product grid, split into the
    /// decomposition components. Grid values are clamped into the training
    /// ranges.
    pub fn evaluate_surface(
        &self,
        x_grid: &[f64],
        t_grid: &[f64],
    ) -> Result<SurfaceDecomposition> {
        let (nx, nt) = (x_grid.len(), t_grid.len());
        let mut parametric = DMatrix::zeros(nx, nt);
        let mut linear_x = DMatrix::zeros(nx, nt);
        let mut smooth_x = DMatrix::zeros(nx, nt);
        let mut smooth_both = DMatrix::zeros(nx, nt);

        match &self.params {
            FitParams::Flm { basis_t, beta, b1, .. } => {
                let (zt, _) = basis_t.zpart_at(t_grid);
                let f2 = zt * b1;
                for (i, &x) in x_grid.iter().enumerate() {
                    let xc = x.clamp(self.x_range.0, self.x_range.1);
                    for (j, &t) in t_grid.iter().enumerate() {
                        parametric[(i, j)] = beta[0] + beta[1] * xc + beta[2] * xc * t;
                        linear_x[(i, j)] = xc * f2[j];
                    }
                }
            }
            FitParams::PsAnova {
                basis_x,
                basis_t,
                beta,
                b,
                ..
            } => {
                let xc: Vec<f64> = x_grid
                    .iter()
                    .map(|&x| x.clamp(self.x_range.0, self.x_range.1))
                    .collect();
                let (zx, _) = basis_x.zpart_at(&xc);
                let (zt, _) = basis_t.zpart_at(t_grid);
                let f2 = &zt * &b[0];
                let qx = zx.ncols();
                let qt = zt.ncols();
                for i in 0..nx {
                    for j in 0..nt {
                        let t = t_grid[j];
                        parametric[(i, j)] = beta[0] + beta[1] * xc[i] + beta[2] * xc[i] * t;
                        linear_x[(i, j)] = xc[i] * f2[j];
                        let mut g = 0.0;
                        for k in 0..qx {
                            g += zx[(i, k)] * (b[1][2 * k] + t * b[1][2 * k + 1]);
                        }
                        smooth_x[(i, j)] = g;
                        let mut h = 0.0;
                        for kx in 0..qx {
                            let zxi = zx[(i, kx)];
                            if zxi == 0.0 {
                                continue;
                            }
                            for ktt in 0..qt {
                                h += zxi * zt[(j, ktt)] * b[2][kx * qt + ktt];
                            }
                        }
                        smooth_both[(i, j)] = h;
                    }
                }
            }
            FitParams::Tensor {
                basis_x,
                basis_t,
                theta,
                ..
            } => {
                // Change of basis: express the coefficient matrix in the
                // [1 : x : Z_x] (x) [1 : t : Z_t] coordinates, whose blocks
                // are exactly the decomposition components.
                let kx = basis_x.num_basis();
                let kt = basis_t.num_basis();
                let cx = null_range_coef_basis(basis_x);
                let ct = null_range_coef_basis(basis_t);
                let mut theta_mat = DMatrix::zeros(kx, kt);
                for jx in 0..kx {
                    for jt in 0..kt {
                        theta_mat[(jx, jt)] = theta[jx * kt + jt];
                    }
                }
                let cx_lu = cx.lu();
                let gamma_left = cx_lu
                    .solve(&theta_mat)
                    .ok_or_else(|| Error::numerical("coefficient change of basis failed"))?;
                let ct_lu = ct.lu();
                let gamma_t = ct_lu
                    .solve(&gamma_left.transpose())
                    .ok_or_else(|| Error::numerical("coefficient change of basis failed"))?;
                let gamma = gamma_t.transpose(); // kx x kt in split coordinates

                let xc: Vec<f64> = x_grid
                    .iter()
                    .map(|&x| x.clamp(self.x_range.0, self.x_range.1))
                    .collect();
                let (zx, _) = basis_x.zpart_at(&xc);
                let (zt, _) = basis_t.zpart_at(t_grid);
                for i in 0..nx {
                    // Row vector [1, x, Zx(x)].
                    let mut row_x = DVector::zeros(kx);
                    row_x[0] = 1.0;
                    row_x[1] = xc[i];
                    for k in 2..kx {
                        row_x[k] = zx[(i, k - 2)];
                    }
                    for j in 0..nt {
                        let mut col_t = DVector::zeros(kt);
                        col_t[0] = 1.0;
                        col_t[1] = t_grid[j];
                        for k in 2..kt {
                            col_t[k] = zt[(j, k - 2)];
                        }
                        let mut acc = [0.0f64; 4]; // [nn, nz, zn, zz]
                        for a in 0..kx {
                            for c in 0..kt {
                                let v = row_x[a] * gamma[(a, c)] * col_t[c];
                                match (a < 2, c < 2) {
                                    (true, true) => acc[0] += v,
                                    (true, false) => acc[1] += v,
                                    (false, true) => acc[2] += v,
                                    (false, false) => acc[3] += v,
                                }
                            }
                        }
                        parametric[(i, j)] = acc[0];
                        linear_x[(i, j)] = acc[1];
                        smooth_x[(i, j)] = acc[2];
                        smooth_both[(i, j)] = acc[3];
                    }
                }
            }
        }
        let total = &parametric + &linear_x + &smooth_x + &smooth_both;
        Ok(SurfaceDecomposition {
            x_grid: x_grid.to_vec(),
            t_grid: t_grid.to_vec(),
            parametric,
            linear_x_smooth_t: linear_x,
            smooth_x_parametric_t: smooth_x,
            smooth_both,
            total,
        })
    }
}

/// Invertible K x K map from B-spline coefficients to the
/// [constant : identity : penalized-range] coordinates: column 0 reproduces
/// the constant function, column 1 the identity (Greville abscissae), the
/// remainder is the range map of the penalty split.
fn null_range_coef_basis(basis: &MarginalBasis) -> DMatrix<f64> {
    let k = basis.num_basis();
    let mut c = DMatrix::zeros(k, k);
    for r in 0..k {
        c[(r, 0)] = 1.0;
    }
    let grev = basis.knots.greville();
    for r in 0..k {
        c[(r, 1)] = grev[r];
    }
    let range = &basis
        .transform
        .as_ref()
        .expect("transformed basis required")
        .range_map;
    for r in 0..k {
        for j in 0..range.ncols() {
            c[(r, j + 2)] = range[(r, j)];
        }
    }
    c
}
