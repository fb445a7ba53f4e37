//! Design-matrix construction: quadrature operators, box products, the
//! standard tensor-product design with its two-parameter penalty, and the
//! PS-ANOVA design whose penalized blocks carry identity penalties.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::FunctionalDataset;
use crate::error::{Error, Result};
use crate::splines::{
    self, make_knots, DomainPolicy, MarginalBasis, PenaltyKind, NULLSPACE_EIGEN_TOL,
};

/// Hard cap on tensor-product coefficient counts; guards against accidental
/// huge allocations from misconfigured basis sizes.
pub const MAX_TENSOR_COLUMNS: usize = 10_000;

/// Numerical-integration rule for the curve integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    /// Equal weights |T| / J per observation.
    Midpoint,
    /// Composite trapezoid on the (possibly non-uniform) grid.
    #[default]
    Trapezoid,
}

/// Sparse quadrature operator L mapping per-observation surface values
/// (curve-major, length N*J) to per-curve integrals (length N). Every curve
/// uses the same per-grid-point weights.
#[derive(Debug, Clone)]
pub struct QuadratureOperator {
    n: usize,
    grid: Vec<f64>,
    weights: Vec<f64>,
    rule: QuadratureRule,
}

/// Quadrature weights for `n` curves over `grid` using `rule`.
pub fn quadrature_weights(
    n: usize,
    grid: &[f64],
    rule: QuadratureRule,
) -> Result<QuadratureOperator> {
    let j = grid.len();
    if j < 2 {
        return Err(Error::parameter("quadrature grid needs at least 2 points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::parameter("quadrature grid must be strictly increasing"));
    }
    let length = grid[j - 1] - grid[0];
    let weights = match rule {
        QuadratureRule::Midpoint => vec![length / j as f64; j],
        QuadratureRule::Trapezoid => {
            let mut w = vec![0.0; j];
            for i in 0..j - 1 {
                let h = 0.5 * (grid[i + 1] - grid[i]);
                w[i] += h;
                w[i + 1] += h;
            }
            w
        }
    };
    Ok(QuadratureOperator {
        n,
        grid: grid.to_vec(),
        weights,
        rule,
    })
}

impl QuadratureOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Domain length |T| implied by the grid.
    pub fn domain_length(&self) -> f64 {
        self.grid[self.grid.len() - 1] - self.grid[0]
    }

    /// Same weights for a different number of curves.
    pub fn with_n(&self, n: usize) -> Self {
        Self {
            n,
            grid: self.grid.clone(),
            weights: self.weights.clone(),
            rule: self.rule,
        }
    }

    /// Applies L to a curve-major (N*J) x c matrix, yielding N x c.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (n, j) = (self.n, self.grid.len());
        if m.nrows() != n * j {
            return Err(Error::shape(format!(
                "quadrature expects {} rows, got {}",
                n * j,
                m.nrows()
            )));
        }
        let mut out = DMatrix::zeros(n, m.ncols());
        for i in 0..n {
            for t in 0..j {
                let w = self.weights[t];
                let row = m.row(i * j + t);
                for c in 0..m.ncols() {
                    out[(i, c)] += w * row[c];
                }
            }
        }
        Ok(out)
    }

    /// Applies L to a curve-major vector of length N*J.
    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        Ok(self.apply(&m)?.column(0).into_owned())
    }

    /// Dense N x (N*J) representation, for oracle checks only.
    pub fn dense(&self) -> DMatrix<f64> {
        let (n, j) = (self.n, self.grid.len());
        let mut l = DMatrix::zeros(n, n * j);
        for i in 0..n {
            for t in 0..j {
                l[(i, i * j + t)] = self.weights[t];
            }
        }
        l
    }
}

/// Row-wise Kronecker product: row i of the result is the Kronecker product
/// of row i of `a` with row i of `b`.
pub fn box_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!(
            "box product needs equal row counts ({} vs {})",
            a.nrows(),
            b.nrows()
        )));
    }
    let (n, ma, mb) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(n, ma * mb);
    for r in 0..n {
        for ca in 0..ma {
            let av = a[(r, ca)];
            if av == 0.0 {
                continue;
            }
            let base = ca * mb;
            for cb in 0..mb {
                out[(r, base + cb)] = av * b[(r, cb)];
            }
        }
    }
    Ok(out)
}

fn predictor_axis_range(data: &FunctionalDataset) -> (f64, f64) {
    let (lo, hi) = data.predictor_range();
    if hi > lo {
        (lo, hi)
    } else {
        // Constant predictor: widen symmetrically so a basis still exists.
        (lo - 0.5, hi + 0.5)
    }
}

fn marginal_bases(
    data: &FunctionalDataset,
    kx: usize,
    kt: usize,
    kind: PenaltyKind,
) -> Result<(MarginalBasis, MarginalBasis)> {
    let x_range = predictor_axis_range(data);
    let grid = data.grid();
    let t_range = (grid[0], grid[grid.len() - 1]);
    let knots_x = make_knots(x_range, kx, 3)?;
    let knots_t = make_knots(t_range, kt, 3)?;
    let vec_x = data.vec_predictors();
    let vec_t = data.vec_times();
    let bx = MarginalBasis::with_penalty(knots_x, vec_x.as_slice(), 2, DomainPolicy::Strict, kind)?;
    let bt = MarginalBasis::with_penalty(knots_t, vec_t.as_slice(), 2, DomainPolicy::Strict, kind)?;
    Ok((bx, bt))
}

/// Standard tensor-product design for the penalized-surface fit: the model
/// matrix L (B_x box B_t) together with the marginal pieces needed to
/// assemble the two-parameter penalty and its null/range split.
#[derive(Debug, Clone)]
pub struct TensorDesign {
    pub model_matrix: DMatrix<f64>,
    pub basis_x: MarginalBasis,
    pub basis_t: MarginalBasis,
    pub gram_x: DMatrix<f64>,
    pub gram_t: DMatrix<f64>,
    pub quad: QuadratureOperator,
    pub x_range: (f64, f64),
}

/// Null/range split of the tensor penalty at fixed smoothing parameters.
#[derive(Debug, Clone)]
pub struct PenaltySplit {
    /// Unpenalized columns L (B_x box B_t) U_n.
    pub xn: DMatrix<f64>,
    /// Penalized columns L (B_x box B_t) U_p.
    pub zp: DMatrix<f64>,
    /// Positive penalty eigenvalues; the random-effect prior precision is
    /// diagonal in these coordinates.
    pub prior_precision: DVector<f64>,
    pub u_n: DMatrix<f64>,
    pub u_p: DMatrix<f64>,
}

/// Builds the tensor-product design for `data` with marginal basis sizes
/// `kx`, `kt` and the supplied quadrature operator.
pub fn build_tensor_design(
    data: &FunctionalDataset,
    kx: usize,
    kt: usize,
    quad: &QuadratureOperator,
) -> Result<TensorDesign> {
    if kx.saturating_mul(kt) > MAX_TENSOR_COLUMNS {
        return Err(Error::Capacity(format!(
            "tensor design would have {} columns (cap {MAX_TENSOR_COLUMNS})",
            kx * kt
        )));
    }
    if quad.n() != data.n() || quad.j() != data.j() {
        return Err(Error::shape(
            "quadrature operator does not match data dimensions",
        ));
    }
    let (bx, bt) = marginal_bases(data, kx, kt, PenaltyKind::ExactIntegral)?;
    let boxed = box_product(&bx.eval, &bt.eval)?;
    let model_matrix = quad.apply(&boxed)?;
    let gram_x = splines::gram_matrix(&bx.knots);
    let gram_t = splines::gram_matrix(&bt.knots);
    let x_range = predictor_axis_range(data);
    Ok(TensorDesign {
        model_matrix,
        basis_x: bx,
        basis_t: bt,
        gram_x,
        gram_t,
        quad: quad.clone(),
        x_range,
    })
}

impl TensorDesign {
    pub fn kx(&self) -> usize {
        self.basis_x.num_basis()
    }

    pub fn kt(&self) -> usize {
        self.basis_t.num_basis()
    }

    /// Tensor penalty S(lx, lt) = lx (P_x kron G_t) + lt (G_x kron P_t).
    ///
    /// The Gram-weighted form matches the integrated squared-derivative
    /// penalty of the surface fit; the weighting convention is isolated here.
    pub fn penalty(&self, lambda_x: f64, lambda_t: f64) -> Result<DMatrix<f64>> {
        if lambda_x < 0.0 || lambda_t < 0.0 {
            return Err(Error::parameter("smoothing parameters must be nonnegative"));
        }
        let kx = self.kx();
        let kt = self.kt();
        let mut s = DMatrix::zeros(kx * kt, kx * kt);
        for jx in 0..kx {
            for jx2 in 0..kx {
                let px = self.basis_x.penalty[(jx, jx2)];
                let gx = self.gram_x[(jx, jx2)];
                for jt in 0..kt {
                    for jt2 in 0..kt {
                        let r = jx * kt + jt;
                        let c = jx2 * kt + jt2;
                        s[(r, c)] += lambda_x * px * self.gram_t[(jt, jt2)]
                            + lambda_t * gx * self.basis_t.penalty[(jt, jt2)];
                    }
                }
            }
        }
        Ok(s)
    }

    /// Eigen-splits the penalty at (lx, lt) into its four-dimensional null
    /// space and the penalized range space, returning the transformed design
    /// blocks of the equivalent ridge problem.
    pub fn split_penalty_nullspace(&self, lambda_x: f64, lambda_t: f64) -> Result<PenaltySplit> {
        if lambda_x <= 0.0 || lambda_t <= 0.0 {
            return Err(Error::parameter(
                "penalty split needs strictly positive smoothing parameters",
            ));
        }
        let s = self.penalty(lambda_x, lambda_t)?;
        let k = s.nrows();
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
        });
        let max_ev = eig.eigenvalues[order[0]].max(0.0);
        let tol = NULLSPACE_EIGEN_TOL * max_ev;
        let positive: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| eig.eigenvalues[i] > tol)
            .collect();
        let nullity = k - positive.len();
        let expected = self.basis_x.penalty_order * self.basis_t.penalty_order;
        if nullity != expected {
            return Err(Error::numerical(format!(
                "tensor penalty nullity {nullity}, expected {expected}"
            )));
        }
        let mut u_p = DMatrix::zeros(k, positive.len());
        let mut prior_precision = DVector::zeros(positive.len());
        for (c, &i) in positive.iter().enumerate() {
            prior_precision[c] = eig.eigenvalues[i];
            u_p.column_mut(c).copy_from(&eig.eigenvectors.column(i));
        }
        let mut u_n = DMatrix::zeros(k, nullity);
        for (c, &i) in order[positive.len()..].iter().enumerate() {
            u_n.column_mut(c).copy_from(&eig.eigenvectors.column(i));
        }
        Ok(PenaltySplit {
            xn: &self.model_matrix * &u_n,
            zp: &self.model_matrix * &u_p,
            prior_precision,
            u_n,
            u_p,
        })
    }
}

/// PS-ANOVA design: three fixed-effect columns plus three random-effect
/// blocks with identity penalties. All blocks are premultiplied by the
/// quadrature operator.
#[derive(Debug, Clone)]
pub struct PsAnovaDesign {
    /// L [1 : x : x*t] — intercept, linear-in-x, and bilinear columns.
    pub x: DMatrix<f64>,
    /// L (x box Z_t): functions x f_2(t), dimension q1 = K_t - 2.
    pub z1: DMatrix<f64>,
    /// L (Z_x box X_t): functions g_1(x) + t g_2(x), dimension q2 = 2 (K_x - 2).
    pub z2: DMatrix<f64>,
    /// L (Z_x box Z_t): fully nonparametric part, q3 = (K_x - 2)(K_t - 2).
    pub z3: DMatrix<f64>,
    pub basis_x: MarginalBasis,
    pub basis_t: MarginalBasis,
    pub quad: QuadratureOperator,
    pub x_range: (f64, f64),
}

/// Builds the PS-ANOVA design. The pure-t fixed column and the t-smooth
/// main-effect block are dropped: integrated over the time domain they are
/// confounded with the intercept.
pub fn build_psanova_design(
    data: &FunctionalDataset,
    kx: usize,
    kt: usize,
    quad: &QuadratureOperator,
) -> Result<PsAnovaDesign> {
    if kx.saturating_mul(kt) > MAX_TENSOR_COLUMNS {
        return Err(Error::Capacity(format!(
            "tensor construction would have {} coefficients (cap {MAX_TENSOR_COLUMNS})",
            kx * kt
        )));
    }
    if quad.n() != data.n() || quad.j() != data.j() {
        return Err(Error::shape(
            "quadrature operator does not match data dimensions",
        ));
    }
    // The random-effect scalings of the PS-ANOVA construction come from the
    // classic P-spline difference penalty: it is domain-free, so the x and t
    // axes are treated symmetrically no matter how wide the predictor range
    // is. The exact-integral penalty stays with the tensor-product path.
    let (bx, bt) = marginal_bases(data, kx, kt, PenaltyKind::Difference)?;
    let bx = splines::marginal_mixed_transform(bx)?;
    let bt = splines::marginal_mixed_transform(bt)?;
    let (x, z1, z2, z3, clamped) = psanova_blocks(
        &bx,
        &bt,
        &data.vec_predictors(),
        &data.vec_times(),
        quad,
    )?;
    debug_assert_eq!(clamped, 0, "training points lie inside the knot domain");
    let x_range = predictor_axis_range(data);
    Ok(PsAnovaDesign {
        x,
        z1,
        z2,
        z3,
        basis_x: bx,
        basis_t: bt,
        quad: quad.clone(),
        x_range,
    })
}

impl PsAnovaDesign {
    pub fn q1(&self) -> usize {
        self.z1.ncols()
    }

    pub fn q2(&self) -> usize {
        self.z2.ncols()
    }

    pub fn q3(&self) -> usize {
        self.z3.ncols()
    }
}

/// The FLM subset of the PS-ANOVA design: fixed columns L [1 : x : x*t] and
/// the single random block L (x box Z_t). Only the t-axis basis is needed.
#[derive(Debug, Clone)]
pub struct FlmDesign {
    pub x: DMatrix<f64>,
    pub z1: DMatrix<f64>,
    pub basis_t: MarginalBasis,
    pub quad: QuadratureOperator,
    pub x_range: (f64, f64),
}

pub fn build_flm_design(
    data: &FunctionalDataset,
    kt: usize,
    quad: &QuadratureOperator,
) -> Result<FlmDesign> {
    if quad.n() != data.n() || quad.j() != data.j() {
        return Err(Error::shape(
            "quadrature operator does not match data dimensions",
        ));
    }
    let grid = data.grid();
    let t_range = (grid[0], grid[grid.len() - 1]);
    let knots_t = make_knots(t_range, kt, 3)?;
    let vec_t = data.vec_times();
    let bt = MarginalBasis::with_penalty(
        knots_t,
        vec_t.as_slice(),
        2,
        DomainPolicy::Strict,
        PenaltyKind::Difference,
    )?;
    let bt = splines::marginal_mixed_transform(bt)?;
    let (x, z1) = flm_blocks(&bt, &data.vec_predictors(), &vec_t, quad)?;
    Ok(FlmDesign {
        x,
        z1,
        basis_t: bt,
        quad: quad.clone(),
        x_range: predictor_axis_range(data),
    })
}

/// Assembles (X, Z1) from an already-transformed t-basis evaluated at the
/// supplied curve-major points.
pub(crate) fn flm_blocks(
    basis_t: &MarginalBasis,
    vec_x: &DVector<f64>,
    vec_t: &DVector<f64>,
    quad: &QuadratureOperator,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nj = vec_x.len();
    let (zt, _) = basis_t.zpart_at(vec_t.as_slice());
    let mut fixed = DMatrix::zeros(nj, 3);
    let mut xz_t = zt;
    for r in 0..nj {
        fixed[(r, 0)] = 1.0;
        fixed[(r, 1)] = vec_x[r];
        fixed[(r, 2)] = vec_x[r] * vec_t[r];
        for c in 0..xz_t.ncols() {
            xz_t[(r, c)] *= vec_x[r];
        }
    }
    Ok((quad.apply(&fixed)?, quad.apply(&xz_t)?))
}

/// Assembles the full PS-ANOVA blocks (X, Z1, Z2, Z3) at arbitrary points
/// using already-transformed marginal bases, clamping out-of-domain predictor
/// values. Returns the number of clamped entries.
pub(crate) fn psanova_blocks(
    basis_x: &MarginalBasis,
    basis_t: &MarginalBasis,
    vec_x: &DVector<f64>,
    vec_t: &DVector<f64>,
    quad: &QuadratureOperator,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, usize)> {
    let nj = vec_x.len();
    let (a, b) = basis_x.knots.domain();
    let clamped = vec_x.iter().filter(|&&v| v < a || v > b).count();
    let vec_x_clamped = DVector::from_fn(nj, |i, _| vec_x[i].clamp(a, b));
    let (zx, _) = basis_x.zpart_at(vec_x_clamped.as_slice());
    let (zt, _) = basis_t.zpart_at(vec_t.as_slice());

    let mut fixed = DMatrix::zeros(nj, 3);
    let mut xz_t = zt.clone();
    for r in 0..nj {
        fixed[(r, 0)] = 1.0;
        fixed[(r, 1)] = vec_x_clamped[r];
        fixed[(r, 2)] = vec_x_clamped[r] * vec_t[r];
        for c in 0..xz_t.ncols() {
            xz_t[(r, c)] *= vec_x_clamped[r];
        }
    }
    let mut zx_xt = DMatrix::zeros(nj, 2 * zx.ncols());
    for r in 0..nj {
        let t = vec_t[r];
        for c in 0..zx.ncols() {
            zx_xt[(r, 2 * c)] = zx[(r, c)];
            zx_xt[(r, 2 * c + 1)] = zx[(r, c)] * t;
        }
    }
    let zx_zt = box_product(&zx, &zt)?;
    Ok((
        quad.apply(&fixed)?,
        quad.apply(&xz_t)?,
        quad.apply(&zx_xt)?,
        quad.apply(&zx_zt)?,
        clamped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset(n: usize, j: usize, seed: u64) -> FunctionalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid: Vec<f64> = (0..j).map(|i| i as f64 / (j - 1) as f64).collect();
        let x = DMatrix::from_fn(n, j, |_, _| rng.gen_range(-1.5..1.5));
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        FunctionalDataset::new(y, x, grid).unwrap()
    }

    #[test]
    fn box_product_matches_definition() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let p = box_product(&a, &b).unwrap();
        assert_eq!(p.as_slice(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn box_product_with_ones_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let ones = DMatrix::from_element(6, 1, 1.0);
        let p = box_product(&ones, &b).unwrap();
        assert_eq!(p, b);
    }

    #[test]
    fn box_product_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-2.0..2.0));
        let b = DMatrix::from_fn(5, 4, |_, _| rng.gen_range(-2.0..2.0));
        let p = box_product(&a, &b).unwrap();
        for r in 0..5 {
            for ca in 0..3 {
                for cb in 0..4 {
                    assert_abs_diff_eq!(
                        p[(r, ca * 4 + cb)],
                        a[(r, ca)] * b[(r, cb)],
                        epsilon = 1e-15
                    );
                }
            }
        }
    }

    #[test]
    fn box_product_rejects_row_mismatch() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(4, 2);
        assert!(box_product(&a, &b).is_err());
    }

    #[test]
    fn midpoint_weights_match_cited_formula() {
        let q = quadrature_weights(2, &[0.0, 0.5, 1.0], QuadratureRule::Midpoint).unwrap();
        assert_eq!(q.weights(), &[1.0 / 3.0; 3]);
        let dense = q.dense();
        assert_eq!(dense.nrows(), 2);
        assert_eq!(dense.ncols(), 6);
        assert_abs_diff_eq!(dense[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[(0, 3)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[(1, 3)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn both_rules_integrate_constants_exactly() {
        let grid: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        for rule in [QuadratureRule::Midpoint, QuadratureRule::Trapezoid] {
            let q = quadrature_weights(3, &grid, rule).unwrap();
            let ones = DVector::from_element(27, 1.0);
            let integrals = q.apply_vec(&ones).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(integrals[i], 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn trapezoid_is_exact_for_linear_functions() {
        let grid: Vec<f64> = (0..7).map(|i| i as f64 / 6.0).collect();
        let q = quadrature_weights(1, &grid, QuadratureRule::Trapezoid).unwrap();
        let f = DVector::from_iterator(7, grid.iter().copied());
        let integral = q.apply_vec(&f).unwrap();
        assert_abs_diff_eq!(integral[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_rejects_bad_grids() {
        assert!(quadrature_weights(1, &[0.0], QuadratureRule::Trapezoid).is_err());
        assert!(quadrature_weights(1, &[0.0, 0.0, 1.0], QuadratureRule::Midpoint).is_err());
    }

    #[test]
    fn tensor_model_matrix_dimensions_and_constant_surface() {
        let data = toy_dataset(12, 15, 1);
        let quad = quadrature_weights(12, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let design = build_tensor_design(&data, 10, 10, &quad).unwrap();
        assert_eq!(design.model_matrix.ncols(), 100);
        // Constant coefficients: fitted linear predictor = c * |T|.
        let c = 2.5;
        let theta = DVector::from_element(100, c);
        let fitted = &design.model_matrix * theta;
        for i in 0..12 {
            assert_abs_diff_eq!(fitted[i], c * quad.domain_length(), epsilon = 1e-10);
        }
    }

    #[test]
    fn tensor_penalty_has_exactly_four_zero_eigenvalues() {
        let data = toy_dataset(10, 12, 2);
        let quad = quadrature_weights(10, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let design = build_tensor_design(&data, 6, 7, &quad).unwrap();
        let s = design.penalty(1.0, 1.0).unwrap();
        assert!((s.clone() - s.transpose()).amax() <= 1e-12 * s.amax());
        let eig = SymmetricEigen::new(s.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let zeros = eig
            .eigenvalues
            .iter()
            .filter(|&&e| e <= NULLSPACE_EIGEN_TOL * max)
            .count();
        assert_eq!(zeros, 4);
        let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min >= -1e-10 * max);
    }

    #[test]
    fn split_has_four_unpenalized_columns() {
        let data = toy_dataset(10, 12, 4);
        let quad = quadrature_weights(10, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let design = build_tensor_design(&data, 6, 6, &quad).unwrap();
        let split = design.split_penalty_nullspace(1.0, 1.0).unwrap();
        assert_eq!(split.xn.ncols(), 4);
        assert_eq!(split.zp.ncols(), 32);
        assert!(design.split_penalty_nullspace(0.0, 1.0).is_err());
    }

    #[test]
    fn capacity_guard_trips() {
        let data = toy_dataset(4, 8, 5);
        let quad = quadrature_weights(4, data.grid(), QuadratureRule::Trapezoid).unwrap();
        assert!(matches!(
            build_tensor_design(&data, 200, 200, &quad),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn psanova_dimensions_match_formulas() {
        let data = toy_dataset(15, 20, 6);
        let quad = quadrature_weights(15, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let d = build_psanova_design(&data, 10, 10, &quad).unwrap();
        assert_eq!((d.q1(), d.q2(), d.q3()), (8, 16, 64));
        assert_eq!(d.x.ncols(), 3);
        assert_eq!(d.x.nrows(), 15);
    }

    #[test]
    fn zero_predictor_kills_x_blocks() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let x = DMatrix::zeros(8, 10);
        let y = DVector::from_element(8, 1.0);
        let data = FunctionalDataset::new(y, x, grid).unwrap();
        let quad = quadrature_weights(8, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let d = build_psanova_design(&data, 6, 6, &quad).unwrap();
        // Z1 multiplies the t-smooth by x, so it vanishes identically.
        assert!(d.z1.amax() <= 1e-14);
        // Z2/Z3 rows are identical across curves: no between-curve variation,
        // so only the intercept carries information.
        for m in [&d.z2, &d.z3] {
            for c in 0..m.ncols() {
                let col = m.column(c);
                let mean = col.sum() / col.len() as f64;
                for r in 0..m.nrows() {
                    assert_abs_diff_eq!(col[r], mean, epsilon = 1e-12);
                }
            }
        }
        // The x-columns of the fixed part vanish too.
        for r in 0..8 {
            assert_abs_diff_eq!(d.x[(r, 1)], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(d.x[(r, 2)], 0.0, epsilon = 1e-14);
        }
    }

    /// Least-squares projection residual of each column of `cols` onto the
    /// span of `basis`.
    fn projection_residual(basis: &DMatrix<f64>, cols: &DMatrix<f64>) -> f64 {
        let svd = basis.clone().svd(true, true);
        let mut worst = 0.0f64;
        for c in 0..cols.ncols() {
            let col = cols.column(c).into_owned();
            let sol = svd.solve(&col, 1e-10).unwrap();
            let resid = (basis * sol - col).amax();
            worst = worst.max(resid);
        }
        worst
    }

    #[test]
    fn psanova_plus_dropped_block_spans_tensor_design() {
        let data = toy_dataset(30, 12, 7);
        let quad = quadrature_weights(30, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let ps = build_psanova_design(&data, 6, 6, &quad).unwrap();
        let tensor = build_tensor_design(&data, 6, 6, &quad).unwrap();

        // Reassemble [X : Z1 : Z2 : Z3 : L t : L Z_t].
        let vec_t = data.vec_times();
        let nj = vec_t.len();
        let mut t_col = DMatrix::zeros(nj, 1);
        for r in 0..nj {
            t_col[(r, 0)] = vec_t[r];
        }
        let lt = quad.apply(&t_col).unwrap();
        let lzt = quad.apply(ps.basis_t.zpart()).unwrap();
        let total_cols = 3 + ps.q1() + ps.q2() + ps.q3() + lt.ncols() + lzt.ncols();
        let mut full = DMatrix::zeros(30, total_cols);
        let mut at = 0;
        for block in [&ps.x, &ps.z1, &ps.z2, &ps.z3, &lt, &lzt] {
            full.view_mut((0, at), (30, block.ncols())).copy_from(block);
            at += block.ncols();
        }
        // Either span contains the other.
        assert!(projection_residual(&full, &tensor.model_matrix) <= 1e-8);
        assert!(projection_residual(&tensor.model_matrix, &full) <= 1e-8);
    }

    #[test]
    fn flm_design_nests_in_tensor_design() {
        let data = toy_dataset(25, 10, 8);
        let quad = quadrature_weights(25, data.grid(), QuadratureRule::Trapezoid).unwrap();
        let ps = build_psanova_design(&data, 6, 6, &quad).unwrap();
        let tensor = build_tensor_design(&data, 6, 6, &quad).unwrap();
        let mut flm = DMatrix::zeros(25, 3 + ps.q1());
        flm.view_mut((0, 0), (25, 3)).copy_from(&ps.x);
        flm.view_mut((0, 3), (25, ps.q1())).copy_from(&ps.z1);
        assert!(projection_residual(&tensor.model_matrix, &flm) <= 1e-8);
    }
}
