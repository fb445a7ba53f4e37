//! Restricted-likelihood-ratio tests for a single variance component.
//!
//! For the one-block model y = X beta + Z b + eps with b ~ N(0, s1^2 I), the
//! test of s1^2 = 0 has a non-standard null distribution with a point mass at
//! zero. Both the observed statistic and its exact null distribution reduce
//! to a one-dimensional profile over the variance ratio lambda = s1^2 / s^2
//! through the eigenvalues mu_k of Z' (I - X (X'X)^+ X') Z:
//!
//! the objective is (N - q0) log(1 + N(l)/D(l)) - sum_k log(1 + l mu_k) with
//! N(l) = sum_k [l mu_k / (1 + l mu_k)] w_k^2 and
//! D(l) = sum_k w_k^2 / (1 + l mu_k) + sum_{k > q1} w_k^2,
//! where the w_k are the data contrasts for the observed statistic and
//! i.i.d. standard normals for a null draw. The null distribution therefore
//! needs one eigendecomposition, then q1 chi-square(1) draws and one
//! chi-square(N - q0 - q1) draw per replicate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lmm::{MixedModelSpec, VarianceComponentFit};

/// Number of positive lambda-grid points for the profile supremum.
pub const LAMBDA_GRID_SIZE: usize = 200;

/// Simulated null distribution of the one-component RLRT statistic.
#[derive(Debug, Clone)]
pub struct RlrtNullSample {
    /// Simulated statistics, sorted ascending.
    stats: Vec<f64>,
    pub nsim: usize,
    pub seed: u64,
    /// Eigenvalues mu_k used by the spectral representation.
    pub mu: Vec<f64>,
    /// The lambda grid the supremum was taken over (including zero).
    pub lambda_grid: Vec<f64>,
    pub n: usize,
    pub q0: usize,
}

impl RlrtNullSample {
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    /// Fraction of draws exactly at the zero boundary.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.stats.partition_point(|&v| v <= 0.0);
        zeros as f64 / self.stats.len() as f64
    }

    /// Empirical quantile (nearest-rank on the sorted sample).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.stats.len();
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.stats[idx]
    }
}

/// Monte Carlo p-value (1 + #{null >= stat}) / (nsim + 1); ties count as
/// exceedances, so a zero statistic against a zero-inflated null gives 1.
pub fn pvalue_from_null(stat: f64, null: &RlrtNullSample) -> f64 {
    let below = null.stats.partition_point(|&v| v < stat);
    let exceed = null.stats.len() - below;
    (1.0 + exceed as f64) / (null.stats.len() as f64 + 1.0)
}

/// Precomputed spectral pieces of a one-component design (X, Z).
#[derive(Debug, Clone)]
pub struct SpectralDesign {
    n: usize,
    q0: usize,
    /// Positive eigenvalues of Z' (I - P_X) Z, descending.
    mu: Vec<f64>,
    /// Orthonormal basis of span(X) (N x rank).
    qx: DMatrix<f64>,
    /// N x q1 matrix of unit eigenvectors of (I - P_X) Z Z' (I - P_X).
    contrasts: DMatrix<f64>,
    lambda_grid: Vec<f64>,
    /// Per grid point g and eigenvalue k: mu-weights for N(l) and D(l) plus
    /// the log-determinant term, laid out flat for the simulation loop.
    numer_w: Vec<f64>,
    denom_w: Vec<f64>,
    logdet: Vec<f64>,
}

impl SpectralDesign {
    /// Builds the spectral machinery from the design matrices. Fails when Z
    /// lies in the span of X (no variance component to test).
    pub fn new(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if z.nrows() != n {
            return Err(Error::shape(format!(
                "X has {n} rows but Z has {}",
                z.nrows()
            )));
        }
        let q0 = x.ncols();
        if n <= q0 + 1 {
            return Err(Error::parameter(format!(
                "need N > q0 + 1 (N = {n}, q0 = {q0})"
            )));
        }
        // Orthonormal basis of span(X) via SVD.
        let svd = x.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax)
            .count();
        let u = svd.u.as_ref().expect("SVD with U requested");
        let qx = u.columns(0, rank).into_owned();

        // Projected block R = (I - P_X) Z and its small Gram matrix.
        let r = z - &qx * (qx.transpose() * z);
        let rtr = r.transpose() * &r;
        let eig = SymmetricEigen::new(rtr);
        let mut order: Vec<usize> = (0..z.ncols()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
        });
        let scale = z.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut mu = Vec::new();
        let mut vecs = Vec::new();
        for &i in &order {
            let ev = eig.eigenvalues[i];
            if ev > 1e-12 * scale {
                mu.push(ev);
                vecs.push(i);
            }
        }
        if mu.is_empty() {
            return Err(Error::DegenerateDesign(
                "random-effect block lies in the span of the fixed effects".into(),
            ));
        }
        // Contrast directions u_k = R v_k / sqrt(mu_k).
        let mut contrasts = DMatrix::zeros(n, mu.len());
        for (c, &i) in vecs.iter().enumerate() {
            let dir = &r * eig.eigenvectors.column(i) / mu[c].sqrt();
            contrasts.column_mut(c).copy_from(&dir);
        }

        let lambda_grid = lambda_grid(mu[0]);
        let q1 = mu.len();
        let g = lambda_grid.len();
        let mut numer_w = vec![0.0; g * q1];
        let mut denom_w = vec![0.0; g * q1];
        let mut logdet = vec![0.0; g];
        for (gi, &l) in lambda_grid.iter().enumerate() {
            let mut ld = 0.0;
            for (k, &m) in mu.iter().enumerate() {
                let lm = l * m;
                numer_w[gi * q1 + k] = lm / (1.0 + lm);
                denom_w[gi * q1 + k] = 1.0 / (1.0 + lm);
                ld += (1.0 + lm).ln();
            }
            logdet[gi] = ld;
        }
        Ok(Self {
            n,
            q0,
            mu,
            qx,
            contrasts,
            lambda_grid,
            numer_w,
            denom_w,
            logdet,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn q1(&self) -> usize {
        self.mu.len()
    }

    pub fn q0(&self) -> usize {
        self.q0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Degrees of freedom of the residual chi-square in a null draw.
    pub fn tail_dof(&self) -> usize {
        (self.n - self.q0).saturating_sub(self.q1())
    }

    /// Decomposition of the projected response used by the profile: squared
    /// contrasts along the eigen-directions, the residual mass, and the
    /// total (I - P_X)-projected sum of squares.
    pub fn quadform_parts(&self, y: &DVector<f64>) -> (Vec<f64>, f64, f64) {
        let r = y - &self.qx * (self.qx.transpose() * y);
        let rtr = r.norm_squared();
        let s = self.contrasts.transpose() * &r;
        let w2: Vec<f64> = s.iter().map(|v| v * v).collect();
        let tail = (rtr - w2.iter().sum::<f64>()).max(0.0);
        (w2, tail, rtr)
    }

    /// Profile objective at ratio `l` for squared contrasts `w2` and
    /// residual mass `tail`.
    fn objective(&self, l: f64, w2: &[f64], tail: f64) -> f64 {
        let mut numer = 0.0;
        let mut denom = tail;
        let mut ld = 0.0;
        for (&m, &w) in self.mu.iter().zip(w2) {
            let lm = l * m;
            numer += lm / (1.0 + lm) * w;
            denom += w / (1.0 + lm) ;
            ld += (1.0 + lm).ln();
        }
        if denom <= 0.0 {
            return 0.0;
        }
        (self.n - self.q0) as f64 * (1.0 + numer / denom).ln() - ld
    }

    /// Supremum over the precomputed grid only (no refinement), as used for
    /// null draws.
    fn grid_supremum(&self, w2: &[f64], tail: f64) -> f64 {
        let q1 = self.q1();
        let mut best = 0.0f64; // lambda = 0 gives exactly zero
        let df = (self.n - self.q0) as f64;
        for gi in 1..self.lambda_grid.len() {
            let nw = &self.numer_w[gi * q1..(gi + 1) * q1];
            let dw = &self.denom_w[gi * q1..(gi + 1) * q1];
            let mut numer = 0.0;
            let mut denom = tail;
            for k in 0..q1 {
                numer += nw[k] * w2[k];
                denom += dw[k] * w2[k];
            }
            if denom <= 0.0 {
                continue;
            }
            let obj = df * (1.0 + numer / denom).ln() - self.logdet[gi];
            if obj > best {
                best = obj;
            }
        }
        best
    }

    /// Observed RLRT statistic for a response vector: twice the gap between
    /// the REML criterion profiled over the ratio and its value at zero.
    pub fn observed_statistic(&self, y: &DVector<f64>) -> Result<f64> {
        if y.len() != self.n {
            return Err(Error::shape(format!(
                "response length {} != N = {}",
                y.len(),
                self.n
            )));
        }
        let r = y - &self.qx * (self.qx.transpose() * y);
        let rtr = r.norm_squared();
        if rtr <= f64::MIN_POSITIVE {
            return Ok(0.0); // response in span(X): boundary estimate
        }
        let s = self.contrasts.transpose() * &r;
        let w2: Vec<f64> = s.iter().map(|v| v * v).collect();
        let tail = (rtr - w2.iter().sum::<f64>()).max(0.0);

        // Grid pass first. A nonpositive supremum over the grid is the
        // boundary case (the profiled estimate of the ratio is zero) and the
        // statistic is exactly zero, matching the zero mass of the simulated
        // null. Only a positive grid maximum is refined.
        let mut best_gi = 0;
        let mut best = 0.0f64;
        for (gi, &l) in self.lambda_grid.iter().enumerate().skip(1) {
            let obj = self.objective(l, &w2, tail);
            if obj > best {
                best = obj;
                best_gi = gi;
            }
        }
        if best <= 0.0 {
            return Ok(0.0);
        }
        let lo = self.lambda_grid[best_gi - 1];
        let hi = if best_gi + 1 < self.lambda_grid.len() {
            self.lambda_grid[best_gi + 1]
        } else {
            self.lambda_grid[best_gi] * 10.0
        };
        let refined = golden_max(|l| self.objective(l, &w2, tail), lo, hi, 120);
        Ok(refined.max(best))
    }

    /// Draws `nsim` statistics from the exact null distribution. Draw i uses
    /// an RNG stream derived from (seed, i), so the sample is reproducible
    /// and independent of how the work is scheduled across threads.
    pub fn simulate_null(&self, nsim: usize, seed: u64) -> Result<RlrtNullSample> {
        if nsim == 0 {
            return Err(Error::parameter("nsim must be at least 1"));
        }
        let q1 = self.q1();
        let tail_dof = self.tail_dof();
        let chi_tail = if tail_dof > 0 {
            Some(ChiSquared::new(tail_dof as f64).map_err(|e| Error::numerical(e.to_string()))?)
        } else {
            None
        };
        let mut stats: Vec<f64> = (0..nsim)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                let mut w2 = vec![0.0; q1];
                for w in w2.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = z * z;
                }
                let tail = chi_tail.as_ref().map_or(0.0, |c| c.sample(&mut rng));
                self.grid_supremum(&w2, tail)
            })
            .collect();
        stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(RlrtNullSample {
            stats,
            nsim,
            seed,
            mu: self.mu.clone(),
            lambda_grid: self.lambda_grid.clone(),
            n: self.n,
            q0: self.q0,
        })
    }
}

/// Scale-free profile grid: zero plus 200 log-uniform ratios spanning
/// [1e-5, 1e10] relative to the largest eigenvalue.
fn lambda_grid(mu_max: f64) -> Vec<f64> {
    let mut grid = Vec::with_capacity(LAMBDA_GRID_SIZE + 1);
    grid.push(0.0);
    for i in 0..LAMBDA_GRID_SIZE {
        let exponent = -5.0 + 15.0 * i as f64 / (LAMBDA_GRID_SIZE - 1) as f64;
        grid.push(10f64.powf(exponent) / mu_max);
    }
    grid
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// RLRT statistic for testing the single variance component of (y, X, Z):
/// 2 sup ell_R under the alternative minus 2 sup ell_R at the boundary.
/// Exactly zero whenever the REML estimate of the component is zero.
pub fn rlrt_statistic(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    SpectralDesign::new(x, z)?.observed_statistic(y)
}

/// Simulates the exact null distribution of the one-component RLRT for the
/// design (X, Z).
pub fn simulate_rlrt_null(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    nsim: usize,
    seed: u64,
) -> Result<RlrtNullSample> {
    SpectralDesign::new(x, z)?.simulate_null(nsim, seed)
}

/// Two-sample Kolmogorov-Smirnov distance between sorted samples. Ties are
/// handled by advancing both empirical CDFs past each distinct value before
/// comparing, which matters here because both samples carry a point mass at
/// zero.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        let diff = (i as f64 / na - j as f64 / nb).abs();
        if diff > d {
            d = diff;
        }
    }
    d
}

/// Response with the predicted contribution of one nuisance block removed:
/// y - Z_j b_j at the fit's BLUP. The result feeds the one-component RLRT
/// machinery as if the nuisance effects were known.
pub fn pseudo_response(
    fit: &VarianceComponentFit,
    spec: &MixedModelSpec,
    nuisance_block: usize,
) -> Result<DVector<f64>> {
    if nuisance_block >= spec.num_blocks() {
        return Err(Error::parameter(format!(
            "nuisance block {nuisance_block} out of range ({} blocks)",
            spec.num_blocks()
        )));
    }
    let blup = fit
        .blups
        .get(nuisance_block)
        .ok_or_else(|| Error::shape("fit carries no BLUP for the nuisance block"))?;
    Ok(spec.y() - &spec.blocks()[nuisance_block] * blup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmm::{fit_mixed_model, FitMethod};
    use approx::assert_abs_diff_eq;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(n: usize, p: usize, q: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for r in 0..n {
            x[(r, 0)] = 1.0;
        }
        let z = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        (x, z)
    }

    #[test]
    fn response_in_fixed_span_gives_zero_statistic() {
        let (x, z) = random_design(30, 3, 5, 1);
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &x * beta;
        assert_eq!(rlrt_statistic(&y, &x, &z).unwrap(), 0.0);
    }

    #[test]
    fn statistic_matches_two_fit_reml_difference() {
        let (x, z) = random_design(40, 3, 6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for rep in 0..4 {
            let b = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal))
                * (0.6 * rep as f64);
            let y = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal)) + &z * b;
            let stat = rlrt_statistic(&y, &x, &z).unwrap();

            let spec1 =
                MixedModelSpec::new(y.clone(), x.clone(), vec![z.clone()]).unwrap();
            let spec0 = MixedModelSpec::new(y.clone(), x.clone(), vec![]).unwrap();
            let f1 = fit_mixed_model(&spec1, FitMethod::Reml).unwrap();
            let f0 = fit_mixed_model(&spec0, FitMethod::Reml).unwrap();
            let by_fits = (2.0 * (f1.criterion - f0.criterion)).max(0.0);
            assert!(
                (stat - by_fits).abs() <= 1e-6 * (1.0 + stat.abs()),
                "rep {rep}: profile {stat} vs fits {by_fits}"
            );
        }
    }

    #[test]
    fn statistic_invariant_under_orthonormal_rebasis_of_z() {
        let (x, z) = random_design(35, 2, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DVector::from_fn(35, |_, _| rng.sample::<f64, _>(StandardNormal));
        // Random orthogonal 5x5 from QR.
        let m = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = m.qr();
        let o = qr.q();
        let z2 = &z * o;
        let s1 = rlrt_statistic(&y, &x, &z).unwrap();
        let s2 = rlrt_statistic(&y, &x, &z2).unwrap();
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-8 * (1.0 + s1.abs()));
    }

    #[test]
    fn null_simulation_is_deterministic_and_thread_independent() {
        let (x, z) = random_design(30, 2, 4, 6);
        let a = simulate_rlrt_null(&x, &z, 200, 9).unwrap();
        let b = simulate_rlrt_null(&x, &z, 200, 9).unwrap();
        assert_eq!(a.stats(), b.stats());
        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let c = pool.install(|| simulate_rlrt_null(&x, &z, 200, 9).unwrap());
            assert_eq!(a.stats(), c.stats());
        }
        let d = simulate_rlrt_null(&x, &z, 200, 10).unwrap();
        assert_ne!(a.stats(), d.stats());
    }

    #[test]
    fn null_sample_is_nonnegative_with_a_zero_mass() {
        let (x, z) = random_design(40, 3, 6, 7);
        let null = simulate_rlrt_null(&x, &z, 1000, 11).unwrap();
        assert!(null.stats().iter().all(|&s| s >= 0.0));
        let zf = null.zero_fraction();
        assert!((0.2..0.95).contains(&zf), "zero fraction {zf}");
        assert!(null.quantile(0.90) <= null.quantile(0.95));
        assert!(null.quantile(0.95) <= null.quantile(0.99));
    }

    #[test]
    fn degenerate_design_is_rejected() {
        let (x, _) = random_design(20, 3, 2, 8);
        let z = &x * DMatrix::from_fn(3, 2, |r, c| (r + c) as f64); // Z in span(X)
        match simulate_rlrt_null(&x, &z, 10, 1) {
            Err(Error::DegenerateDesign(_)) => {}
            other => panic!("expected degenerate design error, got {other:?}"),
        }
    }

    #[test]
    fn pvalues_follow_the_counting_rule() {
        let (x, z) = random_design(30, 2, 4, 9);
        let null = simulate_rlrt_null(&x, &z, 500, 13).unwrap();
        // Zero statistic against a zero-inflated null: every draw ties or
        // exceeds, so p = 1.
        assert_eq!(pvalue_from_null(0.0, &null), 1.0);
        let max = null.stats().last().copied().unwrap();
        assert_abs_diff_eq!(
            pvalue_from_null(max + 1.0, &null),
            1.0 / 501.0,
            epsilon = 1e-12
        );
        let med = null.quantile(0.5);
        let p_med = pvalue_from_null(med, &null);
        assert!((p_med - 0.5).abs() <= 0.51 + 1.0 / 500.0);
        // Monotone nonincreasing in the statistic.
        let mut last = f64::INFINITY;
        for s in [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let p = pvalue_from_null(s, &null);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn pseudo_response_subtracts_the_predicted_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (x, z1) = random_design(50, 3, 5, 15);
        let z2 = DMatrix::from_fn(50, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b1 = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal)) * 1.5;
        let y = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal)) + &z1 * b1;
        let spec = MixedModelSpec::new(y.clone(), x, vec![z1.clone(), z2]).unwrap();
        let fit = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        let pseudo = pseudo_response(&fit, &spec, 0).unwrap();
        let expected = &y - z1 * &fit.blups[0];
        assert!((pseudo.clone() - expected).amax() <= 1e-12);
        // Refit on identical data reproduces it bit-for-bit.
        let fit2 = fit_mixed_model(&spec, FitMethod::Reml).unwrap();
        let pseudo2 = pseudo_response(&fit2, &spec, 0).unwrap();
        assert_eq!(pseudo.as_slice(), pseudo2.as_slice());
        // Zero nuisance variance means the pseudo-response is y itself.
        let mut zero_fit = fit.clone();
        zero_fit.blups[0] = DVector::zeros(5);
        let unchanged = pseudo_response(&zero_fit, &spec, 0).unwrap();
        assert_eq!(unchanged.as_slice(), y.as_slice());
        assert!(pseudo_response(&fit, &spec, 5).is_err());
    }

    /// Quick spectral-vs-bootstrap sanity at reduced size; the full
    /// two-design validation at nsim = 2000 lives in the acceptance suite.
    #[test]
    fn spectral_null_tracks_parametric_bootstrap() {
        let (x, z) = random_design(30, 2, 4, 16);
        let design = SpectralDesign::new(&x, &z).unwrap();
        let spectral = design.simulate_null(600, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut boot: Vec<f64> = (0..600)
            .map(|_| {
                let y = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
                design.observed_statistic(&y).unwrap()
            })
            .collect();
        boot.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = two_sample_ks(spectral.stats(), &boot);
        assert!(ks <= 0.1, "KS distance {ks}");
    }

    use super::two_sample_ks;
}
