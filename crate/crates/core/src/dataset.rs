//! Container for a densely observed functional regression data set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A scalar response paired with one functional predictor per observation.
///
/// The predictor is stored curve-per-row: `predictors[(i, j)]` is the value of
/// the i-th curve at the j-th observation time. Every curve shares the same
/// strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    response: DVector<f64>,
    predictors: DMatrix<f64>,
    grid: Vec<f64>,
}

impl FunctionalDataset {
    pub fn new(response: DVector<f64>, predictors: DMatrix<f64>, grid: Vec<f64>) -> Result<Self> {
        let n = response.len();
        let j = grid.len();
        if predictors.nrows() != n {
            return Err(Error::shape(format!(
                "response has {n} entries but predictor matrix has {} rows",
                predictors.nrows()
            )));
        }
        if predictors.ncols() != j {
            return Err(Error::shape(format!(
                "grid has {j} points but predictor matrix has {} columns",
                predictors.ncols()
            )));
        }
        if j < 2 {
            return Err(Error::parameter("grid needs at least two points"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::parameter("grid must be strictly increasing"));
        }
        if response.iter().any(|v| !v.is_finite())
            || predictors.iter().any(|v| !v.is_finite())
            || grid.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Data("non-finite value in data set".into()));
        }
        Ok(Self {
            response,
            predictors,
            grid,
        })
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.response.len()
    }

    /// Number of observation times per curve.
    pub fn j(&self) -> usize {
        self.grid.len()
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn predictors(&self) -> &DMatrix<f64> {
        &self.predictors
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Curve-major flattening of the predictor matrix: entry `i * J + j`
    /// holds curve i at time j. This matches the quadrature convention where
    /// each curve occupies a contiguous block of rows.
    pub fn vec_predictors(&self) -> DVector<f64> {
        let (n, j) = (self.n(), self.j());
        DVector::from_fn(n * j, |k, _| self.predictors[(k / j, k % j)])
    }

    /// Curve-major flattening of the observation times (the grid repeated
    /// once per curve).
    pub fn vec_times(&self) -> DVector<f64> {
        let (n, j) = (self.n(), self.j());
        DVector::from_fn(n * j, |k, _| self.grid[k % j])
    }

    /// Observed range of the predictor values over all curves and times.
    pub fn predictor_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.predictors.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Restrict the data set to a subset of curve indices (used by train/test
    /// splits). Indices must be in range; duplicates are allowed.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.n() {
                return Err(Error::parameter(format!(
                    "curve index {i} out of range (N = {})",
                    self.n()
                )));
            }
        }
        let response = DVector::from_fn(indices.len(), |r, _| self.response[indices[r]]);
        let predictors = DMatrix::from_fn(indices.len(), self.j(), |r, c| {
            self.predictors[(indices[r], c)]
        });
        FunctionalDataset::new(response, predictors, self.grid.clone())
    }
}
