//! The Q-matrix class: symmetric psd `N x N` matrices with zero row sums and
//! diagonal `1/N^2`, each of which yields a decomposition
//! `var = V_Q - tau' Q tau` and an estimator of `V_Q`.

mod conditions;
mod minimax;
mod random;
mod scenarios;
mod variance;

use crate::error::{Error, Result};
use crate::linalg::{lambda_max, numerical_rank, symmetric_eigen, JacobiOptions, Matrix};
use crate::population::Grouping;
use crate::scalar::Scalar;

pub use conditions::{ga_condition, sap_sufficient, sap_violation, GaReport, SapWitness, DEFAULT_GA_TOL};
pub use minimax::{minimax_q, MinimaxChoice};
pub use random::{kron_distance, random_kron_q, random_q};
pub use scenarios::{bias_table_row, scenario_tables, Scenario, Table1Row};
pub use variance::{bias, c_q, c_q_hat, cross_bias, v_q, v_q_hat, variance_report, VarianceReport};

/// Tolerances used by [`QMatrix::validate`].
pub const ROW_SUM_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix<T> {
    m: Matrix<T>,
}

fn inv_n2<T: Scalar>(n: usize) -> T {
    T::one() / T::from_usize(n * n)
}

impl<T: Scalar> QMatrix<T> {
    /// Wraps a square symmetric matrix. Membership in the class is checked
    /// separately by [`QMatrix::validate`].
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() || m.rows() < 2 {
            return Err(Error::InvalidQ(format!("expected a square matrix of size >= 2, got {}x{}", m.rows(), m.cols())));
        }
        let scale = m.as_slice().iter().fold(T::zero(), |a, &x| a.max_val(x.abs_val()));
        if m.max_asymmetry() > T::tol(1e-12) * scale {
            return Err(Error::InvalidQ("matrix is not symmetric".into()));
        }
        Ok(Self { m })
    }

    /// `(N(N-1))^{-1} (I - J/N)`.
    pub fn strict(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidQ("N must be at least 2".into()));
        }
        let d = inv_n2::<T>(n);
        let off = -d / T::from_usize(n - 1);
        Ok(Self {
            m: Matrix::from_fn(n, n, |i, j| if i == j { d } else { off }),
        })
    }

    /// Block-diagonal matrix with one strict block per contiguous stratum.
    pub fn strat(sizes: &[usize]) -> Result<Self> {
        Self::strat_grouped(&Grouping::contiguous(sizes))
    }

    /// Within-stratum off-diagonal entries `-1/(N^2 (N_h - 1))`, zero across strata.
    pub fn strat_grouped(strata: &Grouping) -> Result<Self> {
        let sizes = strata.sizes();
        if let Some(h) = sizes.iter().position(|&s| s < 2) {
            return Err(Error::InvalidQ(format!("stratum `{}` has fewer than 2 units", strata.labels[h])));
        }
        let n = strata.of_unit.len();
        let d = inv_n2::<T>(n);
        let off: Vec<T> = sizes.iter().map(|&s| -d / T::from_usize(s - 1)).collect();
        Ok(Self {
            m: Matrix::from_fn(n, n, |i, j| {
                let (h, hs) = (strata.of_unit[i], strata.of_unit[j]);
                if i == j {
                    d
                } else if h == hs {
                    off[h]
                } else {
                    T::zero()
                }
            }),
        })
    }

    /// Whole-plots `{1..N0}, {N0+1..2N0}, ...`.
    pub fn wholeplot(n_plots: usize, plot_size: usize) -> Result<Self> {
        Self::wholeplot_grouped(&Grouping::contiguous(&vec![plot_size; n_plots]))
    }

    /// Entries `1/N^2` within a whole-plot and `-1/(N^2 (H - 1))` across.
    pub fn wholeplot_grouped(plots: &Grouping) -> Result<Self> {
        let sizes = plots.sizes();
        let h = sizes.len();
        if h < 2 {
            return Err(Error::InvalidQ("need at least 2 whole-plots".into()));
        }
        if sizes.iter().any(|&s| s != sizes[0] || s == 0) {
            return Err(Error::InvalidQ("whole-plots must have equal, positive size".into()));
        }
        let n = plots.of_unit.len();
        let d = inv_n2::<T>(n);
        let off = -d / T::from_usize(h - 1);
        Ok(Self {
            m: Matrix::from_fn(n, n, |i, j| {
                if plots.of_unit[i] == plots.of_unit[j] {
                    d
                } else {
                    off
                }
            }),
        })
    }

    /// Two halves `{1..N0}` and `{N0+1..2N0}`.
    pub fn half(n: usize) -> Result<Self> {
        if n % 2 != 0 || n < 2 {
            return Err(Error::InvalidQ(format!("Q_half needs an even N, got {n}")));
        }
        Self::wholeplot(2, n / 2)
    }

    pub fn n(&self) -> usize {
        self.m.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn to_f64(&self) -> QMatrix<f64> {
        QMatrix { m: self.m.map(Scalar::to_f64) }
    }

    /// Scales every entry; the result leaves the class unless `alpha == 1`.
    pub fn scaled(&self, alpha: T) -> Self {
        Self { m: self.m.scale(alpha) }
    }

    /// Membership report for the class.
    pub fn validate(&self) -> QValidation {
        let n = self.n();
        let f = self.m.map(Scalar::to_f64);
        let d = 1.0 / (n * n) as f64;
        let max_row_sum = (0..n)
            .map(|i| f.row(i).iter().sum::<f64>().abs())
            .fold(0.0, f64::max);
        let max_diagonal_deviation = (0..n).map(|i| (f[(i, i)] - d).abs()).fold(0.0, f64::max);
        let eig = symmetric_eigen(&f, JacobiOptions::default());
        let min_eigenvalue = eig.values.first().copied().unwrap_or(0.0);
        QValidation {
            max_row_sum,
            max_diagonal_deviation,
            min_eigenvalue,
            asymmetry: f.max_asymmetry(),
            row_sums_ok: max_row_sum <= ROW_SUM_TOL,
            diagonal_ok: max_diagonal_deviation <= 1e-9 * d,
            psd_ok: min_eigenvalue >= -PSD_TOL && eig.converged,
        }
    }

    /// Largest eigenvalue, the worst-case bias over unit-norm `tau`.
    pub fn lambda_max(&self) -> f64 {
        lambda_max(&self.m.map(Scalar::to_f64))
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.m.map(Scalar::to_f64), 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValidation {
    pub max_row_sum: f64,
    pub max_diagonal_deviation: f64,
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
    pub row_sums_ok: bool,
    pub diagonal_ok: bool,
    pub psd_ok: bool,
}

impl QValidation {
    pub fn ok(&self) -> bool {
        self.row_sums_ok && self.diagonal_ok && self.psd_ok && self.asymmetry == 0.0
    }
}
