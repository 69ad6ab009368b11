//! The generalized additivity (GA) and second-order assignment probability
//! (SAP) conditions.

use std::fmt;

use super::QMatrix;
use crate::assignment::ProbabilityTables;
use crate::population::PotentialOutcomes;
use crate::scalar::Scalar;

pub const DEFAULT_GA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaReport {
    /// `max_{z,z*} || Q (Y(z) - Y(z*)) ||_inf`.
    pub max_residual: f64,
    /// Treatment pair attaining the maximum.
    pub worst_pair: (usize, usize),
    pub ok: bool,
}

/// Checks `Q (Y(z) - Y(z*)) = 0` for every pair of treatments.
pub fn ga_condition<T: Scalar>(q: &QMatrix<T>, table: &PotentialOutcomes<T>, tol: f64) -> GaReport {
    let k = table.n_treatments();
    let qy: Vec<Vec<T>> = (0..k).map(|z| q.matrix().matvec(&table.column(z))).collect();
    let mut max_residual = 0.0;
    let mut worst_pair = (0, 1.min(k - 1));
    for z in 0..k {
        for zs in z + 1..k {
            let r = qy[z]
                .iter()
                .zip(&qy[zs])
                .map(|(&a, &b)| (a - b).abs_val().to_f64())
                .fold(0.0, f64::max);
            if r > max_residual {
                max_residual = r;
                worst_pair = (z, zs);
            }
        }
    }
    GaReport {
        max_residual,
        worst_pair,
        ok: max_residual <= tol,
    }
}

/// A pair of units and treatments with zero joint assignment probability
/// whose coefficient in the Q-adjusted variance would need that probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SapWitness {
    pub unit: usize,
    pub other_unit: usize,
    pub treatment: usize,
    pub other_treatment: usize,
    /// `g1(z) g2(z*) (q_{ii*} - 1/N^2)`.
    pub coefficient: f64,
}

impl fmt::Display for SapWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "units {} and {} can never receive treatments #{} and #{} together, \
             but the coefficient g(z)g(z*)(q - 1/N^2) for that pair is {:e}",
            self.unit + 1,
            self.other_unit + 1,
            self.treatment,
            self.other_treatment,
            self.coefficient
        )
    }
}

/// First violation of `pi_{ii*}(z,z*) = 0 => g1(z) g2(z*) (q_{ii*} - 1/N^2) = 0`.
pub fn sap_violation<T: Scalar>(q: &QMatrix<T>, probs: &ProbabilityTables<T>, g1: &[T], g2: &[T]) -> Option<SapWitness> {
    let n = q.n();
    let k = probs.n_treatments();
    let d = T::one() / T::from_usize(n * n);
    let gmax = g1.iter().chain(g2).fold(T::zero(), |a, &x| a.max_val(x.abs_val()));
    let tol = T::tol(1e-12) * gmax * gmax * d;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let shift = q.get(i, j) - d;
            for z in 0..k {
                for zs in 0..k {
                    if probs.pi2(i, j, z, zs) != T::zero() {
                        continue;
                    }
                    let c = g1[z] * g2[zs] * shift;
                    if c.abs_val() > tol {
                        return Some(SapWitness {
                            unit: i,
                            other_unit: j,
                            treatment: z,
                            other_treatment: zs,
                            coefficient: c.to_f64(),
                        });
                    }
                }
            }
        }
    }
    None
}

/// Contrast-free sufficient condition: whenever some `pi_{ii*}(z,z*)` is zero,
/// `q_{ii*} = 1/N^2`.
pub fn sap_sufficient<T: Scalar>(q: &QMatrix<T>, probs: &ProbabilityTables<T>) -> bool {
    let n = q.n();
    let k = probs.n_treatments();
    let d = T::one() / T::from_usize(n * n);
    let tol = T::tol(1e-10) * d;
    (0..n).all(|i| {
        (0..n).filter(|&j| j != i).all(|j| {
            let any_zero = (0..k).any(|z| (0..k).any(|zs| probs.pi2(i, j, z, zs) == T::zero()));
            !any_zero || (q.get(i, j) - d).abs_val() <= tol
        })
    })
}
