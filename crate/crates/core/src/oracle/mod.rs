//! Brute-force expectations over the full support of a mechanism, with exact
//! rational weights. Everything closed-form elsewhere in the crate is checked
//! against these.

mod battery;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::assignment::{enumerate_support, Mechanism, Partition, Support, DEFAULT_SUPPORT_CAP};
use crate::error::Result;
use crate::estimation::{Design, MaskedView};
use crate::population::{unit_contrasts_aligned, PotentialOutcomes};
use crate::qframework::{bias, c_q, c_q_hat, cross_bias, v_q, v_q_hat, QMatrix};
use crate::scalar::Scalar;

pub use battery::{grid_cases, reweighted_lue, run_battery, run_case, run_cases, ORACLE_TOL, BatteryReport, Case, CaseReport, CheckResult, BATTERIES};

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoment<T> {
    pub value: T,
    /// `sum_T p(T) |statistic(T)|`, the natural scale for rounding error.
    pub magnitude: T,
    pub support_size: usize,
    /// Sum of the weights; exactly one for a valid support.
    pub weight_check: BigRational,
}

/// `sum_T p(T) statistic(T)` over an already enumerated support. Statistics
/// are evaluated in parallel; the weighted sum runs in support order.
pub fn expectation_over<T: Scalar>(
    support: &Support,
    statistic: impl Fn(&Partition) -> Result<T> + Sync,
) -> Result<ExactMoment<T>> {
    let values: Vec<T> = support
        .entries()
        .par_iter()
        .map(|e| statistic(&e.partition))
        .collect::<Result<_>>()?;
    let mut value = T::zero();
    let mut magnitude = T::zero();
    let mut weight_check = BigRational::zero();
    for (e, v) in support.entries().iter().zip(values) {
        let p = T::from_ratio(&e.probability);
        value += p * v;
        magnitude += p * v.abs_val();
        weight_check += &e.probability;
    }
    Ok(ExactMoment {
        value,
        magnitude,
        support_size: support.len(),
        weight_check,
    })
}

pub fn expectation<T: Scalar>(
    mech: &Mechanism,
    statistic: impl Fn(&Partition) -> Result<T> + Sync,
) -> Result<ExactMoment<T>> {
    let support = enumerate_support(mech, DEFAULT_SUPPORT_CAP)?;
    expectation_over(&support, statistic)
}

/// A computed value against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub reference: f64,
    pub abs: f64,
    /// `abs / scale`, with the scale chosen per identity.
    pub rel: f64,
}

impl Residual {
    pub fn new(value: f64, reference: f64, scale: f64) -> Self {
        let abs = (value - reference).abs();
        let scale = scale.abs();
        let rel = if abs == 0.0 { 0.0 } else { abs / scale.max(f64::MIN_POSITIVE) };
        Self {
            value,
            reference,
            abs,
            rel,
        }
    }

    pub fn within(&self, rel_tol: f64) -> bool {
        self.rel <= rel_tol
    }
}

/// Enumeration-based checks for one design and science table.
pub struct Oracle<'a, T> {
    pub design: &'a Design<T>,
    pub table: &'a PotentialOutcomes<T>,
    support: Support,
}

fn ensure_one(w: &BigRational) {
    assert!(w.is_one(), "support weights sum to {w}, not 1");
}

impl<'a, T: Scalar> Oracle<'a, T> {
    pub fn new(design: &'a Design<T>, table: &'a PotentialOutcomes<T>) -> Result<Self> {
        crate::estimation::check_shape(design, table)?;
        let support = enumerate_support(design.mechanism(), DEFAULT_SUPPORT_CAP)?;
        Ok(Self { design, table, support })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    fn tau_hat(&self, p: &Partition, g: &[T]) -> Result<T> {
        self.design.contrast_estimate(&MaskedView::new(self.table, p), p, g)
    }

    fn moment(&self, f: impl Fn(&Partition) -> Result<T> + Sync) -> Result<ExactMoment<T>> {
        let m = expectation_over(&self.support, f)?;
        ensure_one(&m.weight_check);
        Ok(m)
    }

    /// `E[tau_hat]` against `tau_bar`.
    pub fn verify_unbiasedness(&self, g: &[T]) -> Result<Residual> {
        let e = self.moment(|p| self.tau_hat(p, g))?;
        let tau = unit_contrasts_aligned(self.table, g);
        let tau_bar = tau.iter().copied().sum::<T>() / T::from_usize(tau.len());
        Ok(Residual::new(e.value.to_f64(), tau_bar.to_f64(), e.magnitude.to_f64()))
    }

    /// Theorem-1 variance against `E[tau_hat^2] - E[tau_hat]^2`.
    pub fn verify_variance(&self, g: &[T]) -> Result<Residual> {
        let e1 = self.moment(|p| self.tau_hat(p, g))?;
        let e2 = self.moment(|p| self.tau_hat(p, g).map(|t| t * t))?;
        let enumerated = e2.value - e1.value * e1.value;
        let formula = self.design.sampling_variance(self.table, g);
        Ok(Residual::new(formula.to_f64(), enumerated.to_f64(), e2.value.to_f64()))
    }

    /// Theorem-3 covariance against `E[tau_hat_1 tau_hat_2] - E[tau_hat_1] E[tau_hat_2]`.
    pub fn verify_covariance(&self, g1: &[T], g2: &[T]) -> Result<Residual> {
        let e1 = self.moment(|p| self.tau_hat(p, g1))?;
        let e2 = self.moment(|p| self.tau_hat(p, g2))?;
        let e12 = self.moment(|p| Ok(self.tau_hat(p, g1)? * self.tau_hat(p, g2)?))?;
        let enumerated = e12.value - e1.value * e2.value;
        let formula = self.design.sampling_covariance(self.table, g1, g2);
        Ok(Residual::new(formula.to_f64(), enumerated.to_f64(), e12.magnitude.to_f64()))
    }

    /// `var = V_Q - tau' Q tau`, with the variance taken from enumeration.
    pub fn verify_decomposition(&self, g: &[T], q: &QMatrix<T>) -> Result<Residual> {
        let e1 = self.moment(|p| self.tau_hat(p, g))?;
        let e2 = self.moment(|p| self.tau_hat(p, g).map(|t| t * t))?;
        let enumerated = e2.value - e1.value * e1.value;
        let tau = unit_contrasts_aligned(self.table, g);
        let vq = v_q(self.design, self.table, g, q)?;
        let b = bias(q, &tau)?;
        Ok(Residual::new((vq - b).to_f64(), enumerated.to_f64(), e2.value.to_f64()))
    }

    /// `(E[V_Q hat] vs V_Q, E[V_Q hat] vs var)`. Fails when SAP does not hold.
    pub fn verify_vq_estimator(&self, g: &[T], q: &QMatrix<T>) -> Result<(Residual, Residual)> {
        let e = self.moment(|p| v_q_hat(self.design, &MaskedView::new(self.table, p), p, g, q))?;
        let vq = v_q(self.design, self.table, g, q)?;
        let var = self.design.sampling_variance(self.table, g);
        let scale = e.magnitude.to_f64();
        Ok((
            Residual::new(e.value.to_f64(), vq.to_f64(), scale),
            Residual::new(e.value.to_f64(), var.to_f64(), scale),
        ))
    }

    /// `(E[C_Q hat] vs C_Q, E[C_Q hat] vs cov, C_Q - tau_1' Q tau_2 vs cov)`.
    pub fn verify_cq_estimator(&self, g1: &[T], g2: &[T], q: &QMatrix<T>) -> Result<(Residual, Residual, Residual)> {
        let e = self.moment(|p| c_q_hat(self.design, &MaskedView::new(self.table, p), p, g1, g2, q))?;
        let cq = c_q(self.design, self.table, g1, g2, q)?;
        let cov = self.design.sampling_covariance(self.table, g1, g2);
        let t1 = unit_contrasts_aligned(self.table, g1);
        let t2 = unit_contrasts_aligned(self.table, g2);
        let cb = cross_bias(q, &t1, &t2)?;
        let scale = e.magnitude.to_f64().max(cq.abs_val().to_f64());
        Ok((
            Residual::new(e.value.to_f64(), cq.to_f64(), scale),
            Residual::new(e.value.to_f64(), cov.to_f64(), scale),
            Residual::new((cq - cb).to_f64(), cov.to_f64(), scale),
        ))
    }

    /// `E[W_i(z)]` against the closed-form first-order probability.
    pub fn verify_first_order(&self, unit: usize, z: usize) -> Result<Residual> {
        let e = self.moment(|p| Ok(if p.arm(unit) == z { T::one() } else { T::zero() }))?;
        let pi = T::from_ratio(&self.design.mechanism().first_order(unit, z));
        Ok(Residual::new(e.value.to_f64(), pi.to_f64(), 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    #[test]
    fn constant_statistic_has_unit_expectation() {
        let m = Mechanism::completely_randomized(vec![2, 2]).unwrap();
        let e = expectation(&m, |_| Ok(Exact::one())).unwrap();
        assert_eq!(e.value, Exact::one());
        assert_eq!(e.support_size, 6);
        assert!(e.weight_check.is_one());
    }

    #[test]
    fn exact_identities_on_small_cr() {
        let rows: Vec<Vec<Exact>> = [[1, 4, 0], [2, 2, 5], [5, 1, 1], [3, 3, 2], [0, 7, 4]]
            .iter()
            .map(|r| r.iter().map(|&x| Exact::from_integer(x)).collect())
            .collect();
        let t = PotentialOutcomes::from_rows(rows).unwrap();
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(vec![2, 2, 1]).unwrap()).unwrap();
        let o = Oracle::new(&d, &t).unwrap();
        let g: Vec<Exact> = [1, -2, 1].iter().map(|&x| Exact::from_integer(x)).collect();
        let h: Vec<Exact> = [-1, 0, 1].iter().map(|&x| Exact::from_integer(x)).collect();
        assert_eq!(o.verify_unbiasedness(&g).unwrap().abs, 0.0);
        assert_eq!(o.verify_variance(&g).unwrap().abs, 0.0);
        assert_eq!(o.verify_covariance(&g, &h).unwrap().abs, 0.0);
        let q = QMatrix::strict(5).unwrap();
        assert_eq!(o.verify_decomposition(&g, &q).unwrap().abs, 0.0);
        assert_eq!(o.verify_first_order(4, 2).unwrap().abs, 0.0);
    }
}
