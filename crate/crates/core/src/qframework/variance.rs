//! `V_Q`, `C_Q` and their design-unbiased estimators.

use super::conditions::{ga_condition, sap_violation, GaReport, SapWitness};
use super::QMatrix;
use crate::assignment::Partition;
use crate::error::{Error, Result};
use crate::estimation::{Design, MaskedView, QuadraticCoefficients};
use crate::population::{unit_contrasts_aligned, OutcomeView, PotentialOutcomes};
use crate::scalar::Scalar;

fn check_n<T: Scalar>(design: &Design<T>, q: &QMatrix<T>) -> Result<()> {
    if q.n() != design.n_units() {
        return Err(Error::Dimension(format!("Q is {0}x{0}, design has {1} units", q.n(), design.n_units())));
    }
    Ok(())
}

fn tilde_m<T: Scalar>(design: &Design<T>, g: &[T], q: &QMatrix<T>) -> QuadraticCoefficients<T> {
    design.m_coefficients(g).shifted_by_q(g, g, |i, j| q.get(i, j))
}

fn tilde_r<T: Scalar>(design: &Design<T>, g1: &[T], g2: &[T], q: &QMatrix<T>) -> QuadraticCoefficients<T> {
    design.r_coefficients(g1, g2).shifted_by_q(g1, g2, |i, j| q.get(i, j))
}

/// `V_Q`: the variance formula with `M_ii*` replaced by
/// `g(z) g(z*) (B_ii* + q_ii* - 1/N^2)` and without the `-tau^2` term.
pub fn v_q<T: Scalar>(design: &Design<T>, table: &PotentialOutcomes<T>, g: &[T], q: &QMatrix<T>) -> Result<T> {
    check_n(design, q)?;
    Ok(tilde_m(design, g, q).evaluate(table))
}

/// Unbiased estimator of `V_Q` from one realized partition. Refuses when the
/// SAP condition fails for `(Q, mechanism, g)`.
pub fn v_q_hat<T: Scalar, V: OutcomeView<T>>(
    design: &Design<T>,
    view: &V,
    partition: &Partition,
    g: &[T],
    q: &QMatrix<T>,
) -> Result<T> {
    check_n(design, q)?;
    if let Some(w) = sap_violation(q, design.probabilities(), g, g) {
        return Err(Error::SapViolation(w));
    }
    Ok(tilde_m(design, g, q).estimate(view, partition, design.probabilities()))
}

/// Covariance analogue of [`v_q`].
pub fn c_q<T: Scalar>(design: &Design<T>, table: &PotentialOutcomes<T>, g1: &[T], g2: &[T], q: &QMatrix<T>) -> Result<T> {
    check_n(design, q)?;
    Ok(tilde_r(design, g1, g2, q).evaluate(table))
}

/// Covariance analogue of [`v_q_hat`].
pub fn c_q_hat<T: Scalar, V: OutcomeView<T>>(
    design: &Design<T>,
    view: &V,
    partition: &Partition,
    g1: &[T],
    g2: &[T],
    q: &QMatrix<T>,
) -> Result<T> {
    check_n(design, q)?;
    if let Some(w) = sap_violation(q, design.probabilities(), g1, g2) {
        return Err(Error::SapViolation(w));
    }
    Ok(tilde_r(design, g1, g2, q).estimate(view, partition, design.probabilities()))
}

/// `tau' Q tau`.
pub fn bias<T: Scalar>(q: &QMatrix<T>, tau: &[T]) -> Result<T> {
    cross_bias(q, tau, tau)
}

/// `tau_1' Q tau_2`.
pub fn cross_bias<T: Scalar>(q: &QMatrix<T>, tau1: &[T], tau2: &[T]) -> Result<T> {
    if tau1.len() != q.n() || tau2.len() != q.n() {
        return Err(Error::Dimension(format!(
            "Q is {0}x{0}, contrast vectors have length {1} and {2}",
            q.n(),
            tau1.len(),
            tau2.len()
        )));
    }
    Ok(q.matrix().bilinear(tau1, tau2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport<T> {
    pub tau_bar: T,
    pub var: T,
    pub v_q: T,
    pub bias: T,
    /// Present when a realized partition was supplied.
    pub tau_hat: Option<T>,
    /// Present when a partition was supplied and the SAP condition holds.
    pub v_q_hat: Option<T>,
    pub sap_ok: bool,
    pub sap_witness: Option<SapWitness>,
    pub ga: GaReport,
}

/// Full design-level report for one contrast and one `Q`, optionally with
/// the estimates from a realized partition applied to `table`.
pub fn variance_report<T: Scalar>(
    design: &Design<T>,
    table: &PotentialOutcomes<T>,
    g: &[T],
    q: &QMatrix<T>,
    partition: Option<&Partition>,
    tol_ga: f64,
) -> Result<VarianceReport<T>> {
    check_n(design, q)?;
    crate::estimation::check_shape(design, table)?;
    let tau = unit_contrasts_aligned(table, g);
    let tau_bar = tau.iter().copied().sum::<T>() / T::from_usize(tau.len());
    let var = design.sampling_variance(table, g);
    let v = v_q(design, table, g, q)?;
    let b = bias(q, &tau)?;
    let witness = sap_violation(q, design.probabilities(), g, g);
    let (tau_hat, v_hat) = match partition {
        Some(p) => {
            let view = MaskedView::new(table, p);
            let t = design.contrast_estimate(&view, p, g)?;
            let vh = match witness {
                None => Some(v_q_hat(design, &view, p, g, q)?),
                Some(_) => None,
            };
            (Some(t), vh)
        }
        None => (None, None),
    };
    Ok(VarianceReport {
        tau_bar,
        var,
        v_q: v,
        bias: b,
        tau_hat,
        v_q_hat: v_hat,
        sap_ok: witness.is_none(),
        sap_witness: witness,
        ga: ga_condition(q, table, tol_ga),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::Mechanism;
    use crate::estimation::Observed;
    use crate::scalar::Exact;

    #[test]
    fn two_arm_estimate_is_five() {
        // observed Y(0) in {1, 3}, Y(1) in {2, 6}
        let p = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        let obs = Observed::new(p.clone(), vec![1.0f64, 3.0, 2.0, 6.0]).unwrap();
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(vec![2, 2]).unwrap()).unwrap();
        let v = v_q_hat(&d, &obs, &p, &[-1.0, 1.0], &QMatrix::strict(4).unwrap()).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_holds_exactly() {
        let rows: Vec<Vec<Exact>> = [[1, 4], [2, 2], [5, 1], [3, 3], [0, 7]]
            .iter()
            .map(|r| r.iter().map(|&x| Exact::from_integer(x)).collect())
            .collect();
        let t = PotentialOutcomes::from_rows(rows).unwrap();
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(vec![2, 3]).unwrap()).unwrap();
        let g = [Exact::from_integer(-1), Exact::from_integer(1)];
        let tau = unit_contrasts_aligned(&t, &g);
        for q in [QMatrix::strict(5).unwrap(), QMatrix::strat(&[2, 3]).unwrap()] {
            let var = d.sampling_variance(&t, &g);
            assert_eq!(var, v_q(&d, &t, &g, &q).unwrap() - bias(&q, &tau).unwrap());
            assert_eq!(c_q(&d, &t, &g, &g, &q).unwrap(), v_q(&d, &t, &g, &q).unwrap());
        }
    }

    #[test]
    fn bias_of_unit_pair() {
        let q = QMatrix::<f64>::strict(2).unwrap();
        assert_eq!(bias(&q, &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(bias(&q, &[3.0, 3.0]).unwrap(), 0.0);
        assert!(bias(&q, &[1.0]).is_err());
    }

    #[test]
    fn split_plot_with_strict_q_is_refused() {
        let m = Mechanism::split_plot(4, 2, vec![2, 2], vec![1, 1]).unwrap();
        let d = Design::<f64>::horvitz_thompson(m).unwrap();
        let p = Partition::new(vec![0, 1, 0, 1, 2, 3, 2, 3], 4).unwrap();
        let obs = Observed::new(p.clone(), vec![1.0; 8]).unwrap();
        let g = [-0.5, -0.5, 0.5, 0.5];
        let err = v_q_hat(&d, &obs, &p, &g, &QMatrix::strict(8).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SapViolation(_)));
        assert!(v_q_hat(&d, &obs, &p, &g, &QMatrix::wholeplot(4, 2).unwrap()).is_ok());
    }
}
