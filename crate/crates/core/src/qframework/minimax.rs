//! Choice of Q minimizing the worst-case bias `lambda_max(Q)` among the
//! matrices the mechanism admits.

use super::QMatrix;
use crate::assignment::Mechanism;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimaxChoice {
    /// All second-order probabilities positive: `Q_strict` is the global minimizer.
    Strict,
    /// Split-plot: `Q_wholeplot` is the unique minimizer among admissible `Q`.
    WholePlot,
    /// No matrix in the class satisfies the SAP condition.
    NoneAdmissible,
    /// Zero pattern not covered by a known characterization.
    Unresolved,
}

impl MinimaxChoice {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Strict => "strict",
            Self::WholePlot => "wholeplot",
            Self::NoneAdmissible => "none",
            Self::Unresolved => "unresolved",
        }
    }

    /// The chosen matrix for this mechanism.
    pub fn matrix<T: Scalar>(&self, mech: &Mechanism) -> Result<QMatrix<T>> {
        match (self, mech) {
            (Self::Strict, _) => QMatrix::strict(mech.n_units()),
            (Self::WholePlot, Mechanism::SplitPlot(sp)) => QMatrix::wholeplot_grouped(&sp.wholeplots),
            (Self::NoneAdmissible, _) => Err(Error::NoAdmissibleQ),
            _ => Err(Error::InvalidQ(format!("no minimax choice available for a {} mechanism", mech.kind()))),
        }
    }
}

pub fn minimax_q(mech: &Mechanism) -> MinimaxChoice {
    match mech {
        Mechanism::SplitPlot(sp) if sp.whole_counts.iter().all(|&r| r >= 2) => MinimaxChoice::WholePlot,
        Mechanism::Unicluster { .. } => MinimaxChoice::NoneAdmissible,
        m if m.all_second_order_positive() => MinimaxChoice::Strict,
        _ => MinimaxChoice::Unresolved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Grouping;

    #[test]
    fn choices_per_family() {
        let st = Mechanism::stratified(Grouping::contiguous(&[4, 4]), vec![vec![2, 2], vec![2, 2]]).unwrap();
        assert_eq!(minimax_q(&st), MinimaxChoice::Strict);
        let sp = Mechanism::split_plot(4, 3, vec![2, 2], vec![1, 2]).unwrap();
        assert_eq!(minimax_q(&sp), MinimaxChoice::WholePlot);
        let q: QMatrix<f64> = minimax_q(&sp).matrix(&sp).unwrap();
        assert!((q.lambda_max() - 1.0 / 36.0).abs() < 1e-12);
        let uc = Mechanism::unicluster(Grouping::contiguous(&[2, 2])).unwrap();
        assert_eq!(minimax_q(&uc), MinimaxChoice::NoneAdmissible);
        assert!(matches!(minimax_q(&uc).matrix::<f64>(&uc), Err(Error::NoAdmissibleQ)));
    }
}
