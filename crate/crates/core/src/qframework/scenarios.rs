//! Bias of the `Q_strict` and `Q*` variance estimators under the three
//! additivity scenarios: strict additivity, additivity only in the milder
//! sense encoded by `Q*`, and neither.

use super::conditions::ga_condition;
use super::variance::bias;
use super::QMatrix;
use crate::error::Result;
use crate::population::{unit_contrasts_aligned, Grouping, PotentialOutcomes};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    StrictAdditive,
    MilderAdditive,
    Neither,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::StrictAdditive => "strict_additivity",
            Self::MilderAdditive => "q_star_additivity_only",
            Self::Neither => "neither",
        }
    }
}

/// One row of the bias table, realized on a concrete science table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub scenario: Scenario,
    pub ga_strict: bool,
    pub ga_star: bool,
    /// Bias of the estimator built on `Q_strict`.
    pub bias_strict: f64,
    /// Bias of the estimator built on `Q*`.
    pub bias_star: f64,
}

pub fn bias_table_row(table: &PotentialOutcomes<f64>, g: &[f64], q_star: &QMatrix<f64>, tol_ga: f64) -> Result<Table1Row> {
    let q_strict = QMatrix::strict(table.n_units())?;
    let tau = unit_contrasts_aligned(table, g);
    let ga_strict = ga_condition(&q_strict, table, tol_ga).ok;
    let ga_star = ga_condition(q_star, table, tol_ga).ok;
    let scenario = match (ga_strict, ga_star) {
        (true, _) => Scenario::StrictAdditive,
        (false, true) => Scenario::MilderAdditive,
        (false, false) => Scenario::Neither,
    };
    Ok(Table1Row {
        scenario,
        ga_strict,
        ga_star,
        bias_strict: bias(&q_strict, &tau)?,
        bias_star: bias(q_star, &tau)?,
    })
}

/// Three stratified tables with `k` treatments: strictly additive,
/// additive within strata only, and non-additive.
pub fn scenario_tables(sizes: &[usize], k: usize, seed: u64) -> Result<Vec<PotentialOutcomes<f64>>> {
    let strata = Grouping::contiguous(sizes);
    let n = strata.of_unit.len();
    let mut rng = StreamRng::new(seed, 0);
    let base: Vec<f64> = (0..n).map(|_| 10.0 + 2.0 * rng.normal()).collect();
    let shift: Vec<f64> = (0..k).map(|z| z as f64 * 1.5).collect();
    let stratum_shift: Vec<Vec<f64>> = (0..sizes.len())
        .map(|_| (0..k).map(|_| rng.normal()).collect())
        .collect();
    let noise: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.normal()).collect()).collect();

    let build = |f: &dyn Fn(usize, usize) -> f64| {
        let rows = (0..n).map(|i| (0..k).map(|z| f(i, z)).collect()).collect();
        PotentialOutcomes::from_rows(rows)?.with_strata(strata.clone())
    };
    Ok(vec![
        build(&|i, z| base[i] + shift[z])?,
        build(&|i, z| base[i] + shift[z] + stratum_shift[strata.of_unit[i]][z])?,
        build(&|i, z| base[i] + shift[z] + noise[i][z])?,
    ])
}
