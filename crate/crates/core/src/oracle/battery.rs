//! Named verification batteries: fixed grids of mechanisms, science tables,
//! contrasts and Q matrices checked against enumeration.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::Serialize;

use super::{Oracle, Residual};
use crate::assignment::{enumerate_support, Mechanism, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::estimation::{CustomLue, Design, Lue};
use crate::population::{Grouping, PotentialOutcomes};
use crate::qframework::{ga_condition, sap_violation, QMatrix, DEFAULT_GA_TOL};
use crate::rng::{stream_id, StreamRng};

pub const BATTERIES: &[&str] = &["grid", "cr", "stratified", "split-plot", "custom", "all"];

/// Relative tolerance for identities routed through enumeration.
pub const ORACLE_TOL: f64 = 1e-10;

pub struct Case {
    pub label: String,
    pub mech: Mechanism,
    pub lue: Lue<f64>,
    pub tables: Vec<(String, PotentialOutcomes<f64>)>,
    pub contrasts: Vec<(String, Vec<f64>)>,
    pub qs: Vec<(String, QMatrix<f64>)>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckResult {
    pub case: String,
    pub table: String,
    pub check: String,
    pub subject: String,
    pub value: f64,
    pub reference: f64,
    pub rel_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CaseReport {
    pub case: String,
    pub support_size: usize,
    pub n_units: usize,
    pub n_treatments: usize,
    /// Q matrices refused for some contrast because the SAP condition fails.
    pub sap_refusals: Vec<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BatteryReport {
    pub battery: String,
    pub seed: u64,
    pub cases: Vec<CaseReport>,
    pub checks: Vec<CheckResult>,
    pub max_rel_residual: BTreeMap<String, f64>,
    pub n_checks: usize,
    pub n_failed: usize,
    pub passed: bool,
}

fn contrasts_for(k: usize) -> Vec<(String, Vec<f64>)> {
    match k {
        2 => vec![("diff".into(), vec![-1.0, 1.0])],
        3 => vec![("quadratic".into(), vec![1.0, -2.0, 1.0]), ("linear".into(), vec![-1.0, 0.0, 1.0])],
        4 => vec![
            ("main_1".into(), vec![-0.5, -0.5, 0.5, 0.5]),
            ("main_2".into(), vec![-0.5, 0.5, -0.5, 0.5]),
            ("interaction".into(), vec![0.5, -0.5, -0.5, 0.5]),
        ],
        _ => {
            let mut g = vec![0.0; k];
            g[0] = -1.0;
            g[k - 1] = 1.0;
            vec![("first_last".into(), g)]
        }
    }
}

fn random_table(n: usize, k: usize, rng: &mut StreamRng) -> PotentialOutcomes<f64> {
    let rows = (0..n).map(|_| (0..k).map(|_| 5.0 + 2.0 * rng.normal()).collect()).collect();
    PotentialOutcomes::from_rows(rows).expect("valid shape")
}

fn additive_table(n: usize, k: usize, rng: &mut StreamRng) -> PotentialOutcomes<f64> {
    let effect: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let rows = (0..n)
        .map(|_| {
            let base = 5.0 + 2.0 * rng.normal();
            effect.iter().map(|e| base + e).collect()
        })
        .collect();
    PotentialOutcomes::from_rows(rows).expect("valid shape")
}

/// Additive within groups: unit effects shared by every member of a group.
fn group_additive_table(groups: &Grouping, k: usize, rng: &mut StreamRng) -> PotentialOutcomes<f64> {
    let effect: Vec<Vec<f64>> = (0..groups.n_groups()).map(|_| (0..k).map(|_| rng.normal()).collect()).collect();
    let rows = groups
        .of_unit
        .iter()
        .map(|&h| {
            let base = 5.0 + 2.0 * rng.normal();
            effect[h].iter().map(|e| base + e).collect()
        })
        .collect();
    PotentialOutcomes::from_rows(rows).expect("valid shape")
}

fn standard_qs(mech: &Mechanism) -> Vec<(String, QMatrix<f64>)> {
    let n = mech.n_units();
    let mut qs = vec![("strict".to_string(), QMatrix::strict(n).expect("n >= 2"))];
    match mech {
        Mechanism::Stratified { strata, .. } if strata.n_groups() >= 2 => {
            qs.push(("strat".into(), QMatrix::strat_grouped(strata).expect("strata of size >= 2")));
        }
        Mechanism::SplitPlot(sp) => {
            qs.push(("wholeplot".into(), QMatrix::wholeplot_grouped(&sp.wholeplots).expect("equal plots")));
        }
        _ => {}
    }
    if n % 2 == 0 {
        qs.push(("half".into(), QMatrix::half(n).expect("even n")));
    }
    qs
}

fn case(label: String, mech: Mechanism, seed: u64, lue: Lue<f64>) -> Case {
    let n = mech.n_units();
    let k = mech.n_treatments();
    let mut rng = StreamRng::new(seed, stream_id(&[label.len() as u64, n as u64, k as u64]));
    let mut tables = vec![
        ("random".to_string(), random_table(n, k, &mut rng)),
        ("additive".to_string(), additive_table(n, k, &mut rng)),
    ];
    let groups = match &mech {
        Mechanism::Stratified { strata, .. } if strata.n_groups() >= 2 => Some(strata.clone()),
        Mechanism::SplitPlot(sp) => Some(sp.wholeplots.clone()),
        _ => None,
    };
    if let Some(g) = groups {
        tables.push(("group_additive".to_string(), group_additive_table(&g, k, &mut rng)));
    }
    Case {
        label,
        qs: standard_qs(&mech),
        contrasts: contrasts_for(k),
        mech,
        lue,
        tables,
    }
}

fn even_counts(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|z| n / k + usize::from(z >= k - n % k)).collect()
}

/// CR and stratified designs with `N in {4,5,6}`, `|Z| in {2,3}`, and the
/// 2x2 split-plot design with `H = 4`, `N0 = 2`.
pub fn grid_cases(seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    for n in 4..=6 {
        for k in 2..=3 {
            let counts = even_counts(n, k);
            let mech = Mechanism::completely_randomized(counts.clone()).expect("valid counts");
            out.push(case(format!("cr_n{n}_k{k}"), mech, seed, Lue::HorvitzThompson));

            // Two strata need at least k units each; otherwise a single stratum.
            let sizes = if n >= 2 * k { vec![n / 2, n - n / 2] } else { vec![n] };
            let strata = Grouping::contiguous(&sizes);
            let counts: Vec<Vec<usize>> = sizes.iter().map(|&s| even_counts(s, k)).collect();
            let mech = Mechanism::stratified(strata, counts).expect("valid counts");
            out.push(case(format!("strat_n{n}_k{k}"), mech, seed, Lue::HorvitzThompson));
        }
    }
    let sp = Mechanism::split_plot(4, 2, vec![2, 2], vec![1, 1]).expect("valid split-plot");
    out.push(case("splitplot_h4_n2".into(), sp, seed, Lue::HorvitzThompson));
    out
}

/// LUE with a nonzero intercept and non-HT weights: `b_i(T,z)` proportional
/// to a partition weight, normalized so that each unit's weights average to `1/N`.
pub fn reweighted_lue(mech: &Mechanism, delta: f64) -> Result<CustomLue<f64>> {
    let support = enumerate_support(mech, DEFAULT_SUPPORT_CAP)?;
    let n = mech.n_units();
    let k = mech.n_treatments();
    let weight = |idx: usize| 1.0 + 0.5 * (idx % 3) as f64;
    let mut denom = vec![0.0; n * k];
    for (idx, e) in support.entries().iter().enumerate() {
        let p = crate::scalar::ratio_to_f64(&e.probability);
        for i in 0..n {
            denom[i * k + e.partition.arm(i)] += p * weight(idx);
        }
    }
    let pi0: Vec<f64> = (0..k).map(|z| crate::scalar::ratio_to_f64(&mech.first_order(0, z))).collect();
    let mut lue = CustomLue::new(n, k);
    for (idx, e) in support.entries().iter().enumerate() {
        let a: Vec<f64> = (0..k)
            .map(|z| delta * (f64::from(u8::from(e.partition.arm(0) == z)) - pi0[z]))
            .collect();
        let mut b = vec![0.0; n * k];
        for i in 0..n {
            let z = e.partition.arm(i);
            b[i * k + z] = weight(idx) / (n as f64 * denom[i * k + z]);
        }
        lue.insert(&e.partition, a, b)?;
    }
    Ok(lue)
}

fn custom_cases(seed: u64) -> Result<Vec<Case>> {
    let cr = Mechanism::completely_randomized(vec![2, 2])?;
    let support = enumerate_support(&cr, DEFAULT_SUPPORT_CAP)?;
    let total: usize = (1..=support.len()).sum();
    let entries = support
        .entries()
        .iter()
        .enumerate()
        .map(|(idx, e)| (e.partition.clone(), BigRational::new((idx + 1).into(), total.into())))
        .collect();
    let skewed = Mechanism::custom(4, 2, entries)?;
    let cr5 = Mechanism::completely_randomized(vec![2, 2, 1])?;
    let lue = reweighted_lue(&cr5, 0.75)?;
    Ok(vec![
        case("custom_skewed_cr".into(), skewed, seed, Lue::HorvitzThompson),
        case("custom_lue_cr5".into(), cr5, seed, Lue::Custom(lue)),
    ])
}

fn battery_cases(name: &str, seed: u64) -> Result<Vec<Case>> {
    let st = |sizes: &[usize], counts: Vec<Vec<usize>>| Mechanism::stratified(Grouping::contiguous(sizes), counts);
    Ok(match name {
        "grid" => grid_cases(seed),
        "cr" => vec![
            case("cr_n4_k2".into(), Mechanism::completely_randomized(vec![2, 2])?, seed, Lue::HorvitzThompson),
            case("cr_n4_k3".into(), Mechanism::completely_randomized(vec![2, 1, 1])?, seed, Lue::HorvitzThompson),
        ],
        "stratified" => vec![
            case("strat_n6".into(), st(&[3, 3], vec![vec![2, 1], vec![1, 2]])?, seed, Lue::HorvitzThompson),
            case("strat_n8".into(), st(&[4, 4], vec![vec![2, 2], vec![2, 2]])?, seed, Lue::HorvitzThompson),
        ],
        "split-plot" => vec![
            case("splitplot_h4_n3".into(), Mechanism::split_plot(4, 3, vec![2, 2], vec![1, 2])?, seed, Lue::HorvitzThompson),
            case("splitplot_h4_n2".into(), Mechanism::split_plot(4, 2, vec![2, 2], vec![1, 1])?, seed, Lue::HorvitzThompson),
        ],
        "custom" => custom_cases(seed)?,
        "all" => {
            let mut all = Vec::new();
            for b in BATTERIES.iter().filter(|&&b| b != "all") {
                all.extend(battery_cases(b, seed)?);
            }
            all
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown battery `{other}`; expected one of {}",
                BATTERIES.join(", ")
            )))
        }
    })
}

fn probabilities_exact(mech: &Mechanism) -> Result<bool> {
    let support = enumerate_support(mech, DEFAULT_SUPPORT_CAP)?;
    let n = mech.n_units();
    let k = mech.n_treatments();
    let (first, second) = crate::assignment::support_tables(n, k, support.entries());
    for i in 0..n {
        for z in 0..k {
            if mech.first_order(i, z) != first[i * k + z] {
                return Ok(false);
            }
            for j in (0..n).filter(|&j| j != i) {
                for zs in 0..k {
                    if mech.second_order(i, j, z, zs) != second[((i * n + j) * k + z) * k + zs] {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

pub fn run_case(case: &Case, checks: &mut Vec<CheckResult>) -> Result<CaseReport> {
    let design = Design::new(case.mech.clone(), case.lue.clone())?;
    let mut refusals = Vec::new();
    let exact = probabilities_exact(&case.mech)?;
    checks.push(CheckResult {
        case: case.label.clone(),
        table: String::new(),
        check: "probabilities_exact".into(),
        subject: String::new(),
        value: f64::from(u8::from(exact)),
        reference: 1.0,
        rel_residual: if exact { 0.0 } else { 1.0 },
        tol: 0.0,
        pass: exact,
    });
    let mut support_size = 0;
    for (tname, table) in &case.tables {
        let oracle = Oracle::new(&design, table)?;
        support_size = oracle.support().len();
        let mut push = |check: &str, subject: String, r: Residual| {
            checks.push(CheckResult {
                case: case.label.clone(),
                table: tname.clone(),
                check: check.into(),
                subject,
                value: r.value,
                reference: r.reference,
                rel_residual: r.rel,
                tol: ORACLE_TOL,
                pass: r.within(ORACLE_TOL),
            });
        };
        for (ci, (cname, g)) in case.contrasts.iter().enumerate() {
            push("unbiased_contrast", cname.clone(), oracle.verify_unbiasedness(g)?);
            push("variance_theorem", cname.clone(), oracle.verify_variance(g)?);
            for (qname, q) in &case.qs {
                let subject = format!("{cname}/{qname}");
                push("variance_decomposition", subject.clone(), oracle.verify_decomposition(g, q)?);
                if sap_violation(q, design.probabilities(), g, g).is_some() {
                    if !refusals.contains(qname) {
                        refusals.push(qname.clone());
                    }
                    continue;
                }
                let (vs_vq, vs_var) = oracle.verify_vq_estimator(g, q)?;
                push("vq_hat_unbiased", subject.clone(), vs_vq);
                if ga_condition(q, table, DEFAULT_GA_TOL).ok {
                    push("vq_hat_unbiased_for_var", subject, vs_var);
                }
            }
            for (cname2, g2) in case.contrasts.iter().skip(ci + 1) {
                let subject = format!("{cname},{cname2}");
                push("covariance_theorem", subject.clone(), oracle.verify_covariance(g, g2)?);
                for (qname, q) in &case.qs {
                    if sap_violation(q, design.probabilities(), g, g2).is_some() {
                        continue;
                    }
                    let (vs_cq, vs_cov, decomp) = oracle.verify_cq_estimator(g, g2, q)?;
                    let s = format!("{subject}/{qname}");
                    push("cq_hat_unbiased", s.clone(), vs_cq);
                    push("covariance_decomposition", s.clone(), decomp);
                    if ga_condition(q, table, DEFAULT_GA_TOL).ok {
                        push("cq_hat_unbiased_for_cov", s, vs_cov);
                    }
                }
            }
        }
    }
    Ok(CaseReport {
        case: case.label.clone(),
        support_size,
        n_units: case.mech.n_units(),
        n_treatments: case.mech.n_treatments(),
        sap_refusals: refusals,
    })
}

pub fn run_battery(name: &str, seed: u64) -> Result<BatteryReport> {
    run_cases(name, seed, &battery_cases(name, seed)?)
}

/// Runs arbitrary cases and collects them into one report labelled `name`.
pub fn run_cases(name: &str, seed: u64, cases: &[Case]) -> Result<BatteryReport> {
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for c in cases {
        reports.push(run_case(c, &mut checks)?);
    }
    let mut max_rel_residual: BTreeMap<String, f64> = BTreeMap::new();
    for c in &checks {
        let e = max_rel_residual.entry(c.check.clone()).or_insert(0.0);
        *e = e.max(c.rel_residual);
    }
    let n_failed = checks.iter().filter(|c| !c.pass).count();
    Ok(BatteryReport {
        battery: name.to_string(),
        seed,
        cases: reports,
        n_checks: checks.len(),
        n_failed,
        passed: n_failed == 0,
        checks,
        max_rel_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_batteries_pass() {
        for name in ["cr", "stratified", "split-plot", "custom"] {
            let r = run_battery(name, 7).unwrap();
            let failed: Vec<_> = r.checks.iter().filter(|c| !c.pass).collect();
            assert!(failed.is_empty(), "{name}: {failed:#?}");
        }
    }

    #[test]
    fn unknown_battery_is_rejected() {
        assert!(run_battery("nope", 1).is_err());
    }

    #[test]
    fn even_counts_cover_n() {
        assert_eq!(even_counts(5, 3), vec![1, 2, 2]);
        assert_eq!(even_counts(4, 2), vec![2, 2]);
    }
}
