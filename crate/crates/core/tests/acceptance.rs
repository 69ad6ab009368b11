//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::io::Write;
use std::time::Instant;

use finpop::assignment::{enumerate_support, sample, Mechanism, DEFAULT_SUPPORT_CAP};
use finpop::estimation::{neyman_two_arm_variance, MaskedView};
use finpop::oracle::{run_battery, BatteryReport};
use finpop::population::{Grouping, PotentialOutcomes};
use finpop::qframework::{
    bias_table_row, kron_distance, minimax_q, random_kron_q, random_q, sap_sufficient, scenario_tables, v_q, v_q_hat,
    MinimaxChoice, Scenario,
};
use finpop::report::to_stable_json;
use finpop::rng::StreamRng;
use finpop::simulation::{builtin_models, run_bias_study, StudyResult, DEFAULT_CONTRAST, DEFAULT_SIZES};
use finpop::{Design, Error, QMatrix};

struct Outcome {
    lines: Vec<String>,
    failed: usize,
}

impl Outcome {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let line = format!("[{}] criterion {id}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        // bypass libtest capture so the lines show up in a plain `cargo test` run
        let _ = writeln!(std::io::stdout().lock(), "{line}");
        self.lines.push(line);
        self.failed += usize::from(!pass);
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / scale.abs().max(f64::MIN_POSITIVE)
    }
}

fn random_table(rng: &mut StreamRng, n: usize, k: usize) -> PotentialOutcomes<f64> {
    let rows = (0..n).map(|_| (0..k).map(|_| 5.0 + 3.0 * rng.normal()).collect()).collect();
    PotentialOutcomes::from_rows(rows).unwrap()
}

fn sample_var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

// Criterion 1 ---------------------------------------------------------------

const C1_SEED: u64 = 20_240_601;

fn criterion_1(out: &mut Outcome) -> BatteryReport {
    let start = Instant::now();
    let report = run_battery("grid", C1_SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut labels: Vec<&str> = report.cases.iter().map(|c| c.case.as_str()).collect();
    labels.sort();
    let mut expected = Vec::new();
    for n in 4..=6 {
        for k in 2..=3 {
            expected.push(format!("cr_n{n}_k{k}"));
            expected.push(format!("strat_n{n}_k{k}"));
        }
    }
    expected.push("splitplot_h4_n2".into());
    let covered = expected.iter().all(|e| labels.contains(&e.as_str()));
    let count = |check: &str| report.checks.iter().filter(|c| c.check == check).count();
    let max = |check: &str| report.max_rel_residual.get(check).copied().unwrap_or(f64::NAN);
    let pass = report.passed && covered && count("vq_hat_unbiased") > 0 && secs < 30.0;
    out.record(
        1,
        "oracle identity suite",
        pass,
        format!(
            "{} cases, {} checks, {} failed; max rel residual: variance {:.2e}, unbiasedness {:.2e}, V_Q hat {:.2e} ({} checks); {:.2}s (limit 30s)",
            report.cases.len(),
            report.n_checks,
            report.n_failed,
            max("variance_theorem"),
            max("unbiased_contrast"),
            max("vq_hat_unbiased"),
            count("vq_hat_unbiased"),
            secs
        ),
    );
    report
}

// Criterion 2 ---------------------------------------------------------------

fn criterion_2(out: &mut Outcome) {
    let mut rng = StreamRng::new(2, 0);
    let mut worst: f64 = 0.0;
    let fixtures = 30;
    for _ in 0..fixtures {
        let n = 4 + rng.below(9) as usize;
        let r0 = 1 + rng.below((n - 1) as u64) as usize;
        let r1 = n - r0;
        let t = random_table(&mut rng, n, 2);
        let y0 = t.column(0);
        let y1 = t.column(1);
        let tau: Vec<f64> = y0.iter().zip(&y1).map(|(a, b)| b - a).collect();
        let (s00, s11, stt) = (sample_var(&y0), sample_var(&y1), sample_var(&tau));
        let neyman = s00 / r0 as f64 + s11 / r1 as f64 - stt / n as f64;

        let d = neyman_two_arm_variance(&t, r0, r1).unwrap();
        let design = Design::horvitz_thompson(Mechanism::completely_randomized(vec![r0, r1]).unwrap()).unwrap();
        let theorem = design.sampling_variance(&t, &[-1.0, 1.0]);
        let scale = s00 / r0 as f64 + s11 / r1 as f64;
        for r in [
            rel(d.s00, s00, s00),
            rel(d.s11, s11, s11),
            rel(d.s_tau, stt, stt.max(s00 + s11)),
            rel(d.variance, neyman, scale),
            rel(theorem, neyman, scale),
        ] {
            worst = worst.max(r);
        }
    }
    out.record(
        2,
        "Neymanian decomposition",
        worst <= 1e-12,
        format!("{fixtures} two-arm CR fixtures, max rel residual {worst:.2e} (tol 1e-12)"),
    );
}

// Criterion 3 ---------------------------------------------------------------

fn criterion_3(out: &mut Outcome) {
    let mut rng = StreamRng::new(3, 0);
    let (mut worst_vq, mut worst_hat): (f64, f64) = (0.0, 0.0);
    let fixtures = 50;
    for _ in 0..fixtures {
        let k = 2 + rng.below(2) as usize;
        let h = 2 + rng.below(2) as usize;
        let sizes: Vec<usize> = (0..h).map(|_| 2 * k + rng.below(4) as usize).collect();
        let counts: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&nh| {
                let mut c = vec![2; k];
                for _ in 0..nh - 2 * k {
                    c[rng.below(k as u64) as usize] += 1;
                }
                c
            })
            .collect();
        let n: usize = sizes.iter().sum();
        let strata = Grouping::contiguous(&sizes);
        let t = random_table(&mut rng, n, k).with_strata(strata.clone()).unwrap();
        let g: Vec<f64> = if k == 2 { vec![-1.0, 1.0] } else { vec![1.0, -2.0, 1.0] };
        let design = Design::horvitz_thompson(Mechanism::stratified(strata.clone(), counts.clone()).unwrap()).unwrap();
        let q = QMatrix::strat(&sizes).unwrap();
        let p = sample(design.mechanism(), &mut rng);

        let nf = n as f64;
        let (mut vq, mut vq_hat) = (0.0, 0.0);
        for (hh, members) in (0..h).map(|hh| (hh, strata.members(hh))) {
            let nh = sizes[hh] as f64;
            for z in 0..k {
                let r = counts[hh][z] as f64;
                let col: Vec<f64> = members.iter().map(|&i| t.y(i, z)).collect();
                let obs: Vec<f64> = members.iter().filter(|&&i| p.arm(i) == z).map(|&i| t.y(i, z)).collect();
                vq += g[z] * g[z] * nh * nh / r * sample_var(&col);
                vq_hat += g[z] * g[z] * nh * nh / r * sample_var(&obs);
            }
        }
        vq /= nf * nf;
        vq_hat /= nf * nf;
        let lib_vq = v_q(&design, &t, &g, &q).unwrap();
        let lib_hat = v_q_hat(&design, &MaskedView::new(&t, &p), &p, &g, &q).unwrap();
        worst_vq = worst_vq.max(rel(lib_vq, vq, vq));
        worst_hat = worst_hat.max(rel(lib_hat, vq_hat, vq_hat));
    }
    out.record(
        3,
        "stratified closed forms",
        worst_vq <= 1e-12 && worst_hat <= 1e-12,
        format!("{fixtures} fixtures, V_Q rel residual {worst_vq:.2e}, V_Q hat rel residual {worst_hat:.2e} (tol 1e-12)"),
    );
}

// Criterion 4 ---------------------------------------------------------------

fn criterion_4(out: &mut Outcome) {
    let mut worst: f64 = 0.0;
    for n in 2..=50 {
        let lm = QMatrix::<f64>::strict(n).unwrap().lambda_max();
        let exact = 1.0 / (n * (n - 1)) as f64;
        worst = worst.max(rel(lm, exact, exact));
    }
    let mut min_gap = f64::INFINITY;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut invalid = 0;
    for n in [4usize, 8] {
        let bound = 1.0 / (n * (n - 1)) as f64;
        let mut rng = StreamRng::new(4, n as u64);
        let mut got = 0;
        while got < 200 {
            let Some(q) = random_q(n, &mut rng) else {
                rejected += 1;
                continue;
            };
            got += 1;
            invalid += usize::from(!q.validate().ok());
            min_gap = min_gap.min(q.lambda_max() - bound);
        }
        accepted += got;
    }
    let pass = worst <= 1e-12 && min_gap >= -1e-10 && invalid == 0;
    out.record(
        4,
        "strict Q minimizes lambda_max",
        pass,
        format!(
            "lambda_max(q_strict) rel residual {worst:.2e} over N=2..50 (tol 1e-12); {accepted} random Q (rejected draws {rejected}, invalid {invalid}), min lambda_max - 1/(N(N-1)) = {min_gap:.3e} (tol -1e-10)"
        ),
    );
}

// Criterion 5 ---------------------------------------------------------------

fn criterion_5(out: &mut Outcome) {
    let mut worst: f64 = 0.0;
    for (h, n0) in [(2usize, 3usize), (4, 3), (5, 2)] {
        let lm = QMatrix::<f64>::wholeplot(h, n0).unwrap().lambda_max();
        let exact = 1.0 / ((h * n0) * (h - 1)) as f64;
        worst = worst.max(rel(lm, exact, exact));
    }
    let mut mismatches = 0;
    let mut pos = 0;
    let mut neg = 0;
    for (h, n0, r1, r2) in [(4usize, 3usize, vec![2, 2], vec![1, 2]), (5, 2, vec![2, 3], vec![1, 1])] {
        let mech = Mechanism::split_plot(h, n0, r1, r2).unwrap();
        let design = Design::<f64>::horvitz_thompson(mech).unwrap();
        let plots = Grouping::contiguous(&vec![n0; h]);
        let n = h * n0;
        let mut rng = StreamRng::new(5, n as u64);
        let mut cases: Vec<(QMatrix<f64>, bool)> = vec![
            (QMatrix::wholeplot(h, n0).unwrap(), true),
            (QMatrix::strict(n).unwrap(), false),
        ];
        while cases.len() < 42 {
            if let Some(q) = random_kron_q(&plots, &mut rng) {
                cases.push((q, true));
            }
        }
        while cases.len() < 82 {
            if let Some(q) = random_q(n, &mut rng) {
                cases.push((q, false));
            }
        }
        for (q, kron) in &cases {
            let close = kron_distance(q, &plots) < 1e-10;
            let accepted = sap_sufficient(q, design.probabilities());
            if close != *kron || accepted != *kron {
                mismatches += 1;
            }
            if *kron {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    out.record(
        5,
        "whole-plot Q under split-plot SAP",
        worst <= 1e-12 && mismatches == 0,
        format!(
            "lambda_max(q_wholeplot) rel residual {worst:.2e} (tol 1e-12); SAP_suff on {pos} Kronecker-form and {neg} generic Q: {mismatches} misclassified"
        ),
    );
}

// Criterion 6 ---------------------------------------------------------------

fn independent_bias(t: &PotentialOutcomes<f64>, g: &[f64], sizes: Option<&[usize]>) -> f64 {
    let n = t.n_units();
    let nf = n as f64;
    let tau: Vec<f64> = (0..n).map(|i| (0..g.len()).map(|z| g[z] * t.y(i, z)).sum()).collect();
    let stratum: Vec<usize> = match sizes {
        Some(s) => s.iter().enumerate().flat_map(|(h, &m)| std::iter::repeat(h).take(m)).collect(),
        None => vec![0; n],
    };
    let size_of = |i: usize| stratum.iter().filter(|&&h| h == stratum[i]).count() as f64;
    let mut b = 0.0;
    for i in 0..n {
        for j in 0..n {
            let q = if i == j {
                1.0 / (nf * nf)
            } else if stratum[i] == stratum[j] {
                -1.0 / (nf * nf * (size_of(i) - 1.0))
            } else {
                0.0
            };
            b += tau[i] * q * tau[j];
        }
    }
    b
}

fn criterion_6(out: &mut Outcome) {
    let sizes = [6usize, 7, 5];
    let g = [1.0, -2.0, 1.0];
    let tables = scenario_tables(&sizes, 3, 6).unwrap();
    let q_star = QMatrix::strat(&sizes).unwrap();
    let expected = [Scenario::StrictAdditive, Scenario::MilderAdditive, Scenario::Neither];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for (t, want) in tables.iter().zip(expected) {
        let row = bias_table_row(t, &g, &q_star, 1e-9).unwrap();
        let b_strict = independent_bias(t, &g, None);
        let b_star = independent_bias(t, &g, Some(&sizes));
        let tau_sq: f64 = (0..t.n_units())
            .map(|i| (0..3).map(|z| g[z] * t.y(i, z)).sum::<f64>().powi(2))
            .sum::<f64>()
            / (t.n_units() * t.n_units()) as f64;
        worst = worst.max(rel(row.bias_strict, b_strict, b_strict.abs().max(tau_sq)));
        worst = worst.max(rel(row.bias_star, b_star, b_star.abs().max(tau_sq)));
        let zero = |b: f64| b.abs() <= 1e-10 * tau_sq;
        let shape = match want {
            Scenario::StrictAdditive => zero(row.bias_strict) && zero(row.bias_star),
            Scenario::MilderAdditive => row.bias_strict > 1e-6 && zero(row.bias_star),
            Scenario::Neither => row.bias_strict > 1e-6 && row.bias_star > 1e-6,
        };
        ok &= row.scenario == want && shape;
        cells.push(format!("{}=({:.3e}, {:.3e})", want.name(), row.bias_strict, row.bias_star));
    }
    out.record(
        6,
        "bias scenario matrix",
        ok && worst <= 1e-10,
        format!("{}; rel residual vs independent tau'Q tau {worst:.2e} (tol 1e-10)", cells.join(", ")),
    );
}

// Criterion 7 ---------------------------------------------------------------

const C7_REFERENCE: [(&str, f64); 4] = [("III", 0.42), ("IV", 0.46), ("V", 0.63), ("VI", 1.01)];

fn criterion_7(out: &mut Outcome) -> StudyResult {
    let start = Instant::now();
    let models = builtin_models();
    let mut first = None;
    let mut hard_ok = true;
    let mut seeds_within = 0;
    let mut worst_dev: Vec<f64> = vec![0.0; 4];
    let mut strict_medians = Vec::new();
    for seed in 1..=20u64 {
        let r = run_bias_study(&models, 100, &DEFAULT_CONTRAST, &DEFAULT_SIZES, seed).unwrap();
        let m = |name: &str| r.models.iter().find(|s| s.model == name).unwrap();
        let one = m("I");
        hard_ok &= one.bias_strict.iter().chain(&one.bias_strat).all(|b| b.abs() < 1e-9);
        let two = m("II");
        hard_ok &= two.bias_strat.iter().all(|b| b.abs() < 1e-9);
        let med = two.quantiles_strict.median;
        strict_medians.push(med);
        hard_ok &= med > 0.05 && med < 0.45;
        let mut within = true;
        for (idx, (name, target)) in C7_REFERENCE.iter().enumerate() {
            let dev = m(name).median_ratio.map_or(f64::INFINITY, |x| (x - target).abs());
            worst_dev[idx] = worst_dev[idx].max(dev);
            within &= dev <= 0.15;
        }
        seeds_within += usize::from(within);
        if seed == 1 {
            first = Some(r);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let lo = strict_medians.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = strict_medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.record(
        7,
        "Monte-Carlo bias study",
        hard_ok && seeds_within >= 16 && secs < 60.0,
        format!(
            "models I/II zero-bias and median checks {}; model II strict median in [{lo:.4}, {hi:.4}]; ratios within 0.15 for {seeds_within}/20 seeds (max deviation III {:.3}, IV {:.3}, V {:.3}, VI {:.3}); {secs:.2}s (limit 60s)",
            if hard_ok { "hold" } else { "fail" },
            worst_dev[0],
            worst_dev[1],
            worst_dev[2],
            worst_dev[3]
        ),
    );
    first.unwrap()
}

// Criterion 8 ---------------------------------------------------------------

fn criterion_8(out: &mut Outcome) {
    let mut ok = true;
    let mut refusals = 0;
    let mut fixtures = 0;
    for sizes in [vec![2usize, 2], vec![2, 3], vec![2, 2, 2], vec![1, 2, 3]] {
        let k = sizes.len();
        let n: usize = sizes.iter().sum();
        let mech = Mechanism::unicluster(Grouping::contiguous(&sizes)).unwrap();
        ok &= minimax_q(&mech) == MinimaxChoice::NoneAdmissible;
        ok &= matches!(MinimaxChoice::NoneAdmissible.matrix::<f64>(&mech), Err(Error::NoAdmissibleQ));
        let design = Design::<f64>::horvitz_thompson(mech.clone()).unwrap();
        let mut rng = StreamRng::new(8, n as u64);
        let mut qs = vec![QMatrix::strict(n).unwrap()];
        if n % 2 == 0 {
            qs.push(QMatrix::half(n).unwrap());
        }
        while qs.len() < 12 {
            if let Some(q) = random_q(n, &mut rng) {
                qs.push(q);
            }
        }
        let mut t = random_table(&mut rng, n, k);
        t = t.with_clusters(Grouping::contiguous(&sizes)).unwrap();
        let gs: Vec<Vec<f64>> = if k == 2 {
            vec![vec![-1.0, 1.0]]
        } else {
            vec![vec![1.0, -2.0, 1.0], vec![-1.0, 0.0, 1.0]]
        };
        let support = enumerate_support(&mech, DEFAULT_SUPPORT_CAP).unwrap();
        for q in &qs {
            for g in &gs {
                for e in support.entries() {
                    let p = &e.partition;
                    fixtures += 1;
                    match v_q_hat(&design, &MaskedView::new(&t, p), p, g, q) {
                        Err(Error::SapViolation(_)) => refusals += 1,
                        _ => ok = false,
                    }
                }
            }
        }
    }
    out.record(
        8,
        "unicluster admits no Q",
        ok && refusals == fixtures,
        format!("minimax reports none admissible; V_Q hat refused {refusals}/{fixtures} (Q, contrast, assignment) fixtures"),
    );
}

// Criterion 9 ---------------------------------------------------------------

fn criterion_9(out: &mut Outcome, battery: &BatteryReport, study: &StudyResult) {
    let b1 = to_stable_json(battery).unwrap();
    let s1 = to_stable_json(study).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let rerun = |pool: &rayon::ThreadPool| {
        pool.install(|| {
            let b = run_battery("grid", C1_SEED).unwrap();
            let s = run_bias_study(&builtin_models(), 100, &DEFAULT_CONTRAST, &DEFAULT_SIZES, 1).unwrap();
            (to_stable_json(&b).unwrap(), to_stable_json(&s).unwrap())
        })
    };
    let (b2, s2) = rerun(&single);
    let (b3, s3) = rerun(&many);
    let same = b1 == b2 && b1 == b3 && s1 == s2 && s1 == s3;
    out.record(
        9,
        "determinism",
        same,
        format!(
            "oracle report ({} bytes) and study ({} bytes) byte-identical across reruns with 1 and 4 threads: {same}",
            b1.len(),
            s1.len()
        ),
    );
}

#[test]
fn acceptance() {
    let mut out = Outcome {
        lines: Vec::new(),
        failed: 0,
    };
    let battery = criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_5(&mut out);
    criterion_6(&mut out);
    let study = criterion_7(&mut out);
    criterion_8(&mut out);
    criterion_9(&mut out, &battery, &study);
    assert_eq!(out.failed, 0, "failing criteria:\n{}", out.lines.join("\n"));
}
