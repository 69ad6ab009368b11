use std::path::Path;

use finpop::assignment::{sample_seeded, support_size, Mechanism, Partition};
use finpop::estimation::{neyman_two_arm_variance, Lue, MaskedView, Observed};
use finpop::oracle::{run_cases, run_battery, Case};
use finpop::population::{unit_contrasts_aligned, FactorialStructure};
use finpop::qframework::{
    bias_table_row, ga_condition, minimax_q, sap_sufficient, sap_violation, v_q_hat, variance_report, GaReport,
    SapWitness,
};
use finpop::report::to_stable_json;
use finpop::simulation::{builtin_models, end_to_end, export_boxplot_data, run_bias_study};
use finpop::{BigRational, Contrast, Design, PotentialOutcomes, QMatrix};
use serde_json::{json, Map, Value};

use crate::config::{self, Layout, RunConfig};
use crate::{emit, CliError};

fn stable(v: &Value) -> Result<String, CliError> {
    Ok(to_stable_json(v)?)
}

fn design_for(cfg: &RunConfig, layout: &Layout) -> Result<Design<f64>, CliError> {
    Ok(Design::horvitz_thompson(cfg.mechanism(layout)?)?)
}

fn labelled(values: &[f64], labels: &[String]) -> Value {
    Value::Object(labels.iter().cloned().zip(values.iter().map(|&v| json!(v))).collect::<Map<_, _>>())
}

fn witness_json(w: &SapWitness, layout: &Layout) -> Value {
    json!({
        "unit": layout.units[w.unit],
        "other_unit": layout.units[w.other_unit],
        "treatment": layout.treatments[w.treatment],
        "other_treatment": layout.treatments[w.other_treatment],
        "coefficient": w.coefficient,
    })
}

fn ga_json(ga: &GaReport, treatments: &[String]) -> Value {
    json!({
        "ok": ga.ok,
        "max_residual": ga.max_residual,
        "worst_pair": [treatments[ga.worst_pair.0], treatments[ga.worst_pair.1]],
    })
}

fn mechanism_json(mech: &Mechanism) -> Value {
    json!({
        "kind": mech.kind(),
        "n_units": mech.n_units(),
        "n_treatments": mech.n_treatments(),
        "point_estimate_only": mech.point_estimate_only(),
        "support_size": support_size(mech).to_string(),
    })
}

pub fn probs(config: &Path, max_units: usize, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = config::load(config)?;
    let out = cfg.out_path(out, "probs")?;
    let out = out.as_deref();
    let table = cfg.table()?;
    let layout = Layout::of_table(&table);
    let mech = cfg.mechanism(&layout)?;
    let (n, k) = (mech.n_units(), mech.n_treatments());
    let cell = |p: BigRational| json!({"exact": p.to_string(), "value": finpop::scalar::ratio_to_f64(&p)});
    let mut first = Vec::new();
    for i in 0..n {
        for z in 0..k {
            let mut e = cell(mech.first_order(i, z));
            e["unit"] = json!(layout.units[i]);
            e["treatment"] = json!(layout.treatments[z]);
            first.push(e);
        }
    }
    let units: Vec<usize> = if n <= max_units.max(2) {
        (0..n).collect()
    } else {
        (0..max_units).map(|s| s * (n - 1) / (max_units - 1)).collect()
    };
    let mut second = Vec::new();
    for (a, &i) in units.iter().enumerate() {
        for &j in &units[a + 1..] {
            for z in 0..k {
                for zs in 0..k {
                    let mut e = cell(mech.second_order(i, j, z, zs));
                    e["unit"] = json!(layout.units[i]);
                    e["other_unit"] = json!(layout.units[j]);
                    e["treatment"] = json!(layout.treatments[z]);
                    e["other_treatment"] = json!(layout.treatments[zs]);
                    second.push(e);
                }
            }
        }
    }
    let zeros: Vec<Value> = mech
        .first_order_zeros()
        .into_iter()
        .map(|(i, z)| json!([layout.units[i], layout.treatments[z]]))
        .collect();
    let v = json!({
        "mechanism": mechanism_json(&mech),
        "first_order": first,
        "first_order_zeros": zeros,
        "second_order_units": units.iter().map(|&i| layout.units[i].clone()).collect::<Vec<_>>(),
        "second_order": second,
        "all_second_order_positive": mech.all_second_order_positive(),
    });
    emit(&stable(&v)?, out)
}

fn partition_json(p: &Partition, layout: &Layout) -> Value {
    Value::Object(
        layout
            .units
            .iter()
            .zip(p.arms())
            .map(|(u, &z)| (u.clone(), json!(layout.treatments[z])))
            .collect(),
    )
}

pub fn assign(config: &Path, seed: u64, csv_out: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = config::load(config)?;
    let out = cfg.out_path(out, "assign")?;
    let out = out.as_deref();
    let table = cfg.table()?;
    let layout = Layout::of_table(&table);
    let mech = cfg.mechanism(&layout)?;
    let p = sample_seeded(&mech, seed);
    if let Some(path) = csv_out {
        write_partition(path, &p, &layout)?;
    }
    let v = json!({
        "seed": seed,
        "mechanism": mech.kind(),
        "encoding": p.encode(),
        "assignment": partition_json(&p, &layout),
        "group_sizes": Value::Object(layout.treatments.iter().cloned().zip(p.group_sizes().iter().map(|&s| json!(s))).collect::<Map<_, _>>()),
    });
    emit(&stable(&v)?, out)
}

fn write_partition(path: &Path, p: &Partition, layout: &Layout) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["unit", "treatment"]).map_err(io)?;
    for (u, &z) in layout.units.iter().zip(p.arms()) {
        w.write_record([u.as_str(), layout.treatments[z].as_str()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Config(e.to_string()))
}

fn read_partition(path: &Path, layout: &Layout) -> Result<Partition, CliError> {
    let err = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut arm = vec![None; layout.units.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() < 2 {
            return Err(err("expected `unit,treatment` rows".into()));
        }
        let i = layout
            .units
            .iter()
            .position(|u| u == &rec[0])
            .ok_or_else(|| err(format!("unknown unit `{}`", &rec[0])))?;
        let z = layout
            .treatments
            .iter()
            .position(|t| t == &rec[1])
            .ok_or_else(|| err(format!("unknown treatment `{}`", &rec[1])))?;
        if arm[i].replace(z).is_some() {
            return Err(err(format!("unit `{}` assigned twice", &rec[0])));
        }
    }
    let arms = arm
        .iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| err(format!("unit `{}` not assigned", layout.units[i]))))
        .collect::<Result<Vec<_>, _>>()?;
    Partition::new(arms, layout.treatments.len()).map_err(|e| err(e.to_string()))
}

pub fn analyze(
    config: &Path,
    observed: &Path,
    q: Option<&str>,
    q_file: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = config::load(config)?;
    let out = cfg.out_path(out, "analyze")?;
    let out = out.as_deref();
    let table = cfg.population.as_ref().map(|_| cfg.table()).transpose()?;
    let treatments = match (&table, &cfg.treatments) {
        (Some(t), _) => t.treatments().to_vec(),
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(CliError::Config("give `population` or `treatments` in the config".into())),
    };
    let data = config::read_observed(observed, &treatments)?;
    let (layout, partition, y) = match &table {
        None => (data.layout, data.partition, data.y),
        Some(t) => {
            let layout = Layout::of_table(t);
            for u in &data.layout.units {
                if t.unit_index(u).is_none() {
                    return Err(CliError::Config(format!("observed unit `{u}` is not in the population")));
                }
            }
            let mut arms = Vec::with_capacity(layout.units.len());
            let mut ys = Vec::with_capacity(layout.units.len());
            for u in &layout.units {
                let r = data
                    .layout
                    .units
                    .iter()
                    .position(|v| v == u)
                    .ok_or_else(|| CliError::Config(format!("no observation for unit `{u}`")))?;
                arms.push(data.partition.arm(r));
                ys.push(data.y[r]);
            }
            let p = Partition::new(arms, treatments.len())?;
            (layout, p, ys)
        }
    };
    let design = design_for(&cfg, &layout)?;
    let g = cfg.contrast(&treatments)?;
    let (qname, qm) = cfg.q_matrix(q, q_file, design.mechanism())?;
    let obs = Observed::new(partition.clone(), y)?;
    let means = design.mean_estimates(&obs, &partition)?;
    let tau_hat: f64 = g.iter().zip(&means).map(|(a, b)| a * b).sum();
    let mut v = json!({
        "mechanism": mechanism_json(design.mechanism()),
        "q": qname,
        "contrast": labelled(&g, &treatments),
        "mean_estimates": labelled(&means, &treatments),
        "tau_hat": tau_hat,
    });
    if let Some(t) = &table {
        v["ga"] = ga_json(&ga_condition(&qm, t, cfg.tol_ga(None)), &treatments);
    }
    if let Some(w) = sap_violation(&qm, design.probabilities(), &g, &g) {
        v["sap_ok"] = json!(false);
        v["sap_witness"] = witness_json(&w, &layout);
        emit(&stable(&v)?, out)?;
        return Err(CliError::Refused(format!(
            "no unbiased variance estimator with Q = {qname}: units {} and {} never receive ({}, {}) together, \
             yet that pair carries coefficient {:e}",
            layout.units[w.unit],
            layout.units[w.other_unit],
            layout.treatments[w.treatment],
            layout.treatments[w.other_treatment],
            w.coefficient
        )));
    }
    let vh = v_q_hat(&design, &obs, &partition, &g, &qm)?;
    v["sap_ok"] = json!(true);
    v["v_q_hat"] = json!(vh);
    v["standard_error"] = json!(vh.max(0.0).sqrt());
    emit(&stable(&v)?, out)
}

#[allow(clippy::too_many_arguments)]
pub fn check(
    config: &Path,
    q: Option<&str>,
    q_file: Option<&Path>,
    tol_ga: Option<f64>,
    compare: Option<&str>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = config::load(config)?;
    let out = cfg.out_path(out, "check")?;
    let out = out.as_deref();
    let table = cfg.table()?;
    let layout = Layout::of_table(&table);
    let design = design_for(&cfg, &layout)?;
    let g = cfg.contrast(&layout.treatments)?;
    let (qname, qm) = cfg.q_matrix(q, q_file, design.mechanism())?;
    let tol = cfg.tol_ga(tol_ga);
    let seed = seed.or(cfg.seed);
    let partition = seed.map(|s| sample_seeded(design.mechanism(), s));
    let r = variance_report(&design, &table, &g, &qm, partition.as_ref(), tol)?;
    let val = qm.validate();
    let choice = minimax_q(design.mechanism());
    let mut v = json!({
        "mechanism": mechanism_json(design.mechanism()),
        "q": qname,
        "contrast": labelled(&g, &layout.treatments),
        "q_validation": {
            "row_sums_ok": val.row_sums_ok,
            "diagonal_ok": val.diagonal_ok,
            "psd_ok": val.psd_ok,
            "max_row_sum": val.max_row_sum,
            "max_diagonal_deviation": val.max_diagonal_deviation,
            "min_eigenvalue": val.min_eigenvalue,
            "asymmetry": val.asymmetry,
            "lambda_max": qm.lambda_max(),
        },
        "tau_bar": r.tau_bar,
        "var": r.var,
        "v_q": r.v_q,
        "bias": r.bias,
        "ga": ga_json(&r.ga, &layout.treatments),
        "sap_ok": r.sap_ok,
        "sap_witness": r.sap_witness.as_ref().map(|w| witness_json(w, &layout)),
        "sap_sufficient": sap_sufficient(&qm, design.probabilities()),
        "minimax_q": choice.name(),
        "tol_ga": tol,
    });
    if let Some(p) = &partition {
        v["seed"] = json!(seed);
        v["assignment"] = json!(p.encode());
        v["tau_hat"] = json!(r.tau_hat);
        v["v_q_hat"] = json!(r.v_q_hat);
    }
    if let Some(c) = compare {
        let (cname, q_star) = cfg.q_matrix(Some(c), q_file, design.mechanism())?;
        let row = bias_table_row(&table, &g, &q_star, tol)?;
        v["scenario"] = json!({
            "q_star": cname,
            "scenario": row.scenario.name(),
            "ga_strict": row.ga_strict,
            "ga_star": row.ga_star,
            "bias_strict": row.bias_strict,
            "bias_star": row.bias_star,
        });
    }
    emit(&stable(&v)?, out)
}

fn candidate_qs(mech: &Mechanism) -> Result<Vec<(String, QMatrix<f64>)>, CliError> {
    let n = mech.n_units();
    let mut qs = vec![("strict".to_string(), QMatrix::strict(n)?)];
    match mech {
        Mechanism::Stratified { strata, .. } => qs.push(("strat".into(), QMatrix::strat_grouped(strata)?)),
        Mechanism::SplitPlot(sp) => qs.push(("wholeplot".into(), QMatrix::wholeplot_grouped(&sp.wholeplots)?)),
        _ => {}
    }
    if n % 2 == 0 {
        qs.push(("half".into(), QMatrix::half(n)?));
    }
    Ok(qs)
}

pub fn oracle(battery: Option<&str>, config: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let report = match (battery, config) {
        (_, Some(path)) => {
            let cfg = config::load(path)?;
            let table = cfg.table()?;
            let layout = Layout::of_table(&table);
            let mech = cfg.mechanism(&layout)?;
            let g = cfg.contrast(&layout.treatments)?;
            let case = Case {
                label: path.display().to_string(),
                qs: candidate_qs(&mech)?,
                mech,
                lue: Lue::HorvitzThompson,
                tables: vec![("population".into(), table)],
                contrasts: vec![("contrast".into(), g)],
            };
            run_cases("config", seed, &[case])?
        }
        (name, None) => run_battery(name.unwrap_or("grid"), seed)?,
    };
    emit(&stable(&serde_json::to_value(&report).map_err(|e| CliError::Config(e.to_string()))?)?, out)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::OracleFailed(format!("{} of {} checks failed", report.n_failed, report.n_checks)))
    }
}

fn even_split(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|z| n / k + usize::from(z < n % k)).collect()
}

pub fn simulate(
    models: &[String],
    reps: usize,
    seed: u64,
    sizes: &[usize],
    contrast: &[f64],
    e2e: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let all = builtin_models();
    let chosen = models
        .iter()
        .map(|m| {
            all.iter()
                .find(|b| b.name == m.trim())
                .cloned()
                .ok_or_else(|| CliError::Config(format!("unknown model `{m}` (I, II, III, IV, V, VI)")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    let result = run_bias_study(&chosen, reps, contrast, sizes, seed)?;
    let study = out.join("study.json");
    std::fs::write(&study, to_stable_json(&result)?).map_err(|e| CliError::Config(e.to_string()))?;
    let boxplot = out.join("boxplot.csv");
    let f = std::fs::File::create(&boxplot).map_err(|e| CliError::Config(e.to_string()))?;
    export_boxplot_data(&result, f)?;
    let mut summary = json!({
        "study": study.display().to_string(),
        "boxplot": boxplot.display().to_string(),
        "medians": result.models.iter().map(|m| json!({
            "model": m.model,
            "median_bias_strict": m.quantiles_strict.median,
            "median_bias_strat": m.quantiles_strat.median,
            "median_ratio": m.median_ratio,
        })).collect::<Vec<_>>(),
    });
    if let Some(draws) = e2e {
        let counts: Vec<Vec<usize>> = sizes.iter().map(|&s| even_split(s, contrast.len())).collect();
        let runs = chosen
            .iter()
            .map(|m| end_to_end(m, sizes, counts.clone(), contrast, seed, draws))
            .collect::<finpop::Result<Vec<_>>>()?;
        let path = out.join("end_to_end.json");
        std::fs::write(&path, to_stable_json(&runs)?).map_err(|e| CliError::Config(e.to_string()))?;
        summary["end_to_end"] = json!(path.display().to_string());
    }
    emit(&stable(&summary)?, None)
}

pub fn factorial(levels: &[usize], effect: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    if effect.iter().any(|&x| x > 1) {
        return Err(CliError::Config("--effect entries must be 0 or 1".into()));
    }
    let fs = FactorialStructure::<f64>::new(levels.to_vec(), effect.iter().map(|&x| x == 1).collect());
    let c = fs.contrast()?;
    let labels = fs.treatment_labels();
    let g = c.aligned(&labels)?;
    let v = json!({
        "levels": levels,
        "effect": effect,
        "treatments": labels,
        "g": g,
    });
    emit(&stable(&v)?, out)
}

pub fn estimate(config: &Path, seed: Option<u64>, partition: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = config::load(config)?;
    let out = cfg.out_path(out, "estimate")?;
    let out = out.as_deref();
    let table = cfg.table()?;
    let layout = Layout::of_table(&table);
    let design = design_for(&cfg, &layout)?;
    let g = cfg.contrast(&layout.treatments)?;
    let p = match (partition, seed) {
        (Some(path), _) => read_partition(path, &layout)?,
        (None, Some(s)) => sample_seeded(design.mechanism(), s),
        (None, None) => return Err(CliError::Config("give --seed or --partition".into())),
    };
    let view = MaskedView::new(&table, &p);
    let means = design.mean_estimates(&view, &p)?;
    let tau_hat = design.contrast_estimate(&view, &p, &g)?;
    let v = json!({
        "seed": seed,
        "assignment": p.encode(),
        "mean_estimates": labelled(&means, &layout.treatments),
        "treatment_means": labelled(&finpop::population::treatment_means(&table), &layout.treatments),
        "tau_hat": tau_hat,
        "tau_bar": tau_bar(&table, &g),
    });
    emit(&stable(&v)?, out)
}

fn tau_bar(table: &PotentialOutcomes<f64>, g: &[f64]) -> f64 {
    let tau = unit_contrasts_aligned(table, g);
    tau.iter().sum::<f64>() / tau.len() as f64
}

pub fn variance(config: &Path, with: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = config::load(config)?;
    let out = cfg.out_path(out, "variance")?;
    let out = out.as_deref();
    let table = cfg.table()?;
    let layout = Layout::of_table(&table);
    let design = design_for(&cfg, &layout)?;
    let g = cfg.contrast(&layout.treatments)?;
    let mut v = json!({
        "mechanism": mechanism_json(design.mechanism()),
        "contrast": labelled(&g, &layout.treatments),
        "tau_bar": tau_bar(&table, &g),
        "var": design.sampling_variance(&table, &g),
        "var_pairwise": design.sampling_variance_pairwise(&table, &g),
    });
    if let Mechanism::CompletelyRandomized { counts } = design.mechanism() {
        if counts.len() == 2 {
            let d = neyman_two_arm_variance(&table, counts[0], counts[1])?;
            v["neyman"] = json!({"s00": d.s00, "s11": d.s11, "s_tau": d.s_tau, "variance": d.variance});
        }
    }
    if let Some(spec) = with {
        let terms = spec
            .split(',')
            .map(|t| {
                let (l, c) = t
                    .split_once('=')
                    .ok_or_else(|| CliError::Config(format!("--with: `{t}` is not label=coef")))?;
                let c: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("--with: `{c}` is not a number")))?;
                Ok((l.trim().to_string(), c))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let g2 = Contrast::new(terms)?.aligned(&layout.treatments)?;
        v["contrast2"] = labelled(&g2, &layout.treatments);
        v["var2"] = json!(design.sampling_variance(&table, &g2));
        v["covariance"] = json!(design.sampling_covariance(&table, &g, &g2));
    }
    emit(&stable(&v)?, out)
}
