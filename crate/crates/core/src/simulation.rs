//! Monte-Carlo bias study: stratified trivariate normal populations, with the
//! biases `tau' Q_strict tau` and `tau' Q_strat tau` of the two variance
//! estimators computed exactly for each generated population.

use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::{sample, Mechanism};
use crate::error::{Error, Result};
use crate::estimation::{Design, MaskedView};
use crate::population::{unit_contrasts_aligned, Grouping, PotentialOutcomes};
use crate::qframework::{bias, v_q, v_q_hat, QMatrix};
use crate::rng::{stream_id, StreamRng};

pub const DEFAULT_SIZES: [usize; 2] = [30, 20];
pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_CONTRAST: [f64; 3] = [1.0, -2.0, 1.0];

/// Per-stratum trivariate normal with equicorrelated covariance
/// `sigma2_h [(1 - rho_h) I + rho_h J]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratingModel {
    pub name: String,
    pub mu: Vec<[f64; 3]>,
    pub sigma2: Vec<f64>,
    pub rho: Vec<f64>,
}

impl GeneratingModel {
    pub fn new(name: &str, mu: Vec<[f64; 3]>, sigma2: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma2.len() || mu.len() != rho.len() || mu.is_empty() {
            return Err(Error::Parse(format!("model {name}: per-stratum parameter lists differ in length")));
        }
        for (h, (&s, &r)) in sigma2.iter().zip(&rho).enumerate() {
            if !(s > 0.0) || !(-0.5..=1.0).contains(&r) {
                return Err(Error::Parse(format!(
                    "model {name}, stratum {}: covariance is not psd (sigma2 = {s}, rho = {r})",
                    h + 1
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            mu,
            sigma2,
            rho,
        })
    }

    fn key(&self) -> u64 {
        self.name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

pub fn builtin_models() -> Vec<GeneratingModel> {
    let a = [8.0, 7.0, 10.0];
    let b1 = [10.0, 12.0, 14.0];
    let b2 = [8.0, 6.0, 10.0];
    let m = |name, mu: Vec<[f64; 3]>, s: [f64; 2], r: [f64; 2]| {
        GeneratingModel::new(name, mu, s.to_vec(), r.to_vec()).expect("built-in models are valid")
    };
    vec![
        m("I", vec![a, a], [2.0, 2.0], [1.0, 1.0]),
        m("II", vec![b1, b2], [2.0, 3.0], [1.0, 1.0]),
        m("III", vec![b1, b2], [2.0, 3.0], [0.2, 0.9]),
        m("IV", vec![b1, b2], [2.0, 3.0], [0.5, 0.5]),
        m("V", vec![b1, b2], [2.0, 3.0], [0.0, 0.0]),
        m("VI", vec![a, a], [3.0, 3.0], [-0.5, -0.5]),
    ]
}

/// Cholesky factor with negative pivots clamped to zero, so that singular
/// psd matrices (such as `rho = -1/2`) are handled.
fn cholesky3(c: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for j in 0..3 {
        let d = c[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        l[j][j] = d.max(0.0).sqrt();
        for i in j + 1..3 {
            let s = c[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if l[j][j] > 0.0 { s / l[j][j] } else { 0.0 };
        }
    }
    l
}

fn draw_unit(mu: &[f64; 3], sigma2: f64, rho: f64, chol: Option<&[[f64; 3]; 3]>, rng: &mut StreamRng) -> Vec<f64> {
    let e = [rng.normal(), rng.normal(), rng.normal()];
    match chol {
        None => {
            let sigma = sigma2.sqrt();
            let f = rng.normal();
            let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt());
            (0..3).map(|z| mu[z] + sigma * (a * e[z] + b * f)).collect()
        }
        Some(l) => (0..3)
            .map(|z| mu[z] + (0..=z).map(|k| l[z][k] * e[k]).sum::<f64>())
            .collect(),
    }
}

/// Draws one population with strata of the given sizes from `rng`.
pub fn generate_population_with(model: &GeneratingModel, sizes: &[usize], rng: &mut StreamRng) -> Result<PotentialOutcomes<f64>> {
    if sizes.len() != model.mu.len() {
        return Err(Error::Parse(format!(
            "model {} has {} strata, {} sizes given",
            model.name,
            model.mu.len(),
            sizes.len()
        )));
    }
    let mut rows = Vec::with_capacity(sizes.iter().sum());
    for (h, &size) in sizes.iter().enumerate() {
        let (s, r) = (model.sigma2[h], model.rho[h]);
        let chol = (r < 0.0).then(|| {
            let mut c = [[s * r; 3]; 3];
            for (z, row) in c.iter_mut().enumerate() {
                row[z] = s;
            }
            cholesky3(c)
        });
        for _ in 0..size {
            rows.push(draw_unit(&model.mu[h], s, r, chol.as_ref(), rng));
        }
    }
    let labels: Vec<String> = ["1", "2", "3"].iter().map(|s| s.to_string()).collect();
    PotentialOutcomes::new(labels, rows)?.with_strata(Grouping::contiguous(sizes))
}

/// Population `replicate` of `model` under `seed`; independent of every other
/// `(model, replicate)` pair.
pub fn generate_population(model: &GeneratingModel, sizes: &[usize], seed: u64, replicate: u64) -> Result<PotentialOutcomes<f64>> {
    let mut rng = StreamRng::new(seed, stream_id(&[model.key(), replicate]));
    generate_population_with(model, sizes, &mut rng)
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub bias_strict: Vec<f64>,
    pub bias_strat: Vec<f64>,
    pub quantiles_strict: Quantiles,
    pub quantiles_strat: Quantiles,
    /// Median over replicates of `bias_strat / bias_strict`; replicates with
    /// a vanishing denominator are left out, and `None` means all were.
    pub median_ratio: Option<f64>,
    pub n_ratios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub seed: u64,
    pub reps: usize,
    pub sizes: Vec<usize>,
    pub contrast: Vec<f64>,
    pub models: Vec<ModelSummary>,
}

/// Denominators below this are treated as zero when forming ratios.
pub const RATIO_FLOOR: f64 = 1e-9;

pub fn run_bias_study(models: &[GeneratingModel], reps: usize, g: &[f64], sizes: &[usize], seed: u64) -> Result<StudyResult> {
    if reps == 0 {
        return Err(Error::Parse("reps must be positive".into()));
    }
    if g.len() != 3 {
        return Err(Error::InvalidContrast(format!("contrast must have 3 coefficients, got {}", g.len())));
    }
    let n: usize = sizes.iter().sum();
    let q_strict = QMatrix::<f64>::strict(n)?;
    let q_strat = QMatrix::<f64>::strat(sizes)?;
    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..reps).map(move |r| (m, r))).collect();
    let biases: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let table = generate_population(&models[m], sizes, seed, r as u64)?;
            let tau = unit_contrasts_aligned(&table, g);
            Ok((bias(&q_strict, &tau)?, bias(&q_strat, &tau)?))
        })
        .collect::<Result<_>>()?;
    let summaries = models
        .iter()
        .enumerate()
        .map(|(m, model)| {
            let chunk = &biases[m * reps..(m + 1) * reps];
            let strict: Vec<f64> = chunk.iter().map(|b| b.0).collect();
            let strat: Vec<f64> = chunk.iter().map(|b| b.1).collect();
            let ratios: Vec<f64> = chunk
                .iter()
                .filter(|b| b.0 > RATIO_FLOOR)
                .map(|b| b.1 / b.0)
                .collect();
            ModelSummary {
                model: model.name.clone(),
                quantiles_strict: Quantiles::of(&strict),
                quantiles_strat: Quantiles::of(&strat),
                median_ratio: (!ratios.is_empty()).then(|| Quantiles::of(&ratios).median),
                n_ratios: ratios.len(),
                bias_strict: strict,
                bias_strat: strat,
            }
        })
        .collect();
    Ok(StudyResult {
        seed,
        reps,
        sizes: sizes.to_vec(),
        contrast: g.to_vec(),
        models: summaries,
    })
}

/// Long-format rows `model,q,replicate,bias`.
pub fn export_boxplot_data<W: std::io::Write>(result: &StudyResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["model", "q", "replicate", "bias"]).map_err(io)?;
    for m in &result.models {
        for (q, values) in [("strict", &m.bias_strict), ("strat", &m.bias_strat)] {
            for (r, b) in values.iter().enumerate() {
                w.write_record([m.model.as_str(), q, &(r + 1).to_string(), &crate::report::format_f64(*b)])
                    .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Monte-Carlo check of the variance estimators on one generated population:
/// assignments are drawn from a stratified design and the estimators averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndToEnd {
    pub model: String,
    pub draws: usize,
    pub var: f64,
    pub v_q_strict: f64,
    pub v_q_strat: f64,
    pub mean_v_hat_strict: f64,
    pub mean_v_hat_strat: f64,
    pub mean_tau_hat: f64,
    pub tau_bar: f64,
}

pub fn end_to_end(
    model: &GeneratingModel,
    sizes: &[usize],
    counts: Vec<Vec<usize>>,
    g: &[f64],
    seed: u64,
    draws: usize,
) -> Result<EndToEnd> {
    let table = generate_population(model, sizes, seed, 0)?;
    let strata = Grouping::contiguous(sizes);
    let design = Design::horvitz_thompson(Mechanism::stratified(strata, counts)?)?;
    let n: usize = sizes.iter().sum();
    let q_strict = QMatrix::strict(n)?;
    let q_strat = QMatrix::strat(sizes)?;
    let per_draw: Vec<(f64, f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = StreamRng::new(seed, stream_id(&[model.key(), u64::MAX, d as u64]));
            let p = sample(design.mechanism(), &mut rng);
            let view = MaskedView::new(&table, &p);
            Ok((
                design.contrast_estimate(&view, &p, g)?,
                v_q_hat(&design, &view, &p, g, &q_strict)?,
                v_q_hat(&design, &view, &p, g, &q_strat)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| per_draw.iter().map(f).sum::<f64>() / draws as f64;
    let tau = unit_contrasts_aligned(&table, g);
    Ok(EndToEnd {
        model: model.name.clone(),
        draws,
        var: design.sampling_variance(&table, g),
        v_q_strict: v_q(&design, &table, g, &q_strict)?,
        v_q_strat: v_q(&design, &table, g, &q_strat)?,
        mean_tau_hat: mean(|x| x.0),
        mean_v_hat_strict: mean(|x| x.1),
        mean_v_hat_strat: mean(|x| x.2),
        tau_bar: tau.iter().sum::<f64>() / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parameters() {
        let m = builtin_models();
        assert_eq!(m.len(), 6);
        assert_eq!(m[0].mu, vec![[8.0, 7.0, 10.0]; 2]);
        assert_eq!(m[3].rho, vec![0.5, 0.5]);
        assert_eq!(m[3].sigma2, vec![2.0, 3.0]);
        assert_eq!(m[5].rho, vec![-0.5, -0.5]);
        assert_eq!(m[5].sigma2, vec![3.0, 3.0]);
    }

    #[test]
    fn non_psd_models_are_rejected() {
        assert!(GeneratingModel::new("x", vec![[0.0; 3]], vec![1.0], vec![-0.6]).is_err());
        assert!(GeneratingModel::new("x", vec![[0.0; 3]], vec![0.0], vec![0.1]).is_err());
    }

    #[test]
    fn rank_one_model_is_stratum_additive() {
        let m = &builtin_models()[1];
        let t = generate_population(m, &DEFAULT_SIZES, 3, 0).unwrap();
        for i in 0..50 {
            let h = usize::from(i >= 30);
            for z in 0..3 {
                let d = t.y(i, z) - t.y(i, 0) - (m.mu[h][z] - m.mu[h][0]);
                assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_reproduces_boundary_covariance() {
        let c = [[3.0, -1.5, -1.5], [-1.5, 3.0, -1.5], [-1.5, -1.5, 3.0]];
        let l = cholesky3(c);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - c[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 1.75, 2.5, 3.25, 4.0));
    }

    #[test]
    fn model_two_strict_bias_is_fixed() {
        let r = run_bias_study(&builtin_models()[1..2], 5, &DEFAULT_CONTRAST, &DEFAULT_SIZES, 1).unwrap();
        for b in &r.models[0].bias_strict {
            assert!((b - 432.0 / 2450.0).abs() < 1e-9);
        }
        assert!(r.models[0].bias_strat.iter().all(|b| b.abs() < 1e-9));
    }
}
