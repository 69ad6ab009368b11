//! Run configuration: TOML, or JSON when the file ends in `.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use finpop::assignment::{parse_ratio, Mechanism, Partition};
use finpop::linalg::Matrix;
use finpop::population::{read_population_csv, FactorialStructure, Grouping};
use finpop::{Contrast, PotentialOutcomes, QMatrix};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Science table CSV, relative to the config file.
    pub population: Option<PathBuf>,
    /// Treatment labels; required when no population file is given.
    pub treatments: Option<Vec<String>>,
    pub mechanism: MechanismSpec,
    pub contrast: Option<ContrastSpec>,
    pub q: Option<String>,
    pub q_file: Option<PathBuf>,
    pub tol_ga: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MechanismSpec {
    #[serde(alias = "cr")]
    CompletelyRandomized { counts: BTreeMap<String, usize> },
    Stratified {
        counts: BTreeMap<String, BTreeMap<String, usize>>,
    },
    SplitPlot {
        whole_counts: Vec<usize>,
        sub_counts: Vec<usize>,
        /// Used when the population has no `wholeplot` column.
        plot_size: Option<usize>,
    },
    Unicluster {},
    Custom { support: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ContrastSpec {
    Coefficients { g: BTreeMap<String, f64> },
    Factorial {
        levels: Vec<usize>,
        effect: Vec<u8>,
        vectors: Option<Vec<Vec<f64>>>,
    },
}

/// Units, treatments and group labels: everything a mechanism needs.
#[derive(Debug, Clone)]
pub struct Layout {
    pub units: Vec<String>,
    pub treatments: Vec<String>,
    pub strata: Option<Grouping>,
    pub wholeplots: Option<Grouping>,
    pub clusters: Option<Grouping>,
}

impl Layout {
    pub fn of_table(t: &PotentialOutcomes<f64>) -> Self {
        Self {
            units: t.units().to_vec(),
            treatments: t.treatments().to_vec(),
            strata: t.strata().cloned(),
            wholeplots: t.wholeplots().cloned(),
            clusters: t.clusters().cloned(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
    };
    cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

impl RunConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn table(&self) -> Result<PotentialOutcomes<f64>, CliError> {
        let p = self
            .population
            .as_ref()
            .ok_or_else(|| config_err("`population` is required for this command"))?;
        Ok(read_population_csv(&self.resolve(p))?)
    }

    /// `--out` if given, else `<output>/<command>.json` when the config names
    /// an output directory.
    pub fn out_path(&self, flag: Option<&Path>, command: &str) -> Result<Option<PathBuf>, CliError> {
        if let Some(p) = flag {
            return Ok(Some(p.to_path_buf()));
        }
        let Some(dir) = &self.output else { return Ok(None) };
        let dir = self.resolve(dir);
        std::fs::create_dir_all(&dir).map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
        Ok(Some(dir.join(format!("{command}.json"))))
    }

    pub fn tol_ga(&self, flag: Option<f64>) -> f64 {
        flag.or(self.tol_ga).unwrap_or(finpop::qframework::DEFAULT_GA_TOL)
    }

    pub fn mechanism(&self, layout: &Layout) -> Result<Mechanism, CliError> {
        let k = layout.treatments.len();
        let n = layout.units.len();
        let arm_counts = |what: &str, map: &BTreeMap<String, usize>| -> Result<Vec<usize>, CliError> {
            for key in map.keys() {
                if !layout.treatments.contains(key) {
                    return Err(config_err(format!("mechanism.{what}: unknown treatment `{key}`")));
                }
            }
            layout
                .treatments
                .iter()
                .map(|t| {
                    map.get(t)
                        .copied()
                        .ok_or_else(|| config_err(format!("mechanism.{what}: no count for treatment `{t}`")))
                })
                .collect()
        };
        let mech = match &self.mechanism {
            MechanismSpec::CompletelyRandomized { counts } => {
                let c = arm_counts("counts", counts)?;
                if c.iter().sum::<usize>() != n {
                    return Err(config_err(format!("mechanism.counts sum to {}, population has {n} units", c.iter().sum::<usize>())));
                }
                Mechanism::completely_randomized(c)?
            }
            MechanismSpec::Stratified { counts } => {
                let strata = layout
                    .strata
                    .clone()
                    .ok_or_else(|| config_err("stratified mechanism needs a `stratum` column in the population"))?;
                for key in counts.keys() {
                    if !strata.labels.contains(key) {
                        return Err(config_err(format!("mechanism.counts: unknown stratum `{key}`")));
                    }
                }
                let per = strata
                    .labels
                    .iter()
                    .map(|h| {
                        let m = counts
                            .get(h)
                            .ok_or_else(|| config_err(format!("mechanism.counts: no counts for stratum `{h}`")))?;
                        arm_counts(&format!("counts.{h}"), m)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Mechanism::stratified(strata, per)?
            }
            MechanismSpec::SplitPlot {
                whole_counts,
                sub_counts,
                plot_size,
            } => {
                if whole_counts.len() * sub_counts.len() != k {
                    return Err(config_err(format!(
                        "split-plot with {}x{} levels needs {} treatments, population has {k}",
                        whole_counts.len(),
                        sub_counts.len(),
                        whole_counts.len() * sub_counts.len()
                    )));
                }
                let plots = match (&layout.wholeplots, plot_size) {
                    (Some(w), _) => w.clone(),
                    (None, Some(s)) if *s > 0 && n % s == 0 => Grouping::contiguous(&vec![*s; n / s]),
                    _ => return Err(config_err("split-plot needs a `wholeplot` column or a `plot_size` dividing N")),
                };
                let k2 = sub_counts.len();
                let arm = (0..whole_counts.len())
                    .map(|z1| (0..k2).map(|z2| z1 * k2 + z2).collect())
                    .collect();
                Mechanism::split_plot_with(plots, whole_counts.clone(), sub_counts.clone(), arm)?
            }
            MechanismSpec::Unicluster {} => {
                let c = layout
                    .clusters
                    .clone()
                    .ok_or_else(|| config_err("unicluster mechanism needs a `cluster` column in the population"))?;
                if c.n_groups() != k {
                    return Err(config_err(format!("{} clusters for {k} treatments", c.n_groups())));
                }
                Mechanism::unicluster(c)?
            }
            MechanismSpec::Custom { support } => read_support(&self.resolve(support), layout)?,
        };
        Ok(mech)
    }

    pub fn contrast(&self, treatments: &[String]) -> Result<Vec<f64>, CliError> {
        let spec = self
            .contrast
            .as_ref()
            .ok_or_else(|| config_err("a `contrast` block is required for this command"))?;
        let c = spec.build()?;
        Ok(c.aligned(treatments)?)
    }

    /// `flag` overrides the config; `minimax` asks the mechanism.
    pub fn q_matrix(&self, choice: Option<&str>, q_file: Option<&Path>, mech: &Mechanism) -> Result<(String, QMatrix<f64>), CliError> {
        let name = choice.or(self.q.as_deref()).unwrap_or("minimax");
        let n = mech.n_units();
        let q = match name {
            "strict" => QMatrix::strict(n)?,
            "strat" => match mech {
                Mechanism::Stratified { strata, .. } => QMatrix::strat_grouped(strata)?,
                _ => return Err(config_err("q = strat needs a stratified mechanism")),
            },
            "wholeplot" => match mech {
                Mechanism::SplitPlot(sp) => QMatrix::wholeplot_grouped(&sp.wholeplots)?,
                _ => return Err(config_err("q = wholeplot needs a split-plot mechanism")),
            },
            "half" => QMatrix::half(n)?,
            "file" => {
                let p = q_file
                    .map(Path::to_path_buf)
                    .or_else(|| self.q_file.as_ref().map(|p| self.resolve(p)))
                    .ok_or_else(|| config_err("q = file needs `q_file`"))?;
                read_q(&p)?
            }
            "minimax" => {
                let choice = finpop::qframework::minimax_q(mech);
                return Ok((format!("minimax:{}", choice.name()), choice.matrix(mech)?));
            }
            other => return Err(config_err(format!("unknown q `{other}` (strict, strat, wholeplot, half, file, minimax)"))),
        };
        Ok((name.to_string(), q))
    }
}

impl ContrastSpec {
    pub fn build(&self) -> Result<Contrast<f64>, CliError> {
        match self {
            Self::Coefficients { g } => Ok(Contrast::new(g.iter().map(|(k, v)| (k.clone(), *v)).collect())?),
            Self::Factorial { levels, effect, vectors } => {
                if effect.iter().any(|&x| x > 1) {
                    return Err(config_err("contrast.effect entries must be 0 or 1"));
                }
                let mut fs = FactorialStructure::new(levels.clone(), effect.iter().map(|&x| x == 1).collect());
                if let Some(v) = vectors {
                    fs = fs.with_vectors(v.clone());
                }
                Ok(fs.contrast()?)
            }
        }
    }
}

/// Custom support: one row per partition with a column per unit id holding
/// the treatment label, then `probability` as `num/den`.
pub fn read_support(path: &Path, layout: &Layout) -> Result<Mechanism, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.last().map(String::as_str) != Some("probability") {
        return Err(config_err(format!("{}: last column must be `probability`", path.display())));
    }
    let cols: Vec<usize> = layout
        .units
        .iter()
        .map(|u| {
            header
                .iter()
                .position(|h| h == u)
                .ok_or_else(|| config_err(format!("{}: no column for unit `{u}`", path.display())))
        })
        .collect::<Result<_, _>>()?;
    if header.len() != layout.units.len() + 1 {
        return Err(config_err(format!("{}: expected one column per unit plus `probability`", path.display())));
    }
    let k = layout.treatments.len();
    let mut entries = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let at = |msg: String| config_err(format!("{}, row {}: {msg}", path.display(), line + 2));
        let rec = rec.map_err(|e| at(e.to_string()))?;
        let arms = cols
            .iter()
            .map(|&c| {
                layout
                    .treatments
                    .iter()
                    .position(|t| t == &rec[c])
                    .ok_or_else(|| at(format!("unknown treatment `{}`", &rec[c])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p = parse_ratio(&rec[header.len() - 1]).map_err(|e| at(e.to_string()))?;
        entries.push((Partition::new(arms, k).map_err(|e| at(e.to_string()))?, p));
    }
    Ok(Mechanism::custom(layout.units.len(), k, entries)?)
}

/// Headerless square CSV of numbers.
pub fn read_q(path: &Path) -> Result<QMatrix<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| config_err(format!("{}, row {}: {e}", path.display(), line + 1)))?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| config_err(format!("{}, row {}: `{v}` is not a number", path.display(), line + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let m = Matrix::from_rows(&rows).ok_or_else(|| config_err(format!("{}: ragged rows", path.display())))?;
    Ok(QMatrix::new(m)?)
}

/// Observed data: `unit`, optional group columns, `treatment`, `y`.
pub struct ObservedData {
    pub layout: Layout,
    pub partition: Partition,
    pub y: Vec<f64>,
}

pub fn read_observed(path: &Path, treatments: &[String]) -> Result<ObservedData, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(cu), Some(ct), Some(cy)) = (col("unit"), col("treatment"), col("y")) else {
        return Err(config_err(format!("{}: need columns `unit`, `treatment`, `y`", path.display())));
    };
    let mut units = Vec::new();
    let mut arms = Vec::new();
    let mut y = Vec::new();
    let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let at = |msg: String| config_err(format!("{}, row {}: {msg}", path.display(), line + 2));
        let rec = rec.map_err(|e| at(e.to_string()))?;
        let u = rec[cu].to_string();
        if units.contains(&u) {
            return Err(at(format!("unit `{u}` observed twice")));
        }
        units.push(u);
        arms.push(
            treatments
                .iter()
                .position(|t| t == &rec[ct])
                .ok_or_else(|| at(format!("unknown treatment `{}`", &rec[ct])))?,
        );
        y.push(rec[cy].parse::<f64>().map_err(|_| at(format!("`{}` is not a number", &rec[cy])))?);
        for g in ["stratum", "wholeplot", "cluster"] {
            if let Some(c) = col(g) {
                groups.entry(g).or_default().push(rec[c].to_string());
            }
        }
    }
    let partition =
        Partition::new(arms, treatments.len()).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let grouping = |g: &str| groups.get(g).map(|v| Grouping::from_labels(v));
    Ok(ObservedData {
        layout: Layout {
            units,
            treatments: treatments.to_vec(),
            strata: grouping("stratum"),
            wholeplots: grouping("wholeplot"),
            clusters: grouping("cluster"),
        },
        partition,
        y,
    })
}
