//! Science tables of potential outcomes, treatment contrasts and the
//! population-level estimands built from them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Read access to potential outcomes.
///
/// Estimators are written against this trait so that observed-data paths can
/// be handed a masked view (see [`crate::estimation::MaskedView`]) that only
/// exposes the cells revealed by the realized assignment.
pub trait OutcomeView<T> {
    fn n_units(&self) -> usize;
    fn n_treatments(&self) -> usize;
    fn outcome(&self, unit: usize, treatment: usize) -> T;
}

/// Optional grouping labels attached to the units of a table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grouping {
    /// Distinct labels in order of first appearance.
    pub labels: Vec<String>,
    /// Index into `labels` for every unit.
    pub of_unit: Vec<usize>,
}

impl Grouping {
    pub fn from_labels<S: AsRef<str>>(raw: &[S]) -> Self {
        let mut labels: Vec<String> = Vec::new();
        let mut index = BTreeMap::new();
        let of_unit = raw
            .iter()
            .map(|s| {
                let s = s.as_ref();
                *index.entry(s.to_string()).or_insert_with(|| {
                    labels.push(s.to_string());
                    labels.len() - 1
                })
            })
            .collect();
        Self { labels, of_unit }
    }

    /// Contiguous groups of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Self {
        let labels = (1..=sizes.len()).map(|h| h.to_string()).collect();
        let of_unit = sizes
            .iter()
            .enumerate()
            .flat_map(|(h, &n)| std::iter::repeat(h).take(n))
            .collect();
        Self { labels, of_unit }
    }

    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.labels.len()];
        for &g in &self.of_unit {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.of_unit.len())
            .filter(|&i| self.of_unit[i] == group)
            .collect()
    }
}

/// Full table of potential outcomes `Y_i(z)`: one row per unit, one column per treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes<T> {
    units: Vec<String>,
    treatments: Vec<String>,
    y: Vec<T>,
    strata: Option<Grouping>,
    wholeplots: Option<Grouping>,
    clusters: Option<Grouping>,
}

impl<T: Scalar> PotentialOutcomes<T> {
    /// Builds a table from rows `y[i][z]`, with units labelled `1..=N`.
    pub fn new(treatments: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        let units = (1..=rows.len()).map(|i| i.to_string()).collect();
        Self::with_units(units, treatments, rows)
    }

    pub fn with_units(units: Vec<String>, treatments: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidTable("need at least 2 units".into()));
        }
        if treatments.len() < 2 {
            return Err(Error::InvalidTable("need at least 2 treatments".into()));
        }
        if units.len() != rows.len() {
            return Err(Error::InvalidTable("unit labels do not match row count".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &treatments {
            if !seen.insert(t) {
                return Err(Error::InvalidTable(format!("duplicate treatment label `{t}`")));
            }
        }
        let k = treatments.len();
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::InvalidTable(format!(
                "row {} has {} outcomes, expected {k}",
                i + 1,
                rows[i].len()
            )));
        }
        Ok(Self {
            units,
            treatments,
            y: rows.into_iter().flatten().collect(),
            strata: None,
            wholeplots: None,
            clusters: None,
        })
    }

    /// Convenience constructor with treatment labels `0, 1, ...`.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        Self::new((0..k).map(|z| z.to_string()).collect(), rows)
    }

    /// Builds a table from treatment columns `Y(z)`.
    pub fn from_columns(columns: Vec<Vec<T>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidTable("ragged columns".into()));
        }
        let rows = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        Self::from_rows(rows)
    }

    pub fn with_strata(mut self, strata: Grouping) -> Result<Self> {
        self.check_grouping(&strata, "stratum")?;
        if let Some(h) = strata.sizes().iter().position(|&s| s < 2) {
            return Err(Error::InvalidTable(format!(
                "stratum `{}` has fewer than 2 units",
                strata.labels[h]
            )));
        }
        self.strata = Some(strata);
        Ok(self)
    }

    pub fn with_wholeplots(mut self, plots: Grouping) -> Result<Self> {
        self.check_grouping(&plots, "whole-plot")?;
        let sizes = plots.sizes();
        if sizes.iter().any(|&s| s != sizes[0]) {
            return Err(Error::InvalidTable("whole-plots must all have the same size".into()));
        }
        self.wholeplots = Some(plots);
        Ok(self)
    }

    pub fn with_clusters(mut self, clusters: Grouping) -> Result<Self> {
        self.check_grouping(&clusters, "cluster")?;
        self.clusters = Some(clusters);
        Ok(self)
    }

    fn check_grouping(&self, g: &Grouping, what: &str) -> Result<()> {
        if g.of_unit.len() != self.n_units() {
            return Err(Error::InvalidTable(format!(
                "{what} labels cover {} units, table has {}",
                g.of_unit.len(),
                self.n_units()
            )));
        }
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn strata(&self) -> Option<&Grouping> {
        self.strata.as_ref()
    }

    pub fn wholeplots(&self) -> Option<&Grouping> {
        self.wholeplots.as_ref()
    }

    pub fn clusters(&self) -> Option<&Grouping> {
        self.clusters.as_ref()
    }

    pub fn treatment_index(&self, label: &str) -> Option<usize> {
        self.treatments.iter().position(|t| t == label)
    }

    pub fn unit_index(&self, label: &str) -> Option<usize> {
        self.units.iter().position(|u| u == label)
    }

    #[inline]
    pub fn y(&self, unit: usize, z: usize) -> T {
        self.y[unit * self.treatments.len() + z]
    }

    pub fn row(&self, unit: usize) -> &[T] {
        let k = self.treatments.len();
        &self.y[unit * k..(unit + 1) * k]
    }

    pub fn column(&self, z: usize) -> Vec<T> {
        (0..self.n_units()).map(|i| self.y(i, z)).collect()
    }

    /// Converts the outcome type, keeping labels.
    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> PotentialOutcomes<U> {
        PotentialOutcomes {
            units: self.units.clone(),
            treatments: self.treatments.clone(),
            y: self.y.iter().map(|&v| f(v)).collect(),
            strata: self.strata.clone(),
            wholeplots: self.wholeplots.clone(),
            clusters: self.clusters.clone(),
        }
    }
}

impl<T: Scalar> OutcomeView<T> for PotentialOutcomes<T> {
    fn n_units(&self) -> usize {
        self.units.len()
    }
    fn n_treatments(&self) -> usize {
        self.treatments.len()
    }
    fn outcome(&self, unit: usize, treatment: usize) -> T {
        self.y(unit, treatment)
    }
}

/// Treatment contrast: coefficients `g(z)` that are not all zero and sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast<T> {
    terms: Vec<(String, T)>,
}

impl<T: Scalar> Contrast<T> {
    pub fn new<S: Into<String>>(terms: Vec<(S, T)>) -> Result<Self> {
        let terms: Vec<(String, T)> = terms.into_iter().map(|(s, g)| (s.into(), g)).collect();
        let mut seen = std::collections::BTreeSet::new();
        for (s, _) in &terms {
            if !seen.insert(s.clone()) {
                return Err(Error::InvalidContrast(format!("treatment `{s}` listed twice")));
            }
        }
        if terms.iter().all(|(_, g)| *g == T::zero()) {
            return Err(Error::InvalidContrast("all coefficients are zero".into()));
        }
        let sum: T = terms.iter().map(|(_, g)| *g).sum();
        if sum.abs_val() > T::tol(1e-12) {
            return Err(Error::InvalidContrast(format!(
                "coefficients sum to {:?}, not zero",
                sum
            )));
        }
        Ok(Self { terms })
    }

    /// Coefficients given in the order of `labels`.
    pub fn from_coefficients<S: AsRef<str>>(labels: &[S], g: &[T]) -> Result<Self> {
        if labels.len() != g.len() {
            return Err(Error::InvalidContrast("label/coefficient length mismatch".into()));
        }
        Self::new(
            labels
                .iter()
                .zip(g)
                .map(|(l, &v)| (l.as_ref().to_string(), v))
                .collect(),
        )
    }

    pub fn terms(&self) -> &[(String, T)] {
        &self.terms
    }

    pub fn coefficient(&self, label: &str) -> T {
        self.terms
            .iter()
            .find(|(s, _)| s == label)
            .map_or(T::zero(), |(_, g)| *g)
    }

    /// Coefficient vector aligned with `treatments`; treatments not named get 0.
    pub fn aligned<S: AsRef<str>>(&self, treatments: &[S]) -> Result<Vec<T>> {
        for (s, _) in &self.terms {
            if !treatments.iter().any(|t| t.as_ref() == s) {
                return Err(Error::UnknownTreatment(s.clone()));
            }
        }
        Ok(treatments.iter().map(|t| self.coefficient(t.as_ref())).collect())
    }

    /// `a * self + b * other` over the union of labels.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        let mut labels: Vec<String> = self.terms.iter().map(|(s, _)| s.clone()).collect();
        for (s, _) in &other.terms {
            if !labels.contains(s) {
                labels.push(s.clone());
            }
        }
        let terms = labels
            .into_iter()
            .map(|s| {
                let v = a * self.coefficient(&s) + b * other.coefficient(&s);
                (s, v)
            })
            .collect();
        Self::new(terms)
    }
}

/// Mean of each potential-outcome column, `Ybar(z)`.
pub fn treatment_means<T: Scalar>(table: &PotentialOutcomes<T>) -> Vec<T> {
    let n = T::from_usize(table.n_units());
    (0..table.n_treatments())
        .map(|z| table.column(z).into_iter().sum::<T>() / n)
        .collect()
}

/// Unit-level contrasts `tau_i = sum_z g(z) Y_i(z)`.
pub fn unit_contrasts<T: Scalar>(table: &PotentialOutcomes<T>, c: &Contrast<T>) -> Result<Vec<T>> {
    let g = c.aligned(table.treatments())?;
    Ok(unit_contrasts_aligned(table, &g))
}

/// `tau_i` for a coefficient vector already in column order.
pub fn unit_contrasts_aligned<T: Scalar>(table: &PotentialOutcomes<T>, g: &[T]) -> Vec<T> {
    (0..table.n_units())
        .map(|i| table.row(i).iter().zip(g).map(|(&y, &gz)| gz * y).sum())
        .collect()
}

/// Population contrast `tau_bar = sum_z g(z) Ybar(z)`.
pub fn population_contrast<T: Scalar>(table: &PotentialOutcomes<T>, c: &Contrast<T>) -> Result<T> {
    let g = c.aligned(table.treatments())?;
    Ok(treatment_means(table)
        .into_iter()
        .zip(&g)
        .map(|(m, &gz)| gz * m)
        .sum())
}

/// Factorial treatment structure `s_1 x ... x s_K` and the effect `F_1^{x_1} ... F_K^{x_K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialStructure<T> {
    pub levels: Vec<usize>,
    pub effect: Vec<bool>,
    pub per_factor: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> FactorialStructure<T> {
    pub fn new(levels: Vec<usize>, effect: Vec<bool>) -> Self {
        Self {
            levels,
            effect,
            per_factor: None,
        }
    }

    pub fn with_vectors(mut self, vectors: Vec<Vec<T>>) -> Self {
        self.per_factor = Some(vectors);
        self
    }

    pub fn n_treatments(&self) -> usize {
        self.levels.iter().product()
    }

    /// Treatment labels in lexicographic order of level tuples, e.g. `00, 01, 02, 10, ...`.
    /// Levels are written as digits when every factor has at most 10 levels,
    /// otherwise joined with `.`.
    pub fn treatment_labels(&self) -> Vec<String> {
        let compact = self.levels.iter().all(|&s| s <= 10);
        let mut out = Vec::with_capacity(self.n_treatments());
        let mut digits = vec![0usize; self.levels.len()];
        for _ in 0..self.n_treatments() {
            let parts: Vec<String> = digits.iter().map(|d| d.to_string()).collect();
            out.push(if compact { parts.concat() } else { parts.join(".") });
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < self.levels[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.len() != self.effect.len() {
            return Err(Error::InvalidFactorial("levels and effect must have equal, nonzero length".into()));
        }
        if let Some(k) = self.levels.iter().position(|&s| s < 2) {
            return Err(Error::InvalidFactorial(format!("factor {} has fewer than 2 levels", k + 1)));
        }
        if !self.effect.iter().any(|&x| x) {
            return Err(Error::InvalidFactorial("no factorial effect selected (all x_k = 0)".into()));
        }
        if let Some(vs) = &self.per_factor {
            if vs.len() != self.levels.len() {
                return Err(Error::InvalidFactorial("need one vector per factor".into()));
            }
            for (k, v) in vs.iter().enumerate() {
                if v.len() != self.levels[k] {
                    return Err(Error::InvalidFactorial(format!(
                        "factor {} vector has length {}, expected {}",
                        k + 1,
                        v.len(),
                        self.levels[k]
                    )));
                }
                if self.effect[k] {
                    let s: T = v.iter().copied().sum();
                    if s.abs_val() > T::tol(1e-12) || v.iter().all(|&x| x == T::zero()) {
                        return Err(Error::InvalidFactorial(format!(
                            "factor {} is in the effect, its vector must be nonnull and sum to zero",
                            k + 1
                        )));
                    }
                } else if v[0] == T::zero() || v.iter().any(|&x| x != v[0]) {
                    return Err(Error::InvalidFactorial(format!(
                        "factor {} is not in the effect, its vector must be constant and nonzero",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Contrast `g = g_1 (x) ... (x) g_K` using the supplied per-factor vectors.
    pub fn contrast_with_vectors(&self) -> Result<Contrast<T>> {
        self.validate()?;
        let vectors = self
            .per_factor
            .as_ref()
            .ok_or_else(|| Error::InvalidFactorial("per-factor vectors not supplied".into()))?;
        let g = kron_vectors(vectors);
        Contrast::from_coefficients(&self.treatment_labels(), &g)
    }
}

impl<T: Real> FactorialStructure<T> {
    /// Contrast for the selected effect. Without explicit vectors, factors in
    /// the effect use the normalized Helmert contrast over all levels and the
    /// remaining factors use `1/s_k`.
    pub fn contrast(&self) -> Result<Contrast<T>> {
        if self.per_factor.is_some() {
            return self.contrast_with_vectors();
        }
        self.validate()?;
        let vectors: Vec<Vec<T>> = self
            .levels
            .iter()
            .zip(&self.effect)
            .map(|(&s, &x)| {
                if x {
                    helmert_contrast(s)
                } else {
                    vec![T::one() / T::from_usize(s); s]
                }
            })
            .collect();
        let g = kron_vectors(&vectors);
        Contrast::from_coefficients(&self.treatment_labels(), &g)
    }
}

/// `(-1, ..., -1, s-1) / sqrt(s(s-1))`: unit norm, zero sum, uses every level.
pub fn helmert_contrast<T: Real>(s: usize) -> Vec<T> {
    let sf = T::from_usize(s);
    let norm = (sf * (sf - T::one())).sqrt();
    let mut v = vec![-T::one() / norm; s];
    v[s - 1] = (sf - T::one()) / norm;
    v
}

/// Kronecker product of vectors, first factor varying slowest.
pub fn kron_vectors<T: Scalar>(vectors: &[Vec<T>]) -> Vec<T> {
    vectors.iter().fold(vec![T::one()], |acc, v| {
        acc.iter()
            .flat_map(|&a| v.iter().map(move |&b| a * b))
            .collect()
    })
}

/// Reads a science table from CSV.
///
/// Columns: `unit`, then optional `stratum`, `wholeplot`, `cluster`, then one
/// column per treatment. A header row is required.
pub fn read_population_csv(path: &Path) -> Result<PotentialOutcomes<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_population(file)
}

pub fn read_population<R: std::io::Read>(reader: R) -> Result<PotentialOutcomes<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("population header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("unit") {
        return Err(Error::Parse("population CSV must start with a `unit` column".into()));
    }
    let mut col = 1;
    let mut label_cols = BTreeMap::new();
    while col < header.len() && ["stratum", "wholeplot", "cluster"].contains(&header[col].as_str()) {
        label_cols.insert(header[col].clone(), col);
        col += 1;
    }
    let treatments: Vec<String> = header[col..].to_vec();

    let mut units = Vec::new();
    let mut rows = Vec::new();
    let mut labels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("population row {}: {e}", line + 2)))?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "population row {}: expected {} fields, found {}",
                line + 2,
                header.len(),
                rec.len()
            )));
        }
        units.push(rec[0].to_string());
        for (name, &c) in &label_cols {
            labels.entry(name.clone()).or_default().push(rec[c].to_string());
        }
        let row = rec
            .iter()
            .skip(col)
            .enumerate()
            .map(|(z, v)| {
                v.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "population row {}, column `{}`: `{v}` is not a number",
                        line + 2,
                        treatments[z]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let mut table = PotentialOutcomes::with_units(units, treatments, rows)?;
    if let Some(s) = labels.get("stratum") {
        table = table.with_strata(Grouping::from_labels(s))?;
    }
    if let Some(w) = labels.get("wholeplot") {
        table = table.with_wholeplots(Grouping::from_labels(w))?;
    }
    if let Some(c) = labels.get("cluster") {
        table = table.with_clusters(Grouping::from_labels(c))?;
    }
    Ok(table)
}

/// Writes a science table in the same CSV layout [`read_population`] accepts.
pub fn write_population<W: std::io::Write>(table: &PotentialOutcomes<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit".to_string()];
    let groups: Vec<(&str, &Grouping)> = [
        ("stratum", table.strata()),
        ("wholeplot", table.wholeplots()),
        ("cluster", table.clusters()),
    ]
    .into_iter()
    .filter_map(|(n, g)| g.map(|g| (n, g)))
    .collect();
    header.extend(groups.iter().map(|(n, _)| n.to_string()));
    header.extend(table.treatments().iter().cloned());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..table.n_units() {
        let mut rec = vec![table.units()[i].clone()];
        for (_, g) in &groups {
            rec.push(g.labels[g.of_unit[i]].clone());
        }
        rec.extend(table.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn means_of_small_columns() {
        let t = PotentialOutcomes::from_columns(vec![vec![2.0, 4.0], vec![7.0, 7.0]]).unwrap();
        assert_eq!(treatment_means(&t), vec![3.0, 7.0]);
        let t = PotentialOutcomes::from_columns(vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]]).unwrap();
        assert_eq!(treatment_means(&t)[0], 2.5);
    }

    #[test]
    fn unit_contrast_difference_and_quadratic() {
        let t = PotentialOutcomes::from_rows(vec![vec![2.0, 5.0], vec![0.0, 0.0]]).unwrap();
        let c = Contrast::from_coefficients(&["0", "1"], &[-1.0, 1.0]).unwrap();
        assert_eq!(unit_contrasts(&t, &c).unwrap()[0], 3.0);

        let t = PotentialOutcomes::new(labels(&["1", "2", "3"]), vec![vec![1.0, 2.0, 3.0], vec![5.0, 1.0, 0.0]])
            .unwrap();
        let c = Contrast::from_coefficients(&["1", "2", "3"], &[1.0, -2.0, 1.0]).unwrap();
        assert_eq!(unit_contrasts(&t, &c).unwrap()[0], 0.0);
    }

    #[test]
    fn population_contrast_is_mean_of_unit_contrasts() {
        let t = PotentialOutcomes::from_rows(vec![vec![0.0, 1.0], vec![0.0, 5.0]]).unwrap();
        let c = Contrast::from_coefficients(&["0", "1"], &[-1.0, 1.0]).unwrap();
        assert_eq!(population_contrast(&t, &c).unwrap(), 3.0);
    }

    #[test]
    fn contrast_rejects_zero_and_nonzero_sum() {
        assert!(matches!(
            Contrast::from_coefficients(&["a", "b"], &[0.0, 0.0]),
            Err(Error::InvalidContrast(_))
        ));
        assert!(Contrast::from_coefficients(&["a", "b"], &[1.0, 1.0]).is_err());
        assert!(Contrast::from_coefficients(&["a", "b"], &[1.0, -1.0 + 1e-13]).is_ok());
        // exact scalars have no slack
        assert!(Contrast::from_coefficients(&["a", "b"], &[Exact::new(1, 3), Exact::new(-1, 3)]).is_ok());
    }

    #[test]
    fn unknown_treatment_is_reported() {
        let t = PotentialOutcomes::from_rows(vec![vec![0.0, 1.0], vec![0.0, 5.0]]).unwrap();
        let c = Contrast::from_coefficients(&["0", "x"], &[-1.0, 1.0]).unwrap();
        assert!(matches!(unit_contrasts(&t, &c), Err(Error::UnknownTreatment(s)) if s == "x"));
    }

    #[test]
    fn factorial_two_by_two_main_effect() {
        let fs = FactorialStructure::new(vec![2, 2], vec![true, false])
            .with_vectors(vec![vec![-1.0, 1.0], vec![0.5, 0.5]]);
        let c = fs.contrast().unwrap();
        let g = c.aligned(&["00", "01", "10", "11"]).unwrap();
        assert_eq!(g, vec![-0.5, -0.5, 0.5, 0.5]);
    }

    #[test]
    fn factorial_two_by_three() {
        let fs = FactorialStructure::new(vec![2, 3], vec![false, true])
            .with_vectors(vec![vec![0.5, 0.5], vec![-1.0, 0.0, 1.0]]);
        let c = fs.contrast().unwrap();
        assert_eq!(fs.treatment_labels(), labels(&["00", "01", "02", "10", "11", "12"]));
        let g = c.aligned(&fs.treatment_labels()).unwrap();
        assert_eq!(g, vec![-0.5, 0.0, 0.5, -0.5, 0.0, 0.5]);
    }

    #[test]
    fn factorial_requires_an_effect() {
        let fs: FactorialStructure<f64> = FactorialStructure::new(vec![2, 2], vec![false, false]);
        assert!(matches!(fs.contrast(), Err(Error::InvalidFactorial(_))));
    }

    #[test]
    fn factorial_rejects_bad_vectors() {
        let fs = FactorialStructure::new(vec![2, 2], vec![true, false])
            .with_vectors(vec![vec![1.0, 1.0], vec![0.5, 0.5]]);
        assert!(fs.contrast().is_err());
        let fs = FactorialStructure::new(vec![2, 2], vec![true, false])
            .with_vectors(vec![vec![-1.0, 1.0], vec![0.5, 0.4]]);
        assert!(fs.contrast().is_err());
    }

    #[test]
    fn helmert_default_is_unit_norm() {
        let v: Vec<f64> = helmert_contrast(3);
        let s: f64 = v.iter().sum();
        let n: f64 = v.iter().map(|x| x * x).sum();
        assert!(s.abs() < 1e-15 && (n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn strata_need_two_units() {
        let t = PotentialOutcomes::from_rows(vec![vec![0.0, 1.0], vec![0.0, 5.0], vec![1.0, 1.0]]).unwrap();
        assert!(t.clone().with_strata(Grouping::from_labels(&["a", "a", "b"])).is_err());
        let t4 = PotentialOutcomes::from_rows(vec![vec![0.0, 1.0]; 4]).unwrap();
        assert!(t4.clone().with_strata(Grouping::from_labels(&["a", "a", "b", "b"])).is_ok());
        assert!(t4.with_wholeplots(Grouping::from_labels(&["a", "a", "a", "b"])).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let csv = "unit,stratum,a,b\n1,x,1.5,2\n2,x,3,4\n3,y,5,6\n4,y,7,8\n";
        let t = read_population(csv.as_bytes()).unwrap();
        assert_eq!(t.treatments(), &labels(&["a", "b"])[..]);
        assert_eq!(t.strata().unwrap().sizes(), vec![2, 2]);
        assert_eq!(t.y(0, 0), 1.5);
        let mut buf = Vec::new();
        write_population(&t, &mut buf).unwrap();
        let back = read_population(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_reports_bad_cells() {
        let csv = "unit,a,b\n1,1,x\n2,3,4\n";
        let err = read_population(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"));
    }
}
