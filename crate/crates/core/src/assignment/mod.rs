//! General assignment mechanisms: distributions over partitions of the units
//! into nonempty treatment groups.
//!
//! Treatments are addressed by index `0..K`; the index order is whatever the
//! caller used to build the mechanism (normally the column order of the
//! science table).

mod enumerate;
mod probs;
mod sample;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::population::Grouping;

pub use enumerate::{enumerate_support, support_size, Support, SupportEntry, DEFAULT_SUPPORT_CAP};
pub use probs::{support_tables, ProbabilityTables};
pub use sample::{sample, sample_seeded};

/// Realized assignment: `arm_of[i]` is the treatment index of unit `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Partition {
    arm_of: Vec<usize>,
    n_treatments: usize,
}

impl Partition {
    pub fn new(arm_of: Vec<usize>, n_treatments: usize) -> Result<Self> {
        if let Some(i) = arm_of.iter().position(|&z| z >= n_treatments) {
            return Err(Error::InvalidPartition(format!(
                "unit {} assigned to treatment {} of {n_treatments}",
                i + 1,
                arm_of[i]
            )));
        }
        let mut used = vec![false; n_treatments];
        for &z in &arm_of {
            used[z] = true;
        }
        if let Some(z) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidPartition(format!("treatment {z} has no units")));
        }
        Ok(Self { arm_of, n_treatments })
    }

    pub fn n_units(&self) -> usize {
        self.arm_of.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    #[inline]
    pub fn arm(&self, unit: usize) -> usize {
        self.arm_of[unit]
    }

    pub fn arms(&self) -> &[usize] {
        &self.arm_of
    }

    /// `T(z)`, in unit order.
    pub fn group(&self, z: usize) -> Vec<usize> {
        (0..self.arm_of.len()).filter(|&i| self.arm_of[i] == z).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_treatments];
        for &z in &self.arm_of {
            sizes[z] += 1;
        }
        sizes
    }

    /// Canonical encoding: one character per unit (`0-9`, then `a-z`) when
    /// there are at most 36 treatments, otherwise indices joined with `.`.
    pub fn encode(&self) -> String {
        const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";
        if self.n_treatments <= DIGITS.len() {
            self.arm_of.iter().map(|&z| DIGITS[z] as char).collect()
        } else {
            self.arm_of.iter().map(|z| z.to_string()).collect::<Vec<_>>().join(".")
        }
    }
}

/// Two-stage split-plot randomization of a `Z1 x Z2` factorial.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlot {
    /// Whole-plot of every unit.
    pub wholeplots: Grouping,
    /// `r1(z1)`: number of whole-plots receiving level `z1`; sums to `H`.
    pub whole_counts: Vec<usize>,
    /// `r2(z2)`: sub-plots per whole-plot receiving level `z2`; sums to `N0`.
    pub sub_counts: Vec<usize>,
    /// `arm[z1][z2]`: treatment index of combination `z1 z2`.
    pub arm: Vec<Vec<usize>>,
}

impl SplitPlot {
    pub fn n_plots(&self) -> usize {
        self.wholeplots.n_groups()
    }

    pub fn plot_size(&self) -> usize {
        self.wholeplots.sizes().first().copied().unwrap_or(0)
    }

    /// `(z1, z2)` of a treatment index.
    pub fn levels_of(&self, z: usize) -> (usize, usize) {
        for (z1, row) in self.arm.iter().enumerate() {
            if let Some(z2) = row.iter().position(|&a| a == z) {
                return (z1, z2);
            }
        }
        unreachable!("treatment index {z} not in split-plot layout")
    }
}

/// Distribution over partitions given by an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomSupport {
    n_units: usize,
    n_treatments: usize,
    entries: Vec<SupportEntry>,
    first: Vec<BigRational>,
    second: Vec<BigRational>,
}

impl CustomSupport {
    pub fn entries(&self) -> &[SupportEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    /// `counts[z]` units receive `z`, all arrangements equally likely.
    CompletelyRandomized { counts: Vec<usize> },
    /// Independent complete randomization within strata, `counts[h][z]`.
    Stratified { strata: Grouping, counts: Vec<Vec<usize>> },
    SplitPlot(SplitPlot),
    /// Cluster `l` receives treatment `perm[l]` for a uniform random permutation.
    Unicluster { clusters: Grouping },
    Custom(CustomSupport),
}

impl Mechanism {
    pub fn completely_randomized(counts: Vec<usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidMechanism("need at least 2 treatments".into()));
        }
        if counts.iter().any(|&r| r == 0) {
            return Err(Error::InvalidMechanism("every treatment needs r(z) >= 1".into()));
        }
        if counts.iter().sum::<usize>() < 2 {
            return Err(Error::InvalidMechanism("need at least 2 units".into()));
        }
        Ok(Self::CompletelyRandomized { counts })
    }

    pub fn stratified(strata: Grouping, counts: Vec<Vec<usize>>) -> Result<Self> {
        let sizes = strata.sizes();
        if counts.len() != sizes.len() {
            return Err(Error::InvalidMechanism(format!(
                "{} strata but {} count rows",
                sizes.len(),
                counts.len()
            )));
        }
        let k = counts.first().map_or(0, Vec::len);
        if k < 2 {
            return Err(Error::InvalidMechanism("need at least 2 treatments".into()));
        }
        for (h, row) in counts.iter().enumerate() {
            let name = &strata.labels[h];
            if row.len() != k {
                return Err(Error::InvalidMechanism(format!("stratum `{name}` has {} counts, expected {k}", row.len())));
            }
            if sizes[h] < 2 {
                return Err(Error::InvalidMechanism(format!("stratum `{name}` has fewer than 2 units")));
            }
            if row.iter().sum::<usize>() != sizes[h] {
                return Err(Error::InvalidMechanism(format!(
                    "stratum `{name}`: counts sum to {}, stratum has {} units",
                    row.iter().sum::<usize>(),
                    sizes[h]
                )));
            }
            if row.iter().any(|&r| r == 0) {
                return Err(Error::InvalidMechanism(format!("stratum `{name}`: every r_h(z) must be >= 1")));
            }
        }
        Ok(Self::Stratified { strata, counts })
    }

    /// Split-plot design on contiguous whole-plots `{1..N0}, {N0+1..2N0}, ...`
    /// with treatment index `z1 * |Z2| + z2`.
    pub fn split_plot(n_plots: usize, plot_size: usize, whole_counts: Vec<usize>, sub_counts: Vec<usize>) -> Result<Self> {
        let k2 = sub_counts.len();
        let arm = (0..whole_counts.len())
            .map(|z1| (0..k2).map(|z2| z1 * k2 + z2).collect())
            .collect();
        Self::split_plot_with(
            Grouping::contiguous(&vec![plot_size; n_plots]),
            whole_counts,
            sub_counts,
            arm,
        )
    }

    pub fn split_plot_with(
        wholeplots: Grouping,
        whole_counts: Vec<usize>,
        sub_counts: Vec<usize>,
        arm: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let sizes = wholeplots.sizes();
        let h = sizes.len();
        let n0 = sizes.first().copied().unwrap_or(0);
        if h < 2 || n0 < 2 {
            return Err(Error::InvalidMechanism("split-plot needs H >= 2 whole-plots of N0 >= 2 units".into()));
        }
        if sizes.iter().any(|&s| s != n0) {
            return Err(Error::InvalidMechanism("whole-plots must have equal size".into()));
        }
        if whole_counts.len() < 2 && sub_counts.len() < 2 {
            return Err(Error::InvalidMechanism("need at least 2 treatments".into()));
        }
        if whole_counts.iter().sum::<usize>() != h || whole_counts.iter().any(|&r| r == 0) {
            return Err(Error::InvalidMechanism(format!("r1 must be positive and sum to H = {h}")));
        }
        if sub_counts.iter().sum::<usize>() != n0 || sub_counts.iter().any(|&r| r == 0) {
            return Err(Error::InvalidMechanism(format!("r2 must be positive and sum to N0 = {n0}")));
        }
        let k = whole_counts.len() * sub_counts.len();
        let mut seen = vec![false; k];
        if arm.len() != whole_counts.len() || arm.iter().any(|r| r.len() != sub_counts.len()) {
            return Err(Error::InvalidMechanism("treatment layout does not match factor levels".into()));
        }
        for &z in arm.iter().flatten() {
            if z >= k || std::mem::replace(&mut seen[z], true) {
                return Err(Error::InvalidMechanism("treatment layout must be a bijection onto 0..K".into()));
            }
        }
        Ok(Self::SplitPlot(SplitPlot {
            wholeplots,
            whole_counts,
            sub_counts,
            arm,
        }))
    }

    /// `clusters` must have exactly as many groups as there are treatments.
    pub fn unicluster(clusters: Grouping) -> Result<Self> {
        if clusters.n_groups() < 2 {
            return Err(Error::InvalidMechanism("unicluster needs at least 2 clusters".into()));
        }
        if clusters.sizes().iter().any(|&s| s == 0) {
            return Err(Error::InvalidMechanism("empty cluster".into()));
        }
        Ok(Self::Unicluster { clusters })
    }

    /// Mechanism given by its support. Probabilities must be nonnegative and
    /// sum to exactly one; repeated partitions are rejected.
    pub fn custom(n_units: usize, n_treatments: usize, entries: Vec<(Partition, BigRational)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidMechanism("empty support".into()));
        }
        let mut total = BigRational::zero();
        for (p, w) in &entries {
            if p.n_units() != n_units || p.n_treatments() != n_treatments {
                return Err(Error::InvalidMechanism("support partition has the wrong shape".into()));
            }
            if *w < BigRational::zero() {
                return Err(Error::InvalidMechanism("negative probability".into()));
            }
            total += w;
        }
        if total != BigRational::one() {
            return Err(Error::InvalidMechanism(format!("probabilities sum to {total}, not 1")));
        }
        let mut entries: Vec<SupportEntry> = entries
            .into_iter()
            .map(|(partition, probability)| SupportEntry { partition, probability })
            .collect();
        entries.sort_by(|a, b| a.partition.cmp(&b.partition));
        if entries.windows(2).any(|w| w[0].partition == w[1].partition) {
            return Err(Error::InvalidMechanism("partition listed twice in support".into()));
        }
        let (first, second) = probs::support_tables(n_units, n_treatments, &entries);
        Ok(Self::Custom(CustomSupport {
            n_units,
            n_treatments,
            entries,
            first,
            second,
        }))
    }

    pub fn n_units(&self) -> usize {
        match self {
            Self::CompletelyRandomized { counts } => counts.iter().sum(),
            Self::Stratified { strata, .. } => strata.of_unit.len(),
            Self::SplitPlot(sp) => sp.wholeplots.of_unit.len(),
            Self::Unicluster { clusters } => clusters.of_unit.len(),
            Self::Custom(c) => c.n_units,
        }
    }

    pub fn n_treatments(&self) -> usize {
        match self {
            Self::CompletelyRandomized { counts } => counts.len(),
            Self::Stratified { counts, .. } => counts[0].len(),
            Self::SplitPlot(sp) => sp.whole_counts.len() * sp.sub_counts.len(),
            Self::Unicluster { clusters } => clusters.n_groups(),
            Self::Custom(c) => c.n_treatments,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::CompletelyRandomized { .. } => "completely_randomized",
            Self::Stratified { .. } => "stratified",
            Self::SplitPlot(_) => "split_plot",
            Self::Unicluster { .. } => "unicluster",
            Self::Custom(_) => "custom",
        }
    }

    /// True when some replication count is 1, so only point estimation is
    /// supported (the variance estimator needs two units per arm and stratum).
    pub fn point_estimate_only(&self) -> bool {
        match self {
            Self::CompletelyRandomized { counts } => counts.iter().any(|&r| r < 2),
            Self::Stratified { counts, .. } => counts.iter().flatten().any(|&r| r < 2),
            Self::SplitPlot(sp) => sp.whole_counts.iter().any(|&r| r < 2),
            Self::Unicluster { .. } => true,
            Self::Custom(_) => false,
        }
    }

    /// Number of units receiving `z`, as a range over the support.
    pub fn replication_counts(&self, z: usize) -> Replication {
        match self {
            Self::CompletelyRandomized { counts } => Replication::fixed(counts[z]),
            Self::Stratified { counts, .. } => Replication::fixed(counts.iter().map(|r| r[z]).sum()),
            Self::SplitPlot(sp) => {
                let (z1, z2) = sp.levels_of(z);
                Replication::fixed(sp.whole_counts[z1] * sp.sub_counts[z2])
            }
            Self::Unicluster { clusters } => {
                let sizes = clusters.sizes();
                Replication {
                    min: *sizes.iter().min().unwrap(),
                    max: *sizes.iter().max().unwrap(),
                }
            }
            Self::Custom(c) => {
                let mut min = usize::MAX;
                let mut max = 0;
                for e in c.entries.iter().filter(|e| !e.probability.is_zero()) {
                    let n = e.partition.arms().iter().filter(|&&a| a == z).count();
                    min = min.min(n);
                    max = max.max(n);
                }
                Replication { min, max }
            }
        }
    }

    /// Exact `pi_i(z)`.
    pub fn first_order(&self, unit: usize, z: usize) -> BigRational {
        probs::first_order(self, unit, z)
    }

    /// Exact `pi_{ii*}(z, z*)`. For `i == i*` this is `pi_i(z)` when `z == z*` and 0 otherwise.
    pub fn second_order(&self, i: usize, j: usize, z: usize, zs: usize) -> BigRational {
        probs::second_order(self, i, j, z, zs)
    }

    /// True when every `pi_{ii*}(z, z*)` with `i != i*` is positive.
    pub fn all_second_order_positive(&self) -> bool {
        let n = self.n_units();
        let k = self.n_treatments();
        match self {
            Self::CompletelyRandomized { counts } => counts.iter().all(|&r| r >= 2),
            Self::Stratified { counts, .. } => counts.iter().flatten().all(|&r| r >= 2),
            Self::SplitPlot(_) | Self::Unicluster { .. } => false,
            Self::Custom(_) => (0..n).all(|i| {
                (0..n).filter(|&j| j != i).all(|j| {
                    (0..k).all(|z| (0..k).all(|zs| self.second_order(i, j, z, zs) > BigRational::zero()))
                })
            }),
        }
    }

    /// Units violating `pi_i(z) > 0`, as `(unit, z)` pairs.
    pub fn first_order_zeros(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_units() {
            for z in 0..self.n_treatments() {
                if self.first_order(i, z).is_zero() {
                    out.push((i, z));
                }
            }
        }
        out
    }
}

/// Range of replication counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replication {
    pub min: usize,
    pub max: usize,
}

impl Replication {
    fn fixed(n: usize) -> Self {
        Self { min: n, max: n }
    }

    pub fn fixed_value(&self) -> Option<usize> {
        (self.min == self.max).then_some(self.min)
    }
}

/// Parses `"num/den"` (or a plain integer) into an exact rational.
pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let parse_int = |t: &str| {
        t.trim()
            .parse::<BigInt>()
            .map_err(|_| Error::Parse(format!("`{s}` is not a rational of the form num/den")))
    };
    match s.split_once('/') {
        Some((n, d)) => {
            let d = parse_int(d)?;
            if d.is_zero() {
                return Err(Error::Parse(format!("`{s}` has a zero denominator")));
            }
            Ok(BigRational::new(parse_int(n)?, d))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}
