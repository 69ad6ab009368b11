//! First and second order assignment probabilities.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::Zero;

use super::{Mechanism, SupportEntry};
use crate::scalar::Scalar;

fn ratio(n: usize, d: usize) -> BigRational {
    BigRational::new(n.into(), d.into())
}

pub(super) fn first_order(mech: &Mechanism, unit: usize, z: usize) -> BigRational {
    match mech {
        Mechanism::CompletelyRandomized { counts } => ratio(counts[z], counts.iter().sum()),
        Mechanism::Stratified { strata, counts } => {
            let h = strata.of_unit[unit];
            ratio(counts[h][z], counts[h].iter().sum())
        }
        Mechanism::SplitPlot(sp) => {
            let (z1, z2) = sp.levels_of(z);
            ratio(sp.whole_counts[z1], sp.n_plots()) * ratio(sp.sub_counts[z2], sp.plot_size())
        }
        Mechanism::Unicluster { clusters } => ratio(1, clusters.n_groups()),
        Mechanism::Custom(c) => c.first[unit * c.n_treatments + z].clone(),
    }
}

/// Same-group pair drawn without replacement from one randomization of `n`
/// slots with counts `r`.
fn within(r: &[usize], z: usize, zs: usize) -> BigRational {
    let n: usize = r.iter().sum();
    let num = if z == zs { r[z] * (r[z] - 1) } else { r[z] * r[zs] };
    ratio(num, n * (n - 1))
}

pub(super) fn second_order(mech: &Mechanism, i: usize, j: usize, z: usize, zs: usize) -> BigRational {
    if i == j {
        return if z == zs { first_order(mech, i, z) } else { BigRational::zero() };
    }
    match mech {
        Mechanism::CompletelyRandomized { counts } => within(counts, z, zs),
        Mechanism::Stratified { strata, counts } => {
            let (h, hs) = (strata.of_unit[i], strata.of_unit[j]);
            if h == hs {
                within(&counts[h], z, zs)
            } else {
                ratio(counts[h][z], counts[h].iter().sum()) * ratio(counts[hs][zs], counts[hs].iter().sum())
            }
        }
        Mechanism::SplitPlot(sp) => {
            let (z1, z2) = sp.levels_of(z);
            let (z1s, z2s) = sp.levels_of(zs);
            let h = sp.n_plots();
            let n0 = sp.plot_size();
            if sp.wholeplots.of_unit[i] == sp.wholeplots.of_unit[j] {
                if z1 != z1s {
                    return BigRational::zero();
                }
                ratio(sp.whole_counts[z1], h) * within(&sp.sub_counts, z2, z2s)
            } else {
                within(&sp.whole_counts, z1, z1s)
                    * ratio(sp.sub_counts[z2], n0)
                    * ratio(sp.sub_counts[z2s], n0)
            }
        }
        Mechanism::Unicluster { clusters } => {
            let k = clusters.n_groups();
            let same = clusters.of_unit[i] == clusters.of_unit[j];
            match (same, z == zs) {
                (true, true) => ratio(1, k),
                (false, false) => ratio(1, k * (k - 1)),
                _ => BigRational::zero(),
            }
        }
        Mechanism::Custom(c) => {
            let k = c.n_treatments;
            c.second[((i * c.n_units + j) * k + z) * k + zs].clone()
        }
    }
}

/// Exact first and second order tables summed over an explicit support.
pub fn support_tables(n: usize, k: usize, entries: &[SupportEntry]) -> (Vec<BigRational>, Vec<BigRational>) {
    let mut first = vec![BigRational::zero(); n * k];
    let mut second = vec![BigRational::zero(); n * n * k * k];
    for e in entries {
        if e.probability.is_zero() {
            continue;
        }
        let arms = e.partition.arms();
        for i in 0..n {
            first[i * k + arms[i]] += &e.probability;
            for j in 0..n {
                second[((i * n + j) * k + arms[i]) * k + arms[j]] += &e.probability;
            }
        }
    }
    (first, second)
}

/// Dense probability tables converted into a working scalar type.
#[derive(Debug, Clone)]
pub struct ProbabilityTables<T> {
    n: usize,
    k: usize,
    first: Vec<T>,
    second: Vec<T>,
}

impl<T: Scalar> ProbabilityTables<T> {
    pub fn new(mech: &Mechanism) -> Self {
        let n = mech.n_units();
        let k = mech.n_treatments();
        let first = (0..n)
            .flat_map(|i| (0..k).map(move |z| (i, z)))
            .map(|(i, z)| T::from_ratio(&mech.first_order(i, z)))
            .collect();
        // Closed-form families only depend on the group relation of the pair.
        let class = |i: usize, j: usize| -> Option<(usize, usize)> {
            match mech {
                Mechanism::CompletelyRandomized { .. } => Some((0, 0)),
                Mechanism::Stratified { strata, .. } => Some((strata.of_unit[i], strata.of_unit[j])),
                Mechanism::SplitPlot(sp) => Some((0, (sp.wholeplots.of_unit[i] == sp.wholeplots.of_unit[j]) as usize)),
                Mechanism::Unicluster { clusters } => Some((0, (clusters.of_unit[i] == clusters.of_unit[j]) as usize)),
                Mechanism::Custom(_) => None,
            }
        };
        let mut memo: HashMap<(usize, usize, usize, usize), T> = HashMap::new();
        let mut second = vec![T::zero(); n * n * k * k];
        for i in 0..n {
            for j in 0..n {
                for z in 0..k {
                    for zs in 0..k {
                        let v = match class(i, j) {
                            Some((a, b)) if i != j => *memo
                                .entry((a, b, z, zs))
                                .or_insert_with(|| T::from_ratio(&mech.second_order(i, j, z, zs))),
                            _ => T::from_ratio(&mech.second_order(i, j, z, zs)),
                        };
                        second[((i * n + j) * k + z) * k + zs] = v;
                    }
                }
            }
        }
        Self { n, k, first, second }
    }

    pub fn n_units(&self) -> usize {
        self.n
    }

    pub fn n_treatments(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn pi(&self, i: usize, z: usize) -> T {
        self.first[i * self.k + z]
    }

    #[inline]
    pub fn pi2(&self, i: usize, j: usize, z: usize, zs: usize) -> T {
        self.second[((i * self.n + j) * self.k + z) * self.k + zs]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::enumerate_support;
    use crate::population::Grouping;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    /// Closed forms against sums over the enumerated support, exactly.
    fn check_against_support(mech: &Mechanism) {
        let support = enumerate_support(mech, 1_000_000).unwrap();
        let n = mech.n_units();
        let k = mech.n_treatments();
        let (first, second) = support_tables(n, k, support.entries());
        for i in 0..n {
            for z in 0..k {
                assert_eq!(mech.first_order(i, z), first[i * k + z], "pi_{i}({z})");
                for j in 0..n {
                    for zs in 0..k {
                        assert_eq!(
                            mech.second_order(i, j, z, zs),
                            second[((i * n + j) * k + z) * k + zs],
                            "pi_{i}{j}({z},{zs})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn completely_randomized_matches_support() {
        check_against_support(&Mechanism::completely_randomized(vec![2, 3, 1]).unwrap());
    }

    #[test]
    fn stratified_matches_support() {
        let strata = Grouping::contiguous(&[3, 4]);
        check_against_support(&Mechanism::stratified(strata, vec![vec![1, 2], vec![2, 2]]).unwrap());
    }

    #[test]
    fn split_plot_matches_support() {
        check_against_support(&Mechanism::split_plot(4, 2, vec![2, 2], vec![1, 1]).unwrap());
        check_against_support(&Mechanism::split_plot(3, 3, vec![2, 1], vec![1, 2]).unwrap());
    }

    #[test]
    fn unicluster_matches_support() {
        check_against_support(&Mechanism::unicluster(Grouping::contiguous(&[2, 1, 3])).unwrap());
    }

    #[test]
    fn split_plot_closed_forms() {
        // H = 4, N0 = 2, r1 = (2, 2), r2 = (1, 1); treatments 00, 01, 10, 11
        let m = Mechanism::split_plot(4, 2, vec![2, 2], vec![1, 1]).unwrap();
        assert_eq!(m.first_order(0, 0), r(1, 4));
        assert_eq!(m.second_order(0, 1, 0, 0), r(0, 1));
        assert_eq!(m.second_order(0, 1, 0, 1), r(1, 4));
        assert_eq!(m.second_order(0, 1, 0, 2), r(0, 1));
        assert_eq!(m.second_order(0, 2, 0, 0), r(1, 24));
        assert_eq!(m.second_order(0, 2, 0, 2), r(1, 12));
    }

    #[test]
    fn tables_match_exact_values() {
        let m = Mechanism::stratified(Grouping::contiguous(&[3, 2]), vec![vec![2, 1], vec![1, 1]]).unwrap();
        let t = ProbabilityTables::<f64>::new(&m);
        assert_eq!(t.pi(0, 0), 2.0 / 3.0);
        assert_eq!(t.pi2(0, 1, 0, 0), 1.0 / 3.0);
        assert_eq!(t.pi2(0, 3, 0, 1), 1.0 / 3.0);
        assert_eq!(t.pi2(2, 2, 1, 1), 1.0 / 3.0);
        assert_eq!(t.pi2(2, 2, 0, 1), 0.0);
    }
}
