//! Exhaustive enumeration of the support of a mechanism.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use super::{Mechanism, Partition};
use crate::error::{Error, Result};

pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SupportEntry {
    pub partition: Partition,
    pub probability: BigRational,
}

/// Support of a mechanism, sorted by partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    entries: Vec<SupportEntry>,
}

impl Support {
    pub fn entries(&self) -> &[SupportEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_probability(&self) -> BigRational {
        self.entries.iter().map(|e| e.probability.clone()).sum()
    }
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

fn multinomial(counts: &[usize]) -> BigUint {
    let n: usize = counts.iter().sum();
    counts.iter().fold(factorial(n), |acc, &r| acc / factorial(r))
}

/// Number of partitions in the support, computed without enumerating.
pub fn support_size(mech: &Mechanism) -> BigUint {
    match mech {
        Mechanism::CompletelyRandomized { counts } => multinomial(counts),
        Mechanism::Stratified { counts, .. } => counts.iter().map(|r| multinomial(r)).product(),
        Mechanism::SplitPlot(sp) => {
            let per_plot = multinomial(&sp.sub_counts);
            (0..sp.n_plots()).fold(multinomial(&sp.whole_counts), |acc, _| acc * &per_plot)
        }
        Mechanism::Unicluster { clusters } => factorial(clusters.n_groups()),
        Mechanism::Custom(c) => BigUint::from(c.entries.len()),
    }
}

/// All sequences with `counts[z]` copies of each label `z`, in lexicographic order.
fn arrangements(counts: &[usize]) -> Vec<Vec<usize>> {
    fn rec(left: &mut [usize], cur: &mut Vec<usize>, len: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for z in 0..left.len() {
            if left[z] > 0 {
                left[z] -= 1;
                cur.push(z);
                rec(left, cur, len, out);
                cur.pop();
                left[z] += 1;
            }
        }
    }
    let len = counts.iter().sum();
    let mut out = Vec::new();
    rec(&mut counts.to_vec(), &mut Vec::with_capacity(len), len, &mut out);
    out
}

/// Calls `f` with one choice from every list, for all combinations.
fn for_each_product(lists: &[&[Vec<usize>]], mut f: impl FnMut(&[&Vec<usize>])) {
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; lists.len()];
    loop {
        let pick: Vec<&Vec<usize>> = lists.iter().zip(&idx).map(|(l, &i)| &l[i]).collect();
        f(&pick);
        let mut d = lists.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < lists[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Enumerates every partition with positive probability. Fails with
/// [`Error::SupportTooLarge`] before doing any work if the support exceeds `cap`.
pub fn enumerate_support(mech: &Mechanism, cap: usize) -> Result<Support> {
    let size = support_size(mech);
    if size > BigUint::from(cap) {
        return Err(Error::SupportTooLarge {
            count: size.to_string(),
            cap,
        });
    }
    let count = size.to_usize().expect("bounded by cap");
    let n = mech.n_units();
    let k = mech.n_treatments();
    let uniform = BigRational::new(1.into(), count.into());
    let mut parts: Vec<Vec<usize>> = Vec::with_capacity(count);

    match mech {
        Mechanism::CompletelyRandomized { counts } => parts = arrangements(counts),
        Mechanism::Stratified { strata, counts } => {
            let members: Vec<Vec<usize>> = (0..counts.len()).map(|h| strata.members(h)).collect();
            let lists: Vec<Vec<Vec<usize>>> = counts.iter().map(|r| arrangements(r)).collect();
            let refs: Vec<&[Vec<usize>]> = lists.iter().map(Vec::as_slice).collect();
            for_each_product(&refs, |pick| {
                let mut arm = vec![0; n];
                for (h, seq) in pick.iter().enumerate() {
                    for (pos, &u) in members[h].iter().enumerate() {
                        arm[u] = seq[pos];
                    }
                }
                parts.push(arm);
            });
        }
        Mechanism::SplitPlot(sp) => {
            let h = sp.n_plots();
            let members: Vec<Vec<usize>> = (0..h).map(|p| sp.wholeplots.members(p)).collect();
            let whole = arrangements(&sp.whole_counts);
            let sub = arrangements(&sp.sub_counts);
            let mut lists: Vec<&[Vec<usize>]> = vec![&whole];
            lists.extend(std::iter::repeat(sub.as_slice()).take(h));
            for_each_product(&lists, |pick| {
                let mut arm = vec![0; n];
                for p in 0..h {
                    let z1 = pick[0][p];
                    for (pos, &u) in members[p].iter().enumerate() {
                        arm[u] = sp.arm[z1][pick[p + 1][pos]];
                    }
                }
                parts.push(arm);
            });
        }
        Mechanism::Unicluster { clusters } => {
            for perm in arrangements(&vec![1; clusters.n_groups()]) {
                parts.push(clusters.of_unit.iter().map(|&c| perm[c]).collect());
            }
        }
        Mechanism::Custom(c) => {
            return Ok(Support {
                entries: c.entries.iter().filter(|e| e.probability > BigRational::from_integer(0.into())).cloned().collect(),
            });
        }
    }

    debug_assert_eq!(parts.len(), count);
    parts.sort();
    let entries = parts
        .into_iter()
        .map(|arm| SupportEntry {
            partition: Partition::new(arm, k).expect("mechanism yields valid partitions"),
            probability: uniform.clone(),
        })
        .collect();
    Ok(Support { entries })
}
