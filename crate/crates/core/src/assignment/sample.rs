use num_rational::BigRational;
use num_traits::Zero;

use super::{Mechanism, Partition};
use crate::rng::StreamRng;

fn shuffled_labels(counts: &[usize], rng: &mut StreamRng) -> Vec<usize> {
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(z, &r)| std::iter::repeat(z).take(r))
        .collect();
    rng.shuffle(&mut labels);
    labels
}

/// Draws the partition determined by `seed` alone.
pub fn sample_seeded(mech: &Mechanism, seed: u64) -> Partition {
    sample(mech, &mut StreamRng::new(seed, 0))
}

/// Draws one partition from the mechanism.
pub fn sample(mech: &Mechanism, rng: &mut StreamRng) -> Partition {
    let n = mech.n_units();
    let k = mech.n_treatments();
    let arm = match mech {
        Mechanism::CompletelyRandomized { counts } => shuffled_labels(counts, rng),
        Mechanism::Stratified { strata, counts } => {
            let mut arm = vec![0; n];
            for (h, r) in counts.iter().enumerate() {
                let labels = shuffled_labels(r, rng);
                for (u, z) in strata.members(h).into_iter().zip(labels) {
                    arm[u] = z;
                }
            }
            arm
        }
        Mechanism::SplitPlot(sp) => {
            let mut arm = vec![0; n];
            let whole = shuffled_labels(&sp.whole_counts, rng);
            for (p, &z1) in whole.iter().enumerate() {
                let sub = shuffled_labels(&sp.sub_counts, rng);
                for (u, z2) in sp.wholeplots.members(p).into_iter().zip(sub) {
                    arm[u] = sp.arm[z1][z2];
                }
            }
            arm
        }
        Mechanism::Unicluster { clusters } => {
            let perm = shuffled_labels(&vec![1; clusters.n_groups()], rng);
            clusters.of_unit.iter().map(|&c| perm[c]).collect()
        }
        Mechanism::Custom(c) => {
            // Inverse CDF on the exact probabilities, with a 53-bit uniform.
            let u = BigRational::from_float(rng.uniform()).expect("finite");
            let mut acc = BigRational::zero();
            let mut chosen = None;
            for e in c.entries() {
                if e.probability.is_zero() {
                    continue;
                }
                acc += &e.probability;
                chosen = Some(&e.partition);
                if u <= acc {
                    break;
                }
            }
            return chosen.expect("support has positive mass").clone();
        }
    };
    Partition::new(arm, k).expect("mechanism yields valid partitions")
}
