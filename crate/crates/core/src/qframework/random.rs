//! Random members of the Q class, for property tests.
//!
//! A matrix in the class is a Gram matrix `V V'` whose rows `v_i` have norm
//! `1/N` and sum to zero. Rows are drawn Gaussian, then alternately centered
//! and renormalized until both constraints hold; draws that do not converge
//! are rejected.

use super::QMatrix;
use crate::linalg::Matrix;
use crate::population::Grouping;
use crate::rng::StreamRng;

const MAX_ITER: usize = 5000;

fn gram_rows(count: usize, dim: usize, norm: f64, rng: &mut StreamRng) -> Option<Vec<Vec<f64>>> {
    let mut v: Vec<Vec<f64>> = (0..count).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
    for _ in 0..MAX_ITER {
        for c in 0..dim {
            let mean = v.iter().map(|r| r[c]).sum::<f64>() / count as f64;
            for r in v.iter_mut() {
                r[c] -= mean;
            }
        }
        for r in v.iter_mut() {
            let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len < 1e-300 {
                return None;
            }
            for x in r.iter_mut() {
                *x *= norm / len;
            }
        }
        let drift = (0..dim)
            .map(|c| v.iter().map(|r| r[c]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if drift <= 1e-15 * norm {
            return Some(v);
        }
    }
    None
}

fn random_dim(count: usize, rng: &mut StreamRng) -> usize {
    if count <= 2 {
        return 1;
    }
    2 + rng.below((count - 2) as u64) as usize
}

fn gram(rows: &[Vec<f64>], n: usize) -> QMatrix<f64> {
    let d = 1.0 / (n * n) as f64;
    let m = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            d
        } else {
            rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum()
        }
    });
    QMatrix::new(m).expect("Gram matrices are symmetric")
}

/// A random `Q` of size `n`, or `None` if the draw was rejected.
pub fn random_q(n: usize, rng: &mut StreamRng) -> Option<QMatrix<f64>> {
    let dim = random_dim(n, rng);
    let rows = gram_rows(n, dim, 1.0 / n as f64, rng)?;
    Some(gram(&rows, n))
}

/// A random `Q` of the form `Q_1 (x) 1 1'` for the given whole-plots: every
/// unit of a whole-plot shares one Gram row.
pub fn random_kron_q(plots: &Grouping, rng: &mut StreamRng) -> Option<QMatrix<f64>> {
    let h = plots.n_groups();
    let n = plots.of_unit.len();
    let dim = random_dim(h, rng);
    let plot_rows = gram_rows(h, dim, 1.0 / n as f64, rng)?;
    // Equal plot sizes make the plot-level rows sum to zero over units too.
    let rows: Vec<Vec<f64>> = plots.of_unit.iter().map(|&p| plot_rows[p].clone()).collect();
    Some(gram(&rows, n))
}

/// Largest deviation of `q` from its block-wise average over whole-plot
/// blocks; zero exactly for the `Q_1 (x) 1 1'` form.
pub fn kron_distance(q: &QMatrix<f64>, plots: &Grouping) -> f64 {
    let h = plots.n_groups();
    let n = q.n();
    let mut sum = vec![0.0; h * h];
    let mut cnt = vec![0usize; h * h];
    for i in 0..n {
        for j in 0..n {
            let b = plots.of_unit[i] * h + plots.of_unit[j];
            sum[b] += q.get(i, j);
            cnt[b] += 1;
        }
    }
    let mut dist: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let b = plots.of_unit[i] * h + plots.of_unit[j];
            dist = dist.max((q.get(i, j) - sum[b] / cnt[b] as f64).abs());
        }
    }
    dist
}
