//! Linear unbiased estimators of treatment means, their cross-moment
//! coefficients and the exact sampling variance and covariance of contrast
//! estimators.

use std::collections::BTreeMap;

use crate::assignment::{enumerate_support, Mechanism, Partition, ProbabilityTables, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::population::{Contrast, OutcomeView, PotentialOutcomes};
use crate::scalar::Scalar;

/// View of a science table that only exposes the cells revealed by a
/// partition. Reading any other cell panics.
#[derive(Debug, Clone, Copy)]
pub struct MaskedView<'a, T> {
    table: &'a PotentialOutcomes<T>,
    partition: &'a Partition,
}

impl<'a, T: Scalar> MaskedView<'a, T> {
    pub fn new(table: &'a PotentialOutcomes<T>, partition: &'a Partition) -> Self {
        assert_eq!(table.n_units(), partition.n_units(), "partition does not match table");
        Self { table, partition }
    }
}

impl<T: Scalar> OutcomeView<T> for MaskedView<'_, T> {
    fn n_units(&self) -> usize {
        self.table.n_units()
    }
    fn n_treatments(&self) -> usize {
        self.table.n_treatments()
    }
    fn outcome(&self, unit: usize, treatment: usize) -> T {
        assert_eq!(
            self.partition.arm(unit),
            treatment,
            "read of unobserved outcome Y_{}({treatment})",
            unit + 1
        );
        self.table.y(unit, treatment)
    }
}

/// Observed outcomes of one realized experiment: `y[i] = Y_i(arm(i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed<T> {
    partition: Partition,
    y: Vec<T>,
}

impl<T: Scalar> Observed<T> {
    pub fn new(partition: Partition, y: Vec<T>) -> Result<Self> {
        if y.len() != partition.n_units() {
            return Err(Error::Dimension(format!(
                "{} observations for {} units",
                y.len(),
                partition.n_units()
            )));
        }
        Ok(Self { partition, y })
    }

    /// Reads exactly one cell per unit through `view`.
    pub fn from_view<V: OutcomeView<T>>(view: &V, partition: &Partition) -> Self {
        let y = (0..partition.n_units()).map(|i| view.outcome(i, partition.arm(i))).collect();
        Self {
            partition: partition.clone(),
            y,
        }
    }

    /// Observed data generated by applying `partition` to a full table.
    pub fn reveal(table: &PotentialOutcomes<T>, partition: &Partition) -> Self {
        Self::from_view(&MaskedView::new(table, partition), partition)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn values(&self) -> &[T] {
        &self.y
    }
}

impl<T: Scalar> OutcomeView<T> for Observed<T> {
    fn n_units(&self) -> usize {
        self.y.len()
    }
    fn n_treatments(&self) -> usize {
        self.partition.n_treatments()
    }
    fn outcome(&self, unit: usize, treatment: usize) -> T {
        assert_eq!(self.partition.arm(unit), treatment, "outcome not observed");
        self.y[unit]
    }
}

/// `sum_{i in T(z)} Y_i(z) / (N pi_i(z))`.
pub fn ht_mean_estimate<T: Scalar, V: OutcomeView<T>>(
    view: &V,
    partition: &Partition,
    probs: &ProbabilityTables<T>,
    z: usize,
) -> T {
    let n = T::from_usize(partition.n_units());
    partition
        .group(z)
        .into_iter()
        .map(|i| view.outcome(i, z) / (n * probs.pi(i, z)))
        .sum()
}

pub fn contrast_estimate<T: Scalar>(g: &[T], means: &[T]) -> T {
    g.iter().zip(means).map(|(&a, &b)| a * b).sum()
}

/// Explicit LUE `a(T, z) + sum_{i in T(z)} b_i(T, z) Y_i(z)`, keyed by
/// partition encoding. `b` is stored unit-major: `b[i * K + z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomLue<T> {
    n_units: usize,
    n_treatments: usize,
    a: BTreeMap<String, Vec<T>>,
    b: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> CustomLue<T> {
    pub fn new(n_units: usize, n_treatments: usize) -> Self {
        Self {
            n_units,
            n_treatments,
            a: BTreeMap::new(),
            b: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, partition: &Partition, a: Vec<T>, b: Vec<T>) -> Result<()> {
        if a.len() != self.n_treatments || b.len() != self.n_units * self.n_treatments {
            return Err(Error::InvalidEstimator("coefficient arrays have the wrong length".into()));
        }
        let key = partition.encode();
        self.a.insert(key.clone(), a);
        self.b.insert(key, b);
        Ok(())
    }

    /// Builds the estimator by evaluating `f` on every partition in the support.
    pub fn from_fn(mech: &Mechanism, mut f: impl FnMut(&Partition) -> (Vec<T>, Vec<T>)) -> Result<Self> {
        let support = enumerate_support(mech, DEFAULT_SUPPORT_CAP)?;
        let mut lue = Self::new(mech.n_units(), mech.n_treatments());
        for e in support.entries() {
            let (a, b) = f(&e.partition);
            lue.insert(&e.partition, a, b)?;
        }
        Ok(lue)
    }

    fn coefficients(&self, partition: &Partition) -> Result<(&[T], &[T])> {
        let key = partition.encode();
        match (self.a.get(&key), self.b.get(&key)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::InvalidEstimator(format!("no coefficients for partition {key}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lue<T> {
    HorvitzThompson,
    Custom(CustomLue<T>),
}

/// Lemma 1 coefficients of `E[hat Y(z) hat Y(z*)]`.
#[derive(Debug, Clone)]
pub struct CrossMoments<T> {
    n: usize,
    k: usize,
    a: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> CrossMoments<T> {
    fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            a: vec![T::zero(); k * k],
            a1: vec![T::zero(); n * k * k],
            a2: vec![T::zero(); n * k * k],
            b: vec![T::zero(); n * n * k * k],
        }
    }

    fn horvitz_thompson(probs: &ProbabilityTables<T>) -> Self {
        let n = probs.n_units();
        let k = probs.n_treatments();
        let mut cm = Self::zeros(n, k);
        let n2 = T::from_usize(n * n);
        for i in 0..n {
            for j in 0..n {
                for z in 0..k {
                    for zs in 0..k {
                        let v = if i == j {
                            if z == zs {
                                T::one() / (n2 * probs.pi(i, z))
                            } else {
                                T::zero()
                            }
                        } else {
                            probs.pi2(i, j, z, zs) / (n2 * probs.pi(i, z) * probs.pi(j, zs))
                        };
                        cm.b[((i * n + j) * k + z) * k + zs] = v;
                    }
                }
            }
        }
        cm
    }

    fn by_enumeration(mech: &Mechanism, lue: &CustomLue<T>) -> Result<Self> {
        let n = mech.n_units();
        let k = mech.n_treatments();
        let mut cm = Self::zeros(n, k);
        let support = enumerate_support(mech, DEFAULT_SUPPORT_CAP)?;
        for e in support.entries() {
            let p = T::from_ratio(&e.probability);
            let (a, b) = lue.coefficients(&e.partition)?;
            let arm = e.partition.arms();
            for z in 0..k {
                for zs in 0..k {
                    cm.a[z * k + zs] += p * a[z] * a[zs];
                }
            }
            for i in 0..n {
                let zi = arm[i];
                let bi = b[i * k + zi];
                for zs in 0..k {
                    // i in T(z) for A1, i in T(z*) for A2
                    cm.a1[(i * k + zi) * k + zs] += p * bi * a[zs];
                    cm.a2[(i * k + zs) * k + zi] += p * a[zs] * bi;
                }
                for j in 0..n {
                    let zj = arm[j];
                    cm.b[((i * n + j) * k + zi) * k + zj] += p * bi * b[j * k + zj];
                }
            }
        }
        Ok(cm)
    }

    pub fn n_units(&self) -> usize {
        self.n
    }

    pub fn n_treatments(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn a(&self, z: usize, zs: usize) -> T {
        self.a[z * self.k + zs]
    }

    #[inline]
    pub fn a1(&self, i: usize, z: usize, zs: usize) -> T {
        self.a1[(i * self.k + z) * self.k + zs]
    }

    #[inline]
    pub fn a2(&self, i: usize, z: usize, zs: usize) -> T {
        self.a2[(i * self.k + z) * self.k + zs]
    }

    #[inline]
    pub fn b(&self, i: usize, j: usize, z: usize, zs: usize) -> T {
        self.b[((i * self.n + j) * self.k + z) * self.k + zs]
    }

    /// `E[hat Y(z) hat Y(z*)]` assembled from the coefficients.
    pub fn product_moment(&self, table: &PotentialOutcomes<T>, z: usize, zs: usize) -> T {
        let mut acc = self.a(z, zs);
        for i in 0..self.n {
            acc += self.a1(i, z, zs) * table.y(i, z) + self.a2(i, z, zs) * table.y(i, zs);
            for j in 0..self.n {
                acc += self.b(i, j, z, zs) * table.y(i, z) * table.y(j, zs);
            }
        }
        acc
    }
}

/// Coefficients of a quadratic functional of the science table:
/// `constant + sum_{z,i} (linear_i(z) Y_i(z) + square_i(z) Y_i(z)^2)
///  + sum_{z,z*} sum_{i != i*} cross_{ii*}(z,z*) Y_i(z) Y_i*(z*)`.
///
/// The M and R coefficients of the variance and covariance formulas, and
/// their Q-adjusted versions, all have this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoefficients<T> {
    n: usize,
    k: usize,
    pub constant: T,
    linear: Vec<T>,
    square: Vec<T>,
    cross: Vec<T>,
}

pub type MCoefficients<T> = QuadraticCoefficients<T>;

impl<T: Scalar> QuadraticCoefficients<T> {
    pub fn n_units(&self) -> usize {
        self.n
    }

    pub fn n_treatments(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn linear(&self, i: usize, z: usize) -> T {
        self.linear[i * self.k + z]
    }

    #[inline]
    pub fn square(&self, i: usize, z: usize) -> T {
        self.square[i * self.k + z]
    }

    /// Zero when `i == j`.
    #[inline]
    pub fn cross(&self, i: usize, j: usize, z: usize, zs: usize) -> T {
        self.cross[((i * self.n + j) * self.k + z) * self.k + zs]
    }

    /// Adds `g1(z) g2(z*) (q_{ii*} - 1/N^2)` to every off-diagonal cross term.
    pub fn shifted_by_q(&self, g1: &[T], g2: &[T], q: impl Fn(usize, usize) -> T) -> Self {
        let mut out = self.clone();
        let (n, k) = (self.n, self.k);
        let inv_n2 = T::one() / T::from_usize(n * n);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let d = q(i, j) - inv_n2;
                for z in 0..k {
                    for zs in 0..k {
                        out.cross[((i * n + j) * k + z) * k + zs] += g1[z] * g2[zs] * d;
                    }
                }
            }
        }
        out
    }

    /// Value on a full science table.
    pub fn evaluate(&self, table: &PotentialOutcomes<T>) -> T {
        let (n, k) = (self.n, self.k);
        let mut acc = self.constant;
        for i in 0..n {
            for z in 0..k {
                let y = table.y(i, z);
                acc += self.linear(i, z) * y + self.square(i, z) * y * y;
            }
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for z in 0..k {
                    let yi = table.y(i, z);
                    for zs in 0..k {
                        acc += self.cross(i, j, z, zs) * yi * table.y(j, zs);
                    }
                }
            }
        }
        acc
    }

    /// Pairs `(i, i*, z, z*)` with a nonzero cross term beyond `tol` but
    /// zero joint assignment probability. The first one found is returned.
    pub fn unestimable_pair(&self, probs: &ProbabilityTables<T>, tol: T) -> Option<(usize, usize, usize, usize)> {
        let (n, k) = (self.n, self.k);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for z in 0..k {
                    for zs in 0..k {
                        if probs.pi2(i, j, z, zs) == T::zero() && self.cross(i, j, z, zs).abs_val() > tol {
                            return Some((i, j, z, zs));
                        }
                    }
                }
            }
        }
        None
    }

    /// Inverse-probability plug-in estimator of [`Self::evaluate`] from
    /// observed data. Pairs with zero joint probability are skipped; callers
    /// establish beforehand that their cross terms vanish.
    pub fn estimate<V: OutcomeView<T>>(&self, view: &V, partition: &Partition, probs: &ProbabilityTables<T>) -> T {
        let n = self.n;
        let mut acc = self.constant;
        let y: Vec<T> = (0..n).map(|i| view.outcome(i, partition.arm(i))).collect();
        for i in 0..n {
            let z = partition.arm(i);
            acc += (self.linear(i, z) * y[i] + self.square(i, z) * y[i] * y[i]) / probs.pi(i, z);
        }
        for i in 0..n {
            let z = partition.arm(i);
            for j in (0..n).filter(|&j| j != i) {
                let zs = partition.arm(j);
                let p = probs.pi2(i, j, z, zs);
                if p != T::zero() {
                    acc += self.cross(i, j, z, zs) / p * y[i] * y[j];
                }
            }
        }
        acc
    }
}

/// A mechanism together with a linear unbiased estimator and its
/// precomputed probabilities and cross moments.
#[derive(Debug, Clone)]
pub struct Design<T> {
    mech: Mechanism,
    probs: ProbabilityTables<T>,
    lue: Lue<T>,
    moments: CrossMoments<T>,
}

impl<T: Scalar> Design<T> {
    pub fn horvitz_thompson(mech: Mechanism) -> Result<Self> {
        Self::new(mech, Lue::HorvitzThompson)
    }

    pub fn new(mech: Mechanism, lue: Lue<T>) -> Result<Self> {
        let probs = ProbabilityTables::new(&mech);
        let moments = match &lue {
            Lue::HorvitzThompson => {
                if let Some(&(i, z)) = mech.first_order_zeros().first() {
                    return Err(Error::InvalidEstimator(format!(
                        "Horvitz-Thompson needs pi_i(z) > 0; unit {} never receives treatment {z}",
                        i + 1
                    )));
                }
                CrossMoments::horvitz_thompson(&probs)
            }
            Lue::Custom(c) => {
                if c.n_units != mech.n_units() || c.n_treatments != mech.n_treatments() {
                    return Err(Error::InvalidEstimator("estimator shape does not match mechanism".into()));
                }
                check_unbiased(&mech, c)?;
                CrossMoments::by_enumeration(&mech, c)?
            }
        };
        Ok(Self {
            mech,
            probs,
            lue,
            moments,
        })
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mech
    }

    pub fn probabilities(&self) -> &ProbabilityTables<T> {
        &self.probs
    }

    pub fn lue(&self) -> &Lue<T> {
        &self.lue
    }

    pub fn cross_moments(&self) -> &CrossMoments<T> {
        &self.moments
    }

    pub fn n_units(&self) -> usize {
        self.mech.n_units()
    }

    pub fn n_treatments(&self) -> usize {
        self.mech.n_treatments()
    }

    /// `hat Y(z)` for every treatment.
    pub fn mean_estimates<V: OutcomeView<T>>(&self, view: &V, partition: &Partition) -> Result<Vec<T>> {
        let k = self.n_treatments();
        match &self.lue {
            Lue::HorvitzThompson => Ok((0..k).map(|z| ht_mean_estimate(view, partition, &self.probs, z)).collect()),
            Lue::Custom(c) => {
                let (a, b) = c.coefficients(partition)?;
                let mut means = a.to_vec();
                for i in 0..partition.n_units() {
                    let z = partition.arm(i);
                    means[z] += b[i * k + z] * view.outcome(i, z);
                }
                Ok(means)
            }
        }
    }

    pub fn contrast_estimate<V: OutcomeView<T>>(&self, view: &V, partition: &Partition, g: &[T]) -> Result<T> {
        Ok(contrast_estimate(g, &self.mean_estimates(view, partition)?))
    }

    /// Theorem-1 coefficients `M`, `M_i(z)`, `M_ii(z)`, `M_ii*(z,z*)`.
    pub fn m_coefficients(&self, g: &[T]) -> MCoefficients<T> {
        let cm = &self.moments;
        let (n, k) = (cm.n, cm.k);
        let mut constant = T::zero();
        for z in 0..k {
            for zs in 0..k {
                constant += g[z] * g[zs] * cm.a(z, zs);
            }
        }
        let mut linear = vec![T::zero(); n * k];
        let mut square = vec![T::zero(); n * k];
        for i in 0..n {
            for z in 0..k {
                let s: T = (0..k).map(|zs| g[zs] * (cm.a1(i, z, zs) + cm.a2(i, zs, z))).sum();
                linear[i * k + z] = g[z] * s;
                square[i * k + z] = g[z] * g[z] * cm.b(i, i, z, z);
            }
        }
        let cross = self.cross_terms(g, g);
        QuadraticCoefficients {
            n,
            k,
            constant,
            linear,
            square,
            cross,
        }
    }

    /// Theorem-3 coefficients `R`, `R_i(z)`, `R_ii(z)`, `R_ii*(z,z*)`.
    pub fn r_coefficients(&self, g1: &[T], g2: &[T]) -> QuadraticCoefficients<T> {
        let cm = &self.moments;
        let (n, k) = (cm.n, cm.k);
        let mut constant = T::zero();
        for z in 0..k {
            for zs in 0..k {
                constant += g1[z] * g2[zs] * cm.a(z, zs);
            }
        }
        let mut linear = vec![T::zero(); n * k];
        let mut square = vec![T::zero(); n * k];
        for i in 0..n {
            for z in 0..k {
                let s1: T = (0..k).map(|zs| g2[zs] * cm.a1(i, z, zs)).sum();
                let s2: T = (0..k).map(|zs| g1[zs] * cm.a2(i, zs, z)).sum();
                linear[i * k + z] = g1[z] * s1 + g2[z] * s2;
                square[i * k + z] = g1[z] * g2[z] * cm.b(i, i, z, z);
            }
        }
        let cross = self.cross_terms(g1, g2);
        QuadraticCoefficients {
            n,
            k,
            constant,
            linear,
            square,
            cross,
        }
    }

    fn cross_terms(&self, g1: &[T], g2: &[T]) -> Vec<T> {
        let cm = &self.moments;
        let (n, k) = (cm.n, cm.k);
        let mut cross = vec![T::zero(); n * n * k * k];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for z in 0..k {
                    for zs in 0..k {
                        let idx = ((i * n + j) * k + z) * k + zs;
                        cross[idx] = g1[z] * g2[zs] * cm.b[idx];
                    }
                }
            }
        }
        cross
    }

    /// `var(hat tau)` via the M coefficients.
    pub fn sampling_variance(&self, table: &PotentialOutcomes<T>, g: &[T]) -> T {
        let tau = contrast_of(table, g);
        self.m_coefficients(g).evaluate(table) - tau * tau
    }

    /// `cov(hat tau_1, hat tau_2)` via the R coefficients.
    pub fn sampling_covariance(&self, table: &PotentialOutcomes<T>, g1: &[T], g2: &[T]) -> T {
        self.r_coefficients(g1, g2).evaluate(table) - contrast_of(table, g1) * contrast_of(table, g2)
    }

    /// `var(hat tau)` as `sum g(z) g(z*) E[hat Y(z) hat Y(z*)] - tau^2`, with
    /// the product moments taken from Lemma 1.
    pub fn sampling_variance_pairwise(&self, table: &PotentialOutcomes<T>, g: &[T]) -> T {
        let k = self.n_treatments();
        let tau = contrast_of(table, g);
        let mut acc = T::zero();
        for z in 0..k {
            for zs in 0..k {
                if g[z] != T::zero() && g[zs] != T::zero() {
                    acc += g[z] * g[zs] * self.moments.product_moment(table, z, zs);
                }
            }
        }
        acc - tau * tau
    }
}

fn contrast_of<T: Scalar>(table: &PotentialOutcomes<T>, g: &[T]) -> T {
    let n = T::from_usize(table.n_units());
    (0..table.n_units())
        .map(|i| (0..g.len()).map(|z| g[z] * table.y(i, z)).sum::<T>())
        .sum::<T>()
        / n
}

/// Structural unbiasedness: `sum_T p a(T,z) = 0` and
/// `sum_{T: i in T(z)} p b_i(T,z) = 1/N`.
fn check_unbiased<T: Scalar>(mech: &Mechanism, lue: &CustomLue<T>) -> Result<()> {
    let n = mech.n_units();
    let k = mech.n_treatments();
    let support = enumerate_support(mech, DEFAULT_SUPPORT_CAP)?;
    let mut sum_a = vec![T::zero(); k];
    let mut sum_b = vec![T::zero(); n * k];
    let mut scale_a = T::zero();
    for e in support.entries() {
        let p = T::from_ratio(&e.probability);
        let (a, b) = lue.coefficients(&e.partition)?;
        for z in 0..k {
            sum_a[z] += p * a[z];
            scale_a = scale_a.max_val(a[z].abs_val());
        }
        for i in 0..n {
            let z = e.partition.arm(i);
            sum_b[i * k + z] += p * b[i * k + z];
        }
    }
    let inv_n = T::one() / T::from_usize(n);
    for z in 0..k {
        if sum_a[z].abs_val() > T::tol(1e-12) * scale_a.max_val(T::one()) {
            return Err(Error::InvalidEstimator(format!(
                "E[a(T, {z})] = {:?}, expected 0",
                sum_a[z]
            )));
        }
        for i in 0..n {
            if (sum_b[i * k + z] - inv_n).abs_val() > T::tol(1e-12) * inv_n {
                return Err(Error::InvalidEstimator(format!(
                    "sum of p(T) b_{}(T, {z}) over T(z) containing the unit is {:?}, expected 1/N",
                    i + 1,
                    sum_b[i * k + z]
                )));
            }
        }
    }
    Ok(())
}

/// Aligns a contrast to the columns of `table`.
pub fn aligned<T: Scalar>(table: &PotentialOutcomes<T>, c: &Contrast<T>) -> Result<Vec<T>> {
    c.aligned(table.treatments())
}

pub fn sampling_variance<T: Scalar>(design: &Design<T>, table: &PotentialOutcomes<T>, c: &Contrast<T>) -> Result<T> {
    check_shape(design, table)?;
    Ok(design.sampling_variance(table, &aligned(table, c)?))
}

pub fn sampling_covariance<T: Scalar>(
    design: &Design<T>,
    table: &PotentialOutcomes<T>,
    c1: &Contrast<T>,
    c2: &Contrast<T>,
) -> Result<T> {
    check_shape(design, table)?;
    Ok(design.sampling_covariance(table, &aligned(table, c1)?, &aligned(table, c2)?))
}

pub(crate) fn check_shape<T: Scalar>(design: &Design<T>, table: &PotentialOutcomes<T>) -> Result<()> {
    if design.n_units() != table.n_units() || design.n_treatments() != table.n_treatments() {
        return Err(Error::Dimension(format!(
            "mechanism is {}x{}, table is {}x{}",
            design.n_units(),
            design.n_treatments(),
            table.n_units(),
            table.n_treatments()
        )));
    }
    Ok(())
}

/// Components of the two-arm Neymanian decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeymanDecomposition<T> {
    pub s00: T,
    pub s11: T,
    pub s_tau: T,
    pub variance: T,
}

/// `S(0,0)/r(0) + S(1,1)/r(1) - S(tau,tau)/N` for a two-arm completely
/// randomized design.
pub fn neyman_two_arm_variance<T: Scalar>(table: &PotentialOutcomes<T>, r0: usize, r1: usize) -> Result<NeymanDecomposition<T>> {
    if table.n_treatments() != 2 {
        return Err(Error::Dimension(format!(
            "Neymanian decomposition needs 2 treatments, table has {}",
            table.n_treatments()
        )));
    }
    let n = table.n_units();
    if r0 + r1 != n || r0 == 0 || r1 == 0 {
        return Err(Error::InvalidMechanism(format!("r(0) + r(1) must equal N = {n} with both positive")));
    }
    let y0 = table.column(0);
    let y1 = table.column(1);
    let tau: Vec<T> = y0.iter().zip(&y1).map(|(&a, &b)| b - a).collect();
    let s00 = sample_variance(&y0);
    let s11 = sample_variance(&y1);
    let s_tau = sample_variance(&tau);
    let variance = s00 / T::from_usize(r0) + s11 / T::from_usize(r1) - s_tau / T::from_usize(n);
    Ok(NeymanDecomposition {
        s00,
        s11,
        s_tau,
        variance,
    })
}

/// Variance with divisor `n - 1`.
pub fn sample_variance<T: Scalar>(x: &[T]) -> T {
    let n = T::from_usize(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
}
