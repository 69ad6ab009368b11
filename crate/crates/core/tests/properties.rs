use finpop::assignment::{enumerate_support, sample, sample_seeded, support_size, Mechanism, DEFAULT_SUPPORT_CAP};
use finpop::estimation::MaskedView;
use finpop::oracle::Oracle;
use finpop::population::{unit_contrasts_aligned, FactorialStructure, Grouping, PotentialOutcomes};
use finpop::qframework::{bias, c_q_hat, ga_condition, random_q, v_q, v_q_hat};
use finpop::rng::StreamRng;
use finpop::{Design, Exact, QMatrix};
use num_traits::One;
use proptest::prelude::*;

fn table_from(values: &[f64], n: usize, k: usize) -> PotentialOutcomes<f64> {
    let rows = (0..n).map(|i| values[i * k..(i + 1) * k].to_vec()).collect();
    PotentialOutcomes::from_rows(rows).unwrap()
}

fn counts_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 2..4)
}

fn contrast_for(k: usize, raw: &[f64]) -> Vec<f64> {
    let mut g = raw[..k].to_vec();
    let m = g.iter().sum::<f64>() / k as f64;
    for x in &mut g {
        *x -= m;
    }
    if g.iter().all(|x| x.abs() < 1e-3) {
        g[0] = 1.0;
        g[1] = -1.0;
        for x in &mut g[2..] {
            *x = 0.0;
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_holds_for_any_q(
        counts in counts_strategy(),
        values in prop::collection::vec(-10.0f64..10.0, 9 * 3),
        raw_g in prop::collection::vec(-2.0f64..2.0, 3),
        seed in any::<u64>(),
    ) {
        let k = counts.len();
        let n: usize = counts.iter().sum();
        prop_assume!(n >= 2);
        let t = table_from(&values, n, k);
        let g = contrast_for(k, &raw_g);
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(counts).unwrap()).unwrap();
        let var = d.sampling_variance(&t, &g);
        let tau = unit_contrasts_aligned(&t, &g);
        let mut qs = vec![QMatrix::strict(n).unwrap()];
        if n % 2 == 0 {
            qs.push(QMatrix::half(n).unwrap());
        }
        let mut rng = StreamRng::new(seed, 0);
        qs.extend(random_q(n, &mut rng));
        for q in &qs {
            let vq = v_q(&d, &t, &g, q).unwrap();
            let b = bias(q, &tau).unwrap();
            let scale = vq.abs().max(b.abs()).max(1e-12);
            prop_assert!((vq - b - var).abs() <= 1e-10 * scale);
            prop_assert!(vq >= var - 1e-10 * scale);
            prop_assert!(b >= -1e-10 * scale);
        }
    }

    #[test]
    fn covariance_is_bilinear_and_symmetric(
        counts in counts_strategy(),
        values in prop::collection::vec(-5.0f64..5.0, 9 * 3),
        a in prop::collection::vec(-2.0f64..2.0, 3),
        b in prop::collection::vec(-2.0f64..2.0, 3),
        c in prop::collection::vec(-2.0f64..2.0, 3),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let k = counts.len();
        let n: usize = counts.iter().sum();
        let t = table_from(&values, n, k);
        let (g1, g1p, g2) = (contrast_for(k, &a), contrast_for(k, &b), contrast_for(k, &c));
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(counts).unwrap()).unwrap();
        let mix: Vec<f64> = g1.iter().zip(&g1p).map(|(x, y)| alpha * x + beta * y).collect();
        let lhs = d.sampling_covariance(&t, &mix, &g2);
        let rhs = alpha * d.sampling_covariance(&t, &g1, &g2) + beta * d.sampling_covariance(&t, &g1p, &g2);
        let scale = 1.0 + lhs.abs() + rhs.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        let s12 = d.sampling_covariance(&t, &g1, &g2);
        let s21 = d.sampling_covariance(&t, &g2, &g1);
        prop_assert!((s12 - s21).abs() <= 1e-10 * (1.0 + s12.abs()));
        let v = d.sampling_variance(&t, &g1);
        prop_assert!((d.sampling_covariance(&t, &g1, &g1) - v).abs() <= 1e-10 * (1.0 + v.abs()));
        prop_assert!((d.sampling_variance_pairwise(&t, &g1) - v).abs() <= 1e-10 * (1.0 + v.abs()));
    }

    #[test]
    fn strict_additivity_gives_ga_for_every_q(
        base in prop::collection::vec(-10.0f64..10.0, 8),
        shifts in prop::collection::vec(-3.0f64..3.0, 3),
        seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = base.iter().map(|&b| shifts.iter().map(|s| b + s).collect()).collect();
        let t = PotentialOutcomes::from_rows(rows).unwrap();
        prop_assert!(ga_condition(&QMatrix::strict(8).unwrap(), &t, 1e-9).ok);
        let mut rng = StreamRng::new(seed, 1);
        for _ in 0..5 {
            if let Some(q) = random_q(8, &mut rng) {
                prop_assert!(ga_condition(&q, &t, 1e-9).ok);
            }
        }
    }

    #[test]
    fn half_bias_is_squared_mean_gap(tau in prop::collection::vec(-5.0f64..5.0, 2..8)) {
        let mut tau = tau;
        if tau.len() % 2 == 1 {
            tau.pop();
        }
        prop_assume!(tau.len() >= 2);
        let n0 = tau.len() / 2;
        let m1 = tau[..n0].iter().sum::<f64>() / n0 as f64;
        let m2 = tau[n0..].iter().sum::<f64>() / n0 as f64;
        let b = bias(&QMatrix::half(tau.len()).unwrap(), &tau).unwrap();
        prop_assert!((b - (m1 - m2).powi(2) / 4.0).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn lambda_max_is_homogeneous(n in 2usize..12, alpha in 0.1f64..10.0) {
        let q = QMatrix::<f64>::strict(n).unwrap();
        let l = q.lambda_max();
        prop_assert!((q.scaled(alpha).lambda_max() - alpha * l).abs() <= 1e-12 * alpha * l);
    }

    #[test]
    fn samples_respect_counts(counts in prop::collection::vec(vec![1usize..4, 1..4], 2), seed in any::<u64>()) {
        let k = counts[0].len().min(counts[1].len()).max(2);
        let counts: Vec<Vec<usize>> = counts.iter().map(|c| {
            let mut c = c.clone();
            c.resize(k, 1);
            c
        }).collect();
        let sizes: Vec<usize> = counts.iter().map(|c| c.iter().sum()).collect();
        let strata = Grouping::contiguous(&sizes);
        let mech = Mechanism::stratified(strata.clone(), counts.clone()).unwrap();
        let p = sample_seeded(&mech, seed);
        prop_assert_eq!(&p, &sample_seeded(&mech, seed));
        for (h, c) in counts.iter().enumerate() {
            for (z, &r) in c.iter().enumerate() {
                prop_assert_eq!(strata.members(h).iter().filter(|&&i| p.arm(i) == z).count(), r);
            }
        }
    }

    #[test]
    fn c_q_hat_with_equal_contrasts_is_v_q_hat(
        values in prop::collection::vec(-5.0f64..5.0, 6 * 2),
        seed in any::<u64>(),
    ) {
        let t = table_from(&values, 6, 2);
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(vec![3, 3]).unwrap()).unwrap();
        let p = sample_seeded(d.mechanism(), seed);
        let view = MaskedView::new(&t, &p);
        let q = QMatrix::strict(6).unwrap();
        let g = [-1.0, 1.0];
        let a = v_q_hat(&d, &view, &p, &g, &q).unwrap();
        let b = c_q_hat(&d, &view, &p, &g, &g, &q).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_oracle_identities(values in prop::collection::vec(-6i64..6, 5 * 3)) {
        let rows: Vec<Vec<Exact>> = (0..5)
            .map(|i| (0..3).map(|z| Exact::from_integer(values[i * 3 + z] as i128)).collect())
            .collect();
        let t = PotentialOutcomes::from_rows(rows).unwrap();
        let d = Design::horvitz_thompson(Mechanism::completely_randomized(vec![2, 2, 1]).unwrap()).unwrap();
        let o = Oracle::new(&d, &t).unwrap();
        let g: Vec<Exact> = [1, -2, 1].iter().map(|&x| Exact::from_integer(x)).collect();
        let h: Vec<Exact> = [-1, 0, 1].iter().map(|&x| Exact::from_integer(x)).collect();
        prop_assert_eq!(o.verify_unbiasedness(&g).unwrap().abs, 0.0);
        prop_assert_eq!(o.verify_variance(&g).unwrap().abs, 0.0);
        prop_assert_eq!(o.verify_covariance(&g, &h).unwrap().abs, 0.0);
        prop_assert_eq!(o.verify_decomposition(&g, &QMatrix::strict(5).unwrap()).unwrap().abs, 0.0);
    }
}

#[test]
fn support_weights_sum_to_one() {
    let mechs = [
        Mechanism::completely_randomized(vec![2, 2, 2]).unwrap(),
        Mechanism::stratified(Grouping::contiguous(&[3, 3]), vec![vec![1, 2], vec![2, 1]]).unwrap(),
        Mechanism::split_plot(4, 2, vec![2, 2], vec![1, 1]).unwrap(),
        Mechanism::unicluster(Grouping::contiguous(&[1, 2, 3])).unwrap(),
    ];
    for m in &mechs {
        let s = enumerate_support(m, DEFAULT_SUPPORT_CAP).unwrap();
        assert!(s.total_probability().is_one());
        assert_eq!(support_size(m), (s.len() as u64).into());
        let encodings: Vec<String> = s.entries().iter().map(|e| e.partition.encode()).collect();
        let mut sorted = encodings.clone();
        sorted.sort();
        assert_eq!(encodings, sorted);
    }
}

#[test]
fn first_order_frequencies_match() {
    let m = Mechanism::completely_randomized(vec![1, 3]).unwrap();
    let mut rng = StreamRng::new(11, 0);
    let draws = 20_000;
    let hits = (0..draws).filter(|_| sample(&m, &mut rng).arm(0) == 0).count();
    let p = hits as f64 / draws as f64;
    // sd = sqrt(0.25 * 0.75 / 20000) ~ 0.003
    assert!((p - 0.25).abs() < 0.015, "{p}");
}

#[test]
#[should_panic(expected = "unobserved")]
fn estimator_cannot_read_unobserved_cells() {
    use finpop::population::OutcomeView;
    let t = PotentialOutcomes::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let p = finpop::Partition::new(vec![0, 1], 2).unwrap();
    let v = MaskedView::new(&t, &p);
    assert_eq!(v.outcome(0, 0), 1.0);
    v.outcome(0, 1);
}

#[test]
fn distinct_factorial_effects_are_orthogonal() {
    let labels = FactorialStructure::<f64>::new(vec![2, 3], vec![true, false]).treatment_labels();
    let effects = [vec![true, false], vec![false, true], vec![true, true]];
    let gs: Vec<Vec<f64>> = effects
        .iter()
        .map(|e| {
            FactorialStructure::<f64>::new(vec![2, 3], e.clone())
                .contrast()
                .unwrap()
                .aligned(&labels)
                .unwrap()
        })
        .collect();
    for i in 0..gs.len() {
        assert!(gs[i].iter().sum::<f64>().abs() < 1e-12);
        for j in i + 1..gs.len() {
            let dot: f64 = gs[i].iter().zip(&gs[j]).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-12, "{i} {j} {dot}");
        }
    }
}
