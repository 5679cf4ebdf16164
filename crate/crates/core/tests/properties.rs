use proptest::prelude::*;

use linproc_ustat::bench::{asymptotic_variance, relative_variance_increase, Moments, VarianceKind};
use linproc_ustat::constrained::{a_star_hat, constrained_estimate};
use linproc_ustat::process::DEFAULT_TAIL_TOL;
use linproc_ustat::ustat::{choose_m, injective_tuple_count, ustat_exact, ustat_incomplete, BetaSequence};
use linproc_ustat::{CoefficientModel, ConstraintSpec, InnovationSpec, ProcessPath, SeedStream, SmoothFunction};

fn kernel_from(i: u8, t: f64) -> SmoothFunction {
    match i % 4 {
        0 => SmoothFunction::square(),
        1 => SmoothFunction::abs(),
        2 => SmoothFunction::identity(),
        _ => SmoothFunction::cos_t(t),
    }
}

/// Data, coefficients and kernel for a tiny U-statistic with n <= 7, m <= 3.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, u8, f64)> {
    (2usize..=7)
        .prop_flat_map(|n| (Just(n), 1usize..=n.min(3)))
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec(-1.0f64..1.0, m),
                any::<u8>(),
                0.2f64..2.0,
            )
        })
}

fn falling_factorial(n: usize, m: usize) -> f64 {
    (0..m).map(|i| (n - i) as f64).product()
}

fn gamma_moments(shape: f64) -> Moments {
    Moments {
        mu2: shape,
        mu3: 2.0 * shape,
        mu4: 3.0 * shape * shape + 6.0 * shape,
        fisher_info: Some(1.0 / (shape - 2.0)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bucket_identity_is_exact((x, beta, k, t) in instance()) {
        let h = kernel_from(k, t);
        let res = ustat_exact(&x, &beta, &h, 1 << 20).unwrap();
        let n = x.len();
        prop_assert_eq!(res.tuples_used as f64, falling_factorial(n, beta.len()));
        for r in 0..beta.len() {
            let mut acc = 0.0;
            for j in 0..n {
                let c = res.buckets.count(r, j);
                prop_assert_eq!(c as f64, falling_factorial(n - 1, beta.len() - 1));
                acc += c as f64 / res.tuples_used as f64 * res.buckets.mean(r, j).unwrap();
            }
            prop_assert!((acc - res.kappa_tilde).abs() <= 1e-12 * res.kappa_tilde.abs().max(1.0));
        }
    }

    #[test]
    fn bucket_identity_holds_for_sampled_tuples((x, beta, k, t) in instance(), seed in any::<u64>()) {
        let h = kernel_from(k, t);
        let res = ustat_incomplete(&x, &beta, &h, 500, &SeedStream::new(seed), 2).unwrap();
        for r in 0..beta.len() {
            let acc: f64 = (0..x.len())
                .filter_map(|j| res.buckets.mean(r, j).map(|m| res.buckets.count(r, j) as f64 * m))
                .sum();
            let got = acc / res.tuples_used as f64;
            prop_assert!((got - res.kappa_tilde).abs() <= 1e-12 * res.kappa_tilde.abs().max(1.0));
        }
    }

    #[test]
    fn tuple_count_is_falling_factorial(n in 1usize..40, m in 1usize..6) {
        prop_assume!(m <= n);
        prop_assert_eq!(injective_tuple_count(n, m), falling_factorial(n, m));
    }

    #[test]
    fn chosen_order_stays_in_range(n in 8usize..2_000_000, ratio in 0.05f64..0.95) {
        let c = choose_m(n, &BetaSequence::geometric(1.0, ratio), 1.0, 0.1).unwrap();
        prop_assert!(c.m >= 1 && c.m <= n);
        prop_assert!((c.m as f64).powi(4) <= n as f64 / 2.0 || c.m == 1);
    }

    #[test]
    fn finite_coefficients_fix_the_order(n in 8usize..100_000, p in 1usize..6) {
        let beta = BetaSequence::finite((0..p).map(|i| 1.0 / (i + 1) as f64).collect());
        prop_assert_eq!(choose_m(n, &beta, 1.0, 0.1).unwrap().m, p.min(n));
    }

    #[test]
    fn zero_correction_leaves_estimate((x, beta, k, t) in instance(), a in -5.0f64..5.0) {
        let h = kernel_from(k, t);
        let res = ustat_exact(&x, &beta, &h, 1 << 20).unwrap();
        let psi = ConstraintSpec::identity();
        prop_assert_eq!(constrained_estimate(&res, 0.0, &x, &psi), res.kappa_tilde);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let got = constrained_estimate(&res, a, &x, &psi);
        prop_assert!((got - (res.kappa_tilde - a * mean)).abs() <= 1e-12 * got.abs().max(1.0));
    }

    #[test]
    fn constant_kernel_gives_closed_form_a_star((x, beta, _k, _t) in instance(), c in -4.0f64..4.0) {
        let ss: f64 = x.iter().map(|v| v * v).sum();
        prop_assume!(ss > 1e-6);
        let res = ustat_exact(&x, &beta, &SmoothFunction::constant(c), 1 << 20).unwrap();
        let got = a_star_hat(&x, &res, &ConstraintSpec::identity()).unwrap().a_star_hat;
        let want = c * beta.len() as f64 * x.iter().sum::<f64>() / ss;
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn improved_target_drops_the_skewness_term(theta in -0.95f64..0.95, shape in 2.2f64..20.0) {
        let m = gamma_moments(shape);
        let emp = asymptotic_variance(VarianceKind::Empirical, theta, &m).unwrap();
        let imp = asymptotic_variance(VarianceKind::Improved, theta, &m).unwrap();
        let drop = m.mu3 * m.mu3 / (m.mu2 * (1.0 - theta * theta).powi(2));
        prop_assert!((emp - imp - drop).abs() <= 1e-9 * emp);
        let ls = asymptotic_variance(VarianceKind::UstatLs, theta, &m).unwrap();
        prop_assert!((ls - imp).abs() <= 1e-9 * imp);
    }

    #[test]
    fn ratios_match_variances(theta in -0.95f64..0.95, shape in 2.2f64..20.0) {
        let m = gamma_moments(shape);
        let eff = asymptotic_variance(VarianceKind::Efficient, theta, &m).unwrap();
        for kind in [VarianceKind::Empirical, VarianceKind::Improved] {
            let v = asymptotic_variance(kind, theta, &m).unwrap();
            let r = relative_variance_increase(kind, theta, &m).unwrap();
            prop_assert!((r - (v - eff) / eff).abs() <= 1e-9 * r.abs().max(1.0));
            prop_assert!(r >= 0.0);
        }
    }

    #[test]
    fn derived_streams_reproduce(seed in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        prop_assume!(i != j);
        let spec = InnovationSpec::standard_normal();
        let s = SeedStream::new(seed);
        let a = spec.sample(8, &s.derive("x", i));
        prop_assert_eq!(&a, &spec.sample(8, &s.derive("x", i)));
        prop_assert_ne!(&a, &spec.sample(8, &s.derive("x", j)));
        prop_assert_ne!(&a, &spec.sample(8, &s.derive("y", i)));
    }

    #[test]
    fn path_csv_round_trip(pre in prop::collection::vec(-1e3f64..1e3, 1..5), obs in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let p = ProcessPath::new(pre, obs).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = ProcessPath::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.all_values(), p.all_values());
        prop_assert_eq!(back.r(), p.r());
    }

    #[test]
    fn ar1_recovery_inverts_simulation(theta in -0.9f64..0.9, seed in any::<u64>()) {
        let model = CoefficientModel::ar1();
        let path = model
            .simulate(&[theta], &InnovationSpec::standard_normal(), 50, 1, &SeedStream::new(seed), DEFAULT_TAIL_TOL)
            .unwrap();
        let x = model.recover_innovations(&path, &[theta]).unwrap();
        let truth = path.true_innovations.clone().unwrap();
        for (a, b) in x.iter().zip(&truth) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

fn mc_mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn families() -> Vec<InnovationSpec> {
    vec![
        InnovationSpec::standard_normal(),
        InnovationSpec::centered_gamma(3.0).unwrap(),
        InnovationSpec::centered_laplace(1.5).unwrap(),
        InnovationSpec::centered_uniform(2.0).unwrap(),
        InnovationSpec::two_point(0.3, 1.0).unwrap(),
    ]
}

#[test]
fn sampled_moments_match_declared() {
    for (i, spec) in families().into_iter().enumerate() {
        let x = spec.sample(1_000_000, &SeedStream::new(71).derive("family", i as u64));
        for k in 2..=4 {
            let (m, se) = mc_mean_se(x.iter().map(|v| v.powi(k as i32)));
            let want = spec.moment(k).unwrap();
            assert!((m - want).abs() <= 4.0 * se, "{} k={k}: {m} vs {want} (se {se})", spec.name());
        }
    }
}

#[test]
fn score_has_mean_zero_and_second_moment_information() {
    for (i, spec) in families().into_iter().enumerate() {
        let Ok(info) = spec.fisher_info() else {
            continue;
        };
        let x = spec.sample(1_000_000, &SeedStream::new(72).derive("family", i as u64));
        let scores: Vec<f64> = x.iter().map(|&v| spec.score(v).unwrap()).collect();
        let (m1, se1) = mc_mean_se(scores.iter().copied());
        let (m2, se2) = mc_mean_se(scores.iter().map(|s| s * s));
        assert!(m1.abs() <= 4.0 * se1, "{}: mean score {m1} (se {se1})", spec.name());
        // Laplace scores are +-1/b, so their square has no sampling noise.
        assert!((m2 - info).abs() <= 4.0 * se2 + 1e-9,"{}: {m2} vs {info} (se {se2})", spec.name());
    }
}

#[test]
fn ratios_approach_information_gap_near_unit_root() {
    let m = gamma_moments(3.0);
    // mu2 I - 1 = 2
    let mut last = f64::INFINITY;
    for theta in [0.9, 0.99, 0.999, 0.9999] {
        let e = relative_variance_increase(VarianceKind::Empirical, theta, &m).unwrap();
        let i = relative_variance_increase(VarianceKind::Improved, theta, &m).unwrap();
        let gap = (e - 2.0).abs().max((i - 2.0).abs());
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-2, "{last}");
}

#[test]
fn normal_innovations_have_zero_improved_ratio() {
    let m = Moments::of(&InnovationSpec::standard_normal());
    for theta in [-0.8, 0.0, 0.3, 0.7] {
        let r = relative_variance_increase(VarianceKind::Improved, theta, &m).unwrap();
        assert!(r.abs() < 1e-12);
    }
}
