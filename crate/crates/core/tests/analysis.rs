use uwise_core::analysis::*;
use uwise_core::*;

const LOGNORMAL: SamplerSpec = SamplerSpec::Lognormal { sigma: 1.0 };

#[test]
fn single_block_hoeffding_is_an_identity() {
    let rep = check_hoeffding(&LOGNORMAL, 6, 6, 5_000, SeedTree::new(1), DEFAULT_CAP).unwrap();
    let (s, c) = (rep.row("standard").unwrap(), rep.row("complete").unwrap());
    assert_eq!(s.variance, c.variance);
    assert!(rep.all_passed(), "{:#?}", rep.checks);
}

#[test]
fn identity_residual_is_consistent_across_replicate_counts() {
    for (r, seed) in [(10_000, 2), (100_000, 3)] {
        let rep = check_ordering_and_fraction(&LOGNORMAL, 8, 4, 5, r, SeedTree::new(seed), DEFAULT_CAP).unwrap();
        let res = rep.derived("permuted_identity_residual").unwrap();
        let z = res.value.unwrap().abs() / res.std_error.unwrap();
        assert!(z < BAND_SE, "R={r}: residual {:?}", res);
        assert!(rep.all_passed(), "R={r}: {:#?}", rep.checks);
    }
}

#[test]
fn fraction_reported_with_uncertainty() {
    let rep = check_ordering_and_fraction(&LOGNORMAL, 8, 4, 4, 20_000, SeedTree::new(4), DEFAULT_CAP).unwrap();
    let f = rep.derived("variance_reduction_fraction").unwrap();
    assert_eq!(f.target, Some(0.75));
    assert!(f.std_error.unwrap() > 0.0);
    assert!(rep.rows.iter().all(|r| r.variance >= 0.0));
}

#[test]
fn degenerate_sampler_leaves_fraction_undefined() {
    let rep = check_ordering_and_fraction(
        &SamplerSpec::Constant { value: 1.0 },
        8,
        4,
        4,
        100,
        SeedTree::new(5),
        DEFAULT_CAP,
    )
    .unwrap();
    assert_eq!(rep.derived("variance_reduction_fraction").unwrap().value, None);
    assert!(rep.warnings.iter().any(|w| w.contains("undefined")));
}

#[test]
fn gradient_ratios_are_one_when_m_is_one() {
    let model = ModelSpec::Logistic { n_data: 40, dim: 3, prior_sd: 1.0 }.build(SeedTree::new(6)).unwrap();
    let family = GaussianFamily::new(FamilyKind::Diagonal, 3);
    let params = family.init_params(&mut SeedTree::new(7).rng());
    let (rep, stats) =
        gradient_variance_report(&model, &family, &params, BaseKind::Reparam, 6, 1, 4, 500, SeedTree::new(8), DEFAULT_CAP)
            .unwrap();
    for s in &stats {
        let r = s.trace_ratio_to_standard;
        match s.estimator.as_str() {
            "complete" | "permuted" => assert!((r.value - 1.0).abs() < 1e-10, "{}: {r:?}", s.estimator),
            // k singletons drawn with replacement from the n samples:
            // var = var(V)/n + (1 - 1/n) var(V)/k, so the ratio is 1 + (n-1)/k.
            "random" => {
                let target = 1.0 + 5.0 / 24.0;
                assert!((r.value - target).abs() <= BAND_SE * r.std_error, "{r:?}")
            }
            _ => assert!((r.value - 1.0).abs() <= BAND_SE * r.std_error.max(1e-3), "{}: {r:?}", s.estimator),
        }
    }
    assert!(rep.all_passed());
}

#[test]
fn vanishing_scale_makes_gradients_deterministic() {
    let model = ModelSpec::Logistic { n_data: 40, dim: 3, prior_sd: 1.0 }.build(SeedTree::new(9)).unwrap();
    let family = GaussianFamily::new(FamilyKind::Diagonal, 3);
    let mut params = family.init_params(&mut SeedTree::new(10).rng());
    let mut traces = Vec::new();
    for log_scale in [-1.0, -4.0, -8.0] {
        for p in &mut params[3..] {
            *p = log_scale;
        }
        let (_, stats) = gradient_variance_report(
            &model,
            &family,
            &params,
            BaseKind::Reparam,
            8,
            4,
            5,
            400,
            SeedTree::new(11),
            DEFAULT_CAP,
        )
        .unwrap();
        traces.push(stats[0].trace_variance.value);
        if log_scale == -8.0 {
            for s in &stats {
                let r = s.sq_norm_ratio_to_standard.value;
                assert!((r - 1.0).abs() < 1e-3, "{}: {r}", s.estimator);
            }
        }
    }
    assert!(traces[0] > traces[1] && traces[1] > traces[2], "{traces:?}");
}

#[test]
fn zeta_grows_with_overlap() {
    let z: Vec<ZetaEstimate> =
        (0..=4).map(|c| estimate_zeta(&LOGNORMAL, 4, c, 20_000, SeedTree::new(12).index(c as u64)).unwrap()).collect();
    assert!(z[0].value.abs() <= BAND_SE * z[0].std_error);
    let se = (z[1].std_error.powi(2) + z[4].std_error.powi(2)).sqrt();
    assert!(z[1].value < z[4].value + BAND_SE * se);
    assert!(4.0 * z[1].value <= z[4].value + BAND_SE * (16.0 * z[1].std_error.powi(2) + z[4].std_error.powi(2)).sqrt());
}
