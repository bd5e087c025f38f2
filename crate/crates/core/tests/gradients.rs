mod common;

use uwise_core::analysis::{gradient_replicates, stats};
use uwise_core::gradients::{batch_at, draw_noise};
use uwise_core::*;

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut worst = (0.0, String::new());
    for c in 1000..1064 {
        let case = common::fd_case(c);
        if case.rel_err > worst.0 {
            worst = (case.rel_err, case.label.clone());
        }
        assert!(case.rel_err <= 1e-5, "{}: {:.3e}", case.label, case.rel_err);
    }
    eprintln!("worst relative error {:.3e} ({})", worst.0, worst.1);
}

#[test]
fn fd_oracle_examples() {
    let p = [0.3, -1.2, 2.0];
    let quad = finite_difference_gradient(|x| 0.5 * x.iter().map(|t| t * t).sum::<f64>(), &p, 1e-4).unwrap();
    assert!(common::rel_l2(&quad, &p) < 1e-9);
    let a = [1.5, -0.5, 4.0];
    let lin = finite_difference_gradient(|x| x.iter().zip(&a).map(|(s, t)| s * t).sum(), &p, 1e-3).unwrap();
    assert!(common::rel_l2(&lin, &a) < 1e-12);
    assert!(finite_difference_gradient(|_| 0.0, &p, 0.0).is_err());
}

fn mean_columns(rows: &[GradientVector]) -> Vec<stats::Estimate> {
    (0..rows[0].len())
        .map(|j| stats::mean_estimate(&rows.iter().map(|g| g.0[j]).collect::<Vec<_>>()))
        .collect()
}

#[test]
fn reparam_and_dreg_share_expectation() {
    let model = LinearGaussian::synthetic(2, 4, 1.0, &mut SeedTree::new(1).rng()).unwrap();
    let family = GaussianFamily::new(FamilyKind::FullRank, 2);
    let params: Vec<f64> = family.init_params(&mut SeedTree::new(2).rng()).iter().map(|p| 0.5 * p).collect();
    let specs = [
        GradientSpec::new(ObjectiveKind::Permuted { ell: 4 }, BaseKind::Reparam),
        GradientSpec::new(ObjectiveKind::Permuted { ell: 4 }, BaseKind::Dreg),
    ];
    let g = gradient_replicates(&specs, &model, &family, &params, 8, 4, 20_000, SeedTree::new(3)).unwrap();
    let (a, b) = (mean_columns(&g[0]), mean_columns(&g[1]));
    for (x, y) in a.iter().zip(&b) {
        let se = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
        assert!((x.value - y.value).abs() <= 4.0 * se, "{x:?} vs {y:?}");
    }
}

#[test]
fn path_gradient_vanishes_at_exact_posterior() {
    let model = LinearGaussian::synthetic(3, 6, 0.9, &mut SeedTree::new(4).rng()).unwrap();
    let family = GaussianFamily::new(FamilyKind::FullRank, 3);
    let params = model.posterior_params(&family).unwrap();
    let eps = draw_noise(16, 3, &mut SeedTree::new(5).rng());
    let batch = batch_at(&model, &family, &params, &eps).unwrap();
    for estimator in [ObjectiveKind::Standard, ObjectiveKind::Permuted { ell: 5 }, ObjectiveKind::Complete { cap: DEFAULT_CAP }] {
        let g = GradientSpec::new(estimator, BaseKind::Dreg).evaluate(&batch, 8, &mut SeedTree::new(6).rng()).unwrap();
        assert!(g.norm_sq().sqrt() < 1e-8, "{estimator:?}");
    }
    // The reparameterization gradient keeps its score-function noise there.
    let g = GradientSpec::new(ObjectiveKind::Standard, BaseKind::Reparam)
        .evaluate(&batch, 8, &mut SeedTree::new(6).rng())
        .unwrap();
    assert!(g.norm_sq().sqrt() > 1e-3);
}

#[test]
fn permuted_with_one_block_per_set_is_standard_when_m_is_one() {
    let model = ModelSpec::Logistic { n_data: 30, dim: 3, prior_sd: 1.0 }.build(SeedTree::new(7)).unwrap();
    let family = GaussianFamily::new(FamilyKind::Diagonal, 3);
    let params = family.init_params(&mut SeedTree::new(8).rng());
    let eps = draw_noise(6, 3, &mut SeedTree::new(9).rng());
    let batch = batch_at(&model, &family, &params, &eps).unwrap();
    let std = GradientSpec::new(ObjectiveKind::Standard, BaseKind::Reparam).evaluate(&batch, 1, &mut SeedTree::new(1).rng()).unwrap();
    for kind in [ObjectiveKind::Permuted { ell: 7 }, ObjectiveKind::Complete { cap: DEFAULT_CAP }, ObjectiveKind::Approx1] {
        let g = GradientSpec::new(kind, BaseKind::Reparam).evaluate(&batch, 1, &mut SeedTree::new(2).rng()).unwrap();
        assert!(common::rel_l2(&g.0, &std.0) < 1e-12, "{kind:?}");
    }
}
