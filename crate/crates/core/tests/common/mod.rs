//! Shared test oracles.
#![allow(dead_code)]

use rand::Rng;
use uwise_core::gradients::{batch_at, draw_noise};
use uwise_core::*;

pub const FD_STEP: f64 = 1e-5;

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

pub const GRADIENT_KINDS: [(&str, ObjectiveKind, BaseKind); 8] = [
    ("standard", ObjectiveKind::Standard, BaseKind::Reparam),
    ("standard_dreg", ObjectiveKind::Standard, BaseKind::Dreg),
    ("permuted", ObjectiveKind::Permuted { ell: 3 }, BaseKind::Reparam),
    ("permuted_dreg", ObjectiveKind::Permuted { ell: 3 }, BaseKind::Dreg),
    ("complete", ObjectiveKind::Complete { cap: DEFAULT_CAP }, BaseKind::Reparam),
    ("random_dreg", ObjectiveKind::Random { k: 5 }, BaseKind::Dreg),
    ("approx1", ObjectiveKind::Approx1, BaseKind::Reparam),
    ("approx2", ObjectiveKind::Approx2, BaseKind::Reparam),
];

pub struct FdCase {
    pub label: String,
    pub rel_err: f64,
}

/// Softmax of `v` restricted to `rows`, in `rows` order.
fn softmax(v: &[f64], rows: &[usize]) -> Vec<f64> {
    let top = rows.iter().map(|&r| v[r]).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = rows.iter().map(|&r| (v[r] - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Configuration `c` of the finite-difference sweep: model, family and
/// estimator cycle with `c`; sizes, parameters and noise are random.
pub fn fd_case(c: usize) -> FdCase {
    let seeds = SeedTree::new(0xfd).index(c as u64);
    let mut rng = seeds.rng();
    let logistic = c % 2 == 1;
    let kind = if (c / 2) % 2 == 0 { FamilyKind::Diagonal } else { FamilyKind::FullRank };
    let (name, estimator, base) = GRADIENT_KINDS[(c / 4) % GRADIENT_KINDS.len()];
    let dim = rng.random_range(1..=4);
    let model = if logistic {
        ModelSpec::Logistic { n_data: 25, dim, prior_sd: 1.0 }
    } else {
        ModelSpec::LinearGaussian { d_z: dim, d_x: dim + 2, noise_sd: 0.7 }
    }
    .build(seeds.child("model"))
    .unwrap();
    let family = GaussianFamily::new(kind, dim);
    let params: Vec<f64> = family.init_params(&mut seeds.child("params").rng()).iter().map(|p| 0.5 * p).collect();
    let m_choices: &[usize] = match estimator {
        ObjectiveKind::Approx2 => &[2, 3, 4],
        _ => &[1, 2, 3, 4],
    };
    let m = m_choices[rng.random_range(0..m_choices.len())];
    let n = m * rng.random_range(1..=3usize).max(if m == 1 { 2 } else { 1 });
    let eps = draw_noise(n, dim, &mut seeds.child("eps").rng());
    let sets_seed = seeds.child("sets");

    let batch = batch_at(&model, &family, &params, &eps).unwrap();
    let spec = GradientSpec::new(estimator, base);
    let analytic = spec.evaluate(&batch, m, &mut sets_seed.rng()).unwrap();
    let sets = estimator.collection(n, m, &mut sets_seed.rng()).unwrap();

    let numeric = match base {
        BaseKind::Reparam => finite_difference_gradient(
            |p| {
                let b = batch_at(&model, &family, p, &eps).unwrap();
                estimator.evaluate(&b.v, m, &mut sets_seed.rng()).unwrap().value
            },
            &params,
            FD_STEP,
        )
        .unwrap(),
        BaseKind::Dreg => {
            // Stop-gradient surrogate: weights and the density of q are
            // frozen at `params`; only the sample path moves.
            let sets = sets.expect("index-set estimator");
            let v0 = batch.v.as_slice().to_vec();
            let q0 = family.bind(&params).unwrap();
            let coef: Vec<Vec<f64>> =
                sets.iter().map(|s| softmax(&v0, s).into_iter().map(|w| w * w).collect()).collect();
            finite_difference_gradient(
                |p| {
                    let q = family.bind(p).unwrap();
                    let mut total = 0.0;
                    for (s, cs) in sets.iter().zip(&coef) {
                        for (&r, &cw) in s.iter().zip(cs) {
                            let z = q.transform(&eps[r * dim..(r + 1) * dim]);
                            total += cw * (model.log_joint(&z) - q0.log_density(&z).unwrap());
                        }
                    }
                    total / sets.len() as f64
                },
                &params,
                FD_STEP,
            )
            .unwrap()
        }
    };
    let family_name = match kind {
        FamilyKind::Diagonal => "diagonal",
        FamilyKind::FullRank => "full_rank",
    };
    let model_name = if logistic { "logistic" } else { "linear_gaussian" };
    FdCase {
        label: format!("{model_name}/{family_name}/{name} n={n} m={m} d={dim}"),
        rel_err: rel_l2(&analytic.0, &numeric),
    }
}
