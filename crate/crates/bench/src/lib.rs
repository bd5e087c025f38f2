//! Shared fixtures for the benchmarks.

use uwise_core::analysis::{LogWeightSampler, SamplerSpec};
use uwise_core::gradients::draw_noise;
use uwise_core::{log_weight_batch, GaussianFamily, LogWeights, Model, ModelSpec, SampleBatch, SeedTree, TargetModel};

/// Lognormal (σ = 1) log-weights of length `n`.
pub fn log_weights(n: usize, seed: u64) -> LogWeights {
    SamplerSpec::Lognormal { sigma: 1.0 }
        .draw(n, &mut SeedTree::new(seed).rng())
        .expect("finite draws")
}

/// Logistic-regression batch of `n` samples at random diagonal parameters.
pub fn logistic_batch(n: usize, seed: u64) -> (Model, SampleBatch) {
    let seeds = SeedTree::new(seed);
    let model = ModelSpec::Logistic { n_data: 200, dim: 10, prior_sd: 1.0 }
        .build(seeds.child("model"))
        .expect("valid model");
    let family = GaussianFamily::new(uwise_core::FamilyKind::Diagonal, model.dim());
    let mut params = family.init_params(&mut seeds.child("init").rng());
    for p in &mut params[model.dim()..] {
        *p = -1.0;
    }
    let q = family.bind(&params).expect("valid params");
    let eps = draw_noise(n, model.dim(), &mut seeds.child("eps").rng());
    let batch = log_weight_batch(&model, &q, &eps).expect("finite batch");
    (model, batch)
}
