//! U-statistic variance reduction for importance-weighted variational
//! inference.
//!
//! The standard IW-ELBO estimator averages the kernel
//! `h(v_1..v_m) = ln((1/m) Σ exp(v_i))` over `n / m` disjoint batches of
//! log-weights. Averaging the same kernel over overlapping batches keeps the
//! estimator unbiased and never increases its variance. This crate provides:
//!
//! - [`numeric`]: stable kernels, sorting, binomial weight profiles.
//! - [`subsets`]: disjoint, complete, random and permuted-block collections.
//! - [`estimators`]: U-statistics over a collection, the `O(n log n)` first-
//!   and second-order sort-based bounds, and a first-order jackknife.
//! - [`gradients`]: reparameterization and DReG base gradients, their
//!   U-statistic averages and surrogate gradients.
//! - [`models`]: linear-Gaussian and logistic-regression targets and the
//!   Gaussian variational family.
//! - [`analysis`]: Monte Carlo variance measurements with jackknife standard
//!   errors and banded checks of the variance orderings.
//! - [`harness`]: fixed-step SGD over a learning-rate grid and the
//!   envelope / median-envelope / average-objective summaries.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod gradients;
pub mod harness;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod subsets;

pub use error::{Error, Result};
pub use estimators::{
    approx_first_order, approx_first_order_naive, approx_second_order, complete_u, jackknife_first_order,
    u_statistic, EstimatorId, JackknifeInner, ObjectiveEstimate, ObjectiveKind,
};
pub use gradients::{
    base_dreg_gradient, base_reparam_gradient, finite_difference_gradient, log_weight_batch, surrogate_gradient,
    u_statistic_gradient, BaseKind, GradientSpec, GradientVector, SampleBatch,
};
pub use models::{FamilyKind, GaussianFamily, LinearGaussian, LogisticRegression, Model, ModelSpec, TargetModel};
pub use numeric::{kernel_h, log_sum_exp, sort_descending, weight_profile, LogWeights, SortedLogWeights, WeightProfile};
pub use rng::SeedTree;
pub use subsets::{
    all_subsets, disjoint_blocks, permuted_blocks, random_subsets, CollectionKind, IndexSetCollection, DEFAULT_CAP,
};
