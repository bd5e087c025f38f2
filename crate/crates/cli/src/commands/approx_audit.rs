use std::path::Path;

use anyhow::bail;
use rand::Rng;
use serde::{Deserialize, Serialize};
use uwise_core::analysis::{stats, LogWeightSampler, SamplerSpec};
use uwise_core::gradients::draw_noise;
use uwise_core::harness::{sgd_optimize, RunConfig};
use uwise_core::{
    all_subsets, approx_first_order, approx_second_order, complete_u, kernel_h, log_weight_batch, BaseKind,
    FamilyKind, GradientSpec, LogWeights, ModelSpec, ObjectiveKind, SeedTree, TargetModel, DEFAULT_CAP,
};

use crate::config::load;
use crate::output::{write_csv, write_json};
use crate::{Context, Outcome};

pub const WORKED_V: [f64; 4] = [-6034.091, -4351.335, -4157.236, -5419.201];
pub const WORKED_KERNELS: [f64; 6] = [-4352.028, -4157.930, -5419.895, -4157.930, -4352.028, -4157.930];
pub const WORKED_MEAN: f64 = -4432.956;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "yes")]
    pub worked_example: bool,
    /// `null` disables the sweep.
    #[serde(default = "some_default")]
    pub sweep: Option<SweepSpec>,
    /// `null` disables the trajectory audit.
    #[serde(default = "some_default")]
    pub trajectory: Option<TrajectorySpec>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { worked_example: true, sweep: Some(SweepSpec::default()), trajectory: Some(TrajectorySpec::default()) }
    }
}

fn yes() -> bool {
    true
}

fn some_default<T: Default>() -> Option<T> {
    Some(T::default())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    /// Log-weights are `-s²/2 + s·N(0,1)` with `s` drawn uniformly from
    /// `(0, scale]` per case.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { cases: default_cases(), max_n: default_max_n(), scale: default_scale() }
    }
}

fn default_cases() -> usize {
    10_000
}

fn default_max_n() -> usize {
    12
}

fn default_scale() -> f64 {
    3.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "full_rank")]
    pub family: FamilyKind,
    #[serde(default = "default_gradient")]
    pub gradient: GradientSpec,
    #[serde(default = "sixteen")]
    pub n: usize,
    #[serde(default = "eight")]
    pub m: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Checkpoint spacing in iterations.
    #[serde(default = "default_every")]
    pub every: usize,
    /// Fresh batches averaged per checkpoint.
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Allowed distance of the final first-order gap from `ln m`.
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            model: default_model(),
            family: full_rank(),
            gradient: default_gradient(),
            n: 16,
            m: 8,
            lr: default_lr(),
            iterations: default_iterations(),
            every: default_every(),
            batches: default_batches(),
            gap_tolerance: default_gap_tolerance(),
        }
    }
}

fn default_model() -> ModelSpec {
    ModelSpec::LinearGaussian { d_z: 5, d_x: 10, noise_sd: 1.0 }
}

fn full_rank() -> FamilyKind {
    FamilyKind::FullRank
}

fn default_gradient() -> GradientSpec {
    GradientSpec::new(ObjectiveKind::Permuted { ell: 20 }, BaseKind::Dreg)
}

fn sixteen() -> usize {
    16
}

fn eight() -> usize {
    8
}

fn default_lr() -> f64 {
    0.05
}

fn default_iterations() -> usize {
    2000
}

fn default_every() -> usize {
    200
}

fn default_batches() -> usize {
    200
}

fn default_gap_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Default, Serialize)]
struct SweepSummary {
    cases: usize,
    max_n: usize,
    /// `Â < Â⁽²⁾` violated.
    strict_first_second: usize,
    /// `Â⁽²⁾ <= L^U` violated.
    second_below_complete: usize,
    /// `L^U <= Â + ln m` violated.
    complete_below_upper: usize,
    min_gap_first: f64,
    max_gap_first_minus_ln_m: f64,
}

#[derive(Debug, Serialize)]
struct GapRow {
    iteration: usize,
    gap_first: f64,
    gap_first_se: f64,
    gap_second: f64,
    gap_second_se: f64,
    ln_m: f64,
}

#[derive(Debug, Serialize)]
struct AuditReport {
    worked_example: Option<WorkedSummary>,
    sweep: Option<SweepSummary>,
    trajectory: Option<Vec<GapRow>>,
    checks: Vec<(String, bool)>,
}

#[derive(Debug, Serialize)]
struct WorkedSummary {
    kernels: Vec<f64>,
    mean: f64,
    max_kernel_error: f64,
    mean_error: f64,
}

pub fn run(ctx: &Context, path: Option<&Path>) -> anyhow::Result<Outcome> {
    let config: AuditConfig = load(path)?;
    let root = SeedTree::new(ctx.seed);
    let mut report = AuditReport { worked_example: None, sweep: None, trajectory: None, checks: Vec::new() };

    if config.worked_example {
        let sets = all_subsets(4, 2, DEFAULT_CAP)?;
        let mut kernels = Vec::new();
        let mut rows = Vec::new();
        for (set, published) in sets.iter().zip(WORKED_KERNELS) {
            let vals: Vec<f64> = set.iter().map(|&i| WORKED_V[i]).collect();
            let h = kernel_h(&vals)?;
            rows.push(format!("{}-{},{h},{published}", set[0] + 1, set[1] + 1));
            kernels.push(h);
        }
        write_csv(&ctx.out.join("worked_example.csv"), "set,kernel,published", rows)?;
        let mean = complete_u(&LogWeights::new(WORKED_V.to_vec())?, 2, DEFAULT_CAP)?.value;
        let max_kernel_error =
            kernels.iter().zip(WORKED_KERNELS).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mean_error = (mean - WORKED_MEAN).abs();
        println!("worked example: L^U = {mean:.6} (published {WORKED_MEAN}), max kernel error {max_kernel_error:.2e}");
        report.checks.push(("worked example kernels within 1e-3".into(), max_kernel_error < 1e-3));
        report.checks.push(("worked example mean within 5e-4".into(), mean_error <= 5e-4));
        report.worked_example = Some(WorkedSummary { kernels, mean, max_kernel_error, mean_error });
    }

    if let Some(sweep) = &config.sweep {
        let summary = bound_sweep(sweep, root.child("sweep"))?;
        println!(
            "bound chain: {} cases, violations {} / {} / {}",
            summary.cases,
            summary.strict_first_second,
            summary.second_below_complete,
            summary.complete_below_upper
        );
        let clean =
            summary.strict_first_second + summary.second_below_complete + summary.complete_below_upper == 0;
        report.checks.push(("bound chain sweep has no violations".into(), clean));
        report.sweep = Some(summary);
    }

    if let Some(spec) = &config.trajectory {
        let rows = gap_trajectory(spec, root.child("trajectory"))?;
        write_csv(
            &ctx.out.join("gap_trajectory.csv"),
            "iteration,gap_first,gap_first_se,gap_second,gap_second_se,ln_m",
            rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.iteration, r.gap_first, r.gap_first_se, r.gap_second, r.gap_second_se, r.ln_m
                )
            }),
        )?;
        for r in &rows {
            println!(
                "iter {:>6}: L^U - A1 = {:.6}, L^U - A2 = {:.6} (ln m = {:.6})",
                r.iteration, r.gap_first, r.gap_second, r.ln_m
            );
        }
        let last = rows.last().expect("at least the initial checkpoint");
        let ok = (last.gap_first - last.ln_m).abs() <= spec.gap_tolerance;
        report.checks.push((format!("final gap within {} of ln m", spec.gap_tolerance), ok));
        report.trajectory = Some(rows);
    }

    for (name, ok) in &report.checks {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    write_json(&ctx.out.join("approx_audit.json"), &report)?;
    Ok(if report.checks.iter().all(|c| c.1) { Outcome::Passed } else { Outcome::Failed })
}

fn bound_sweep(spec: &SweepSpec, seeds: SeedTree) -> anyhow::Result<SweepSummary> {
    if spec.max_n < 2 || !(spec.scale > 0.0) {
        bail!("sweep needs max_n >= 2 and a positive scale");
    }
    let mut s = SweepSummary {
        cases: spec.cases,
        max_n: spec.max_n,
        min_gap_first: f64::INFINITY,
        max_gap_first_minus_ln_m: f64::NEG_INFINITY,
        ..Default::default()
    };
    for i in 0..spec.cases {
        let mut rng = seeds.index(i as u64).rng();
        let n = rng.random_range(2..=spec.max_n);
        let m = rng.random_range(2..=n);
        let sigma = spec.scale * (1.0 - rng.random::<f64>());
        let v = SamplerSpec::Lognormal { sigma }.draw(n, &mut rng)?;
        let a1 = approx_first_order(&v, m)?.value;
        let a2 = approx_second_order(&v, m)?.value;
        let u = complete_u(&v, m, DEFAULT_CAP)?.value;
        let ln_m = (m as f64).ln();
        s.strict_first_second += usize::from(!(a1 < a2));
        s.second_below_complete += usize::from(!(a2 <= u));
        s.complete_below_upper += usize::from(!(u <= a1 + ln_m));
        s.min_gap_first = s.min_gap_first.min(u - a1);
        s.max_gap_first_minus_ln_m = s.max_gap_first_minus_ln_m.max(u - a1 - ln_m);
    }
    Ok(s)
}

fn gap_trajectory(spec: &TrajectorySpec, seeds: SeedTree) -> anyhow::Result<Vec<GapRow>> {
    if spec.every == 0 || spec.batches < 2 {
        bail!("trajectory needs every >= 1 and batches >= 2");
    }
    let mut cfg = RunConfig::new(spec.model.clone(), spec.family, spec.gradient, spec.n, spec.m);
    cfg.learning_rates = vec![spec.lr];
    cfg.iterations = spec.iterations;
    cfg.seeds = vec![0];
    cfg.checkpoints = (0..=spec.iterations).step_by(spec.every).collect();
    if cfg.checkpoints.last() != Some(&spec.iterations) {
        cfg.checkpoints.push(spec.iterations);
    }
    let model = spec.model.build(seeds.child("model"))?;
    let trace = sgd_optimize(&model, &cfg, spec.lr, seeds.child("run"))?;
    if trace.diverged {
        bail!("trajectory diverged at learning rate {}", spec.lr);
    }
    let family = cfg.family_for(&model);
    let ln_m = (spec.m as f64).ln();
    trace
        .checkpoints
        .iter()
        .map(|cp| {
            let q = family.bind(&cp.params)?;
            let mut g1 = Vec::with_capacity(spec.batches);
            let mut g2 = Vec::with_capacity(spec.batches);
            let stream = seeds.child("gap").index(cp.iteration as u64);
            for b in 0..spec.batches {
                let eps = draw_noise(spec.n, model.dim(), &mut stream.index(b as u64).rng());
                let v = log_weight_batch(&model, &q, &eps)?.v;
                let u = complete_u(&v, spec.m, DEFAULT_CAP)?.value;
                g1.push(u - approx_first_order(&v, spec.m)?.value);
                g2.push(u - approx_second_order(&v, spec.m)?.value);
            }
            let (e1, e2) = (stats::mean_estimate(&g1), stats::mean_estimate(&g2));
            Ok(GapRow {
                iteration: cp.iteration,
                gap_first: e1.value,
                gap_first_se: e1.std_error,
                gap_second: e2.value,
                gap_second_se: e2.std_error,
                ln_m,
            })
        })
        .collect()
}
