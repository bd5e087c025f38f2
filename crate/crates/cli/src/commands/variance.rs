use std::path::Path;

use anyhow::bail;
use serde::Deserialize;
use uwise_core::analysis::{
    check_hoeffding, check_ordering_and_fraction, gradient_variance_report, SamplerSpec, VarianceReport,
};
use uwise_core::harness::{sgd_optimize, RunConfig};
use uwise_core::{
    BaseKind, FamilyKind, GaussianFamily, GradientSpec, Model, ModelSpec, ObjectiveKind, SeedTree, TargetModel,
    DEFAULT_CAP,
};

use crate::config::load;
use crate::output::dump_sets;
use crate::{Context, Outcome};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    #[serde(default = "lognormal")]
    pub sampler: SamplerSpec,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckSpec>,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self { sampler: lognormal(), checks: default_checks() }
    }
}

fn lognormal() -> SamplerSpec {
    SamplerSpec::Lognormal { sigma: 1.0 }
}

fn cap() -> u64 {
    DEFAULT_CAP
}

fn reparam() -> BaseKind {
    BaseKind::Reparam
}

fn default_checks() -> Vec<CheckSpec> {
    vec![
        CheckSpec::Ordering { n: 16, m: 8, ell: 20, replicates: 20_000, cap: DEFAULT_CAP },
        CheckSpec::Hoeffding { n: 16, m: 8, replicates: 20_000, cap: DEFAULT_CAP },
    ]
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    Ordering {
        n: usize,
        m: usize,
        ell: usize,
        replicates: usize,
        #[serde(default = "cap")]
        cap: u64,
    },
    Hoeffding {
        n: usize,
        m: usize,
        replicates: usize,
        #[serde(default = "cap")]
        cap: u64,
    },
    Gradient {
        model: ModelSpec,
        family: FamilyKind,
        #[serde(default)]
        params: ParamSource,
        #[serde(default = "reparam")]
        base: BaseKind,
        n: usize,
        m: usize,
        ell: usize,
        replicates: usize,
        #[serde(default = "cap")]
        cap: u64,
    },
}

/// Where the variational parameters of a gradient check come from.
#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSource {
    /// Standard-normal draw from the check's seed.
    #[default]
    Init,
    /// Exact posterior (linear-Gaussian model only).
    Posterior,
    Values { values: Vec<f64> },
    /// End point of an SGD run of `iterations` steps.
    Trajectory { gradient: GradientSpec, lr: f64, iterations: usize },
}

fn resolve_params(
    source: &ParamSource,
    spec: &ModelSpec,
    model: &Model,
    family: &GaussianFamily,
    n: usize,
    m: usize,
    seeds: SeedTree,
) -> anyhow::Result<Vec<f64>> {
    Ok(match source {
        ParamSource::Init => family.init_params(&mut seeds.child("init").rng()),
        ParamSource::Posterior => match model {
            Model::LinearGaussian(lg) => lg.posterior_params(family)?,
            _ => bail!("posterior parameters are only available for the linear_gaussian model"),
        },
        ParamSource::Values { values } => {
            if values.len() != family.param_dim() {
                bail!("expected {} parameter values, got {}", family.param_dim(), values.len());
            }
            values.clone()
        }
        ParamSource::Trajectory { gradient, lr, iterations } => {
            let mut cfg = RunConfig::new(spec.clone(), family.kind, *gradient, n, m);
            cfg.iterations = *iterations;
            cfg.learning_rates = vec![*lr];
            cfg.seeds = vec![0];
            let trace = sgd_optimize(model, &cfg, *lr, seeds.child("trajectory"))?;
            if trace.diverged {
                bail!("trajectory diverged before iteration {iterations}");
            }
            trace.final_params
        }
    })
}

pub fn run(ctx: &Context, path: Option<&Path>) -> anyhow::Result<Outcome> {
    let config: VarianceConfig = load(path)?;
    if config.checks.is_empty() {
        bail!("no checks configured");
    }
    let root = SeedTree::new(ctx.seed);
    let mut report = VarianceReport::default();
    for (i, check) in config.checks.iter().enumerate() {
        let seeds = root.child("check").index(i as u64);
        match *check {
            CheckSpec::Ordering { n, m, ell, replicates, cap } => {
                report.merge(check_ordering_and_fraction(&config.sampler, n, m, ell, replicates, seeds, cap)?);
                if ctx.dump_sets {
                    let r = n / m.max(1);
                    let kinds = [
                        ObjectiveKind::Standard,
                        ObjectiveKind::Permuted { ell },
                        ObjectiveKind::Random { k: ell * r },
                        ObjectiveKind::Complete { cap },
                    ];
                    dump_objective_sets(ctx, i, &kinds, n, m, seeds)?;
                }
            }
            CheckSpec::Hoeffding { n, m, replicates, cap } => {
                report.merge(check_hoeffding(&config.sampler, n, m, replicates, seeds, cap)?);
                if ctx.dump_sets {
                    let kinds = [ObjectiveKind::Standard, ObjectiveKind::Complete { cap }];
                    dump_objective_sets(ctx, i, &kinds, n, m, seeds.child("estimators"))?;
                }
            }
            CheckSpec::Gradient { ref model, family, ref params, base, n, m, ell, replicates, cap } => {
                let built = model.build(seeds.child("model"))?;
                let fam = GaussianFamily::new(family, built.dim());
                let p = resolve_params(params, model, &built, &fam, n, m, seeds)?;
                let (part, stats) =
                    gradient_variance_report(&built, &fam, &p, base, n, m, ell, replicates, seeds, cap)?;
                println!("gradient variance ratios (check {i}, {}):", model.name());
                for s in &stats {
                    println!(
                        "  {:<14} tr var ratio {:.4} (se {:.4})  E|G|^2 ratio {:.4} (se {:.4})",
                        s.estimator,
                        s.trace_ratio_to_standard.value,
                        s.trace_ratio_to_standard.std_error,
                        s.sq_norm_ratio_to_standard.value,
                        s.sq_norm_ratio_to_standard.std_error
                    );
                }
                report.merge(part);
                if ctx.dump_sets {
                    let r = n / m.max(1);
                    let kinds = [
                        ObjectiveKind::Standard,
                        ObjectiveKind::Permuted { ell },
                        ObjectiveKind::Random { k: ell * r },
                        ObjectiveKind::Complete { cap },
                    ];
                    for kind in kinds {
                        let label = GradientSpec::new(kind, base).label();
                        let mut rng = seeds.child("sets").index(0).child(&label).rng();
                        if let Ok(Some(sets)) = kind.collection(n, m, &mut rng) {
                            dump_sets(&ctx.out.join(format!("sets_check{i}_grad_{label}.json")), &sets)?;
                        }
                    }
                }
            }
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.checks {
        println!("{}", c.line());
    }
    report.write_json(&ctx.out.join("variance_report.json"))?;
    report.write_csv(&ctx.out.join("variance_report.csv"))?;
    Ok(if report.all_passed() { Outcome::Passed } else { Outcome::Failed })
}

/// Collections used by replicate 0; over-cap collections are skipped.
fn dump_objective_sets(
    ctx: &Context,
    check: usize,
    kinds: &[ObjectiveKind],
    n: usize,
    m: usize,
    seeds: SeedTree,
) -> anyhow::Result<()> {
    for &kind in kinds {
        let label = kind.id().name();
        let mut rng = seeds.child("sets").index(0).child(label).rng();
        if let Ok(Some(sets)) = kind.collection(n, m, &mut rng) {
            dump_sets(&ctx.out.join(format!("sets_check{check}_{label}.json")), &sets)?;
        }
    }
    Ok(())
}
