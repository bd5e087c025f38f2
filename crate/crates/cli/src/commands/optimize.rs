use std::collections::BTreeMap;
use std::path::Path;

use anyhow::bail;
use serde::{Deserialize, Serialize};
use uwise_core::harness::{log_space, run_grid_on, EvalSpec, GridSummary, RunConfig, DEFAULT_BURN_IN};
use uwise_core::{BaseKind, FamilyKind, GradientSpec, ModelSpec, ObjectiveKind, SeedTree, TargetModel};

use crate::config::load;
use crate::output::{dump_sets, write_json};
use crate::{Context, Outcome};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "full_rank")]
    pub family: FamilyKind,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<GradientSpec>,
    /// Label of the estimator every other one is compared against.
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_ms")]
    pub ms: Vec<usize>,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Last logged entry included in the average; the full trace by default.
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            family: full_rank(),
            estimators: default_estimators(),
            baseline: default_baseline(),
            n: default_n(),
            ms: default_ms(),
            learning_rates: default_learning_rates(),
            iterations: default_iterations(),
            seeds: default_seeds(),
            eval: EvalSpec::default(),
            burn_in: DEFAULT_BURN_IN,
            horizon: None,
        }
    }
}

fn default_model() -> ModelSpec {
    ModelSpec::LinearGaussian { d_z: 5, d_x: 10, noise_sd: 1.0 }
}

fn full_rank() -> FamilyKind {
    FamilyKind::FullRank
}

fn default_estimators() -> Vec<GradientSpec> {
    vec![
        GradientSpec::new(ObjectiveKind::Standard, BaseKind::Reparam),
        GradientSpec::new(ObjectiveKind::Permuted { ell: 20 }, BaseKind::Reparam),
        GradientSpec::new(ObjectiveKind::Approx2, BaseKind::Reparam),
    ]
}

fn default_baseline() -> String {
    "standard".into()
}

fn default_n() -> usize {
    16
}

fn default_ms() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_learning_rates() -> Vec<f64> {
    log_space(1e-4, 1.0, 15)
}

fn default_iterations() -> usize {
    2000
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Serialize)]
struct Summary {
    model: String,
    n: usize,
    ms: Vec<usize>,
    burn_in: usize,
    horizon: usize,
    exact_log_evidence: Option<f64>,
    /// `average_objective[estimator][m]`.
    average_objective: BTreeMap<String, BTreeMap<usize, f64>>,
    /// `differences["x - baseline"][m]`.
    differences: BTreeMap<String, BTreeMap<usize, f64>>,
    diverged_cells: BTreeMap<String, BTreeMap<usize, usize>>,
    total_cells: usize,
    grids: Vec<GridSummary>,
}

pub fn run(ctx: &Context, path: Option<&Path>) -> anyhow::Result<Outcome> {
    let config: OptimizeConfig = load(path)?;
    if config.estimators.is_empty() || config.ms.is_empty() {
        bail!("need at least one estimator and one m");
    }
    let labels: Vec<String> = config.estimators.iter().map(GradientSpec::label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            bail!("estimator `{l}` listed twice");
        }
    }
    if !labels.contains(&config.baseline) {
        bail!("baseline `{}` is not among the estimators {labels:?}", config.baseline);
    }
    let root = SeedTree::new(ctx.seed);
    let model = config.model.build(root.child("model"))?;

    let mut cells = Vec::new();
    for &m in &config.ms {
        for spec in &config.estimators {
            let mut rc = RunConfig::new(config.model.clone(), config.family, *spec, config.n, m);
            rc.learning_rates = config.learning_rates.clone();
            rc.iterations = config.iterations;
            rc.seeds = config.seeds.clone();
            rc.eval = config.eval;
            rc.validate()?;
            cells.push(rc);
        }
    }
    let horizon = config.horizon.unwrap_or(config.iterations / config.eval.period);

    let mut summary = Summary {
        model: config.model.name().into(),
        n: config.n,
        ms: config.ms.clone(),
        burn_in: config.burn_in,
        horizon,
        exact_log_evidence: model.exact_log_evidence(),
        average_objective: BTreeMap::new(),
        differences: BTreeMap::new(),
        diverged_cells: BTreeMap::new(),
        total_cells: 0,
        grids: Vec::new(),
    };
    for rc in &cells {
        let grid = run_grid_on(&model, rc, root)?;
        let dir = ctx.out.join(format!("m{}", rc.m));
        std::fs::create_dir_all(&dir)?;
        grid.write_traces(&dir)?;
        if ctx.dump_sets {
            let seed = config.seeds[0];
            let mut rng = root.child("run").index(seed).child("sets").index(0).rng();
            if let Some(sets) = rc.gradient.estimator.collection(rc.n, rc.m, &mut rng)? {
                dump_sets(&dir.join(format!("sets_{}_iter1_seed{seed}.json", grid.estimator)), &sets)?;
            }
        }
        let s = grid.summarize(config.burn_in, Some(horizon))?;
        summary.average_objective.entry(s.estimator.clone()).or_default().insert(rc.m, s.average_objective);
        summary.diverged_cells.entry(s.estimator.clone()).or_default().insert(rc.m, s.diverged_cells);
        summary.total_cells += s.total_cells;
        summary.grids.push(s);
    }
    let base = summary.average_objective[&config.baseline].clone();
    for label in labels.iter().filter(|l| **l != config.baseline) {
        let row = summary.average_objective[label]
            .iter()
            .map(|(m, v)| (*m, v - base[m]))
            .collect();
        summary.differences.insert(format!("{label} - {}", config.baseline), row);
    }

    print_table(&summary, &labels, &config.baseline);
    write_json(&ctx.out.join("summary.json"), &summary)?;
    Ok(Outcome::Passed)
}

fn print_table(summary: &Summary, labels: &[String], baseline: &str) {
    let width = labels.iter().map(|l| l.len() + baseline.len() + 3).max().unwrap_or(0).max(10);
    let mut header = format!("{:<width$}", "");
    for m in &summary.ms {
        header.push_str(&format!("{:>12}", format!("m={m}")));
    }
    println!("average objective difference (nats), {} n={}", summary.model, summary.n);
    println!("{header}");
    for label in labels.iter().filter(|l| *l != baseline) {
        let key = format!("{label} - {baseline}");
        let mut line = format!("{key:<width$}");
        for m in &summary.ms {
            let v = summary.differences[&key][m];
            if v.is_finite() {
                line.push_str(&format!("{v:>12.4}"));
            } else {
                line.push_str(&format!("{:>12}", "NaN"));
            }
        }
        println!("{line}");
    }
}
