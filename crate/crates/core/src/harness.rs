//! Fixed-step SGD over a grid of learning rates and seeds, and the
//! envelope / median-envelope / average-objective summaries used to compare
//! training estimators.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::ObjectiveKind;
use crate::gradients::{draw_noise, log_weight_batch, GradientSpec};
use crate::models::{FamilyKind, GaussianFamily, ModelSpec, TargetModel};
use crate::rng::SeedTree;

pub const DEFAULT_BURN_IN: usize = 50;

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
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

/// Objective logging, decoupled from the training estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    #[serde(default = "standard")]
    pub estimator: ObjectiveKind,
    #[serde(default = "default_eval_n")]
    pub n: usize,
    /// Kernel size; defaults to the training `m`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Log every `period` iterations.
    #[serde(default = "one")]
    pub period: usize,
}

fn standard() -> ObjectiveKind {
    ObjectiveKind::Standard
}

fn default_eval_n() -> usize {
    64
}

fn one() -> usize {
    1
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { estimator: standard(), n: default_eval_n(), m: None, period: 1 }
    }
}

/// One experimental grid: every (learning rate, seed) pair is a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub family: FamilyKind,
    pub gradient: GradientSpec,
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval: EvalSpec,
    /// Iterations (0 = initial parameters) at which parameters are stored.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
}

impl RunConfig {
    pub fn new(model: ModelSpec, family: FamilyKind, gradient: GradientSpec, n: usize, m: usize) -> Self {
        Self {
            model,
            family,
            gradient,
            n,
            m,
            learning_rates: default_learning_rates(),
            iterations: default_iterations(),
            seeds: default_seeds(),
            eval: EvalSpec::default(),
            checkpoints: Vec::new(),
        }
    }

    pub fn eval_m(&self) -> usize {
        self.eval.m.unwrap_or(self.m)
    }

    pub fn validate(&self) -> Result<()> {
        self.gradient.validate()?;
        if self.m == 0 || self.n < self.m || self.n % self.m != 0 {
            return Err(Error::NotDivisible { n: self.n, m: self.m });
        }
        let em = self.eval_m();
        if em == 0 || self.eval.n < em || self.eval.n % em != 0 {
            return Err(Error::NotDivisible { n: self.eval.n, m: em });
        }
        if self.eval.period == 0 {
            return Err(invalid("eval period must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if self.learning_rates.is_empty() || self.seeds.is_empty() {
            return Err(invalid("need at least one learning rate and one seed"));
        }
        // Zero is accepted as a degenerate control run.
        if let Some(lr) = self.learning_rates.iter().find(|lr| !(lr.is_finite() && **lr >= 0.0)) {
            return Err(invalid(format!("learning rates must be finite and non-negative, got {lr}")));
        }
        let mut sorted = self.learning_rates.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("learning rates must be distinct"));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds must be distinct"));
        }
        if let Some(c) = self.checkpoints.iter().find(|&&c| c > self.iterations) {
            return Err(invalid(format!("checkpoint {c} beyond {} iterations", self.iterations)));
        }
        Ok(())
    }

    /// Number of logged objective values in a non-diverged trace.
    pub fn trace_len(&self) -> usize {
        self.iterations / self.eval.period
    }

    pub fn family_for<M: TargetModel + ?Sized>(&self, model: &M) -> GaussianFamily {
        GaussianFamily::new(self.family, model.dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub params: Vec<f64>,
}

/// Objective history of one SGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Logged iteration numbers (1-based, after that many updates).
    pub iters: Vec<usize>,
    pub objective: Vec<f64>,
    pub final_params: Vec<f64>,
    pub diverged: bool,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trace {
    /// The objective padded with `-inf` up to `len` entries.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut out = self.objective.clone();
        out.truncate(len);
        out.resize(len, f64::NEG_INFINITY);
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iter,objective")?;
        for (i, v) in self.iters.iter().zip(&self.objective) {
            writeln!(f, "{i},{v}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Runs plain SGD ascent `φ ← φ + lr·ĝ` from initial parameters drawn from
/// `seeds`. Training noise, collection randomness and evaluation noise use
/// separate streams, so the evaluation estimator never affects the path.
pub fn sgd_optimize<M: TargetModel + ?Sized>(
    model: &M,
    config: &RunConfig,
    lr: f64,
    seeds: SeedTree,
) -> Result<Trace> {
    config.validate()?;
    let family = config.family_for(model);
    let mut rng = seeds.child("init").rng();
    let params = family.init_params(&mut rng);
    sgd_from(model, config, &family, params, lr, seeds)
}

/// [`sgd_optimize`] from explicit initial parameters.
pub fn sgd_from<M: TargetModel + ?Sized>(
    model: &M,
    config: &RunConfig,
    family: &GaussianFamily,
    mut params: Vec<f64>,
    lr: f64,
    seeds: SeedTree,
) -> Result<Trace> {
    config.validate()?;
    if params.len() != family.param_dim() {
        return Err(Error::DimensionMismatch { expected: family.param_dim(), found: params.len() });
    }
    let d = family.dim;
    let (train, sets, eval) = (seeds.child("train"), seeds.child("sets"), seeds.child("eval"));
    let eval_m = config.eval_m();
    let mut trace = Trace {
        iters: Vec::with_capacity(config.trace_len()),
        objective: Vec::with_capacity(config.trace_len()),
        final_params: Vec::new(),
        diverged: false,
        checkpoints: Vec::new(),
    };
    let store = |t: usize, p: &[f64], trace: &mut Trace| {
        if config.checkpoints.contains(&t) {
            trace.checkpoints.push(Checkpoint { iteration: t, params: p.to_vec() });
        }
    };
    store(0, &params, &mut trace);
    for t in 1..=config.iterations {
        let step = (t - 1) as u64;
        let q = family.bind(&params)?;
        let eps = draw_noise(config.n, d, &mut train.index(step).rng());
        let grad = log_weight_batch(model, &q, &eps)
            .and_then(|batch| config.gradient.evaluate(&batch, config.m, &mut sets.index(step).rng()));
        let grad = match grad {
            Ok(g) if g.is_finite() => g,
            Ok(_) | Err(Error::NonFinite { .. }) => {
                trace.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        for (p, g) in params.iter_mut().zip(&grad.0) {
            *p += lr * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            trace.diverged = true;
            break;
        }
        store(t, &params, &mut trace);
        if t % config.eval.period == 0 {
            let q = family.bind(&params)?;
            let mut rng = eval.index(step).rng();
            let eps = draw_noise(config.eval.n, d, &mut rng);
            let value = log_weight_batch(model, &q, &eps)
                .and_then(|batch| config.eval.estimator.evaluate(&batch.v, eval_m, &mut rng))
                .map(|e| e.value);
            match value {
                Ok(v) if v.is_finite() => {
                    trace.iters.push(t);
                    trace.objective.push(v);
                }
                Ok(_) | Err(Error::NonFinite { .. }) => {
                    trace.diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    trace.final_params = params;
    Ok(trace)
}

/// Pointwise maximum over traces of equal length.
pub fn envelope(traces: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = traces.first().ok_or(Error::EmptyInput)?;
    if let Some(t) = traces.iter().find(|t| t.len() != first.len()) {
        return Err(Error::DimensionMismatch { expected: first.len(), found: t.len() });
    }
    Ok((0..first.len())
        .map(|i| traces.iter().map(|t| t[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// Pointwise lower median over envelopes of equal length.
pub fn median_envelope(envelopes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = envelopes.first().ok_or(Error::EmptyInput)?;
    if let Some(t) = envelopes.iter().find(|t| t.len() != first.len()) {
        return Err(Error::DimensionMismatch { expected: first.len(), found: t.len() });
    }
    let k = envelopes.len();
    let mut col = vec![0.0; k];
    Ok((0..first.len())
        .map(|i| {
            for (c, e) in col.iter_mut().zip(envelopes) {
                *c = e[i];
            }
            col.sort_unstable_by(f64::total_cmp);
            col[(k - 1) / 2]
        })
        .collect())
}

/// Mean of the entries after the first `burn_in`, up to and including entry
/// `horizon` (1-based).
pub fn average_objective(median: &[f64], burn_in: usize, horizon: usize) -> Result<f64> {
    if horizon <= burn_in {
        return Err(invalid(format!("horizon {horizon} must exceed burn-in {burn_in}")));
    }
    if horizon > median.len() {
        return Err(invalid(format!("horizon {horizon} exceeds trace length {}", median.len())));
    }
    let window = &median[burn_in..horizon];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lr: f64,
    pub seed: u64,
    pub trace: Trace,
}

/// All cells of one configuration, in (seed, learning rate) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub model: String,
    pub estimator: String,
    pub n: usize,
    pub m: usize,
    pub trace_len: usize,
    pub cells: Vec<Cell>,
}

/// Per-run streams: the model data comes from `root.child("model")`, and the
/// run with seed `s` uses `root.child("run").index(s)` for every learning rate.
pub fn run_grid(config: &RunConfig, root: SeedTree) -> Result<GridResult> {
    config.validate()?;
    let model = config.model.build(root.child("model"))?;
    run_grid_on(&model, config, root)
}

pub fn run_grid_on<M: TargetModel + ?Sized>(model: &M, config: &RunConfig, root: SeedTree) -> Result<GridResult> {
    config.validate()?;
    let pairs: Vec<(u64, f64)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.learning_rates.iter().map(move |&lr| (s, lr)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(seed, lr)| {
            let trace = sgd_optimize(model, config, lr, root.child("run").index(seed))?;
            Ok(Cell { lr, seed, trace })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult {
        model: config.model.name().to_string(),
        estimator: config.gradient.label(),
        n: config.n,
        m: config.m,
        trace_len: config.trace_len(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub model: String,
    pub estimator: String,
    pub n: usize,
    pub m: usize,
    pub burn_in: usize,
    pub horizon: usize,
    pub average_objective: f64,
    pub diverged_cells: usize,
    pub total_cells: usize,
    /// Final entry of each seed's envelope, in seed order.
    pub final_envelope: Vec<f64>,
    pub median_envelope: Vec<f64>,
}

impl GridResult {
    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.cells.iter().map(|c| c.seed).collect();
        s.dedup();
        s
    }

    /// Envelope across learning rates, one per seed.
    pub fn envelopes(&self) -> Result<Vec<Vec<f64>>> {
        self.seeds()
            .into_iter()
            .map(|s| {
                let traces: Vec<Vec<f64>> = self
                    .cells
                    .iter()
                    .filter(|c| c.seed == s)
                    .map(|c| c.trace.padded(self.trace_len))
                    .collect();
                envelope(&traces)
            })
            .collect()
    }

    /// `horizon` defaults to the full trace.
    pub fn summarize(&self, burn_in: usize, horizon: Option<usize>) -> Result<GridSummary> {
        let envs = self.envelopes()?;
        let med = median_envelope(&envs)?;
        let horizon = horizon.unwrap_or(self.trace_len);
        Ok(GridSummary {
            model: self.model.clone(),
            estimator: self.estimator.clone(),
            n: self.n,
            m: self.m,
            burn_in,
            horizon,
            average_objective: average_objective(&med, burn_in, horizon)?,
            diverged_cells: self.cells.iter().filter(|c| c.trace.diverged).count(),
            total_cells: self.cells.len(),
            final_envelope: envs.iter().map(|e| e.last().copied().unwrap_or(f64::NEG_INFINITY)).collect(),
            median_envelope: med,
        })
    }

    pub fn trace_file_name(&self, cell: &Cell) -> String {
        format!("trace_{}_{}_{}_{}.csv", self.model, self.estimator, cell.lr, cell.seed)
    }

    /// Writes one CSV per cell into `dir` and returns the paths.
    pub fn write_traces(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.cells
            .iter()
            .map(|c| {
                let path = dir.join(self.trace_file_name(c));
                c.trace.write_csv(&path)?;
                Ok(path)
            })
            .collect()
    }
}
