//! Monte Carlo measurement of estimator variances and banded checks of the
//! variance orderings between the standard, complete, permuted-block and
//! random-subset estimators.
//!
//! Every inequality is checked as "fails only if violated by more than
//! [`BAND_SE`] standard errors". When several estimators are compared they are
//! evaluated on the same log-weight draws, and the standard error of a
//! difference (or ratio) comes from a joint jackknife over replicates.

pub mod stats;

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::ObjectiveKind;
use crate::gradients::{draw_noise, log_weight_batch, BaseKind, GradientSpec, GradientVector};
use crate::models::{BoundGaussian, GaussianFamily, TargetModel};
use crate::numeric::{kernel_h, LogWeights};
use crate::rng::{SeedTree, StreamRng};
use crate::subsets::check_cap;

pub use stats::Estimate;

/// Width of every acceptance band, in standard errors.
pub const BAND_SE: f64 = 4.0;

/// Source of iid log-weights.
pub trait LogWeightSampler: Sync {
    fn draw(&self, n: usize, rng: &mut StreamRng) -> Result<LogWeights>;
}

/// Synthetic log-weight distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// `V = -σ²/2 + σ Z`, so that `E[e^V] = 1`.
    Lognormal { sigma: f64 },
    Constant { value: f64 },
}

impl LogWeightSampler for SamplerSpec {
    fn draw(&self, n: usize, rng: &mut StreamRng) -> Result<LogWeights> {
        match *self {
            SamplerSpec::Lognormal { sigma } => {
                let values = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        -0.5 * sigma * sigma + sigma * z
                    })
                    .collect();
                LogWeights::new(values)
            }
            SamplerSpec::Constant { value } => LogWeights::new(vec![value; n]),
        }
    }
}

/// Log-weights of a model under a fixed variational distribution.
pub struct ModelSampler<'a, M: ?Sized> {
    pub model: &'a M,
    pub q: BoundGaussian<'a>,
}

impl<M: TargetModel + ?Sized> LogWeightSampler for ModelSampler<'_, M> {
    fn draw(&self, n: usize, rng: &mut StreamRng) -> Result<LogWeights> {
        let eps = draw_noise(n, self.q.dim(), rng);
        Ok(log_weight_batch(self.model, &self.q, &eps)?.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaEstimate {
    pub c: usize,
    pub value: f64,
    pub std_error: f64,
    pub replicates: usize,
}

fn check_replicates(r: usize) -> Result<()> {
    if r < 2 {
        return Err(invalid(format!("need at least 2 replicates, got {r}")));
    }
    Ok(())
}

/// Covariance `ζ_c` between kernels on two size-`m` batches sharing exactly `c`
/// log-weights.
pub fn estimate_zeta(
    sampler: &dyn LogWeightSampler,
    m: usize,
    c: usize,
    replicates: usize,
    seeds: SeedTree,
) -> Result<ZetaEstimate> {
    if m == 0 || c > m {
        return Err(invalid(format!("zeta needs 0 <= c <= m and m >= 1, got m={m}, c={c}")));
    }
    check_replicates(replicates)?;
    let pairs: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.index(i as u64).rng();
            let v = sampler.draw(2 * m - c, &mut rng)?;
            let v = v.as_slice();
            let a = kernel_h(&v[..m])?;
            let b = kernel_h(&v[m - c..])?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let est = stats::covariance_estimate(&xs, &ys);
    Ok(ZetaEstimate { c, value: est.value, std_error: est.std_error, replicates })
}

/// Estimator values on shared draws: `columns[k][r]` is estimator `k` on
/// replicate `r`.
#[derive(Debug, Clone)]
pub struct ReplicateTable {
    pub kinds: Vec<ObjectiveKind>,
    pub columns: Vec<Vec<f64>>,
}

impl ReplicateTable {
    pub fn replicates(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, kind: ObjectiveKind) -> Option<&[f64]> {
        self.kinds.iter().position(|&k| k == kind).map(|i| self.columns[i].as_slice())
    }
}

fn kind_label(kind: ObjectiveKind) -> &'static str {
    kind.id().name()
}

/// Evaluates every estimator in `kinds` on the same `replicates` draws of `n`
/// log-weights. Randomized collections are redrawn per replicate.
pub fn objective_replicates(
    kinds: &[ObjectiveKind],
    sampler: &dyn LogWeightSampler,
    n: usize,
    m: usize,
    replicates: usize,
    seeds: SeedTree,
) -> Result<ReplicateTable> {
    check_replicates(replicates)?;
    let rows: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let v = sampler.draw(n, &mut seeds.child("draws").index(i as u64).rng())?;
            kinds
                .iter()
                .map(|&kind| {
                    let mut rng = seeds.child("sets").index(i as u64).child(kind_label(kind)).rng();
                    Ok(kind.evaluate(&v, m, &mut rng)?.value)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let columns = (0..kinds.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
    Ok(ReplicateTable { kinds: kinds.to_vec(), columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub variance: Estimate,
    pub mean: Estimate,
    pub replicates: usize,
}

/// Variance of one estimator over `replicates` independent batches.
pub fn empirical_variance(
    kind: ObjectiveKind,
    sampler: &dyn LogWeightSampler,
    n: usize,
    m: usize,
    replicates: usize,
    seeds: SeedTree,
) -> Result<VarianceEstimate> {
    let table = objective_replicates(&[kind], sampler, n, m, replicates, seeds)?;
    let col = &table.columns[0];
    Ok(VarianceEstimate {
        variance: stats::variance_estimate(col),
        mean: stats::mean_estimate(col),
        replicates,
    })
}

/// One banded comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCheck {
    pub name: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub std_error: f64,
    /// `(rhs - lhs) / std_error` for `<=`, `|lhs - rhs| / std_error` for `≈`.
    pub margin_se: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "~=")]
    Equal,
}

impl BandCheck {
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, std_error: f64) -> Self {
        let passed = lhs - rhs <= BAND_SE * std_error;
        Self {
            name: name.into(),
            relation: Relation::AtMost,
            lhs,
            rhs,
            std_error,
            margin_se: (rhs - lhs) / std_error,
            passed,
        }
    }

    pub fn equal(name: impl Into<String>, lhs: f64, rhs: f64, std_error: f64) -> Self {
        let passed = (lhs - rhs).abs() <= BAND_SE * std_error;
        Self {
            name: name.into(),
            relation: Relation::Equal,
            lhs,
            rhs,
            std_error,
            margin_se: (lhs - rhs).abs() / std_error,
            passed,
        }
    }

    pub fn line(&self) -> String {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::Equal => "~=",
        };
        format!(
            "{} {}: {:.6e} {rel} {:.6e} (se {:.3e}, margin {:.2} se)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.lhs,
            self.rhs,
            self.std_error,
            self.margin_se
        )
    }
}

/// One CSV row of a variance report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub estimator: String,
    pub n: usize,
    pub m: usize,
    pub ell_or_k: Option<usize>,
    pub variance: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// A derived scalar with its uncertainty and (optional) theoretical target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub name: String,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
    pub derived: Vec<Derived>,
    pub checks: Vec<BandCheck>,
    pub warnings: Vec<String>,
}

impl VarianceReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&BandCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn derived(&self, name: &str) -> Option<&Derived> {
        self.derived.iter().find(|d| d.name == name)
    }

    pub fn row(&self, estimator: &str) -> Option<&VarianceRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }

    pub fn merge(&mut self, other: VarianceReport) {
        self.rows.extend(other.rows);
        self.derived.extend(other.derived);
        self.checks.extend(other.checks);
        self.warnings.extend(other.warnings);
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    /// Columns: `estimator,n,m,ell_or_k,variance,std_error,R,seed`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "estimator,n,m,ell_or_k,variance,std_error,R,seed")?;
        for r in &self.rows {
            let lk = r.ell_or_k.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                r.estimator, r.n, r.m, lk, r.variance, r.std_error, r.replicates, r.seed
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

fn ell_or_k(kind: ObjectiveKind) -> Option<usize> {
    match kind {
        ObjectiveKind::Random { k } => Some(k),
        ObjectiveKind::Permuted { ell } => Some(ell),
        _ => None,
    }
}

/// Jackknife helper over a set of replicate columns: computes `f` on the full
/// per-column statistics and on each leave-one-out vector.
fn joint_jackknife<F>(full: &[f64], loo: &[Vec<f64>], f: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let value = f(full);
    let r = loo.first().map_or(0, Vec::len);
    let mut buf = vec![0.0; full.len()];
    let reps: Vec<f64> = (0..r)
        .map(|i| {
            for (b, col) in buf.iter_mut().zip(loo) {
                *b = col[i];
            }
            f(&buf)
        })
        .collect();
    Estimate { value, std_error: stats::jackknife_se(&reps) }
}

fn require_divisible(n: usize, m: usize) -> Result<usize> {
    if m == 0 || m > n || n % m != 0 {
        return Err(Error::NotDivisible { n, m });
    }
    Ok(n / m)
}

/// Hoeffding's bounds `m²ζ₁/n <= var(L^U) <= mζ_m/n = var(L_{n,m})` and
/// `mζ₁ <= ζ_m`, each within the band.
pub fn check_hoeffding(
    sampler: &dyn LogWeightSampler,
    n: usize,
    m: usize,
    replicates: usize,
    seeds: SeedTree,
    cap: u64,
) -> Result<VarianceReport> {
    require_divisible(n, m)?;
    check_replicates(replicates.max(3))?;
    check_cap(n, m, cap)?;
    let zeta1 = estimate_zeta(sampler, m, 1, replicates, seeds.child("zeta1"))?;
    let zetam = estimate_zeta(sampler, m, m, replicates, seeds.child("zetam"))?;
    let kinds = [ObjectiveKind::Standard, ObjectiveKind::Complete { cap }];
    let table = objective_replicates(&kinds, sampler, n, m, replicates, seeds.child("estimators"))?;
    let std_var = stats::variance_estimate(&table.columns[0]);
    let comp_var = stats::variance_estimate(&table.columns[1]);
    let loo: Vec<Vec<f64>> = table.columns.iter().map(|c| stats::loo_variances(c)).collect();
    let full = [std_var.value, comp_var.value];
    let diff = joint_jackknife(&full, &loo, |v| v[1] - v[0]);

    let (nf, mf) = (n as f64, m as f64);
    let lower = mf * mf / nf * zeta1.value;
    let lower_se = mf * mf / nf * zeta1.std_error;
    let upper = mf / nf * zetam.value;
    let upper_se = mf / nf * zetam.std_error;
    let hyp = |a: f64, b: f64| (a * a + b * b).sqrt();

    let mut report = VarianceReport::default();
    let seed = seeds.master();
    for (kind, est) in kinds.iter().zip([std_var, comp_var]) {
        report.rows.push(VarianceRow {
            estimator: kind_label(*kind).to_string(),
            n,
            m,
            ell_or_k: None,
            variance: est.value,
            std_error: est.std_error,
            replicates,
            seed,
        });
    }
    for (name, z) in [("zeta_1", zeta1), ("zeta_m", zetam)] {
        report.derived.push(Derived {
            name: name.into(),
            value: Some(z.value),
            std_error: Some(z.std_error),
            target: None,
        });
    }
    report.derived.push(Derived {
        name: "hoeffding_lower".into(),
        value: Some(lower),
        std_error: Some(lower_se),
        target: None,
    });
    report.derived.push(Derived {
        name: "hoeffding_upper".into(),
        value: Some(upper),
        std_error: Some(upper_se),
        target: None,
    });
    report.checks.push(BandCheck::at_most(
        "hoeffding: m^2 zeta_1 / n <= var(complete)",
        lower,
        comp_var.value,
        hyp(lower_se, comp_var.std_error),
    ));
    report.checks.push(BandCheck::at_most(
        "hoeffding: var(complete) <= var(standard)",
        comp_var.value,
        std_var.value,
        diff.std_error,
    ));
    report.checks.push(BandCheck::at_most(
        "hoeffding: var(complete) <= m zeta_m / n",
        comp_var.value,
        upper,
        hyp(upper_se, comp_var.std_error),
    ));
    report.checks.push(BandCheck::equal(
        "hoeffding: m zeta_m / n = var(standard)",
        upper,
        std_var.value,
        hyp(upper_se, std_var.std_error),
    ));
    report.checks.push(BandCheck::at_most(
        "hoeffding: m zeta_1 <= zeta_m",
        mf * zeta1.value,
        zetam.value,
        hyp(mf * zeta1.std_error, zetam.std_error),
    ));
    Ok(report)
}

/// Variance ordering `complete <= permuted <= standard <= random`, the
/// identity `var(perm) = var(std)/ℓ + (1 - 1/ℓ) var(complete)`, and the
/// achieved fraction of the complete estimator's variance reduction.
///
/// When `C(n, m)` exceeds `cap` the complete estimator is skipped with a
/// warning and only the remaining orderings are checked.
pub fn check_ordering_and_fraction(
    sampler: &dyn LogWeightSampler,
    n: usize,
    m: usize,
    ell: usize,
    replicates: usize,
    seeds: SeedTree,
    cap: u64,
) -> Result<VarianceReport> {
    let r = require_divisible(n, m)?;
    if ell == 0 {
        return Err(invalid("ell must be at least 1"));
    }
    if replicates < 3 {
        return Err(invalid("ordering checks need at least 3 replicates"));
    }
    let mut report = VarianceReport::default();
    let mut kinds = vec![
        ObjectiveKind::Standard,
        ObjectiveKind::Permuted { ell },
        ObjectiveKind::Random { k: ell * r },
    ];
    let with_complete = match check_cap(n, m, cap) {
        Ok(_) => {
            kinds.push(ObjectiveKind::Complete { cap });
            true
        }
        Err(e) => {
            report.warnings.push(format!("complete estimator skipped (cap): {e}"));
            false
        }
    };
    let table = objective_replicates(&kinds, sampler, n, m, replicates, seeds)?;
    let full: Vec<f64> = table.columns.iter().map(|c| stats::sample_variance(c)).collect();
    let loo: Vec<Vec<f64>> = table.columns.iter().map(|c| stats::loo_variances(c)).collect();
    let seed = seeds.master();
    for (k, kind) in kinds.iter().enumerate() {
        report.rows.push(VarianceRow {
            estimator: kind_label(*kind).to_string(),
            n,
            m,
            ell_or_k: ell_or_k(*kind),
            variance: full[k],
            std_error: stats::jackknife_se(&loo[k]),
            replicates,
            seed,
        });
    }
    let (std, perm, rand, comp) = (0, 1, 2, 3);
    let diff_se = |a: usize, b: usize| joint_jackknife(&full, &loo, |v| v[a] - v[b]).std_error;
    if with_complete {
        report.checks.push(BandCheck::at_most(
            "ordering: var(complete) <= var(permuted)",
            full[comp],
            full[perm],
            diff_se(comp, perm),
        ));
    }
    report.checks.push(BandCheck::at_most(
        "ordering: var(permuted) <= var(standard)",
        full[perm],
        full[std],
        diff_se(perm, std),
    ));
    report.checks.push(BandCheck::at_most(
        "ordering: var(standard) <= var(random)",
        full[std],
        full[rand],
        diff_se(std, rand),
    ));
    if with_complete {
        let inv = 1.0 / ell as f64;
        let residual = joint_jackknife(&full, &loo, |v| v[perm] - (inv * v[std] + (1.0 - inv) * v[comp]));
        report.derived.push(Derived {
            name: "permuted_identity_residual".into(),
            value: Some(residual.value),
            std_error: Some(residual.std_error),
            target: Some(0.0),
        });
        report.checks.push(BandCheck::equal(
            "identity: var(perm) = var(std)/l + (1-1/l) var(complete)",
            residual.value,
            0.0,
            residual.std_error,
        ));
        let target = 1.0 - inv;
        let denom = full[std] - full[comp];
        if denom != 0.0 {
            let fraction = joint_jackknife(&full, &loo, |v| (v[std] - v[perm]) / (v[std] - v[comp]));
            report.derived.push(Derived {
                name: "variance_reduction_fraction".into(),
                value: Some(fraction.value),
                std_error: Some(fraction.std_error),
                target: Some(target),
            });
            report.checks.push(BandCheck::equal(
                "fraction: (var(std)-var(perm))/(var(std)-var(complete)) = 1 - 1/l",
                fraction.value,
                target,
                fraction.std_error,
            ));
        } else {
            report.warnings.push("variance-reduction fraction undefined: var(standard) = var(complete)".into());
            report.derived.push(Derived {
                name: "variance_reduction_fraction".into(),
                value: None,
                std_error: None,
                target: Some(target),
            });
        }
    }
    Ok(report)
}

/// Per-estimator gradient statistics: total variance `tr(var G)` and
/// expected squared norm `E‖G‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientStats {
    pub estimator: String,
    pub trace_variance: Estimate,
    pub mean_sq_norm: Estimate,
    pub trace_ratio_to_standard: Estimate,
    pub sq_norm_ratio_to_standard: Estimate,
}

/// Gradient replicates `grads[k][r]` for estimator `k` on replicate `r`.
pub fn gradient_replicates<M: TargetModel + ?Sized>(
    specs: &[GradientSpec],
    model: &M,
    family: &GaussianFamily,
    params: &[f64],
    n: usize,
    m: usize,
    replicates: usize,
    seeds: SeedTree,
) -> Result<Vec<Vec<GradientVector>>> {
    let q = family.bind(params)?;
    let rows: Vec<Vec<GradientVector>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let eps = draw_noise(n, family.dim, &mut seeds.child("draws").index(i as u64).rng());
            let batch = log_weight_batch(model, &q, &eps)?;
            specs
                .iter()
                .map(|spec| {
                    let mut rng = seeds.child("sets").index(i as u64).child(&spec.label()).rng();
                    spec.evaluate(&batch, m, &mut rng)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..specs.len()).map(|k| rows.iter().map(|r| r[k].clone()).collect()).collect())
}

/// Compares `tr(var G)` and `E‖G‖²` of the complete, permuted-block and
/// random-subset gradient estimators against the standard one at fixed
/// variational parameters.
#[allow(clippy::too_many_arguments)]
pub fn gradient_variance_report<M: TargetModel + ?Sized>(
    model: &M,
    family: &GaussianFamily,
    params: &[f64],
    base: BaseKind,
    n: usize,
    m: usize,
    ell: usize,
    replicates: usize,
    seeds: SeedTree,
    cap: u64,
) -> Result<(VarianceReport, Vec<GradientStats>)> {
    let r = require_divisible(n, m)?;
    if replicates < 3 {
        return Err(invalid("gradient variance needs at least 3 replicates"));
    }
    let mut report = VarianceReport::default();
    let mut specs = vec![
        GradientSpec::new(ObjectiveKind::Standard, base),
        GradientSpec::new(ObjectiveKind::Permuted { ell }, base),
        GradientSpec::new(ObjectiveKind::Random { k: ell * r }, base),
    ];
    let with_complete = match check_cap(n, m, cap) {
        Ok(_) => {
            specs.push(GradientSpec::new(ObjectiveKind::Complete { cap }, base));
            true
        }
        Err(e) => {
            report.warnings.push(format!("complete estimator skipped (cap): {e}"));
            false
        }
    };
    let grads = gradient_replicates(&specs, model, family, params, n, m, replicates, seeds)?;
    let d = family.param_dim();

    // Column layout for the joint jackknife: [trace_k..., sqnorm_k...].
    let mut full = Vec::new();
    let mut loo = Vec::new();
    for g in &grads {
        let mut tr = 0.0;
        let mut tr_loo = vec![0.0; replicates];
        for j in 0..d {
            let col: Vec<f64> = g.iter().map(|x| x.0[j]).collect();
            tr += stats::sample_variance(&col);
            for (acc, v) in tr_loo.iter_mut().zip(stats::loo_variances(&col)) {
                *acc += v;
            }
        }
        full.push(tr);
        loo.push(tr_loo);
    }
    for g in &grads {
        let sq: Vec<f64> = g.iter().map(GradientVector::norm_sq).collect();
        full.push(stats::mean(&sq));
        loo.push(stats::loo_means(&sq));
    }
    let k = specs.len();
    let seed = seeds.master();
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let tr = joint_jackknife(&full, &loo, |v| v[i]);
        let sq = joint_jackknife(&full, &loo, |v| v[k + i]);
        let tr_ratio = joint_jackknife(&full, &loo, |v| v[i] / v[0]);
        let sq_ratio = joint_jackknife(&full, &loo, |v| v[k + i] / v[k]);
        report.rows.push(VarianceRow {
            estimator: format!("grad_{}", spec.label()),
            n,
            m,
            ell_or_k: ell_or_k(spec.estimator),
            variance: tr.value,
            std_error: tr.std_error,
            replicates,
            seed,
        });
        out.push(GradientStats {
            estimator: spec.label(),
            trace_variance: tr,
            mean_sq_norm: sq,
            trace_ratio_to_standard: tr_ratio,
            sq_norm_ratio_to_standard: sq_ratio,
        });
    }
    let mut compare = |name: &str, i: usize| {
        let d_tr = joint_jackknife(&full, &loo, |v| v[i] - v[0]);
        let d_sq = joint_jackknife(&full, &loo, |v| v[k + i] - v[k]);
        report.checks.push(BandCheck::at_most(
            format!("gradient: tr var({name}) <= tr var(standard)"),
            full[i],
            full[0],
            d_tr.std_error,
        ));
        report.checks.push(BandCheck::at_most(
            format!("gradient: E|{name}|^2 <= E|standard|^2"),
            full[k + i],
            full[k],
            d_sq.std_error,
        ));
    };
    if with_complete {
        compare("complete", 3);
    }
    compare("permuted", 1);
    for s in &out {
        report.derived.push(Derived {
            name: format!("trace_ratio_{}", s.estimator),
            value: Some(s.trace_ratio_to_standard.value),
            std_error: Some(s.trace_ratio_to_standard.std_error),
            target: None,
        });
    }
    Ok((report, out))
}
