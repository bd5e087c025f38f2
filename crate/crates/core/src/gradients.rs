//! Base gradient estimators (reparameterization and DReG), their U-statistic
//! averages over index-set collections, and gradients of the sort-based
//! surrogate objectives.
//!
//! Every per-sample derivative is assembled by hand from the Gaussian family's
//! closed forms. A [`SampleBatch`] caches, for each row `i`,
//!
//! - `grad_v[i] = ∇_φ V_i`, the total derivative of the log-weight through
//!   `z_i = T_φ(ε_i)`, and
//! - `path[i] = Jᵀ(∇_z ln p − ∇_z ln q)`, the same derivative without the
//!   parameter score `∇_φ ln q|_z`,
//!
//! so that every estimator is a weighted sum of cached rows.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{visit_complete, ObjectiveKind};
use crate::models::{BoundGaussian, GaussianFamily, TargetModel};
use crate::numeric::{sort_descending, weight_profile, LogWeights};
use crate::subsets::{
    check_cap, disjoint_blocks, permuted_blocks, random_subsets, CollectionKind, IndexSetCollection,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// `n` reparameterized draws with their log-weights and cached per-row
/// derivatives. Matrices are row-major.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub n: usize,
    pub d_z: usize,
    pub d_phi: usize,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    pub v: LogWeights,
    pub log_p: Vec<f64>,
    pub log_q: Vec<f64>,
    pub grad_logp_z: Vec<f64>,
    grad_v: Vec<f64>,
    path: Vec<f64>,
}

impl SampleBatch {
    pub fn eps_row(&self, i: usize) -> &[f64] {
        &self.eps[i * self.d_z..(i + 1) * self.d_z]
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d_z..(i + 1) * self.d_z]
    }

    /// `∇_φ V_i`.
    pub fn grad_v_row(&self, i: usize) -> &[f64] {
        &self.grad_v[i * self.d_phi..(i + 1) * self.d_phi]
    }

    /// `Jᵀ(∇_z ln p − ∇_z ln q)` at row `i`.
    pub fn path_row(&self, i: usize) -> &[f64] {
        &self.path[i * self.d_phi..(i + 1) * self.d_phi]
    }
}

/// Standard normal noise matrix with `n` rows of `d` entries.
pub fn draw_noise<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<f64> {
    (0..n * d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Builds the batch for noise `eps` (`n × d_z`, row-major).
pub fn log_weight_batch<M: TargetModel + ?Sized>(
    model: &M,
    q: &BoundGaussian<'_>,
    eps: &[f64],
) -> Result<SampleBatch> {
    let d_z = q.dim();
    if model.dim() != d_z {
        return Err(Error::DimensionMismatch { expected: d_z, found: model.dim() });
    }
    if d_z == 0 || eps.len() % d_z != 0 || eps.is_empty() {
        return Err(invalid(format!("noise length {} is not a positive multiple of {d_z}", eps.len())));
    }
    let n = eps.len() / d_z;
    let d_phi = q.family().param_dim();
    let mut z = Vec::with_capacity(n * d_z);
    let mut v = Vec::with_capacity(n);
    let mut log_p = Vec::with_capacity(n);
    let mut log_q = Vec::with_capacity(n);
    let mut grad_logp_z = vec![0.0; n * d_z];
    let mut grad_v = Vec::with_capacity(n * d_phi);
    let mut path = Vec::with_capacity(n * d_phi);
    for i in 0..n {
        let e = &eps[i * d_z..(i + 1) * d_z];
        let s = q.sample(e)?;
        let gp = &mut grad_logp_z[i * d_z..(i + 1) * d_z];
        let lp = model.log_joint_and_grad(&s.z, gp);
        let diff: Vec<f64> = gp.iter().zip(&s.grad_z_log_q).map(|(a, b)| a - b).collect();
        let p = q.jacobian_t_vec(e, &diff);
        let score = q.grad_params_log_q(e);
        grad_v.extend(p.iter().zip(&score).map(|(a, b)| a - b));
        path.extend_from_slice(&p);
        v.push(lp - s.log_q);
        log_p.push(lp);
        log_q.push(s.log_q);
        z.extend_from_slice(&s.z);
    }
    Ok(SampleBatch {
        n,
        d_z,
        d_phi,
        eps: eps.to_vec(),
        z,
        v: LogWeights::new(v)?,
        log_p,
        log_q,
        grad_logp_z,
        grad_v,
        path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Reparam,
    Dreg,
}

fn check_rows(batch: &SampleBatch, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= batch.n) {
        return Err(Error::DimensionMismatch { expected: batch.n, found: bad + 1 });
    }
    Ok(())
}

/// Normalized importance weights of `rows`, returned in descending log-weight
/// order (ties by row index) together with that order.
fn softmax_sorted(batch: &SampleBatch, rows: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let v = batch.v.as_slice();
    let mut order = rows.to_vec();
    order.sort_unstable_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    let top = v[order[0]];
    let e: Vec<f64> = order.iter().map(|&r| (v[r] - top).exp()).collect();
    let total = 1.0 + e[1..].iter().sum::<f64>();
    (order, e.into_iter().map(|x| x / total).collect())
}

/// Reparameterization gradient of `h(V_{rows})`: `Σ w̃_i ∇_φ V_i`.
pub fn base_reparam_gradient(batch: &SampleBatch, rows: &[usize]) -> Result<GradientVector> {
    base_gradient(batch, rows, BaseKind::Reparam)
}

/// DReG gradient of `h(V_{rows})`: `Σ w̃_i² Jᵀ(∇_z ln p − ∇_z ln q)`.
pub fn base_dreg_gradient(batch: &SampleBatch, rows: &[usize]) -> Result<GradientVector> {
    base_gradient(batch, rows, BaseKind::Dreg)
}

pub fn base_gradient(batch: &SampleBatch, rows: &[usize], kind: BaseKind) -> Result<GradientVector> {
    check_rows(batch, rows)?;
    let (order, w) = softmax_sorted(batch, rows);
    let mut out = vec![0.0; batch.d_phi];
    for (&r, &wi) in order.iter().zip(&w) {
        let (coef, row) = match kind {
            BaseKind::Reparam => (wi, batch.grad_v_row(r)),
            BaseKind::Dreg => (wi * wi, batch.path_row(r)),
        };
        for (o, g) in out.iter_mut().zip(row) {
            *o += coef * g;
        }
    }
    Ok(GradientVector(out))
}

fn combine_rows(batch: &SampleBatch, coef: &[f64], scale: f64, kind: BaseKind) -> GradientVector {
    let mut out = vec![0.0; batch.d_phi];
    for (r, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let row = match kind {
            BaseKind::Reparam => batch.grad_v_row(r),
            BaseKind::Dreg => batch.path_row(r),
        };
        let c = c * scale;
        for (o, g) in out.iter_mut().zip(row) {
            *o += c * g;
        }
    }
    GradientVector(out)
}

/// `(1/|S|) Σ_{s ∈ S} g(rows s)`.
///
/// Per-row coefficients are accumulated first and the cached rows combined
/// once, in row order.
pub fn u_statistic_gradient(batch: &SampleBatch, sets: &IndexSetCollection, kind: BaseKind) -> Result<GradientVector> {
    if sets.n() != batch.n {
        return Err(Error::DimensionMismatch { expected: sets.n(), found: batch.n });
    }
    if sets.kind() == CollectionKind::Complete {
        return complete_gradient(batch, sets.m(), u64::MAX, kind);
    }
    let mut coef = vec![0.0; batch.n];
    for s in sets.iter() {
        let (order, w) = softmax_sorted(batch, s);
        for (&r, &wi) in order.iter().zip(&w) {
            coef[r] += match kind {
                BaseKind::Reparam => wi,
                BaseKind::Dreg => wi * wi,
            };
        }
    }
    Ok(combine_rows(batch, &coef, 1.0 / sets.len() as f64, kind))
}

/// Complete U-statistic gradient `Ĝ^U_{n,m}` over all `C(n, m)` subsets.
pub fn complete_gradient(batch: &SampleBatch, m: usize, cap: u64, kind: BaseKind) -> Result<GradientVector> {
    let count = check_cap(batch.n, m, cap)?;
    let sorted = sort_descending(&batch.v);
    let mut coef_sorted = vec![0.0; batch.n];
    visit_complete(&sorted.sorted, m, |idx, e, tail| {
        let total = 1.0 + tail;
        for (&p, &ed) in idx.iter().zip(e) {
            let w = ed / total;
            coef_sorted[p] += match kind {
                BaseKind::Reparam => w,
                BaseKind::Dreg => w * w,
            };
        }
    });
    let mut coef = vec![0.0; batch.n];
    for (pos, &row) in sorted.perm.iter().enumerate() {
        coef[row] = coef_sorted[pos];
    }
    Ok(combine_rows(batch, &coef, 1.0 / count as f64, kind))
}

/// Reparameterization gradient of the first- (`order = 1`) or second-order
/// (`order = 2`) sort-based surrogate. Ties follow the deterministic sort
/// permutation.
pub fn surrogate_gradient(batch: &SampleBatch, m: usize, order: u8) -> Result<GradientVector> {
    if !(1..=2).contains(&order) {
        return Err(invalid(format!("surrogate order must be 1 or 2, got {order}")));
    }
    if order == 2 && m < 2 {
        return Err(invalid("second-order surrogate needs m >= 2"));
    }
    let profile = weight_profile(batch.n, m)?;
    let sorted = sort_descending(&batch.v);
    let mut coef = vec![0.0; batch.n];
    for (pos, &w) in profile.w.iter().enumerate() {
        coef[sorted.perm[pos]] += w;
    }
    if order == 2 {
        for (i, &w2) in profile.w2.iter().enumerate() {
            let delta = sorted.sorted[i + 1] - sorted.sorted[i];
            // d/dΔ ln(1 + e^Δ) = e^Δ / (1 + e^Δ); Δ <= 0 here.
            let e = delta.exp();
            let c = w2 * (e / (1.0 + e));
            coef[sorted.perm[i + 1]] += c;
            coef[sorted.perm[i]] -= c;
        }
    }
    Ok(combine_rows(batch, &coef, 1.0, BaseKind::Reparam))
}

/// Training-gradient selection: an index-set scheme (or a surrogate) plus a
/// base estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSpec {
    pub estimator: ObjectiveKind,
    #[serde(default = "reparam")]
    pub base: BaseKind,
}

fn reparam() -> BaseKind {
    BaseKind::Reparam
}

impl GradientSpec {
    pub fn new(estimator: ObjectiveKind, base: BaseKind) -> Self {
        Self { estimator, base }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.estimator, ObjectiveKind::Approx1 | ObjectiveKind::Approx2) && self.base == BaseKind::Dreg {
            return Err(invalid("the sort-based surrogates only support reparameterization gradients"));
        }
        Ok(())
    }

    pub fn evaluate<R: Rng + ?Sized>(&self, batch: &SampleBatch, m: usize, rng: &mut R) -> Result<GradientVector> {
        self.validate()?;
        let n = batch.n;
        match self.estimator {
            ObjectiveKind::Standard => u_statistic_gradient(batch, &disjoint_blocks(n, m)?, self.base),
            ObjectiveKind::Complete { cap } => complete_gradient(batch, m, cap, self.base),
            ObjectiveKind::Random { k } => u_statistic_gradient(batch, &random_subsets(n, m, k, rng)?, self.base),
            ObjectiveKind::Permuted { ell } => {
                u_statistic_gradient(batch, &permuted_blocks(n, m, ell, rng)?, self.base)
            }
            ObjectiveKind::Approx1 => surrogate_gradient(batch, m, 1),
            ObjectiveKind::Approx2 => surrogate_gradient(batch, m, 2),
        }
    }

    pub fn label(&self) -> String {
        let base = match self.estimator {
            ObjectiveKind::Approx1 | ObjectiveKind::Approx2 => "",
            _ => match self.base {
                BaseKind::Reparam => "",
                BaseKind::Dreg => "_dreg",
            },
        };
        format!("{}{}", self.estimator.id().name(), base)
    }
}

/// Central differences of `f` at `params`, one coordinate at a time.
pub fn finite_difference_gradient<F>(f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut p = params.to_vec();
    Ok((0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let hi = f(&p);
            p[i] = orig - step;
            let lo = f(&p);
            p[i] = orig;
            (hi - lo) / (2.0 * step)
        })
        .collect())
}

/// Convenience: bind `params`, draw nothing, and build the batch for `eps`.
pub fn batch_at<M: TargetModel + ?Sized>(
    model: &M,
    family: &GaussianFamily,
    params: &[f64],
    eps: &[f64],
) -> Result<SampleBatch> {
    let q = family.bind(params)?;
    log_weight_batch(model, &q, eps)
}
