//! Objective estimators of the IW-ELBO built from one batch of log-weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{kernel_in_place, ln_usize, sort_descending, weight_profile, LogWeights};
use crate::subsets::{
    all_subsets, check_cap, disjoint_blocks, permuted_blocks, random_subsets, Combinations, CollectionKind,
    IndexSetCollection, DEFAULT_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Standard,
    CompleteU,
    RandomSubsets,
    PermutedBlock,
    Approx1,
    Approx2,
    Jackknife,
}

impl EstimatorId {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::Standard => "standard",
            EstimatorId::CompleteU => "complete",
            EstimatorId::RandomSubsets => "random",
            EstimatorId::PermutedBlock => "permuted",
            EstimatorId::Approx1 => "approx1",
            EstimatorId::Approx2 => "approx2",
            EstimatorId::Jackknife => "jackknife",
        }
    }
}

impl From<CollectionKind> for EstimatorId {
    fn from(kind: CollectionKind) -> Self {
        match kind {
            CollectionKind::Disjoint => EstimatorId::Standard,
            CollectionKind::Complete => EstimatorId::CompleteU,
            CollectionKind::Random { .. } => EstimatorId::RandomSubsets,
            CollectionKind::PermutedBlock { .. } => EstimatorId::PermutedBlock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub id: EstimatorId,
    pub n: usize,
    pub m: usize,
    /// Number of kernel terms averaged; implicit `C(n, m)` for the
    /// sort-based approximations. Saturates at `u128::MAX`.
    pub num_sets: u128,
}

fn check_m(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(invalid(format!("estimator needs 1 <= m <= n, got n={n}, m={m}")));
    }
    Ok(())
}

/// `(1/|S|) Σ_{s ∈ S} h(v_s)`. Complete collections are evaluated through the
/// streaming sorted path, so the result does not depend on the order of `v`.
pub fn u_statistic(v: &LogWeights, sets: &IndexSetCollection) -> Result<ObjectiveEstimate> {
    if sets.n() != v.len() {
        return Err(Error::DimensionMismatch { expected: sets.n(), found: v.len() });
    }
    if sets.kind() == CollectionKind::Complete {
        return complete_u(v, sets.m(), u64::MAX);
    }
    let values = v.as_slice();
    let mut buf = vec![0.0; sets.m()];
    let mut total = 0.0;
    for s in sets.iter() {
        for (b, &i) in buf.iter_mut().zip(s) {
            *b = values[i];
        }
        total += kernel_in_place(&mut buf);
    }
    Ok(ObjectiveEstimate {
        value: total / sets.len() as f64,
        id: sets.kind().into(),
        n: sets.n(),
        m: sets.m(),
        num_sets: sets.len() as u128,
    })
}

/// Complete U-statistic `L^U_{n,m}` without materializing the subsets.
pub fn complete_u(v: &LogWeights, m: usize, cap: u64) -> Result<ObjectiveEstimate> {
    let count = check_cap(v.len(), m, cap)?;
    let sorted = sort_descending(v).sorted;
    let ln_m = ln_usize(m);
    let mut total = 0.0;
    visit_complete(&sorted, m, |idx, _, tail| {
        total += (sorted[idx[0]] - ln_m) + tail.ln_1p();
    });
    Ok(ObjectiveEstimate {
        value: total / count as f64,
        id: EstimatorId::CompleteU,
        n: v.len(),
        m,
        num_sets: count,
    })
}

/// Walks every size-`m` subset of sorted positions in lexicographic order.
///
/// For each subset the callback receives the positions, `e[d] = exp(s[idx[d]] -
/// s[idx[0]])` (with `e[0] = 1`), and `tail = e[1] + ... + e[m-1]` summed left to
/// right. Prefix sums are reused across consecutive subsets; the arithmetic is
/// the same as [`crate::numeric::kernel_h`] on each subset.
pub(crate) fn visit_complete<F>(sorted: &[f64], m: usize, mut f: F)
where
    F: FnMut(&[usize], &[f64], f64),
{
    let n = sorted.len();
    debug_assert!(m >= 1 && m <= n);
    let mut idx: Vec<usize> = (0..m).collect();
    let mut e = vec![1.0; m];
    // partial[d] = e[1] + ... + e[d]
    let mut partial = vec![0.0; m];
    let refresh = |idx: &[usize], e: &mut [f64], partial: &mut [f64], from: usize| {
        let top = sorted[idx[0]];
        for d in from.max(1)..idx.len() {
            e[d] = (sorted[idx[d]] - top).exp();
            partial[d] = partial[d - 1] + e[d];
        }
    };
    refresh(&idx, &mut e, &mut partial, 1);
    loop {
        f(&idx, &e, partial[m - 1]);
        let Some(i) = (0..m).rev().find(|&i| idx[i] < n - m + i) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
        refresh(&idx, &mut e, &mut partial, i);
    }
}

/// Sort-based first-order approximation `Â_{n,m}` in `O(n log n)`.
pub fn approx_first_order(v: &LogWeights, m: usize) -> Result<ObjectiveEstimate> {
    check_m(v.len(), m)?;
    let sorted = sort_descending(v).sorted;
    Ok(ObjectiveEstimate {
        value: first_order_sorted(&sorted, m)?,
        id: EstimatorId::Approx1,
        n: v.len(),
        m,
        num_sets: crate::numeric::binomial(v.len(), m).unwrap_or(u128::MAX),
    })
}

fn first_order_sorted(sorted: &[f64], m: usize) -> Result<f64> {
    let n = sorted.len();
    let profile = weight_profile(n, m)?;
    let mut acc = 0.0;
    for (w, s) in profile.w[..n - m + 1].iter().zip(sorted) {
        acc += w * s;
    }
    Ok(acc - ln_usize(m))
}

/// Definition form of `Â_{n,m}`: average subset maximum minus `ln m`.
/// Enumerates all subsets; intended as a reference for [`approx_first_order`].
pub fn approx_first_order_naive(v: &LogWeights, m: usize, cap: u64) -> Result<ObjectiveEstimate> {
    let count = check_cap(v.len(), m, cap)?;
    let values = v.as_slice();
    let mut total = 0.0;
    for s in Combinations::new(values.len(), m) {
        total += s.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(ObjectiveEstimate {
        value: total / count as f64 - ln_usize(m),
        id: EstimatorId::Approx1,
        n: v.len(),
        m,
        num_sets: count,
    })
}

/// Second-order approximation `Â⁽²⁾_{n,m}`: the first-order value plus one
/// `ln(1 + e^Δ)` correction per adjacent pair of sorted log-weights.
pub fn approx_second_order(v: &LogWeights, m: usize) -> Result<ObjectiveEstimate> {
    if m < 2 {
        return Err(invalid("second-order approximation needs m >= 2"));
    }
    check_m(v.len(), m)?;
    let sorted = sort_descending(v).sorted;
    let profile = weight_profile(v.len(), m)?;
    let first = first_order_sorted(&sorted, m)?;
    let mut correction = 0.0;
    for (i, w2) in profile.w2.iter().enumerate() {
        correction += w2 * (sorted[i + 1] - sorted[i]).exp().ln_1p();
    }
    Ok(ObjectiveEstimate {
        value: first + correction,
        id: EstimatorId::Approx2,
        n: v.len(),
        m,
        num_sets: crate::numeric::binomial(v.len(), m).unwrap_or(u128::MAX),
    })
}

/// Inner estimator used by [`jackknife_first_order`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JackknifeInner {
    Complete,
    Approx2,
}

/// First-order jackknife `m·L^U_{n,m} - (m-1)·L^U_{n,m-1}`.
pub fn jackknife_first_order(
    v: &LogWeights,
    m: usize,
    cap: u64,
    inner: JackknifeInner,
) -> Result<ObjectiveEstimate> {
    if m < 2 {
        return Err(invalid("jackknife needs m >= 2"));
    }
    check_m(v.len(), m)?;
    let eval = |k: usize| -> Result<ObjectiveEstimate> {
        match inner {
            JackknifeInner::Complete => complete_u(v, k, cap),
            // Â⁽²⁾ is undefined at k = 1, where the complete statistic is just the mean.
            JackknifeInner::Approx2 if k == 1 => complete_u(v, 1, cap),
            JackknifeInner::Approx2 => approx_second_order(v, k),
        }
    };
    let upper = eval(m)?;
    let lower = eval(m - 1)?;
    Ok(ObjectiveEstimate {
        value: m as f64 * upper.value - (m - 1) as f64 * lower.value,
        id: EstimatorId::Jackknife,
        n: v.len(),
        m,
        num_sets: upper.num_sets.saturating_add(lower.num_sets),
    })
}

/// Objective estimator selection as it appears in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveKind {
    Standard,
    Complete {
        #[serde(default = "default_cap")]
        cap: u64,
    },
    Random {
        k: usize,
    },
    Permuted {
        ell: usize,
    },
    Approx1,
    Approx2,
}

fn default_cap() -> u64 {
    DEFAULT_CAP
}

impl ObjectiveKind {
    pub fn id(self) -> EstimatorId {
        match self {
            ObjectiveKind::Standard => EstimatorId::Standard,
            ObjectiveKind::Complete { .. } => EstimatorId::CompleteU,
            ObjectiveKind::Random { .. } => EstimatorId::RandomSubsets,
            ObjectiveKind::Permuted { .. } => EstimatorId::PermutedBlock,
            ObjectiveKind::Approx1 => EstimatorId::Approx1,
            ObjectiveKind::Approx2 => EstimatorId::Approx2,
        }
    }

    /// The index-set collection this kind averages over, drawn from `rng` in
    /// the same way as [`ObjectiveKind::evaluate`]. `None` for the sort-based
    /// approximations.
    pub fn collection<R: Rng + ?Sized>(self, n: usize, m: usize, rng: &mut R) -> Result<Option<IndexSetCollection>> {
        Ok(Some(match self {
            ObjectiveKind::Standard => disjoint_blocks(n, m)?,
            ObjectiveKind::Complete { cap } => all_subsets(n, m, cap)?,
            ObjectiveKind::Random { k } => random_subsets(n, m, k, rng)?,
            ObjectiveKind::Permuted { ell } => permuted_blocks(n, m, ell, rng)?,
            ObjectiveKind::Approx1 | ObjectiveKind::Approx2 => return Ok(None),
        }))
    }

    /// Evaluates on `v`, drawing a fresh collection from `rng` for the
    /// randomized kinds.
    pub fn evaluate<R: Rng + ?Sized>(self, v: &LogWeights, m: usize, rng: &mut R) -> Result<ObjectiveEstimate> {
        let n = v.len();
        match self {
            ObjectiveKind::Standard => u_statistic(v, &disjoint_blocks(n, m)?),
            ObjectiveKind::Complete { cap } => complete_u(v, m, cap),
            ObjectiveKind::Random { k } => u_statistic(v, &random_subsets(n, m, k, rng)?),
            ObjectiveKind::Permuted { ell } => u_statistic(v, &permuted_blocks(n, m, ell, rng)?),
            ObjectiveKind::Approx1 => approx_first_order(v, m),
            ObjectiveKind::Approx2 => approx_second_order(v, m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::kernel_h;
    use crate::subsets::all_subsets;

    fn lw(v: &[f64]) -> LogWeights {
        LogWeights::new(v.to_vec()).unwrap()
    }

    const EXAMPLE: [f64; 4] = [-6034.091, -4351.335, -4157.236, -5419.201];

    #[test]
    fn complete_on_worked_example() {
        let v = lw(&EXAMPLE);
        let est = u_statistic(&v, &all_subsets(4, 2, DEFAULT_CAP).unwrap()).unwrap();
        assert!((est.value - (-4432.956)).abs() < 5e-4, "{}", est.value);
        assert_eq!(est.num_sets, 6);
        assert_eq!(est.id, EstimatorId::CompleteU);
    }

    #[test]
    fn complete_matches_subsetwise_kernels() {
        let v = lw(&[0.3, -1.2, 2.5, 0.0, -0.7, 1.1, 0.9]);
        for m in 1..=7 {
            let mut total = 0.0;
            let mut count = 0.0;
            for s in Combinations::new(7, m) {
                let vals: Vec<f64> = s.iter().map(|&i| v.as_slice()[i]).collect();
                total += kernel_h(&vals).unwrap();
                count += 1.0;
            }
            let fast = complete_u(&v, m, DEFAULT_CAP).unwrap().value;
            assert!((fast - total / count).abs() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn constant_and_m1_cases() {
        let v = lw(&[2.5; 6]);
        let s = disjoint_blocks(6, 3).unwrap();
        assert!((u_statistic(&v, &s).unwrap().value - 2.5).abs() < 1e-14);
        let v = lw(&[1.0, 2.0, 4.0, -3.0]);
        let est = u_statistic(&v, &all_subsets(4, 1, DEFAULT_CAP).unwrap()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-15);
        assert!(u_statistic(&v, &disjoint_blocks(6, 3).unwrap()).is_err());
    }

    #[test]
    fn first_order_examples() {
        let v = lw(&EXAMPLE);
        let a = approx_first_order(&v, 2).unwrap().value;
        let hand = (3.0 * -4157.236 + 2.0 * -4351.335 + -5419.201) / 6.0 - 2f64.ln();
        assert!((a - hand).abs() < 1e-9);
        assert!((a - (-4432.95631)).abs() < 1e-5);
        let naive = approx_first_order_naive(&v, 2, DEFAULT_CAP).unwrap().value;
        assert!((a - naive).abs() < 1e-9);

        let v = lw(&[1.0, 2.0, 4.0, -3.0]);
        assert!((approx_first_order(&v, 1).unwrap().value - 1.0).abs() < 1e-15);
        assert!((approx_first_order_naive(&v, 4, DEFAULT_CAP).unwrap().value - (4.0 - 4f64.ln())).abs() < 1e-15);
        let v = lw(&[1.0, 2.0]);
        assert!((approx_first_order_naive(&v, 1, DEFAULT_CAP).unwrap().value - 1.5).abs() < 1e-15);

        let v = lw(&[0.7; 5]);
        assert!((approx_first_order(&v, 3).unwrap().value - (0.7 - 3f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn second_order_examples() {
        let v = lw(&[0.4, -1.3]);
        assert_eq!(
            approx_second_order(&v, 2).unwrap().value,
            complete_u(&v, 2, DEFAULT_CAP).unwrap().value
        );

        let v = lw(&EXAMPLE);
        let a1 = approx_first_order(&v, 2).unwrap().value;
        let a2 = approx_second_order(&v, 2).unwrap().value;
        // The gaps here are so wide that the correction underflows.
        assert!(a1 <= a2 && a2 < -4432.956 + 5e-4, "{a1} {a2}");

        let c = -1.75;
        for (n, m) in [(5, 2), (6, 3), (8, 7)] {
            let v = lw(&vec![c; n]);
            let want = c - (m as f64).ln() + (m as f64 / n as f64) * 2f64.ln();
            assert!((approx_second_order(&v, m).unwrap().value - want).abs() < 1e-13);
        }
        assert!(approx_second_order(&v, 1).is_err());
    }

    #[test]
    fn jackknife_examples() {
        let v = lw(&[0.9; 6]);
        let j = jackknife_first_order(&v, 3, DEFAULT_CAP, JackknifeInner::Complete).unwrap();
        assert!((j.value - 0.9).abs() < 1e-13);

        let v = lw(&[0.2, -1.1]);
        let j = jackknife_first_order(&v, 2, DEFAULT_CAP, JackknifeInner::Complete).unwrap();
        let want = 2.0 * kernel_h(&[0.2, -1.1]).unwrap() - (0.2 + -1.1) / 2.0;
        assert!((j.value - want).abs() < 1e-14);

        let v = lw(&[0.3, -1.2, 2.5, 0.0, -0.7, 1.1]);
        let j = jackknife_first_order(&v, 4, DEFAULT_CAP, JackknifeInner::Complete).unwrap();
        let a = complete_u(&v, 4, DEFAULT_CAP).unwrap().value;
        let b = complete_u(&v, 3, DEFAULT_CAP).unwrap().value;
        assert_eq!(j.value, 4.0 * a - 3.0 * b);
        let j2 = jackknife_first_order(&v, 4, DEFAULT_CAP, JackknifeInner::Approx2).unwrap();
        assert!(j2.value.is_finite());
        assert!(jackknife_first_order(&v, 1, DEFAULT_CAP, JackknifeInner::Complete).is_err());
    }

    #[test]
    fn cap_refusal_propagates() {
        let v = lw(&vec![0.0; 24]);
        assert!(matches!(complete_u(&v, 12, DEFAULT_CAP), Err(Error::CapExceeded { .. })));
        assert!(matches!(
            jackknife_first_order(&v, 12, DEFAULT_CAP, JackknifeInner::Complete),
            Err(Error::CapExceeded { .. })
        ));
    }
}
