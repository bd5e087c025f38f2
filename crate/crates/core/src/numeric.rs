//! Scalar kernels shared by every estimator: stable log-sum-exp, the IW-ELBO
//! kernel, descending sort with permutation tracking, and the normalized
//! binomial weight profiles used by the sort-based approximations.

use std::cmp::Ordering;

use crate::error::{invalid, Error, Result};

/// A batch of finite log importance weights `V_i = ln p(z_i, x) - ln q(z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights(Vec<f64>);

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LogWeights {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl AsRef<[f64]> for LogWeights {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index, value: values[index] }),
        None => Ok(()),
    }
}

fn desc(a: &f64, b: &f64) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

/// `ln Σ exp(v_i)`, evaluated as `max + ln(1 + Σ_{rest} exp(v_i - max))` with the
/// tail summed in descending order.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(v)?;
    let mut buf = v.to_vec();
    buf.sort_unstable_by(desc);
    Ok(buf[0] + log1p_tail(&buf))
}

/// IW-ELBO kernel `h(v) = ln((1/m) Σ exp(v_i))`.
pub fn kernel_h(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(v)?;
    let mut buf = v.to_vec();
    Ok(kernel_in_place(&mut buf))
}

/// Sorts `buf` descending and evaluates the kernel. `buf` must be non-empty and
/// finite.
pub(crate) fn kernel_in_place(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(desc);
    kernel_sorted(buf)
}

/// Kernel of an already descending-sorted, non-empty slice.
///
/// Written as `(max - ln m) + ln1p(tail)` so that for `m = n = 2` it coincides
/// bit for bit with the second-order approximation.
#[inline]
pub(crate) fn kernel_sorted(sorted: &[f64]) -> f64 {
    (sorted[0] - ln_usize(sorted.len())) + log1p_tail(sorted)
}

#[inline]
fn log1p_tail(sorted: &[f64]) -> f64 {
    let top = sorted[0];
    let mut tail = 0.0;
    for &x in &sorted[1..] {
        tail += (x - top).exp();
    }
    tail.ln_1p()
}

#[inline]
pub(crate) fn ln_usize(m: usize) -> f64 {
    (m as f64).ln()
}

/// Log-weights in non-increasing order together with the permutation that
/// produced them (`sorted[i] == values[perm[i]]`, 0-based). Ties keep ascending
/// original index.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedLogWeights {
    pub sorted: Vec<f64>,
    pub perm: Vec<usize>,
}

pub fn sort_descending(v: &LogWeights) -> SortedLogWeights {
    let values = v.as_slice();
    let mut perm: Vec<usize> = (0..values.len()).collect();
    perm.sort_unstable_by(|&i, &j| desc(&values[i], &values[j]).then(i.cmp(&j)));
    let sorted = perm.iter().map(|&i| values[i]).collect();
    SortedLogWeights { sorted, perm }
}

/// Normalized counts of how often each sorted position is the maximum of a
/// size-`m` subset (`w`), and how often it is the maximum with its successor
/// also present (`w2`).
///
/// `w[i] = C(n-1-i, m-1) / C(n, m)` for 0-based `i <= n-m`, zero after that.
/// `w2[i] = C(n-2-i, m-2) / C(n, m)` for `i <= n-m`, empty when `m = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub n: usize,
    pub m: usize,
    pub w: Vec<f64>,
    pub w2: Vec<f64>,
}

pub fn weight_profile(n: usize, m: usize) -> Result<WeightProfile> {
    if m < 1 || m > n {
        return Err(invalid(format!("weight profile needs 1 <= m <= n, got n={n}, m={m}")));
    }
    let support = n - m + 1;
    let mut w = vec![0.0; n];
    w[0] = m as f64 / n as f64;
    for i in 1..support {
        // w[i] / w[i-1] = (n - i - m + 1) / (n - i), with 1-based i.
        let k = i as f64;
        w[i] = w[i - 1] * ((n as f64 - k - m as f64 + 1.0) / (n as f64 - k));
    }
    let mut w2 = Vec::new();
    if m >= 2 {
        w2.reserve(support);
        let nf = n as f64;
        let mf = m as f64;
        w2.push(mf * (mf - 1.0) / (nf * (nf - 1.0)));
        for i in 1..support {
            let k = i as f64;
            let prev = w2[i - 1];
            w2.push(prev * ((nf - k - mf + 1.0) / (nf - 1.0 - k)));
        }
    }
    Ok(WeightProfile { n, m, w, w2 })
}

/// `C(n, k)` or `None` on u128 overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // C(n, i+1) = C(n, i) * (n - i) / (i + 1); after removing the common
        // factor, the reduced denominator divides (n - i).
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = gcd(acc, den);
        acc = (acc / g).checked_mul(num / (den / g))?;
    }
    Some(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: [f64; 4] = [-6034.091, -4351.335, -4157.236, -5419.201];

    #[test]
    fn log_sum_exp_basic() {
        assert_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), std::f64::consts::LN_2);
        let v = log_sum_exp(&[-1000.0, -1000.0]).unwrap();
        assert!((v - (-1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[-6034.091, -4351.335]).unwrap(), -4351.335);
        assert_eq!(log_sum_exp(&[3.5]).unwrap(), 3.5);
    }

    #[test]
    fn log_sum_exp_rejects_bad_input() {
        assert!(matches!(log_sum_exp(&[]), Err(Error::EmptyInput)));
        assert!(matches!(log_sum_exp(&[0.0, f64::NAN]), Err(Error::NonFinite { index: 1, .. })));
        assert!(matches!(kernel_h(&[f64::NEG_INFINITY]), Err(Error::NonFinite { index: 0, .. })));
        assert!(LogWeights::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(LogWeights::new(vec![]).is_err());
    }

    #[test]
    fn kernel_matches_worked_table() {
        // The published table is accurate to within one unit of the third decimal.
        assert!((kernel_h(&[-6034.091, -4351.335]).unwrap() - -4352.028).abs() < 1e-3);
        assert!((kernel_h(&[-4157.236, -5419.201]).unwrap() - -4157.930).abs() < 1e-3);
        for m in 1..10 {
            let c = -3.25;
            let h = kernel_h(&vec![c; m]).unwrap();
            assert!((h - c).abs() <= 1e-12 * c.abs(), "m={m}: {h}");
        }
    }

    #[test]
    fn sort_examples() {
        let s = sort_descending(&LogWeights::new(EXAMPLE.to_vec()).unwrap());
        assert_eq!(s.sorted, vec![-4157.236, -4351.335, -5419.201, -6034.091]);
        assert_eq!(s.perm, vec![2, 1, 3, 0]);
        let s = sort_descending(&LogWeights::new(vec![1.0; 3]).unwrap());
        assert_eq!(s.perm, vec![0, 1, 2]);
        let s = sort_descending(&LogWeights::new(vec![5.0, 2.0, 9.0]).unwrap());
        assert_eq!(s.sorted, vec![9.0, 5.0, 2.0]);
        assert_eq!(s.perm, vec![2, 0, 1]);
    }

    #[test]
    fn profile_examples() {
        let p = weight_profile(4, 2).unwrap();
        let expect = [0.5, 1.0 / 3.0, 1.0 / 6.0, 0.0];
        for (a, b) in p.w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // b~ = (C(2,0), C(1,0), C(0,0)) / 6
        assert_eq!(p.w2.len(), 3);
        for x in &p.w2 {
            assert!((x - 1.0 / 6.0).abs() < 1e-15);
        }

        let p = weight_profile(16, 1).unwrap();
        assert!(p.w.iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-15));
        assert!(p.w2.is_empty());

        let p = weight_profile(16, 8).unwrap();
        assert_eq!(p.w[0], 0.5);
        assert!((p.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.w2.iter().sum::<f64>() - 0.5).abs() < 1e-12);

        assert!(weight_profile(3, 4).is_err());
        assert!(weight_profile(3, 0).is_err());
    }

    #[test]
    fn profile_handles_large_n() {
        let p = weight_profile(1 << 20, 1 << 10).unwrap();
        assert!((p.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.w.windows(2).all(|x| x[0] >= x[1]));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), Some(6));
        assert_eq!(binomial(16, 8), Some(12_870));
        assert_eq!(binomial(24, 12), Some(2_704_156));
        assert_eq!(binomial(5, 7), Some(0));
        assert_eq!(binomial(60, 30), Some(118_264_581_564_861_424));
        assert_eq!(binomial(1000, 500), None);
    }

    #[test]
    fn group_digits_formats() {
        assert_eq!(crate::error::group_digits(2_704_156), "2,704,156");
        assert_eq!(crate::error::group_digits(1_000_000), "1,000,000");
        assert_eq!(crate::error::group_digits(999), "999");
    }
}
