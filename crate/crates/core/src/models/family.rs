//! Gaussian variational family `q_φ(z) = N(μ, L Lᵀ)` with the reparameterization
//! `z = μ + L ε`.
//!
//! Parameter layout:
//! - `Diagonal`: `[μ (d), ω (d)]` with `L = diag(exp(ω))`.
//! - `FullRank`: `[μ (d), lower triangle of L row by row (d(d+1)/2)]`, where the
//!   diagonal entries pass through softplus.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Diagonal,
    FullRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianFamily {
    pub kind: FamilyKind,
    pub dim: usize,
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1), written to stay accurate for large y.
    y + (-(-y).exp_m1()).ln()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GaussianFamily {
    pub fn new(kind: FamilyKind, dim: usize) -> Self {
        Self { kind, dim }
    }

    pub fn param_dim(&self) -> usize {
        match self.kind {
            FamilyKind::Diagonal => 2 * self.dim,
            FamilyKind::FullRank => self.dim + self.dim * (self.dim + 1) / 2,
        }
    }

    /// Unconstrained parameters drawn iid N(0, 1).
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.param_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Parameters for the given mean and lower-triangular factor (row-major
    /// `d × d`, strictly positive diagonal). For `Diagonal` only the diagonal
    /// of `chol` is read.
    pub fn params_from(&self, mean: &[f64], chol: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        if mean.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mean.len() });
        }
        if chol.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: chol.len() });
        }
        let mut out = mean.to_vec();
        for i in 0..d {
            if chol[i * d + i] <= 0.0 {
                return Err(invalid("factor diagonal must be positive"));
            }
        }
        match self.kind {
            FamilyKind::Diagonal => out.extend((0..d).map(|i| chol[i * d + i].ln())),
            FamilyKind::FullRank => {
                for i in 0..d {
                    for j in 0..=i {
                        let x = chol[i * d + j];
                        out.push(if i == j { softplus_inv(x) } else { x });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn bind<'a>(&self, params: &'a [f64]) -> Result<BoundGaussian<'a>> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), found: params.len() });
        }
        let d = self.dim;
        let mut chol = vec![0.0; d * d];
        let mut diag_deriv = vec![0.0; d];
        let raw = &params[d..];
        match self.kind {
            FamilyKind::Diagonal => {
                for i in 0..d {
                    let s = raw[i].exp();
                    chol[i * d + i] = s;
                    diag_deriv[i] = s;
                }
            }
            FamilyKind::FullRank => {
                let mut k = 0;
                for i in 0..d {
                    for j in 0..=i {
                        if i == j {
                            chol[i * d + i] = softplus(raw[k]);
                            diag_deriv[i] = logistic(raw[k]);
                        } else {
                            chol[i * d + j] = raw[k];
                        }
                        k += 1;
                    }
                }
            }
        }
        let log_det = (0..d).map(|i| chol[i * d + i].ln()).sum();
        Ok(BoundGaussian { family: *self, mean: &params[..d], chol, diag_deriv, log_det })
    }
}

/// A family member at fixed parameters.
#[derive(Debug, Clone)]
pub struct BoundGaussian<'a> {
    family: GaussianFamily,
    mean: &'a [f64],
    chol: Vec<f64>,
    // d L_ii / d (raw diagonal parameter)
    diag_deriv: Vec<f64>,
    // Σ ln L_ii
    log_det: f64,
}

/// One reparameterized draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySample {
    pub z: Vec<f64>,
    pub log_q: f64,
    pub grad_z_log_q: Vec<f64>,
}

impl BoundGaussian<'_> {
    pub fn dim(&self) -> usize {
        self.family.dim
    }

    pub fn family(&self) -> GaussianFamily {
        self.family
    }

    pub fn mean(&self) -> &[f64] {
        self.mean
    }

    /// Row-major lower-triangular factor `L`.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = (0..=i.min(j)).map(|k| self.chol[i * d + k] * self.chol[j * d + k]).sum();
            }
        }
        cov
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    fn normalizer(&self) -> f64 {
        -0.5 * self.dim() as f64 * (2.0 * PI).ln() - self.log_det
    }

    pub fn transform(&self, eps: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[i * d + j] * eps[j]).sum::<f64>())
            .collect()
    }

    // y = L^{-T} x
    fn solve_upper(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut y = vec![0.0; d];
        for i in (0..d).rev() {
            let mut acc = x[i];
            for k in i + 1..d {
                acc -= self.chol[k * d + i] * y[k];
            }
            y[i] = acc / self.chol[i * d + i];
        }
        y
    }

    // y = L^{-1} x
    fn solve_lower(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.chol[i * d + k] * y[k];
            }
            y[i] = acc / self.chol[i * d + i];
        }
        y
    }

    /// `z = μ + L ε` with `ln q(z)` and `∇_z ln q(z) = -L^{-T} ε`.
    pub fn sample(&self, eps: &[f64]) -> Result<FamilySample> {
        self.check_len(eps)?;
        let z = self.transform(eps);
        let log_q = self.normalizer() - 0.5 * eps.iter().map(|e| e * e).sum::<f64>();
        let grad_z_log_q = self.solve_upper(eps).into_iter().map(|x| -x).collect();
        Ok(FamilySample { z, log_q, grad_z_log_q })
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.check_len(z)?;
        let centered: Vec<f64> = z.iter().zip(self.mean).map(|(a, b)| a - b).collect();
        let u = self.solve_lower(&centered);
        Ok(self.normalizer() - 0.5 * u.iter().map(|x| x * x).sum::<f64>())
    }

    /// `Jᵀ u` where `J = ∂z/∂φ` at noise `eps`.
    pub fn jacobian_t_vec(&self, eps: &[f64], u: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.family.param_dim());
        out.extend_from_slice(u);
        match self.family.kind {
            FamilyKind::Diagonal => out.extend((0..d).map(|i| u[i] * eps[i] * self.diag_deriv[i])),
            FamilyKind::FullRank => {
                for i in 0..d {
                    for j in 0..=i {
                        let g = u[i] * eps[j];
                        out.push(if i == j { g * self.diag_deriv[i] } else { g });
                    }
                }
            }
        }
        out
    }

    /// `∇_φ ln q_φ(z)` holding `z = T_φ(eps)` fixed.
    pub fn grad_params_log_q(&self, eps: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let y = self.solve_upper(eps);
        let mut out = Vec::with_capacity(self.family.param_dim());
        out.extend_from_slice(&y);
        match self.family.kind {
            FamilyKind::Diagonal => out.extend((0..d).map(|i| eps[i] * eps[i] - 1.0)),
            FamilyKind::FullRank => {
                for i in 0..d {
                    for j in 0..=i {
                        let mut g = y[i] * eps[j];
                        if i == j {
                            g = (g - 1.0 / self.chol[i * d + i]) * self.diag_deriv[i];
                        }
                        out.push(g);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn layout_sizes() {
        assert_eq!(GaussianFamily::new(FamilyKind::Diagonal, 4).param_dim(), 8);
        assert_eq!(GaussianFamily::new(FamilyKind::FullRank, 4).param_dim(), 14);
    }

    #[test]
    fn zero_noise_gives_mean() {
        let fam = GaussianFamily::new(FamilyKind::FullRank, 3);
        let params = fam.init_params(&mut SeedTree::new(1).rng());
        let q = fam.bind(&params).unwrap();
        let s = q.sample(&[0.0; 3]).unwrap();
        assert_eq!(s.z, q.mean().to_vec());
        let det: f64 = (0..3).map(|i| q.chol()[i * 3 + i].powi(2)).product();
        let want = -0.5 * (((2.0 * PI).powi(3)) * det).ln();
        assert!((s.log_q - want).abs() < 1e-10);
    }

    #[test]
    fn unit_diagonal_example() {
        let fam = GaussianFamily::new(FamilyKind::Diagonal, 1);
        let params = [0.0, 0.0];
        let q = fam.bind(&params).unwrap();
        let s = q.sample(&[1.0]).unwrap();
        assert_eq!(s.z, vec![1.0]);
        assert!((s.log_q + 0.5 * (1.0 + (2.0 * PI).ln())).abs() < 1e-15);
    }

    #[test]
    fn sample_density_agrees_with_log_density() {
        for kind in [FamilyKind::Diagonal, FamilyKind::FullRank] {
            let fam = GaussianFamily::new(kind, 4);
            let mut rng = SeedTree::new(5).rng();
            let params = fam.init_params(&mut rng);
            let q = fam.bind(&params).unwrap();
            let eps: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let s = q.sample(&eps).unwrap();
            assert!((s.log_q - q.log_density(&s.z).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn positive_scale_and_roundtrip() {
        let fam = GaussianFamily::new(FamilyKind::FullRank, 2);
        let params = fam.params_from(&[1.0, -2.0], &[0.5, 0.0, 0.3, 2.0]).unwrap();
        let q = fam.bind(&params).unwrap();
        assert!((q.chol()[0] - 0.5).abs() < 1e-14 && (q.chol()[3] - 2.0).abs() < 1e-14);
        assert_eq!(q.chol()[1], 0.0);
        let q2 = fam.bind(&[0.0, 0.0, -700.0, 0.1, -700.0]).unwrap();
        assert!(q2.chol()[0] > 0.0 && q2.chol()[3] > 0.0);
        assert!(fam.bind(&[0.0; 3]).is_err());
    }
}
