//! Target densities `p(z, x)` with analytic scores, and the Gaussian
//! variational family.

mod family;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use family::{softplus, softplus_inv, BoundGaussian, FamilyKind, FamilySample, GaussianFamily};

use crate::error::{invalid, Error, Result};
use crate::rng::SeedTree;

/// An unnormalized posterior: `ln p(z, x)` with the data baked in.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    fn log_joint(&self, z: &[f64]) -> f64;

    /// Writes `∇_z ln p(z, x)` into `grad` and returns `ln p(z, x)`.
    fn log_joint_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64;

    /// `ln p(x)` when it is available in closed form.
    fn exact_log_evidence(&self) -> Option<f64> {
        None
    }
}

/// `z ~ N(0, I)`, `x | z ~ N(A z, σ² I)`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    a: DMatrix<f64>,
    noise_sd: f64,
    x: DVector<f64>,
    log_evidence: f64,
}

impl LinearGaussian {
    pub fn new(a: DMatrix<f64>, noise_sd: f64, x: DVector<f64>) -> Result<Self> {
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(invalid(format!("noise_sd must be positive, got {noise_sd}")));
        }
        if a.nrows() != x.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: x.len() });
        }
        let dx = x.len();
        let cov = &a * a.transpose() + DMatrix::identity(dx, dx) * (noise_sd * noise_sd);
        let chol = cov.cholesky().ok_or_else(|| invalid("marginal covariance is not positive definite"))?;
        let solved = chol.solve(&x);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_evidence = -0.5 * (x.dot(&solved) + log_det + dx as f64 * (2.0 * PI).ln());
        Ok(Self { a, noise_sd, x, log_evidence })
    }

    /// Random instance: `A` iid N(0, 1), data drawn from the model itself.
    pub fn synthetic<R: Rng + ?Sized>(d_z: usize, d_x: usize, noise_sd: f64, rng: &mut R) -> Result<Self> {
        let a = DMatrix::from_fn(d_x, d_z, |_, _| rng.sample(StandardNormal));
        let z = DVector::from_fn(d_z, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = DVector::from_fn(d_x, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
        let x = &a * z + noise;
        Self::new(a, noise_sd, x)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.x
    }

    /// Exact posterior mean and row-major lower Cholesky factor of its covariance.
    pub fn posterior(&self) -> (Vec<f64>, Vec<f64>) {
        let dz = self.a.ncols();
        let s2 = self.noise_sd * self.noise_sd;
        let precision = DMatrix::identity(dz, dz) + self.a.transpose() * &self.a / s2;
        let cov = precision
            .cholesky()
            .expect("identity plus a Gram matrix is positive definite")
            .inverse();
        let mean = &cov * self.a.transpose() * &self.x / s2;
        let l = cov.cholesky().expect("posterior covariance is positive definite").l();
        let chol = (0..dz).flat_map(|i| (0..dz).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        (mean.iter().copied().collect(), chol)
    }

    /// Variational parameters placing `q` on the exact posterior. For the
    /// diagonal family this is exact only when the posterior is diagonal.
    pub fn posterior_params(&self, family: &GaussianFamily) -> Result<Vec<f64>> {
        let (mean, chol) = self.posterior();
        family.params_from(&mean, &chol)
    }
}

impl TargetModel for LinearGaussian {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        let mut scratch = vec![0.0; z.len()];
        self.log_joint_and_grad(z, &mut scratch)
    }

    fn log_joint_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let resid = &self.x - &self.a * &zv;
        let s2 = self.noise_sd * self.noise_sd;
        let g = -&zv + self.a.transpose() * &resid / s2;
        grad.copy_from_slice(g.as_slice());
        let dz = z.len() as f64;
        let dx = self.x.len() as f64;
        -0.5 * zv.norm_squared() - 0.5 * dz * (2.0 * PI).ln() - resid.norm_squared() / (2.0 * s2)
            - 0.5 * dx * (2.0 * PI * s2).ln()
    }

    fn exact_log_evidence(&self) -> Option<f64> {
        Some(self.log_evidence)
    }
}

/// Bayesian logistic regression with an isotropic Gaussian prior.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    x: DMatrix<f64>,
    // ±1
    y: DVector<f64>,
    prior_sd: f64,
}

fn log_logistic(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    /// Labels may be given as `{0, 1}` or `{-1, +1}`.
    pub fn new(x: DMatrix<f64>, labels: &[f64], prior_sd: f64) -> Result<Self> {
        if !(prior_sd > 0.0 && prior_sd.is_finite()) {
            return Err(invalid(format!("prior_sd must be positive, got {prior_sd}")));
        }
        if x.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: labels.len() });
        }
        let y = labels
            .iter()
            .map(|&l| match l {
                l if l == 1.0 => Ok(1.0),
                l if l == 0.0 || l == -1.0 => Ok(-1.0),
                other => Err(invalid(format!("label {other} is not in {{0, 1}} or {{-1, +1}}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { x, y: DVector::from_vec(y), prior_sd })
    }

    /// `X` iid N(0, 1); labels drawn from a ground-truth `θ* ~ N(0, I)`.
    pub fn synthetic<R: Rng + ?Sized>(n_data: usize, dim: usize, prior_sd: f64, rng: &mut R) -> Result<Self> {
        let theta: DVector<f64> = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let x = DMatrix::from_fn(n_data, dim, |_, _| rng.sample(StandardNormal));
        let logits = &x * &theta;
        let labels: Vec<f64> = logits
            .iter()
            .map(|&t| if rng.random::<f64>() < logistic(t) { 1.0 } else { -1.0 })
            .collect();
        Self::new(x, &labels, prior_sd)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.y
    }

    /// Writes `X.csv` and `y.csv` (labels as ±1) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut xf = std::io::BufWriter::new(std::fs::File::create(dir.join("X.csv"))?);
        let header: Vec<String> = (1..=self.x.ncols()).map(|j| format!("x{j}")).collect();
        writeln!(xf, "{}", header.join(","))?;
        for row in self.x.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(xf, "{}", cells.join(","))?;
        }
        xf.flush()?;
        let mut yf = std::io::BufWriter::new(std::fs::File::create(dir.join("y.csv"))?);
        writeln!(yf, "y")?;
        for v in self.y.iter() {
            writeln!(yf, "{v}")?;
        }
        yf.flush()?;
        Ok(())
    }
}

impl TargetModel for LogisticRegression {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        let mut scratch = vec![0.0; z.len()];
        self.log_joint_and_grad(z, &mut scratch)
    }

    fn log_joint_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let theta = DVector::from_column_slice(z);
        let s2 = self.prior_sd * self.prior_sd;
        let margins = (&self.x * &theta).component_mul(&self.y);
        let loglik: f64 = margins.iter().map(|&t| log_logistic(t)).sum();
        let coef = DVector::from_iterator(
            self.y.len(),
            margins.iter().zip(self.y.iter()).map(|(&t, &y)| y * logistic(-t)),
        );
        let g = self.x.transpose() * coef - &theta / s2;
        grad.copy_from_slice(g.as_slice());
        let d = z.len() as f64;
        loglik - theta.norm_squared() / (2.0 * s2) - 0.5 * d * (2.0 * PI * s2).ln()
    }
}

/// Synthetic model description used by run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearGaussian {
        d_z: usize,
        d_x: usize,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    Logistic {
        #[serde(default = "default_n_data")]
        n_data: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "one")]
        prior_sd: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_n_data() -> usize {
    200
}

fn default_dim() -> usize {
    10
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::LinearGaussian { .. } => "linear_gaussian",
            ModelSpec::Logistic { .. } => "logistic",
        }
    }

    /// Generates the synthetic data from the `"data"` stream of `seeds`.
    pub fn build(&self, seeds: SeedTree) -> Result<Model> {
        let mut rng = seeds.child("data").rng();
        Ok(match *self {
            ModelSpec::LinearGaussian { d_z, d_x, noise_sd } => {
                Model::LinearGaussian(LinearGaussian::synthetic(d_z, d_x, noise_sd, &mut rng)?)
            }
            ModelSpec::Logistic { n_data, dim, prior_sd } => {
                Model::Logistic(LogisticRegression::synthetic(n_data, dim, prior_sd, &mut rng)?)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    LinearGaussian(LinearGaussian),
    Logistic(LogisticRegression),
}

impl TargetModel for Model {
    fn dim(&self) -> usize {
        match self {
            Model::LinearGaussian(m) => m.dim(),
            Model::Logistic(m) => m.dim(),
        }
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        match self {
            Model::LinearGaussian(m) => m.log_joint(z),
            Model::Logistic(m) => m.log_joint(z),
        }
    }

    fn log_joint_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Model::LinearGaussian(m) => m.log_joint_and_grad(z, grad),
            Model::Logistic(m) => m.log_joint_and_grad(z, grad),
        }
    }

    fn exact_log_evidence(&self) -> Option<f64> {
        match self {
            Model::LinearGaussian(m) => m.exact_log_evidence(),
            Model::Logistic(m) => m.exact_log_evidence(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..z.len())
            .map(|i| {
                let mut p = z.to_vec();
                let mut q = z.to_vec();
                p[i] += h;
                q[i] -= h;
                (f(&p) - f(&q)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
        num / den
    }

    #[test]
    fn linear_gaussian_closed_forms() {
        let m = LinearGaussian::new(DMatrix::from_element(1, 1, 1.0), 1.0, DVector::from_element(1, 0.0)).unwrap();
        assert!((m.exact_log_evidence().unwrap() + 0.5 * (4.0 * PI).ln()).abs() < 1e-14);

        // No coupling: evidence is N(0, σ² I) at x.
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let sd = 0.7;
        let m = LinearGaussian::new(DMatrix::zeros(3, 2), sd, x.clone()).unwrap();
        let want: f64 = x.iter().map(|xi| -0.5 * (xi / sd).powi(2) - (sd * (2.0 * PI).sqrt()).ln()).sum();
        assert!((m.exact_log_evidence().unwrap() - want).abs() < 1e-12);

        assert!(LinearGaussian::new(DMatrix::zeros(3, 2), 0.0, x.clone()).is_err());
        assert!(LinearGaussian::new(DMatrix::zeros(2, 2), 1.0, x).is_err());
    }

    #[test]
    fn linear_gaussian_gradient_matches_fd() {
        let mut rng = SeedTree::new(2).rng();
        let m = LinearGaussian::synthetic(3, 4, 0.8, &mut rng).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut g = vec![0.0; 3];
            m.log_joint_and_grad(&z, &mut g);
            assert!(rel_err(&g, &fd_grad(|z| m.log_joint(z), &z)) < 1e-6);
        }
    }

    #[test]
    fn logistic_closed_forms() {
        let m = LogisticRegression::new(DMatrix::zeros(0, 3), &[], 2.0).unwrap();
        let theta = [0.5, -1.0, 0.25];
        let mut g = [0.0; 3];
        let lj = m.log_joint_and_grad(&theta, &mut g);
        for i in 0..3 {
            assert!((g[i] + theta[i] / 4.0).abs() < 1e-15);
        }
        let want = -(0.25 + 1.0 + 0.0625) / 8.0 - 1.5 * (8.0 * PI).ln();
        assert!((lj - want).abs() < 1e-12);

        let mut rng = SeedTree::new(3).rng();
        let m = LogisticRegression::synthetic(50, 3, 1.0, &mut rng).unwrap();
        let prior_at_zero = -1.5 * (2.0 * PI).ln();
        assert!((m.log_joint(&[0.0; 3]) - prior_at_zero + 50.0 * 2f64.ln()).abs() < 1e-10);

        assert!(LogisticRegression::new(DMatrix::zeros(2, 3), &[1.0], 1.0).is_err());
        assert!(LogisticRegression::new(DMatrix::zeros(1, 3), &[2.0], 1.0).is_err());
        let m01 = LogisticRegression::new(DMatrix::zeros(2, 1), &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(m01.labels().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn logistic_gradient_matches_fd() {
        let mut rng = SeedTree::new(4).rng();
        let m = LogisticRegression::synthetic(200, 10, 1.0, &mut rng).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mut g = vec![0.0; 10];
            m.log_joint_and_grad(&z, &mut g);
            assert!(rel_err(&g, &fd_grad(|z| m.log_joint(z), &z)) < 1e-6);
        }
    }

    #[test]
    fn spec_builds_deterministically() {
        let spec = ModelSpec::Logistic { n_data: 20, dim: 3, prior_sd: 1.0 };
        let a = spec.build(SeedTree::new(1)).unwrap();
        let b = spec.build(SeedTree::new(1)).unwrap();
        assert_eq!(a.log_joint(&[0.1, 0.2, 0.3]), b.log_joint(&[0.1, 0.2, 0.3]));
        let parsed: ModelSpec = serde_json::from_str(r#"{"kind":"linear_gaussian","d_z":2,"d_x":3}"#).unwrap();
        assert_eq!(parsed, ModelSpec::LinearGaussian { d_z: 2, d_x: 3, noise_sd: 1.0 });
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"logistic","bogus":1}"#).is_err());
    }

    #[test]
    fn csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let m = LogisticRegression::synthetic(5, 2, 1.0, &mut SeedTree::new(1).rng()).unwrap();
        m.write_csv(dir.path()).unwrap();
        let x = std::fs::read_to_string(dir.path().join("X.csv")).unwrap();
        let y = std::fs::read_to_string(dir.path().join("y.csv")).unwrap();
        assert_eq!(x.lines().count(), 6);
        assert!(x.starts_with("x1,x2\n"));
        assert_eq!(y.lines().count(), 6);
    }
}
