//! Least-squares surrogate: kernel ridge regression onto `ψ_wa(y)`.
//!
//! With an identity-decomposable operator kernel `K(x, x') = k(x, x') I_q` the
//! `qn × qn` system `(K + λ I) α = K_x` splits into `q` copies of the scalar
//! `n × n` system `(K_gram + λ I_n) α(x) = k_x`. One Cholesky factor serves
//! every output coordinate, and `ĝ(x) = Σ_i α_i(x) ψ_wa(y_i)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("training set is empty")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("ridge parameter must be positive, got {0}")]
    Lambda(f64),
    #[error("gaussian bandwidth must be positive, got {0}")]
    Gamma(f64),
    #[error("{what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },
    #[error("kernel system is not positive definite")]
    Factorization,
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Gaussian,
}

/// Scalar kernel `k`; `gamma` is only read for the gaussian kernel
/// `exp(−γ ‖x − x'‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, gamma: default_gamma() }
    }

    pub fn gaussian(gamma: f64) -> Self {
        Self { kind: KernelKind::Gaussian, gamma }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        match self.kind {
            KernelKind::Gaussian if !(self.gamma > 0.0 && self.gamma.is_finite()) => {
                Err(SurrogateError::Gamma(self.gamma))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            KernelKind::Gaussian => {
                let sq: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * sq).exp()
            }
        }
    }
}

fn check_inputs(xs: &[Vec<f64>]) -> Result<usize, SurrogateError> {
    let first = xs.first().ok_or(SurrogateError::Empty)?;
    let m = first.len();
    for x in xs {
        if x.len() != m {
            return Err(SurrogateError::Dimension { what: "input features", expected: m, actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite("input features"));
        }
    }
    Ok(m)
}

/// Gram matrix `k(x_i, x_j)` of the inputs.
pub fn gram(kernel: &KernelConfig, xs: &[Vec<f64>]) -> Result<DMatrix<f64>, SurrogateError> {
    kernel.validate()?;
    check_inputs(xs)?;
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&xs[i], &xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// A fitted ridge model.
#[derive(Debug, Clone)]
pub struct TrainedSurrogate {
    kernel: KernelConfig,
    lambda: f64,
    x_train: Vec<Vec<f64>>,
    psi_train: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

/// Solves `min_g Σ ‖g(x_i) − ψ_i‖² + λ ‖g‖²_H` in closed form.
pub fn fit_ridge(
    kernel: KernelConfig,
    xs: &[Vec<f64>],
    psi: &[Vec<f64>],
    lambda: f64,
) -> Result<TrainedSurrogate, SurrogateError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SurrogateError::Lambda(lambda));
    }
    if psi.len() != xs.len() {
        return Err(SurrogateError::Dimension { what: "output rows", expected: xs.len(), actual: psi.len() });
    }
    let mut k = gram(&kernel, xs)?;
    let q = psi[0].len();
    if let Some(row) = psi.iter().find(|r| r.len() != q) {
        return Err(SurrogateError::Dimension { what: "output features", expected: q, actual: row.len() });
    }
    if psi.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFinite("output features"));
    }
    let n = xs.len();
    for i in 0..n {
        k[(i, i)] += lambda;
    }
    let factor = Cholesky::new(k).ok_or(SurrogateError::Factorization)?;
    let psi_train = DMatrix::from_fn(n, q, |i, j| psi[i][j]);
    Ok(TrainedSurrogate { kernel, lambda, x_train: xs.to_vec(), psi_train, factor })
}

impl TrainedSurrogate {
    pub fn kernel(&self) -> KernelConfig {
        self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.x_train.len()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.x_train[0].len()
    }

    /// Output dimension.
    pub fn q(&self) -> usize {
        self.psi_train.ncols()
    }

    pub fn x_train(&self) -> &[Vec<f64>] {
        &self.x_train
    }

    pub fn psi_train(&self) -> &DMatrix<f64> {
        &self.psi_train
    }

    fn check_x(&self, x: &[f64]) -> Result<(), SurrogateError> {
        if x.len() != self.m() {
            return Err(SurrogateError::Dimension { what: "input features", expected: self.m(), actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite("input features"));
        }
        Ok(())
    }

    /// `α(x) = (K_gram + λ I)^{-1} k_x`.
    pub fn alpha(&self, x: &[f64]) -> Result<DVector<f64>, SurrogateError> {
        self.check_x(x)?;
        let kx = DVector::from_iterator(self.n(), self.x_train.iter().map(|xi| self.kernel.eval(xi, x)));
        Ok(self.factor.solve(&kx))
    }

    /// `ĝ(x) = Ψ_trainᵀ α(x)`.
    pub fn g_hat(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let a = self.alpha(x)?;
        Ok((self.psi_train.transpose() * a).iter().copied().collect())
    }

    /// Mean squared residual `(1/n) Σ ‖ĝ(x_i) − ψ_i‖²` on the training set.
    pub fn training_loss(&self) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for (i, x) in self.x_train.iter().enumerate() {
            let g = self.g_hat(x).expect("training inputs are valid");
            total += g.iter().enumerate().map(|(j, v)| (v - self.psi_train[(i, j)]).powi(2)).sum::<f64>();
        }
        total / n as f64
    }

    pub fn to_dump(&self) -> ModelDump {
        ModelDump {
            kernel: self.kernel,
            lambda: self.lambda,
            x_train: self.x_train.clone(),
            psi_train: (0..self.n()).map(|i| self.psi_train.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn from_dump(dump: &ModelDump) -> Result<Self, SurrogateError> {
        fit_ridge(dump.kernel, &dump.x_train, &dump.psi_train, dump.lambda)
    }
}

/// Structured-object form of a fitted model. The factorization is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub kernel: KernelConfig,
    pub lambda: f64,
    pub x_train: Vec<Vec<f64>>,
    pub psi_train: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gram_of_unit_vectors() {
        let k = gram(&KernelConfig::linear(), &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(k, DMatrix::identity(2, 2));
    }

    #[test]
    fn gaussian_kernel_values() {
        let kern = KernelConfig::gaussian(0.5);
        let k = gram(&kern, &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 1.0);
        assert!((k[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(gram(&KernelConfig::gaussian(0.0), &[vec![1.0]]).unwrap_err(), SurrogateError::Gamma(0.0));
    }

    #[test]
    fn gram_rejects_bad_input() {
        assert_eq!(gram(&KernelConfig::linear(), &[]).unwrap_err(), SurrogateError::Empty);
        assert!(matches!(
            gram(&KernelConfig::linear(), &[vec![f64::NAN]]).unwrap_err(),
            SurrogateError::NonFinite(_)
        ));
    }

    #[test]
    fn single_point_closed_form() {
        for lambda in [0.1, 1.0, 3.0] {
            let model = fit_ridge(KernelConfig::linear(), &[vec![1.0]], &[vec![2.0]], lambda).unwrap();
            let g = model.g_hat(&[1.0]).unwrap();
            assert!((g[0] - 2.0 / (1.0 + lambda)).abs() < 1e-14);
            let a = model.alpha(&[1.0]).unwrap();
            assert!((a[0] - 1.0 / (1.0 + lambda)).abs() < 1e-14);
        }
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let model = fit_ridge(KernelConfig::linear(), &[vec![1.0, 2.0]], &[vec![3.0, -1.0]], 1e12).unwrap();
        assert!(model.g_hat(&[1.0, 2.0]).unwrap().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn orthonormal_inputs_give_scaled_unit_alpha() {
        let xs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let psi = vec![vec![1.0], vec![2.0], vec![3.0]];
        let model = fit_ridge(KernelConfig::linear(), &xs, &psi, 0.5).unwrap();
        let a = model.alpha(&xs[1]).unwrap();
        assert!((a[1] - 1.0 / 1.5).abs() < 1e-14);
        assert!(a[0].abs() < 1e-14 && a[2].abs() < 1e-14);
    }

    #[test]
    fn fit_validation() {
        let xs = vec![vec![1.0]];
        assert_eq!(fit_ridge(KernelConfig::linear(), &xs, &[vec![1.0]], 0.0).unwrap_err(), SurrogateError::Lambda(0.0));
        assert!(matches!(
            fit_ridge(KernelConfig::linear(), &xs, &[vec![1.0], vec![2.0]], 1.0).unwrap_err(),
            SurrogateError::Dimension { .. }
        ));
        let model = fit_ridge(KernelConfig::linear(), &xs, &[vec![1.0]], 1.0).unwrap();
        assert!(matches!(model.g_hat(&[1.0, 2.0]).unwrap_err(), SurrogateError::Dimension { .. }));
    }

    #[test]
    fn dump_round_trip() {
        let xs = vec![vec![0.3, 1.0], vec![-1.0, 0.2]];
        let psi = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let model = fit_ridge(KernelConfig::gaussian(0.7), &xs, &psi, 0.1).unwrap();
        let json = serde_json::to_string(&model.to_dump()).unwrap();
        let back = TrainedSurrogate::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.g_hat(&[0.1, 0.1]).unwrap(), model.g_hat(&[0.1, 0.1]).unwrap());
    }
}
