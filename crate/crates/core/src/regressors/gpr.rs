use super::{GprParams, RegressorError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Stored form; the Cholesky factor is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GprRepr {
    variance: f64,
    lengthscales: Vec<f64>,
    noise: f64,
    jitter: f64,
    mean: f64,
    x_train: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

/// Squared-exponential GP with constant mean `mean(y)`.
///
/// Holds `α = (K + (σ² + jitter)·I)⁻¹ (y − ȳ)` and the lower Cholesky factor of the
/// same matrix for predictive variances.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GprRepr", into = "GprRepr")]
pub struct GprModel {
    repr: GprRepr,
    factor: DMatrix<f64>,
}

impl PartialEq for GprModel {
    fn eq(&self, other: &Self) -> bool {
        self.repr == other.repr
    }
}

impl From<GprModel> for GprRepr {
    fn from(m: GprModel) -> Self {
        m.repr
    }
}

impl TryFrom<GprRepr> for GprModel {
    type Error = String;

    fn try_from(repr: GprRepr) -> std::result::Result<Self, String> {
        if repr.x_train.len() != repr.alpha.len() || repr.x_train.is_empty() {
            return Err("training inputs and weights disagree".into());
        }
        let gram = gram(&repr, repr.jitter);
        let factor = gram
            .cholesky()
            .ok_or("stored kernel matrix is not positive definite")?
            .unpack();
        Ok(Self { repr, factor })
    }
}

fn kernel(variance: f64, lengthscales: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    variance * (-0.5 * d2).exp()
}

fn gram(repr: &GprRepr, jitter: f64) -> DMatrix<f64> {
    let n = repr.x_train.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel(repr.variance, &repr.lengthscales, &repr.x_train[i], &repr.x_train[j]));
    for i in 0..n {
        k[(i, i)] += repr.noise + jitter;
    }
    k
}

impl GprModel {
    /// Factorizes the noisy Gram matrix, adding jitter 1e-10 … 1e-6 if the plain
    /// factorization fails.
    pub fn fit(params: &GprParams, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let dims = x[0].len();
        let lengthscales = params.lengthscale.expand(dims)?;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mut repr = GprRepr {
            variance: params.variance,
            lengthscales,
            noise: params.noise,
            jitter: 0.0,
            mean,
            x_train: x.to_vec(),
            alpha: Vec::new(),
        };
        let centered = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean));
        for jitter in JITTER_LADDER {
            let Some(chol) = gram(&repr, jitter).cholesky() else {
                continue;
            };
            let alpha = chol.solve(&centered);
            if alpha.iter().any(|a| !a.is_finite()) {
                return Err(RegressorError::SolveFailed("non-finite solve vector".into()));
            }
            repr.jitter = jitter;
            repr.alpha = alpha.iter().copied().collect();
            return Ok(Self {
                repr,
                factor: chol.unpack(),
            });
        }
        Err(RegressorError::SolveFailed(
            "kernel matrix not positive definite after jitter 1e-6".into(),
        ))
    }

    pub fn n_features(&self) -> usize {
        self.repr.lengthscales.len()
    }

    pub fn jitter(&self) -> f64 {
        self.repr.jitter
    }

    pub fn noise(&self) -> f64 {
        self.repr.noise
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        let r = &self.repr;
        DVector::from_iterator(r.x_train.len(), r.x_train.iter().map(|t| kernel(r.variance, &r.lengthscales, x, t)))
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let r = &self.repr;
        let mut acc = r.mean;
        for (t, a) in r.x_train.iter().zip(&r.alpha) {
            acc += kernel(r.variance, &r.lengthscales, x, t) * a;
        }
        acc
    }

    /// Latent-function variance `v − kᵀ (K + σ²I)⁻¹ k`, clamped at zero.
    pub fn predict_variance(&self, x: &[f64]) -> f64 {
        let k = self.cross(x);
        let v = self
            .factor
            .solve_lower_triangular(&k)
            .expect("factor has a positive diagonal");
        (self.repr.variance - v.norm_squared()).max(0.0)
    }
}
