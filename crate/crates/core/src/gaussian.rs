//! Gaussian components and numerically safe mixture posteriors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::config::TOLERANCES;
use crate::error::{Error, Result};
use crate::geometry::Point;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One weighted Gaussian of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    prior: f64,
    mean: Point,
    covariance: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(prior: f64, mean: Point, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        if !(prior > 0.0 && prior <= 1.0 + 1e-12) {
            return Err(Error::InvalidComponent(format!(
                "prior {prior} outside (0, 1]"
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidComponent("non-finite parameters".into()));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        let scale = covariance.amax().max(1.0);
        if asym > TOLERANCES.covariance_symmetry * scale {
            return Err(Error::InvalidComponent(format!(
                "covariance asymmetric by {asym:e}"
            )));
        }
        let covariance = symmetrize(&covariance);
        if covariance.clone().cholesky().is_none() {
            return Err(Error::InvalidComponent(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self {
            prior,
            mean,
            covariance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn mean(&self) -> &Point {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn with_prior(&self, prior: f64) -> Result<Self> {
        Self::new(prior, self.mean.clone(), self.covariance.clone())
    }

    /// `ln N(x | μ, Σ)`.
    pub fn log_density(&self, x: &Point) -> f64 {
        let chol = self
            .covariance
            .clone()
            .cholesky()
            .expect("covariance validated at construction");
        let l = chol.l();
        let z = l
            .solve_lower_triangular(&(x - &self.mean))
            .expect("Cholesky factor is nonsingular");
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * (z.norm_squared() + log_det + self.dim() as f64 * LN_2PI)
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Posterior responsibilities `γ_k(ξ)` of each component for a query point.
///
/// Evaluated in log space, so far-field queries never underflow to an
/// all-zero vector.
pub fn responsibilities(components: &[GaussianComponent], x: &Point) -> Vec<f64> {
    let logs: Vec<f64> = components
        .iter()
        .map(|c| c.prior.ln() + c.log_density(x))
        .collect();
    normalize_log_weights(&logs)
}

pub(crate) fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(logs);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - total).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// A mixture with pre-factored covariances for repeated posterior queries.
///
/// Parameters are stored flat so that evaluation performs no matrix
/// allocation.
#[derive(Debug, Clone)]
pub struct MixtureEvaluator {
    dim: usize,
    means: Vec<f64>,
    /// Row-major inverse Cholesky factors, `d×d` per component.
    whiten: Vec<f64>,
    log_weights: Vec<f64>,
}

impl MixtureEvaluator {
    pub fn new(components: &[GaussianComponent]) -> Self {
        let dim = components.first().map(|c| c.dim()).unwrap_or(0);
        let mut means = Vec::with_capacity(components.len() * dim);
        let mut whiten = Vec::with_capacity(components.len() * dim * dim);
        let mut log_weights = Vec::with_capacity(components.len());
        for c in components {
            let chol = c
                .covariance
                .clone()
                .cholesky()
                .expect("covariance validated at construction");
            let l = chol.l();
            let l_inv = l
                .solve_lower_triangular(&DMatrix::identity(dim, dim))
                .expect("Cholesky factor is nonsingular");
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            means.extend(c.mean.iter());
            for r in 0..dim {
                for col in 0..dim {
                    whiten.push(l_inv[(r, col)]);
                }
            }
            log_weights.push(c.prior.ln() - 0.5 * (log_det + dim as f64 * LN_2PI));
        }
        Self {
            dim,
            means,
            whiten,
            log_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `ln(π_k N(x | θ_k))` for every component into `out`.
    pub fn log_joint_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (k, slot) in out.iter_mut().enumerate().take(self.len()) {
            let mean = &self.means[k * d..(k + 1) * d];
            let w = &self.whiten[k * d * d..(k + 1) * d * d];
            let mut q = 0.0;
            for r in 0..d {
                let mut z = 0.0;
                for c in 0..=r {
                    z += w[r * d + c] * (x[c] - mean[c]);
                }
                q += z * z;
            }
            *slot = self.log_weights[k] - 0.5 * q;
        }
    }

    /// Writes normalized responsibilities into `out` (length = component count).
    pub fn responsibilities_into(&self, x: &[f64], out: &mut [f64]) {
        self.log_joint_into(x, out);
        let out = &mut out[..self.len()];
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        for v in out.iter_mut() {
            *v /= s;
        }
    }

    pub fn responsibilities(&self, x: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.responsibilities_into(x.as_slice(), &mut out);
        out
    }

    /// `ln p(x)` of the whole mixture.
    pub fn log_likelihood(&self, x: &Point) -> f64 {
        let mut out = vec![0.0; self.len()];
        self.log_joint_into(x.as_slice(), &mut out);
        log_sum_exp(&out)
    }
}
