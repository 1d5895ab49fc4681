//! Moment estimators for general targets, Gaussian and empirical
//! Wasserstein distances, and exponential rate fitting.

mod rate;
mod transport;

pub use rate::{fit_rate, RateFit};
pub use transport::{assignment, bures_w2, bures_w2_commuting, empirical_w2, empirical_w2_gaussian, EXACT_W2_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{GaussianParams, Mat, RngSeed, SymMatrix, Vector};
use crate::targets::{Moments, TargetPotential};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    /// m̂ = mean ∇V(x_k), Γ̂ = mean ∇²V(x_k).
    Hessian,
    /// Γ̂ = mean Σ⁻¹(x_k − μ)∇V(x_k)ᵀ, symmetrized.
    FirstOrder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub m_hat: Vector,
    pub gamma_hat: SymMatrix,
    pub method: MomentMethod,
    pub sample_size: usize,
}

impl MomentEstimate {
    pub fn moments(&self) -> Moments {
        Moments { m: self.m_hat.clone(), gamma: self.gamma_hat.clone() }
    }
}

/// Monte Carlo estimate of (E[∇V], E[∇²V]) from samples (rows) of θ.
pub fn estimate_moments(
    samples: &Mat,
    theta: &GaussianParams,
    target: &dyn TargetPotential,
    method: MomentMethod,
) -> Result<MomentEstimate> {
    let (n, d) = samples.shape();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if d != target.dim() || d != theta.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), found: d });
    }
    let grads = target.grad_rows(samples);
    let m_hat = grads.row_sum().transpose() / n as f64;
    let gamma = match method {
        MomentMethod::Hessian => {
            let mut acc = Mat::zeros(d, d);
            for row in samples.row_iter() {
                acc += target.hess(&row.transpose()).as_mat();
            }
            acc / n as f64
        }
        MomentMethod::FirstOrder => {
            let mut xc = samples.clone();
            for mut row in xc.row_iter_mut() {
                row -= theta.mean.transpose();
            }
            theta.cov.inverse_mat() * xc.transpose() * grads / n as f64
        }
    };
    Ok(MomentEstimate { m_hat, gamma_hat: SymMatrix::symmetrized(&gamma), method, sample_size: n })
}

/// Draws `m` fresh points from θ and estimates from them.
pub fn resampled_moments(
    theta: &GaussianParams,
    target: &dyn TargetPotential,
    m: usize,
    method: MomentMethod,
    seed: RngSeed,
) -> Result<MomentEstimate> {
    estimate_moments(&theta.sample_with(m, &mut seed.rng()), theta, target, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::targets::GaussianTarget;
    use approx::assert_relative_eq;

    #[test]
    fn hessian_method_exact_on_gaussian() {
        let t = GaussianTarget::new(
            Vector::from_vec(vec![1.0, 2.0]),
            SpdMatrix::new(Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
        )
        .unwrap();
        let th = GaussianParams::standard(2);
        let e = resampled_moments(&th, &t, 3, MomentMethod::Hessian, RngSeed(4)).unwrap();
        assert_relative_eq!(e.gamma_hat.as_mat(), t.q_inv(), epsilon = 1e-14);
        assert_eq!(e.sample_size, 3);
        let again = resampled_moments(&th, &t, 3, MomentMethod::Hessian, RngSeed(4)).unwrap();
        assert_eq!(e, again);
        assert!(resampled_moments(&th, &t, 1, MomentMethod::FirstOrder, RngSeed(4)).is_ok());
    }

    #[test]
    fn empty_samples_rejected() {
        let t = GaussianTarget::centered(SpdMatrix::identity(2));
        let r = estimate_moments(&Mat::zeros(0, 2), &GaussianParams::standard(2), &t, MomentMethod::Hessian);
        assert_eq!(r, Err(Error::EmptySamples));
    }
}
