//! Theoretical convergence exponents.

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{kron, GaussianParams, Mat, Vector};
use crate::meanfield::FlowKind;
use crate::targets::GaussianTarget;

/// Cap on d for the dense (d² + d)-dimensional Kronecker matrices.
pub const KRON_DIM_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub gamma: f64,
    pub lower_bound: f64,
    pub source: String,
}

fn min_eig(m: Mat) -> f64 {
    SymmetricEigen::new(m).eigenvalues.min()
}

fn check_cap(d: usize) -> Result<()> {
    if d > KRON_DIM_CAP {
        return Err(Error::TooLarge { size: d, cap: KRON_DIM_CAP });
    }
    Ok(())
}

fn block(top_left: Mat, off: Mat, bottom_right: Mat) -> Mat {
    let n1 = top_left.nrows();
    let n2 = bottom_right.nrows();
    let mut m = Mat::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1)).copy_from(&top_left);
    m.view_mut((0, n1), (n1, n2)).copy_from(&off);
    m.view_mut((n1, 0), (n2, n1)).copy_from(&off.transpose());
    m.view_mut((n1, n1), (n2, n2)).copy_from(&bottom_right);
    m
}

fn column(v: &Vector) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

/// Smallest eigenvalue γ of
/// [[I_{d²}, b⊗Q^{−1/2}/√2], [bᵀ⊗Q^{−1/2}/√2, (1+bᵀb)Q⁻¹/2]],
/// with the bound 1/(1 + bᵀb + 2λ_max(Q)). ‖μ_t − b‖ and ‖Σ_t − Q‖ of the
/// K1 flow decay like e^{−2(γ−ε)t}.
pub fn compute_gamma_k1(target: &GaussianTarget) -> Result<RateReport> {
    let d = target.b.len();
    check_cap(d)?;
    let b = &target.b;
    let qis = target.q.inv_sqrt();
    let off = kron(&column(b), qis.as_mat()) / 2f64.sqrt();
    let br = target.q_inv() * (0.5 * (1.0 + b.dot(b)));
    let m = block(Mat::identity(d * d, d * d), off, br);
    Ok(RateReport {
        gamma: min_eig(m),
        lower_bound: 1.0 / (1.0 + b.dot(b) + 2.0 * target.q.max_eigenvalue()),
        source: "K1 flow, Gaussian target".into(),
    })
}

/// γ = α · λ_min([[I⊗Σ*, μ*⊗Σ*^{1/2}], [μ*ᵀ⊗Σ*^{1/2}, (1+μ*ᵀμ*)I]]) for an
/// α-strongly log-concave target with GVI optimum θ* = (μ*, Σ*). The bound
/// α/(β(1+μ*ᵀμ*) + 1) is evaluated with β = 1/λ_min(Σ*), the smallest
/// smoothness constant compatible with the stationarity condition Σ*⁻¹ = E[∇²V].
pub fn compute_gamma_general(theta_star: &GaussianParams, alpha: f64) -> Result<RateReport> {
    let d = theta_star.dim();
    check_cap(d)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("strong convexity constant must be positive, got {alpha}")));
    }
    let mu = &theta_star.mean;
    let sig = theta_star.cov.as_mat();
    let root = theta_star.cov.sqrt();
    let tl = kron(&Mat::identity(d, d), sig);
    let off = kron(&column(mu), root.as_mat());
    let br = Mat::identity(d, d) * (1.0 + mu.dot(mu));
    let beta = 1.0 / theta_star.cov.min_eigenvalue();
    Ok(RateReport {
        gamma: alpha * min_eig(block(tl, off, br)),
        lower_bound: alpha / (beta * (1.0 + mu.dot(mu)) + 1.0),
        source: "K1 flow, strongly log-concave target".into(),
    })
}

/// Covariance rate exponents on centered Gaussian problems:
/// WGF/BW 2/λ, SVGD 2, R-SVGD 2/((1−ν)λ + ν). None where no rate is known.
pub fn theoretical_rate(flow: FlowKind, lambda_max: f64) -> Option<f64> {
    match flow {
        FlowKind::Wgf | FlowKind::Bw => Some(2.0 / lambda_max),
        FlowKind::SvgdK1 | FlowKind::SvgdK2 => Some(2.0),
        FlowKind::Rsvgd(nu) => Some(2.0 / ((1.0 - nu) * lambda_max + nu)),
        FlowKind::General(crate::kernels::KernelKind::AffineInvariant) => Some(2.0),
        FlowKind::General(crate::kernels::KernelKind::RescaledAffineInvariant) => Some(2.0 / lambda_max),
        FlowKind::General(crate::kernels::KernelKind::Regularized(nu)) => Some(2.0 / ((1.0 - nu) * lambda_max + nu)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_k1_centered_cases() {
        let t = GaussianTarget::centered(SpdMatrix::identity(2));
        assert_relative_eq!(compute_gamma_k1(&t).unwrap().gamma, 0.5, epsilon = 1e-12);
        let t = GaussianTarget::centered(SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap());
        let r = compute_gamma_k1(&t).unwrap();
        assert_relative_eq!(r.gamma, 0.125, epsilon = 1e-12);
        assert!(r.gamma > r.lower_bound);
    }

    #[test]
    fn gamma_general_scaled_identity() {
        let r = compute_gamma_general(&GaussianParams::standard(3), 1.0).unwrap();
        assert_relative_eq!(r.gamma, 1.0, epsilon = 1e-12);
        for beta in [0.5, 2.0, 5.0] {
            let th = GaussianParams::new(Vector::zeros(2), SpdMatrix::scaled_identity(2, 1.0 / beta).unwrap()).unwrap();
            let r = compute_gamma_general(&th, 0.7).unwrap();
            assert_relative_eq!(r.gamma / 0.7, (1.0 / beta).min(1.0), epsilon = 1e-12);
            assert!(r.gamma > r.lower_bound);
        }
    }

    #[test]
    fn table_rates() {
        assert_relative_eq!(theoretical_rate(FlowKind::Wgf, 4.0).unwrap(), 0.5);
        assert_relative_eq!(theoretical_rate(FlowKind::SvgdK1, 17.0).unwrap(), 2.0);
        assert_relative_eq!(theoretical_rate(FlowKind::Rsvgd(0.5), 4.0).unwrap(), 0.8);
    }
}
