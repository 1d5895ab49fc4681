//! Closed-form covariance trajectories of the centered flows.

use crate::error::{Error, Result};
use crate::linalg::{check_commuting, Mat, SpdMatrix, Vector};

/// Σ_t⁻¹ = e^{−2t}Σ₀⁻¹ + (1 − e^{−2t})Q⁻¹, valid when Σ₀Q = QΣ₀.
pub fn closed_form_commuting(sigma0: &SpdMatrix, q: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_commuting(sigma0.as_mat(), q.as_mat())?;
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("negative time {t}")));
    }
    let e = (-2.0 * t).exp();
    let prec = sigma0.inverse_mat() * e + q.inverse_mat() * (1.0 - e);
    Ok(SpdMatrix::new(prec)?.inverse())
}

/// Σ₀ = I, Q = I + ηvvᵀ with ‖v‖ = 1:
/// Σ_t = I + η(1 − e^{−2t})/(1 + ηe^{−2t}) vvᵀ.
pub fn closed_form_rank_one(eta: f64, v: &Vector, t: f64) -> Result<SpdMatrix> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("direction must have unit norm, got {n}")));
    }
    let e = (-2.0 * t).exp();
    let c = eta * (1.0 - e) / (1.0 + eta * e);
    let d = v.len();
    SpdMatrix::new(Mat::identity(d, d) + v * v.transpose() * c)
}

/// k ln|σ − λ| − ν ln σ, the conserved part of the scalar R-SVGD relation
/// (σ − λ)^k / σ^ν = (σ₀ − λ)^k / σ₀^ν · e^{−2t} with k = (1−ν)λ + ν.
fn rsvgd_potential(sigma: f64, lambda: f64, nu: f64) -> f64 {
    let k = (1.0 - nu) * lambda + nu;
    k * (sigma - lambda).abs().ln() - nu * sigma.ln()
}

/// Residual of the implicit relation in log form.
pub fn rsvgd_relation_residual(sigma: f64, sigma0: f64, lambda: f64, nu: f64, t: f64) -> f64 {
    rsvgd_potential(sigma, lambda, nu) - rsvgd_potential(sigma0, lambda, nu) + 2.0 * t
}

/// Eigenvalue σ(t) of the centered R-SVGD flow started at σ₀ with target
/// eigenvalue λ. σ(t) lies strictly between λ and σ₀, so the root is found
/// by bisection on the log-gap L with σ = λ + (σ₀ − λ)e^L.
pub fn closed_form_rsvgd_eig(sigma0: f64, lambda: f64, nu: f64, t: f64) -> Result<f64> {
    if !(sigma0 > 0.0 && lambda > 0.0) || !(0.0..=1.0).contains(&nu) || t < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma0={sigma0}, lambda={lambda}, nu={nu}, t={t}")));
    }
    if sigma0 == lambda || t == 0.0 {
        return Ok(sigma0);
    }
    let k = (1.0 - nu) * lambda + nu;
    let gap = sigma0 - lambda;
    let sigma_of = |l: f64| lambda + gap * l.exp();
    // φ(L) = kL − ν ln(σ(L)/σ₀) + 2t is increasing, φ(0) = 2t > 0.
    let phi = |l: f64| k * l - nu * (sigma_of(l) / sigma0).ln() + 2.0 * t;
    let mut lo = -2.0 * t / k - 1.0;
    let mut tries = 0;
    while phi(lo) >= 0.0 {
        lo *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::RootFinding("no lower bracket for the R-SVGD relation".into()));
        }
    }
    let mut hi = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * lo.abs().max(1.0) {
            break;
        }
    }
    Ok(sigma_of(0.5 * (lo + hi)))
}
