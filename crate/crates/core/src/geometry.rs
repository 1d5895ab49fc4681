//! Metric tensors on the Gaussian family and their inverses.
//!
//! A cotangent element (ν, S) is paired with a tangent (μ̃, Σ̃) through
//! ⟨(ν, S), (μ̃, Σ̃)⟩ = νᵀμ̃ + tr(S Σ̃). The inverse maps send a Euclidean
//! gradient (∇_μ F, ∇_Σ F) to the corresponding Riemannian gradient.

use crate::error::{Error, Result};
use crate::linalg::{lyapunov_mat, symmetrize, GaussianParams, Mat, SpdMatrix, SymMatrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct CotangentElement {
    pub nu: Vector,
    pub s: SymMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentElement {
    pub dmu: Vector,
    pub dsigma: SymMatrix,
}

impl CotangentElement {
    pub fn new(nu: Vector, s: SymMatrix) -> Result<Self> {
        if nu.len() != s.dim() {
            return Err(Error::DimensionMismatch { expected: s.dim(), found: nu.len() });
        }
        Ok(CotangentElement { nu, s })
    }

    pub fn zeros(d: usize) -> Self {
        CotangentElement { nu: Vector::zeros(d), s: SymMatrix::zeros(d) }
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn scale(&self, a: f64) -> Self {
        CotangentElement { nu: &self.nu * a, s: self.s.scale(a) }
    }

    pub fn add(&self, o: &Self) -> Self {
        CotangentElement { nu: &self.nu + &o.nu, s: self.s.add(&o.s) }
    }

    pub fn norm(&self) -> f64 {
        (self.nu.norm_squared() + self.s.as_mat().norm_squared()).sqrt()
    }

    /// νᵀμ̃ + tr(S Σ̃).
    pub fn pair(&self, t: &TangentElement) -> f64 {
        self.nu.dot(&t.dmu) + self.s.as_mat().dot(t.dsigma.as_mat())
    }
}

impl TangentElement {
    pub fn new(dmu: Vector, dsigma: SymMatrix) -> Result<Self> {
        if dmu.len() != dsigma.dim() {
            return Err(Error::DimensionMismatch { expected: dsigma.dim(), found: dmu.len() });
        }
        Ok(TangentElement { dmu, dsigma })
    }

    pub fn zeros(d: usize) -> Self {
        TangentElement { dmu: Vector::zeros(d), dsigma: SymMatrix::zeros(d) }
    }

    pub(crate) fn from_raw(dmu: Vector, dsigma: &Mat) -> Self {
        TangentElement { dmu, dsigma: SymMatrix::symmetrized(dsigma) }
    }

    pub fn dim(&self) -> usize {
        self.dmu.len()
    }

    pub fn scale(&self, a: f64) -> Self {
        TangentElement { dmu: &self.dmu * a, dsigma: self.dsigma.scale(a) }
    }

    pub fn add(&self, o: &Self) -> Self {
        TangentElement { dmu: &self.dmu + &o.dmu, dsigma: self.dsigma.add(&o.dsigma) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    /// sqrt(‖μ̃‖² + ‖Σ̃‖_F²).
    pub fn norm(&self) -> f64 {
        (self.dmu.norm_squared() + self.dsigma.as_mat().norm_squared()).sqrt()
    }
}

fn check_dims(theta: &GaussianParams, d: usize) -> Result<()> {
    if theta.dim() != d {
        return Err(Error::DimensionMismatch { expected: theta.dim(), found: d });
    }
    Ok(())
}

/// Inverse of the Stein metric with kernel K1.
pub fn inv_iso_k1(theta: &GaussianParams, c: &CotangentElement) -> TangentElement {
    let sigma = theta.cov.as_mat();
    let mu = &theta.mean;
    let s = c.s.as_mat();
    let nu = &c.nu;
    let dmu = s * (sigma * mu) * 2.0 + nu * (1.0 + mu.dot(mu));
    let left = sigma * (sigma * s * 2.0 + mu * nu.transpose());
    let right = (s * sigma * 2.0 + nu * mu.transpose()) * sigma;
    TangentElement::from_raw(dmu, &(left + right))
}

/// Inverse of the Stein metric with kernel K2: (ν, 2(Σ²S + SΣ²)).
pub fn inv_iso_k2(theta: &GaussianParams, c: &CotangentElement) -> TangentElement {
    let sigma = theta.cov.as_mat();
    let s2 = sigma * sigma;
    let s = c.s.as_mat();
    TangentElement::from_raw(c.nu.clone(), &((&s2 * s + s * &s2) * 2.0))
}

/// Inverse of the Bures-Wasserstein metric: (ν, 2(ΣS + SΣ)).
pub fn inv_iso_bw(theta: &GaussianParams, c: &CotangentElement) -> TangentElement {
    let sigma = theta.cov.as_mat();
    let s = c.s.as_mat();
    TangentElement::from_raw(c.nu.clone(), &((sigma * s + s * sigma) * 2.0))
}

/// R = ((1−ν)Σ + νI)⁻¹ Σ², which is SPD because Σ and (1−ν)Σ + νI commute.
fn rs_operator(sigma: &SpdMatrix, nu: f64) -> Result<SpdMatrix> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::InvalidParameter(format!("regularization nu={nu} outside [0,1]")));
    }
    sigma.map_spectrum(|s| s * s / ((1.0 - nu) * s + nu))
}

/// Inverse of the regularized Stein metric on centered Gaussians:
/// 2(R S + S R) with R = ((1−ν)Σ + νI)⁻¹ Σ².
pub fn inv_iso_rs(sigma: &SpdMatrix, s: &SymMatrix, nu: f64) -> Result<SymMatrix> {
    let r = rs_operator(sigma, nu)?;
    let r = r.as_mat();
    Ok(SymMatrix::symmetrized(&((r * s.as_mat() + s.as_mat() * r) * 2.0)))
}

/// Forward regularized Stein metric: solves 2(RS + SR) = Σ̃.
pub fn iso_rs(sigma: &SpdMatrix, dsigma: &SymMatrix, nu: f64) -> Result<SymMatrix> {
    let r = rs_operator(sigma, nu)?;
    Ok(SymMatrix::symmetrized(&lyapunov_mat(&r, &(dsigma.as_mat() * 0.5))))
}

/// Coefficients (b, S) with G⁻¹_{K1}(b, S/2) = ξ, obtained from the
/// Lyapunov system P S + S P = Σ̃ − (Σμμ̃ᵀ + μ̃μᵀΣ)/(1+μᵀμ),
/// P = Σ(I − μμᵀ/(1+μᵀμ))Σ, and b = (μ̃ − SΣμ)/(1+μᵀμ).
fn k1_coefficients(theta: &GaussianParams, xi: &TangentElement) -> (Vector, Mat) {
    let sigma = theta.cov.as_mat();
    let mu = &theta.mean;
    let d = mu.len();
    let k = 1.0 + mu.dot(mu);
    let proj = Mat::identity(d, d) - mu * mu.transpose() / k;
    let p = SpdMatrix::new(sigma * proj * sigma).expect("P = Σ(I − μμᵀ/(1+μᵀμ))Σ is positive definite");
    let smu = sigma * mu;
    let rhs = xi.dsigma.as_mat() - (&smu * xi.dmu.transpose() + &xi.dmu * smu.transpose()) / k;
    let s = symmetrize(&lyapunov_mat(&p, &symmetrize(&rhs)));
    let b = (&xi.dmu - &s * &smu) / k;
    (b, s)
}

/// Forward Stein metric with kernel K1 (tangent to cotangent).
pub fn iso_k1(theta: &GaussianParams, xi: &TangentElement) -> CotangentElement {
    let (b, s) = k1_coefficients(theta, xi);
    CotangentElement { nu: b, s: SymMatrix::symmetrized(&(s * 0.5)) }
}

/// Forward Stein metric with kernel K2: S solves Σ²S + SΣ² = Σ̃/2.
pub fn iso_k2(theta: &GaussianParams, xi: &TangentElement) -> CotangentElement {
    let s2 = theta.cov.map_spectrum(|v| v * v).expect("Σ² is SPD");
    CotangentElement {
        nu: xi.dmu.clone(),
        s: SymMatrix::symmetrized(&lyapunov_mat(&s2, &(xi.dsigma.as_mat() * 0.5))),
    }
}

/// Forward Bures-Wasserstein metric: S solves ΣS + SΣ = Σ̃/2.
pub fn iso_bw(theta: &GaussianParams, xi: &TangentElement) -> CotangentElement {
    CotangentElement {
        nu: xi.dmu.clone(),
        s: SymMatrix::symmetrized(&lyapunov_mat(&theta.cov, &(xi.dsigma.as_mat() * 0.5))),
    }
}

/// g_θ(ξ, η) = tr(S₁S₂Σ²) + (b₁ᵀS₂ + b₂ᵀS₁)Σμ + (1+μᵀμ) b₁ᵀb₂ for the K1 Stein metric.
pub fn stein_metric_pairing(theta: &GaussianParams, xi: &TangentElement, eta: &TangentElement) -> Result<f64> {
    check_dims(theta, xi.dim())?;
    check_dims(theta, eta.dim())?;
    let sigma = theta.cov.as_mat();
    let mu = &theta.mean;
    let (b1, s1) = k1_coefficients(theta, xi);
    let (b2, s2) = k1_coefficients(theta, eta);
    let smu = sigma * mu;
    let t1 = (&s1 * &s2 * sigma * sigma).trace();
    let t2 = b1.dot(&(&s2 * &smu)) + b2.dot(&(&s1 * &smu));
    let t3 = (1.0 + mu.dot(mu)) * b1.dot(&b2);
    Ok(t1 + t2 + t3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    SteinK1,
    SteinK2,
    BuresWasserstein,
}

pub fn inv_iso(kind: MetricKind, theta: &GaussianParams, c: &CotangentElement) -> TangentElement {
    match kind {
        MetricKind::SteinK1 => inv_iso_k1(theta, c),
        MetricKind::SteinK2 => inv_iso_k2(theta, c),
        MetricKind::BuresWasserstein => inv_iso_bw(theta, c),
    }
}

pub fn iso(kind: MetricKind, theta: &GaussianParams, xi: &TangentElement) -> CotangentElement {
    match kind {
        MetricKind::SteinK1 => iso_k1(theta, xi),
        MetricKind::SteinK2 => iso_k2(theta, xi),
        MetricKind::BuresWasserstein => iso_bw(theta, xi),
    }
}

/// ⟨G_θ ξ, η⟩ for any of the three metrics.
pub fn metric_pairing(kind: MetricKind, theta: &GaussianParams, xi: &TangentElement, eta: &TangentElement) -> f64 {
    iso(kind, theta, xi).pair(eta)
}
