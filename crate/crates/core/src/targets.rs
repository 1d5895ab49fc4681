//! Target potentials V = −log ρ* and the KL gradients of Gaussian VI.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::CotangentElement;
use crate::linalg::{random_spd, GaussianParams, Mat, RngSeed, SpdMatrix, SymMatrix, Vector};
use crate::quadrature::default_rule;

/// E_θ[∇V] and E_θ[∇²V].
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vector,
    pub gamma: SymMatrix,
}

pub trait TargetPotential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    fn hess(&self, x: &Vector) -> SymMatrix;

    /// Exact (or quadrature-accurate) Gaussian expectations of ∇V and ∇²V.
    fn gaussian_moments(&self, _theta: &GaussianParams) -> Result<Moments> {
        Err(Error::Unsupported("closed-form moments for this target".into()))
    }

    /// E_θ[V].
    fn gaussian_expected_value(&self, _theta: &GaussianParams) -> Result<f64> {
        Err(Error::Unsupported("closed-form expected potential for this target".into()))
    }

    fn as_gaussian(&self) -> Option<&GaussianTarget> {
        None
    }

    /// Gradients of all rows of an N×d matrix.
    fn grad_rows(&self, x: &Mat) -> Mat {
        let mut g = Mat::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            let gi = self.grad(&x.row(i).transpose());
            g.set_row(i, &gi.transpose());
        }
        g
    }
}

/// V(x) = ½(x−b)ᵀQ⁻¹(x−b).
#[derive(Clone, Debug)]
pub struct GaussianTarget {
    pub b: Vector,
    pub q: SpdMatrix,
    q_inv: Mat,
}

impl GaussianTarget {
    pub fn new(b: Vector, q: SpdMatrix) -> Result<Self> {
        if b.len() != q.dim() {
            return Err(Error::DimensionMismatch { expected: q.dim(), found: b.len() });
        }
        let q_inv = q.inverse_mat();
        Ok(GaussianTarget { b, q, q_inv })
    }

    pub fn centered(q: SpdMatrix) -> Self {
        let d = q.dim();
        Self::new(Vector::zeros(d), q).expect("dimensions agree")
    }

    /// b ~ Unif[0,1]^d and Q⁻¹ = U diag(λ) Uᵀ with Haar U and λ geometric
    /// from `lam_min` to `lam_max`.
    pub fn random_geometric(d: usize, lam_min: f64, lam_max: f64, seed: RngSeed) -> Result<Self> {
        let mut rng = seed.rng();
        let b = Vector::from_fn(d, |_, _| rng.gen::<f64>());
        let lams: Vec<f64> = if d == 1 {
            vec![lam_max]
        } else {
            (0..d)
                .map(|i| lam_min * (lam_max / lam_min).powf(i as f64 / (d - 1) as f64))
                .collect()
        };
        let precision = random_spd(&lams, &mut rng)?;
        Self::new(b, precision.inverse())
    }

    pub fn q_inv(&self) -> &Mat {
        &self.q_inv
    }

    pub fn params(&self) -> GaussianParams {
        GaussianParams { mean: self.b.clone(), cov: self.q.clone() }
    }

    pub fn is_centered(&self) -> bool {
        self.b.iter().all(|v| *v == 0.0)
    }
}

impl TargetPotential for GaussianTarget {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let r = x - &self.b;
        0.5 * r.dot(&(&self.q_inv * &r))
    }

    fn grad(&self, x: &Vector) -> Vector {
        &self.q_inv * (x - &self.b)
    }

    fn hess(&self, _x: &Vector) -> SymMatrix {
        SymMatrix::symmetrized(&self.q_inv)
    }

    fn gaussian_moments(&self, theta: &GaussianParams) -> Result<Moments> {
        Ok(exact_gaussian_moments(theta, self))
    }

    fn gaussian_expected_value(&self, theta: &GaussianParams) -> Result<f64> {
        let r = &theta.mean - &self.b;
        Ok(0.5 * ((&self.q_inv * theta.cov.as_mat()).trace() + r.dot(&(&self.q_inv * &r))))
    }

    fn as_gaussian(&self) -> Option<&GaussianTarget> {
        Some(self)
    }

    fn grad_rows(&self, x: &Mat) -> Mat {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= self.b.transpose();
        }
        c * &self.q_inv
    }
}

/// m = Q⁻¹(μ − b), Γ = Q⁻¹.
pub fn exact_gaussian_moments(theta: &GaussianParams, target: &GaussianTarget) -> Moments {
    Moments {
        m: target.q_inv() * (&theta.mean - &target.b),
        gamma: SymMatrix::symmetrized(target.q_inv()),
    }
}

/// KL(N(μ,Σ) ‖ N(b,Q)).
pub fn kl_gaussian(theta: &GaussianParams, target: &GaussianTarget) -> f64 {
    let d = theta.dim() as f64;
    let qs = target.q_inv() * theta.cov.as_mat();
    let r = &theta.mean - &target.b;
    let logdet = target.q.logdet() - theta.cov.logdet();
    0.5 * (qs.trace() + logdet - d + r.dot(&(target.q_inv() * &r)))
}

/// (∇_μ KL, ∇_Σ KL) = (m, ½(Γ − Σ⁻¹)).
pub fn gvi_kl_gradients(theta: &GaussianParams, moments: &Moments) -> CotangentElement {
    let s = (moments.gamma.as_mat() - theta.cov.inverse_mat()) * 0.5;
    CotangentElement { nu: moments.m.clone(), s: SymMatrix::symmetrized(&s) }
}

/// (1/N) Σ [log ρ_θ(x_i) + V(x_i)] over the rows of `samples`.
pub fn free_energy_estimate(samples: &Mat, theta: &GaussianParams, target: &dyn TargetPotential) -> Result<f64> {
    let n = samples.nrows();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let prec = theta.cov.inverse_mat();
    let d = theta.dim() as f64;
    let norm = -0.5 * (theta.cov.logdet() + d * (2.0 * std::f64::consts::PI).ln());
    let mut acc = 0.0;
    for i in 0..n {
        let x = samples.row(i).transpose();
        let r = &x - &theta.mean;
        acc += norm - 0.5 * r.dot(&(&prec * &r)) + target.value(&x);
    }
    Ok(acc / n as f64)
}

/// F(ρ_θ) = E_θ[V] − entropy(θ), using the target's Gaussian expectations.
pub fn free_energy_exact(theta: &GaussianParams, target: &dyn TargetPotential) -> Result<f64> {
    Ok(target.gaussian_expected_value(theta)? - theta.entropy())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// V(x) = −log Σ_k w_k N(x; μ_k, Σ_k).
#[derive(Clone, Debug)]
pub struct MixtureTarget {
    weights: Vec<f64>,
    means: Vec<Vector>,
    covs: Vec<SpdMatrix>,
    precs: Vec<Mat>,
    log_norms: Vec<f64>,
}

impl MixtureTarget {
    pub fn new(weights: Vec<f64>, means: Vec<Vector>, covs: Vec<SpdMatrix>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covs.len() != k {
            return Err(Error::InvalidParameter("mixture needs matching nonempty weights, means, covs".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        let d = means[0].len();
        for (m, c) in means.iter().zip(&covs) {
            if m.len() != d || c.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.len().max(c.dim()) });
            }
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let precs = covs.iter().map(|c| c.inverse_mat()).collect();
        let log_norms = covs
            .iter()
            .map(|c| -0.5 * (c.logdet() + d as f64 * (2.0 * std::f64::consts::PI).ln()))
            .collect();
        Ok(MixtureTarget { weights, means, covs, precs, log_norms })
    }

    /// One-dimensional mixture with density proportional to
    /// Σ_k c_k exp(−(x−μ_k)²/(2σ_k²)); the normalized weights are ∝ c_k σ_k.
    pub fn from_unnormalized_1d(coeffs: &[f64], means: &[f64], vars: &[f64]) -> Result<Self> {
        if coeffs.len() != means.len() || coeffs.len() != vars.len() {
            return Err(Error::InvalidParameter("mixture component lists differ in length".into()));
        }
        let weights = coeffs.iter().zip(vars).map(|(c, v)| c * v.sqrt()).collect();
        Self::new(
            weights,
            means.iter().map(|m| Vector::from_element(1, *m)).collect(),
            vars.iter().map(|v| SpdMatrix::from_diagonal(&[*v])).collect::<Result<_>>()?,
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vector] {
        &self.means
    }

    pub fn covs(&self) -> &[SpdMatrix] {
        &self.covs
    }

    /// Log component terms l_k and the scaled residuals g_k = Σ_k⁻¹(x − μ_k).
    fn components(&self, x: &Vector) -> (Vec<f64>, Vec<Vector>) {
        let mut l = Vec::with_capacity(self.weights.len());
        let mut g = Vec::with_capacity(self.weights.len());
        for k in 0..self.weights.len() {
            let r = x - &self.means[k];
            let gk = &self.precs[k] * &r;
            l.push(self.weights[k].ln() + self.log_norms[k] - 0.5 * r.dot(&gk));
            g.push(gk);
        }
        (l, g)
    }

    fn responsibilities(l: &[f64]) -> Vec<f64> {
        let lse = log_sum_exp(l);
        l.iter().map(|v| (v - lse).exp()).collect()
    }

    /// Mixture density at x.
    pub fn density(&self, x: &Vector) -> f64 {
        (-self.value(x)).exp()
    }
}

impl TargetPotential for MixtureTarget {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let (l, _) = self.components(x);
        -log_sum_exp(&l)
    }

    fn grad(&self, x: &Vector) -> Vector {
        let (l, g) = self.components(x);
        let r = Self::responsibilities(&l);
        let mut out = Vector::zeros(x.len());
        for (rk, gk) in r.iter().zip(&g) {
            out += gk * *rk;
        }
        out
    }

    fn hess(&self, x: &Vector) -> SymMatrix {
        let (l, g) = self.components(x);
        let r = Self::responsibilities(&l);
        let d = x.len();
        let mut mean_g = Vector::zeros(d);
        let mut h = Mat::zeros(d, d);
        for k in 0..r.len() {
            mean_g += &g[k] * r[k];
            h += &self.precs[k] * r[k] - &g[k] * g[k].transpose() * r[k];
        }
        h += &mean_g * mean_g.transpose();
        SymMatrix::symmetrized(&h)
    }

    /// Quadrature moments, available for d = 1.
    fn gaussian_moments(&self, theta: &GaussianParams) -> Result<Moments> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("mixture moments by quadrature need d = 1".into()));
        }
        let (a, s) = (theta.mean[0], theta.cov.as_mat()[(0, 0)].sqrt());
        let gh = default_rule();
        let x1 = |x: f64| Vector::from_element(1, x);
        let m = gh.expect(a, s, |x| self.grad(&x1(x))[0]);
        let h = gh.expect(a, s, |x| self.hess(&x1(x)).as_mat()[(0, 0)]);
        Ok(Moments { m: Vector::from_element(1, m), gamma: SymMatrix::symmetrized(&Mat::from_element(1, 1, h)) })
    }

    fn gaussian_expected_value(&self, theta: &GaussianParams) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("mixture expectation by quadrature needs d = 1".into()));
        }
        let (a, s) = (theta.mean[0], theta.cov.as_mat()[(0, 0)].sqrt());
        Ok(default_rule().expect(a, s, |x| self.value(&Vector::from_element(1, x))))
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bayesian logistic regression with a flat prior:
/// V(ξ) = Σ_i [log(1 + exp⟨ξ, X_i⟩) − Y_i⟨ξ, X_i⟩].
#[derive(Clone, Debug)]
pub struct LogisticTarget {
    pub x: Mat,
    pub y: Vector,
}

impl LogisticTarget {
    pub fn new(x: Mat, y: Vector) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
        }
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
        }
        Ok(LogisticTarget { x, y })
    }

    /// X_i ~ N(0, I_d), Y_i ~ Bernoulli(σ(⟨ξ*, X_i⟩)).
    pub fn generate(n: usize, xi_star: &Vector, seed: RngSeed) -> Self {
        let d = xi_star.len();
        let mut rng = seed.rng();
        let x = Mat::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let y = Vector::from_fn(n, |i, _| {
            let p = sigmoid(x.row(i).transpose().dot(xi_star));
            if rng.gen::<f64>() < p {
                1.0
            } else {
                0.0
            }
        });
        LogisticTarget { x, y }
    }

    /// Projections z_i = ⟨ξ, X_i⟩ ~ N(a_i, s_i²) under ξ ~ N(μ, Σ).
    fn projections(&self, theta: &GaussianParams) -> (Vector, Vector) {
        let a = &self.x * &theta.mean;
        let xs = &self.x * theta.cov.as_mat();
        let s = Vector::from_fn(self.x.nrows(), |i, _| xs.row(i).dot(&self.x.row(i)).max(0.0).sqrt());
        (a, s)
    }
}

impl TargetPotential for LogisticTarget {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, xi: &Vector) -> f64 {
        let z = &self.x * xi;
        z.iter().zip(self.y.iter()).map(|(z, y)| softplus(*z) - y * z).sum()
    }

    fn grad(&self, xi: &Vector) -> Vector {
        let z = &self.x * xi;
        let r = Vector::from_fn(z.len(), |i, _| sigmoid(z[i]) - self.y[i]);
        self.x.transpose() * r
    }

    fn hess(&self, xi: &Vector) -> SymMatrix {
        let z = &self.x * xi;
        let mut xw = self.x.clone();
        for i in 0..z.len() {
            let s = sigmoid(z[i]);
            let mut row = xw.row_mut(i);
            row *= s * (1.0 - s);
        }
        SymMatrix::symmetrized(&(self.x.transpose() * xw))
    }

    /// Each ⟨ξ, X_i⟩ is one-dimensional Gaussian, so the expectations reduce
    /// to Gauss-Hermite sums per data point.
    fn gaussian_moments(&self, theta: &GaussianParams) -> Result<Moments> {
        let (a, s) = self.projections(theta);
        let gh = default_rule();
        let n = self.x.nrows();
        let mut r = Vector::zeros(n);
        let mut w = Vector::zeros(n);
        for i in 0..n {
            r[i] = gh.expect(a[i], s[i], sigmoid) - self.y[i];
            w[i] = gh.expect(a[i], s[i], |z| {
                let p = sigmoid(z);
                p * (1.0 - p)
            });
        }
        let m = self.x.transpose() * r;
        let mut xw = self.x.clone();
        for i in 0..n {
            let mut row = xw.row_mut(i);
            row *= w[i];
        }
        Ok(Moments { m, gamma: SymMatrix::symmetrized(&(self.x.transpose() * xw)) })
    }

    fn gaussian_expected_value(&self, theta: &GaussianParams) -> Result<f64> {
        let (a, s) = self.projections(theta);
        let gh = default_rule();
        Ok((0..self.x.nrows()).map(|i| gh.expect(a[i], s[i], softplus) - self.y[i] * a[i]).sum())
    }
}
