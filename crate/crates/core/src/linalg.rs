//! Dense symmetric linear algebra: SPD matrices with a cached eigendecomposition,
//! Lyapunov solves, Gaussian parameters and seeded sampling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Smallest admissible eigenvalue relative to the largest one.
pub const SPD_REL_TOL: f64 = 1e-12;

/// Relative tolerance for commutation checks, scaled by the Frobenius norms.
pub const COMMUTE_TOL: f64 = 1e-10;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(())
}

fn check_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Symmetric matrix, stored exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        check_square(&m)?;
        Ok(SymMatrix(symmetrize(&m)))
    }

    /// Symmetrizes a matrix known to be square. Panics otherwise.
    pub fn symmetrized(m: &Mat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "SymMatrix needs a square matrix");
        SymMatrix(symmetrize(m))
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix(Mat::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(Mat::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn scale(&self, a: f64) -> Self {
        SymMatrix(&self.0 * a)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn eigenvalues(&self) -> Vector {
        SymmetricEigen::new(self.0.clone()).eigenvalues
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }
}

/// Symmetric positive-definite matrix with its eigendecomposition cached.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    m: Mat,
    vals: Vector,
    vecs: Mat,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl SpdMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m, "SPD construction")?;
        let m = symmetrize(&m);
        let eig = SymmetricEigen::new(m.clone());
        Self::check_spectrum(&eig.eigenvalues)?;
        Ok(SpdMatrix { m, vals: eig.eigenvalues, vecs: eig.eigenvectors })
    }

    fn check_spectrum(vals: &Vector) -> Result<()> {
        if vals.is_empty() {
            return Err(Error::InvalidParameter("empty matrix".into()));
        }
        let min = vals.min();
        let max = vals.max();
        if !(min > 0.0) || min <= SPD_REL_TOL * max {
            return Err(Error::NotSpd { min_eig: min, max_eig: max });
        }
        Ok(())
    }

    /// Builds U diag(vals) Uᵀ from an orthogonal U.
    pub fn from_eigen(vals: Vector, vecs: Mat) -> Result<Self> {
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SPD spectrum"));
        }
        Self::check_spectrum(&vals)?;
        let m = symmetrize(&(&vecs * Mat::from_diagonal(&vals) * vecs.transpose()));
        Ok(SpdMatrix { m, vals, vecs })
    }

    pub fn identity(d: usize) -> Self {
        SpdMatrix { m: Mat::identity(d, d), vals: Vector::from_element(d, 1.0), vecs: Mat::identity(d, d) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Mat::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn scaled_identity(d: usize, s: f64) -> Result<Self> {
        Self::new(Mat::identity(d, d) * s)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.m
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.m.clone())
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.vals
    }

    pub fn eigenvectors(&self) -> &Mat {
        &self.vecs
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.vals.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.vals.max()
    }

    /// Applies a positive scalar function to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Result<SpdMatrix> {
        Self::from_eigen(self.vals.map(f), self.vecs.clone())
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.map_spectrum(f64::sqrt).expect("sqrt of SPD is SPD")
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.map_spectrum(|v| 1.0 / v.sqrt()).expect("inverse sqrt of SPD is SPD")
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.map_spectrum(|v| 1.0 / v).expect("inverse of SPD is SPD")
    }

    pub fn inverse_mat(&self) -> Mat {
        self.inverse().m
    }

    pub fn logdet(&self) -> f64 {
        self.vals.iter().map(|v| v.ln()).sum()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn scale(&self, a: f64) -> Result<SpdMatrix> {
        Self::new(&self.m * a)
    }
}

/// Unique SPD square root.
pub fn spd_sqrt(a: &SpdMatrix) -> SpdMatrix {
    a.sqrt()
}

/// Solves P X + X P = C in P's eigenbasis. C need not be symmetric.
pub fn lyapunov_mat(p: &SpdMatrix, c: &Mat) -> Mat {
    let u = p.eigenvectors();
    let l = p.eigenvalues();
    let mut ct = u.transpose() * c * u;
    let d = l.len();
    for i in 0..d {
        for j in 0..d {
            ct[(i, j)] /= l[i] + l[j];
        }
    }
    u * ct * u.transpose()
}

/// Unique symmetric X with P X + X P = Q.
pub fn solve_lyapunov(p: &SpdMatrix, q: &SymMatrix) -> SymMatrix {
    SymMatrix::symmetrized(&lyapunov_mat(p, q.as_mat()))
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Frobenius norm of AB − BA.
pub fn commutator_norm(a: &Mat, b: &Mat) -> f64 {
    (a * b - b * a).norm()
}

/// Errors unless ‖AB − BA‖_F ≤ 1e-10 ‖A‖_F ‖B‖_F.
pub fn check_commuting(a: &Mat, b: &Mat) -> Result<()> {
    let residual = commutator_norm(a, b);
    let tol = COMMUTE_TOL * a.norm() * b.norm();
    if residual <= tol {
        Ok(())
    } else {
        Err(Error::NonCommuting { residual, tol })
    }
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_spectral_norm(m: &Mat) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Seed for the simulation RNG (ChaCha20, seeded through `seed_from_u64`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RngSeed(pub u64);

pub type SimRng = ChaCha20Rng;

impl RngSeed {
    pub fn rng(self) -> SimRng {
        ChaCha20Rng::seed_from_u64(self.0)
    }

    /// Independent stream of the same seed, used for sub-tasks.
    pub fn stream(self, stream: u64) -> SimRng {
        let mut r = ChaCha20Rng::seed_from_u64(self.0);
        r.set_stream(stream);
        r
    }
}

/// A point θ = (μ, Σ) of the Gaussian family.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Vector,
    pub cov: SpdMatrix,
}

impl GaussianParams {
    pub fn new(mean: Vector, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch { expected: cov.dim(), found: mean.len() });
        }
        Ok(GaussianParams { mean, cov })
    }

    pub fn from_mats(mean: Vector, cov: Mat) -> Result<Self> {
        Self::new(mean, SpdMatrix::new(cov)?)
    }

    pub fn standard(d: usize) -> Self {
        GaussianParams { mean: Vector::zeros(d), cov: SpdMatrix::identity(d) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_centered(&self, tol: f64) -> bool {
        self.mean.norm() <= tol
    }

    pub fn logpdf(&self, x: &Vector) -> f64 {
        let d = self.dim() as f64;
        let r = x - &self.mean;
        let quad = r.dot(&(self.cov.inverse_mat() * &r));
        -0.5 * (quad + self.cov.logdet() + d * (2.0 * std::f64::consts::PI).ln())
    }

    /// Differential entropy ½ log det(2πe Σ).
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * (self.cov.logdet() + d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
    }

    /// n draws μ + Σ^{1/2} z as rows of an n×d matrix.
    pub fn sample_with(&self, n: usize, rng: &mut SimRng) -> Mat {
        let d = self.dim();
        let root = self.cov.sqrt();
        let z = Mat::from_fn(n, d, |_, _| StandardNormal.sample(rng));
        let mut x = z * root.as_mat();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

/// n i.i.d. draws from N(μ, Σ), one per row; deterministic in the seed.
pub fn sample_gaussian(theta: &GaussianParams, n: usize, seed: RngSeed) -> Mat {
    theta.sample_with(n, &mut seed.rng())
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn haar_orthogonal(d: usize, rng: &mut SimRng) -> Mat {
    let g = Mat::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

/// Random SPD matrix U diag(vals) Uᵀ with Haar U.
pub fn random_spd(vals: &[f64], rng: &mut SimRng) -> Result<SpdMatrix> {
    let u = haar_orthogonal(vals.len(), rng);
    SpdMatrix::from_eigen(Vector::from_column_slice(vals), u)
}
