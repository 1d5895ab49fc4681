use crate::error::{Error, Result};
use crate::linalg::{check_commuting, GaussianParams, Mat, RngSeed, SpdMatrix};

/// Largest cloud size accepted by the exact assignment.
pub const EXACT_W2_CAP: usize = 512;

/// W₂²(N(μ₁,Σ₁), N(μ₂,Σ₂)) = ‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₂^{1/2}Σ₁Σ₂^{1/2})^{1/2}).
pub fn bures_w2(a: &GaussianParams, b: &GaussianParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let r = b.cov.sqrt();
    let inner = SpdMatrix::new(r.as_mat() * a.cov.as_mat() * r.as_mat())?;
    let cross = inner.sqrt().trace();
    let v = (&a.mean - &b.mean).norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(v.max(0.0))
}

/// ‖μ₁−μ₂‖² + tr((Σ₁^{1/2} − Σ₂^{1/2})²), valid for commuting covariances.
pub fn bures_w2_commuting(a: &GaussianParams, b: &GaussianParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    check_commuting(a.cov.as_mat(), b.cov.as_mat())?;
    let diff = a.cov.sqrt().as_mat() - b.cov.sqrt().as_mat();
    Ok((&a.mean - &b.mean).norm_squared() + (&diff * &diff).trace())
}

/// Minimum-cost perfect matching of a square cost matrix (shortest
/// augmenting paths with potentials, O(n³)). Returns the column for each row.
pub fn assignment(cost: &Mat) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays, index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

/// Squared W₂ between two uniform empirical measures of equal size,
/// i.e. the mean squared distance under the optimal matching.
pub fn empirical_w2(a: &Mat, b: &Mat) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if b.nrows() != n || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
    }
    if n > EXACT_W2_CAP {
        return Err(Error::TooLarge { size: n, cap: EXACT_W2_CAP });
    }
    let cost = Mat::from_fn(n, n, |i, j| (a.row(i) - b.row(j)).norm_squared());
    let perm = assignment(&cost);
    Ok(perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>() / n as f64)
}

/// Squared W₂ between a cloud and N fresh draws from θ.
pub fn empirical_w2_gaussian(cloud: &Mat, theta: &GaussianParams, seed: RngSeed) -> Result<f64> {
    let draws = theta.sample_with(cloud.nrows(), &mut seed.rng());
    empirical_w2(cloud, &draws)
}
