//! Gauss-Hermite rules for expectations under the standard normal.

use std::sync::OnceLock;

use nalgebra::SymmetricEigen;

use crate::linalg::Mat;

#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// n-point rule from the Golub-Welsch eigenproblem of the Jacobi matrix of
    /// the probabilists' Hermite polynomials. Weights sum to one.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut j = Mat::zeros(n, n);
        for k in 1..n {
            let off = (k as f64).sqrt();
            j[(k - 1, k)] = off;
            j[(k, k - 1)] = off;
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    /// E[f(a + s Z)], Z ~ N(0, 1).
    pub fn expect(&self, a: f64, s: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(a + s * z)).sum()
    }
}

/// Shared 96-point rule.
pub fn default_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(96))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_normal_moments() {
        let gh = GaussHermite::new(20);
        assert_relative_eq!(gh.expect(0.0, 1.0, |_| 1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gh.expect(0.0, 1.0, |x| x * x), 1.0, epsilon = 1e-12);
        assert_relative_eq!(gh.expect(0.0, 1.0, |x| x.powi(4)), 3.0, epsilon = 1e-11);
        assert_relative_eq!(gh.expect(1.0, 2.0, |x| x), 1.0, epsilon = 1e-12);
        // E[exp(Z)] = e^{1/2}
        assert_relative_eq!(default_rule().expect(0.0, 1.0, f64::exp), 0.5f64.exp(), epsilon = 1e-12);
    }
}
