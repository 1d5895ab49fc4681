mod common;

use approx::assert_relative_eq;
use common::*;
use gsvgd::kernels::{kernel_eval, kernel_grad_y, KernelKind, KernelState};
use gsvgd::linalg::{solve_lyapunov, spd_sqrt, GaussianParams, Mat, RngSeed, SpdMatrix, Vector};
use gsvgd::linalg::sample_gaussian;
use proptest::prelude::*;

#[test]
fn sqrt_of_random_spd_squares_back() {
    let mut r = rng(51);
    let a = spd(5, &mut r);
    let root = spd_sqrt(&a);
    let back = root.as_mat() * root.as_mat();
    assert!(rel(&back, a.as_mat()) <= 1e-12);
    assert_eq!(spd_sqrt(&SpdMatrix::identity(3)).as_mat(), &Mat::identity(3, 3));
    let d = spd_sqrt(&SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap());
    assert_relative_eq!(d.as_mat(), &Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])), epsilon = 1e-14);
}

#[test]
fn sample_mean_within_clt_band() {
    let n = 100_000;
    let x = sample_gaussian(&GaussianParams::standard(3), n, RngSeed(77));
    let m = x.row_sum() / n as f64;
    assert!(m.iter().all(|v| v.abs() < 4.0 / (n as f64).sqrt()));
    let one = sample_gaussian(&GaussianParams::standard(3), 1, RngSeed(5));
    assert_eq!(one, sample_gaussian(&GaussianParams::standard(3), 1, RngSeed(5)));
}

fn central_grad(f: impl Fn(&Vector) -> f64, y: &Vector, h: f64) -> Vector {
    Vector::from_fn(y.len(), |i, _| {
        let mut p = y.clone();
        let mut m = y.clone();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn kinds() -> [KernelKind; 5] {
    [
        KernelKind::SimpleBilinear,
        KernelKind::AffineInvariant,
        KernelKind::RescaledAffineInvariant,
        KernelKind::Regularized(0.3),
        KernelKind::Regularized(1.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sqrt_scales_with_root(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let a = spd(4, &mut r);
        let lhs = spd_sqrt(&a.scale(c).unwrap());
        let rhs = spd_sqrt(&a).as_mat() * c.sqrt();
        // eigensolver reconstruction error is ~1e-12 for clustered spectra
        prop_assert!(rel(lhs.as_mat(), &rhs) <= 1e-10);
    }

    #[test]
    fn lyapunov_residual_small(seed in any::<u64>(), d in 1usize..7) {
        let mut r = rng(seed);
        let p = spd(d, &mut r);
        let q = sym(d, &mut r);
        let x = solve_lyapunov(&p, &q);
        let res = p.as_mat() * x.as_mat() + x.as_mat() * p.as_mat() - q.as_mat();
        prop_assert!(res.norm() <= 1e-11 * q.as_mat().norm().max(1.0));
        prop_assert_eq!(x.as_mat().transpose(), x.as_mat().clone());
    }

    #[test]
    fn kernel_symmetry_and_gradient(seed in any::<u64>()) {
        let mut r = rng(seed);
        let th = theta(3, &mut r);
        let x = vector(3, 2.0, &mut r);
        let y = vector(3, 2.0, &mut r);
        for kind in kinds() {
            let s = KernelState::new(kind, &th.mean, th.cov.as_mat()).unwrap();
            prop_assert_eq!(kernel_eval(&s, &x, &y).unwrap(), kernel_eval(&s, &y, &x).unwrap());
            let g = kernel_grad_y(&s, &x, &y).unwrap();
            let fd = central_grad(|y| kernel_eval(&s, &x, y).unwrap(), &y, 1e-5);
            prop_assert!((&g - &fd).norm() <= 1e-6 * g.norm().max(1.0));
        }
    }

    #[test]
    fn kernel_gram_psd(seed in any::<u64>(), m in 1usize..7) {
        let mut r = rng(seed);
        let th = theta(3, &mut r);
        let pts: Vec<Vector> = (0..m).map(|_| vector(3, 2.0, &mut r)).collect();
        for kind in kinds() {
            let s = KernelState::new(kind, &th.mean, th.cov.as_mat()).unwrap();
            let gram = Mat::from_fn(m, m, |i, j| kernel_eval(&s, &pts[i], &pts[j]).unwrap());
            let min = gram.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min >= -1e-10 * gram.norm().max(1.0));
        }
    }

    #[test]
    fn k4_endpoints(seed in any::<u64>()) {
        let mut r = rng(seed);
        let th = theta(3, &mut r);
        let x = vector(3, 2.0, &mut r);
        let y = vector(3, 2.0, &mut r);
        let ev = |k: KernelKind| kernel_eval(&KernelState::new(k, &th.mean, th.cov.as_mat()).unwrap(), &x, &y).unwrap();
        prop_assert!((ev(KernelKind::Regularized(1.0)) - ev(KernelKind::AffineInvariant)).abs() <= 1e-12 * ev(KernelKind::AffineInvariant).abs().max(1.0));
        prop_assert!((ev(KernelKind::Regularized(0.0)) - ev(KernelKind::RescaledAffineInvariant)).abs() <= 1e-10 * ev(KernelKind::RescaledAffineInvariant).abs().max(1.0));
    }
}
