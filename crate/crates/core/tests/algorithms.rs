mod common;

use common::*;
use gsvgd::algorithms::{
    density_step, parse_algorithm, particle_step, preset_step, run_algorithm, run_particles, AlgoConfig, Estimator,
    Framework, Problem, ALGORITHMS,
};
use gsvgd::kernels::KernelKind;
use gsvgd::linalg::{GaussianParams, Mat, RngSeed, Vector};
use gsvgd::meanfield::rhs_general;
use gsvgd::particles::{discrete_step, ParticleCloud};
use gsvgd::targets::{LogisticTarget, TargetPotential};
use gsvgd::trajectory::RunStatus;

const KERNELS: [KernelKind; 4] = [
    KernelKind::SimpleBilinear,
    KernelKind::AffineInvariant,
    KernelKind::RescaledAffineInvariant,
    KernelKind::Regularized(0.5),
];

fn logistic() -> LogisticTarget {
    LogisticTarget::generate(40, &Vector::from_vec(vec![0.6, -0.4, 0.5]), RngSeed(80))
}

fn start3() -> GaussianParams {
    GaussianParams::from_mats(
        Vector::from_vec(vec![0.2, 0.1, -0.1]),
        Mat::from_row_slice(3, 3, &[0.3, 0.05, 0.0, 0.05, 0.2, 0.02, 0.0, 0.02, 0.25]),
    )
    .unwrap()
}

fn exact_cfg(framework: Framework, kernel: KernelKind, step: f64, iters: usize) -> AlgoConfig {
    AlgoConfig::new(framework, kernel, Estimator::Exact, step, 8, iters)
}

#[test]
fn bwgd_step_matches_bures_wasserstein_update() {
    let lg = logistic();
    let th = start3();
    let eps = 0.05;
    let cfg = exact_cfg(Framework::Density, KernelKind::RescaledAffineInvariant, eps, 1);
    let next = density_step(&th, &lg, &cfg, 1, &mut RngSeed(0).rng()).unwrap();
    let mo = lg.gaussian_moments(&th).unwrap();
    // μ' = μ − εm, Σ' = (I − ε(Γ − Σ⁻¹))Σ(I − ε(Γ − Σ⁻¹))
    let k = Mat::identity(3, 3) - (mo.gamma.as_mat() - th.cov.inverse_mat()) * eps;
    assert!((&next.mean - (&th.mean - &mo.m * eps)).norm() < 1e-14);
    assert!(rel(next.cov.as_mat(), &(&k * th.cov.as_mat() * &k)) < 1e-13);
}

#[test]
fn small_steps_follow_the_mean_field_drift() {
    let lg = logistic();
    let th = start3();
    let mo = lg.gaussian_moments(&th).unwrap();
    for kernel in KERNELS {
        let rhs = rhs_general(&th, &mo, kernel).unwrap();
        let err = |eps: f64| {
            let cfg = exact_cfg(Framework::Density, kernel, eps, 1);
            let next = density_step(&th, &lg, &cfg, 1, &mut RngSeed(0).rng()).unwrap();
            let dmu = (&next.mean - &th.mean) / eps - &rhs.dmu;
            let ds = (next.cov.as_mat() - th.cov.as_mat()) / eps - rhs.dsigma.as_mat();
            (dmu.norm_squared() + ds.norm_squared()).sqrt()
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        // first-order consistency: the difference quotient error halves with ε
        assert!((e1 / e2 - 2.0).abs() < 0.05, "{kernel}: {e1} {e2}");
        assert!(e1 < 1e-2 * rhs.norm());
    }
}

#[test]
fn particle_step_is_the_discrete_update_on_gaussian_targets() {
    let mut r = rng(81);
    let t = gaussian_target(3, &mut r);
    let cloud = ParticleCloud::sample(&theta(3, &mut r), 12, RngSeed(82)).unwrap();
    for kernel in KERNELS {
        for est in [Estimator::Hessian, Estimator::Exact] {
            let cfg = AlgoConfig::new(Framework::Particle, kernel, est, 0.1, 12, 1);
            let a = particle_step(&cloud, &t, &cfg, &mut RngSeed(0).rng()).unwrap();
            let b = discrete_step(&cloud, kernel, &t.grad_rows(cloud.points()), 0.1).unwrap();
            assert!(rel(a.points(), b.points()) < 1e-13, "{kernel} {est:?}");
        }
    }
}

#[test]
fn optimum_is_a_fixed_point() {
    let mut r = rng(83);
    let t = gaussian_target(3, &mut r);
    let star = t.params();
    for kernel in KERNELS {
        let cfg = exact_cfg(Framework::Density, kernel, 0.3, 1);
        let next = density_step(&star, &t, &cfg, 1, &mut RngSeed(0).rng()).unwrap();
        assert!((&next.mean - &star.mean).norm() < 1e-12, "{kernel}");
        assert!(rel(next.cov.as_mat(), star.cov.as_mat()) < 1e-12, "{kernel}");
        let cloud = ParticleCloud::with_moments(&star.mean, &star.cov).unwrap();
        let cfg = exact_cfg(Framework::Particle, kernel, 0.3, 1);
        let next = particle_step(&cloud, &t, &cfg, &mut RngSeed(0).rng()).unwrap();
        assert!(rel(next.points(), cloud.points()) < 1e-12, "{kernel}");
    }
}

#[test]
fn density_update_keeps_covariance_symmetric() {
    let lg = logistic();
    let mut th = start3();
    for kernel in KERNELS {
        let cfg = AlgoConfig::new(Framework::Density, kernel, Estimator::Hessian, 0.05, 20, 1);
        let mut rng = RngSeed(84).rng();
        for it in 1..=20 {
            th = density_step(&th, &lg, &cfg, it, &mut rng).unwrap();
            let s = th.cov.as_mat();
            assert_eq!(s, &s.transpose(), "{kernel}");
        }
    }
}

#[test]
fn exact_moment_runs_descend_monotonically() {
    let mut r = rng(85);
    let t = gaussian_target(3, &mut r);
    let th0 = theta(3, &mut r);
    for kernel in KERNELS {
        let rec = run_algorithm(&exact_cfg(Framework::Density, kernel, 0.01, 500), &t, &th0).unwrap();
        assert_eq!(rec.status, RunStatus::Completed);
        let kl = rec.column(|row| row.kl);
        assert!(kl.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{kernel}");
        assert!(kl.last().unwrap() < &kl[0]);
    }
    let lg = logistic();
    for kernel in KERNELS {
        let rec = run_algorithm(&exact_cfg(Framework::Density, kernel, 0.005, 200), &lg, &start3()).unwrap();
        let fe = rec.column(|row| row.free_energy);
        assert!(fe.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{kernel}");
    }
}

#[test]
fn density_and_particle_moments_coincide() {
    let lg = logistic();
    let th0 = start3();
    for kernel in KERNELS {
        let dcfg = exact_cfg(Framework::Density, kernel, 0.05, 1);
        let pcfg = exact_cfg(Framework::Particle, kernel, 0.05, 1);
        let mut th = th0.clone();
        let mut cloud = ParticleCloud::with_moments(&th0.mean, &th0.cov).unwrap();
        let mut rng = RngSeed(0).rng();
        for it in 1..=40 {
            th = density_step(&th, &lg, &dcfg, it, &mut rng).unwrap();
            cloud = particle_step(&cloud, &lg, &pcfg, &mut rng).unwrap();
            assert!((cloud.mean() - &th.mean).norm() < 1e-10 * th.mean.norm().max(1.0), "{kernel} iter {it}");
            assert!(rel(cloud.cov().as_mat(), th.cov.as_mat()) < 1e-10, "{kernel} iter {it}");
        }
    }
}

#[test]
fn runs_record_and_report_divergence() {
    let mut r = rng(86);
    let t = gaussian_target(2, &mut r);
    let th0 = theta(2, &mut r);
    let mut cfg = AlgoConfig::named("GPF", Estimator::Hessian, 0.1, 20, 30).unwrap().with_seed(9);
    cfg.record_every = 7;
    let rec = run_algorithm(&cfg, &t, &th0).unwrap();
    let iters: Vec<usize> = rec.rows.iter().map(|row| row.iter).collect();
    assert_eq!(iters, vec![0, 7, 14, 21, 28, 30]);
    assert!((rec.last().unwrap().t - 3.0).abs() < 1e-12);
    let again = run_algorithm(&cfg, &t, &th0).unwrap();
    assert_eq!(rec.column(|row| row.kl), again.column(|row| row.kl));

    let big = AlgoConfig::named("SBGD", Estimator::Exact, 50.0, 4, 100).unwrap();
    let rec = run_algorithm(&big, &t, &th0).unwrap();
    assert!(rec.diverged());

    // cloud must be nondegenerate
    assert!(run_algorithm(&AlgoConfig::named("GPF", Estimator::Hessian, 0.1, 2, 3).unwrap(), &t, &th0).is_err());
    let bad = AlgoConfig::new(Framework::Density, KernelKind::SimpleBilinear, Estimator::Hessian, -1.0, 4, 3);
    assert!(run_algorithm(&bad, &t, &th0).is_err());
}

#[test]
fn run_particles_matches_manual_loop() {
    let mut r = rng(87);
    let t = gaussian_target(2, &mut r);
    let cloud0 = ParticleCloud::sample(&theta(2, &mut r), 10, RngSeed(88)).unwrap();
    let cfg = AlgoConfig::named("BWPF", Estimator::Hessian, 0.2, 10, 15).unwrap();
    let end = run_particles(&cfg, &t, cloud0.clone()).unwrap();
    let mut c = cloud0;
    for _ in 0..15 {
        c = discrete_step(&c, KernelKind::RescaledAffineInvariant, &t.grad_rows(c.points()), 0.2).unwrap();
    }
    assert!(rel(end.points(), c.points()) < 1e-12);
}

#[test]
fn names_presets_and_config_round_trip() {
    for name in ALGORITHMS {
        let (f, k) = parse_algorithm(name).unwrap();
        let cfg = AlgoConfig::new(f, k, Estimator::FirstOrder, 0.1, 5, 2).with_seed(3);
        assert_eq!(cfg.name(), name);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<AlgoConfig>(&json).unwrap(), cfg);
    }
    assert_eq!(preset_step(Problem::Logistic, "bwpf").unwrap(), 4.0);
    assert_eq!(preset_step(Problem::Mixture, "GPF").unwrap(), 0.8);
    assert!(parse_algorithm("XYZ").is_err());
    assert_eq!("first-order".parse::<Estimator>().unwrap(), Estimator::FirstOrder);
    assert!("nope".parse::<Estimator>().is_err());
    let k4 = parse_algorithm("RGF").unwrap().1;
    assert_eq!(k4, KernelKind::Regularized(0.5));
}

#[test]
fn trajectory_json_has_rows_and_status() {
    let mut r = rng(89);
    let t = gaussian_target(2, &mut r);
    let th0 = theta(2, &mut r);
    let rec = run_algorithm(&AlgoConfig::named("GF", Estimator::Exact, 0.1, 4, 5).unwrap(), &t, &th0).unwrap();
    let mut buf = Vec::new();
    rec.write_json(&mut buf).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["status"], "Completed");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), rec.rows.len());
    assert_eq!(rows[5]["iter"], 5);
    assert!((rows[0]["cov"][1][0].as_f64().unwrap() - th0.cov.as_mat()[(1, 0)]).abs() < 1e-15);
    // hamiltonian is NaN for algorithm runs
    assert!(rows[0]["hamiltonian"].is_null());
}
