//! Reusable experiment drivers shared by the command-line tool and the
//! acceptance suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{preset_step, run_algorithm, AlgoConfig, Estimator, Framework, Problem, ALGORITHMS};
use crate::error::{Error, Result};
use crate::estimators::{empirical_w2_gaussian, fit_rate, RateFit};
use crate::kernels::KernelKind;
use crate::linalg::{haar_orthogonal, sym_spectral_norm, GaussianParams, Mat, RngSeed, SpdMatrix, Vector};
use crate::meanfield::{
    closed_form_commuting, compute_gamma_k1, integrate, theoretical_rate, FlowKind, IntegrateOptions,
};
use crate::particles::{linear_factor_ode, run_discrete_convergence, ParticleCloud, DiscreteConvergence};
use crate::targets::{GaussianTarget, LogisticTarget, MixtureTarget, TargetPotential};
use crate::trajectory::TrajectoryRecord;

/// Fits log(value) over the stretch that starts when the series first drops
/// below `hi` and ends when it first drops below `lo` (or at the end).
pub fn fit_decay(times: &[f64], values: &[f64], hi: f64, lo: f64) -> Result<RateFit> {
    let start = values.iter().position(|v| *v < hi).ok_or(Error::TooFewPoints(0))?;
    let end = values.iter().position(|v| *v < lo).map(|e| e.saturating_sub(1)).unwrap_or(values.len() - 1);
    if end <= start {
        return Err(Error::TooFewPoints(0));
    }
    fit_rate(times, values, (times[start], times[end]))
}

/// Σ₀ and Q sharing the eigenvectors of a Haar rotation.
pub fn commuting_pair(sigma0_eigs: &[f64], q_eigs: &[f64], seed: RngSeed) -> Result<(SpdMatrix, SpdMatrix)> {
    let d = q_eigs.len();
    if sigma0_eigs.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: sigma0_eigs.len() });
    }
    let u = haar_orthogonal(d, &mut seed.rng());
    let s0 = SpdMatrix::from_eigen(Vector::from_row_slice(sigma0_eigs), u.clone())?;
    let q = SpdMatrix::from_eigen(Vector::from_row_slice(q_eigs), u)?;
    Ok((s0, q))
}

#[derive(Clone, Debug, Serialize)]
pub struct RiccatiReport {
    pub times: Vec<f64>,
    pub rel_errors: Vec<f64>,
}

/// RK4 of the centered Riccati flow against its closed form.
pub fn riccati_check(sigma0: &SpdMatrix, q: &SpdMatrix, dt: f64, times: &[f64]) -> Result<RiccatiReport> {
    let d = q.dim();
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let target = GaussianTarget::centered(q.clone());
    let theta0 = GaussianParams::new(Vector::zeros(d), sigma0.clone())?;
    let rec = integrate(FlowKind::SvgdK1, &theta0, &target, IntegrateOptions::new(dt, t_end, 1))?;
    let mut rel_errors = Vec::new();
    for &t in times {
        let row = rec
            .rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("nonempty");
        let exact = closed_form_commuting(sigma0, q, row.t)?;
        let diff = sym_spectral_norm(&(row.theta.cov.as_mat() - exact.as_mat()));
        rel_errors.push(diff / exact.max_eigenvalue());
    }
    Ok(RiccatiReport { times: times.to_vec(), rel_errors })
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub flow: String,
    pub predicted: f64,
    pub fitted: f64,
    pub rel_error: f64,
    pub r_squared: f64,
}

/// Fitted exponents of ‖Σ_t − Q‖ over `window` against the theoretical
/// covariance rates, for flows on a centered problem.
pub fn table1_rates(
    sigma0: &SpdMatrix,
    q: &SpdMatrix,
    flows: &[FlowKind],
    dt: f64,
    window: (f64, f64),
) -> Result<Vec<RateRow>> {
    let target = GaussianTarget::centered(q.clone());
    let theta0 = GaussianParams::new(Vector::zeros(q.dim()), sigma0.clone())?;
    let record_every = ((0.01 / dt).round() as usize).max(1);
    flows
        .par_iter()
        .map(|&flow| {
            let rec = integrate(flow, &theta0, &target, IntegrateOptions::new(dt, window.1, record_every))?;
            let fit = fit_rate(&rec.times(), &rec.column(|r| r.sigma_err), window)?;
            let predicted = theoretical_rate(flow, q.max_eigenvalue())
                .ok_or_else(|| Error::Unsupported(format!("no theoretical rate for {flow}")))?;
            Ok(RateRow {
                flow: flow.to_string(),
                predicted: -predicted,
                fitted: fit.slope,
                rel_error: (fit.slope + predicted).abs() / predicted,
                r_squared: fit.r_squared,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct K1RateReport {
    pub gamma: f64,
    pub lower_bound: f64,
    pub sigma_fit: RateFit,
    pub joint_fit: RateFit,
}

/// K1 flow from θ₀ on a Gaussian target: fitted decay of ‖Σ_t − Q‖ and of
/// ‖μ_t − b‖ + ‖Σ_t − Q‖, next to γ for that target.
pub fn k1_rate_check(target: &GaussianTarget, theta0: &GaussianParams, dt: f64, t_end: f64) -> Result<K1RateReport> {
    let rep = compute_gamma_k1(target)?;
    let record_every = ((0.05 / dt).round() as usize).max(1);
    let rec = integrate(FlowKind::SvgdK1, theta0, target, IntegrateOptions::new(dt, t_end, record_every))?;
    let t = rec.times();
    let sigma_fit = fit_decay(&t, &rec.column(|r| r.sigma_err), 1e-2, 1e-11)?;
    let joint_fit = fit_decay(&t, &rec.column(|r| r.mu_err + r.sigma_err), 1e-2, 1e-11)?;
    Ok(K1RateReport { gamma: rep.gamma, lower_bound: rep.lower_bound, sigma_fit, joint_fit })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaosConfig {
    pub ns: Vec<usize>,
    pub times: Vec<f64>,
    pub seeds: usize,
    pub seed: RngSeed,
    /// Step of the particle factor integration.
    pub dt: f64,
    /// Step of the mean-field reference integration.
    pub reference_dt: f64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        ChaosConfig {
            ns: vec![32, 64, 128, 256],
            times: vec![0.0, 1.0, 2.0, 4.0],
            seeds: 50,
            seed: RngSeed(2024),
            dt: 1e-3,
            reference_dt: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChaosReport {
    pub ns: Vec<usize>,
    pub times: Vec<f64>,
    /// mean_w2[t][n]: average squared W₂ between the cloud and ρ_t.
    pub mean_w2: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
}

impl ChaosReport {
    /// Ratio of the smallest-N to the largest-N distance at each time.
    pub fn reduction(&self) -> Vec<f64> {
        self.mean_w2.iter().map(|row| row[0] / row[row.len() - 1]).collect()
    }

    pub fn nonincreasing(&self) -> bool {
        self.mean_w2.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    (0..times.len()).min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs())).expect("nonempty")
}

/// Squared W₂ between the K1 particle system started from N i.i.d. draws of
/// ρ₀ = θ₀ and the mean-field law ρ_t, averaged over seeds.
pub fn chaos_scaling(target: &GaussianTarget, theta0: &GaussianParams, cfg: &ChaosConfig) -> Result<ChaosReport> {
    let t_end = cfg.times.iter().cloned().fold(0.0, f64::max);
    let reference = integrate(
        FlowKind::SvgdK1,
        theta0,
        target,
        IntegrateOptions::new(cfg.reference_dt, t_end, ((0.01 / cfg.reference_dt).round() as usize).max(1)),
    )?;
    let ref_times = reference.times();
    let rho: Vec<GaussianParams> =
        cfg.times.iter().map(|&t| reference.rows[nearest_index(&ref_times, t)].theta.clone()).collect();
    let record_every = ((0.01 / cfg.dt).round() as usize).max(1);
    let mut mean_w2 = vec![vec![0.0; cfg.ns.len()]; cfg.times.len()];
    let mut std_err = vec![vec![0.0; cfg.ns.len()]; cfg.times.len()];
    for (j, &n) in cfg.ns.iter().enumerate() {
        let per_seed: Vec<Vec<f64>> = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| -> Result<Vec<f64>> {
                let base = cfg.seed.0.wrapping_mul(1_000_003).wrapping_add((n * 100_000 + s) as u64);
                let cloud0 = ParticleCloud::new(theta0.sample_with(n, &mut RngSeed(base).stream(0)))?;
                let fac = linear_factor_ode(
                    KernelKind::SimpleBilinear,
                    &cloud0.theta()?,
                    target,
                    IntegrateOptions::new(cfg.dt, t_end, record_every),
                )?;
                cfg.times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let cloud = fac.reconstruct(&cloud0, nearest_index(&fac.times, t))?;
                        let draw_seed = RngSeed(base.wrapping_add(7_777_777 * (i as u64 + 1)));
                        empirical_w2_gaussian(cloud.points(), &rho[i], draw_seed)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for i in 0..cfg.times.len() {
            let vals: Vec<f64> = per_seed.iter().map(|v| v[i]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len().max(2) - 1) as f64;
            mean_w2[i][j] = m;
            std_err[i][j] = (var / vals.len() as f64).sqrt();
        }
    }
    Ok(ChaosReport { ns: cfg.ns.clone(), times: cfg.times.clone(), mean_w2, std_err })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepsizeCase {
    pub label: String,
    pub eigenvalues: Vec<f64>,
    pub result: DiscreteConvergence,
}

/// Bracket study for one step size: a spectrum inside the contraction
/// bracket, one just beyond 1 + 1/ε and one beyond the repelling fixed point
/// 2/ε + 1.
pub fn stepsize_study(eps: f64, q_eigs: &[f64], steps: usize, seed: RngSeed) -> Result<Vec<StepsizeCase>> {
    let a = crate::particles::step_analysis(eps)?;
    let d = q_eigs.len();
    if d < 3 {
        return Err(Error::InvalidParameter("the bracket study needs d >= 3".into()));
    }
    let fill = |lo: f64, hi: f64| -> Vec<f64> {
        let mut v = vec![1.0; d];
        v[0] = lo;
        v[d - 1] = hi;
        v
    };
    let cases = [
        ("bracket", fill(a.u_eps + 0.01, a.upper - 0.01)),
        ("beyond_safe", fill(1.0, a.safe_upper + 0.5)),
        ("beyond_repelling", fill(1.0, 2.0 / eps + 1.5)),
    ];
    cases
        .into_iter()
        .map(|(label, ratios)| {
            // C₀ = Q^{1/2} diag(ratios) Q^{1/2} in the shared eigenbasis.
            let c_eigs: Vec<f64> = ratios.iter().zip(q_eigs).map(|(r, q)| r * q).collect();
            let (c0, q) = commuting_pair(&c_eigs, q_eigs, seed)?;
            Ok(StepsizeCase { label: label.into(), eigenvalues: ratios, result: run_discrete_convergence(&c0, &q, eps, steps)? })
        })
        .collect()
}

/// Benchmark problems of the comparison experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// b ~ U[0,1]^d, precision eigenvalues geometric in [lam_min, lam_max].
    Gaussian { d: usize, lam_min: f64, lam_max: f64, seed: u64 },
    /// Explicit Gaussian target.
    GaussianExplicit { b: Vec<f64>, q: Vec<Vec<f64>> },
    /// Mixture with density ∝ Σ c_k exp(−(x−μ_k)²/(2σ_k²)).
    Mixture1d { coeffs: Vec<f64>, means: Vec<f64>, vars: Vec<f64> },
    /// Synthetic logistic regression with X ~ N(0, I), labels from ξ*.
    Logistic { n: usize, xi_star: Vec<f64>, seed: u64 },
}

impl ProblemSpec {
    pub fn gaussian_benchmark() -> Self {
        ProblemSpec::Gaussian { d: 10, lam_min: 0.01, lam_max: 1.0, seed: 7 }
    }

    pub fn mixture_benchmark() -> Self {
        ProblemSpec::Mixture1d { coeffs: vec![0.3, 0.7], means: vec![5.0, 10.0], vars: vec![25.0, 4.0] }
    }

    pub fn logistic_benchmark() -> Self {
        ProblemSpec::Logistic { n: 50, xi_star: vec![0.6, -0.4, 0.5, -0.3, 0.35], seed: 11 }
    }

    pub fn build(&self) -> Result<Box<dyn TargetPotential>> {
        Ok(match self {
            ProblemSpec::Gaussian { d, lam_min, lam_max, seed } => {
                Box::new(GaussianTarget::random_geometric(*d, *lam_min, *lam_max, RngSeed(*seed))?)
            }
            ProblemSpec::GaussianExplicit { b, q } => {
                let d = b.len();
                if q.len() != d || q.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch { expected: d, found: q.len() });
                }
                let qm = Mat::from_fn(d, d, |i, j| q[i][j]);
                Box::new(GaussianTarget::new(Vector::from_vec(b.clone()), SpdMatrix::new(qm)?)?)
            }
            ProblemSpec::Mixture1d { coeffs, means, vars } => {
                Box::new(MixtureTarget::from_unnormalized_1d(coeffs, means, vars)?)
            }
            ProblemSpec::Logistic { n, xi_star, seed } => {
                Box::new(LogisticTarget::generate(*n, &Vector::from_vec(xi_star.clone()), RngSeed(*seed)))
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Gaussian { d, .. } => *d,
            ProblemSpec::GaussianExplicit { b, .. } => b.len(),
            ProblemSpec::Mixture1d { .. } => 1,
            ProblemSpec::Logistic { xi_star, .. } => xi_star.len(),
        }
    }

    /// The benchmark whose preset step table applies, if any.
    pub fn preset_problem(&self) -> Option<Problem> {
        match self {
            ProblemSpec::Mixture1d { .. } => Some(Problem::Mixture),
            ProblemSpec::Logistic { .. } => Some(Problem::Logistic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub problem: ProblemSpec,
    /// Common step for every algorithm; the problem's presets when absent.
    #[serde(default)]
    pub step: Option<f64>,
    /// Multiplies every step (after presets are applied).
    #[serde(default = "unit")]
    pub step_scale: f64,
    pub iters: usize,
    /// Particles for the particle framework.
    pub n_particles: usize,
    /// Samples per iteration for the density framework.
    pub n_samples: usize,
    pub density_estimator: Estimator,
    pub particle_estimator: Estimator,
    #[serde(default = "one")]
    pub record_every: usize,
    pub seed: RngSeed,
}

fn unit() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub config: AlgoConfig,
    pub record: TrajectoryRecord,
}

impl SweepConfig {
    pub fn algo_config(&self, name: &str) -> Result<AlgoConfig> {
        let step = match (self.step, self.problem.preset_problem()) {
            (Some(s), _) => s,
            (None, Some(p)) => preset_step(p, name)?,
            (None, None) => return Err(Error::InvalidParameter("no step size and no preset for this problem".into())),
        } * self.step_scale;
        let mut cfg = AlgoConfig::named(name, Estimator::Exact, step, 1, self.iters)?;
        let (est, n) = match cfg.framework {
            Framework::Density => (self.density_estimator, self.n_samples),
            Framework::Particle => (self.particle_estimator, self.n_particles),
        };
        cfg.estimator = est;
        cfg.n = n;
        cfg.seed = self.seed;
        cfg.record_every = self.record_every;
        Ok(cfg)
    }
}

/// All eight algorithms from ρ₀ = N(0, I) on the configured problem.
pub fn sweep(cfg: &SweepConfig, names: &[&str]) -> Result<Vec<SweepRun>> {
    let target = cfg.problem.build()?;
    let theta0 = GaussianParams::standard(cfg.problem.dim());
    let names: Vec<&str> = if names.is_empty() { ALGORITHMS.to_vec() } else { names.to_vec() };
    names
        .par_iter()
        .map(|name| {
            let config = cfg.algo_config(name)?;
            let record = run_algorithm(&config, target.as_ref(), &theta0)?;
            Ok(SweepRun { config, record })
        })
        .collect()
}
