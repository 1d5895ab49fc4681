//! Discrete density-based and particle-based Gaussian-SVGD, instantiated with
//! the four bilinear kernels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_moments, MomentMethod};
use crate::kernels::KernelKind;
use crate::linalg::{GaussianParams, Mat, RngSeed, SimRng, SpdMatrix};
use crate::meanfield::drift_pair;
use crate::particles::{discrete_step, linearized_gradients, ParticleCloud};
use crate::targets::{Moments, TargetPotential};
use crate::trajectory::{RunStatus, TrajectoryRecord, TrajectoryRow};

/// Threshold on |μ| and ‖Σ‖ beyond which a run counts as diverged.
pub const BLOWUP: f64 = 1e8;

/// ν used by the named K4 algorithms.
pub const DEFAULT_NU: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Density,
    Particle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Hessian,
    FirstOrder,
    /// Gaussian expectations evaluated exactly (closed form or quadrature).
    Exact,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hessian" => Ok(Estimator::Hessian),
            "first_order" | "first-order" => Ok(Estimator::FirstOrder),
            "exact" => Ok(Estimator::Exact),
            _ => Err(Error::Parse(format!("unknown estimator '{s}'"))),
        }
    }
}

/// The eight named algorithms.
pub const ALGORITHMS: [&str; 8] = ["SBGD", "GF", "BWGD", "RGF", "SBPF", "GPF", "BWPF", "RGPF"];

pub fn algorithm_name(framework: Framework, kernel: KernelKind) -> &'static str {
    let i = kernel.index() - 1;
    match framework {
        Framework::Density => ALGORITHMS[i],
        Framework::Particle => ALGORITHMS[4 + i],
    }
}

/// Inverse of [`algorithm_name`]; K4 algorithms get ν = 0.5.
pub fn parse_algorithm(name: &str) -> Result<(Framework, KernelKind)> {
    let up = name.trim().to_ascii_uppercase();
    let i = ALGORITHMS
        .iter()
        .position(|a| *a == up)
        .ok_or_else(|| Error::Parse(format!("unknown algorithm '{name}'")))?;
    let framework = if i < 4 { Framework::Density } else { Framework::Particle };
    let kernel = match i % 4 {
        0 => KernelKind::SimpleBilinear,
        1 => KernelKind::AffineInvariant,
        2 => KernelKind::RescaledAffineInvariant,
        _ => KernelKind::Regularized(DEFAULT_NU),
    };
    Ok((framework, kernel))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Logistic,
    Mixture,
}

/// Largest stable step sizes reported for the two benchmark problems, in the
/// order of [`ALGORITHMS`].
pub fn preset_steps(problem: Problem) -> [f64; 8] {
    match problem {
        Problem::Logistic => [0.02, 0.1, 2.0, 0.8, 0.02, 0.2, 4.0, 4.0],
        Problem::Mixture => [0.02, 0.1, 1.0, 1.0, 0.2, 0.8, 8.0, 8.0],
    }
}

pub fn preset_step(problem: Problem, name: &str) -> Result<f64> {
    let up = name.trim().to_ascii_uppercase();
    ALGORITHMS
        .iter()
        .position(|a| *a == up)
        .map(|i| preset_steps(problem)[i])
        .ok_or_else(|| Error::Parse(format!("unknown algorithm '{name}'")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub framework: Framework,
    pub kernel: KernelKind,
    pub estimator: Estimator,
    /// ε₂ for the density framework, ε for the particle framework.
    pub step: f64,
    /// ε₁ for the mean update; defaults to `step`.
    #[serde(default)]
    pub step_mu: Option<f64>,
    /// Samples per iteration (density) or particles (particle).
    pub n: usize,
    pub iters: usize,
    pub seed: RngSeed,
    /// Particle framework: estimate moments from this many fresh draws of
    /// N(m, C) instead of the particles themselves.
    #[serde(default)]
    pub resample: Option<usize>,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl AlgoConfig {
    pub fn new(framework: Framework, kernel: KernelKind, estimator: Estimator, step: f64, n: usize, iters: usize) -> Self {
        AlgoConfig {
            framework,
            kernel,
            estimator,
            step,
            step_mu: None,
            n,
            iters,
            seed: RngSeed(0),
            resample: None,
            record_every: 1,
        }
    }

    pub fn named(name: &str, estimator: Estimator, step: f64, n: usize, iters: usize) -> Result<Self> {
        let (f, k) = parse_algorithm(name)?;
        Ok(Self::new(f, k, estimator, step, n, iters))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = RngSeed(seed);
        self
    }

    pub fn name(&self) -> &'static str {
        algorithm_name(self.framework, self.kernel)
    }

    pub fn step_mu(&self) -> f64 {
        self.step_mu.unwrap_or(self.step)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.step >= 0.0) || !(self.step_mu() >= 0.0) {
            return Err(Error::InvalidParameter("step sizes must be nonnegative".into()));
        }
        if self.n == 0 || self.record_every == 0 || self.resample == Some(0) {
            return Err(Error::InvalidParameter("sample counts and record interval must be positive".into()));
        }
        Ok(())
    }
}

impl fmt::Display for AlgoConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}, {:?}, step {}, n {})", self.name(), self.kernel, self.estimator, self.step, self.n)
    }
}

/// Loop state of either framework.
#[derive(Clone, Debug)]
pub enum AlgoState {
    Density(GaussianParams),
    Particle(ParticleCloud),
}

impl AlgoState {
    pub fn theta(&self) -> Result<GaussianParams> {
        match self {
            AlgoState::Density(t) => Ok(t.clone()),
            AlgoState::Particle(c) => c.theta(),
        }
    }
}

fn moments_at(
    theta: &GaussianParams,
    samples: Option<&Mat>,
    target: &dyn TargetPotential,
    est: Estimator,
) -> Result<Moments> {
    let method = match est {
        Estimator::Exact => return target.gaussian_moments(theta),
        Estimator::Hessian => MomentMethod::Hessian,
        Estimator::FirstOrder => MomentMethod::FirstOrder,
    };
    let samples = samples.expect("sampled estimators need samples");
    Ok(estimate_moments(samples, theta, target, method)?.moments())
}

/// One density-framework iteration: estimate (m̂, Γ̂) at θ, then
/// μ ← μ + ε₁F and Σ ← MᵀΣM with M = I + ε₂G.
pub fn density_step(
    theta: &GaussianParams,
    target: &dyn TargetPotential,
    cfg: &AlgoConfig,
    iter: usize,
    rng: &mut SimRng,
) -> Result<GaussianParams> {
    let samples = match cfg.estimator {
        Estimator::Exact => None,
        _ => Some(theta.sample_with(cfg.n, rng)),
    };
    let moments = moments_at(theta, samples.as_ref(), target, cfg.estimator)?;
    let (f, g) = drift_pair(theta, &moments, cfg.kernel)?;
    let d = theta.dim();
    let mu = &theta.mean + f * cfg.step_mu();
    let m = Mat::identity(d, d) + g * cfg.step;
    let sigma = m.transpose() * theta.cov.as_mat() * &m;
    let cov = SpdMatrix::new(sigma).map_err(|_| Error::SingularUpdate { iter })?;
    GaussianParams::new(mu, cov)
}

/// One particle-framework iteration with the linearized gradient
/// ∇V̂(x) = Γ̂(x − m) + m̂ at the cloud moments.
pub fn particle_step(
    cloud: &ParticleCloud,
    target: &dyn TargetPotential,
    cfg: &AlgoConfig,
    rng: &mut SimRng,
) -> Result<ParticleCloud> {
    let theta = cloud.theta()?;
    let moments = match (cfg.resample, cfg.estimator) {
        (_, Estimator::Exact) => target.gaussian_moments(&theta)?,
        (Some(m), _) => moments_at(&theta, Some(&theta.sample_with(m, rng)), target, cfg.estimator)?,
        (None, _) => moments_at(&theta, Some(cloud.points()), target, cfg.estimator)?,
    };
    let grads = linearized_gradients(cloud.points(), cloud.mean(), &moments);
    discrete_step(cloud, cfg.kernel, &grads, cfg.step)
}

fn check_blowup(theta: &GaussianParams) -> Option<String> {
    let mu = theta.mean.amax();
    let s = theta.cov.max_eigenvalue();
    if !(mu <= BLOWUP) || !(s <= BLOWUP) {
        Some(format!("state blew up (|mu|={mu:.3e}, ||Sigma||={s:.3e})"))
    } else {
        None
    }
}

/// Runs `cfg.iters` iterations from `initial` (particles are drawn from it).
/// Numerical failures end the run with status `Diverged`; the rows recorded
/// up to that point are kept. Time is iteration × step.
pub fn run_algorithm(cfg: &AlgoConfig, target: &dyn TargetPotential, initial: &GaussianParams) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if target.dim() != initial.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), found: initial.dim() });
    }
    let mut rng = cfg.seed.stream(1);
    let mut state = match cfg.framework {
        Framework::Density => AlgoState::Density(initial.clone()),
        Framework::Particle => {
            if cfg.n <= initial.dim() {
                return Err(Error::InvalidParameter(format!(
                    "need more than d = {} particles for a nondegenerate cloud",
                    initial.dim()
                )));
            }
            AlgoState::Particle(ParticleCloud::new(initial.sample_with(cfg.n, &mut cfg.seed.stream(0)))?)
        }
    };
    let mut rec = TrajectoryRecord::new();
    let first = state.theta()?;
    rec.rows.push(TrajectoryRow::diagnose(0.0, 0, &first, target));
    for it in 1..=cfg.iters {
        let next = match &state {
            AlgoState::Density(th) => density_step(th, target, cfg, it, &mut rng).map(AlgoState::Density),
            AlgoState::Particle(c) => particle_step(c, target, cfg, &mut rng).map(AlgoState::Particle),
        };
        let theta = match next.and_then(|s| {
            let th = s.theta()?;
            state = s;
            Ok(th)
        }) {
            Ok(th) => th,
            Err(e) => {
                rec.status = RunStatus::Diverged { iter: it, reason: e.to_string() };
                break;
            }
        };
        if let Some(reason) = check_blowup(&theta) {
            rec.status = RunStatus::Diverged { iter: it, reason };
            break;
        }
        if it % cfg.record_every == 0 || it == cfg.iters {
            rec.rows.push(TrajectoryRow::diagnose(it as f64 * cfg.step, it, &theta, target));
        }
    }
    Ok(rec)
}

/// Runs `cfg.iters` particle iterations from a given cloud and returns the
/// final cloud.
pub fn run_particles(cfg: &AlgoConfig, target: &dyn TargetPotential, cloud0: ParticleCloud) -> Result<ParticleCloud> {
    cfg.validate()?;
    let mut rng = cfg.seed.stream(1);
    let mut cloud = cloud0;
    for _ in 0..cfg.iters {
        cloud = particle_step(&cloud, target, cfg, &mut rng)?;
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::targets::GaussianTarget;
    use approx::assert_relative_eq;

    #[test]
    fn names_round_trip() {
        for name in ALGORITHMS {
            let (f, k) = parse_algorithm(name).unwrap();
            assert_eq!(algorithm_name(f, k), name);
        }
        assert_eq!(parse_algorithm("bwpf").unwrap(), (Framework::Particle, KernelKind::RescaledAffineInvariant));
        assert!(parse_algorithm("XYZ").is_err());
        assert_eq!(preset_step(Problem::Logistic, "BWGD").unwrap(), 2.0);
        assert_eq!(preset_step(Problem::Mixture, "RGPF").unwrap(), 8.0);
    }

    #[test]
    fn density_fixed_point() {
        let t = GaussianTarget::new(Vector::from_vec(vec![1.0, -1.0]), SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap())
            .unwrap();
        for name in ["SBGD", "GF", "BWGD", "RGF"] {
            let cfg = AlgoConfig::named(name, Estimator::Exact, 0.1, 1, 1).unwrap();
            let next = density_step(&t.params(), &t, &cfg, 1, &mut RngSeed(0).rng()).unwrap();
            assert_relative_eq!(next.mean, t.b.clone(), epsilon = 1e-14);
            assert_relative_eq!(next.cov.as_mat(), t.q.as_mat(), epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_iterations_record_initial_state() {
        let t = GaussianTarget::centered(SpdMatrix::identity(2));
        let cfg = AlgoConfig::named("GPF", Estimator::Exact, 0.1, 10, 0).unwrap();
        let rec = run_algorithm(&cfg, &t, &GaussianParams::standard(2)).unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.status, RunStatus::Completed);
    }
}
