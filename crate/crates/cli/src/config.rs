use anyhow::{bail, Context, Result};
use gsvgd::algorithms::{parse_algorithm, preset_step, AlgoConfig, Estimator, Framework};
use gsvgd::experiments::{ChaosConfig, ProblemSpec, SweepConfig};
use gsvgd::kernels::KernelKind;
use gsvgd::linalg::{GaussianParams, Mat, RngSeed, Vector};
use gsvgd::meanfield::FlowKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Optional explicit starting Gaussian; N(0, I) when absent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl InitSpec {
    pub fn build(&self) -> Result<GaussianParams> {
        let d = self.mean.len();
        if self.cov.len() != d || self.cov.iter().any(|r| r.len() != d) {
            bail!("init.cov must be {d}x{d}");
        }
        let cov = Mat::from_fn(d, d, |i, j| self.cov[i][j]);
        Ok(GaussianParams::from_mats(Vector::from_vec(self.mean.clone()), cov)?)
    }
}

fn start(init: &Option<InitSpec>, problem: &ProblemSpec) -> Result<GaussianParams> {
    let theta = match init {
        Some(i) => i.build()?,
        None => GaussianParams::standard(problem.dim()),
    };
    if theta.dim() != problem.dim() {
        bail!("initial dimension {} does not match the problem ({})", theta.dim(), problem.dim());
    }
    Ok(theta)
}

/// Algorithm section of a `run` config. Either `name` (one of the eight
/// algorithms) or both `framework` and `kernel` must be given.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgoSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framework: Option<Framework>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
    pub estimator: Estimator,
    /// Preset for the benchmark problem when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_mu: Option<f64>,
    pub n: usize,
    pub iters: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample: Option<usize>,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunFile {
    /// Also write μ and Σ to the trajectory CSV.
    #[serde(default)]
    pub with_theta: bool,
    pub problem: ProblemSpec,
    pub algorithm: AlgoSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
}

impl Default for RunFile {
    fn default() -> Self {
        RunFile {
            with_theta: false,
            problem: ProblemSpec::logistic_benchmark(),
            algorithm: AlgoSection {
                name: Some("GPF".into()),
                framework: None,
                kernel: None,
                estimator: Estimator::Hessian,
                step: None,
                step_mu: None,
                n: 100,
                iters: 300,
                seed: 1,
                resample: None,
                record_every: 1,
            },
            init: None,
        }
    }
}

impl RunFile {
    pub fn algo_config(&self) -> Result<AlgoConfig> {
        let a = &self.algorithm;
        let (framework, kernel) = match (&a.name, a.framework, a.kernel) {
            (Some(name), None, None) => parse_algorithm(name)?,
            (None, Some(f), Some(k)) => (f, k),
            _ => bail!("give either algorithm.name or both algorithm.framework and algorithm.kernel"),
        };
        let mut cfg = AlgoConfig::new(framework, kernel, a.estimator, 0.0, a.n, a.iters).with_seed(a.seed);
        cfg.step = match (a.step, self.problem.preset_problem()) {
            (Some(s), _) => s,
            (None, Some(p)) => preset_step(p, &cfg.name())
                .with_context(|| format!("no preset step for {}; set algorithm.step", cfg.name()))?,
            (None, None) => bail!("algorithm.step is required for this problem"),
        };
        cfg.step_mu = a.step_mu;
        cfg.resample = a.resample;
        cfg.record_every = a.record_every;
        Ok(cfg)
    }

    pub fn initial(&self) -> Result<GaussianParams> {
        start(&self.init, &self.problem)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepFile {
    /// Subset of the eight algorithms; all of them when empty.
    #[serde(default)]
    pub algorithms: Vec<String>,
    #[serde(default)]
    pub with_theta: bool,
    pub sweep: SweepConfig,
}

impl Default for SweepFile {
    fn default() -> Self {
        SweepFile {
            algorithms: Vec::new(),
            with_theta: false,
            sweep: SweepConfig {
                problem: ProblemSpec::logistic_benchmark(),
                step: None,
                step_scale: 1.0,
                iters: 300,
                n_particles: 100,
                n_samples: 100,
                density_estimator: Estimator::Hessian,
                particle_estimator: Estimator::Hessian,
                record_every: 1,
                seed: RngSeed(1),
            },
        }
    }
}

/// Settings of the K1 rate check on a (possibly non-commuting) Gaussian.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct K1Section {
    pub problem: ProblemSpec,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
}

impl K1Section {
    pub fn initial(&self) -> Result<GaussianParams> {
        start(&self.init, &self.problem)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatesFile {
    /// Eigenvalues of Σ₀ and Q in a shared random eigenbasis.
    pub sigma0_eigs: Vec<f64>,
    pub q_eigs: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
    /// Fit window [t₀, t₁] for the covariance error.
    pub window: [f64; 2],
    pub flows: Vec<FlowKind>,
    /// Times at which the Riccati flow is compared with its closed form.
    #[serde(default)]
    pub riccati_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<K1Section>,
}

impl Default for RatesFile {
    fn default() -> Self {
        RatesFile {
            sigma0_eigs: vec![1.0, 1.5, 0.8],
            q_eigs: vec![4.0, 2.0, 0.5],
            seed: 2,
            dt: 1e-3,
            window: [2.0, 5.0],
            flows: vec![
                FlowKind::Wgf,
                FlowKind::SvgdK1,
                FlowKind::SvgdK2,
                FlowKind::Rsvgd(0.25),
                FlowKind::Rsvgd(0.5),
                FlowKind::Rsvgd(0.75),
            ],
            riccati_times: vec![0.5, 1.0, 2.0, 5.0],
            k1: Some(K1Section {
                problem: ProblemSpec::GaussianExplicit {
                    b: vec![0.5, -0.3, 0.2],
                    q: vec![vec![2.0, 0.6, 0.0], vec![0.6, 1.0, 0.3], vec![0.0, 0.3, 0.5]],
                },
                dt: 1e-2,
                t_end: 80.0,
                init: None,
            }),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaosFile {
    /// Must be a Gaussian problem.
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    pub chaos: ChaosConfig,
}

impl Default for ChaosFile {
    fn default() -> Self {
        ChaosFile {
            problem: ProblemSpec::GaussianExplicit {
                b: vec![0.5, -0.3, 0.2],
                q: vec![vec![2.0, 0.6, 0.0], vec![0.6, 1.0, 0.3], vec![0.0, 0.3, 0.5]],
            },
            init: None,
            chaos: ChaosConfig::default(),
        }
    }
}

impl ChaosFile {
    pub fn initial(&self) -> Result<GaussianParams> {
        start(&self.init, &self.problem)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepsizeFile {
    pub eps: f64,
    pub q_eigs: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
}

impl Default for StepsizeFile {
    fn default() -> Self {
        StepsizeFile { eps: 0.1, q_eigs: vec![1.0, 2.0, 0.5], steps: 200, seed: 6 }
    }
}
