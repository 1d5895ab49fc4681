//! Step-size analysis of the centered discrete update through the scalar map
//! f_ε(x) = (1 + ε(1 − x))²x acting on the eigenvalues of Q⁻¹C_t.

use serde::Serialize;

use super::{discrete_step, ParticleCloud};
use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::linalg::{check_commuting, sym_spectral_norm, SpdMatrix, Vector};

/// Threshold on ‖C_t‖ beyond which a run counts as diverged.
pub const BLOWUP: f64 = 1e8;

pub fn f_eps(x: f64, eps: f64) -> f64 {
    (1.0 + eps * (1.0 - x)).powi(2) * x
}

pub fn f_eps_prime(x: f64, eps: f64) -> f64 {
    (1.0 + eps - eps * x) * (1.0 + eps - 3.0 * eps * x)
}

/// Fixed points {0, 1, 2/ε + 1}; the outer one is repelling.
pub fn f_eps_fixed_points(eps: f64) -> [f64; 3] {
    [0.0, 1.0, 2.0 / eps + 1.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepAnalysis {
    pub eps: f64,
    /// Smaller root of f'_ε = 1 − ε.
    pub u_eps: f64,
    /// Smaller root of f'_ε = 1.
    pub w_eps: f64,
    /// Local maximum of f_ε, 1/3 + 1/(3ε).
    pub upper: f64,
    /// Right end of the interval of guaranteed convergence, 1 + 1/ε.
    pub safe_upper: f64,
}

/// Smaller root of f'_ε(x) = c, i.e. of 3ε²x² − 4ε(1+ε)x + (1+ε)² − c = 0,
/// in cancellation-free form.
fn smaller_root(eps: f64, c: f64) -> f64 {
    let a = 3.0 * eps * eps;
    let b = -4.0 * eps * (1.0 + eps);
    let c0 = (1.0 + eps).powi(2) - c;
    let disc = b * b - 4.0 * a * c0;
    2.0 * c0 / (-b + disc.sqrt())
}

pub fn step_analysis(eps: f64) -> Result<StepAnalysis> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("step size must lie in (0, 0.5), got {eps}")));
    }
    let s = StepAnalysis {
        eps,
        u_eps: smaller_root(eps, 1.0 - eps),
        w_eps: smaller_root(eps, 1.0),
        upper: 1.0 / 3.0 + 1.0 / (3.0 * eps),
        safe_upper: 1.0 + 1.0 / eps,
    };
    assert!(0.0 < s.w_eps && s.w_eps < s.u_eps && s.u_eps < 1.0 && 1.0 < s.upper);
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpectrumRegime {
    /// All eigenvalues of Q⁻¹C₀ in [u_ε, 1/3 + 1/(3ε)]: geometric bound applies.
    Contraction,
    /// All eigenvalues in (0, 1 + 1/ε): convergence without a rate.
    Eventual,
    NoGuarantee,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteConvergence {
    pub analysis: StepAnalysis,
    pub regime: SpectrumRegime,
    pub initial_spectrum: Vec<f64>,
    /// ‖C_t − Q‖ (spectral), t = 0..=T or until divergence.
    pub errors: Vec<f64>,
    /// (1 − ε)^t ‖C₀ − Q‖; `bound_holds` allows a round-off floor of 1e-12‖Q‖.
    pub bounds: Vec<f64>,
    pub bound_holds: bool,
    pub converged: bool,
    pub diverged: bool,
}

impl DiscreteConvergence {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "error", "bound"])?;
        for (t, (e, b)) in self.errors.iter().zip(&self.bounds).enumerate() {
            out.write_record([t.to_string(), e.to_string(), b.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `steps` centered discrete updates from an exact-moment cloud with
/// covariance C₀ toward N(0, Q) and checks the outcome against the regime of
/// the spectrum of Q⁻¹C₀.
pub fn run_discrete_convergence(c0: &SpdMatrix, q: &SpdMatrix, eps: f64, steps: usize) -> Result<DiscreteConvergence> {
    let analysis = step_analysis(eps)?;
    check_commuting(c0.as_mat(), q.as_mat())?;
    let d = q.dim();
    let qis = q.inv_sqrt();
    let spec = SpdMatrix::new(qis.as_mat() * c0.as_mat() * qis.as_mat())?;
    let initial_spectrum: Vec<f64> = spec.eigenvalues().iter().copied().collect();
    let regime = if initial_spectrum.iter().all(|&l| l >= analysis.u_eps && l <= analysis.upper) {
        SpectrumRegime::Contraction
    } else if initial_spectrum.iter().all(|&l| l > 0.0 && l < analysis.safe_upper) {
        SpectrumRegime::Eventual
    } else {
        SpectrumRegime::NoGuarantee
    };
    let q_inv = q.inverse_mat();
    let mut cloud = ParticleCloud::with_moments(&Vector::zeros(d), c0)?;
    let err = |c: &ParticleCloud| sym_spectral_norm(&(c.cov().as_mat() - q.as_mat()));
    let e0 = err(&cloud);
    let mut errors = vec![e0];
    let mut bounds = vec![e0];
    let mut diverged = false;
    for t in 1..=steps {
        let grads = cloud.points() * &q_inv;
        cloud = match discrete_step(&cloud, KernelKind::SimpleBilinear, &grads, eps) {
            Ok(c) => c,
            Err(_) => {
                diverged = true;
                break;
            }
        };
        let e = err(&cloud);
        errors.push(e);
        bounds.push((1.0 - eps).powi(t as i32) * e0);
        if !e.is_finite() || cloud.cov().spectral_norm() > BLOWUP {
            diverged = true;
            break;
        }
    }
    // once the error reaches round-off it stops shrinking while the bound keeps going
    let floor = 1e-12 * q.max_eigenvalue();
    let bound_holds = !diverged && errors.iter().zip(&bounds).all(|(e, b)| *e <= b + floor);
    let converged = !diverged && errors.last().is_some_and(|&e| e < 1e-8);
    Ok(DiscreteConvergence { analysis, regime, initial_spectrum, errors, bounds, bound_holds, converged, diverged })
}
