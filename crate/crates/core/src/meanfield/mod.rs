//! Mean-field dynamics of (μ, Σ) for Gaussian-SVGD and related flows.

pub mod closed_form;
pub mod ode;
pub mod rates;

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

pub use closed_form::{closed_form_commuting, closed_form_rank_one, closed_form_rsvgd_eig, rsvgd_relation_residual};
pub use rates::{compute_gamma_general, compute_gamma_k1, theoretical_rate, RateReport};

use crate::error::{Error, Result};
use crate::geometry::TangentElement;
use crate::kernels::KernelKind;
use crate::linalg::{GaussianParams, Mat, SpdMatrix, SymMatrix, Vector};
use crate::targets::{GaussianTarget, Moments, TargetPotential};
use crate::trajectory::{TrajectoryRecord, TrajectoryRow};
use ode::{integrate_rk4, MeanCov, SymPair};

/// Damping schedule of the accelerated flows.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum AlphaSchedule {
    Constant(f64),
    /// α_t = c / (t + t0)
    Nesterov { c: f64, t0: f64 },
}

impl AlphaSchedule {
    pub fn alpha(&self, t: f64) -> f64 {
        match *self {
            AlphaSchedule::Constant(a) => a,
            AlphaSchedule::Nesterov { c, t0 } => c / (t + t0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AlphaSchedule::Constant(a) => a >= 0.0,
            AlphaSchedule::Nesterov { c, t0 } => c >= 0.0 && t0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid damping schedule {self:?}")))
        }
    }
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        AlphaSchedule::Nesterov { c: 3.0, t0: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FlowKind {
    Wgf,
    SvgdK1,
    SvgdK2,
    Rsvgd(f64),
    /// Bures-Wasserstein gradient flow; identical to `Wgf` on the Gaussian family.
    Bw,
    Saigf(AlphaSchedule),
    Waigf(AlphaSchedule),
    General(KernelKind),
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sched = |s: &AlphaSchedule| match *s {
            AlphaSchedule::Constant(a) => format!(":const={a}"),
            AlphaSchedule::Nesterov { c, t0 } if c == 3.0 && t0 == 1.0 => String::new(),
            AlphaSchedule::Nesterov { c, t0 } => format!(":c={c},t0={t0}"),
        };
        match self {
            FlowKind::Wgf => write!(f, "wgf"),
            FlowKind::SvgdK1 => write!(f, "svgd_k1"),
            FlowKind::SvgdK2 => write!(f, "svgd_k2"),
            FlowKind::Rsvgd(nu) => write!(f, "rsvgd:{nu}"),
            FlowKind::Bw => write!(f, "bw"),
            FlowKind::Saigf(s) => write!(f, "saigf{}", sched(s)),
            FlowKind::Waigf(s) => write!(f, "waigf{}", sched(s)),
            FlowKind::General(k) => write!(f, "general:{k}"),
        }
    }
}

fn parse_schedule(rest: Option<&str>) -> Result<AlphaSchedule> {
    let Some(rest) = rest else { return Ok(AlphaSchedule::default()) };
    let bad = || Error::Parse(format!("bad damping schedule '{rest}'"));
    if let Some(a) = rest.strip_prefix("const=") {
        return Ok(AlphaSchedule::Constant(a.parse().map_err(|_| bad())?));
    }
    let mut c = 3.0;
    let mut t0 = 1.0;
    for part in rest.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let v: f64 = v.parse().map_err(|_| bad())?;
        match k {
            "c" => c = v,
            "t0" => t0 = v,
            _ => return Err(bad()),
        }
    }
    let s = AlphaSchedule::Nesterov { c, t0 };
    s.validate()?;
    Ok(s)
}

impl FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s.as_str(), None),
        };
        match (head, rest) {
            ("wgf", None) => Ok(FlowKind::Wgf),
            ("svgd_k1" | "svgd", None) => Ok(FlowKind::SvgdK1),
            ("svgd_k2", None) => Ok(FlowKind::SvgdK2),
            ("bw", None) => Ok(FlowKind::Bw),
            ("rsvgd", Some(r)) => {
                let v = r.strip_prefix("nu=").or_else(|| r.strip_prefix("ν=")).unwrap_or(r);
                let nu: f64 = v.parse().map_err(|_| Error::Parse(format!("bad rsvgd parameter in '{s}'")))?;
                KernelKind::regularized(nu)?;
                Ok(FlowKind::Rsvgd(nu))
            }
            ("saigf", r) => Ok(FlowKind::Saigf(parse_schedule(r)?)),
            ("waigf", r) => Ok(FlowKind::Waigf(parse_schedule(r)?)),
            ("general", Some(k)) => Ok(FlowKind::General(k.parse()?)),
            _ => Err(Error::Parse(format!("unknown flow '{s}'"))),
        }
    }
}

impl TryFrom<String> for FlowKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FlowKind> for String {
    fn from(f: FlowKind) -> String {
        f.to_string()
    }
}

/// State (Σ, S) of the accelerated flows on centered Gaussians. S starts at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct AigfState {
    pub theta: GaussianParams,
    pub s: SymMatrix,
}

impl AigfState {
    pub fn new(sigma: SpdMatrix) -> Self {
        let d = sigma.dim();
        AigfState { theta: GaussianParams { mean: Vector::zeros(d), cov: sigma }, s: SymMatrix::zeros(d) }
    }
}

/// μ̇ = −Q⁻¹(μ−b), Σ̇ = 2I − ΣQ⁻¹ − Q⁻¹Σ.
pub fn rhs_wgf(theta: &GaussianParams, target: &GaussianTarget) -> TangentElement {
    let qi = target.q_inv();
    let s = theta.cov.as_mat();
    let d = theta.dim();
    let dmu = -(qi * (&theta.mean - &target.b));
    let ds = Mat::identity(d, d) * 2.0 - s * qi - qi * s;
    TangentElement::from_raw(dmu, &ds)
}

/// SVGD with K1 on a Gaussian target:
/// μ̇ = (I − Q⁻¹Σ)μ − (1+μᵀμ)Q⁻¹(μ−b),
/// Σ̇ = 2Σ − Σ(Σ + μ(μ−b)ᵀ)Q⁻¹ − Q⁻¹(Σ + (μ−b)μᵀ)Σ.
pub fn rhs_svgd_k1(theta: &GaussianParams, target: &GaussianTarget) -> TangentElement {
    let qi = target.q_inv();
    let s = theta.cov.as_mat();
    let mu = &theta.mean;
    let d = theta.dim();
    let r = mu - &target.b;
    let dmu = (Mat::identity(d, d) - qi * s) * mu - qi * &r * (1.0 + mu.dot(mu));
    let ds = s * 2.0 - s * (s + mu * r.transpose()) * qi - qi * (s + &r * mu.transpose()) * s;
    TangentElement::from_raw(dmu, &ds)
}

/// Σ̇ = 2Σ − Σ²Q⁻¹ − Q⁻¹Σ².
pub fn rhs_svgd_centered(sigma: &SpdMatrix, q: &SpdMatrix) -> SymMatrix {
    let qi = q.inverse_mat();
    let s = sigma.as_mat();
    let s2 = s * s;
    SymMatrix::symmetrized(&(s * 2.0 - &s2 * &qi - &qi * &s2))
}

/// Σ̇ = 2R⁻¹Σ − R⁻¹Σ²Q⁻¹ − Q⁻¹R⁻¹Σ² with R = (1−ν)Σ + νI.
pub fn rhs_rsvgd(sigma: &SpdMatrix, q: &SpdMatrix, nu: f64) -> Result<SymMatrix> {
    KernelKind::regularized(nu)?;
    let qi = q.inverse_mat();
    let ris = sigma.map_spectrum(|v| v / ((1.0 - nu) * v + nu))?;
    let ris2 = sigma.map_spectrum(|v| v * v / ((1.0 - nu) * v + nu))?;
    let (a, b) = (ris.as_mat(), ris2.as_mat());
    Ok(SymMatrix::symmetrized(&(a * 2.0 - b * &qi - &qi * b)))
}

/// Accelerated Stein flow:
/// Σ̇ = 2(SΣ² + Σ²S), Ṡ = −αS − 2(S²Σ + ΣS²) + ½(Σ⁻¹ − Q⁻¹).
pub fn rhs_saigf(state: &AigfState, q: &SpdMatrix, alpha: f64) -> (SymMatrix, SymMatrix) {
    let s = state.s.as_mat();
    let sig = state.theta.cov.as_mat();
    let sig2 = sig * sig;
    let s2 = s * s;
    let dsig = (s * &sig2 + &sig2 * s) * 2.0;
    let ds = -s * alpha - (&s2 * sig + sig * &s2) * 2.0 + (state.theta.cov.inverse_mat() - q.inverse_mat()) * 0.5;
    (SymMatrix::symmetrized(&dsig), SymMatrix::symmetrized(&ds))
}

/// Accelerated Wasserstein flow:
/// Σ̇ = 2(SΣ + ΣS), Ṡ = −αS − 2S² + ½(Σ⁻¹ − Q⁻¹).
pub fn rhs_waigf(state: &AigfState, q: &SpdMatrix, alpha: f64) -> (SymMatrix, SymMatrix) {
    let s = state.s.as_mat();
    let sig = state.theta.cov.as_mat();
    let dsig = (s * sig + sig * s) * 2.0;
    let ds = -s * alpha - s * s * 2.0 + (state.theta.cov.inverse_mat() - q.inverse_mat()) * 0.5;
    (SymMatrix::symmetrized(&dsig), SymMatrix::symmetrized(&ds))
}

/// H = 2tr(Σ²S²) + KL(N(0,Σ) ‖ N(0,Q)).
pub fn hamiltonian_saigf(state: &AigfState, q: &SpdMatrix) -> f64 {
    let s = state.s.as_mat();
    let sig = state.theta.cov.as_mat();
    2.0 * (sig * sig * s * s).trace() + centered_kl(&state.theta.cov, q)
}

/// H = 2tr(ΣS²) + KL(N(0,Σ) ‖ N(0,Q)).
pub fn hamiltonian_waigf(state: &AigfState, q: &SpdMatrix) -> f64 {
    let s = state.s.as_mat();
    2.0 * (state.theta.cov.as_mat() * s * s).trace() + centered_kl(&state.theta.cov, q)
}

fn centered_kl(sigma: &SpdMatrix, q: &SpdMatrix) -> f64 {
    let d = sigma.dim() as f64;
    0.5 * ((q.inverse_mat() * sigma.as_mat()).trace() - sigma.logdet() + q.logdet() - d)
}

/// Drift of the Gaussian-SVGD mean field for a general target, given
/// m = E[∇V] and Γ = E[∇²V]:
/// - K1: μ̇ = (I−ΓΣ)μ − (1+μᵀμ)m, Σ̇ = 2Σ − Σ(ΣΓ+μmᵀ) − (ΓΣ+mμᵀ)Σ
/// - K2: μ̇ = −m, Σ̇ = 2Σ − Σ²Γ − ΓΣ²
/// - K3: μ̇ = −m, Σ̇ = 2I − ΣΓ − ΓΣ
/// - K4: μ̇ = −m, Σ̇ = ΣG + GᵀΣ with G = R⁻¹(I − ΣΓ), R = (1−ν)Σ + νI
pub fn rhs_general(theta: &GaussianParams, moments: &Moments, kernel: KernelKind) -> Result<TangentElement> {
    kernel.validate()?;
    let (f, g) = drift_pair(theta, moments, kernel)?;
    let s = theta.cov.as_mat();
    Ok(TangentElement::from_raw(f, &(s * &g + g.transpose() * s)))
}

/// The pair (F, G) with μ̇ = F and Σ̇ = ΣG + GᵀΣ.
pub fn drift_pair(theta: &GaussianParams, moments: &Moments, kernel: KernelKind) -> Result<(Vector, Mat)> {
    let d = theta.dim();
    if moments.m.len() != d || moments.gamma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: moments.m.len() });
    }
    let s = theta.cov.as_mat();
    let mu = &theta.mean;
    let m = &moments.m;
    let gam = moments.gamma.as_mat();
    let id = Mat::identity(d, d);
    Ok(match kernel {
        KernelKind::SimpleBilinear => {
            let f = (&id - gam * s) * mu - m * (1.0 + mu.dot(mu));
            let g = &id - s * gam - mu * m.transpose();
            (f, g)
        }
        KernelKind::AffineInvariant => (-m, &id - s * gam),
        KernelKind::RescaledAffineInvariant => (-m, theta.cov.inverse_mat() - gam),
        KernelKind::Regularized(nu) => {
            let r_inv = theta.cov.map_spectrum(|v| 1.0 / ((1.0 - nu) * v + nu))?;
            (-m, r_inv.as_mat() * (&id - s * gam))
        }
    })
}

fn require_gaussian(target: &dyn TargetPotential) -> Result<&GaussianTarget> {
    target.as_gaussian().ok_or_else(|| Error::Unsupported("this flow needs a Gaussian target".into()))
}

/// Right-hand side of `flow` at θ.
pub fn flow_rhs(flow: FlowKind, theta: &GaussianParams, target: &dyn TargetPotential) -> Result<TangentElement> {
    match flow {
        FlowKind::Wgf | FlowKind::Bw => Ok(rhs_wgf(theta, require_gaussian(target)?)),
        FlowKind::SvgdK1 => Ok(rhs_svgd_k1(theta, require_gaussian(target)?)),
        FlowKind::SvgdK2 => {
            let g = require_gaussian(target)?;
            rhs_general(theta, &crate::targets::exact_gaussian_moments(theta, g), KernelKind::AffineInvariant)
        }
        FlowKind::Rsvgd(nu) => {
            let g = require_gaussian(target)?;
            Ok(TangentElement { dmu: Vector::zeros(theta.dim()), dsigma: rhs_rsvgd(&theta.cov, &g.q, nu)? })
        }
        FlowKind::General(k) => rhs_general(theta, &target.gaussian_moments(theta)?, k),
        FlowKind::Saigf(_) | FlowKind::Waigf(_) => {
            Err(Error::Unsupported("accelerated flows carry a second state; use integrate".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_end: f64, record_every: usize) -> Self {
        IntegrateOptions { dt, t_end, record_every }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) || self.record_every == 0 {
            return Err(Error::InvalidParameter(format!("bad integration options {self:?}")));
        }
        Ok(())
    }
}

fn to_params(y: &MeanCov, step: usize) -> Result<GaussianParams> {
    if y.mu.iter().chain(y.sigma.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SpdLost { step, source: Box::new(Error::NonFinite("flow state")) });
    }
    let cov = SpdMatrix::new(y.sigma.clone()).map_err(|e| Error::SpdLost { step, source: Box::new(e) })?;
    Ok(GaussianParams { mean: y.mu.clone(), cov })
}

/// RK4 integration of a mean-field flow from θ₀ over [0, t_end].
/// Σ is symmetrized after every stage and checked for positive
/// definiteness after every step.
pub fn integrate(
    flow: FlowKind,
    theta0: &GaussianParams,
    target: &dyn TargetPotential,
    opts: IntegrateOptions,
) -> Result<TrajectoryRecord> {
    opts.validate()?;
    if target.dim() != theta0.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), found: theta0.dim() });
    }
    match flow {
        FlowKind::Saigf(sched) | FlowKind::Waigf(sched) => {
            return integrate_aigf(flow, theta0, require_gaussian(target)?, sched, opts);
        }
        FlowKind::Rsvgd(_) => {
            let g = require_gaussian(target)?;
            if !g.is_centered() || theta0.mean.norm() > 0.0 {
                return Err(Error::NotCentered { norm: theta0.mean.norm().max(g.b.norm()) });
            }
        }
        _ => {}
    }
    let mut rec = TrajectoryRecord::new();
    let y0 = MeanCov { mu: theta0.mean.clone(), sigma: theta0.cov.as_mat().clone() };
    let step_idx = Cell::new(0usize);
    integrate_rk4(
        |_, y: &MeanCov| {
            let theta = to_params(y, step_idx.get())?;
            let r = flow_rhs(flow, &theta, target)?;
            Ok(MeanCov { mu: r.dmu, sigma: r.dsigma.into_mat() })
        },
        y0,
        opts.dt,
        opts.t_end,
        |k, t, y, last| {
            step_idx.set(k + 1);
            let theta = to_params(y, k)?;
            if k % opts.record_every == 0 || last {
                rec.rows.push(TrajectoryRow::diagnose(t, k, &theta, target));
            }
            Ok(())
        },
    )?;
    Ok(rec)
}

fn integrate_aigf(
    flow: FlowKind,
    theta0: &GaussianParams,
    target: &GaussianTarget,
    sched: AlphaSchedule,
    opts: IntegrateOptions,
) -> Result<TrajectoryRecord> {
    sched.validate()?;
    if !target.is_centered() || theta0.mean.norm() > 0.0 {
        return Err(Error::NotCentered { norm: theta0.mean.norm().max(target.b.norm()) });
    }
    let stein = matches!(flow, FlowKind::Saigf(_));
    let q = target.q.clone();
    let d = theta0.dim();
    let to_state = |y: &SymPair, step: usize| -> Result<AigfState> {
        let theta = to_params(&MeanCov { mu: Vector::zeros(d), sigma: y.a.clone() }, step)?;
        Ok(AigfState { theta, s: SymMatrix::symmetrized(&y.b) })
    };
    let mut rec = TrajectoryRecord::new();
    let step_idx = Cell::new(0usize);
    integrate_rk4(
        |t, y: &SymPair| {
            let st = to_state(y, step_idx.get())?;
            let a = sched.alpha(t);
            let (dsig, ds) = if stein { rhs_saigf(&st, &q, a) } else { rhs_waigf(&st, &q, a) };
            Ok(SymPair { a: dsig.into_mat(), b: ds.into_mat() })
        },
        SymPair { a: theta0.cov.as_mat().clone(), b: Mat::zeros(d, d) },
        opts.dt,
        opts.t_end,
        |k, t, y, last| {
            step_idx.set(k + 1);
            let st = to_state(y, k)?;
            if k % opts.record_every == 0 || last {
                let mut row = TrajectoryRow::diagnose(t, k, &st.theta, target);
                row.hamiltonian = if stein { hamiltonian_saigf(&st, &q) } else { hamiltonian_waigf(&st, &q) };
                rec.rows.push(row);
            }
            Ok(())
        },
    )?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flow_names_round_trip() {
        for s in ["wgf", "svgd_k1", "svgd_k2", "rsvgd:0.5", "bw", "saigf", "waigf:const=0.5", "general:k4:nu=0.5", "general:k1"] {
            let f: FlowKind = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!("saigf:c=2,t0=0.5".parse::<FlowKind>().unwrap(), FlowKind::Saigf(AlphaSchedule::Nesterov { c: 2.0, t0: 0.5 }));
        assert!("rsvgd:2".parse::<FlowKind>().is_err());
        assert!("foo".parse::<FlowKind>().is_err());
    }

    #[test]
    fn simple_substitutions() {
        let q = SpdMatrix::identity(2);
        let two = SpdMatrix::scaled_identity(2, 2.0).unwrap();
        assert_relative_eq!(rhs_svgd_centered(&two, &q).as_mat(), &(Mat::identity(2, 2) * -4.0), epsilon = 1e-14);
        assert_eq!(rhs_svgd_centered(&q, &q).frobenius(), 0.0);
        let t = GaussianTarget::centered(q.clone());
        let theta = GaussianParams::new(Vector::zeros(2), two).unwrap();
        assert_relative_eq!(rhs_wgf(&theta, &t).dsigma.as_mat(), &(Mat::identity(2, 2) * -2.0), epsilon = 1e-14);
    }

    #[test]
    fn saigf_equilibrium_and_rest() {
        let q = SpdMatrix::new(Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let (a, b) = rhs_saigf(&AigfState::new(q.clone()), &q, 0.7);
        assert!(a.frobenius() < 1e-14 && b.frobenius() < 1e-14);
        let st = AigfState::new(SpdMatrix::identity(2));
        let (a, b) = rhs_saigf(&st, &q, 0.7);
        assert_eq!(a.frobenius(), 0.0);
        assert_relative_eq!(b.as_mat(), &((Mat::identity(2, 2) - q.inverse_mat()) * 0.5), epsilon = 1e-14);
    }

    #[test]
    fn zero_horizon_records_initial_state() {
        let t = GaussianTarget::centered(SpdMatrix::identity(2));
        let theta = GaussianParams::standard(2);
        let rec = integrate(FlowKind::Wgf, &theta, &t, IntegrateOptions::new(1e-3, 0.0, 1)).unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.rows[0].t, 0.0);
    }
}
