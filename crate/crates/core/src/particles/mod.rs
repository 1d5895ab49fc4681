//! Finite-particle Gaussian-SVGD: the interacting ODE, its closed-form and
//! linear-factor solutions, and the discrete-time update.

pub mod step_size;

pub use step_size::{
    f_eps, f_eps_fixed_points, f_eps_prime, run_discrete_convergence, step_analysis, DiscreteConvergence,
    SpectrumRegime, StepAnalysis,
};

use std::cell::Cell;
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelState};
use crate::linalg::{check_commuting, symmetrize, GaussianParams, Mat, RngSeed, SpdMatrix, SymMatrix, Vector};
use crate::meanfield::drift_pair;
use crate::meanfield::ode::{integrate_rk4, OdeState};
use crate::meanfield::IntegrateOptions;
use crate::targets::{Moments, TargetPotential};

/// N particles in R^d stored as rows, with sample mean and 1/N covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    points: Mat,
    mean: Vector,
    cov: SymMatrix,
}

fn row_mean(x: &Mat) -> Vector {
    let n = x.nrows() as f64;
    x.row_sum().transpose() / n
}

fn centered_rows(x: &Mat, c: &Vector) -> Mat {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        row -= c.transpose();
    }
    out
}

fn shift_rows(x: &mut Mat, c: &Vector) {
    for mut row in x.row_iter_mut() {
        row += c.transpose();
    }
}

impl ParticleCloud {
    pub fn new(points: Mat) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptySamples);
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("particle positions"));
        }
        let mean = row_mean(&points);
        let xc = centered_rows(&points, &mean);
        let cov = SymMatrix::symmetrized(&(xc.transpose() * &xc / points.nrows() as f64));
        Ok(ParticleCloud { points, mean, cov })
    }

    /// n i.i.d. draws from θ.
    pub fn sample(theta: &GaussianParams, n: usize, seed: RngSeed) -> Result<Self> {
        Self::new(theta.sample_with(n, &mut seed.rng()))
    }

    /// 2d points m ± √d·(columns of C^{1/2}); their sample moments are exactly (m, C).
    pub fn with_moments(mean: &Vector, cov: &SpdMatrix) -> Result<Self> {
        let d = mean.len();
        if cov.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: cov.dim() });
        }
        let root = cov.sqrt();
        let s = (d as f64).sqrt();
        let mut pts = Mat::zeros(2 * d, d);
        for k in 0..d {
            let col = root.as_mat().column(k) * s;
            pts.row_mut(2 * k).copy_from(&(mean + &col).transpose());
            pts.row_mut(2 * k + 1).copy_from(&(mean - &col).transpose());
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &Mat {
        &self.points
    }

    pub fn into_points(self) -> Mat {
        self.points
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn point(&self, i: usize) -> Vector {
        self.points.row(i).transpose()
    }

    /// (m, C) as a Gaussian; fails when C is singular.
    pub fn theta(&self) -> Result<GaussianParams> {
        GaussianParams::from_mats(self.mean.clone(), self.cov.as_mat().clone())
    }

    /// xᵢ ↦ A(xᵢ − m) + shift.
    pub fn affine_map(&self, a: &Mat, shift: &Vector) -> Result<Self> {
        let mut x = centered_rows(&self.points, &self.mean) * a.transpose();
        shift_rows(&mut x, shift);
        Self::new(x)
    }

    /// One row per particle, columns x_0..x_{d−1}.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((0..self.dim()).map(|i| format!("x_{i}")))?;
        for row in self.points.row_iter() {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// How the interaction sum is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RhsMethod {
    /// O(Nd²) moment form, valid for bilinear kernels.
    #[default]
    Moments,
    /// The literal O(N²d) double sum.
    DoubleSum,
}

/// ẋᵢ = (1/N)Σⱼ ∇_{xⱼ}K(xᵢ, xⱼ) − (1/N)Σⱼ K(xᵢ, xⱼ) gⱼ with gⱼ = ∇V(xⱼ)
/// supplied as the rows of `grads`.
pub fn particle_rhs(points: &Mat, kernel: &KernelState, grads: &Mat, method: RhsMethod) -> Result<Mat> {
    let (n, d) = points.shape();
    if grads.shape() != (n, d) {
        return Err(Error::DimensionMismatch { expected: n * d, found: grads.len() });
    }
    if kernel.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: kernel.dim() });
    }
    match method {
        RhsMethod::Moments => {
            // ẋᵢ = (I − E[g(x−c)ᵀ]) W (xᵢ − c) − ḡ
            let xc = centered_rows(points, kernel.center());
            let b = grads.transpose() * &xc / n as f64;
            let h = Mat::identity(d, d) - b;
            let mut out = xc * kernel.weight() * h.transpose();
            let gbar = row_mean(grads);
            for mut row in out.row_iter_mut() {
                row -= gbar.transpose();
            }
            Ok(out)
        }
        RhsMethod::DoubleSum => {
            let pts: Vec<Vector> = (0..n).map(|i| points.row(i).transpose()).collect();
            let gs: Vec<Vector> = (0..n).map(|i| grads.row(i).transpose()).collect();
            let mut out = Mat::zeros(n, d);
            for i in 0..n {
                let mut acc = Vector::zeros(d);
                for j in 0..n {
                    acc += kernel.grad_y(&pts[i], &pts[j])?;
                    acc -= &gs[j] * kernel.eval(&pts[i], &pts[j])?;
                }
                out.row_mut(i).copy_from(&(acc / n as f64).transpose());
            }
            Ok(out)
        }
    }
}

/// Gradient field driving the particles.
#[derive(Clone, Copy)]
pub enum ParticleDrift<'a> {
    /// ∇V of the target at every particle.
    Target(&'a dyn TargetPotential),
    /// ∇V̂(x) = Γ(x − m) + m̂ where (m̂, Γ) are the Gaussian moments of
    /// N(m, C) under the target and (m, C) the cloud's moments.
    Projected(&'a dyn TargetPotential),
}

/// Rows Γ(xᵢ − m) + m̂.
pub fn linearized_gradients(points: &Mat, mean: &Vector, moments: &Moments) -> Mat {
    let mut g = centered_rows(points, mean) * moments.gamma.as_mat();
    shift_rows(&mut g, &moments.m);
    g
}

impl ParticleDrift<'_> {
    fn target(&self) -> &dyn TargetPotential {
        match self {
            ParticleDrift::Target(t) | ParticleDrift::Projected(t) => *t,
        }
    }

    pub fn gradients(&self, cloud: &ParticleCloud) -> Result<Mat> {
        match self {
            ParticleDrift::Target(t) => Ok(t.grad_rows(cloud.points())),
            ParticleDrift::Projected(t) => {
                let moments = t.gaussian_moments(&cloud.theta()?)?;
                Ok(linearized_gradients(cloud.points(), cloud.mean(), &moments))
            }
        }
    }
}

/// Velocity of every particle, with the kernel bound to the cloud's own moments.
pub fn cloud_velocity(cloud: &ParticleCloud, kernel: KernelKind, drift: ParticleDrift<'_>) -> Result<Mat> {
    let ks = KernelState::new(kernel, cloud.mean(), cloud.cov().as_mat())?;
    particle_rhs(cloud.points(), &ks, &drift.gradients(cloud)?, RhsMethod::Moments)
}

#[derive(Clone, Debug)]
pub struct ParticleTrajectory {
    pub times: Vec<f64>,
    pub clouds: Vec<ParticleCloud>,
}

impl ParticleTrajectory {
    pub fn last(&self) -> &ParticleCloud {
        self.clouds.last().expect("trajectory records the initial cloud")
    }
}

/// RK4 on the N·d-dimensional particle ODE. The kernel is re-bound to the
/// cloud moments at every stage.
pub fn integrate_particles(
    cloud0: &ParticleCloud,
    kernel: KernelKind,
    drift: ParticleDrift<'_>,
    opts: IntegrateOptions,
) -> Result<ParticleTrajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidParameter(format!("bad integration options {opts:?}")));
    }
    if drift.target().dim() != cloud0.dim() {
        return Err(Error::DimensionMismatch { expected: drift.target().dim(), found: cloud0.dim() });
    }
    let mut traj = ParticleTrajectory { times: Vec::new(), clouds: Vec::new() };
    let step = Cell::new(0usize);
    integrate_rk4(
        |_, x: &Mat| {
            let cloud = ParticleCloud::new(x.clone())
                .map_err(|e| Error::SpdLost { step: step.get(), source: Box::new(e) })?;
            cloud_velocity(&cloud, kernel, drift)
        },
        cloud0.points().clone(),
        opts.dt,
        opts.t_end,
        |k, t, x, last| {
            step.set(k + 1);
            if k % opts.record_every == 0 || last {
                traj.times.push(t);
                traj.clouds.push(ParticleCloud::new(x.clone())?);
            }
            Ok(())
        },
    )?;
    Ok(traj)
}

/// Centered K1 particles on a centered Gaussian target with C₀Q = QC₀:
/// xᵢ(t) = (e^{−2t}I + (1 − e^{−2t})Q⁻¹C₀)^{−1/2} xᵢ(0).
pub fn closed_form_trajectory(cloud0: &ParticleCloud, q: &SpdMatrix, t: f64) -> Result<ParticleCloud> {
    let m = cloud0.mean().norm();
    if m > 1e-12 {
        return Err(Error::NotCentered { norm: m });
    }
    check_commuting(cloud0.cov().as_mat(), q.as_mat())?;
    if t == 0.0 {
        return Ok(cloud0.clone());
    }
    let d = cloud0.dim();
    let e = (-2.0 * t).exp();
    let qc = symmetrize(&(q.inverse_mat() * cloud0.cov().as_mat()));
    let a = SpdMatrix::new(Mat::identity(d, d) * e + qc * (1.0 - e))?.inv_sqrt();
    ParticleCloud::new(cloud0.points() * a.as_mat())
}

#[derive(Clone, Debug)]
struct FactorState {
    mu: Vector,
    sigma: Mat,
    a: Mat,
}

impl OdeState for FactorState {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        FactorState { mu: &self.mu + &k.mu * h, sigma: &self.sigma + &k.sigma * h, a: &self.a + &k.a * h }
    }

    fn tidy(&mut self) {
        self.sigma = symmetrize(&self.sigma);
    }
}

#[derive(Clone, Debug)]
pub struct FactorTrajectory {
    pub times: Vec<f64>,
    pub factors: Vec<Mat>,
    pub moments: Vec<GaussianParams>,
}

impl FactorTrajectory {
    /// xᵢ(t) = A_t(xᵢ(0) − m₀) + m_t at record `k`.
    pub fn reconstruct(&self, cloud0: &ParticleCloud, k: usize) -> Result<ParticleCloud> {
        cloud0.affine_map(&self.factors[k], &self.moments[k].mean)
    }
}

/// Linear factor of the particle flow: Ȧ = GᵀA, A₀ = I, where (F, G) is the
/// drift pair of `kernel` at the current moments (m_t, C_t), integrated jointly
/// with ṁ = F and Ċ = CG + GᵀC. For K1 on a Gaussian target this is
/// Ȧ = (I − Q⁻¹(C+mmᵀ) + Q⁻¹bmᵀ)A; for K4 on a centered one,
/// Ȧ = (I − Q⁻¹C)((1−ν)C + νI)⁻¹A.
pub fn linear_factor_ode(
    kernel: KernelKind,
    theta0: &GaussianParams,
    target: &dyn TargetPotential,
    opts: IntegrateOptions,
) -> Result<FactorTrajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidParameter(format!("bad integration options {opts:?}")));
    }
    let d = theta0.dim();
    let to_theta = |y: &FactorState| GaussianParams::from_mats(y.mu.clone(), y.sigma.clone());
    let mut out = FactorTrajectory { times: Vec::new(), factors: Vec::new(), moments: Vec::new() };
    integrate_rk4(
        |_, y: &FactorState| {
            let theta = to_theta(y)?;
            let moments = target.gaussian_moments(&theta)?;
            let (f, g) = drift_pair(&theta, &moments, kernel)?;
            let s = &y.sigma;
            Ok(FactorState { mu: f, sigma: s * &g + g.transpose() * s, a: g.transpose() * &y.a })
        },
        FactorState { mu: theta0.mean.clone(), sigma: theta0.cov.as_mat().clone(), a: Mat::identity(d, d) },
        opts.dt,
        opts.t_end,
        |k, t, y, last| {
            if k % opts.record_every == 0 || last {
                out.times.push(t);
                out.factors.push(y.a.clone());
                out.moments.push(to_theta(y)?);
            }
            Ok(())
        },
    )?;
    Ok(out)
}

/// xᵢ ← xᵢ + ε·ẋᵢ with the kernel bound to the current cloud moments and
/// gradients given as rows.
pub fn discrete_step(cloud: &ParticleCloud, kernel: KernelKind, grads: &Mat, eps: f64) -> Result<ParticleCloud> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be nonnegative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(cloud.clone());
    }
    let ks = KernelState::new(kernel, cloud.mean(), cloud.cov().as_mat())?;
    let v = particle_rhs(cloud.points(), &ks, grads, RhsMethod::Moments)?;
    ParticleCloud::new(cloud.points() + v * eps)
}
