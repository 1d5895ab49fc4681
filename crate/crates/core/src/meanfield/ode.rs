//! Classical fixed-step fourth-order Runge-Kutta.

use crate::error::Result;
use crate::linalg::{symmetrize, Mat, Vector};

pub trait OdeState: Clone {
    /// self + h·k
    fn axpy(&self, h: f64, k: &Self) -> Self;
    /// Projection applied after every stage (e.g. symmetrization).
    fn tidy(&mut self) {}
}

impl OdeState for Mat {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        self + k * h
    }
}

impl OdeState for Vector {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        self + k * h
    }
}

/// (μ, Σ) pair with Σ kept symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanCov {
    pub mu: Vector,
    pub sigma: Mat,
}

impl OdeState for MeanCov {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        MeanCov { mu: &self.mu + &k.mu * h, sigma: &self.sigma + &k.sigma * h }
    }

    fn tidy(&mut self) {
        self.sigma = symmetrize(&self.sigma);
    }
}

/// Two symmetric matrices, e.g. (Σ, S) of the accelerated flows.
#[derive(Clone, Debug, PartialEq)]
pub struct SymPair {
    pub a: Mat,
    pub b: Mat,
}

impl OdeState for SymPair {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        SymPair { a: &self.a + &k.a * h, b: &self.b + &k.b * h }
    }

    fn tidy(&mut self) {
        self.a = symmetrize(&self.a);
        self.b = symmetrize(&self.b);
    }
}

pub fn rk4_step<S, F>(f: &mut F, t: f64, y: &S, dt: f64) -> Result<S>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S>,
{
    let k1 = f(t, y)?;
    let mut y2 = y.axpy(0.5 * dt, &k1);
    y2.tidy();
    let k2 = f(t + 0.5 * dt, &y2)?;
    let mut y3 = y.axpy(0.5 * dt, &k2);
    y3.tidy();
    let k3 = f(t + 0.5 * dt, &y3)?;
    let mut y4 = y.axpy(dt, &k3);
    y4.tidy();
    let k4 = f(t + dt, &y4)?;
    let mut out = y
        .axpy(dt / 6.0, &k1)
        .axpy(dt / 3.0, &k2)
        .axpy(dt / 3.0, &k3)
        .axpy(dt / 6.0, &k4);
    out.tidy();
    Ok(out)
}

/// Step sizes covering [0, t_end] with nominal `dt`; the last step is
/// shortened when t_end is not a multiple of dt.
pub fn step_grid(dt: f64, t_end: f64) -> Vec<(f64, f64)> {
    let n_full = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
    let mut steps: Vec<(f64, f64)> = (0..n_full).map(|k| (k as f64 * dt, dt)).collect();
    let covered = n_full as f64 * dt;
    if t_end - covered > 1e-12 * t_end.max(1.0) {
        steps.push((covered, t_end - covered));
    }
    steps
}

/// Integrates from t = 0 to t_end, calling `visit(step_index, t, &state)`
/// after every step (and once with index 0 for the initial state).
pub fn integrate_rk4<S, F, V>(mut f: F, y0: S, dt: f64, t_end: f64, mut visit: V) -> Result<S>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S>,
    V: FnMut(usize, f64, &S, bool) -> Result<()>,
{
    let grid = step_grid(dt, t_end);
    let n = grid.len();
    visit(0, 0.0, &y0, n == 0)?;
    let mut y = y0;
    for (k, (t, h)) in grid.into_iter().enumerate() {
        y = rk4_step(&mut f, t, &y, h)?;
        let t_next = if k + 1 == n { t_end } else { t + h };
        visit(k + 1, t_next, &y, k + 1 == n)?;
    }
    Ok(y)
}
