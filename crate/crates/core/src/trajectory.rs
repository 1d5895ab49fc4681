//! Time-stamped records of flows and algorithm runs, with CSV/JSON output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{sym_spectral_norm, GaussianParams};
use crate::targets::{free_energy_exact, kl_gaussian, TargetPotential};

#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub t: f64,
    pub iter: usize,
    pub kl: f64,
    pub free_energy: f64,
    pub mu_err: f64,
    pub sigma_err: f64,
    pub hamiltonian: f64,
    pub theta: GaussianParams,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RunStatus {
    Completed,
    Diverged { iter: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub status: RunStatus,
}

impl TrajectoryRow {
    /// Diagnostics of θ against a target: KL, ‖μ − b‖ and ‖Σ − Q‖ (spectral)
    /// for Gaussian targets, free energy whenever the target supports
    /// Gaussian expectations. Unavailable entries are NaN.
    pub fn diagnose(t: f64, iter: usize, theta: &GaussianParams, target: &dyn TargetPotential) -> Self {
        let (kl, mu_err, sigma_err) = match target.as_gaussian() {
            Some(g) => (
                kl_gaussian(theta, g),
                (&theta.mean - &g.b).norm(),
                sym_spectral_norm(&(theta.cov.as_mat() - g.q.as_mat())),
            ),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let free_energy = free_energy_exact(theta, target).unwrap_or(f64::NAN);
        TrajectoryRow { t, iter, kl, free_energy, mu_err, sigma_err, hamiltonian: f64::NAN, theta: theta.clone() }
    }
}

impl TrajectoryRecord {
    pub fn new() -> Self {
        TrajectoryRecord { rows: Vec::new(), status: RunStatus::Completed }
    }

    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&TrajectoryRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// CSV with columns t, iter, kl, free_energy, mu_err, sigma_err, hamiltonian,
    /// followed by μ and the upper triangle of Σ when `with_theta` is set.
    pub fn write_csv<W: Write>(&self, w: W, with_theta: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.rows.first().map(|r| r.theta.dim()).unwrap_or(0);
        let mut header: Vec<String> =
            ["t", "iter", "kl", "free_energy", "mu_err", "sigma_err", "hamiltonian"].iter().map(|s| s.to_string()).collect();
        if with_theta {
            header.extend((0..d).map(|i| format!("mu_{i}")));
            for i in 0..d {
                for j in i..d {
                    header.push(format!("sigma_{i}_{j}"));
                }
            }
        }
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.t.to_string(),
                r.iter.to_string(),
                r.kl.to_string(),
                r.free_energy.to_string(),
                r.mu_err.to_string(),
                r.sigma_err.to_string(),
                r.hamiltonian.to_string(),
            ];
            if with_theta {
                rec.extend(r.theta.mean.iter().map(|v| v.to_string()));
                let s = r.theta.cov.as_mat();
                for i in 0..d {
                    for j in i..d {
                        rec.push(s[(i, j)].to_string());
                    }
                }
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, with_theta: bool) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), with_theta)
    }

    /// JSON object with `status` and `rows`; each row carries the diagnostics
    /// plus `mean` and `cov` (row-major). NaN entries become null.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let rows: Vec<RowView> = self.rows.iter().map(RowView::from).collect();
        serde_json::to_writer_pretty(w, &RecordView { status: &self.status, rows })?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_json(std::io::BufWriter::new(f))
    }
}

#[derive(Serialize)]
struct RecordView<'a> {
    status: &'a RunStatus,
    rows: Vec<RowView>,
}

#[derive(Serialize)]
struct RowView {
    t: f64,
    iter: usize,
    kl: f64,
    free_energy: f64,
    mu_err: f64,
    sigma_err: f64,
    hamiltonian: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<&TrajectoryRow> for RowView {
    fn from(r: &TrajectoryRow) -> Self {
        let s = r.theta.cov.as_mat();
        RowView {
            t: r.t,
            iter: r.iter,
            kl: r.kl,
            free_energy: r.free_energy,
            mu_err: r.mu_err,
            sigma_err: r.sigma_err,
            hamiltonian: r.hamiltonian,
            mean: r.theta.mean.iter().cloned().collect(),
            cov: s.row_iter().map(|row| row.iter().cloned().collect()).collect(),
        }
    }
}

impl Default for TrajectoryRecord {
    fn default() -> Self {
        Self::new()
    }
}
