mod config;
mod output;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use gsvgd::algorithms::run_algorithm;
use gsvgd::experiments::{
    chaos_scaling, commuting_pair, k1_rate_check, riccati_check, stepsize_study, sweep, table1_rates,
};
use gsvgd::linalg::RngSeed;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

use config::{load, ChaosFile, RatesFile, RunFile, StepsizeFile, SweepFile};
use output::OutDir;

#[derive(Parser)]
#[command(name = "gsvgd", version, about = "Gaussian SVGD flows, particle systems and GVI algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single algorithm on one target.
    Run(Common),
    /// Run the eight algorithms side by side on one target.
    Sweep(Common),
    /// Fitted covariance decay rates of the mean-field flows against theory.
    Rates(Common),
    /// Propagation of chaos: W2 between K1 particles and the mean-field law.
    Chaos(Common),
    /// Discrete particle recursion for spectra inside and outside the step-size bracket.
    Stepsize(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl Common {
    /// Loads the config, applies the seed override, and handles
    /// `--print-config`. Returns None when there is nothing left to do.
    fn prepare<T>(&self, set_seed: impl FnOnce(&mut T, u64)) -> Result<Option<T>>
    where
        T: DeserializeOwned + Serialize + Default,
    {
        let mut cfg: T = load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            set_seed(&mut cfg, s);
        }
        if self.print_config {
            print!("{}", toml::to_string_pretty(&cfg)?);
            return Ok(None);
        }
        Ok(Some(cfg))
    }
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Run(c) => match c.prepare::<RunFile>(|f, s| f.algorithm.seed = s)? {
            Some(f) => cmd_run(&f, &c.out),
            None => Ok(()),
        },
        Cmd::Sweep(c) => match c.prepare::<SweepFile>(|f, s| f.sweep.seed = RngSeed(s))? {
            Some(f) => cmd_sweep(&f, &c.out),
            None => Ok(()),
        },
        Cmd::Rates(c) => match c.prepare::<RatesFile>(|f, s| f.seed = s)? {
            Some(f) => cmd_rates(&f, &c.out),
            None => Ok(()),
        },
        Cmd::Chaos(c) => match c.prepare::<ChaosFile>(|f, s| f.chaos.seed = RngSeed(s))? {
            Some(f) => cmd_chaos(&f, &c.out),
            None => Ok(()),
        },
        Cmd::Stepsize(c) => match c.prepare::<StepsizeFile>(|f, s| f.seed = s)? {
            Some(f) => cmd_stepsize(&f, &c.out),
            None => Ok(()),
        },
    }
}

fn cmd_run(file: &RunFile, out: &Path) -> Result<()> {
    let cfg = file.algo_config()?;
    let target = file.problem.build()?;
    let theta0 = file.initial()?;
    let rec = run_algorithm(&cfg, target.as_ref(), &theta0)?;
    let mut dir = OutDir::create(out)?;
    rec.save_csv(&dir.file("trajectory.csv"), file.with_theta)?;
    rec.save_json(&dir.file("trajectory.json"))?;
    let last = rec.last().ok_or_else(|| anyhow!("empty trajectory"))?;
    println!("{} step={} status={:?} iter={} kl={} free_energy={}", cfg.name(), cfg.step, rec.status, last.iter, last.kl, last.free_energy);
    let summary = json!({
        "algorithm": cfg.name(),
        "resolved": cfg,
        "status": rec.status,
        "final_iter": last.iter,
        "final_kl": last.kl,
        "final_free_energy": last.free_energy,
    });
    dir.finish("run", file, cfg.seed.0, summary)
}

fn cmd_sweep(file: &SweepFile, out: &Path) -> Result<()> {
    let names: Vec<&str> = file.algorithms.iter().map(String::as_str).collect();
    let runs = sweep(&file.sweep, &names)?;
    let mut dir = OutDir::create(out)?;
    let mut table = dir.csv("summary.csv")?;
    table.write_record(["algorithm", "framework", "estimator", "step", "n", "status", "final_iter", "kl", "free_energy"])?;
    for run in &runs {
        let name = run.config.name();
        run.record.save_csv(&dir.file(&format!("{name}.csv")), file.with_theta)?;
        let last = run.record.last().ok_or_else(|| anyhow!("empty trajectory for {name}"))?;
        let status = if run.record.diverged() { "diverged" } else { "completed" };
        table.write_record([
            name.to_string(),
            format!("{:?}", run.config.framework).to_lowercase(),
            format!("{:?}", run.config.estimator).to_lowercase(),
            run.config.step.to_string(),
            run.config.n.to_string(),
            status.to_string(),
            last.iter.to_string(),
            last.kl.to_string(),
            last.free_energy.to_string(),
        ])?;
        println!("{name:>5} step={:<8} {status:<9} free_energy={:.6}", run.config.step, last.free_energy);
    }
    table.flush()?;
    let summary: Vec<_> = runs
        .iter()
        .map(|r| json!({ "config": r.config, "status": r.record.status }))
        .collect();
    dir.finish("sweep", file, file.sweep.seed.0, summary)
}

fn cmd_rates(file: &RatesFile, out: &Path) -> Result<()> {
    let (s0, q) = commuting_pair(&file.sigma0_eigs, &file.q_eigs, RngSeed(file.seed))?;
    let rows = table1_rates(&s0, &q, &file.flows, file.dt, (file.window[0], file.window[1]))?;
    let mut dir = OutDir::create(out)?;
    let mut w = dir.csv("rates.csv")?;
    for r in &rows {
        w.serialize(r)?;
        println!("{:>12} predicted={:.5} fitted={:.5} rel_error={:.2e}", r.flow, r.predicted, r.fitted, r.rel_error);
    }
    w.flush()?;
    let mut summary = json!({ "rates": rows });
    if !file.riccati_times.is_empty() {
        let rep = riccati_check(&s0, &q, file.dt, &file.riccati_times)?;
        let mut w = dir.csv("riccati.csv")?;
        w.write_record(["t", "rel_error"])?;
        for (t, e) in rep.times.iter().zip(&rep.rel_errors) {
            w.write_record([t.to_string(), e.to_string()])?;
        }
        w.flush()?;
        let worst = rep.rel_errors.iter().cloned().fold(0.0, f64::max);
        println!("riccati closed form: max rel error {worst:.2e}");
        summary["riccati_max_rel_error"] = json!(worst);
    }
    if let Some(k1) = &file.k1 {
        let built = k1.problem.build()?;
        let target = built.as_gaussian().ok_or_else(|| anyhow!("k1.problem must be Gaussian"))?;
        let rep = k1_rate_check(target, &k1.initial()?, k1.dt, k1.t_end)?;
        let mut w = dir.csv("k1_rate.csv")?;
        w.write_record(["gamma", "lower_bound", "sigma_slope", "sigma_r_squared", "joint_slope", "joint_r_squared"])?;
        w.write_record([
            rep.gamma.to_string(),
            rep.lower_bound.to_string(),
            rep.sigma_fit.slope.to_string(),
            rep.sigma_fit.r_squared.to_string(),
            rep.joint_fit.slope.to_string(),
            rep.joint_fit.r_squared.to_string(),
        ])?;
        w.flush()?;
        println!("k1: gamma={:.5} (bound {:.5}), sigma slope {:.5}", rep.gamma, rep.lower_bound, rep.sigma_fit.slope);
        summary["k1"] = json!(rep);
    }
    dir.finish("rates", file, file.seed, summary)
}

fn cmd_chaos(file: &ChaosFile, out: &Path) -> Result<()> {
    let built = file.problem.build()?;
    let target = built.as_gaussian().ok_or_else(|| anyhow!("chaos needs a Gaussian problem"))?;
    let rep = chaos_scaling(target, &file.initial()?, &file.chaos)?;
    let mut dir = OutDir::create(out)?;
    let mut w = dir.csv("chaos.csv")?;
    w.write_record(["t", "n", "mean_w2", "std_err"])?;
    for (i, t) in rep.times.iter().enumerate() {
        for (j, n) in rep.ns.iter().enumerate() {
            w.write_record([t.to_string(), n.to_string(), rep.mean_w2[i][j].to_string(), rep.std_err[i][j].to_string()])?;
        }
    }
    w.flush()?;
    let reduction = rep.reduction();
    for (t, r) in rep.times.iter().zip(&reduction) {
        println!("t={t:<5} W2^2 ratio N={} / N={}: {r:.3}", rep.ns[0], rep.ns[rep.ns.len() - 1]);
    }
    let summary = json!({ "report": rep, "reduction": reduction, "nonincreasing": rep.nonincreasing() });
    dir.finish("chaos", file, file.chaos.seed.0, summary)
}

fn cmd_stepsize(file: &StepsizeFile, out: &Path) -> Result<()> {
    let cases = stepsize_study(file.eps, &file.q_eigs, file.steps, RngSeed(file.seed))?;
    let mut dir = OutDir::create(out)?;
    let mut table = dir.csv("summary.csv")?;
    table.write_record(["case", "regime", "bound_holds", "converged", "diverged", "steps", "final_error"])?;
    for c in &cases {
        let r = &c.result;
        let f = std::fs::File::create(dir.file(&format!("stepsize_{}.csv", c.label)))?;
        r.write_csv(std::io::BufWriter::new(f))?;
        let final_error = r.errors.last().copied().unwrap_or(f64::NAN);
        table.write_record([
            c.label.clone(),
            format!("{:?}", r.regime),
            r.bound_holds.to_string(),
            r.converged.to_string(),
            r.diverged.to_string(),
            (r.errors.len().saturating_sub(1)).to_string(),
            final_error.to_string(),
        ])?;
        println!(
            "{:<17} {:?} bound_holds={} converged={} diverged={}",
            c.label, r.regime, r.bound_holds, r.converged, r.diverged
        );
    }
    table.flush()?;
    dir.finish("stepsize", file, file.seed, &cases)
}
