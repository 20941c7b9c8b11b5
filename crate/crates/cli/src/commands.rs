use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use spc_core::ensemble::{realization_seed, run_ensemble, AbortRecord, EnsembleStats, Series};

use crate::compare::{compare, read_rows};
use crate::config::{ComparePolicy, RunConfig};
use crate::error::CliError;
use crate::output::{
    csv_writer, fmt17, write_json, NOISE_HEADER, PREDICT_HEADER, SERIES_HEADER, SPECTRUM_HEADER,
};
use crate::predict::predict;

#[derive(Debug, Parser)]
#[command(name = "spc", version, about = "Stochastic particle creation: Monte Carlo ensembles and slow-flow predictions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides `ensemble.master_seed` (noise-dump: the synthesis seed).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides `ensemble.workers`; 0 uses every core.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the ensemble; writes summary.json and series.csv.
    Simulate,
    /// Evaluate the theory on the probe grid; writes predict.csv.
    Predict,
    /// Check a simulation against a prediction; writes compare.json with --out.
    Compare {
        /// series.csv, or a directory holding it.
        #[arg(long, value_name = "PATH")]
        sim: PathBuf,
        /// predict.csv, or a directory holding it.
        #[arg(long, value_name = "PATH")]
        pred: PathBuf,
    },
    /// Print the cavity mode table.
    Spectrum,
    /// Dump one noise realization with its derivatives.
    NoiseDump {
        #[arg(long, default_value_t = 1001, value_parser = clap::value_parser!(u64).range(2..))]
        samples: u64,
    },
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        eprintln!("warning: {}", msg.as_ref());
    }

    fn config(&self) -> Result<RunConfig, CliError> {
        let path = self.cli.config.as_deref().ok_or_else(|| CliError::usage("--config PATH is required"))?;
        if !path.exists() {
            return Err(CliError::usage(format!("config file not found: {}", path.display())));
        }
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = self.cli.seed {
            cfg.ensemble.master_seed = s;
        }
        if let Some(w) = self.cli.workers {
            cfg.ensemble.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }

    /// File inside `--out` when given, stdout otherwise.
    fn optional_file(&self, name: &str) -> Result<Option<PathBuf>, CliError> {
        match self.cli.out {
            Some(_) => Ok(Some(self.out_dir()?.join(name))),
            None => Ok(None),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Predict => predict_cmd(&ctx),
        Command::Compare { sim, pred } => compare_cmd(&ctx, sim, pred),
        Command::Spectrum => spectrum(&ctx),
        Command::NoiseDump { samples } => noise_dump(&ctx, *samples),
    }
}

pub const SEED_SCHEME: &str = "splitmix64(master_seed + (i + 1) * 0x9E3779B97F4A7C15), i = 0..n_realizations";

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub scenario: &'static str,
    pub config: &'a RunConfig,
    pub master_seed: u64,
    pub seed_scheme: &'static str,
    pub realization_seeds: Vec<u64>,
    pub workers: usize,
    pub invariant_limit: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub n_requested: usize,
    pub n_effective: Option<usize>,
    pub dt: Option<f64>,
    pub aborted: &'a [AbortRecord],
    pub max_invariant_deviation: Option<f64>,
    pub series: &'a [Series],
}

fn resolved_workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let problem = cfg.problem()?;
    let out = ctx.out_dir()?;
    let warnings = match predict(&cfg) {
        Ok(p) => p.warnings,
        Err(e) => vec![format!("no prediction available: {e}")],
    };
    for w in &warnings {
        ctx.warn(w);
    }
    let ens = &cfg.ensemble;
    ctx.info(format!(
        "simulating {} realizations of {} (workers: {})",
        ens.n_realizations,
        cfg.scenario_name(),
        resolved_workers(ens.workers)
    ));
    let result = run_ensemble(ens, &problem);
    let (stats, error) = match &result {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = Summary {
        scenario: cfg.scenario_name(),
        config: &cfg,
        master_seed: ens.master_seed,
        seed_scheme: SEED_SCHEME,
        realization_seeds: (0..ens.n_realizations as u64).map(|i| realization_seed(ens.master_seed, i)).collect(),
        workers: resolved_workers(ens.workers),
        invariant_limit: problem.tolerance(),
        warnings,
        error,
        n_requested: ens.n_realizations,
        n_effective: stats.map(|s| s.n_effective),
        dt: stats.map(|s| s.dt),
        aborted: stats.map_or(&[][..], |s| &s.aborted),
        max_invariant_deviation: stats.map(|s| s.max_invariant_deviation),
        series: stats.map_or(&[][..], |s| &s.series),
    };
    write_json(&out.join("summary.json"), &summary)?;
    let stats = result?;
    write_series(&out.join("series.csv"), &stats)?;
    if !stats.aborted.is_empty() {
        ctx.warn(format!("{} realizations aborted; see summary.json", stats.aborted.len()));
    }
    ctx.info(format!(
        "wrote {} and {} (max invariant deviation {:e})",
        out.join("summary.json").display(),
        out.join("series.csv").display(),
        stats.max_invariant_deviation
    ));
    Ok(())
}

pub fn write_series(path: &Path, stats: &EnsembleStats) -> Result<(), CliError> {
    let mut w = csv_writer(Some(path))?;
    w.write_record(SERIES_HEADER)?;
    for s in &stats.series {
        for p in &s.points {
            w.write_record([
                fmt17(p.t),
                fmt17(p.effective_time),
                s.quantity.name().to_owned(),
                s.mode.to_string(),
                fmt17(p.mean),
                p.stderr.map(fmt17).unwrap_or_default(),
                fmt17(p.variance),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn predict_cmd(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let out = ctx.out_dir()?;
    let pred = predict(&cfg)?;
    for warning in &pred.warnings {
        ctx.warn(warning);
    }
    let path = out.join("predict.csv");
    let mut w = csv_writer(Some(&path))?;
    w.write_record(PREDICT_HEADER)?;
    for r in &pred.rows {
        w.write_record([
            fmt17(r.t),
            fmt17(r.effective_time),
            r.quantity.name().to_owned(),
            r.mode.to_string(),
            fmt17(r.value),
        ])?;
    }
    w.flush()?;
    ctx.info(format!("wrote {} ({} rows)", path.display(), pred.rows.len()));
    Ok(())
}

fn resolve(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

fn compare_cmd(ctx: &Ctx, sim: &Path, pred: &Path) -> Result<(), CliError> {
    let policy = match ctx.cli.config {
        Some(_) => ctx.config()?.compare,
        None => ComparePolicy::default(),
    };
    let sim_rows = read_rows(&resolve(sim, "series.csv"))?;
    let pred_rows = read_rows(&resolve(pred, "predict.csv"))?;
    let report = compare(&sim_rows, &pred_rows, &policy)?;
    if let Some(path) = ctx.optional_file("compare.json")? {
        write_json(&path, &report)?;
    }
    if report.unmatched_predictions > 0 {
        ctx.warn(format!("{} predicted rows have no simulated counterpart", report.unmatched_predictions));
    }
    for r in report.runs.iter().filter(|r| !r.pass) {
        ctx.warn(format!(
            "{} mode {}: {} sign runs in {} residuals (p = {:.2e})",
            r.quantity,
            r.mode,
            r.runs,
            r.positive + r.negative,
            r.p_value
        ));
    }
    let passed = report.points.iter().filter(|p| p.pass).count();
    println!(
        "{} {passed}/{} points within tolerance ({:.1}%, need {:.1}%)",
        if report.pass { "PASS" } else { "FAIL" },
        report.matched,
        100.0 * report.pass_fraction,
        100.0 * policy.min_pass_fraction
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::failed("simulation and prediction disagree"))
    }
}

fn spectrum(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let cavity = cfg.cavity.ok_or_else(|| CliError::usage("spectrum needs a [cavity] section"))?;
    let mut w = csv_writer(ctx.optional_file("spectrum.csv")?.as_deref())?;
    w.write_record(SPECTRUM_HEADER)?;
    for m in cavity.modes() {
        w.write_record([
            m.nz().to_string(),
            cavity.kx.to_string(),
            cavity.ky.to_string(),
            fmt17(cavity.omega(m)),
            fmt17(cavity.omega_z(m)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn noise_dump(ctx: &Ctx, samples: u64) -> Result<(), CliError> {
    let path = ctx.cli.config.as_deref().ok_or_else(|| CliError::usage("--config PATH is required"))?;
    if !path.exists() {
        return Err(CliError::usage(format!("config file not found: {}", path.display())));
    }
    // --seed is the synthesis seed here, so it must not rewrite the master seed.
    let cfg = RunConfig::load(path)?;
    let seed = ctx.cli.seed.unwrap_or_else(|| realization_seed(cfg.ensemble.master_seed, 0));
    let horizon = cfg.ensemble.horizon();
    let path = cfg.noise.synthesize(seed, horizon)?;
    let mut w = csv_writer(ctx.optional_file("noise.csv")?.as_deref())?;
    w.write_record(NOISE_HEADER)?;
    for i in 0..samples {
        let t = horizon * i as f64 / (samples - 1) as f64;
        let s = path.sample(t);
        w.write_record([fmt17(t), fmt17(s.xi), fmt17(s.dxi), fmt17(s.ddxi)])?;
    }
    w.flush()?;
    ctx.info(format!("noise realization seed {seed:#018x} on [0, {horizon}]"));
    Ok(())
}
