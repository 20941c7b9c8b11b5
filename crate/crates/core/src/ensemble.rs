//! Parallel Monte Carlo over noise realizations with worker-independent,
//! index-ordered reduction.
//!
//! Realization `i` draws its noise from
//! `seed_i = splitmix64(master + (i + 1)·0x9E3779B97F4A7C15)` where
//! `splitmix64` is the standard finalizer (shifts 30/27/31, multipliers
//! `0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`). Realizations are processed in
//! fixed-size chunks; each chunk is integrated in parallel, then folded
//! sequentially in index order with Welford updates.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::ModeIndex;
use crate::dynamics::{BogoliubovRow, Dynamics, InitialData, IntegratorConfig, ModeSystem, Stepper};
use crate::error::{config_err, Error, Result};
use crate::noise::{NoiseRealization, NoiseSpec, Window};

/// Realizations per reduction chunk; fixed so results never depend on the
/// worker count.
pub const CHUNK: usize = 256;
/// Ramp length of the switching window, in periods of the slowest mode.
pub const RAMP_PERIODS: f64 = 5.0;
/// Default per-probe invariant bounds.
pub const WRONSKIAN_TOL: f64 = 1e-8;
pub const SUM_RULE_TOL: f64 = 1e-6;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of realization `index` under `master`.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
    /// 0 picks the machine's parallelism.
    #[serde(default)]
    pub workers: usize,
    #[serde(rename = "probes_time")]
    pub probes: Vec<f64>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(config_err("ensemble n_realizations must be >= 1"));
        }
        if self.probes.is_empty() {
            return Err(config_err("ensemble needs at least one probe time"));
        }
        if self.probes.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(config_err("ensemble probe times must be finite and > 0"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.probes.iter().copied().fold(0.0, f64::max)
    }
}

/// Starting data of every realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Start {
    Vacuum { in_mode: usize },
    Kick { q: f64, qdot: f64 },
}

impl Start {
    fn initial(&self) -> InitialData {
        match *self {
            Start::Vacuum { in_mode } => InitialData::Vacuum(ModeIndex(in_mode)),
            Start::Kick { q, qdot } => InitialData::Kick { q, qdot },
        }
    }
}

/// How the drive is stopped before Bogoliubov extraction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Extraction {
    /// Sudden for a single mode, windowed with [`RAMP_PERIODS`] for coupled ones.
    #[default]
    Auto,
    /// Noise switched off at the probe; exact for a single mode.
    Sudden,
    /// C² ramps of the given length at the start and before every probe.
    Windowed {
        #[serde(rename = "ramp_time")]
        ramp: f64,
    },
}

/// Everything that defines one realization apart from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub system: ModeSystem,
    pub noise: NoiseSpec,
    pub integrator: IntegratorConfig,
    pub start: Start,
    pub extraction: Extraction,
    /// Per-probe invariant bound; `None` picks [`WRONSKIAN_TOL`] for one mode
    /// and [`SUM_RULE_TOL`] for coupled systems.
    pub invariant_tol: Option<f64>,
}

impl Problem {
    pub fn new(system: ModeSystem, noise: NoiseSpec, start: Start) -> Self {
        Problem {
            system,
            noise,
            integrator: IntegratorConfig::default(),
            start,
            extraction: Extraction::Auto,
            invariant_tol: None,
        }
    }

    pub fn ramp(&self) -> Option<f64> {
        match self.extraction {
            Extraction::Sudden => None,
            Extraction::Windowed { ramp } => Some(ramp),
            Extraction::Auto => {
                if self.system.is_coupled() {
                    Some(RAMP_PERIODS * 2.0 * PI / self.system.omega_min())
                } else {
                    None
                }
            }
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.invariant_tol.unwrap_or(if self.system.is_coupled() { SUM_RULE_TOL } else { WRONSKIAN_TOL })
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.noise.validate()?;
        self.integrator.validate()?;
        if let Start::Vacuum { in_mode } = self.start {
            if in_mode == 0 || in_mode > self.system.n_modes() {
                return Err(config_err(format!("in_mode {in_mode} outside 1..={}", self.system.n_modes())));
            }
        }
        if self.system.is_coupled() {
            if !self.noise.has_smooth_derivatives() {
                return Err(Error::DerivativeUnsupported { kind: self.noise.kind_name() });
            }
            if self.ramp().is_none() {
                return Err(config_err("coupled systems need a windowed extraction"));
            }
        }
        if let Some(r) = self.ramp() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(config_err(format!("extraction ramp must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// Recorded observables. `mode` 0 labels totals over modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    AbsBeta2,
    TotalBeta2,
    ReQ,
    ImQ,
    AbsQ2,
    ReQ2,
    ImQ2,
}

impl Quantity {
    pub const PER_MODE: [Quantity; 6] =
        [Quantity::AbsBeta2, Quantity::ReQ, Quantity::ImQ, Quantity::AbsQ2, Quantity::ReQ2, Quantity::ImQ2];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::AbsBeta2 => "abs_beta2",
            Quantity::TotalBeta2 => "total_beta2",
            Quantity::ReQ => "re_q",
            Quantity::ImQ => "im_q",
            Quantity::AbsQ2 => "abs_q2",
            Quantity::ReQ2 => "re_q2",
            Quantity::ImQ2 => "im_q2",
        }
    }

    pub fn parse(name: &str) -> Option<Quantity> {
        [
            Quantity::AbsBeta2,
            Quantity::TotalBeta2,
            Quantity::ReQ,
            Quantity::ImQ,
            Quantity::AbsQ2,
            Quantity::ReQ2,
            Quantity::ImQ2,
        ]
        .into_iter()
        .find(|q| q.name() == name)
    }
}

/// Slot layout of one probe's values.
fn slots(n_modes: usize) -> Vec<(Quantity, usize)> {
    let mut v = vec![(Quantity::TotalBeta2, 0)];
    for q in Quantity::PER_MODE {
        for k in 1..=n_modes {
            v.push((q, k));
        }
    }
    v
}

fn probe_values(n_modes: usize, omegas: &[f64], state: &crate::dynamics::ModeState, out: &mut Vec<f64>) -> BogoliubovRow {
    let row = BogoliubovRow::from_state(omegas, state);
    let b2: Vec<f64> = row.beta.iter().map(|b| b.norm_sqr()).collect();
    out.push(b2.iter().sum());
    out.extend(&b2);
    let qs: Vec<Complex64> = (0..n_modes).map(|k| state.q(k)).collect();
    out.extend(qs.iter().map(|q| q.re));
    out.extend(qs.iter().map(|q| q.im));
    out.extend(qs.iter().map(|q| q.norm_sqr()));
    out.extend(qs.iter().map(|q| (q * q).re));
    out.extend(qs.iter().map(|q| (q * q).im));
    row
}

/// Steps, windows and exposure times shared by all realizations.
#[derive(Debug, Clone)]
struct Schedule {
    dt: f64,
    probe_steps: Vec<u64>,
    /// Where each probe branches off the main run (windowed) or `None`.
    branch_steps: Vec<Option<u64>>,
    branch_windows: Vec<Window>,
    main_window: Window,
    effective: Vec<f64>,
    horizon: f64,
}

impl Schedule {
    fn new(problem: &Problem, probes: &[f64]) -> Result<Self> {
        let horizon = probes.iter().copied().fold(0.0, f64::max);
        let dt = problem.integrator.step(problem.system.omega_max(), horizon)?;
        let probe_steps: Vec<u64> = probes.iter().map(|t| ((t / dt).round() as u64).max(1)).collect();
        // Ramps are a whole number of steps, so every down ramp starts exactly
        // on the step where its branch leaves the main run.
        let ramp = problem.ramp().map(|r| (r / dt).round().max(1.0) * dt);
        let main_window = match ramp {
            Some(r) => Window::Smooth { ramp: r, stop: None },
            None => Window::Unit,
        };
        let mut branch_steps = vec![];
        let mut branch_windows = vec![];
        let mut effective = vec![];
        for &p in &probe_steps {
            let tp = p as f64 * dt;
            match ramp {
                Some(r) => {
                    let b = p.saturating_sub((r / dt).round() as u64);
                    let w = Window::Smooth { ramp: r, stop: Some(tp) };
                    branch_steps.push(Some(b));
                    branch_windows.push(w);
                    effective.push(w.exposure(tp));
                }
                None => {
                    branch_steps.push(None);
                    branch_windows.push(Window::Unit);
                    effective.push(tp);
                }
            }
        }
        Ok(Schedule { dt, probe_steps, branch_steps, branch_windows, main_window, effective, horizon })
    }
}

/// Where a requested probe lands: snapped onto the step grid, with its exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeTime {
    pub t: f64,
    pub effective_time: f64,
}

/// Step and probe times exactly as [`run_ensemble`] would use them.
pub fn probe_times(problem: &Problem, probes: &[f64]) -> Result<(f64, Vec<ProbeTime>)> {
    problem.validate()?;
    let sched = Schedule::new(problem, probes)?;
    let times = sched
        .probe_steps
        .iter()
        .zip(&sched.effective)
        .map(|(&p, &e)| ProbeTime { t: p as f64 * sched.dt, effective_time: e })
        .collect();
    Ok((sched.dt, times))
}

/// Outcome of one realization.
#[derive(Debug, Clone)]
enum Outcome {
    Done { values: Vec<f64>, max_deviation: f64 },
    Aborted(AbortRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub index: u64,
    pub seed: u64,
    pub reason: String,
}

fn run_one(problem: &Problem, dynamics: &Dynamics, sched: &Schedule, real: &NoiseRealization, index: u64) -> Result<Outcome> {
    let n_modes = dynamics.n_modes();
    let omegas = dynamics.omegas();
    let start = problem.start.initial().state(omegas)?;
    let mut main = Stepper::new(dynamics, real, sched.main_window, sched.dt, start)?;
    let w0 = main.wronskian();
    let tol = problem.tolerance();
    let check_invariants = matches!(problem.start, Start::Vacuum { .. });
    let width = slots(n_modes).len();
    let mut values = vec![0.0; width * sched.probe_steps.len()];
    let mut max_deviation: f64 = 0.0;

    // Visit probes in order of the step where they leave the main run.
    let mut order: Vec<usize> = (0..sched.probe_steps.len()).collect();
    order.sort_by_key(|&i| sched.branch_steps[i].unwrap_or(sched.probe_steps[i]));

    let mut buf = Vec::with_capacity(width);
    for i in order {
        let result = match sched.branch_steps[i] {
            None => {
                main.advance_to(sched.probe_steps[i])?;
                buf.clear();
                let row = probe_values(n_modes, omegas, &main.state(), &mut buf);
                (row, main.wronskian())
            }
            Some(b) => {
                main.advance_to(b)?;
                let mut branch = main.clone();
                branch.set_window(sched.branch_windows[i]);
                branch.advance_to(sched.probe_steps[i])?;
                let d = branch.drive();
                if d.xi.abs() > 1e-12 || d.dxi.abs() > 1e-12 {
                    return Err(Error::ExtractionWindow { t: branch.time(), xi: d.xi, dxi: d.dxi });
                }
                buf.clear();
                let row = probe_values(n_modes, omegas, &branch.state(), &mut buf);
                (row, branch.wronskian())
            }
        };
        if check_invariants {
            let (row, w) = result;
            let dev_w = (w - w0).norm();
            let dev_rule = (row.sum_rule() - 1.0).abs();
            let (what, dev) = if n_modes == 1 { ("wronskian", dev_w) } else { ("sum rule", dev_rule.max(dev_w)) };
            max_deviation = max_deviation.max(dev);
            if !(dev <= tol) {
                return Err(Error::InvariantViolation { index, seed: real.seed(), what, deviation: dev, limit: tol });
            }
        }
        values[i * width..(i + 1) * width].copy_from_slice(&buf);
    }
    Ok(Outcome::Done { values, max_deviation })
}

fn realization(problem: &Problem, dynamics: &Dynamics, sched: &Schedule, master: u64, index: u64) -> Result<Outcome> {
    let seed = realization_seed(master, index);
    let real = problem.noise.synthesize(seed, sched.horizon)?;
    match run_one(problem, dynamics, sched, &real, index) {
        Err(Error::GeometryCollapse { t, factor }) => Ok(Outcome::Aborted(AbortRecord {
            index,
            seed,
            reason: format!("geometry collapse at t = {t} (1 + eps*xi = {factor})"),
        })),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatPoint {
    /// Probe time after snapping to the step grid.
    pub t: f64,
    /// `∫ w²` up to the probe: the drive exposure seen by this probe.
    pub effective_time: f64,
    pub mean: f64,
    pub variance: f64,
    /// Absent for a single realization.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub quantity: Quantity,
    pub mode: usize,
    pub points: Vec<StatPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_requested: usize,
    pub n_effective: usize,
    pub dt: f64,
    pub master_seed: u64,
    pub aborted: Vec<AbortRecord>,
    /// Largest per-probe invariant deviation over all realizations.
    pub max_invariant_deviation: f64,
    pub series: Vec<Series>,
}

impl EnsembleStats {
    pub fn series(&self, quantity: Quantity, mode: usize) -> Option<&Series> {
        self.series.iter().find(|s| s.quantity == quantity && s.mode == mode)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
}

/// Runs `config.n_realizations` realizations of `problem`.
pub fn run_ensemble(config: &EnsembleConfig, problem: &Problem) -> Result<EnsembleStats> {
    config.validate()?;
    problem.validate()?;
    let dynamics = Dynamics::new(&problem.system, problem.integrator.path)?;
    let sched = Schedule::new(problem, &config.probes)?;
    let n_modes = dynamics.n_modes();
    let layout = slots(n_modes);
    let width = layout.len();
    let n_probe = config.probes.len();
    let mut acc = vec![Welford::default(); width * n_probe];
    let mut aborted = vec![];
    let mut max_deviation: f64 = 0.0;
    let total = config.n_realizations;

    let work = |acc: &mut Vec<Welford>, aborted: &mut Vec<AbortRecord>, max_dev: &mut f64| -> Result<()> {
        if problem.noise.is_seed_independent() {
            match realization(problem, &dynamics, &sched, config.master_seed, 0)? {
                Outcome::Done { values, max_deviation } => {
                    *max_dev = max_dev.max(max_deviation);
                    for _ in 0..total {
                        for (a, v) in acc.iter_mut().zip(&values) {
                            a.push(*v);
                        }
                    }
                }
                Outcome::Aborted(rec) => {
                    aborted.extend((0..total as u64).map(|index| AbortRecord { index, ..rec.clone() }));
                }
            }
            return Ok(());
        }
        let mut start = 0usize;
        while start < total {
            let end = (start + CHUNK).min(total);
            let outcomes: Vec<Result<Outcome>> = (start..end)
                .into_par_iter()
                .map(|i| realization(problem, &dynamics, &sched, config.master_seed, i as u64))
                .collect();
            for o in outcomes {
                match o? {
                    Outcome::Done { values, max_deviation } => {
                        *max_dev = max_dev.max(max_deviation);
                        for (a, v) in acc.iter_mut().zip(&values) {
                            a.push(*v);
                        }
                    }
                    Outcome::Aborted(rec) => aborted.push(rec),
                }
            }
            start = end;
        }
        Ok(())
    };

    if config.workers == 0 {
        work(&mut acc, &mut aborted, &mut max_deviation)?;
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| config_err(format!("cannot start {} workers: {e}", config.workers)))?;
        pool.install(|| work(&mut acc, &mut aborted, &mut max_deviation))?;
    }

    if aborted.len() * 100 > total {
        return Err(Error::TooManyAborts { aborted: aborted.len(), total });
    }
    let n_eff = total - aborted.len();
    let series = layout
        .iter()
        .enumerate()
        .map(|(slot, &(quantity, mode))| Series {
            quantity,
            mode,
            points: (0..n_probe)
                .map(|p| {
                    let w = acc[p * width + slot];
                    let variance = if w.n > 1 { (w.m2 / (w.n - 1) as f64).max(0.0) } else { 0.0 };
                    StatPoint {
                        t: sched.probe_steps[p] as f64 * sched.dt,
                        effective_time: sched.effective[p],
                        mean: w.mean,
                        variance,
                        stderr: (w.n > 1).then(|| (variance / w.n as f64).sqrt()),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(EnsembleStats {
        n_requested: total,
        n_effective: n_eff,
        dt: sched.dt,
        master_seed: config.master_seed,
        aborted,
        max_invariant_deviation: max_deviation,
        series,
    })
}

/// Scaling of the standard error with ensemble size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n: Vec<usize>,
    pub stderr: Vec<f64>,
    /// Least-squares slope of `ln stderr` against `ln N`; `None` when every
    /// error is zero.
    pub exponent: Option<f64>,
    pub all_zero: bool,
}

impl ConvergenceReport {
    /// Exponent inside `[-0.6, -0.4]`, or an exactly noise-free ensemble.
    pub fn is_consistent(&self) -> bool {
        self.all_zero || self.exponent.is_some_and(|e| (-0.6..=-0.4).contains(&e))
    }
}

/// Fits the standard error of `(quantity, mode)` at probe `probe` across a
/// sequence of ensembles of increasing size.
pub fn convergence_report(stats: &[EnsembleStats], quantity: Quantity, mode: usize, probe: usize) -> Result<ConvergenceReport> {
    let mut n = vec![];
    let mut se = vec![];
    for s in stats {
        let series = s
            .series(quantity, mode)
            .ok_or_else(|| config_err(format!("no series {} mode {mode}", quantity.name())))?;
        let point = series
            .points
            .get(probe)
            .ok_or_else(|| config_err(format!("probe {probe} out of range")))?;
        n.push(s.n_effective);
        se.push(point.stderr.ok_or_else(|| config_err("convergence needs N >= 2 in every ensemble"))?);
    }
    let all_zero = se.iter().all(|x| *x == 0.0);
    let exponent = if all_zero || se.iter().any(|x| *x <= 0.0) || n.len() < 2 {
        None
    } else {
        let xs: Vec<f64> = n.iter().map(|x| (*x as f64).ln()).collect();
        let ys: Vec<f64> = se.iter().map(|x| x.ln()).collect();
        let m = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    };
    Ok(ConvergenceReport { n, stderr: se, exponent, all_zero })
}
