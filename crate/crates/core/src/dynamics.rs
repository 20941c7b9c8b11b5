//! Mode equations for one noise realization, fixed-step RK4, and
//! Bogoliubov extraction.
//!
//! State layout is a flat real vector
//! `(Re Q_1, Im Q_1, ..., Re Q_n, Im Q_n, Re Q̇_1, Im Q̇_1, ...)`.
//! All equations have real coefficients, so real and imaginary parts evolve
//! independently; the complex form is kept for Bogoliubov bookkeeping.
//!
//! Both cavity paths are Hamiltonian with canonical momentum
//! `P = Q̇ - a(t) G Q` (`a = εξ̇` linearized, `a = L̇/L` exact), so
//! `Σ_k (Q_k P_k* - Q_k* P_k)` is conserved exactly by the flow. When the wall
//! is at rest `P = Q̇` and this is `i Σ_k (|α_k|² - |β_k|²)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{CavityConfig, ModeIndex};
use crate::error::{config_err, Error, Result};
use crate::noise::{DriveSample, GridSampler, NoiseRealization, Window};

/// Target accumulated Wronskian drift for the default step, well under the
/// 1e-8 bound: rough (spline) drives overshoot the smooth-drive estimate.
pub const WRONSKIAN_BUDGET: f64 = 5e-10;
/// Largest `ω dt` the default policy ever picks.
pub const DEFAULT_MAX_PHASE_STEP: f64 = 0.02;
/// Upper bound on `dt·ω_max`.
pub const RESOLUTION_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationPath {
    #[default]
    Linearized,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Fixed step; `None` selects the default policy (see [`default_dt`]).
    #[serde(rename = "dt_time", default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default)]
    pub path: EquationPath,
}

fn one() -> usize {
    1
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: None, method: Method::Rk4, record_stride: 1, path: EquationPath::Linearized }
    }
}

/// Default step for a run of length `horizon`.
///
/// RK4 shrinks the phase-space area of an oscillator by `y⁶/72` per step
/// (`y = ω dt`), so the Wronskian drift over the run is `ωT y⁵/72`. The step
/// is chosen to keep that under [`WRONSKIAN_BUDGET`], capped at
/// [`DEFAULT_MAX_PHASE_STEP`] for short runs.
pub fn default_dt(omega_max: f64, horizon: f64) -> f64 {
    let y_budget = (72.0 * WRONSKIAN_BUDGET / (omega_max * horizon)).powf(0.2);
    y_budget.min(DEFAULT_MAX_PHASE_STEP) / omega_max
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(config_err(format!("integrator dt must be > 0, got {dt}")));
            }
        }
        if self.record_stride == 0 {
            return Err(config_err("integrator record_stride must be >= 1"));
        }
        Ok(())
    }

    /// Step actually used for a system with top frequency `omega_max`.
    pub fn step(&self, omega_max: f64, horizon: f64) -> Result<f64> {
        self.validate()?;
        let dt = self.dt.unwrap_or_else(|| default_dt(omega_max, horizon));
        let product = dt * omega_max;
        if product > RESOLUTION_GUARD * (1.0 + 1e-12) {
            return Err(Error::ResolutionGuard { product });
        }
        Ok(dt)
    }
}

/// What is being integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSystem {
    /// `Q̈ + ω²(1 + εξ)Q = 0`.
    Oscillator {
        #[serde(rename = "omega_rad_per_time")]
        omega: f64,
        epsilon: f64,
    },
    /// One transverse family of the cavity.
    Cavity(CavityConfig),
}

impl ModeSystem {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModeSystem::Oscillator { omega, epsilon } => {
                if !(*omega > 0.0 && omega.is_finite()) {
                    return Err(config_err(format!("oscillator omega must be > 0, got {omega}")));
                }
                if !epsilon.is_finite() {
                    return Err(config_err("oscillator epsilon must be finite"));
                }
                Ok(())
            }
            ModeSystem::Cavity(c) => c.validate(),
        }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            ModeSystem::Oscillator { .. } => 1,
            ModeSystem::Cavity(c) => c.nz_max,
        }
    }

    pub fn is_coupled(&self) -> bool {
        self.n_modes() > 1
    }

    pub fn frequencies(&self) -> Vec<f64> {
        match self {
            ModeSystem::Oscillator { omega, .. } => vec![*omega],
            ModeSystem::Cavity(c) => c.frequencies(),
        }
    }

    pub fn omega_max(&self) -> f64 {
        self.frequencies().into_iter().fold(0.0, f64::max)
    }

    pub fn omega_min(&self) -> f64 {
        self.frequencies().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            ModeSystem::Oscillator { epsilon, .. } => *epsilon,
            ModeSystem::Cavity(c) => c.epsilon,
        }
    }
}

/// Complex amplitudes and velocities at time `t`, in the flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub t: f64,
    pub y: Vec<f64>,
}

impl ModeState {
    pub fn zeros(n_modes: usize, t: f64) -> Self {
        ModeState { t, y: vec![0.0; 4 * n_modes] }
    }

    pub fn n_modes(&self) -> usize {
        self.y.len() / 4
    }

    pub fn q(&self, k: usize) -> Complex64 {
        Complex64::new(self.y[2 * k], self.y[2 * k + 1])
    }

    pub fn qdot(&self, k: usize) -> Complex64 {
        let o = 2 * self.n_modes();
        Complex64::new(self.y[o + 2 * k], self.y[o + 2 * k + 1])
    }

    pub fn set_q(&mut self, k: usize, z: Complex64) {
        self.y[2 * k] = z.re;
        self.y[2 * k + 1] = z.im;
    }

    pub fn set_qdot(&mut self, k: usize, z: Complex64) {
        let o = 2 * self.n_modes();
        self.y[o + 2 * k] = z.re;
        self.y[o + 2 * k + 1] = z.im;
    }
}

/// Initial data for one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// In-vacuum mode `n`: `Q_k = δ_kn/√(2ω_n)`, `Q̇_k = -i√(ω_n/2) δ_kn`.
    Vacuum(ModeIndex),
    /// Real classical start on the lowest mode: `Q_1 = q`, `Q̇_1 = qdot`.
    Kick { q: f64, qdot: f64 },
}

impl InitialData {
    pub fn state(&self, omegas: &[f64]) -> Result<ModeState> {
        let mut s = ModeState::zeros(omegas.len(), 0.0);
        match *self {
            InitialData::Vacuum(n) => {
                if n.nz() == 0 || n.nz() > omegas.len() {
                    return Err(config_err(format!("in-mode {} outside 1..={}", n.nz(), omegas.len())));
                }
                let w = omegas[n.slot()];
                s.set_q(n.slot(), Complex64::new(1.0 / (2.0 * w).sqrt(), 0.0));
                s.set_qdot(n.slot(), Complex64::new(0.0, -(w / 2.0).sqrt()));
            }
            InitialData::Kick { q, qdot } => {
                s.set_q(0, Complex64::new(q, 0.0));
                s.set_qdot(0, Complex64::new(qdot, 0.0));
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Oscillator { epsilon: f64 },
    Linear { epsilon: f64 },
    Exact { epsilon: f64, perp2: f64 },
}

/// Precomputed right-hand side of the mode equations.
#[derive(Debug, Clone)]
pub struct Dynamics {
    kind: Kind,
    n: usize,
    omega: Vec<f64>,
    omega2: Vec<f64>,
    omega_z2: Vec<f64>,
    g: Vec<f64>,
    gtg: Vec<f64>,
}

impl Dynamics {
    pub fn new(system: &ModeSystem, path: EquationPath) -> Result<Self> {
        system.validate()?;
        let omega = system.frequencies();
        let n = omega.len();
        let omega2 = omega.iter().map(|w| w * w).collect();
        let (kind, omega_z2, g) = match (system, path) {
            (ModeSystem::Oscillator { epsilon, .. }, _) => {
                (Kind::Oscillator { epsilon: *epsilon }, vec![0.0; n], vec![0.0; n * n])
            }
            (ModeSystem::Cavity(c), p) => {
                let wz2 = c.modes().map(|m| c.omega_z(m).powi(2)).collect();
                let kind = match p {
                    EquationPath::Linearized => Kind::Linear { epsilon: c.epsilon },
                    EquationPath::Exact => {
                        let perp2 = PI * PI
                            * ((c.kx as f64 / c.lx).powi(2) + (c.ky as f64 / c.ly).powi(2));
                        Kind::Exact { epsilon: c.epsilon, perp2 }
                    }
                };
                (kind, wz2, c.coupling_matrix())
            }
        };
        let mut gtg = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..n {
                gtg[k * n + j] = (0..n).map(|l| g[l * n + k] * g[l * n + j]).sum();
            }
        }
        Ok(Dynamics { kind, n, omega, omega2, omega_z2, g, gtg })
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    /// Coefficient `a(t)` in the canonical momentum `P = Q̇ - aGQ`.
    pub fn momentum_shift(&self, d: &DriveSample) -> f64 {
        match self.kind {
            Kind::Oscillator { .. } => 0.0,
            Kind::Linear { epsilon } => epsilon * d.dxi,
            Kind::Exact { epsilon, .. } => epsilon * d.dxi / (1.0 + epsilon * d.xi),
        }
    }

    /// Writes `dy/dt` for state `y` under drive sample `d`.
    #[inline]
    pub fn deriv(&self, t: f64, d: &DriveSample, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n2 = 2 * self.n;
        let (q, qd) = y.split_at(n2);
        let (dq, acc) = out.split_at_mut(n2);
        dq.copy_from_slice(qd);
        match self.kind {
            Kind::Oscillator { epsilon } => {
                let c = -self.omega2[0] * (1.0 + epsilon * d.xi);
                acc[0] = c * q[0];
                acc[1] = c * q[1];
            }
            Kind::Linear { epsilon } => {
                let (bv, bq) = (2.0 * epsilon * d.dxi, epsilon * d.ddxi);
                for k in 0..self.n {
                    let c = -self.omega2[k] + 2.0 * epsilon * d.xi * self.omega_z2[k];
                    let (mut re, mut im) = (c * q[2 * k], c * q[2 * k + 1]);
                    if self.n > 1 {
                        let row = &self.g[k * self.n..(k + 1) * self.n];
                        for (j, gkj) in row.iter().enumerate() {
                            re += gkj * (bv * qd[2 * j] + bq * q[2 * j]);
                            im += gkj * (bv * qd[2 * j + 1] + bq * q[2 * j + 1]);
                        }
                    }
                    acc[2 * k] = re;
                    acc[2 * k + 1] = im;
                }
            }
            Kind::Exact { epsilon, perp2 } => {
                let stretch = 1.0 + epsilon * d.xi;
                if stretch <= 0.0 {
                    return Err(Error::GeometryCollapse { t, factor: stretch });
                }
                let lam = epsilon * d.dxi / stretch;
                let lam_dot = epsilon * d.ddxi / stretch - lam * lam;
                let lam2 = lam * lam;
                for k in 0..self.n {
                    let c = -(perp2 + self.omega_z2[k] / (stretch * stretch));
                    let (mut re, mut im) = (c * q[2 * k], c * q[2 * k + 1]);
                    if self.n > 1 {
                        let g = &self.g[k * self.n..(k + 1) * self.n];
                        let gg = &self.gtg[k * self.n..(k + 1) * self.n];
                        for j in 0..self.n {
                            let cq = lam_dot * g[j] + lam2 * gg[j];
                            let cv = 2.0 * lam * g[j];
                            re += cv * qd[2 * j] + cq * q[2 * j];
                            im += cv * qd[2 * j + 1] + cq * q[2 * j + 1];
                        }
                    }
                    acc[2 * k] = re;
                    acc[2 * k + 1] = im;
                }
            }
        }
        Ok(())
    }

    /// `Σ_k (Q_k P_k* - Q_k* P_k)`, purely imaginary; `i` for vacuum data.
    pub fn wronskian(&self, state: &ModeState, d: &DriveSample) -> Complex64 {
        let a = self.momentum_shift(d);
        let mut w = Complex64::new(0.0, 0.0);
        for k in 0..self.n {
            let mut p = state.qdot(k);
            if a != 0.0 && self.n > 1 {
                for j in 0..self.n {
                    p -= a * self.g[k * self.n + j] * state.q(j);
                }
            }
            let q = state.q(k);
            w += q * p.conj() - q.conj() * p;
        }
        w
    }
}

fn check_path_kind(dynamics: &Dynamics, real: &NoiseRealization) -> Result<()> {
    if dynamics.n_modes() > 1 && real.knot_spacing().is_some() {
        return Err(Error::DerivativeUnsupported { kind: "ornstein_uhlenbeck" });
    }
    Ok(())
}

/// `Q̈` from Eq. of the linearized cavity, packaged as a state derivative.
pub fn rhs_linearized(cavity: &CavityConfig, state: &ModeState, drive: DriveSample) -> Result<ModeState> {
    rhs(cavity, EquationPath::Linearized, state, drive)
}

/// Derivative under the full moving-wall equations.
pub fn rhs_exact(cavity: &CavityConfig, state: &ModeState, drive: DriveSample) -> Result<ModeState> {
    rhs(cavity, EquationPath::Exact, state, drive)
}

fn rhs(cavity: &CavityConfig, path: EquationPath, state: &ModeState, drive: DriveSample) -> Result<ModeState> {
    let d = Dynamics::new(&ModeSystem::Cavity(*cavity), path)?;
    if state.n_modes() != d.n_modes() {
        return Err(config_err(format!(
            "state has {} modes, cavity has {}",
            state.n_modes(),
            d.n_modes()
        )));
    }
    let mut out = ModeState::zeros(d.n_modes(), state.t);
    d.deriv(state.t, &drive, &state.y, &mut out.y)?;
    Ok(out)
}

/// Fixed-step RK4 driver. The drive is sampled on the half-step grid and
/// multiplied by a switching window; clones branch the run.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    dynamics: &'a Dynamics,
    sampler: GridSampler<'a>,
    window: Window,
    h: f64,
    steps: u64,
    y: Vec<f64>,
    raw: DriveSample,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        dynamics: &'a Dynamics,
        real: &'a NoiseRealization,
        window: Window,
        h: f64,
        start: ModeState,
    ) -> Result<Self> {
        check_path_kind(dynamics, real)?;
        if start.n_modes() != dynamics.n_modes() {
            return Err(config_err("initial state does not match the mode count"));
        }
        let mut sampler = real.grid_sampler(0.0, 0.5 * h);
        let raw = sampler.next_sample();
        let len = start.y.len();
        Ok(Stepper {
            dynamics,
            sampler,
            window,
            h,
            steps: 0,
            y: start.y,
            raw,
            k: std::array::from_fn(|_| vec![0.0; len]),
            tmp: vec![0.0; len],
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.h
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn set_window(&mut self, window: Window) {
        self.window = window;
    }

    /// Windowed drive at the current time.
    pub fn drive(&self) -> DriveSample {
        self.window.apply(self.time(), self.raw)
    }

    pub fn state(&self) -> ModeState {
        ModeState { t: self.time(), y: self.y.clone() }
    }

    pub fn wronskian(&self) -> Complex64 {
        let s = ModeState { t: self.time(), y: self.y.clone() };
        self.dynamics.wronskian(&s, &self.drive())
    }

    pub fn step(&mut self) -> Result<()> {
        let t0 = self.time();
        let h = self.h;
        let th = t0 + 0.5 * h;
        let t1 = t0 + h;
        let raw_half = self.sampler.next_sample();
        let raw_1 = self.sampler.next_sample();
        let d0 = self.window.apply(t0, self.raw);
        let dh = self.window.apply(th, raw_half);
        let d1 = self.window.apply(t1, raw_1);
        let dynm = self.dynamics;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        let y = &mut self.y;
        dynm.deriv(t0, &d0, y, k1)?;
        axpy(tmp, y, 0.5 * h, k1);
        dynm.deriv(th, &dh, tmp, k2)?;
        axpy(tmp, y, 0.5 * h, k2);
        dynm.deriv(th, &dh, tmp, k3)?;
        axpy(tmp, y, h, k3);
        dynm.deriv(t1, &d1, tmp, k4)?;
        for (((yi, a), (b, c)), d) in y.iter_mut().zip(k1.iter()).zip(k2.iter().zip(k3.iter())).zip(k4.iter()) {
            *yi += h / 6.0 * (a + 2.0 * (b + c) + d);
        }
        self.raw = raw_1;
        self.steps += 1;
        Ok(())
    }

    pub fn advance_to(&mut self, step: u64) -> Result<()> {
        while self.steps < step {
            self.step()?;
        }
        Ok(())
    }
}

/// `out = y + h·k`.
#[inline]
fn axpy(out: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
    for ((o, a), b) in out.iter_mut().zip(y).zip(k) {
        *o = a + h * b;
    }
}

/// Recorded states of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<ModeState>,
    /// Windowed drive at each recorded state.
    pub drive: Vec<DriveSample>,
}

impl Trajectory {
    pub fn last(&self) -> &ModeState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Integrates from `initial` over `[0, horizon]` (rounded to whole steps).
pub fn integrate(
    system: &ModeSystem,
    initial: InitialData,
    real: &NoiseRealization,
    window: Window,
    integrator: &IntegratorConfig,
    horizon: f64,
) -> Result<Trajectory> {
    let dynamics = Dynamics::new(system, integrator.path)?;
    let h = integrator.step(system.omega_max(), horizon)?;
    let start = initial.state(dynamics.omegas())?;
    let mut stepper = Stepper::new(&dynamics, real, window, h, start)?;
    let total = (horizon / h).round() as u64;
    let stride = integrator.record_stride as u64;
    let mut states = vec![stepper.state()];
    let mut drive = vec![stepper.drive()];
    while stepper.steps() < total {
        stepper.step()?;
        if stepper.steps() % stride == 0 || stepper.steps() == total {
            states.push(stepper.state());
            drive.push(stepper.drive());
        }
    }
    Ok(Trajectory { dt: h, states, drive })
}

/// Bogoliubov coefficients of one in-mode against every out-mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovRow {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
}

impl BogoliubovRow {
    /// Unique decomposition `Q = (α e^{-iωT} + β e^{iωT})/√(2ω)` with
    /// `Q̇ = -iω(α e^{-iωT} - β e^{iωT})/√(2ω)`.
    pub fn from_state(omegas: &[f64], state: &ModeState) -> Self {
        let t = state.t;
        let mut alpha = Vec::with_capacity(omegas.len());
        let mut beta = Vec::with_capacity(omegas.len());
        for (k, &w) in omegas.iter().enumerate() {
            let (q, qd) = (state.q(k), state.qdot(k));
            let i = Complex64::i();
            let norm = 1.0 / (2.0 * w).sqrt();
            let phase = Complex64::from_polar(1.0, w * t);
            alpha.push((w * q + i * qd) * phase * norm);
            beta.push((w * q - i * qd) * phase.conj() * norm);
        }
        BogoliubovRow { alpha, beta }
    }

    /// `Σ_k (|α_k|² - |β_k|²)`.
    pub fn sum_rule(&self) -> f64 {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a.norm_sqr() - b.norm_sqr()).sum()
    }
}

/// `α_nk`, `β_nk` for a set of in-modes at a common extraction time.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovRecord {
    pub t_stop: f64,
    pub in_modes: Vec<ModeIndex>,
    pub alpha: Vec<Vec<Complex64>>,
    pub beta: Vec<Vec<Complex64>>,
}

impl BogoliubovRecord {
    pub fn from_rows(t_stop: f64, rows: Vec<(ModeIndex, BogoliubovRow)>) -> Self {
        let mut rec = BogoliubovRecord { t_stop, in_modes: vec![], alpha: vec![], beta: vec![] };
        for (n, row) in rows {
            rec.in_modes.push(n);
            rec.alpha.push(row.alpha);
            rec.beta.push(row.beta);
        }
        rec
    }

    pub fn sum_rule(&self, row: usize) -> f64 {
        self.alpha[row]
            .iter()
            .zip(&self.beta[row])
            .map(|(a, b)| a.norm_sqr() - b.norm_sqr())
            .sum()
    }
}

/// Extracts one row from the last state of a trajectory.
///
/// Coupled systems need the wall at rest (`ξ = ξ̇ = 0` after windowing);
/// a single mode has no intermode terms and is extracted as a sudden stop.
pub fn extract_bogoliubov(system: &ModeSystem, n: ModeIndex, trajectory: &Trajectory) -> Result<BogoliubovRecord> {
    let state = trajectory.last();
    let d = trajectory.drive.last().copied().unwrap_or_default();
    if system.is_coupled() && (d.xi.abs() > 1e-12 || d.dxi.abs() > 1e-12) {
        return Err(Error::ExtractionWindow { t: state.t, xi: d.xi, dxi: d.dxi });
    }
    let row = BogoliubovRow::from_state(&system.frequencies(), state);
    Ok(BogoliubovRecord::from_rows(state.t, vec![(n, row)]))
}

/// Out-mode occupations `N_k = Σ_n |β_nk|²` and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleNumber {
    pub per_mode: Vec<f64>,
    pub total: f64,
}

pub fn particle_number(record: &BogoliubovRecord) -> ParticleNumber {
    let width = record.beta.first().map_or(0, Vec::len);
    let mut per_mode = vec![0.0; width];
    for row in &record.beta {
        for (k, b) in row.iter().enumerate() {
            per_mode[k] += b.norm_sqr();
        }
    }
    let total = per_mode.iter().sum();
    ParticleNumber { per_mode, total }
}
