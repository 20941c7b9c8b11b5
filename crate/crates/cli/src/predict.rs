//! Closed-form and slow-flow predictions on the simulator's probe grid.

use spc_core::cavity::ModeIndex;
use spc_core::dynamics::ModeSystem;
use spc_core::ensemble::{probe_times, ProbeTime, Quantity, Start};
use spc_core::noise::NoiseSpec;
use spc_core::theory::{
    cosmo_beta2, msa_deterministic_beta2, msa_mean_q, msa_mean_q2, msa_stochastic_beta2, single_mode_strength,
    slow_flow_rates, solve_occupations, SingleModeStart, RESONANCE_TOLERANCE,
};

use crate::config::{RunConfig, Scenario};
use crate::error::CliError;

/// Relative excitation of the highest retained mode above which the family
/// is considered under-resolved.
pub const TRUNCATION_WARN: f64 = 0.01;

/// Smallest `ω t` at which slow-flow results are reported without a warning.
pub const MIN_PHASE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PredRow {
    pub t: f64,
    pub effective_time: f64,
    pub quantity: Quantity,
    pub mode: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Prediction {
    pub dt: f64,
    pub rows: Vec<PredRow>,
    pub warnings: Vec<String>,
}

impl Prediction {
    fn push(&mut self, p: &ProbeTime, quantity: Quantity, mode: usize, value: f64) {
        self.rows.push(PredRow { t: p.t, effective_time: p.effective_time, quantity, mode, value });
    }
}

/// Mode frequency, `ω_z` for cavity modes, and the multiplicative strength `κ`.
fn single_mode(system: &ModeSystem) -> (f64, Option<f64>, f64) {
    match system {
        ModeSystem::Oscillator { omega, epsilon } => (*omega, None, *epsilon),
        ModeSystem::Cavity(c) => {
            let m = ModeIndex(1);
            let (w, wz) = (c.omega(m), c.omega_z(m));
            (w, Some(wz), single_mode_strength(w, Some(wz), c.epsilon))
        }
    }
}

pub fn predict(cfg: &RunConfig) -> Result<Prediction, CliError> {
    let problem = cfg.problem()?;
    let (dt, probes) = probe_times(&problem, &cfg.ensemble.probes)?;
    let mut out = Prediction { dt, ..Default::default() };
    let noise = &cfg.noise;
    let system = problem.system;

    let first = probes.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
    if noise.is_stochastic() && system.omega_min() * first < MIN_PHASE {
        out.warnings.push(format!(
            "earliest probe has omega*t = {:.3} < {MIN_PHASE}; slow-flow predictions assume many periods",
            system.omega_min() * first
        ));
    }

    match cfg.scenario {
        Scenario::SingleModeStochastic { start, .. } => {
            let (w, wz, kappa) = single_mode(&system);
            let eps = system.epsilon();
            match start {
                Start::Vacuum { .. } => {
                    for p in &probes {
                        let b2 = msa_stochastic_beta2(w, wz, eps, noise, p.effective_time)?;
                        let q = msa_mean_q(w, kappa, noise, p.t, SingleModeStart::Vacuum)?;
                        out.push(p, Quantity::TotalBeta2, 0, b2);
                        out.push(p, Quantity::AbsBeta2, 1, b2);
                        out.push(p, Quantity::ReQ, 1, q.re);
                        out.push(p, Quantity::ImQ, 1, q.im);
                    }
                }
                Start::Kick { q, qdot: 0.0 } => {
                    for p in &probes {
                        let mean = q * msa_mean_q(w, kappa, noise, p.t, SingleModeStart::Kick)?.re;
                        let second = q * q * msa_mean_q2(w, kappa, noise, p.t)?;
                        out.push(p, Quantity::ReQ, 1, mean);
                        out.push(p, Quantity::ImQ, 1, 0.0);
                        out.push(p, Quantity::ReQ2, 1, second);
                        out.push(p, Quantity::ImQ2, 1, 0.0);
                        out.push(p, Quantity::AbsQ2, 1, second);
                    }
                }
                Start::Kick { .. } => {
                    out.warnings.push("no closed form for a kick with qdot != 0; nothing predicted".into());
                }
            }
        }
        Scenario::SingleModeDeterministic { .. } => {
            let (w, _, kappa) = single_mode(&system);
            let NoiseSpec::DeterministicSinusoid { omega_drive } = *noise else {
                unreachable!("validated: deterministic scenario has a sinusoid")
            };
            if (omega_drive - 2.0 * w).abs() > RESONANCE_TOLERANCE * 2.0 * w {
                out.warnings.push(format!(
                    "drive {omega_drive} is off the parametric resonance 2*omega = {}; nothing predicted",
                    2.0 * w
                ));
            } else {
                for p in &probes {
                    let b2 = msa_deterministic_beta2(w, kappa.abs(), p.t);
                    out.push(p, Quantity::TotalBeta2, 0, b2);
                    out.push(p, Quantity::AbsBeta2, 1, b2);
                }
            }
        }
        Scenario::CoupledStochastic { in_mode, .. } => {
            let ModeSystem::Cavity(cavity) = system else { unreachable!("validated: coupled runs use a cavity") };
            let rates = slow_flow_rates(&cavity, noise)?;
            // The slow-flow solver wants a sorted grid; probes may come in any order.
            let mut order: Vec<usize> = (0..probes.len()).collect();
            order.sort_by(|&a, &b| probes[a].effective_time.total_cmp(&probes[b].effective_time));
            let grid: Vec<f64> = order.iter().map(|&i| probes[i].effective_time).collect();
            let n = ModeIndex(in_mode);
            let occ = solve_occupations(&rates, n, &grid)?;
            let mut totals = vec![0.0; probes.len()];
            for (j, &i) in order.iter().enumerate() {
                totals[i] = occ.total_beta2[j];
            }
            for (p, total) in probes.iter().zip(totals) {
                out.push(p, Quantity::TotalBeta2, 0, total);
            }
            if occ.negative_total {
                out.warnings.push("slow-flow total went negative; rates outside their regime".into());
            }
            if let Some(last) = grid.len().checked_sub(1) {
                let ex = occ.excitation(&rates, n, last);
                let sum: f64 = ex.iter().map(|x| x.abs()).sum();
                let top = ex.last().copied().unwrap_or(0.0).abs();
                if ex.len() > 1 && sum > 0.0 && top > TRUNCATION_WARN * sum {
                    out.warnings.push(format!(
                        "mode nz = {} holds {:.1}% of the excitation at t = {}; raise nz_max",
                        ex.len(),
                        100.0 * top / sum,
                        probes[order[last]].t
                    ));
                }
            }
        }
        Scenario::Cosmology { mass_rad_per_time: m, momentum_rad_per_time: k, epsilon } => {
            for p in &probes {
                let b2 = cosmo_beta2(k, m, epsilon, noise, p.effective_time)?;
                out.push(p, Quantity::TotalBeta2, 0, b2);
                out.push(p, Quantity::AbsBeta2, 1, b2);
            }
        }
    }
    Ok(out)
}
