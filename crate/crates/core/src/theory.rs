//! Closed-form predictions: perturbative Bogoliubov means, deterministic and
//! stochastic multiple-scale results for one mode, the coupled slow-flow
//! rates with their occupation equations, and the cosmological spectrum.
//!
//! Single-mode stochastic formulas are written for `Q̈ + ω²(1 + κξ)Q = 0`.
//! The plain oscillator has `κ = ε`; a cavity mode with the coupling terms
//! dropped has `κ = -2εω_z²/ω²`, which turns the plain rate `ε²ω²Re S(2ω)`
//! into `4ε²ω_z⁴/ω² Re S(2ω)`.

use num_complex::Complex64;

use crate::cavity::{CavityConfig, ModeIndex};
use crate::error::{config_err, Result};
use crate::noise::NoiseSpec;

/// Value plus a flag saying whether the inputs sit inside the formula's
/// regime of validity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub valid: bool,
}

fn stochastic_only(noise: &NoiseSpec) -> Result<()> {
    if noise.is_stochastic() {
        Ok(())
    } else {
        Err(config_err("deterministic drive: use deterministic_beta2 / msa_deterministic_beta2"))
    }
}

/// `⟨|β_nk|²⟩ = 2ε²T v_nk² Re S(ω_n + ω_k)`, valid for `ωT ≫ 1` and
/// `ε²ωT ≲ 1`.
pub fn perturbative_beta2(cavity: &CavityConfig, noise: &NoiseSpec, n: ModeIndex, k: ModeIndex, t: f64) -> Result<Flagged> {
    stochastic_only(noise)?;
    let (wn, wk) = (cavity.omega(n), cavity.omega(k));
    let v = cavity.v(n, k);
    let value = 2.0 * cavity.epsilon.powi(2) * t * v * v * noise.spectrum(wn + wk)?.re;
    let w = wn.min(wk);
    let valid = w * t >= 10.0 && cavity.epsilon.powi(2) * wn.max(wk) * t <= 1.0;
    Ok(Flagged { value, valid })
}

/// `⟨N_k⟩ = Σ_n ⟨|β_nk|²⟩` over the given in-modes.
pub fn perturbative_occupation(cavity: &CavityConfig, noise: &NoiseSpec, in_modes: &[ModeIndex], k: ModeIndex, t: f64) -> Result<f64> {
    in_modes
        .iter()
        .map(|&n| perturbative_beta2(cavity, noise, n, k, t).map(|f| f.value))
        .sum()
}

/// Relative window inside which a drive counts as resonant with `ω_n + ω_k`.
pub const RESONANCE_TOLERANCE: f64 = 1e-6;

/// `|β_nk|² = ¼ε²v_nk²T²` when `Ω = ω_n + ω_k` (within
/// [`RESONANCE_TOLERANCE`]), zero otherwise.
pub fn deterministic_beta2(cavity: &CavityConfig, omega_drive: f64, n: ModeIndex, k: ModeIndex, t: f64) -> f64 {
    let target = cavity.omega(n) + cavity.omega(k);
    if (omega_drive - target).abs() > RESONANCE_TOLERANCE * target {
        return 0.0;
    }
    let v = cavity.v(n, k);
    0.25 * (cavity.epsilon * v * t).powi(2)
}

/// `sinh²(ωεt/4)` for the resonantly driven oscillator `ξ = sin(2ωt)`.
pub fn msa_deterministic_beta2(omega: f64, epsilon: f64, t: f64) -> f64 {
    (omega * epsilon * t / 4.0).sinh().powi(2)
}

/// Effective multiplicative strength `κ` of a single mode.
pub fn single_mode_strength(omega: f64, omega_z: Option<f64>, epsilon: f64) -> f64 {
    match omega_z {
        None => epsilon,
        Some(wz) => -2.0 * epsilon * wz * wz / (omega * omega),
    }
}

/// Initial data for the single-mode mean-field formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleModeStart {
    /// `Q = 1/√(2ω)`, `Q̇ = -i√(ω/2)`.
    Vacuum,
    /// `Q = 1`, `Q̇ = 0`.
    Kick,
}

/// `⟨Q(t)⟩` for the plain oscillator with strength `ε`.
pub fn msa_mean_q(omega: f64, epsilon: f64, noise: &NoiseSpec, t: f64, start: SingleModeStart) -> Result<Complex64> {
    let (s2, s0) = if epsilon == 0.0 {
        (Complex64::new(0.0, 0.0), 0.0)
    } else {
        stochastic_only(noise)?;
        (noise.spectrum(2.0 * omega)?, noise.spectrum(0.0)?.re)
    };
    let k2 = epsilon * epsilon;
    Ok(match start {
        SingleModeStart::Vacuum => {
            let slow = (omega * omega / 4.0) * (s2 - s0) * k2 * t;
            Complex64::from_polar(1.0 / (2.0 * omega).sqrt(), -omega * t) * slow.exp()
        }
        SingleModeStart::Kick => {
            let rate = (omega * omega / 4.0) * (s2.re - s0) * k2;
            let freq = omega - k2 * omega * omega * s2.im / 4.0;
            Complex64::new((rate * t).exp() * (freq * t).cos(), 0.0)
        }
    })
}

/// `⟨Q²(t)⟩` for the plain oscillator started from `Q = 1`, `Q̇ = 0`.
pub fn msa_mean_q2(omega: f64, epsilon: f64, noise: &NoiseSpec, t: f64) -> Result<f64> {
    let (s2, s0) = if epsilon == 0.0 {
        (Complex64::new(0.0, 0.0), 0.0)
    } else {
        stochastic_only(noise)?;
        (noise.spectrum(2.0 * omega)?, noise.spectrum(0.0)?.re)
    };
    let k2 = epsilon * epsilon;
    let w2 = omega * omega;
    let osc = 0.5 * ((w2 / 2.0) * (s2.re - 2.0 * s0) * k2 * t).exp() * ((2.0 * omega - w2 * k2 * s2.im / 2.0) * t).cos();
    let growth = 0.5 * (w2 * s2.re * k2 * t).exp();
    Ok(osc + growth)
}

/// Growth rate of `⟨|β|²⟩` in real time: `κ²ω² Re S(2ω)`.
pub fn single_mode_rate(omega: f64, omega_z: Option<f64>, epsilon: f64, noise: &NoiseSpec) -> Result<f64> {
    stochastic_only(noise)?;
    let kappa = single_mode_strength(omega, omega_z, epsilon);
    Ok(kappa * kappa * omega * omega * noise.spectrum(2.0 * omega)?.re)
}

/// `⟨|β|²⟩ = ½(e^{rate·t} - 1)`. `omega_z = None` is the plain oscillator,
/// `Some(ω_z)` a cavity mode with rate `4ε²ω_z⁴/ω² Re S(2ω)`.
pub fn msa_stochastic_beta2(omega: f64, omega_z: Option<f64>, epsilon: f64, noise: &NoiseSpec, t: f64) -> Result<f64> {
    let rate = single_mode_rate(omega, omega_z, epsilon, noise)?;
    Ok(0.5 * (rate * t).exp_m1())
}

/// `½(e^{(k²+M²) Re S(2√(k²+M²)) ε²η} - 1)`.
pub fn cosmo_beta2(k: f64, mass: f64, epsilon: f64, noise: &NoiseSpec, eta: f64) -> Result<f64> {
    let omega = (k * k + mass * mass).sqrt();
    if omega == 0.0 {
        return Err(config_err("cosmology needs k² + M² > 0"));
    }
    msa_stochastic_beta2(omega, None, epsilon, noise, eta)
}

/// Slow-flow coefficients on `τ = ε²t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowFlowRates {
    pub omega: Vec<f64>,
    pub lambda: Vec<Complex64>,
    pub gamma: Vec<f64>,
    /// Row-major, `rho[m * n + k] = ρ_mk`.
    pub rho: Vec<f64>,
    pub epsilon: f64,
}

impl SlowFlowRates {
    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }

    pub fn rho(&self, m: usize, k: usize) -> f64 {
        self.rho[m * self.n_modes() + k]
    }
}

/// Fills `λ_k`, `γ_k` and `ρ_mk` for the truncated family.
///
/// `ρ_mk = -(g_km²/2ω_k²)(ω_m² - ω_k²)² Re[S(ω_m+ω_k) + S(ω_m-ω_k)]`: the
/// form whose short-time limit reproduces the perturbative intermode rates.
pub fn slow_flow_rates(cavity: &CavityConfig, noise: &NoiseSpec) -> Result<SlowFlowRates> {
    cavity.validate()?;
    stochastic_only(noise)?;
    cavity.check_nondegenerate()?;
    let modes: Vec<ModeIndex> = cavity.modes().collect();
    let n = modes.len();
    let omega: Vec<f64> = modes.iter().map(|&m| cavity.omega(m)).collect();
    let wz4: Vec<f64> = modes.iter().map(|&m| cavity.omega_z(m).powi(4)).collect();
    let s0 = noise.spectrum(0.0)?;
    let mut lambda = vec![Complex64::new(0.0, 0.0); n];
    let mut gamma = vec![0.0; n];
    let mut rho = vec![0.0; n * n];
    for k in 0..n {
        let wk = omega[k];
        let s2 = noise.spectrum(2.0 * wk)?;
        lambda[k] = wz4[k] / (wk * wk) * (s0 - s2);
        gamma[k] = -4.0 * wz4[k] / (wk * wk) * s2.re;
        for m in 0..n {
            if m == k {
                continue;
            }
            let wm = omega[m];
            let g2 = cavity.g(modes[k], modes[m]).powi(2);
            let d2 = (wk * wk - wm * wm).powi(2);
            let sp = noise.spectrum(wk + wm)?;
            let sm = noise.spectrum(wk - wm)?;
            lambda[k] -= g2 / (4.0 * wk * wm) * d2 * (sp - sm);
            gamma[k] -= g2 / (2.0 * wk * wm) * d2 * (sp.re - sm.re);
            rho[m * n + k] = -g2 / (2.0 * wk * wk) * d2 * (sp.re + sm.re);
        }
    }
    Ok(SlowFlowRates { omega, lambda, gamma, rho, epsilon: cavity.epsilon })
}

/// Output of [`solve_occupations`] for one in-mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupations {
    pub t: Vec<f64>,
    /// `t_k[i][k] = T_k(t_i)`.
    pub t_k: Vec<Vec<f64>>,
    /// `Σ_k ⟨|β_nk|²⟩ = (Σ_k 2ω_k T_k - 1)/2`.
    pub total_beta2: Vec<f64>,
    /// Set when a numerically negative total appeared.
    pub negative_total: bool,
}

impl Occupations {
    /// `2ω_k T_k - δ_nk`: excitation of mode `k` above the initial state.
    pub fn excitation(&self, rates: &SlowFlowRates, n: ModeIndex, i: usize) -> Vec<f64> {
        self.t_k[i]
            .iter()
            .enumerate()
            .map(|(k, tk)| 2.0 * rates.omega[k] * tk - if k == n.slot() { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Steps covering the whole horizon of the slow-flow integration.
pub const SLOW_FLOW_STEPS: usize = 10_000;

/// Integrates `T_k' + γ_k T_k + Σ_m ρ_mk T_m = 0` on `τ = ε²t` from
/// `T_k(0) = δ_nk/(2ω_k)` with RK4 and samples it on `t_grid` (non-decreasing,
/// non-negative real times).
pub fn solve_occupations(rates: &SlowFlowRates, n: ModeIndex, t_grid: &[f64]) -> Result<Occupations> {
    let dim = rates.n_modes();
    if n.nz() == 0 || n.nz() > dim {
        return Err(config_err(format!("in-mode {} outside 1..={dim}", n.nz())));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(config_err("occupation time grid must be non-negative and non-decreasing"));
    }
    let eps2 = rates.epsilon * rates.epsilon;
    let t_max = t_grid.last().copied().unwrap_or(0.0);
    let deriv = |y: &[f64], out: &mut [f64]| {
        for k in 0..dim {
            let mut d = -rates.gamma[k] * y[k];
            for m in 0..dim {
                d -= rates.rho(m, k) * y[m];
            }
            out[k] = d;
        }
    };
    let mut y = vec![0.0; dim];
    y[n.slot()] = 1.0 / (2.0 * rates.omega[n.slot()]);
    let mut t_now = 0.0;
    let mut out = Occupations { t: vec![], t_k: vec![], total_beta2: vec![], negative_total: false };
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    for &t in t_grid {
        let span = t - t_now;
        if span > 0.0 {
            let steps = ((SLOW_FLOW_STEPS as f64) * span / t_max).ceil().max(1.0) as usize;
            let h = eps2 * span / steps as f64;
            for _ in 0..steps {
                deriv(&y, &mut k1);
                for i in 0..dim {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                deriv(&tmp, &mut k2);
                for i in 0..dim {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                deriv(&tmp, &mut k3);
                for i in 0..dim {
                    tmp[i] = y[i] + h * k3[i];
                }
                deriv(&tmp, &mut k4);
                for i in 0..dim {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
            }
            t_now = t;
        }
        let total = (y.iter().zip(&rates.omega).map(|(tk, w)| 2.0 * w * tk).sum::<f64>() - 1.0) / 2.0;
        if total < -1e-12 {
            out.negative_total = true;
        }
        out.t.push(t);
        out.t_k.push(y.clone());
        out.total_beta2.push(total);
    }
    Ok(out)
}

/// Total `⟨N⟩ = Σ_n Σ_k ⟨|β_nk|²⟩` over the given in-modes.
pub fn total_particles(rates: &SlowFlowRates, in_modes: &[ModeIndex], t_grid: &[f64]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; t_grid.len()];
    for &n in in_modes {
        let occ = solve_occupations(rates, n, t_grid)?;
        for (a, b) in acc.iter_mut().zip(occ.total_beta2) {
            *a += b;
        }
    }
    Ok(acc)
}
