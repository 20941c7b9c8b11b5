//! The run configuration file.
//!
//! One TOML document with `[cavity]`, `[noise]`, `[integrator]`,
//! `[ensemble]`, `[scenario]` and an optional `[compare]` table. Keys carry
//! their units (`t_c_time`, `omega_drive_rad_per_time`, ...); unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spc_core::cavity::CavityConfig;
use spc_core::dynamics::{IntegratorConfig, ModeSystem};
use spc_core::ensemble::{EnsembleConfig, Extraction, Problem, Start};
use spc_core::noise::NoiseSpec;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub ensemble: EnsembleConfig,
    pub scenario: Scenario,
    #[serde(default)]
    pub compare: ComparePolicy,
}

/// Plain oscillator `Q̈ + ω²(1 + εξ)Q = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillator {
    pub omega_rad_per_time: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// One mode under stochastic driving: either `[scenario.oscillator]` or a
    /// cavity with `nz_max = 1`.
    SingleModeStochastic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oscillator: Option<Oscillator>,
        #[serde(default = "vacuum")]
        start: Start,
    },
    /// One mode under the deterministic sinusoid, started from vacuum.
    SingleModeDeterministic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oscillator: Option<Oscillator>,
    },
    /// The full `[cavity]` family from the vacuum of `in_mode`.
    CoupledStochastic {
        #[serde(default = "first_mode")]
        in_mode: usize,
        #[serde(default)]
        extraction: Extraction,
    },
    /// Massive field mode `ω = √(k² + M²)` with multiplicative noise.
    Cosmology {
        mass_rad_per_time: f64,
        momentum_rad_per_time: f64,
        epsilon: f64,
    },
}

fn vacuum() -> Start {
    Start::Vacuum { in_mode: 1 }
}

fn first_mode() -> usize {
    1
}

/// Per-point rule `|MC - theory| <= max(k_sigma·stderr, rel_tol·|theory| + abs_tol)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparePolicy {
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub abs_tol: f64,
    #[serde(default = "default_pass_fraction")]
    pub min_pass_fraction: f64,
    /// Smallest acceptable p-value of the sign-runs test.
    #[serde(default = "default_runs_alpha")]
    pub runs_alpha: f64,
}

fn default_k_sigma() -> f64 {
    4.0
}
fn default_rel_tol() -> f64 {
    0.10
}
fn default_pass_fraction() -> f64 {
    0.95
}
fn default_runs_alpha() -> f64 {
    1e-3
}

impl Default for ComparePolicy {
    fn default() -> Self {
        ComparePolicy {
            k_sigma: default_k_sigma(),
            rel_tol: default_rel_tol(),
            abs_tol: 0.0,
            min_pass_fraction: default_pass_fraction(),
            runs_alpha: default_runs_alpha(),
        }
    }
}

impl ComparePolicy {
    pub fn validate(&self) -> Result<(), CliError> {
        let ok = self.k_sigma >= 0.0
            && self.rel_tol >= 0.0
            && self.abs_tol >= 0.0
            && (0.0..=1.0).contains(&self.min_pass_fraction)
            && (0.0..1.0).contains(&self.runs_alpha);
        if ok {
            Ok(())
        } else {
            Err(CliError::usage(format!("invalid [compare] policy: {self:?}")))
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section, then the assembled problem.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(c) = &self.cavity {
            c.validate()?;
        }
        self.noise.validate()?;
        self.integrator.validate()?;
        self.ensemble.validate()?;
        self.compare.validate()?;
        self.problem()?.validate()?;
        Ok(())
    }

    pub fn scenario_name(&self) -> &'static str {
        match self.scenario {
            Scenario::SingleModeStochastic { .. } => "single_mode_stochastic",
            Scenario::SingleModeDeterministic { .. } => "single_mode_deterministic",
            Scenario::CoupledStochastic { .. } => "coupled_stochastic",
            Scenario::Cosmology { .. } => "cosmology",
        }
    }

    fn single_mode_system(&self, oscillator: Option<Oscillator>) -> Result<ModeSystem, CliError> {
        match (oscillator, &self.cavity) {
            (Some(_), Some(_)) => Err(CliError::usage(
                "single-mode scenario has both [scenario.oscillator] and [cavity]; keep one",
            )),
            (Some(o), None) => Ok(ModeSystem::Oscillator { omega: o.omega_rad_per_time, epsilon: o.epsilon }),
            (None, Some(c)) if c.nz_max == 1 => Ok(ModeSystem::Cavity(*c)),
            (None, Some(c)) => Err(CliError::usage(format!(
                "single-mode scenario needs cavity nz_max = 1, got {}",
                c.nz_max
            ))),
            (None, None) => Err(CliError::usage("single-mode scenario needs [scenario.oscillator] or [cavity]")),
        }
    }

    /// The mode system the scenario integrates.
    pub fn system(&self) -> Result<ModeSystem, CliError> {
        match self.scenario {
            Scenario::SingleModeStochastic { oscillator, .. } | Scenario::SingleModeDeterministic { oscillator } => {
                self.single_mode_system(oscillator)
            }
            Scenario::CoupledStochastic { .. } => match &self.cavity {
                Some(c) => Ok(ModeSystem::Cavity(*c)),
                None => Err(CliError::usage("coupled_stochastic needs a [cavity] section")),
            },
            Scenario::Cosmology { mass_rad_per_time: m, momentum_rad_per_time: k, epsilon } => {
                if self.cavity.is_some() {
                    return Err(CliError::usage("cosmology does not use [cavity]; remove it"));
                }
                Ok(ModeSystem::Oscillator { omega: (k * k + m * m).sqrt(), epsilon })
            }
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let system = self.system()?;
        let stochastic = self.noise.is_stochastic();
        let (start, extraction) = match self.scenario {
            Scenario::SingleModeStochastic { start, .. } => (start, Extraction::Auto),
            Scenario::SingleModeDeterministic { .. } => (vacuum(), Extraction::Auto),
            Scenario::CoupledStochastic { in_mode, extraction } => (Start::Vacuum { in_mode }, extraction),
            Scenario::Cosmology { .. } => (vacuum(), Extraction::Auto),
        };
        let wants_stochastic = !matches!(self.scenario, Scenario::SingleModeDeterministic { .. });
        if wants_stochastic != stochastic {
            return Err(CliError::usage(format!(
                "scenario {} does not accept noise kind {}",
                self.scenario_name(),
                self.noise.kind_name()
            )));
        }
        let mut problem = Problem::new(system, self.noise, start);
        problem.integrator = self.integrator;
        problem.extraction = extraction;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: &str = r#"
[noise]
kind = "ornstein_uhlenbeck"
sigma = 1.0
t_c_time = 0.5

[ensemble]
n_realizations = 2000
master_seed = 1
probes_time = [200.0, 400.0]

[scenario]
kind = "single_mode_stochastic"
oscillator = { omega_rad_per_time = 1.0, epsilon = 0.05 }
"#;

    #[test]
    fn parses_minimal_single_mode_config() {
        let cfg = RunConfig::parse(A1).unwrap();
        assert_eq!(cfg.integrator, IntegratorConfig::default());
        assert_eq!(cfg.compare, ComparePolicy::default());
        let Scenario::SingleModeStochastic { start, .. } = cfg.scenario else { panic!() };
        assert_eq!(start, Start::Vacuum { in_mode: 1 });
        assert!(matches!(cfg.system().unwrap(), ModeSystem::Oscillator { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = A1.replace("t_c_time", "tc_time");
        assert!(RunConfig::parse(&typo).is_err());
        let extra = format!("{A1}\n[extras]\nx = 1\n");
        assert!(RunConfig::parse(&extra).is_err());
        let nested = A1.replace("epsilon = 0.05 }", "epsilon = 0.05, eps = 1 }");
        assert!(RunConfig::parse(&nested).is_err());
    }

    #[test]
    fn section_constraints_are_checked_up_front() {
        assert!(RunConfig::parse(&A1.replace("n_realizations = 2000", "n_realizations = 0")).is_err());
        assert!(RunConfig::parse(&A1.replace("sigma = 1.0", "sigma = -1.0")).is_err());
        let det = A1.replace("single_mode_stochastic", "single_mode_deterministic");
        assert!(RunConfig::parse(&det).is_err(), "stochastic noise with deterministic scenario");
    }

    #[test]
    fn single_mode_needs_exactly_one_system() {
        let both = format!(
            "{A1}\n[cavity]\nlx_length = 1.0\nly_length = 1.0\nlz0_length = 1.0\nepsilon = 0.1\nkx = 1\nky = 1\nnz_max = 1\n"
        );
        assert!(RunConfig::parse(&both).is_err());
    }

    #[test]
    fn round_trips_through_toml_and_json() {
        let cfg = RunConfig::parse(A1).unwrap();
        let again: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        let json: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(json, cfg);
    }
}
