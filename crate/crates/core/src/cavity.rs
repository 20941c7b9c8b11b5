//! Rectangular cavity with one moving wall: mode frequencies, the
//! intermode couplings `g_kj` and the perturbative matrix `v_nk`.
//!
//! A run always simulates a single transverse family `(kx, ky, n)` with
//! `1 <= n <= nz_max`; `g` carries Kronecker deltas in the transverse
//! indices, so other families never mix in.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    #[serde(rename = "lx_length")]
    pub lx: f64,
    #[serde(rename = "ly_length")]
    pub ly: f64,
    #[serde(rename = "lz0_length")]
    pub lz0: f64,
    pub epsilon: f64,
    pub kx: u32,
    pub ky: u32,
    pub nz_max: usize,
}

/// Longitudinal index `nz` of a mode in the configured family (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex(pub usize);

impl ModeIndex {
    pub fn nz(self) -> usize {
        self.0
    }

    /// 0-based position in state vectors.
    pub fn slot(self) -> usize {
        self.0 - 1
    }
}

/// `g_kj` for longitudinal indices: zero on the diagonal, otherwise
/// `(-1)^{k+j} 2kj/(j²-k²)`.
pub fn coupling(k: usize, j: usize) -> f64 {
    if k == j {
        return 0.0;
    }
    let (kf, jf) = (k as f64, j as f64);
    let sign = if (k + j) % 2 == 0 { 1.0 } else { -1.0 };
    sign * 2.0 * kf * jf / (jf * jf - kf * kf)
}

impl CavityConfig {
    /// Quasi-1D family: huge transverse sides, so `ω_k ≈ ω_kz = πk/lz0`.
    pub fn quasi_1d(lz0: f64, epsilon: f64, nz_max: usize) -> Self {
        CavityConfig { lx: 1e6, ly: 1e6, lz0, epsilon, kx: 1, ky: 1, nz_max }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, l) in [("lx", self.lx), ("ly", self.ly), ("lz0", self.lz0)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(config_err(format!("cavity {name} must be > 0, got {l}")));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(config_err(format!("cavity epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if self.kx == 0 || self.ky == 0 {
            return Err(config_err("cavity kx and ky must be >= 1"));
        }
        if self.nz_max == 0 {
            return Err(config_err("cavity nz_max must be >= 1"));
        }
        Ok(())
    }

    pub fn mode(&self, nz: usize) -> Result<ModeIndex> {
        if nz == 0 || nz > self.nz_max {
            return Err(config_err(format!("mode nz = {nz} outside 1..={}", self.nz_max)));
        }
        Ok(ModeIndex(nz))
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> {
        (1..=self.nz_max).map(ModeIndex)
    }

    fn transverse_sq(&self) -> f64 {
        (self.kx as f64 / self.lx).powi(2) + (self.ky as f64 / self.ly).powi(2)
    }

    pub fn omega(&self, mode: ModeIndex) -> f64 {
        PI * (self.transverse_sq() + (mode.0 as f64 / self.lz0).powi(2)).sqrt()
    }

    pub fn omega_z(&self, mode: ModeIndex) -> f64 {
        PI * mode.0 as f64 / self.lz0
    }

    /// Instantaneous frequency when the wall sits at `lz0·(1+εξ)`.
    pub fn omega_at(&self, mode: ModeIndex, stretch: f64) -> f64 {
        PI * (self.transverse_sq() + (mode.0 as f64 / (self.lz0 * stretch)).powi(2)).sqrt()
    }

    pub fn g(&self, k: ModeIndex, j: ModeIndex) -> f64 {
        coupling(k.0, j.0)
    }

    pub fn v(&self, n: ModeIndex, k: ModeIndex) -> f64 {
        let (wn, wk) = (self.omega(n), self.omega(k));
        let diag = if n == k { self.omega_z(k).powi(2) / wk } else { 0.0 };
        diag + self.g(k, n) * (wn * wn - wk * wk) / (2.0 * (wk * wn).sqrt())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes().map(|m| self.omega(m)).collect()
    }

    /// Row-major `nz_max × nz_max` matrix of `g_kj`.
    pub fn coupling_matrix(&self) -> Vec<f64> {
        let n = self.nz_max;
        let mut g = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..n {
                g[k * n + j] = coupling(k + 1, j + 1);
            }
        }
        g
    }

    /// Refuses spectra with two frequencies closer than 1e-6 relative.
    pub fn check_nondegenerate(&self) -> Result<()> {
        let w = self.frequencies();
        for a in 0..w.len() {
            for b in a + 1..w.len() {
                if (w[a] - w[b]).abs() < 1e-6 * w[a].max(w[b]) {
                    return Err(Error::DegenerateSpectrum { a: a + 1, b: b + 1 });
                }
            }
        }
        Ok(())
    }
}
