//! Helpers shared by the integration targets.

use spc_core::noise::NoiseSpec;

/// One `(t, t + u)` pair checked by the correlation estimator.
#[derive(Debug, Clone, Copy)]
pub struct PairCheck {
    pub estimate: f64,
    pub stderr: f64,
    pub expected: f64,
}

impl PairCheck {
    pub fn within(&self, k_sigma: f64) -> bool {
        (self.estimate - self.expected).abs() <= k_sigma * self.stderr
    }
}

/// Sample mean of `ξ(t)ξ(t+u)` over `n` seeds, against `R(u)`.
pub fn correlation_pairs(spec: &NoiseSpec, pairs: &[(f64, f64)], n: usize, master: u64) -> Vec<PairCheck> {
    let horizon = pairs.iter().map(|(t, u)| t + u).fold(0.0, f64::max);
    let mut sum = vec![0.0; pairs.len()];
    let mut sum2 = vec![0.0; pairs.len()];
    for i in 0..n {
        let real = spec.synthesize(master.wrapping_add(i as u64), horizon).unwrap();
        for (j, &(t, u)) in pairs.iter().enumerate() {
            let x = real.eval(t, 0).unwrap() * real.eval(t + u, 0).unwrap();
            sum[j] += x;
            sum2[j] += x * x;
        }
    }
    let nf = n as f64;
    pairs
        .iter()
        .enumerate()
        .map(|(j, &(_, u))| {
            let mean = sum[j] / nf;
            let var = (sum2[j] / nf - mean * mean) * nf / (nf - 1.0);
            PairCheck { estimate: mean, stderr: (var / nf).sqrt(), expected: spec.correlation(u).unwrap() }
        })
        .collect()
}

/// Ten pairs at knot-aligned times with lags spanning the correlation range.
pub fn probe_pairs() -> Vec<(f64, f64)> {
    (0..10).map(|i| (1.0 + 0.25 * i as f64, 0.1 * i as f64)).collect()
}
