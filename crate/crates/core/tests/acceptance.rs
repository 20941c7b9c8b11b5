//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Pass criterion ids (`A1 A5 ...`) as arguments to run a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

mod common;

use spc_core::cavity::{CavityConfig, ModeIndex};
use spc_core::dynamics::{integrate, IntegratorConfig, InitialData, ModeSystem};
use spc_core::ensemble::{run_ensemble, EnsembleConfig, EnsembleStats, Problem, Quantity, Start};
use spc_core::noise::{NoiseSpec, Window};
use spc_core::theory;

const K_SIGMA: f64 = 4.0;

const OU: NoiseSpec = NoiseSpec::OrnsteinUhlenbeck { sigma: 1.0, t_c: 0.5 };

struct Verdict {
    pass: bool,
    detail: String,
}

/// Largest invariant deviation seen per run, collected for A8.
#[derive(Default)]
struct Invariants {
    single: Vec<(&'static str, f64)>,
    coupled: Vec<(&'static str, f64)>,
}

impl Invariants {
    fn record(&mut self, tag: &'static str, problem: &Problem, stats: &EnsembleStats) {
        if problem.system.is_coupled() {
            self.coupled.push((tag, stats.max_invariant_deviation));
        } else {
            self.single.push((tag, stats.max_invariant_deviation));
        }
    }
}

fn ensemble(n: usize, seed: u64, probes: Vec<f64>) -> EnsembleConfig {
    EnsembleConfig { n_realizations: n, master_seed: seed, workers: 0, probes }
}

fn run(tag: &'static str, inv: &mut Invariants, cfg: &EnsembleConfig, problem: &Problem) -> EnsembleStats {
    let stats = run_ensemble(cfg, problem).unwrap_or_else(|e| panic!("{tag}: ensemble failed: {e}"));
    // Kicked starts carry no vacuum Wronskian; only vacuum runs feed A8.
    if matches!(problem.start, Start::Vacuum { .. }) {
        inv.record(tag, problem, &stats);
    }
    stats
}

fn oscillator(omega: f64, epsilon: f64) -> ModeSystem {
    ModeSystem::Oscillator { omega, epsilon }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Point-wise check `|mc - theory| <= max(k·stderr, rel_tol·|theory|)`.
fn band_check(points: &[(f64, f64, f64, f64)], rel_tol: f64) -> (usize, String) {
    let mut fails = 0;
    let mut worst: f64 = 0.0;
    for &(_, mc, se, want) in points {
        let allowed = (K_SIGMA * se).max(rel_tol * want.abs());
        let dev = (mc - want).abs();
        worst = worst.max(dev / allowed);
        if dev > allowed {
            fails += 1;
        }
    }
    (fails, format!("{}/{} probes inside, worst deviation {:.2} of allowance", points.len() - fails, points.len(), worst))
}

/// Weighted least squares `y ≈ Σ c_j f_j(x)`; returns coefficients and their covariance.
fn wls(x: &[f64], y: &[f64], s: &[f64], basis: &[&dyn Fn(f64) -> f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = basis.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..x.len() {
        let w = 1.0 / (s[i] * s[i]);
        let f: Vec<f64> = basis.iter().map(|g| g(x[i])).collect();
        for p in 0..m {
            b[p] += w * f[p] * y[i];
            for q in 0..m {
                a[p][q] += w * f[p] * f[q];
            }
        }
    }
    let inv = invert(a);
    let c = (0..m).map(|p| (0..m).map(|q| inv[p][q] * b[q]).sum()).collect();
    (c, inv)
}

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

/// Unweighted fit of `ln y = p ln x + c`; returns `p`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn a1(inv: &mut Invariants) -> Verdict {
    let eps = 0.05;
    let probes: Vec<f64> = (1..=10).map(|i| 200.0 * i as f64).collect();
    let problem = Problem::new(oscillator(1.0, eps), OU, Start::Vacuum { in_mode: 1 });
    let stats = run("A1", inv, &ensemble(2000, 1, probes), &problem);
    let s = stats.series(Quantity::AbsBeta2, 1).unwrap();
    let pts: Vec<_> = s
        .points
        .iter()
        .map(|p| (p.t, p.mean, p.stderr.unwrap(), 0.5 * (0.000625 * p.t).exp_m1()))
        .collect();
    let (fails, msg) = band_check(&pts, 0.10);
    let last = pts.last().unwrap();
    Verdict {
        pass: fails == 0,
        detail: format!("{msg}; t={} MC {:.4}±{:.4} vs {:.4}", last.0, last.1, last.2, last.3),
    }
}


/// Single quasi-1D cavity mode with `ω = ω_z = 1`.
fn unit_cavity_mode(epsilon: f64) -> CavityConfig {
    CavityConfig::quasi_1d(PI, epsilon, 1)
}

fn a2(inv: &mut Invariants) -> Verdict {
    let eps = 0.05;
    let cavity = unit_cavity_mode(eps);
    let probes: Vec<f64> = (1..=10).map(|i| 8.0 * i as f64).collect();
    assert!(probes.iter().all(|t| eps * eps * t <= 0.2 + 1e-12));
    let problem = Problem::new(ModeSystem::Cavity(cavity), OU, Start::Vacuum { in_mode: 1 });
    let slope_want = 2.0 * eps * eps * OU.spectrum(2.0).unwrap().re;
    let oracle = theory::perturbative_beta2(&cavity, &OU, ModeIndex(1), ModeIndex(1), 1.0).unwrap().value;
    assert!(rel(oracle, slope_want) < 1e-9, "perturbative slope oracle disagrees");
    // Coefficient spread over independent batches gives honest error bars
    // despite the probes sharing realizations.
    let batches = 10;
    let mut fits = vec![];
    for b in 0..batches {
        let stats = run("A2", inv, &ensemble(200, 100 + b, probes.clone()), &problem);
        let s = stats.series(Quantity::AbsBeta2, 1).unwrap();
        let t: Vec<f64> = s.points.iter().map(|p| p.t).collect();
        let y: Vec<f64> = s.points.iter().map(|p| p.mean).collect();
        let ones = vec![1.0; t.len()];
        let (c, _) = wls(&t, &y, &ones, &[&|_| 1.0, &|x| x, &|x| x * x]);
        fits.push(c);
    }
    let stat = |j: usize| {
        let v: Vec<f64> = fits.iter().map(|c| c[j]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, (var / v.len() as f64).sqrt())
    };
    let (slope, slope_se) = stat(1);
    let (quad, quad_se) = stat(2);
    let slope_ok = rel(slope, slope_want) <= 0.10;
    let quad_ok = quad.abs() <= 3.0 * quad_se;
    Verdict {
        pass: slope_ok && quad_ok,
        detail: format!(
            "slope {slope:.4e}±{slope_se:.1e} vs {slope_want:.4e} ({:.1}%); quadratic {quad:.2e}±{quad_se:.1e} ({:.1}σ)",
            100.0 * rel(slope, slope_want),
            quad.abs() / quad_se
        ),
    }
}

const SINE: NoiseSpec = NoiseSpec::DeterministicSinusoid { omega_drive: 2.0 };

/// Probe times on the zeros of `sin(2t)`, where the oscillator is at rest length.
fn rest_times(targets: &[f64]) -> Vec<f64> {
    targets.iter().map(|t| (t / (PI / 2.0)).floor() * PI / 2.0).collect()
}

fn a3(inv: &mut Invariants) -> Verdict {
    let eps = 0.01;
    let probes = rest_times(&(1..=10).map(|i| 60.0 * i as f64).collect::<Vec<_>>());
    let problem = Problem::new(oscillator(1.0, eps), SINE, Start::Vacuum { in_mode: 1 });
    let stats = run("A3", inv, &ensemble(1, 0, probes), &problem);
    let s = stats.series(Quantity::AbsBeta2, 1).unwrap();
    let mut worst: f64 = 0.0;
    for p in &s.points {
        assert!(eps * p.t / 4.0 <= 1.5 + 1e-9);
        worst = worst.max(rel(p.mean, theory::msa_deterministic_beta2(1.0, eps, p.t)));
    }
    let last = s.points.last().unwrap();
    Verdict {
        pass: worst <= 0.02,
        detail: format!(
            "worst relative error {:.3}% over {} rest-length probes; ωεt/4={:.3}: {:.5} vs {:.5}",
            100.0 * worst,
            s.points.len(),
            eps * last.t / 4.0,
            last.mean,
            theory::msa_deterministic_beta2(1.0, eps, last.t)
        ),
    }
}

fn a4(inv: &mut Invariants) -> Verdict {
    let eps = 0.02;
    let probes = rest_times(&[10.0, 14.0, 20.0, 28.0, 38.0, 50.0]);
    let det = run("A4", inv, &ensemble(1, 0, probes.clone()), &Problem::new(oscillator(1.0, eps), SINE, Start::Vacuum { in_mode: 1 }));
    let sto = run("A4", inv, &ensemble(16384, 7, probes.clone()), &Problem::new(oscillator(1.0, eps), OU, Start::Vacuum { in_mode: 1 }));
    let exponent = |stats: &EnsembleStats| {
        let s = stats.series(Quantity::AbsBeta2, 1).unwrap();
        let t: Vec<f64> = s.points.iter().map(|p| p.t).collect();
        let y: Vec<f64> = s.points.iter().map(|p| p.mean).collect();
        loglog_slope(&t, &y)
    };
    let (pd, ps) = (exponent(&det), exponent(&sto));
    Verdict {
        pass: (pd - 2.0).abs() <= 0.1 && (ps - 1.0).abs() <= 0.1,
        detail: format!("deterministic exponent {pd:.3}, stochastic exponent {ps:.3} over T in [{:.1}, {:.1}]", probes[0], probes[probes.len() - 1]),
    }
}

/// Slowly correlated OU noise: decay of `⟨Q⟩` outpaces growth of `⟨Q²⟩`.
const SLOW_OU: NoiseSpec = NoiseSpec::OrnsteinUhlenbeck { sigma: 1.0, t_c: 2.0 };
const KICK_EPS: f64 = 0.1;
const KICK_HORIZON: f64 = 212.0;

fn kicked_run(inv: &mut Invariants, probes: Vec<f64>) -> EnsembleStats {
    let problem = Problem::new(oscillator(1.0, KICK_EPS), SLOW_OU, Start::Kick { q: 1.0, qdot: 0.0 });
    run("A5", inv, &ensemble(16384, 11, probes), &problem)
}

/// Demodulates `⟨Q⟩` on windows of one period: returns `(t_center, ln A, φ)`
/// with `⟨Q⟩ ≈ A cos(t + φ)`.
fn demodulate(points: &[(f64, f64, f64)], per_window: usize) -> Vec<(f64, f64, f64)> {
    points
        .chunks(per_window)
        .map(|w| {
            let t: Vec<f64> = w.iter().map(|p| p.0).collect();
            let y: Vec<f64> = w.iter().map(|p| p.1).collect();
            let s: Vec<f64> = w.iter().map(|p| p.2.max(1e-12)).collect();
            let (c, _) = wls(&t, &y, &s, &[&|x: f64| x.cos(), &|x: f64| x.sin()]);
            let (a, b) = (c[0], c[1]);
            let center = t.iter().sum::<f64>() / t.len() as f64;
            (center, a.hypot(b).ln(), (-b).atan2(a))
        })
        .collect()
}

fn unwrap_phase(phi: &mut [f64]) {
    for i in 1..phi.len() {
        while phi[i] - phi[i - 1] > PI {
            phi[i] -= 2.0 * PI;
        }
        while phi[i] - phi[i - 1] < -PI {
            phi[i] += 2.0 * PI;
        }
    }
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let ones = vec![1.0; x.len()];
    wls(x, y, &ones, &[&|_| 1.0, &|v| v]).0[1]
}

fn a5_a6(inv: &mut Invariants) -> (Verdict, Verdict) {
    let per_window = 16;
    let centers: Vec<f64> = (0..8).map(|j| 8.0 + (KICK_HORIZON - 16.0) * j as f64 / 7.0).collect();
    let mut probes: Vec<f64> = centers
        .iter()
        .flat_map(|c| (0..per_window).map(move |i| c - PI + 2.0 * PI * (i as f64 + 0.5) / per_window as f64))
        .collect();
    let q2_probes: Vec<f64> = (1..=10).map(|i| KICK_HORIZON * i as f64 / 10.0 - 1.3).collect();
    probes.extend(&q2_probes);
    let stats = kicked_run(inv, probes);

    let q = &stats.series(Quantity::ReQ, 1).unwrap().points;
    let n_demod = centers.len() * per_window;
    let pts: Vec<(f64, f64, f64)> = q[..n_demod].iter().map(|p| (p.t, p.mean, p.stderr.unwrap())).collect();
    let demod = demodulate(&pts, per_window);
    let t: Vec<f64> = demod.iter().map(|d| d.0).collect();
    let ln_a: Vec<f64> = demod.iter().map(|d| d.1).collect();
    let mut phi: Vec<f64> = demod.iter().map(|d| d.2).collect();
    unwrap_phase(&mut phi);
    let rate = linear_slope(&t, &ln_a);
    let shift = linear_slope(&t, &phi);

    let s2 = SLOW_OU.spectrum(2.0).unwrap();
    let s0 = SLOW_OU.spectrum(0.0).unwrap().re;
    let rate_want = 0.25 * (s2.re - s0) * KICK_EPS * KICK_EPS;
    let shift_want = -KICK_EPS * KICK_EPS * s2.im / 4.0;
    // The closed form carries the same two numbers.
    let probe_t = 100.0;
    let closed = theory::msa_mean_q(1.0, KICK_EPS, &SLOW_OU, probe_t, theory::SingleModeStart::Kick).unwrap().re;
    let by_hand = (rate_want * probe_t).exp() * ((1.0 + shift_want) * probe_t).cos();
    assert!((closed - by_hand).abs() < 1e-12);

    let v5 = Verdict {
        pass: rel(rate, rate_want) <= 0.10 && shift < 0.0,
        detail: format!(
            "envelope rate {rate:.4e} vs {rate_want:.4e} ({:.1}%); frequency shift {shift:.3e} vs {shift_want:.3e}",
            100.0 * rel(rate, rate_want)
        ),
    };

    let q2 = &stats.series(Quantity::ReQ2, 1).unwrap().points[n_demod..];
    let checks: Vec<_> = q2
        .iter()
        .map(|p| (p.t, p.mean, p.stderr.unwrap(), theory::msa_mean_q2(1.0, KICK_EPS, &SLOW_OU, p.t).unwrap()))
        .collect();
    let (fails, msg) = band_check(&checks, 0.10);
    let v6 = Verdict { pass: fails == 0, detail: msg };
    (v5, v6)
}

fn band(nu_min: f64, nu_max: f64, n_components: usize) -> NoiseSpec {
    NoiseSpec::BandLimited { sigma: 1.0, nu_min, nu_max, n_components }
}

fn a7(inv: &mut Invariants) -> Verdict {
    let eps = 0.02;
    // ω_k = 1, 2, 3: the band holds ω_1 + ω_2 = 3 and no other sum or difference.
    let cavity = CavityConfig::quasi_1d(PI, eps, 3);
    // Random-phase lines only look Gaussian when many share one 2π/T
    // resolution cell: 512 lines put eight in each at T = 400.
    let noise = band(2.5, 3.5, 512);
    let probes: Vec<f64> = (1..=5).map(|i| 80.0 * i as f64).collect();
    let problem = Problem::new(ModeSystem::Cavity(cavity), noise, Start::Vacuum { in_mode: 1 });
    let stats = run("A7", inv, &ensemble(512, 21, probes), &problem);
    let s = stats.series(Quantity::TotalBeta2, 0).unwrap();
    let rates = theory::slow_flow_rates(&cavity, &noise).unwrap();
    let t_eff: Vec<f64> = s.points.iter().map(|p| p.effective_time).collect();
    let occ = theory::solve_occupations(&rates, ModeIndex(1), &t_eff).unwrap();
    let pts: Vec<_> = s
        .points
        .iter()
        .zip(&occ.total_beta2)
        .map(|(p, want)| (p.t, p.mean, p.stderr.unwrap(), *want))
        .collect();
    let (fails, msg) = band_check(&pts, 0.15);
    if std::env::var_os("SPC_VERBOSE").is_some() {
        for (p, sp) in pts.iter().zip(&s.points) {
            eprintln!("  t={:.1} t_eff={:.2} mc={:.5}±{:.5} theory={:.5}", p.0, sp.effective_time, p.1, p.2, p.3);
        }
    }
    let last = pts.last().unwrap();

    // Cubic cavity: ω_1 = 5.44, ω_2 = 7.70, ω_3 = 10.42. Only 2ω_1 = 10.88
    // falls in the band, so the coupled flow must reduce to the one-mode law.
    let cube = CavityConfig { lx: 1.0, ly: 1.0, lz0: 1.0, epsilon: eps, kx: 1, ky: 1, nz_max: 3 };
    let narrow = band(10.6, 11.2, 512);
    let w: Vec<f64> = cube.frequencies();
    for a in 0..3 {
        for b in 0..3 {
            let lines = [w[a] + w[b], (w[a] - w[b]).abs()];
            for nu in lines {
                let inside = (10.6..=11.2).contains(&nu);
                assert_eq!(inside, a == 0 && b == 0 && nu > 1.0, "band leaks at {nu}");
            }
        }
    }
    let r = theory::slow_flow_rates(&cube, &narrow).unwrap();
    let m1 = ModeIndex(1);
    let rate = theory::single_mode_rate(cube.omega(m1), Some(cube.omega_z(m1)), eps, &narrow).unwrap();
    let grid: Vec<f64> = [0.5, 1.0, 2.0, 3.0].iter().map(|x| x / rate).collect();
    let coupled = theory::solve_occupations(&r, m1, &grid).unwrap();
    let mut worst: f64 = 0.0;
    for (t, c) in grid.iter().zip(&coupled.total_beta2) {
        let single = theory::msa_stochastic_beta2(cube.omega(m1), Some(cube.omega_z(m1)), eps, &narrow, *t).unwrap();
        worst = worst.max(rel(*c, single));
    }
    Verdict {
        pass: fails == 0 && worst <= 0.10,
        detail: format!(
            "{msg}; t={:.0} MC {:.4}±{:.4} vs {:.4}; one-mode reduction worst {:.1e}",
            last.0,
            last.1,
            last.2,
            last.3,
            worst
        ),
    }
}

/// Max-norm distance between final states of two runs.
fn state_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn a8(inv: &mut Invariants) -> Verdict {
    let worst_single = inv.single.iter().map(|x| x.1).fold(0.0, f64::max);
    let worst_coupled = inv.coupled.iter().map(|x| x.1).fold(0.0, f64::max);
    let inv_ok = !inv.single.is_empty() && worst_single < 1e-8 && (inv.coupled.is_empty() || worst_coupled < 1e-6);

    let system = oscillator(1.0, 0.1);
    let horizon = 20.0;
    let real = SINE.synthesize(0, horizon).unwrap();
    let finals: Vec<Vec<f64>> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let cfg = IntegratorConfig { dt: Some(h), ..IntegratorConfig::default() };
            let traj = integrate(&system, InitialData::Vacuum(ModeIndex(1)), &real, Window::Unit, &cfg, horizon).unwrap();
            traj.last().y.clone()
        })
        .collect();
    let ratio = state_gap(&finals[0], &finals[1]) / state_gap(&finals[1], &finals[2]);
    let ratio_ok = (12.0..=20.0).contains(&ratio);
    Verdict {
        pass: inv_ok && ratio_ok,
        detail: format!(
            "max |ΔW| {worst_single:.2e} over {} single-mode runs, max sum-rule/W deviation {worst_coupled:.2e} over {} coupled runs; step-halving ratio {ratio:.2}",
            inv.single.len(),
            inv.coupled.len()
        ),
    }
}

fn a9(inv: &mut Invariants) -> Verdict {
    let (eps, mass) = (0.05, 1.0f64);
    let probes: Vec<f64> = (1..=5).map(|i| 160.0 * i as f64).collect();
    let mut fails = 0;
    let mut worst: f64 = 0.0;
    for (i, k) in [0.0, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let omega = (k * k + mass * mass).sqrt();
        let problem = Problem::new(oscillator(omega, eps), OU, Start::Vacuum { in_mode: 1 });
        let stats = run("A9", inv, &ensemble(500, 40 + i as u64, probes.clone()), &problem);
        let pts: Vec<_> = stats
            .series(Quantity::AbsBeta2, 1)
            .unwrap()
            .points
            .iter()
            .map(|p| (p.t, p.mean, p.stderr.unwrap(), theory::cosmo_beta2(k, mass, eps, &OU, p.t).unwrap()))
            .collect();
        let (f, _) = band_check(&pts, 0.10);
        fails += f;
        for p in &pts {
            worst = worst.max((p.1 - p.3).abs() / (K_SIGMA * p.2).max(0.10 * p.3));
        }
    }
    // k = 0 is the plain oscillator at ω = M, bit for bit.
    let zero_mode = (0.0f64 * 0.0 + mass * mass).sqrt() == mass
        && probes.iter().all(|&t| {
            theory::cosmo_beta2(0.0, mass, eps, &OU, t).unwrap().to_bits()
                == theory::msa_stochastic_beta2(mass, None, eps, &OU, t).unwrap().to_bits()
        });
    Verdict {
        pass: fails == 0 && zero_mode,
        detail: format!("{} probe failures over 4 momenta, worst deviation {worst:.2} of allowance; k=0 identity {zero_mode}", fails),
    }
}

fn a10(_: &mut Invariants) -> Verdict {
    let specs = [
        OU,
        band(2.5, 3.5, 64),
        NoiseSpec::SpectralLines { sigma: 1.0, t_c: 0.5, nu_min: 0.0, nu_max: 20.0, n_components: 64 },
    ];
    let pairs = common::probe_pairs();
    let mut parts = vec![];
    let mut pass = true;
    for (i, spec) in specs.iter().enumerate() {
        let checks = common::correlation_pairs(spec, &pairs, 10_000, 1000 * (i as u64 + 1));
        let inside = checks.iter().filter(|c| c.within(K_SIGMA)).count();
        pass &= inside == checks.len();
        parts.push(format!("{} {inside}/{}", spec.kind_name(), checks.len()));
    }
    Verdict { pass, detail: format!("pairs within 4 stderr: {}", parts.join(", ")) }
}

enum Criterion {
    Plain(fn(&mut Invariants) -> Verdict),
    Pair(fn(&mut Invariants) -> (Verdict, Verdict)),
    Second,
}

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut pending: Option<Verdict> = None;
    let criteria: [(&str, Criterion); 10] = [
        ("A1", Criterion::Plain(a1)),
        ("A2", Criterion::Plain(a2)),
        ("A3", Criterion::Plain(a3)),
        ("A4", Criterion::Plain(a4)),
        ("A5", Criterion::Pair(a5_a6)),
        ("A6", Criterion::Second),
        ("A7", Criterion::Plain(a7)),
        ("A8", Criterion::Plain(a8)),
        ("A9", Criterion::Plain(a9)),
        ("A10", Criterion::Plain(a10)),
    ];
    let mut inv = Invariants::default();
    let mut failed = 0;
    for (id, c) in criteria {
        let selected = wanted.is_empty() || wanted.iter().any(|w| w == id);
        // A6 reuses the A5 ensemble.
        let needed = selected || (id == "A5" && wanted.iter().any(|w| w == "A6"));
        if !needed {
            continue;
        }
        let clock = Instant::now();
        let v = match c {
            Criterion::Plain(f) => f(&mut inv),
            Criterion::Pair(f) => {
                let (first, second) = f(&mut inv);
                pending = Some(second);
                first
            }
            Criterion::Second => pending.take().expect("paired criterion runs first"),
        };
        if !selected {
            continue;
        }
        let verdict = if v.pass { "PASS" } else { "FAIL" };
        println!("{id} {verdict} ({:.1}s) {}", clock.elapsed().as_secs_f64(), v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
