//! Stationary zero-mean noise: correlation `R(u)`, one-sided spectrum
//! `S(ν) = ∫₀^∞ R(u) e^{iνu} du`, and smooth realizations `ξ(t)` with
//! analytic first and second derivatives.
//!
//! Spectral kinds are synthesized as a finite sum of random-phase cosines
//! with stratified frequencies, so every derivative is exact. The
//! Ornstein-Uhlenbeck kind is sampled by exact discretization on a fine grid
//! and interpolated with a natural cubic spline (C², but the second
//! derivative is only piecewise linear, which is why coupled runs reject it).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// OU grid spacing in units of the correlation time.
pub const OU_GRID_PER_TC: f64 = 50.0;
/// Extra OU knots on both sides of `[0, horizon]`, keeping the natural
/// spline end conditions away from the sampled interval.
const OU_PAD_KNOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    OrnsteinUhlenbeck {
        sigma: f64,
        #[serde(rename = "t_c_time")]
        t_c: f64,
    },
    BandLimited {
        sigma: f64,
        #[serde(rename = "nu_min_rad_per_time")]
        nu_min: f64,
        #[serde(rename = "nu_max_rad_per_time")]
        nu_max: f64,
        n_components: usize,
    },
    /// Lorentzian (OU-shaped) power restricted to a band, synthesized as lines.
    SpectralLines {
        sigma: f64,
        #[serde(rename = "t_c_time")]
        t_c: f64,
        #[serde(rename = "nu_min_rad_per_time")]
        nu_min: f64,
        #[serde(rename = "nu_max_rad_per_time")]
        nu_max: f64,
        n_components: usize,
    },
    DeterministicSinusoid {
        #[serde(rename = "omega_drive_rad_per_time")]
        omega_drive: f64,
    },
}

/// Power density shape on a band `[a, b]`, normalized so `∫ P = σ²`.
#[derive(Debug, Clone, Copy)]
struct Band {
    sigma2: f64,
    a: f64,
    b: f64,
    /// `None` is flat; `Some(t_c)` is `∝ 1/(1+ν²t_c²)`.
    lorentz: Option<f64>,
}

impl Band {
    fn norm(&self) -> f64 {
        match self.lorentz {
            None => self.sigma2 / (self.b - self.a),
            Some(t) => self.sigma2 * t / ((self.b * t).atan() - (self.a * t).atan()),
        }
    }

    fn density(&self, x: f64) -> f64 {
        match self.lorentz {
            None => self.norm(),
            Some(t) => self.norm() / (1.0 + x * x * t * t),
        }
    }

    fn re_spectrum(&self, nu: f64) -> f64 {
        let x = nu.abs();
        let (a, b) = (self.a, self.b);
        let weight = if (x > a && x < b) || (x == 0.0 && a == 0.0) {
            1.0
        } else if x == a || x == b {
            0.5
        } else {
            0.0
        };
        if weight == 0.0 {
            return 0.0;
        }
        weight * 0.5 * PI * self.density(x)
    }

    fn im_spectrum(&self, nu: f64) -> f64 {
        if nu == 0.0 {
            return 0.0;
        }
        let log_term = |x: f64| 0.5 * ((nu + x) / (nu - x)).abs().ln();
        let c = self.norm();
        match self.lorentz {
            None => c * (log_term(self.b) - log_term(self.a)),
            Some(t) => {
                let f = |x: f64| log_term(x) + nu * t * (t * x).atan();
                c / (1.0 + nu * nu * t * t) * (f(self.b) - f(self.a))
            }
        }
    }

    fn correlation(&self, u: f64) -> f64 {
        let u = u.abs();
        match self.lorentz {
            None => {
                if u == 0.0 {
                    self.sigma2
                } else {
                    self.norm() * ((self.b * u).sin() - (self.a * u).sin()) / u
                }
            }
            Some(_) => {
                let panels = 32 + (4.0 * (self.b - self.a) * u / PI).ceil() as usize;
                gauss_legendre(self.a, self.b, panels, |x| self.density(x) * (x * u).cos())
            }
        }
    }

    fn inverse_cdf(&self, p: f64) -> f64 {
        match self.lorentz {
            None => self.a + p * (self.b - self.a),
            Some(t) => {
                let lo = (self.a * t).atan();
                let hi = (self.b * t).atan();
                (lo + p * (hi - lo)).tan() / t
            }
        }
    }
}

const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Composite 8-point Gauss-Legendre rule on `[a, b]`.
pub(crate) fn gauss_legendre(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for &(x, w) in &GL8 {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

impl NoiseSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NoiseSpec::OrnsteinUhlenbeck { .. } => "ornstein_uhlenbeck",
            NoiseSpec::BandLimited { .. } => "band_limited",
            NoiseSpec::SpectralLines { .. } => "spectral_lines",
            NoiseSpec::DeterministicSinusoid { .. } => "deterministic_sinusoid",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, NoiseSpec::DeterministicSinusoid { .. })
    }

    /// Every seed yields the same path (deterministic drive or zero amplitude).
    pub fn is_seed_independent(&self) -> bool {
        match *self {
            NoiseSpec::DeterministicSinusoid { .. } => true,
            NoiseSpec::OrnsteinUhlenbeck { sigma, .. }
            | NoiseSpec::BandLimited { sigma, .. }
            | NoiseSpec::SpectralLines { sigma, .. } => sigma == 0.0,
        }
    }

    /// Whether realizations carry smooth (C^∞) derivatives usable by coupled runs.
    pub fn has_smooth_derivatives(&self) -> bool {
        !matches!(self, NoiseSpec::OrnsteinUhlenbeck { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("noise {name} must be finite, got {x}")))
            }
        };
        let check_sigma = |s: f64| {
            finite("sigma", s)?;
            if s < 0.0 {
                return Err(config_err(format!("noise sigma must be >= 0, got {s}")));
            }
            Ok(())
        };
        let check_tc = |t: f64| {
            finite("t_c", t)?;
            if t <= 0.0 {
                return Err(config_err(format!("noise t_c must be > 0, got {t}")));
            }
            Ok(())
        };
        let check_band = |a: f64, b: f64, n: usize| {
            finite("nu_min", a)?;
            finite("nu_max", b)?;
            if !(0.0 <= a && a < b) {
                return Err(config_err(format!("noise band needs 0 <= nu_min < nu_max, got [{a}, {b}]")));
            }
            if n == 0 {
                return Err(config_err("noise n_components must be >= 1"));
            }
            Ok(())
        };
        match *self {
            NoiseSpec::OrnsteinUhlenbeck { sigma, t_c } => {
                check_sigma(sigma)?;
                check_tc(t_c)
            }
            NoiseSpec::BandLimited { sigma, nu_min, nu_max, n_components } => {
                check_sigma(sigma)?;
                check_band(nu_min, nu_max, n_components)
            }
            NoiseSpec::SpectralLines { sigma, t_c, nu_min, nu_max, n_components } => {
                check_sigma(sigma)?;
                check_tc(t_c)?;
                check_band(nu_min, nu_max, n_components)
            }
            NoiseSpec::DeterministicSinusoid { omega_drive } => finite("omega_drive", omega_drive),
        }
    }

    fn band(&self) -> Option<Band> {
        match *self {
            NoiseSpec::BandLimited { sigma, nu_min, nu_max, .. } => Some(Band {
                sigma2: sigma * sigma,
                a: nu_min,
                b: nu_max,
                lorentz: None,
            }),
            NoiseSpec::SpectralLines { sigma, t_c, nu_min, nu_max, .. } => Some(Band {
                sigma2: sigma * sigma,
                a: nu_min,
                b: nu_max,
                lorentz: Some(t_c),
            }),
            _ => None,
        }
    }

    /// `R(u) = ⟨ξ(t)ξ(t+u)⟩`.
    pub fn correlation(&self, u: f64) -> Result<f64> {
        self.validate()?;
        match *self {
            NoiseSpec::OrnsteinUhlenbeck { sigma, t_c } => Ok(sigma * sigma * (-u.abs() / t_c).exp()),
            NoiseSpec::DeterministicSinusoid { .. } => Err(Error::NotStochastic),
            _ => Ok(self.band().expect("spectral kind").correlation(u)),
        }
    }

    /// One-sided transform `S(ν)`. Negative `ν` returns `S(|ν|)*`.
    ///
    /// Spectral-line kinds report the smooth target spectrum, not the line
    /// comb of any single realization. At the band edges `Im S` has a
    /// logarithmic singularity and the result is infinite.
    pub fn spectrum(&self, nu: f64) -> Result<Complex64> {
        self.validate()?;
        match *self {
            NoiseSpec::OrnsteinUhlenbeck { sigma, t_c } => {
                let d = 1.0 + nu * nu * t_c * t_c;
                Ok(Complex64::new(sigma * sigma * t_c / d, sigma * sigma * nu * t_c * t_c / d))
            }
            NoiseSpec::DeterministicSinusoid { .. } => Err(Error::NotStochastic),
            _ => {
                let band = self.band().expect("spectral kind");
                if band.sigma2 == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                Ok(Complex64::new(band.re_spectrum(nu), band.im_spectrum(nu)))
            }
        }
    }

    /// Draws one realization on `[0, horizon]`.
    pub fn synthesize(&self, seed: u64, horizon: f64) -> Result<NoiseRealization> {
        self.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(config_err(format!("noise horizon must be > 0, got {horizon}")));
        }
        let path = match *self {
            NoiseSpec::DeterministicSinusoid { omega_drive } => Path::Sinusoid { omega: omega_drive },
            NoiseSpec::OrnsteinUhlenbeck { sigma, .. }
            | NoiseSpec::BandLimited { sigma, .. }
            | NoiseSpec::SpectralLines { sigma, .. }
                if sigma == 0.0 =>
            {
                Path::Zero
            }
            NoiseSpec::OrnsteinUhlenbeck { sigma, t_c } => {
                Path::Spline(ou_path(sigma, t_c, seed, horizon))
            }
            NoiseSpec::BandLimited { sigma, n_components, .. }
            | NoiseSpec::SpectralLines { sigma, n_components, .. } => {
                let band = self.band().expect("spectral kind");
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let amplitude = sigma * (2.0 / n_components as f64).sqrt();
                let lines = (0..n_components)
                    .map(|j| {
                        let p = (j as f64 + rng.random::<f64>()) / n_components as f64;
                        Line {
                            amplitude,
                            frequency: band.inverse_cdf(p),
                            phase: 2.0 * PI * rng.random::<f64>(),
                        }
                    })
                    .collect();
                Path::Lines(lines)
            }
        };
        Ok(NoiseRealization { seed, horizon, path })
    }
}

fn ou_path(sigma: f64, t_c: f64, seed: u64, horizon: f64) -> CubicSpline {
    let step = t_c / OU_GRID_PER_TC;
    let inner = (horizon / step).ceil() as usize;
    let n = inner + 2 * OU_PAD_KNOTS;
    let rho = (-step / t_c).exp();
    let kick = sigma * (1.0 - rho * rho).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n + 1);
    let mut x = sigma * rng.sample::<f64, _>(StandardNormal);
    values.push(x);
    for _ in 0..n {
        x = rho * x + kick * rng.sample::<f64, _>(StandardNormal);
        values.push(x);
    }
    CubicSpline::natural(-(OU_PAD_KNOTS as f64) * step, step, values)
}

/// One `a cos(νt + φ)` term of a spectral synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// `ξ`, `ξ̇`, `ξ̈` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriveSample {
    pub xi: f64,
    pub dxi: f64,
    pub ddxi: f64,
}

/// Natural cubic spline on a uniform grid.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    t0: f64,
    step: f64,
    inv_step: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(t0: f64, step: f64, y: Vec<f64>) -> Self {
        let n = y.len() - 1;
        let mut m = vec![0.0; n + 1];
        if n >= 2 {
            // Thomas algorithm on M[i-1] + 4 M[i] + M[i+1] = rhs[i], i = 1..n-1.
            let scale = 6.0 / (step * step);
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n {
                let rhs = scale * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
                let denom = 4.0 - c[i - 1];
                c[i] = 1.0 / denom;
                d[i] = (rhs - d[i - 1]) / denom;
            }
            for i in (1..n).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        CubicSpline { t0, step, inv_step: 1.0 / step, y, m }
    }

    pub fn knot_spacing(&self) -> f64 {
        self.step
    }

    pub fn sample(&self, t: f64) -> DriveSample {
        let n = self.y.len() - 1;
        let x = (t - self.t0) * self.inv_step;
        let i = (x.max(0.0) as usize).min(n - 1);
        let b = x - i as f64;
        let a = 1.0 - b;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let h6 = self.step / 6.0;
        DriveSample {
            xi: a * y0 + b * y1 + ((a * a - 1.0) * a * m0 + (b * b - 1.0) * b * m1) * self.step * h6,
            dxi: (y1 - y0) * self.inv_step + ((3.0 * b * b - 1.0) * m1 - (3.0 * a * a - 1.0) * m0) * h6,
            ddxi: a * m0 + b * m1,
        }
    }
}

#[derive(Debug, Clone)]
enum Path {
    Zero,
    Sinusoid { omega: f64 },
    Lines(Vec<Line>),
    Spline(CubicSpline),
}

/// A concrete noise path on `[0, horizon]`, reproducible from `(spec, seed)`.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    seed: u64,
    horizon: f64,
    path: Path,
}

impl NoiseRealization {
    pub fn zero(horizon: f64) -> Self {
        NoiseRealization { seed: 0, horizon, path: Path::Zero }
    }

    pub fn from_lines(lines: Vec<Line>, horizon: f64) -> Self {
        NoiseRealization { seed: 0, horizon, path: Path::Lines(lines) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lines(&self) -> Option<&[Line]> {
        match &self.path {
            Path::Lines(l) => Some(l),
            _ => None,
        }
    }

    /// Knot spacing of a path-based realization.
    pub fn knot_spacing(&self) -> Option<f64> {
        match &self.path {
            Path::Spline(s) => Some(s.knot_spacing()),
            _ => None,
        }
    }

    /// Derivative of order 0, 1 or 2 at `t ∈ [0, horizon]`.
    pub fn eval(&self, t: f64, order: u8) -> Result<f64> {
        let slack = 1e-9 * self.horizon.max(1.0);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let s = self.sample(t);
        match order {
            0 => Ok(s.xi),
            1 => Ok(s.dxi),
            2 => Ok(s.ddxi),
            _ => Err(config_err(format!("derivative order {order} not available (0, 1 or 2)"))),
        }
    }

    /// Unchecked evaluation of all three derivatives.
    pub fn sample(&self, t: f64) -> DriveSample {
        match &self.path {
            Path::Zero => DriveSample::default(),
            Path::Sinusoid { omega } => {
                let (s, c) = (omega * t).sin_cos();
                DriveSample { xi: s, dxi: omega * c, ddxi: -omega * omega * s }
            }
            Path::Lines(lines) => {
                let mut out = DriveSample::default();
                for l in lines {
                    let (s, c) = (l.frequency * t + l.phase).sin_cos();
                    out.xi += l.amplitude * c;
                    out.dxi -= l.amplitude * l.frequency * s;
                    out.ddxi -= l.amplitude * l.frequency * l.frequency * c;
                }
                out
            }
            Path::Spline(s) => s.sample(t),
        }
    }

    /// Sampler over the uniform grid `t0 + i·delta`, `i = 0, 1, ...`.
    pub fn grid_sampler(&self, t0: f64, delta: f64) -> GridSampler<'_> {
        GridSampler::new(self, t0, delta)
    }
}

const RESYNC_EVERY: u32 = 2048;

/// Largest phase of the fastest line between two exact knots of a sampler.
/// The quintic fill-in then errs by about 1e-9 relative in `ξ` and 1e-6
/// in `ξ̈`.
pub const KNOT_PHASE: f64 = 0.2;

/// Sequential sampler on a uniform grid.
///
/// Line sums are evaluated exactly on a coarser knot grid (phasor rotation
/// with periodic resynchronization) and filled in between with the quintic
/// Hermite interpolant of `(ξ, ξ̇, ξ̈)`, so the drive stays C² and its
/// derivatives stay mutually consistent. Cloning forks the stream.
#[derive(Debug, Clone)]
pub struct GridSampler<'a> {
    real: &'a NoiseRealization,
    t0: f64,
    delta: f64,
    index: u64,
    rotor: Option<Rotor>,
}

#[derive(Debug, Clone)]
struct Rotor {
    /// Grid points per knot interval.
    stride: u64,
    knot_step: f64,
    next_knot: u64,
    segment: Option<Segment>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    rot_cos: Vec<f64>,
    rot_sin: Vec<f64>,
    /// `a`, `aν` and `aν²` per line.
    a0: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    since_sync: u32,
}

/// Quintic in `s ∈ [0, 1]` matching value, slope and curvature at both knots.
#[derive(Debug, Clone, Copy)]
struct Segment {
    right: DriveSample,
    c: [f64; 6],
}

impl Segment {
    fn new(left: DriveSample, right: DriveSample, d: f64) -> Self {
        let (c0, c1, c2) = (left.xi, d * left.dxi, 0.5 * d * d * left.ddxi);
        let p = right.xi - c0 - c1 - c2;
        let v = d * right.dxi - c1 - 2.0 * c2;
        let a = d * d * right.ddxi - 2.0 * c2;
        let c3 = 10.0 * p - 4.0 * v + 0.5 * a;
        let c4 = -15.0 * p + 7.0 * v - a;
        let c5 = 6.0 * p - 3.0 * v + 0.5 * a;
        Segment { right, c: [c0, c1, c2, c3, c4, c5] }
    }

    fn eval(&self, s: f64, d: f64) -> DriveSample {
        let c = &self.c;
        let xi = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        let dxi = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
        let ddxi = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
        DriveSample { xi, dxi: dxi / d, ddxi: ddxi / (d * d) }
    }
}

const LANES: usize = 4;

impl Rotor {
    /// Exact sample at the next knot; knots are visited in order.
    fn knot(&mut self, lines: &[Line], t0: f64) -> DriveSample {
        if self.since_sync >= RESYNC_EVERY {
            let t = t0 + self.next_knot as f64 * self.knot_step;
            for (j, l) in lines.iter().enumerate() {
                let (s, c) = (l.frequency * t + l.phase).sin_cos();
                self.cos[j] = c;
                self.sin[j] = s;
            }
            self.since_sync = 0;
        }
        self.since_sync += 1;
        self.next_knot += 1;
        self.sum_and_advance()
    }

    /// Sums the three derivatives and rotates every phasor by one grid step.
    /// Lines are reduced in independent lanes so the loop vectorizes.
    fn sum_and_advance(&mut self) -> DriveSample {
        let mut acc = [[0.0f64; LANES]; 3];
        let c = self.cos.chunks_exact_mut(LANES);
        let s = self.sin.chunks_exact_mut(LANES);
        let rc = self.rot_cos.chunks_exact(LANES);
        let rs = self.rot_sin.chunks_exact(LANES);
        let a0 = self.a0.chunks_exact(LANES);
        let a1 = self.a1.chunks_exact(LANES);
        let a2 = self.a2.chunks_exact(LANES);
        let n = self.a0.len();
        let full = n - n % LANES;
        for ((((((c, s), rc), rs), a0), a1), a2) in c.zip(s).zip(rc).zip(rs).zip(a0).zip(a1).zip(a2) {
            for l in 0..LANES {
                let (cj, sj) = (c[l], s[l]);
                acc[0][l] += a0[l] * cj;
                acc[1][l] += a1[l] * sj;
                acc[2][l] += a2[l] * cj;
                c[l] = cj * rc[l] - sj * rs[l];
                s[l] = sj * rc[l] + cj * rs[l];
            }
        }
        for j in full..n {
            let (cj, sj) = (self.cos[j], self.sin[j]);
            acc[0][0] += self.a0[j] * cj;
            acc[1][0] += self.a1[j] * sj;
            acc[2][0] += self.a2[j] * cj;
            self.cos[j] = cj * self.rot_cos[j] - sj * self.rot_sin[j];
            self.sin[j] = sj * self.rot_cos[j] + cj * self.rot_sin[j];
        }
        let total = |v: [f64; LANES]| (v[0] + v[1]) + (v[2] + v[3]);
        DriveSample { xi: total(acc[0]), dxi: -total(acc[1]), ddxi: -total(acc[2]) }
    }
}

impl<'a> GridSampler<'a> {
    fn new(real: &'a NoiseRealization, t0: f64, delta: f64) -> Self {
        let rotor = match &real.path {
            Path::Lines(lines) => {
                let nu_max = lines.iter().map(|l| l.frequency.abs()).fold(0.0, f64::max);
                // Even strides put knots on whole steps of a half-step grid, so
                // an RK4 step never straddles a jump in the third derivative.
                let fit = if nu_max * delta > 0.0 { (KNOT_PHASE / (nu_max * delta)).floor() as u64 } else { 1 };
                let stride = if fit >= 2 { fit - fit % 2 } else { 1 };
                let knot_step = stride as f64 * delta;
                let (rot_sin, rot_cos) = lines.iter().map(|l| (l.frequency * knot_step).sin_cos()).unzip();
                Some(Rotor {
                    stride,
                    knot_step,
                    next_knot: 0,
                    segment: None,
                    cos: vec![0.0; lines.len()],
                    sin: vec![0.0; lines.len()],
                    rot_cos,
                    rot_sin,
                    a0: lines.iter().map(|l| l.amplitude).collect(),
                    a1: lines.iter().map(|l| l.amplitude * l.frequency).collect(),
                    a2: lines.iter().map(|l| l.amplitude * l.frequency * l.frequency).collect(),
                    since_sync: RESYNC_EVERY,
                })
            }
            _ => None,
        };
        GridSampler { real, t0, delta, index: 0, rotor }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.index as f64 * self.delta
    }

    /// Returns the sample at the current index and advances by one.
    pub fn next_sample(&mut self) -> DriveSample {
        let t = self.time();
        let out = match (&self.real.path, &mut self.rotor) {
            (Path::Lines(lines), Some(r)) if r.stride == 1 => r.knot(lines, self.t0),
            (Path::Lines(lines), Some(r)) => {
                let offset = self.index % r.stride;
                if offset == 0 {
                    let left = match r.segment {
                        Some(seg) => seg.right,
                        None => r.knot(lines, self.t0),
                    };
                    let right = r.knot(lines, self.t0);
                    r.segment = Some(Segment::new(left, right, r.knot_step));
                }
                let seg = r.segment.as_ref().expect("segment set at knot");
                seg.eval(offset as f64 / r.stride as f64, r.knot_step)
            }
            _ => self.real.sample(t),
        };
        self.index += 1;
        out
    }
}

/// Multiplicative switching envelope `w(t)` for the drive.
///
/// `Smooth` ramps up on `[0, ramp]` with the quintic smoothstep (C²) and, when
/// `stop` is set, ramps down on `[stop - ramp, stop]` and stays at zero after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Unit,
    Smooth { ramp: f64, stop: Option<f64> },
}

fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        let om = 1.0 - x;
        (
            x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
            30.0 * x2 * om * om,
            60.0 * x * om * (1.0 - 2.0 * x),
        )
    }
}

impl Window {
    /// `(w, ẇ, ẅ)` at `t`.
    pub fn weights(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Window::Unit => (1.0, 0.0, 0.0),
            Window::Smooth { ramp, stop } => {
                let (u, du, ddu) = smoothstep(t / ramp);
                let (u, du, ddu) = (u, du / ramp, ddu / (ramp * ramp));
                match stop {
                    None => (u, du, ddu),
                    Some(stop) => {
                        let (d, dd, ddd) = smoothstep((stop - t) / ramp);
                        let (d, dd, ddd) = (d, -dd / ramp, ddd / (ramp * ramp));
                        (u * d, du * d + u * dd, ddu * d + 2.0 * du * dd + u * ddd)
                    }
                }
            }
        }
    }

    pub fn apply(&self, t: f64, s: DriveSample) -> DriveSample {
        if let Window::Unit = self {
            return s;
        }
        let (w, dw, ddw) = self.weights(t);
        DriveSample {
            xi: w * s.xi,
            dxi: dw * s.xi + w * s.dxi,
            ddxi: ddw * s.xi + 2.0 * dw * s.dxi + w * s.ddxi,
        }
    }

    /// `∫₀^{t_end} w(t)² dt`: the effective exposure time of a windowed drive.
    pub fn exposure(&self, t_end: f64) -> f64 {
        match *self {
            Window::Unit => t_end,
            Window::Smooth { ramp, stop } => {
                let mut cuts = vec![0.0, ramp, t_end];
                if let Some(s) = stop {
                    cuts.extend([s - ramp, s]);
                }
                let mut cuts: Vec<f64> = cuts.into_iter().map(|c| c.clamp(0.0, t_end)).collect();
                cuts.sort_by(f64::total_cmp);
                cuts.windows(2)
                    .filter(|w| w[1] > w[0])
                    .map(|w| gauss_legendre(w[0], w[1], 16, |t| self.weights(t).0.powi(2)))
                    .sum()
            }
        }
    }
}
