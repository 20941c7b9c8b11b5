use thiserror::Error;

/// Everything that can go wrong in the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("deterministic drive is not a stochastic process; correlation and spectrum are undefined")]
    NotStochastic,

    #[error("time {t} outside realization range [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("{kind} noise does not provide the derivatives a coupled run needs; use a spectral kind")]
    DerivativeUnsupported { kind: &'static str },

    #[error("geometry collapse at t = {t}: 1 + eps*xi = {factor}")]
    GeometryCollapse { t: f64, factor: f64 },

    #[error("wall not at rest at extraction time {t}: xi = {xi}, dxi = {dxi}")]
    ExtractionWindow { t: f64, xi: f64, dxi: f64 },

    #[error("step resolution guard violated: dt*omega_max = {product} > 0.1")]
    ResolutionGuard { product: f64 },

    #[error("degenerate spectrum: omega[{a}] and omega[{b}] agree to relative 1e-6")]
    DegenerateSpectrum { a: usize, b: usize },

    #[error("invariant violated in realization {index} (seed {seed:#018x}): {what} deviates by {deviation:e} (limit {limit:e})")]
    InvariantViolation {
        index: u64,
        seed: u64,
        what: &'static str,
        deviation: f64,
        limit: f64,
    },

    #[error("{aborted} of {total} realizations aborted (limit 1%)")]
    TooManyAborts { aborted: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
