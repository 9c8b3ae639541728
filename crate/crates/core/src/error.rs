use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("derivative order {0} not supported (max 3)")]
    DerivativeOrder(usize),

    #[error("moment generating function diverges at s = {s} (requires s < {c})")]
    MgfDiverges { s: f64, c: f64 },

    #[error("law has unbounded support (b = infinity); only admissible for simulation")]
    UnboundedLaw,

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("cannot parse law spec {spec:?}: {reason}")]
    LawSpec { spec: String, reason: String },

    #[error("target below saddle range: t = {t}")]
    TargetBelowRange { t: f64 },

    #[error("target out of numeric range: t = {t} needs s > {s_max}")]
    TargetOutOfRange { t: f64, s_max: f64 },

    #[error("root finder did not converge after {iterations} iterations (s = {s}, residual = {residual})")]
    NoConvergence {
        iterations: usize,
        s: f64,
        residual: f64,
    },

    #[error("quadrature did not converge: partial value {value}, error estimate {error}")]
    Quadrature { value: f64, error: f64 },

    #[error("subcritical t: I(t)=0 boundary case (t = {t}, phi'(0+) = {threshold})")]
    Subcritical { t: f64, threshold: f64 },

    #[error("series precondition violated: {0}")]
    SeriesPrecondition(String),

    #[error("stirling number index out of range: n = {n}, k = {k}")]
    StirlingRange { n: usize, k: usize },

    #[error("density grid: {0}")]
    Grid(String),

    #[error("t = {t} outside grid range ({lo}, {hi}]")]
    OutOfGrid { t: f64, lo: f64, hi: f64 },

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("expectations file: {0}")]
    Expectations(String),
}

pub type Result<T> = std::result::Result<T, Error>;
