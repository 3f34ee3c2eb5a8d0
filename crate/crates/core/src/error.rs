use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Some retained denominator `k^2 - |alpha + q|^2` vanished.
    #[error("resonant lattice term: |k^2 - |alpha+q|^2| = {gap:.3e} at q index ({m}, {n})")]
    Resonance { m: i64, n: i64, gap: f64 },

    #[error("evaluation point lies on the source lattice (distance {distance:.3e})")]
    Singular { distance: f64 },

    #[error("quasi-momentum alpha = 0 is not supported")]
    ZeroQuasiMomentum,

    #[error("bubbles overlap or touch: min separation {separation:.6} <= 2R = {diameter:.6}")]
    TouchingBubbles { separation: f64, diameter: f64 },

    #[error("quadrature under-resolved: n_quad = {n_quad} < {required}")]
    UnderResolved { n_quad: usize, required: usize },

    #[error("near-singular system: condition number {0:.3e}")]
    IllConditioned(f64),

    #[error("no characteristic value found in [{lo:.6e}, {hi:.6e}]")]
    NotFound { lo: f64, hi: f64 },

    #[error("not a characteristic pair: sigma ratio {0:.3e}")]
    NotCharacteristic(f64),

    #[error("capacitance matrix has a negative eigenvalue {0:.6e}")]
    NegativeCapacitance(f64),

    #[error("gradient pattern mismatch: relative deviation {0:.3e}")]
    PatternMismatch(f64),

    #[error("fit rejected: {0}")]
    BadFit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
