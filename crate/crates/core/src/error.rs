use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the range where the closed forms are valid.
    #[error("domain error: {0}")]
    Domain(String),

    /// The nearest-point projection is undefined at this point.
    #[error("projection undefined: point at distance {distance:.3e} from the target exceeds the tubular radius {radius}")]
    ProjectionUndefined { distance: f64, radius: f64 },

    /// A caller violated an operation contract (sizes, tags, tangency).
    #[error("contract violated: {0}")]
    Contract(String),

    /// Arclength reparametrization needs strictly positive speed.
    #[error("reparametrization undefined: zero velocity at s = {s} (node {node})")]
    ZeroVelocity { node: usize, s: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
