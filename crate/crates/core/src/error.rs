use thiserror::Error;

/// Errors raised by the estimators, simulators and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("point {index} ({x}, {y}, {t}) lies outside the window")]
    PointOutsideWindow { index: usize, x: f64, y: f64, t: f64 },

    #[error("{} point(s) outside the window: {}", .0.len(), .0.iter().map(|(line, x, y, t)| format!("line {line} ({x}, {y}, {t})")).collect::<Vec<_>>().join(", "))]
    PointsOutsideWindow(Vec<(usize, f64, f64, f64)>),

    #[error("points {first} and {second} are identical")]
    DuplicatePoint { first: usize, second: usize },

    #[error("index {index} out of range for pattern of {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("insufficient neighbors: requested k = {k} but only {available} other points")]
    InsufficientNeighbors { k: usize, available: usize },

    #[error("displacement ({dx}, {dy}, {dt}) exceeds the window extent")]
    DisplacementTooLarge { dx: f64, dy: f64, dt: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid lag grid: {0}")]
    InvalidGrid(String),

    #[error("need at least {needed} points, got n = {n}")]
    TooFewPoints { needed: usize, n: usize },

    #[error("non-positive intensity {value} at point {index}")]
    NonPositiveIntensity { index: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("collinear design columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("no effective data: the weighted data mass is zero")]
    NoEffectiveData,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("covariance matrix is not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("grid of {cells} cells exceeds the dense solver cap of {cap}; use a coarser grid")]
    GridTooLarge { cells: usize, cap: usize },

    #[error("degenerate variance: every cell of V_K is below the exclusion threshold")]
    DegenerateVariance,

    #[error("optimization failed from every start: {0}")]
    OptimizationFailed(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("unknown scenario `{id}`; valid ids: {valid}")]
    UnknownScenario { id: String, valid: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
