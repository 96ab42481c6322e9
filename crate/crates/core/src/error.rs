use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mesh construction failed in region {region}: {reason}")]
    Geometry { region: String, reason: String },

    #[error("inverted deformation state (det F = {det_f:.3e})")]
    InvertedState { det_f: f64 },

    #[error("element {element} inverted at quadrature point {point} (det F = {det_f:.3e})")]
    InvertedElement {
        element: usize,
        point: usize,
        det_f: f64,
    },

    #[error("missing surface set `{0}`")]
    MissingSurface(String),

    #[error("surface `{0}` is open; cavity volume is undefined")]
    OpenSurface(String),

    #[error("newton solver failed at load factor {load_factor:.4}: {reason}")]
    Solver { load_factor: f64, reason: String },

    #[error("stress-free geometry iteration diverged; distance trace (mm): {trace:?}")]
    StressFreeDiverged { trace: Vec<f64> },

    #[error("stress-free geometry did not reach {tol:.1e} mm in {iterations} iterations; last distance {last:.3e} mm")]
    StressFreeNotConverged {
        tol: f64,
        iterations: usize,
        last: f64,
    },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate identification data: condition number {condition:.3e}, near-dependent columns {columns:?}")]
    DegenerateData {
        condition: f64,
        columns: Vec<&'static str>,
    },

    #[error("empty DOF selection")]
    EmptySelection,

    #[error("identification needs at least {needed} deformation states, got {got}")]
    TooFewStates { needed: usize, got: usize },

    #[error("identification failed: {0}")]
    IdentificationFailed(String),

    #[error("invalid contour: {0}")]
    Contour(String),

    #[error("state selection failed: {0}")]
    StateSelection(String),

    #[error("history is empty")]
    EmptyHistory,

    #[error("{what}: expected {expected}, found {found}")]
    Mismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
