use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("domain [{a}, {b}] not admissible for {kind}")]
    Domain { kind: &'static str, a: f64, b: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("density mass {mass} differs from 1")]
    Mass { mass: f64 },
    #[error("density support touches the domain boundary")]
    SupportAtBoundary,
    #[error("Jacobian not positive at t = {t} (map not displacement-admissible at this resolution)")]
    Jacobian { t: f64 },
    #[error("transported point {x} leaves the domain at t = {t}")]
    ExitsDomain { t: f64, x: f64 },
    #[error("transport positions not increasing at t = {t}")]
    NonMonotone { t: f64 },
    #[error("characteristics cross at t = {time}")]
    Caustic { time: f64 },
    #[error("conjugate point: K theta^2 = {value} exceeds the finite range")]
    ConjugatePoint { value: f64 },
    #[error("DC_N conditions disagree for N = {n}: {detail}")]
    DcnDisagreement { n: f64, detail: String },
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
