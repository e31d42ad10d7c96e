use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point ({x:.6e}, {y:.6e}, {z:.6e}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64, z: f64 },

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("zones `{first}` and `{second}` overlap")]
    ZoneOverlap { first: String, second: String },

    #[error("zones do not tile the domain: {0}")]
    ZoneGap(String),

    #[error("degenerate element geometry: spacing {0:?}")]
    DegenerateElement([f64; 3]),

    #[error("invalid boundary condition: {0}")]
    InvalidBoundary(String),

    #[error("invalid time integration parameters: {0}")]
    InvalidTimeStep(String),

    #[error("effective operator is singular or indefinite (missing constraints?)")]
    SingularOperator,

    #[error("linear solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error("simulation became unstable at t = {time:.6e} s (max |d| = {max_displacement:.3e} m)")]
    Unstable { time: f64, max_displacement: f64 },

    #[error("invalid vessel: {0}")]
    InvalidVessel(String),

    #[error("invalid displacement history: {0}")]
    InvalidHistory(String),

    #[error("field too small: {0}")]
    FieldTooSmall(String),

    #[error("elastogram is fully masked (degenerate input field)")]
    FullyMasked,

    #[error("region is empty after masking")]
    EmptyRegion,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
