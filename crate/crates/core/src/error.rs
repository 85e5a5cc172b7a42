use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operands live on different grids or carry different spin dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A physical object violates one of its construction invariants.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A scenario, schedule or time grid is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("density is zero everywhere; nothing to sample")]
    DegenerateDensity,

    /// The environment configuration sits on a node of the universal wave
    /// function, so the conditional normalizer vanishes.
    #[error("environment configuration lies on a node (normalizer {norm:e})")]
    EnvironmentNode { norm: f64 },

    #[error("environment carries spin dimension {k2}; a conditional wave function needs k2 = 1")]
    SpinMismatch { k2: usize },

    #[error("dense kernel of size {size} exceeds the toy limit {limit}")]
    ToySize { size: usize, limit: usize },

    /// Packets would reach the box edge or branches would overlap at readout.
    #[error("experiment geometry: {0}")]
    Geometry(String),

    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
