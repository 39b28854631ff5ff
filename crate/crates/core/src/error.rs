use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("integrator failed at x = {x} (energy {energy})")]
    StepFailure { x: f64, energy: Complex64 },

    #[error("root not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("root search did not converge: {0}")]
    RootFailure(String),

    #[error("branch of the quasimomentum is ambiguous at z = {0}")]
    BranchAmbiguity(Complex64),

    #[error("z = {z} lies beyond the computed band structure (last gap {n_max})")]
    BeyondTruncation { z: f64, n_max: usize },

    #[error("Weyl function has a pole at the Dirichlet root of gap {0}")]
    PoleAtMu(usize),

    #[error("point {0} is not on the surface")]
    NotOnSurface(Complex64),

    #[error("contour passes through a zero near {0}")]
    ContourThroughZero(Complex64),

    #[error("could not classify root {z} in gap {n}")]
    ClassificationAmbiguous { n: usize, z: f64 },

    #[error("gap {0} is closed")]
    ClosedGap(usize),

    #[error("momentum {0} is within tolerance of a band edge")]
    OnGapEdge(f64),

    #[error("state at {0} is not a bound state")]
    NotABoundState(Complex64),

    #[error("Dirichlet root of gap {0} is not at an edge")]
    NotEdgeCase(usize),

    #[error("gap {0} is outside the validity range of the prediction")]
    Inconclusive(usize),

    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
