use std::path::PathBuf;

/// Errors raised by geometry, meshing, assembly and solver routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coarse partition does not tile the outer boundary: {0}")]
    PartitionMismatch(String),
    #[error("geometry is not axis-aligned or not snapped: {0}")]
    GeometryNotSnapped(String),
    #[error("perforations {0} and {1} overlap or touch")]
    OverlappingPerforations(usize, usize),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("fine pitch {pitch} does not divide {what}")]
    PitchMismatch { pitch: f64, what: String },
    #[error("computational domain is disconnected ({components} components)")]
    DisconnectedDomain { components: usize },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("triangle {triangle} is not contained in a single coarse cell")]
    NonConformingMesh { triangle: usize },
    #[error("boundary edge ({0}, {1}) is not covered by any tagged segment")]
    UntaggedBoundaryEdge(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite (non-positive pivot at {index})")]
    NotPositiveDefinite { index: usize },
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("meshes are not nested: {0}")]
    MeshNotNested(String),
    #[error("fine node {node} at ({x}, {y}) lies on a cell interface but not on the skeleton")]
    NodeOffSkeleton { node: usize, x: f64, y: f64 },
    #[error("coarse node {node} at ({x}, {y}) has no matching fine mesh node")]
    CoarseNodeNotInMesh { node: usize, x: f64, y: f64 },
    #[error("local problem on cell {cell} is singular")]
    SingularLocalSystem { cell: usize },
    #[error("cells disagree on skeleton node {node} by {diff:e}")]
    GluingMismatch { node: usize, diff: f64 },
    #[error("coarse matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("placement failed after {attempts} rejections ({buildings} buildings, {walls} walls placed)")]
    PlacementFailure {
        attempts: usize,
        buildings: usize,
        walls: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error reflects bad input (as opposed to a numerical failure).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularLocalSystem { .. }
                | Error::GluingMismatch { .. }
                | Error::RankDeficient(_)
                | Error::Factorization(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
