use thiserror::Error;

/// Errors surfaced by chart, connection, submersion and curve operations.
///
/// Variants that carry coordinates always report the offending point so a
/// failing suite can name where the numerics broke down.
#[derive(Debug, Clone, Error)]
pub enum GeomError {
    #[error("point {coords:?} has {got} coordinates, chart '{chart}' has dimension {dim}")]
    DimensionMismatch {
        chart: String,
        dim: usize,
        got: usize,
        coords: Vec<f64>,
    },

    #[error("point {coords:?} lies outside the domain of chart '{chart}'")]
    OutsideDomain { chart: String, coords: Vec<f64> },

    #[error("point belongs to chart '{point_chart}', operation runs on chart '{chart}'")]
    ChartMismatch { chart: String, point_chart: String },

    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("{side} stencil endpoint {coords:?} left the domain of chart '{chart}'")]
    StencilOutsideDomain {
        chart: String,
        side: &'static str,
        coords: Vec<f64>,
    },

    #[error("metric is singular or not positive definite at {coords:?}")]
    SingularMetric { coords: Vec<f64> },

    #[error("metric is not symmetric at {coords:?} (max asymmetry {asymmetry:e})")]
    AsymmetricMetric { coords: Vec<f64>, asymmetry: f64 },

    #[error("not a submersion at {coords:?}: differential does not have full row rank {base_dim}")]
    RankDeficient { coords: Vec<f64>, base_dim: usize },

    #[error("horizontal projection of the connection is not projectable: fiber spread {spread:e} exceeds {tolerance:e} over the fiber of {base_coords:?}")]
    NotProjectable {
        base_coords: Vec<f64>,
        spread: f64,
        tolerance: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("curve index {index} must be interior (1..{len}-1); endpoint derivatives are not provided")]
    EndpointIndex { index: usize, len: usize },

    #[error("precondition failed: {what} (measured {measured:e}, required <= {required:e})")]
    PreconditionFailed {
        what: String,
        measured: f64,
        required: f64,
    },

    #[error("integration diverged at t={time}: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("trajectory left the chart domain at t={time}, point {coords:?}")]
    DomainExit { time: f64, coords: Vec<f64> },

    #[error("fiber of {base_coords:?} is not parametrized by vertical chart coordinates; geometry unsupported")]
    UnsupportedFiber { base_coords: Vec<f64> },

    #[error("{0}")]
    Unsupported(String),
}

impl GeomError {
    /// True for breakdowns of the numerics themselves (domain exits, singular
    /// matrices, divergence) as opposed to bad arguments.
    pub fn is_numerical_breakdown(&self) -> bool {
        matches!(
            self,
            GeomError::OutsideDomain { .. }
                | GeomError::StencilOutsideDomain { .. }
                | GeomError::SingularMetric { .. }
                | GeomError::AsymmetricMetric { .. }
                | GeomError::RankDeficient { .. }
                | GeomError::NotProjectable { .. }
                | GeomError::Divergence { .. }
                | GeomError::DomainExit { .. }
        )
    }
}
