use thiserror::Error;

pub type Result<T> = std::result::Result<T, HmError>;

#[derive(Debug, Error)]
pub enum HmError {
    #[error("point is at the excluded pole of the {0:?} chart")]
    PoleSingular(crate::geometry::ChartId),

    #[error("degenerate map spec: {0}")]
    DegenerateSpec(String),

    #[error("gluing mismatch: endpoint geodesic of length {0:.4} exceeds pi/2")]
    GluingMismatch(f64),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("exponent q = {0} is outside [1, 2)")]
    InvalidExponent(f64),

    #[error("circle sample at stereographic radius {0} falls outside both chart grids")]
    CircleOutOfRange(f64),

    #[error("time step {dt:e} exceeds the stability bound {max:e}")]
    StepTooLarge { dt: f64, max: f64 },

    #[error("non-finite value produced at chart {chart:?} node ({i}, {j})")]
    NonFinite {
        chart: crate::geometry::ChartId,
        i: usize,
        j: usize,
    },

    #[error("range error: {0}")]
    RangeError(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("insufficient spread: {0}")]
    InsufficientSpread(String),

    #[error("fit window is empty")]
    WindowEmpty,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
