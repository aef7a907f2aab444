use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown gallery domain `{0}`")]
    UnknownDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point {0:?} lies outside the domain")]
    PointOutside(Vec<f64>),
    #[error("window does not cover the requested region: {0}")]
    Window(String),
    #[error("empty family: {0}")]
    EmptyFamily(String),
    #[error("adjacency graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("admissible set is empty: {0}")]
    EmptyAdmissible(String),
    #[error("support touches the boundary: {0}")]
    SupportTouchesBoundary(String),
    #[error("weight exponent out of range: {0}")]
    WeightExponent(String),
    #[error("quadrature inconsistency: {0}")]
    Quadrature(String),
    #[error("scales below sample resolution: {0}")]
    Resolution(String),
    #[error("unknown fixture family `{0}`")]
    UnknownFixture(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
