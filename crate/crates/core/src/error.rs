use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlabError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("unknown or duplicate site label: {0}")]
    Label(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical integrity: {0}")]
    Numerical(String),
    #[error("path discretization: {0}")]
    Path(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GlabError>;
