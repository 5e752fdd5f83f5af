use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("cross-product matrix is rank deficient{}", at_origin(*.origin))]
    RankDeficient { origin: Option<usize> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid sample split: {0}")]
    InvalidSplit(String),

    #[error("bandwidth out of range: M = {bandwidth} with n = {n}")]
    BandwidthOutOfRange { bandwidth: usize, n: usize },

    #[error("degenerate long-run variance (omega^2 = {omega2:e}, dbar = {dbar:e})")]
    DegenerateVariance { omega2: f64, dbar: f64 },

    #[error("singular block: {0}")]
    SingularBlock(String),

    #[error("invalid parameters: {0}")]
    InvalidSpec(String),

    #[error("degenerate spectrum: leading eigenvalue {top:e} is not separated from {second:e}")]
    DegenerateSpectrum { top: f64, second: f64 },

    #[error("non-positive price at position {0}")]
    NonPositivePrice(usize),

    #[error("no country contributes to quarter {0}")]
    EmptyQuarter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<EncError>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

fn at_origin(origin: Option<usize>) -> String {
    match origin {
        Some(t) => format!(" at forecast origin {t}"),
        None => String::new(),
    }
}

impl EncError {
    pub fn context(self, context: impl Into<String>) -> Self {
        EncError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any context wrappers.
    pub fn root(&self) -> &EncError {
        match self {
            EncError::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by numerics rather than by invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            EncError::RankDeficient { .. }
                | EncError::DegenerateVariance { .. }
                | EncError::SingularBlock(_)
                | EncError::DegenerateSpectrum { .. }
        )
    }
}

impl From<std::io::Error> for EncError {
    fn from(e: std::io::Error) -> Self {
        EncError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EncError>;
