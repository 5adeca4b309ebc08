use thiserror::Error;

pub type Result<T> = std::result::Result<T, WifoError>;

#[derive(Debug, Error)]
pub enum WifoError {
    #[error("shape mismatch on {axis} axis: {detail}")]
    ShapeMismatch { axis: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("degenerate dataset: standard deviation is zero")]
    DegenerateDataset,

    #[error("empty mask: loss is undefined without masked elements")]
    EmptyMask,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WifoError {
    pub(crate) fn shape(axis: &'static str, detail: impl Into<String>) -> Self {
        WifoError::ShapeMismatch {
            axis,
            detail: detail.into(),
        }
    }

    /// Configuration-class errors (bad input files, bad shapes) as opposed to
    /// numerical failures or I/O.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            WifoError::ShapeMismatch { .. }
                | WifoError::InvalidArgument(_)
                | WifoError::ConfigParse { .. }
                | WifoError::MissingKey(_)
                | WifoError::Format(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, WifoError::NonFinite(_) | WifoError::DegenerateDataset)
    }
}
