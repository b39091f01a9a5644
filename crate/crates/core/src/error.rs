use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid spacing ({d}, {h}, {w}): every component must be positive and finite")]
    InvalidSpacing { d: f32, h: f32, w: f32 },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("layer `{layer}`: {detail}")]
    Shape { layer: String, detail: String },

    #[error("activation cache does not match this forward pass: {0}")]
    StaleCache(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("{0}")]
    Empty(&'static str),

    #[error("invalid phantom spec: {0}")]
    Phantom(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn mismatch(
        what: &'static str,
        expected: impl core::fmt::Debug,
        found: impl core::fmt::Debug,
    ) -> Self {
        Error::DimensionMismatch {
            what,
            expected: alloc::format!("{expected:?}"),
            found: alloc::format!("{found:?}"),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
