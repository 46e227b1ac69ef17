//! Error type shared by every module of the crate.

/// Errors reported by constructors, solvers and estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter failed validation (wrong sign, wrong length, bad range).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A time or index lies outside the grid or interval it must belong to.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The request is well-formed but exceeds what the inputs support
    /// (e.g. a derivative order beyond the drift's declared smoothness).
    #[error("capability: {0}")]
    Capability(String),

    /// A state or weight left the representable range during time stepping.
    #[error("numeric overflow at step {step}: {context}")]
    NumericOverflow { step: usize, context: String },

    /// A diffusion coefficient is degenerate or changes sign on the
    /// declared domain, so the Lamperti map does not exist there.
    #[error("non-elliptic diffusion: {0}")]
    NonElliptic(String),

    /// A root-find or inverse-map query left the domain where the map is
    /// defined and monotone.
    #[error("domain: {0}")]
    Domain(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidArgument`] from any displayable value.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
