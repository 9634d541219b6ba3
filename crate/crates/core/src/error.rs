use thiserror::Error;

/// Errors raised by parameter solving, perturbation and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A (protocol, budget) combination has no valid parameterization.
    #[error("infeasible {protocol} parameters: {reason}")]
    Infeasible {
        protocol: &'static str,
        reason: String,
    },

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("argument {0} outside the function domain")]
    Domain(f64),

    #[error("enumeration limit exceeded: {0}")]
    EnumerationLimit(String),

    #[error("memoized state already exists for user {user}, attribute {attribute}")]
    AlreadyMemoized { user: u64, attribute: usize },
}

pub type Result<T> = std::result::Result<T, LdpError>;

pub(crate) fn ensure_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(LdpError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )))
    }
}

pub(crate) fn ensure_domain(c: usize) -> Result<()> {
    if c < 2 {
        return Err(LdpError::InvalidParameter(format!(
            "domain size must be at least 2, got {c}"
        )));
    }
    if c > crate::oracle::MAX_DOMAIN {
        return Err(LdpError::InvalidParameter(format!(
            "domain size {c} exceeds the supported maximum {}",
            crate::oracle::MAX_DOMAIN
        )));
    }
    Ok(())
}
