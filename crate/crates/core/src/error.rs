use thiserror::Error;

/// Errors raised while building or evaluating a reduction.
#[derive(Debug, Error)]
pub enum LprError {
    /// Group element or configuration left the coordinate chart.
    #[error("outside chart domain: {0}")]
    Domain(String),

    #[error("singular matrix in {context} (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("gauge Newton solve did not converge: |chi| = {residual:.3e} after {iterations} iterations")]
    GaugeNonConvergence { residual: f64, iterations: usize },

    #[error("{check} violated: residual {residual:.3e} exceeds {tolerance:.1e}")]
    InvarianceViolation {
        check: String,
        residual: f64,
        tolerance: f64,
    },

    /// The action fails the infinitesimal representation checks.
    #[error("representation check failed: {0}")]
    Representation(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl LprError {
    pub(crate) fn singular(context: impl Into<String>, condition: f64) -> Self {
        LprError::Singular {
            context: context.into(),
            condition,
        }
    }

    /// True for failures of the numerics rather than of user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LprError::Domain(_)
                | LprError::Singular { .. }
                | LprError::GaugeNonConvergence { .. }
                | LprError::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LprError>;
