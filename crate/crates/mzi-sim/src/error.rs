use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the simulation modules.
///
/// Validation problems are *not* errors: [`crate::model::validate_circuit`]
/// returns diagnostics as data. This enum covers contract violations at call
/// time (unknown names, unbound parameters) and physical impossibilities
/// (post-selecting on a dark detector, zero forward/backward overlap).
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unknown parameter `{name}`; valid parameters: {}", valid.join(", "))]
    UnknownParameter { name: String, valid: Vec<String> },

    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),

    #[error("unknown rail `{0}`")]
    UnknownRail(String),

    #[error("unknown detector `{0}`")]
    UnknownDetector(String),

    #[error("unknown cut `{0}`")]
    UnknownCut(String),

    #[error("post-selection impossible: detector `{detector}` has probability {prob:e}")]
    PostSelectionImpossible { detector: String, prob: f64 },

    #[error("zero overlap between forward state and backward functional at cut `{cut}`")]
    ZeroOverlap { cut: String },

    #[error("degenerate difference step: eps_small must be nonzero")]
    DegenerateStep,

    #[error("coupling strength on rail `{0}` is a literal and cannot be varied")]
    NonVariableCoupling(String),

    #[error("invalid scenario options: {0}")]
    InvalidOptions(String),
}
