use crate::jet::JetError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("singular chart point ({reason}) at {point:?}")]
    SingularChart { reason: String, point: Vec<f64> },
    #[error("non-invertible matrix (|det| = {det:e})")]
    SingularMatrix { det: f64 },
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("congruence caustic at s = {s}: |det J| = {det:e}")]
    Caustic { det: f64, s: f64 },
    #[error("left the metric domain at s = {s}")]
    DomainExit { s: f64 },
    #[error("{quantity} blew up at y2 = {at}")]
    BlowUp { quantity: String, at: f64 },
    #[error("too few samples: have {have}, need {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;
