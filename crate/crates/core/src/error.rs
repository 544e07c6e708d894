use thiserror::Error;

/// Failures raised by field construction, integration and map evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {0:?} is not on the switching plane")]
    NotOnSigma([f64; 3]),

    #[error("degenerate tangency at {point:?}: first and second Lie derivatives vanish")]
    DegenerateTangency { point: [f64; 3] },

    #[error("step size collapsed to {step:e} at t = {time}")]
    StepFailure { time: f64, step: f64 },

    #[error("no return to the switching plane within flight time {max_time} from {start:?}")]
    NoReturn { start: [f64; 3], max_time: f64 },

    #[error("scalar flow left the region of interest: |x| = {value} > {bound}")]
    Blowup { value: f64, bound: f64 },

    #[error("root of the implicit return equation not bracketed for y = {y}")]
    RootNotBracketed { y: f64 },

    #[error("{y} is not a fixed point of the radial return map (residual {residual:e})")]
    NotFixedPoint { y: f64, residual: f64 },

    #[error("singular denominator in return-map derivative at y = {y}")]
    SingularDenominator { y: f64 },

    #[error("multiplier {multiplier} is numerically indistinguishable from 1")]
    NotHyperbolicNumerically { multiplier: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
