use thiserror::Error;

/// Errors raised by the pricing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rate parameter `{name}` must be strictly positive (got {value})")]
    NonPositiveRate { name: &'static str, value: f64 },

    #[error("martingale condition fails: `{name}` = {value} must exceed 1")]
    MartingaleViolation { name: &'static str, value: f64 },

    #[error("analytic Kou formula is degenerate: {0}")]
    DegenerateAnalyticCase(String),

    #[error("characteristic function evaluated outside its moment strip: {0}")]
    MomentExplosion(String),

    #[error("option has expired (valuation time {valuation} >= expiry {expiry})")]
    ExpiredOption { valuation: f64, expiry: f64 },

    #[error("infeasible estimator inputs: {0}")]
    InfeasibleInputs(String),

    #[error("order {order} exceeds supported maximum {max}")]
    OrderOverflow { order: usize, max: usize },

    #[error("unsupported sign pattern: {0}")]
    UnsupportedSignPattern(String),

    #[error("index error: {0}")]
    IndexError(String),

    #[error("dampening {gamma} lies outside the admissible strip (0, {upper})")]
    DampeningOutsideStrip { gamma: f64, upper: f64 },

    #[error("transform grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("price violates no-arbitrage bounds: {0}")]
    ArbitrageViolation(String),

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),

    #[error("critical moment not found: {0}")]
    CriticalMomentNotFound(String),

    #[error("wing order violation: {0}")]
    WingOrderViolation(String),

    #[error("insufficient wing data: {0}")]
    InsufficientWingData(String),

    #[error("implied volatility inversion failed: {0}")]
    InversionFailure(String),

    #[error("too few quotes: need at least {needed}, got {got}")]
    TooFewQuotes { needed: usize, got: usize },

    #[error("all calibration starts failed: {0}")]
    AllStartsFailed(String),

    #[error("insufficient return history: need at least {needed}, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("lattice grid unstable: {0}")]
    GridUnstable(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("input error: {0}")]
    Input(String),
}

impl PricingError {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PricingError::InvalidParameter { .. }
                | PricingError::NonPositiveRate { .. }
                | PricingError::MartingaleViolation { .. }
                | PricingError::ExpiredOption { .. }
                | PricingError::InfeasibleInputs(_)
                | PricingError::DampeningOutsideStrip { .. }
                | PricingError::TooFewQuotes { .. }
                | PricingError::InsufficientHistory { .. }
                | PricingError::UnsupportedModel(_)
                | PricingError::UnsupportedRegime(_)
                | PricingError::UnsupportedSignPattern(_)
                | PricingError::IndexError(_)
                | PricingError::OrderOverflow { .. }
                | PricingError::Input(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, PricingError>;
