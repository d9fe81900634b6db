//! Option pricing with a scheduled earnings-announcement jump.

pub mod american;
pub mod bs_ea;
pub mod calibrate;
pub mod error;
pub mod iv_toolkit;
pub mod kou_analytic;
pub mod mc_oracle;
pub mod model_core;
pub mod numerics;
pub mod par;
pub mod transform_pricing;

pub use error::{PricingError, Result};
pub use model_core::*;
pub use par::Execution;
