pub mod error;
pub mod factor_scale;
pub mod family;
pub mod harness;
pub mod optimizer;
pub mod special;
pub mod targets;
pub mod transforms;
pub mod verification;

pub use error::{Error, Result};
