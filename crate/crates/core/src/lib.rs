pub mod error;
pub mod field;
pub mod forward;
pub mod greens;
pub mod harness;
pub mod inverse;
pub mod krylov;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod scene;
pub mod specfun;

pub use error::{Error, Result};
