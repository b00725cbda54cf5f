pub mod error;
pub mod bifurcation;
pub mod continuation;
pub mod hb;
pub mod linalg;
pub mod nlsolve;
pub mod problem;
pub mod stability;

pub use error::{Error, Result};
