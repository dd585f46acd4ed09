pub mod error;
pub mod lambertw;
pub mod spectrum;
pub mod delay_analysis;
pub mod curves;
pub mod dde_sim;
pub mod consensus;
mod roots;

pub use error::{Error, ErrorClass, Result};
pub use num_complex::Complex64;
