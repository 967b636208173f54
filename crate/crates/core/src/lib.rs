pub mod analytic;
pub mod bloch;
pub mod cli;
pub mod constants;
pub mod error;
pub mod estimation;
pub mod io;
pub mod multimode;
pub mod ode;
pub mod quadrature;
pub mod scaling;
pub mod thermal;

pub use error::{Error, Result};
