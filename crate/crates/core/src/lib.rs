pub mod affine;
pub mod carma;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod numerics;
pub mod pricing_lss;
pub mod rng;

pub use error::{Error, Result};
