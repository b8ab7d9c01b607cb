pub mod curve;
pub mod ode;
pub mod quadrature;
pub mod special;
pub mod stats;

pub use curve::Curve;
pub use quadrature::Tolerance;
pub use stats::McEstimate;
