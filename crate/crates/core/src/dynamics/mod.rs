pub mod levy;
pub mod lss;
pub mod measure;
pub mod model;
pub mod simulate;

pub use levy::{CompoundPoisson, JumpIntegrator, JumpLaw, LevyModel};
pub use model::{MarketModel, MarketSpec, StepTable, TimeGrid, VolProcess};
pub use simulate::{LevyIncrements, Measure, PathSet};
