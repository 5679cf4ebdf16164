//! Estimation of stationary expectations `E[h(Y_0)]` of causal, invertible
//! linear processes with U-statistics of increasing order on estimated
//! innovations.

pub mod bench;
pub mod cli;
pub mod constrained;
pub mod error;
pub mod innovations;
pub mod numeric;
pub mod plugin;
pub mod process;
pub mod rng;
pub mod smooth;
pub mod ustat;

pub use error::{Error, Result};
pub use innovations::InnovationSpec;
pub use process::{CoefficientModel, ProcessPath};
pub use rng::SeedStream;
pub use smooth::{ConstraintSpec, SmoothFunction};
pub use ustat::{UStatConfig, UStatResult};
