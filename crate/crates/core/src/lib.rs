//! Teacher-to-student policy distillation on finite token MDPs, posed as a
//! budget-constrained problem whose remaining budget is reconstructed from
//! the trajectory history instead of being carried in the state.

pub mod divergence;
pub mod env;
pub mod error;
pub mod gradient;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod shaping;
pub mod solvers;
pub mod tasks;
pub mod verification;

pub use divergence::DivergenceKind;
pub use env::{TokenMdp, Trajectory};
pub use error::{Error, Result};
pub use policy::{SoftmaxPolicy, Table, TeacherPolicy};
pub use rng::RunSeed;
pub use shaping::{ConstrainedRewardSpec, Mode};
