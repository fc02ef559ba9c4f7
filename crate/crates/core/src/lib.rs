//! Integral input-to-state stability tools for hybrid systems.
//!
//! The crate covers comparison functions and their constructions, hybrid
//! time domains and signal norms, hybrid systems with perturbation and input
//! restriction, a hybrid simulator, sampled Lyapunov certificate checks and
//! the sampled-data emulation machinery around the maximum allowable
//! sampling period.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod comparison;
pub mod error;
pub mod examples;
pub mod hybrid_time;
pub mod indicator;
pub mod sampled_data;
pub mod sampling;
pub mod simulator;
pub mod system;

pub use comparison::{FnClass, KlBound, KllBound, ScalarFn};
pub use error::{Error, Result};
pub use hybrid_time::{HybridArc, HybridInput, HybridSignal, HybridTime, HybridTimeDomain};
pub use indicator::ProperIndicator;
pub use simulator::{solve, InputSource, JumpPriority, SolveResult, SolverOptions, Termination};
pub use system::{AuxiliarySystem, HybridSystem, PerturbedSystem};
