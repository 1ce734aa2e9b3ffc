//! Generalized approximate message passing with pluggable scalar priors.

mod em;
pub mod normal;
mod prior;
mod solver;

pub use em::{em_refine, EmOptions, EmOutcome, EmRefine};
pub use prior::{Denoiser, Posterior, ScatterPrior, SymbolPrior};
pub use solver::{gamp_solve, GampOptions, GampState, NoiseVar, Scalar, SolveError, TraceRow};
