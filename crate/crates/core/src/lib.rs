//! Soft-robust policies for batch reinforcement learning on tabular MDPs.
//!
//! A posterior over transition models is approximated by a weighted
//! ensemble. Policies are scored by a convex combination of the mean return
//! and the CVaR of the return over that ensemble, and optimized exactly
//! (mixed-integer program, enumeration) or approximately (rectangular robust
//! value iteration, projected value iteration with linear features).

pub mod bounds;
pub mod domains;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod milp;
pub mod mdp;
pub mod posterior;
pub mod robust;
pub mod risk;
pub mod rng;
pub mod srvi;

pub use error::{Error, Result};
pub use mdp::{Policy, TabularMdp, TransitionModel, ValueFunction};
pub use posterior::ModelEnsemble;
pub use risk::SoftRobustParams;
