//! Exact spectral analysis of Markov chains on small Gibbs distributions and
//! matroids: influence matrices, level walks, Glauber and block dynamics,
//! bases-exchange walks, and a harness that checks the inequalities relating
//! them.

pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod influence;
pub mod levels;
pub mod matroid;
pub mod numerics;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use gibbs::{Caps, Graph, Pinning, SpinConfig, SpinSystem};
pub use numerics::{DenseMatrix, Gap, Spectrum, WalkKernel};
