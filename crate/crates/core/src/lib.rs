//! Leveled CKKS homomorphic encryption with an encrypted CNN inference stack,
//! polynomial activation fitting and a Boolean-circuit cost model.

pub mod activation;
pub mod circuit;
pub mod cli;
pub mod ckks;
pub mod model_io;
pub mod nn;
mod par;
pub mod ring;
pub mod train;

pub use par::with_threads;
