//! Quantum Fisher information of parameterized quantum channels.

pub mod catalog;
pub mod channel;
pub mod cli;
pub mod dephasing;
pub mod error;
pub mod numerics;
pub mod qec;
pub mod qfi;
pub mod sdp;

pub use error::{Error, Result};
