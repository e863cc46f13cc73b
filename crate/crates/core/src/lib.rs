//! Tools for building and checking cocycles of free ergodic `Z^d` actions.

pub mod cli;
pub mod cocycle;
pub mod construct;
pub mod error;
pub mod evc;
pub mod lattice;
pub mod measure_space;
pub mod rwlab;
pub mod topo;
pub mod towers;

pub use error::{Error, Result};
