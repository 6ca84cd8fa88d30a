//! Estimation of path-specific effects through a mediator with
//! exposure-induced confounding.
//!
//! The crate is `no_std` and needs only `alloc`. Everything that touches the
//! file system, threads or the command line lives in the `pathfx` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod design;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod linalg;
pub mod math;
pub mod nuisance;
pub mod rng;
pub mod simulation;
