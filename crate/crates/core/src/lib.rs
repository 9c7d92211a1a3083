//! Numerical core for the infinite cusp billiard `Q = {x > 0, 0 < y < (x+1)^-alpha}`:
//! the classical billiard flow and its time averages, transverse tangent
//! dynamics and Lyapunov exponents, and Dirichlet eigenpairs of the
//! truncated domain with localization and quantum-ergodicity diagnostics.
//!
//! The crate is `no_std` with `alloc`; file formats and the command line live
//! in the `cusplab` crate.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
pub mod geometry;
pub mod lyapunov;
pub mod math;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use geometry::{Containment, CuspDomain, GrowthClass, Rectangle, Wall};
