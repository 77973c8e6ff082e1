//! Penalized solver and property harness for stochastic obstacle problems
//! `du − div a(u, ∇u) dt + ρ dt = f dt + G(u) dW`, `u ≥ ψ`, driven by a
//! truncated Q-Wiener process on a 1D Dirichlet grid.

pub mod error;
pub mod leray_lions;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod report;
pub mod solver;
pub mod stats;
pub mod verify;
pub mod harness;

pub use error::{Error, Result};
