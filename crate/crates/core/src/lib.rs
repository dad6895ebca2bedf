//! Numerical laboratory for finite-time blowup of
//! `U_t = ΔU + α|∇U|² + e^U`.
//!
//! The crate is organised bottom-up: closed-form profiles and coordinate
//! maps, the Gaussian-weighted spectral machinery, the reduced mode ODEs,
//! two PDE engines (similarity and physical variables), the constructed
//! initial data, the shrinking-set tests, and the shooting driver.

pub mod hermite;
pub mod initial_data;
pub mod linalg;
pub mod phys_solver;
pub mod profiles;
pub mod reduced_ode;
pub mod shooting;
pub mod sim_solver;
pub mod trap;

mod error;

pub use error::{Error, Result};
pub use profiles::SimParams;
