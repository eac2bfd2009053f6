//! Finite element solver for four-field linear thermo-poroelasticity.
//!
//! The unknowns are the displacement `u`, the pseudo-total pressure
//! `xi = -lambda div u + alpha p + beta T`, the fluid pressure `p` and the
//! temperature `T`. Space is discretized with Taylor-Hood (P2/P1) elements for
//! `(u, xi)` and P1 elements for `p` and `T`; time with backward Euler.
//!
//! Two time steppers are provided: a monolithic solve of the four-field system
//! ([`steppers::Simulation::coupled_step`]) and an iteration that alternates a
//! reaction-diffusion solve for `(p, T)` with a generalized Stokes solve for
//! `(u, xi)` ([`steppers::Simulation::decoupled_step`]).

pub mod assembly;
pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod model;
pub mod sparse;
pub mod steppers;
pub mod verify;

pub use error::{Error, Result};
