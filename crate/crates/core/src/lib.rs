//! Reduction of group-invariant Lagrangian systems on `P × V` to a gauge
//! slice, with the Lagrange-Poincaré equations in a horizontal-lift frame.

pub mod action;
pub mod connection;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod gauge;
pub mod group;
pub mod linalg;
pub mod potential;
pub mod quaternion;
pub mod system;
pub mod systems;
pub mod variational;
pub mod verify;

pub use error::{LprError, Result};
pub use system::MechanicalSystem;
