//! Wave propagation outside a torus in toroidal coordinates.
//!
//! The crate builds the Green's kernel of the Pöschl-Teller modified wave
//! equation from conical Legendre functions and the Mehler-Fock transform,
//! and ships brute-force references (finite differences, dense quadrature)
//! to check it against.

pub mod quad;
pub mod specfun;
pub mod geometry;
pub mod dispersive;
pub mod mehler_fock;
pub mod wave_kernel;
pub mod oracle;
