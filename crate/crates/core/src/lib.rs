//! Tetrahedral finite-element kernel for H(div)/H(curl) trace liftings.
//!
//! The crate provides conforming Raviart-Thomas and first-kind Nedelec
//! elements on tetrahedral meshes (including locally bisected,
//! non-quasi-uniform families), the discrete de-Rham differential and trace
//! operators, computable realizations of the fractional boundary norms, the
//! discrete extension (lifting) operators with operator-norm estimation, and
//! two model boundary value problems demonstrating decoupled error
//! estimates. The `study` binary drives reproducible experiment sweeps.

pub mod complex;
pub mod extension;
pub mod norms;
pub mod problems;
pub mod study;
pub mod fe;
pub mod la;
pub mod quadrature;

pub mod mesh;
