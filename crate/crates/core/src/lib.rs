//! Forward finite-element model of shear-wave propagation in a Kelvin–Voigt
//! cube and an algebraic direct inversion of the resulting wave field.
//!
//! The forward path is [`grid`] → [`material`] → [`assembly`] → [`newmark`]
//! (with optional [`vessel`] loads); [`inversion`] turns a displacement history
//! back into a complex shear-modulus map.

pub mod assembly;
pub mod error;
pub mod grid;
pub mod inversion;
pub mod material;
pub mod newmark;
pub mod sparse;
pub mod vessel;

pub use error::{Error, Result};
