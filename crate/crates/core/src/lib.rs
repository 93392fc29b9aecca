//! Spectral toolkit for periodic and limit-periodic Schrödinger operators:
//! SL(2, R) cocycles, Floquet bands, gap opening, thin-spectrum assembly and
//! continuum transfer matrices.

pub mod continuum;
pub mod dimension;
pub mod eigen;
pub mod error;
pub mod gap;
pub mod sl2;
pub mod spectrum;
pub mod thin;
pub mod transfer;
pub mod words;

pub use error::{Error, Result};
pub use sl2::{FixedPoint, Mat2, TraceClass};
pub use spectrum::{BandSet, EnergyWindow, Interval};
pub use words::{FamilyKind, FamilySpec, Letter, Word};
