//! Simulator for spin-OAM hybrid photonic circuits built around the
//! controlled-phase manipulation module (PMM): a PBS Sagnac loop with a
//! HWP-Dove-prism-HWP sandwich that imprints `e^{-i4l alpha}` on the V
//! component of OAM mode `l`, independent of the prism's polarization
//! imperfections.
//!
//! Layers, bottom up: [`state`] (basis, states, operators), [`elements`]
//! (Jones matrices lifted to the hybrid space), [`circuits`] (sandwich,
//! Sagnac, PMM, detection, cascades), [`analysis`] and [`render`].

pub mod analysis;
pub mod circuits;
pub mod elements;
pub mod error;
pub mod render;
pub mod state;

pub use error::{Error, Result};
pub use state::{HybridState, ModeIndex, Polarization, TransferOperator, DEFAULT_L_MAX};
