//! Numerical laboratory for the one-dimensional alloy-type Anderson model
//! `H = -Δ + Σ_k ω_k u(· - k)` on finite boxes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod error;
pub mod fmm_mc;
pub mod greens;
pub mod localization;
pub mod model;
pub mod monotone;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod tridiag;

mod par;

pub use error::{Error, Result};
pub use greens::ComplexEnergy;
pub use model::{BoxHamiltonian, DensityKind, DisorderDensity, Interval, SingleSitePotential};
