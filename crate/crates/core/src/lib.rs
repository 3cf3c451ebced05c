//! Three-photon parametric down-conversion in a pumped SQUID cavity.
//!
//! [`device`] expands the SQUID potential into per-order couplings,
//! [`rwa`] picks the pump-resonant cubic terms, [`fock`] evolves truncated
//! Fock states under them, [`measurement`] turns states into heterodyne
//! records, and [`stats`] / [`feedforward`] analyse those records.
//!
//! Numerics are generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common double-precision instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod device;
pub mod error;
pub mod feedforward;
pub mod fock;
pub mod measurement;
pub mod rwa;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub use device::DeviceParams;
pub use feedforward::{
    apply_feedforward, estimate_phase, FeedForwardOptions, FeedForwardResult, Protocol,
};
pub use fock::{evolve, evolve_vacuum, EvolveMethod, FockSpace, FockState};
pub use measurement::{sample_heterodyne, QuadratureId, QuadratureRecord};
pub use rwa::{EffectiveHamiltonian, Process};
pub use stats::{FingerprintMap, MomentTensor};

pub type DeviceParams64 = DeviceParams<f64>;
pub type EffectiveHamiltonian64 = EffectiveHamiltonian<f64>;
pub type FockState64 = FockState<f64>;
pub type FockState32 = FockState<f32>;
pub type QuadratureRecord64 = QuadratureRecord<f64>;
pub type QuadratureRecord32 = QuadratureRecord<f32>;
pub type FingerprintMap64 = FingerprintMap<f64>;
