//! Few-emitter superradiance: g² forward models, stochastic simulation,
//! parameter inference, spectra, and a strain-tuning plant with its
//! feedback controller.
//!
//! The analytic layer (`g2`, `irf`, `units`, line shapes, crosstalk kernel)
//! is generic over [`scalar::Real`]; the aliases below fix it to `f64`,
//! which is what the simulation, fitting and control layers use.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emitter;
pub mod error;
pub mod g2;
pub mod inference;
pub mod irf;
pub mod photon_mc;
pub mod scalar;
pub mod spectro;
pub mod strain;
pub mod textio;
pub mod units;

pub use error::{Error, Result};
pub use photon_mc::{Estimate, RngSeed};
pub use scalar::Real;

pub type Emitter = emitter::Emitter<f64>;
pub type EmitterSystem = emitter::EmitterSystem<f64>;
pub type PairCoupling = emitter::PairCoupling<f64>;
pub type G2Curve = g2::G2Curve<f64>;
pub type Irf = irf::Irf<f64>;
