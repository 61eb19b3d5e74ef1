//! Simulation and analysis of a frequency-bin entanglement-based QKD link.
//!
//! The layers follow the signal path: two-qubit states ([`qstate`]), the
//! ring-resonator source and electro-optic modulator ([`photonics`]), the
//! fiber spool and its thermal drift ([`channel`]), the six-detector
//! receiver ([`detection`]), coincidence matching ([`coincidence`]), key
//! post-processing ([`keyproc`]) and the control-laser phase lock
//! ([`phaselock`]). [`scenario`] wires them into runnable experiments and
//! [`model`] gives the closed-form mean rates used as their overlay.
//!
//! Formula-level code is generic over [`Real`]; the aliases below fix it to
//! `f64`.

pub mod error;
pub mod linalg;
pub mod qstate;
pub mod rng;
pub mod scalar;
pub mod photonics;
pub mod channel;
pub mod detection;
pub mod phaselock;
pub mod coincidence;
pub mod config;
pub mod keyproc;
pub mod model;
pub mod stats;
pub mod tomography;
pub mod scenario;

pub use config::LinkConfig;
pub use error::{Error, Result};
pub use qstate::Basis;
pub use scalar::Real;

pub type DensityMatrix = qstate::DensityMatrix<f64>;
pub type PureState = qstate::PureState<f64>;
pub type CorrelationMatrix = qstate::CorrelationMatrix<f64>;
pub type MeasurementSetting = qstate::MeasurementSetting<f64>;
pub type SkrParams = keyproc::SkrParams<f64>;
pub type Mat4 = linalg::Mat4<f64>;
