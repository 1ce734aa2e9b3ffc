//! Joint vehicle positioning, uplink symbol detection and scattering-map
//! sensing over a pixelated region observed by many base stations.
//!
//! Received symbols follow the bilinear model
//! `y_k = p^T H^V_k s + x^T H^s_k s + n_k`; [`ao::run_ao`] recovers the
//! occupancy `p`, symbols `s` and scattering map `x` by alternating two
//! GAMP solves.

pub mod ao;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod gamp;
pub mod harness;
pub mod measure;
pub mod scene;

pub use error::{Error, Result};
