//! Virtual RF bench and procedure engine for characterizing 360° phase detectors
//! driven by two quasi-synchronized signal generators.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod campaign;
pub mod curve_ref;
pub mod dut;
pub mod netcal;
pub mod phasor;
pub mod procedure;
