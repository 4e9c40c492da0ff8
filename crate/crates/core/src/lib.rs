//! Link-level simulation of over-the-air synchronization and reciprocity
//! calibration for distributed MU-MIMO.

pub mod channel;
pub mod linalg;
pub mod ofdm;
pub mod topology;
pub mod estimator;
pub mod sync;
pub mod calib;
pub mod mumimo;
pub mod harness;
