//! Channel estimation for distributed IRS-assisted multi-user MISO uplinks.
//!
//! The crate is organised along the processing chain of one coherence block:
//!
//! * [`sysconfig`]: system parameters, node geometry and path loss.
//! * [`channel`]: correlated Rayleigh user links and deterministic LoS BS-IRS matrices.
//! * [`training`]: DFT training design, observation synthesis and decorrelation.
//! * [`estimators`]: LS and MMSE estimates of direct and IRS-user channels.
//! * [`benchmark`]: the cascaded-channel protocol used as a reference.
//! * [`analysis`]: closed-form and empirical NMSE, figure of merit.
//! * [`harness`]: seeded Monte-Carlo sweeps and CSV output.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod benchmark;
pub mod channel;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod sysconfig;
pub mod training;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
