//! Geodesic-flow functionals, spectral observability and Zoll detection on
//! model surfaces with exactly known geodesics and eigenbases.

// Guards are written `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basequad;
pub mod birkhoff;
pub mod coherent;
pub mod config;
pub mod detector;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod gramian;
pub mod measures;
pub mod observable;
pub mod plots;
pub mod quad;
pub mod region;
pub mod report;
pub mod spectral;
pub mod suites;
pub mod surface;

pub use error::{Error, Result};
