//! Quasistationary one-phase Stefan flow for planar domains, continued past
//! the first loss of embeddedness by cutting the overlapping part of the
//! boundary.

pub mod config;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod intersect;
pub mod output;
pub mod overlap;
pub mod quadrature;
pub mod report;
pub mod robin;
pub mod shapegen;
pub mod spectral;

pub use error::{Error, Result};
