//! Geolocation-based CSI prediction and multi-BS RB allocation.

pub mod alloc;
pub mod codebook;
pub mod csi_map;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod link;
pub mod rate;
pub mod scenario;

pub use error::{Error, Result};
