//! Dynamic searchable symmetric encryption for spatio-temporal range queries.
//!
//! Points are quantized onto a grid and linearized with a Hilbert curve.
//! Each Hilbert value is expanded into its prefix family, and each prefix
//! element is hashed into a fingerprint stored in an expandable quotient
//! filter. Search tokens are symmetric hidden-vector-encryption keys over
//! those fingerprints. Two variants are provided. [`scheme::Variant::One`]
//! applies updates in place. [`scheme::Variant::Two`] salts additions under
//! per-update order tokens for forward security, and returns verify tokens
//! so the client can discard false positives.

pub mod bench;
pub mod edbstore;
pub mod error;
pub mod geocode;
pub mod ordertoken;
pub mod prefixcover;
pub mod qfilter;
pub mod scheme;
pub mod shve;

mod codec;
mod crypto;

pub use error::{Error, Result};
