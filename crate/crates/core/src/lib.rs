//! Two-factor smart-contract wallet built on hash-chain one-time passwords
//! aggregated by Merkle trees, together with a simulated ledger to run it on.

pub mod authenticator;
pub mod client;
pub mod contract;
pub mod cost;
pub mod crypto;
pub mod error;
pub mod exec;
pub mod ledger;
pub mod merkle;
pub mod params;
pub mod payload;
pub mod protocols;
pub mod security;
pub mod signature;

pub use error::Error;
pub use params::TreeParams;
