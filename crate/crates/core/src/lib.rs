//! Black-box inversion of embedding oracles.
//!
//! A reconstruction is grown by zero-order descent in the linear span of
//! additive 2D Gaussian blobs: every iteration samples a batch of blobs,
//! queries the oracle with the current image plus each blob, and keeps the
//! one whose embedding scores best against the target. The oracle is only
//! ever touched through [`oracle::Oracle::embed_batch`], and every image it
//! receives is counted.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the remote
//! oracle client, the mock embedding server and the CLI live in the
//! `blobvert` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blobs;
pub mod canvas;
pub mod eval;
pub mod objective;
pub mod oracle;
pub mod recovery;

pub use blobs::{DictionaryGrid, GaussianBlob, Interval, Sampler, SamplerConfig};
pub use canvas::{GrayCanvas, RgbCanvas};
pub use objective::LossParams;
pub use oracle::{Embedding, Oracle, OracleError, ProjectionOracle, QueryLedger};
pub use recovery::{recover, RecoveryConfig, RunTrace};
