//! Files, network protocol, mock embedding service and command-line front
//! end for the `blobvert-core` face-recovery engine.

pub mod cli;
pub mod config;
pub mod emb;
pub mod image_io;
pub mod remote;
pub mod report;
pub mod server;
pub mod spec;
pub mod synthetic;
pub mod trace_io;
pub mod wire;

pub use config::{Mode, Overrides, ResolvedConfig, RunConfig};
pub use remote::{RemoteConfig, RemoteOracle};
pub use server::{serve, ServerConfig, ServerHandle};
pub use spec::{OracleSpec, RemoteSpec, SyntheticSpec};
