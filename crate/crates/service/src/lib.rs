//! Command-line runner and HTTP service around a driftline instance.

pub mod api;
pub mod batch;
pub mod error;
pub mod server;

pub use error::ServiceError;
