//! Service layer around `tailor-core`: configuration, persistence,
//! generation backends, the adaptation engine and its HTTP API.

pub mod backend;
pub mod config;
pub mod engine;
pub mod json;
pub mod pipeline;
pub mod records;
pub mod scenario;
pub mod server;
pub mod store;

pub use config::EngineConfig;
pub use engine::{Engine, EngineError, EngineOptions};
