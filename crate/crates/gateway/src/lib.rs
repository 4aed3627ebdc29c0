//! The edge assistant gateway: configuration, request orchestration, the
//! HTTP API, the command line and session replay.

pub mod api;
pub mod cli;
pub mod config;
pub mod gateway;
pub mod http;
pub mod log;
pub mod replay;

pub use api::{FeedbackRequest, GatewayError, InteractRequest, InteractResponse, StatsResponse, Timings};
pub use config::GatewayConfig;
pub use gateway::{Gateway, GatewayParts};
