//! Job pipeline, overlay rendering and the HTTP service behind the viewer.

pub mod config;
pub mod jobs;
pub mod pipeline;
pub mod render;
pub mod server;
