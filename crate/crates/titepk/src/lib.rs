//! Simulation studies, file formats, command-line interface and HTTP
//! service around `titepk-core`.

pub mod cli;
pub mod formats;
pub mod report;
pub mod service;
pub mod settings;
pub mod store;
pub mod study;
pub mod wire;
