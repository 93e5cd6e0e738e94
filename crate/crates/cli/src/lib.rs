//! Command-line entry points and the HTTP review service.

pub mod commands;
pub mod config;
pub mod service;
