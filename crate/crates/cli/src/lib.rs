//! Operator CLI and HTTP scoring service for ceilguard.

pub mod cli;
pub mod config;
pub mod io;
pub mod server;

pub use ceilguard_core as core;
