//! Gateway, terminal client and command-line plumbing around the agent
//! runtime.

pub mod agents;
pub mod chat;
pub mod config;
pub mod gateway;
