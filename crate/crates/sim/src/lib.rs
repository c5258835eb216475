//! Operator HTTP service over a live [`intent_core::harness::System`].

pub mod server;

pub use server::{router, serve, Service};
