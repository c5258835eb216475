//! Intent-driven control for an assistive home robot.
//!
//! Requester agents turn voice, button and operator input into task
//! requests. A harmoniser runs at most one task (a Dynamic Agent) at a time,
//! chosen by priority, fetching its state machine from a package store. A
//! simulated robot core offers speech, navigation and body services, and the
//! [`harness`] drives everything on a deterministic tick clock.

pub mod core_agent;
pub mod dynamic_agent;
pub mod harmoniser;
pub mod harness;
pub mod intent;
pub mod messaging;
pub mod platform;
pub mod requesters;
pub mod store;
