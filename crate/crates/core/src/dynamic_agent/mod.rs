//! Dynamic Agents: transient task executors interpreting a package's state
//! machine.
//!
//! Actions map one-to-one onto core agent services (say, ask, navigate, body)
//! plus a local `wait`. A new action kind needs an [`Action`] variant, its
//! outcome set in [`Action::outcomes`], and a branch in the runtime's issue
//! step.

mod fsm;
mod runtime;

pub use fsm::{validate, Action, FsmDefinition, NavTarget, State, Step, Violation};
pub use runtime::{DaHandle, DynamicAgent, FinishedAgent, LocationMap, Runtime, SpawnError, TerminateAck};

/// Outcome names with fixed meaning.
pub mod outcome {
    pub const SUCCEEDED: &str = "succeeded";
    pub const ABORTED: &str = "aborted";
    pub const PREEMPTED: &str = "preempted";
    pub const TIMEOUT: &str = "timeout";
    pub const UNEXPECTED: &str = "unexpected";

    pub const REQUIRED_TERMINALS: [&str; 3] = [SUCCEEDED, ABORTED, PREEMPTED];
}
