//! In-process message bus connecting the agents of the system.
//!
//! Every message is an [`Envelope`] addressed from one [`AgentId`] to another.
//! The bus checks each send against a closed allow-list of
//! `(source role, destination role, kind)` triples (see [`topology`]) and
//! stamps envelopes with a bus-global id and the current simulation tick, so a
//! whole run can be compared as one totally ordered trace.

mod bus;
mod payload;
pub mod topology;
mod wire;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use bus::{Bus, BusError, BusStats, Mailbox};
pub use payload::{
    Ack, AskCommand, BodyCommand, DownloadRequest, DownloadResponse, FailureNotice, IntentMsg, Lifecycle, NavCommand,
    Payload, RequestMsg, SayCommand, SttRequest, SttResponse, TtsRequest, TtsResponse,
};
pub use topology::{TopologyRule, ALLOWED_ROUTES};
pub use wire::{decode_line, decode_trace, encode_line, encode_trace, WireError};

/// Simulation clock value. The whole system advances in integer ticks.
pub type Tick = u64;

/// The agent classes of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    CoreAgent,
    PlatformAgent,
    TaskRequester,
    TaskHarmoniser,
    StoreAgent,
    DynamicAgent,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::CoreAgent,
        Role::PlatformAgent,
        Role::TaskRequester,
        Role::TaskHarmoniser,
        Role::StoreAgent,
        Role::DynamicAgent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::CoreAgent => "CoreAgent",
            Role::PlatformAgent => "PlatformAgent",
            Role::TaskRequester => "TaskRequester",
            Role::TaskHarmoniser => "TaskHarmoniser",
            Role::StoreAgent => "StoreAgent",
            Role::DynamicAgent => "DynamicAgent",
        }
    }

    /// Roles with a single instance per system. Task requesters are the only
    /// role with several instances; at most one Dynamic Agent may exist.
    pub fn is_singleton(self) -> bool {
        !matches!(self, Role::TaskRequester)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = InvalidAgentId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| InvalidAgentId(format!("unknown role `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid agent id: {0}")]
pub struct InvalidAgentId(String);

/// Identity of a registered agent: its role plus an instance name.
///
/// Names follow `[a-z_][a-z0-9_]*`. The textual form is `Role/name`, which is
/// also what appears in the wire encoding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    role: Role,
    name: String,
}

impl AgentId {
    pub fn new(role: Role, name: impl Into<String>) -> Result<Self, InvalidAgentId> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(InvalidAgentId(format!("name `{name}` must match [a-z_][a-z0-9_]*")));
        }
        Ok(Self { role, name })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn core() -> Self {
        Self::known(Role::CoreAgent, "robot")
    }

    pub fn platform() -> Self {
        Self::known(Role::PlatformAgent, "apl")
    }

    pub fn store() -> Self {
        Self::known(Role::StoreAgent, "ars")
    }

    pub fn harmoniser() -> Self {
        Self::known(Role::TaskHarmoniser, "robot")
    }

    pub fn smart_home_requester() -> Self {
        Self::known(Role::TaskRequester, "smart_home")
    }

    pub fn robot_requester() -> Self {
        Self::known(Role::TaskRequester, "robot")
    }

    pub fn operator_requester() -> Self {
        Self::known(Role::TaskRequester, "operator")
    }

    fn known(role: Role, name: &str) -> Self {
        Self { role, name: name.to_owned() }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.role, self.name)
    }
}

impl FromStr for AgentId {
    type Err = InvalidAgentId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (role, name) =
            s.split_once('/').ok_or_else(|| InvalidAgentId(format!("`{s}` is not of the form role/name")))?;
        AgentId::new(role.parse()?, name)
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Message kinds carried by envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    TaskRequestMsg,
    IntentMsg,
    DownloadRequest,
    DownloadResponse,
    FailureNotice,
    TtsRequest,
    TtsResponse,
    SttRequest,
    SttResponse,
    SayCommand,
    AskCommand,
    NavGoal,
    BodyCommand,
    LifecycleCommand,
    Ack,
}

impl MessageKind {
    pub const ALL: [MessageKind; 15] = [
        MessageKind::TaskRequestMsg,
        MessageKind::IntentMsg,
        MessageKind::DownloadRequest,
        MessageKind::DownloadResponse,
        MessageKind::FailureNotice,
        MessageKind::TtsRequest,
        MessageKind::TtsResponse,
        MessageKind::SttRequest,
        MessageKind::SttResponse,
        MessageKind::SayCommand,
        MessageKind::AskCommand,
        MessageKind::NavGoal,
        MessageKind::BodyCommand,
        MessageKind::LifecycleCommand,
        MessageKind::Ack,
    ];
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An addressed, typed message as recorded by the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub id: u64,
    pub ts: Tick,
    pub src: AgentId,
    pub dst: AgentId,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Envelope {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}
