use std::collections::{BTreeMap, VecDeque};

use super::topology::is_allowed;
use super::{AgentId, Envelope, MessageKind, Payload, Role, Tick};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("agent {0} is already registered")]
    DuplicateAgent(AgentId),
    #[error("agent {0} is not registered")]
    UnknownAgent(AgentId),
    #[error("route {src} -> {dst} is not permitted for {kind}")]
    RouteForbidden { src: Role, dst: Role, kind: MessageKind },
}

/// Registration handle returned by [`Bus::register_agent`]. Owning one is the
/// only way to read an agent's inbox.
#[derive(Debug, PartialEq, Eq)]
pub struct Mailbox(AgentId);

impl Mailbox {
    pub fn id(&self) -> &AgentId {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BusStats {
    pub sent: u64,
    pub polled: u64,
    pub pending: u64,
}

/// Serialized mediator for all inter-agent traffic.
///
/// Delivery is immediate into the destination inbox; agents that want
/// tick-stepped delivery use [`Bus::poll_due`], which only hands out envelopes
/// sent on an earlier tick.
#[derive(Debug, Default)]
pub struct Bus {
    inboxes: BTreeMap<AgentId, VecDeque<Envelope>>,
    next_id: u64,
    trace: Vec<Envelope>,
    polled: u64,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_agent(&mut self, id: AgentId) -> Result<Mailbox, BusError> {
        let taken = if id.role().is_singleton() {
            self.inboxes.keys().any(|k| k.role() == id.role())
        } else {
            self.inboxes.contains_key(&id)
        };
        if taken {
            return Err(BusError::DuplicateAgent(id));
        }
        self.inboxes.insert(id.clone(), VecDeque::new());
        Ok(Mailbox(id))
    }

    /// Removes the agent. Envelopes still queued for it are handed back to the
    /// caller and count as polled.
    pub fn deregister(&mut self, mailbox: Mailbox) -> Vec<Envelope> {
        let rest: Vec<Envelope> = self.inboxes.remove(&mailbox.0).map(Vec::from).unwrap_or_default();
        self.polled += rest.len() as u64;
        rest
    }

    pub fn is_registered(&self, id: &AgentId) -> bool {
        self.inboxes.contains_key(id)
    }

    pub fn registered(&self) -> impl Iterator<Item = &AgentId> {
        self.inboxes.keys()
    }

    pub fn registered_with_role(&self, role: Role) -> usize {
        self.inboxes.keys().filter(|k| k.role() == role).count()
    }

    /// Stamps and delivers a message. Returns the envelope id.
    pub fn send(&mut self, now: Tick, src: &AgentId, dst: &AgentId, payload: Payload) -> Result<u64, BusError> {
        if !self.inboxes.contains_key(src) {
            return Err(BusError::UnknownAgent(src.clone()));
        }
        let kind = payload.kind();
        if !is_allowed(src.role(), dst.role(), kind) {
            return Err(BusError::RouteForbidden { src: src.role(), dst: dst.role(), kind });
        }
        let inbox = self.inboxes.get_mut(dst).ok_or_else(|| BusError::UnknownAgent(dst.clone()))?;
        self.next_id += 1;
        let env = Envelope { id: self.next_id, ts: now, src: src.clone(), dst: dst.clone(), payload };
        inbox.push_back(env.clone());
        self.trace.push(env);
        Ok(self.next_id)
    }

    pub fn poll(&mut self, mailbox: &Mailbox) -> Option<Envelope> {
        let env = self.inboxes.get_mut(&mailbox.0)?.pop_front()?;
        self.polled += 1;
        Some(env)
    }

    /// Like [`Bus::poll`], but only returns envelopes sent before `now`.
    pub fn poll_due(&mut self, mailbox: &Mailbox, now: Tick) -> Option<Envelope> {
        let inbox = self.inboxes.get_mut(&mailbox.0)?;
        if inbox.front()?.ts >= now {
            return None;
        }
        self.polled += 1;
        inbox.pop_front()
    }

    pub fn pending(&self) -> usize {
        self.inboxes.values().map(VecDeque::len).sum()
    }

    pub fn stats(&self) -> BusStats {
        BusStats { sent: self.trace.len() as u64, polled: self.polled, pending: self.pending() as u64 }
    }

    /// Every envelope accepted so far, in id order.
    pub fn trace(&self) -> &[Envelope] {
        &self.trace
    }
}
