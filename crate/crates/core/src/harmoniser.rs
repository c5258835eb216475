//! Task Harmoniser: single-slot priority scheduling of Dynamic Agents.
//!
//! Requests are handled strictly one at a time. A request that preempts the
//! running agent first terminates it (waiting for its final Ack, or removing
//! it once the deadline passes), then downloads the new package, then spawns.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamic_agent::{DaHandle, Runtime};
use crate::intent::Source;
use crate::messaging::{
    Ack, AgentId, Bus, BusError, DownloadRequest, DownloadResponse, FailureNotice, IntentMsg, Lifecycle, Mailbox,
    Payload, RequestMsg, Tick,
};
use crate::requesters::TaskRequest;

pub const DEFAULT_TERMINATE_DEADLINE: Tick = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    Accepted,
    PreemptedAndAccepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    None,
    HigherPriorityRunning,
    NotACreationIntent,
    UnknownTask,
    StoreUnavailable,
}

fn spoken(task: &str) -> String {
    task.replace('_', " ")
}

/// Fixed wording per reason, so repeated failures hit the speech cache.
pub fn human_text(reason: Reason, task: &str, running: Option<&str>) -> String {
    match reason {
        Reason::None => String::new(),
        Reason::HigherPriorityRunning => format!(
            "I cannot start {} now because {} is running with a higher priority.",
            spoken(task),
            spoken(running.unwrap_or("another task"))
        ),
        Reason::NotACreationIntent => "Sorry, that is not something I can start.".to_owned(),
        Reason::UnknownTask => format!("I do not know how to do {}.", spoken(task)),
        Reason::StoreUnavailable => format!("I could not fetch {} from the store.", spoken(task)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningSnapshot {
    pub task: String,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub request_id: u64,
    pub kind: DecisionKind,
    pub reason: Reason,
    pub human_text: String,
    pub task_name: String,
    pub priority: u32,
    pub tick: Tick,
    /// The running agent when the request was examined.
    pub running_at_decision: Option<RunningSnapshot>,
}

#[derive(Debug, Clone, Serialize)]
struct DecisionLine {
    request_id: u64,
    kind: DecisionKind,
    reason: Reason,
    tick: Tick,
}

/// One JSON object per line: `request_id`, `kind`, `reason`, `tick`.
pub fn decision_log_jsonl(decisions: &[Decision]) -> String {
    let mut out = String::new();
    for d in decisions {
        let line = DecisionLine { request_id: d.request_id, kind: d.kind, reason: d.reason, tick: d.tick };
        out.push_str(&serde_json::to_string(&line).expect("decision lines serialize"));
        out.push('\n');
    }
    out
}

/// Outcome of the scheduling policy for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Start,
    Preempt,
    Reject(Reason),
}

/// Priority policy: the newcomer must strictly outrank the running agent.
pub fn decide(running: Option<u32>, req: &TaskRequest) -> Verdict {
    if req.task_name.is_empty() {
        return Verdict::Reject(Reason::NotACreationIntent);
    }
    match running {
        None => Verdict::Start,
        Some(p) if p >= req.priority => Verdict::Reject(Reason::HigherPriorityRunning),
        Some(_) => Verdict::Preempt,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningAgent {
    pub package_name: String,
    pub version: u32,
    pub priority: u32,
    pub started_tick: Tick,
    pub request_id: u64,
    pub agent: AgentId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Termination {
    pub request_id: u64,
    pub agent: AgentId,
    pub outcome: String,
    pub forced: bool,
    pub tick: Tick,
}

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    Terminating { next: Option<(TaskRequest, RunningSnapshot)>, deadline: Tick },
    Downloading { req: TaskRequest, preempted: Option<RunningSnapshot> },
}

pub struct Harmoniser {
    mailbox: Mailbox,
    terminate_deadline: Tick,
    running: Option<RunningAgent>,
    conversation_open: bool,
    phase: Phase,
    backlog: VecDeque<TaskRequest>,
    decisions: Vec<Decision>,
    terminations: Vec<Termination>,
    relayed: u64,
}

impl Harmoniser {
    pub fn new(bus: &mut Bus, terminate_deadline: Tick) -> Result<Self, BusError> {
        Ok(Self {
            mailbox: bus.register_agent(AgentId::harmoniser())?,
            terminate_deadline,
            running: None,
            conversation_open: false,
            phase: Phase::Idle,
            backlog: VecDeque::new(),
            decisions: Vec::new(),
            terminations: Vec::new(),
            relayed: 0,
        })
    }

    pub fn running(&self) -> Option<&RunningAgent> {
        self.running.as_ref()
    }

    pub fn conversation_open(&self) -> bool {
        self.conversation_open
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn decision_for(&self, request_id: u64) -> Option<&Decision> {
        self.decisions.iter().find(|d| d.request_id == request_id)
    }

    pub fn terminations(&self) -> &[Termination] {
        &self.terminations
    }

    /// Replies forwarded to a conversing agent.
    pub fn relayed(&self) -> u64 {
        self.relayed
    }

    pub fn is_idle(&self) -> bool {
        matches!(self.phase, Phase::Idle) && self.backlog.is_empty()
    }

    pub fn step(&mut self, bus: &mut Bus, now: Tick, runtime: &mut Runtime) {
        while let Some(env) = bus.poll_due(&self.mailbox, now) {
            match env.payload {
                Payload::TaskRequestMsg(RequestMsg::Submit(req)) => self.backlog.push_back(req),
                Payload::TaskRequestMsg(RequestMsg::CancelCurrent) => {
                    // a termination already in progress covers the cancel
                    if matches!(self.phase, Phase::Idle) && self.running.is_some() {
                        self.begin_termination(bus, now, runtime, None);
                    }
                }
                Payload::Ack(ack) => self.on_agent_ack(bus, now, &env.src, ack),
                Payload::DownloadResponse(resp) => self.on_download(bus, now, runtime, resp),
                _ => {}
            }
        }

        if let Phase::Terminating { deadline, .. } = self.phase {
            if now >= deadline {
                runtime.force_remove(bus, now);
                self.agent_gone(bus, now, "preempted", true);
            }
        }

        while matches!(self.phase, Phase::Idle) {
            let Some(req) = self.backlog.pop_front() else { break };
            self.handle_request(bus, now, runtime, req);
        }
    }

    fn snapshot(&self) -> Option<RunningSnapshot> {
        self.running.as_ref().map(|r| RunningSnapshot { task: r.package_name.clone(), priority: r.priority })
    }

    fn handle_request(&mut self, bus: &mut Bus, now: Tick, runtime: &mut Runtime, req: TaskRequest) {
        if self.conversation_open && req.intent.source == Source::Voice {
            if let Some(agent) = self.running.as_ref().map(|r| r.agent.clone()) {
                self.conversation_open = false;
                self.relayed += 1;
                let msg = Payload::IntentMsg(IntentMsg { intent: req.intent });
                let _ = bus.send(now, self.mailbox.id(), &agent, msg);
                return;
            }
        }
        let snapshot = self.snapshot();
        match decide(snapshot.as_ref().map(|s| s.priority), &req) {
            Verdict::Reject(reason) => self.reject(bus, now, &req, reason, snapshot),
            Verdict::Start => self.download(bus, now, req, None),
            Verdict::Preempt => {
                let snap = snapshot.expect("preempt implies a running agent");
                self.begin_termination(bus, now, runtime, Some((req, snap)));
            }
        }
    }

    fn begin_termination(
        &mut self,
        bus: &mut Bus,
        now: Tick,
        runtime: &mut Runtime,
        next: Option<(TaskRequest, RunningSnapshot)>,
    ) {
        let agent = self.running.as_ref().expect("termination needs a running agent").agent.clone();
        self.phase = Phase::Terminating { next, deadline: now + self.terminate_deadline };
        let cmd = Payload::LifecycleCommand(Lifecycle::Terminate { deadline_ticks: self.terminate_deadline });
        if bus.send(now, self.mailbox.id(), &agent, cmd).is_err() {
            runtime.force_remove(bus, now);
            self.agent_gone(bus, now, "preempted", true);
        }
    }

    fn on_agent_ack(&mut self, bus: &mut Bus, now: Tick, src: &AgentId, ack: Ack) {
        if self.running.as_ref().is_none_or(|r| &r.agent != src) {
            return;
        }
        match ack {
            Ack::ConversationOpen => self.conversation_open = true,
            Ack::ConversationClosed => self.conversation_open = false,
            Ack::Outcome { outcome } => self.agent_gone(bus, now, &outcome, false),
        }
    }

    /// The running agent finished, was terminated, or was removed.
    fn agent_gone(&mut self, bus: &mut Bus, now: Tick, outcome: &str, forced: bool) {
        let Some(r) = self.running.take() else { return };
        self.conversation_open = false;
        self.terminations.push(Termination {
            request_id: r.request_id,
            agent: r.agent,
            outcome: outcome.to_owned(),
            forced,
            tick: now,
        });
        if let Phase::Terminating { next: Some((req, snap)), .. } = std::mem::replace(&mut self.phase, Phase::Idle) {
            self.download(bus, now, req, Some(snap));
        }
    }

    fn download(&mut self, bus: &mut Bus, now: Tick, req: TaskRequest, preempted: Option<RunningSnapshot>) {
        let msg = DownloadRequest { task_name: req.task_name.clone(), request_id: req.request_id };
        bus.send(now, self.mailbox.id(), &AgentId::store(), Payload::DownloadRequest(msg))
            .expect("store agent is registered");
        self.phase = Phase::Downloading { req, preempted };
    }

    fn on_download(&mut self, bus: &mut Bus, now: Tick, runtime: &mut Runtime, resp: DownloadResponse) {
        let Phase::Downloading { req, .. } = &self.phase else { return };
        if req.request_id != resp.request_id {
            return;
        }
        let Phase::Downloading { req, preempted } = std::mem::replace(&mut self.phase, Phase::Idle) else {
            unreachable!()
        };
        let Some(package) = resp.package else {
            return self.reject(bus, now, &req, Reason::UnknownTask, preempted);
        };
        if !package.verify() {
            return self.reject(bus, now, &req, Reason::StoreUnavailable, preempted);
        }
        let version = package.version();
        let name = package.name().to_owned();
        let handle: DaHandle = match runtime.spawn(bus, now, package, req.priority, req.request_id) {
            Ok(h) => h,
            Err(_) => return self.reject(bus, now, &req, Reason::StoreUnavailable, preempted),
        };
        let cmd =
            Lifecycle::Spawn { package: name.clone(), version, priority: req.priority, request_id: req.request_id };
        bus.send(now, self.mailbox.id(), &handle.id, Payload::LifecycleCommand(cmd))
            .expect("agent was just registered");
        self.running = Some(RunningAgent {
            package_name: name,
            version,
            priority: req.priority,
            started_tick: now,
            request_id: req.request_id,
            agent: handle.id,
        });
        let kind = if preempted.is_some() { DecisionKind::PreemptedAndAccepted } else { DecisionKind::Accepted };
        self.record(now, &req, kind, Reason::None, String::new(), preempted);
    }

    fn reject(
        &mut self,
        bus: &mut Bus,
        now: Tick,
        req: &TaskRequest,
        reason: Reason,
        running: Option<RunningSnapshot>,
    ) {
        let text = human_text(reason, &req.task_name, running.as_ref().map(|r| r.task.as_str()));
        let notice = FailureNotice { request_id: req.request_id, reason, text: text.clone() };
        bus.send(now, self.mailbox.id(), &AgentId::core(), Payload::FailureNotice(notice))
            .expect("core agent is registered");
        self.record(now, req, DecisionKind::Rejected, reason, text, running);
    }

    fn record(
        &mut self,
        now: Tick,
        req: &TaskRequest,
        kind: DecisionKind,
        reason: Reason,
        human_text: String,
        running_at_decision: Option<RunningSnapshot>,
    ) {
        self.decisions.push(Decision {
            request_id: req.request_id,
            kind,
            reason,
            human_text,
            task_name: req.task_name.clone(),
            priority: req.priority,
            tick: now,
            running_at_decision,
        });
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn policy_table() {
        let req = |p| TaskRequest::test_fixture(1, "guard", p);
        assert_eq!(decide(None, &req(3)), Verdict::Start);
        assert_eq!(decide(Some(5), &req(3)), Verdict::Reject(Reason::HigherPriorityRunning));
        assert_eq!(decide(Some(4), &req(4)), Verdict::Reject(Reason::HigherPriorityRunning));
        assert_eq!(decide(Some(3), &req(5)), Verdict::Preempt);
        let mut empty = req(9);
        empty.task_name.clear();
        assert_eq!(decide(None, &empty), Verdict::Reject(Reason::NotACreationIntent));
    }

    #[test]
    fn texts_are_fixed() {
        assert_eq!(
            human_text(Reason::HigherPriorityRunning, "call_robot", Some("guard")),
            "I cannot start call robot now because guard is running with a higher priority."
        );
        assert_eq!(human_text(Reason::UnknownTask, "dance", None), "I do not know how to do dance.");
        for r in
            [Reason::HigherPriorityRunning, Reason::NotACreationIntent, Reason::UnknownTask, Reason::StoreUnavailable]
        {
            assert!(!human_text(r, "x", None).is_empty());
        }
    }

    #[test]
    fn decision_log_lines() {
        let d = Decision {
            request_id: 4,
            kind: DecisionKind::Rejected,
            reason: Reason::UnknownTask,
            human_text: "x".into(),
            task_name: "dance".into(),
            priority: 1,
            tick: 9,
            running_at_decision: None,
        };
        assert_eq!(
            decision_log_jsonl(&[d]),
            "{\"request_id\":4,\"kind\":\"Rejected\",\"reason\":\"UnknownTask\",\"tick\":9}\n"
        );
    }

    proptest! {
        #[test]
        fn rejection_implies_dominance(running in proptest::option::of(0u32..10), prio in 0u32..10) {
            let req = TaskRequest::test_fixture(1, "t", prio);
            match decide(running, &req) {
                Verdict::Reject(Reason::HigherPriorityRunning) => prop_assert!(running.unwrap() >= prio),
                Verdict::Preempt => prop_assert!(running.unwrap() < prio),
                Verdict::Start => prop_assert!(running.is_none()),
                Verdict::Reject(_) => prop_assert!(false),
            }
        }
    }
}
