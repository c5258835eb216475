use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fsm::{validate, Action, FsmDefinition, NavTarget, Step, Violation};
use super::outcome;
use crate::core_agent::Pose;
use crate::messaging::{
    Ack, AgentId, AskCommand, BodyCommand, Bus, BusError, Envelope, Lifecycle, Mailbox, NavCommand, Payload, Role,
    SayCommand, Tick,
};
use crate::store::TaskPackage;

/// Symbolic goal names used by `navigate_to` actions.
///
/// File format is TOML, one table per location:
///
/// ```toml
/// [kitchen]
/// x = 6.5
/// y = 1.0
/// theta = 3.14
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationMap(BTreeMap<String, Pose>);

impl LocationMap {
    pub fn parse(text: &str) -> Result<Self, String> {
        let map: LocationMap = toml::from_str(text).map_err(|e| e.to_string())?;
        if let Some((name, _)) = map.0.iter().find(|(_, p)| !p.is_finite()) {
            return Err(format!("location `{name}` has non-finite coordinates"));
        }
        Ok(map)
    }

    pub fn shipped() -> Self {
        Self::parse(include_str!("../../data/locations.toml")).expect("shipped locations are valid")
    }

    pub fn insert(&mut self, name: impl Into<String>, pose: Pose) {
        self.0.insert(name.into(), pose);
    }

    pub fn resolve(&self, name: &str) -> Option<Pose> {
        self.0.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaHandle {
    pub id: AgentId,
    pub request_id: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpawnError {
    #[error("package state machine is invalid: {0:?}")]
    InvalidFsm(Vec<Violation>),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminateAck {
    Preempted,
    /// The agent had already finished with this outcome.
    AlreadyFinished(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Awaiting {
    Start,
    Core,
    Reply,
    Timer { until: Tick },
    Nothing,
}

/// A running task: one interpreted state machine.
#[derive(Debug)]
pub struct DynamicAgent {
    id: AgentId,
    mailbox: Option<Mailbox>,
    package: TaskPackage,
    priority: u32,
    request_id: u64,
    spawned_at: Tick,
    stack: Vec<String>,
    awaiting: Awaiting,
    pending_nav: bool,
    expected: Vec<String>,
    visited: Vec<String>,
    outcome: Option<String>,
}

/// Immediate transitions allowed within one tick before the agent is aborted.
const CHAIN_LIMIT: usize = 64;

impl DynamicAgent {
    pub fn id(&self) -> &AgentId {
        &self.id
    }

    pub fn package(&self) -> &TaskPackage {
        &self.package
    }

    pub fn priority(&self) -> u32 {
        self.priority
    }

    pub fn request_id(&self) -> u64 {
        self.request_id
    }

    pub fn spawned_at(&self) -> Tick {
        self.spawned_at
    }

    /// `/`-joined path of the active state, empty before start.
    pub fn state_path(&self) -> String {
        self.stack.join("/")
    }

    pub fn visited(&self) -> &[String] {
        &self.visited
    }

    pub fn outcome(&self) -> Option<&str> {
        self.outcome.as_deref()
    }

    fn machine_at(&self, depth: usize) -> &FsmDefinition {
        let mut m = self.package.fsm();
        for name in &self.stack[..depth] {
            match &m.states[name].step {
                Step::Machine(inner) => m = inner,
                Step::Action(_) => unreachable!("stack only descends through machine states"),
            }
        }
        m
    }

    fn send_core(&self, bus: &mut Bus, now: Tick, payload: Payload) {
        // a failed send leaves the agent waiting; termination still works
        let _ = bus.send(now, &self.id, &AgentId::core(), payload);
    }

    fn send_th(&self, bus: &mut Bus, now: Tick, ack: Ack) {
        let _ = bus.send(now, &self.id, &AgentId::harmoniser(), Payload::Ack(ack));
    }

    fn start(&mut self, bus: &mut Bus, now: Tick, locations: &LocationMap) {
        let initial = self.package.fsm().initial.clone();
        self.stack.push(initial);
        self.enter(bus, now, locations);
    }

    /// Issues the action of the state on top of the stack, following any
    /// outcome that is known immediately.
    fn enter(&mut self, bus: &mut Bus, now: Tick, locations: &LocationMap) {
        for _ in 0..CHAIN_LIMIT {
            let depth = self.stack.len() - 1;
            let step = self.machine_at(depth).states[&self.stack[depth]].step.clone();
            self.visited.push(self.state_path());
            let immediate = match step {
                Step::Machine(inner) => {
                    self.stack.push(inner.initial.clone());
                    continue;
                }
                Step::Action(action) => self.issue(bus, now, action, locations),
            };
            match immediate {
                None => return,
                Some(o) => {
                    if !self.take_transition(&o) {
                        let result = self.outcome.clone().unwrap_or_else(|| outcome::ABORTED.to_owned());
                        self.finish(bus, now, &result);
                        return;
                    }
                }
            }
        }
        self.finish(bus, now, outcome::ABORTED);
    }

    /// Returns an outcome when the action completes without a round trip.
    fn issue(&mut self, bus: &mut Bus, now: Tick, action: Action, locations: &LocationMap) -> Option<String> {
        match action {
            Action::Say { text } => {
                self.send_core(bus, now, Payload::SayCommand(SayCommand { text }));
                self.awaiting = Awaiting::Core;
            }
            Action::Ask { text, expected, timeout } => {
                self.expected = expected.clone();
                let ask = AskCommand::Open { text, expected, timeout_ticks: timeout };
                self.send_core(bus, now, Payload::AskCommand(ask));
                self.send_th(bus, now, Ack::ConversationOpen);
                self.awaiting = Awaiting::Reply;
            }
            Action::NavigateTo(target) => {
                let pose = match target {
                    NavTarget::Pose(p) => p,
                    NavTarget::Location(name) => match locations.resolve(&name) {
                        Some(p) => p,
                        None => return Some(outcome::ABORTED.to_owned()),
                    },
                };
                self.send_core(bus, now, Payload::NavGoal(NavCommand::Goal { pose }));
                self.pending_nav = true;
                self.awaiting = Awaiting::Core;
            }
            Action::SetBody { torso_height, pan, tilt } => {
                self.send_core(bus, now, Payload::BodyCommand(BodyCommand { torso_height, pan, tilt }));
                self.awaiting = Awaiting::Core;
            }
            Action::Wait { ticks } => self.awaiting = Awaiting::Timer { until: now + ticks },
        }
        None
    }

    /// Moves to the next state, popping finished nested machines. Returns
    /// false once the root machine reached a terminal (or had no transition).
    fn take_transition(&mut self, o: &str) -> bool {
        let mut o = o.to_owned();
        loop {
            let depth = self.stack.len() - 1;
            let machine = self.machine_at(depth);
            let Some(target) = machine.states[&self.stack[depth]].transitions.get(&o).cloned() else {
                self.outcome = Some(outcome::ABORTED.to_owned());
                return false;
            };
            if machine.states.contains_key(&target) {
                self.stack[depth] = target;
                return true;
            }
            if depth == 0 {
                self.outcome = Some(target);
                return false;
            }
            self.stack.pop();
            o = target;
        }
    }

    fn on_outcome(&mut self, bus: &mut Bus, now: Tick, o: &str, locations: &LocationMap) {
        self.awaiting = Awaiting::Nothing;
        self.pending_nav = false;
        if self.take_transition(o) {
            self.enter(bus, now, locations);
        } else {
            let result = self.outcome.clone().unwrap_or_else(|| outcome::ABORTED.to_owned());
            self.finish(bus, now, &result);
        }
    }

    fn finish(&mut self, bus: &mut Bus, now: Tick, result: &str) {
        if let Some(mailbox) = self.mailbox.take() {
            self.outcome = Some(result.to_owned());
            self.awaiting = Awaiting::Nothing;
            self.send_th(bus, now, Ack::Outcome { outcome: result.to_owned() });
            bus.deregister(mailbox);
        }
    }

    /// Cancels the running action and reports `preempted`.
    fn preempt(&mut self, bus: &mut Bus, now: Tick) -> TerminateAck {
        if self.mailbox.is_none() {
            return TerminateAck::AlreadyFinished(self.outcome.clone().unwrap_or_default());
        }
        match self.awaiting {
            Awaiting::Core if self.pending_nav => self.send_core(bus, now, Payload::NavGoal(NavCommand::Cancel)),
            Awaiting::Reply => self.send_core(bus, now, Payload::AskCommand(AskCommand::Cancel)),
            _ => {}
        }
        self.finish(bus, now, outcome::PREEMPTED);
        TerminateAck::Preempted
    }

    fn handle(&mut self, bus: &mut Bus, now: Tick, env: Envelope, locations: &LocationMap) {
        match (env.payload, self.awaiting) {
            (Payload::LifecycleCommand(Lifecycle::Spawn { .. }), Awaiting::Start) => self.start(bus, now, locations),
            (Payload::LifecycleCommand(Lifecycle::Terminate { .. }), _) => {
                self.preempt(bus, now);
            }
            (Payload::Ack(Ack::Outcome { outcome: o }), Awaiting::Core) => self.on_outcome(bus, now, &o, locations),
            (Payload::Ack(Ack::Outcome { outcome: o }), Awaiting::Reply) if o == outcome::TIMEOUT => {
                self.send_th(bus, now, Ack::ConversationClosed);
                self.on_outcome(bus, now, &o, locations);
            }
            (Payload::IntentMsg(msg), Awaiting::Reply) => {
                let o = if self.expected.contains(&msg.intent.name) {
                    msg.intent.name
                } else {
                    outcome::UNEXPECTED.to_owned()
                };
                self.on_outcome(bus, now, &o, locations);
            }
            _ => {}
        }
    }

    fn step(&mut self, bus: &mut Bus, now: Tick, locations: &LocationMap) {
        while let Some(mailbox) = &self.mailbox {
            let Some(env) = bus.poll_due(mailbox, now) else { break };
            self.handle(bus, now, env, locations);
        }
        if let Awaiting::Timer { until } = self.awaiting {
            if now >= until && self.mailbox.is_some() {
                self.on_outcome(bus, now, outcome::SUCCEEDED, locations);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinishedAgent {
    pub package: String,
    pub request_id: u64,
    pub outcome: String,
    pub visited: Vec<String>,
    pub finished_at: Tick,
    pub forced: bool,
}

/// Hosts the (at most one) Dynamic Agent and drives it each tick.
#[derive(Debug, Default)]
pub struct Runtime {
    slot: Option<DynamicAgent>,
    locations: LocationMap,
    finished: Vec<FinishedAgent>,
}

impl Runtime {
    pub fn new(locations: LocationMap) -> Self {
        Self { slot: None, locations, finished: Vec::new() }
    }

    pub fn current(&self) -> Option<&DynamicAgent> {
        self.slot.as_ref()
    }

    pub fn finished(&self) -> &[FinishedAgent] {
        &self.finished
    }

    /// Registers the agent on the bus. It starts executing once it receives
    /// the spawn lifecycle command.
    pub fn spawn(
        &mut self,
        bus: &mut Bus,
        now: Tick,
        package: TaskPackage,
        priority: u32,
        request_id: u64,
    ) -> Result<DaHandle, SpawnError> {
        validate(package.fsm()).map_err(SpawnError::InvalidFsm)?;
        let id = AgentId::new(Role::DynamicAgent, package.name()).map_err(|_| {
            SpawnError::InvalidFsm(vec![Violation::NoStates {
                machine: format!("bad package name {}", package.name()),
            }])
        })?;
        let mailbox = bus.register_agent(id.clone())?;
        self.slot = Some(DynamicAgent {
            id: id.clone(),
            mailbox: Some(mailbox),
            package,
            priority,
            request_id,
            spawned_at: now,
            stack: Vec::new(),
            awaiting: Awaiting::Start,
            pending_nav: false,
            expected: Vec::new(),
            visited: Vec::new(),
            outcome: None,
        });
        Ok(DaHandle { id, request_id })
    }

    pub fn step(&mut self, bus: &mut Bus, now: Tick) {
        if let Some(da) = self.slot.as_mut() {
            da.step(bus, now, &self.locations);
        }
        self.reap(now, false);
    }

    /// Terminates the agent directly. Idempotent once the agent has finished.
    pub fn terminate(&mut self, bus: &mut Bus, now: Tick, handle: &DaHandle) -> TerminateAck {
        let ack = match self.slot.as_mut().filter(|da| da.request_id == handle.request_id) {
            Some(da) => da.preempt(bus, now),
            None => {
                let done = self.finished.iter().rev().find(|f| f.request_id == handle.request_id);
                TerminateAck::AlreadyFinished(done.map(|f| f.outcome.clone()).unwrap_or_default())
            }
        };
        self.reap(now, false);
        ack
    }

    /// Removes an agent that ignored its termination deadline.
    pub fn force_remove(&mut self, bus: &mut Bus, now: Tick) -> bool {
        let Some(da) = self.slot.as_mut() else { return false };
        if let Some(mailbox) = da.mailbox.take() {
            bus.deregister(mailbox);
        }
        da.outcome.get_or_insert_with(|| outcome::PREEMPTED.to_owned());
        self.reap(now, true);
        true
    }

    fn reap(&mut self, now: Tick, forced: bool) {
        if self.slot.as_ref().is_some_and(|da| da.mailbox.is_none()) {
            let da = self.slot.take().expect("checked above");
            self.finished.push(FinishedAgent {
                package: da.package.name().to_owned(),
                request_id: da.request_id,
                outcome: da.outcome.unwrap_or_default(),
                visited: da.visited,
                finished_at: now,
                forced,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::core_agent::CoreAgent;
    use crate::intent::{Grammar, Intent, Source};
    use crate::messaging::IntentMsg;
    use crate::platform::{Platform, PlatformAgent};
    use crate::store::{parse_package, PackageDocument, Store};

    struct Rig {
        bus: Bus,
        core: CoreAgent,
        platform: PlatformAgent,
        th: Mailbox,
        runtime: Runtime,
        now: Tick,
        acks: Vec<Ack>,
    }

    impl Rig {
        fn new() -> Self {
            let mut bus = Bus::new();
            let core = CoreAgent::new(&mut bus, "default").unwrap();
            let platform = PlatformAgent::new(&mut bus, Platform::new(Grammar::shipped(), 1)).unwrap();
            let th = bus.register_agent(AgentId::harmoniser()).unwrap();
            Self { bus, core, platform, th, runtime: Runtime::new(LocationMap::shipped()), now: 0, acks: Vec::new() }
        }

        fn launch(&mut self, pkg: TaskPackage) -> DaHandle {
            let handle = self.runtime.spawn(&mut self.bus, self.now, pkg.clone(), 3, 1).unwrap();
            let cmd = Lifecycle::Spawn { package: pkg.name().into(), version: 1, priority: 3, request_id: 1 };
            self.bus.send(self.now, self.th.id(), &handle.id, Payload::LifecycleCommand(cmd)).unwrap();
            handle
        }

        fn tick(&mut self) {
            let now = self.now;
            self.core.step(&mut self.bus, now);
            self.platform.step(&mut self.bus, now);
            while let Some(env) = self.bus.poll(&self.th) {
                if let Payload::Ack(a) = env.payload {
                    self.acks.push(a);
                }
            }
            self.runtime.step(&mut self.bus, now);
            self.now += 1;
        }

        fn run_until_done(&mut self, limit: Tick) {
            while self.runtime.current().is_some() && self.now < limit {
                self.tick();
            }
            self.tick();
        }
    }

    fn shipped(name: &str) -> TaskPackage {
        Store::shipped().download(name).unwrap()
    }

    fn package(fsm: &str) -> TaskPackage {
        let fsm = serde_json::from_str(fsm).unwrap();
        TaskPackage::new(PackageDocument { name: "task".into(), version: 1, default_priority: 1, fsm })
    }

    #[test]
    fn call_robot_runs_to_success() {
        let mut rig = Rig::new();
        rig.launch(shipped("call_robot"));
        rig.run_until_done(100);
        let done = &rig.runtime.finished()[0];
        assert_eq!(done.outcome, "succeeded");
        assert_eq!(done.visited, ["acknowledge", "drive", "face_user", "offer_help"]);
        assert_eq!(rig.core.state().pose.distance_to(&LocationMap::shipped().resolve("living_room").unwrap()), 0.0);
        assert_eq!(rig.acks, [Ack::Outcome { outcome: "succeeded".into() }]);
        assert!(!rig.bus.is_registered(&AgentId::new(Role::DynamicAgent, "call_robot").unwrap()));
    }

    #[test]
    fn nested_patrol_paths() {
        let mut rig = Rig::new();
        rig.launch(shipped("guard"));
        for _ in 0..80 {
            rig.tick();
        }
        let da = rig.runtime.current().unwrap();
        let visited = da.visited();
        assert_eq!(&visited[..5], ["announce", "patrol", "patrol/hall", "patrol/kitchen", "patrol/bedroom"]);
        assert!(visited.iter().filter(|p| *p == "patrol/hall").count() >= 2, "{visited:?}");
    }

    #[test]
    fn reply_and_timeout_branches() {
        let mut rig = Rig::new();
        let handle = rig.launch(shipped("medicine_reminder"));
        for _ in 0..6 {
            rig.tick();
        }
        assert_eq!(rig.acks, [Ack::ConversationOpen]);
        let intent = Intent::new("confirm", Source::Voice, rig.now).unwrap();
        rig.bus.send(rig.now, rig.th.id(), &handle.id, Payload::IntentMsg(IntentMsg { intent })).unwrap();
        rig.run_until_done(100);
        assert_eq!(rig.runtime.finished()[0].visited, ["ask", "praise"]);
        assert_eq!(rig.runtime.finished()[0].outcome, "succeeded");

        let mut rig = Rig::new();
        rig.launch(shipped("medicine_reminder"));
        rig.run_until_done(200);
        assert_eq!(rig.runtime.finished()[0].visited, ["ask", "no_answer"]);
        assert_eq!(rig.runtime.finished()[0].outcome, "aborted");
        assert!(rig.acks.contains(&Ack::ConversationClosed));
    }

    #[test]
    fn unknown_location_aborts() {
        let mut rig = Rig::new();
        rig.launch(package(
            r#"{"initial":"go","terminals":["succeeded","aborted","preempted"],
                "states":{"go":{"action":{"navigate_to":{"location":"attic"}},
                                "transitions":{"succeeded":"succeeded","aborted":"aborted"}}}}"#,
        ));
        rig.run_until_done(10);
        assert_eq!(rig.runtime.finished()[0].outcome, "aborted");
    }

    #[test]
    fn endless_immediate_loop_is_cut() {
        let mut rig = Rig::new();
        rig.launch(package(
            r#"{"initial":"a","terminals":["succeeded","aborted","preempted"],
                "states":{"a":{"action":{"navigate_to":{"location":"attic"}},
                               "transitions":{"succeeded":"succeeded","aborted":"a"}}}}"#,
        ));
        rig.run_until_done(10);
        let done = &rig.runtime.finished()[0];
        assert_eq!(done.outcome, "aborted");
        assert_eq!(done.visited.len(), CHAIN_LIMIT);
    }

    #[test]
    fn terminate_is_idempotent() {
        let mut rig = Rig::new();
        let handle = rig.launch(shipped("guard"));
        for _ in 0..14 {
            rig.tick();
        }
        assert_eq!(rig.core.state().nav_status, crate::core_agent::NavStatus::Moving);
        assert_eq!(rig.runtime.terminate(&mut rig.bus, rig.now, &handle), TerminateAck::Preempted);
        assert_eq!(
            rig.runtime.terminate(&mut rig.bus, rig.now, &handle),
            TerminateAck::AlreadyFinished("preempted".into())
        );
        rig.tick();
        rig.tick();
        assert_ne!(rig.core.state().nav_status, crate::core_agent::NavStatus::Moving);
        assert_eq!(rig.acks.last(), Some(&Ack::Outcome { outcome: "preempted".into() }));
    }

    #[test]
    fn spawn_guards() {
        let mut rig = Rig::new();
        let mut bad = shipped("call_robot");
        bad.doc.fsm.initial = "nowhere".into();
        assert!(matches!(rig.runtime.spawn(&mut rig.bus, 0, bad, 1, 1), Err(SpawnError::InvalidFsm(_))));
        rig.runtime.spawn(&mut rig.bus, 0, shipped("guard"), 1, 1).unwrap();
        assert!(matches!(
            rig.runtime.spawn(&mut rig.bus, 0, shipped("call_robot"), 1, 2),
            Err(SpawnError::Bus(BusError::DuplicateAgent(_)))
        ));
        assert!(rig.runtime.force_remove(&mut rig.bus, 0));
        assert!(rig.runtime.finished()[0].forced);
        assert_eq!(rig.bus.registered_with_role(Role::DynamicAgent), 0);
    }

    #[test]
    fn shipped_packages_parse() {
        for text in crate::store::SHIPPED_PACKAGES {
            assert!(parse_package(text).unwrap().verify());
        }
    }

    /// Follows `succeeded` edges from the initial state, independently of the
    /// runtime.
    fn oracle_path(edges: &[usize], n: usize, limit: usize) -> (Vec<String>, Option<String>) {
        let mut path = Vec::new();
        let mut at = 0;
        while path.len() < limit {
            path.push(format!("s{at}"));
            let next = edges[at];
            if next >= n {
                return (path, Some(["succeeded", "aborted"][next - n].to_owned()));
            }
            at = next;
        }
        (path, None)
    }

    proptest! {
        #[test]
        fn wait_chains_follow_transitions(edges in proptest::collection::vec(0usize..8, 1..7)) {
            let n = edges.len();
            let edges: Vec<usize> = edges.into_iter().map(|e| e % (n + 2)).collect();
            let states: serde_json::Map<String, serde_json::Value> = edges
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    let target = if e < n { format!("s{e}") } else { ["succeeded", "aborted"][e - n].to_owned() };
                    (format!("s{i}"), serde_json::json!({"action": {"wait": {"ticks": 1}}, "transitions": {"succeeded": target}}))
                })
                .collect();
            let fsm = serde_json::json!({"initial": "s0", "terminals": ["succeeded", "aborted", "preempted"], "states": states});
            let mut rig = Rig::new();
            rig.launch(package(&fsm.to_string()));
            let horizon = 40;
            for _ in 0..horizon {
                rig.tick();
            }
            let (visited, outcome) = match rig.runtime.finished().first() {
                Some(f) => (f.visited.clone(), Some(f.outcome.clone())),
                None => (rig.runtime.current().unwrap().visited().to_vec(), None),
            };
            let (expected, expected_outcome) = oracle_path(&edges, n, visited.len());
            prop_assert_eq!(&visited, &expected);
            if outcome.is_some() {
                prop_assert_eq!(outcome, expected_outcome);
            }
        }
    }
}
