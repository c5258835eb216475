//! Task Requester agents: smart-home rules, robot voice intents, operator
//! commands. All three turn human input into [`TaskRequest`]s for the
//! harmoniser.
//!
//! Rule file lines:
//!
//! ```text
//! button:call_button_kitchen => call_robot @ 3
//! sensor:door_open > 0.5 => guard @ 6 room=hall
//! intent:call_robot => call_robot @ 3
//! ```
//!
//! `button:` and `sensor:` lines drive the smart-home requester; `intent:`
//! lines map voice intents for the robot requester.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::intent::{Intent, Source};
use crate::messaging::{is_identifier, AgentId, Bus, BusError, Mailbox, Payload, RequestMsg, Tick};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub request_id: u64,
    /// Empty when the intent does not name a task.
    pub task_name: String,
    pub priority: u32,
    pub requester: AgentId,
    pub intent: Intent,
}

impl TaskRequest {
    #[cfg(test)]
    pub(crate) fn test_fixture(request_id: u64, task_name: &str, priority: u32) -> Self {
        Self {
            request_id,
            task_name: task_name.to_owned(),
            priority,
            requester: AgentId::operator_requester(),
            intent: Intent::new(task_name, Source::Operator, 0).unwrap(),
        }
    }
}

/// System-wide request id source shared by every requester.
#[derive(Debug, Clone)]
pub struct RequestIds {
    next: u64,
}

impl Default for RequestIds {
    fn default() -> Self {
        Self { next: 1 }
    }
}

impl RequestIds {
    pub fn allocate(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparison {
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    Button(String),
    Sensor { name: String, cmp: Comparison, threshold: f64 },
    Intent(String),
}

impl Trigger {
    fn key(&self) -> String {
        match self {
            Trigger::Button(id) => format!("button:{id}"),
            Trigger::Sensor { name, cmp, threshold } => format!("sensor:{name}:{cmp:?}:{threshold}"),
            Trigger::Intent(name) => format!("intent:{name}"),
        }
    }

    fn holds(&self, reading: f64) -> bool {
        match self {
            Trigger::Sensor { cmp: Comparison::Above, threshold, .. } => reading > *threshold,
            Trigger::Sensor { cmp: Comparison::Below, threshold, .. } => reading < *threshold,
            _ => false,
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Button(id) => write!(f, "button:{id}"),
            Trigger::Sensor { name, cmp, threshold } => {
                let op = if *cmp == Comparison::Above { '>' } else { '<' };
                write!(f, "sensor:{name} {op} {threshold}")
            }
            Trigger::Intent(name) => write!(f, "intent:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub trigger: Trigger,
    pub task_name: String,
    pub priority: u32,
    pub slots: BTreeMap<String, String>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {} @ {}", self.trigger, self.task_name, self.priority)?;
        for (k, v) in &self.slots {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct RuleError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RuleError> {
        let mut seen = BTreeSet::new();
        for (i, rule) in rules.iter().enumerate() {
            if !seen.insert(rule.trigger.key()) {
                return Err(RuleError { line: i + 1, message: format!("duplicate trigger `{}`", rule.trigger) });
            }
        }
        Ok(Self { rules })
    }

    pub fn shipped() -> Self {
        include_str!("../data/rules.txt").parse().expect("shipped rules are valid")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn button(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| matches!(&r.trigger, Trigger::Button(b) if b == id))
    }

    pub fn intent(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| matches!(&r.trigger, Trigger::Intent(i) if i == name))
    }

    fn sensor_rules<'a>(&'a self, name: &'a str) -> impl Iterator<Item = (usize, &'a Rule)> + 'a {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| matches!(&r.trigger, Trigger::Sensor { name: n, .. } if n == name))
    }
}

fn parse_rule(line: &str) -> Result<Rule, String> {
    let (lhs, rhs) = line.split_once("=>").ok_or("expected `=>`")?;
    let lhs = lhs.trim();
    let trigger = if let Some(id) = lhs.strip_prefix("button:") {
        Trigger::Button(checked_name(id.trim(), "button id")?)
    } else if let Some(name) = lhs.strip_prefix("intent:") {
        Trigger::Intent(checked_name(name.trim(), "intent name")?)
    } else if let Some(rest) = lhs.strip_prefix("sensor:") {
        let (name, cmp, value) = if let Some((n, v)) = rest.split_once('>') {
            (n, Comparison::Above, v)
        } else if let Some((n, v)) = rest.split_once('<') {
            (n, Comparison::Below, v)
        } else {
            return Err("sensor rule needs `>` or `<`".into());
        };
        let threshold: f64 = value.trim().parse().map_err(|_| format!("bad threshold `{}`", value.trim()))?;
        if !threshold.is_finite() {
            return Err("threshold must be finite".into());
        }
        Trigger::Sensor { name: checked_name(name.trim(), "sensor name")?, cmp, threshold }
    } else {
        return Err(format!("unknown trigger `{lhs}`"));
    };

    let (task, rest) = rhs.split_once('@').ok_or("expected `@ <priority>`")?;
    let task_name = checked_name(task.trim(), "task name")?;
    let mut words = rest.split_whitespace();
    let prio = words.next().ok_or("missing priority")?;
    let priority: u32 = prio.parse().map_err(|_| format!("bad priority `{prio}`"))?;
    let mut slots = BTreeMap::new();
    for word in words {
        let (k, v) = word.split_once('=').ok_or_else(|| format!("expected slot `key=value`, got `{word}`"))?;
        if !is_identifier(k) || v.is_empty() {
            return Err(format!("bad slot `{word}`"));
        }
        slots.insert(k.to_owned(), v.to_owned());
    }
    Ok(Rule { trigger, task_name, priority, slots })
}

fn checked_name(s: &str, what: &str) -> Result<String, String> {
    if is_identifier(s) {
        Ok(s.to_owned())
    } else {
        Err(format!("invalid {what} `{s}`"))
    }
}

impl FromStr for RuleTable {
    type Err = RuleError;

    fn from_str(text: &str) -> Result<Self, RuleError> {
        let mut rules = Vec::new();
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rule = parse_rule(line).map_err(|message| RuleError { line: i + 1, message })?;
            rules.push(rule);
            lines.push(i + 1);
        }
        RuleTable::new(rules).map_err(|e| RuleError { line: lines[e.line - 1], message: e.message })
    }
}

fn request_for(rule: &Rule, id: u64, requester: AgentId, intent: Intent) -> TaskRequest {
    let mut slots = rule.slots.clone();
    slots.extend(intent.slots.clone());
    TaskRequest {
        request_id: id,
        task_name: rule.task_name.clone(),
        priority: rule.priority,
        requester,
        intent: intent.with_slots(slots),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HomeEvent {
    Button(String),
    Sensor { name: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HomeOutcome {
    Requested(Vec<u64>),
    NoRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoRuleEntry {
    pub ts: Tick,
    pub event: HomeEvent,
}

/// Smart-home requester. Sensor rules fire on the reading that makes their
/// predicate true, not on every reading while it stays true.
pub struct SmartHomeRequester {
    mailbox: Mailbox,
    rules: RuleTable,
    armed: BTreeMap<usize, bool>,
    no_rule: Vec<NoRuleEntry>,
}

impl SmartHomeRequester {
    pub fn new(bus: &mut Bus, rules: RuleTable) -> Result<Self, BusError> {
        let mailbox = bus.register_agent(AgentId::smart_home_requester())?;
        Ok(Self { mailbox, rules, armed: BTreeMap::new(), no_rule: Vec::new() })
    }

    pub fn no_rule_log(&self) -> &[NoRuleEntry] {
        &self.no_rule
    }

    pub fn on_event(&mut self, bus: &mut Bus, now: Tick, ids: &mut RequestIds, event: HomeEvent) -> HomeOutcome {
        let fired: Vec<Rule> = match &event {
            HomeEvent::Button(id) => self.rules.button(id).cloned().into_iter().collect(),
            HomeEvent::Sensor { name, value } => {
                let mut fired = Vec::new();
                for (i, rule) in self.rules.sensor_rules(name) {
                    let holds = rule.trigger.holds(*value);
                    let was = self.armed.insert(i, holds).unwrap_or(false);
                    if holds && !was {
                        fired.push(rule.clone());
                    }
                }
                fired
            }
        };
        if fired.is_empty() {
            self.no_rule.push(NoRuleEntry { ts: now, event });
            return HomeOutcome::NoRule;
        }
        let intent_name = match &event {
            HomeEvent::Button(id) => id.clone(),
            HomeEvent::Sensor { name, .. } => name.clone(),
        };
        let mut sent = Vec::new();
        for rule in fired {
            let intent = Intent::new(intent_name.clone(), Source::Button, now).expect("trigger names are non-empty");
            let req = request_for(&rule, ids.allocate(), self.mailbox.id().clone(), intent);
            sent.push(req.request_id);
            send_request(bus, now, &self.mailbox, req);
        }
        HomeOutcome::Requested(sent)
    }
}

fn send_request(bus: &mut Bus, now: Tick, from: &Mailbox, req: TaskRequest) {
    let msg = Payload::TaskRequestMsg(RequestMsg::Submit(req));
    bus.send(now, from.id(), &AgentId::harmoniser(), msg).expect("harmoniser is registered");
}

/// Robot requester: forwards every voice intent, mapped to a task when the
/// rule table knows it and with an empty task name otherwise.
pub struct RobotRequester {
    mailbox: Mailbox,
    rules: RuleTable,
}

impl RobotRequester {
    pub fn new(bus: &mut Bus, rules: RuleTable) -> Result<Self, BusError> {
        let mailbox = bus.register_agent(AgentId::robot_requester())?;
        Ok(Self { mailbox, rules })
    }

    pub fn step(&mut self, bus: &mut Bus, now: Tick, ids: &mut RequestIds) {
        while let Some(env) = bus.poll_due(&self.mailbox, now) {
            let Payload::IntentMsg(msg) = env.payload else { continue };
            let req = match self.rules.intent(&msg.intent.name) {
                Some(rule) => request_for(rule, ids.allocate(), self.mailbox.id().clone(), msg.intent),
                None => TaskRequest {
                    request_id: ids.allocate(),
                    task_name: String::new(),
                    priority: 0,
                    requester: self.mailbox.id().clone(),
                    intent: msg.intent,
                },
            };
            send_request(bus, now, &self.mailbox, req);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OperatorError {
    #[error("priority {0} is negative")]
    InvalidPriority(i64),
    #[error("invalid task name `{0}`")]
    InvalidTask(String),
    #[error("no task is running")]
    NotRunning,
}

pub struct OperatorRequester {
    mailbox: Mailbox,
}

impl OperatorRequester {
    pub fn new(bus: &mut Bus) -> Result<Self, BusError> {
        Ok(Self { mailbox: bus.register_agent(AgentId::operator_requester())? })
    }

    pub fn submit(
        &mut self,
        bus: &mut Bus,
        now: Tick,
        ids: &mut RequestIds,
        task_name: &str,
        priority: i64,
        slots: BTreeMap<String, String>,
    ) -> Result<u64, OperatorError> {
        if priority < 0 {
            return Err(OperatorError::InvalidPriority(priority));
        }
        let priority = u32::try_from(priority).map_err(|_| OperatorError::InvalidPriority(priority))?;
        if !is_identifier(task_name) {
            return Err(OperatorError::InvalidTask(task_name.to_owned()));
        }
        let intent = Intent::new(task_name, Source::Operator, now).expect("checked above").with_slots(slots);
        let req = TaskRequest {
            request_id: ids.allocate(),
            task_name: task_name.to_owned(),
            priority,
            requester: self.mailbox.id().clone(),
            intent,
        };
        let id = req.request_id;
        send_request(bus, now, &self.mailbox, req);
        Ok(id)
    }

    /// `active` is whether the harmoniser currently has a running agent.
    pub fn cancel(&mut self, bus: &mut Bus, now: Tick, active: bool) -> Result<(), OperatorError> {
        if !active {
            return Err(OperatorError::NotRunning);
        }
        let msg = Payload::TaskRequestMsg(RequestMsg::CancelCurrent);
        bus.send(now, self.mailbox.id(), &AgentId::harmoniser(), msg).expect("harmoniser is registered");
        Ok(())
    }
}
