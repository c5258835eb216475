use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, Mic, SystemConfig};
use super::scenario::{ScenarioEvent, ScenarioScript};
use crate::core_agent::{CoreAgent, CoreEvent, PlaybackEvent};
use crate::dynamic_agent::{FinishedAgent, Runtime};
use crate::harmoniser::{decision_log_jsonl, Decision, Harmoniser, Termination};
use crate::messaging::{encode_trace, Bus, BusStats, Envelope, Tick};
use crate::platform::{Platform, PlatformAgent, PlatformCalls};
use crate::requesters::{HomeEvent, OperatorError, OperatorRequester, RequestIds, RobotRequester, SmartHomeRequester};
use crate::store::StoreAgent;

/// Ticks a scenario may run past its last event while waiting to settle.
pub const SETTLE_HORIZON: Tick = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningStatus {
    pub task: String,
    pub priority: u32,
    pub state: String,
    pub uptime_ticks: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub tick: Tick,
    pub running: Option<RunningStatus>,
    pub last_decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorLogEntry {
    pub ts: Tick,
    pub event: String,
    pub error: String,
}

/// Every agent wired onto one bus, driven one tick at a time.
///
/// Per tick: scripted input, then core, platform, robot requester,
/// harmoniser, store and the dynamic agent runtime, in that order.
pub struct System {
    bus: Bus,
    now: Tick,
    mic: Mic,
    acoustic: super::config::AcousticModel,
    ids: RequestIds,
    core: CoreAgent,
    platform: PlatformAgent,
    smart_home: SmartHomeRequester,
    robot: RobotRequester,
    operator: OperatorRequester,
    harmoniser: Harmoniser,
    store: StoreAgent,
    runtime: Runtime,
    operator_log: Vec<OperatorLogEntry>,
}

impl System {
    pub fn new(config: SystemConfig, seed: u64) -> Self {
        let mut bus = Bus::new();
        let fresh = "agents register on an empty bus";
        let core = CoreAgent::new(&mut bus, config.voice).expect(fresh);
        let platform = PlatformAgent::new(&mut bus, Platform::new(config.grammar, seed)).expect(fresh);
        let smart_home = SmartHomeRequester::new(&mut bus, config.rules.clone()).expect(fresh);
        let robot = RobotRequester::new(&mut bus, config.rules).expect(fresh);
        let operator = OperatorRequester::new(&mut bus).expect(fresh);
        let harmoniser = Harmoniser::new(&mut bus, config.terminate_deadline).expect(fresh);
        let store = StoreAgent::new(&mut bus, config.store).expect(fresh);
        Self {
            bus,
            now: 0,
            mic: config.mic,
            acoustic: config.acoustic,
            ids: RequestIds::default(),
            core,
            platform,
            smart_home,
            robot,
            operator,
            harmoniser,
            store,
            runtime: Runtime::new(config.locations),
            operator_log: Vec::new(),
        }
    }

    /// The tick that the next [`System::step`] will run.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn core(&self) -> &CoreAgent {
        &self.core
    }

    pub fn harmoniser(&self) -> &Harmoniser {
        &self.harmoniser
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn platform_calls(&self) -> PlatformCalls {
        self.platform.calls()
    }

    pub fn smart_home(&self) -> &SmartHomeRequester {
        &self.smart_home
    }

    pub fn operator_log(&self) -> &[OperatorLogEntry] {
        &self.operator_log
    }

    /// Applies an input event at the current tick.
    pub fn inject(&mut self, event: &ScenarioEvent) {
        let now = self.now;
        match event {
            ScenarioEvent::Utterance { spot, text, .. } => {
                let p = self.acoustic.channel(*spot, self.mic).unwrap_or(0.0);
                self.core.on_voice_captured(&mut self.bus, now, text, p);
            }
            ScenarioEvent::Reply(text) => self.core.on_voice_captured(&mut self.bus, now, text, 1.0),
            ScenarioEvent::Button(id) => {
                self.smart_home.on_event(&mut self.bus, now, &mut self.ids, HomeEvent::Button(id.clone()));
            }
            ScenarioEvent::Sensor { name, value } => {
                let ev = HomeEvent::Sensor { name: name.clone(), value: *value };
                self.smart_home.on_event(&mut self.bus, now, &mut self.ids, ev);
            }
            ScenarioEvent::OperatorSubmit { task, priority, slots } => {
                if let Err(e) = self.operator_submit(task, *priority, slots.clone()) {
                    self.log_operator(event, e);
                }
            }
            ScenarioEvent::OperatorCancel => {
                if let Err(e) = self.operator_cancel() {
                    self.log_operator(event, e);
                }
            }
            ScenarioEvent::End => {}
        }
    }

    fn log_operator(&mut self, event: &ScenarioEvent, error: OperatorError) {
        self.operator_log.push(OperatorLogEntry { ts: self.now, event: event.to_string(), error: error.to_string() });
    }

    pub fn operator_submit(
        &mut self,
        task: &str,
        priority: i64,
        slots: BTreeMap<String, String>,
    ) -> Result<u64, OperatorError> {
        self.operator.submit(&mut self.bus, self.now, &mut self.ids, task, priority, slots)
    }

    pub fn operator_cancel(&mut self) -> Result<(), OperatorError> {
        let active = self.harmoniser.running().is_some();
        self.operator.cancel(&mut self.bus, self.now, active)
    }

    pub fn step(&mut self) {
        let now = self.now;
        self.core.step(&mut self.bus, now);
        self.platform.step(&mut self.bus, now);
        self.robot.step(&mut self.bus, now, &mut self.ids);
        self.harmoniser.step(&mut self.bus, now, &mut self.runtime);
        self.store.step(&mut self.bus, now);
        self.runtime.step(&mut self.bus, now);
        self.now += 1;
    }

    /// Nothing queued, in flight, or running.
    pub fn is_quiescent(&self) -> bool {
        self.bus.pending() == 0
            && self.core.is_idle()
            && self.harmoniser.is_idle()
            && self.harmoniser.running().is_none()
            && self.runtime.current().is_none()
    }

    pub fn status(&self) -> Status {
        let running = self.harmoniser.running().map(|r| RunningStatus {
            task: r.package_name.clone(),
            priority: r.priority,
            state: self.runtime.current().map(|da| da.state_path()).unwrap_or_default(),
            uptime_ticks: self.now.saturating_sub(r.started_tick),
        });
        Status { tick: self.now, running, last_decision: self.harmoniser.decisions().last().cloned() }
    }

    /// Rejects scripts that refer to spots the acoustic model does not know.
    pub fn check_script(&self, script: &ScenarioScript, file: &str) -> Result<(), ConfigError> {
        for (t, e) in &script.events {
            if let ScenarioEvent::Utterance { spot, .. } = e {
                if self.acoustic.channel(*spot, self.mic).is_none() {
                    return Err(ConfigError::new(file, None, format!("tick {t}: unknown spot {spot}")));
                }
            }
        }
        Ok(())
    }

    /// Plays the script, then keeps ticking until the system settles, the
    /// `end` tick is reached, or the settle horizon runs out.
    pub fn run_script(&mut self, script: &ScenarioScript) {
        let stop = script.end_tick().unwrap_or(script.last_tick() + SETTLE_HORIZON);
        let mut next = 0;
        while self.now <= stop {
            while let Some((t, e)) = script.events.get(next).filter(|(t, _)| *t <= self.now) {
                if *t == self.now {
                    self.inject(e);
                }
                next += 1;
            }
            self.step();
            if next == script.events.len() && script.end_tick().is_none() && self.is_quiescent() {
                break;
            }
        }
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            trace: self.bus.trace().to_vec(),
            decisions: self.harmoniser.decisions().to_vec(),
            terminations: self.harmoniser.terminations().to_vec(),
            finished: self.runtime.finished().to_vec(),
            playback: self.core.audible_log().to_vec(),
            core_events: self.core.events().to_vec(),
            platform_calls: self.platform.calls(),
            stats: self.bus.stats(),
            final_tick: self.now,
            operator_log: self.operator_log,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<Envelope>,
    pub decisions: Vec<Decision>,
    pub terminations: Vec<Termination>,
    pub finished: Vec<FinishedAgent>,
    pub playback: Vec<PlaybackEvent>,
    pub core_events: Vec<CoreEvent>,
    pub platform_calls: PlatformCalls,
    pub stats: BusStats,
    pub final_tick: Tick,
    pub operator_log: Vec<OperatorLogEntry>,
}

impl RunResult {
    pub fn trace_jsonl(&self) -> String {
        encode_trace(&self.trace)
    }

    pub fn decisions_jsonl(&self) -> String {
        decision_log_jsonl(&self.decisions)
    }
}

pub fn run_scenario(script: &ScenarioScript, config: SystemConfig, seed: u64) -> Result<RunResult, ConfigError> {
    let mut system = System::new(config, seed);
    system.check_script(script, "scenario")?;
    system.run_script(script);
    Ok(system.into_result())
}
