//! Simulated robot Core Agent.
//!
//! Owns the robot state (pose, torso, neck, navigation), the text-to-speech
//! cache and the audible log. Voice captured by the robot goes to the
//! platform for recognition and recognized intents go on to the robot task
//! requester. Dynamic Agents drive the robot through say/ask/navigation/body
//! commands and get an [`Ack`] with the action outcome.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dynamic_agent::outcome;
use crate::intent::Recognition;
use crate::messaging::{
    Ack, AgentId, AskCommand, BodyCommand, Bus, BusError, IntentMsg, Mailbox, NavCommand, Payload, SttRequest, Tick,
    TtsRequest,
};
use crate::platform::{speech_key, WaveBlob};

pub const TORSO_RANGE: (f64, f64) = (0.0, 0.35);
pub const PAN_RANGE: (f64, f64) = (-1.3, 1.3);
pub const TILT_RANGE: (f64, f64) = (-0.98, 0.72);
/// Straight-line travel per tick, meters.
pub const NAV_SPEED: f64 = 0.5;
pub const ARRIVAL_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavStatus {
    Idle,
    Moving,
    Reached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyField {
    Torso,
    Pan,
    Tilt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    #[error("navigation goal has non-finite coordinates")]
    NonFiniteGoal,
    #[error("{0:?} command out of range")]
    OutOfRange(BodyField),
    #[error("text to speak is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub torso_height: f64,
    pub pan: f64,
    pub tilt: f64,
    pub nav_goal: Option<Pose>,
    pub nav_status: NavStatus,
}

impl Default for RobotState {
    fn default() -> Self {
        Self {
            pose: Pose::default(),
            torso_height: 0.0,
            pan: 0.0,
            tilt: 0.0,
            nav_goal: None,
            nav_status: NavStatus::Idle,
        }
    }
}

fn within((lo, hi): (f64, f64), v: f64) -> bool {
    v >= lo && v <= hi
}

impl RobotState {
    pub fn set_navigation_goal(&mut self, goal: Pose) -> Result<(), CoreError> {
        if !goal.is_finite() {
            return Err(CoreError::NonFiniteGoal);
        }
        self.nav_goal = Some(goal);
        self.nav_status = NavStatus::Moving;
        Ok(())
    }

    pub fn cancel_navigation(&mut self) {
        self.nav_goal = None;
        self.nav_status = NavStatus::Idle;
    }

    /// All three values are applied or none is.
    pub fn set_body(&mut self, torso_height: f64, pan: f64, tilt: f64) -> Result<(), CoreError> {
        if !within(TORSO_RANGE, torso_height) {
            return Err(CoreError::OutOfRange(BodyField::Torso));
        }
        if !within(PAN_RANGE, pan) {
            return Err(CoreError::OutOfRange(BodyField::Pan));
        }
        if !within(TILT_RANGE, tilt) {
            return Err(CoreError::OutOfRange(BodyField::Tilt));
        }
        self.torso_height = torso_height;
        self.pan = pan;
        self.tilt = tilt;
        Ok(())
    }

    /// One tick of motion. Returns true on the tick the goal is reached.
    pub fn advance(&mut self) -> bool {
        let (NavStatus::Moving, Some(goal)) = (self.nav_status, self.nav_goal) else {
            return false;
        };
        let dist = self.pose.distance_to(&goal);
        if dist - NAV_SPEED < ARRIVAL_TOLERANCE {
            self.pose = goal;
            self.nav_status = NavStatus::Reached;
            return true;
        }
        let k = NAV_SPEED / dist;
        self.pose.x += (goal.x - self.pose.x) * k;
        self.pose.y += (goal.y - self.pose.y) * k;
        false
    }
}

/// Synthesized recordings keyed by normalized text and voice.
#[derive(Debug, Clone, Default)]
pub struct TtsCache {
    entries: BTreeMap<String, WaveBlob>,
    pub hits: u64,
    pub misses: u64,
}

impl TtsCache {
    pub fn key(text: &str, voice: &str) -> String {
        format!("{}\u{0}{}", speech_key(text), voice)
    }

    pub fn get(&self, key: &str) -> Option<&WaveBlob> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: String, blob: WaveBlob) {
        self.entries.insert(key, blob);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackEvent {
    pub ts: Tick,
    pub text: String,
    pub duration_ticks: u32,
}

/// Notable things the core agent observed, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoreEvent {
    NoMatch { ts: Tick, utterance: String, channel_success: bool },
    ReplyCaptured { ts: Tick, intent: String, unexpected: bool },
    AskTimeout { ts: Tick },
    UndeliverableAck { ts: Tick, to: AgentId },
}

/// What happens once a piece of speech has been played.
#[derive(Debug, Clone, PartialEq)]
enum AfterSpeech {
    Nothing,
    AckAgent(AgentId),
    OpenPrompt { agent: AgentId, expected: BTreeSet<String>, timeout: Tick },
}

#[derive(Debug, Clone)]
struct SpeechJob {
    text: String,
    after: AfterSpeech,
}

#[derive(Debug, Clone, PartialEq)]
enum PromptState {
    /// Waiting for the question to be synthesized.
    Speaking,
    Listening {
        deadline: Tick,
    },
}

#[derive(Debug, Clone)]
struct Prompt {
    agent: AgentId,
    expected: BTreeSet<String>,
    state: PromptState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SayStatus {
    Played,
    /// Synthesis requested (or already in flight); playback follows the
    /// platform's reply.
    Pending,
}

pub struct CoreAgent {
    mailbox: Mailbox,
    voice: String,
    state: RobotState,
    cache: TtsCache,
    pending_tts: BTreeMap<String, Vec<SpeechJob>>,
    stt_in_flight: u32,
    prompt: Option<Prompt>,
    nav_owner: Option<AgentId>,
    audible: Vec<PlaybackEvent>,
    events: Vec<CoreEvent>,
}

impl CoreAgent {
    pub fn new(bus: &mut Bus, voice: impl Into<String>) -> Result<Self, BusError> {
        let mailbox = bus.register_agent(AgentId::core())?;
        Ok(Self {
            mailbox,
            voice: voice.into(),
            state: RobotState::default(),
            cache: TtsCache::default(),
            pending_tts: BTreeMap::new(),
            stt_in_flight: 0,
            prompt: None,
            nav_owner: None,
            audible: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut RobotState {
        &mut self.state
    }

    pub fn cache(&self) -> &TtsCache {
        &self.cache
    }

    pub fn audible_log(&self) -> &[PlaybackEvent] {
        &self.audible
    }

    pub fn events(&self) -> &[CoreEvent] {
        &self.events
    }

    /// True when nothing is in flight and no conversation or motion is active.
    pub fn is_idle(&self) -> bool {
        self.pending_tts.is_empty()
            && self.stt_in_flight == 0
            && self.prompt.is_none()
            && self.state.nav_status != NavStatus::Moving
    }

    /// Speaks `text`, synthesizing through the platform only on a cache miss.
    pub fn say(&mut self, bus: &mut Bus, now: Tick, text: &str) -> Result<SayStatus, CoreError> {
        self.speak(bus, now, text, AfterSpeech::Nothing)
    }

    fn speak(&mut self, bus: &mut Bus, now: Tick, text: &str, after: AfterSpeech) -> Result<SayStatus, CoreError> {
        if speech_key(text).is_empty() {
            return Err(CoreError::EmptyText);
        }
        let key = TtsCache::key(text, &self.voice);
        if let Some(duration) = self.cache.get(&key).map(|b| b.duration_ticks) {
            self.cache.hits += 1;
            self.play(bus, now, text, duration, after);
            return Ok(SayStatus::Played);
        }
        let job = SpeechJob { text: text.to_owned(), after };
        if let Some(waiting) = self.pending_tts.get_mut(&key) {
            // same recording already requested; share it
            self.cache.hits += 1;
            waiting.push(job);
            return Ok(SayStatus::Pending);
        }
        self.cache.misses += 1;
        let req = TtsRequest { text: text.to_owned(), voice: self.voice.clone() };
        bus.send(now, self.mailbox.id(), &AgentId::platform(), Payload::TtsRequest(req))
            .expect("platform agent is registered");
        self.pending_tts.insert(key, vec![job]);
        Ok(SayStatus::Pending)
    }

    fn play(&mut self, bus: &mut Bus, now: Tick, text: &str, duration_ticks: u32, after: AfterSpeech) {
        self.audible.push(PlaybackEvent { ts: now, text: text.to_owned(), duration_ticks });
        match after {
            AfterSpeech::Nothing => {}
            AfterSpeech::AckAgent(agent) => self.ack(bus, now, &agent, outcome::SUCCEEDED),
            AfterSpeech::OpenPrompt { agent, expected, timeout } => {
                // a cancel may have arrived while the question was being synthesized
                if let Some(prompt) = self.prompt.as_mut().filter(|p| p.agent == agent) {
                    prompt.expected = expected;
                    prompt.state = PromptState::Listening { deadline: now + timeout };
                }
            }
        }
    }

    fn ack(&mut self, bus: &mut Bus, now: Tick, to: &AgentId, outcome: &str) {
        let ack = Payload::Ack(Ack::Outcome { outcome: outcome.to_owned() });
        if bus.send(now, self.mailbox.id(), to, ack).is_err() {
            self.events.push(CoreEvent::UndeliverableAck { ts: now, to: to.clone() });
        }
    }

    /// Voice recorded by the robot microphone. `channel_p` is the probability
    /// the recording is clean enough to be recognized.
    pub fn on_voice_captured(&mut self, bus: &mut Bus, now: Tick, utterance: &str, channel_p: f64) {
        let req = SttRequest { utterance: utterance.to_owned(), channel_p: channel_p.clamp(0.0, 1.0) };
        bus.send(now, self.mailbox.id(), &AgentId::platform(), Payload::SttRequest(req))
            .expect("platform agent is registered");
        self.stt_in_flight += 1;
    }

    pub fn step(&mut self, bus: &mut Bus, now: Tick) {
        if self.state.advance() {
            if let Some(owner) = self.nav_owner.take() {
                self.ack(bus, now, &owner, outcome::SUCCEEDED);
            }
        }

        while let Some(env) = bus.poll_due(&self.mailbox, now) {
            match env.payload {
                Payload::SttResponse(resp) => {
                    self.stt_in_flight = self.stt_in_flight.saturating_sub(1);
                    match resp.result.outcome {
                        Recognition::Intent(intent) => {
                            if let Some(prompt) = self.prompt.take() {
                                let unexpected = !prompt.expected.contains(&intent.name);
                                self.events.push(CoreEvent::ReplyCaptured {
                                    ts: now,
                                    intent: intent.name.clone(),
                                    unexpected,
                                });
                            }
                            let msg = Payload::IntentMsg(IntentMsg { intent: intent.at(now) });
                            // the robot requester is always registered in an assembled system
                            let _ = bus.send(now, self.mailbox.id(), &AgentId::robot_requester(), msg);
                        }
                        Recognition::NoMatch => self.events.push(CoreEvent::NoMatch {
                            ts: now,
                            utterance: resp.utterance,
                            channel_success: resp.result.channel_success,
                        }),
                    }
                }
                Payload::TtsResponse(resp) => {
                    let key = TtsCache::key(&resp.blob.text_key, &resp.voice);
                    let duration = resp.blob.duration_ticks;
                    self.cache.insert(key.clone(), resp.blob);
                    for job in self.pending_tts.remove(&key).unwrap_or_default() {
                        self.play(bus, now, &job.text, duration, job.after);
                    }
                }
                Payload::FailureNotice(notice) => {
                    let _ = self.say(bus, now, &notice.text);
                }
                Payload::SayCommand(cmd) => {
                    if self.speak(bus, now, &cmd.text, AfterSpeech::AckAgent(env.src.clone())).is_err() {
                        self.ack(bus, now, &env.src, outcome::ABORTED);
                    }
                }
                Payload::AskCommand(AskCommand::Open { text, expected, timeout_ticks }) => {
                    let expected: BTreeSet<String> = expected.into_iter().collect();
                    self.prompt = Some(Prompt {
                        agent: env.src.clone(),
                        expected: expected.clone(),
                        state: PromptState::Speaking,
                    });
                    let after = AfterSpeech::OpenPrompt { agent: env.src.clone(), expected, timeout: timeout_ticks };
                    if self.speak(bus, now, &text, after).is_err() {
                        self.prompt = None;
                        self.ack(bus, now, &env.src, outcome::ABORTED);
                    }
                }
                Payload::AskCommand(AskCommand::Cancel) => {
                    if self.prompt.as_ref().is_some_and(|p| p.agent == env.src) {
                        self.prompt = None;
                    }
                }
                Payload::NavGoal(NavCommand::Goal { pose }) => match self.state.set_navigation_goal(pose) {
                    Ok(()) => self.nav_owner = Some(env.src.clone()),
                    Err(_) => self.ack(bus, now, &env.src, outcome::ABORTED),
                },
                Payload::NavGoal(NavCommand::Cancel) => {
                    self.state.cancel_navigation();
                    self.nav_owner = None;
                }
                Payload::BodyCommand(BodyCommand { torso_height, pan, tilt }) => {
                    let result = match self.state.set_body(torso_height, pan, tilt) {
                        Ok(()) => outcome::SUCCEEDED,
                        Err(_) => outcome::ABORTED,
                    };
                    self.ack(bus, now, &env.src, result);
                }
                _ => {}
            }
        }

        if let Some(Prompt { agent, state: PromptState::Listening { deadline }, .. }) = &self.prompt {
            if now >= *deadline {
                let agent = agent.clone();
                self.prompt = None;
                self.events.push(CoreEvent::AskTimeout { ts: now });
                self.ack(bus, now, &agent, outcome::TIMEOUT);
            }
        }
    }
}
