//! Simulated cloud Platform Agent: deterministic text-to-speech and a
//! seeded speech-to-intent channel.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::intent::{parse_utterance, Grammar, Recognition};
use crate::messaging::{AgentId, Bus, BusError, Mailbox, Payload, SttResponse, Tick, TtsResponse};

/// Synthesized audio. Only compared for equality, never decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveBlob {
    #[serde(with = "hex")]
    pub bytes: Vec<u8>,
    pub duration_ticks: u32,
    pub text_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlatformError {
    #[error("text to synthesize is empty")]
    EmptyText,
}

/// Canonical form of spoken text: lowercased, trimmed, inner whitespace
/// collapsed to single spaces.
pub fn speech_key(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

const BYTES_PER_TICK: usize = 16;

pub fn text_to_speech(text: &str, voice: &str) -> Result<WaveBlob, PlatformError> {
    let text_key = speech_key(text);
    if text_key.is_empty() {
        return Err(PlatformError::EmptyText);
    }
    let words = text_key.split(' ').count();
    let duration_ticks = words.div_ceil(2).max(1) as u32;

    let mut bytes = Vec::with_capacity(duration_ticks as usize * BYTES_PER_TICK);
    let mut block = 0u64;
    while bytes.len() < duration_ticks as usize * BYTES_PER_TICK {
        let mut h = FnvHasher::default();
        h.write(text_key.as_bytes());
        h.write_u8(0);
        h.write(voice.as_bytes());
        h.write_u64(block);
        bytes.extend_from_slice(&h.finish().to_le_bytes());
        block += 1;
    }
    Ok(WaveBlob { bytes, duration_ticks, text_key })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SttResult {
    pub outcome: Recognition,
    pub channel_success: bool,
}

impl SttResult {
    pub fn failed() -> Self {
        Self { outcome: Recognition::NoMatch, channel_success: false }
    }
}

/// Speech services with the run's single random stream.
#[derive(Debug, Clone)]
pub struct Platform {
    grammar: Grammar,
    rng: ChaCha8Rng,
}

impl Platform {
    pub fn new(grammar: Grammar, seed: u64) -> Self {
        Self { grammar, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    /// The utterance reaches the recognizer with probability `channel_p`.
    /// Consumes exactly one draw from the stream per call.
    pub fn speech_to_intent(&mut self, utterance: &str, channel_p: f64) -> SttResult {
        let draw: f64 = self.rng.random();
        if draw < channel_p {
            return SttResult { outcome: parse_utterance(utterance, &self.grammar), channel_success: true };
        }
        SttResult::failed()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlatformCalls {
    pub tts: u64,
    pub stt: u64,
}

pub struct PlatformAgent {
    mailbox: Mailbox,
    platform: Platform,
    calls: PlatformCalls,
}

impl PlatformAgent {
    pub fn new(bus: &mut Bus, platform: Platform) -> Result<Self, BusError> {
        let mailbox = bus.register_agent(AgentId::platform())?;
        Ok(Self { mailbox, platform, calls: PlatformCalls::default() })
    }

    pub fn calls(&self) -> PlatformCalls {
        self.calls
    }

    pub fn platform_mut(&mut self) -> &mut Platform {
        &mut self.platform
    }

    pub fn step(&mut self, bus: &mut Bus, now: Tick) {
        while let Some(env) = bus.poll_due(&self.mailbox, now) {
            let reply = match env.payload {
                Payload::TtsRequest(req) => {
                    self.calls.tts += 1;
                    match text_to_speech(&req.text, &req.voice) {
                        Ok(blob) => Payload::TtsResponse(TtsResponse { voice: req.voice, blob }),
                        // the core agent never asks for empty text
                        Err(PlatformError::EmptyText) => continue,
                    }
                }
                Payload::SttRequest(req) => {
                    self.calls.stt += 1;
                    let result = self.platform.speech_to_intent(&req.utterance, req.channel_p);
                    Payload::SttResponse(SttResponse { utterance: req.utterance, result })
                }
                _ => continue,
            };
            let _ = bus.send(now, self.mailbox.id(), &env.src, reply);
        }
    }
}
