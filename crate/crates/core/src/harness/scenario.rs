//! Scripted scenario files.
//!
//! One event per line, `<tick> <event> <args...>`:
//!
//! ```text
//! 0  utterance 2 alice call robot
//! 4  button call_button_kitchen
//! 6  sensor smoke 0.9
//! 8  operator submit guard 7 room=hall
//! 20 operator cancel
//! 24 reply yes
//! 60 end
//! ```
//!
//! `end` stops the run at that tick even if agents are still busy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::messaging::{is_identifier, Tick};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioEvent {
    Utterance {
        spot: u32,
        user: String,
        text: String,
    },
    Button(String),
    Sensor {
        name: String,
        value: f64,
    },
    OperatorSubmit {
        task: String,
        priority: i64,
        slots: BTreeMap<String, String>,
    },
    OperatorCancel,
    /// Speech captured at full channel quality, e.g. an answer to a question.
    Reply(String),
    End,
}

impl fmt::Display for ScenarioEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioEvent::Utterance { spot, user, text } => write!(f, "utterance {spot} {user} {text}"),
            ScenarioEvent::Button(id) => write!(f, "button {id}"),
            ScenarioEvent::Sensor { name, value } => write!(f, "sensor {name} {value}"),
            ScenarioEvent::OperatorSubmit { task, priority, slots } => {
                write!(f, "operator submit {task} {priority}")?;
                for (k, v) in slots {
                    write!(f, " {k}={v}")?;
                }
                Ok(())
            }
            ScenarioEvent::OperatorCancel => f.write_str("operator cancel"),
            ScenarioEvent::Reply(text) => write!(f, "reply {text}"),
            ScenarioEvent::End => f.write_str("end"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub events: Vec<(Tick, ScenarioEvent)>,
}

impl ScenarioScript {
    pub fn new(events: Vec<(Tick, ScenarioEvent)>) -> Result<Self, ScenarioError> {
        if let Some(i) = events.windows(2).position(|w| w[1].0 < w[0].0) {
            return Err(ScenarioError { line: i + 2, message: "ticks must not decrease".into() });
        }
        Ok(Self { events })
    }

    pub fn last_tick(&self) -> Tick {
        self.events.last().map_or(0, |(t, _)| *t)
    }

    pub fn end_tick(&self) -> Option<Tick> {
        self.events.iter().find(|(_, e)| *e == ScenarioEvent::End).map(|(t, _)| *t)
    }
}

impl fmt::Display for ScenarioScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, e) in &self.events {
            writeln!(f, "{t} {e}")?;
        }
        Ok(())
    }
}

fn parse_event(words: &[&str]) -> Result<ScenarioEvent, String> {
    let rest = |from: usize| words[from..].join(" ");
    let name = |w: &str, what: &str| {
        if is_identifier(w) {
            Ok(w.to_owned())
        } else {
            Err(format!("invalid {what} `{w}`"))
        }
    };
    match words {
        ["utterance", spot, user, _, ..] => Ok(ScenarioEvent::Utterance {
            spot: spot.parse().map_err(|_| format!("bad spot `{spot}`"))?,
            user: name(user, "user")?,
            text: rest(3),
        }),
        ["button", id] => Ok(ScenarioEvent::Button(name(id, "button id")?)),
        ["sensor", sensor, value] => {
            let value: f64 = value.parse().map_err(|_| format!("bad reading `{value}`"))?;
            if !value.is_finite() {
                return Err("reading must be finite".into());
            }
            Ok(ScenarioEvent::Sensor { name: name(sensor, "sensor")?, value })
        }
        ["operator", "submit", task, priority, slots @ ..] => {
            let mut map = BTreeMap::new();
            for s in slots {
                let (k, v) = s.split_once('=').ok_or_else(|| format!("expected `key=value`, got `{s}`"))?;
                if !is_identifier(k) || v.is_empty() {
                    return Err(format!("bad slot `{s}`"));
                }
                map.insert(k.to_owned(), v.to_owned());
            }
            Ok(ScenarioEvent::OperatorSubmit {
                task: (*task).to_owned(),
                priority: priority.parse().map_err(|_| format!("bad priority `{priority}`"))?,
                slots: map,
            })
        }
        ["operator", "cancel"] => Ok(ScenarioEvent::OperatorCancel),
        ["reply", _, ..] => Ok(ScenarioEvent::Reply(rest(1))),
        ["end"] => Ok(ScenarioEvent::End),
        [] => Err("missing event".into()),
        [other, ..] => Err(format!("unknown or malformed `{other}` event")),
    }
}

impl FromStr for ScenarioScript {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, ScenarioError> {
        let mut events = Vec::new();
        let mut last = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError { line: i + 1, message };
            let words: Vec<&str> = line.split_whitespace().collect();
            let tick: Tick = words[0].parse().map_err(|_| err(format!("bad tick `{}`", words[0])))?;
            if tick < last {
                return Err(err("ticks must not decrease".into()));
            }
            last = tick;
            events.push((tick, parse_event(&words[1..]).map_err(err)?));
        }
        Ok(Self { events })
    }
}
