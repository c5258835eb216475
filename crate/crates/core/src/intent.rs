//! Intents and the grammar that turns utterances into them.
//!
//! A grammar is an ordered list of token patterns. A pattern token is either
//! a literal word or a `<slot>` placeholder that binds exactly one word. The
//! first rule whose pattern matches the normalized utterance wins.
//!
//! Grammar file format, one rule per line:
//!
//! ```text
//! # comments run to the end of the line
//! go to <room> => goto
//! call robot   => call_robot
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::messaging::{is_identifier, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Voice,
    Button,
    Operator,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntentError {
    #[error("intent name must not be empty")]
    EmptyName,
    #[error("confidence {0} is outside [0, 1]")]
    Confidence(f64),
}

/// Interpretation of one human input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub name: String,
    pub slots: BTreeMap<String, String>,
    pub confidence: f64,
    pub source: Source,
    pub timestamp: Tick,
}

impl Intent {
    /// New intent with full confidence and no slots.
    pub fn new(name: impl Into<String>, source: Source, timestamp: Tick) -> Result<Self, IntentError> {
        let name = name.into();
        if name.is_empty() {
            return Err(IntentError::EmptyName);
        }
        Ok(Self { name, slots: BTreeMap::new(), confidence: 1.0, source, timestamp })
    }

    pub fn with_slots(mut self, slots: BTreeMap<String, String>) -> Self {
        self.slots = slots;
        self
    }

    /// Only voice intents may carry less than full confidence.
    pub fn with_confidence(mut self, confidence: f64) -> Result<Self, IntentError> {
        if !(0.0..=1.0).contains(&confidence) || (self.source != Source::Voice && confidence != 1.0) {
            return Err(IntentError::Confidence(confidence));
        }
        self.confidence = confidence;
        Ok(self)
    }

    pub fn at(mut self, timestamp: Tick) -> Self {
        self.timestamp = timestamp;
        self
    }
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|word| {
            word.chars().filter(|c| c.is_alphanumeric() || *c == '_').flat_map(char::to_lowercase).collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternToken {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarRule {
    pattern: Vec<PatternToken>,
    intent: String,
}

impl GrammarRule {
    pub fn new(pattern: Vec<PatternToken>, intent: impl Into<String>) -> Result<Self, GrammarError> {
        let intent = intent.into();
        if pattern.is_empty() {
            return Err(GrammarError::new(0, "pattern is empty"));
        }
        if !is_identifier(&intent) {
            return Err(GrammarError::new(0, format!("intent name `{intent}` must match [a-z_][a-z0-9_]*")));
        }
        let mut seen = BTreeSet::new();
        for token in &pattern {
            match token {
                PatternToken::Slot(name) => {
                    if !is_identifier(name) {
                        return Err(GrammarError::new(0, format!("bad slot name `{name}`")));
                    }
                    if !seen.insert(name.as_str()) {
                        return Err(GrammarError::new(0, format!("slot `{name}` appears twice")));
                    }
                }
                PatternToken::Literal(word) => {
                    if normalize(word) != [word.clone()] {
                        return Err(GrammarError::new(0, format!("literal `{word}` is not a normalized word")));
                    }
                }
            }
        }
        Ok(Self { pattern, intent })
    }

    pub fn pattern(&self) -> &[PatternToken] {
        &self.pattern
    }

    pub fn intent(&self) -> &str {
        &self.intent
    }

    fn bind(&self, tokens: &[String]) -> Option<BTreeMap<String, String>> {
        if tokens.len() != self.pattern.len() {
            return None;
        }
        let mut slots = BTreeMap::new();
        for (token, word) in self.pattern.iter().zip(tokens) {
            match token {
                PatternToken::Literal(lit) if lit == word => {}
                PatternToken::Literal(_) => return None,
                PatternToken::Slot(name) => {
                    slots.insert(name.clone(), word.clone());
                }
            }
        }
        Some(slots)
    }
}

impl fmt::Display for GrammarRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, token) in self.pattern.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match token {
                PatternToken::Literal(w) => f.write_str(w)?,
                PatternToken::Slot(s) => write!(f, "<{s}>")?,
            }
        }
        write!(f, " => {}", self.intent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct GrammarError {
    pub line: usize,
    pub message: String,
}

impl GrammarError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grammar {
    rules: Vec<GrammarRule>,
}

impl Grammar {
    pub fn new(rules: Vec<GrammarRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[GrammarRule] {
        &self.rules
    }

    /// The grammar shipped with the crate.
    pub fn shipped() -> Self {
        include_str!("../data/grammar.txt").parse().expect("shipped grammar is valid")
    }
}

impl FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (pattern, intent) =
                line.split_once("=>").ok_or_else(|| GrammarError::new(line_no, "expected `pattern => intent`"))?;
            let pattern = pattern
                .split_whitespace()
                .map(|tok| match tok.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
                    Some(slot) => PatternToken::Slot(slot.to_owned()),
                    None => PatternToken::Literal(tok.to_lowercase()),
                })
                .collect();
            let rule = GrammarRule::new(pattern, intent.trim()).map_err(|e| GrammarError::new(line_no, e.message))?;
            rules.push(rule);
        }
        Ok(Grammar::new(rules))
    }
}

/// Result of interpreting an utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "intent", rename_all = "snake_case")]
pub enum Recognition {
    Intent(Intent),
    NoMatch,
}

impl Recognition {
    pub fn intent(&self) -> Option<&Intent> {
        match self {
            Recognition::Intent(i) => Some(i),
            Recognition::NoMatch => None,
        }
    }
}

/// Matches `text` against the grammar. The returned intent carries voice
/// source, full confidence and timestamp 0; callers stamp the tick.
pub fn parse_utterance(text: &str, grammar: &Grammar) -> Recognition {
    let tokens = normalize(text);
    for rule in &grammar.rules {
        if let Some(slots) = rule.bind(&tokens) {
            let intent = Intent::new(rule.intent.clone(), Source::Voice, 0)
                .expect("rule intents are non-empty")
                .with_slots(slots);
            return Recognition::Intent(intent);
        }
    }
    Recognition::NoMatch
}
