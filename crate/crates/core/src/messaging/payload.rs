use serde::{Deserialize, Serialize};

use super::{MessageKind, Tick};
use crate::core_agent::Pose;
use crate::harmoniser::Reason;
use crate::intent::Intent;
use crate::platform::{SttResult, WaveBlob};
use crate::requesters::TaskRequest;
use crate::store::TaskPackage;

/// Kind-specific message body. The serde tag doubles as the envelope `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Payload {
    TaskRequestMsg(RequestMsg),
    IntentMsg(IntentMsg),
    DownloadRequest(DownloadRequest),
    DownloadResponse(DownloadResponse),
    FailureNotice(FailureNotice),
    TtsRequest(TtsRequest),
    TtsResponse(TtsResponse),
    SttRequest(SttRequest),
    SttResponse(SttResponse),
    SayCommand(SayCommand),
    AskCommand(AskCommand),
    NavGoal(NavCommand),
    BodyCommand(BodyCommand),
    LifecycleCommand(Lifecycle),
    Ack(Ack),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::TaskRequestMsg(_) => MessageKind::TaskRequestMsg,
            Payload::IntentMsg(_) => MessageKind::IntentMsg,
            Payload::DownloadRequest(_) => MessageKind::DownloadRequest,
            Payload::DownloadResponse(_) => MessageKind::DownloadResponse,
            Payload::FailureNotice(_) => MessageKind::FailureNotice,
            Payload::TtsRequest(_) => MessageKind::TtsRequest,
            Payload::TtsResponse(_) => MessageKind::TtsResponse,
            Payload::SttRequest(_) => MessageKind::SttRequest,
            Payload::SttResponse(_) => MessageKind::SttResponse,
            Payload::SayCommand(_) => MessageKind::SayCommand,
            Payload::AskCommand(_) => MessageKind::AskCommand,
            Payload::NavGoal(_) => MessageKind::NavGoal,
            Payload::BodyCommand(_) => MessageKind::BodyCommand,
            Payload::LifecycleCommand(_) => MessageKind::LifecycleCommand,
            Payload::Ack(_) => MessageKind::Ack,
        }
    }
}

/// Requester to harmoniser traffic. Cancellation rides on the same route as
/// submissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RequestMsg {
    Submit(TaskRequest),
    CancelCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentMsg {
    pub intent: Intent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownloadRequest {
    pub task_name: String,
    pub request_id: u64,
}

/// `package` is absent when the store has no package of that name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownloadResponse {
    pub task_name: String,
    pub request_id: u64,
    pub package: Option<TaskPackage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureNotice {
    pub request_id: u64,
    pub reason: Reason,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtsRequest {
    pub text: String,
    pub voice: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtsResponse {
    pub voice: String,
    pub blob: WaveBlob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SttRequest {
    pub utterance: String,
    pub channel_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SttResponse {
    pub utterance: String,
    pub result: SttResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SayCommand {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AskCommand {
    Open { text: String, expected: Vec<String>, timeout_ticks: Tick },
    Cancel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NavCommand {
    Goal { pose: Pose },
    Cancel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyCommand {
    pub torso_height: f64,
    pub pan: f64,
    pub tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Lifecycle {
    Spawn { package: String, version: u32, priority: u32, request_id: u64 },
    Terminate { deadline_ticks: Tick },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ack", rename_all = "snake_case")]
pub enum Ack {
    /// An action or a whole task finished with the named outcome.
    Outcome {
        outcome: String,
    },
    ConversationOpen,
    ConversationClosed,
}

#[cfg(test)]
pub(crate) fn sample_payload(kind: MessageKind) -> Payload {
    use crate::intent::Source;

    let intent = Intent::new("confirm", Source::Voice, 0).unwrap();
    match kind {
        MessageKind::TaskRequestMsg => Payload::TaskRequestMsg(RequestMsg::CancelCurrent),
        MessageKind::IntentMsg => Payload::IntentMsg(IntentMsg { intent }),
        MessageKind::DownloadRequest => {
            Payload::DownloadRequest(DownloadRequest { task_name: "x".into(), request_id: 1 })
        }
        MessageKind::DownloadResponse => {
            Payload::DownloadResponse(DownloadResponse { task_name: "x".into(), request_id: 1, package: None })
        }
        MessageKind::FailureNotice => {
            Payload::FailureNotice(FailureNotice { request_id: 1, reason: Reason::UnknownTask, text: "no".into() })
        }
        MessageKind::TtsRequest => Payload::TtsRequest(TtsRequest { text: "hi".into(), voice: "default".into() }),
        MessageKind::TtsResponse => Payload::TtsResponse(TtsResponse {
            voice: "default".into(),
            blob: crate::platform::text_to_speech("hi", "default").unwrap(),
        }),
        MessageKind::SttRequest => Payload::SttRequest(SttRequest { utterance: "yes".into(), channel_p: 1.0 }),
        MessageKind::SttResponse => {
            Payload::SttResponse(SttResponse { utterance: "yes".into(), result: SttResult::failed() })
        }
        MessageKind::SayCommand => Payload::SayCommand(SayCommand { text: "hi".into() }),
        MessageKind::AskCommand => Payload::AskCommand(AskCommand::Cancel),
        MessageKind::NavGoal => Payload::NavGoal(NavCommand::Cancel),
        MessageKind::BodyCommand => Payload::BodyCommand(BodyCommand { torso_height: 0.1, pan: 0.0, tilt: 0.0 }),
        MessageKind::LifecycleCommand => Payload::LifecycleCommand(Lifecycle::Terminate { deadline_ticks: 3 }),
        MessageKind::Ack => Payload::Ack(Ack::ConversationOpen),
    }
}
