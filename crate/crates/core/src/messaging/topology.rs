//! The permitted communication routes between agent roles.
//!
//! The allow-list is closed: a route is legal only if its
//! `(source role, destination role, kind)` triple appears in
//! [`ALLOWED_ROUTES`]. Amend the constant to open a new route.

use super::{MessageKind, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TopologyRule {
    pub src_role: Role,
    pub dst_role: Role,
    pub kind: MessageKind,
}

const fn rule(src_role: Role, dst_role: Role, kind: MessageKind) -> TopologyRule {
    TopologyRule { src_role, dst_role, kind }
}

use MessageKind as K;
use Role as R;

pub const ALLOWED_ROUTES: &[TopologyRule] = &[
    // call request: requesters hand task requests to the harmoniser
    rule(R::TaskRequester, R::TaskHarmoniser, K::TaskRequestMsg),
    rule(R::CoreAgent, R::TaskRequester, K::IntentMsg),
    // package download
    rule(R::TaskHarmoniser, R::StoreAgent, K::DownloadRequest),
    rule(R::StoreAgent, R::TaskHarmoniser, K::DownloadResponse),
    rule(R::TaskHarmoniser, R::CoreAgent, K::FailureNotice),
    // lifecycle and conversation relay
    rule(R::TaskHarmoniser, R::DynamicAgent, K::LifecycleCommand),
    rule(R::TaskHarmoniser, R::DynamicAgent, K::IntentMsg),
    rule(R::DynamicAgent, R::TaskHarmoniser, K::Ack),
    // robot services used by dynamic agents
    rule(R::DynamicAgent, R::CoreAgent, K::SayCommand),
    rule(R::DynamicAgent, R::CoreAgent, K::AskCommand),
    rule(R::DynamicAgent, R::CoreAgent, K::NavGoal),
    rule(R::DynamicAgent, R::CoreAgent, K::BodyCommand),
    rule(R::CoreAgent, R::DynamicAgent, K::Ack),
    // speech services
    rule(R::CoreAgent, R::PlatformAgent, K::TtsRequest),
    rule(R::CoreAgent, R::PlatformAgent, K::SttRequest),
    rule(R::PlatformAgent, R::CoreAgent, K::TtsResponse),
    rule(R::PlatformAgent, R::CoreAgent, K::SttResponse),
];

pub fn is_allowed(src_role: Role, dst_role: Role, kind: MessageKind) -> bool {
    ALLOWED_ROUTES.contains(&rule(src_role, dst_role, kind))
}
