use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::CallRecord;
use crate::exactmath::Scalar;
use crate::metrics::{CounterPair, OpCounter};
use crate::protocol::VerifyOutcome;

use super::Phase;

/// A party in the simulated network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActorId {
    Gm,
    Member(Scalar),
    /// Broadcast to every participant.
    All,
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Gm => write!(f, "gm"),
            ActorId::Member(key) => write!(f, "member:{key}"),
            ActorId::All => write!(f, "all"),
        }
    }
}

impl Serialize for ActorId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActorId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        match text.as_str() {
            "gm" => Ok(ActorId::Gm),
            "all" => Ok(ActorId::All),
            other => match other.strip_prefix("member:") {
                Some(key) => Ok(ActorId::Member(key.parse().map_err(serde::de::Error::custom)?)),
                None => Err(serde::de::Error::custom(format!("unknown actor id {other:?}"))),
            },
        }
    }
}

/// One message in the simulated exchange. The transcript stores the SHA-256
/// digest of the canonical payload; the raw payload bytes are kept in memory
/// for inspection but never serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: usize,
    pub phase: Phase,
    /// 1 = secure registration line, 2 = manager <-> members, 3 = member <-> member.
    pub channel: u8,
    pub sender: ActorId,
    pub receiver: ActorId,
    pub label: String,
    pub digest: String,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

/// Ordered event log with automatic sequencing and payload digesting.
#[derive(Debug, Default)]
pub(super) struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn record(
        &mut self,
        phase: Phase,
        channel: u8,
        sender: ActorId,
        receiver: ActorId,
        label: &str,
        payload: Vec<u8>,
    ) {
        self.events.push(Event {
            seq: self.events.len(),
            phase,
            channel,
            sender,
            receiver,
            label: label.to_string(),
            digest: hex::encode(Sha256::digest(&payload)),
            payload,
        });
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeygenSummary {
    pub gm_issued: usize,
    pub delegated: usize,
    pub outsiders: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupKeySummary {
    /// Every credentialed member derived the same key as the manager.
    pub consistent: bool,
    pub members_agreeing: usize,
    /// Participants whose self-derived key differs (forged bases).
    pub divergent: Vec<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub malicious: Vec<Scalar>,
    pub oracle_calls: usize,
    pub call_log: Vec<CallRecord>,
}

/// Per-phase results; absent phases stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcomes {
    pub keygen: Option<KeygenSummary>,
    pub group_key: Option<GroupKeySummary>,
    pub auth: Option<VerifyOutcome>,
    pub detect: Option<DetectSummary>,
}

/// Deterministic cost profile of the scenario under the published counting
/// convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub roster_size: usize,
    pub d: usize,
    pub n: usize,
    pub user_ops: OpCounter,
    pub gm_ops: OpCounter,
}

impl MetricsSnapshot {
    pub(super) fn new(roster_size: usize, d: usize, n: usize) -> Self {
        let CounterPair { user, gm } = crate::metrics::convention_counters(roster_size, d);
        MetricsSnapshot { roster_size, d, n, user_ops: user, gm_ops: gm }
    }
}

/// Full record of one scenario run: the ordered events, per-phase outcomes,
/// and the metrics snapshot. Two runs of the same scenario produce
/// byte-identical serializations.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub events: Vec<Event>,
    pub outcomes: Outcomes,
    pub metrics: MetricsSnapshot,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: SummaryBody<'a>,
}

#[derive(Serialize)]
struct SummaryBody<'a> {
    events: usize,
    outcomes: &'a Outcomes,
    metrics: &'a MetricsSnapshot,
}

impl Transcript {
    /// The trailing summary as a standalone JSON value.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "events": self.events.len(),
            "outcomes": self.outcomes,
            "metrics": self.metrics,
        })
    }

    /// One JSON object per line: every event in order, then a trailing
    /// summary object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serialization"));
            out.push('\n');
        }
        let summary = SummaryLine {
            summary: SummaryBody {
                events: self.events.len(),
                outcomes: &self.outcomes,
                metrics: &self.metrics,
            },
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serialization"));
        out.push('\n');
        out
    }
}
