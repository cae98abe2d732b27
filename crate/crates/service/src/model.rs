//! Records stored per session and the JSON views returned over HTTP.

use std::collections::BTreeMap;

use dysfluency_core::{DysfluencyEvent, EventReport, Kind, RuleConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, ServiceError};

/// One changed config field. Entries from a single patch share `batch`
/// and `timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub batch: u64,
    pub timestamp: String,
    pub field: String,
    pub old: Value,
    pub new: Value,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    /// The event is real but of another kind.
    Retyped {
        kind: Kind,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub event_id: String,
    /// Report version the event belonged to.
    pub report_version: u64,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub author: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackView {
    #[serde(flatten)]
    pub entry: FeedbackEntry,
    /// The report has been regenerated since this feedback was given.
    pub stale: bool,
}

/// A report plus the version token that event ids are minted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub version: u64,
    pub report: EventReport,
}

impl StoredReport {
    pub fn event_id(&self, index: usize) -> String {
        format!("v{}-e{}", self.version, index)
    }

    /// Index of `id` in this report, if it names one of its events.
    pub fn find(&self, id: &str) -> Option<usize> {
        let (v, i) = parse_event_id(id)?;
        (v == self.version && i < self.report.events.len()).then_some(i)
    }
}

/// Split `v{version}-e{index}`.
pub fn parse_event_id(id: &str) -> Option<(u64, usize)> {
    let (v, e) = id.strip_prefix('v')?.split_once("-e")?;
    Some((v.parse().ok()?, e.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventView {
    pub id: String,
    #[serde(flatten)]
    pub event: DysfluencyEvent,
}

/// Report as served to clients: every event carries its id and the
/// version token is echoed at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub session_id: String,
    pub version: u64,
    pub recording_id: String,
    pub speaking_rate: f64,
    pub rate_estimated: bool,
    pub duration_s: f64,
    pub counts: BTreeMap<Kind, usize>,
    pub config_snapshot: RuleConfig,
    pub events: Vec<EventView>,
}

impl ReportView {
    pub fn new(session_id: &str, stored: &StoredReport) -> Self {
        let r = &stored.report;
        Self {
            session_id: session_id.to_string(),
            version: stored.version,
            recording_id: r.recording_id.clone(),
            speaking_rate: r.speaking_rate,
            rate_estimated: r.rate_estimated,
            duration_s: r.duration_s,
            counts: r.counts.clone(),
            config_snapshot: r.config_snapshot.clone(),
            events: r
                .events
                .iter()
                .enumerate()
                .map(|(i, e)| EventView {
                    id: stored.event_id(i),
                    event: e.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at: String,
    pub version: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub config: RuleConfig,
    pub report: ReportView,
    pub audit_entries: usize,
    pub feedback: Vec<FeedbackView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditView {
    pub session_id: String,
    pub version: u64,
    pub initial_config: RuleConfig,
    pub entries: Vec<AuditEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformView {
    pub session_id: String,
    pub version: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// `[min, max]` per bucket.
    pub peaks: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub event_id: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub session_id: String,
    pub version: u64,
    pub entry: FeedbackEntry,
    pub feedback_entries: usize,
}

/// Rebuild a config by applying every audit entry, in order, to the
/// config the session started with.
pub fn replay_audit(initial: &RuleConfig, entries: &[AuditEntry]) -> Result<RuleConfig> {
    let mut map = initial.to_json_map();
    for e in entries {
        match map.get(&e.field) {
            Some(old) if *old == e.old => {}
            Some(old) => {
                return Err(ServiceError::Storage(format!(
                    "audit entry {} expects {} = {}, found {}",
                    e.seq, e.field, e.old, old
                )))
            }
            None => {
                return Err(ServiceError::Storage(format!(
                    "audit entry {} names unknown field `{}`",
                    e.seq, e.field
                )))
            }
        }
        map.insert(e.field.clone(), e.new.clone());
    }
    serde_json::from_value(Value::Object(map))
        .map_err(|e| ServiceError::Storage(format!("replayed config: {e}")))
}

pub(crate) fn parse_patch(body: &[u8]) -> Result<Map<String, Value>> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ServiceError::BadRequest(
            "patch must be a JSON object".into(),
        )),
        Err(e) => Err(ServiceError::BadRequest(format!("malformed JSON: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn event_ids_round_trip() {
        assert_eq!(parse_event_id("v3-e12"), Some((3, 12)));
        assert_eq!(parse_event_id("3-12"), None);
        assert_eq!(parse_event_id("v3-x12"), None);
        assert_eq!(parse_event_id("v-e1"), None);
    }

    #[test]
    fn verdict_wire_format() {
        let r: FeedbackRequest = serde_json::from_value(
            json!({"event_id": "v1-e0", "verdict": "retyped", "kind": "block"}),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Retyped { kind: Kind::Block });
        let r: FeedbackRequest =
            serde_json::from_value(json!({"event_id": "v1-e0", "verdict": "accepted"})).unwrap();
        assert_eq!(r.verdict, Verdict::Accepted);
        assert!(serde_json::from_value::<FeedbackRequest>(
            json!({"event_id": "v1-e0", "verdict": "maybe"})
        )
        .is_err());
    }

    #[test]
    fn replay_rejects_inconsistent_log() {
        let init = RuleConfig::default();
        let good = AuditEntry {
            seq: 0,
            batch: 0,
            timestamp: String::new(),
            field: "alpha".into(),
            old: json!(1.2),
            new: json!(1.0),
            author: "a".into(),
        };
        assert_eq!(
            replay_audit(&init, std::slice::from_ref(&good))
                .unwrap()
                .alpha,
            1.0
        );
        let bad = AuditEntry {
            old: json!(1.5),
            ..good
        };
        assert!(replay_audit(&init, &[bad]).is_err());
    }
}
