//! Session registry and the operations on a single session.
//!
//! Each session has a mutation guard and a published snapshot. Mutations
//! take the guard, build the next state (re-running detection when the
//! config changes), persist it, then swap the snapshot. Readers clone the
//! snapshot `Arc` and never wait on a running detection.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use dysfluency_core::audio_io::decode_wav;
use dysfluency_core::{pipeline, AudioBuffer, RuleConfig};
use parking_lot::{Mutex, RwLock};
use serde_json::{Map, Value};

use crate::error::{Result, ServiceError};
use crate::model::{
    parse_event_id, replay_audit, AuditEntry, AuditView, FeedbackAck, FeedbackEntry,
    FeedbackRequest, FeedbackView, ReportView, SessionView, StoredReport, WaveformView,
};
use crate::store::{self, SessionMeta};
use crate::waveform;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
struct SessionState {
    meta: SessionMeta,
    audio: Arc<AudioBuffer>,
    config: RuleConfig,
    report: StoredReport,
    audit: Vec<AuditEntry>,
    feedback: Vec<FeedbackEntry>,
}

struct SessionHandle {
    dir: PathBuf,
    guard: Mutex<()>,
    snapshot: RwLock<Arc<SessionState>>,
}

impl SessionHandle {
    fn snapshot(&self) -> Arc<SessionState> {
        self.snapshot.read().clone()
    }

    fn publish(&self, state: SessionState) {
        *self.snapshot.write() = Arc::new(state);
    }
}

pub struct SessionManager {
    root: PathBuf,
    max_upload_bytes: usize,
    /// Config for uploads that do not bring their own.
    default_config: RuleConfig,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn run_detection(
    audio: &AudioBuffer,
    cfg: &RuleConfig,
    id: &str,
) -> Result<dysfluency_core::EventReport> {
    Ok(pipeline::detect(audio, None, cfg, id)?)
}

impl SessionManager {
    /// Open (or create) the data directory and load every session in it.
    pub fn open(root: impl Into<PathBuf>, max_upload_bytes: usize) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| ServiceError::storage(root.display(), e))?;
        let mut sessions = HashMap::new();
        for dir in store::session_dirs(&root)? {
            let state = Self::load_session(&dir)?;
            sessions.insert(
                state.meta.id.clone(),
                Arc::new(SessionHandle {
                    dir,
                    guard: Mutex::new(()),
                    snapshot: RwLock::new(Arc::new(state)),
                }),
            );
        }
        log::info!(
            "{} session(s) loaded from {}",
            sessions.len(),
            root.display()
        );
        Ok(Self {
            root,
            max_upload_bytes,
            default_config: RuleConfig::default(),
            sessions: RwLock::new(sessions),
        })
    }

    /// The audit log is authoritative. If the stored config or report
    /// disagree with it (a crash between writes), the config is rebuilt
    /// from the log and detection is re-run.
    fn load_session(dir: &Path) -> Result<SessionState> {
        let loaded = store::load(dir)?;
        let audio = decode_wav(&loaded.wav)?;
        let config = replay_audit(&loaded.meta.initial_config, &loaded.audit)?;
        let mut report = loaded.report;
        if config != loaded.config || report.report.config_snapshot != config {
            log::warn!(
                "{}: config out of step with audit log, re-detecting",
                dir.display()
            );
            report = StoredReport {
                version: report.version + 1,
                report: run_detection(&audio, &config, &loaded.meta.id)?,
            };
            store::write_json(&dir.join(store::CONFIG), &config)?;
            store::write_json(&dir.join(store::REPORT), &report)?;
        }
        Ok(SessionState {
            meta: loaded.meta,
            audio: Arc::new(audio),
            config,
            report,
            audit: loaded.audit,
            feedback: loaded.feedback,
        })
    }

    pub fn with_default_config(mut self, cfg: RuleConfig) -> Result<Self> {
        cfg.validate()?;
        self.default_config = cfg;
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn max_upload_bytes(&self) -> usize {
        self.max_upload_bytes
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    /// Decode, run the initial detection and persist. Nothing touches disk
    /// until the upload has decoded and detection has succeeded.
    pub fn create(&self, wav: &[u8], initial: Option<RuleConfig>) -> Result<SessionView> {
        if wav.len() > self.max_upload_bytes {
            return Err(ServiceError::PayloadTooLarge {
                size: wav.len(),
                limit: self.max_upload_bytes,
            });
        }
        let config = initial.unwrap_or_else(|| self.default_config.clone());
        config.validate()?;
        let audio = decode_wav(wav)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let report = StoredReport {
            version: 1,
            report: run_detection(&audio, &config, &id)?,
        };
        let meta = SessionMeta {
            id: id.clone(),
            created_at: now(),
            initial_config: config.clone(),
        };
        let dir = store::create(&self.root, &meta, wav, &config, &report)?;
        let state = SessionState {
            meta,
            audio: Arc::new(audio),
            config,
            report,
            audit: Vec::new(),
            feedback: Vec::new(),
        };
        let view = session_view(&state);
        self.sessions.write().insert(
            id.clone(),
            Arc::new(SessionHandle {
                dir,
                guard: Mutex::new(()),
                snapshot: RwLock::new(Arc::new(state)),
            }),
        );
        log::info!("session {id} created");
        Ok(view)
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        Ok(session_view(&self.handle(id)?.snapshot()))
    }

    pub fn config(&self, id: &str) -> Result<RuleConfig> {
        Ok(self.handle(id)?.snapshot().config.clone())
    }

    pub fn events(&self, id: &str) -> Result<ReportView> {
        let s = self.handle(id)?.snapshot();
        Ok(ReportView::new(id, &s.report))
    }

    pub fn audit(&self, id: &str) -> Result<AuditView> {
        let s = self.handle(id)?.snapshot();
        Ok(AuditView {
            session_id: id.to_string(),
            version: s.report.version,
            initial_config: s.meta.initial_config.clone(),
            entries: s.audit.clone(),
        })
    }

    pub fn waveform(&self, id: &str, points: usize) -> Result<WaveformView> {
        if points < 2 {
            return Err(ServiceError::BadRequest(format!(
                "points must be >= 2, got {points}"
            )));
        }
        let s = self.handle(id)?.snapshot();
        Ok(WaveformView {
            session_id: id.to_string(),
            version: s.report.version,
            sample_rate: s.audio.sample_rate,
            duration_s: s.audio.duration_s(),
            peaks: waveform::peaks(&s.audio.samples, points)
                .into_iter()
                .map(|p| [p.min, p.max])
                .collect(),
        })
    }

    /// Re-run detection under the current config. The report version
    /// advances, so earlier feedback becomes stale.
    pub fn detect(&self, id: &str) -> Result<ReportView> {
        let h = self.handle(id)?;
        let _g = h.guard.lock();
        let mut next = (*h.snapshot()).clone();
        next.report = StoredReport {
            version: next.report.version + 1,
            report: run_detection(&next.audio, &next.config, id)?,
        };
        store::write_json(&h.dir.join(store::REPORT), &next.report)?;
        let view = ReportView::new(id, &next.report);
        h.publish(next);
        Ok(view)
    }

    /// Apply a partial config. All fields apply or none do; each changed
    /// field gets one audit entry and detection re-runs before returning.
    /// A patch that changes nothing leaves the report and its version alone.
    pub fn patch_thresholds(
        &self,
        id: &str,
        patch: &Map<String, Value>,
        author: &str,
    ) -> Result<ReportView> {
        let h = self.handle(id)?;
        let _g = h.guard.lock();
        let current = h.snapshot();
        let (config, changes) = current.config.patched(patch)?;
        if changes.is_empty() {
            return Ok(ReportView::new(id, &current.report));
        }
        let report = StoredReport {
            version: current.report.version + 1,
            report: run_detection(&current.audio, &config, id)?,
        };
        let batch = current.audit.last().map_or(0, |e| e.batch + 1);
        let timestamp = now();
        let seq0 = current.audit.len() as u64;
        let entries: Vec<AuditEntry> = changes
            .into_iter()
            .enumerate()
            .map(|(i, c)| AuditEntry {
                seq: seq0 + i as u64,
                batch,
                timestamp: timestamp.clone(),
                field: c.field,
                old: c.old,
                new: c.new,
                author: author.to_string(),
            })
            .collect();

        // log first: a crash after this line is repaired on load by replay
        store::append_jsonl(&h.dir.join(store::AUDIT), &entries)?;
        store::write_json(&h.dir.join(store::CONFIG), &config)?;
        store::write_json(&h.dir.join(store::REPORT), &report)?;

        let mut next = (*current).clone();
        next.config = config;
        next.report = report;
        next.audit.extend(entries);
        let view = ReportView::new(id, &next.report);
        h.publish(next);
        Ok(view)
    }

    /// Record a verdict on an event of the latest report.
    pub fn record_feedback(
        &self,
        id: &str,
        req: &FeedbackRequest,
        author: &str,
    ) -> Result<FeedbackAck> {
        let h = self.handle(id)?;
        let _g = h.guard.lock();
        let current = h.snapshot();
        let version = current.report.version;
        match parse_event_id(&req.event_id) {
            Some((v, _)) if v != version => {
                return Err(ServiceError::Conflict(format!(
                    "event `{}` belongs to report version {v}; the current version is {version}",
                    req.event_id
                )))
            }
            _ if current.report.find(&req.event_id).is_none() => {
                return Err(ServiceError::Conflict(format!(
                    "no event `{}` in report version {version}",
                    req.event_id
                )))
            }
            _ => {}
        }
        let entry = FeedbackEntry {
            event_id: req.event_id.clone(),
            report_version: version,
            verdict: req.verdict.clone(),
            author: author.to_string(),
            timestamp: now(),
        };
        store::append_jsonl(&h.dir.join(store::FEEDBACK), std::slice::from_ref(&entry))?;
        let mut next = (*current).clone();
        next.feedback.push(entry.clone());
        let ack = FeedbackAck {
            session_id: id.to_string(),
            version,
            entry,
            feedback_entries: next.feedback.len(),
        };
        h.publish(next);
        Ok(ack)
    }
}

fn session_view(s: &SessionState) -> SessionView {
    let version = s.report.version;
    SessionView {
        id: s.meta.id.clone(),
        created_at: s.meta.created_at.clone(),
        version,
        sample_rate: s.audio.sample_rate,
        duration_s: s.audio.duration_s(),
        config: s.config.clone(),
        report: ReportView::new(&s.meta.id, &s.report),
        audit_entries: s.audit.len(),
        feedback: s
            .feedback
            .iter()
            .map(|f| FeedbackView {
                entry: f.clone(),
                stale: f.report_version != version,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Verdict;
    use dysfluency_core::audio_io::encode_wav;
    use serde_json::json;

    fn tone_wav(seconds: f64) -> Vec<u8> {
        let n = (seconds * 16_000.0) as usize;
        let x = (0..n)
            .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 150.0 * i as f64 / 16_000.0).sin())
            .collect();
        encode_wav(&AudioBuffer::new(x, 16_000))
    }

    fn manager() -> (tempfile::TempDir, SessionManager) {
        let dir = tempfile::tempdir().unwrap();
        let m = SessionManager::open(dir.path().join("data"), DEFAULT_MAX_UPLOAD_BYTES).unwrap();
        (dir, m)
    }

    #[test]
    fn corrupt_upload_leaves_no_trace() {
        let (_d, m) = manager();
        assert!(matches!(
            m.create(b"RIFF\x00\x00garbage", None),
            Err(ServiceError::InvalidAudio(_))
        ));
        assert!(m.ids().is_empty());
        assert_eq!(std::fs::read_dir(m.root()).unwrap().count(), 0);
    }

    #[test]
    fn upload_cap_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let m = SessionManager::open(dir.path(), 1000).unwrap();
        assert!(matches!(
            m.create(&tone_wav(0.5), None),
            Err(ServiceError::PayloadTooLarge { .. })
        ));
    }

    #[test]
    fn invalid_patch_changes_nothing() {
        let (_d, m) = manager();
        let id = m.create(&tone_wav(0.5), None).unwrap().id;
        let before = m.get(&id).unwrap();
        let patch = json!({"alpha": 1.0, "theta_sim": 1.5});
        let err = m
            .patch_thresholds(&id, patch.as_object().unwrap(), "a")
            .unwrap_err();
        assert!(matches!(err, ServiceError::InvalidConfig(_)), "{err}");
        assert_eq!(m.get(&id).unwrap(), before);
        assert!(m.audit(&id).unwrap().entries.is_empty());
    }

    #[test]
    fn noop_patch_keeps_version() {
        let (_d, m) = manager();
        let id = m.create(&tone_wav(0.5), None).unwrap().id;
        let patch = json!({"alpha": 1.2});
        let r = m
            .patch_thresholds(&id, patch.as_object().unwrap(), "a")
            .unwrap();
        assert_eq!(r.version, 1);
        assert!(m.audit(&id).unwrap().entries.is_empty());
    }

    #[test]
    fn two_field_patch_is_one_batch() {
        let (_d, m) = manager();
        let id = m.create(&tone_wav(0.5), None).unwrap().id;
        let patch = json!({"alpha": 1.0, "theta_sim": 0.95});
        let r = m
            .patch_thresholds(&id, patch.as_object().unwrap(), "slp")
            .unwrap();
        assert_eq!(r.version, 2);
        assert_eq!(r.config_snapshot, m.config(&id).unwrap());
        let a = m.audit(&id).unwrap().entries;
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].batch, a[1].batch);
        assert_eq!(a[0].timestamp, a[1].timestamp);
        assert_eq!((a[0].seq, a[1].seq), (0, 1));
    }

    #[test]
    fn feedback_on_unknown_event_conflicts() {
        let (_d, m) = manager();
        let id = m.create(&tone_wav(0.5), None).unwrap().id;
        let req = FeedbackRequest {
            event_id: "v1-e99".into(),
            verdict: Verdict::Accepted,
        };
        assert!(matches!(
            m.record_feedback(&id, &req, "a"),
            Err(ServiceError::Conflict(_))
        ));
    }

    #[test]
    fn server_default_config_applies_to_plain_uploads() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RuleConfig {
            alpha: 1.0,
            ..RuleConfig::default()
        };
        let m = SessionManager::open(dir.path(), DEFAULT_MAX_UPLOAD_BYTES)
            .unwrap()
            .with_default_config(cfg)
            .unwrap();
        assert_eq!(m.create(&tone_wav(0.5), None).unwrap().config.alpha, 1.0);
        let own = RuleConfig::default();
        assert_eq!(
            m.create(&tone_wav(0.5), Some(own)).unwrap().config.alpha,
            1.2
        );
    }

    #[test]
    fn unknown_session() {
        let (_d, m) = manager();
        assert!(matches!(m.get("nope"), Err(ServiceError::NotFound(_))));
        assert!(matches!(m.detect("nope"), Err(ServiceError::NotFound(_))));
    }

    #[test]
    fn config_repaired_from_audit_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let m = SessionManager::open(dir.path(), DEFAULT_MAX_UPLOAD_BYTES).unwrap();
            let id = m.create(&tone_wav(0.5), None).unwrap().id;
            let patch = json!({"alpha": 1.0});
            m.patch_thresholds(&id, patch.as_object().unwrap(), "a")
                .unwrap();
            id
        };
        // simulate a crash after the audit append but before the config write
        let sdir = dir.path().join(&id);
        store::write_json(&sdir.join(store::CONFIG), &RuleConfig::default()).unwrap();
        let m = SessionManager::open(dir.path(), DEFAULT_MAX_UPLOAD_BYTES).unwrap();
        let s = m.get(&id).unwrap();
        assert_eq!(s.config.alpha, 1.0);
        assert_eq!(s.report.config_snapshot.alpha, 1.0);
    }
}
