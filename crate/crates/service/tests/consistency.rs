mod common;

use std::collections::HashMap;
use std::sync::Arc;

use dysfluency_core::RuleConfig;
use dysfluency_service::{replay_audit, SessionManager, DEFAULT_MAX_UPLOAD_BYTES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use common::{random_patch, short_wav};

const SEQUENCES: usize = 500;
const THREADS: usize = 16;
const PATCHES_PER_THREAD: usize = 50;

#[test]
fn audit_replay_reproduces_config() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path(), DEFAULT_MAX_UPLOAD_BYTES).unwrap();
    let wav = short_wav();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e55);
    let mut rejected = 0;
    for seq in 0..SEQUENCES {
        // vary the starting point too, as a calibrated session would
        let initial = RuleConfig {
            alpha: 1.0 + (seq % 5) as f64 * 0.1,
            ..RuleConfig::default()
        };
        let id = m.create(&wav, Some(initial.clone())).unwrap().id;
        let mut expected = initial.clone();
        for _ in 0..rng.gen_range(1..=6) {
            let patch = random_patch(&mut rng);
            match m.patch_thresholds(&id, &patch, "prop") {
                Ok(r) => {
                    expected = expected.patched(&patch).unwrap().0;
                    assert_eq!(r.config_snapshot, expected);
                }
                Err(_) => {
                    rejected += 1;
                    assert!(expected.patched(&patch).is_err(), "{patch:?}");
                }
            }
        }
        let audit = m.audit(&id).unwrap();
        assert_eq!(audit.initial_config, initial);
        let replayed = replay_audit(&initial, &audit.entries).unwrap();
        let current = m.config(&id).unwrap();
        assert_eq!(replayed, current, "sequence {seq}");
        assert_eq!(current, expected);
        assert_eq!(m.events(&id).unwrap().config_snapshot, current);
    }
    assert!(
        rejected > 50,
        "generator produced too few invalid patches: {rejected}"
    );

    // the logs on disk replay to the same configs
    let reopened = SessionManager::open(dir.path(), DEFAULT_MAX_UPLOAD_BYTES).unwrap();
    assert_eq!(reopened.ids().len(), SEQUENCES);
    for id in reopened.ids() {
        let a = reopened.audit(&id).unwrap();
        assert_eq!(
            replay_audit(&a.initial_config, &a.entries).unwrap(),
            m.config(&id).unwrap()
        );
    }
}

/// Every patch sets `fixed_t_min_s` to a value unique to it, so each audit
/// batch names exactly one submitted patch. The audit order is then a
/// candidate sequential history: applying the full patches in that order
/// must give every intermediate and final config, and each thread's patches
/// must appear in the order that thread issued them.
#[test]
fn concurrent_patches_are_linearizable() {
    let dir = tempfile::tempdir().unwrap();
    let m = Arc::new(SessionManager::open(dir.path(), DEFAULT_MAX_UPLOAD_BYTES).unwrap());
    let id = m.create(&short_wav(), None).unwrap().id;

    let tag = |t: usize, k: usize| 0.1 + (t * PATCHES_PER_THREAD + k) as f64 * 1e-4;
    let mut plans: Vec<Vec<Map<String, Value>>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for t in 0..THREADS {
        let mut plan = Vec::new();
        for k in 0..PATCHES_PER_THREAD {
            let mut p = Map::new();
            p.insert("fixed_t_min_s".into(), json!(tag(t, k)));
            if rng.gen_bool(0.5) {
                p.insert(
                    "theta_sim".into(),
                    json!(0.9 + rng.gen_range(0..9) as f64 * 0.01),
                );
            }
            if rng.gen_bool(0.5) {
                p.insert("min_cycles".into(), json!(rng.gen_range(1..5)));
            }
            plan.push(p);
        }
        plans.push(plan);
    }

    let handles: Vec<_> = plans
        .iter()
        .cloned()
        .enumerate()
        .map(|(t, plan)| {
            let m = m.clone();
            let id = id.clone();
            std::thread::spawn(move || {
                for p in plan {
                    m.patch_thresholds(&id, &p, &format!("t{t}")).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }

    let by_tag: HashMap<u64, (usize, usize)> = (0..THREADS)
        .flat_map(|t| (0..PATCHES_PER_THREAD).map(move |k| (tag(t, k).to_bits(), (t, k))))
        .collect();
    let audit = m.audit(&id).unwrap();
    let mut batches: Vec<Vec<dysfluency_service::AuditEntry>> = Vec::new();
    for e in &audit.entries {
        match batches.last_mut() {
            Some(b) if b[0].batch == e.batch => b.push(e.clone()),
            _ => batches.push(vec![e.clone()]),
        }
    }
    assert_eq!(batches.len(), THREADS * PATCHES_PER_THREAD);

    let mut next_k = [0usize; THREADS];
    let mut sequential = audit.initial_config.clone();
    for b in &batches {
        let t_entry = b
            .iter()
            .find(|e| e.field == "fixed_t_min_s")
            .expect("tag logged");
        let (t, k) = by_tag[&t_entry.new.as_f64().unwrap().to_bits()];
        assert_eq!(k, next_k[t], "thread {t} reordered");
        next_k[t] += 1;
        assert!(b.iter().all(|e| e.author == format!("t{t}")));
        let before = sequential.clone();
        sequential = sequential.patched(&plans[t][k]).unwrap().0;
        assert_eq!(replay_audit(&before, b).unwrap(), sequential);
    }
    assert_eq!(sequential, m.config(&id).unwrap());
    assert_eq!(m.events(&id).unwrap().config_snapshot, sequential);
    assert_eq!(m.events(&id).unwrap().version, 1 + batches.len() as u64);
}
