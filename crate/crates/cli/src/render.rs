//! Aligned-column text output.

use std::fmt::Write as _;

use dysfluency_core::EventReport;
use serde_json::Value;

pub fn kv(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

/// Evidence as `key=value` pairs, in the same keys as the JSON output.
fn evidence(v: &Value) -> String {
    let Value::Object(map) = v else {
        return v.to_string();
    };
    map.iter()
        .filter(|(k, _)| k.as_str() != "rule")
        .map(|(k, v)| match v {
            Value::Number(n) => match n.as_f64() {
                Some(x) if n.is_f64() => format!("{k}={x:.3}"),
                _ => format!("{k}={n}"),
            },
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn report(r: &EventReport) -> String {
    let mut out = String::new();
    let rate_note = if r.rate_estimated {
        "estimated"
    } else {
        "fallback"
    };
    let _ = writeln!(
        out,
        "{}  {:.2} s  {:.2} syll/s ({rate_note})  {} event(s)",
        r.recording_id,
        r.duration_s,
        r.speaking_rate,
        r.events.len()
    );
    if r.events.is_empty() {
        return out;
    }
    let _ = writeln!(
        out,
        "{:<14}{:>9}{:>9}{:>7}  evidence",
        "kind", "start", "end", "conf"
    );
    for e in &r.events {
        let ev = serde_json::to_value(&e.evidence).expect("evidence serializes");
        let _ = writeln!(
            out,
            "{:<14}{:>9.3}{:>9.3}{:>7.2}  {}",
            e.kind.as_str(),
            e.start_s,
            e.end_s,
            e.confidence,
            evidence(&ev)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn evidence_pairs_skip_the_tag() {
        let v =
            json!({"rule": "silent_block", "silence_s": 0.5, "preceding_flux": 2, "word": "ba"});
        assert_eq!(evidence(&v), "preceding_flux=2 silence_s=0.500 word=ba");
    }

    #[test]
    fn kv_aligns() {
        let s = kv(&[("a", "1".into()), ("long key", "2".into())]);
        assert_eq!(s, "a         1\nlong key  2\n");
    }
}
