use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use dysfluency_core::audio_io::load_audio;
use dysfluency_core::eval::{score_corpus, AnnotationSet, EvalReport, Prf};
use dysfluency_core::synthgen::{self, SynthSpec};
use dysfluency_core::{
    features, pipeline, Error as CoreError, EventReport, RuleConfig, WordAlignment,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::exit;
use crate::render;
use crate::Format;

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RuleConfig> {
    let Some(path) = path else {
        return Ok(RuleConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| exit::io(format!("config {}: {e}", path.display())))?;
    RuleConfig::from_json(&text).with_context(|| format!("config {}", path.display()))
}

/// Print to stdout, or write `path` whole via a temp file and rename.
fn emit(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            let tmp = p.with_extension("partial");
            std::fs::write(&tmp, text)
                .and_then(|_| std::fs::rename(&tmp, p))
                .map_err(|e| exit::io(format!("{}: {e}", p.display())))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

pub fn detect(
    audio: &[PathBuf],
    alignment: Option<&Path>,
    output: Option<&Path>,
    jobs: usize,
    cfg: &RuleConfig,
    fmt: Format,
) -> anyhow::Result<()> {
    if alignment.is_some() && audio.len() > 1 {
        return Err(exit::usage("--alignment needs exactly one audio input"));
    }
    if jobs == 0 {
        return Err(exit::usage("--jobs must be at least 1"));
    }
    let alignment = alignment
        .map(|p| WordAlignment::load(p).with_context(|| format!("alignment {}", p.display())))
        .transpose()?;

    let results: Vec<Mutex<Option<anyhow::Result<EventReport>>>> =
        audio.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(path) = audio.get(i) else { break };
        let r = pipeline::detect_file(path, alignment.as_ref(), cfg)
            .with_context(|| format!("detecting {}", path.display()));
        *results[i].lock().unwrap() = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.min(audio.len()) {
            s.spawn(work);
        }
        work();
    });
    let reports = results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every input processed"))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let text = match (fmt, reports.as_slice()) {
        (Format::Json, [one]) => to_json(one),
        (Format::Json, many) => to_json(&many),
        (Format::Text, many) => many
            .iter()
            .map(render::report)
            .collect::<Vec<_>>()
            .join("\n"),
    };
    emit(&text, output)
}

#[derive(Debug, Serialize)]
struct Calibration {
    recording: String,
    speech_s: f64,
    nuclei: usize,
    speaking_rate: f64,
    /// `alpha / speaking_rate` under the active config.
    t_min_preview_s: f64,
    /// Loadable with `--config`; the baseline rate stands in for recordings
    /// too short to measure their own.
    config: Value,
}

pub fn calibrate(audio: &Path, cfg: &RuleConfig, fmt: Format) -> anyhow::Result<()> {
    let buf = load_audio(audio)?;
    let prepared = pipeline::prepare(&buf, cfg)?;
    let est = features::estimate_speaking_rate(&prepared.buffer, &prepared.vad, cfg)
        .with_context(|| format!("calibrating {}", audio.display()))?;
    let out = Calibration {
        recording: stem(audio),
        speech_s: est.speech_s,
        nuclei: est.nuclei.len(),
        speaking_rate: est.rate,
        t_min_preview_s: cfg.alpha / est.rate,
        config: json!({ "fallback_speaking_rate": est.rate }),
    };
    let text = match fmt {
        Format::Json => to_json(&out),
        Format::Text => render::kv(&[
            ("recording", out.recording.clone()),
            ("speech", format!("{:.2} s", out.speech_s)),
            ("nuclei", out.nuclei.to_string()),
            ("speaking rate", format!("{:.2} syll/s", out.speaking_rate)),
            (
                "T_min preview",
                format!("{:.3} s (alpha {})", out.t_min_preview_s, cfg.alpha),
            ),
        ]),
    };
    emit(&text, None)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    summary: BTreeMap<String, Prf>,
    #[serde(flatten)]
    report: EvalReport,
}

/// Hypotheses come either as annotation CSV or as the JSON that `detect`
/// prints (one report or an array of them).
fn load_hypotheses(path: &Path) -> anyhow::Result<Vec<AnnotationSet>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| exit::io(format!("{}: {e}", path.display())))?;
    let trimmed = text.trim_start();
    if !(trimmed.starts_with('{') || trimmed.starts_with('[')) {
        return Ok(AnnotationSet::parse_csv(&text)?);
    }
    let parse_err = |e: serde_json::Error| CoreError::Parse {
        line: e.line(),
        message: e.to_string(),
    };
    let reports: Vec<EventReport> = if trimmed.starts_with('[') {
        serde_json::from_str(&text).map_err(parse_err)?
    } else {
        vec![serde_json::from_str(&text).map_err(parse_err)?]
    };
    Ok(reports
        .iter()
        .map(|r| AnnotationSet::from_events(r.recording_id.clone(), &r.events))
        .collect())
}

pub fn eval(reference: &Path, hypothesis: &Path, iou: f64, fmt: Format) -> anyhow::Result<()> {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(exit::usage(format!("--iou must be in (0, 1], got {iou}")));
    }
    let refs = AnnotationSet::load_csv(reference)
        .with_context(|| format!("reference {}", reference.display()))?;
    let hyps = load_hypotheses(hypothesis)
        .with_context(|| format!("hypothesis {}", hypothesis.display()))?;
    let report = score_corpus(&hyps, &refs, iou)?;
    let text = match fmt {
        Format::Json => to_json(&EvalOutput {
            summary: report.summary(),
            report,
        }),
        Format::Text => report.to_text(),
    };
    emit(&text, None)
}

fn load_specs(source: &str, seed: Option<u64>) -> anyhow::Result<Vec<SynthSpec>> {
    let path = Path::new(source);
    if !path.is_file() {
        return Ok(synthgen::preset(source, seed.unwrap_or(0))?);
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| exit::io(format!("{}: {e}", path.display())))?;
    let mut specs = if text.trim_start().starts_with('[') {
        serde_json::from_str::<Vec<SynthSpec>>(&text)
            .map_err(|e| CoreError::InvalidSpec(e.to_string()))?
    } else {
        vec![SynthSpec::from_json(&text)?]
    };
    if let Some(seed) = seed {
        for (i, s) in specs.iter_mut().enumerate() {
            s.seed = seed.wrapping_add(i as u64);
        }
    }
    for (i, s) in specs.iter_mut().enumerate() {
        if s.recording_id.is_empty() {
            s.recording_id = format!("{}{i:03}", stem(path));
        }
    }
    Ok(specs)
}

#[derive(Debug, Serialize)]
struct SynthOutput {
    recordings: usize,
    events: usize,
    annotations: PathBuf,
    files: Vec<PathBuf>,
}

pub fn synth(
    source: &str,
    out: &Path,
    seed: Option<u64>,
    time_scale: f64,
    fmt: Format,
) -> anyhow::Result<()> {
    let mut specs = load_specs(source, seed)?;
    for s in &mut specs {
        s.time_scale *= time_scale;
        s.validate()?;
    }
    let mut files = Vec::new();
    let mut combined = String::from("recording_id,kind,start_s,end_s\n");
    let mut events = 0;
    for spec in &specs {
        let synth = synthgen::generate(spec)?;
        events += synth.annotations.events.len();
        synth.annotations.append_csv_rows(&mut combined);
        files.extend(synthgen::write_outputs(out, &synth)?);
    }
    let annotations = out.join("annotations.csv");
    std::fs::write(&annotations, combined)
        .map_err(|e| exit::io(format!("{}: {e}", annotations.display())))?;
    let summary = SynthOutput {
        recordings: specs.len(),
        events,
        annotations,
        files,
    };
    let text = match fmt {
        Format::Json => to_json(&summary),
        Format::Text => render::kv(&[
            ("recordings", summary.recordings.to_string()),
            ("planted events", summary.events.to_string()),
            ("annotations", summary.annotations.display().to_string()),
            ("output", out.display().to_string()),
        ]),
    };
    emit(&text, None)
}

#[derive(Debug, Serialize)]
struct BenchReport {
    recording: String,
    audio_s: f64,
    wall_s: f64,
    /// Wall time over raw input duration.
    realtime_ratio: f64,
    /// Process high-water mark of resident memory (Linux only).
    peak_rss_bytes: Option<u64>,
    repeats: usize,
    events: usize,
}

/// `VmHWM` from `/proc/self/status`.
fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

pub fn bench(audio: &Path, repeat: usize, cfg: &RuleConfig, fmt: Format) -> anyhow::Result<()> {
    if repeat == 0 {
        return Err(exit::usage("--repeat must be at least 1"));
    }
    let buf = load_audio(audio)?;
    let id = stem(audio);
    let mut best = f64::INFINITY;
    let mut events = 0;
    for _ in 0..repeat {
        let t = Instant::now();
        let d = pipeline::run(&buf, None, cfg, &id)?;
        best = best.min(t.elapsed().as_secs_f64());
        events = d.report.events.len();
    }
    let audio_s = buf.duration_s();
    let out = BenchReport {
        recording: id,
        audio_s,
        wall_s: best,
        realtime_ratio: best / audio_s,
        peak_rss_bytes: peak_rss_bytes(),
        repeats: repeat,
        events,
    };
    let text = match fmt {
        Format::Json => to_json(&out),
        Format::Text => render::kv(&[
            ("recording", out.recording.clone()),
            ("audio", format!("{:.2} s", out.audio_s)),
            ("wall", format!("{:.4} s", out.wall_s)),
            ("real-time ratio", format!("{:.4}x", out.realtime_ratio)),
            (
                "peak memory",
                out.peak_rss_bytes.map_or("unavailable".into(), |b| {
                    format!("{:.1} MB", b as f64 / 1048576.0)
                }),
            ),
        ]),
    };
    emit(&text, None)
}

pub fn serve(
    data_dir: PathBuf,
    addr: SocketAddr,
    max_upload_mb: usize,
    cfg: RuleConfig,
) -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| exit::io(format!("starting runtime: {e}")))?;
    let service = dysfluency_service::ServiceConfig {
        data_dir,
        addr,
        max_upload_bytes: max_upload_mb.saturating_mul(1024 * 1024),
        default_config: cfg,
    };
    rt.block_on(dysfluency_service::serve(service))
        .map_err(|e| exit::io(format!("service: {e}")))
}
