//! Multi-resolution acoustic features on the canonical framing.

pub mod dsp;
pub mod envelope;
pub mod mfcc;
pub mod pitch;
pub mod rate;
pub mod spectral;

use std::io::Write;
use std::path::Path;

use log::info;

use crate::audio_io::{self, AudioBuffer, VadMask};
use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::framing::{self, HOP_S, WINDOW_S};

pub use envelope::compute_envelope;
pub use mfcc::{compute_mfcc, MfccFrame};
pub use pitch::{compute_f0, compute_hnr};
pub use rate::{estimate_speaking_rate, estimate_speaking_rate_with_f0, RateEstimate};
pub use spectral::{compute_spectral, SpectralTracks};

pub const PREEMPHASIS: f64 = 0.97;

/// Time-indexed per-frame values.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries<T = f64> {
    pub values: Vec<T>,
    pub hop_s: f64,
    pub window_s: f64,
    /// Center time of frame 0.
    pub start_s: f64,
}

impl<T> FrameSeries<T> {
    pub fn canonical(values: Vec<T>) -> Self {
        Self {
            values,
            hop_s: HOP_S,
            window_s: WINDOW_S,
            start_s: WINDOW_S / 2.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_s + i as f64 * self.hop_s
    }
}

/// The full feature pyramid for one recording. Immutable once built.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub mfcc: FrameSeries<MfccFrame>,
    pub f0: FrameSeries,
    pub hnr: FrameSeries,
    pub centroid: FrameSeries,
    pub spread: FrameSeries,
    pub flux: FrameSeries,
    /// Frame RMS in dBFS of the un-emphasized signal.
    pub energy: FrameSeries,
    pub envelope: Vec<f64>,
    pub speaking_rate: f64,
    /// False when the rate fell back to the configured default.
    pub rate_estimated: bool,
    pub nuclei: Vec<usize>,
    /// Frames at or below this energy count as silence.
    pub silence_floor_db: f64,
    pub duration_s: f64,
}

impl FeatureSet {
    pub fn frames(&self) -> usize {
        self.mfcc.len()
    }

    /// Frame energy is at or below the silence floor.
    pub fn is_silent(&self, i: usize) -> bool {
        self.energy.values[i] <= self.silence_floor_db
    }

    /// Write one CSV per track (`time_s,value...`) into `dir`.
    pub fn dump_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let scalar_tracks = [
            ("f0", &self.f0),
            ("hnr", &self.hnr),
            ("centroid", &self.centroid),
            ("spread", &self.spread),
            ("flux", &self.flux),
            ("energy", &self.energy),
        ];
        for (name, track) in scalar_tracks {
            let path = dir.join(format!("{name}.csv"));
            let mut out = String::from("time_s,value\n");
            for (i, v) in track.values.iter().enumerate() {
                out.push_str(&format!("{:.4},{v}\n", track.time(i)));
            }
            std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("mfcc.csv");
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let header: Vec<String> = (0..mfcc::MFCC_DIM).map(|k| format!("c{k}")).collect();
        writeln!(file, "time_s,{}", header.join(",")).map_err(|e| Error::io(&path, e))?;
        for (i, row) in self.mfcc.values.iter().enumerate() {
            let cols: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(file, "{:.4},{}", self.mfcc.time(i), cols.join(","))
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Build the feature set from a level-normalized 16 kHz buffer. MFCC and
/// the spectral tracks see the pre-emphasized signal; energy, pitch,
/// envelope and speaking rate see the signal as given.
pub fn extract(buf: &AudioBuffer, vad: &VadMask, cfg: &RuleConfig) -> Result<FeatureSet> {
    if buf.sample_rate != framing::SAMPLE_RATE {
        return Err(Error::InvalidArgument(format!(
            "features need {} Hz audio, got {}",
            framing::SAMPLE_RATE,
            buf.sample_rate
        )));
    }
    let (mfcc, spectral) = {
        let emphasized = audio_io::preemphasize(buf, PREEMPHASIS)?;
        (compute_mfcc(&emphasized)?, compute_spectral(&emphasized))
    };
    let SpectralTracks {
        centroid,
        spread,
        flux,
    } = spectral;
    let (f0, hnr) = pitch::f0_and_hnr(buf);
    let n = mfcc.len();
    let energy = FrameSeries::canonical(
        (0..n)
            .map(|i| framing::frame_energy_db(framing::frame(&buf.samples, i)))
            .collect(),
    );
    let envelope = compute_envelope(buf);
    let (speaking_rate, rate_estimated, nuclei) =
        match estimate_speaking_rate_with_f0(buf, vad, &f0.values, cfg) {
            Ok(est) => (est.rate, true, est.nuclei),
            Err(Error::InsufficientSpeech { speech_s, .. }) => {
                info!(
                    "only {speech_s:.2} s of speech; using fallback rate {}",
                    cfg.fallback_speaking_rate
                );
                (cfg.fallback_speaking_rate, false, Vec::new())
            }
            Err(e) => return Err(e),
        };
    debug_assert!([f0.len(), hnr.len(), centroid.len(), flux.len(), vad.len()]
        .iter()
        .all(|&l| l == n));
    Ok(FeatureSet {
        mfcc,
        f0,
        hnr,
        centroid,
        spread,
        flux,
        energy,
        envelope,
        speaking_rate,
        rate_estimated,
        nuclei,
        silence_floor_db: vad.threshold_db,
        duration_s: buf.duration_s(),
    })
}
