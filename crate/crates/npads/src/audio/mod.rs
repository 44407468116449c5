//! Audio front end: PCM16 WAV decoding, magnitude spectrograms, log-mel
//! features with context windows, normalization, and the synthesis of
//! power-ratio-controlled test mixtures.

mod cache;
mod features;
mod mel;
mod mix;
mod stft;
mod wav;

pub use cache::{export_csv, read_cache, write_cache};
pub use features::{
    apply_norm, extract_features, fit_norm_stats, frame_context, FeatureConfig, FeatureMatrix,
    NormStats, STD_FLOOR,
};
pub use mel::MelFilterbank;
pub use mix::{augment_gains, frame_log_powers, measure_anr_db, median, mix_at_anr, MixResult,
    GAIN_TARGETS};
pub use stft::{stft, Spectrogram, Window, FRAME_LEN, HOP};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// The only sampling rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at 16 kHz, samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Data(format!(
                "sample rate {sample_rate} not supported (need {SAMPLE_RATE}, no resampling)"
            )));
        }
        if samples.is_empty() {
            return Err(Error::Data("empty audio clip".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, s| acc.max(s.abs()))
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
