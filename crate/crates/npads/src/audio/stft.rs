//! Short-time magnitude spectrograms.

use super::AudioClip;
use crate::error::{Error, Result};
use crate::nn::Mat;
use rustfft::{num_complex::Complex, FftPlanner};

/// Analysis frame length in samples.
pub const FRAME_LEN: usize = 512;
/// Frame shift in samples.
pub const HOP: usize = 256;

/// Analysis window. The feature pipeline uses Hann; Rect exists for
/// diagnostics and oracle comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rect,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
                .collect(),
        }
    }
}

/// `T x Omega` magnitude spectrogram, `Omega = frame_len/2 + 1`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub mags: Mat,
    pub frame_len: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.mags.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.mags.cols()
    }
}

/// Frame the clip with `T = floor((len - frame_len)/hop) + 1` frames and
/// take DFT magnitudes of each windowed frame.
pub fn stft(clip: &AudioClip, frame_len: usize, hop: usize, window: Window) -> Result<Spectrogram> {
    let samples = clip.samples();
    if samples.len() < frame_len {
        return Err(Error::Data(format!(
            "clip too short: {} samples, need at least {frame_len}",
            samples.len()
        )));
    }
    let n_frames = (samples.len() - frame_len) / hop + 1;
    let n_bins = frame_len / 2 + 1;
    let win = window.coefficients(frame_len);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame_len);
    let mut mags = Mat::zeros(n_frames, n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(samples[start + i] * win[i], 0.0);
        }
        fft.process(&mut buf);
        let row = mags.row_mut(t);
        for (bin, out) in row.iter_mut().enumerate() {
            *out = buf[bin].norm();
        }
    }
    Ok(Spectrogram { mags, frame_len, hop })
}
