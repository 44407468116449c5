//! Triangular mel filterbank (HTK-style scale, unit-peak filters) spanning
//! 0 Hz to Nyquist.

use super::Spectrogram;
use crate::nn::Mat;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0_f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_bins x n_mels` dense filter matrix.
    weights: Mat,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = Mat::zeros(n_bins, n_mels);
        for bin in 0..n_bins {
            let f = bin as f64 * sample_rate as f64 / n_fft as f64;
            for m in 0..n_mels {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let w = if f >= left && f <= center && center > left {
                    (f - left) / (center - left)
                } else if f > center && f <= right && right > center {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                weights.set(bin, m, w);
            }
        }
        MelFilterbank { weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    /// `ln(max(Mel . mags, eps_floor))` per frame; `T x n_mels`.
    pub fn log_mel(&self, spec: &Spectrogram, eps_floor: f64) -> Mat {
        let t = spec.n_frames();
        let n_mels = self.n_mels();
        let mut out = Mat::zeros(t, n_mels);
        for frame in 0..t {
            let mags = spec.mags.row(frame);
            let row = out.row_mut(frame);
            for (m, out_v) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (bin, &mag) in mags.iter().enumerate() {
                    acc += mag * self.weights.get(bin, m);
                }
                *out_v = acc.max(eps_floor).ln();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{stft, AudioClip, Window, SAMPLE_RATE};

    #[test]
    fn zero_frame_hits_the_floor() {
        let clip = AudioClip::new(vec![0.0; 1024], SAMPLE_RATE).unwrap();
        let spec = stft(&clip, 512, 256, Window::Hann).unwrap();
        let fb = MelFilterbank::new(40, 512, SAMPLE_RATE);
        let out = fb.log_mel(&spec, 1e-10);
        let expect = (1e-10f64).ln();
        assert!(out.data().iter().all(|v| *v == expect));
    }

    #[test]
    fn output_dimension_is_n_mels() {
        let clip = AudioClip::new(vec![0.3; 2048], SAMPLE_RATE).unwrap();
        let spec = stft(&clip, 512, 256, Window::Hann).unwrap();
        let fb = MelFilterbank::new(40, 512, SAMPLE_RATE);
        let out = fb.log_mel(&spec, 1e-10);
        assert_eq!(out.cols(), 40);
        assert_eq!(out.rows(), spec.n_frames());
    }

    #[test]
    fn flat_spectrum_gives_filter_row_sums() {
        // all-ones magnitudes: output m = ln(sum of filter m), computed by a
        // dense matrix-multiply oracle in the same summation order
        let fb = MelFilterbank::new(40, 512, SAMPLE_RATE);
        let mut mags = Mat::zeros(2, 257);
        for v in mags.data_mut() {
            *v = 1.0;
        }
        let spec = Spectrogram { mags, frame_len: 512, hop: 256 };
        let out = fb.log_mel(&spec, 1e-10);
        for m in 0..40 {
            let mut acc = 0.0;
            for bin in 0..257 {
                acc += fb.weights().get(bin, m);
            }
            let oracle = acc.max(1e-10).ln();
            assert_eq!(out.get(0, m), oracle, "filter {m}");
            assert_eq!(out.get(1, m), oracle);
        }
    }

    #[test]
    fn log_mel_matches_dense_matmul_oracle() {
        let samples: Vec<f64> = (0..4096)
            .map(|i| {
                0.2 * (2.0 * std::f64::consts::PI * 901.0 * i as f64 / 16000.0).sin()
                    + 0.05 * (2.0 * std::f64::consts::PI * 3333.0 * i as f64 / 16000.0).sin()
            })
            .collect();
        let clip = AudioClip::new(samples, SAMPLE_RATE).unwrap();
        let spec = stft(&clip, 512, 256, Window::Hann).unwrap();
        let fb = MelFilterbank::new(40, 512, SAMPLE_RATE);
        let out = fb.log_mel(&spec, 1e-10);
        for t in 0..spec.n_frames() {
            for m in 0..40 {
                let mut acc = 0.0;
                for bin in 0..257 {
                    acc += spec.mags.get(t, bin) * fb.weights().get(bin, m);
                }
                assert_eq!(out.get(t, m), acc.max(1e-10).ln());
            }
        }
    }

    #[test]
    fn filters_are_unit_peak_triangles() {
        let fb = MelFilterbank::new(40, 512, SAMPLE_RATE);
        for m in 0..40 {
            let peak = (0..257)
                .map(|b| fb.weights().get(b, m))
                .fold(0.0f64, f64::max);
            assert!(peak > 0.0 && peak <= 1.0 + 1e-12, "filter {m}: peak {peak}");
        }
    }

    #[test]
    fn never_emits_non_finite_for_nonnegative_input() {
        let fb = MelFilterbank::new(40, 512, SAMPLE_RATE);
        let mut mags = Mat::zeros(3, 257);
        // mix of zeros, tiny, and huge magnitudes
        mags.row_mut(1).iter_mut().for_each(|v| *v = 1e-300);
        mags.row_mut(2).iter_mut().for_each(|v| *v = 1e300);
        let spec = Spectrogram { mags, frame_len: 512, hop: 256 };
        let out = fb.log_mel(&spec, 1e-10);
        assert!(out.data().iter().all(|v| v.is_finite()));
    }
}
