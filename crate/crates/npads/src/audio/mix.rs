//! Test-mixture synthesis at a controlled anomaly-to-normal power ratio, and
//! the fixed five-gain loudness augmentation.
//!
//! The representative power of a clip is the median over frames of
//! `P_t = 20 log10 sum_w |X_{w,t}|` with 512/256 framing.

use super::{stft, AudioClip, Window, FRAME_LEN, HOP};
use crate::error::{Error, Result};
use rand::Rng;

/// Peak-amplitude targets for training-data loudness augmentation.
pub const GAIN_TARGETS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.063];

/// Frame-wise log power on a dB scale.
pub fn frame_log_powers(clip: &AudioClip) -> Result<Vec<f64>> {
    let spec = stft(clip, FRAME_LEN, HOP, Window::Hann)?;
    Ok((0..spec.n_frames())
        .map(|t| {
            let sum: f64 = spec.mags.row(t).iter().sum();
            20.0 * sum.log10()
        })
        .collect())
}

/// Median; the average of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Result of one mixture synthesis. `normal_cut` is the normal test item and
/// `mixture` the anomalous one; the rest is kept for diagnostics.
#[derive(Debug, Clone)]
pub struct MixResult {
    pub normal_cut: AudioClip,
    pub mixture: AudioClip,
    pub scaled_anomaly: AudioClip,
    pub gain: f64,
    pub cut_offset: usize,
}

/// Five steps: cut the normal at a random offset to the anomaly's length,
/// measure median frame powers of both, scale the anomaly so the power
/// ratio lands on `anr_db`, and add.
pub fn mix_at_anr<R: Rng>(
    normal: &AudioClip,
    anomaly: &AudioClip,
    anr_db: f64,
    rng: &mut R,
) -> Result<MixResult> {
    if anomaly.len() > normal.len() {
        return Err(Error::Data(format!(
            "anomaly ({} samples) longer than normal ({} samples)",
            anomaly.len(),
            normal.len()
        )));
    }
    let cut_offset = rng.gen_range(0..=normal.len() - anomaly.len());
    let normal_cut = AudioClip::new(
        normal.samples()[cut_offset..cut_offset + anomaly.len()].to_vec(),
        normal.sample_rate(),
    )?;

    let p_n = median(&frame_log_powers(&normal_cut)?);
    let p_a = median(&frame_log_powers(anomaly)?);
    let gain = 10.0_f64.powf((anr_db - (p_a - p_n)) / 20.0);

    let scaled: Vec<f64> = anomaly.samples().iter().map(|s| s * gain).collect();
    let mixture: Vec<f64> = normal_cut
        .samples()
        .iter()
        .zip(&scaled)
        .map(|(n, a)| n + a)
        .collect();

    Ok(MixResult {
        normal_cut,
        mixture: AudioClip::new(mixture, normal.sample_rate())?,
        scaled_anomaly: AudioClip::new(scaled, normal.sample_rate())?,
        gain,
        cut_offset,
    })
}

/// Re-measure the power ratio between the anomalous component and the
/// normal component of a synthesized pair.
pub fn measure_anr_db(normal_cut: &AudioClip, scaled_anomaly: &AudioClip) -> Result<f64> {
    let p_n = median(&frame_log_powers(normal_cut)?);
    let p_a = median(&frame_log_powers(scaled_anomaly)?);
    Ok(p_a - p_n)
}

/// Five copies scaled so peak amplitude hits each of [`GAIN_TARGETS`].
pub fn augment_gains(clip: &AudioClip) -> Result<Vec<AudioClip>> {
    let peak = clip.peak();
    if peak <= 0.0 {
        return Err(Error::Data("cannot gain-normalize a silent clip".into()));
    }
    GAIN_TARGETS
        .iter()
        .map(|target| {
            let scale = target / peak;
            AudioClip::new(
                clip.samples().iter().map(|s| s * scale).collect(),
                clip.sample_rate(),
            )
        })
        .collect()
}
