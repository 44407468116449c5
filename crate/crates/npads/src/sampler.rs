//! Simulation of anomalous latent vectors: draw from the standard normal,
//! keep only draws the normal-sound mixture assigns low likelihood, decode
//! the survivors through the generator.

use crate::error::{Error, Result};
use crate::gmm::DiagGmm;
use crate::nn::{Mat, Mlp};
use rand::Rng;

/// Rejection threshold on `-ln p(z)` plus an attempt cap. The printed
/// algorithm can loop forever when the threshold rejects everything the
/// proposal produces; the cap turns that into a diagnosable error.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub phi_z: f64,
    pub max_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { phi_z: f64::NEG_INFINITY, max_attempts: 10_000 }
    }
}

/// One i.i.d. standard-normal vector via Box-Muller over the seeded generator.
pub fn draw_standard_normal<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim + 1);
    while out.len() < dim {
        // u1 in (0, 1] so the log is finite
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        out.push(radius * angle.cos());
        out.push(radius * angle.sin());
    }
    out.truncate(dim);
    out
}

/// Outcome of drawing one accepted anomalous latent.
#[derive(Debug, Clone)]
pub struct AcceptedLatent {
    pub z: Vec<f64>,
    /// `-ln p(z | mixture)` of the accepted draw.
    pub neg_log_pdf: f64,
    /// Draws consumed, including the accepted one.
    pub attempts: usize,
}

/// Algorithm: draw from N(0, I), evaluate `-ln p(z)` under the normal-latent
/// mixture, accept once it exceeds `phi_z`.
pub fn sample_anomalous_latent<R: Rng>(
    gmm: &DiagGmm,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<AcceptedLatent> {
    let dim = gmm.dim();
    for attempt in 1..=cfg.max_attempts {
        let z = draw_standard_normal(dim, rng);
        let nll = -gmm.log_pdf(&z)?;
        if nll > cfg.phi_z {
            return Ok(AcceptedLatent { z, neg_log_pdf: nll, attempts: attempt });
        }
    }
    Err(Error::RejectionBudget)
}

/// A batch of accepted latents together with the decoded feature vectors.
#[derive(Debug, Clone)]
pub struct AnomalousBatch {
    /// `M x R` accepted latents.
    pub latents: Mat,
    /// `M x Q` generator outputs.
    pub features: Mat,
    /// Total proposal draws over the whole batch.
    pub attempts: usize,
}

impl AnomalousBatch {
    /// Fraction of proposals that were accepted.
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            self.latents.rows() as f64 / self.attempts as f64
        }
    }
}

/// Draw `count` accepted latents and decode them through the generator.
pub fn generate_anomalous_batch<R: Rng>(
    generator: &Mlp,
    gmm: &DiagGmm,
    cfg: &SamplerConfig,
    count: usize,
    rng: &mut R,
) -> Result<AnomalousBatch> {
    if generator.input_dim() != gmm.dim() {
        return Err(Error::Dim(format!(
            "generator expects dim {}, mixture has dim {}",
            generator.input_dim(),
            gmm.dim()
        )));
    }
    let mut latents = Mat::zeros(count, gmm.dim());
    let mut attempts = 0;
    for i in 0..count {
        let accepted = sample_anomalous_latent(gmm, cfg, rng)?;
        attempts += accepted.attempts;
        latents.row_mut(i).copy_from_slice(&accepted.z);
    }
    let features = if count == 0 {
        Mat::zeros(0, generator.output_dim())
    } else {
        generator.forward_only(&latents)?
    };
    Ok(AnomalousBatch { latents, features, attempts })
}
