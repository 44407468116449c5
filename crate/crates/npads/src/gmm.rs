//! Diagonal-covariance Gaussian mixture over latent vectors: log-density via
//! log-sum-exp and EM fitting with k-means++ style seeding.

use crate::error::{Error, Result};
use crate::nn::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Variances are clamped from below so the mixture never degenerates.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

/// Mixture of `K` axis-aligned Gaussians over an `R`-dimensional space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGmm {
    pub weights: Vec<f64>,
    /// `K x R`, one row per component.
    pub means: Vec<Vec<f64>>,
    /// `K x R`, diagonal of each covariance.
    pub variances: Vec<Vec<f64>>,
}

/// EM fit result: the mixture plus the per-iteration log-likelihood trace
/// (total over the data, evaluated after each M-step).
#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: DiagGmm,
    pub log_likelihood_trace: Vec<f64>,
}

impl DiagGmm {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// A single standard-normal component; the degenerate K=1 case.
    pub fn standard_normal(dim: usize) -> Self {
        DiagGmm {
            weights: vec![1.0],
            means: vec![vec![0.0; dim]],
            variances: vec![vec![1.0; dim]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::Dim("inconsistent mixture component counts".into()));
        }
        let r = self.dim();
        if self.means.iter().any(|m| m.len() != r) || self.variances.iter().any(|v| v.len() != r) {
            return Err(Error::Dim("inconsistent mixture dimensions".into()));
        }
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::Numerical(format!("mixture weights not a simplex (sum {wsum})")));
        }
        if self
            .variances
            .iter()
            .flatten()
            .any(|v| *v < VARIANCE_FLOOR * (1.0 - 1e-12))
        {
            return Err(Error::Numerical("variance below floor".into()));
        }
        Ok(())
    }

    /// ln N(z | mu_k, diag(var_k)) for one component.
    fn component_log_pdf(&self, k: usize, z: &[f64]) -> f64 {
        let mu = &self.means[k];
        let var = &self.variances[k];
        let mut acc = 0.0;
        for ((zi, mi), vi) in z.iter().zip(mu).zip(var) {
            let d = zi - mi;
            acc += -0.5 * (LN_2PI + vi.ln() + d * d / vi);
        }
        acc
    }

    /// ln p(z) = logsumexp_k [ln w_k + ln N(z | mu_k, Sigma_k)].
    pub fn log_pdf(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::Dim(format!(
                "latent has dim {}, mixture has dim {}",
                z.len(),
                self.dim()
            )));
        }
        let mut terms = Vec::with_capacity(self.n_components());
        for k in 0..self.n_components() {
            terms.push(self.weights[k].ln() + self.component_log_pdf(k, z));
        }
        Ok(log_sum_exp(&terms))
    }

    /// Fit by EM. Runs up to `max_iters` full iterations, stopping early when
    /// the relative log-likelihood improvement drops below `1e-6`.
    pub fn fit_em<R: Rng>(data: &Mat, k: usize, max_iters: usize, rng: &mut R) -> Result<EmFit> {
        let n = data.rows();
        let dim = data.cols();
        if n < k {
            return Err(Error::Data(format!("EM needs at least K={k} points, got {n}")));
        }
        if k == 0 {
            return Err(Error::Data("K must be positive".into()));
        }

        let mut gmm = init_kmeanspp(data, k, rng);
        let mut trace = Vec::with_capacity(max_iters);
        let mut resp = vec![0.0; n * k];

        for _ in 0..max_iters {
            // E-step: responsibilities under the current parameters.
            for i in 0..n {
                let z = data.row(i);
                let mut terms = Vec::with_capacity(k);
                for c in 0..k {
                    terms.push(gmm.weights[c].ln() + gmm.component_log_pdf(c, z));
                }
                let lse = log_sum_exp(&terms);
                for c in 0..k {
                    resp[i * k + c] = (terms[c] - lse).exp();
                }
            }

            // M-step.
            for c in 0..k {
                let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
                if nk < 1e-10 {
                    // Dead component: reseed it at the worst-explained point.
                    let worst = (0..n)
                        .min_by(|&a, &b| {
                            let la = gmm.log_pdf(data.row(a)).unwrap();
                            let lb = gmm.log_pdf(data.row(b)).unwrap();
                            la.partial_cmp(&lb).unwrap()
                        })
                        .unwrap();
                    gmm.means[c] = data.row(worst).to_vec();
                    gmm.variances[c] = vec![1.0; dim];
                    gmm.weights[c] = 1.0 / n as f64;
                    continue;
                }
                let mut mean = vec![0.0; dim];
                for i in 0..n {
                    let r = resp[i * k + c];
                    for (m, x) in mean.iter_mut().zip(data.row(i)) {
                        *m += r * x;
                    }
                }
                for m in &mut mean {
                    *m /= nk;
                }
                let mut var = vec![0.0; dim];
                for i in 0..n {
                    let r = resp[i * k + c];
                    for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                        let d = x - m;
                        *v += r * d * d;
                    }
                }
                for v in &mut var {
                    *v = (*v / nk).max(VARIANCE_FLOOR);
                }
                gmm.weights[c] = nk / n as f64;
                gmm.means[c] = mean;
                gmm.variances[c] = var;
            }
            renormalize_weights(&mut gmm.weights);

            // Log-likelihood under the updated parameters.
            let mut ll_new = 0.0;
            for i in 0..n {
                ll_new += gmm.log_pdf(data.row(i))?;
            }
            let improved = match trace.last() {
                Some(prev) => (ll_new - prev) / ll_new.abs().max(1.0) >= 1e-6,
                None => true,
            };
            trace.push(ll_new);
            if !improved {
                break;
            }
        }

        gmm.validate()?;
        Ok(EmFit { gmm, log_likelihood_trace: trace })
    }
}

fn renormalize_weights(w: &mut [f64]) {
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
}

/// k-means++ style seeding: spread means over the data, start from uniform
/// weights and the global per-dimension variance.
fn init_kmeanspp<R: Rng>(data: &Mat, k: usize, rng: &mut R) -> DiagGmm {
    let n = data.rows();
    let dim = data.cols();

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data.row(rng.gen_range(0..n)).to_vec());
    let mut d2 = vec![0.0f64; n];
    while centers.len() < k {
        let mut total = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for c in &centers {
                let dist: f64 = data
                    .row(i)
                    .iter()
                    .zip(c)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                best = best.min(dist);
            }
            d2[i] = best;
            total += best;
        }
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                target -= v;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(data.row(next).to_vec());
    }

    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for i in 0..n {
        for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v = (*v / n as f64).max(VARIANCE_FLOOR);
    }

    DiagGmm {
        weights: vec![1.0 / k as f64; k],
        means: centers,
        variances: vec![var; k],
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}
