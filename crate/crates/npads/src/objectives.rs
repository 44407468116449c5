//! Scalar objectives and their gradient seeds: reconstruction-error anomaly
//! score, minibatch Gaussian statistics, the KLD-to-standard-normal
//! constraint, the combined KLD+reconstruction loss, sigmoid-smoothed
//! TPR/FPR surrogates, the TPR-FPR and AUC objectives, and the sorted-score
//! threshold rule.
//!
//! Thresholds are constants within each update: they come from sorting and
//! no gradient flows through them.

use crate::error::{Error, Result};
use crate::nn::{Mat, Mlp, MlpGrads};

/// Ridge added to the minibatch covariance so it is always invertible.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Mean and (ridged, biased) covariance of a minibatch of latent vectors.
#[derive(Debug, Clone)]
pub struct BatchGaussianStats {
    pub mean: Vec<f64>,
    /// `R x R`, symmetric positive definite thanks to the ridge.
    pub cov: Mat,
}

/// `||x - D(E(x))||^2` for a single input vector.
pub fn anomaly_score(encoder: &Mlp, decoder: &Mlp, x: &[f64]) -> Result<f64> {
    let batch = Mat::from_rows(&[x.to_vec()]);
    Ok(anomaly_scores_batch(encoder, decoder, &batch)?[0])
}

/// Per-row reconstruction errors for a batch.
pub fn anomaly_scores_batch(encoder: &Mlp, decoder: &Mlp, batch: &Mat) -> Result<Vec<f64>> {
    let latent = encoder.forward_only(batch)?;
    let recon = decoder.forward_only(&latent)?;
    if recon.cols() != batch.cols() {
        return Err(Error::Dim(format!(
            "decoder emits dim {}, input has dim {}",
            recon.cols(),
            batch.cols()
        )));
    }
    Ok((0..batch.rows())
        .map(|r| {
            batch
                .row(r)
                .iter()
                .zip(recon.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect())
}

/// Scores plus the parameter gradients of `sum_n c_n * score_n` with respect
/// to both networks. `coeffs` carries the dLoss/dScore seed per row, so any
/// differentiable function of the scores can be chained through here.
pub fn scores_with_grads(
    encoder: &Mlp,
    decoder: &Mlp,
    batch: &Mat,
    coeffs: &[f64],
) -> Result<(Vec<f64>, MlpGrads, MlpGrads)> {
    if coeffs.len() != batch.rows() {
        return Err(Error::Dim("one coefficient per batch row required".into()));
    }
    let (latent, enc_cache) = encoder.forward(batch)?;
    let (recon, dec_cache) = decoder.forward(&latent)?;
    let scores: Vec<f64> = (0..batch.rows())
        .map(|r| {
            batch
                .row(r)
                .iter()
                .zip(recon.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();

    // d(score_r)/d(recon_r) = 2 (recon_r - x_r), scaled by the row coefficient
    let mut grad_recon = Mat::zeros(recon.rows(), recon.cols());
    for r in 0..recon.rows() {
        let c = coeffs[r];
        let out = grad_recon.row_mut(r);
        for (g, (xr, rr)) in out.iter_mut().zip(batch.row(r).iter().zip(recon.row(r))) {
            *g = 2.0 * c * (rr - xr);
        }
    }
    let (dec_grads, grad_latent) = decoder.backward(&dec_cache, &grad_recon)?;
    let (enc_grads, _) = encoder.backward(&enc_cache, &grad_latent)?;
    Ok((scores, enc_grads, dec_grads))
}

/// Minibatch mean and biased covariance plus ridge.
pub fn batch_stats(latents: &Mat) -> Result<BatchGaussianStats> {
    let m = latents.rows();
    let r = latents.cols();
    if m < 2 {
        return Err(Error::Data(format!("batch statistics need at least 2 rows, got {m}")));
    }
    let mut mean = vec![0.0; r];
    for i in 0..m {
        for (acc, v) in mean.iter_mut().zip(latents.row(i)) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut cov = Mat::zeros(r, r);
    for i in 0..m {
        let row = latents.row(i);
        for a in 0..r {
            let da = row[a] - mean[a];
            let out = cov.row_mut(a);
            for (b, out_v) in out.iter_mut().enumerate() {
                *out_v += da * (row[b] - mean[b]);
            }
        }
    }
    for v in cov.data_mut() {
        *v /= m as f64;
    }
    for a in 0..r {
        let v = cov.get(a, a);
        cov.set(a, a, v + COVARIANCE_RIDGE);
    }
    Ok(BatchGaussianStats { mean, cov })
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dim("cholesky needs a square matrix".into()));
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(
                        "covariance is not positive definite".into(),
                    ));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `L y = b` for lower-triangular `L`.
fn forward_substitute(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    y
}

/// Solve `L^T x = y` for lower-triangular `L`.
fn back_substitute(l: &Mat, y: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    x
}

/// Full inverse via Cholesky solves, column by column.
fn inverse_spd(l: &Mat) -> Mat {
    let n = l.rows();
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        let col = back_substitute(l, &forward_substitute(l, &e));
        e[c] = 0.0;
        for (r, v) in col.iter().enumerate() {
            inv.set(r, c, *v);
        }
    }
    inv
}

/// `D( N(0, I) || N(mean, cov) ) = 0.5 [ ln|cov| + tr(cov^-1)
/// + mean^T cov^-1 mean - R ]`.
pub fn kld_to_standard(stats: &BatchGaussianStats) -> Result<f64> {
    let r = stats.mean.len();
    let l = cholesky(&stats.cov)?;
    let log_det: f64 = (0..r).map(|i| 2.0 * l.get(i, i).ln()).sum();
    let inv = inverse_spd(&l);
    let trace_inv: f64 = (0..r).map(|i| inv.get(i, i)).sum();
    let sol = back_substitute(&l, &forward_substitute(&l, &stats.mean));
    let quad: f64 = stats.mean.iter().zip(&sol).map(|(a, b)| a * b).sum();
    Ok(0.5 * (log_det + trace_inv + quad - r as f64))
}

/// KLD value together with its gradient with respect to every latent row
/// that produced the statistics.
///
/// With `G = dKLD/dCov = 0.5 (S^-1 - S^-2 - S^-1 m m^T S^-1)` and
/// `dKLD/dmean = S^-1 m`, chaining through the biased minibatch estimators
/// gives `dKLD/dz_n = (1/M) S^-1 m + (2/M) G (z_n - m)`.
pub fn kld_with_latent_grads(latents: &Mat) -> Result<(f64, Mat)> {
    let stats = batch_stats(latents)?;
    let m_rows = latents.rows() as f64;
    let r = stats.mean.len();

    let l = cholesky(&stats.cov)?;
    let inv = inverse_spd(&l);
    let log_det: f64 = (0..r).map(|i| 2.0 * l.get(i, i).ln()).sum();
    let trace_inv: f64 = (0..r).map(|i| inv.get(i, i)).sum();
    let sm: Vec<f64> = (0..r)
        .map(|i| (0..r).map(|j| inv.get(i, j) * stats.mean[j]).sum())
        .collect();
    let quad: f64 = stats.mean.iter().zip(&sm).map(|(a, b)| a * b).sum();
    let value = 0.5 * (log_det + trace_inv + quad - r as f64);

    let inv2 = inv.matmul(&inv);
    let mut g = Mat::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            g.set(
                a,
                b,
                0.5 * (inv.get(a, b) - inv2.get(a, b) - sm[a] * sm[b]),
            );
        }
    }

    let mut grads = Mat::zeros(latents.rows(), r);
    for n in 0..latents.rows() {
        let row = latents.row(n);
        let out = grads.row_mut(n);
        for a in 0..r {
            let mut acc = sm[a] / m_rows;
            for b in 0..r {
                acc += 2.0 / m_rows * g.get(a, b) * (row[b] - stats.mean[b]);
            }
            out[a] = acc;
        }
    }
    Ok((value, grads))
}

/// KLD + summed reconstruction error of a various-sound batch through
/// encoder and generator (the sum is as defined, not a mean).
pub fn j_kr(encoder: &Mlp, generator: &Mlp, batch: &Mat) -> Result<f64> {
    if batch.rows() == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let latents = encoder.forward_only(batch)?;
    let kld = kld_to_standard(&batch_stats(&latents)?)?;
    let recon_sum: f64 = anomaly_scores_batch_through(generator, &latents, batch)?.iter().sum();
    Ok(kld + recon_sum)
}

fn anomaly_scores_batch_through(decoder: &Mlp, latents: &Mat, batch: &Mat) -> Result<Vec<f64>> {
    let recon = decoder.forward_only(latents)?;
    Ok((0..batch.rows())
        .map(|r| {
            batch
                .row(r)
                .iter()
                .zip(recon.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect())
}

/// `j_kr` plus exact gradients for the encoder and generator.
pub fn j_kr_with_grads(
    encoder: &Mlp,
    generator: &Mlp,
    batch: &Mat,
) -> Result<(f64, MlpGrads, MlpGrads)> {
    if batch.rows() < 2 {
        return Err(Error::Data("KLD+reconstruction needs at least 2 rows".into()));
    }
    let (latents, enc_cache) = encoder.forward(batch)?;
    let (kld, mut grad_latents) = kld_with_latent_grads(&latents)?;

    let (recon, gen_cache) = generator.forward(&latents)?;
    let mut recon_sum = 0.0;
    let mut grad_recon = Mat::zeros(recon.rows(), recon.cols());
    for r in 0..recon.rows() {
        let out = grad_recon.row_mut(r);
        for (g, (xr, rr)) in out.iter_mut().zip(batch.row(r).iter().zip(recon.row(r))) {
            let d = rr - xr;
            recon_sum += d * d;
            *g = 2.0 * d;
        }
    }
    let (gen_grads, grad_latents_recon) = generator.backward(&gen_cache, &grad_recon)?;
    for (a, b) in grad_latents.data_mut().iter_mut().zip(grad_latents_recon.data()) {
        *a += b;
    }
    let (enc_grads, _) = encoder.backward(&enc_cache, &grad_latents)?;
    Ok((kld + recon_sum, enc_grads, gen_grads))
}

/// The floor-indexed descending-order statistic: sort descending, take the
/// `max(1, floor(rho * M))`-th value (1-based).
pub fn select_threshold(scores: &[f64], rho: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Data("cannot select a threshold from no scores".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let idx = ((rho * scores.len() as f64).floor() as usize).max(1);
    Ok(sorted[idx - 1])
}

/// Numerically safe logistic function.
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-500.0, 500.0);
    1.0 / (1.0 + (-x).exp())
}

fn sigmoid_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// `(1/M) sum sigmoid(score - phi)`: smoothed detection rate of a batch.
pub fn smooth_rate(scores: &[f64], phi: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| sigmoid(s - phi)).sum::<f64>() / scores.len() as f64
}

/// Smoothed TPR - FPR at a fixed threshold. Returns the value and the
/// gradient with respect to each anomalous and normal score.
pub fn j_np_with_score_grads(
    scores_anom: &[f64],
    scores_norm: &[f64],
    phi: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let ma = scores_anom.len() as f64;
    let mn = scores_norm.len() as f64;
    let value = smooth_rate(scores_anom, phi) - smooth_rate(scores_norm, phi);
    let d_anom = scores_anom.iter().map(|s| sigmoid_grad(s - phi) / ma).collect();
    let d_norm = scores_norm.iter().map(|s| -sigmoid_grad(s - phi) / mn).collect();
    (value, d_anom, d_norm)
}

pub fn j_np(scores_anom: &[f64], scores_norm: &[f64], phi: f64) -> f64 {
    j_np_with_score_grads(scores_anom, scores_norm, phi).0
}

/// Smoothed AUC objective: every normal score serves as a threshold for
/// both rates. O(M^2) pairwise sigmoids.
pub fn j_auc_with_score_grads(
    scores_anom: &[f64],
    scores_norm: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let ma = scores_anom.len() as f64;
    let mn = scores_norm.len() as f64;
    let mut value = 0.0;
    let mut d_anom = vec![0.0; scores_anom.len()];
    let mut d_norm = vec![0.0; scores_norm.len()];
    for (n, &phi) in scores_norm.iter().enumerate() {
        for (m, &sa) in scores_anom.iter().enumerate() {
            value += sigmoid(sa - phi) / (ma * mn);
            let g = sigmoid_grad(sa - phi) / (ma * mn);
            d_anom[m] += g;
            d_norm[n] -= g; // phi role
        }
        for (m, &su) in scores_norm.iter().enumerate() {
            value -= sigmoid(su - phi) / (mn * mn);
            let g = sigmoid_grad(su - phi) / (mn * mn);
            d_norm[m] -= g; // sample role
            d_norm[n] += g; // phi role
        }
    }
    (value, d_anom, d_norm)
}

pub fn j_auc(scores_anom: &[f64], scores_norm: &[f64]) -> f64 {
    let ma = scores_anom.len() as f64;
    let mn = scores_norm.len() as f64;
    let mut value = 0.0;
    for &phi in scores_norm {
        for &sa in scores_anom {
            value += sigmoid(sa - phi) / (ma * mn);
        }
        for &su in scores_norm {
            value -= sigmoid(su - phi) / (mn * mn);
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer, Mlp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_net(dim: usize) -> Mlp {
        let mut w = Mat::zeros(dim, dim);
        for i in 0..dim {
            w.set(i, i, 1.0);
        }
        Mlp::new(vec![Layer { w, b: vec![0.0; dim], act: Activation::Linear }]).unwrap()
    }

    #[test]
    fn perfect_reconstruction_scores_zero() {
        let enc = identity_net(4);
        let dec = identity_net(4);
        let score = anomaly_score(&enc, &dec, &[0.5, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn squared_norm_of_residual() {
        // encoder maps to zero, decoder stays zero: score = ||x||^2
        let mut enc = identity_net(2);
        for v in enc.layers_mut()[0].w.data_mut() {
            *v = 0.0;
        }
        let dec = identity_net(2);
        let score = anomaly_score(&enc, &dec, &[1.0, 0.0]).unwrap();
        assert_eq!(score, 1.0);
    }

    #[test]
    fn score_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Mlp::init(&[6, 4, 3], &mut rng).unwrap();
        let dec = Mlp::init(&[3, 4, 6], &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let score = anomaly_score(&enc, &dec, &x).unwrap();
        let z = enc.forward_only(&Mat::from_rows(&[x.clone()])).unwrap();
        let xhat = dec.forward_only(&z).unwrap();
        let oracle: f64 = x
            .iter()
            .zip(xhat.row(0))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((score - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn degenerate_batch_covariance_is_ridge_identity() {
        let latents = Mat::from_rows(&[vec![1.0, -2.0], vec![1.0, -2.0], vec![1.0, -2.0]]);
        let stats = batch_stats(&latents).unwrap();
        assert_eq!(stats.mean, vec![1.0, -2.0]);
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { COVARIANCE_RIDGE } else { 0.0 };
                assert!((stats.cov.get(a, b) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn antipodal_batch_has_closed_form_covariance() {
        let v = [0.8, -0.6];
        let latents = Mat::from_rows(&[v.to_vec(), v.iter().map(|x| -x).collect()]);
        let stats = batch_stats(&latents).unwrap();
        assert!(stats.mean.iter().all(|m| m.abs() < 1e-15));
        for a in 0..2 {
            for b in 0..2 {
                let expect = v[a] * v[b] + if a == b { COVARIANCE_RIDGE } else { 0.0 };
                assert!((stats.cov.get(a, b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_stats_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 32;
        let r = 5;
        let mut latents = Mat::zeros(m, r);
        for v in latents.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let stats = batch_stats(&latents).unwrap();
        for a in 0..r {
            let mean_a: f64 = (0..m).map(|i| latents.get(i, a)).sum::<f64>() / m as f64;
            assert!((stats.mean[a] - mean_a).abs() < 1e-10);
            for b in 0..r {
                let mean_b: f64 = (0..m).map(|i| latents.get(i, b)).sum::<f64>() / m as f64;
                let cov: f64 = (0..m)
                    .map(|i| (latents.get(i, a) - mean_a) * (latents.get(i, b) - mean_b))
                    .sum::<f64>()
                    / m as f64;
                let expect = cov + if a == b { COVARIANCE_RIDGE } else { 0.0 };
                assert!((stats.cov.get(a, b) - expect).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn kld_zero_at_standard_normal() {
        let r = 4;
        let mut cov = Mat::zeros(r, r);
        for i in 0..r {
            cov.set(i, i, 1.0);
        }
        let stats = BatchGaussianStats { mean: vec![0.0; r], cov };
        assert!(kld_to_standard(&stats).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn kld_closed_form_unit_shifted() {
        let stats = BatchGaussianStats {
            mean: vec![1.0],
            cov: Mat::from_vec(1, 1, vec![1.0]),
        };
        let kld = kld_to_standard(&stats).unwrap();
        assert!((kld - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn kld_matches_eigendecomposition_oracle() {
        use nalgebra::{DMatrix, DVector};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = 5;
        for _ in 0..20 {
            // random SPD: A A^T + I scaled
            let a = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
            let spd = &a * a.transpose() + DMatrix::identity(r, r) * 0.5;
            let mean = DVector::from_fn(r, |_, _| rng.gen_range(-1.0..1.0));

            let eig = spd.clone().symmetric_eigen();
            let log_det: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
            let inv = spd.clone().try_inverse().unwrap();
            let trace_inv = inv.trace();
            let quad = (mean.transpose() * &inv * &mean)[(0, 0)];
            let oracle = 0.5 * (log_det + trace_inv + quad - r as f64);

            let mut cov = Mat::zeros(r, r);
            for i in 0..r {
                for j in 0..r {
                    cov.set(i, j, spd[(i, j)]);
                }
            }
            let stats = BatchGaussianStats { mean: mean.iter().cloned().collect(), cov };
            let got = kld_to_standard(&stats).unwrap();
            assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn kld_nonnegative_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let r = rng.gen_range(1..6);
            let mut a = Mat::zeros(r, r);
            for v in a.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut cov = a.matmul_nt(&a);
            for i in 0..r {
                cov.set(i, i, cov.get(i, i) + 0.1);
            }
            let mean: Vec<f64> = (0..r).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let kld = kld_to_standard(&BatchGaussianStats { mean, cov }).unwrap();
            assert!(kld >= -1e-12, "kld {kld}");
        }
    }

    #[test]
    fn kld_latent_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut latents = Mat::zeros(8, 3);
        for v in latents.data_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
        let (_, grads) = kld_with_latent_grads(&latents).unwrap();
        let h = 1e-6;
        for n in 0..8 {
            for d in 0..3 {
                let orig = latents.get(n, d);
                latents.set(n, d, orig + h);
                let up = kld_to_standard(&batch_stats(&latents).unwrap()).unwrap();
                latents.set(n, d, orig - h);
                let dn = kld_to_standard(&batch_stats(&latents).unwrap()).unwrap();
                latents.set(n, d, orig);
                let numeric = (up - dn) / (2.0 * h);
                let analytic = grads.get(n, d);
                assert!(
                    (analytic - numeric).abs() <= 1e-5 * numeric.abs().max(1.0),
                    "({n},{d}): {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn j_kr_is_sum_of_its_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = Mlp::init(&[5, 4, 2], &mut rng).unwrap();
        let gen = Mlp::init(&[2, 4, 5], &mut rng).unwrap();
        let mut batch = Mat::zeros(6, 5);
        for v in batch.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let total = j_kr(&enc, &gen, &batch).unwrap();
        let latents = enc.forward_only(&batch).unwrap();
        let kld = kld_to_standard(&batch_stats(&latents).unwrap()).unwrap();
        let recon = gen.forward_only(&latents).unwrap();
        let recon_sum: f64 = (0..6)
            .map(|r| {
                batch
                    .row(r)
                    .iter()
                    .zip(recon.row(r))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        assert!((total - (kld + recon_sum)).abs() <= 1e-10 * total.abs().max(1.0));
    }

    #[test]
    fn zero_generator_reconstruction_term_is_input_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = Mlp::init(&[3, 2], &mut rng).unwrap();
        let mut gen = Mlp::init(&[2, 3], &mut rng).unwrap();
        for v in gen.layers_mut()[0].w.data_mut() {
            *v = 0.0;
        }
        let batch = Mat::from_rows(&[vec![1.0, 2.0, -1.0], vec![0.5, 0.0, 0.0]]);
        let total = j_kr(&enc, &gen, &batch).unwrap();
        let latents = enc.forward_only(&batch).unwrap();
        let kld = kld_to_standard(&batch_stats(&latents).unwrap()).unwrap();
        let norms: f64 = 1.0 + 4.0 + 1.0 + 0.25;
        assert!((total - kld - norms).abs() < 1e-10);
    }

    #[test]
    fn threshold_descending_index_rule() {
        let scores: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(select_threshold(&scores, 0.2).unwrap(), 9.0);
    }

    #[test]
    fn threshold_clamps_to_maximum() {
        let scores = vec![3.0, 1.0, 2.0];
        // rho*M < 1 -> clamp to index 1 -> maximum
        assert_eq!(select_threshold(&scores, 0.01).unwrap(), 3.0);
    }

    #[test]
    fn threshold_table_index_at_batch_512() {
        let scores: Vec<f64> = (1..=512).map(|v| v as f64).collect();
        // floor(0.2 * 512) = 102, descending -> 512 - 102 + 1 = 411
        assert_eq!(select_threshold(&scores, 0.2).unwrap(), 411.0);
    }

    #[test]
    fn threshold_brackets_batch_false_positive_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let m = 512;
            let scores: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..100.0)).collect();
            let phi = select_threshold(&scores, 0.2).unwrap();
            let above = scores.iter().filter(|s| **s > phi).count();
            let at_or_above = scores.iter().filter(|s| **s >= phi).count();
            let idx = (0.2 * m as f64).floor() as usize;
            assert!(above <= idx - 1);
            assert!(at_or_above >= idx);
        }
    }

    #[test]
    fn smooth_rate_at_threshold_is_half() {
        assert!((smooth_rate(&[5.0, 5.0, 5.0], 5.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_rate_saturates() {
        assert!((smooth_rate(&[1e9], 0.0) - 1.0).abs() < 1e-12);
        assert!(smooth_rate(&[-1e9], 0.0) < 1e-12);
    }

    #[test]
    fn sigmoid_ln3_values() {
        let phi = 2.0;
        let scores = [phi + 3f64.ln(), phi - 3f64.ln()];
        // sigmoid(ln 3) = 0.75, sigmoid(-ln 3) = 0.25
        assert!((smooth_rate(&scores, phi) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn smooth_rate_monotone_decreasing_in_phi() {
        let scores = [0.3, 1.2, 5.0, -2.0];
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let phi = -5.0 + i as f64 * 0.3;
            let r = smooth_rate(&scores, phi);
            assert!(r < last);
            assert!(r > 0.0 && r < 1.0);
            last = r;
        }
    }

    #[test]
    fn j_np_zero_for_identical_batches() {
        let scores = [1.0, 2.0, 3.0];
        assert_eq!(j_np(&scores, &scores, 1.5), 0.0);
    }

    #[test]
    fn j_np_saturates_to_one() {
        let v = j_np(&[1e6, 2e6], &[-1e6, -2e6], 0.0);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn j_np_hand_case() {
        let v = j_np(&[2.0, 3.0], &[0.0, 1.0], 1.5);
        let oracle = (sigmoid(0.5) + sigmoid(1.5)) / 2.0 - (sigmoid(-1.5) + sigmoid(-0.5)) / 2.0;
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.4400).abs() < 1e-3);
    }

    #[test]
    fn j_auc_zero_for_identical_batches() {
        let scores = [0.4, 1.9, -0.3, 2.2];
        let v = j_auc(&scores, &scores);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn j_auc_saturation_analysis() {
        // anomalies far above the normals: TPR_n -> 1, FPR_n -> sigmoid(0) avg
        let norm = [5.0, 5.0, 5.0];
        let anom = [5e8, 5e8, 5e8];
        let v = j_auc(&anom, &norm);
        assert!((v - 0.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn j_auc_matches_double_loop_oracle() {
        let anom = [1.0, 2.5, -0.5];
        let norm = [0.3, 1.8, 0.9];
        let v = j_auc(&anom, &norm);
        let m = 3.0;
        let mut oracle = 0.0;
        for &phi in &norm {
            let tpr: f64 = anom.iter().map(|s| sigmoid(s - phi)).sum::<f64>() / m;
            let fpr: f64 = norm.iter().map(|s| sigmoid(s - phi)).sum::<f64>() / m;
            oracle += (tpr - fpr) / m;
        }
        assert!((v - oracle).abs() <= 1e-12);
    }

    #[test]
    fn j_auc_shift_invariant() {
        let anom = [1.0, 4.0, 2.0];
        let norm = [0.5, 3.0, 1.5];
        let a = j_auc(&anom, &norm);
        let shift = 17.25;
        let anom2: Vec<f64> = anom.iter().map(|v| v + shift).collect();
        let norm2: Vec<f64> = norm.iter().map(|v| v + shift).collect();
        let b = j_auc(&anom2, &norm2);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let (_, d_anom, d_norm) = j_np_with_score_grads(&[2.0, 3.0], &[0.0, 1.0], 1.5);
        let h = 1e-6;
        for (i, g) in d_anom.iter().enumerate() {
            let mut up = vec![2.0, 3.0];
            up[i] += h;
            let mut dn = vec![2.0, 3.0];
            dn[i] -= h;
            let numeric = (j_np(&up, &[0.0, 1.0], 1.5) - j_np(&dn, &[0.0, 1.0], 1.5)) / (2.0 * h);
            assert!((g - numeric).abs() < 1e-8);
        }
        for (i, g) in d_norm.iter().enumerate() {
            let mut up = vec![0.0, 1.0];
            up[i] += h;
            let mut dn = vec![0.0, 1.0];
            dn[i] -= h;
            let numeric = (j_np(&[2.0, 3.0], &up, 1.5) - j_np(&[2.0, 3.0], &dn, 1.5)) / (2.0 * h);
            assert!((g - numeric).abs() < 1e-8);
        }

        let anom = [1.0, 2.5, -0.5];
        let norm = [0.3, 1.8, 0.9];
        let (_, d_anom, d_norm) = j_auc_with_score_grads(&anom, &norm);
        for i in 0..3 {
            let mut up = anom.to_vec();
            up[i] += h;
            let mut dn = anom.to_vec();
            dn[i] -= h;
            let numeric = (j_auc(&up, &norm) - j_auc(&dn, &norm)) / (2.0 * h);
            assert!((d_anom[i] - numeric).abs() < 1e-8);

            let mut up = norm.to_vec();
            up[i] += h;
            let mut dn = norm.to_vec();
            dn[i] -= h;
            let numeric = (j_auc(&anom, &up) - j_auc(&anom, &dn)) / (2.0 * h);
            assert!((d_norm[i] - numeric).abs() < 1e-8, "{} vs {}", d_norm[i], numeric);
        }
    }
}
