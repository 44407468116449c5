//! Adam optimizer with L2 weight decay folded into the gradient.

use super::{Mat, Mlp, MlpGrads};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second moment accumulators for one network, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<(Mat, Vec<f64>)>,
    v: Vec<(Mat, Vec<f64>)>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| (Mat::zeros(l.out_dim(), l.in_dim()), vec![0.0; l.out_dim()]))
                .collect::<Vec<_>>()
        };
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update, in place. The weight-decay term `l2 * param` is added to
/// the raw gradient before the moment updates. Descent only: to ascend an
/// objective, negate its gradient first (`MlpGrads::negate`).
pub fn adam_step(
    net: &mut Mlp,
    grads: &MlpGrads,
    state: &mut AdamState,
    lr: f64,
    l2: f64,
) -> Result<()> {
    if grads.layers.len() != net.layers().len() {
        return Err(Error::Dim("gradient/net layer count mismatch".into()));
    }
    for (i, lg) in grads.layers.iter().enumerate() {
        if !lg.dw.is_finite() || lg.db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in layer {i} ({}x{})",
                lg.dw.rows(),
                lg.dw.cols()
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);

    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        let lg = &grads.layers[i];
        let (mw, mb) = &mut state.m[i];
        let (vw, vb) = &mut state.v[i];

        for (((p, g), m), v) in layer
            .w
            .data_mut()
            .iter_mut()
            .zip(lg.dw.data())
            .zip(mw.data_mut())
            .zip(vw.data_mut())
        {
            let g = g + l2 * *p;
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
        for (((p, g), m), v) in layer.b.iter_mut().zip(&lg.db).zip(mb).zip(vb) {
            let g = g + l2 * *p;
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}
