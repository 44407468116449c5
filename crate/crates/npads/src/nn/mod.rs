//! Minimal dense feedforward-network engine: row-major `f64` matrices,
//! forward pass with cached pre-activations, exact backpropagation, and
//! Glorot initialization. Everything is deterministic given the inputs;
//! no global state.

mod adam;

pub use adam::{adam_step, AdamState};

use crate::error::{Error, Result};
use rand::Rng;
use std::io::{Read, Write};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        gemm(self.rows, self.cols, other.cols, self, false, other, false)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dims");
        gemm(self.cols, self.rows, other.cols, self, true, other, false)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dims");
        gemm(self.rows, self.cols, other.rows, self, false, other, true)
    }
}

/// Dense gemm over row-major storage; transposition is expressed through
/// strides so no operand is copied. Summation order is a fixed function of
/// the shapes, which keeps results bit-reproducible.
fn gemm(m: usize, k: usize, n: usize, a: &Mat, ta: bool, b: &Mat, tb: bool) -> Mat {
    let mut out = Mat::zeros(m, n);
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// Per-layer activation. Hidden layers use ReLU, output layers are linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation.
    fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            other => Err(Error::Data(format!("unknown activation tag {other}"))),
        }
    }
}

/// One dense layer: `y = act(x W^T + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

/// A feedforward network; plays encoder, decoder, or generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Pre-activations and layer inputs saved by [`Mlp::forward`] for the
/// matching [`Mlp::backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Mat>,
    /// Pre-activation of each layer.
    pre: Vec<Mat>,
}

/// Gradients of a scalar loss with respect to every parameter of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Mat,
    pub db: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: Mat::zeros(l.out_dim(), l.in_dim()),
                    db: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Elementwise sum, for accumulating contributions from several loss terms.
    pub fn add(&mut self, other: &MlpGrads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.dw.data_mut().iter_mut().zip(b.dw.data()) {
                *x += y;
            }
            for (x, y) in a.db.iter_mut().zip(&b.db) {
                *x += y;
            }
        }
    }

    /// Flip the sign of every gradient (gradient ascent via a descent optimizer).
    pub fn negate(&mut self) {
        for l in &mut self.layers {
            for x in l.dw.data_mut() {
                *x = -*x;
            }
            for x in &mut l.db {
                *x = -*x;
            }
        }
    }
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dim(format!(
                    "layer output {} does not chain into next layer input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        if layers.is_empty() {
            return Err(Error::Dim("network needs at least one layer".into()));
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data().len() + l.b.len())
            .sum()
    }

    /// Glorot-uniform weights, zero biases: ReLU on hidden layers, linear output.
    pub fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Dim("need at least input and output dims".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
            let act = if i + 1 == dims.len() - 1 {
                Activation::Linear
            } else {
                Activation::Relu
            };
            layers.push(Layer { w, b: vec![0.0; fan_out], act });
        }
        Mlp::new(layers)
    }

    /// Forward pass on a batch (rows are samples). Returns the output and the
    /// cache needed by [`Mlp::backward`].
    pub fn forward(&self, batch: &Mat) -> Result<(Mat, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Dim(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut cur = batch.clone();
        for layer in &self.layers {
            let mut pre = cur.matmul_nt(&layer.w);
            for r in 0..pre.rows() {
                let row = pre.row_mut(r);
                for (v, b) in row.iter_mut().zip(&layer.b) {
                    *v += b;
                }
            }
            let mut out = pre.clone();
            for v in out.data_mut() {
                *v = layer.act.apply(*v);
            }
            inputs.push(cur);
            pres.push(pre);
            cur = out;
        }
        Ok((cur, ForwardCache { inputs, pre: pres }))
    }

    /// Output without keeping a cache; for scoring paths that do not train.
    pub fn forward_only(&self, batch: &Mat) -> Result<Mat> {
        Ok(self.forward(batch)?.0)
    }

    /// Exact backpropagation. `grad_output` is dLoss/dOutput for the batch of
    /// the matching `forward` call; returns parameter gradients and
    /// dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Mat) -> Result<(MlpGrads, Mat)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Dim(
                "cache does not match network (wrong layer count)".into(),
            ));
        }
        let batch_rows = cache.inputs[0].rows();
        if grad_output.rows() != batch_rows || grad_output.cols() != self.output_dim() {
            return Err(Error::Dim(format!(
                "grad_output is {}x{}, expected {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                batch_rows,
                self.output_dim()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if cache.inputs[i].cols() != layer.in_dim() || cache.pre[i].cols() != layer.out_dim() {
                return Err(Error::Dim(format!(
                    "cache is stale: layer {i} shapes do not match the network"
                )));
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            // delta <- dL/d(pre) via the activation derivative
            let pre = &cache.pre[i];
            for (d, p) in delta.data_mut().iter_mut().zip(pre.data()) {
                *d *= layer.act.grad(*p);
            }
            let dw = delta.matmul_tn(&cache.inputs[i]);
            let mut db = vec![0.0; layer.out_dim()];
            for r in 0..delta.rows() {
                for (acc, v) in db.iter_mut().zip(delta.row(r)) {
                    *acc += v;
                }
            }
            let dinput = delta.matmul(&layer.w);
            grads.push(LayerGrads { dw, db });
            delta = dinput;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    /// Versioned binary block: magic "NPADS", version, layer count, then per
    /// layer {in, out, activation tag, W, b} as little-endian 64-bit floats.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"NPADS")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
            w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
            w.write_all(&[layer.act.tag()])?;
            for v in layer.w.data() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in &layer.b {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != b"NPADS" {
            return Err(Error::Data("bad network block magic".into()));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::Data(format!("unsupported network block version {version}")));
        }
        let n_layers = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = read_u32(r)? as usize;
            let out_dim = read_u32(r)? as usize;
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let act = Activation::from_tag(tag[0])?;
            let mut w = Mat::zeros(out_dim, in_dim);
            for v in w.data_mut() {
                *v = read_f64(r)?;
            }
            let mut b = vec![0.0; out_dim];
            for v in &mut b {
                *v = read_f64(r)?;
            }
            layers.push(Layer { w, b, act });
        }
        Mlp::new(layers)
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
