//! Feed-forward classifier with a distance-regularized training objective.
//!
//! The network is an encoder (tanh layers producing a representation)
//! followed by a classifier head whose last layer emits logits. The loss is
//! source cross-entropy plus `β` times a domain distance between the source
//! and target representation batches; [`backward`] returns exact gradients
//! of that total for every parameter.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distances::{d_mixture, grad_mixture, DistanceConfig, DomainBatch, MixtureSpec};
use crate::error::{Error, Result};
use crate::numerics::{softmax, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer `act(W x + b)`, `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Mat::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn forward(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.rows(), self.output_dim());
        for (i, row) in x.row_iter().enumerate() {
            let o = out.row_mut(i);
            for (k, w) in self.weights.row_iter().enumerate() {
                let z = self.bias[k] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                o[k] = match self.activation {
                    Activation::Identity => z,
                    Activation::Tanh => z.tanh(),
                };
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input.
    fn backward(&self, input: &Mat, output: &Mat, mut d_out: Mat, grad: &mut Dense) -> Mat {
        if self.activation == Activation::Tanh {
            for (d, y) in d_out.as_mut_slice().iter_mut().zip(output.as_slice()) {
                *d *= 1.0 - y * y;
            }
        }
        let mut d_in = Mat::zeros(input.rows(), self.input_dim());
        for (i, dz) in d_out.row_iter().enumerate() {
            let x = input.row(i);
            let dx = d_in.row_mut(i);
            for (k, &dzk) in dz.iter().enumerate() {
                if dzk == 0.0 {
                    continue;
                }
                grad.bias[k] += dzk;
                let w = self.weights.row(k);
                let gw = grad.weights.row_mut(k);
                for j in 0..x.len() {
                    gw[j] += dzk * x[j];
                    dx[j] += dzk * w[j];
                }
            }
        }
        d_in
    }
}

/// Layer sizes for [`ModelParams::init`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub rep_dim: usize,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    /// Two tanh encoder layers into a 32-dim representation, one hidden head layer.
    pub fn standard(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            encoder_hidden: vec![32],
            rep_dim: 32,
            head_hidden: vec![16],
            num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: Vec<Dense>,
    pub head: Vec<Dense>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        if arch.input_dim == 0 || arch.rep_dim == 0 || arch.num_classes < 2 {
            return Err(Error::Config("architecture needs positive sizes and at least 2 classes".into()));
        }
        let mut layer = |i: usize, o: usize, act| {
            let limit = (6.0 / (i + o) as f64).sqrt();
            let mut d = Dense::zeros(i, o, act);
            d.weights
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-limit..limit));
            d
        };
        let mut encoder = Vec::new();
        let mut prev = arch.input_dim;
        for &h in arch.encoder_hidden.iter().chain(std::iter::once(&arch.rep_dim)) {
            encoder.push(layer(prev, h, Activation::Tanh));
            prev = h;
        }
        let mut head = Vec::new();
        for &h in &arch.head_hidden {
            head.push(layer(prev, h, Activation::Tanh));
            prev = h;
        }
        head.push(layer(prev, arch.num_classes, Activation::Identity));
        Self::from_layers(encoder, head)
    }

    pub fn from_layers(encoder: Vec<Dense>, head: Vec<Dense>) -> Result<Self> {
        if encoder.is_empty() || head.is_empty() {
            return Err(Error::Config("encoder and head each need at least one layer".into()));
        }
        let layers: Vec<&Dense> = encoder.iter().chain(&head).collect();
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    found: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: l.output_dim(),
                    found: l.bias.len(),
                });
            }
        }
        Ok(Self { encoder, head })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.encoder.last().map(Dense::output_dim).unwrap_or(0)
    }

    pub fn num_classes(&self) -> usize {
        self.head.last().map(Dense::output_dim).unwrap_or(0)
    }

    pub fn zeros_like(&self) -> Self {
        let z = |l: &Dense| Dense::zeros(l.input_dim(), l.output_dim(), l.activation);
        Self {
            encoder: self.encoder.iter().map(z).collect(),
            head: self.head.iter().map(z).collect(),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(&self.head)
    }

    /// Weight and bias slices in layer order.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.head.iter_mut())
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

const MAGIC: &[u8; 4] = b"DDNP";
const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

impl ModelParams {
    /// Binary layout, all little-endian: magic `DDNP`, u32 version, u32
    /// encoder layer count, u32 head layer count, then `(in, out, activation)`
    /// u32 triples per layer, then per layer the `out × in` weights row-major
    /// followed by `out` biases as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, FORMAT_VERSION)?;
        put_u32(&mut w, self.encoder.len() as u32)?;
        put_u32(&mut w, self.head.len() as u32)?;
        for l in self.layers() {
            put_u32(&mut w, l.input_dim() as u32)?;
            put_u32(&mut w, l.output_dim() as u32)?;
            put_u32(&mut w, l.activation.code())?;
        }
        for s in self.slices() {
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| Error::Parse {
            line: 0,
            message: msg.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a parameter file"));
        }
        if get_u32(&mut r)? != FORMAT_VERSION {
            return Err(bad("unsupported parameter file version"));
        }
        let n_enc = get_u32(&mut r)? as usize;
        let n_head = get_u32(&mut r)? as usize;
        if n_enc + n_head > 1024 {
            return Err(bad("implausible layer count"));
        }
        let mut layers = Vec::with_capacity(n_enc + n_head);
        for _ in 0..n_enc + n_head {
            let i = get_u32(&mut r)? as usize;
            let o = get_u32(&mut r)? as usize;
            let act = Activation::from_code(get_u32(&mut r)?).ok_or_else(|| bad("unknown activation"))?;
            layers.push(Dense::zeros(i, o, act));
        }
        let head = layers.split_off(n_enc);
        let mut params = Self::from_layers(layers, head)?;
        let mut buf = [0u8; 8];
        for s in params.slices_mut() {
            for v in s.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Mat,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(inputs: Mat, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.rows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub representations: Mat,
    pub probabilities: Mat,
}

/// Activations of every layer, input first.
struct Trace {
    acts: Vec<Mat>,
    enc_len: usize,
}

impl Trace {
    fn representations(&self) -> &Mat {
        &self.acts[self.enc_len]
    }
}

fn check_input(params: &ModelParams, inputs: &Mat) -> Result<()> {
    if inputs.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            found: inputs.cols(),
        });
    }
    Ok(())
}

fn run_layers<'a>(layers: impl Iterator<Item = &'a Dense>, input: Mat, acts: &mut Vec<Mat>) {
    acts.push(input);
    for l in layers {
        let next = l.forward(acts.last().expect("input pushed"));
        acts.push(next);
    }
}

fn encode_trace(params: &ModelParams, inputs: &Mat) -> Trace {
    let mut acts = Vec::with_capacity(params.encoder.len() + 1);
    run_layers(params.encoder.iter(), inputs.clone(), &mut acts);
    Trace {
        enc_len: params.encoder.len(),
        acts,
    }
}

fn full_trace(params: &ModelParams, inputs: &Mat) -> Trace {
    let mut t = encode_trace(params, inputs);
    let rep = t.acts.pop().expect("encoder output");
    run_layers(params.head.iter(), rep, &mut t.acts);
    t
}

fn row_softmax(logits: &Mat) -> Mat {
    let mut p = Mat::zeros(logits.rows(), logits.cols());
    for (i, row) in logits.row_iter().enumerate() {
        p.row_mut(i).copy_from_slice(&softmax(row));
    }
    p
}

/// Encoder representations only.
pub fn encode(params: &ModelParams, inputs: &Mat) -> Result<Mat> {
    check_input(params, inputs)?;
    Ok(encode_trace(params, inputs).acts.pop().expect("encoder output"))
}

pub fn forward(params: &ModelParams, inputs: &Mat) -> Result<Forward> {
    check_input(params, inputs)?;
    let mut trace = full_trace(params, inputs);
    let logits = trace.acts.pop().expect("logits");
    Ok(Forward {
        representations: trace.acts.swap_remove(trace.enc_len),
        probabilities: row_softmax(&logits),
    })
}

/// Most probable class per row.
pub fn predict(params: &ModelParams, inputs: &Mat) -> Result<Vec<usize>> {
    let f = forward(params, inputs)?;
    Ok(f.probabilities
        .row_iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect())
}

const LOG_CLAMP: f64 = 1e-12;

/// Mean cross-entropy with the log clamped at `1e-12`.
pub fn xe_loss(probs: &Mat, labels: &[usize]) -> f64 {
    let n = labels.len().max(1) as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[(i, y)].max(LOG_CLAMP).ln())
        .sum::<f64>()
        / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub xe: f64,
    pub distance: f64,
    pub beta: f64,
    pub mixture: String,
}

fn check_batches(params: &ModelParams, src: &LabeledBatch, tgt: &Mat) -> Result<()> {
    check_input(params, &src.inputs)?;
    check_input(params, tgt)?;
    if src.len() != tgt.rows() {
        return Err(Error::Config(format!(
            "source and target batches must have equal size ({} vs {})",
            src.len(),
            tgt.rows()
        )));
    }
    if let Some(&bad) = src.labels.iter().find(|&&l| l >= params.num_classes()) {
        return Err(Error::Config(format!("label {bad} outside model classes")));
    }
    Ok(())
}

pub fn distancenet_loss(
    params: &ModelParams,
    src: &LabeledBatch,
    tgt_inputs: &Mat,
    mixture: &MixtureSpec,
    beta: f64,
    cfg: &DistanceConfig,
) -> Result<LossBreakdown> {
    check_batches(params, src, tgt_inputs)?;
    let f = forward(params, &src.inputs)?;
    let xe = xe_loss(&f.probabilities, &src.labels);
    let hs = DomainBatch::new("source", f.representations)?;
    let ht = DomainBatch::new("target", encode(params, tgt_inputs)?)?;
    let distance = d_mixture(&hs, &ht, mixture, cfg)?;
    Ok(LossBreakdown {
        total: xe + beta * distance,
        xe,
        distance,
        beta,
        mixture: mixture.to_string(),
    })
}

/// Loss breakdown and the gradient of `total` for every parameter.
pub fn backward(
    params: &ModelParams,
    src: &LabeledBatch,
    tgt_inputs: &Mat,
    mixture: &MixtureSpec,
    beta: f64,
    cfg: &DistanceConfig,
) -> Result<(LossBreakdown, ModelParams)> {
    check_batches(params, src, tgt_inputs)?;
    let src_trace = full_trace(params, &src.inputs);
    let tgt_trace = encode_trace(params, tgt_inputs);
    let logits = src_trace.acts.last().expect("logits");
    let probs = row_softmax(logits);
    let xe = xe_loss(&probs, &src.labels);

    let hs = DomainBatch::new("source", src_trace.representations().clone())?;
    let ht = DomainBatch::new("target", tgt_trace.representations().clone())?;
    let distance = d_mixture(&hs, &ht, mixture, cfg)?;

    let mut grads = params.zeros_like();

    // Softmax + cross-entropy: d/dlogits = (p - onehot) / n.
    let n = src.len() as f64;
    let mut d = probs;
    for (i, &y) in src.labels.iter().enumerate() {
        d[(i, y)] -= 1.0;
    }
    d.as_mut_slice().iter_mut().for_each(|v| *v /= n);

    let enc_len = params.encoder.len();
    for (li, layer) in params.head.iter().enumerate().rev() {
        let a = enc_len + li;
        d = layer.backward(&src_trace.acts[a], &src_trace.acts[a + 1], d, &mut grads.head[li]);
    }
    let mut d_src = d;
    let mut d_tgt = Mat::zeros(tgt_inputs.rows(), params.rep_dim());

    if beta != 0.0 {
        let g = grad_mixture(&hs, &ht, mixture, cfg)?;
        for (x, y) in d_src.as_mut_slice().iter_mut().zip(g.source.as_slice()) {
            *x += beta * y;
        }
        for (x, y) in d_tgt.as_mut_slice().iter_mut().zip(g.target.as_slice()) {
            *x = beta * y;
        }
    }

    for (li, layer) in params.encoder.iter().enumerate().rev() {
        d_src = layer.backward(&src_trace.acts[li], &src_trace.acts[li + 1], d_src, &mut grads.encoder[li]);
        if beta != 0.0 {
            d_tgt = layer.backward(&tgt_trace.acts[li], &tgt_trace.acts[li + 1], d_tgt, &mut grads.encoder[li]);
        }
    }

    let breakdown = LossBreakdown {
        total: xe + beta * distance,
        xe,
        distance,
        beta,
        mixture: mixture.to_string(),
    };
    Ok((breakdown, grads))
}

/// Momentum SGD: `v ← μ v + g; θ ← θ − η v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step_slices(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        let gtotal: usize = grads.iter().map(|g| g.len()).sum();
        if total != gtotal || params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: total,
                found: gtotal,
            });
        }
        if self.velocity.len() != total {
            self.velocity = vec![0.0; total];
        }
        let mut v = self.velocity.iter_mut();
        for (p, g) in params.into_iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    found: g.len(),
                });
            }
            for (pi, gi) in p.iter_mut().zip(g) {
                let vi = v.next().expect("velocity sized to params");
                *vi = self.momentum * *vi + gi;
                *pi -= self.learning_rate * *vi;
            }
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        self.step_slices(params.slices_mut(), grads.slices())
    }
}

/// Single stateless momentum step; `velocity` is updated in place.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], learning_rate: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            found: grads.len(),
        });
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= learning_rate * *v;
    }
    Ok(())
}
