//! Fully-connected detector: a ReLU backbone, a linear head and a sigmoid.
//!
//! The backbone ends in a ReLU, so the feature vector fed to the head is
//! elementwise non-negative. Gradients are exact and computed by hand.

pub mod checkpoint;

use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::synthgen::{rng_from_seed, ImageSample, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    Fp32,
    Fp64,
}

/// Floating-point element type of a detector.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    const DTYPE: Dtype;
    const BYTES: usize;
    fn lift(v: f64) -> Self;
    fn widen(self) -> f64;
    fn put_le(self, buf: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::Fp32;
    const BYTES: usize = 4;
    fn lift(v: f64) -> Self {
        v as f32
    }
    fn widen(self) -> f64 {
        f64::from(self)
    }
    fn put_le(self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::Fp64;
    const BYTES: usize = 8;
    fn lift(v: f64) -> Self {
        v
    }
    fn widen(self) -> f64 {
        self
    }
    fn put_le(self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Anything the detector can be trained or evaluated on.
pub trait Labeled {
    fn input(&self) -> &[f64];
    fn label(&self) -> Label;
}

impl Labeled for ImageSample {
    fn input(&self) -> &[f64] {
        &self.pixels
    }
    fn label(&self) -> Label {
        self.label
    }
}

/// A bare feature vector with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub label: Label,
}

impl Labeled for Example {
    fn input(&self) -> &[f64] {
        &self.input
    }
    fn label(&self) -> Label {
        self.label
    }
}

/// Detector parameters. `weights[l]` is row-major `dims[l+1] x dims[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T = f64> {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
    pub head_w: Vec<T>,
    pub head_b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T = f64> {
    pub input: Vec<T>,
    /// Pre-activation of each backbone layer.
    pub pre: Vec<Vec<T>>,
    /// Post-ReLU activation of each backbone layer; the last one is the feature `h`.
    pub post: Vec<Vec<T>>,
    pub logit: T,
    pub probability: T,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn features(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

/// Gradients with the same shapes as [`MlpParams`], plus the loss they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f64> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
    pub head_w: Vec<T>,
    pub head_b: T,
    pub loss: T,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
            head_w: vec![T::zero(); params.head_w.len()],
            head_b: T::zero(),
            loss: T::zero(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        self.head_w.iter_mut().for_each(|v| *v = T::zero());
        self.head_b = T::zero();
        self.loss = T::zero();
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|v| *v = *v * factor);
        }
        self.head_w.iter_mut().for_each(|v| *v = *v * factor);
        self.head_b = self.head_b * factor;
        self.loss = self.loss * factor;
    }

    /// First non-finite coordinate, named by tensor.
    pub fn find_non_finite(&self) -> Option<(String, usize)> {
        for (l, w) in self.weights.iter().enumerate() {
            if let Some(i) = w.iter().position(|v| !v.is_finite()) {
                return Some((format!("backbone.weight[{l}]"), i));
            }
        }
        for (l, b) in self.biases.iter().enumerate() {
            if let Some(i) = b.iter().position(|v| !v.is_finite()) {
                return Some((format!("backbone.bias[{l}]"), i));
            }
        }
        if let Some(i) = self.head_w.iter().position(|v| !v.is_finite()) {
            return Some(("head.weight".into(), i));
        }
        if !self.head_b.is_finite() {
            return Some(("head.bias".into(), 0));
        }
        None
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Head dot product, summed in ascending index order.
#[inline]
/// Default layer dims for `side`-pixel images: one hidden ReLU layer of 128
/// units, which is also the feature layer read by the head.
pub fn default_dims(side: usize) -> Vec<usize> {
    vec![side * side, 128]
}

pub fn head_dot<T: Scalar>(w: &[T], h: &[T]) -> T {
    w.iter().zip(h).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// `σ(z)` using the branch that never exponentiates a positive number.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy evaluated from the logit:
/// `max(z,0) − z·y + ln(1 + e^{−|z|})`.
pub fn bce_loss<T: Scalar>(logit: T, label: Label) -> T {
    let y = T::lift(label.as_f64());
    logit.max(T::zero()) - logit * y + (-logit.abs()).exp().ln_1p()
}

impl<T: Scalar> MlpParams<T> {
    /// Glorot-uniform weights, zero biases; the head uses the same scheme with fan-out 1.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(invalid(format!(
                "need at least input and feature dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(invalid(format!("zero-width layer in {layer_dims:?}")));
        }
        let mut rng = rng_from_seed(seed);
        let mut glorot = |fan_in: usize, fan_out: usize, n: usize| -> Vec<T> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n)
                .map(|_| T::lift(rng.random_range(-limit..limit)))
                .collect()
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_dims.windows(2) {
            weights.push(glorot(pair[0], pair[1], pair[0] * pair[1]));
            biases.push(vec![T::zero(); pair[1]]);
        }
        let d = *layer_dims.last().expect("len >= 2");
        let head_w = glorot(d, 1, d);
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            head_w,
            head_b: T::zero(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty dims")
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    /// Shape consistency and finiteness.
    pub fn check(&self) -> Result<()> {
        let dims = &self.layer_dims;
        if dims.len() < 2 || self.weights.len() != dims.len() - 1 || self.biases.len() != dims.len() - 1
        {
            return Err(Error::ContractViolation("layer count mismatch".into()));
        }
        for (l, pair) in dims.windows(2).enumerate() {
            if self.weights[l].len() != pair[0] * pair[1] || self.biases[l].len() != pair[1] {
                return Err(Error::ContractViolation(format!("layer {l} shape mismatch")));
            }
        }
        if self.head_w.len() != self.feature_dim() {
            return Err(Error::ContractViolation("head width mismatch".into()));
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .chain(&self.head_w)
            .all(|v| v.is_finite())
            && self.head_b.is_finite();
        if !finite {
            return Err(Error::ContractViolation("non-finite parameter".into()));
        }
        Ok(())
    }

    fn check_input(&self, pixels: &[f64]) -> Result<()> {
        if pixels.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: pixels.len(),
            });
        }
        Ok(())
    }

    /// Backbone features `h` only.
    pub fn features(&self, pixels: &[f64]) -> Result<Vec<T>> {
        self.check_input(pixels)?;
        let mut a: Vec<T> = pixels.iter().map(|&p| T::lift(p)).collect();
        for (l, pair) in self.layer_dims.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let w = &self.weights[l];
            a = (0..n_out)
                .map(|i| {
                    let z = dot(&w[i * n_in..(i + 1) * n_in], &a) + self.biases[l][i];
                    z.max(T::zero())
                })
                .collect();
        }
        Ok(a)
    }

    pub fn head_logit(&self, h: &[T]) -> T {
        head_dot(&self.head_w, h) + self.head_b
    }

    pub fn logit(&self, pixels: &[f64]) -> Result<T> {
        Ok(self.head_logit(&self.features(pixels)?))
    }

    pub fn forward(&self, pixels: &[f64]) -> Result<ForwardTrace<T>> {
        self.check_input(pixels)?;
        let mut trace = ForwardTrace {
            input: Vec::new(),
            pre: Vec::new(),
            post: Vec::new(),
            logit: T::zero(),
            probability: T::zero(),
        };
        self.forward_into(pixels, &mut trace);
        Ok(trace)
    }

    /// Forward pass into a reusable trace. `pixels` must have the input width.
    pub(crate) fn forward_into(&self, pixels: &[f64], trace: &mut ForwardTrace<T>) {
        let n_layers = self.weights.len();
        trace.pre.resize_with(n_layers, Vec::new);
        trace.post.resize_with(n_layers, Vec::new);
        trace.input.clear();
        trace.input.extend(pixels.iter().map(|&p| T::lift(p)));
        for (l, pair) in self.layer_dims.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let (done, rest) = trace.post.split_at_mut(l);
            let a_prev: &[T] = if l == 0 { &trace.input } else { &done[l - 1] };
            let w = &self.weights[l];
            let pre = &mut trace.pre[l];
            pre.clear();
            pre.extend(
                (0..n_out).map(|i| dot(&w[i * n_in..(i + 1) * n_in], a_prev) + self.biases[l][i]),
            );
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().map(|&z| z.max(T::zero())));
        }
        trace.logit = self.head_logit(trace.features());
        trace.probability = sigmoid(trace.logit);
    }

    /// Adds the gradient of one sample's loss into `grads` (loss included).
    pub(crate) fn backward_accumulate(
        &self,
        trace: &ForwardTrace<T>,
        label: Label,
        grads: &mut Gradients<T>,
        delta: &mut Vec<T>,
        delta_prev: &mut Vec<T>,
    ) {
        let y = T::lift(label.as_f64());
        let dlogit = trace.probability - y;
        grads.loss = grads.loss + bce_loss(trace.logit, label);
        let h = trace.features();
        for (g, &hi) in grads.head_w.iter_mut().zip(h) {
            *g = *g + dlogit * hi;
        }
        grads.head_b = grads.head_b + dlogit;

        let n_layers = self.weights.len();
        delta.clear();
        delta.extend(
            self.head_w
                .iter()
                .zip(&trace.pre[n_layers - 1])
                .map(|(&w, &z)| if z > T::zero() { dlogit * w } else { T::zero() }),
        );
        for l in (0..n_layers).rev() {
            let n_in = self.layer_dims[l];
            let a_prev: &[T] = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for (i, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                gb[i] = gb[i] + d;
                let row = &mut gw[i * n_in..(i + 1) * n_in];
                for (g, &a) in row.iter_mut().zip(a_prev) {
                    *g = *g + d * a;
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                delta_prev.clear();
                delta_prev.resize(n_in, T::zero());
                for (i, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    for (dp, &wv) in delta_prev.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                        *dp = *dp + d * wv;
                    }
                }
                for (dp, &z) in delta_prev.iter_mut().zip(&trace.pre[l - 1]) {
                    if z <= T::zero() {
                        *dp = T::zero();
                    }
                }
                std::mem::swap(delta, delta_prev);
            }
        }
    }

    pub fn backward(&self, trace: &ForwardTrace<T>, label: Label) -> Gradients<T> {
        let mut grads = Gradients::zeros_like(self);
        let (mut d, mut dp) = (Vec::new(), Vec::new());
        self.backward_accumulate(trace, label, &mut grads, &mut d, &mut dp);
        grads
    }

    /// In-place `θ ← θ − lr·g`. Fails before touching anything if `g` is not finite.
    pub fn apply_sgd(&mut self, grads: &Gradients<T>, lr: T, update_backbone: bool) -> Result<()> {
        if !(lr > T::zero()) {
            return Err(invalid("learning rate must be > 0"));
        }
        if let Some((tensor, index)) = grads.find_non_finite() {
            return Err(Error::NonFinite { tensor, index });
        }
        if update_backbone {
            for (p, g) in self.weights.iter_mut().zip(&grads.weights) {
                p.iter_mut().zip(g).for_each(|(p, &g)| *p = *p - lr * g);
            }
            for (p, g) in self.biases.iter_mut().zip(&grads.biases) {
                p.iter_mut().zip(g).for_each(|(p, &g)| *p = *p - lr * g);
            }
        }
        self.head_w
            .iter_mut()
            .zip(&grads.head_w)
            .for_each(|(p, &g)| *p = *p - lr * g);
        self.head_b = self.head_b - lr * grads.head_b;
        Ok(())
    }

    pub fn sgd_step(&self, grads: &Gradients<T>, lr: T) -> Result<Self> {
        let mut next = self.clone();
        next.apply_sgd(grads, lr, true)?;
        Ok(next)
    }

    /// Mean-gradient SGD step over a batch; returns the updated params and the
    /// mean loss before the step.
    pub fn train_batch<S: Labeled>(&self, samples: &[S], lr: T) -> Result<(Self, T)> {
        if samples.is_empty() {
            return Err(invalid("empty batch"));
        }
        let grads = self.batch_gradients(samples)?;
        let loss = grads.loss;
        Ok((self.sgd_step(&grads, lr)?, loss))
    }

    /// Mean gradient and mean loss over `samples`.
    pub fn batch_gradients<S: Labeled>(&self, samples: &[S]) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self);
        let mut trace = ForwardTrace {
            input: Vec::new(),
            pre: Vec::new(),
            post: Vec::new(),
            logit: T::zero(),
            probability: T::zero(),
        };
        let (mut d, mut dp) = (Vec::new(), Vec::new());
        for s in samples {
            self.check_input(s.input())?;
            self.forward_into(s.input(), &mut trace);
            self.backward_accumulate(&trace, s.label(), &mut grads, &mut d, &mut dp);
        }
        grads.scale(T::one() / T::lift(samples.len() as f64));
        Ok(grads)
    }

    pub fn head_min(&self) -> T {
        self.head_w.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    /// Converts every parameter to another element type.
    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|&x| U::lift(x.widen())).collect();
        MlpParams {
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.iter().map(conv).collect(),
            biases: self.biases.iter().map(conv).collect(),
            head_w: conv(&self.head_w),
            head_b: U::lift(self.head_b.widen()),
        }
    }
}
