//! A small fully connected network whose output layer is split into the
//! three heads of a set predictor: cardinality parameters, `M` element slots
//! (state plus existence logit) and, optionally, logits over the `M!`
//! permutations of the slots.
//!
//! The network is generic over the scalar type so that gradient checks run in
//! `f64` while long training runs can use `f32`. Losses are always evaluated
//! in `f64` on the split [`NetworkOutput`].

use std::fmt::Debug;

use ndarray::{Array1, Array2, Axis, NdFloat};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::assignment::factorial;
use crate::card_dist::{CardinalityHead, CardinalityKind};
use crate::config::RunConfig;
use crate::error::{contract, Error, Result};

/// Scalar types the network can be instantiated with.
pub trait Real: NdFloat + Debug + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Layout of the output layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayout {
    pub card_kind: CardinalityKind,
    /// Number of element slots `M` (also the largest representable cardinality).
    pub slots: usize,
    /// Per-slot state width, excluding the existence logit.
    pub state_dim: usize,
    /// Whether a permutation head over `M!` classes is present.
    pub perm_head: bool,
}

impl HeadLayout {
    pub fn card_params(&self) -> usize {
        self.card_kind.param_count(self.slots)
    }

    pub fn perm_count(&self) -> usize {
        if self.perm_head {
            factorial(self.slots)
        } else {
            0
        }
    }

    pub fn output_width(&self) -> usize {
        self.card_params() + self.slots * (self.state_dim + 1) + self.perm_count()
    }

    /// Splits a raw output row into its heads.
    pub fn split(&self, raw: &[f64]) -> Result<NetworkOutput> {
        if raw.len() != self.output_width() {
            return Err(contract(format!(
                "output row has {} values, layout needs {}",
                raw.len(),
                self.output_width()
            )));
        }
        let a = self.card_params();
        let sw = self.state_dim + 1;
        let slots = (0..self.slots)
            .map(|s| {
                let base = a + s * sw;
                SlotOutput {
                    state: raw[base..base + self.state_dim].to_vec(),
                    existence_logit: raw[base + self.state_dim],
                }
            })
            .collect();
        let perm_logits = self
            .perm_head
            .then(|| raw[a + self.slots * sw..].to_vec());
        Ok(NetworkOutput {
            card_kind: self.card_kind,
            alpha: raw[..a].to_vec(),
            slots,
            perm_logits,
        })
    }
}

/// One output slot: a candidate set element.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotOutput {
    pub state: Vec<f64>,
    pub existence_logit: f64,
}

/// The split output of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput {
    pub card_kind: CardinalityKind,
    pub alpha: Vec<f64>,
    pub slots: Vec<SlotOutput>,
    pub perm_logits: Option<Vec<f64>>,
}

impl NetworkOutput {
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn cardinality(&self) -> Result<CardinalityHead> {
        CardinalityHead::new(self.card_kind, self.alpha.clone(), self.slots.len())
    }

    /// Reorders slots: slot `k` of the result is slot `order[k]` of `self`.
    /// The permutation head is dropped since its classes refer to slot order.
    pub fn reorder_slots(&self, order: &[usize]) -> NetworkOutput {
        NetworkOutput {
            card_kind: self.card_kind,
            alpha: self.alpha.clone(),
            slots: order.iter().map(|&i| self.slots[i].clone()).collect(),
            perm_logits: None,
        }
    }
}

/// Gradient of a scalar loss with respect to each part of a [`NetworkOutput`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrad {
    pub alpha: Vec<f64>,
    pub state: Vec<Vec<f64>>,
    pub existence: Vec<f64>,
    pub perm: Option<Vec<f64>>,
}

impl OutputGrad {
    pub fn zeros_like(out: &NetworkOutput) -> Self {
        OutputGrad {
            alpha: vec![0.0; out.alpha.len()],
            state: out.slots.iter().map(|s| vec![0.0; s.state.len()]).collect(),
            existence: vec![0.0; out.slots.len()],
            perm: out.perm_logits.as_ref().map(|p| vec![0.0; p.len()]),
        }
    }

    /// Flattens into the raw output-row order of [`HeadLayout`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        for (st, e) in self.state.iter().zip(&self.existence) {
            v.extend_from_slice(st);
            v.push(*e);
        }
        if let Some(p) = &self.perm {
            v.extend_from_slice(p);
        }
        v
    }

    pub fn scale(&mut self, k: f64) {
        self.alpha.iter_mut().for_each(|g| *g *= k);
        self.state.iter_mut().flatten().for_each(|g| *g *= k);
        self.existence.iter_mut().for_each(|g| *g *= k);
        if let Some(p) = &mut self.perm {
            p.iter_mut().for_each(|g| *g *= k);
        }
    }
}

/// Fully connected network with rectifier hidden units and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    /// `weights[l]` has shape `(widths[l], widths[l + 1])`.
    weights: Vec<Array2<T>>,
    biases: Vec<Array1<T>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    /// `activations[0]` is the input batch, the last entry the output.
    pub activations: Vec<Array2<T>>,
    masks: Vec<Option<Array2<T>>>,
}

impl<T> ForwardPass<T> {
    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("at least input and output")
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(contract(format!("invalid layer widths {widths:?}")));
    }
    Ok(())
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new_glorot<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let weights = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Array2::from_shape_simple_fn((w[0], w[1]), || {
                    T::of_f64(rng.random_range(-limit..limit))
                })
            })
            .collect();
        Ok(Self::with_zero_biases(widths, weights))
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let weights = widths
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        Ok(Self::with_zero_biases(widths, weights))
    }

    fn with_zero_biases(widths: &[usize], weights: Vec<Array2<T>>) -> Self {
        let biases = widths[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Mlp {
            widths: widths.to_vec(),
            weights,
            biases,
        }
    }

    /// Builds a network from row-major `(fan_in, fan_out)` weight arrays.
    pub fn from_parts(widths: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(contract("layer count does not match widths"));
        }
        let mut ws = Vec::with_capacity(layers);
        let mut bs = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fi, fo) = (widths[l], widths[l + 1]);
            if weights[l].len() != fi * fo || biases[l].len() != fo {
                return Err(contract(format!("layer {l} parameter shape mismatch")));
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(contract(format!("layer {l} has non-finite parameters")));
            }
            ws.push(
                Array2::from_shape_vec((fi, fo), weights[l].iter().map(|&v| T::of_f64(v)).collect())
                    .map_err(|e| contract(e.to_string()))?,
            );
            bs.push(biases[l].iter().map(|&v| T::of_f64(v)).collect());
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            weights: ws,
            biases: bs,
        })
    }

    /// Row-major weight arrays and bias vectors, widened to `f64`.
    pub fn to_parts(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let w = self
            .weights
            .iter()
            .map(|w| w.iter().map(|v| v.as_f64()).collect())
            .collect();
        let b = self
            .biases
            .iter()
            .map(|b| b.iter().map(|v| v.as_f64()).collect())
            .collect();
        (w, b)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<T>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over a batch (one instance per row) without dropout.
    pub fn forward_batch(&self, x: &Array2<T>) -> Result<ForwardPass<T>> {
        self.forward_impl::<rand_chacha::ChaCha8Rng>(x, None)
    }

    /// Forward pass with inverted dropout on hidden activations.
    pub fn forward_train<R: Rng>(&self, x: &Array2<T>, dropout: f64, rng: &mut R) -> Result<ForwardPass<T>> {
        if dropout > 0.0 {
            self.forward_impl(x, Some((dropout, rng)))
        } else {
            self.forward_batch(x)
        }
    }

    fn forward_impl<R: Rng>(&self, x: &Array2<T>, mut dropout: Option<(f64, &mut R)>) -> Result<ForwardPass<T>> {
        if x.ncols() != self.input_width() {
            return Err(contract(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut masks = Vec::with_capacity(layers);
        activations.push(x.clone());
        for l in 0..layers {
            let mut z = activations[l].dot(&self.weights[l]);
            z += &self.biases[l];
            if l + 1 < layers {
                z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
                let mask = match dropout.as_mut() {
                    Some((p, rng)) => {
                        let keep = T::of_f64(1.0 / (1.0 - *p));
                        let m = Array2::from_shape_simple_fn(z.raw_dim(), || {
                            if rng.random::<f64>() < *p {
                                T::zero()
                            } else {
                                keep
                            }
                        });
                        z *= &m;
                        Some(m)
                    }
                    None => None,
                };
                masks.push(mask);
            } else {
                masks.push(None);
            }
            activations.push(z);
        }
        Ok(ForwardPass { activations, masks })
    }

    /// Forward pass for a single `f64` input, returning the raw output row.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = Array2::from_shape_vec((1, x.len()), x.iter().map(|&v| T::of_f64(v)).collect())
            .map_err(|e| contract(e.to_string()))?;
        let pass = self.forward_batch(&row)?;
        Ok(pass.output().row(0).iter().map(|v| v.as_f64()).collect())
    }

    /// Back-propagates `grad_out` (d loss / d output, one row per instance).
    pub fn backward(&self, pass: &ForwardPass<T>, grad_out: &Array2<T>) -> Result<MlpGrads<T>> {
        if grad_out.dim() != pass.output().dim() {
            return Err(contract(format!(
                "upstream gradient shape {:?} does not match output {:?}",
                grad_out.dim(),
                pass.output().dim()
            )));
        }
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            gw.push(pass.activations[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l].t());
                let act = &pass.activations[l];
                match &pass.masks[l - 1] {
                    Some(m) => ndarray::Zip::from(&mut prev).and(act).and(m).for_each(|d, &a, &k| {
                        *d = if a > T::zero() { *d * k } else { T::zero() }
                    }),
                    None => ndarray::Zip::from(&mut prev).and(act).for_each(|d, &a| {
                        if a <= T::zero() {
                            *d = T::zero()
                        }
                    }),
                }
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(MlpGrads {
            weights: gw,
            biases: gb,
        })
    }
}

impl<T: Real> MlpGrads<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        MlpGrads {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn matches(&self, net: &Mlp<T>) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.dim() == b.dim())
    }
}

/// Optimizer hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr: f64,
    pub momentum: f64,
    /// L2 coefficient; the update adds `2 * weight_decay * w` to the gradient.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Multiplicative learning-rate decay applied after each epoch.
    pub lr_decay: f64,
    /// Inverted-dropout rate on hidden layers (0 disables).
    pub dropout: f64,
    /// Re-draw the stored order of ground-truth elements every time an
    /// instance is visited.
    pub shuffle_elements: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            lr_decay: 0.95,
            dropout: 0.0,
            shuffle_elements: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr decay must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// SGD with momentum and L2 weight decay.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    velocity: MlpGrads<T>,
}

impl<T: Real> Sgd<T> {
    pub fn new(net: &Mlp<T>) -> Self {
        Sgd {
            velocity: MlpGrads::zeros_like(net),
        }
    }

    /// `v <- momentum v + (g + 2 decay w)`, `w <- w - lr v`.
    pub fn step(&mut self, net: &mut Mlp<T>, grads: &MlpGrads<T>, lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
        if !grads.matches(net) || !self.velocity.matches(net) {
            return Err(contract("gradient shapes do not match network parameters"));
        }
        let lr = T::of_f64(lr);
        let mu = T::of_f64(momentum);
        let decay = T::of_f64(2.0 * weight_decay);
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&mut self.velocity.weights[l])
                .and(&grads.weights[l])
                .for_each(|w, v, &g| {
                    *v = mu * *v + g + decay * *w;
                    *w = *w - lr * *v;
                });
            ndarray::Zip::from(&mut net.biases[l])
                .and(&mut self.velocity.biases[l])
                .and(&grads.biases[l])
                .for_each(|w, v, &g| {
                    *v = mu * *v + g + decay * *w;
                    *w = *w - lr * *v;
                });
        }
        Ok(())
    }
}

/// One-shot SGD update without momentum state.
pub fn sgd_step<T: Real>(net: &mut Mlp<T>, grads: &MlpGrads<T>, lr: f64, weight_decay: f64) -> Result<()> {
    Sgd::new(net).step(net, grads, lr, 0.0, weight_decay)
}

/// A network together with the layout of its output heads.
#[derive(Clone, Debug, PartialEq)]
pub struct SetNetwork<T> {
    pub mlp: Mlp<T>,
    pub layout: HeadLayout,
}

impl<T: Real> SetNetwork<T> {
    /// `hidden` are the hidden-layer widths; input and output widths follow
    /// from `input_width` and the layout.
    pub fn new<R: Rng>(input_width: usize, hidden: &[usize], layout: HeadLayout, rng: &mut R) -> Result<Self> {
        let mut widths = vec![input_width];
        widths.extend_from_slice(hidden);
        widths.push(layout.output_width());
        Ok(SetNetwork {
            mlp: Mlp::new_glorot(&widths, rng)?,
            layout,
        })
    }

    pub fn from_mlp(mlp: Mlp<T>, layout: HeadLayout) -> Result<Self> {
        if mlp.output_width() != layout.output_width() {
            return Err(contract(format!(
                "network emits {} values but the head layout needs {}",
                mlp.output_width(),
                layout.output_width()
            )));
        }
        Ok(SetNetwork { mlp, layout })
    }

    pub fn forward(&self, x: &[f64]) -> Result<NetworkOutput> {
        self.layout.split(&self.mlp.forward_one(x)?)
    }

    /// Forward pass over many inputs; returns the cache and split outputs.
    pub fn forward_many(&self, xs: &[&[f64]]) -> Result<(ForwardPass<T>, Vec<NetworkOutput>)> {
        let batch = batch_matrix::<T>(xs, self.mlp.input_width())?;
        let pass = self.mlp.forward_batch(&batch)?;
        let outs = split_rows(&self.layout, pass.output())?;
        Ok((pass, outs))
    }
}

/// Stacks inputs into a `(batch, width)` matrix.
pub fn batch_matrix<T: Real>(xs: &[&[f64]], width: usize) -> Result<Array2<T>> {
    let mut data = Vec::with_capacity(xs.len() * width);
    for x in xs {
        if x.len() != width {
            return Err(contract(format!(
                "input has {} features, network expects {width}",
                x.len()
            )));
        }
        data.extend(x.iter().map(|&v| T::of_f64(v)));
    }
    Array2::from_shape_vec((xs.len(), width), data).map_err(|e| contract(e.to_string()))
}

pub fn split_rows<T: Real>(layout: &HeadLayout, out: &Array2<T>) -> Result<Vec<NetworkOutput>> {
    out.rows()
        .into_iter()
        .map(|r| {
            let raw: Vec<f64> = r.iter().map(|v| v.as_f64()).collect();
            layout.split(&raw)
        })
        .collect()
}

/// Compares back-propagated parameter gradients against central finite
/// differences. `loss` maps a raw output row to `(loss, d loss / d output)`.
/// Returns the largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`
/// over all parameters.
pub fn grad_check<F>(net: &Mlp<f64>, x: &[f64], eps: f64, loss: F) -> Result<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| contract(e.to_string()))?;
    let pass = net.forward_batch(&row)?;
    let out: Vec<f64> = pass.output().row(0).to_vec();
    let (_, g) = loss(&out);
    let g = Array2::from_shape_vec((1, g.len()), g).map_err(|e| contract(e.to_string()))?;
    let analytic = net.backward(&pass, &g)?;

    let eval = |n: &Mlp<f64>| -> Result<f64> { Ok(loss(&n.forward_one(x)?).0) };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for l in 0..net.weights.len() {
        for idx in 0..net.weights[l].len() {
            let (r, c) = (idx / net.weights[l].ncols(), idx % net.weights[l].ncols());
            let orig = probe.weights[l][[r, c]];
            probe.weights[l][[r, c]] = orig + eps;
            let up = eval(&probe)?;
            probe.weights[l][[r, c]] = orig - eps;
            let down = eval(&probe)?;
            probe.weights[l][[r, c]] = orig;
            worst = worst.max(rel(analytic.weights[l][[r, c]], (up - down) / (2.0 * eps)));
        }
        for i in 0..net.biases[l].len() {
            let orig = probe.biases[l][i];
            probe.biases[l][i] = orig + eps;
            let up = eval(&probe)?;
            probe.biases[l][i] = orig - eps;
            let down = eval(&probe)?;
            probe.biases[l][i] = orig;
            worst = worst.max(rel(analytic.biases[l][i], (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized network state. Weights are row-major `(fan_in, fan_out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub scenario: u8,
    pub layer_widths: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub config: RunConfig,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn capture<T: Real>(net: &SetNetwork<T>, config: &RunConfig) -> Self {
        let (weights, biases) = net.mlp.to_parts();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            scenario: config.scenario.number(),
            layer_widths: net.mlp.widths().to_vec(),
            weights,
            biases,
            config: config.clone(),
            config_hash: config.hash(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Format {
                    offset: 0,
                    msg: format!("unsupported checkpoint version {v}"),
                })
            }
            None => {
                return Err(Error::Format {
                    offset: 0,
                    msg: "checkpoint has no version field".into(),
                })
            }
        }
        let ckpt: Checkpoint = serde_json::from_value(value)?;
        ckpt.config.validate()?;
        Ok(ckpt)
    }

    pub fn network<T: Real>(&self) -> Result<SetNetwork<T>> {
        let mlp = Mlp::from_parts(&self.layer_widths, &self.weights, &self.biases)?;
        SetNetwork::from_mlp(mlp, self.config.head_layout())
    }
}
