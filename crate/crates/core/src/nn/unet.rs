//! A small 2D U-Net: two 3×3 conv + ReLU per level, 2×2 max-pool on the way
//! down, nearest 2× upsampling and skip concatenation on the way up, and a 1×1
//! convolution with sigmoid output. No normalization layers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::*;
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub base_channels: usize,
    /// Number of pooling levels.
    pub depth: usize,
    pub out_channels: usize,
}

impl Default for UNetSpec {
    fn default() -> Self {
        UNetSpec::new(8, 3)
    }
}

impl UNetSpec {
    /// Single-channel in, single-channel out.
    pub fn new(base_channels: usize, depth: usize) -> Self {
        UNetSpec {
            in_channels: 1,
            base_channels,
            depth,
            out_channels: 1,
        }
    }

    /// Feature channels at `level` (the bottleneck is level `depth`).
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0
            || self.base_channels == 0
            || self.in_channels == 0
            || self.out_channels == 0
        {
            return Err(Error::Shape {
                layer: "spec".into(),
                detail: format!("depth, channel counts must be positive: {self:?}"),
            });
        }
        Ok(())
    }

    /// Input planes must halve cleanly `depth` times.
    pub fn check_input(&self, rows: usize, cols: usize) -> Result<()> {
        let m = 1usize << self.depth;
        if rows == 0 || cols == 0 || !rows.is_multiple_of(m) || !cols.is_multiple_of(m) {
            return Err(Error::Shape {
                layer: "input".into(),
                detail: format!(
                    "{rows}x{cols} is not divisible by {m} (depth {})",
                    self.depth
                ),
            });
        }
        Ok(())
    }

    /// Convolutions in execution order as (name, c_in, c_out, kernel).
    fn convs(&self) -> Vec<(String, usize, usize, usize)> {
        let mut convs = Vec::new();
        let mut c_prev = self.in_channels;
        for l in 0..self.depth {
            let c = self.channels(l);
            convs.push((format!("enc{l}.conv1"), c_prev, c, 3));
            convs.push((format!("enc{l}.conv2"), c, c, 3));
            c_prev = c;
        }
        let cb = self.channels(self.depth);
        convs.push(("bottleneck.conv1".into(), c_prev, cb, 3));
        convs.push(("bottleneck.conv2".into(), cb, cb, 3));
        for l in (0..self.depth).rev() {
            let c = self.channels(l);
            convs.push((format!("dec{l}.conv1"), self.channels(l + 1) + c, c, 3));
            convs.push((format!("dec{l}.conv2"), c, c, 3));
        }
        convs.push(("head".into(), self.channels(0), self.out_channels, 1));
        convs
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (name, ci, co, k) in self.convs() {
            out.push((format!("{name}.weight"), alloc::vec![co, ci, k, k]));
            out.push((format!("{name}.bias"), alloc::vec![co]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named parameter list. Also used to carry gradients, which share the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T> {
    pub params: Vec<Param<T>>,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn zeros(spec: &UNetSpec) -> Self {
        ModelWeights {
            params: spec
                .layout()
                .into_iter()
                .map(|(name, shape)| Param {
                    data: alloc::vec![T::zero(); shape.iter().product()],
                    name,
                    shape,
                })
                .collect(),
        }
    }

    /// Weights uniform in ±sqrt(1 / fan_in), biases zero.
    pub fn init(spec: &UNetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(spec);
        for p in w.params.iter_mut().filter(|p| p.shape.len() == 4) {
            let fan_in = (p.shape[1] * p.shape[2] * p.shape[3]) as f64;
            let a = libm_sqrt(1.0 / fan_in);
            for v in &mut p.data {
                *v = T::from_f64(rng.random_range(-a..=a));
            }
        }
        w
    }

    /// Checks names, order, and shapes against the spec's layout.
    pub fn validate(&self, spec: &UNetSpec) -> Result<()> {
        spec.validate()?;
        let layout = spec.layout();
        if layout.len() != self.params.len() {
            return Err(Error::Shape {
                layer: "weights".into(),
                detail: format!(
                    "expected {} parameters, found {}",
                    layout.len(),
                    self.params.len()
                ),
            });
        }
        for ((name, shape), p) in layout.iter().zip(&self.params) {
            if *name != p.name || *shape != p.shape {
                return Err(Error::Shape {
                    layer: p.name.clone(),
                    detail: format!(
                        "expected `{name}` {shape:?}, found `{}` {:?}",
                        p.name, p.shape
                    ),
                });
            }
            if p.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape {
                    layer: p.name.clone(),
                    detail: format!(
                        "data length {} does not match shape {shape:?}",
                        p.data.len()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Elementwise `self += other * scale`. Layouts must match.
    pub fn add_scaled(&mut self, other: &ModelWeights<T>, scale: T) {
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            for (a, &b) in p.data.iter_mut().zip(&q.data) {
                *a += b * scale;
            }
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &T> {
        self.params.iter().flat_map(|p| p.data.iter())
    }

    /// Order-sensitive fingerprint of every parameter bit pattern.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.iter_values() {
            h ^= v.as_f64().to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

fn libm_sqrt(x: f64) -> f64 {
    num_traits::Float::sqrt(x)
}

struct BlockCache<T> {
    input: Tensor<T>,
    mid: Tensor<T>,
    out: Tensor<T>,
}

/// Activations saved by [`forward`] for [`backward`].
pub struct ForwardCache<T> {
    spec: UNetSpec,
    weights_tag: u64,
    input_dims: [usize; 4],
    enc: Vec<BlockCache<T>>,
    pools: Vec<Vec<u32>>,
    bottleneck: BlockCache<T>,
    /// Decoder blocks from deepest to shallowest.
    dec: Vec<BlockCache<T>>,
    output: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    pub fn into_output(self) -> Tensor<T> {
        self.output
    }
}

fn conv<T: Scalar>(w: &ModelWeights<T>, idx: usize, x: &Tensor<T>) -> Tensor<T> {
    let weight = &w.params[2 * idx];
    let bias = &w.params[2 * idx + 1];
    conv_forward(
        x,
        &weight.data,
        &bias.data,
        weight.shape[0],
        weight.shape[2],
    )
}

fn block_forward<T: Scalar>(w: &ModelWeights<T>, idx: usize, input: Tensor<T>) -> BlockCache<T> {
    let mut mid = conv(w, idx, &input);
    relu_inplace(&mut mid);
    let mut out = conv(w, idx + 1, &mid);
    relu_inplace(&mut out);
    BlockCache { input, mid, out }
}

fn block_backward<T: Scalar>(
    w: &ModelWeights<T>,
    idx: usize,
    cache: &BlockCache<T>,
    mut grad: Tensor<T>,
    grads: &mut ModelWeights<T>,
    need_input: bool,
) -> Option<Tensor<T>> {
    relu_backward_inplace(&cache.out, &mut grad);
    let g2 = conv_backward(&cache.mid, &w.params[2 * (idx + 1)].data, &grad, 3, true);
    store(grads, idx + 1, g2.weight, g2.bias);
    let mut gmid = g2.input.expect("requested");
    relu_backward_inplace(&cache.mid, &mut gmid);
    let g1 = conv_backward(&cache.input, &w.params[2 * idx].data, &gmid, 3, need_input);
    store(grads, idx, g1.weight, g1.bias);
    g1.input
}

fn store<T: Scalar>(grads: &mut ModelWeights<T>, idx: usize, weight: Vec<T>, bias: Vec<T>) {
    grads.params[2 * idx].data = weight;
    grads.params[2 * idx + 1].data = bias;
}

/// Runs the network; the output holds per-pixel foreground probabilities.
pub fn forward<T: Scalar>(
    spec: &UNetSpec,
    weights: &ModelWeights<T>,
    input: &Tensor<T>,
) -> Result<ForwardCache<T>> {
    weights.validate(spec)?;
    let [_, c, h, w] = input.dims();
    if c != spec.in_channels {
        return Err(Error::Shape {
            layer: "enc0.conv1".into(),
            detail: format!("expected {} input channels, found {c}", spec.in_channels),
        });
    }
    spec.check_input(h, w)?;

    let depth = spec.depth;
    let mut enc = Vec::with_capacity(depth);
    let mut pools = Vec::with_capacity(depth);
    let mut x = input.clone();
    for l in 0..depth {
        let block = block_forward(weights, 2 * l, x);
        let (pooled, arg) = maxpool2_forward(&block.out);
        enc.push(block);
        pools.push(arg);
        x = pooled;
    }
    let bottleneck = block_forward(weights, 2 * depth, x);

    let mut dec: Vec<BlockCache<T>> = Vec::with_capacity(depth);
    for (j, l) in (0..depth).rev().enumerate() {
        let below = dec.last().map_or(&bottleneck.out, |b| &b.out);
        let up = upsample2_forward(below);
        let cat = concat_channels(&up, &enc[l].out);
        dec.push(block_forward(weights, 2 * depth + 2 + 2 * j, cat));
    }
    let head = 4 * depth + 2;
    let mut output = conv(weights, head, &dec.last().expect("depth >= 1").out);
    sigmoid_inplace(&mut output);

    Ok(ForwardCache {
        spec: *spec,
        weights_tag: weights.fingerprint(),
        input_dims: input.dims(),
        enc,
        pools,
        bottleneck,
        dec,
        output,
    })
}

/// Back-propagates `grad_output` (gradient with respect to the output
/// probabilities) and returns one gradient per parameter, in layout order.
pub fn backward<T: Scalar>(
    spec: &UNetSpec,
    weights: &ModelWeights<T>,
    cache: &ForwardCache<T>,
    grad_output: &Tensor<T>,
) -> Result<ModelWeights<T>> {
    weights.validate(spec)?;
    if cache.spec != *spec {
        return Err(Error::StaleCache(format!(
            "cache built for {:?}, backward called with {spec:?}",
            cache.spec
        )));
    }
    if cache.weights_tag != weights.fingerprint() {
        return Err(Error::StaleCache(
            "weights changed since the forward pass".into(),
        ));
    }
    if grad_output.dims() != cache.output.dims() {
        return Err(Error::StaleCache(format!(
            "grad_output dims {:?} differ from cached output {:?} (input {:?})",
            grad_output.dims(),
            cache.output.dims(),
            cache.input_dims
        )));
    }

    let depth = spec.depth;
    let mut grads = ModelWeights::zeros(spec);
    let head = 4 * depth + 2;
    let g_logits = sigmoid_backward(&cache.output, grad_output);
    let head_in = &cache.dec.last().expect("depth >= 1").out;
    let gh = conv_backward(head_in, &weights.params[2 * head].data, &g_logits, 1, true);
    store(&mut grads, head, gh.weight, gh.bias);

    let mut g = gh.input.expect("requested");
    let mut skip_grads: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
    // Walk the decoder from shallowest (last computed) to deepest.
    for j in (0..depth).rev() {
        let l = depth - 1 - j;
        let gin = block_backward(
            weights,
            2 * depth + 2 + 2 * j,
            &cache.dec[j],
            g,
            &mut grads,
            true,
        )
        .expect("requested");
        let (g_up, g_skip) = split_channels(&gin, spec.channels(l + 1));
        skip_grads[l] = Some(g_skip);
        g = upsample2_backward(&g_up);
    }
    g = block_backward(weights, 2 * depth, &cache.bottleneck, g, &mut grads, true)
        .expect("requested");
    for l in (0..depth).rev() {
        let mut g_out = maxpool2_backward(&g, &cache.pools[l], cache.enc[l].out.dims());
        if let Some(skip) = skip_grads[l].take() {
            for (a, &b) in g_out.data_mut().iter_mut().zip(skip.data()) {
                *a += b;
            }
        }
        match block_backward(weights, 2 * l, &cache.enc[l], g_out, &mut grads, l > 0) {
            Some(next) => g = next,
            None => break,
        }
    }
    Ok(grads)
}
