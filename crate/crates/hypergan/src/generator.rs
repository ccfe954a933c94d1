//! Positive-guided negative hyperedge generator.
//!
//! Encoder side: the one-hot vector of a positive hyperedge is treated as a
//! single-channel signal of length |V| and pushed through three
//! conv(3)/avg-pool(2)/LeakyReLU blocks, then globally averaged per channel
//! and projected to a latent q.
//!
//! Decoder side: Gaussian noise z is projected to a channels×L0 signal
//! (L0 = ceil(|V|/4)) and refined by three conv(3) blocks, each followed by
//! adaptive instance normalization and LeakyReLU, with nearest-neighbor ×2
//! upsampling between the conv layers. The positive latent q enters solely
//! through the AdaIN styles — learned affine maps produce each layer's
//! per-channel scale (through softplus, keeping it positive) and shift — so
//! zeroing the style affines makes the decoder independent of the guiding
//! positive. A final affine map to length |V| plus sigmoid yields the node
//! membership vector c; the top-n entries form the discrete negative.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value};
use crate::encoder::glorot;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sampler::SizeDistribution;

const ADAIN_EPS: f64 = 1e-5;
const SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernels: Matrix,
    pub bias: Matrix,
}

impl ConvLayer {
    fn init<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        ConvLayer { kernels: glorot(c_out, c_in * 3, rng), bias: Matrix::zeros(1, c_out) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StyledConvLayer {
    pub conv: ConvLayer,
    pub w_scale: Matrix,
    pub b_scale: Matrix,
    pub w_shift: Matrix,
    pub b_shift: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub enc_convs: Vec<ConvLayer>,
    pub enc_proj_w: Matrix,
    pub enc_proj_b: Matrix,
    pub dec_in_w: Matrix,
    pub dec_in_b: Matrix,
    pub dec_layers: Vec<StyledConvLayer>,
    pub dec_out_w: Matrix,
    pub dec_out_b: Matrix,
    pub num_nodes: usize,
    pub channels: usize,
    pub noise_dim: usize,
    pub latent_dim: usize,
    /// Decoder base length, ceil(|V|/4); two ×2 upsamplings restore ~|V|.
    pub base_len: usize,
}

impl GeneratorParams {
    pub fn init<R: Rng>(
        num_nodes: usize,
        latent_dim: usize,
        channels: usize,
        noise_dim: usize,
        rng: &mut R,
    ) -> Self {
        let base_len = num_nodes.div_ceil(4);
        let enc_convs = vec![
            ConvLayer::init(1, channels, rng),
            ConvLayer::init(channels, channels, rng),
            ConvLayer::init(channels, channels, rng),
        ];
        let dec_layers = (0..3)
            .map(|_| StyledConvLayer {
                conv: ConvLayer::init(channels, channels, rng),
                w_scale: glorot(latent_dim, channels, rng),
                b_scale: Matrix::zeros(1, channels),
                w_shift: glorot(latent_dim, channels, rng),
                b_shift: Matrix::zeros(1, channels),
            })
            .collect();
        GeneratorParams {
            enc_convs,
            enc_proj_w: glorot(channels, latent_dim, rng),
            enc_proj_b: Matrix::zeros(1, latent_dim),
            dec_in_w: glorot(noise_dim, channels * base_len, rng),
            dec_in_b: Matrix::zeros(1, channels * base_len),
            dec_layers,
            dec_out_w: glorot(channels * base_len * 4, num_nodes, rng),
            dec_out_b: Matrix::zeros(1, num_nodes),
            num_nodes,
            channels,
            noise_dim,
            latent_dim,
            base_len,
        }
    }

    /// Zero the AdaIN style affine maps; with them at zero the decoder
    /// ignores the guiding positive (ablation switch).
    pub fn zero_style_affines(&mut self) {
        for layer in &mut self.dec_layers {
            for m in [
                &mut layer.w_scale,
                &mut layer.b_scale,
                &mut layer.w_shift,
                &mut layer.b_shift,
            ] {
                *m = Matrix::zeros(m.rows(), m.cols());
            }
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = Vec::new();
        for c in &self.enc_convs {
            out.push(&c.kernels);
            out.push(&c.bias);
        }
        out.push(&self.enc_proj_w);
        out.push(&self.enc_proj_b);
        out.push(&self.dec_in_w);
        out.push(&self.dec_in_b);
        for l in &self.dec_layers {
            out.push(&l.conv.kernels);
            out.push(&l.conv.bias);
            out.push(&l.w_scale);
            out.push(&l.b_scale);
            out.push(&l.w_shift);
            out.push(&l.b_shift);
        }
        out.push(&self.dec_out_w);
        out.push(&self.dec_out_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for c in &mut self.enc_convs {
            out.push(&mut c.kernels);
            out.push(&mut c.bias);
        }
        out.push(&mut self.enc_proj_w);
        out.push(&mut self.enc_proj_b);
        out.push(&mut self.dec_in_w);
        out.push(&mut self.dec_in_b);
        for l in &mut self.dec_layers {
            out.push(&mut l.conv.kernels);
            out.push(&mut l.conv.bias);
            out.push(&mut l.w_scale);
            out.push(&mut l.b_scale);
            out.push(&mut l.w_shift);
            out.push(&mut l.b_shift);
        }
        out.push(&mut self.dec_out_w);
        out.push(&mut self.dec_out_b);
        out
    }

    /// Positions of the style affine tensors within the `tensors()` order
    /// (used to freeze them for the no-guidance ablation).
    pub fn style_tensor_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let base = self.enc_convs.len() * 2 + 4;
        for l in 0..self.dec_layers.len() {
            let layer_base = base + l * 6 + 2;
            out.extend(layer_base..layer_base + 4);
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundGenerator {
        BoundGenerator {
            enc_convs: self
                .enc_convs
                .iter()
                .map(|c| (tape.leaf(c.kernels.clone()), tape.leaf(c.bias.clone())))
                .collect(),
            enc_proj_w: tape.leaf(self.enc_proj_w.clone()),
            enc_proj_b: tape.leaf(self.enc_proj_b.clone()),
            dec_in_w: tape.leaf(self.dec_in_w.clone()),
            dec_in_b: tape.leaf(self.dec_in_b.clone()),
            dec_layers: self
                .dec_layers
                .iter()
                .map(|l| BoundStyledConv {
                    kernels: tape.leaf(l.conv.kernels.clone()),
                    bias: tape.leaf(l.conv.bias.clone()),
                    w_scale: tape.leaf(l.w_scale.clone()),
                    b_scale: tape.leaf(l.b_scale.clone()),
                    w_shift: tape.leaf(l.w_shift.clone()),
                    b_shift: tape.leaf(l.b_shift.clone()),
                })
                .collect(),
            dec_out_w: tape.leaf(self.dec_out_w.clone()),
            dec_out_b: tape.leaf(self.dec_out_b.clone()),
            num_nodes: self.num_nodes,
            channels: self.channels,
            noise_dim: self.noise_dim,
            base_len: self.base_len,
        }
    }
}

impl GeneratorParams {
    /// Rebuild the bound structure from existing tape values in `tensors()`
    /// order, for gradient checks that own the leaves.
    pub fn bind_values(&self, values: &[Value]) -> BoundGenerator {
        assert_eq!(values.len(), self.tensors().len());
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("tensor count checked above");
        let enc_convs: Vec<(Value, Value)> =
            (0..self.enc_convs.len()).map(|_| (next(), next())).collect();
        let enc_proj_w = next();
        let enc_proj_b = next();
        let dec_in_w = next();
        let dec_in_b = next();
        let dec_layers: Vec<BoundStyledConv> = (0..self.dec_layers.len())
            .map(|_| BoundStyledConv {
                kernels: next(),
                bias: next(),
                w_scale: next(),
                b_scale: next(),
                w_shift: next(),
                b_shift: next(),
            })
            .collect();
        let dec_out_w = next();
        let dec_out_b = next();
        BoundGenerator {
            enc_convs,
            enc_proj_w,
            enc_proj_b,
            dec_in_w,
            dec_in_b,
            dec_layers,
            dec_out_w,
            dec_out_b,
            num_nodes: self.num_nodes,
            channels: self.channels,
            noise_dim: self.noise_dim,
            base_len: self.base_len,
        }
    }
}

pub struct BoundStyledConv {
    pub kernels: Value,
    pub bias: Value,
    pub w_scale: Value,
    pub b_scale: Value,
    pub w_shift: Value,
    pub b_shift: Value,
}

pub struct BoundGenerator {
    pub enc_convs: Vec<(Value, Value)>,
    pub enc_proj_w: Value,
    pub enc_proj_b: Value,
    pub dec_in_w: Value,
    pub dec_in_b: Value,
    pub dec_layers: Vec<BoundStyledConv>,
    pub dec_out_w: Value,
    pub dec_out_b: Value,
    pub num_nodes: usize,
    pub channels: usize,
    pub noise_dim: usize,
    pub base_len: usize,
}

impl BoundGenerator {
    pub fn values(&self) -> Vec<Value> {
        let mut out: Vec<Value> = Vec::new();
        for &(k, b) in &self.enc_convs {
            out.push(k);
            out.push(b);
        }
        out.push(self.enc_proj_w);
        out.push(self.enc_proj_b);
        out.push(self.dec_in_w);
        out.push(self.dec_in_b);
        for l in &self.dec_layers {
            out.extend([l.kernels, l.bias, l.w_scale, l.b_scale, l.w_shift, l.b_shift]);
        }
        out.push(self.dec_out_w);
        out.push(self.dec_out_b);
        out
    }
}

/// One-hot row vector over the node set.
pub fn one_hot(nodes: &[usize], num_nodes: usize) -> Matrix {
    let mut m = Matrix::zeros(1, num_nodes);
    for &v in nodes {
        m.set(0, v, 1.0);
    }
    m
}

/// Encode a positive hyperedge's one-hot vector into a latent q.
pub fn encode_positive(tape: &mut Tape, g: &BoundGenerator, e_plus: Value) -> Result<Value> {
    if tape.data(e_plus).as_slice().iter().all(|&x| x == 0.0) {
        return Err(Error::Parameter(
            "encode_positive needs a non-empty hyperedge (one-hot input is all zero)".into(),
        ));
    }
    let mut x = e_plus; // 1 channel × |V|
    for &(kernels, bias) in &g.enc_convs {
        let c = tape.conv1d(x, kernels, bias)?;
        let p = tape.avgpool1d(c, 2)?;
        x = tape.leaky_relu(p, SLOPE);
    }
    // Global average over the remaining length, one value per channel.
    let len = tape.data(x).cols();
    let pooled = tape.avgpool1d(x, len)?;
    let flat = tape.reshape(pooled, 1, g.channels)?;
    tape.affine(flat, g.enc_proj_w, g.enc_proj_b)
}

/// Decode a membership vector c in (0,1)^|V| from the latent q and noise z.
pub fn decode_membership(tape: &mut Tape, g: &BoundGenerator, q: Value, z: Value) -> Result<Value> {
    let projected = tape.affine(z, g.dec_in_w, g.dec_in_b)?;
    let mut x = tape.reshape(projected, g.channels, g.base_len)?;
    for (i, layer) in g.dec_layers.iter().enumerate() {
        let c = tape.conv1d(x, layer.kernels, layer.bias)?;
        let scale_raw = tape.affine(q, layer.w_scale, layer.b_scale)?;
        let scale = tape.softplus(scale_raw);
        let shift = tape.affine(q, layer.w_shift, layer.b_shift)?;
        let styled = tape.adain(c, scale, shift, ADAIN_EPS)?;
        x = tape.leaky_relu(styled, SLOPE);
        if i + 1 < g.dec_layers.len() {
            x = tape.upsample2(x);
        }
    }
    let width = tape.data(x).numel();
    let flat = tape.reshape(x, 1, width)?;
    let logits = tape.affine(flat, g.dec_out_w, g.dec_out_b)?;
    Ok(tape.sigmoid(logits))
}

/// Indices of the n largest entries; ties broken toward the lowest index.
/// Returned sorted ascending (a node set).
pub fn select_topn(membership: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > membership.len() {
        return Err(Error::Parameter(format!(
            "top-n selection needs 1 <= n <= {}, got {n}",
            membership.len()
        )));
    }
    let mut order: Vec<usize> = (0..membership.len()).collect();
    order.sort_by(|&a, &b| {
        membership[b]
            .total_cmp(&membership[a])
            .then(a.cmp(&b))
    });
    let mut picked = order[..n].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// A generated negative: the discrete node set plus the differentiable
/// membership vector it was cut from.
pub struct Generated {
    pub negative: Vec<usize>,
    pub membership: Value,
}

/// Full generation pass for one guiding positive: encode, decode with fresh
/// noise, draw the size from the positive-size distribution, select top-n.
pub fn generate<R: Rng, S: Rng>(
    tape: &mut Tape,
    g: &BoundGenerator,
    e_plus: &[usize],
    sizes: &SizeDistribution,
    size_rng: &mut S,
    noise_rng: &mut R,
) -> Result<Generated> {
    let n = sizes.sample(size_rng)?;
    let onehot = tape.leaf(one_hot(e_plus, g.num_nodes));
    let q = encode_positive(tape, g, onehot)?;
    let z = tape.leaf(sample_noise(g.noise_dim, noise_rng));
    let c = decode_membership(tape, g, q, z)?;
    let negative = select_topn(tape.data(c).as_slice(), n)?;
    Ok(Generated { negative, membership: c })
}

pub fn sample_noise<R: Rng>(noise_dim: usize, rng: &mut R) -> Matrix {
    let data: Vec<f64> = (0..noise_dim).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(1, noise_dim, data)
}
