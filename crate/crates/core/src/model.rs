//! The segmentation network: two encoder levels, a bottleneck, two decoder
//! levels with skip connections, and a 1×1 classification head.
//!
//! ```text
//! x ─ enc1 ─┬─ pool ─ enc2 ─┬─ pool ─ bottleneck ─ up ─ [up ‖ enc2] ─ dec1 ─ up ─ [up ‖ enc1] ─ dec2 ─ head
//!           └──────────────────────── skip ─────────────────┼────────────────────────┘
//!                           └──────────── skip ─────────────┘
//! ```
//!
//! Each block is one depthwise-separable convolution followed by ReLU.
//! Decoder inputs are the upsampled features in channels `[0, up)` followed
//! by the encoder skip in channels `[up, up + skip)`.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::nn::{
    bilinear_up2x_bwd, bilinear_up2x_fwd, dwsep_block_bwd, dwsep_block_fwd, dwsep_param_count,
    maxpool2x2_bwd, maxpool2x2_fwd, pointwise_conv1x1_bwd, pointwise_conv1x1_fwd, Activation,
    DwSepCache, DwSepRef, PoolIndices,
};
use crate::seed::rng_for;
use crate::tensor::{Scalar, Shape, Tensor4};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub enc_channels: [usize; 2],
    pub bottleneck_channels: usize,
    pub dec_channels: [usize; 2],
}

impl Default for ArchConfig {
    /// 9,025 parameters and about 0.43 GFLOPs at 256×256.
    fn default() -> Self {
        ArchConfig {
            in_channels: 3,
            num_classes: NUM_CLASSES,
            enc_channels: [16, 32],
            bottleneck_channels: 64,
            dec_channels: [32, 24],
        }
    }
}

/// Block names in parameter order.
pub const BLOCK_NAMES: [&str; 5] = ["enc1", "enc2", "bottleneck", "dec1", "dec2"];

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes != NUM_CLASSES {
            return Err(shape_err!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes));
        }
        let widths = [
            self.in_channels,
            self.enc_channels[0],
            self.enc_channels[1],
            self.bottleneck_channels,
            self.dec_channels[0],
            self.dec_channels[1],
        ];
        if widths.iter().any(|&w| w == 0) {
            return Err(shape_err!("zero channel width in {self:?}"));
        }
        Ok(())
    }

    /// `(c_in, c_out)` of each block, in [`BLOCK_NAMES`] order.
    pub fn block_channels(&self) -> [(usize, usize); 5] {
        let [c1, c2] = self.enc_channels;
        let c3 = self.bottleneck_channels;
        let [d1, d2] = self.dec_channels;
        [
            (self.in_channels, c1),
            (c1, c2),
            (c2, c3),
            (c3 + c2, d1),
            (d1 + c1, d2),
        ]
    }

    /// Ordered `(name, shape)` of every parameter tensor. Serialization
    /// depends on this order: per block `dw.weight, dw.bias, pw.weight,
    /// pw.bias`, blocks in [`BLOCK_NAMES`] order, then `head.weight, head.bias`.
    pub fn param_specs(&self) -> Vec<(String, Shape)> {
        let sh = |n, c, h, w| Shape { n, c, h, w };
        let mut specs = Vec::with_capacity(22);
        for (name, (ci, co)) in BLOCK_NAMES.iter().zip(self.block_channels()) {
            specs.push((format!("{name}.dw.weight"), sh(ci, 1, 3, 3)));
            specs.push((format!("{name}.dw.bias"), sh(ci, 1, 1, 1)));
            specs.push((format!("{name}.pw.weight"), sh(co, ci, 1, 1)));
            specs.push((format!("{name}.pw.bias"), sh(co, 1, 1, 1)));
        }
        let d2 = self.dec_channels[1];
        specs.push(("head.weight".into(), sh(self.num_classes, d2, 1, 1)));
        specs.push(("head.bias".into(), sh(self.num_classes, 1, 1, 1)));
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub tensor: Tensor4<T>,
}

/// All weights of the network in the fixed order of
/// [`ArchConfig::param_specs`]. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    config: ArchConfig,
    seed: u64,
    params: Vec<Param<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ArchConfig) -> Result<Self> {
        config.validate()?;
        let params = config
            .param_specs()
            .into_iter()
            .map(|(name, shape)| Param {
                name,
                tensor: Tensor4::zeros(shape),
            })
            .collect();
        Ok(ModelParams {
            config,
            seed: 0,
            params,
        })
    }

    /// Assemble from named tensors, checking names, order and shapes against
    /// the config.
    pub fn from_parts(config: ArchConfig, seed: u64, parts: Vec<(String, Tensor4<T>)>) -> Result<Self> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != parts.len() {
            return Err(shape_err!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                parts.len()
            ));
        }
        let mut params = Vec::with_capacity(parts.len());
        for ((want_name, want_shape), (name, tensor)) in specs.into_iter().zip(parts) {
            if want_name != name {
                return Err(shape_err!("parameter {name} found where {want_name} expected"));
            }
            if tensor.shape() != want_shape {
                return Err(shape_err!(
                    "parameter {name} has shape {}, config implies {want_shape}",
                    tensor.shape()
                ));
            }
            params.push(Param { name, tensor });
        }
        Ok(ModelParams { config, seed, params })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config,
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: Tensor4::zeros(p.tensor.shape()),
                })
                .collect(),
        }
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor4<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    fn block(&self, i: usize) -> DwSepRef<'_, T> {
        let b = &self.params[4 * i..4 * i + 4];
        DwSepRef {
            depthwise_kernel: &b[0].tensor,
            depthwise_bias: &b[1].tensor,
            pointwise_kernel: &b[2].tensor,
            pointwise_bias: &b[3].tensor,
        }
    }

    fn head(&self) -> (&Tensor4<T>, &Tensor4<T>) {
        (&self.params[20].tensor, &self.params[21].tensor)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
        }
    }

    /// Visits each scalar as a flat sequence in parameter order.
    pub fn flat_len(&self) -> usize {
        self.count()
    }

    /// `(param index, element index)` of flat coordinate `i`.
    pub fn locate(&self, mut i: usize) -> Option<(usize, usize)> {
        for (k, p) in self.params.iter().enumerate() {
            if i < p.tensor.len() {
                return Some((k, i));
            }
            i -= p.tensor.len();
        }
        None
    }
}

/// Kaiming-uniform bound with unit gain: `sqrt(3 / fan_in)`. No ReLU gain,
/// since each block has two convolutions per ReLU; with `sqrt(6 / fan_in)`
/// fresh logits come out about 8x too large.
pub fn kaiming_uniform_bound(fan_in: usize) -> f64 {
    (3.0 / fan_in as f64).sqrt()
}

/// Fresh parameters: weights `U(-b, b)` with `b = sqrt(3 / fan_in)`, biases
/// zero. Deterministic in `(config, seed)`.
pub fn build(config: ArchConfig, seed: u64) -> Result<ModelParams<f32>> {
    let mut params = ModelParams::<f32>::zeros(config)?;
    params.seed = seed;
    let mut rng = rng_for(seed, "init");
    for p in params.params.iter_mut() {
        if p.name.ends_with(".bias") {
            continue;
        }
        let s = p.tensor.shape();
        // (C_out, C_in, kh, kw); depthwise kernels have C_in = 1.
        let fan_in = s.c * s.h * s.w;
        let bound = kaiming_uniform_bound(fan_in) as f32;
        for v in p.tensor.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f32> {
    blocks: Vec<DwSepCache<T>>,
    pools: [PoolIndices; 2],
    head_input: Tensor4<T>,
    trace: Vec<(&'static str, Shape)>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Output shape of every stage, named as in [`layer_table`].
    pub fn trace(&self) -> &[(&'static str, Shape)] {
        &self.trace
    }

    /// Input to decoder block `level` (0 = dec1, 1 = dec2).
    pub fn decoder_input(&self, level: usize) -> &Tensor4<T> {
        &self.blocks[3 + level].input
    }

    /// Output of encoder block `level` (0 = enc1, 1 = enc2).
    pub fn encoder_output(&self, level: usize) -> &Tensor4<T> {
        &self.blocks[level].output
    }
}

/// Which skip connections to zero out; used to probe skip fidelity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipAblation {
    pub enc1: bool,
    pub enc2: bool,
}

fn check_input<T: Scalar>(config: &ArchConfig, x: &Tensor4<T>) -> Result<()> {
    let s = x.shape();
    if s.c != config.in_channels {
        return Err(shape_err!("model expects {} input channels, got {s}", config.in_channels));
    }
    if s.h % 4 != 0 || s.w % 4 != 0 {
        return Err(shape_err!("input spatial dims must be divisible by 4, got {s}"));
    }
    Ok(())
}

fn forward_impl<T: Scalar>(
    params: &ModelParams<T>,
    x: &Tensor4<T>,
    ablation: SkipAblation,
) -> Result<(Tensor4<T>, ForwardCache<T>)> {
    check_input(&params.config, x)?;
    let relu = Activation::Relu;
    let mut trace = Vec::with_capacity(10);

    let (e1, c_enc1) = dwsep_block_fwd(x, params.block(0), relu)?;
    trace.push(("enc1", e1.shape()));
    let (p1, i1) = maxpool2x2_fwd(&e1)?;
    trace.push(("pool1", p1.shape()));
    let (e2, c_enc2) = dwsep_block_fwd(&p1, params.block(1), relu)?;
    trace.push(("enc2", e2.shape()));
    let (p2, i2) = maxpool2x2_fwd(&e2)?;
    trace.push(("pool2", p2.shape()));
    let (b, c_bott) = dwsep_block_fwd(&p2, params.block(2), relu)?;
    trace.push(("bottleneck", b.shape()));

    let u1 = bilinear_up2x_fwd(&b);
    trace.push(("up1", u1.shape()));
    let skip2 = if ablation.enc2 { Tensor4::zeros(e2.shape()) } else { e2 };
    let cat1 = Tensor4::concat_channels(&u1, &skip2)?;
    let (d1, c_dec1) = dwsep_block_fwd(&cat1, params.block(3), relu)?;
    trace.push(("dec1", d1.shape()));

    let u2 = bilinear_up2x_fwd(&d1);
    trace.push(("up2", u2.shape()));
    let skip1 = if ablation.enc1 { Tensor4::zeros(e1.shape()) } else { e1 };
    let cat2 = Tensor4::concat_channels(&u2, &skip1)?;
    let (d2, c_dec2) = dwsep_block_fwd(&cat2, params.block(4), relu)?;
    trace.push(("dec2", d2.shape()));

    let (hw, hb) = params.head();
    let logits = pointwise_conv1x1_fwd(&d2, hw, hb)?;
    trace.push(("head", logits.shape()));

    let cache = ForwardCache {
        blocks: vec![c_enc1, c_enc2, c_bott, c_dec1, c_dec2],
        pools: [i1, i2],
        head_input: d2,
        trace,
    };
    Ok((logits, cache))
}

/// Logits at input resolution. Input `(n, in_channels, h, w)` with `h` and
/// `w` divisible by 4.
pub fn forward<T: Scalar>(params: &ModelParams<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
    forward_impl(params, x, SkipAblation::default()).map(|(y, _)| y)
}

/// Forward pass that also returns the cache for [`backward`].
pub fn forward_cached<T: Scalar>(
    params: &ModelParams<T>,
    x: &Tensor4<T>,
) -> Result<(Tensor4<T>, ForwardCache<T>)> {
    forward_impl(params, x, SkipAblation::default())
}

pub fn forward_ablated<T: Scalar>(
    params: &ModelParams<T>,
    x: &Tensor4<T>,
    ablation: SkipAblation,
) -> Result<Tensor4<T>> {
    forward_impl(params, x, ablation).map(|(y, _)| y)
}

fn split_decoder_grad<T: Scalar>(
    d: &Tensor4<T>,
    up_channels: usize,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let c = d.shape().c;
    Ok((d.slice_channels(0..up_channels)?, d.slice_channels(up_channels..c)?))
}

/// Gradients of every parameter given `dlogits = dL/dlogits`.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &Tensor4<T>,
) -> Result<ModelParams<T>> {
    backward_with_input(params, cache, dlogits).map(|(g, _)| g)
}

/// Like [`backward`], also returning the gradient wrt the network input.
pub fn backward_with_input<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &Tensor4<T>,
) -> Result<(ModelParams<T>, Tensor4<T>)> {
    if cache.blocks.len() != 5 {
        return Err(Error::Internal("forward cache is incomplete".into()));
    }
    let mut grads = params.zeros_like();
    let cfg = &params.config;
    let (hw, _) = params.head();

    let (dd2, dhw, dhb) = pointwise_conv1x1_bwd(&cache.head_input, hw, dlogits)?;
    grads.params[20].tensor = dhw;
    grads.params[21].tensor = dhb;

    let store = |grads: &mut ModelParams<T>, i: usize, g: crate::nn::ConvDWParams<T>| {
        let [a, b, c, d] = [
            g.depthwise_kernel,
            g.depthwise_bias,
            g.pointwise_kernel,
            g.pointwise_bias,
        ];
        grads.params[4 * i].tensor = a;
        grads.params[4 * i + 1].tensor = b;
        grads.params[4 * i + 2].tensor = c;
        grads.params[4 * i + 3].tensor = d;
    };

    let g = dwsep_block_bwd(&cache.blocks[4], params.block(4), &dd2)?;
    store(&mut grads, 4, g.params);
    let (du2, de1_skip) = split_decoder_grad(&g.input, cfg.dec_channels[0])?;
    let dd1 = bilinear_up2x_bwd(&du2)?;

    let g = dwsep_block_bwd(&cache.blocks[3], params.block(3), &dd1)?;
    store(&mut grads, 3, g.params);
    let (du1, de2_skip) = split_decoder_grad(&g.input, cfg.bottleneck_channels)?;
    let db = bilinear_up2x_bwd(&du1)?;

    let g = dwsep_block_bwd(&cache.blocks[2], params.block(2), &db)?;
    store(&mut grads, 2, g.params);
    let mut de2 = maxpool2x2_bwd(&cache.pools[1], &g.input)?;
    de2.add_assign(&de2_skip)?;

    let g = dwsep_block_bwd(&cache.blocks[1], params.block(1), &de2)?;
    store(&mut grads, 1, g.params);
    let mut de1 = maxpool2x2_bwd(&cache.pools[0], &g.input)?;
    de1.add_assign(&de1_skip)?;

    let g = dwsep_block_bwd(&cache.blocks[0], params.block(0), &de1)?;
    store(&mut grads, 0, g.params);
    Ok((grads, g.input))
}

/// One row of the complexity table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub name: &'static str,
    pub kind: &'static str,
    pub params: u64,
    pub flops: u64,
    pub out_shape: Shape,
}

/// Per-layer parameter and FLOP counts for an input of `input` shape.
///
/// FLOP conventions (one multiply-add = 2 FLOPs):
/// - convolution: `2 · kernel_elems_per_output · out_elems`, i.e. `18` per
///   depthwise output and `2 · c_in` per pointwise output;
/// - ReLU: 1 per output element;
/// - 2×2 max-pool: 3 comparisons per output element;
/// - 2× bilinear upsample: 8 per output element (four weighted taps);
/// - concatenation: free.
pub fn layer_table(config: &ArchConfig, input: Shape) -> Result<Vec<LayerRow>> {
    config.validate()?;
    if input.c != config.in_channels || input.h % 4 != 0 || input.w % 4 != 0 {
        return Err(shape_err!("input {input} incompatible with {config:?}"));
    }
    let at = |c: usize, div: usize| Shape {
        n: input.n,
        c,
        h: input.h / div,
        w: input.w / div,
    };
    let spatial = |s: Shape| (s.n * s.h * s.w) as u64;
    let block = |name, ci: usize, co: usize, out: Shape| {
        let px = spatial(out);
        let flops = 18 * ci as u64 * px + 2 * (ci * co) as u64 * px + co as u64 * px;
        LayerRow {
            name,
            kind: "dwsep+relu",
            params: dwsep_param_count(ci, co) as u64,
            flops,
            out_shape: out,
        }
    };
    let pool = |name, out: Shape| LayerRow {
        name,
        kind: "maxpool2x2",
        params: 0,
        flops: 3 * out.len() as u64,
        out_shape: out,
    };
    let up = |name, out: Shape| LayerRow {
        name,
        kind: "bilinear2x",
        params: 0,
        flops: 8 * out.len() as u64,
        out_shape: out,
    };

    let ch = config.block_channels();
    let [c1, c2] = config.enc_channels;
    let c3 = config.bottleneck_channels;
    let [d1, d2] = config.dec_channels;
    let k = config.num_classes;
    let head_out = at(k, 1);
    Ok(vec![
        block("enc1", ch[0].0, ch[0].1, at(c1, 1)),
        pool("pool1", at(c1, 2)),
        block("enc2", ch[1].0, ch[1].1, at(c2, 2)),
        pool("pool2", at(c2, 4)),
        block("bottleneck", ch[2].0, ch[2].1, at(c3, 4)),
        up("up1", at(c3, 2)),
        block("dec1", ch[3].0, ch[3].1, at(d1, 2)),
        up("up2", at(d1, 1)),
        block("dec2", ch[4].0, ch[4].1, at(d2, 1)),
        LayerRow {
            name: "head",
            kind: "conv1x1",
            params: (d2 * k + k) as u64,
            flops: 2 * (d2 * k) as u64 * spatial(head_out),
            out_shape: head_out,
        },
    ])
}

pub fn count_params(config: &ArchConfig) -> Result<u64> {
    let probe = Shape::new(1, config.in_channels, 4, 4)?;
    Ok(layer_table(config, probe)?.iter().map(|r| r.params).sum())
}

/// Total FLOPs for one forward pass at `input` shape.
pub fn count_flops(config: &ArchConfig, input: Shape) -> Result<u64> {
    Ok(layer_table(config, input)?.iter().map(|r| r.flops).sum())
}
