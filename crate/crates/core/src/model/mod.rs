//! End-to-end network: three conv blocks → dual attention → flatten →
//! projection `z` → `c` parallel circuits (or the classical counterpart) →
//! linear head.

mod checkpoint;

pub use checkpoint::{decode_records, encode_records, read_records, write_records, TensorRecord};

use rand::SeedableRng;
use rand_pcg::Pcg64;

use crate::attention::{
    upsample_attention, upsample_attention_backward, DualAttention, DualAttentionGrads, DualCache,
};
use crate::error::{Error, Result};
use crate::nn::{
    maxpool2, maxpool2_backward, relu, relu_backward, tanh, tanh_backward, BatchNorm2d,
    BatchNormCache, BatchNormGrads, Conv2d, Conv2dGrads, Linear, LinearGrads, Mode, Params,
    PoolIndices,
};
use crate::qsim::{self, CircuitParams, QuantumLayerConfig};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hybrid,
    Classical,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Variant::Hybrid),
            "classical" => Ok(Variant::Classical),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected hybrid or classical)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Hybrid => "hybrid",
            Variant::Classical => "classical",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Square input side `H = W`.
    pub input_size: usize,
    pub num_classes: usize,
    pub conv_channels: [usize; 3],
    pub reduction_ratio: usize,
    pub quantum: QuantumLayerConfig,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 128,
            num_classes: 4,
            conv_channels: [128, 64, 32],
            reduction_ratio: 8,
            quantum: QuantumLayerConfig::default(),
            variant: Variant::Hybrid,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "input size {} must be a positive multiple of 8",
                self.input_size
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::Config("conv channel counts must be positive".into()));
        }
        let c = self.feature_channels();
        if self.reduction_ratio == 0 || !c.is_multiple_of(self.reduction_ratio) || c < self.reduction_ratio {
            return Err(Error::Config(format!(
                "final channel count {c} is not divisible by reduction ratio {}",
                self.reduction_ratio
            )));
        }
        self.quantum.validate()
    }

    pub fn feature_channels(&self) -> usize {
        self.conv_channels[2]
    }

    /// Side of the feature map after three 2×2 pools.
    pub fn feature_size(&self) -> usize {
        self.input_size / 8
    }

    pub fn flattened_width(&self) -> usize {
        self.feature_channels() * self.feature_size() * self.feature_size()
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        ModelConfig {
            variant,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvBlock<T: Real = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

/// The layer between projection and head.
#[derive(Clone, Debug)]
pub enum Bottleneck<T: Real = f32> {
    /// One `[depth, qubits, 3]` angle tensor per parallel circuit.
    Quantum(Vec<Tensor<T>>),
    /// Interface-matched classical stand-in: `tanh(Linear[c·2^q → c·q])`.
    Classical(Linear<T>),
}

#[derive(Clone, Debug)]
pub enum BottleneckGrads<T: Real = f32> {
    Quantum(Vec<Tensor<T>>),
    Classical(LinearGrads<T>),
}

#[derive(Clone, Debug)]
pub struct HybridModel<T: Real = f32> {
    config: ModelConfig,
    pub blocks: [ConvBlock<T>; 3],
    pub attention: DualAttention<T>,
    pub projection: Linear<T>,
    pub bottleneck: Bottleneck<T>,
    pub head: Linear<T>,
    cache: Option<ForwardCache<T>>,
}

/// Everything a forward pass exposes.
#[derive(Clone, Debug)]
pub struct ModelOutput<T: Real = f32> {
    /// `[B, K]`, unnormalised.
    pub logits: Tensor<T>,
    /// Upsampled spatial attention `[B, 1, H, W]`.
    pub attention: Tensor<T>,
    /// Bottleneck output `[B, c·q]` (the head input).
    pub quantum_out: Tensor<T>,
    /// Projection `z` `[B, c·2^q]` fed to the bottleneck.
    pub projection: Tensor<T>,
    /// Number of circuit inputs that hit the zero-norm fallback.
    pub degenerate_embeddings: usize,
}

#[derive(Clone, Debug)]
struct BlockCache<T: Real> {
    input: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
    conv_out: Tensor<T>,
    bn_out: Tensor<T>,
    pool: PoolIndices,
}

#[derive(Clone, Debug)]
struct ForwardCache<T: Real> {
    images_shape: Vec<usize>,
    blocks: Vec<BlockCache<T>>,
    features: Tensor<T>,
    attention: DualCache<T>,
    flat: Tensor<T>,
    z: Tensor<T>,
    bottleneck_out: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct ModelGrads<T: Real = f32> {
    pub blocks: Vec<(Conv2dGrads<T>, BatchNormGrads<T>)>,
    pub attention: DualAttentionGrads<T>,
    pub projection: LinearGrads<T>,
    pub bottleneck: BottleneckGrads<T>,
    pub head: LinearGrads<T>,
}

impl<T: Real> HybridModel<T> {
    /// Layers drawn from `U(±1/sqrt(fan_in))`; circuit angles uniform in `[0, 2π)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Pcg64::seed_from_u64(seed);
        let [c1, c2, c3] = config.conv_channels;
        let mut block = |cin: usize, cout: usize| -> Result<ConvBlock<T>> {
            Ok(ConvBlock {
                conv: Conv2d::new(cin, cout, 3, 1, 1, &mut rng)?,
                bn: BatchNorm2d::new(cout),
            })
        };
        let blocks = [block(1, c1)?, block(c1, c2)?, block(c2, c3)?];
        let attention = DualAttention::new(c3, config.reduction_ratio, &mut rng)?;
        let q = config.quantum;
        let projection = Linear::new(config.flattened_width(), q.input_width(), &mut rng);
        let bottleneck = match config.variant {
            Variant::Hybrid => {
                let mut circuits = Vec::with_capacity(q.circuits);
                for _ in 0..q.circuits {
                    let params = CircuitParams::random(q.qubits, q.depth, &mut rng)?;
                    circuits.push(Tensor::from_f64(&[q.depth, q.qubits, 3], params.angles())?);
                }
                Bottleneck::Quantum(circuits)
            }
            Variant::Classical => Bottleneck::Classical(Linear::new(q.input_width(), q.output_width(), &mut rng)),
        };
        let head = Linear::new(q.output_width(), config.num_classes, &mut rng);
        Ok(HybridModel {
            config,
            blocks,
            attention,
            projection,
            bottleneck,
            head,
            cache: None,
        })
    }

    /// Counterpart with the quantum layer swapped for `tanh(Linear)` of matching widths.
    pub fn classical_counterpart(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::new(config.with_variant(Variant::Classical), seed)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn circuit_params(&self, angles: &Tensor<T>) -> Result<CircuitParams> {
        let q = self.config.quantum;
        CircuitParams::new(q.qubits, q.depth, angles.data().iter().map(|a| a.as_f64()).collect())
    }

    fn check_images(&self, images: &Tensor<T>) -> Result<usize> {
        let (b, c, h, w) = images.dims4("model forward")?;
        let s = self.config.input_size;
        if c != 1 || h != s || w != s {
            return Err(Error::shape(
                "model forward",
                format!("expected [B, 1, {s}, {s}] images, got {:?}", images.shape()),
            ));
        }
        if b == 0 {
            return Err(Error::shape("model forward", "empty batch"));
        }
        Ok(b)
    }

    fn run(&mut self, images: &Tensor<T>, mode: Mode, keep: bool) -> Result<(ModelOutput<T>, Option<ForwardCache<T>>)> {
        let b = self.check_images(images)?;
        let mut x = images.clone();
        let mut block_caches = Vec::with_capacity(3);
        for block in self.blocks.iter_mut() {
            let conv_out = block.conv.forward(&x)?;
            let (bn_out, bn_cache) = match mode {
                Mode::Train => {
                    let (y, c) = block.bn.forward_train(&conv_out)?;
                    (y, Some(c))
                }
                Mode::Eval => (block.bn.forward_eval(&conv_out)?, None),
            };
            let (pooled, pool) = maxpool2(&relu(&bn_out))?;
            let input = std::mem::replace(&mut x, pooled);
            if keep {
                block_caches.push(BlockCache {
                    input,
                    bn: bn_cache,
                    conv_out,
                    bn_out,
                    pool,
                });
            }
        }
        let features = x;
        let fs = self.config.feature_size();
        let expected = [b, self.config.feature_channels(), fs, fs];
        if features.shape() != expected {
            return Err(Error::shape(
                "model forward",
                format!("feature tensor {:?} != {:?}", features.shape(), expected),
            ));
        }
        let (f_final, att_cache) = self.attention.forward(&features)?;
        let flat = f_final.reshape(&[b, self.config.flattened_width()])?;
        let z = self.projection.forward(&flat)?;
        let (bottleneck_out, degenerate) = self.bottleneck_forward(&z)?;
        let logits = self.head.forward(&bottleneck_out)?;
        let s = self.config.input_size;
        let attention = upsample_attention(&att_cache.spatial.map, (s, s))?;
        let output = ModelOutput {
            logits,
            attention,
            quantum_out: bottleneck_out.clone(),
            projection: z.clone(),
            degenerate_embeddings: degenerate,
        };
        let cache = keep.then(|| ForwardCache {
            images_shape: images.shape().to_vec(),
            blocks: block_caches,
            features,
            attention: att_cache,
            flat,
            z,
            bottleneck_out,
        });
        Ok((output, cache))
    }

    fn bottleneck_forward(&self, z: &Tensor<T>) -> Result<(Tensor<T>, usize)> {
        let q = self.config.quantum;
        let (b, width) = z.dims2("bottleneck")?;
        if width != q.input_width() {
            return Err(Error::shape(
                "bottleneck",
                format!("z width {width} != c·2^q = {}", q.input_width()),
            ));
        }
        match &self.bottleneck {
            Bottleneck::Quantum(circuits) => {
                let params: Vec<CircuitParams> =
                    circuits.iter().map(|a| self.circuit_params(a)).collect::<Result<_>>()?;
                let chunk = 1 << q.qubits;
                let mut out = Tensor::zeros(&[b, q.output_width()]);
                let mut degenerate = 0;
                for n in 0..b {
                    let row = z.batch_item(n);
                    for (i, p) in params.iter().enumerate() {
                        let input: Vec<f64> = row[i * chunk..(i + 1) * chunk].iter().map(|v| v.as_f64()).collect();
                        let emb = qsim::amplitude_embed(&input)?;
                        degenerate += emb.degenerate as usize;
                        let ys = qsim::run_circuit(&input, p)?;
                        let dst = &mut out.batch_item_mut(n)[i * q.qubits..(i + 1) * q.qubits];
                        for (d, y) in dst.iter_mut().zip(ys) {
                            *d = T::from_f64_lossy(y);
                        }
                    }
                }
                Ok((out, degenerate))
            }
            Bottleneck::Classical(linear) => Ok((tanh(&linear.forward(z)?), 0)),
        }
    }

    /// Forward pass that caches activations for [`backward`](Self::backward).
    /// Train mode uses batch statistics and updates BatchNorm running stats.
    pub fn forward(&mut self, images: &Tensor<T>, mode: Mode) -> Result<ModelOutput<T>> {
        self.cache = None;
        let (out, cache) = self.run(images, mode, true)?;
        self.cache = cache;
        Ok(out)
    }

    /// Eval-mode forward without caching; usable on a shared model.
    pub fn predict(&self, images: &Tensor<T>) -> Result<ModelOutput<T>> {
        // `run` only mutates BatchNorm running stats in train mode
        let mut shadow = HybridModel {
            config: self.config.clone(),
            blocks: self.blocks.clone(),
            attention: self.attention.clone(),
            projection: self.projection.clone(),
            bottleneck: self.bottleneck.clone(),
            head: self.head.clone(),
            cache: None,
        };
        shadow.run(images, Mode::Eval, false).map(|(o, _)| o)
    }

    /// Backpropagates `∂L/∂logits` and optionally `∂L/∂attention` through the
    /// cached forward pass.
    pub fn backward(&self, grad_logits: &Tensor<T>, grad_attention: Option<&Tensor<T>>) -> Result<ModelGrads<T>> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        let b = cache.images_shape[0];
        if grad_logits.shape() != [b, self.config.num_classes] {
            return Err(Error::shape(
                "model backward",
                format!("grad_logits {:?} != [{b}, {}]", grad_logits.shape(), self.config.num_classes),
            ));
        }
        let mut grads = ModelGrads::zeros_like(self);
        let d_bottleneck = self.head.backward(&cache.bottleneck_out, grad_logits, &mut grads.head)?;
        let d_z = self.bottleneck_backward(cache, &d_bottleneck, &mut grads.bottleneck)?;
        let d_flat = self.projection.backward(&cache.flat, &d_z, &mut grads.projection)?;
        let d_final = d_flat.reshape(cache.features.shape())?;
        let fs = self.config.feature_size();
        let d_map = match grad_attention {
            Some(g) => {
                let s = self.config.input_size;
                if g.shape() != [b, 1, s, s] {
                    return Err(Error::shape(
                        "model backward",
                        format!("grad_attention {:?} != [{b}, 1, {s}, {s}]", g.shape()),
                    ));
                }
                Some(upsample_attention_backward(g, (fs, fs))?)
            }
            None => None,
        };
        let mut d = self.attention.backward(
            &cache.features,
            &cache.attention,
            &d_final,
            d_map.as_ref(),
            &mut grads.attention,
        )?;
        for ((block, bc), (cg, bg)) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(grads.blocks.iter_mut())
            .rev()
        {
            d = maxpool2_backward(&bc.pool, &d)?;
            d = relu_backward(&bc.bn_out, &d)?;
            d = match &bc.bn {
                Some(bn_cache) => block.bn.backward(bn_cache, &d, bg)?,
                None => block.bn.backward_eval(&bc.conv_out, &d, bg)?,
            };
            d = block.conv.backward(&bc.input, &d, cg)?;
        }
        Ok(grads)
    }

    fn bottleneck_backward(
        &self,
        cache: &ForwardCache<T>,
        d_out: &Tensor<T>,
        grads: &mut BottleneckGrads<T>,
    ) -> Result<Tensor<T>> {
        let q = self.config.quantum;
        let z = &cache.z;
        match (&self.bottleneck, grads) {
            (Bottleneck::Quantum(circuits), BottleneckGrads::Quantum(angle_grads)) => {
                let chunk = 1 << q.qubits;
                let b = z.shape()[0];
                let mut d_z = Tensor::zeros(z.shape());
                let params: Vec<CircuitParams> =
                    circuits.iter().map(|a| self.circuit_params(a)).collect::<Result<_>>()?;
                let mut acc = vec![vec![0.0f64; q.depth * q.qubits * 3]; q.circuits];
                for n in 0..b {
                    for (i, p) in params.iter().enumerate() {
                        let input: Vec<f64> =
                            z.batch_item(n)[i * chunk..(i + 1) * chunk].iter().map(|v| v.as_f64()).collect();
                        let upstream: Vec<f64> = d_out.batch_item(n)[i * q.qubits..(i + 1) * q.qubits]
                            .iter()
                            .map(|v| v.as_f64())
                            .collect();
                        let g = qsim::grad_circuit(&input, p, &upstream)?;
                        for (a, v) in acc[i].iter_mut().zip(&g.params) {
                            *a += v;
                        }
                        let dst = &mut d_z.batch_item_mut(n)[i * chunk..(i + 1) * chunk];
                        for (d, v) in dst.iter_mut().zip(&g.input) {
                            *d = T::from_f64_lossy(*v);
                        }
                    }
                }
                for (g, a) in angle_grads.iter_mut().zip(acc) {
                    for (dst, v) in g.data_mut().iter_mut().zip(a) {
                        *dst += T::from_f64_lossy(v);
                    }
                }
                Ok(d_z)
            }
            (Bottleneck::Classical(linear), BottleneckGrads::Classical(lg)) => {
                let d_pre = tanh_backward(&cache.bottleneck_out, d_out)?;
                linear.backward(z, &d_pre, lg)
            }
            _ => Err(Error::Config("bottleneck gradient variant mismatch".into())),
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            block.conv.collect(&format!("block{}.conv", i + 1), &mut out);
            block.bn.collect(&format!("block{}.bn", i + 1), &mut out);
        }
        self.attention.collect("attention", &mut out);
        self.projection.collect("projection", &mut out);
        match &self.bottleneck {
            Bottleneck::Quantum(circuits) => {
                for (i, c) in circuits.iter().enumerate() {
                    out.push((format!("quantum.circuit{i}.angles"), c));
                }
            }
            Bottleneck::Classical(linear) => linear.collect("classical", &mut out),
        }
        self.head.collect("head", &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.conv.collect_mut(&format!("block{}.conv", i + 1), &mut out);
            block.bn.collect_mut(&format!("block{}.bn", i + 1), &mut out);
        }
        self.attention.collect_mut("attention", &mut out);
        self.projection.collect_mut("projection", &mut out);
        match &mut self.bottleneck {
            Bottleneck::Quantum(circuits) => {
                for (i, c) in circuits.iter_mut().enumerate() {
                    out.push((format!("quantum.circuit{i}.angles"), c));
                }
            }
            Bottleneck::Classical(linear) => linear.collect_mut("classical", &mut out),
        }
        self.head.collect_mut("head", &mut out);
        out
    }

    /// Non-trainable state (BatchNorm running statistics).
    pub fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{}.bn.running_mean", i + 1), &block.bn.running_mean));
            out.push((format!("block{}.bn.running_var", i + 1), &block.bn.running_var));
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{}.bn.running_mean", i + 1), &mut block.bn.running_mean));
            out.push((format!("block{}.bn.running_var", i + 1), &mut block.bn.running_var));
        }
        out
    }
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(model: &HybridModel<T>) -> Self {
        ModelGrads {
            blocks: model
                .blocks
                .iter()
                .map(|b| (Conv2dGrads::zeros_like(&b.conv), BatchNormGrads::zeros_like(&b.bn)))
                .collect(),
            attention: DualAttentionGrads::zeros_like(&model.attention),
            projection: LinearGrads::zeros_like(&model.projection),
            bottleneck: match &model.bottleneck {
                Bottleneck::Quantum(c) => BottleneckGrads::Quantum(c.iter().map(|t| Tensor::zeros(t.shape())).collect()),
                Bottleneck::Classical(l) => BottleneckGrads::Classical(LinearGrads::zeros_like(l)),
            },
            head: LinearGrads::zeros_like(&model.head),
        }
    }

    /// Same names and order as [`HybridModel::params`].
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, (c, b)) in self.blocks.iter().enumerate() {
            c.collect(&format!("block{}.conv", i + 1), &mut out);
            b.collect(&format!("block{}.bn", i + 1), &mut out);
        }
        self.attention.collect("attention", &mut out);
        self.projection.collect("projection", &mut out);
        match &self.bottleneck {
            BottleneckGrads::Quantum(circuits) => {
                for (i, c) in circuits.iter().enumerate() {
                    out.push((format!("quantum.circuit{i}.angles"), c));
                }
            }
            BottleneckGrads::Classical(linear) => linear.collect("classical", &mut out),
        }
        self.head.collect("head", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, (c, b)) in self.blocks.iter_mut().enumerate() {
            c.collect_mut(&format!("block{}.conv", i + 1), &mut out);
            b.collect_mut(&format!("block{}.bn", i + 1), &mut out);
        }
        self.attention.collect_mut("attention", &mut out);
        self.projection.collect_mut("projection", &mut out);
        match &mut self.bottleneck {
            BottleneckGrads::Quantum(circuits) => {
                for (i, c) in circuits.iter_mut().enumerate() {
                    out.push((format!("quantum.circuit{i}.angles"), c));
                }
            }
            BottleneckGrads::Classical(linear) => linear.collect_mut("classical", &mut out),
        }
        self.head.collect_mut("head", &mut out);
        out
    }
}
