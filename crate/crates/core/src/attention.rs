//! Dual attention: channel attention followed by multi-scale spatial attention.
//!
//! ```text
//! T_c      = σ(C₂(ReLU(C₁(GAP(F)))))          [B, C]
//! F_chan   = F ⊙ T_c
//! S_avg    = (C₁ₓ₁(F_chan) + C₃ₓ₃(F_chan) + C₅ₓ₅(F_chan)) / 3
//! T_s      = σ(C₇ₓ₇(S_avg))                    [B, 1, H', W']
//! F_final  = F ⊙ (1 + T_s)
//! ```
//!
//! `F_final` multiplies the original `F`, so channel attention reaches the
//! output only through `T_s`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    Conv2d, Conv2dGrads, Params,
};
use crate::tensor::{Real, Tensor};

pub const SPATIAL_KERNELS: [usize; 3] = [1, 3, 5];
pub const FUSE_KERNEL: usize = 7;

#[derive(Clone, Debug)]
pub struct ChannelAttention<T: Real = f32> {
    pub reduce: Conv2d<T>,
    pub expand: Conv2d<T>,
    pub reduction_ratio: usize,
}

#[derive(Clone, Debug)]
pub struct ChannelAttentionGrads<T: Real = f32> {
    pub reduce: Conv2dGrads<T>,
    pub expand: Conv2dGrads<T>,
}

#[derive(Clone, Debug)]
pub struct ChannelCache<T: Real = f32> {
    pooled: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
    /// `T_c` as `[B, C]`.
    pub weights: Tensor<T>,
}

impl<T: Real> ChannelAttention<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, reduction_ratio: usize, rng: &mut R) -> Result<Self> {
        let hidden = Self::bottleneck(channels, reduction_ratio)?;
        Ok(ChannelAttention {
            reduce: Conv2d::new(channels, hidden, 1, 1, 0, rng)?,
            expand: Conv2d::new(hidden, channels, 1, 1, 0, rng)?,
            reduction_ratio,
        })
    }

    pub fn zeros(channels: usize, reduction_ratio: usize) -> Result<Self> {
        let hidden = Self::bottleneck(channels, reduction_ratio)?;
        Ok(ChannelAttention {
            reduce: Conv2d::zeros(channels, hidden, 1, 1, 0)?,
            expand: Conv2d::zeros(hidden, channels, 1, 1, 0)?,
            reduction_ratio,
        })
    }

    fn bottleneck(channels: usize, ratio: usize) -> Result<usize> {
        if ratio == 0 || !channels.is_multiple_of(ratio) || channels < ratio {
            return Err(Error::Config(format!(
                "channel count {channels} is not divisible by reduction ratio {ratio}"
            )));
        }
        Ok(channels / ratio)
    }

    pub fn forward(&self, features: &Tensor<T>) -> Result<(Tensor<T>, ChannelCache<T>)> {
        let (b, c, h, w) = features.dims4("channel_attention")?;
        let pooled = global_avg_pool(features)?.reshape(&[b, c, 1, 1])?;
        let hidden_pre = self.reduce.forward(&pooled)?;
        let hidden = relu(&hidden_pre);
        let logits = self.expand.forward(&hidden)?;
        let weights = sigmoid(&logits).reshape(&[b, c])?;
        let mut out = features.clone();
        for (plane, &t) in out.data_mut().chunks_mut(h * w).zip(weights.data()) {
            plane.iter_mut().for_each(|v| *v *= t);
        }
        Ok((
            out,
            ChannelCache {
                pooled,
                hidden_pre,
                hidden,
                weights,
            },
        ))
    }

    /// Returns `∂L/∂F` given `∂L/∂F_channel`.
    pub fn backward(
        &self,
        features: &Tensor<T>,
        cache: &ChannelCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ChannelAttentionGrads<T>,
    ) -> Result<Tensor<T>> {
        features.check_same_shape("channel_attention backward", grad_out)?;
        let (b, c, h, w) = features.dims4("channel_attention backward")?;
        let hw = h * w;
        let mut d_features = grad_out.clone();
        let mut d_weights = Tensor::zeros(&[b, c]);
        for (i, (plane, &t)) in d_features.data_mut().chunks_mut(hw).zip(cache.weights.data()).enumerate() {
            let f = &features.data()[i * hw..(i + 1) * hw];
            let mut acc = T::zero();
            for (g, &x) in plane.iter_mut().zip(f) {
                acc += *g * x;
                *g *= t;
            }
            d_weights.data_mut()[i] = acc;
        }
        let d_logits = sigmoid_backward(&cache.weights, &d_weights)?.reshape(&[b, c, 1, 1])?;
        let d_hidden = self.expand.backward(&cache.hidden, &d_logits, &mut grads.expand)?;
        let d_hidden_pre = relu_backward(&cache.hidden_pre, &d_hidden)?;
        let d_pooled = self.reduce.backward(&cache.pooled, &d_hidden_pre, &mut grads.reduce)?;
        let d_gap = global_avg_pool_backward(features.shape(), &d_pooled.reshape(&[b, c])?)?;
        d_features.add_assign(&d_gap)?;
        Ok(d_features)
    }
}

impl<T: Real> ChannelAttentionGrads<T> {
    pub fn zeros_like(m: &ChannelAttention<T>) -> Self {
        ChannelAttentionGrads {
            reduce: Conv2dGrads::zeros_like(&m.reduce),
            expand: Conv2dGrads::zeros_like(&m.expand),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpatialAttention<T: Real = f32> {
    /// 1×1, 3×3 and 5×5 convolutions `C → 1`, size preserving.
    pub branches: [Conv2d<T>; 3],
    /// 7×7 convolution `1 → 1`, padding 3.
    pub fuse: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct SpatialAttentionGrads<T: Real = f32> {
    pub branches: [Conv2dGrads<T>; 3],
    pub fuse: Conv2dGrads<T>,
}

#[derive(Clone, Debug)]
pub struct SpatialCache<T: Real = f32> {
    s_avg: Tensor<T>,
    /// `T_s` as `[B, 1, H', W']`.
    pub map: Tensor<T>,
}

impl<T: Real> SpatialAttention<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Result<Self> {
        let mut mk = |k: usize| Conv2d::new(channels, 1, k, 1, k / 2, rng);
        let branches = [mk(1)?, mk(3)?, mk(5)?];
        Ok(SpatialAttention {
            branches,
            fuse: Conv2d::new(1, 1, FUSE_KERNEL, 1, FUSE_KERNEL / 2, rng)?,
        })
    }

    pub fn zeros(channels: usize) -> Result<Self> {
        let mk = |k: usize| Conv2d::zeros(channels, 1, k, 1, k / 2);
        Ok(SpatialAttention {
            branches: [mk(1)?, mk(3)?, mk(5)?],
            fuse: Conv2d::zeros(1, 1, FUSE_KERNEL, 1, FUSE_KERNEL / 2)?,
        })
    }

    /// Returns `F_final` and the cache holding `T_s`.
    pub fn forward(&self, f_channel: &Tensor<T>, features: &Tensor<T>) -> Result<(Tensor<T>, SpatialCache<T>)> {
        f_channel.check_same_shape("spatial_attention", features)?;
        let (b, _, h, w) = features.dims4("spatial_attention")?;
        let mut s_avg = Tensor::zeros(&[b, 1, h, w]);
        for branch in &self.branches {
            s_avg.add_assign(&branch.forward(f_channel)?)?;
        }
        s_avg.scale(T::one() / T::from_f64_lossy(3.0));
        let map = sigmoid(&self.fuse.forward(&s_avg)?);
        let mut out = features.clone();
        let hw = h * w;
        for (n, item) in out.data_mut().chunks_mut(features.len() / b).enumerate() {
            let t = &map.data()[n * hw..(n + 1) * hw];
            for plane in item.chunks_mut(hw) {
                for (v, &s) in plane.iter_mut().zip(t) {
                    *v *= T::one() + s;
                }
            }
        }
        Ok((out, SpatialCache { s_avg, map }))
    }

    /// Returns `(∂L/∂F_channel, ∂L/∂F)` given `∂L/∂F_final` and any extra gradient on `T_s`.
    pub fn backward(
        &self,
        f_channel: &Tensor<T>,
        features: &Tensor<T>,
        cache: &SpatialCache<T>,
        grad_out: &Tensor<T>,
        grad_map: Option<&Tensor<T>>,
        grads: &mut SpatialAttentionGrads<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        features.check_same_shape("spatial_attention backward", grad_out)?;
        let (b, _, h, w) = features.dims4("spatial_attention backward")?;
        let hw = h * w;
        let mut d_features = grad_out.clone();
        let mut d_map = match grad_map {
            Some(g) => {
                cache.map.check_same_shape("spatial_attention map grad", g)?;
                g.clone()
            }
            None => Tensor::zeros(cache.map.shape()),
        };
        let per = features.len() / b;
        for n in 0..b {
            let t = &cache.map.data()[n * hw..(n + 1) * hw];
            let dm = &mut d_map.data_mut()[n * hw..(n + 1) * hw];
            let f = &features.data()[n * per..(n + 1) * per];
            let g = &mut d_features.data_mut()[n * per..(n + 1) * per];
            for (gp, fp) in g.chunks_mut(hw).zip(f.chunks(hw)) {
                for i in 0..hw {
                    dm[i] += gp[i] * fp[i];
                    gp[i] *= T::one() + t[i];
                }
            }
        }
        let d_fused = sigmoid_backward(&cache.map, &d_map)?;
        let mut d_s_avg = self.fuse.backward(&cache.s_avg, &d_fused, &mut grads.fuse)?;
        d_s_avg.scale(T::one() / T::from_f64_lossy(3.0));
        let mut d_f_channel = Tensor::zeros(f_channel.shape());
        for (branch, g) in self.branches.iter().zip(grads.branches.iter_mut()) {
            d_f_channel.add_assign(&branch.backward(f_channel, &d_s_avg, g)?)?;
        }
        Ok((d_f_channel, d_features))
    }
}

impl<T: Real> SpatialAttentionGrads<T> {
    pub fn zeros_like(m: &SpatialAttention<T>) -> Self {
        SpatialAttentionGrads {
            branches: [
                Conv2dGrads::zeros_like(&m.branches[0]),
                Conv2dGrads::zeros_like(&m.branches[1]),
                Conv2dGrads::zeros_like(&m.branches[2]),
            ],
            fuse: Conv2dGrads::zeros_like(&m.fuse),
        }
    }
}

/// Channel attention then spatial attention.
#[derive(Clone, Debug)]
pub struct DualAttention<T: Real = f32> {
    pub channel: ChannelAttention<T>,
    pub spatial: SpatialAttention<T>,
}

#[derive(Clone, Debug)]
pub struct DualAttentionGrads<T: Real = f32> {
    pub channel: ChannelAttentionGrads<T>,
    pub spatial: SpatialAttentionGrads<T>,
}

#[derive(Clone, Debug)]
pub struct DualCache<T: Real = f32> {
    pub f_channel: Tensor<T>,
    pub channel: ChannelCache<T>,
    pub spatial: SpatialCache<T>,
}

impl<T: Real> DualAttention<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, reduction_ratio: usize, rng: &mut R) -> Result<Self> {
        Ok(DualAttention {
            channel: ChannelAttention::new(channels, reduction_ratio, rng)?,
            spatial: SpatialAttention::new(channels, rng)?,
        })
    }

    pub fn forward(&self, features: &Tensor<T>) -> Result<(Tensor<T>, DualCache<T>)> {
        let (f_channel, channel) = self.channel.forward(features)?;
        let (f_final, spatial) = self.spatial.forward(&f_channel, features)?;
        Ok((
            f_final,
            DualCache {
                f_channel,
                channel,
                spatial,
            },
        ))
    }

    pub fn backward(
        &self,
        features: &Tensor<T>,
        cache: &DualCache<T>,
        grad_out: &Tensor<T>,
        grad_map: Option<&Tensor<T>>,
        grads: &mut DualAttentionGrads<T>,
    ) -> Result<Tensor<T>> {
        let (d_f_channel, mut d_features) = self.spatial.backward(
            &cache.f_channel,
            features,
            &cache.spatial,
            grad_out,
            grad_map,
            &mut grads.spatial,
        )?;
        let d_from_channel = self
            .channel
            .backward(features, &cache.channel, &d_f_channel, &mut grads.channel)?;
        d_features.add_assign(&d_from_channel)?;
        Ok(d_features)
    }
}

impl<T: Real> DualAttentionGrads<T> {
    pub fn zeros_like(m: &DualAttention<T>) -> Self {
        DualAttentionGrads {
            channel: ChannelAttentionGrads::zeros_like(&m.channel),
            spatial: SpatialAttentionGrads::zeros_like(&m.spatial),
        }
    }
}

impl<T: Real> Params<T> for ChannelAttention<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.reduce.collect(&format!("{prefix}.reduce"), out);
        self.expand.collect(&format!("{prefix}.expand"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.reduce.collect_mut(&format!("{prefix}.reduce"), out);
        self.expand.collect_mut(&format!("{prefix}.expand"), out);
    }
}

impl<T: Real> Params<T> for ChannelAttentionGrads<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.reduce.collect(&format!("{prefix}.reduce"), out);
        self.expand.collect(&format!("{prefix}.expand"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.reduce.collect_mut(&format!("{prefix}.reduce"), out);
        self.expand.collect_mut(&format!("{prefix}.expand"), out);
    }
}

impl<T: Real> Params<T> for SpatialAttention<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for (k, b) in SPATIAL_KERNELS.iter().zip(&self.branches) {
            b.collect(&format!("{prefix}.branch{k}"), out);
        }
        self.fuse.collect(&format!("{prefix}.fuse"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (k, b) in SPATIAL_KERNELS.iter().zip(self.branches.iter_mut()) {
            b.collect_mut(&format!("{prefix}.branch{k}"), out);
        }
        self.fuse.collect_mut(&format!("{prefix}.fuse"), out);
    }
}

impl<T: Real> Params<T> for SpatialAttentionGrads<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for (k, b) in SPATIAL_KERNELS.iter().zip(&self.branches) {
            b.collect(&format!("{prefix}.branch{k}"), out);
        }
        self.fuse.collect(&format!("{prefix}.fuse"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (k, b) in SPATIAL_KERNELS.iter().zip(self.branches.iter_mut()) {
            b.collect_mut(&format!("{prefix}.branch{k}"), out);
        }
        self.fuse.collect_mut(&format!("{prefix}.fuse"), out);
    }
}

impl<T: Real> Params<T> for DualAttention<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.channel.collect(&format!("{prefix}.channel"), out);
        self.spatial.collect(&format!("{prefix}.spatial"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.channel.collect_mut(&format!("{prefix}.channel"), out);
        self.spatial.collect_mut(&format!("{prefix}.spatial"), out);
    }
}

impl<T: Real> Params<T> for DualAttentionGrads<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.channel.collect(&format!("{prefix}.channel"), out);
        self.spatial.collect(&format!("{prefix}.spatial"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.channel.collect_mut(&format!("{prefix}.channel"), out);
        self.spatial.collect_mut(&format!("{prefix}.spatial"), out);
    }
}

/// Nearest-neighbour upsampling of `[B, 1, h, w]` to `[B, 1, H, W]` with `H = s·h`, `W = s·w`.
pub fn upsample_attention<T: Real>(map: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    let (b, c, h, w) = map.dims4("upsample_attention")?;
    let s = scale_factor(h, w, target)?;
    let (th, tw) = target;
    let mut out = Tensor::zeros(&[b, c, th, tw]);
    for (src, dst) in map.data().chunks(h * w).zip(out.data_mut().chunks_mut(th * tw)) {
        for i in 0..th {
            for j in 0..tw {
                dst[i * tw + j] = src[(i / s) * w + j / s];
            }
        }
    }
    Ok(out)
}

/// Sums the gradient over each replicated block.
pub fn upsample_attention_backward<T: Real>(grad: &Tensor<T>, source: (usize, usize)) -> Result<Tensor<T>> {
    let (b, c, th, tw) = grad.dims4("upsample_attention backward")?;
    let (h, w) = source;
    let s = scale_factor(h, w, (th, tw))?;
    let mut out = Tensor::zeros(&[b, c, h, w]);
    for (src, dst) in grad.data().chunks(th * tw).zip(out.data_mut().chunks_mut(h * w)) {
        for i in 0..th {
            for j in 0..tw {
                dst[(i / s) * w + j / s] += src[i * tw + j];
            }
        }
    }
    Ok(out)
}

fn scale_factor(h: usize, w: usize, (th, tw): (usize, usize)) -> Result<usize> {
    if h == 0 || w == 0 || th % h != 0 || tw % w != 0 || th / h != tw / w || th < h {
        return Err(Error::shape(
            "upsample_attention",
            format!("{th}x{tw} is not an integer multiple of {h}x{w}"),
        ));
    }
    Ok(th / h)
}
