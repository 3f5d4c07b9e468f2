//! Finite-difference checks shared by the gradient tests and the acceptance run.
//! Every check returns the worst per-element relative error it saw.

use hqcm::attention::{
    upsample_attention, upsample_attention_backward, ChannelAttention, ChannelAttentionGrads, DualAttention,
    DualAttentionGrads, SpatialAttention, SpatialAttentionGrads,
};
use hqcm::loss::{bce_attention, class_weights, cross_entropy, dice_loss, total_loss, LossWeights};
use hqcm::model::{HybridModel, Variant};
use hqcm::nn::{
    global_avg_pool, global_avg_pool_backward, maxpool2, maxpool2_backward, relu, relu_backward, sigmoid,
    sigmoid_backward, tanh, tanh_backward, BatchNorm2d, BatchNormGrads, Conv2d, Conv2dGrads, Linear, LinearGrads,
    Mode,
};
use hqcm::Tensor;
use rand::Rng;

use super::{dot, max_rel_err, numeric_grad, random_tensor, rng, tiny_config};

pub type Check = (String, f64);

fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.random_range(0.05..1.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn conv_checks(seed: u64, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, hw: usize) -> Vec<Check> {
    let mut r = rng(seed);
    let layer = Conv2d::<f64>::new(cin, cout, k, stride, pad, &mut r).unwrap();
    let x = random_tensor(&[2, cin, hw, hw], &mut r);
    let y = layer.forward(&x).unwrap();
    let w = random_tensor(y.shape(), &mut r);
    let mut grads = Conv2dGrads::zeros_like(&layer);
    let dx = layer.backward(&x, &w, &mut grads).unwrap();
    let tag = format!("conv k{k} s{stride} p{pad}");
    let fx = numeric_grad(&x, |x| dot(&w, &layer.forward(x).unwrap()));
    let fw = numeric_grad(&layer.weight, |p| {
        let mut l = layer.clone();
        l.weight = p.clone();
        dot(&w, &l.forward(&x).unwrap())
    });
    let fb = numeric_grad(&layer.bias, |p| {
        let mut l = layer.clone();
        l.bias = p.clone();
        dot(&w, &l.forward(&x).unwrap())
    });
    vec![
        (format!("{tag} input"), max_rel_err(dx.data(), &fx)),
        (format!("{tag} weight"), max_rel_err(grads.weight.data(), &fw)),
        (format!("{tag} bias"), max_rel_err(grads.bias.data(), &fb)),
    ]
}

fn linear_checks(seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let layer = Linear::<f64>::new(4, 3, &mut r);
    let x = random_tensor(&[3, 4], &mut r);
    let w = random_tensor(&[3, 3], &mut r);
    let mut grads = LinearGrads::zeros_like(&layer);
    let dx = layer.backward(&x, &w, &mut grads).unwrap();
    let fx = numeric_grad(&x, |x| dot(&w, &layer.forward(x).unwrap()));
    let fw = numeric_grad(&layer.weight, |p| {
        let mut l = layer.clone();
        l.weight = p.clone();
        dot(&w, &l.forward(&x).unwrap())
    });
    let fb = numeric_grad(&layer.bias, |p| {
        let mut l = layer.clone();
        l.bias = p.clone();
        dot(&w, &l.forward(&x).unwrap())
    });
    vec![
        ("linear input".into(), max_rel_err(dx.data(), &fx)),
        ("linear weight".into(), max_rel_err(grads.weight.data(), &fw)),
        ("linear bias".into(), max_rel_err(grads.bias.data(), &fb)),
    ]
}

fn batchnorm_checks(seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let mut layer = BatchNorm2d::<f64>::new(3);
    layer.gamma = random_tensor(&[3], &mut r);
    layer.beta = random_tensor(&[3], &mut r);
    let x = random_tensor(&[2, 3, 3, 3], &mut r);
    let w = random_tensor(&[2, 3, 3, 3], &mut r);
    let train = |l: &BatchNorm2d<f64>, x: &Tensor<f64>| {
        let mut l = l.clone();
        dot(&w, &l.forward_train(x).unwrap().0)
    };
    let mut grads = BatchNormGrads::zeros_like(&layer);
    let (_, cache) = layer.clone().forward_train(&x).unwrap();
    let dx = layer.backward(&cache, &w, &mut grads).unwrap();
    let fx = numeric_grad(&x, |x| train(&layer, x));
    let fg = numeric_grad(&layer.gamma, |p| {
        let mut l = layer.clone();
        l.gamma = p.clone();
        train(&l, &x)
    });
    let fb = numeric_grad(&layer.beta, |p| {
        let mut l = layer.clone();
        l.beta = p.clone();
        train(&l, &x)
    });
    let mut out = vec![
        ("batchnorm train input".into(), max_rel_err(dx.data(), &fx)),
        ("batchnorm train gamma".into(), max_rel_err(grads.gamma.data(), &fg)),
        ("batchnorm train beta".into(), max_rel_err(grads.beta.data(), &fb)),
    ];

    layer.running_mean = random_tensor(&[3], &mut r);
    layer.running_var = Tensor::from_vec(&[3], vec![0.5, 1.3, 2.1]).unwrap();
    let mut grads = BatchNormGrads::zeros_like(&layer);
    let dx = layer.backward_eval(&x, &w, &mut grads).unwrap();
    let fx = numeric_grad(&x, |x| dot(&w, &layer.forward_eval(x).unwrap()));
    let fg = numeric_grad(&layer.gamma, |p| {
        let mut l = layer.clone();
        l.gamma = p.clone();
        dot(&w, &l.forward_eval(&x).unwrap())
    });
    out.push(("batchnorm eval input".into(), max_rel_err(dx.data(), &fx)));
    out.push(("batchnorm eval gamma".into(), max_rel_err(grads.gamma.data(), &fg)));
    out
}

fn activation_checks(seed: u64) -> Vec<Check> {
    let x = away_from_zero(&[2, 2, 3, 3], seed);
    let w = random_tensor(x.shape(), &mut rng(seed + 1));
    let dr = relu_backward(&x, &w).unwrap();
    let ds = sigmoid_backward(&sigmoid(&x), &w).unwrap();
    let dt = tanh_backward(&tanh(&x), &w).unwrap();
    vec![
        ("relu".into(), max_rel_err(dr.data(), &numeric_grad(&x, |x| dot(&w, &relu(x))))),
        ("sigmoid".into(), max_rel_err(ds.data(), &numeric_grad(&x, |x| dot(&w, &sigmoid(x))))),
        ("tanh".into(), max_rel_err(dt.data(), &numeric_grad(&x, |x| dot(&w, &tanh(x))))),
    ]
}

fn pool_checks(seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let x = random_tensor(&[2, 2, 4, 4], &mut r);
    let (y, idx) = maxpool2(&x).unwrap();
    let w = random_tensor(y.shape(), &mut r);
    let dm = maxpool2_backward(&idx, &w).unwrap();
    let fm = numeric_grad(&x, |x| dot(&w, &maxpool2(x).unwrap().0));
    let g = global_avg_pool(&x).unwrap();
    let wg = random_tensor(g.shape(), &mut r);
    let dg = global_avg_pool_backward(x.shape(), &wg).unwrap();
    let fg = numeric_grad(&x, |x| dot(&wg, &global_avg_pool(x).unwrap()));
    let m = random_tensor(&[2, 1, 2, 2], &mut r);
    let wu = random_tensor(&[2, 1, 4, 4], &mut r);
    let du = upsample_attention_backward(&wu, (2, 2)).unwrap();
    let fu = numeric_grad(&m, |m| dot(&wu, &upsample_attention(m, (4, 4)).unwrap()));
    vec![
        ("maxpool2".into(), max_rel_err(dm.data(), &fm)),
        ("global_avg_pool".into(), max_rel_err(dg.data(), &fg)),
        ("upsample".into(), max_rel_err(du.data(), &fu)),
    ]
}

fn channel_attention_checks(seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let layer = ChannelAttention::<f64>::new(4, 2, &mut r).unwrap();
    let x = random_tensor(&[2, 4, 4, 4], &mut r);
    let w = random_tensor(x.shape(), &mut r);
    let (_, cache) = layer.forward(&x).unwrap();
    let mut grads = ChannelAttentionGrads::zeros_like(&layer);
    let dx = layer.backward(&x, &cache, &w, &mut grads).unwrap();
    let f = |l: &ChannelAttention<f64>, x: &Tensor<f64>| dot(&w, &l.forward(x).unwrap().0);
    let fx = numeric_grad(&x, |x| f(&layer, x));
    let fr = numeric_grad(&layer.reduce.weight, |p| {
        let mut l = layer.clone();
        l.reduce.weight = p.clone();
        f(&l, &x)
    });
    let fe = numeric_grad(&layer.expand.bias, |p| {
        let mut l = layer.clone();
        l.expand.bias = p.clone();
        f(&l, &x)
    });
    vec![
        ("channel attention input".into(), max_rel_err(dx.data(), &fx)),
        ("channel attention reduce.weight".into(), max_rel_err(grads.reduce.weight.data(), &fr)),
        ("channel attention expand.bias".into(), max_rel_err(grads.expand.bias.data(), &fe)),
    ]
}

fn spatial_attention_checks(seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let layer = SpatialAttention::<f64>::new(2, &mut r).unwrap();
    let fc = random_tensor(&[2, 2, 4, 4], &mut r);
    let x = random_tensor(&[2, 2, 4, 4], &mut r);
    let w = random_tensor(x.shape(), &mut r);
    let wm = random_tensor(&[2, 1, 4, 4], &mut r);
    let f = |l: &SpatialAttention<f64>, fc: &Tensor<f64>, x: &Tensor<f64>| {
        let (out, cache) = l.forward(fc, x).unwrap();
        dot(&w, &out) + dot(&wm, &cache.map)
    };
    let (_, cache) = layer.forward(&fc, &x).unwrap();
    let mut grads = SpatialAttentionGrads::zeros_like(&layer);
    let (dfc, dx) = layer.backward(&fc, &x, &cache, &w, Some(&wm), &mut grads).unwrap();
    let ffc = numeric_grad(&fc, |fc| f(&layer, fc, &x));
    let fx = numeric_grad(&x, |x| f(&layer, &fc, x));
    let mut out = vec![
        ("spatial attention f_channel".into(), max_rel_err(dfc.data(), &ffc)),
        ("spatial attention features".into(), max_rel_err(dx.data(), &fx)),
    ];
    for b in 0..3 {
        let fw = numeric_grad(&layer.branches[b].weight, |p| {
            let mut l = layer.clone();
            l.branches[b].weight = p.clone();
            f(&l, &fc, &x)
        });
        out.push((
            format!("spatial attention branch{b}.weight"),
            max_rel_err(grads.branches[b].weight.data(), &fw),
        ));
    }
    let ff = numeric_grad(&layer.fuse.weight, |p| {
        let mut l = layer.clone();
        l.fuse.weight = p.clone();
        f(&l, &fc, &x)
    });
    out.push(("spatial attention fuse.weight".into(), max_rel_err(grads.fuse.weight.data(), &ff)));
    out
}

/// Whole attention block on 2-channel 4×4 inputs, every parameter included.
pub fn attention_block_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let block = DualAttention::<f64>::new(2, 2, &mut r).unwrap();
    let x = random_tensor(&[2, 2, 4, 4], &mut r);
    let w = random_tensor(x.shape(), &mut r);
    let wm = random_tensor(&[2, 1, 4, 4], &mut r);
    let f = |b: &DualAttention<f64>, x: &Tensor<f64>| {
        let (out, cache) = b.forward(x).unwrap();
        dot(&w, &out) + dot(&wm, &cache.spatial.map)
    };
    let (_, cache) = block.forward(&x).unwrap();
    let mut grads = DualAttentionGrads::zeros_like(&block);
    let dx = block.backward(&x, &cache, &w, Some(&wm), &mut grads).unwrap();
    let mut worst = max_rel_err(dx.data(), &numeric_grad(&x, |x| f(&block, x)));
    use hqcm::nn::Params;
    let mut names = Vec::new();
    block.collect("attention", &mut names);
    let mut grad_list = Vec::new();
    grads.collect("attention", &mut grad_list);
    for (p, ((_, t), (_, g))) in names.iter().zip(&grad_list).enumerate() {
        let fd = numeric_grad(t, |v| {
            let mut b = block.clone();
            let mut list = Vec::new();
            b.collect_mut("attention", &mut list);
            *list[p].1 = v.clone();
            f(&b, &x)
        });
        worst = worst.max(max_rel_err(g.data(), &fd));
    }
    worst
}

fn loss_checks(seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let logits = random_tensor(&[4, 3], &mut r);
    let labels = [0, 2, 1, 2];
    let cw = [0.7, 1.1, 1.2];
    let (_, g_ce) = cross_entropy(&logits, &labels, &cw).unwrap();
    let f_ce = numeric_grad(&logits, |l| cross_entropy(l, &labels, &cw).unwrap().0);
    let a = Tensor::from_vec(&[2, 1, 3, 3], (0..18).map(|_| r.random_range(0.05..0.95)).collect()).unwrap();
    let t = Tensor::from_vec(&[2, 1, 3, 3], (0..18).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect()).unwrap();
    let (_, g_bce) = bce_attention(&a, &t).unwrap();
    let f_bce = numeric_grad(&a, |a| bce_attention(a, &t).unwrap().0);
    let (_, g_dice) = dice_loss(&a, &t, 1.0).unwrap();
    let f_dice = numeric_grad(&a, |a| dice_loss(a, &t, 1.0).unwrap().0);
    vec![
        ("cross entropy".into(), max_rel_err(g_ce.data(), &f_ce)),
        ("bce".into(), max_rel_err(g_bce.data(), &f_bce)),
        ("dice".into(), max_rel_err(g_dice.data(), &f_dice)),
    ]
}

/// Every classical layer, the attention sub-blocks and the loss functions.
pub fn layer_checks() -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(conv_checks(1, 2, 3, 3, 1, 1, 4));
    out.extend(conv_checks(2, 3, 2, 1, 1, 0, 4));
    out.extend(conv_checks(3, 1, 2, 5, 1, 2, 4));
    out.extend(conv_checks(4, 2, 2, 3, 2, 1, 4));
    out.extend(conv_checks(5, 1, 1, 7, 1, 3, 3));
    out.extend(linear_checks(6));
    out.extend(batchnorm_checks(7));
    out.extend(activation_checks(8));
    out.extend(pool_checks(9));
    out.extend(channel_attention_checks(10));
    out.extend(spatial_attention_checks(11));
    out.push(("attention block".into(), attention_block_check(12)));
    out.extend(loss_checks(13));
    out
}

/// Full model plus combined loss on the tiny configuration.
pub fn end_to_end_check(variant: Variant, seed: u64) -> f64 {
    let cfg = tiny_config(variant);
    let mut model = HybridModel::<f64>::new(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0xABCD);
    let b = 4;
    let images = random_tensor(&[b, 1, 8, 8], &mut r);
    let labels = [0, 1, 1, 0];
    let masks = Tensor::from_vec(
        &[b, 1, 8, 8],
        (0..b * 64)
            .map(|i| if labels[i / 64] == 1 && r.random_bool(0.3) { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap();
    let cw = class_weights(&labels, 2).unwrap();
    let weights = LossWeights::default();
    let loss = |m: &mut HybridModel<f64>| {
        let out = m.forward(&images, Mode::Train).unwrap();
        total_loss(&out.logits, &labels, &cw, &out.attention, &masks, &weights).unwrap()
    };
    let lb = loss(&mut model);
    let grads = model.backward(&lb.grad_logits, Some(&lb.grad_attention)).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.data().to_vec()).collect();
    let count = analytic.len();
    let mut worst: f64 = 0.0;
    for p in 0..count {
        let len = model.params()[p].1.len();
        let mut numeric = Vec::with_capacity(len);
        for i in 0..len {
            let orig = model.params()[p].1.data()[i];
            model.params_mut()[p].1.data_mut()[i] = orig + super::FD_STEP;
            let up = loss(&mut model).total;
            model.params_mut()[p].1.data_mut()[i] = orig - super::FD_STEP;
            let down = loss(&mut model).total;
            model.params_mut()[p].1.data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * super::FD_STEP));
        }
        worst = worst.max(max_rel_err(&analytic[p], &numeric));
    }
    worst
}
