use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Flat input offsets of the selected maximum for each pooled output.
#[derive(Clone, Debug)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Non-overlapping 2×2 max-pool. Ties go to the first element in row-major order.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (b, c, h, w) = input.dims4("maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2",
            format!("spatial size {h}x{w} must be even"),
        ));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    let mut argmax = vec![0usize; b * c * ho * wo];
    let x = input.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * w + 2 * j;
                for &(di, dj) in &[(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (plane * ho + i) * wo + j;
                out.data_mut()[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2_backward<T: Real>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::shape(
            "maxpool2 backward",
            format!(
                "grad_out has {} values, pooling produced {}",
                grad_out.len(),
                indices.argmax.len()
            ),
        ));
    }
    let mut dx = Tensor::zeros(&indices.input_shape);
    for (&src, &g) in indices.argmax.iter().zip(grad_out.data()) {
        dx.data_mut()[src] += g;
    }
    Ok(dx)
}

/// `[B, C, H, W] → [B, C]` spatial mean.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = input.dims4("global_avg_pool")?;
    let hw = h * w;
    if hw == 0 {
        return Err(Error::shape("global_avg_pool", "empty spatial extent"));
    }
    let data = input
        .data()
        .chunks(hw)
        .map(|plane| T::from_f64_lossy(plane.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64))
        .collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn global_avg_pool_backward<T: Real>(input_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = *input_shape else {
        return Err(Error::shape("global_avg_pool backward", "input shape must be rank 4"));
    };
    if grad_out.shape() != [b, c] {
        return Err(Error::shape(
            "global_avg_pool backward",
            format!("grad_out {:?} != [{b}, {c}]", grad_out.shape()),
        ));
    }
    let inv = T::from_f64_lossy(1.0 / (h * w) as f64);
    let mut dx = Tensor::zeros(input_shape);
    for (plane, &g) in dx.data_mut().chunks_mut(h * w).zip(grad_out.data()) {
        plane.fill(g * inv);
    }
    Ok(dx)
}
