//! Layer normalization along one tensor axis.
//!
//! Each fiber along the axis is centered and scaled to unit population
//! variance (divisor = extent, `eps` inside the square root), then scaled by
//! a learnable gain and shifted by a learnable bias indexed along the same
//! axis.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor3::{Axis, Tensor3};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
const PARALLEL_FIBER_THRESHOLD: usize = 1 << 14;

/// Default epsilon inside the variance square root.
pub const LN_EPS: f64 = 1e-5;

/// Normalizes every fiber of `x` along `axis`, then applies `gain`/`bias`.
pub fn layer_norm_axis<T: Scalar>(
    x: &Tensor3<T>,
    axis: Axis,
    gain: &[T],
    bias: &[T],
    eps: f64,
) -> Result<Tensor3<T>> {
    let (out, _, _) = layer_norm_with_stats(x, axis, gain, bias, eps)?;
    Ok(out)
}

/// Forward pass that also returns per-fiber mean and 1/std, indexed by
/// `p * post + q` (the fiber's position among the untouched axes).
pub(crate) fn layer_norm_with_stats<T: Scalar>(
    x: &Tensor3<T>,
    axis: Axis,
    gain: &[T],
    bias: &[T],
    eps: f64,
) -> Result<(Tensor3<T>, Vec<T>, Vec<T>)> {
    let shape = x.shape();
    let (pre, n, post) = shape.split(axis);
    if gain.len() != n || bias.len() != n {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "gain/bias lengths {}/{} do not match axis extent {n}",
                gain.len(),
                bias.len()
            ),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::shape("layer_norm", "eps must be > 0".to_string()));
    }
    let eps = T::from_f64(eps);
    let inv_n = T::ONE / T::from_f64(n as f64);
    let data = x.data();

    let fiber_count = pre * post;
    let mut out = vec![T::ZERO; shape.len()];
    let mut means = vec![T::ZERO; fiber_count];
    let mut inv_stds = vec![T::ZERO; fiber_count];

    // Each fiber is normalized independently; the (mean, var) reductions run
    // in fiber order inside one task, so the parallel split over fibers is
    // bit-identical to the sequential loop.
    let normalize = |fiber: usize, out: &mut [T], mean_slot: &mut T, inv_std_slot: &mut T| {
        let p = fiber / post;
        let q = fiber % post;
        let base = p * n * post + q;
        let mut sum = T::ZERO;
        for i in 0..n {
            sum += data[base + i * post];
        }
        let mean = sum * inv_n;
        let mut var = T::ZERO;
        for i in 0..n {
            let d = data[base + i * post] - mean;
            var += d * d;
        }
        var *= inv_n;
        let inv_std = T::ONE / (var + eps).sqrt();
        for i in 0..n {
            let normed = (data[base + i * post] - mean) * inv_std;
            out[i * post] = gain[i] * normed + bias[i];
        }
        *mean_slot = mean;
        *inv_std_slot = inv_std;
    };

    let run_sequential = |out: &mut [T], means: &mut [T], inv_stds: &mut [T]| {
        for fiber in 0..fiber_count {
            let p = fiber / post;
            let q = fiber % post;
            let base = p * n * post + q;
            let (mut m, mut s) = (T::ZERO, T::ZERO);
            normalize(fiber, &mut out[base..], &mut m, &mut s);
            means[fiber] = m;
            inv_stds[fiber] = s;
        }
    };

    #[cfg(feature = "parallel")]
    {
        if shape.len() >= PARALLEL_FIBER_THRESHOLD && post == 1 {
            // Channel-axis case: fibers are contiguous, chunk cleanly.
            out.par_chunks_mut(n)
                .zip(means.par_iter_mut())
                .zip(inv_stds.par_iter_mut())
                .enumerate()
                .for_each(|(fiber, ((chunk, m), s))| {
                    normalize(fiber, chunk, m, s);
                });
        } else {
            run_sequential(&mut out, &mut means, &mut inv_stds);
        }
    }
    #[cfg(not(feature = "parallel"))]
    run_sequential(&mut out, &mut means, &mut inv_stds);

    let t = Tensor3::from_raw_unchecked(shape, out);
    t.ensure_finite("layer_norm")?;
    Ok((t, means, inv_stds))
}

/// Backward pass given saved per-fiber stats. Returns the input gradient and
/// accumulates gain/bias gradients into the provided buffers.
pub(crate) fn layer_norm_backward<T: Scalar>(
    x: &Tensor3<T>,
    dy: &Tensor3<T>,
    gain: &[T],
    means: &[T],
    inv_stds: &[T],
    axis: Axis,
    dgain: &mut [T],
    dbias: &mut [T],
) -> Result<Tensor3<T>> {
    let shape = x.shape();
    let (pre, n, post) = shape.split(axis);
    let inv_n = T::ONE / T::from_f64(n as f64);
    let xd = x.data();
    let gd = dy.data();

    let mut dx = vec![T::ZERO; shape.len()];
    for fiber in 0..pre * post {
        let p = fiber / post;
        let q = fiber % post;
        let base = p * n * post + q;
        let mean = means[fiber];
        let r = inv_stds[fiber];

        let mut sum_dxhat = T::ZERO;
        let mut sum_dxhat_xhat = T::ZERO;
        for i in 0..n {
            let xhat = (xd[base + i * post] - mean) * r;
            let g = gd[base + i * post];
            let dxhat = g * gain[i];
            dgain[i] += g * xhat;
            dbias[i] += g;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        let mean_dxhat = sum_dxhat * inv_n;
        let mean_dxhat_xhat = sum_dxhat_xhat * inv_n;
        for i in 0..n {
            let xhat = (xd[base + i * post] - mean) * r;
            let dxhat = gd[base + i * post] * gain[i];
            dx[base + i * post] = r * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
    }
    let t = Tensor3::from_raw_unchecked(shape, dx);
    t.ensure_finite("layer_norm_backward")?;
    Ok(t)
}
