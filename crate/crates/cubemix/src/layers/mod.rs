//! The axis-mixing network: per-axis MLP units (two affines, activation,
//! residual shortcut, layer norm), block stacking, prediction head, and the
//! hand-written backward pass.
//!
//! Inside a unit the first affine keeps the axis extent (`in_dim -> in_dim`),
//! the second maps `in_dim -> out_dim`, and the residual passes through a
//! learnable adapter whenever the extent changes (identity otherwise), so
//! the shortcut survives every configuration.

pub mod checkpoint;
mod config;
mod norm;
mod params;
mod tape;

pub use config::{Activation, BlockConfig, BlockSpec, CubeMLPConfig, HeadConfig, MLPUnitConfig};
pub use norm::{layer_norm_axis, LN_EPS};
pub use params::{init_params, Param, ParamId, ParamShape, ParamStore};
pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor3::{Axis, Shape3, Tensor3};

use params::{unit_prefix, UnitParamIds};

/// Applies one MLP unit to the value at `x`, recording on the tape. A
/// disabled unit is the identity and records nothing.
pub fn mlp_unit_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    cfg: &MLPUnitConfig,
    prefix: &str,
    params: &ParamStore<T>,
) -> Result<NodeId> {
    if !cfg.enabled {
        return Ok(x);
    }
    let extent = tape.value(x).shape().extent(cfg.axis);
    if extent != cfg.in_dim {
        return Err(Error::shape(
            "mlp_unit",
            format!(
                "axis {:?} extent {extent} does not match unit in_dim {}",
                cfg.axis, cfg.in_dim
            ),
        ));
    }
    let ids = UnitParamIds::resolve(params, prefix, cfg.has_adapter())?;
    let a1 = tape.axis_affine(x, cfg.axis, ids.w1, ids.b1, params)?;
    let act = tape.activation(a1, cfg.activation)?;
    let a2 = tape.axis_affine(act, cfg.axis, ids.w2, ids.b2, params)?;
    let shortcut = match ids.adapter {
        Some((wr, br)) => tape.axis_affine(x, cfg.axis, wr, br, params)?,
        None => x,
    };
    let sum = tape.add(a2, shortcut)?;
    tape.layer_norm(sum, cfg.axis, ids.ln_gain, ids.ln_bias, LN_EPS, params)
}

/// Tape-free convenience wrapper around [`mlp_unit_forward`].
pub fn mlp_unit_apply<T: Scalar>(
    x: &Tensor3<T>,
    cfg: &MLPUnitConfig,
    prefix: &str,
    params: &ParamStore<T>,
) -> Result<Tensor3<T>> {
    let mut tape = Tape::new();
    let node = tape.input(x.clone());
    let out = mlp_unit_forward(&mut tape, node, cfg, prefix, params)?;
    Ok(tape.value(out).clone())
}

/// Applies one block: sequence, modality, then channel unit.
pub fn cube_block_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    block: &BlockConfig,
    block_idx: usize,
    params: &ParamStore<T>,
) -> Result<NodeId> {
    let mut node = x;
    for unit in &block.units {
        let prefix = unit_prefix(block_idx, unit.axis);
        node = mlp_unit_forward(tape, node, unit, &prefix, params)?;
    }
    Ok(node)
}

fn head_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
) -> Result<NodeId> {
    let flat_len = tape.value(x).shape().len();
    let flat = tape.reshape(x, Shape3::new(flat_len, 1, 1)?)?;
    if cfg.head.hidden_dim == 0 {
        let w = params.id("head.w")?;
        let b = params.id("head.b")?;
        tape.axis_affine(flat, Axis::Sequence, w, b, params)
    } else {
        let w1 = params.id("head.w1")?;
        let b1 = params.id("head.b1")?;
        let w2 = params.id("head.w2")?;
        let b2 = params.id("head.b2")?;
        let hidden = tape.axis_affine(flat, Axis::Sequence, w1, b1, params)?;
        let act = tape.activation(hidden, cfg.head.activation)?;
        tape.axis_affine(act, Axis::Sequence, w2, b2, params)
    }
}

/// Runs the full model on `x`, recording every step, and returns the scalar
/// prediction.
pub fn model_forward<T: Scalar>(
    x: &Tensor3<T>,
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
    tape: &mut Tape<T>,
) -> Result<T> {
    if x.shape() != cfg.input {
        return Err(Error::shape(
            "model_forward",
            format!("input shape {:?} != config {:?}", x.shape(), cfg.input),
        ));
    }
    let mut node = tape.input(x.clone());
    for (i, block) in cfg.blocks.iter().enumerate() {
        node = cube_block_forward(tape, node, block, i, params)?;
    }
    let out = head_forward(tape, node, cfg, params)?;
    Ok(tape.value(out).data()[0])
}

/// Fills every parameter's grad buffer with d loss / d parameter and returns
/// d loss / d input, given `loss_grad = d loss / d prediction`.
pub fn model_backward<T: Scalar>(
    loss_grad: T,
    tape: &mut Tape<T>,
    params: &mut ParamStore<T>,
) -> Result<Tensor3<T>> {
    tape.backward(loss_grad, params)
}

/// Forward pass without gradient retention.
pub fn predict<T: Scalar>(
    x: &Tensor3<T>,
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
) -> Result<T> {
    let mut tape = Tape::new();
    model_forward(x, cfg, params, &mut tape)
}

/// Forward pass that also returns every block's output cube, for feature
/// export.
pub fn forward_block_outputs<T: Scalar>(
    x: &Tensor3<T>,
    cfg: &CubeMLPConfig,
    params: &ParamStore<T>,
) -> Result<(Vec<Tensor3<T>>, T)> {
    if x.shape() != cfg.input {
        return Err(Error::shape(
            "forward_block_outputs",
            format!("input shape {:?} != config {:?}", x.shape(), cfg.input),
        ));
    }
    let mut tape = Tape::new();
    let mut node = tape.input(x.clone());
    let mut blocks = Vec::with_capacity(cfg.blocks.len());
    for (i, block) in cfg.blocks.iter().enumerate() {
        node = cube_block_forward(&mut tape, node, block, i, params)?;
        blocks.push(tape.value(node).clone());
    }
    let out = head_forward(&mut tape, node, cfg, params)?;
    let y = tape.value(out).data()[0];
    Ok((blocks, y))
}

/// Total learnable scalar count for `cfg`.
pub fn param_count(cfg: &CubeMLPConfig) -> usize {
    let units: usize = cfg
        .blocks
        .iter()
        .flat_map(|b| b.units.iter())
        .map(|u| u.param_count())
        .sum();
    let flat = cfg.flatten_len();
    let head = if cfg.head.hidden_dim == 0 {
        flat + 1
    } else {
        let h = cfg.head.hidden_dim;
        flat * h + h + h + 1
    };
    units + head
}

/// Peak simultaneously-live element count of an inference forward pass for
/// one batch.
///
/// Counts distinct buffers with values freed as soon as they are no longer
/// needed; elementwise steps are not fused and the residual source stays
/// live until the shortcut add. The flatten step is a reshape and costs
/// nothing.
pub fn activation_footprint(cfg: &CubeMLPConfig, batch: usize) -> usize {
    let mut shape = cfg.input;
    let mut peak = shape.len();
    for block in &cfg.blocks {
        for unit in &block.units {
            if !unit.enabled {
                continue;
            }
            let e_in = shape.len();
            shape = shape
                .with_extent(unit.axis, unit.out_dim)
                .expect("validated config");
            let e_out = shape.len();
            // x + a1; then x + a1 + act; then x + act + a2.
            peak = peak.max(2 * e_in).max(3 * e_in).max(2 * e_in + e_out);
            if unit.has_adapter() {
                // x + a2 + adapter; then a2 + adapter + sum.
                peak = peak.max(e_in + 2 * e_out).max(3 * e_out);
            } else {
                // x doubles as the shortcut: x + a2 + sum.
                peak = peak.max(e_in + 2 * e_out);
            }
            // layer norm: sum + out.
            peak = peak.max(2 * e_out);
        }
    }
    let flat = shape.len();
    if cfg.head.hidden_dim == 0 {
        peak = peak.max(flat + 1);
    } else {
        let h = cfg.head.hidden_dim;
        peak = peak.max(flat + h).max(2 * h).max(h + 1);
    }
    peak * batch
}
