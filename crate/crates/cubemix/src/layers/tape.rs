//! Reverse-mode differentiation over the recorded forward pipeline.
//!
//! Forward operations append nodes holding their output value; backward
//! walks the nodes in exact reverse recording order, accumulating gradients
//! additively into per-node buffers and into the parameter store's grad
//! buffers. A tape drives exactly one backward pass.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor3::{Axis, Mat, Shape3, Tensor3};

use super::config::Activation;
use super::norm;
use super::params::{ParamId, ParamStore};

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    AxisAffine {
        input: NodeId,
        axis: Axis,
        w: ParamId,
        b: ParamId,
    },
    Activation {
        input: NodeId,
        kind: Activation,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    LayerNorm {
        input: NodeId,
        axis: Axis,
        gain: ParamId,
        bias: ParamId,
        means: Vec<T>,
        inv_stds: Vec<T>,
    },
    Reshape {
        input: NodeId,
        from: Shape3,
    },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor3<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor3<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor3<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a leaf input value.
    pub fn input(&mut self, x: Tensor3<T>) -> NodeId {
        self.push(Op::Input, x)
    }

    /// Smallest per-fiber variance any recorded layer-norm saw, recovered
    /// from the saved inverse standard deviations. `None` when nothing was
    /// normalized. Gradient checking uses this to reject evaluation points
    /// where the eps term dominates and finite differences go blind.
    pub fn min_layer_norm_variance(&self, eps: f64) -> Option<f64> {
        let mut min: Option<f64> = None;
        for node in &self.nodes {
            if let Op::LayerNorm { inv_stds, .. } = &node.op {
                for &r in inv_stds {
                    let var = (T::ONE / (r * r)).to_f64() - eps;
                    min = Some(min.map_or(var, |m: f64| m.min(var)));
                }
            }
        }
        min
    }

    pub(crate) fn axis_affine(
        &mut self,
        input: NodeId,
        axis: Axis,
        w: ParamId,
        b: ParamId,
        params: &ParamStore<T>,
    ) -> Result<NodeId> {
        let wp = params.get(w);
        let (rows, cols) = match wp.shape {
            super::params::ParamShape::Matrix(r, c) => (r, c),
            _ => return Err(Error::config(format!("{} is not a matrix", wp.name))),
        };
        let wm = Mat::new(rows, cols, wp.value.clone())?;
        let out = self.value(input).axis_matmul(&wm, params.value(b), axis)?;
        Ok(self.push(Op::AxisAffine { input, axis, w, b }, out))
    }

    pub(crate) fn activation(&mut self, input: NodeId, kind: Activation) -> Result<NodeId> {
        let out = self.value(input).map(|v| kind.apply(v))?;
        Ok(self.push(Op::Activation { input, kind }, out))
    }

    pub(crate) fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let out = self.value(lhs).add(self.value(rhs))?;
        Ok(self.push(Op::Add { lhs, rhs }, out))
    }

    pub(crate) fn layer_norm(
        &mut self,
        input: NodeId,
        axis: Axis,
        gain: ParamId,
        bias: ParamId,
        eps: f64,
        params: &ParamStore<T>,
    ) -> Result<NodeId> {
        let (out, means, inv_stds) = norm::layer_norm_with_stats(
            self.value(input),
            axis,
            params.value(gain),
            params.value(bias),
            eps,
        )?;
        Ok(self.push(
            Op::LayerNorm {
                input,
                axis,
                gain,
                bias,
                means,
                inv_stds,
            },
            out,
        ))
    }

    pub(crate) fn reshape(&mut self, input: NodeId, to: Shape3) -> Result<NodeId> {
        let from = self.value(input).shape();
        let out = self.value(input).reshaped(to)?;
        Ok(self.push(Op::Reshape { input, from }, out))
    }

    /// Propagates `loss_grad` (d loss / d output) back through the recorded
    /// computation, accumulating into `params` grad buffers. Returns the
    /// gradient with respect to the first recorded input.
    pub fn backward(&mut self, loss_grad: T, params: &mut ParamStore<T>) -> Result<Tensor3<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward called before any forward pass"));
        }
        if self.consumed {
            return Err(Error::Tape("tape already consumed by a previous backward"));
        }
        self.consumed = true;

        let last = self.nodes.len() - 1;
        let out_shape = self.nodes[last].value.shape();
        if out_shape.len() != 1 {
            return Err(Error::Tape("backward requires a scalar-shaped final node"));
        }

        let mut grads: Vec<Option<Tensor3<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[last] = Some(Tensor3::from_vec(out_shape, vec![loss_grad])?);

        for idx in (0..self.nodes.len()).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input => {
                    // Leaf: keep the gradient for the caller.
                    grads[idx] = Some(dy);
                }
                Op::AxisAffine { input, axis, w, b } => {
                    let x = &self.nodes[input.0].value;
                    let dx = axis_affine_backward(x, &dy, *axis, *w, *b, params)?;
                    accumulate(&mut grads[input.0], dx)?;
                }
                Op::Activation { input, kind } => {
                    let x = &self.nodes[input.0].value;
                    let kind = *kind;
                    let dx_data: Vec<T> = x
                        .data()
                        .iter()
                        .zip(dy.data())
                        .map(|(&xv, &g)| g * kind.grad(xv))
                        .collect();
                    let dx = Tensor3::from_vec(x.shape(), dx_data)?;
                    accumulate(&mut grads[input.0], dx)?;
                }
                Op::Add { lhs, rhs } => {
                    let (lhs, rhs) = (*lhs, *rhs);
                    accumulate(&mut grads[lhs.0], dy.clone())?;
                    accumulate(&mut grads[rhs.0], dy)?;
                }
                Op::LayerNorm {
                    input,
                    axis,
                    gain,
                    bias,
                    means,
                    inv_stds,
                } => {
                    let x = &self.nodes[input.0].value;
                    let gain_values = params.value(*gain).to_vec();
                    let n = gain_values.len();
                    let mut dgain = vec![T::ZERO; n];
                    let mut dbias = vec![T::ZERO; n];
                    let dx = norm::layer_norm_backward(
                        x,
                        &dy,
                        &gain_values,
                        means,
                        inv_stds,
                        *axis,
                        &mut dgain,
                        &mut dbias,
                    )?;
                    add_into(params.grad_mut(*gain), &dgain);
                    add_into(params.grad_mut(*bias), &dbias);
                    accumulate(&mut grads[input.0], dx)?;
                }
                Op::Reshape { input, from } => {
                    let dx = dy.reshaped(*from)?;
                    accumulate(&mut grads[input.0], dx)?;
                }
            }
        }

        let input_idx = self
            .nodes
            .iter()
            .position(|n| matches!(n.op, Op::Input))
            .ok_or(Error::Tape("no input node recorded"))?;
        grads[input_idx]
            .take()
            .ok_or(Error::Tape("input received no gradient"))
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor3<T>>, g: Tensor3<T>) -> Result<()> {
    match slot {
        None => *slot = Some(g),
        Some(existing) => *existing = existing.add(&g)?,
    }
    Ok(())
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Backward of `out = w' * fiber + b` per fiber: input gradient `w * dy`,
/// weight gradient `sum_fibers outer(x_fiber, dy_fiber)`, bias gradient
/// `sum_fibers dy_fiber`. Accumulation runs in fixed fiber order.
fn axis_affine_backward<T: Scalar>(
    x: &Tensor3<T>,
    dy: &Tensor3<T>,
    axis: Axis,
    w: ParamId,
    b: ParamId,
    params: &mut ParamStore<T>,
) -> Result<Tensor3<T>> {
    let (pre, n_in, post) = x.shape().split(axis);
    let n_out = dy.shape().extent(axis);
    let xd = x.data();
    let gd = dy.data();

    let mut dw = vec![T::ZERO; n_in * n_out];
    let mut db = vec![T::ZERO; n_out];
    let mut dx = vec![T::ZERO; x.shape().len()];

    let w_values = params.value(w);
    for p in 0..pre {
        for q in 0..post {
            let x_base = p * n_in * post + q;
            let y_base = p * n_out * post + q;
            for j in 0..n_out {
                let g = gd[y_base + j * post];
                db[j] += g;
                for i in 0..n_in {
                    let xv = xd[x_base + i * post];
                    dw[i * n_out + j] += xv * g;
                    dx[x_base + i * post] += w_values[i * n_out + j] * g;
                }
            }
        }
    }

    add_into(params.grad_mut(w), &dw);
    add_into(params.grad_mut(b), &db);
    let t = Tensor3::from_raw_unchecked(x.shape(), dx);
    t.ensure_finite("axis_affine_backward")?;
    Ok(t)
}
