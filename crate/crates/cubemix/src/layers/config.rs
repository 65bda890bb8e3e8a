//! Model configuration: per-axis MLP units, block stacking, prediction head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor3::{Axis, Shape3};

/// Nonlinearity used inside MLP units and the hidden head layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Gelu
    }
}

// tanh-form GELU constants.
const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044_715;

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let c0 = T::from_f64(GELU_SCALE);
                let c1 = T::from_f64(GELU_CUBIC);
                let half = T::from_f64(0.5);
                let inner = c0 * (x + c1 * x * x * x);
                half * x * (T::ONE + inner.tanh())
            }
            Activation::Relu => x.max(T::ZERO),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at `x`. ReLU uses the subgradient 0 at the origin.
    pub fn grad<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let c0 = T::from_f64(GELU_SCALE);
                let c1 = T::from_f64(GELU_CUBIC);
                let half = T::from_f64(0.5);
                let three = T::from_f64(3.0);
                let t = (c0 * (x + c1 * x * x * x)).tanh();
                let dinner = c0 * (T::ONE + three * c1 * x * x);
                half * (T::ONE + t) + half * x * (T::ONE - t * t) * dinner
            }
            Activation::Relu => {
                if x > T::ZERO {
                    T::ONE
                } else {
                    T::ZERO
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::ONE - t * t
            }
        }
    }
}

/// One axis-mixing MLP unit: two affines with an activation between, a
/// residual shortcut, and layer normalization along the mixed axis.
///
/// A disabled unit is exactly the identity and owns no parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MLPUnitConfig {
    pub axis: Axis,
    pub in_dim: usize,
    pub out_dim: usize,
    pub enabled: bool,
    pub activation: Activation,
}

impl MLPUnitConfig {
    /// Whether the residual shortcut needs a learnable projection.
    pub fn has_adapter(&self) -> bool {
        self.enabled && self.in_dim != self.out_dim
    }

    /// Learnable scalar count: two affines, optional residual adapter, and
    /// the layer-norm gain/bias pair.
    pub fn param_count(&self) -> usize {
        if !self.enabled {
            return 0;
        }
        let affine1 = self.in_dim * self.in_dim + self.in_dim;
        let affine2 = self.in_dim * self.out_dim + self.out_dim;
        let adapter = if self.has_adapter() {
            self.in_dim * self.out_dim + self.out_dim
        } else {
            0
        };
        affine1 + affine2 + adapter + 2 * self.out_dim
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::config(format!(
                "unit on axis {:?}: dims must be >= 1, got {} -> {}",
                self.axis, self.in_dim, self.out_dim
            )));
        }
        if !self.enabled && self.in_dim != self.out_dim {
            return Err(Error::config(format!(
                "disabled unit on axis {:?} must keep its extent ({} -> {})",
                self.axis, self.in_dim, self.out_dim
            )));
        }
        Ok(())
    }
}

/// One CubeMLP block: sequence, modality, then channel mixing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub units: [MLPUnitConfig; 3],
}

impl BlockConfig {
    pub fn unit(&self, axis: Axis) -> &MLPUnitConfig {
        &self.units[axis.index()]
    }

    pub fn out_dims(&self) -> (usize, usize, usize) {
        (
            self.units[0].out_dim,
            self.units[1].out_dim,
            self.units[2].out_dim,
        )
    }
}

/// Prediction head mapping the flattened cube to a scalar. `hidden_dim = 0`
/// is a single affine; otherwise affine -> activation -> affine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    #[serde(default)]
    pub hidden_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_dim: 0,
            activation: Activation::Gelu,
        }
    }
}

/// Target extents and enable flags for one block, used to build configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub out_dims: (usize, usize, usize),
    pub enabled: (bool, bool, bool),
}

impl BlockSpec {
    pub fn dense(out_dims: (usize, usize, usize)) -> Self {
        BlockSpec {
            out_dims,
            enabled: (true, true, true),
        }
    }
}

/// Full model configuration: input shape, stacked blocks, head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeMLPConfig {
    pub input: Shape3,
    pub blocks: Vec<BlockConfig>,
    pub head: HeadConfig,
}

impl CubeMLPConfig {
    /// Builds a chained config from per-block target dims. A disabled unit
    /// keeps its axis extent regardless of the requested value.
    pub fn build(
        input: Shape3,
        blocks: &[BlockSpec],
        activation: Activation,
        head: HeadConfig,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::config("at least one block is required"));
        }
        let mut shape = input;
        let mut built = Vec::with_capacity(blocks.len());
        for spec in blocks {
            let targets = [spec.out_dims.0, spec.out_dims.1, spec.out_dims.2];
            let flags = [spec.enabled.0, spec.enabled.1, spec.enabled.2];
            let mut units = [MLPUnitConfig {
                axis: Axis::Sequence,
                in_dim: 1,
                out_dim: 1,
                enabled: true,
                activation,
            }; 3];
            for (k, axis) in Axis::ALL.into_iter().enumerate() {
                let in_dim = shape.extent(axis);
                let out_dim = if flags[k] { targets[k] } else { in_dim };
                units[k] = MLPUnitConfig {
                    axis,
                    in_dim,
                    out_dim,
                    enabled: flags[k],
                    activation,
                };
                shape = shape.with_extent(axis, out_dim).map_err(|e| {
                    Error::config(format!("block output dims invalid: {e}"))
                })?;
            }
            built.push(BlockConfig { units });
        }
        let cfg = CubeMLPConfig {
            input,
            blocks: built,
            head,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Shape after the last block.
    pub fn final_shape(&self) -> Shape3 {
        let last = self.blocks.last().expect("validated config has blocks");
        let (l, m, d) = last.out_dims();
        Shape3 { l, m, d }
    }

    /// Flattened feature length fed to the head.
    pub fn flatten_len(&self) -> usize {
        self.final_shape().len()
    }

    /// Checks unit order, dimension chaining, and head consistency.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::config("at least one block is required"));
        }
        Shape3::new(self.input.l, self.input.m, self.input.d)
            .map_err(|e| Error::config(format!("input shape invalid: {e}")))?;
        let mut shape = self.input;
        for (i, block) in self.blocks.iter().enumerate() {
            for (k, axis) in Axis::ALL.into_iter().enumerate() {
                let unit = &block.units[k];
                if unit.axis != axis {
                    return Err(Error::config(format!(
                        "block {i}: unit {k} must mix axis {axis:?}, got {:?}",
                        unit.axis
                    )));
                }
                unit.validate()?;
                if unit.in_dim != shape.extent(axis) {
                    return Err(Error::config(format!(
                        "block {i} axis {axis:?}: in_dim {} does not chain from {}",
                        unit.in_dim,
                        shape.extent(axis)
                    )));
                }
                shape = shape
                    .with_extent(axis, unit.out_dim)
                    .map_err(|e| Error::config(format!("block {i}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Copy of this config with different unit enable flags everywhere,
    /// re-chaining extents (a disabled unit keeps its axis extent).
    pub fn with_unit_flags(&self, flags: (bool, bool, bool)) -> Result<Self> {
        let specs: Vec<BlockSpec> = self
            .blocks
            .iter()
            .map(|b| BlockSpec {
                out_dims: b.out_dims(),
                enabled: flags,
            })
            .collect();
        let activation = self.blocks[0].units[0].activation;
        CubeMLPConfig::build(self.input, &specs, activation, self.head)
    }

    /// Copy of this config with the final block's extent on `axis` replaced.
    pub fn with_final_axis_dim(&self, axis: Axis, value: usize) -> Result<Self> {
        let mut specs: Vec<BlockSpec> = self
            .blocks
            .iter()
            .map(|b| BlockSpec {
                out_dims: b.out_dims(),
                enabled: (b.units[0].enabled, b.units[1].enabled, b.units[2].enabled),
            })
            .collect();
        let last = specs.last_mut().expect("validated config has blocks");
        match axis {
            Axis::Sequence => last.out_dims.0 = value,
            Axis::Modality => last.out_dims.1 = value,
            Axis::Channel => last.out_dims.2 = value,
        }
        let activation = self.blocks[0].units[0].activation;
        CubeMLPConfig::build(self.input, &specs, activation, self.head)
    }
}
