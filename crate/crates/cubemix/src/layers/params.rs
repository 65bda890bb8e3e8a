//! Named learnable parameters with paired gradient buffers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor3::Axis;

use super::config::CubeMLPConfig;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamShape {
    /// Row-major `rows x cols` weight, rows = fan-in.
    Matrix(usize, usize),
    Vector(usize),
}

impl ParamShape {
    pub fn len(&self) -> usize {
        match *self {
            ParamShape::Matrix(r, c) => r * c,
            ParamShape::Vector(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ParamShape::Matrix(r, c) => vec![r, c],
            ParamShape::Vector(n) => vec![n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub shape: ParamShape,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// Insertion-ordered parameter collection. Names are unique and the order is
/// stable for a given config, which fixes both the init RNG stream and the
/// checkpoint layout.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: ParamShape) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            shape,
            value: vec![T::ZERO; shape.len()],
            grad: vec![T::ZERO; shape.len()],
        });
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .map(ParamId)
            .ok_or_else(|| Error::config(format!("unknown parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::ZERO);
        }
    }

    /// Total learnable scalar count.
    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.shape.len()).sum()
    }
}

/// Parameter ids for one enabled unit, resolved by name prefix.
#[derive(Clone, Copy, Debug)]
pub(crate) struct UnitParamIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub adapter: Option<(ParamId, ParamId)>,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

impl UnitParamIds {
    pub fn resolve<T: Scalar>(
        store: &ParamStore<T>,
        prefix: &str,
        has_adapter: bool,
    ) -> Result<Self> {
        let adapter = if has_adapter {
            Some((
                store.id(&format!("{prefix}.wr"))?,
                store.id(&format!("{prefix}.br"))?,
            ))
        } else {
            None
        };
        Ok(UnitParamIds {
            w1: store.id(&format!("{prefix}.w1"))?,
            b1: store.id(&format!("{prefix}.b1"))?,
            w2: store.id(&format!("{prefix}.w2"))?,
            b2: store.id(&format!("{prefix}.b2"))?,
            adapter,
            ln_gain: store.id(&format!("{prefix}.ln_g"))?,
            ln_bias: store.id(&format!("{prefix}.ln_b"))?,
        })
    }
}

pub(crate) fn unit_prefix(block_idx: usize, axis: Axis) -> String {
    format!("block{block_idx}.unit{}", axis.letter())
}

/// Lays out the parameter set for `cfg` with zeroed values.
pub(crate) fn build_store_layout<T: Scalar>(cfg: &CubeMLPConfig) -> ParamStore<T> {
    let mut store = ParamStore::new();
    for (i, block) in cfg.blocks.iter().enumerate() {
        for unit in &block.units {
            if !unit.enabled {
                continue;
            }
            let prefix = unit_prefix(i, unit.axis);
            let (n_in, n_out) = (unit.in_dim, unit.out_dim);
            store.insert(format!("{prefix}.w1"), ParamShape::Matrix(n_in, n_in));
            store.insert(format!("{prefix}.b1"), ParamShape::Vector(n_in));
            store.insert(format!("{prefix}.w2"), ParamShape::Matrix(n_in, n_out));
            store.insert(format!("{prefix}.b2"), ParamShape::Vector(n_out));
            if unit.has_adapter() {
                store.insert(format!("{prefix}.wr"), ParamShape::Matrix(n_in, n_out));
                store.insert(format!("{prefix}.br"), ParamShape::Vector(n_out));
            }
            store.insert(format!("{prefix}.ln_g"), ParamShape::Vector(n_out));
            store.insert(format!("{prefix}.ln_b"), ParamShape::Vector(n_out));
        }
    }
    let flat = cfg.flatten_len();
    if cfg.head.hidden_dim == 0 {
        store.insert("head.w", ParamShape::Matrix(flat, 1));
        store.insert("head.b", ParamShape::Vector(1));
    } else {
        let h = cfg.head.hidden_dim;
        store.insert("head.w1", ParamShape::Matrix(flat, h));
        store.insert("head.b1", ParamShape::Vector(h));
        store.insert("head.w2", ParamShape::Matrix(h, 1));
        store.insert("head.b2", ParamShape::Vector(1));
    }
    store
}

/// Initializes parameters for `cfg`, deterministically from `seed`.
///
/// Weights draw from uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases start
/// at zero; layer-norm gains at one, layer-norm biases at zero.
pub fn init_params<T: Scalar>(cfg: &CubeMLPConfig, seed: u64) -> ParamStore<T> {
    let mut store = build_store_layout::<T>(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for param in store.iter_mut() {
        match param.shape {
            ParamShape::Matrix(rows, _) => {
                let bound = (1.0 / rows as f64).sqrt();
                for v in &mut param.value {
                    *v = T::from_f64(rng.random_range(-bound..bound));
                }
            }
            ParamShape::Vector(_) => {
                let fill = if param.name.ends_with(".ln_g") {
                    T::ONE
                } else {
                    T::ZERO
                };
                param.value.fill(fill);
            }
        }
    }
    store
}
