//! Named, ordered parameter storage and deterministic initialization.

use std::collections::HashMap;
use std::ops::Index;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ops::Conv2dSpec;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Handle to one entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
    /// Whether AdamW applies weight decay to this entry.
    pub decay: bool,
}

/// Ordered `(name, tensor)` collection. Iteration order is insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Scalar> {
    entries: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, decay: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(Param { name, value, decay });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }

    /// Scalars in entries whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Replaces a value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.entries[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{}: cannot replace {:?} with {:?}",
                slot.name,
                slot.value.shape(),
                value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.entries.iter_mut()
    }

    /// CRC32 over names, shapes and value bits, in order.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for p in &self.entries {
            h.update(p.name.as_bytes());
            for &d in p.value.shape() {
                h.update(&(d as u64).to_le_bytes());
            }
            let mut buf = Vec::with_capacity(p.value.numel() * T::DTYPE.size());
            for &v in p.value.data() {
                v.write_le(&mut buf);
            }
            h.update(&buf);
        }
        h.finalize()
    }

    /// Every parameter as a gradient-tracking leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        self.bind_where(tape, |_| true)
    }

    /// Every parameter as a constant (inference, frozen weights).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        self.bind_where(tape, |_| false)
    }

    /// Leaves for entries where `trainable` holds, constants otherwise.
    pub fn bind_where<'t>(&self, tape: &'t Tape<T>, trainable: impl Fn(&Param<T>) -> bool) -> Bound<'t, T> {
        let vars = self
            .entries
            .iter()
            .map(|p| {
                if trainable(p) {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters placed on a tape, indexed by [`ParamId`].
pub struct Bound<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    /// Substitutes the variable used for one parameter.
    pub fn replace(&mut self, id: ParamId, var: Var<'t, T>) {
        self.vars[id.0] = var;
    }
}

impl<'t, T: Scalar> Index<ParamId> for Bound<'t, T> {
    type Output = Var<'t, T>;

    fn index(&self, id: ParamId) -> &Var<'t, T> {
        &self.vars[id.0]
    }
}

/// Standard normal truncated to two standard deviations by resampling.
fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

/// Scoped parameter allocator. Names are joined with `.`.
pub struct Init<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Scalar> Init<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        Self { store, rng, prefix: String::new() }
    }

    pub fn scope(&mut self, name: impl std::fmt::Display) -> Init<'_, T> {
        Init {
            prefix: self.path(&name.to_string()),
            store: self.store,
            rng: self.rng,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn add(&mut self, name: &str, value: Tensor<T>, decay: bool) -> Result<ParamId> {
        let path = self.path(name);
        self.store.add(path, value, decay)
    }

    fn truncated(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let rng = &mut *self.rng;
        Tensor::from_fn(shape, |_| T::from_f64(std * truncated_normal(rng)))
    }

    fn fan_in_normal(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let std = (2.0 / fan_in as f64).sqrt();
        let rng = &mut *self.rng;
        Tensor::from_fn(shape, |_| T::from_f64(std * rng.sample::<f64, _>(StandardNormal)))
    }

    /// Convolution weights: truncated normal (std 0.02) for 1x1 kernels,
    /// fan-in scaled normal for spatial kernels; zero bias.
    pub fn conv(&mut self, name: &str, spec: Conv2dSpec) -> Result<Conv> {
        spec.validate()?;
        let shape = spec.weight_shape();
        let w = if spec.kernel == (1, 1) {
            self.truncated(&shape, 0.02)
        } else {
            self.fan_in_normal(&shape, shape[1] * shape[2] * shape[3])
        };
        let weight = self.add(&format!("{name}.weight"), w, true)?;
        let bias = if spec.bias {
            Some(self.add(&format!("{name}.bias"), Tensor::zeros(&[spec.out_ch]), false)?)
        } else {
            None
        };
        Ok(Conv { spec, weight, bias })
    }

    pub fn linear(&mut self, name: &str, din: usize, dout: usize) -> Result<Linear> {
        let w = self.truncated(&[dout, din], 0.02);
        let weight = self.add(&format!("{name}.weight"), w, true)?;
        let bias = self.add(&format!("{name}.bias"), Tensor::zeros(&[dout]), false)?;
        Ok(Linear { weight, bias, din, dout })
    }

    /// Layer norm over one channel axis of width `c`.
    pub fn norm(&mut self, name: &str, c: usize) -> Result<Norm> {
        let gamma = self.add(&format!("{name}.gamma"), Tensor::ones(&[c]), false)?;
        let beta = self.add(&format!("{name}.beta"), Tensor::zeros(&[c]), false)?;
        Ok(Norm { gamma, beta, channels: c })
    }
}

/// A convolution layer's parameters.
#[derive(Clone, Debug)]
pub struct Conv {
    pub spec: Conv2dSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(&self.spec, p[self.weight], self.bias.map(|b| p[b]))
    }

    /// `2 * MACs` at input extent `h x w`.
    pub fn flops(&self, h: usize, w: usize) -> Result<u64> {
        Ok(2 * self.spec.macs(h, w)?)
    }
}

/// Dense linear layer over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.linear(p[self.weight], Some(p[self.bias]))
    }

    pub fn flops(&self) -> u64 {
        2 * (self.din * self.dout) as u64
    }
}

/// Layer norm over axis 1 (channels) with per-channel affine.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

impl Norm {
    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.layer_norm(1..2, p[self.gamma], p[self.beta], crate::ops::LAYER_NORM_EPS)
    }
}
