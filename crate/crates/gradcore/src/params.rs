use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GradError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensor owned by a [`ParamStore`].
///
/// Non-trainable entries (batch-norm running statistics) share the same
/// storage so they travel with checkpoints, but the optimizer skips them.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        self.insert(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        self.insert(name.into(), value, false)
    }

    fn insert(&mut self, name: String, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(&name) {
            return Err(GradError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad, trainable });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let dst = self.params[id.0].grad.data_mut();
        for (d, g) in dst.iter_mut().zip(grad) {
            *d += g;
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Overwrite values from `other` by name; shapes must agree.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        for p in &other.params {
            let id = self.id(&p.name).ok_or_else(|| GradError::UnknownParameter(p.name.clone()))?;
            let dst = &mut self.params[id.0];
            if dst.value.shape() != p.value.shape() {
                return Err(GradError::shape("load_values", format!("`{}`: {:?} vs {:?}", p.name, dst.value.shape(), p.value.shape())));
            }
            dst.value = p.value.clone();
        }
        if other.len() != self.len() {
            let missing = self.names().find(|n| other.id(n).is_none()).unwrap_or_default().to_string();
            return Err(GradError::UnknownParameter(missing));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; used to derive independent seeds from a base seed.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of a string. Stable across platforms and runs.
pub fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// He-style uniform initialization `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
///
/// The stream is keyed on `(seed, name)`, so a parameter's initial value
/// does not depend on which other parameters exist in the model.
pub fn he_uniform(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, name_hash(name)));
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(s.add("w", Tensor::zeros(&[2])), Err(GradError::DuplicateParameter(_))));
    }

    #[test]
    fn init_is_keyed_by_name_and_seed() {
        let a = he_uniform(&[4, 4], 4, 7, "conv.w");
        let b = he_uniform(&[4, 4], 4, 7, "conv.w");
        let c = he_uniform(&[4, 4], 4, 8, "conv.w");
        let d = he_uniform(&[4, 4], 4, 7, "conv.v");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        let bound = (6.0f64 / 4.0).sqrt();
        assert!(a.data().iter().all(|v| v.abs() < bound));
    }
}
