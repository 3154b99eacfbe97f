//! Parameterized layers built on [`Graph`] ops. Each layer registers its
//! tensors in a [`ParamStore`] under a dotted name prefix.

use crate::error::Result;
use crate::graph::{BnMode, Graph, Var};
use crate::params::{he_uniform, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        seed: u64,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel * kernel;
        let wname = format!("{name}.weight");
        let w = he_uniform(&[out_ch, in_ch, kernel, kernel], fan_in, seed, &wname);
        let weight = store.add(wname, w)?;
        let bias = if bias { Some(store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?) } else { None };
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, seed: u64) -> Result<Self> {
        let wname = format!("{name}.weight");
        let w = he_uniform(&[in_dim, out_dim], in_dim, seed, &wname);
        let weight = store.add(wname, w)?;
        let bias = if bias { Some(store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?) } else { None };
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.dense(x, w, b)
    }
}

/// Batch norm with running statistics kept as non-trainable store entries.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0))?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]))?,
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels]))?,
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[channels], 1.0))?,
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        })
    }

    /// Train mode updates the running statistics in `store` with
    /// `r ← (1-momentum)·r + momentum·batch`, using the unbiased batch variance.
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        match mode {
            Mode::Train => {
                let (y, stats) = g.batch_norm(x, gamma, beta, BnMode::Train, self.eps)?;
                let stats = stats.expect("train mode returns statistics");
                let n = stats.count as f64;
                let unbias = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
                let m = self.momentum;
                let rm = store.get_mut(self.running_mean).value.data_mut();
                for (r, b) in rm.iter_mut().zip(&stats.mean) {
                    *r = (1.0 - m) * *r + m * b;
                }
                let rv = store.get_mut(self.running_var).value.data_mut();
                for (r, b) in rv.iter_mut().zip(&stats.var) {
                    *r = (1.0 - m) * *r + m * b * unbias;
                }
                Ok(y)
            }
            Mode::Eval => {
                let mean = store.value(self.running_mean).data();
                let var = store.value(self.running_var).data();
                let (y, _) = g.batch_norm(x, gamma, beta, BnMode::Eval { mean, var }, self.eps)?;
                Ok(y)
            }
        }
    }
}
