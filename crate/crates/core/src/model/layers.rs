//! Building blocks shared by the backbone, attention branches and head.

use gradcore::{BatchNorm2d, Conv2d, Dense, Graph, Mode, ParamStore, Var};

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(store: &mut ParamStore, name: &str, in_ch: usize, out_ch: usize, stride: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), in_ch, out_ch, 3, stride, 1, false, seed)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), out_ch)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let y = self.conv.forward(g, store, x)?;
        let y = self.bn.forward(g, store, y, mode)?;
        Ok(g.relu(y))
    }
}

/// Full pre-activation bottleneck block:
/// `x + conv1x1(relu(bn(conv3x3(relu(bn(conv1x1(relu(bn(x)))))))))`.
#[derive(Clone, Debug)]
pub struct PreActBottleneck {
    bn1: BatchNorm2d,
    reduce: Conv2d,
    bn2: BatchNorm2d,
    spatial: Conv2d,
    bn3: BatchNorm2d,
    expand: Conv2d,
}

impl PreActBottleneck {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, seed: u64) -> Result<Self> {
        let inner = (channels / 4).max(1);
        Ok(Self {
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), channels)?,
            reduce: Conv2d::new(store, &format!("{name}.reduce"), channels, inner, 1, 1, 0, false, seed)?,
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), inner)?,
            spatial: Conv2d::new(store, &format!("{name}.spatial"), inner, inner, 3, 1, 1, false, seed)?,
            bn3: BatchNorm2d::new(store, &format!("{name}.bn3"), inner)?,
            expand: Conv2d::new(store, &format!("{name}.expand"), inner, channels, 1, 1, 0, false, seed)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let y = self.bn1.forward(g, store, x, mode)?;
        let y = g.relu(y);
        let y = self.reduce.forward(g, store, y)?;
        let y = self.bn2.forward(g, store, y, mode)?;
        let y = g.relu(y);
        let y = self.spatial.forward(g, store, y)?;
        let y = self.bn3.forward(g, store, y, mode)?;
        let y = g.relu(y);
        let y = self.expand.forward(g, store, y)?;
        Ok(g.add(x, y)?)
    }
}

/// Stack of dense layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], seed: u64) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.fc{i}"), w[0], w[1], true, seed))
            .collect::<gradcore::Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    /// Forward with ReLU after every layer.
    pub fn forward_hidden(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(g, store, x)?;
            x = g.relu(x);
        }
        Ok(x)
    }
}
