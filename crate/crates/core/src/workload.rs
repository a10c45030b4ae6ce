//! DNN layers as 8-deep loop nests and the network file format.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

/// Loop dimensions of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dim {
    B,
    K,
    C,
    OX,
    OY,
    FX,
    FY,
    G,
}

impl Dim {
    pub const ALL: [Dim; 8] = [Dim::B, Dim::K, Dim::C, Dim::OX, Dim::OY, Dim::FX, Dim::FY, Dim::G];

    pub fn name(self) -> &'static str {
        match self {
            Dim::B => "B",
            Dim::K => "K",
            Dim::C => "C",
            Dim::OX => "OX",
            Dim::OY => "OY",
            Dim::FX => "FX",
            Dim::FY => "FY",
            Dim::G => "G",
        }
    }
}

impl std::fmt::Display for Dim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Conv,
    Pointwise,
    Depthwise,
    Dense,
    /// Element-wise residual addition; carried through but not modeled.
    ResidualAdd,
}

impl OpKind {
    pub fn is_modeled(self) -> bool {
        self != OpKind::ResidualAdd
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv => "conv",
            OpKind::Pointwise => "pointwise",
            OpKind::Depthwise => "depthwise",
            OpKind::Dense => "dense",
            OpKind::ResidualAdd => "residual-add",
        }
    }
}

/// Loop bounds; dimensions omitted in files default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default = "LoopBounds::ones")]
pub struct LoopBounds {
    #[serde(rename = "B")]
    pub b: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "C")]
    pub c: u64,
    #[serde(rename = "OX")]
    pub ox: u64,
    #[serde(rename = "OY")]
    pub oy: u64,
    #[serde(rename = "FX")]
    pub fx: u64,
    #[serde(rename = "FY")]
    pub fy: u64,
    #[serde(rename = "G")]
    pub g: u64,
}

impl LoopBounds {
    pub fn ones() -> Self {
        LoopBounds { b: 1, k: 1, c: 1, ox: 1, oy: 1, fx: 1, fy: 1, g: 1 }
    }

    pub fn get(&self, dim: Dim) -> u64 {
        match dim {
            Dim::B => self.b,
            Dim::K => self.k,
            Dim::C => self.c,
            Dim::OX => self.ox,
            Dim::OY => self.oy,
            Dim::FX => self.fx,
            Dim::FY => self.fy,
            Dim::G => self.g,
        }
    }

    pub fn set(&mut self, dim: Dim, value: u64) {
        let slot = match dim {
            Dim::B => &mut self.b,
            Dim::K => &mut self.k,
            Dim::C => &mut self.c,
            Dim::OX => &mut self.ox,
            Dim::OY => &mut self.oy,
            Dim::FX => &mut self.fx,
            Dim::FY => &mut self.fy,
            Dim::G => &mut self.g,
        };
        *slot = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Precision {
    #[serde(rename = "B_i")]
    pub b_i: u64,
    #[serde(rename = "B_w")]
    pub b_w: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub name: String,
    pub op_kind: OpKind,
    pub loops: LoopBounds,
    pub precision: Precision,
    #[serde(default = "unit_strides")]
    pub strides: [u64; 2],
}

fn unit_strides() -> [u64; 2] {
    [1, 1]
}

fn checked_product(values: &[u64], what: &str) -> Result<u64> {
    values
        .iter()
        .try_fold(1u64, |acc, &v| acc.checked_mul(v))
        .ok_or_else(|| Error::Overflow(what.to_string()))
}

/// Number of distinct input positions touched along one spatial axis.
fn touched_extent(out: u64, filter: u64, stride: u64) -> u64 {
    if filter >= stride {
        (out - 1) * stride + filter
    } else {
        out * filter
    }
}

impl LayerWorkload {
    pub fn validate(&self) -> Result<()> {
        let ctx = format!("layer `{}`", self.name);
        for dim in Dim::ALL {
            if self.loops.get(dim) == 0 {
                return Err(Error::invalid(&ctx, dim.name(), "loop bound must be >= 1"));
            }
        }
        if self.precision.b_i == 0 {
            return Err(Error::invalid(&ctx, "B_i", "precision must be >= 1 bit"));
        }
        if self.precision.b_w == 0 {
            return Err(Error::invalid(&ctx, "B_w", "precision must be >= 1 bit"));
        }
        if self.strides.contains(&0) {
            return Err(Error::invalid(&ctx, "strides", "strides must be >= 1"));
        }
        let l = &self.loops;
        match self.op_kind {
            OpKind::Pointwise => {
                if l.fx != 1 || l.fy != 1 {
                    return Err(Error::invalid(&ctx, "FX", "pointwise layers require FX = FY = 1"));
                }
            }
            OpKind::Dense => {
                for (d, v) in [(Dim::OX, l.ox), (Dim::OY, l.oy), (Dim::FX, l.fx), (Dim::FY, l.fy)] {
                    if v != 1 {
                        return Err(Error::invalid(&ctx, d.name(), "dense layers require OX = OY = FX = FY = 1"));
                    }
                }
            }
            OpKind::Depthwise => {
                if l.g <= 1 {
                    return Err(Error::invalid(&ctx, "G", "depthwise layers require G > 1"));
                }
                if l.c != 1 || l.k != 1 {
                    return Err(Error::invalid(&ctx, "C", "depthwise layers require C = K = 1 per group"));
                }
            }
            OpKind::Conv | OpKind::ResidualAdd => {}
        }
        self.total_macs().map(|_| ())
    }

    /// `B * K * C * OX * OY * FX * FY * G`, with overflow checking.
    pub fn total_macs(&self) -> Result<u64> {
        let l = &self.loops;
        checked_product(
            &[l.b, l.k, l.c, l.ox, l.oy, l.fx, l.fy, l.g],
            &format!("MAC count of layer `{}`", self.name),
        )
    }

    pub fn weight_elems(&self) -> u64 {
        let l = &self.loops;
        l.g * l.k * l.c * l.fx * l.fy
    }

    pub fn output_elems(&self) -> u64 {
        let l = &self.loops;
        l.b * l.g * l.k * l.ox * l.oy
    }

    /// Input elements actually read by the layer (strided windows can skip pixels).
    pub fn input_elems(&self) -> u64 {
        let l = &self.loops;
        let ix = touched_extent(l.ox, l.fx, self.strides[0]);
        let iy = touched_extent(l.oy, l.fy, self.strides[1]);
        l.b * l.g * l.c * ix * iy
    }

    /// Reduction length per output (`C * FX * FY`).
    pub fn reduction_len(&self) -> u64 {
        self.loops.c * self.loops.fx * self.loops.fy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub layers: Vec<LayerWorkload>,
}

impl Network {
    pub fn validate(&self) -> Result<()> {
        let ctx = format!("network `{}`", self.name);
        if self.layers.is_empty() {
            return Err(Error::invalid(ctx, "layers", "network has no layers"));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::invalid(ctx, "name", format!("duplicate layer name `{}`", layer.name)));
            }
            layer.validate()?;
        }
        Ok(())
    }

    pub fn from_json_str(src: &str, path: &Path) -> Result<Self> {
        let net: Network = serde_json::from_str(src).map_err(|e| error::json_error(path, e))?;
        net.validate()?;
        Ok(net)
    }

    pub fn total_macs(&self) -> Result<u64> {
        self.layers.iter().try_fold(0u64, |acc, l| {
            acc.checked_add(l.total_macs()?)
                .ok_or_else(|| Error::Overflow(format!("MAC count of network `{}`", self.name)))
        })
    }
}

pub fn load_network(path: &Path) -> Result<Network> {
    let src = error::read_to_string(path)?;
    Network::from_json_str(&src, path)
}
