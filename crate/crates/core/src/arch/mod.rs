//! Declarative layer graphs for hourglass backbones.
//!
//! An [`ArchGraph`] is an ordered list of [`LayerSpec`] nodes; every node only
//! consumes nodes that precede it, so list order is a valid topological order.
//! Graphs carry no weights: parameters live in [`Weights`], keyed by node id.

mod builders;
mod cost;
mod exec;

pub use builders::{BlockKind, HourglassConfig, UpsampleKind};
pub use cost::{census, cost_report, depth_report, Census, CostReport, DepthReport, ModuleCensus, StageCost};
pub use exec::{forward, Weights};

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv_output_len, Activation, TransposeSpec};

/// Operation performed by a node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerOp {
    /// The graph input; must be the first node.
    Input,
    Identity,
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        #[serde(default = "one")]
        groups: usize,
        bias: bool,
        relu: bool,
    },
    Residual {
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    Fire {
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    TransposeConv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// Nearest-neighbour 2× upsampling.
    Upsample,
    /// Elementwise sum of all inputs, optionally rectified.
    Add {
        #[serde(default)]
        relu: bool,
    },
    /// `kernel×kernel` conv + ReLU to `hidden`, then 1×1 conv to `out_channels`.
    Head {
        in_channels: usize,
        hidden: usize,
        out_channels: usize,
        kernel: usize,
        activation: Option<Activation>,
    },
}

fn one() -> usize {
    1
}

impl LayerOp {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerOp::Input => "input",
            LayerOp::Identity => "identity",
            LayerOp::Conv { .. } => "conv",
            LayerOp::Residual { .. } => "residual",
            LayerOp::Fire { .. } => "fire",
            LayerOp::TransposeConv { .. } => "transpose_conv",
            LayerOp::Upsample => "upsample",
            LayerOp::Add { .. } => "add",
            LayerOp::Head { .. } => "head",
        }
    }

    pub fn stride(&self) -> usize {
        match self {
            LayerOp::Conv { stride, .. } | LayerOp::Residual { stride, .. } | LayerOp::Fire { stride, .. } => *stride,
            _ => 1,
        }
    }

    pub fn out_channels(&self) -> Option<usize> {
        match self {
            LayerOp::Conv { out_channels, .. }
            | LayerOp::Residual { out_channels, .. }
            | LayerOp::Fire { out_channels, .. }
            | LayerOp::TransposeConv { out_channels, .. }
            | LayerOp::Head { out_channels, .. } => Some(*out_channels),
            _ => None,
        }
    }

    fn arity(&self) -> (usize, usize) {
        match self {
            LayerOp::Input => (0, 0),
            LayerOp::Add { .. } => (2, usize::MAX),
            _ => (1, 1),
        }
    }

    /// Output dims for the given input dims.
    pub fn output_dims(&self, inputs: &[[usize; 4]]) -> Result<[usize; 4]> {
        let check_c = |have: usize, want: usize| {
            if have == want {
                Ok(())
            } else {
                Err(Error::Shape(format!("expected {want} input channels, got {have}")))
            }
        };
        let conv_hw = |d: [usize; 4], k: usize, s: usize, p: usize| -> Result<(usize, usize)> {
            Ok((conv_output_len(d[2], k, s, p)?, conv_output_len(d[3], k, s, p)?))
        };
        match *self {
            LayerOp::Input => Err(Error::Graph("input node has no computed shape".into())),
            LayerOp::Identity => Ok(inputs[0]),
            LayerOp::Conv { in_channels, out_channels, kernel, stride, pad, .. } => {
                let d = inputs[0];
                check_c(d[1], in_channels)?;
                let (h, w) = conv_hw(d, kernel, stride, pad)?;
                Ok([d[0], out_channels, h, w])
            }
            LayerOp::Residual { in_channels, out_channels, stride }
            | LayerOp::Fire { in_channels, out_channels, stride } => {
                let d = inputs[0];
                check_c(d[1], in_channels)?;
                let (h, w) = conv_hw(d, 3, stride, 1)?;
                Ok([d[0], out_channels, h, w])
            }
            LayerOp::TransposeConv { in_channels, out_channels, kernel, stride, pad } => {
                let d = inputs[0];
                check_c(d[1], in_channels)?;
                let spec = TransposeSpec { in_channels, out_channels, kernel, stride, pad };
                Ok([d[0], out_channels, spec.output_len(d[2])?, spec.output_len(d[3])?])
            }
            LayerOp::Upsample => {
                let d = inputs[0];
                Ok([d[0], d[1], 2 * d[2], 2 * d[3]])
            }
            LayerOp::Add { .. } => {
                let d = inputs[0];
                if let Some(o) = inputs.iter().find(|o| **o != d) {
                    return Err(Error::Shape(format!("cannot sum {d:?} with {o:?}")));
                }
                Ok(d)
            }
            LayerOp::Head { in_channels, out_channels, kernel, .. } => {
                let d = inputs[0];
                check_c(d[1], in_channels)?;
                let (h, w) = conv_hw(d, kernel, 1, kernel / 2)?;
                Ok([d[0], out_channels, h, w])
            }
        }
    }
}

/// Structural position of a node, used for census and per-stage accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Stem,
    /// Stride-2 block entering the next level, plus any blocks following it.
    Down,
    /// Blocks on a skip connection.
    Skip,
    /// Blocks at the lowest resolution of a module.
    Middle,
    /// The upsampling operator itself.
    Upsample,
    /// Blocks after an upsampling operator.
    Up,
    /// Skip + up-path sum.
    Merge,
    /// Between stacked modules.
    Remap,
    Head,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
}

impl Role {
    pub fn new(stage: Stage) -> Self {
        Self { stage, module: None, level: None }
    }

    pub fn in_module(stage: Stage, module: usize, level: Option<usize>) -> Self {
        Self { stage, module: Some(module), level }
    }

    /// Name of the accounting bucket: `stem`, `module<i>`, `inter`, `heads`, ...
    pub fn stage_label(&self) -> String {
        match (self.stage, self.module) {
            (Stage::Input, _) => "input".into(),
            (Stage::Stem, _) => "stem".into(),
            (Stage::Remap, _) => "inter".into(),
            (Stage::Head, _) => "heads".into(),
            (Stage::Other, _) => "other".into(),
            (_, Some(m)) => format!("module{m}"),
            (_, None) => "other".into(),
        }
    }

    pub fn is_module_internal(&self) -> bool {
        matches!(self.stage, Stage::Down | Stage::Skip | Stage::Middle | Stage::Upsample | Stage::Up | Stage::Merge)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    #[serde(flatten)]
    pub op: LayerOp,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default = "other_role")]
    pub role: Role,
}

fn other_role() -> Role {
    Role::new(Stage::Other)
}

/// A named graph output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tap {
    pub name: String,
    pub node: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchGraph {
    pub name: String,
    pub input_dims: [usize; 4],
    pub nodes: Vec<LayerSpec>,
    pub taps: Vec<Tap>,
}

/// Standard tap names produced by the builders.
pub mod taps {
    pub const FEATURE: &str = "feature";
    pub const ATTENTION: [&str; 3] = ["att_small", "att_medium", "att_large"];
    pub const TL_HEAT: &str = "tl_heat";
    pub const TL_EMBED: &str = "tl_embed";
    pub const TL_OFFSET: &str = "tl_offset";
    pub const BR_HEAT: &str = "br_heat";
    pub const BR_EMBED: &str = "br_embed";
    pub const BR_OFFSET: &str = "br_offset";
}

impl ArchGraph {
    /// A graph whose only node passes the input through.
    pub fn identity(input_dims: [usize; 4]) -> Self {
        Self {
            name: "identity".into(),
            input_dims,
            nodes: vec![
                LayerSpec { id: "input".into(), op: LayerOp::Input, inputs: vec![], role: Role::new(Stage::Input) },
                LayerSpec {
                    id: "out".into(),
                    op: LayerOp::Identity,
                    inputs: vec!["input".into()],
                    role: Role::new(Stage::Other),
                },
            ],
            taps: vec![Tap { name: "out".into(), node: "out".into() }],
        }
    }

    pub fn node(&self, id: &str) -> Option<&LayerSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn tap_node(&self, name: &str) -> Option<&str> {
        self.taps.iter().find(|t| t.name == name).map(|t| t.node.as_str())
    }

    /// Checks ordering, arity and tap references, and returns the output dims of
    /// every node (in node order) for the declared input.
    pub fn infer_shapes(&self) -> Result<Vec<[usize; 4]>> {
        self.infer_shapes_for(self.input_dims)
    }

    pub fn infer_shapes_for(&self, input_dims: [usize; 4]) -> Result<Vec<[usize; 4]>> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut dims = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let fail = |msg: String| Err(Error::Graph(msg).at_node(&node.id));
            if index.contains_key(node.id.as_str()) {
                return fail("duplicate node id".into());
            }
            let (lo, hi) = node.op.arity();
            if node.inputs.len() < lo || node.inputs.len() > hi {
                return fail(format!("{} takes {lo}..={hi} inputs, has {}", node.op.kind_name(), node.inputs.len()));
            }
            let d = if node.op == LayerOp::Input {
                if i != 0 {
                    return fail("input must be the first node".into());
                }
                input_dims
            } else {
                let mut ins = Vec::with_capacity(node.inputs.len());
                for inp in &node.inputs {
                    match index.get(inp.as_str()) {
                        Some(&j) => ins.push(dims[j]),
                        None => return fail(format!("input `{inp}` is not defined before this node")),
                    }
                }
                node.op.output_dims(&ins).map_err(|e| e.at_node(&node.id))?
            };
            index.insert(&node.id, i);
            dims.push(d);
        }
        if self.nodes.first().map(|n| &n.op) != Some(&LayerOp::Input) {
            return Err(Error::Graph("graph must start with an input node".into()));
        }
        for tap in &self.taps {
            if !index.contains_key(tap.node.as_str()) {
                return Err(Error::Graph(format!("tap `{}` refers to unknown node `{}`", tap.name, tap.node)));
            }
        }
        Ok(dims)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.infer_shapes()?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_graph_shapes() {
        let g = ArchGraph::identity([1, 3, 8, 8]);
        assert_eq!(g.infer_shapes().unwrap(), vec![[1, 3, 8, 8]; 2]);
    }

    #[test]
    fn rejects_forward_reference() {
        let mut g = ArchGraph::identity([1, 3, 8, 8]);
        g.nodes[1].inputs = vec!["later".into()];
        let err = g.infer_shapes().unwrap_err().to_string();
        assert!(err.contains("`out`"), "{err}");
    }

    #[test]
    fn shape_error_names_node() {
        let mut g = ArchGraph::identity([1, 3, 8, 8]);
        g.nodes.push(LayerSpec {
            id: "bad_conv".into(),
            op: LayerOp::Conv {
                in_channels: 4,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                pad: 1,
                groups: 1,
                bias: true,
                relu: false,
            },
            inputs: vec!["out".into()],
            role: Role::new(Stage::Other),
        });
        let err = g.infer_shapes().unwrap_err().to_string();
        assert!(err.contains("bad_conv") && err.contains("channels"), "{err}");
    }

    #[test]
    fn json_schema_fields() {
        let g = ArchGraph::identity([1, 3, 8, 8]);
        let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"][1]["kind"], "identity");
        assert_eq!(v["nodes"][1]["inputs"][0], "input");
        assert_eq!(v["input_dims"], serde_json::json!([1, 3, 8, 8]));
        assert_eq!(v["taps"][0]["node"], "out");
        assert_eq!(ArchGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
    }
}
