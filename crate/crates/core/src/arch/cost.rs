use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exec::allocate;
use super::{ArchGraph, LayerOp, Stage};
use crate::blocks::Init;
use crate::error::{Error, Result};

/// Parameter and compute totals for one accounting bucket.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    pub stage: String,
    pub weights: u64,
    pub biases: u64,
    pub macs: u64,
    /// Sum of the output tensor sizes of the bucket's nodes.
    pub activation_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub graph: String,
    pub input_dims: [usize; 4],
    pub bytes_per_element: u64,
    pub total_weights: u64,
    pub total_biases: u64,
    pub macs: u64,
    /// Largest single output tensor.
    pub peak_tensor_bytes: u64,
    pub peak_tensor_node: String,
    /// Largest total of simultaneously live tensors when each is freed after its last use.
    pub peak_live_bytes: u64,
    pub total_activation_bytes: u64,
    /// Largest single tensor produced inside the hourglass modules.
    pub module_peak_bytes: u64,
    /// Largest spatial area (h·w) of a tensor produced inside the hourglass modules.
    pub module_peak_area: u64,
    pub stages: Vec<StageCost>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.total_weights + self.total_biases
    }

    pub fn stage(&self, name: &str) -> Option<&StageCost> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Weights plus biases of every `module<i>` bucket.
    pub fn module_params(&self) -> u64 {
        self.stages.iter().filter(|s| s.stage.starts_with("module")).map(|s| s.weights + s.biases).sum()
    }

    pub fn module_macs(&self) -> u64 {
        self.stages.iter().filter(|s| s.stage.starts_with("module")).map(|s| s.macs).sum()
    }
}

/// Closed-form `(weights, biases, macs)` of one node.
pub fn layer_cost(op: &LayerOp, input: [usize; 4], output: [usize; 4]) -> (u64, u64, u64) {
    let u = |v: usize| v as u64;
    let in_area = u(input[0] * input[2] * input[3]);
    let out_area = u(output[0] * output[2] * output[3]);
    match *op {
        LayerOp::Conv { in_channels, out_channels, kernel, groups, bias, .. } => {
            let w = u(out_channels * (in_channels / groups) * kernel * kernel);
            (w, if bias { u(out_channels) } else { 0 }, w * out_area)
        }
        LayerOp::Residual { in_channels: k, out_channels: ko, stride } => {
            let (mut w, mut b) = (u(9 * k * ko + 9 * ko * ko), u(2 * ko));
            if k != ko || stride != 1 {
                w += u(k * ko);
                b += u(ko);
            }
            (w, b, w * out_area)
        }
        LayerOp::Fire { in_channels: k, out_channels: ko, .. } => {
            let h = u(ko / 2);
            let squeeze = u(k) * h;
            let expand = h * h + 9 * h;
            (squeeze + expand, 2 * h, squeeze * in_area + expand * out_area)
        }
        LayerOp::TransposeConv { in_channels, out_channels, kernel, .. } => {
            let w = u(in_channels * out_channels * kernel * kernel);
            (w, u(out_channels), w * in_area)
        }
        LayerOp::Head { in_channels, hidden, out_channels, kernel, .. } => {
            let w = u(hidden * in_channels * kernel * kernel + out_channels * hidden);
            (w, u(hidden + out_channels), w * out_area)
        }
        LayerOp::Input | LayerOp::Identity | LayerOp::Upsample | LayerOp::Add { .. } => (0, 0, 0),
    }
}

/// Accounting at `input_dims` with `bytes_per_element`-sized activations.
///
/// Weight and bias totals come from allocating each node's parameter tensors and
/// counting their elements; the closed form in [`layer_cost`] must agree node by
/// node or an error is returned.
pub fn cost_report(graph: &ArchGraph, input_dims: [usize; 4], bytes_per_element: u64) -> Result<CostReport> {
    let dims = graph.infer_shapes_for(input_dims)?;
    let index: HashMap<&str, usize> = graph.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let bytes = |d: [usize; 4]| d.iter().map(|&v| v as u64).product::<u64>() * bytes_per_element;

    let mut stages: BTreeMap<String, StageCost> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut report = CostReport {
        graph: graph.name.clone(),
        input_dims,
        bytes_per_element,
        total_weights: 0,
        total_biases: 0,
        macs: 0,
        peak_tensor_bytes: 0,
        peak_tensor_node: String::new(),
        peak_live_bytes: 0,
        total_activation_bytes: 0,
        module_peak_bytes: 0,
        module_peak_area: 0,
        stages: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (i, node) in graph.nodes.iter().enumerate() {
        let input = node.inputs.first().map(|id| dims[index[id.as_str()]]).unwrap_or(input_dims);
        let (w, b, macs) = layer_cost(&node.op, input, dims[i]);
        let counted = allocate::<f32>(&node.op, Init::Zeros, &mut rng)
            .map_err(|e| e.at_node(&node.id))?
            .map(|p| p.enumerate_counts())
            .unwrap_or((0, 0));
        if counted != (w as usize, b as usize) {
            return Err(Error::Graph(format!(
                "allocated ({}, {}) parameters but closed form gives ({w}, {b})",
                counted.0, counted.1
            ))
            .at_node(&node.id));
        }
        let act = bytes(dims[i]);
        let label = node.role.stage_label();
        if !stages.contains_key(&label) {
            order.push(label.clone());
        }
        let s = stages.entry(label.clone()).or_insert_with(|| StageCost { stage: label, ..Default::default() });
        s.weights += w;
        s.biases += b;
        s.macs += macs;
        s.activation_bytes += act;

        report.total_weights += w;
        report.total_biases += b;
        report.macs += macs;
        report.total_activation_bytes += act;
        if act > report.peak_tensor_bytes {
            report.peak_tensor_bytes = act;
            report.peak_tensor_node = node.id.clone();
        }
        if node.role.is_module_internal() {
            report.module_peak_bytes = report.module_peak_bytes.max(act);
            report.module_peak_area = report.module_peak_area.max((dims[i][2] * dims[i][3]) as u64);
        }
    }
    report.peak_live_bytes = peak_live(graph, &dims, &index, &bytes);
    report.stages = order.into_iter().map(|k| stages.remove(&k).unwrap()).collect();
    Ok(report)
}

fn peak_live(
    graph: &ArchGraph,
    dims: &[[usize; 4]],
    index: &HashMap<&str, usize>,
    bytes: &dyn Fn([usize; 4]) -> u64,
) -> u64 {
    let mut uses = vec![0usize; graph.nodes.len()];
    for node in &graph.nodes {
        for inp in &node.inputs {
            uses[index[inp.as_str()]] += 1;
        }
    }
    for tap in &graph.taps {
        uses[index[tap.node.as_str()]] += 1;
    }
    let (mut live, mut peak) = (0u64, 0u64);
    for (i, node) in graph.nodes.iter().enumerate() {
        // inputs and output coexist while the node runs
        live += bytes(dims[i]);
        peak = peak.max(live);
        for inp in &node.inputs {
            let j = index[inp.as_str()];
            uses[j] -= 1;
            if uses[j] == 0 {
                live -= bytes(dims[j]);
            }
        }
        if uses[i] == 0 {
            live -= bytes(dims[i]);
        }
    }
    peak
}

/// Convolution-layer counts under the convention: a plain conv or transposed
/// conv is 1 layer, a residual block 2 (its projection shortcut runs beside the
/// main path), a fire module 2 (squeeze, then the parallel expand pair), a
/// prediction head 2. `total_convs` counts every convolution once, including
/// projections and both expand branches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthReport {
    pub graph: String,
    pub longest_path: usize,
    pub total_convs: usize,
}

fn conv_depth(op: &LayerOp) -> (usize, usize) {
    match op {
        LayerOp::Conv { .. } | LayerOp::TransposeConv { .. } => (1, 1),
        LayerOp::Residual { in_channels, out_channels, stride } => {
            (2, if in_channels != out_channels || *stride != 1 { 3 } else { 2 })
        }
        LayerOp::Fire { .. } => (2, 3),
        LayerOp::Head { .. } => (2, 2),
        _ => (0, 0),
    }
}

pub fn depth_report(graph: &ArchGraph) -> DepthReport {
    let mut depth: HashMap<&str, usize> = HashMap::new();
    let mut total = 0;
    for node in &graph.nodes {
        let (d, t) = conv_depth(&node.op);
        total += t;
        let before = node.inputs.iter().filter_map(|i| depth.get(i.as_str())).copied().max().unwrap_or(0);
        depth.insert(&node.id, before + d);
    }
    let longest = graph.taps.iter().filter_map(|t| depth.get(t.node.as_str())).copied().max().unwrap_or(0);
    DepthReport { graph: graph.name.clone(), longest_path: longest, total_convs: total }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsamplerInfo {
    pub kind: String,
    pub kernel: usize,
    pub stride: usize,
}

/// Structural counts for one hourglass module. Per-level vectors are indexed by
/// level, 0 being the full-resolution level.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleCensus {
    pub index: usize,
    /// Stride-2 blocks inside the module.
    pub downsamplings: usize,
    /// Output widths of the stride-2 blocks, outermost first.
    pub down_channels: Vec<usize>,
    pub skip_blocks: Vec<usize>,
    pub down_blocks: Vec<usize>,
    pub up_blocks: Vec<usize>,
    pub middle_blocks: usize,
    pub middle_channels: Vec<usize>,
    pub upsamplers: Vec<UpsamplerInfo>,
    pub residual_blocks: usize,
    pub fire_blocks: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub modules: Vec<ModuleCensus>,
    /// Stride-2 operations before the first module.
    pub stem_downsamplings: usize,
    pub stem_kinds: Vec<String>,
    /// Kernel size of every prediction head's first conv, in node order.
    pub head_kernels: Vec<usize>,
    /// Standard (non-depthwise) 3×3 convolutions inside prediction heads.
    pub head_3x3_convs: usize,
}

fn bump(v: &mut Vec<usize>, level: usize) {
    if v.len() <= level {
        v.resize(level + 1, 0);
    }
    v[level] += 1;
}

pub fn census(graph: &ArchGraph) -> Census {
    let mut c = Census::default();
    let mut modules: BTreeMap<usize, ModuleCensus> = BTreeMap::new();
    for node in &graph.nodes {
        let is_block = matches!(node.op, LayerOp::Residual { .. } | LayerOp::Fire { .. });
        match node.role.stage {
            Stage::Stem => {
                c.stem_kinds.push(node.op.kind_name().to_string());
                if node.op.stride() == 2 {
                    c.stem_downsamplings += 1;
                }
            }
            Stage::Head => {
                if let LayerOp::Head { kernel, .. } = node.op {
                    c.head_kernels.push(kernel);
                    if kernel == 3 {
                        c.head_3x3_convs += 1;
                    }
                }
            }
            stage if node.role.is_module_internal() => {
                let Some(mi) = node.role.module else { continue };
                let m = modules.entry(mi).or_insert_with(|| ModuleCensus { index: mi, ..Default::default() });
                let level = node.role.level.unwrap_or(0);
                if is_block {
                    match node.op {
                        LayerOp::Residual { .. } => m.residual_blocks += 1,
                        _ => m.fire_blocks += 1,
                    }
                    if node.op.stride() == 2 {
                        m.downsamplings += 1;
                        m.down_channels.push(node.op.out_channels().unwrap_or(0));
                    }
                }
                match stage {
                    Stage::Skip if is_block => bump(&mut m.skip_blocks, level),
                    Stage::Down if is_block => bump(&mut m.down_blocks, level),
                    Stage::Up if is_block => bump(&mut m.up_blocks, level),
                    Stage::Middle if is_block => {
                        m.middle_blocks += 1;
                        m.middle_channels.push(node.op.out_channels().unwrap_or(0));
                    }
                    Stage::Upsample => m.upsamplers.push(match node.op {
                        LayerOp::TransposeConv { kernel, stride, .. } => {
                            UpsamplerInfo { kind: "transpose_conv".into(), kernel, stride }
                        }
                        _ => UpsamplerInfo { kind: "nearest".into(), kernel: 1, stride: 2 },
                    }),
                    _ => {}
                }
            }
            _ => {}
        }
    }
    c.modules = modules.into_values().collect();
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{HourglassConfig, LayerSpec, Role, Tap};

    fn single(op: LayerOp, input: [usize; 4]) -> ArchGraph {
        let mut g = ArchGraph::identity(input);
        g.nodes[1] = LayerSpec { id: "out".into(), op, inputs: vec!["input".into()], role: Role::new(Stage::Other) };
        g.taps = vec![Tap { name: "out".into(), node: "out".into() }];
        g
    }

    #[test]
    fn one_by_one_conv_counts() {
        let op = LayerOp::Conv {
            in_channels: 4,
            out_channels: 8,
            kernel: 1,
            stride: 1,
            pad: 0,
            groups: 1,
            bias: true,
            relu: false,
        };
        let r = cost_report(&single(op, [1, 4, 5, 5]), [1, 4, 5, 5], 4).unwrap();
        assert_eq!((r.total_weights, r.total_biases), (32, 8));
        assert_eq!(r.macs, 32 * 25);
        assert_eq!(r.peak_live_bytes, (4 + 8) * 25 * 4);
    }

    #[test]
    fn residual_depth_is_two() {
        let g = single(LayerOp::Residual { in_channels: 4, out_channels: 4, stride: 1 }, [1, 4, 5, 5]);
        assert_eq!(depth_report(&g).longest_path, 2);
        assert_eq!(depth_report(&g).total_convs, 2);
    }

    #[test]
    fn stage_sums_match_totals() {
        let g = HourglassConfig::hourglass54(4).narrowed(8).build();
        let r = cost_report(&g, g.input_dims, 4).unwrap();
        let sum = |f: fn(&StageCost) -> u64| r.stages.iter().map(f).sum::<u64>();
        assert_eq!(sum(|s| s.weights), r.total_weights);
        assert_eq!(sum(|s| s.biases), r.total_biases);
        assert_eq!(sum(|s| s.macs), r.macs);
        assert_eq!(sum(|s| s.activation_bytes), r.total_activation_bytes);
    }
}
