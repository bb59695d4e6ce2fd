use serde::{Deserialize, Serialize};

use crate::arch::{census, cost_report, depth_report, ArchGraph};
use crate::error::Result;

/// One row of the backbone comparison table; memory figures assume 4-byte elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub input: String,
    pub modules: usize,
    pub params: u64,
    pub weights: u64,
    pub biases: u64,
    pub module_params: u64,
    pub params_per_module: u64,
    pub macs: u64,
    pub module_macs: u64,
    pub peak_activation_bytes: u64,
    pub peak_live_bytes: u64,
    pub module_peak_bytes: u64,
    pub module_peak_area: u64,
    pub depth: usize,
    pub total_convs: usize,
}

pub fn compare_row(graph: &ArchGraph) -> Result<CompareRow> {
    let cost = cost_report(graph, graph.input_dims, 4)?;
    let depth = depth_report(graph);
    let modules = census(graph).modules.len();
    let [n, c, h, w] = graph.input_dims;
    Ok(CompareRow {
        name: graph.name.clone(),
        input: format!("{n}x{c}x{h}x{w}"),
        modules,
        params: cost.total_params(),
        weights: cost.total_weights,
        biases: cost.total_biases,
        module_params: cost.module_params(),
        params_per_module: cost.module_params() / modules.max(1) as u64,
        macs: cost.macs,
        module_macs: cost.module_macs(),
        peak_activation_bytes: cost.peak_tensor_bytes,
        peak_live_bytes: cost.peak_live_bytes,
        module_peak_bytes: cost.module_peak_bytes,
        module_peak_area: cost.module_peak_area,
        depth: depth.longest_path,
        total_convs: depth.total_convs,
    })
}

pub fn compare_archs(graphs: &[ArchGraph]) -> Result<Vec<CompareRow>> {
    graphs.iter().map(compare_row).collect()
}
