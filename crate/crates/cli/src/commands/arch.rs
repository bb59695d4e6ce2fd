use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use hgdet::arch::{self as core_arch, census, cost_report, depth_report, ArchGraph, HourglassConfig, Weights};
use hgdet::blocks::Init;
use hgdet::tensor::{parse_dims, skt};
use hgdet::Tensor;
use serde::Serialize;

use crate::io::{emit_json, read_json};
use crate::{GraphArgs, InitKind, WeightArgs};

pub fn resolve_config(args: &GraphArgs) -> Result<HourglassConfig> {
    let mut cfg = match &args.config {
        Some(path) => read_json::<HourglassConfig>(path)?,
        None => HourglassConfig::variant(&args.variant, args.classes).ok_or_else(|| {
            anyhow!("unknown variant `{}` (expected hourglass54, squeeze or hg104-ref)", args.variant)
        })?,
    };
    if let Some(dims) = &args.input {
        cfg = cfg.with_input(parse_dims(dims)?);
    }
    if let Some(f) = args.narrow {
        anyhow::ensure!(f >= 1, "--narrow must be >= 1");
        cfg = cfg.narrowed(f);
    }
    Ok(cfg)
}

pub fn load_weights(graph: &ArchGraph, args: &WeightArgs) -> Result<Weights<f32>> {
    Ok(match &args.weights {
        Some(dir) => {
            Weights::load_dir(graph, dir).with_context(|| format!("loading weights from {}", dir.display()))?
        }
        None => Weights::init(graph, Init::Uniform, args.seed)?,
    })
}

pub fn config(args: &GraphArgs, out: Option<&Path>) -> Result<()> {
    emit_json(&resolve_config(args)?, out)
}

pub fn build(args: &GraphArgs, out: Option<&Path>) -> Result<()> {
    emit_json(&resolve_config(args)?.build(), out)
}

#[derive(Serialize)]
struct Stats {
    census: core_arch::Census,
    cost: core_arch::CostReport,
    depth: core_arch::DepthReport,
}

pub fn stats(args: &GraphArgs, bytes_per_element: u64, out: Option<&Path>) -> Result<()> {
    let g = resolve_config(args)?.build();
    let cost = cost_report(&g, g.input_dims, bytes_per_element)?;
    emit_json(&Stats { census: census(&g), cost, depth: depth_report(&g) }, out)
}

pub fn init_weights(args: &GraphArgs, init: InitKind, seed: u64, out: &Path) -> Result<()> {
    let g = resolve_config(args)?.build();
    let init = match init {
        InitKind::Uniform => Init::Uniform,
        InitKind::Zeros => Init::Zeros,
    };
    Weights::<f32>::init(&g, init, seed)?.save_dir(out)?;
    Ok(())
}

pub fn forward(args: &GraphArgs, weights: &WeightArgs, image: Option<&Path>, out: &Path) -> Result<()> {
    let g = resolve_config(args)?.build();
    let w = load_weights(&g, weights)?;
    let input = match image {
        Some(path) => skt::read(path)?,
        None => Tensor::random(g.input_dims, 1.0, weights.seed),
    };
    let taps = core_arch::forward(&g, &w, &input)?;
    fs::create_dir_all(out)?;
    let mut shapes = BTreeMap::new();
    for (name, t) in &taps {
        skt::write(out.join(format!("{name}.skt")), t)?;
        shapes.insert(name.clone(), t.dims());
    }
    emit_json(&shapes, None)
}
