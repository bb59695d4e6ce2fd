use std::path::Path;

use anyhow::{Context, Result};
use hgdet::arch::taps;
use hgdet::blocks::CornerMaps;
use hgdet::decode::{decode, heatmap_peaks, DecodeConfig};
use hgdet::tensor::skt;
use hgdet::Tensor;

use crate::io::{emit_json, read_json};

fn read_map(dir: &Path, name: &str) -> Result<Tensor<f32>> {
    let path = dir.join(format!("{name}.skt"));
    skt::read(&path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_corner_maps(dir: &Path) -> Result<(CornerMaps<f32>, CornerMaps<f32>)> {
    let tl = CornerMaps {
        heat: read_map(dir, taps::TL_HEAT)?,
        embed: read_map(dir, taps::TL_EMBED)?,
        offset: read_map(dir, taps::TL_OFFSET)?,
    };
    let br = CornerMaps {
        heat: read_map(dir, taps::BR_HEAT)?,
        embed: read_map(dir, taps::BR_EMBED)?,
        offset: read_map(dir, taps::BR_OFFSET)?,
    };
    Ok((tl, br))
}

pub fn peaks(heat: &Path, k: usize, out: Option<&Path>) -> Result<()> {
    anyhow::ensure!(k >= 1, "k must be >= 1");
    let heat = skt::read(heat)?;
    emit_json(&heatmap_peaks(&heat, k), out)
}

pub fn group(maps: &Path, factor: f64, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg: DecodeConfig = match config {
        Some(p) => read_json(p)?,
        None => DecodeConfig::default(),
    };
    let (tl, br) = read_corner_maps(maps)?;
    emit_json(&decode(&tl, &br, factor, &cfg)?, out)
}
