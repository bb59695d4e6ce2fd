use std::fs;
use std::path::Path;

use anyhow::Result;
use hgdet::arch::taps;
use hgdet::decode::Detection;
use hgdet::harness::{gen_scene, oracle_outputs, OracleGeometry, SceneSpec};
use hgdet::tensor::skt;

use crate::io::{emit_json, read_json};

pub struct RandomScene {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub objects: usize,
    pub classes: usize,
}

pub fn gen(
    spec: Option<&Path>,
    random: &RandomScene,
    out_image: &Path,
    out_gt: &Path,
    out_spec: Option<&Path>,
) -> Result<()> {
    let spec = match spec {
        Some(p) => read_json::<SceneSpec>(p)?,
        None => SceneSpec::random(random.seed, random.height, random.width, random.objects, random.classes)?,
    };
    let (image, gt) = gen_scene(&spec)?;
    skt::write(out_image, &image)?;
    emit_json(&gt, Some(out_gt))?;
    if let Some(p) = out_spec {
        emit_json(&spec, Some(p))?;
    }
    Ok(())
}

pub fn oracle(gt: &Path, classes: usize, input_hw: (usize, usize), factor: usize, out: &Path) -> Result<()> {
    anyhow::ensure!(factor >= 1 && classes >= 1, "factor and classes must be >= 1");
    let gt: Vec<Detection> = read_json(gt)?;
    let geom = OracleGeometry { input_hw, factor, attention_factors: [4, 8, 16], num_classes: classes };
    let o = oracle_outputs(&gt, &geom);
    fs::create_dir_all(out)?;
    for (name, a) in taps::ATTENTION.iter().zip(&o.attention) {
        skt::write(out.join(format!("{name}.skt")), &a.map)?;
    }
    let maps = [
        (taps::TL_HEAT, &o.tl.heat),
        (taps::TL_EMBED, &o.tl.embed),
        (taps::TL_OFFSET, &o.tl.offset),
        (taps::BR_HEAT, &o.br.heat),
        (taps::BR_EMBED, &o.br.embed),
        (taps::BR_OFFSET, &o.br.offset),
    ];
    for (name, t) in maps {
        skt::write(out.join(format!("{name}.skt")), t)?;
    }
    Ok(())
}
