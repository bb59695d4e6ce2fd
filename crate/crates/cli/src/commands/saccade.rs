use anyhow::{bail, Result};
use hgdet::decode::Detection;
use hgdet::harness::{gen_scene, OracleModel, SceneSpec};
use hgdet::saccade::{run_saccade, GraphModel, SaccadeConfig, SaccadeModel, CROP};
use hgdet::tensor::skt;
use hgdet::Tensor;
use serde::Serialize;

use super::arch::{load_weights, resolve_config};
use crate::io::{emit_json, read_json};
use crate::{ModelKind, SaccadeArgs};

fn load_inputs(args: &SaccadeArgs) -> Result<(Tensor<f32>, Option<Vec<Detection>>)> {
    if let Some(path) = &args.scene {
        let spec: SceneSpec = read_json(path)?;
        let (img, gt) = gen_scene(&spec)?;
        let gt = match &args.gt {
            Some(p) => read_json(p)?,
            None => gt,
        };
        return Ok((img, Some(gt)));
    }
    let Some(path) = &args.image else { bail!("either --scene or --image is required") };
    let gt = args.gt.as_deref().map(read_json).transpose()?;
    Ok((skt::read(path)?, gt))
}

fn model(args: &SaccadeArgs, gt: Option<Vec<Detection>>, channels: usize) -> Result<Box<dyn SaccadeModel>> {
    Ok(match args.model {
        ModelKind::Oracle => {
            let Some(gt) = gt else { bail!("the oracle model needs ground truth (--scene or --gt)") };
            let classes = gt.iter().map(|d| d.class + 1).max().unwrap_or(1);
            Box::new(OracleModel::new(gt, classes).with_min_corner_side(args.min_corner_side))
        }
        ModelKind::Graph => {
            let graph = resolve_config(&args.graph)?.with_input([1, channels, CROP, CROP]).build();
            let weights = load_weights(&graph, &args.weights)?;
            Box::new(GraphModel { graph, weights })
        }
    })
}

#[derive(Serialize)]
struct Detections<'a> {
    detections: &'a [Detection],
}

pub fn run(args: &SaccadeArgs, trace: bool) -> Result<()> {
    let mut cfg: SaccadeConfig = match &args.saccade_config {
        Some(p) => read_json(p)?,
        None => SaccadeConfig::default(),
    };
    if let Some(k) = args.max_regions {
        cfg.max_regions = k;
    }
    let (image, gt) = load_inputs(args)?;
    let model = model(args, gt, image.channels())?;
    let out = run_saccade(&image, &model, &cfg)?;
    if trace {
        emit_json(&out, args.out.as_deref())
    } else {
        emit_json(&Detections { detections: &out.detections }, args.out.as_deref())
    }
}
