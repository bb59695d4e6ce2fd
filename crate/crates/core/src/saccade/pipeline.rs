use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{decode, Detection};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

use super::geometry::{crop_pixels, downsize_pair, make_crop, strip_boundary_boxes_on, CropWindow, Downsized};
use super::locations::{
    extract_locations, locations_from_boxes, suppress_locations, ObjectLocation, SuppressionDecision,
};
use super::nms::soft_nms;
use super::{Affine2, ModelOutputs, SaccadeConfig, SaccadeModel, CROP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTrace {
    pub scale: usize,
    pub content: (usize, usize),
    pub attention_locations: usize,
    pub box_locations: usize,
    pub detections: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropTrace {
    pub location: ObjectLocation,
    pub window: CropWindow,
    /// Detections decoded in the crop.
    pub raw_detections: usize,
    /// Detections left after removing those touching a cut edge.
    pub kept_detections: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaccadeTrace {
    pub image_hw: (usize, usize),
    pub scales: Vec<ScaleTrace>,
    /// Pooled candidate locations in rank order, with their fate.
    pub decisions: Vec<SuppressionDecision>,
    pub crops: Vec<CropTrace>,
    pub crops_processed: usize,
    pub pixels_processed: u64,
    pub full_resolution_pixels: u64,
    /// Crop pixels over full-resolution pixels.
    pub pixel_ratio: f64,
}

impl SaccadeTrace {
    pub fn location_count(&self) -> usize {
        self.decisions.len()
    }

    pub fn suppressed_count(&self) -> usize {
        self.decisions.iter().filter(|d| !d.kept).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaccadeOutput {
    pub detections: Vec<Detection>,
    pub trace: SaccadeTrace,
}

fn detections_of(outputs: &ModelOutputs, cfg: &SaccadeConfig) -> Result<Vec<Detection>> {
    match &outputs.corners {
        Some(c) => decode(&c.tl, &c.br, c.factor, &cfg.decode),
        None => Ok(Vec::new()),
    }
}

struct CropResult {
    detections: Vec<Detection>,
    raw: usize,
}

fn process_crop<M: SaccadeModel + ?Sized>(
    image: &Tensor<f32>,
    window: &CropWindow,
    model: &M,
    cfg: &SaccadeConfig,
) -> Result<CropResult> {
    let crop = crop_pixels(image, window);
    let to_original = window.to_original();
    let outputs = model.infer(&crop, &to_original)?;
    let raw = detections_of(&outputs, cfg)?;
    let kept = strip_boundary_boxes_on(&raw, cfg.boundary_margin, (CROP as f64, CROP as f64), window.cut_edges());
    let (h, w) = (image.height() as f64, image.width() as f64);
    Ok(CropResult {
        detections: kept.iter().map(|d| to_original.apply_detection(d).clamped(h, w)).collect(),
        raw: raw.len(),
    })
}

/// Runs the full crop-scheduling procedure on a `1×C×H×W` image.
pub fn run_saccade<M: SaccadeModel + ?Sized>(
    image: &Tensor<f32>,
    model: &M,
    cfg: &SaccadeConfig,
) -> Result<SaccadeOutput> {
    run_saccade_with_order(image, model, cfg, None)
}

/// As [`run_saccade`], but when `order` is given the selected crops are
/// processed one at a time in that order (a permutation of crop indices)
/// instead of in parallel.
pub fn run_saccade_with_order<M: SaccadeModel + ?Sized>(
    image: &Tensor<f32>,
    model: &M,
    cfg: &SaccadeConfig,
    order: Option<&[usize]>,
) -> Result<SaccadeOutput> {
    cfg.validate()?;
    if image.batch() != 1 {
        return shape_err(format!("expected a single image, got batch {}", image.batch()));
    }
    let (h, w) = (image.height(), image.width());
    let pair: [Downsized; 2] = downsize_pair(image)?;

    let mut scales = Vec::new();
    let mut candidates = Vec::new();
    let mut downsized_dets = Vec::new();
    for d in &pair {
        let outputs = model.infer(&d.image, &d.to_original)?;
        let att = if outputs.attention.len() == 3 {
            extract_locations(&outputs.attention, cfg.attention_threshold, d.scale)
        } else {
            Vec::new()
        };
        let dets = detections_of(&outputs, cfg)?;
        let boxes = locations_from_boxes(&dets, cfg.box_location_threshold, d.scale);
        scales.push(ScaleTrace {
            scale: d.scale,
            content: d.content,
            attention_locations: att.len(),
            box_locations: boxes.len(),
            detections: dets.len(),
        });
        candidates.extend(boxes);
        candidates.extend(att);
        downsized_dets.extend(dets.iter().map(|x| d.to_original.apply_detection(x).clamped(h as f64, w as f64)));
    }

    let suppression = suppress_locations(&candidates, cfg.suppression_radius);
    let selected: Vec<ObjectLocation> = suppression.kept.iter().take(cfg.max_regions).copied().collect();
    let windows: Vec<CropWindow> = selected
        .iter()
        .map(|loc| {
            let source = pair.iter().find(|d| d.scale == loc.scale).unwrap_or(&pair[0]);
            make_crop(loc.x, loc.y, loc.size, source, cfg)
        })
        .collect();

    let mut results: Vec<Option<CropResult>> = (0..windows.len()).map(|_| None).collect();
    let mut merged: Vec<Detection> = Vec::new();
    match order {
        Some(order) => {
            for &i in order {
                let r = process_crop(image, &windows[i], model, cfg)?;
                merged.extend(&r.detections);
                results[i] = Some(r);
            }
        }
        None => {
            let done: Vec<CropResult> =
                windows.par_iter().map(|win| process_crop(image, win, model, cfg)).collect::<Result<_>>()?;
            for (slot, r) in results.iter_mut().zip(done) {
                merged.extend(&r.detections);
                *slot = Some(r);
            }
        }
    }
    if cfg.merge_downsized_detections {
        merged.extend(downsized_dets);
    }
    let detections = soft_nms(&merged, &cfg.soft_nms);

    let crops: Vec<CropTrace> = selected
        .iter()
        .zip(&windows)
        .zip(&results)
        .filter_map(|((loc, win), r)| {
            r.as_ref().map(|r| CropTrace {
                location: *loc,
                window: win.clone(),
                raw_detections: r.raw,
                kept_detections: r.detections.len(),
            })
        })
        .collect();
    let pixels_processed: u64 = crops.iter().map(|c| c.window.pixels()).sum();
    let full = (h * w) as u64;
    let trace = SaccadeTrace {
        image_hw: (h, w),
        scales,
        decisions: suppression.decisions,
        crops_processed: crops.len(),
        crops,
        pixels_processed,
        full_resolution_pixels: full,
        pixel_ratio: pixels_processed as f64 / full as f64,
    };
    Ok(SaccadeOutput { detections, trace })
}

impl SaccadeModel for Box<dyn SaccadeModel> {
    fn infer(&self, input: &Tensor<f32>, view: &Affine2) -> Result<ModelOutputs> {
        (**self).infer(input, view)
    }
}
