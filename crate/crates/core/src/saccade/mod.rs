//! Attention-guided crop scheduling.
//!
//! The input image is downsized twice (longer side 255 and 192). A model run on
//! each downsized copy yields attention maps and corner maps; attention peaks
//! and confident boxes become candidate object locations, which are ranked and
//! thinned out. The best `max_regions` locations are examined again in 255×255
//! windows cut from the image enlarged by a size-dependent zoom. Crop
//! detections touching a cut edge are dropped, the rest are mapped back to the
//! original frame and merged with soft-NMS.

mod geometry;
mod locations;
mod nms;
mod pipeline;

pub use geometry::{
    crop_pixels, downsize_pair, make_crop, strip_boundary_boxes, strip_boundary_boxes_on, Affine2, CropWindow,
    Downsized, EDGE_EPS,
};
pub use locations::{
    extract_locations, locations_from_boxes, suppress_locations, AttentionMap, LocationSource, ObjectLocation,
    Suppression, SuppressionDecision,
};
pub use nms::{soft_nms, Decay, SoftNmsConfig};
pub use pipeline::{run_saccade, run_saccade_with_order, CropTrace, SaccadeOutput, SaccadeTrace, ScaleTrace};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arch::{forward, taps, ArchGraph, Weights};
use crate::blocks::CornerMaps;
use crate::decode::{DecodeConfig, SizeClass};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side of the square model input and of every crop window.
pub const CROP: usize = 255;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoomScales {
    pub small: f64,
    pub medium: f64,
    pub large: f64,
}

impl Default for ZoomScales {
    fn default() -> Self {
        Self { small: 4.0, medium: 2.0, large: 1.0 }
    }
}

impl ZoomScales {
    pub fn for_size(&self, size: SizeClass) -> f64 {
        match size {
            SizeClass::Small => self.small,
            SizeClass::Medium => self.medium,
            SizeClass::Large => self.large,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaccadeConfig {
    /// Attention pixels must score above this to become locations.
    pub attention_threshold: f64,
    pub zoom: ZoomScales,
    /// Number of crops examined per image.
    pub max_regions: usize,
    /// Chebyshev radius, in 255-frame pixels, within which weaker locations are removed.
    pub suppression_radius: f64,
    /// Downsized-image detections at or above this score become box locations.
    pub box_location_threshold: f64,
    pub boundary_margin: f64,
    pub soft_nms: SoftNmsConfig,
    pub decode: DecodeConfig,
    /// Include detections made on the downsized images in the final merge.
    pub merge_downsized_detections: bool,
}

impl Default for SaccadeConfig {
    fn default() -> Self {
        Self {
            attention_threshold: 0.3,
            zoom: ZoomScales::default(),
            max_regions: 12,
            suppression_radius: 16.0,
            box_location_threshold: 0.3,
            boundary_margin: 0.0,
            soft_nms: SoftNmsConfig::default(),
            decode: DecodeConfig::default(),
            merge_downsized_detections: true,
        }
    }
}

impl SaccadeConfig {
    pub fn validate(&self) -> Result<()> {
        let z = &self.zoom;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(z.small > z.medium && z.medium > z.large && z.large >= 1.0) {
            return bad("zoom scales must satisfy small > medium > large >= 1");
        }
        if !(self.attention_threshold > 0.0 && self.attention_threshold < 1.0) {
            return bad("attention threshold must lie in (0, 1)");
        }
        if self.max_regions == 0 {
            return bad("max_regions must be >= 1");
        }
        if !(self.suppression_radius >= 0.0) || !(self.boundary_margin >= 0.0) {
            return bad("radius and margin must be >= 0");
        }
        self.soft_nms.validate()?;
        self.decode.validate()
    }
}

/// Corner maps for both corner kinds plus the image pixels per map pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerOutputs {
    pub tl: CornerMaps<f32>,
    pub br: CornerMaps<f32>,
    pub factor: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelOutputs {
    /// Small, medium and large attention maps, or empty if the model has none.
    pub attention: Vec<AttentionMap<f32>>,
    pub corners: Option<CornerOutputs>,
}

/// Anything that maps a 255×255 input to attention and corner maps.
///
/// `view` maps input pixels to original-image pixels; real networks ignore it,
/// the synthetic oracle uses it to place ground truth.
pub trait SaccadeModel: Sync {
    fn infer(&self, input: &Tensor<f32>, view: &Affine2) -> Result<ModelOutputs>;
}

/// A built graph with weights.
pub struct GraphModel {
    pub graph: ArchGraph,
    pub weights: Weights<f32>,
}

fn map_factor(input: &Tensor<f32>, map: &Tensor<f32>) -> f64 {
    (input.height() as f64 / map.height() as f64).round()
}

impl SaccadeModel for GraphModel {
    fn infer(&self, input: &Tensor<f32>, _view: &Affine2) -> Result<ModelOutputs> {
        let mut out: BTreeMap<String, Tensor<f32>> = forward(&self.graph, &self.weights, input)?;
        let mut attention = Vec::new();
        if taps::ATTENTION.iter().all(|t| out.contains_key(*t)) {
            for t in taps::ATTENTION {
                let map = out.remove(t).unwrap();
                attention.push(AttentionMap { factor: map_factor(input, &map), map });
            }
        }
        let mut take = |name: &str| out.remove(name);
        let corners = match (
            take(taps::TL_HEAT),
            take(taps::TL_EMBED),
            take(taps::TL_OFFSET),
            take(taps::BR_HEAT),
            take(taps::BR_EMBED),
            take(taps::BR_OFFSET),
        ) {
            (Some(th), Some(te), Some(to), Some(bh), Some(be), Some(bo)) => Some(CornerOutputs {
                factor: map_factor(input, &th),
                tl: CornerMaps { heat: th, embed: te, offset: to },
                br: CornerMaps { heat: bh, embed: be, offset: bo },
            }),
            _ => None,
        };
        Ok(ModelOutputs { attention, corners })
    }
}
