use crate::blocks::CornerMaps;
use crate::decode::loss::round_half_up;
use crate::decode::{Detection, SizeClass};
use crate::error::Result;
use crate::saccade::{Affine2, AttentionMap, CornerOutputs, ModelOutputs, SaccadeModel};
use crate::tensor::Tensor;

/// Heatmap value written at every ground-truth corner.
pub const PEAK_SCORE: f32 = 0.9;
/// Attention value written at every ground-truth centre.
pub const ATTENTION_SCORE: f32 = 0.9;

/// Map layout of the rendered outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleGeometry {
    /// Input `(h, w)` in pixels.
    pub input_hw: (usize, usize),
    /// Input pixels per corner-map pixel.
    pub factor: usize,
    /// Input pixels per pixel of the small, medium and large attention maps.
    pub attention_factors: [usize; 3],
    pub num_classes: usize,
}

impl OracleGeometry {
    /// The layout the hourglass graphs produce on a 255×255 input.
    pub fn standard(num_classes: usize) -> Self {
        Self { input_hw: (255, 255), factor: 4, attention_factors: [4, 8, 16], num_classes }
    }

    fn map_hw(&self, factor: usize) -> (usize, usize) {
        (self.input_hw.0.div_ceil(factor), self.input_hw.1.div_ceil(factor))
    }
}

/// Analytically rendered network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutputs {
    pub attention: Vec<AttentionMap<f32>>,
    pub tl: CornerMaps<f32>,
    pub br: CornerMaps<f32>,
    pub factor: f64,
}

impl OracleOutputs {
    pub fn into_model_outputs(self) -> ModelOutputs {
        ModelOutputs {
            attention: self.attention,
            corners: Some(CornerOutputs { tl: self.tl, br: self.br, factor: self.factor }),
        }
    }
}

fn empty_maps(c: usize, (h, w): (usize, usize)) -> CornerMaps<f32> {
    CornerMaps {
        heat: Tensor::zeros([1, c, h, w]),
        embed: Tensor::zeros([1, 1, h, w]),
        offset: Tensor::zeros([1, 2, h, w]),
    }
}

/// Writes one corner at continuous position `(x, y)` (input pixels).
fn plant(maps: &mut CornerMaps<f32>, class: usize, x: f64, y: f64, factor: f64, embed: f32) {
    let (h, w) = (maps.heat.height(), maps.heat.width());
    let (fx, fy) = (x / factor, y / factor);
    let ix = (fx.floor().max(0.0) as usize).min(w - 1);
    let iy = (fy.floor().max(0.0) as usize).min(h - 1);
    maps.heat.set([0, class, iy, ix], PEAK_SCORE);
    maps.embed.set([0, 0, iy, ix], embed);
    maps.offset.set([0, 0, iy, ix], (fx - ix as f64) as f32);
    maps.offset.set([0, 1, iy, ix], (fy - iy as f64) as f32);
}

/// Renders corner maps and attention maps for boxes given in input pixels.
///
/// Object `i` gets embedding `i + 1` on both corners. Corner offsets hold the
/// exact sub-pixel remainders, so decoding reproduces the boxes up to `f32`
/// rounding. Each box marks one attention pixel at its rounded centre on the
/// map matching its size class.
pub fn oracle_outputs(gt: &[Detection], geom: &OracleGeometry) -> OracleOutputs {
    render(gt, geom, |_| true)
}

fn render(gt: &[Detection], geom: &OracleGeometry, corners_for: impl Fn(&Detection) -> bool) -> OracleOutputs {
    let factor = geom.factor as f64;
    let hw = geom.map_hw(geom.factor);
    let mut tl = empty_maps(geom.num_classes, hw);
    let mut br = empty_maps(geom.num_classes, hw);
    let mut attention: Vec<AttentionMap<f32>> = geom
        .attention_factors
        .iter()
        .map(|&f| {
            let (h, w) = geom.map_hw(f);
            AttentionMap { map: Tensor::zeros([1, 1, h, w]), factor: f as f64 }
        })
        .collect();
    for (i, d) in gt.iter().enumerate() {
        if d.class >= geom.num_classes {
            continue;
        }
        if corners_for(d) {
            let e = (i + 1) as f32;
            plant(&mut tl, d.class, d.bbox[0], d.bbox[1], factor, e);
            plant(&mut br, d.class, d.bbox[2], d.bbox[3], factor, e);
        }
        let att = &mut attention[SizeClass::from_longer_side(d.longer_side()).index()];
        let (cx, cy) = d.center();
        let (mx, my) = (round_half_up(cx / att.factor), round_half_up(cy / att.factor));
        if mx >= 0.0 && my >= 0.0 && (mx as usize) < att.map.width() && (my as usize) < att.map.height() {
            att.map.set([0, 0, my as usize, mx as usize], ATTENTION_SCORE);
        }
    }
    OracleOutputs { attention, tl, br, factor }
}

/// A stand-in network that renders [`oracle_outputs`] from ground truth placed
/// into each input through the inverse of its view.
#[derive(Clone, Debug)]
pub struct OracleModel {
    /// Boxes in original-image pixels.
    pub gt: Vec<Detection>,
    pub num_classes: usize,
    /// Objects whose visible longer side is below this many input pixels get no corners.
    pub min_corner_side: f64,
    pub factor: usize,
    pub attention_factors: [usize; 3],
}

impl OracleModel {
    pub fn new(gt: Vec<Detection>, num_classes: usize) -> Self {
        Self { gt, num_classes, min_corner_side: 0.0, factor: 4, attention_factors: [4, 8, 16] }
    }

    pub fn with_min_corner_side(mut self, side: f64) -> Self {
        self.min_corner_side = side;
        self
    }
}

impl SaccadeModel for OracleModel {
    fn infer(&self, input: &Tensor<f32>, view: &Affine2) -> Result<ModelOutputs> {
        let (h, w) = (input.height(), input.width());
        let inv = view.inverse()?;
        let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
        let visible: Vec<Detection> = self
            .gt
            .iter()
            .map(|d| inv.apply_detection(d))
            .filter_map(|d| {
                let b = d.bbox;
                let c = [b[0].clamp(0.0, xmax), b[1].clamp(0.0, ymax), b[2].clamp(0.0, xmax), b[3].clamp(0.0, ymax)];
                (c[2] - c[0] >= 1.0 && c[3] - c[1] >= 1.0).then_some(Detection { bbox: c, ..d })
            })
            .collect();
        let geom = OracleGeometry {
            input_hw: (h, w),
            factor: self.factor,
            attention_factors: self.attention_factors,
            num_classes: self.num_classes,
        };
        let min = self.min_corner_side;
        Ok(render(&visible, &geom, |d| d.longer_side() >= min).into_model_outputs())
    }
}
