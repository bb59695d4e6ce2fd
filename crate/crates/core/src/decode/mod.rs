//! Corner decoding: heatmap peaks, embedding-based pairing into boxes, and the
//! forward values of the losses the corner and attention heads are trained with.

pub mod loss;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::blocks::CornerMaps;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{max_pool2d, Tensor};
use crate::Scalar;

pub use loss::{
    attention_targets, embedding_losses, focal_loss, pull_push_offset_losses, CornerLosses, GtCornerPair, SizeClass,
    FOCAL_EPS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerKind {
    TopLeft,
    BottomRight,
}

/// A heatmap local maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub class: usize,
    pub score: f64,
    pub y: usize,
    pub x: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub class: usize,
    pub score: f64,
    pub y: usize,
    pub x: usize,
    /// Sub-pixel `(x, y)` correction in heatmap units.
    pub offset: [f64; 2],
    pub embed: f64,
}

impl Corner {
    /// Corrected position in heatmap units.
    pub fn position(&self) -> (f64, f64) {
        (self.x as f64 + self.offset[0], self.y as f64 + self.offset[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    pub kind: CornerKind,
    pub corners: Vec<Corner>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: usize,
    pub score: f64,
    /// `[x1, y1, x2, y2]` in image pixels, edges of the half-open pixel grid.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

impl Detection {
    pub fn new(class: usize, score: f64, bbox: [f64; 4]) -> Self {
        Self { class, score, bbox }
    }

    pub fn width(&self) -> f64 {
        self.bbox[2] - self.bbox[0]
    }

    pub fn height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    pub fn longer_side(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.bbox[0] + self.bbox[2]) / 2.0, (self.bbox[1] + self.bbox[3]) / 2.0)
    }

    pub fn iou(&self, other: &Detection) -> f64 {
        iou(&self.bbox, &other.bbox)
    }

    /// Clamps the box into `[0, w] × [0, h]`.
    pub fn clamped(mut self, h: f64, w: f64) -> Self {
        self.bbox[0] = self.bbox[0].clamp(0.0, w);
        self.bbox[2] = self.bbox[2].clamp(0.0, w);
        self.bbox[1] = self.bbox[1].clamp(0.0, h);
        self.bbox[3] = self.bbox[3].clamp(0.0, h);
        self
    }

    /// Total order: score descending, then class, then box coordinates ascending.
    pub fn rank_cmp(&self, other: &Detection) -> Ordering {
        other.score.total_cmp(&self.score).then(self.class.cmp(&other.class)).then_with(|| {
            self.bbox
                .iter()
                .zip(&other.bbox)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }
}

pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &[f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Locations that equal their 3×3 neighbourhood maximum in batch 0, best `k`
/// first. Ties are broken by `(class, y, x)` ascending.
pub fn heatmap_peaks<T: Scalar>(heat: &Tensor<T>, k: usize) -> Vec<Peak> {
    let pooled = max_pool2d(heat, 3, 1, 1).expect("same-size 3x3 pooling");
    let [_, c, h, w] = heat.dims();
    let mut peaks = Vec::new();
    for class in 0..c {
        let (src, max) = (heat.plane(0, class), pooled.plane(0, class));
        for (i, (&v, &m)) in src.iter().zip(max).enumerate() {
            if v == m {
                peaks.push(Peak { class, score: v.as_f64(), y: i / w, x: i % w });
            }
        }
    }
    debug_assert!(peaks.iter().all(|p| p.y < h));
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.class, a.y, a.x).cmp(&(b.class, b.y, b.x))));
    peaks.truncate(k);
    peaks
}

/// Attaches embedding and offset values to each peak.
pub fn gather_corners<T: Scalar>(
    peaks: &[Peak],
    kind: CornerKind,
    embed: &Tensor<T>,
    offset: &Tensor<T>,
) -> Result<CornerSet> {
    if embed.channels() != 1 || offset.channels() != 2 {
        return shape_err(format!(
            "expected 1 embedding and 2 offset channels, got {} and {}",
            embed.channels(),
            offset.channels()
        ));
    }
    let [_, _, h, w] = embed.dims();
    if offset.height() != h || offset.width() != w {
        return shape_err("embedding and offset maps differ in size");
    }
    let corners = peaks
        .iter()
        .map(|p| {
            if p.y >= h || p.x >= w {
                return shape_err(format!("peak ({}, {}) outside {h}x{w} map", p.y, p.x));
            }
            Ok(Corner {
                class: p.class,
                score: p.score,
                y: p.y,
                x: p.x,
                offset: [offset.at([0, 0, p.y, p.x]).as_f64(), offset.at([0, 1, p.y, p.x]).as_f64()],
                embed: embed.at([0, 0, p.y, p.x]).as_f64(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CornerSet { kind, corners })
}

pub fn corners_from_maps<T: Scalar>(maps: &CornerMaps<T>, k: usize, kind: CornerKind) -> Result<CornerSet> {
    if maps.heat.height() != maps.embed.height() || maps.heat.width() != maps.embed.width() {
        return shape_err("heatmap and embedding maps differ in size");
    }
    gather_corners(&heatmap_peaks(&maps.heat, k), kind, &maps.embed, &maps.offset)
}

/// Pairs same-class corners whose embeddings differ by at most `embed_threshold`
/// and whose corrected positions form a valid box. Boxes are scaled to image
/// pixels by `factor`; scores are the mean of the two corner scores. The result
/// is ordered by [`Detection::rank_cmp`].
pub fn group_corners(tl: &CornerSet, br: &CornerSet, embed_threshold: f64, factor: f64) -> Vec<Detection> {
    let mut dets = Vec::new();
    for a in &tl.corners {
        let (ax, ay) = a.position();
        for b in &br.corners {
            if a.class != b.class || (a.embed - b.embed).abs() > embed_threshold {
                continue;
            }
            let (bx, by) = b.position();
            if ax > bx || ay > by {
                continue;
            }
            let score = (a.score + b.score) / 2.0;
            dets.push(Detection::new(a.class, score, [ax * factor, ay * factor, bx * factor, by * factor]));
        }
    }
    dets.sort_by(Detection::rank_cmp);
    dets
}

/// Settings for turning corner maps into detections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Corners kept per kind.
    pub k: usize,
    pub embed_threshold: f64,
    /// Corners scoring at or below this are discarded before pairing.
    pub corner_threshold: f64,
    pub max_detections: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { k: 100, embed_threshold: 0.5, corner_threshold: 0.0, max_detections: 100 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if !(self.embed_threshold >= 0.0) || !(self.corner_threshold >= 0.0) {
            return Err(Error::InvalidArgument("thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

/// Peaks, pairing and truncation in one call.
pub fn decode<T: Scalar>(
    tl: &CornerMaps<T>,
    br: &CornerMaps<T>,
    factor: f64,
    cfg: &DecodeConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let mut tl = corners_from_maps(tl, cfg.k, CornerKind::TopLeft)?;
    let mut br = corners_from_maps(br, cfg.k, CornerKind::BottomRight)?;
    tl.corners.retain(|c| c.score > cfg.corner_threshold);
    br.corners.retain(|c| c.score > cfg.corner_threshold);
    let mut dets = group_corners(&tl, &br, cfg.embed_threshold, factor);
    dets.truncate(cfg.max_detections);
    Ok(dets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(c: usize, h: usize, w: usize, pts: &[(usize, usize, usize, f32)]) -> Tensor<f32> {
        let mut t = Tensor::zeros([1, c, h, w]);
        for &(ch, y, x, v) in pts {
            t.set([0, ch, y, x], v);
        }
        t
    }

    #[test]
    fn single_planted_peak() {
        let h = heat(1, 8, 8, &[(0, 3, 5, 0.9)]);
        let peaks = heatmap_peaks(&h, 5);
        let positive: Vec<_> = peaks.iter().filter(|p| p.score > 0.0).collect();
        assert_eq!(positive.len(), 1);
        assert_eq!((positive[0].y, positive[0].x), (3, 5));
        assert!((positive[0].score - 0.9).abs() < 1e-6);
    }

    #[test]
    fn uniform_map_tie_order() {
        let h = Tensor::<f32>::filled([1, 2, 3, 3], 0.5);
        let peaks = heatmap_peaks(&h, 4);
        let order: Vec<_> = peaks.iter().map(|p| (p.class, p.y, p.x)).collect();
        assert_eq!(order, vec![(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 0)]);
    }

    fn corner(class: usize, score: f64, y: usize, x: usize, embed: f64) -> Corner {
        Corner { class, score, y, x, offset: [0.0, 0.0], embed }
    }

    #[test]
    fn one_pair_one_detection() {
        let tl = CornerSet { kind: CornerKind::TopLeft, corners: vec![corner(0, 0.8, 1, 1, 2.0)] };
        let br = CornerSet { kind: CornerKind::BottomRight, corners: vec![corner(0, 0.6, 4, 5, 2.0)] };
        let d = group_corners(&tl, &br, 0.5, 4.0);
        assert_eq!(d.len(), 1);
        assert!((d[0].score - 0.7).abs() < 1e-12);
        assert_eq!(d[0].bbox, [4.0, 4.0, 20.0, 16.0]);
    }

    #[test]
    fn geometry_gate() {
        let tl = CornerSet { kind: CornerKind::TopLeft, corners: vec![corner(0, 0.8, 1, 6, 2.0)] };
        let br = CornerSet { kind: CornerKind::BottomRight, corners: vec![corner(0, 0.6, 4, 5, 2.0)] };
        assert!(group_corners(&tl, &br, 0.5, 1.0).is_empty());
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection::new(2, 0.5, [1.0, 2.0, 3.0, 4.0]);
        let v = serde_json::to_value(d).unwrap();
        assert_eq!(v, serde_json::json!({"class": 2, "score": 0.5, "box": [1.0, 2.0, 3.0, 4.0]}));
    }

    #[test]
    fn iou_basics() {
        let a = [0.0, 0.0, 2.0, 2.0];
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &[2.0, 0.0, 4.0, 2.0]), 0.0);
        assert!((iou(&a, &[1.0, 0.0, 3.0, 2.0]) - 1.0 / 3.0).abs() < 1e-12);
    }
}
