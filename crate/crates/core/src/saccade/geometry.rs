//! Coordinate frames. Points are continuous image coordinates where pixel `i`
//! spans `[i, i + 1)`; every map between frames is a per-axis scale plus offset.

use serde::{Deserialize, Serialize};

use crate::decode::loss::round_half_up;
use crate::decode::{Detection, SizeClass};
use crate::error::{Error, Result};
use crate::tensor::{longer_side_dims, resize_to, zero_pad_to, Tensor};
use crate::Scalar;

use super::{SaccadeConfig, CROP};

/// `(x, y) ↦ (sx·x + tx, sy·y + ty)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { sx: 1.0, sy: 1.0, tx: 0.0, ty: 0.0 };

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self { sx, sy, tx: 0.0, ty: 0.0 }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.sx * x + self.tx, self.sy * y + self.ty)
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.sx == 0.0 || self.sy == 0.0 || !self.sx.is_finite() || !self.sy.is_finite() {
            return Err(Error::InvalidArgument("affine map is not invertible".into()));
        }
        Ok(Self { sx: 1.0 / self.sx, sy: 1.0 / self.sy, tx: -self.tx / self.sx, ty: -self.ty / self.sy })
    }

    /// `other ∘ self`: apply `self` first.
    pub fn then(&self, other: &Affine2) -> Self {
        Self {
            sx: other.sx * self.sx,
            sy: other.sy * self.sy,
            tx: other.sx * self.tx + other.tx,
            ty: other.sy * self.ty + other.ty,
        }
    }

    pub fn apply_box(&self, b: &[f64; 4]) -> [f64; 4] {
        let (x1, y1) = self.apply(b[0], b[1]);
        let (x2, y2) = self.apply(b[2], b[3]);
        [x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2)]
    }

    pub fn apply_detection(&self, d: &Detection) -> Detection {
        Detection { bbox: self.apply_box(&d.bbox), ..*d }
    }
}

/// One downsized copy of the input, zero-padded to `CROP × CROP`.
#[derive(Clone, Debug)]
pub struct Downsized {
    /// Longer-side target: 255 or 192.
    pub scale: usize,
    pub image: Tensor<f32>,
    /// Height and width of the resized content before padding.
    pub content: (usize, usize),
    pub to_original: Affine2,
}

/// Resizes the longer side to 255 and to 192 and pads both to 255×255.
pub fn downsize_pair(image: &Tensor<f32>) -> Result<[Downsized; 2]> {
    let one = |scale: usize| -> Result<Downsized> {
        let (h, w) = (image.height(), image.width());
        let (oh, ow) = longer_side_dims(h, w, scale);
        let resized = resize_to(image, oh, ow)?;
        Ok(Downsized {
            scale,
            image: zero_pad_to(&resized, CROP, CROP)?,
            content: (oh, ow),
            to_original: Affine2::scale(w as f64 / ow as f64, h as f64 / oh as f64),
        })
    };
    Ok([one(255)?, one(192)?])
}

/// A `CROP × CROP` window on the downsized image enlarged by `zoom`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub zoom: f64,
    pub size: SizeClass,
    /// Downsize scale the location came from.
    pub scale: usize,
    /// Window centre in enlarged coordinates, before clamping.
    pub center: (f64, f64),
    /// Top-left pixel of the window in enlarged coordinates.
    pub origin: (usize, usize),
    /// Enlarged canvas `(h, w)`.
    pub canvas: (usize, usize),
    /// Downsized → original map of the source scale.
    pub downsized_to_original: Affine2,
}

impl CropWindow {
    /// Crop coordinates to original coordinates, evaluated stage by stage:
    /// crop → enlarged → downsized → original.
    pub fn to_original_point(&self, u: f64, v: f64) -> (f64, f64) {
        let (ex, ey) = (u + self.origin.0 as f64, v + self.origin.1 as f64);
        let (dx, dy) = (ex / self.zoom, ey / self.zoom);
        self.downsized_to_original.apply(dx, dy)
    }

    /// The same map folded into a single affine.
    pub fn to_original(&self) -> Affine2 {
        let enlarged = Affine2 { sx: 1.0, sy: 1.0, tx: self.origin.0 as f64, ty: self.origin.1 as f64 };
        enlarged.then(&Affine2::scale(1.0 / self.zoom, 1.0 / self.zoom)).then(&self.downsized_to_original)
    }

    /// Which window edges (left, top, right, bottom) cut through image content.
    pub fn cut_edges(&self) -> [bool; 4] {
        let (ox, oy) = self.origin;
        let (ch, cw) = self.canvas;
        [ox > 0, oy > 0, ox + CROP < cw, oy + CROP < ch]
    }

    pub fn pixels(&self) -> u64 {
        (CROP * CROP) as u64
    }
}

/// Window around a location `(x, y)` given in the downsized frame of `source`.
pub fn make_crop(x: f64, y: f64, size: SizeClass, source: &Downsized, cfg: &SaccadeConfig) -> CropWindow {
    let zoom = cfg.zoom.for_size(size);
    let canvas = ((source.content.0 as f64 * zoom).round() as usize, (source.content.1 as f64 * zoom).round() as usize);
    let (cx, cy) = (x * zoom, y * zoom);
    let place = |c: f64, extent: usize| -> usize {
        let hi = extent.saturating_sub(CROP) as f64;
        round_half_up(c - CROP as f64 / 2.0).clamp(0.0, hi) as usize
    };
    CropWindow {
        zoom,
        size,
        scale: source.scale,
        center: (cx, cy),
        origin: (place(cx, canvas.1), place(cy, canvas.0)),
        canvas,
        downsized_to_original: source.to_original,
    }
}

/// Samples the original image under the window; samples whose centre falls
/// outside the image are zero.
pub fn crop_pixels<T: Scalar>(original: &Tensor<T>, window: &CropWindow) -> Tensor<T> {
    let [_, c, h, w] = original.dims();
    let xs: Vec<Option<f64>> = (0..CROP)
        .map(|u| {
            let (x, _) = window.to_original_point(u as f64 + 0.5, 0.5);
            (x >= 0.0 && x < w as f64).then_some(x - 0.5)
        })
        .collect();
    let ys: Vec<Option<f64>> = (0..CROP)
        .map(|v| {
            let (_, y) = window.to_original_point(0.5, v as f64 + 0.5);
            (y >= 0.0 && y < h as f64).then_some(y - 0.5)
        })
        .collect();
    Tensor::from_fn([1, c, CROP, CROP], |[_, ch, v, u]| match (ys[v], xs[u]) {
        (Some(y), Some(x)) => crate::tensor::bilinear_at(original, 0, ch, y, x),
        _ => T::zero(),
    })
}

/// Tolerance used when deciding whether a box touches an edge.
pub const EDGE_EPS: f64 = 1e-3;

/// Drops boxes within `margin` of any edge of a `extent.0 × extent.1` (w, h)
/// crop. The right and bottom edges are the last pixel, `w - 1` and `h - 1`.
pub fn strip_boundary_boxes(dets: &[Detection], margin: f64, extent: (f64, f64)) -> Vec<Detection> {
    strip_boundary_boxes_on(dets, margin, extent, [true; 4])
}

/// As [`strip_boundary_boxes`], checking only the edges flagged in `edges`
/// (left, top, right, bottom).
pub fn strip_boundary_boxes_on(
    dets: &[Detection],
    margin: f64,
    extent: (f64, f64),
    edges: [bool; 4],
) -> Vec<Detection> {
    let (w, h) = extent;
    let lo = margin + EDGE_EPS;
    dets.iter()
        .filter(|d| {
            let b = d.bbox;
            let touches = [b[0] <= lo, b[1] <= lo, b[2] >= w - 1.0 - lo, b[3] >= h - 1.0 - lo];
            !touches.iter().zip(edges).any(|(&t, e)| t && e)
        })
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_inverse_and_compose() {
        let a = Affine2 { sx: 2.0, sy: 0.5, tx: 3.0, ty: -1.0 };
        let inv = a.inverse().unwrap();
        let (x, y) = inv.apply(a.apply(7.0, 9.0).0, a.apply(7.0, 9.0).1);
        assert!((x - 7.0).abs() < 1e-12 && (y - 9.0).abs() < 1e-12);
        let b = Affine2 { sx: 3.0, sy: 3.0, tx: 1.0, ty: 2.0 };
        let ab = a.then(&b);
        let direct = b.apply(a.apply(1.5, 2.5).0, a.apply(1.5, 2.5).1);
        assert_eq!(ab.apply(1.5, 2.5), direct);
    }

    #[test]
    fn square_pair_dims() {
        let img = Tensor::<f32>::random([1, 3, 510, 510], 1.0, 1);
        let [a, b] = downsize_pair(&img).unwrap();
        assert_eq!(a.content, (255, 255));
        assert_eq!(b.content, (192, 192));
        assert_eq!(b.image.dims(), [1, 3, 255, 255]);
        assert_eq!(b.image.at([0, 0, 200, 10]), 0.0);
    }

    #[test]
    fn strip_left_edge() {
        let d = Detection::new(0, 0.9, [0.0, 10.0, 20.0, 30.0]);
        assert!(strip_boundary_boxes(&[d], 0.0, (255.0, 255.0)).is_empty());
        let inner = Detection::new(0, 0.9, [5.0, 10.0, 20.0, 30.0]);
        assert_eq!(strip_boundary_boxes(&[inner], 0.0, (255.0, 255.0)).len(), 1);
        assert_eq!(strip_boundary_boxes_on(&[d], 0.0, (255.0, 255.0), [false, true, true, true]).len(), 1);
    }
}
