use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::decode::{Detection, SizeClass};
use crate::tensor::Tensor;
use crate::Scalar;

use super::CROP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    /// Centre of a box detected on a downsized image.
    Box,
    /// Attention-map pixel above threshold.
    Attention,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectLocation {
    /// Position in pixels of the downsized image it was found on.
    pub x: f64,
    pub y: f64,
    pub size: SizeClass,
    pub score: f64,
    pub source: LocationSource,
    /// Longer-side length of that downsized image (255 or 192).
    pub scale: usize,
}

impl ObjectLocation {
    /// Position rescaled to the 255 downsized frame, where suppression distances are measured.
    pub fn reference_position(&self) -> (f64, f64) {
        let f = CROP as f64 / self.scale as f64;
        (self.x * f, self.y * f)
    }

    /// Ranking: box-sourced first, then score descending, then `(y, x)` ascending.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        let (ax, ay) = self.reference_position();
        let (bx, by) = other.reference_position();
        self.source
            .cmp(&other.source)
            .then(other.score.total_cmp(&self.score))
            .then(ay.total_cmp(&by))
            .then(ax.total_cmp(&bx))
            .then(self.size.cmp(&other.size))
            .then(self.scale.cmp(&other.scale))
    }
}

/// A single-channel attention map and its image pixels per map pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap<T> {
    pub map: Tensor<T>,
    pub factor: f64,
}

/// One location per attention pixel scoring above `threshold`. `maps` are the
/// small, medium and large maps in that order; a pixel `(i, j)` sits at
/// `(j·factor, i·factor)` on the downsized image. The output is ranked by
/// [`ObjectLocation::rank_cmp`].
pub fn extract_locations<T: Scalar>(maps: &[AttentionMap<T>], threshold: f64, scale: usize) -> Vec<ObjectLocation> {
    let mut out = Vec::new();
    for (att, size) in maps.iter().zip(SizeClass::ALL) {
        let w = att.map.width();
        for (i, &v) in att.map.plane(0, 0).iter().enumerate() {
            let score = v.as_f64();
            if score > threshold {
                out.push(ObjectLocation {
                    x: (i % w) as f64 * att.factor,
                    y: (i / w) as f64 * att.factor,
                    size,
                    score,
                    source: LocationSource::Attention,
                    scale,
                });
            }
        }
    }
    out.sort_by(ObjectLocation::rank_cmp);
    out
}

/// Box centres of detections (in the downsized frame of `scale`) scoring at
/// least `threshold`, sized by the box's longer side.
pub fn locations_from_boxes(dets: &[Detection], threshold: f64, scale: usize) -> Vec<ObjectLocation> {
    dets.iter()
        .filter(|d| d.score >= threshold)
        .map(|d| {
            let (x, y) = d.center();
            ObjectLocation {
                x,
                y,
                size: SizeClass::from_longer_side(d.longer_side()),
                score: d.score,
                source: LocationSource::Box,
                scale,
            }
        })
        .collect()
}

/// Outcome for one ranked location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuppressionDecision {
    pub location: ObjectLocation,
    pub kept: bool,
    /// Index into the kept list of the location that removed this one.
    pub suppressed_by: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Suppression {
    pub kept: Vec<ObjectLocation>,
    pub decisions: Vec<SuppressionDecision>,
}

/// Greedy selection: take the best remaining location, then drop every
/// remaining one within Chebyshev distance `radius` of it in the reference frame.
pub fn suppress_locations(locations: &[ObjectLocation], radius: f64) -> Suppression {
    let mut ranked = locations.to_vec();
    ranked.sort_by(ObjectLocation::rank_cmp);
    let mut kept: Vec<ObjectLocation> = Vec::new();
    let mut decisions = Vec::with_capacity(ranked.len());
    for loc in ranked {
        let (x, y) = loc.reference_position();
        let by = kept.iter().position(|k| {
            let (kx, ky) = k.reference_position();
            (kx - x).abs().max((ky - y).abs()) <= radius
        });
        if by.is_none() {
            kept.push(loc);
        }
        decisions.push(SuppressionDecision { location: loc, kept: by.is_none(), suppressed_by: by });
    }
    Suppression { kept, decisions }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn att(x: f64, y: f64, score: f64) -> ObjectLocation {
        ObjectLocation { x, y, size: SizeClass::Small, score, source: LocationSource::Attention, scale: 255 }
    }

    #[test]
    fn neighbours_collapse() {
        let s = suppress_locations(&[att(10.0, 10.0, 0.5), att(11.0, 10.0, 0.7)], 2.0);
        assert_eq!(s.kept.len(), 1);
        assert_eq!(s.kept[0].score, 0.7);
        assert_eq!(s.decisions[1].suppressed_by, Some(0));
    }

    #[test]
    fn boxes_outrank_attention() {
        let mut b = att(10.0, 10.0, 0.4);
        b.source = LocationSource::Box;
        let s = suppress_locations(&[att(10.0, 10.0, 0.9), b], 16.0);
        assert_eq!(s.kept, vec![b]);
    }

    #[test]
    fn below_threshold_is_empty() {
        let m = AttentionMap { map: Tensor::<f32>::filled([1, 1, 4, 4], 0.2), factor: 4.0 };
        assert!(extract_locations(&[m.clone(), m.clone(), m], 0.3, 255).is_empty());
    }
}
