use serde::{Deserialize, Serialize};

use crate::blocks::CornerMaps;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// Predictions are clamped into `[FOCAL_EPS, 1 - FOCAL_EPS]` before taking logs.
pub const FOCAL_EPS: f64 = 1e-7;

/// `-(1/max(1, N_pos)) Σ [gt (1-p)^α log p + (1-gt) p^α log(1-p)]`.
pub fn focal_loss<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, alpha: f64) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return shape_err(format!("prediction {:?} vs target {:?}", pred.dims(), gt.dims()));
    }
    let mut positives = 0usize;
    let mut sum = 0.0;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let p = p.as_f64().clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
        let g = g.as_f64();
        if g == 1.0 {
            positives += 1;
            sum += (1.0 - p).powf(alpha) * p.ln();
        } else if g == 0.0 {
            sum += p.powf(alpha) * (1.0 - p).ln();
        } else {
            return Err(Error::InvalidArgument(format!("focal loss target must be 0 or 1, got {g}")));
        }
    }
    Ok(-sum / positives.max(1) as f64)
}

/// Object scale bucket used to route attention targets and pick zoom factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    /// Below 32 px is small, 32 to 96 px inclusive is medium, above is large.
    pub fn from_longer_side(side: f64) -> Self {
        if side < 32.0 {
            SizeClass::Small
        } else if side <= 96.0 {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub(crate) fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Binary `1×1×h×w` target marking the centre of every box of class `size`.
///
/// Box centres are divided by `factor` (image pixels per map pixel) and rounded
/// half-up on each axis; centres landing outside the map are skipped.
pub fn attention_targets<T: Scalar>(
    boxes: &[[f64; 4]],
    map_hw: (usize, usize),
    factor: f64,
    size: SizeClass,
) -> Tensor<T> {
    let (h, w) = map_hw;
    let mut t = Tensor::zeros([1, 1, h, w]);
    for b in boxes {
        let side = (b[2] - b[0]).max(b[3] - b[1]);
        if SizeClass::from_longer_side(side) != size {
            continue;
        }
        let mx = round_half_up((b[0] + b[2]) / 2.0 / factor);
        let my = round_half_up((b[1] + b[3]) / 2.0 / factor);
        if mx >= 0.0 && my >= 0.0 && (mx as usize) < w && (my as usize) < h {
            t.set([0, 0, my as usize, mx as usize], T::one());
        }
    }
    t
}

/// Ground-truth corner locations (heatmap pixels) and sub-pixel offsets of one object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtCornerPair {
    /// `(y, x)` of the top-left corner.
    pub tl: (usize, usize),
    pub br: (usize, usize),
    /// `(x, y)` offsets.
    pub tl_offset: [f64; 2],
    pub br_offset: [f64; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CornerLosses {
    pub pull: f64,
    pub push: f64,
    pub offset: f64,
}

fn smooth_l1(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

/// Pull and push terms from per-object `(top-left, bottom-right)` embeddings.
///
/// pull = (1/N) Σ [(e_tl − ē)² + (e_br − ē)²]; push averages
/// max(0, 1 − |ē_i − ē_j|) over object pairs.
pub fn embedding_losses(embeds: &[(f64, f64)]) -> (f64, f64) {
    let n = embeds.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let means: Vec<f64> = embeds.iter().map(|(a, b)| (a + b) / 2.0).collect();
    let pull = embeds.iter().zip(&means).map(|((a, b), m)| (a - m).powi(2) + (b - m).powi(2)).sum::<f64>() / n as f64;
    if n < 2 {
        return (pull, 0.0);
    }
    let mut push = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            push += (1.0 - (means[i] - means[j]).abs()).max(0.0);
        }
    }
    (pull, push / (n * (n - 1) / 2) as f64)
}

/// Pull, push and smooth-L1 offset losses read from the embedding and offset
/// maps at each object's ground-truth corner locations.
pub fn pull_push_offset_losses<T: Scalar>(
    tl: &CornerMaps<T>,
    br: &CornerMaps<T>,
    pairs: &[GtCornerPair],
) -> Result<CornerLosses> {
    for maps in [tl, br] {
        if maps.embed.channels() != 1 || maps.offset.channels() != 2 {
            return shape_err("expected 1 embedding and 2 offset channels");
        }
    }
    let read = |maps: &CornerMaps<T>, (y, x): (usize, usize)| -> Result<(f64, [f64; 2])> {
        if y >= maps.embed.height() || x >= maps.embed.width() || y >= maps.offset.height() || x >= maps.offset.width()
        {
            return shape_err(format!("corner ({y}, {x}) outside the maps"));
        }
        Ok((
            maps.embed.at([0, 0, y, x]).as_f64(),
            [maps.offset.at([0, 0, y, x]).as_f64(), maps.offset.at([0, 1, y, x]).as_f64()],
        ))
    };
    let mut embeds = Vec::with_capacity(pairs.len());
    let mut offset = 0.0;
    for p in pairs {
        let (e_tl, o_tl) = read(tl, p.tl)?;
        let (e_br, o_br) = read(br, p.br)?;
        embeds.push((e_tl, e_br));
        for i in 0..2 {
            offset += smooth_l1(o_tl[i] - p.tl_offset[i]) + smooth_l1(o_br[i] - p.br_offset[i]);
        }
    }
    let (pull, push) = embedding_losses(&embeds);
    let offset = if pairs.is_empty() { 0.0 } else { offset / pairs.len() as f64 };
    Ok(CornerLosses { pull, push, offset })
}
