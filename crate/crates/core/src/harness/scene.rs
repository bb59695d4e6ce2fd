use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::Detection;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderStyle {
    #[default]
    Solid,
    /// Two-pixel border only.
    Outline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: usize,
    /// `[x1, y1, x2, y2]`; the object covers pixels `x1 ≤ x < x2`, `y1 ≤ y < y2`.
    #[serde(rename = "box")]
    pub bbox: [usize; 4],
    #[serde(default)]
    pub style: RenderStyle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

/// Grey level of a class; distinct for the first seven classes.
pub fn class_intensity(class: usize) -> f32 {
    0.3 + 0.1 * (class % 7) as f32
}

const NOISE: f64 = 0.15;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("scene canvas must be non-empty".into()));
        }
        for o in &self.objects {
            let [x1, y1, x2, y2] = o.bbox;
            if x1 >= x2 || y1 >= y2 || x2 > self.width || y2 > self.height {
                return Err(Error::InvalidArgument(format!("object box {:?} is empty or outside the canvas", o.bbox)));
            }
        }
        Ok(())
    }

    /// `count` non-overlapping objects with sides of at least 24 px, at least
    /// 8 px apart and 2 px from the canvas edge, longer side at most 0.7 of the
    /// shorter canvas side.
    pub fn random(seed: u64, height: usize, width: usize, count: usize, num_classes: usize) -> Result<Self> {
        let max_side = (height.min(width) as f64 * 0.7) as usize;
        if max_side < MIN_SIDE || num_classes == 0 {
            return Err(Error::InvalidArgument("canvas too small for random objects".into()));
        }
        let fail = || Error::InvalidArgument(format!("could not place {count} objects on {height}x{width}"));
        let cell = MIN_SIDE + GAP;
        if count * cell * cell > (width - 2 * EDGE + GAP) * (height - 2 * EDGE + GAP) {
            return Err(fail());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        for _ in 0..RESTARTS {
            if let Some(objects) = place_objects(&mut rng, height, width, count, num_classes, max_side) {
                return Ok(Self { height, width, objects, seed });
            }
        }
        Err(fail())
    }
}

const MIN_SIDE: usize = 24;
const GAP: usize = 8;
const EDGE: usize = 2;
const RESTARTS: usize = 50;
const ROUND_ATTEMPTS: usize = 2_000;

/// One rejection-sampling round from an empty canvas; the size cap shrinks
/// every 200 attempts so crowded canvases fill with smaller objects.
fn place_objects(
    rng: &mut ChaCha8Rng,
    height: usize,
    width: usize,
    count: usize,
    num_classes: usize,
    max_side: usize,
) -> Option<Vec<SceneObject>> {
    let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
    let mut cap = max_side;
    for attempt in 1..=ROUND_ATTEMPTS {
        if objects.len() == count {
            break;
        }
        if attempt % 200 == 0 {
            cap = (cap * 3 / 4).max(MIN_SIDE);
        }
        let bw = rng.gen_range(MIN_SIDE..=cap);
        let bh = rng.gen_range(MIN_SIDE..=cap);
        if bw + 2 * EDGE > width || bh + 2 * EDGE > height {
            continue;
        }
        let x1 = rng.gen_range(EDGE..=width - EDGE - bw);
        let y1 = rng.gen_range(EDGE..=height - EDGE - bh);
        let b = [x1, y1, x1 + bw, y1 + bh];
        let clear = objects.iter().all(|o| {
            let a = o.bbox;
            b[0] >= a[2] + GAP || a[0] >= b[2] + GAP || b[1] >= a[3] + GAP || a[1] >= b[3] + GAP
        });
        if clear {
            objects.push(SceneObject { class: rng.gen_range(0..num_classes), bbox: b, style: RenderStyle::Solid });
        }
    }
    (objects.len() == count).then_some(objects)
}

/// `count` random scenes with canvas sides in `[160, 480]` and 1 to 8 objects each.
pub fn scene_corpus(seed: u64, count: usize, num_classes: usize) -> Result<Vec<SceneSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (h, w) = (rng.gen_range(160..=480), rng.gen_range(160..=480));
            let objects = rng.gen_range(1..=8);
            SceneSpec::random(rng.gen(), h, w, objects, num_classes)
        })
        .collect()
}

/// Renders the scene as a `1×3×H×W` image (one grey channel repeated) and
/// returns the ground truth as unit-score detections.
pub fn gen_scene(spec: &SceneSpec) -> Result<(Tensor<f32>, Vec<Detection>)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut grey: Vec<f32> = (0..h * w).map(|_| rng.gen_range(0.0..NOISE) as f32).collect();
    for o in &spec.objects {
        let [x1, y1, x2, y2] = o.bbox;
        let v = class_intensity(o.class);
        for y in y1..y2 {
            for x in x1..x2 {
                let border = x < x1 + 2 || x + 2 >= x2 || y < y1 + 2 || y + 2 >= y2;
                if o.style == RenderStyle::Solid || border {
                    grey[y * w + x] = v;
                }
            }
        }
    }
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        data.extend_from_slice(&grey);
    }
    let image = Tensor::from_vec([1, 3, h, w], data)?;
    let gt = spec.objects.iter().map(|o| Detection::new(o.class, 1.0, o.bbox.map(|v| v as f64))).collect();
    Ok((image, gt))
}
