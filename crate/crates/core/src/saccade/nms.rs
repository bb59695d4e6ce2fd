use serde::{Deserialize, Serialize};

use crate::decode::Detection;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `score · exp(−IoU² / sigma)`.
    Gaussian,
    /// `score · (1 − IoU)` when IoU exceeds `linear_threshold`.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftNmsConfig {
    pub sigma: f64,
    pub score_floor: f64,
    pub decay: Decay,
    pub linear_threshold: f64,
}

impl Default for SoftNmsConfig {
    fn default() -> Self {
        Self { sigma: 0.5, score_floor: 0.001, decay: Decay::Gaussian, linear_threshold: 0.3 }
    }
}

impl SoftNmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidArgument("soft-NMS sigma must be > 0".into()));
        }
        Ok(())
    }

    fn factor(&self, iou: f64) -> f64 {
        match self.decay {
            Decay::Gaussian => (-(iou * iou) / self.sigma).exp(),
            Decay::Linear if iou > self.linear_threshold => 1.0 - iou,
            Decay::Linear => 1.0,
        }
    }
}

/// Per-class soft suppression. The best remaining box (by
/// [`Detection::rank_cmp`]) is emitted, every other remaining box of its class
/// is decayed by its overlap with it, and boxes that fall below the floor are
/// discarded. Output is ordered by [`Detection::rank_cmp`].
pub fn soft_nms(dets: &[Detection], cfg: &SoftNmsConfig) -> Vec<Detection> {
    let mut pending: Vec<Detection> = dets.iter().filter(|d| d.score >= cfg.score_floor).copied().collect();
    let mut out = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let best_i = (0..pending.len()).min_by(|&a, &b| pending[a].rank_cmp(&pending[b])).expect("non-empty");
        let best = pending.swap_remove(best_i);
        for d in pending.iter_mut().filter(|d| d.class == best.class) {
            d.score *= cfg.factor(best.iou(d));
        }
        pending.retain(|d| d.score >= cfg.score_floor);
        out.push(best);
    }
    out.sort_by(Detection::rank_cmp);
    out
}
