#![allow(dead_code)]

use hgdet::decode::Detection;
use hgdet::tensor::{ConvSpec, TransposeSpec};
use hgdet::Tensor;

pub fn conv_ref(x: &Tensor<f64>, w: &Tensor<f64>, bias: Option<&[f64]>, s: &ConvSpec) -> Tensor<f64> {
    let [n, _, h, wd] = x.dims();
    let (kh, kw) = s.kernel;
    let oh = (h + 2 * s.pad - kh) / s.stride + 1;
    let ow = (wd + 2 * s.pad - kw) / s.stride + 1;
    let in_per_group = s.in_channels / s.groups;
    let out_per_group = s.out_channels / s.groups;
    let mut out = Tensor::zeros([n, s.out_channels, oh, ow]);
    for b in 0..n {
        for oc in 0..s.out_channels {
            let g = oc / out_per_group;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |v| v[oc]);
                    for icg in 0..in_per_group {
                        let ic = g * in_per_group + icg;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                                let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at([b, ic, iy as usize, ix as usize]) * w.at([oc, icg, ky, kx]);
                            }
                        }
                    }
                    out.set([b, oc, oy, ox], acc);
                }
            }
        }
    }
    out
}

/// Scatter form: every input pixel stamps the kernel onto the output.
pub fn transpose_ref(x: &Tensor<f64>, w: &Tensor<f64>, bias: Option<&[f64]>, s: &TransposeSpec) -> Tensor<f64> {
    let [n, ic_n, h, wd] = x.dims();
    let full_h = (h - 1) * s.stride + s.kernel;
    let full_w = (wd - 1) * s.stride + s.kernel;
    let mut full = vec![0.0; n * s.out_channels * full_h * full_w];
    for b in 0..n {
        for ic in 0..ic_n {
            for iy in 0..h {
                for ix in 0..wd {
                    let v = x.at([b, ic, iy, ix]);
                    for oc in 0..s.out_channels {
                        for ky in 0..s.kernel {
                            for kx in 0..s.kernel {
                                let (fy, fx) = (iy * s.stride + ky, ix * s.stride + kx);
                                full[((b * s.out_channels + oc) * full_h + fy) * full_w + fx] +=
                                    v * w.at([ic, oc, ky, kx]);
                            }
                        }
                    }
                }
            }
        }
    }
    let (oh, ow) = (full_h - 2 * s.pad, full_w - 2 * s.pad);
    Tensor::from_fn([n, s.out_channels, oh, ow], |[b, oc, y, x]| {
        full[((b * s.out_channels + oc) * full_h + y + s.pad) * full_w + x + s.pad] + bias.map_or(0.0, |v| v[oc])
    })
}

pub fn max_pool_ref(x: &Tensor<f64>, k: usize, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, c, h, w] = x.dims();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    Tensor::from_fn([n, c, oh, ow], |[b, ch, oy, ox]| {
        let mut best = f64::NEG_INFINITY;
        for ky in 0..k {
            for kx in 0..k {
                let y = (oy * stride + ky) as isize - pad as isize;
                let xx = (ox * stride + kx) as isize - pad as isize;
                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < w {
                    best = best.max(x.at([b, ch, y as usize, xx as usize]));
                }
            }
        }
        best
    })
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

pub fn all_close(a: &Tensor<f64>, b: &Tensor<f64>, rel: f64) -> bool {
    a.dims() == b.dims() && a.data().iter().zip(b.data()).all(|(&x, &y)| rel_close(x, y, rel))
}

pub fn box_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union =
        (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0) + (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn before(a: &Detection, b: &Detection) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.class != b.class {
        return a.class < b.class;
    }
    a.bbox.partial_cmp(&b.bbox) == Some(std::cmp::Ordering::Less)
}

/// Textbook soft-NMS, class by class: repeatedly swap the best remaining box to
/// the front and decay everything behind it.
pub fn soft_nms_ref(dets: &[Detection], sigma: f64, floor: f64) -> Vec<Detection> {
    let mut out = Vec::new();
    let mut classes: Vec<usize> = dets.iter().map(|d| d.class).collect();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let mut b: Vec<Detection> = dets.iter().filter(|d| d.class == c && d.score >= floor).copied().collect();
        let mut i = 0;
        while i < b.len() {
            let mut m = i;
            for j in i + 1..b.len() {
                if before(&b[j], &b[m]) {
                    m = j;
                }
            }
            b.swap(i, m);
            let top = b[i];
            let mut j = i + 1;
            while j < b.len() {
                let o = box_iou(&top.bbox, &b[j].bbox);
                b[j].score *= (-(o * o) / sigma).exp();
                if b[j].score < floor {
                    b.remove(j);
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        out.extend(b);
    }
    let mut sorted = Vec::with_capacity(out.len());
    while !out.is_empty() {
        let mut m = 0;
        for j in 1..out.len() {
            if before(&out[j], &out[m]) {
                m = j;
            }
        }
        sorted.push(out.remove(m));
    }
    sorted
}

pub fn focal_ref(pred: &[f64], gt: &[f64], alpha: f64) -> f64 {
    let eps = 1e-7;
    let mut pos = 0.0;
    let mut total = 0.0;
    for i in 0..pred.len() {
        let p = pred[i].max(eps).min(1.0 - eps);
        if gt[i] == 1.0 {
            pos += 1.0;
            total -= (1.0 - p).powf(alpha) * p.ln();
        } else {
            total -= p.powf(alpha) * (1.0 - p).ln();
        }
    }
    if pos > 0.0 {
        total / pos
    } else {
        total
    }
}

/// Pull over objects; push over ordered pairs `i != j`.
pub fn pull_push_ref(e: &[(f64, f64)]) -> (f64, f64) {
    let n = e.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut pull = 0.0;
    for &(a, b) in e {
        let m = 0.5 * a + 0.5 * b;
        pull += (a - m) * (a - m) + (b - m) * (b - m);
    }
    let mut push = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mi = 0.5 * (e[i].0 + e[i].1);
                let mj = 0.5 * (e[j].0 + e[j].1);
                let gap = 1.0 - (mi - mj).abs();
                push += if gap > 0.0 { gap } else { 0.0 };
                pairs += 1.0;
            }
        }
    }
    (pull / n as f64, if pairs > 0.0 { push / pairs } else { 0.0 })
}

pub fn smooth_l1_ref(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d * d / 2.0
    } else {
        d.abs() - 0.5
    }
}

/// Greedy one-to-one matching by IoU. Returns, per ground-truth box, the best
/// IoU of the prediction it was matched to, and the indices of unmatched predictions.
pub fn match_boxes(gt: &[Detection], pred: &[Detection], min_iou: f64) -> (Vec<f64>, Vec<usize>) {
    let mut taken = vec![false; pred.len()];
    let mut best = vec![0.0; gt.len()];
    for (g, slot) in gt.iter().zip(best.iter_mut()) {
        let mut pick: Option<(usize, f64)> = None;
        for (i, p) in pred.iter().enumerate() {
            if taken[i] || p.class != g.class {
                continue;
            }
            let o = box_iou(&g.bbox, &p.bbox);
            if o >= min_iou && pick.is_none_or(|(_, b)| o > b) {
                pick = Some((i, o));
            }
        }
        if let Some((i, o)) = pick {
            taken[i] = true;
            *slot = o;
        }
    }
    let unmatched = (0..pred.len()).filter(|&i| !taken[i]).collect();
    (best, unmatched)
}
