//! Image-space resampling. Coordinates follow the half-pixel-center convention:
//! pixel `i` covers `[i, i + 1)` and is sampled at `i + 0.5`.

use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::Scalar;

/// Bilinear sample at index coordinates `(y, x)` with edge clamping.
pub fn bilinear_at<T: Scalar>(img: &Tensor<T>, n: usize, c: usize, y: f64, x: f64) -> T {
    let (h, w) = (img.height(), img.width());
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (wy, wx) = (y - y0 as f64, x - x0 as f64);
    let p = img.plane(n, c);
    let top = p[y0 * w + x0].as_f64() * (1.0 - wx) + p[y0 * w + x1].as_f64() * wx;
    let bot = p[y1 * w + x0].as_f64() * (1.0 - wx) + p[y1 * w + x1].as_f64() * wx;
    T::lit(top * (1.0 - wy) + bot * wy)
}

/// Bilinear resize to exactly `out_h × out_w`.
pub fn resize_to<T: Scalar>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be >= 1".into()));
    }
    let [n, c, h, w] = img.dims();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let ys: Vec<f64> = (0..out_h).map(|i| sy * (i as f64 + 0.5) - 0.5).collect();
    let xs: Vec<f64> = (0..out_w).map(|i| sx * (i as f64 + 0.5) - 0.5).collect();
    Ok(Tensor::from_fn([n, c, out_h, out_w], |[b, ch, y, x]| bilinear_at(img, b, ch, ys[y], xs[x])))
}

/// Dims after scaling so the longer side equals `target`; the shorter side is
/// rounded half-up and kept at least 1.
pub fn longer_side_dims(h: usize, w: usize, target: usize) -> (usize, usize) {
    let scale_short = |short: usize, long: usize| ((2 * short * target + long) / (2 * long)).max(1);
    if h >= w {
        (target, scale_short(w, h))
    } else {
        (scale_short(h, w), target)
    }
}

pub fn resize_longer_side<T: Scalar>(img: &Tensor<T>, target: usize) -> Result<Tensor<T>> {
    if target == 0 {
        return Err(Error::InvalidArgument("resize target must be >= 1".into()));
    }
    let (oh, ow) = longer_side_dims(img.height(), img.width(), target);
    resize_to(img, oh, ow)
}

/// Places the image at the top-left of a zero canvas of `h × w`.
pub fn zero_pad_to<T: Scalar>(img: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let [n, c, ih, iw] = img.dims();
    if h < ih || w < iw {
        return shape_err(format!("cannot pad {ih}x{iw} down to {h}x{w}"));
    }
    let mut out = Tensor::zeros([n, c, h, w]);
    for b in 0..n {
        for ch in 0..c {
            let src = img.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..ih {
                dst[y * w..y * w + iw].copy_from_slice(&src[y * iw..(y + 1) * iw]);
            }
        }
    }
    Ok(out)
}
