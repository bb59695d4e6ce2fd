use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::Scalar;

/// Geometry of a (possibly grouped) 2-D convolution.
///
/// Weights are laid out `[out_channels, in_channels / groups, kh, kw]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Square kernel, "same" padding for odd sizes, stride 1, with bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            pad: kernel / 2,
            groups: 1,
            has_bias: true,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        Self { groups: channels, has_bias: false, ..Self::new(channels, channels, kernel) }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = pad;
        self
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("conv spec {self:?}: {m}")));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channels must be >= 1");
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return bad("kernel and stride must be >= 1");
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return bad("channels must be divisible by groups");
        }
        Ok(())
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels / self.groups, self.kernel.0, self.kernel.1]
    }

    pub fn weight_count(&self) -> usize {
        self.weight_dims().iter().product()
    }

    pub fn bias_count(&self) -> usize {
        if self.has_bias {
            self.out_channels
        } else {
            0
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            conv_output_len(h, self.kernel.0, self.stride, self.pad)?,
            conv_output_len(w, self.kernel.1, self.stride, self.pad)?,
        ))
    }
}

/// `floor((len + 2·pad − kernel) / stride) + 1`.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = len + 2 * pad;
    if padded < kernel {
        return shape_err(format!("kernel {kernel} larger than padded input {padded}"));
    }
    Ok((padded - kernel) / stride + 1)
}

fn check_bias<T>(bias: Option<&[T]>, spec_has_bias: bool, out: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != out => shape_err(format!("bias length {} != {out}", b.len())),
        None if spec_has_bias => shape_err("spec declares a bias but none was given"),
        _ => Ok(()),
    }
}

/// Grouped 2-D cross-correlation with zero padding.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let [n, c, ih, iw] = input.dims();
    if c != spec.in_channels {
        return shape_err(format!("input has {c} channels, conv expects {}", spec.in_channels));
    }
    if weights.dims() != spec.weight_dims() {
        return shape_err(format!("weights {:?} do not match conv {:?}", weights.dims(), spec.weight_dims()));
    }
    check_bias(bias, spec.has_bias, spec.out_channels)?;
    let (oh, ow) = spec.output_hw(ih, iw)?;
    let (kh, kw) = spec.kernel;
    let (s, pad) = (spec.stride, spec.pad);
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let wdata = weights.data();

    // Valid output-column range for each kernel column: 0 <= ox*s + kx - pad < iw.
    let col_range = |kx: usize| -> (usize, usize) {
        let lo = if pad > kx { (pad - kx).div_ceil(s) } else { 0 };
        let hi = if iw + pad > kx { ((iw - 1 + pad - kx) / s + 1).min(ow) } else { 0 };
        (lo, hi.max(lo))
    };
    let ranges: Vec<(usize, usize)> = (0..kw).map(col_range).collect();

    let mut out = vec![T::zero(); n * spec.out_channels * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, dst)| {
        let b = plane / spec.out_channels;
        let oc = plane % spec.out_channels;
        if let Some(bias) = bias {
            dst.fill(bias[oc]);
        }
        let g = oc / cout_g;
        for icg in 0..cin_g {
            let src = input.plane(b, g * cin_g + icg);
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wdata[((oc * cin_g + icg) * kh + ky) * kw + kx];
                    let (lo, hi) = ranges[kx];
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy * s + ky;
                        if iy < pad || iy - pad >= ih {
                            continue;
                        }
                        let row = &src[(iy - pad) * iw..(iy - pad + 1) * iw];
                        let drow = &mut dst[oy * ow + lo..oy * ow + hi];
                        if s == 1 {
                            let srow = &row[lo + kx - pad..hi + kx - pad];
                            for (d, &v) in drow.iter_mut().zip(srow) {
                                *d += wv * v;
                            }
                        } else {
                            for (i, d) in drow.iter_mut().enumerate() {
                                *d += wv * row[(lo + i) * s + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::from_vec([n, spec.out_channels, oh, ow], out)
}

/// Per-channel convolution: `groups == in_channels == out_channels`.
pub fn depthwise_conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    if spec.groups != spec.in_channels || spec.in_channels != spec.out_channels {
        return shape_err(format!(
            "depthwise conv needs groups == in == out channels, got groups {} in {} out {}",
            spec.groups, spec.in_channels, spec.out_channels
        ));
    }
    conv2d(input, weights, bias, spec)
}

/// Geometry of a transposed convolution. Weights are `[in_channels, out_channels, kh, kw]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransposeSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl TransposeSpec {
    /// The 4×4 / stride-2 / pad-1 configuration that exactly doubles spatial dims.
    pub fn up2(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, kernel: 4, stride: 2, pad: 1 }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.in_channels, self.out_channels, self.kernel, self.kernel]
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        let full = (len - 1) * self.stride + self.kernel;
        if full < 2 * self.pad + 1 {
            return shape_err("transpose conv padding removes the whole output");
        }
        Ok(full - 2 * self.pad)
    }
}

/// Transposed convolution evaluated in gather form: each output pixel sums the
/// input pixels whose scatter footprint covers it.
pub fn transpose_conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    spec: &TransposeSpec,
) -> Result<Tensor<T>> {
    if spec.kernel == 0 || spec.stride == 0 {
        return Err(Error::InvalidArgument("transpose kernel and stride must be >= 1".into()));
    }
    let [n, c, ih, iw] = input.dims();
    if c != spec.in_channels {
        return shape_err(format!("input has {c} channels, transpose conv expects {}", spec.in_channels));
    }
    if weights.dims() != spec.weight_dims() {
        return shape_err(format!("weights {:?} do not match transpose conv {:?}", weights.dims(), spec.weight_dims()));
    }
    check_bias(bias, false, spec.out_channels)?;
    let oh = spec.output_len(ih)?;
    let ow = spec.output_len(iw)?;
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad);

    // For each output coordinate, the (kernel tap, input coordinate) pairs that reach it.
    let taps = |olen: usize, ilen: usize| -> Vec<Vec<(usize, usize)>> {
        (0..olen)
            .map(|o| {
                (0..k)
                    .filter_map(|kk| {
                        let t = (o + p).checked_sub(kk)?;
                        (t % s == 0 && t / s < ilen).then_some((kk, t / s))
                    })
                    .collect()
            })
            .collect()
    };
    let ty = taps(oh, ih);
    let tx = taps(ow, iw);
    let wdata = weights.data();
    let oc_n = spec.out_channels;

    let mut out = vec![T::zero(); n * oc_n * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, dst)| {
        let b = plane / oc_n;
        let oc = plane % oc_n;
        if let Some(bias) = bias {
            dst.fill(bias[oc]);
        }
        for ic in 0..spec.in_channels {
            let src = input.plane(b, ic);
            let wbase = (ic * oc_n + oc) * k * k;
            for (oy, ylist) in ty.iter().enumerate() {
                let drow = &mut dst[oy * ow..(oy + 1) * ow];
                for &(ky, iy) in ylist {
                    let srow = &src[iy * iw..(iy + 1) * iw];
                    let wrow = &wdata[wbase + ky * k..wbase + (ky + 1) * k];
                    for (d, xlist) in drow.iter_mut().zip(&tx) {
                        for &(kx, ix) in xlist {
                            *d += wrow[kx] * srow[ix];
                        }
                    }
                }
            }
        }
    });
    Tensor::from_vec([n, oc_n, oh, ow], out)
}

/// 4×4, stride 2, pad 1 transposed convolution.
pub fn transpose_conv2d_up2<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
) -> Result<Tensor<T>> {
    let [ic, oc, _, _] = weights.dims();
    transpose_conv2d(input, weights, bias, &TransposeSpec::up2(ic, oc))
}

/// Replicates every pixel into a 2×2 block.
pub fn nearest_upsample2x<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = input.dims();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..2 * h {
                let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
                for (x, d) in dst[y * 2 * w..(y + 1) * 2 * w].iter_mut().enumerate() {
                    *d = srow[x / 2];
                }
            }
        }
    }
    out
}

/// Sliding-window maximum; padded cells count as −∞.
pub fn max_pool2d<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize, pad: usize) -> Result<Tensor<T>> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidArgument("pool kernel and stride must be >= 1".into()));
    }
    let [n, c, h, w] = input.dims();
    let oh = conv_output_len(h, kernel, stride, pad)?;
    let ow = conv_output_len(w, kernel, stride, pad)?;
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                let y0 = (oy * stride).saturating_sub(pad);
                let y1 = (oy * stride + kernel).saturating_sub(pad).min(h);
                for ox in 0..ow {
                    let x0 = (ox * stride).saturating_sub(pad);
                    let x1 = (ox * stride + kernel).saturating_sub(pad).min(w);
                    let mut m = T::neg_infinity();
                    for y in y0..y1 {
                        for &v in &src[y * w + x0..y * w + x1] {
                            m = m.max(v);
                        }
                    }
                    dst[oy * ow + ox] = m;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

/// Logistic function, clamped into the open unit interval so saturated inputs
/// never produce exactly 0 or 1.
fn sigmoid<T: Scalar>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    y.max(T::min_positive_value()).min(T::below_one())
}

pub fn elementwise<T: Scalar>(input: &Tensor<T>, act: Activation) -> Tensor<T> {
    input.map(|v| act.apply(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_1x1_conv() {
        let x = Tensor::<f32>::random([1, 1, 4, 4], 1.0, 3);
        let w = Tensor::filled([1, 1, 1, 1], 1.0);
        let spec = ConvSpec::new(1, 1, 1).with_bias(false);
        assert_eq!(conv2d(&x, &w, None, &spec).unwrap(), x);
    }

    #[test]
    fn residual_row_shape() {
        let x = Tensor::<f32>::zeros([1, 256, 64, 64]);
        let spec = ConvSpec::new(256, 256, 3).with_bias(false);
        let w = Tensor::zeros(spec.weight_dims());
        assert_eq!(conv2d(&x, &w, None, &spec).unwrap().dims(), [1, 256, 64, 64]);
    }

    #[test]
    fn conv_rejects_mismatch() {
        let x = Tensor::<f32>::zeros([1, 3, 5, 5]);
        let spec = ConvSpec::new(4, 2, 3);
        let w = Tensor::zeros(spec.weight_dims());
        let err = conv2d(&x, &w, Some(&[0.0, 0.0]), &spec).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
        let spec = ConvSpec::new(3, 2, 3);
        let err = conv2d(&x, &w, Some(&[0.0, 0.0]), &spec).unwrap_err();
        assert!(err.to_string().contains("weights"), "{err}");
        let w = Tensor::zeros(spec.weight_dims());
        assert!(conv2d(&x, &w, None, &spec).is_err());
        let bad_groups = ConvSpec { groups: 2, ..ConvSpec::new(3, 2, 3) };
        assert!(conv2d(&x, &w, None, &bad_groups).is_err());
    }

    #[test]
    fn depthwise_identity_kernels() {
        let x = Tensor::<f32>::random([1, 2, 4, 4], 1.0, 5);
        let spec = ConvSpec::depthwise(2, 3);
        let w = Tensor::from_fn(spec.weight_dims(), |[_, _, y, x]| if y == 1 && x == 1 { 1.0 } else { 0.0 });
        assert_eq!(depthwise_conv2d(&x, &w, None, &spec).unwrap(), x);
    }

    #[test]
    fn depthwise_shape_and_group_check() {
        let x = Tensor::<f32>::zeros([1, 128, 64, 64]);
        let spec = ConvSpec::depthwise(128, 3);
        let w = Tensor::zeros(spec.weight_dims());
        assert_eq!(depthwise_conv2d(&x, &w, None, &spec).unwrap().dims(), [1, 128, 64, 64]);
        let std = ConvSpec::new(128, 128, 3).with_bias(false);
        let w = Tensor::zeros(std.weight_dims());
        assert!(depthwise_conv2d(&x, &w, None, &std).is_err());
    }

    #[test]
    fn transpose_doubles() {
        let x = Tensor::<f32>::random([1, 1, 4, 4], 1.0, 1);
        let w = Tensor::random([1, 1, 4, 4], 1.0, 2);
        assert_eq!(transpose_conv2d_up2(&x, &w, None).unwrap().dims(), [1, 1, 8, 8]);
        let x = Tensor::<f32>::zeros([1, 256, 64, 64]);
        let w = Tensor::zeros([256, 256, 4, 4]);
        assert_eq!(transpose_conv2d_up2(&x, &w, None).unwrap().dims(), [1, 256, 128, 128]);
        let x = Tensor::<f32>::zeros([1, 1, 1, 1]);
        let w = Tensor::zeros([1, 1, 4, 4]);
        assert_eq!(transpose_conv2d_up2(&x, &w, None).unwrap().dims(), [1, 1, 2, 2]);
    }

    #[test]
    fn upsample_definition() {
        let x = Tensor::<f32>::from_vec([1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = nearest_upsample2x(&x);
        assert_eq!(y.data(), &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]);
        let one = Tensor::<f32>::filled([1, 1, 1, 1], 7.0);
        assert_eq!(nearest_upsample2x(&one), Tensor::filled([1, 1, 2, 2], 7.0));
    }

    #[test]
    fn pool_constant_and_peak() {
        let x = Tensor::<f32>::filled([1, 2, 5, 5], 3.0);
        assert_eq!(max_pool2d(&x, 3, 1, 1).unwrap(), x);
        let mut p = Tensor::<f32>::zeros([1, 1, 3, 3]);
        p.set([0, 0, 1, 1], 0.9);
        let y = max_pool2d(&p, 3, 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.9));
    }

    #[test]
    fn activations() {
        let x = Tensor::<f32>::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(elementwise(&x, Activation::Relu).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(elementwise(&x, Activation::Sigmoid).data()[1], 0.5);
        for v in [-1e4f32, -50.0, 50.0, 1e4] {
            let s = Activation::Sigmoid.apply(v);
            assert!(s.is_finite() && s > 0.0 && s < 1.0, "sigmoid({v}) = {s}");
        }
        // f64 evaluation as the high-precision reference.
        let lo = Activation::Sigmoid.apply(-50.0f32) as f64;
        let reference = 1.0 / (1.0 + 50f64.exp());
        assert!((lo - reference).abs() / reference < 1e-5);
    }
}
