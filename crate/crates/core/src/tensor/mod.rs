//! Dense NCHW tensors and the numeric kernels the backbones are built from.

mod image;
mod kernels;
pub mod skt;

pub use image::{bilinear_at, longer_side_dims, resize_longer_side, resize_to, zero_pad_to};
pub use kernels::{
    conv2d, conv_output_len, depthwise_conv2d, elementwise, max_pool2d, nearest_upsample2x, transpose_conv2d,
    transpose_conv2d_up2, Activation, ConvSpec, TransposeSpec,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::Scalar;

/// Dense 4-D array laid out as (batch, channels, height, width), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::filled(dims, T::zero())
    }

    pub fn filled(dims: [usize; 4], value: T) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "tensor dims must be >= 1, got {dims:?}");
        Self { dims, data: vec![value; dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return shape_err(format!("tensor dims must be >= 1, got {dims:?}"));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return shape_err(format!("data length {} does not match dims {dims:?} ({len})", data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut t = Self::zeros(dims);
        let [n, c, h, w] = dims;
        let mut i = 0;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[i] = f([b, ch, y, x]);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    /// Uniform samples in `[-scale, scale)` from a seeded ChaCha stream.
    pub fn random(dims: [usize; 4], scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(dims, scale, &mut rng)
    }

    pub fn random_with<R: Rng>(dims: [usize; 4], scale: f64, rng: &mut R) -> Self {
        let len = dims.iter().product();
        let data = (0..len).map(|_| T::lit(rng.gen_range(-scale..scale))).collect();
        Self::from_vec(dims, data).expect("valid dims")
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, [n, c, y, x]: [usize; 4]) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// The `h × w` plane for one (batch, channel) pair.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { dims: self.dims, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }

    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return shape_err(format!("cannot add {:?} and {:?}", self.dims, other.dims));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Self { dims: self.dims, data })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return shape_err(format!("cannot add {:?} and {:?}", self.dims, other.dims));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn relu_inplace(&mut self) {
        for v in &mut self.data {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("empty concat".into()))?;
        let [n, _, h, w] = first.dims;
        if parts.iter().any(|p| p.dims[0] != n || p.dims[2] != h || p.dims[3] != w) {
            return shape_err("concat inputs disagree on batch or spatial dims");
        }
        let c: usize = parts.iter().map(|p| p.dims[1]).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                let chunk = p.dims[1] * h * w;
                data.extend_from_slice(&p.data[b * chunk..(b + 1) * chunk]);
            }
        }
        Self::from_vec([n, c, h, w], data)
    }

    /// Copies a contiguous range of channels.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        let [n, c, h, w] = self.dims;
        if count == 0 || start + count > c {
            return shape_err(format!("channel slice {start}..{} out of {c}", start + count));
        }
        let mut data = Vec::with_capacity(n * count * h * w);
        for b in 0..n {
            for ch in start..start + count {
                data.extend_from_slice(self.plane(b, ch));
            }
        }
        Self::from_vec([n, count, h, w], data)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }
}

/// Parses `NxCxHxW` (e.g. `1x3x255x255`).
pub fn parse_dims(s: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = s
        .split(['x', 'X', '×'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("bad dims `{s}`: {e}")))?;
    match parts.as_slice() {
        &[n, c, h, w] if n * c * h * w > 0 => Ok([n, c, h, w]),
        _ => Err(Error::InvalidArgument(format!("expected four positive dims NxCxHxW, got `{s}`"))),
    }
}
