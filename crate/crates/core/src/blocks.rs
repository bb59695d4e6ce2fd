//! Composite layers shared by the backbones: residual blocks, fire modules and
//! the 1-or-3-kernel prediction heads used for attention maps and corners.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{conv2d, transpose_conv2d, Activation, ConvSpec, Tensor, TransposeSpec};
use crate::Scalar;

/// How freshly allocated parameters are filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// Uniform in `±1/sqrt(fan_in)`.
    Uniform,
}

fn init_tensor<T: Scalar, R: Rng>(dims: [usize; 4], fan_in: usize, init: Init, rng: &mut R) -> Tensor<T> {
    match init {
        Init::Zeros => Tensor::zeros(dims),
        Init::Uniform => Tensor::random_with(dims, 1.0 / (fan_in.max(1) as f64).sqrt(), rng),
    }
}

/// Per-channel `scale · x + shift` applied after a convolution, e.g. a folded
/// batch norm. Absent by default.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAffine<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

/// A single convolution with optional bias and normalization hook.
#[derive(Clone, Debug)]
pub struct ConvLayer<T> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub norm: Option<ChannelAffine<T>>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new<R: Rng>(spec: ConvSpec, init: Init, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let fan_in = spec.weight_dims()[1..].iter().product();
        let weight = init_tensor(spec.weight_dims(), fan_in, init, rng);
        let bias = spec.has_bias.then(|| init_tensor([spec.out_channels, 1, 1, 1], fan_in, init, rng));
        Ok(Self { spec, weight, bias, norm: None })
    }

    pub fn from_parts(spec: ConvSpec, weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        if weight.dims() != spec.weight_dims() {
            return shape_err(format!("weight {:?} != {:?}", weight.dims(), spec.weight_dims()));
        }
        if bias.as_ref().map(|b| b.len()) != spec.has_bias.then_some(spec.out_channels) {
            return shape_err("bias presence or length disagrees with spec");
        }
        Ok(Self { spec, weight, bias, norm: None })
    }

    pub fn with_norm(mut self, norm: ChannelAffine<T>) -> Result<Self> {
        let c = self.spec.out_channels;
        if norm.scale.len() != c || norm.shift.len() != c {
            return shape_err(format!("norm expects {c} channels"));
        }
        self.norm = Some(norm);
        Ok(self)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = conv2d(x, &self.weight, self.bias.as_ref().map(|b| b.data()), &self.spec)?;
        if let Some(norm) = &self.norm {
            let [n, c, _, _] = y.dims();
            for b in 0..n {
                for ch in 0..c {
                    let (s, t) = (norm.scale[ch], norm.shift[ch]);
                    y.plane_mut(b, ch).iter_mut().for_each(|v| *v = *v * s + t);
                }
            }
        }
        Ok(y)
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}bias"), b));
        }
    }

    fn load(spec: ConvSpec, prefix: &str, get: &mut dyn FnMut(&str) -> Result<Tensor<T>>) -> Result<Self> {
        let weight = get(&format!("{prefix}weight"))?;
        let bias = if spec.has_bias {
            let b = get(&format!("{prefix}bias"))?;
            Some(b.reshape([spec.out_channels, 1, 1, 1])?)
        } else {
            None
        };
        Self::from_parts(spec, weight, bias)
    }
}

fn relu<T: Scalar>(mut t: Tensor<T>) -> Tensor<T> {
    t.relu_inplace();
    t
}

/// Two 3×3 conv + ReLU layers with an identity or 1×1 projection shortcut,
/// summed and passed through a final ReLU.
#[derive(Clone, Debug)]
pub struct ResidualBlock<T> {
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
    pub shortcut: Option<ConvLayer<T>>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn specs(k: usize, k_out: usize, stride: usize) -> (ConvSpec, ConvSpec, Option<ConvSpec>) {
        let conv1 = ConvSpec::new(k, k_out, 3).with_stride(stride);
        let conv2 = ConvSpec::new(k_out, k_out, 3);
        let proj = (k != k_out || stride != 1).then(|| ConvSpec::new(k, k_out, 1).with_stride(stride).with_pad(0));
        (conv1, conv2, proj)
    }

    pub fn new<R: Rng>(k: usize, k_out: usize, stride: usize, init: Init, rng: &mut R) -> Result<Self> {
        let (s1, s2, sp) = Self::specs(k, k_out, stride);
        Ok(Self {
            conv1: ConvLayer::new(s1, init, rng)?,
            conv2: ConvLayer::new(s2, init, rng)?,
            shortcut: sp.map(|s| ConvLayer::new(s, init, rng)).transpose()?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let main = relu(self.conv1.forward(x)?);
        let mut main = relu(self.conv2.forward(&main)?);
        match &self.shortcut {
            Some(p) => main.add_assign(&p.forward(x)?)?,
            None => main.add_assign(x)?,
        }
        Ok(relu(main))
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.conv1.collect("conv1.", &mut out);
        self.conv2.collect("conv2.", &mut out);
        if let Some(p) = &self.shortcut {
            p.collect("shortcut.", &mut out);
        }
        out
    }

    fn load(k: usize, k_out: usize, stride: usize, get: &mut dyn FnMut(&str) -> Result<Tensor<T>>) -> Result<Self> {
        let (s1, s2, sp) = Self::specs(k, k_out, stride);
        Ok(Self {
            conv1: ConvLayer::load(s1, "conv1.", get)?,
            conv2: ConvLayer::load(s2, "conv2.", get)?,
            shortcut: sp.map(|s| ConvLayer::load(s, "shortcut.", get)).transpose()?,
        })
    }
}

/// Squeeze 1×1 to `k′/2`, then parallel 1×1 and depthwise 3×3 expand branches of
/// `k′/2` each, concatenated and rectified. Stride is carried by the expand stage.
#[derive(Clone, Debug)]
pub struct FireModule<T> {
    pub squeeze: ConvLayer<T>,
    pub expand_1x1: ConvLayer<T>,
    pub expand_3x3: ConvLayer<T>,
}

impl<T: Scalar> FireModule<T> {
    pub fn specs(k: usize, k_out: usize, stride: usize) -> Result<[ConvSpec; 3]> {
        if !k_out.is_multiple_of(2) || k_out < 2 {
            return Err(Error::InvalidArgument(format!("fire module output width {k_out} must be even")));
        }
        let half = k_out / 2;
        Ok([
            ConvSpec::new(k, half, 1),
            ConvSpec::new(half, half, 1).with_stride(stride).with_pad(0),
            ConvSpec::depthwise(half, 3).with_stride(stride),
        ])
    }

    pub fn new<R: Rng>(k: usize, k_out: usize, stride: usize, init: Init, rng: &mut R) -> Result<Self> {
        let [sq, e1, e3] = Self::specs(k, k_out, stride)?;
        Ok(Self {
            squeeze: ConvLayer::new(sq, init, rng)?,
            expand_1x1: ConvLayer::new(e1, init, rng)?,
            expand_3x3: ConvLayer::new(e3, init, rng)?,
        })
    }

    pub fn squeeze_width(&self) -> usize {
        self.squeeze.spec.out_channels
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.squeeze.forward(x)?;
        let a = self.expand_1x1.forward(&s)?;
        let b = self.expand_3x3.forward(&s)?;
        Ok(relu(Tensor::concat_channels(&[&a, &b])?))
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.squeeze.collect("squeeze.", &mut out);
        self.expand_1x1.collect("expand1x1.", &mut out);
        self.expand_3x3.collect("expand3x3.", &mut out);
        out
    }

    fn load(k: usize, k_out: usize, stride: usize, get: &mut dyn FnMut(&str) -> Result<Tensor<T>>) -> Result<Self> {
        let [sq, e1, e3] = Self::specs(k, k_out, stride)?;
        Ok(Self {
            squeeze: ConvLayer::load(sq, "squeeze.", get)?,
            expand_1x1: ConvLayer::load(e1, "expand1x1.", get)?,
            expand_3x3: ConvLayer::load(e3, "expand3x3.", get)?,
        })
    }
}

/// `k×k` conv + ReLU to a hidden width, then a 1×1 conv with optional output
/// activation. With `kernel = 3` and a sigmoid this is the attention head.
#[derive(Clone, Debug)]
pub struct PredictionHead<T> {
    pub hidden: ConvLayer<T>,
    pub output: ConvLayer<T>,
    pub activation: Option<Activation>,
}

impl<T: Scalar> PredictionHead<T> {
    pub fn specs(in_ch: usize, hidden: usize, out: usize, kernel: usize) -> [ConvSpec; 2] {
        [ConvSpec::new(in_ch, hidden, kernel), ConvSpec::new(hidden, out, 1)]
    }

    pub fn new<R: Rng>(
        in_ch: usize,
        hidden: usize,
        out: usize,
        kernel: usize,
        activation: Option<Activation>,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let [h, o] = Self::specs(in_ch, hidden, out, kernel);
        Ok(Self { hidden: ConvLayer::new(h, init, rng)?, output: ConvLayer::new(o, init, rng)?, activation })
    }

    /// 3×3 Conv-ReLU then 1×1 Conv-Sigmoid to a single channel.
    pub fn attention<R: Rng>(in_ch: usize, hidden: usize, init: Init, rng: &mut R) -> Result<Self> {
        Self::new(in_ch, hidden, 1, 3, Some(Activation::Sigmoid), init, rng)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = relu(self.hidden.forward(x)?);
        let mut y = self.output.forward(&h)?;
        if let Some(act) = self.activation {
            y.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(y)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.hidden.collect("hidden.", &mut out);
        self.output.collect("output.", &mut out);
        out
    }

    fn load(
        in_ch: usize,
        hidden: usize,
        out: usize,
        kernel: usize,
        activation: Option<Activation>,
        get: &mut dyn FnMut(&str) -> Result<Tensor<T>>,
    ) -> Result<Self> {
        let [h, o] = Self::specs(in_ch, hidden, out, kernel);
        Ok(Self {
            hidden: ConvLayer::load(h, "hidden.", get)?,
            output: ConvLayer::load(o, "output.", get)?,
            activation,
        })
    }
}

/// Heatmap, embedding and offset branches for one corner kind.
#[derive(Clone, Debug)]
pub struct CornerHead<T> {
    pub heat: PredictionHead<T>,
    pub embed: PredictionHead<T>,
    pub offset: PredictionHead<T>,
}

/// Raw outputs of a [`CornerHead`].
#[derive(Clone, Debug, PartialEq)]
pub struct CornerMaps<T> {
    /// `C` channels in (0, 1).
    pub heat: Tensor<T>,
    /// One channel.
    pub embed: Tensor<T>,
    /// Two channels: x then y sub-pixel offsets.
    pub offset: Tensor<T>,
}

impl<T: Scalar> CornerHead<T> {
    pub fn new<R: Rng>(
        in_ch: usize,
        hidden: usize,
        num_classes: usize,
        kernel: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        Ok(Self {
            heat: PredictionHead::new(in_ch, hidden, num_classes, kernel, Some(Activation::Sigmoid), init, rng)?,
            embed: PredictionHead::new(in_ch, hidden, 1, kernel, None, init, rng)?,
            offset: PredictionHead::new(in_ch, hidden, 2, kernel, None, init, rng)?,
        })
    }

    pub fn forward(&self, feature: &Tensor<T>) -> Result<CornerMaps<T>> {
        Ok(CornerMaps {
            heat: self.heat.forward(feature)?,
            embed: self.embed.forward(feature)?,
            offset: self.offset.forward(feature)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TransposeConvLayer<T> {
    pub spec: TransposeSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> TransposeConvLayer<T> {
    pub fn new<R: Rng>(spec: TransposeSpec, init: Init, rng: &mut R) -> Self {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        Self {
            spec,
            weight: init_tensor(spec.weight_dims(), fan_in, init, rng),
            bias: Some(init_tensor([spec.out_channels, 1, 1, 1], fan_in, init, rng)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        transpose_conv2d(x, &self.weight, self.bias.as_ref().map(|b| b.data()), &self.spec)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("weight".to_string(), &self.weight)];
        if let Some(b) = &self.bias {
            out.push(("bias".to_string(), b));
        }
        out
    }

    fn load(spec: TransposeSpec, get: &mut dyn FnMut(&str) -> Result<Tensor<T>>) -> Result<Self> {
        let weight = get("weight")?;
        if weight.dims() != spec.weight_dims() {
            return shape_err(format!("weight {:?} != {:?}", weight.dims(), spec.weight_dims()));
        }
        let bias = get("bias")?.reshape([spec.out_channels, 1, 1, 1])?;
        Ok(Self { spec, weight, bias: Some(bias) })
    }
}

/// Parameters for one parameterized graph node.
#[derive(Clone, Debug)]
pub enum BlockParams<T> {
    Conv(ConvLayer<T>),
    Residual(ResidualBlock<T>),
    Fire(FireModule<T>),
    TransposeConv(TransposeConvLayer<T>),
    Head(PredictionHead<T>),
}

impl<T: Scalar> BlockParams<T> {
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        match self {
            BlockParams::Conv(c) => {
                let mut out = Vec::new();
                c.collect("", &mut out);
                out
            }
            BlockParams::Residual(r) => r.named_tensors(),
            BlockParams::Fire(f) => f.named_tensors(),
            BlockParams::TransposeConv(t) => t.named_tensors(),
            BlockParams::Head(h) => h.named_tensors(),
        }
    }

    /// Element count of every allocated weight and bias tensor: `(weights, biases)`.
    pub fn enumerate_counts(&self) -> (usize, usize) {
        self.named_tensors().iter().fold((0, 0), |(w, b), (name, t)| {
            if name.ends_with("bias") {
                (w, b + t.len())
            } else {
                (w + t.len(), b)
            }
        })
    }
}

pub(crate) mod loaders {
    use super::*;

    pub fn conv<T: Scalar>(spec: ConvSpec, get: &mut dyn FnMut(&str) -> Result<Tensor<T>>) -> Result<ConvLayer<T>> {
        ConvLayer::load(spec, "", get)
    }
    pub fn residual<T: Scalar>(
        k: usize,
        ko: usize,
        s: usize,
        get: &mut dyn FnMut(&str) -> Result<Tensor<T>>,
    ) -> Result<ResidualBlock<T>> {
        ResidualBlock::load(k, ko, s, get)
    }
    pub fn fire<T: Scalar>(
        k: usize,
        ko: usize,
        s: usize,
        get: &mut dyn FnMut(&str) -> Result<Tensor<T>>,
    ) -> Result<FireModule<T>> {
        FireModule::load(k, ko, s, get)
    }
    pub fn transpose<T: Scalar>(
        spec: TransposeSpec,
        get: &mut dyn FnMut(&str) -> Result<Tensor<T>>,
    ) -> Result<TransposeConvLayer<T>> {
        TransposeConvLayer::load(spec, get)
    }
    pub fn head<T: Scalar>(
        in_ch: usize,
        hidden: usize,
        out: usize,
        kernel: usize,
        act: Option<Activation>,
        get: &mut dyn FnMut(&str) -> Result<Tensor<T>>,
    ) -> Result<PredictionHead<T>> {
        PredictionHead::load(in_ch, hidden, out, kernel, act, get)
    }
}
