use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arch::{cost_report, forward, HourglassConfig, Weights};
use crate::blocks::Init;
use crate::error::{Error, Result};
use crate::tensor::{conv2d, depthwise_conv2d, max_pool2d, transpose_conv2d_up2, ConvSpec, Tensor, TransposeSpec};

/// What to time. Kernel ops run on `channels`-wide square inputs; `forward:<variant>`
/// runs a whole backbone on a `1×3×size×size` image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BenchOp {
    Conv3x3,
    Depthwise3x3,
    TransposeConv,
    MaxPool,
    Forward(String),
}

impl BenchOp {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "conv3x3" => BenchOp::Conv3x3,
            "depthwise3x3" => BenchOp::Depthwise3x3,
            "transpose_conv" => BenchOp::TransposeConv,
            "max_pool" => BenchOp::MaxPool,
            _ => match s.strip_prefix("forward:") {
                Some(v) if HourglassConfig::variant(v, 1).is_some() => BenchOp::Forward(v.to_string()),
                _ => return Err(Error::InvalidArgument(format!("unknown bench op `{s}`"))),
            },
        })
    }

    pub fn name(&self) -> String {
        match self {
            BenchOp::Conv3x3 => "conv3x3".into(),
            BenchOp::Depthwise3x3 => "depthwise3x3".into(),
            BenchOp::TransposeConv => "transpose_conv".into(),
            BenchOp::MaxPool => "max_pool".into(),
            BenchOp::Forward(v) => format!("forward:{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSuite {
    pub ops: Vec<String>,
    pub sizes: Vec<usize>,
    /// Timed runs per entry; 0 reports MAC counts only.
    pub repetitions: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for BenchSuite {
    fn default() -> Self {
        Self {
            ops: vec!["conv3x3".into(), "depthwise3x3".into(), "transpose_conv".into(), "max_pool".into()],
            sizes: vec![32, 64],
            repetitions: 5,
            channels: 32,
            num_classes: 80,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub op: String,
    pub size: usize,
    pub macs: u64,
    pub samples_ns: Vec<u64>,
    pub median_ns: Option<f64>,
    pub p10_ns: Option<u64>,
    pub p90_ns: Option<u64>,
    pub ns_per_mac: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub channels: usize,
    pub entries: Vec<BenchEntry>,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn median(sorted: &[u64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0),
    }
}

fn time_runs(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<u64>> {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f()?;
            Ok(t.elapsed().as_nanos() as u64)
        })
        .collect()
}

fn bench_one(op: &BenchOp, size: usize, suite: &BenchSuite) -> Result<(u64, Vec<u64>)> {
    let c = suite.channels;
    let x = || Tensor::<f32>::random([1, c, size, size], 1.0, suite.seed);
    let area = (size * size) as u64;
    let reps = suite.repetitions;
    Ok(match op {
        BenchOp::Conv3x3 => {
            let spec = ConvSpec::new(c, c, 3).with_bias(false);
            let (x, w) = (x(), Tensor::random(spec.weight_dims(), 0.1, suite.seed + 1));
            let macs = area * (c * c * 9) as u64;
            (macs, time_runs(reps, || conv2d(&x, &w, None, &spec).map(drop))?)
        }
        BenchOp::Depthwise3x3 => {
            let spec = ConvSpec::depthwise(c, 3);
            let (x, w) = (x(), Tensor::random(spec.weight_dims(), 0.1, suite.seed + 1));
            (area * (c * 9) as u64, time_runs(reps, || depthwise_conv2d(&x, &w, None, &spec).map(drop))?)
        }
        BenchOp::TransposeConv => {
            let spec = TransposeSpec::up2(c, c);
            let (x, w) = (x(), Tensor::random(spec.weight_dims(), 0.1, suite.seed + 1));
            (area * (c * c * 16) as u64, time_runs(reps, || transpose_conv2d_up2(&x, &w, None).map(drop))?)
        }
        BenchOp::MaxPool => {
            let x = x();
            (0, time_runs(reps, || max_pool2d(&x, 3, 1, 1).map(drop))?)
        }
        BenchOp::Forward(v) => {
            let cfg =
                HourglassConfig::variant(v, suite.num_classes).expect("parsed variant").with_input([1, 3, size, size]);
            let g = cfg.build();
            let macs = cost_report(&g, g.input_dims, 4)?.macs;
            let samples = if reps == 0 {
                Vec::new()
            } else {
                let w = Weights::<f32>::init(&g, Init::Uniform, suite.seed)?;
                let img = Tensor::random(g.input_dims, 1.0, suite.seed);
                time_runs(reps, || forward(&g, &w, &img).map(drop))?
            };
            (macs, samples)
        }
    })
}

pub fn bench(suite: &BenchSuite) -> Result<BenchReport> {
    let ops: Vec<BenchOp> = suite.ops.iter().map(|s| BenchOp::parse(s)).collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for op in &ops {
        for &size in &suite.sizes {
            let (macs, samples) = bench_one(op, size, suite)?;
            let mut sorted = samples.clone();
            sorted.sort_unstable();
            let med = median(&sorted);
            entries.push(BenchEntry {
                op: op.name(),
                size,
                macs,
                samples_ns: samples,
                median_ns: med,
                p10_ns: percentile(&sorted, 0.1),
                p90_ns: percentile(&sorted, 0.9),
                ns_per_mac: med.filter(|_| macs > 0).map(|m| m / macs as f64),
            });
        }
    }
    Ok(BenchReport { repetitions: suite.repetitions, channels: suite.channels, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let s = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&s, 0.1), Some(1));
        assert_eq!(percentile(&s, 0.9), Some(9));
        assert_eq!(median(&s), Some(5.5));
        assert_eq!(median(&[4]), Some(4.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn parse_ops() {
        assert_eq!(BenchOp::parse("forward:squeeze").unwrap(), BenchOp::Forward("squeeze".into()));
        assert!(BenchOp::parse("forward:vgg").is_err());
        assert!(BenchOp::parse("fft").is_err());
    }
}
