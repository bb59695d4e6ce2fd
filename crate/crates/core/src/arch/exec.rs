use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ArchGraph, LayerOp};
use crate::blocks::{
    loaders, BlockParams, ConvLayer, FireModule, Init, PredictionHead, ResidualBlock, TransposeConvLayer,
};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{nearest_upsample2x, skt, ConvSpec, Tensor, TransposeSpec};
use crate::Scalar;

/// Parameters for every parameterized node of a graph, keyed by node id.
#[derive(Clone, Debug, Default)]
pub struct Weights<T> {
    pub params: BTreeMap<String, BlockParams<T>>,
}

fn conv_spec(op: &LayerOp) -> Option<ConvSpec> {
    match *op {
        LayerOp::Conv { in_channels, out_channels, kernel, stride, pad, groups, bias, .. } => {
            Some(ConvSpec { in_channels, out_channels, kernel: (kernel, kernel), stride, pad, groups, has_bias: bias })
        }
        _ => None,
    }
}

/// Freshly allocated parameters for one node, or `None` if the op has none.
pub(crate) fn allocate<T: Scalar>(op: &LayerOp, init: Init, rng: &mut ChaCha8Rng) -> Result<Option<BlockParams<T>>> {
    Ok(Some(match *op {
        LayerOp::Conv { .. } => BlockParams::Conv(ConvLayer::new(conv_spec(op).unwrap(), init, rng)?),
        LayerOp::Residual { in_channels, out_channels, stride } => {
            BlockParams::Residual(ResidualBlock::new(in_channels, out_channels, stride, init, rng)?)
        }
        LayerOp::Fire { in_channels, out_channels, stride } => {
            BlockParams::Fire(FireModule::new(in_channels, out_channels, stride, init, rng)?)
        }
        LayerOp::TransposeConv { in_channels, out_channels, kernel, stride, pad } => BlockParams::TransposeConv(
            TransposeConvLayer::new(TransposeSpec { in_channels, out_channels, kernel, stride, pad }, init, rng),
        ),
        LayerOp::Head { in_channels, hidden, out_channels, kernel, activation } => {
            BlockParams::Head(PredictionHead::new(in_channels, hidden, out_channels, kernel, activation, init, rng)?)
        }
        LayerOp::Input | LayerOp::Identity | LayerOp::Upsample | LayerOp::Add { .. } => return Ok(None),
    }))
}

impl<T: Scalar> Weights<T> {
    /// Allocates every node's parameters from one seeded stream, in node order.
    pub fn init(graph: &ArchGraph, init: Init, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for node in &graph.nodes {
            if let Some(p) = allocate(&node.op, init, &mut rng).map_err(|e| e.at_node(&node.id))? {
                params.insert(node.id.clone(), p);
            }
        }
        Ok(Self { params })
    }

    pub fn zeros(graph: &ArchGraph) -> Result<Self> {
        Self::init(graph, Init::Zeros, 0)
    }

    pub fn get(&self, node: &str) -> Option<&BlockParams<T>> {
        self.params.get(node)
    }

    /// Writes one `<node>.<param>.skt` file per tensor into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (node, p) in &self.params {
            for (name, t) in p.named_tensors() {
                skt::write(dir.join(format!("{node}.{name}.skt")), &t.cast())?;
            }
        }
        Ok(())
    }

    /// Loads the parameters `graph` needs from a directory written by [`Weights::save_dir`].
    pub fn load_dir(graph: &ArchGraph, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut params = BTreeMap::new();
        for node in &graph.nodes {
            let mut get = |name: &str| -> Result<Tensor<T>> {
                let path = dir.join(format!("{}.{name}.skt", node.id));
                if !path.exists() {
                    return Err(Error::MissingParam(format!("{}.{name}", node.id)));
                }
                Ok(skt::read(path)?.cast())
            };
            let loaded = match node.op {
                LayerOp::Conv { .. } => {
                    Some(loaders::conv(conv_spec(&node.op).unwrap(), &mut get).map(BlockParams::Conv))
                }
                LayerOp::Residual { in_channels, out_channels, stride } => {
                    Some(loaders::residual(in_channels, out_channels, stride, &mut get).map(BlockParams::Residual))
                }
                LayerOp::Fire { in_channels, out_channels, stride } => {
                    Some(loaders::fire(in_channels, out_channels, stride, &mut get).map(BlockParams::Fire))
                }
                LayerOp::TransposeConv { in_channels, out_channels, kernel, stride, pad } => Some(
                    loaders::transpose(TransposeSpec { in_channels, out_channels, kernel, stride, pad }, &mut get)
                        .map(BlockParams::TransposeConv),
                ),
                LayerOp::Head { in_channels, hidden, out_channels, kernel, activation } => Some(
                    loaders::head(in_channels, hidden, out_channels, kernel, activation, &mut get)
                        .map(BlockParams::Head),
                ),
                _ => None,
            };
            if let Some(p) = loaded {
                params.insert(node.id.clone(), p.map_err(|e| e.at_node(&node.id))?);
            }
        }
        Ok(Self { params })
    }
}

fn missing(node: &str) -> Error {
    Error::MissingParam(node.to_string())
}

fn eval_node<T: Scalar>(op: &LayerOp, id: &str, inputs: &[&Tensor<T>], weights: &Weights<T>) -> Result<Tensor<T>> {
    let x = inputs.first().copied();
    let params = weights.get(id);
    match (op, params) {
        (LayerOp::Input, _) => Err(Error::Graph("input node cannot be evaluated".into())),
        (LayerOp::Identity, _) => Ok(x.unwrap().clone()),
        (LayerOp::Conv { relu, .. }, Some(BlockParams::Conv(c))) => {
            let mut y = c.forward(x.unwrap())?;
            if *relu {
                y.relu_inplace();
            }
            Ok(y)
        }
        (LayerOp::Residual { .. }, Some(BlockParams::Residual(r))) => r.forward(x.unwrap()),
        (LayerOp::Fire { .. }, Some(BlockParams::Fire(f))) => f.forward(x.unwrap()),
        (LayerOp::TransposeConv { .. }, Some(BlockParams::TransposeConv(t))) => t.forward(x.unwrap()),
        (LayerOp::Head { .. }, Some(BlockParams::Head(h))) => h.forward(x.unwrap()),
        (LayerOp::Upsample, _) => Ok(nearest_upsample2x(x.unwrap())),
        (LayerOp::Add { relu }, _) => {
            let mut acc = inputs[0].clone();
            for other in &inputs[1..] {
                acc.add_assign(other)?;
            }
            if *relu {
                acc.relu_inplace();
            }
            Ok(acc)
        }
        (_, None) => Err(missing(id)),
        (op, Some(_)) => Err(Error::Graph(format!("parameters do not match a {} node", op.kind_name()))),
    }
}

/// Evaluates `graph` on `input` in node order and returns every tap.
///
/// Intermediate tensors are dropped as soon as their last consumer has run.
pub fn forward<T: Scalar>(
    graph: &ArchGraph,
    weights: &Weights<T>,
    input: &Tensor<T>,
) -> Result<BTreeMap<String, Tensor<T>>> {
    if input.dims() != graph.input_dims {
        return shape_err(format!("input dims {:?} do not match declared {:?}", input.dims(), graph.input_dims));
    }
    let index: HashMap<&str, usize> = graph.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut remaining = vec![0usize; graph.nodes.len()];
    let mut input_idx = Vec::with_capacity(graph.nodes.len());
    for (i, node) in graph.nodes.iter().enumerate() {
        let mut ids = Vec::with_capacity(node.inputs.len());
        for inp in &node.inputs {
            match index.get(inp.as_str()) {
                Some(&j) if j < i => {
                    remaining[j] += 1;
                    ids.push(j);
                }
                _ => {
                    return Err(Error::Graph(format!("input `{inp}` is not defined before this node")).at_node(&node.id))
                }
            }
        }
        input_idx.push(ids);
    }
    let mut tap_nodes: Vec<(String, usize)> = Vec::new();
    for tap in &graph.taps {
        let &j = index
            .get(tap.node.as_str())
            .ok_or_else(|| Error::Graph(format!("tap `{}` refers to unknown node `{}`", tap.name, tap.node)))?;
        remaining[j] += 1;
        tap_nodes.push((tap.name.clone(), j));
    }

    let mut values: Vec<Option<Tensor<T>>> = vec![None; graph.nodes.len()];
    for (i, node) in graph.nodes.iter().enumerate() {
        let out = if node.op == LayerOp::Input {
            input.clone()
        } else {
            let ins: Vec<&Tensor<T>> = input_idx[i].iter().map(|&j| values[j].as_ref().expect("live input")).collect();
            let dims: Vec<[usize; 4]> = ins.iter().map(|t| t.dims()).collect();
            node.op.output_dims(&dims).map_err(|e| e.at_node(&node.id))?;
            eval_node(&node.op, &node.id, &ins, weights).map_err(|e| e.at_node(&node.id))?
        };
        for &j in &input_idx[i] {
            remaining[j] -= 1;
            if remaining[j] == 0 {
                values[j] = None;
            }
        }
        if remaining[i] > 0 {
            values[i] = Some(out);
        }
    }

    let mut taps = BTreeMap::new();
    for (name, j) in tap_nodes {
        remaining[j] -= 1;
        let t = if remaining[j] == 0 { values[j].take() } else { values[j].clone() };
        taps.insert(name, t.expect("tap value"));
    }
    Ok(taps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{HourglassConfig, LayerSpec, Role, Stage};

    #[test]
    fn identity_forward() {
        let g = ArchGraph::identity([1, 2, 3, 3]);
        let x = Tensor::<f32>::random([1, 2, 3, 3], 1.0, 1);
        let out = forward(&g, &Weights::default(), &x).unwrap();
        assert_eq!(out["out"], x);
    }

    #[test]
    fn wrong_input_dims_rejected() {
        let g = ArchGraph::identity([1, 2, 3, 3]);
        let x = Tensor::<f32>::zeros([1, 2, 4, 3]);
        assert!(forward(&g, &Weights::default(), &x).is_err());
    }

    #[test]
    fn missing_params_name_node() {
        let mut g = ArchGraph::identity([1, 2, 3, 3]);
        g.nodes.push(LayerSpec {
            id: "c".into(),
            op: LayerOp::Conv {
                in_channels: 2,
                out_channels: 2,
                kernel: 1,
                stride: 1,
                pad: 0,
                groups: 1,
                bias: false,
                relu: false,
            },
            inputs: vec!["out".into()],
            role: Role::new(Stage::Other),
        });
        g.taps[0].node = "c".into();
        let err = forward(&g, &Weights::<f32>::default(), &Tensor::zeros([1, 2, 3, 3])).unwrap_err();
        assert!(err.to_string().contains("`c`"), "{err}");
    }

    #[test]
    fn narrow_graphs_run_and_save() {
        let cfg = HourglassConfig::squeeze(2).narrowed(32).with_input([1, 3, 127, 127]);
        let g = cfg.build();
        let w = Weights::<f32>::init(&g, Init::Uniform, 3).unwrap();
        let x = Tensor::random(g.input_dims, 1.0, 4);
        let a = forward(&g, &w, &x).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.save_dir(dir.path()).unwrap();
        let w2 = Weights::<f32>::load_dir(&g, dir.path()).unwrap();
        let b = forward(&g, &w2, &x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a["tl_heat"].dims(), [1, 2, 16, 16]);
    }
}
