use serde::{Deserialize, Serialize};

use super::{taps, ArchGraph, LayerOp, LayerSpec, Role, Stage, Tap};
use crate::tensor::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Residual,
    Fire,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleKind {
    Nearest,
    /// 4×4, stride 2, pad 1 transposed convolution.
    Transpose,
}

/// Parameters of a stacked hourglass backbone plus its prediction heads.
///
/// `dims[0]` is the module width at full module resolution; each later entry is
/// the width after one more stride-2 downsampling, so a module downsamples
/// `dims.len() - 1` times. Up paths mirror down paths: `per_stage - 1` blocks at
/// the lower width, then one block back to the higher width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourglassConfig {
    pub name: String,
    pub input_dims: [usize; 4],
    pub block: BlockKind,
    /// Output widths of the stem conv and of the stem's stride-2 block(s).
    pub stem_channels: (usize, usize),
    /// Adds a third stride-2 stem stage ahead of the modules.
    pub extra_stem_stage: bool,
    pub modules: usize,
    pub dims: Vec<usize>,
    pub per_stage: usize,
    pub middle_blocks: usize,
    pub upsample: UpsampleKind,
    pub head_kernel: usize,
    pub head_width: usize,
    /// Width of the attention heads' hidden layer; `None` builds no attention heads.
    pub attention_width: Option<usize>,
    pub num_classes: usize,
}

impl HourglassConfig {
    /// Three modules, each downsampling three times with widths 384, 384, 512.
    pub fn hourglass54(num_classes: usize) -> Self {
        Self {
            name: "hourglass54".into(),
            input_dims: [1, 3, 255, 255],
            block: BlockKind::Residual,
            stem_channels: (128, 256),
            extra_stem_stage: false,
            modules: 3,
            dims: vec![256, 384, 384, 512],
            per_stage: 1,
            middle_blocks: 1,
            upsample: UpsampleKind::Nearest,
            head_kernel: 3,
            head_width: 256,
            attention_width: Some(256),
            num_classes,
        }
    }

    /// Two modules, five downsamplings each, two blocks per stage.
    pub fn hourglass104_reference(num_classes: usize) -> Self {
        Self {
            name: "hg104-ref".into(),
            modules: 2,
            dims: vec![256, 256, 384, 384, 384, 512],
            per_stage: 2,
            middle_blocks: 4,
            ..Self::hourglass54(num_classes)
        }
    }

    /// The reference layout with fire blocks, an extra stem downsampling, one
    /// fewer downsampling per module, 1×1 prediction filters and transposed-conv
    /// upsampling.
    pub fn squeeze(num_classes: usize) -> Self {
        Self {
            name: "squeeze".into(),
            block: BlockKind::Fire,
            extra_stem_stage: true,
            dims: vec![256, 256, 384, 384, 512],
            upsample: UpsampleKind::Transpose,
            head_kernel: 1,
            attention_width: None,
            ..Self::hourglass104_reference(num_classes)
        }
    }

    /// Looks a variant up by its CLI name.
    pub fn variant(name: &str, num_classes: usize) -> Option<Self> {
        match name {
            "hourglass54" => Some(Self::hourglass54(num_classes)),
            "squeeze" => Some(Self::squeeze(num_classes)),
            "hg104-ref" => Some(Self::hourglass104_reference(num_classes)),
            _ => None,
        }
    }

    pub fn with_input(mut self, dims: [usize; 4]) -> Self {
        self.input_dims = dims;
        self
    }

    /// Divides every width by `factor` (rounded to an even number, at least 2).
    pub fn narrowed(mut self, factor: usize) -> Self {
        let f = |c: usize| ((c / factor) & !1).max(2);
        self.stem_channels = (f(self.stem_channels.0), f(self.stem_channels.1));
        self.dims = self.dims.iter().map(|&c| f(c)).collect();
        self.head_width = f(self.head_width);
        self.attention_width = self.attention_width.map(f);
        self.name = format!("{}/{}", self.name, factor);
        self
    }

    pub fn build(&self) -> ArchGraph {
        let mut b = Builder { nodes: Vec::new(), cfg: self };
        b.push("input", LayerOp::Input, vec![], Role::new(Stage::Input));
        let stem_role = Role::new(Stage::Stem);
        let (c0, c1) = self.stem_channels;
        let mut x = b.push(
            "stem.conv",
            LayerOp::Conv {
                in_channels: self.input_dims[1],
                out_channels: c0,
                kernel: 7,
                stride: 2,
                pad: 3,
                groups: 1,
                bias: true,
                relu: true,
            },
            vec!["input".into()],
            stem_role,
        );
        x = b.block("stem.down0", c0, c1, 2, &x, stem_role);
        if self.extra_stem_stage {
            x = b.block("stem.down1", c1, c1, 2, &x, stem_role);
        }
        if c1 != self.dims[0] {
            x = b.push(
                "stem.proj",
                LayerOp::Conv {
                    in_channels: c1,
                    out_channels: self.dims[0],
                    kernel: 1,
                    stride: 1,
                    pad: 0,
                    groups: 1,
                    bias: true,
                    relu: true,
                },
                vec![x],
                stem_role,
            );
        }

        let mut merges = Vec::new();
        let mut out = x.clone();
        for m in 0..self.modules {
            merges.clear();
            out = b.level(m, 0, &x, &mut merges);
            if m + 1 < self.modules {
                let remap_role = Role::in_module(Stage::Remap, m, None);
                let remap = b.push(
                    &format!("inter{m}.remap"),
                    LayerOp::Conv {
                        in_channels: self.dims[0],
                        out_channels: self.dims[0],
                        kernel: 1,
                        stride: 1,
                        pad: 0,
                        groups: 1,
                        bias: true,
                        relu: false,
                    },
                    vec![out.clone()],
                    remap_role,
                );
                x = b.push(&format!("inter{m}.sum"), LayerOp::Add { relu: true }, vec![x, remap], remap_role);
            }
        }

        let mut tap_list = vec![Tap { name: taps::FEATURE.into(), node: out.clone() }];
        let head_role = Role::new(Stage::Head);
        if let Some(width) = self.attention_width {
            // merges are recorded innermost first; level 0 is the finest.
            for (level, name) in taps::ATTENTION.iter().enumerate() {
                let (feat, ch) = merges
                    .iter()
                    .find(|(l, _, _)| *l == level)
                    .map(|(_, id, c)| (id.clone(), *c))
                    .expect("attention levels");
                let id = b.push(
                    name,
                    LayerOp::Head {
                        in_channels: ch,
                        hidden: width,
                        out_channels: 1,
                        kernel: 3,
                        activation: Some(Activation::Sigmoid),
                    },
                    vec![feat],
                    head_role,
                );
                tap_list.push(Tap { name: name.to_string(), node: id });
            }
        }
        for corner in ["tl", "br"] {
            for (suffix, outc, act) in
                [("heat", self.num_classes, Some(Activation::Sigmoid)), ("embed", 1, None), ("offset", 2, None)]
            {
                let name = format!("{corner}_{suffix}");
                let id = b.push(
                    &name,
                    LayerOp::Head {
                        in_channels: self.dims[0],
                        hidden: self.head_width,
                        out_channels: outc,
                        kernel: self.head_kernel,
                        activation: act,
                    },
                    vec![out.clone()],
                    head_role,
                );
                tap_list.push(Tap { name, node: id });
            }
        }
        ArchGraph { name: self.name.clone(), input_dims: self.input_dims, nodes: b.nodes, taps: tap_list }
    }
}

struct Builder<'a> {
    nodes: Vec<LayerSpec>,
    cfg: &'a HourglassConfig,
}

impl Builder<'_> {
    fn push(&mut self, id: &str, op: LayerOp, inputs: Vec<String>, role: Role) -> String {
        self.nodes.push(LayerSpec { id: id.to_string(), op, inputs, role });
        id.to_string()
    }

    fn block(&mut self, id: &str, cin: usize, cout: usize, stride: usize, x: &str, role: Role) -> String {
        let op = match self.cfg.block {
            BlockKind::Residual => LayerOp::Residual { in_channels: cin, out_channels: cout, stride },
            BlockKind::Fire => LayerOp::Fire { in_channels: cin, out_channels: cout, stride },
        };
        self.push(id, op, vec![x.to_string()], role)
    }

    /// Emits one hourglass level and returns the id of its merged output.
    /// `merges` collects `(level, node id, channels)` of every merge in this module.
    fn level(&mut self, m: usize, lvl: usize, x: &str, merges: &mut Vec<(usize, String, usize)>) -> String {
        let cfg = self.cfg;
        let (cur, next) = (cfg.dims[lvl], cfg.dims[lvl + 1]);
        let p = format!("hg{m}.l{lvl}");
        let role = |stage| Role::in_module(stage, m, Some(lvl));

        let mut skip = x.to_string();
        for i in 0..cfg.per_stage {
            skip = self.block(&format!("{p}.skip{i}"), cur, cur, 1, &skip, role(Stage::Skip));
        }

        let mut low = self.block(&format!("{p}.down0"), cur, next, 2, x, role(Stage::Down));
        for i in 1..cfg.per_stage {
            low = self.block(&format!("{p}.down{i}"), next, next, 1, &low, role(Stage::Down));
        }

        if lvl + 2 < cfg.dims.len() {
            low = self.level(m, lvl + 1, &low, merges);
        } else {
            for i in 0..cfg.middle_blocks {
                low = self.block(
                    &format!("hg{m}.middle{i}"),
                    next,
                    next,
                    1,
                    &low,
                    Role::in_module(Stage::Middle, m, None),
                );
            }
        }

        let up_op = match cfg.upsample {
            UpsampleKind::Nearest => LayerOp::Upsample,
            UpsampleKind::Transpose => {
                LayerOp::TransposeConv { in_channels: next, out_channels: next, kernel: 4, stride: 2, pad: 1 }
            }
        };
        let mut up = self.push(&format!("{p}.upsample"), up_op, vec![low], role(Stage::Upsample));
        for i in 0..cfg.per_stage {
            let cout = if i + 1 == cfg.per_stage { cur } else { next };
            up = self.block(&format!("{p}.up{i}"), next, cout, 1, &up, role(Stage::Up));
        }
        let merged = self.push(&format!("{p}.merge"), LayerOp::Add { relu: false }, vec![skip, up], role(Stage::Merge));
        merges.push((lvl, merged.clone(), cur));
        merged
    }
}
