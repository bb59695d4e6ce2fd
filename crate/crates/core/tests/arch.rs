use std::collections::BTreeMap;

use hgdet::arch::{census, cost_report, depth_report, forward, taps, ArchGraph, HourglassConfig, LayerOp, Weights};
use hgdet::blocks::Init;
use hgdet::tensor::ConvSpec;
use hgdet::Tensor;
use proptest::prelude::*;

fn shapes(g: &ArchGraph) -> BTreeMap<String, [usize; 4]> {
    g.nodes.iter().map(|n| n.id.clone()).zip(g.infer_shapes().unwrap()).collect()
}

fn enumerated(g: &ArchGraph) -> (u64, u64) {
    let w = Weights::<f32>::init(g, Init::Zeros, 0).unwrap();
    w.params.values().fold((0, 0), |(a, b), p| {
        let (x, y) = p.enumerate_counts();
        (a + x as u64, b + y as u64)
    })
}

fn variants() -> Vec<HourglassConfig> {
    ["hourglass54", "squeeze", "hg104-ref"].iter().map(|v| HourglassConfig::variant(v, 80).unwrap()).collect()
}

#[test]
fn closed_form_matches_enumeration() {
    for cfg in variants() {
        let g = cfg.build();
        let r = cost_report(&g, g.input_dims, 4).unwrap();
        assert_eq!((r.total_weights, r.total_biases), enumerated(&g), "{}", g.name);
    }
}

#[test]
fn single_conv_cost() {
    let mut g = ArchGraph::identity([1, 4, 5, 5]);
    g.nodes[1].op = LayerOp::Conv {
        in_channels: 4,
        out_channels: 8,
        kernel: 1,
        stride: 1,
        pad: 0,
        groups: 1,
        bias: true,
        relu: false,
    };
    let r = cost_report(&g, g.input_dims, 4).unwrap();
    assert_eq!((r.total_weights, r.total_biases), (32, 8));
    assert_eq!(r.macs, 32 * 25);
}

#[test]
fn hourglass104_reference_census() {
    let c = census(&HourglassConfig::hourglass104_reference(80).build());
    assert_eq!(c.modules.len(), 2);
    for m in &c.modules {
        assert_eq!(m.downsamplings, 5);
        assert_eq!(m.down_channels, [256, 384, 384, 384, 512]);
    }
}

#[test]
fn squeeze_modules_are_all_fire() {
    let c = census(&HourglassConfig::squeeze(80).build());
    assert_eq!(c.stem_kinds.len(), 3);
    for m in &c.modules {
        assert_eq!(m.residual_blocks, 0);
        assert!(m.fire_blocks > 0);
    }
}

#[test]
fn up_and_down_counts_agree() {
    for cfg in variants() {
        for m in census(&cfg.build()).modules {
            assert_eq!(m.upsamplers.len(), m.downsamplings);
        }
    }
}

#[test]
fn hourglass54_resolutions() {
    let g = HourglassConfig::hourglass54(80).build();
    let s = shapes(&g);
    assert_eq!(s["stem.down0"], [1, 256, 64, 64]);
    for m in 0..3 {
        assert_eq!(s[&format!("hg{m}.middle0")], [1, 512, 8, 8]);
    }
    let att: Vec<usize> = taps::ATTENTION.iter().map(|t| s[g.tap_node(t).unwrap()][2]).collect();
    assert_eq!(att, [64, 32, 16]);
}

#[test]
fn down_and_up_paths_mirror() {
    for cfg in variants() {
        let g = cfg.build();
        let s = shapes(&g);
        let ids: BTreeMap<&str, &hgdet::arch::LayerSpec> = g.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        for n in g.nodes.iter().filter(|n| n.id.ends_with(".merge")) {
            let dims: Vec<[usize; 4]> = n.inputs.iter().map(|i| s[i]).collect();
            assert!(dims.windows(2).all(|p| p[0] == p[1]), "{} joins {dims:?}", n.id);
            let level_in = ids[n.inputs[0].as_str()];
            assert!(level_in.id.contains(".skip"), "{}", level_in.id);
        }
        for n in g.nodes.iter().filter(|n| n.id.contains(".down0")) {
            let level = n.id.replace(".down0", ".merge");
            if let Some(merge) = s.get(&level) {
                let input_dims = s[&n.inputs[0]];
                assert_eq!(merge[2..], input_dims[2..], "{level}");
            }
        }
    }
}

#[test]
fn module_and_depth_comparisons() {
    let dims = [1, 3, 255, 255];
    let hg54 = HourglassConfig::hourglass54(80).with_input(dims).build();
    let hg104 = HourglassConfig::hourglass104_reference(80).with_input(dims).build();
    let (a, b) = (cost_report(&hg54, dims, 4).unwrap(), cost_report(&hg104, dims, 4).unwrap());
    assert!(a.module_params() / 3 < b.module_params() / 2);
    assert!(depth_report(&hg54).longest_path < depth_report(&hg104).longest_path);
    assert_eq!(depth_report(&hg54), depth_report(&HourglassConfig::hourglass54(80).build()));
}

#[test]
fn fire_modules_cost_less_than_residual_modules() {
    let dims = [1, 3, 255, 255];
    let fire = HourglassConfig::squeeze(80).with_input(dims);
    let mut res = fire.clone();
    res.block = hgdet::arch::BlockKind::Residual;
    let a = cost_report(&fire.build(), dims, 4).unwrap();
    let b = cost_report(&res.build(), dims, 4).unwrap();
    assert!(a.module_macs() < b.module_macs());
}

#[test]
fn depth_of_single_residual() {
    let mut g = ArchGraph::identity([1, 4, 5, 5]);
    g.nodes[1].op = LayerOp::Residual { in_channels: 4, out_channels: 4, stride: 1 };
    assert_eq!(depth_report(&g).longest_path, 2);
}

#[test]
fn identity_forward() {
    let g = ArchGraph::identity([1, 2, 3, 3]);
    let x = Tensor::<f32>::random([1, 2, 3, 3], 1.0, 1);
    let out = forward(&g, &Weights::zeros(&g).unwrap(), &x).unwrap();
    assert_eq!(out.values().next().unwrap(), &x);
}

#[test]
fn forward_is_deterministic_and_seeded() {
    let g = HourglassConfig::hourglass54(3).narrowed(16).with_input([1, 3, 127, 127]).build();
    let x = Tensor::<f32>::random([1, 3, 127, 127], 1.0, 5);
    let w = Weights::<f32>::init(&g, Init::Uniform, 7).unwrap();
    let a = forward(&g, &w, &x).unwrap();
    let b = forward(&g, &w, &x).unwrap();
    assert_eq!(a, b);
    let w2 = Weights::<f32>::init(&g, Init::Uniform, 8).unwrap();
    assert_ne!(forward(&g, &w2, &x).unwrap()[taps::TL_HEAT], a[taps::TL_HEAT]);
    for t in taps::ATTENTION {
        assert!(a[t].data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn graph_json_round_trip() {
    for cfg in variants() {
        let g = cfg.build();
        assert_eq!(ArchGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
    }
}

#[test]
fn hourglass54_full_forward() {
    let g = HourglassConfig::hourglass54(2).build();
    let w = Weights::<f32>::init(&g, Init::Uniform, 1).unwrap();
    let out = forward(&g, &w, &Tensor::random([1, 3, 255, 255], 1.0, 2)).unwrap();
    let res: Vec<usize> = taps::ATTENTION.iter().map(|t| out[*t].height()).collect();
    assert_eq!(res, [64, 32, 16]);
    assert_eq!(out[taps::TL_HEAT].dims(), [1, 2, 64, 64]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn narrowed_graphs_agree_with_enumeration(variant in prop::sample::select(vec!["hourglass54", "squeeze", "hg104-ref"]),
                                               factor in prop::sample::select(vec![4usize, 8, 16]),
                                               classes in 1usize..5) {
        let g = HourglassConfig::variant(variant, classes).unwrap().narrowed(factor).build();
        let r = cost_report(&g, g.input_dims, 4).unwrap();
        prop_assert_eq!((r.total_weights, r.total_biases), enumerated(&g));
        let stages: u64 = r.stages.iter().map(|s| s.weights + s.biases).sum();
        prop_assert_eq!(stages, r.total_params());
    }

    #[test]
    fn conv_layer_cost_is_closed_form(ci in 1usize..16, co in 1usize..16, k in prop::sample::select(vec![1usize, 3, 5]), h in 4usize..20) {
        let mut g = ArchGraph::identity([1, ci, h, h]);
        g.nodes[1].op = LayerOp::Conv { in_channels: ci, out_channels: co, kernel: k, stride: 1, pad: k / 2, groups: 1, bias: true, relu: true };
        let r = cost_report(&g, g.input_dims, 4).unwrap();
        let spec = ConvSpec::new(ci, co, k);
        prop_assert_eq!(r.total_weights as usize, spec.weight_count());
        prop_assert_eq!(r.macs as usize, spec.weight_count() * h * h);
    }
}
