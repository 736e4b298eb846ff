use igc_core::gradcheck::{network_gradient_error, op_gradient_errors};
use igc_core::net::{build_network, ArchSpec, BlockType, StageSpec, WidenRule};
use igc_core::rng::CounterRng;
use igc_core::Tensor;

fn tiny(block_type: BlockType, l: usize, m: usize, blocks: &[usize]) -> ArchSpec {
    ArchSpec {
        name: format!("tiny-{block_type:?}"),
        block_type,
        in_channels: 3,
        kernel: 3,
        stages: blocks
            .iter()
            .enumerate()
            .map(|(s, &b)| StageSpec {
                blocks: b,
                l,
                m: m << s,
            })
            .collect(),
        widen_rule: WidenRule::DoubleM,
        identity_mappings: false,
        n_classes: 3,
    }
}

fn net_error(arch: &ArchSpec, seed: u64) -> f64 {
    let net = build_network::<f64>(arch, seed).unwrap();
    let mut rng = CounterRng::new(seed ^ 0xabc);
    let x = Tensor::from_fn([3, 3, 6, 6], |_| rng.normal());
    network_gradient_error(&net, &x, &[0, 2, 1]).unwrap()
}

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..8 {
        for (op, err) in op_gradient_errors(seed).unwrap() {
            assert!(err < 1e-6, "{op}: relative error {err:e}");
        }
    }
}

#[test]
fn depth_five_igc_network() {
    let arch = tiny(BlockType::Igc, 2, 1, &[1, 1, 1]);
    assert_eq!(arch.depth(), 5);
    assert_eq!(arch.final_width(), 8);
    let err = net_error(&arch, 3);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn depth_five_networks_of_every_block_type() {
    for (ty, l, m) in [
        (BlockType::RegConv, 1, 2),
        (BlockType::SumFusion, 2, 2),
        (BlockType::Gpc, 2, 1),
    ] {
        let err = net_error(&tiny(ty, l, m, &[1, 1, 1]), 4);
        assert!(err < 1e-4, "{ty:?}: relative error {err:e}");
    }
}

#[test]
fn residual_network_with_projection() {
    let arch = tiny(BlockType::Igc, 2, 2, &[2, 2]).with_identity_mappings(true);
    let err = net_error(&arch, 5);
    assert!(err < 1e-4, "relative error {err:e}");
}
