use igc_core::budget::{
    enumerate_configs, gpc_param_count, igc_param_count, is_wider, network_budget,
    regular_width_for, widest_config, width_upper_bound, BlockFamily,
};
use igc_core::net::{build_network, ArchSpec};
use proptest::prelude::*;

fn rows(target: u64, tol: f64, family: BlockFamily) -> Vec<(u64, u64, u64, u64)> {
    enumerate_configs(target, 9, tol, family)
        .entries
        .iter()
        .map(|e| (e.l, e.m, e.params, e.width))
        .collect()
}

#[test]
fn igc_rows_at_both_targets() {
    let small = rows(4672, 0.03, BlockFamily::Igc);
    for row in [
        (1, 23, 4784, 23),
        (2, 16, 4672, 32),
        (3, 13, 4680, 39),
        (5, 10, 4750, 50),
        (6, 9, 4698, 54),
        (12, 6, 4752, 72),
        (28, 3, 4620, 84),
        (40, 2, 4640, 80),
        (64, 1, 4672, 64),
    ] {
        assert!(small.contains(&row), "{row:?}");
    }
    let large = rows(17536, 0.03, BlockFamily::Igc);
    for row in [
        (1, 44, 17468, 44),
        (2, 31, 17422, 62),
        (4, 22, 17776, 88),
        (12, 12, 17280, 144),
        (14, 11, 17402, 154),
        (23, 8, 17480, 184),
        (28, 7, 17836, 196),
        (41, 5, 17630, 205),
        (64, 3, 17472, 192),
        (85, 2, 17510, 170),
        (128, 1, 17536, 128),
    ] {
        assert!(large.contains(&row), "{row:?}");
    }
}

#[test]
fn gpc_rows_at_both_targets() {
    let small = rows(4672, 0.11, BlockFamily::Gpc);
    for row in [
        (1, 22, 4840, 22),
        (2, 15, 4950, 30),
        (3, 12, 5184, 36),
        (5, 8, 4480, 40),
        (10, 5, 4750, 50),
        (19, 3, 4788, 57),
        (30, 2, 4680, 60),
        (64, 1, 4672, 64),
    ] {
        assert!(small.contains(&row), "{row:?}");
    }
    let large = rows(17536, 0.03, BlockFamily::Gpc);
    for row in [
        (1, 42, 17640, 42),
        (2, 28, 17248, 56),
        (3, 22, 17424, 66),
        (6, 14, 17640, 84),
        (11, 9, 17820, 99),
        (15, 7, 17640, 105),
        (18, 6, 17496, 108),
        (29, 4, 17632, 116),
        (62, 2, 17608, 124),
        (128, 1, 17536, 128),
    ] {
        assert!(large.contains(&row), "{row:?}");
    }
}

#[test]
fn widest_blocks_and_the_width_law() {
    for (target, want) in [(4672, (28, 3)), (17536, (41, 5))] {
        let best = widest_config(target, 9, 0.03, BlockFamily::Igc).unwrap();
        assert_eq!((best.l, best.m), want);
        // about nine times as many partitions as channels per partition
        let ratio = best.l as f64 / best.m as f64;
        assert!((6.0..=12.0).contains(&ratio), "{ratio}");

        // exhaustive search over every (L, M) in the window
        let slack = (0.03 * target as f64).floor() as u64;
        let mut exhaustive = None;
        for l in 1..=target {
            if igc_param_count(l, 1, 9) > target + slack {
                break;
            }
            for m in 1.. {
                let p = igc_param_count(l, m, 9);
                if p > target + slack {
                    break;
                }
                if p + slack < target {
                    continue;
                }
                let w = l * m;
                assert!(w as f64 <= width_upper_bound(p as f64, 9.0) + 1e-9);
                assert!(w as f64 <= width_upper_bound(target as f64, 9.0) + 1.0);
                let key = (w, std::cmp::Reverse(p), std::cmp::Reverse(l));
                if exhaustive.is_none_or(|b| key > b) {
                    exhaustive = Some(key);
                }
            }
        }
        let (w, _, std::cmp::Reverse(l)) = exhaustive.unwrap();
        assert_eq!((l, w / l), want);
    }
}

#[test]
fn regular_width_is_the_largest_fitting_side() {
    assert_eq!(regular_width_for(4672, 9), 22);
    assert_eq!(regular_width_for(17536, 9), 44);
    assert_eq!(regular_width_for(9, 9), 1);
    assert_eq!(regular_width_for(8, 9), 0);
}

/// Printed (params in millions, FLOPs in units of 1e8) per depth.
const TABLE4: [(&str, [(f64, f64); 5]); 4] = [
    (
        "W16",
        [
            (0.075, 0.122),
            (0.27, 0.406),
            (0.56, 0.830),
            (0.95, 1.40),
            (1.53, 2.25),
        ],
    ),
    (
        "W18",
        [
            (0.095, 0.154),
            (0.34, 0.513),
            (0.71, 1.05),
            (1.20, 1.77),
            (1.93, 2.84),
        ],
    ),
    (
        "L4M8",
        [
            (0.078, 0.131),
            (0.27, 0.424),
            (0.57, 0.862),
            (0.96, 1.45),
            (1.56, 2.32),
        ],
    ),
    (
        "L24M2",
        [
            (0.047, 0.099),
            (0.15, 0.288),
            (0.31, 0.571),
            (0.52, 0.948),
            (0.83, 1.51),
        ],
    ),
];

fn table4_arch(name: &str, blocks: usize) -> ArchSpec {
    match name {
        "W16" => ArchSpec::regconv(16, blocks),
        "W18" => ArchSpec::regconv(18, blocks),
        "L4M8" => ArchSpec::igc(4, 8, blocks),
        _ => ArchSpec::igc(24, 2, blocks),
    }
}

#[test]
fn network_budgets_within_ten_percent() {
    for (d, depth) in [8, 20, 38, 62, 98].into_iter().enumerate() {
        let mut counted = Vec::new();
        for (name, cells) in TABLE4 {
            let arch = table4_arch(name, (depth - 2) / 3);
            assert_eq!(arch.depth(), depth);
            let b = network_budget(&arch, 32, 10).unwrap();
            let (params, flops) = (b.total_params as f64 / 1e6, b.flops as f64 / 1e8);
            let (want_p, want_f) = cells[d];
            assert!(
                (params / want_p - 1.0).abs() < 0.10,
                "{name} D{depth}: {params} vs {want_p}"
            );
            assert!(
                (flops / want_f - 1.0).abs() < 0.10,
                "{name} D{depth}: {flops} vs {want_f}"
            );
            counted.push((b.total_params, b.flops));
        }
        let smallest = counted[3];
        assert!(counted[..3]
            .iter()
            .all(|c| c.0 > smallest.0 && c.1 > smallest.1));
    }
}

#[test]
fn built_networks_match_their_budgets() {
    let archs = [
        ArchSpec::regconv(16, 2),
        ArchSpec::regconv(18, 6),
        ArchSpec::sumfusion(2),
        ArchSpec::igc(4, 8, 2),
        ArchSpec::igc(24, 2, 6),
        ArchSpec::gpc(4, 4, 2),
        ArchSpec::igc(4, 8, 2).with_identity_mappings(true),
        ArchSpec::regconv(16, 4).with_identity_mappings(true),
        ArchSpec::igc(4, 8, 0),
    ];
    for arch in archs {
        let net = build_network::<f32>(&arch, 0).unwrap();
        let b = network_budget(&arch, 32, arch.n_classes).unwrap();
        assert_eq!(net.param_count() as u64, b.total_params, "{}", arch.name);
    }
}

proptest! {
    #[test]
    fn wider_iff_width_beats_the_regular_block(l in 1u64..200, m in 1u64..60, s in prop::sample::select(vec![1u64, 9, 25])) {
        let p = igc_param_count(l, m, s);
        // a regular block with the same count has width sqrt(p / S)
        prop_assert_eq!(is_wider(l, m, s), (l * m) * (l * m) * s > p);
    }

    #[test]
    fn gpc_costs_at_least_as_much(l in 1u64..100, m in 1u64..40) {
        prop_assert!(gpc_param_count(l, m, 9) >= igc_param_count(l, m, 9));
        prop_assert_eq!(gpc_param_count(l, m, 9) == igc_param_count(l, m, 9), m == 1);
    }

    #[test]
    fn enumerated_entries_respect_the_window(target in 100u64..20_000, tol in 0.0f64..0.2) {
        let slack = (tol * target as f64).floor() as u64;
        for e in enumerate_configs(target, 9, tol, BlockFamily::Igc).entries {
            prop_assert!(e.params + slack >= target && e.params <= target + slack);
            prop_assert_eq!(e.width, e.l * e.m);
            prop_assert!(igc_param_count(e.l, e.m + 1, 9) > target + slack);
        }
    }
}
