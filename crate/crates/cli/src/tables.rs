use std::fmt::Write as _;

use igc_core::budget::{enumerate_configs, network_budget, BlockFamily};
use igc_core::net::ArchSpec;

use super::{Failure, TablesArgs};

/// Per-block parameter targets.
pub const TARGETS: [u64; 2] = [4672, 17536];
/// Depths `3B + 2` of the network budget table.
pub const DEPTHS: [usize; 5] = [8, 20, 38, 62, 98];

/// Matching tolerance of the IGC tables at both targets and of the GPC table
/// at the larger one.
pub const TOL: f64 = 0.03;
/// The GPC rows at the smaller target sit up to 11% away from it.
pub const GPC_SMALL_TOL: f64 = 0.11;

pub fn gpc_tol(target: u64) -> f64 {
    if target == TARGETS[0] {
        GPC_SMALL_TOL
    } else {
        TOL
    }
}

/// The four network families of the budget table at `blocks` per stage.
pub fn budget_archs(blocks: usize) -> [ArchSpec; 4] {
    [
        ArchSpec::regconv(16, blocks),
        ArchSpec::regconv(18, blocks),
        ArchSpec::igc(4, 8, blocks),
        ArchSpec::igc(24, 2, blocks),
    ]
}

fn block_tables(out: &mut String, family: BlockFamily) {
    for target in TARGETS {
        let (name, tol) = match family {
            BlockFamily::Igc => ("IGC", TOL),
            BlockFamily::Gpc => ("GPC", gpc_tol(target)),
        };
        let report = enumerate_configs(target, 9, tol, family);
        let _ = writeln!(
            out,
            "\n### {name} blocks near {target} parameters (S = 9, tolerance {tol})\n"
        );
        out.push_str(&report.to_markdown());
    }
}

pub fn render() -> String {
    let mut out = String::from("# Block and network budgets\n\n## IGC blocks\n");
    block_tables(&mut out, BlockFamily::Igc);

    out.push_str("\n## Network parameters and FLOPs (CIFAR-10 head, 32×32 input)\n\n");
    out.push_str("| Network | Depth | #params (M) | FLOPs (×10⁸) |\n|---|---:|---:|---:|\n");
    for depth in DEPTHS {
        for arch in budget_archs((depth - 2) / 3) {
            let b = network_budget(&arch, 32, 10).expect("preset families are valid");
            let _ = writeln!(
                out,
                "| {} | {depth} | {:.3} | {:.3} |",
                arch.name,
                b.total_params as f64 / 1e6,
                b.flops as f64 / 1e8
            );
        }
    }

    out.push_str("\n## GPC blocks\n");
    block_tables(&mut out, BlockFamily::Gpc);
    out
}

pub fn run(a: TablesArgs) -> Result<(), Failure> {
    eprintln!(
        "tables: out={}",
        a.out
            .as_deref()
            .map_or("stdout".into(), |p| p.display().to_string())
    );
    let text = render();
    match &a.out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
