//! Parameter and width accounting for IGC and GPC blocks and whole networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::arch::ArchSpec;
use crate::par::map_range;

/// `L·M²·S + M·L²`.
pub fn igc_param_count(l: u64, m: u64, s: u64) -> u64 {
    l * m * m * s + m * l * l
}

/// `L·M²·S + (L·M)²`.
pub fn gpc_param_count(l: u64, m: u64, s: u64) -> u64 {
    l * m * m * s + (l * m) * (l * m)
}

/// `C²·S`.
pub fn regular_param_count(c: u64, s: u64) -> u64 {
    c * c * s
}

/// Largest `C` with `C²·S ≤ target`.
pub fn regular_width_for(target: u64, s: u64) -> u64 {
    let mut c = ((target as f64 / s as f64).sqrt()) as u64;
    while regular_param_count(c + 1, s) <= target {
        c += 1;
    }
    while c > 0 && regular_param_count(c, s) > target {
        c -= 1;
    }
    c
}

/// Whether an IGC block is wider than a regular convolution with the same
/// parameter count: `L/(L−1) < M·S`, false for `L = 1`.
pub fn is_wider(l: u64, m: u64, s: u64) -> bool {
    l > 1 && l < m * s * (l - 1)
}

/// `(T / (2√S))^(2/3)`.
pub fn width_upper_bound(params: f64, s: f64) -> f64 {
    (params / (2.0 * s.sqrt())).powf(2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockFamily {
    Igc,
    Gpc,
}

impl BlockFamily {
    pub fn param_count(self, l: u64, m: u64, s: u64) -> u64 {
        match self {
            BlockFamily::Igc => igc_param_count(l, m, s),
            BlockFamily::Gpc => gpc_param_count(l, m, s),
        }
    }
}

impl std::str::FromStr for BlockFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "igc" => Ok(BlockFamily::Igc),
            "gpc" => Ok(BlockFamily::Gpc),
            other => Err(Error::Config(format!("unknown block family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub l: u64,
    pub m: u64,
    pub params: u64,
    pub width: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub family: BlockFamily,
    pub target_params: u64,
    pub s: u64,
    pub tol_fraction: f64,
    /// Sorted by `l`.
    pub entries: Vec<BudgetEntry>,
}

/// For every `L`, the largest `M` whose count lies within
/// `tol_fraction·target` of `target`. `L` values with no such `M` are skipped.
pub fn enumerate_configs(
    target: u64,
    s: u64,
    tol_fraction: f64,
    family: BlockFamily,
) -> BudgetReport {
    let slack = (tol_fraction.max(0.0) * target as f64).floor() as u64;
    let (lo, hi) = (target.saturating_sub(slack), target + slack);
    // the smallest block with `L` partitions has M = 1
    let l_max = (1..=hi.max(1))
        .take_while(|&l| family.param_count(l, 1, s) <= hi)
        .last()
        .unwrap_or(0);
    let found = map_range(l_max as usize, |i| {
        let l = i as u64 + 1;
        let mut best = None;
        let mut m = 1;
        loop {
            let params = family.param_count(l, m, s);
            if params > hi {
                break;
            }
            if params >= lo {
                best = Some(BudgetEntry {
                    l,
                    m,
                    params,
                    width: l * m,
                });
            }
            m += 1;
        }
        best
    });
    BudgetReport {
        family,
        target_params: target,
        s,
        tol_fraction,
        entries: found.into_iter().flatten().collect(),
    }
}

/// Widest enumerated configuration; ties go to the fewer parameters, then
/// the smaller `L`.
pub fn widest_config(
    target: u64,
    s: u64,
    tol_fraction: f64,
    family: BlockFamily,
) -> Option<BudgetEntry> {
    enumerate_configs(target, s, tol_fraction, family)
        .widest()
        .copied()
}

impl BudgetReport {
    /// See [`widest_config`].
    pub fn widest(&self) -> Option<&BudgetEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&BudgetEntry>, e| match best {
                Some(b)
                    if (b.width, std::cmp::Reverse(b.params))
                        >= (e.width, std::cmp::Reverse(e.params)) =>
                {
                    Some(b)
                }
                _ => Some(e),
            })
    }

    pub fn find(&self, l: u64, m: u64) -> Option<&BudgetEntry> {
        self.entries.iter().find(|e| e.l == l && e.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,M,params,width\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{}\n", e.l, e.m, e.params, e.width));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Table with the widest row in bold.
    pub fn to_markdown(&self) -> String {
        let widest = self.widest();
        let mut out = String::from("| L | M | #params | width |\n|---:|---:|---:|---:|\n");
        for e in &self.entries {
            let w = if Some(e) == widest {
                format!("**{}**", e.width)
            } else {
                e.width.to_string()
            };
            out.push_str(&format!("| {} | {} | {} | {} |\n", e.l, e.m, e.params, w));
        }
        out
    }
}

/// Parameters and multiply-adds of one part of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPart {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

/// Counting convention: conv kernels, two affine values per batch-norm
/// channel, and classifier weights plus bias count as parameters; FLOPs are
/// multiply-adds of convolutions (kernel entries × output positions) and of
/// the classifier. Batch norm, ReLU, pooling and additions cost nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkBudget {
    pub arch: String,
    pub input_hw: usize,
    pub total_params: u64,
    pub flops: u64,
    /// Stem, one part per stage, then the classifier head.
    pub parts: Vec<BudgetPart>,
}

pub fn network_budget(arch: &ArchSpec, input_hw: usize, n_classes: usize) -> Result<NetworkBudget> {
    let arch = arch.clone().with_classes(n_classes);
    arch.validate()?;
    if input_hw == 0 {
        return Err(Error::Config("input side must be positive".into()));
    }
    let k = arch.kernel as u64;
    let mut parts = Vec::new();

    let stem_w = arch.stem_width() as u64;
    let hw0 = (input_hw * input_hw) as u64;
    let stem_kernel = arch.in_channels as u64 * stem_w * k * k;
    parts.push(BudgetPart {
        name: "stem".into(),
        params: stem_kernel + 2 * stem_w,
        flops: stem_kernel * hw0,
    });

    for (s, st) in arch.stages.iter().enumerate() {
        let side = arch.stage_hw(input_hw, s) as u64;
        let positions = side * side;
        let mut params = 0;
        let mut flops = 0;
        for b in 0..st.blocks {
            let shape = arch.block_shape(s, b == 0);
            let kp = shape.kernel_params() as u64;
            params += kp + 2 * shape.out_channels() as u64;
            flops += kp * positions;
            if arch.identity_mappings && b == 0 && s > 0 {
                let proj = (shape.in_channels() * shape.out_channels()) as u64;
                params += proj + 2 * shape.out_channels() as u64;
                flops += proj * positions;
            }
        }
        parts.push(BudgetPart {
            name: format!("stage{}", s + 1),
            params,
            flops,
        });
    }

    let fc = arch.final_width() as u64 * n_classes as u64;
    parts.push(BudgetPart {
        name: "head".into(),
        params: fc + n_classes as u64,
        flops: fc,
    });

    Ok(NetworkBudget {
        arch: arch.name.clone(),
        input_hw,
        total_params: parts.iter().map(|p| p.params).sum(),
        flops: parts.iter().map(|p| p.flops).sum(),
        parts,
    })
}

impl NetworkBudget {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("part,params,flops\n");
        for p in &self.parts {
            out.push_str(&format!("{},{},{}\n", p.name, p.params, p.flops));
        }
        out.push_str(&format!("total,{},{}\n", self.total_params, self.flops));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}
