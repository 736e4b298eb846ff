use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::block::IgcConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockType {
    Igc,
    RegConv,
    SumFusion,
    Gpc,
}

/// How a stage doubles its width relative to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidenRule {
    DoubleM,
    DoubleL,
}

/// One stage of blocks sharing a width.
///
/// `l`/`m` mean: partitions and channels per partition (IGC, GPC); branches
/// and branch width (SumFusion); `l = 1` and width `m` (RegConv).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub blocks: usize,
    pub l: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub name: String,
    pub block_type: BlockType,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    pub stages: Vec<StageSpec>,
    pub widen_rule: WidenRule,
    #[serde(default)]
    pub identity_mappings: bool,
    pub n_classes: usize,
}

fn default_in_channels() -> usize {
    3
}

fn default_kernel() -> usize {
    3
}

/// Shape of the main convolution in one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Conv {
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
    },
    SumFusion {
        branches: usize,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
    },
    Igc(IgcConfig),
    Gpc(IgcConfig),
}

impl BlockShape {
    pub fn in_channels(&self) -> usize {
        match *self {
            BlockShape::Conv { c_in, .. } | BlockShape::SumFusion { c_in, .. } => c_in,
            BlockShape::Igc(cfg) | BlockShape::Gpc(cfg) => cfg.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            BlockShape::Conv { c_out, .. } | BlockShape::SumFusion { c_out, .. } => c_out,
            BlockShape::Igc(cfg) | BlockShape::Gpc(cfg) => cfg.width(),
        }
    }

    pub fn stride(&self) -> usize {
        match *self {
            BlockShape::Conv { stride, .. } | BlockShape::SumFusion { stride, .. } => stride,
            BlockShape::Igc(cfg) | BlockShape::Gpc(cfg) => cfg.stride,
        }
    }

    /// Kernel entries, which is also the multiply-adds per output position.
    pub fn kernel_params(&self) -> usize {
        match *self {
            BlockShape::Conv { c_in, c_out, k, .. } => c_out * c_in * k * k,
            BlockShape::SumFusion {
                branches,
                c_in,
                c_out,
                k,
                ..
            } => branches * c_out * c_in * k * k,
            BlockShape::Igc(cfg) => cfg.param_count(),
            BlockShape::Gpc(cfg) => crate::block::gpc_param_count(&cfg),
        }
    }
}

/// Stage index and geometry of every block, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSlot {
    pub stage: usize,
    pub index: usize,
    pub shape: BlockShape,
}

impl ArchSpec {
    pub fn regconv(width: usize, blocks: usize) -> Self {
        Self::three_stage(
            format!("RegConv-W{width}"),
            BlockType::RegConv,
            1,
            width,
            blocks,
        )
    }

    /// Four branches of widths 8/16/32.
    pub fn sumfusion(blocks: usize) -> Self {
        Self::three_stage("SumFusion".into(), BlockType::SumFusion, 4, 8, blocks)
    }

    pub fn igc(l: usize, m: usize, blocks: usize) -> Self {
        Self::three_stage(format!("IGC-L{l}M{m}"), BlockType::Igc, l, m, blocks)
    }

    pub fn gpc(l: usize, m: usize, blocks: usize) -> Self {
        Self::three_stage(format!("GPC-L{l}M{m}"), BlockType::Gpc, l, m, blocks)
    }

    /// Three stages, width doubled by doubling `m`.
    fn three_stage(name: String, block_type: BlockType, l: usize, m: usize, blocks: usize) -> Self {
        Self {
            name,
            block_type,
            in_channels: 3,
            kernel: 3,
            stages: (0..3)
                .map(|s| StageSpec {
                    blocks,
                    l,
                    m: m << s,
                })
                .collect(),
            widen_rule: WidenRule::DoubleM,
            identity_mappings: false,
            n_classes: 10,
        }
    }

    pub fn with_identity_mappings(mut self, on: bool) -> Self {
        self.identity_mappings = on;
        if on && !self.name.ends_with("+Ident.") {
            self.name.push_str("+Ident.");
        }
        self
    }

    pub fn with_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = n_classes;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let arch: Self = serde_json::from_str(text)?;
        arch.validate()?;
        Ok(arch)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("plain data"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Convolution layers plus the classifier: `Σ blocks + 2`.
    pub fn depth(&self) -> usize {
        self.stages.iter().map(|s| s.blocks).sum::<usize>() + 2
    }

    /// Output channels of stage `s`.
    pub fn stage_width(&self, s: usize) -> usize {
        let st = &self.stages[s];
        match self.block_type {
            BlockType::RegConv | BlockType::SumFusion => st.m,
            BlockType::Igc | BlockType::Gpc => st.l * st.m,
        }
    }

    pub fn stem_width(&self) -> usize {
        self.stages.first().map_or(0, |_| self.stage_width(0))
    }

    /// Width seen by the classifier: the last stage that has blocks, else
    /// the stem.
    pub fn final_width(&self) -> usize {
        match self.stages.iter().rposition(|s| s.blocks > 0) {
            Some(s) => self.stage_width(s),
            None => self.stem_width(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.stages.is_empty() {
            return bad("architecture needs at least one stage".into());
        }
        if self.in_channels == 0 || self.n_classes == 0 {
            return bad("in_channels and n_classes must be positive".into());
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad(format!("kernel side {} must be odd", self.kernel));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.l == 0 || st.m == 0 {
                return bad(format!("stage {i}: l and m must be positive"));
            }
            if self.block_type == BlockType::RegConv && st.l != 1 {
                return bad(format!("stage {i}: regular convolution stages use l = 1"));
            }
            if self.identity_mappings && st.blocks % 2 != 0 {
                return bad(format!(
                    "stage {i}: identity mappings pair blocks, got {} blocks",
                    st.blocks
                ));
            }
            if i > 0 && st.blocks > 0 && self.stages[i - 1].blocks == 0 && i - 1 > 0 {
                return bad(format!("stage {i}: follows an empty stage"));
            }
            if i > 0 {
                let prev = &self.stages[i - 1];
                let ok = match (self.block_type, self.widen_rule) {
                    (BlockType::RegConv, _) => st.m == 2 * prev.m,
                    (_, WidenRule::DoubleM) => st.l == prev.l && st.m == 2 * prev.m,
                    (_, WidenRule::DoubleL) => st.m == prev.m && st.l == 2 * prev.l,
                };
                if !ok {
                    return bad(format!(
                        "stage {i}: (l={}, m={}) does not double stage {} (l={}, m={}) under {:?}",
                        st.l,
                        st.m,
                        i - 1,
                        prev.l,
                        prev.m,
                        self.widen_rule
                    ));
                }
                let c_in = self.stage_width(i - 1);
                if matches!(self.block_type, BlockType::Igc | BlockType::Gpc)
                    && !c_in.is_multiple_of(st.l)
                {
                    return bad(format!(
                        "stage {i}: {c_in} input channels do not split into {} partitions",
                        st.l
                    ));
                }
            }
        }
        Ok(())
    }

    /// Geometry of the first block of a stage, or any later block.
    pub fn block_shape(&self, stage: usize, first: bool) -> BlockShape {
        let st = &self.stages[stage];
        let transition = first && stage > 0;
        let c_out = self.stage_width(stage);
        let c_in = if transition {
            self.stage_width(stage - 1)
        } else {
            c_out
        };
        let stride = if transition { 2 } else { 1 };
        let k = self.kernel;
        match self.block_type {
            BlockType::RegConv => BlockShape::Conv {
                c_in,
                c_out,
                k,
                stride,
            },
            BlockType::SumFusion => BlockShape::SumFusion {
                branches: st.l,
                c_in,
                c_out,
                k,
                stride,
            },
            BlockType::Igc | BlockType::Gpc => {
                let cfg = IgcConfig::new(st.l, st.m, k)
                    .with_m_in(c_in / st.l)
                    .with_stride(stride);
                if self.block_type == BlockType::Igc {
                    BlockShape::Igc(cfg)
                } else {
                    BlockShape::Gpc(cfg)
                }
            }
        }
    }

    pub fn blocks(&self) -> Vec<BlockSlot> {
        let mut out = Vec::new();
        for (s, st) in self.stages.iter().enumerate() {
            for b in 0..st.blocks {
                out.push(BlockSlot {
                    stage: s,
                    index: b,
                    shape: self.block_shape(s, b == 0),
                });
            }
        }
        out
    }

    /// Spatial side of stage `s` for a given input side.
    pub fn stage_hw(&self, input_hw: usize, stage: usize) -> usize {
        (0..stage).fold(input_hw, |hw, s| {
            if self.stages[s + 1].blocks > 0 {
                (hw - 1) / 2 + 1
            } else {
                hw
            }
        })
    }
}
