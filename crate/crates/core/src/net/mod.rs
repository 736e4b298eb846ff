//! Network families, training, and evaluation.

pub mod arch;
pub mod network;
pub mod train;

pub use arch::{ArchSpec, BlockShape, BlockType, StageSpec, WidenRule};
pub use network::{build_network, BlockOp, ConvBn, NetTrace, Network, ParamKind, ParamRef, Unit};
pub use train::{epoch_order, evaluate, train, EpochRecord, History, Sgd, TrainConfig};
