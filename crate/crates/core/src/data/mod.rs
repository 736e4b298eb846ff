//! Datasets, augmentation, and checkpoint files.

pub mod augment;
pub mod checkpoint;
pub mod cifar;
pub mod dataset;
pub mod synth;

pub use augment::{augment, crop_flip, Crop, AUGMENT_PAD};
pub use checkpoint::{
    load_checkpoint, read_checkpoint_header, save_checkpoint, CheckpointHeader, MAGIC,
};
pub use cifar::{load_cifar_binary, load_cifar_dir, CifarVariant};
pub use dataset::{Dataset, Normalization};
pub use synth::{nearest_template_accuracy, synth_dataset, SynthSpec};
