use std::path::{Path, PathBuf};

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SIDE: usize = 32;
const PIXELS: usize = 3 * SIDE * SIDE;

/// Record layout of the binary distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    /// One label byte, 10 classes.
    Ten,
    /// Coarse and fine label bytes, 100 fine classes.
    Hundred,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Ten => 1,
            CifarVariant::Hundred => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + PIXELS
    }

    pub fn class_count(self) -> usize {
        match self {
            CifarVariant::Ten => 10,
            CifarVariant::Hundred => 100,
        }
    }
}

/// Concatenates the records of `paths`, in order. Pixels are scaled to
/// `[0, 1]`; normalization statistics come from the loaded images.
pub fn load_cifar_binary(paths: &[PathBuf], variant: CifarVariant) -> Result<Dataset> {
    let record = variant.record_len();
    let classes = variant.class_count();
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path)?;
        let whole = bytes.len() / record * record;
        if whole != bytes.len() {
            return Err(Error::Format {
                path: path.clone(),
                offset: whole as u64,
                msg: format!(
                    "truncated record: {} trailing bytes, records are {record} bytes",
                    bytes.len() - whole
                ),
            });
        }
        for (r, rec) in bytes.chunks_exact(record).enumerate() {
            let label_at = variant.label_bytes() - 1;
            let label = rec[label_at] as usize;
            if label >= classes {
                return Err(Error::Format {
                    path: path.clone(),
                    offset: (r * record + label_at) as u64,
                    msg: format!("label {label} out of range for {classes} classes"),
                });
            }
            labels.push(label);
            pixels.extend(
                rec[variant.label_bytes()..]
                    .iter()
                    .map(|&b| b as f32 / 255.0),
            );
        }
    }
    let images = Tensor::new([labels.len(), 3, SIDE, SIDE], pixels)?;
    Dataset::new(images, labels, classes)
}

/// Train and test splits from a directory holding either
/// `data_batch_1.bin`…`data_batch_5.bin` and `test_batch.bin`, or `train.bin`
/// and `test.bin`. The test split reuses the training normalization.
pub fn load_cifar_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let ten: Vec<PathBuf> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .collect();
    let (train_paths, test_path, variant) = if ten.iter().all(|p| p.is_file()) {
        (ten, dir.join("test_batch.bin"), CifarVariant::Ten)
    } else if dir.join("train.bin").is_file() {
        (
            vec![dir.join("train.bin")],
            dir.join("test.bin"),
            CifarVariant::Hundred,
        )
    } else {
        return Err(Error::Input(format!(
            "{} holds neither data_batch_1..5.bin nor train.bin",
            dir.display()
        )));
    };
    let train = load_cifar_binary(&train_paths, variant)?;
    let test =
        load_cifar_binary(&[test_path], variant)?.with_normalization(train.normalization.clone());
    Ok((train, test))
}
