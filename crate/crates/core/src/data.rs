//! MNIST IDX and CIFAR-10 binary loaders, splits and class-balanced subsets.
//!
//! Pixels are scaled by 1/255 and stored channels-last.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::engine::Batch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 1 + 3 * 1024;

pub const MNIST_TRAIN: (&str, &str) = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
pub const MNIST_TEST: (&str, &str) = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `(N, rows, cols, channels)` in `[0, 1]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("{}: truncated IDX header", path.display())))
}

fn scale(bytes: &[u8]) -> Vec<f32> {
    bytes.iter().map(|&b| b as f32 / 255.0).collect()
}

/// Parses an IDX image file and its IDX label file.
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = read(ip)?;
    let lb = read(lp)?;
    let magic = be_u32(&ib, 0, ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}",
            ip.display()
        )));
    }
    let magic = be_u32(&lb, 0, lp)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}",
            lp.display()
        )));
    }
    let n = be_u32(&ib, 4, ip)? as usize;
    let rows = be_u32(&ib, 8, ip)? as usize;
    let cols = be_u32(&ib, 12, ip)? as usize;
    let nl = be_u32(&lb, 4, lp)? as usize;
    if n != nl {
        return Err(Error::Format(format!("{n} images but {nl} labels")));
    }
    if n == 0 {
        return Err(Error::Format(format!("{}: no images", ip.display())));
    }
    let pixels = n * rows * cols;
    if ib.len() != 16 + pixels {
        return Err(Error::Format(format!(
            "{}: {} pixel bytes, header declares {pixels}",
            ip.display(),
            ib.len().saturating_sub(16)
        )));
    }
    if lb.len() != 8 + n {
        return Err(Error::Format(format!(
            "{}: {} label bytes, header declares {n}",
            lp.display(),
            lb.len().saturating_sub(8)
        )));
    }
    let labels: Vec<usize> = lb[8..].iter().map(|&b| b as usize).collect();
    let class_count = 10.max(labels.iter().max().map_or(0, |m| m + 1));
    Ok(Dataset {
        images: Tensor::from_vec([n, rows, cols, 1], scale(&ib[16..]))?,
        labels,
        class_count,
    })
}

/// Loads `(train, test)` from a directory holding the four standard files.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_mnist(dir.join(MNIST_TRAIN.0), dir.join(MNIST_TRAIN.1))?;
    let test = load_mnist(dir.join(MNIST_TEST.0), dir.join(MNIST_TEST.1))?;
    Ok((train, test))
}

/// Concatenates CIFAR-10 binary batch files.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: {} bytes is not a whole number of {CIFAR_RECORD}-byte records",
                path.display(),
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label >= 10 {
                return Err(Error::Format(format!(
                    "{}: label byte {label}",
                    path.display()
                )));
            }
            labels.push(label);
            let planes = &record[1..];
            for p in 0..1024 {
                for c in 0..3 {
                    pixels.push(planes[c * 1024 + p] as f32 / 255.0);
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Config("no CIFAR-10 batch files given".into()));
    }
    Ok(Dataset {
        images: Tensor::from_vec([labels.len(), 32, 32, 3], pixels)?,
        labels,
        class_count: 10,
    })
}

/// `data_batch_*.bin` and `test_batch.bin` under `dir`, or the file itself.
pub fn cifar10_files(path: impl AsRef<Path>) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let path = path.as_ref();
    if path.is_file() {
        return Ok((vec![path.to_path_buf()], Vec::new()));
    }
    let mut train = Vec::new();
    for i in 1..=5 {
        let p = path.join(format!("data_batch_{i}.bin"));
        if p.is_file() {
            train.push(p);
        }
    }
    let test = path.join("test_batch.bin");
    let test = if test.is_file() {
        vec![test]
    } else {
        Vec::new()
    };
    if train.is_empty() && test.is_empty() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no CIFAR-10 batch files"),
        });
    }
    Ok((train, test))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let batch = Batch::gather(&self.images, &self.labels, indices)?;
        Ok(Dataset {
            images: batch.inputs,
            labels: batch.labels,
            class_count: self.class_count,
        })
    }

    /// `(first n, rest)`; both halves must be non-empty.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Config(format!("split at {n} of {}", self.len())));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.select(&head)?, self.select(&tail)?))
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Exactly `per_class` samples of every class, drawn without replacement
    /// by a seeded shuffle of each class's indices. Output is grouped by
    /// class in ascending order.
    pub fn balanced_subset(&self, per_class: usize, seed: u64) -> Result<Dataset> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut picked = Vec::with_capacity(per_class * self.class_count);
        for (class, mut idx) in by_class.into_iter().enumerate() {
            if idx.len() < per_class {
                return Err(Error::InsufficientData {
                    class,
                    available: idx.len(),
                    requested: per_class,
                });
            }
            idx.shuffle(&mut rng);
            picked.extend_from_slice(&idx[..per_class]);
        }
        self.select(&picked)
    }
}

/// Training, validation and test partitions of one dataset.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    /// Held out from the end of the training file; used for sweeps.
    pub validation: Dataset,
    pub test: Dataset,
}

impl Splits {
    /// Holds out the last `validation` training samples.
    pub fn new(train: Dataset, test: Dataset, validation: usize) -> Result<Self> {
        let (train, validation) = train.split_at(train.len() - validation.min(train.len()))?;
        Ok(Splits {
            train,
            validation,
            test,
        })
    }
}
