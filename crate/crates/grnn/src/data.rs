//! MNIST ingestion from IDX files and conversion into the two sequence
//! representations (28 rows of 28 pixels, or 784 scalar pixels), plus a
//! synthetic class-conditional dataset for fast deterministic tests.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::numkernel::SeededRng;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Parsed IDX image/label pair, kept as raw bytes so parsing stays lossless.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` pixel bytes, image-major then row-major.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.rows * self.cols;
        &self.pixels[i * len..(i + 1) * len]
    }

    /// Serialize back to the IDX wire format (images file, labels file).
    pub fn to_idx_bytes(&self) -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::with_capacity(16 + self.pixels.len());
        images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        images.extend_from_slice(&(self.count as u32).to_be_bytes());
        images.extend_from_slice(&(self.rows as u32).to_be_bytes());
        images.extend_from_slice(&(self.cols as u32).to_be_bytes());
        images.extend_from_slice(&self.pixels);

        let mut labels = Vec::with_capacity(8 + self.labels.len());
        labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        labels.extend_from_slice(&(self.count as u32).to_be_bytes());
        labels.extend_from_slice(&self.labels);
        (images, labels)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    let file = File::open(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("gz") {
        GzDecoder::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("{}: bad gzip stream: {e}", path.display())))?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let slice = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::Format(format!("truncated IDX header reading {what}")))?;
    Ok(u32::from_be_bytes(slice.try_into().unwrap()))
}

/// Parse a big-endian IDX image/label file pair, cross-checking the counts.
/// Accepts plain or `.gz` files (decompressed by extension).
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<RawImages> {
    let ib = read_maybe_gz(images_path)?;
    let magic = be_u32(&ib, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = be_u32(&ib, 4, "image count")? as usize;
    let rows = be_u32(&ib, 8, "row count")? as usize;
    let cols = be_u32(&ib, 12, "column count")? as usize;
    let expected = 16 + count * rows * cols;
    if ib.len() != expected {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {expected} for {count} images of {rows}x{cols}",
            images_path.display(),
            ib.len()
        )));
    }

    let lb = read_maybe_gz(labels_path)?;
    let magic = be_u32(&lb, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let label_count = be_u32(&lb, 4, "label count")? as usize;
    if lb.len() != 8 + label_count {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {} for {label_count} labels",
            labels_path.display(),
            lb.len(),
            8 + label_count
        )));
    }
    if label_count != count {
        return Err(Error::Format(format!(
            "count mismatch: {count} images vs {label_count} labels"
        )));
    }

    Ok(RawImages {
        count,
        rows,
        cols,
        pixels: ib[16..].to_vec(),
        labels: lb[8..].to_vec(),
    })
}

/// One training example: a T-step sequence of m-dimensional inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub xs: Vec<Vec<f64>>,
    pub label: usize,
    pub source_id: usize,
}

/// A homogeneous set of labelled sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub examples: Vec<LabeledSequence>,
    pub seq_len: usize,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl SequenceDataset {
    pub fn new(examples: Vec<LabeledSequence>, num_classes: usize) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Input("empty dataset".into()))?;
        let seq_len = first.xs.len();
        let input_dim = first.xs[0].len();
        for ex in &examples {
            if ex.xs.len() != seq_len || ex.xs.iter().any(|x| x.len() != input_dim) {
                return Err(Error::Dimension(
                    "dataset mixes sequence shapes".into(),
                ));
            }
            if ex.label >= num_classes {
                return Err(Error::Input(format!(
                    "label {} out of range for {num_classes} classes",
                    ex.label
                )));
            }
        }
        Ok(SequenceDataset {
            examples,
            seq_len,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// First `count` examples, in order.
    pub fn take(&self, count: usize) -> SequenceDataset {
        SequenceDataset {
            examples: self.examples[..count.min(self.examples.len())].to_vec(),
            seq_len: self.seq_len,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }

    /// One epoch's batches of example indices: a seeded permutation (when
    /// shuffling) split into consecutive chunks; the final partial batch is
    /// kept, so every example appears exactly once.
    pub fn batches(&self, batch_size: usize, rng: &mut SeededRng, shuffle: bool) -> Vec<Vec<usize>> {
        assert!(batch_size >= 1);
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        if shuffle {
            rng.shuffle(&mut order);
        }
        order.chunks(batch_size).map(|c| c.to_vec()).collect()
    }
}

fn label_checked(label: u8, source: usize) -> Result<usize> {
    if label > 9 {
        return Err(Error::Format(format!(
            "image {source}: label {label} outside 0..=9"
        )));
    }
    Ok(label as usize)
}

/// 28x28 images as 28 timesteps of 28 pixels each (top row first), scaled to
/// `[0, 1]` by division by 255.
pub fn to_row_sequences(raw: &RawImages) -> Result<SequenceDataset> {
    if raw.rows != 28 || raw.cols != 28 {
        return Err(Error::Dimension(format!(
            "expected 28x28 images, got {}x{}",
            raw.rows, raw.cols
        )));
    }
    let examples = (0..raw.count)
        .map(|i| {
            let img = raw.image(i);
            let xs = (0..28)
                .map(|t| img[t * 28..(t + 1) * 28].iter().map(|&p| p as f64 / 255.0).collect())
                .collect();
            Ok(LabeledSequence {
                xs,
                label: label_checked(raw.labels[i], i)?,
                source_id: i,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceDataset::new(examples, 10)
}

/// 28x28 images rolled out row-major into 784 scalar timesteps.
pub fn to_pixel_sequences(raw: &RawImages) -> Result<SequenceDataset> {
    if raw.rows != 28 || raw.cols != 28 {
        return Err(Error::Dimension(format!(
            "expected 28x28 images, got {}x{}",
            raw.rows, raw.cols
        )));
    }
    let examples = (0..raw.count)
        .map(|i| {
            let xs = raw
                .image(i)
                .iter()
                .map(|&p| vec![p as f64 / 255.0])
                .collect();
            Ok(LabeledSequence {
                xs,
                label: label_checked(raw.labels[i], i)?,
                source_id: i,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceDataset::new(examples, 10)
}

/// Class-conditional synthetic sequences: each class has a fixed mean
/// pattern in `[0, 1]`, and examples scatter around it with uniform noise of
/// the given half-width. Labels cycle round-robin, so counts per class are
/// balanced. Zero noise makes within-class sequences identical.
pub fn synthetic_dataset(
    rng: &mut SeededRng,
    seq_len: usize,
    input_dim: usize,
    num_classes: usize,
    count: usize,
    noise: f64,
) -> SequenceDataset {
    assert!(seq_len >= 1 && input_dim >= 1 && num_classes >= 1 && count >= 1);
    let means: Vec<Vec<Vec<f64>>> = (0..num_classes)
        .map(|_| {
            (0..seq_len)
                .map(|_| (0..input_dim).map(|_| rng.next_f64()).collect())
                .collect()
        })
        .collect();
    let examples = (0..count)
        .map(|i| {
            let label = i % num_classes;
            let xs = means[label]
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&mu| (mu + rng.uniform(-noise, noise)).clamp(0.0, 1.0))
                        .collect()
                })
                .collect();
            LabeledSequence {
                xs,
                label,
                source_id: i,
            }
        })
        .collect();
    SequenceDataset {
        examples,
        seq_len,
        input_dim,
        num_classes,
    }
}
