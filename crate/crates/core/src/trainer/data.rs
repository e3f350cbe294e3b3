//! Desk-scale datasets: synthetic Gaussian blobs and IDX image/label files.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::ops::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Feature rows with integer labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if features.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "dataset features must be finite".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// A train/eval pair over the same feature space.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub train: Dataset,
    pub eval: Dataset,
}

impl SplitDataset {
    pub fn new(train: Dataset, eval: Dataset) -> Result<Self> {
        if train.input_dim() != eval.input_dim() {
            return Err(Error::InvalidParameter(
                "train and eval dimensions disagree".into(),
            ));
        }
        Ok(Self { train, eval })
    }

    pub fn class_count(&self) -> usize {
        self.train.class_count().max(self.eval.class_count())
    }
}

const CENTER_STREAM: u64 = 0x6365_6e74;
const SAMPLE_STREAM: u64 = 0x7361_6d70;

/// Gaussian clusters around deterministic unit-sphere centers, split 80/20
/// per class into train/eval. `per_class` samples are drawn for every class
/// in total, so labels stay exactly balanced.
pub fn make_blobs(
    n_classes: usize,
    d_in: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if n_classes < 3 {
        return Err(Error::InvalidClassCount(n_classes));
    }
    if spread <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "spread must be positive, got {spread}"
        )));
    }
    if d_in < 2 || per_class == 0 {
        return Err(Error::InvalidParameter(
            "need d_in >= 2 and per_class >= 1".into(),
        ));
    }

    let mut center_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, CENTER_STREAM));
    let mut centers = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        loop {
            let v: Vec<f64> = (0..d_in)
                .map(|_| center_rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                centers.push(v.into_iter().map(|x| x / norm).collect::<Vec<f64>>());
                break;
            }
        }
    }

    let train_per_class = ((per_class as f64) * 0.8).floor() as usize;
    let eval_per_class = per_class - train_per_class;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SAMPLE_STREAM));

    let mut train_rows = Vec::with_capacity(n_classes * train_per_class);
    let mut train_labels = Vec::with_capacity(n_classes * train_per_class);
    let mut eval_rows = Vec::with_capacity(n_classes * eval_per_class);
    let mut eval_labels = Vec::with_capacity(n_classes * eval_per_class);
    for (c, center) in centers.iter().enumerate() {
        for k in 0..per_class {
            let row: Vec<f64> = center
                .iter()
                .map(|&m| m + spread * sample_rng.sample::<f64, _>(StandardNormal))
                .collect();
            if k < train_per_class {
                train_rows.push(row);
                train_labels.push(c);
            } else {
                eval_rows.push(row);
                eval_labels.push(c);
            }
        }
    }

    SplitDataset::new(
        Dataset::new(Matrix::from_rows(train_rows), train_labels, Split::Train)?,
        Dataset::new(Matrix::from_rows(eval_rows), eval_labels, Split::Eval)?,
    )
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::FormatError(format!("truncated {what}")))
}

/// Loads an IDX image/label file pair: big-endian headers, magic
/// `0x00000803` for images and `0x00000801` for labels, pixels scaled into
/// [0, 1] and flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;

    let magic = read_u32_be(&images, 0, "image header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::FormatError(format!(
            "bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(&images, 4, "image header")? as usize;
    let rows = read_u32_be(&images, 8, "image header")? as usize;
    let cols = read_u32_be(&images, 12, "image header")? as usize;
    let pixels = rows * cols;
    let body = &images[16.min(images.len())..];
    if body.len() != count * pixels {
        return Err(Error::FormatError(format!(
            "image payload holds {} bytes, expected {}",
            body.len(),
            count * pixels
        )));
    }

    let lmagic = read_u32_be(&labels, 0, "label header")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::FormatError(format!(
            "bad label magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let lcount = read_u32_be(&labels, 4, "label header")? as usize;
    let lbody = &labels[8.min(labels.len())..];
    if lbody.len() != lcount {
        return Err(Error::FormatError(format!(
            "label payload holds {} bytes, expected {lcount}",
            lbody.len()
        )));
    }
    if count != lcount {
        return Err(Error::CountMismatch {
            images: count,
            labels: lcount,
        });
    }

    let features = Matrix::from_flat(
        count,
        pixels,
        body.iter().map(|&p| p as f64 / 255.0).collect(),
    );
    Dataset::new(features, lbody.iter().map(|&l| l as usize).collect(), Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = make_blobs(4, 8, 10, 0.1, 3).unwrap();
        let b = make_blobs(4, 8, 10, 0.1, 3).unwrap();
        assert_eq!(a.train.features.data(), b.train.features.data());
        assert_eq!(a.eval.features.data(), b.eval.features.data());

        for c in 0..4 {
            let total = a.train.labels.iter().filter(|&&l| l == c).count()
                + a.eval.labels.iter().filter(|&&l| l == c).count();
            assert_eq!(total, 10);
        }
        assert_eq!(a.train.len(), 4 * 8);
        assert_eq!(a.eval.len(), 4 * 2);

        let c = make_blobs(4, 8, 10, 0.1, 4).unwrap();
        assert_ne!(a.train.features.data(), c.train.features.data());
    }

    #[test]
    fn blobs_reject_bad_arguments() {
        assert!(matches!(
            make_blobs(2, 8, 10, 0.1, 0),
            Err(Error::InvalidClassCount(2))
        ));
        assert!(make_blobs(3, 8, 10, 0.0, 0).is_err());
        assert!(make_blobs(3, 8, 0, 0.1, 0).is_err());
    }

    fn write_idx_fixture(
        dir: &Path,
        count: u32,
        rows: u32,
        cols: u32,
        label_count: u32,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let images_path = dir.join("images.idx");
        let labels_path = dir.join("labels.idx");
        let mut f = fs::File::create(&images_path).unwrap();
        f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&count.to_be_bytes()).unwrap();
        f.write_all(&rows.to_be_bytes()).unwrap();
        f.write_all(&cols.to_be_bytes()).unwrap();
        let pixels = (count * rows * cols) as usize;
        let body: Vec<u8> = (0..pixels).map(|i| (i % 256) as u8).collect();
        f.write_all(&body).unwrap();

        let mut f = fs::File::create(&labels_path).unwrap();
        f.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&label_count.to_be_bytes()).unwrap();
        let body: Vec<u8> = (0..label_count).map(|i| (i % 10) as u8).collect();
        f.write_all(&body).unwrap();
        (images_path, labels_path)
    }

    #[test]
    fn idx_fixture_round_trip() {
        // hand-built fixture: 4 images of 28x28
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_fixture(dir.path(), 4, 28, 28, 4);
        let ds = load_idx(&images, &labels).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.input_dim(), 784);
        assert_eq!(ds.labels, vec![0, 1, 2, 3]);
        // pixel scaling: byte value 255 maps to 1.0
        assert!((ds.features.get(0, 255) - 1.0).abs() < 1e-15);
        assert_eq!(ds.features.get(0, 0), 0.0);
    }

    #[test]
    fn idx_detects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_fixture(dir.path(), 4, 2, 2, 5);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::CountMismatch {
                images: 4,
                labels: 5
            })
        ));
    }

    #[test]
    fn idx_detects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = write_idx_fixture(dir.path(), 2, 2, 2, 2);

        let mut bytes = fs::read(&images).unwrap();
        bytes[3] = 0x99;
        let bad = dir.path().join("bad.idx");
        fs::write(&bad, &bytes).unwrap();
        assert!(matches!(
            load_idx(&bad, &labels),
            Err(Error::FormatError(_))
        ));

        let bytes = fs::read(&images).unwrap();
        let truncated = dir.path().join("short.idx");
        fs::write(&truncated, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            load_idx(&truncated, &labels),
            Err(Error::FormatError(_))
        ));
    }

    #[test]
    fn all_zero_image_stays_zero() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("z.idx");
        let labels_path = dir.path().join("zl.idx");
        let mut f = fs::File::create(&images_path).unwrap();
        f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&[0u8; 4]).unwrap();
        let mut f = fs::File::create(&labels_path).unwrap();
        f.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&[7u8]).unwrap();
        let ds = load_idx(&images_path, &labels_path).unwrap();
        assert!(ds.features.data().iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels, vec![7]);
    }
}
