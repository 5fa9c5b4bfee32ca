//! Classification datasets: IDX files, synthetic blobs, and label-skewed
//! user partitions.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassificationDataset {
    /// Feature vectors with entries in `[0, 1]`.
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Per-user lists of sample indices.
    pub partition: Vec<Vec<usize>>,
}

impl ClassificationDataset {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: samples.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|s| s.len() != first.len()) {
                return Err(Error::DimensionMismatch("ragged feature vectors".into()));
            }
        }
        Ok(ClassificationDataset {
            samples,
            labels,
            partition: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&c| c + 1)
    }

    /// Moves a random `fraction` of the samples into a second dataset.
    /// Partitions are dropped from both halves.
    pub fn split_holdout<R: Rng + ?Sized>(
        &self,
        fraction: f64,
        rng: &mut R,
    ) -> Result<(ClassificationDataset, ClassificationDataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let held = (fraction * self.len() as f64).round() as usize;
        let pick = |idx: &[usize]| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            ClassificationDataset::new(
                idx.iter().map(|&i| self.samples[i].clone()).collect(),
                idx.iter().map(|&i| self.labels[i]).collect(),
            )
        };
        Ok((pick(&order[held..])?, pick(&order[..held])?))
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(path.to_path_buf()))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Reads an IDX image file and its label file. Pixels are scaled by 1/255;
/// `limit` keeps only the first samples.
pub fn read_idx(
    images_path: &Path,
    labels_path: &Path,
    limit: Option<usize>,
) -> Result<ClassificationDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    check_magic(&images, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(&labels, IDX_LABELS_MAGIC, labels_path)?;
    let n_images = read_u32(&images, 4, images_path)? as usize;
    let rows = read_u32(&images, 8, images_path)? as usize;
    let cols = read_u32(&images, 12, images_path)? as usize;
    let n_labels = read_u32(&labels, 4, labels_path)? as usize;
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let pixels = rows * cols;
    if images.len() < 16 + n_images * pixels {
        return Err(Error::TruncatedFile(images_path.to_path_buf()));
    }
    if labels.len() < 8 + n_labels {
        return Err(Error::TruncatedFile(labels_path.to_path_buf()));
    }
    let n = limit.map_or(n_images, |k| k.min(n_images));
    let samples = (0..n)
        .map(|i| {
            images[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect()
        })
        .collect();
    let labels = labels[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    ClassificationDataset::new(samples, labels)
}

/// Writes raw images (each `rows × cols` bytes) and labels in IDX format.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    images: &[Vec<u8>],
    rows: u32,
    cols: u32,
    labels: &[u8],
) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let pixels = (rows * cols) as usize;
    let mut out = Vec::with_capacity(16 + images.len() * pixels);
    for word in [IDX_IMAGES_MAGIC, images.len() as u32, rows, cols] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        if img.len() != pixels {
            return Err(Error::DimensionMismatch(format!(
                "image of {} bytes, expected {pixels}",
                img.len()
            )));
        }
        out.extend_from_slice(img);
    }
    fs::write(images_path, out)?;
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(labels_path, out)?;
    Ok(())
}

/// Splits the samples into `users` contiguous chunks (sizes differ by at
/// most one) after sorting by `skew · label + (1 − skew) · C · uniform`.
/// `skew = 0` is a random equal split; `skew = 1` groups users by class.
pub fn partition_label_skew<R: Rng + ?Sized>(
    labels: &[usize],
    users: usize,
    skew: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if users == 0 || users > labels.len() {
        return Err(Error::TooManyUsers {
            users,
            samples: labels.len(),
        });
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(Error::Domain(format!("skew {skew} outside [0, 1]")));
    }
    let classes = labels.iter().max().map_or(1, |&c| c + 1) as f64;
    let mut keyed: Vec<(f64, usize)> = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let noise: f64 = rng.random();
            (skew * y as f64 + (1.0 - skew) * classes * noise, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = labels.len();
    let mut start = 0;
    Ok((0..users)
        .map(|u| {
            let size = n / users + usize::from(u < n % users);
            let chunk = keyed[start..start + size].iter().map(|&(_, i)| i).collect();
            start += size;
            chunk
        })
        .collect())
}

/// Gaussian blobs clamped to `[0, 1]^dim`, one centre per class.
pub fn make_synthetic_classification<R: Rng + ?Sized>(
    samples: usize,
    dim: usize,
    classes: usize,
    spread: f64,
    rng: &mut R,
) -> Result<ClassificationDataset> {
    if dim == 0 || classes < 2 {
        return Err(Error::Domain(format!("need dim ≥ 1 and ≥ 2 classes, got {dim}, {classes}")));
    }
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let mut xs = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for i in 0..samples {
        let y = i % classes;
        let x = centres[y]
            .iter()
            .map(|&c| (c + spread * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0))
            .collect();
        xs.push(x);
        ys.push(y);
    }
    ClassificationDataset::new(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        let mut bytes = Vec::new();
        for w in [0x803u32, 2, 2, 2] {
            bytes.extend_from_slice(&w.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4]);
        fs::write(&img, bytes).unwrap();
        let mut bytes = Vec::new();
        for w in [0x801u32, 2] {
            bytes.extend_from_slice(&w.to_be_bytes());
        }
        bytes.extend_from_slice(&[7, 3]);
        fs::write(&lab, bytes).unwrap();
        let ds = read_idx(&img, &lab, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[0], vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels, vec![7, 3]);
        assert!(read_idx(&img, &lab, Some(0)).unwrap().is_empty());
        assert_eq!(read_idx(&img, &lab, Some(1)).unwrap().labels, vec![7]);
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&img, &lab, &[vec![1, 2, 3, 4]], 2, 2, &[1]).unwrap();
        // swap the files: magic numbers no longer match
        assert!(matches!(read_idx(&lab, &img, None), Err(Error::BadMagic { .. })));
        let mut bytes = fs::read(&img).unwrap();
        bytes.pop();
        fs::write(&img, &bytes).unwrap();
        assert!(matches!(read_idx(&img, &lab, None), Err(Error::TruncatedFile(_))));
        write_idx(&img, &lab, &[vec![1, 2, 3, 4]], 2, 2, &[1]).unwrap();
        let mut labels = Vec::new();
        for w in [0x801u32, 2] {
            labels.extend_from_slice(&w.to_be_bytes());
        }
        labels.extend_from_slice(&[0, 1]);
        fs::write(&lab, labels).unwrap();
        assert!(matches!(read_idx(&img, &lab, None), Err(Error::CountMismatch { images: 1, labels: 2 })));
    }

    #[test]
    fn unskewed_split_is_even() {
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let parts = partition_label_skew(&labels, 2, 0.0, &mut stream(1, Domain::Partition, 0, 0)).unwrap();
        assert_eq!(parts[0].len(), 5);
        assert_eq!(parts[1].len(), 5);
        assert!(partition_label_skew(&labels, 11, 0.0, &mut stream(1, Domain::Partition, 0, 0)).is_err());
    }

    #[test]
    fn full_skew_separates_classes() {
        let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let parts = partition_label_skew(&labels, 2, 1.0, &mut stream(2, Domain::Partition, 0, 0)).unwrap();
        for part in &parts {
            let ones = part.iter().filter(|&&i| labels[i] == 1).count();
            let major = ones.max(part.len() - ones) as f64;
            assert!(major / part.len() as f64 >= 0.9);
        }
    }
}
