//! In-memory labeled datasets, synthetic blob generation, and the CIFAR-10
//! binary loader.

use crate::error::{Error, Result};
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;

/// A dense labeled dataset: `len x dims` features (row-major) and one class
/// id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dims: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dims: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if dims == 0 || num_classes == 0 {
            return Err(Error::Domain(
                "dims and num_classes must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::Dimension {
                expected: labels.len() * dims,
                got: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::Domain(format!(
                "label {bad} out of range 0..{num_classes}"
            )));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            dims,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features_of(&self, sample: usize) -> &[f64] {
        &self.features[sample * self.dims..(sample + 1) * self.dims]
    }

    pub fn label_of(&self, sample: usize) -> usize {
        self.labels[sample]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Materialize a subset by sample indices (keeps their order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &ix in indices {
            if ix >= self.len() {
                return Err(Error::Domain(format!("sample index {ix} out of range")));
            }
            features.extend_from_slice(self.features_of(ix));
            labels.push(self.labels[ix]);
        }
        Dataset::new(features, labels, self.dims, self.num_classes)
    }
}

/// Generate isotropic unit-variance Gaussian blobs, one per class.
///
/// Class means are placed so the pairwise distance between them equals
/// `separation` (in units of the blob standard deviation): on a scaled
/// orthogonal frame when `dims >= num_classes`, otherwise on random
/// directions of the same radius. `separation = 0` collapses all classes
/// onto the same distribution.
pub fn gen_synthetic(
    num_classes: usize,
    dims: usize,
    samples_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || dims == 0 || samples_per_class == 0 {
        return Err(Error::Domain(
            "classes, dims and samples_per_class must be positive".into(),
        ));
    }
    if separation < 0.0 || !separation.is_finite() {
        return Err(Error::Domain(format!(
            "separation must be >= 0, got {separation}"
        )));
    }

    let mut rng = rng::derive_rng(seed, "synthetic-data", &[]);
    let radius = separation / std::f64::consts::SQRT_2;

    let mut means = vec![vec![0.0; dims]; num_classes];
    if dims >= num_classes {
        for (class, mean) in means.iter_mut().enumerate() {
            mean[class] = radius;
        }
    } else {
        for mean in &mut means {
            let mut direction: Vec<f64> =
                (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm: f64 = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm > 0.0 {
                for d in &mut direction {
                    *d *= radius / norm;
                }
            }
            *mean = direction;
        }
    }

    let total = num_classes * samples_per_class;
    let mut features = Vec::with_capacity(total * dims);
    let mut labels = Vec::with_capacity(total);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..samples_per_class {
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(m + noise);
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, dims, num_classes)
}

const CIFAR_RECORD_BYTES: usize = 3073;
const CIFAR_PIXELS: usize = 3072;
const CIFAR_CLASSES: usize = 10;

/// Load CIFAR-10 binary data.
///
/// Every record is exactly 3073 bytes: one label byte in 0..=9 followed by
/// 3072 pixel bytes (3 channels x 32 x 32, channel-planar, row-major).
/// Pixels are scaled to [0, 1]. `path` may be a single `.bin` file or a
/// directory, in which case all `*.bin` files are loaded in lexicographic
/// order and concatenated.
pub fn load_cifar10_bin(path: &Path) -> Result<Dataset> {
    let files: Vec<std::path::PathBuf> = if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(Error::Format(format!(
                "no .bin files in {}",
                path.display()
            )));
        }
        entries
    } else {
        vec![path.to_path_buf()]
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for file in &files {
        let bytes = std::fs::read(file).map_err(|e| Error::Io {
            path: file.display().to_string(),
            source: e,
        })?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(Error::Format(format!(
                "{}: length {} is not a multiple of {CIFAR_RECORD_BYTES}",
                file.display(),
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = record[0] as usize;
            if label >= CIFAR_CLASSES {
                return Err(Error::Format(format!(
                    "{}: label byte {label} out of range 0..=9",
                    file.display()
                )));
            }
            labels.push(label);
            features.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    Dataset::new(features, labels, CIFAR_PIXELS, CIFAR_CLASSES)
}

/// Debug export: `label,f0,f1,...` per sample.
pub fn write_dataset_csv<W: Write>(data: &Dataset, writer: &mut W) -> std::io::Result<()> {
    for sample in 0..data.len() {
        write!(writer, "{}", data.label_of(sample))?;
        for f in data.features_of(sample) {
            write!(writer, ",{f}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
