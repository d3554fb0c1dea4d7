//! Dataset types, manifest ingestion, preprocessing, and the synthetic
//! generator.

pub mod manifest;
pub mod preprocess;
pub mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stable unique identifier for one example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExampleId(pub String);

impl ExampleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ExampleId {
    fn from(s: &str) -> Self {
        ExampleId(s.to_string())
    }
}

impl From<String> for ExampleId {
    fn from(s: String) -> Self {
        ExampleId(s)
    }
}

/// One example resident in memory: image resized to the working size and
/// scaled to [0,1], not yet standardized.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: ExampleId,
    pub image: Tensor,
    pub label: usize,
}

/// Per-channel standardization statistics, computed from the training split
/// only and frozen for the whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    /// Population mean/std per channel over [3,S,S] tensors. A degenerate
    /// (constant) channel gets std clamped to 1e-6 so standardization stays
    /// finite.
    pub fn compute(images: &[&Tensor]) -> Result<ChannelStats> {
        if images.is_empty() {
            return Err(Error::data("cannot compute channel stats from zero images"));
        }
        let mut sum = [0.0f64; 3];
        let mut sumsq = [0.0f64; 3];
        let mut count = 0usize;
        for img in images {
            let [c, h, w] = *img.shape() else {
                return Err(Error::data(format!(
                    "channel stats want [3,H,W] images, got {:?}",
                    img.shape()
                )));
            };
            if c != 3 {
                return Err(Error::data(format!("channel stats want 3 channels, got {c}")));
            }
            let plane = h * w;
            for ch in 0..3 {
                for &v in &img.data()[ch * plane..(ch + 1) * plane] {
                    sum[ch] += v;
                    sumsq[ch] += v * v;
                }
            }
            count += plane;
        }
        let n = count as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for ch in 0..3 {
            mean[ch] = sum[ch] / n;
            let var = (sumsq[ch] / n - mean[ch] * mean[ch]).max(0.0);
            std[ch] = var.sqrt().max(1e-6);
        }
        Ok(ChannelStats { mean, std })
    }

    /// (x - mean) / std, per channel, in place.
    pub fn standardize(&self, image: &mut Tensor) {
        let plane = image.len() / 3;
        for ch in 0..3 {
            let (m, s) = (self.mean[ch], self.std[ch]);
            for v in &mut image.data_mut()[ch * plane..(ch + 1) * plane] {
                *v = (*v - m) / s;
            }
        }
    }
}

/// A fully loaded dataset: three disjoint splits plus frozen train-split
/// statistics.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub image_size: usize,
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
    pub test: Vec<Example>,
    pub stats: ChannelStats,
}

impl Dataset {
    /// Assemble a dataset from split example lists, computing train stats.
    pub fn from_splits(
        num_classes: usize,
        class_names: Vec<String>,
        image_size: usize,
        train: Vec<Example>,
        eval: Vec<Example>,
        test: Vec<Example>,
    ) -> Result<Dataset> {
        let refs: Vec<&Tensor> = train.iter().map(|e| &e.image).collect();
        let stats = ChannelStats::compute(&refs)?;
        let ds = Dataset {
            num_classes,
            class_names,
            image_size,
            train,
            eval,
            test,
            stats,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Ids unique across all splits, labels in range, shapes consistent.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        let mut dupes = Vec::new();
        let mut bad_labels = Vec::new();
        for ex in self.all_examples() {
            if !seen.insert(ex.id.clone()) {
                dupes.push(ex.id.to_string());
            }
            if ex.label >= self.num_classes {
                bad_labels.push(format!("{} (label {})", ex.id, ex.label));
            }
            let want = [3, self.image_size, self.image_size];
            if ex.image.shape() != want {
                return Err(Error::data(format!(
                    "example {} has shape {:?}, expected {:?}",
                    ex.id,
                    ex.image.shape(),
                    want
                )));
            }
        }
        if !dupes.is_empty() {
            return Err(Error::data(format!("duplicate ids across splits: {}", dupes.join(", "))));
        }
        if !bad_labels.is_empty() {
            return Err(Error::data(format!("labels out of range: {}", bad_labels.join(", "))));
        }
        Ok(())
    }

    pub fn all_examples(&self) -> impl Iterator<Item = &Example> {
        self.train.iter().chain(self.eval.iter()).chain(self.test.iter())
    }

    /// Per-class counts for one split.
    pub fn class_histogram(examples: &[Example], num_classes: usize) -> Vec<usize> {
        let mut h = vec![0usize; num_classes];
        for ex in examples {
            h[ex.label] += 1;
        }
        h
    }
}

/// Load every manifest row into memory, resized to `target_size`. Relative
/// image paths resolve against the manifest's directory.
pub fn load_dataset(manifest_path: &std::path::Path, target_size: usize) -> Result<Dataset> {
    let manifest = manifest::DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(std::path::Path::new("."));
    let mut splits: [Vec<Example>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in &manifest.rows {
        let path = {
            let p = std::path::Path::new(&row.path);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let raw = preprocess::load_image_tensor(&path)?;
        let image = preprocess::resize_bilinear(&raw, target_size, target_size)?;
        let slot = match row.split {
            manifest::Split::Train => 0,
            manifest::Split::Eval => 1,
            manifest::Split::Test => 2,
        };
        splits[slot].push(Example {
            id: row.id.clone(),
            image,
            label: row.label,
        });
    }
    let [train, eval, test] = splits;
    Dataset::from_splits(
        manifest.num_classes(),
        manifest.class_names.clone(),
        target_size,
        train,
        eval,
        test,
    )
}

/// Write a dataset as a manifest plus one tensor file per example under
/// `dir/images/`, loadable again with [`load_dataset`]. Returns the manifest
/// path.
pub fn export_dataset(dataset: &Dataset, dir: &std::path::Path) -> Result<std::path::PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images)?;
    let mut rows = Vec::new();
    let splits = [
        (manifest::Split::Train, &dataset.train),
        (manifest::Split::Eval, &dataset.eval),
        (manifest::Split::Test, &dataset.test),
    ];
    for (split, examples) in splits {
        for ex in examples {
            let file = format!("images/{}.bt", ex.id);
            crate::tensor::save_tensor(&dir.join(&file), &ex.image)?;
            rows.push(manifest::ManifestRow {
                id: ex.id.clone(),
                path: file,
                label: ex.label,
                split,
            });
        }
    }
    let m = manifest::DatasetManifest {
        class_names: dataset.class_names.clone(),
        rows,
    };
    let path = dir.join("manifest.csv");
    m.save(&path)?;
    Ok(path)
}

/// Stack [3,S,S] images into a standardized [N,3,S,S] batch, preserving order.
pub fn standardized_batch(images: &[&Tensor], stats: &ChannelStats) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::data("cannot build a batch from zero images"));
    };
    let shape = first.shape().to_vec();
    let per = first.len();
    let mut data = Vec::with_capacity(images.len() * per);
    for (i, image) in images.iter().enumerate() {
        if image.shape() != shape {
            return Err(Error::data(format!(
                "batch image {i} has shape {:?}, batch expects {:?}",
                image.shape(),
                shape
            )));
        }
        let mut img = (*image).clone();
        stats.standardize(&mut img);
        data.extend_from_slice(img.data());
    }
    let mut full = vec![images.len()];
    full.extend_from_slice(&shape);
    Tensor::from_vec(&full, data)
}
