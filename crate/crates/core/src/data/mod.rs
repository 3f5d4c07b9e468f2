//! Dataset generation, ingestion and augmentation.

mod augment;
mod manifest;
mod pgm;
mod synthetic;

pub use augment::Transform;
pub use manifest::{
    default_class_names, resolve_manifest, DatasetManifest, ManifestRow, Split, CLASSES_FILE, MANIFEST_FILE,
};
pub use pgm::{to_u8, GrayImage};
pub use synthetic::{allocate_splits, generate_synthetic, render, Rendered, CLASS_NAMES, MIN_SAMPLES, NOISE_SIGMA};

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Image path as written in the manifest.
    pub id: String,
    /// Row-major `size × size`, values in `[0, 1]`.
    pub image: Vec<f32>,
    /// Binary, same layout as `image`.
    pub mask: Option<Vec<f32>>,
    pub label: usize,
    pub split: Split,
    /// The source image was constant and normalised to all zeros.
    pub constant_image: bool,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub size: usize,
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
}

/// Stacked tensors for a group of samples.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, 1, S, S]`
    pub images: Tensor<f32>,
    /// `[B, 1, S, S]`; `None` if any sample lacks a mask.
    pub masks: Option<Tensor<f32>>,
    pub labels: Vec<usize>,
}

/// Nearest-neighbour resize of a `w × h` plane to `size × size`.
pub fn resize_nearest(src: &[u8], w: usize, h: usize, size: usize) -> Vec<u8> {
    if w == size && h == size {
        return src.to_vec();
    }
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let sr = r * h / size;
        for c in 0..size {
            out.push(src[sr * w + c * w / size]);
        }
    }
    out
}

/// Per-image min-max scaling to `[0, 1]`; a constant image maps to zeros and
/// the second value is `true`.
pub fn min_max(pixels: &[u8]) -> (Vec<f32>, bool) {
    let lo = pixels.iter().copied().min().unwrap_or(0);
    let hi = pixels.iter().copied().max().unwrap_or(0);
    if hi == lo {
        return (vec![0.0; pixels.len()], true);
    }
    let span = (hi - lo) as f32;
    (pixels.iter().map(|&p| (p - lo) as f32 / span).collect(), false)
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    /// Stacks `indices`, applying `transforms[j]` to sample `j` when given.
    pub fn batch(&self, indices: &[usize], transforms: Option<&[Transform]>) -> Result<Batch> {
        let s = self.size;
        let b = indices.len();
        let mut images = Vec::with_capacity(b * s * s);
        let mut masks = Some(Vec::with_capacity(b * s * s));
        let mut labels = Vec::with_capacity(b);
        for (j, &i) in indices.iter().enumerate() {
            let sample = self
                .samples
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("sample index {i} out of range")))?;
            let t = transforms.map_or(Transform::IDENTITY, |ts| ts[j]);
            images.extend(t.apply(&sample.image, s));
            match (&mut masks, &sample.mask) {
                (Some(acc), Some(m)) => acc.extend(t.apply(m, s)),
                _ => masks = None,
            }
            labels.push(sample.label);
        }
        Ok(Batch {
            images: Tensor::from_vec(&[b, 1, s, s], images)?,
            masks: masks.map(|m| Tensor::from_vec(&[b, 1, s, s], m)).transpose()?,
            labels,
        })
    }
}

/// Loads every row of a manifest. Images are resized (nearest neighbour) to
/// `size`, or to the first image's width when `size` is `None`.
pub fn load_dataset(manifest_path: &Path, size: Option<usize>) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let k = manifest.num_classes();
    let mut samples = Vec::with_capacity(manifest.rows.len());
    let mut size = size;
    for row in &manifest.rows {
        let path = manifest.root.join(&row.image);
        let img = GrayImage::read(&path)?;
        let s = *size.get_or_insert(img.width);
        if s == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if row.label >= k {
            return Err(Error::format(&path, format!("label {} out of range for {k} classes", row.label)));
        }
        let (image, constant_image) = min_max(&resize_nearest(&img.pixels, img.width, img.height, s));
        let mask = if row.mask.is_empty() {
            None
        } else {
            let mpath = manifest.root.join(&row.mask);
            let m = GrayImage::read(&mpath)?;
            let half = m.maxval as u16;
            let bin: Vec<f32> = resize_nearest(&m.pixels, m.width, m.height, s)
                .into_iter()
                .map(|p| if 2 * p as u16 >= half { 1.0 } else { 0.0 })
                .collect();
            if row.label == 0 && bin.iter().any(|&v| v > 0.0) {
                return Err(Error::format(&mpath, "healthy (label 0) sample has a non-empty mask"));
            }
            Some(bin)
        };
        samples.push(Sample {
            id: row.image.clone(),
            image,
            mask,
            label: row.label,
            split: row.split,
            constant_image,
        });
    }
    Ok(Dataset {
        size: size.unwrap_or(0),
        class_names: manifest.class_names,
        samples,
    })
}
