//! Procedural four-class "brain scan" dataset with exact lesion masks.
//!
//! Class 0 is a textured ellipse with no lesion. Classes 1 to 3 add a lesion
//! that differs by position, size and intensity profile:
//! 1 = bright peripheral blob, 2 = irregular mid-intensity multi-lobe blob,
//! 3 = small bright central blob.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg32;

use super::manifest::{DatasetManifest, ManifestRow, Split};
use super::pgm::{to_u8, GrayImage};
use crate::error::{Error, Result};

pub const CLASS_NAMES: [&str; 4] = ["healthy", "peripheral", "multilobe", "central"];
pub const NOISE_SIGMA: f64 = 0.05;
pub const MIN_SAMPLES: usize = 40;
const SPLIT_STREAM: u64 = u64::MAX;

/// Rendered sample: intensities in `[0, 1]` and a 0/1 lesion mask.
#[derive(Clone, Debug)]
pub struct Rendered {
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
}

struct Disc {
    cx: f64,
    cy: f64,
    r: f64,
}

impl Disc {
    fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).powi(2) + (y - self.cy).powi(2) <= self.r * self.r
    }

    /// 1 at the centre, 0 at the rim.
    fn depth(&self, x: f64, y: f64) -> f64 {
        1.0 - ((x - self.cx).powi(2) + (y - self.cy).powi(2)).sqrt() / self.r
    }
}

/// Point at polar `(angle, frac)` relative to the brain ellipse.
fn on_ellipse(cx: f64, cy: f64, ax: f64, ay: f64, angle: f64, frac: f64) -> (f64, f64) {
    (cx + frac * ax * angle.cos(), cy + frac * ay * angle.sin())
}

/// Renders one sample of class `label` at `size × size`.
pub fn render(label: usize, size: usize, rng: &mut Pcg32) -> Rendered {
    let s = size as f64;
    let cx = s / 2.0 + rng.random_range(-0.03..0.03) * s;
    let cy = s / 2.0 + rng.random_range(-0.03..0.03) * s;
    let ax = rng.random_range(0.37..0.42) * s;
    let ay = rng.random_range(0.41..0.46) * s;
    let base = rng.random_range(0.28..0.36);
    let (fx, fy) = (rng.random_range(0.4..0.9), rng.random_range(0.4..0.9));
    #[allow(clippy::approx_constant)]
    let (px, py) = (rng.random_range(0.0..6.28), rng.random_range(0.0..6.28));
    let tau = std::f64::consts::TAU;

    let lesion: Vec<Disc> = match label {
        1 => {
            let angle = rng.random_range(0.0..tau);
            let (lx, ly) = on_ellipse(cx, cy, ax, ay, angle, rng.random_range(0.6..0.7));
            vec![Disc {
                cx: lx,
                cy: ly,
                r: rng.random_range(0.15..0.2) * s,
            }]
        }
        2 => {
            let angle = rng.random_range(0.0..tau);
            let (mx, my) = on_ellipse(cx, cy, ax, ay, angle, rng.random_range(0.25..0.45));
            let turn = rng.random_range(0.0..tau);
            (0..3)
                .map(|k| {
                    let a = turn + k as f64 * tau / 3.0 + rng.random_range(-0.4..0.4);
                    let d = rng.random_range(0.05..0.1) * s;
                    Disc {
                        cx: mx + d * a.cos(),
                        cy: my + d * a.sin(),
                        r: rng.random_range(0.08..0.12) * s,
                    }
                })
                .collect()
        }
        3 => vec![Disc {
            cx: cx + rng.random_range(-0.08..0.08) * s,
            cy: cy + rng.random_range(-0.08..0.08) * s,
            r: rng.random_range(0.11..0.14) * s,
        }],
        _ => Vec::new(),
    };
    let lesion_level = match label {
        1 => rng.random_range(0.85..0.95),
        2 => rng.random_range(0.58..0.66),
        _ => rng.random_range(0.9..1.0),
    };

    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut image = vec![0f32; size * size];
    let mut mask = vec![0u8; size * size];
    for r in 0..size {
        for c in 0..size {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let rho = ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2);
            let mut v = 0.0;
            if rho <= 1.0 {
                v = base + 0.07 * (fx * x + px).sin() * (fy * y + py).sin();
                if rho > 0.8 {
                    // brighter rim
                    v += 0.18;
                }
            }
            let inside: Vec<&Disc> = lesion.iter().filter(|d| d.contains(x, y)).collect();
            if !inside.is_empty() {
                mask[r * size + c] = 1;
                v = match label {
                    2 => lesion_level + 0.08 * (1.7 * x + 0.9 * y).sin(),
                    3 => lesion_level - 0.15 * (1.0 - inside[0].depth(x, y)),
                    _ => lesion_level,
                };
            }
            v += noise.sample(rng);
            image[r * size + c] = v.clamp(0.0, 1.0) as f32;
        }
    }
    Rendered { image, mask }
}

/// Per-class stratified 70/15/15 assignment. Every class must receive at
/// least one sample in every split.
pub fn allocate_splits(labels: &[usize], num_classes: usize, rng: &mut Pcg32) -> Result<Vec<Split>> {
    let n = labels.len();
    let target = |frac: f64| (frac * n as f64).round() as usize;
    let (n_val, n_test) = (target(0.15), target(0.15));
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut val: Vec<usize> = by_class.iter().map(|m| m.len() * 15 / 100).collect();
    let mut test = val.clone();
    let mut k = 0;
    while val.iter().sum::<usize>() < n_val {
        let c = k % num_classes;
        if val[c] + test[c] + 1 < by_class[c].len() {
            val[c] += 1;
        }
        k += 1;
        if k > n_val * num_classes + num_classes {
            break;
        }
    }
    k = 0;
    while test.iter().sum::<usize>() < n_test {
        let c = num_classes - 1 - k % num_classes;
        if val[c] + test[c] + 1 < by_class[c].len() {
            test[c] += 1;
        }
        k += 1;
        if k > n_test * num_classes + num_classes {
            break;
        }
    }
    let mut splits = vec![Split::Train; n];
    for (c, members) in by_class.iter_mut().enumerate() {
        if val[c] == 0 || test[c] == 0 || val[c] + test[c] >= members.len() {
            return Err(Error::Data(format!(
                "{n} samples cannot populate every split for class {c} ({} members)",
                members.len()
            )));
        }
        // Fisher-Yates with the split stream
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        for &i in &members[..val[c]] {
            splits[i] = Split::Val;
        }
        for &i in &members[val[c]..val[c] + test[c]] {
            splits[i] = Split::Test;
        }
    }
    Ok(splits)
}

/// Writes `n` image/mask PGM pairs plus `manifest.csv` and `classes.txt`
/// under `out_dir`. Sample `i` has label `i mod 4` and is rendered from a
/// PCG32 stream `(seed, i)`.
pub fn generate_synthetic(out_dir: &Path, n: usize, size: usize, seed: u64) -> Result<DatasetManifest> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    if size == 0 || !size.is_multiple_of(8) {
        return Err(Error::InvalidArgument(format!("image size {size} must be a positive multiple of 8")));
    }
    let k = CLASS_NAMES.len();
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let splits = allocate_splits(&labels, k, &mut Pcg32::new(seed, SPLIT_STREAM))?;
    for sub in ["images", "masks"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let width = n.to_string().len().max(4);
    let mut rows = Vec::with_capacity(n);
    for (i, (&label, &split)) in labels.iter().zip(&splits).enumerate() {
        let mut rng = Pcg32::new(seed, i as u64);
        let sample = render(label, size, &mut rng);
        let image = format!("images/{i:0width$}.pgm");
        let mask = format!("masks/{i:0width$}.pgm");
        GrayImage::new(size, size, sample.image.iter().map(|&v| to_u8(v)).collect())?.write(&out_dir.join(&image))?;
        GrayImage::new(size, size, sample.mask.iter().map(|&m| m * 255).collect())?.write(&out_dir.join(&mask))?;
        rows.push(ManifestRow {
            image,
            mask,
            label,
            split,
        });
    }
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        rows,
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    manifest.write()?;
    Ok(manifest)
}
