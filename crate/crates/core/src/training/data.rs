//! Dataset ingestion, patch extraction, dihedral augmentation and on-the-fly
//! batch synthesis.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::AttributeMap;
use crate::degrade::{degrade, DegradationSpec, Seed, LAMBDA_MAX, QUALITY_MAX, QUALITY_MIN, SIGMA_MAX};
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::network::NetworkKind;
use crate::tensor::{Shape, Tensor};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pnm"];

/// Loads every PNG/PPM file in `dir`, sorted by file name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Dataset {
            reason: format!("no images found in {}", dir.display()),
            files: Vec::new(),
        });
    }
    let mut images = Vec::with_capacity(paths.len());
    let mut bad = Vec::new();
    for path in paths {
        match Image::load(&path) {
            Ok(img) => images.push(img),
            Err(_) => bad.push(path),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Dataset {
            reason: "unreadable images".to_string(),
            files: bad,
        });
    }
    Ok(images)
}

/// `size × size` crop whose top-left corner is `(x, y)`.
pub fn extract_patch(img: &Image, x: usize, y: usize, size: usize) -> Result<Image> {
    if size == 0 || x + size > img.width() || y + size > img.height() {
        return Err(Error::invalid(format!(
            "patch {size}x{size} at ({x}, {y}) exceeds {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(Image::from_fn(size, size, |c, py, px| img.get(c, y + py, x + px)))
}

fn rotate90(img: &Image) -> Image {
    let n = img.height();
    Image::from_fn(n, n, |c, y, x| img.get(c, n - 1 - x, y))
}

fn mirror(img: &Image) -> Image {
    let n = img.width();
    Image::from_fn(img.height(), n, |c, y, x| img.get(c, y, n - 1 - x))
}

/// The eight dihedral variants: rotations by 0°, 90°, 180° and 270°, then the
/// same rotations of the horizontal mirror.
pub fn augment8(patch: &Image) -> Result<[Image; 8]> {
    if patch.height() != patch.width() {
        return Err(Error::invalid(format!(
            "augmentation needs a square patch, got {}x{}",
            patch.width(),
            patch.height()
        )));
    }
    let r0 = patch.clone();
    let r1 = rotate90(&r0);
    let r2 = rotate90(&r1);
    let r3 = rotate90(&r2);
    let m0 = mirror(patch);
    let m1 = rotate90(&m0);
    let m2 = rotate90(&m1);
    let m3 = rotate90(&m2);
    Ok([r0, r1, r2, r3, m0, m1, m2, m3])
}

/// Sampling ranges for training degradations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationRanges {
    pub sigma_max: f64,
    pub lambda_max: f64,
    pub quality_min: u8,
    pub quality_max: u8,
    pub no_jpeg_probability: f64,
}

impl Default for DegradationRanges {
    fn default() -> Self {
        DegradationRanges {
            sigma_max: SIGMA_MAX,
            lambda_max: LAMBDA_MAX,
            quality_min: QUALITY_MIN,
            quality_max: QUALITY_MAX,
            no_jpeg_probability: 0.10,
        }
    }
}

impl DegradationRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=SIGMA_MAX).contains(&self.sigma_max)
            && (0.0..=LAMBDA_MAX).contains(&self.lambda_max)
            && QUALITY_MIN <= self.quality_min
            && self.quality_min <= self.quality_max
            && self.quality_max <= QUALITY_MAX
            && (0.0..=1.0).contains(&self.no_jpeg_probability);
        if !ok {
            return Err(Error::invalid(format!("invalid degradation ranges {self:?}")));
        }
        Ok(())
    }
}

/// σ and λ uniform over their ranges; JPEG skipped with the configured
/// probability, otherwise an integer quality drawn uniformly.
pub fn sample_spec(rng: &mut impl Rng, ranges: &DegradationRanges) -> DegradationSpec {
    let sigma = rng.random_range(0.0..=ranges.sigma_max);
    let lambda = rng.random_range(0.0..=ranges.lambda_max);
    let jpeg_quality = if rng.random_bool(ranges.no_jpeg_probability) {
        None
    } else {
        Some(rng.random_range(ranges.quality_min..=ranges.quality_max))
    };
    DegradationSpec {
        sigma,
        lambda,
        jpeg_quality,
    }
}

/// One training batch and the degradations that produced it.
#[derive(Debug, Clone)]
pub struct Batch {
    pub input: Tensor,
    pub target: Tensor,
    pub specs: Vec<DegradationSpec>,
}

/// Builds a batch from explicit per-patch specs and noise seeds.
///
/// Estimator batches pair the degraded patch with its constant attribute
/// map; restorer batches feed `[degraded, attributes]` and target the clean
/// patch.
pub fn make_batch_with(kind: NetworkKind, patches: &[Image], draws: &[(DegradationSpec, Seed)]) -> Result<Batch> {
    let first = patches
        .first()
        .ok_or_else(|| Error::invalid("batch needs at least one patch"))?;
    if draws.len() != patches.len() {
        return Err(Error::invalid("one degradation draw per patch required"));
    }
    let (h, w) = (first.height(), first.width());
    let plane = h * w;
    let in_ch = match kind {
        NetworkKind::Estimator => CHANNELS,
        NetworkKind::Restorer => 2 * CHANNELS,
    };
    let n = patches.len();
    let mut input = Vec::with_capacity(n * in_ch * plane);
    let mut target = Vec::with_capacity(n * CHANNELS * plane);
    for (patch, (spec, seed)) in patches.iter().zip(draws) {
        if patch.height() != h || patch.width() != w {
            return Err(Error::invalid("all patches in a batch must share a size"));
        }
        let degraded = degrade(patch, spec, *seed)?;
        let attrs = AttributeMap::constant(spec, h, w)?;
        input.extend_from_slice(degraded.data());
        match kind {
            NetworkKind::Estimator => target.extend_from_slice(attrs.data()),
            NetworkKind::Restorer => {
                input.extend_from_slice(attrs.data());
                target.extend_from_slice(patch.data());
            }
        }
    }
    Ok(Batch {
        input: Tensor::new(Shape::new(n, in_ch, h, w), input)?,
        target: Tensor::new(Shape::new(n, CHANNELS, h, w), target)?,
        specs: draws.iter().map(|(s, _)| *s).collect(),
    })
}

fn draws(rng: &mut impl Rng, count: usize, ranges: &DegradationRanges) -> Vec<(DegradationSpec, Seed)> {
    (0..count)
        .map(|_| {
            let spec = sample_spec(rng, ranges);
            (spec, Seed(rng.random()))
        })
        .collect()
}

/// `(degraded n×3×s×s, attribute targets n×3×s×s)`.
pub fn make_estimator_batch(patches: &[Image], rng: &mut impl Rng, ranges: &DegradationRanges) -> Result<Batch> {
    let d = draws(rng, patches.len(), ranges);
    make_batch_with(NetworkKind::Estimator, patches, &d)
}

/// `([degraded, attributes] n×6×s×s, clean n×3×s×s)`.
pub fn make_restorer_batch(patches: &[Image], rng: &mut impl Rng, ranges: &DegradationRanges) -> Result<Batch> {
    let d = draws(rng, patches.len(), ranges);
    make_batch_with(NetworkKind::Restorer, patches, &d)
}

pub fn make_batch(kind: NetworkKind, patches: &[Image], rng: &mut impl Rng, ranges: &DegradationRanges) -> Result<Batch> {
    match kind {
        NetworkKind::Estimator => make_estimator_batch(patches, rng, ranges),
        NetworkKind::Restorer => make_restorer_batch(patches, rng, ranges),
    }
}

/// Random crops of `size`, each expanded by [`augment8`], truncated to
/// `count` patches.
pub fn sample_patches(images: &[Image], size: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<Image>> {
    let usable: Vec<&Image> = images
        .iter()
        .filter(|img| img.height() >= size && img.width() >= size)
        .collect();
    if usable.is_empty() {
        return Err(Error::Dataset {
            reason: format!("no image is at least {size}x{size}"),
            files: Vec::new(),
        });
    }
    let mut out = Vec::with_capacity(count + 8);
    while out.len() < count {
        let img = usable[rng.random_range(0..usable.len())];
        let x = rng.random_range(0..=img.width() - size);
        let y = rng.random_range(0..=img.height() - size);
        out.extend(augment8(&extract_patch(img, x, y, size)?)?);
    }
    out.truncate(count);
    Ok(out)
}
