use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{clamp_unit, Image};

use super::{Seed, LAMBDA_MAX};

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `lambda/255`
/// and clamps into `[0, 1]`.
pub fn apply_awgn(img: &Image, lambda: f64, seed: Seed) -> Result<Image> {
    if !(0.0..=LAMBDA_MAX).contains(&lambda) {
        return Err(Error::invalid(format!(
            "noise level {lambda} outside [0, {LAMBDA_MAX}]"
        )));
    }
    if lambda == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, lambda / 255.0)
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let data = img
        .data()
        .iter()
        .map(|&v| clamp_unit((f64::from(v) + normal.sample(&mut rng)) as f32))
        .collect();
    Image::new(img.height(), img.width(), data)
}
