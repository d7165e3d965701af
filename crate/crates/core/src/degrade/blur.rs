use crate::error::{Error, Result};
use crate::image::{clamp_unit, Image, CHANNELS};

use super::SIGMA_MAX;

/// Below this the kernel collapses to a delta.
const SIGMA_EPS: f64 = 1e-6;

/// Square, odd-sized, normalized 2-D Gaussian truncated at radius ⌈3σ⌉.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    radius: usize,
    values: Vec<f64>,
}

impl GaussianKernel {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(0.0..=SIGMA_MAX).contains(&sigma) {
        return Err(Error::invalid(format!(
            "blur sigma {sigma} outside [0, {SIGMA_MAX}]"
        )));
    }
    Ok(())
}

fn radius_for(sigma: f64) -> usize {
    if sigma < SIGMA_EPS {
        0
    } else {
        (3.0 * sigma).ceil() as usize
    }
}

pub fn gaussian_kernel(sigma: f64) -> Result<GaussianKernel> {
    check_sigma(sigma)?;
    let radius = radius_for(sigma);
    if radius == 0 {
        return Ok(GaussianKernel {
            radius,
            values: vec![1.0],
        });
    }
    let size = 2 * radius + 1;
    let r = radius as i64;
    let denom = 2.0 * sigma * sigma;
    let mut values = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            values.push((-((dx * dx + dy * dy) as f64) / denom).exp());
        }
    }
    let sum: f64 = values.iter().sum();
    for v in &mut values {
        *v /= sum;
    }
    Ok(GaussianKernel { radius, values })
}

/// Normalized 1-D factor of the truncated Gaussian. The 2-D kernel is its
/// outer product, so filtering rows then columns is the same operator.
fn gaussian_1d(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / denom).exp()).collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Per-channel Gaussian filtering with edge replication at the borders.
pub fn apply_blur(img: &Image, sigma: f64) -> Result<Image> {
    check_sigma(sigma)?;
    let radius = radius_for(sigma);
    if radius == 0 {
        return Ok(img.clone());
    }
    let taps = gaussian_1d(sigma, radius);
    let (h, w) = (img.height(), img.width());
    let r = radius as isize;
    let clamp_idx = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut out = Vec::with_capacity(CHANNELS * h * w);
    let mut rows = vec![0.0f64; h * w];
    for c in 0..CHANNELS {
        let plane = img.plane(c);
        for y in 0..h {
            let line = &plane[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let sx = clamp_idx(x as isize + k as isize - r, w);
                    acc += t * f64::from(line[sx]);
                }
                rows[y * w + x] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let sy = clamp_idx(y as isize + k as isize - r, h);
                    acc += t * rows[sy * w + x];
                }
                out.push(clamp_unit(acc as f32));
            }
        }
    }
    Image::new(h, w, out)
}
