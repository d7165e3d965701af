//! The compositional degradation chain: Gaussian blur, additive white
//! Gaussian noise, 8-bit quantization and JPEG compression, always applied in
//! that order.

mod blur;
mod jpeg;
mod noise;

use serde::{Deserialize, Serialize};

pub use blur::{apply_blur, gaussian_kernel, GaussianKernel};
pub use jpeg::{apply_jpeg, jpeg_quant_tables, QuantTables, CHROMA_BASE, LUMA_BASE};
pub use noise::apply_awgn;

use crate::error::{Error, Result};
use crate::image::Image;

pub const SIGMA_MAX: f64 = 3.5;
pub const LAMBDA_MAX: f64 = 55.0;
pub const QUALITY_MIN: u8 = 5;
pub const QUALITY_MAX: u8 = 100;

/// Seed for every stochastic draw in the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    /// Deterministic child seed for stream `index` (splitmix64 finalizer).
    pub fn derive(self, index: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

/// Degradation parameters for one image or patch.
///
/// `sigma` is the blur standard deviation in pixels, `lambda` the noise
/// standard deviation on the 0–255 scale, and `jpeg_quality` the JPEG quality
/// factor (`None` when the image is left uncompressed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub sigma: f64,
    pub lambda: f64,
    pub jpeg_quality: Option<u8>,
}

impl DegradationSpec {
    pub fn new(sigma: f64, lambda: f64, jpeg_quality: Option<u8>) -> Result<Self> {
        let spec = DegradationSpec {
            sigma,
            lambda,
            jpeg_quality,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn clean() -> Self {
        DegradationSpec {
            sigma: 0.0,
            lambda: 0.0,
            jpeg_quality: None,
        }
    }

    pub fn jpeg_applied(&self) -> bool {
        self.jpeg_quality.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=SIGMA_MAX).contains(&self.sigma) {
            return Err(Error::invalid(format!(
                "sigma {} outside [0, {SIGMA_MAX}]",
                self.sigma
            )));
        }
        if !(0.0..=LAMBDA_MAX).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda {} outside [0, {LAMBDA_MAX}]",
                self.lambda
            )));
        }
        if let Some(q) = self.jpeg_quality {
            if !(QUALITY_MIN..=QUALITY_MAX).contains(&q) {
                return Err(Error::invalid(format!(
                    "JPEG quality {q} outside [{QUALITY_MIN}, {QUALITY_MAX}]"
                )));
            }
        }
        Ok(())
    }
}

/// Blur, then noise, then 8-bit quantization, then JPEG when requested.
pub fn degrade(img: &Image, spec: &DegradationSpec, seed: Seed) -> Result<Image> {
    spec.validate()?;
    let blurred = apply_blur(img, spec.sigma)?;
    let noisy = apply_awgn(&blurred, spec.lambda, seed)?;
    let quantized = noisy.quantize();
    match spec.jpeg_quality {
        Some(q) => apply_jpeg(&quantized, q),
        None => Ok(quantized),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn spec_ranges() {
        assert!(DegradationSpec::new(3.5, 55.0, Some(5)).is_ok());
        assert!(DegradationSpec::new(3.6, 0.0, None).is_err());
        assert!(DegradationSpec::new(0.0, -1.0, None).is_err());
        assert!(DegradationSpec::new(0.0, 0.0, Some(4)).is_err());
        assert!(DegradationSpec::new(0.0, 0.0, Some(101)).is_err());
        assert!(DegradationSpec::new(f64::NAN, 0.0, None).is_err());
    }

    #[test]
    fn identity_chain_is_quantization() {
        let img = synth::scene(Seed(3), 24, 20);
        let out = degrade(&img, &DegradationSpec::clean(), Seed(9)).unwrap();
        assert_eq!(out, img.quantize());
    }

    #[test]
    fn chain_matches_manual_composition() {
        let img = synth::scene(Seed(5), 30, 26);
        let spec = DegradationSpec::new(1.5, 25.0, Some(50)).unwrap();
        let seed = Seed(77);
        let manual = apply_jpeg(
            &apply_awgn(&apply_blur(&img, 1.5).unwrap(), 25.0, seed)
                .unwrap()
                .quantize(),
            50,
        )
        .unwrap();
        assert_eq!(degrade(&img, &spec, seed).unwrap(), manual);
    }

    #[test]
    fn derived_seeds_differ() {
        let s = Seed(1);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(4), Seed(1).derive(4));
        assert_ne!(Seed(2).derive(0), s.derive(0));
    }
}
