//! Planar RGB images with values in `[0, 1]`, plus PNG/PPM I/O.

use std::io::Cursor;
use std::path::Path;

use ::image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const CHANNELS: usize = 3;

/// RGB image stored channel-planar `(c, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != CHANNELS * height * width {
            return Err(Error::invalid(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                CHANNELS * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "image value {} at {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Image::new(height, width, vec![value; CHANNELS * height * width])
    }

    /// Builds an image from `f(channel, y, x)`, clamping into `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0);
        let mut data = Vec::with_capacity(CHANNELS * height * width);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(clamp_unit(f(c, y, x)));
                }
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    /// Clamps arbitrary finite values into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Image::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let len = self.height * self.width;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Single-item tensor `(1, 3, h, w)`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            Shape::new(1, CHANNELS, self.height, self.width),
            self.data.clone(),
        )
    }

    /// Reads batch item `n` of a 3-channel tensor, clamping into `[0, 1]`.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != CHANNELS || n >= s.n {
            return Err(Error::invalid(format!(
                "cannot read image {n} from tensor {s}"
            )));
        }
        Image::from_clamped(s.h, s.w, t.item(n).to_vec())
    }

    /// Rounds every value onto the 256-level lattice `k/255`.
    pub fn quantize(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| quantize_value(v)).collect(),
        }
    }

    /// 8-bit samples, interleaved RGB.
    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = (self.height, self.width);
        let mut out = RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = out.get_pixel_mut(x as u32, y as u32);
                for c in 0..CHANNELS {
                    px.0[c] = to_u8(self.get(c, y, x));
                }
            }
        }
        out
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Image::from_fn(h, w, |c, y, x| {
            f32::from(img.get_pixel(x as u32, y as u32).0[c]) / 255.0
        })
    }

    /// Decodes any supported format; grayscale and alpha inputs are expanded
    /// or flattened to RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let dynamic = ::image::load_from_memory(bytes)?;
        Ok(Image::from_rgb8(&dynamic.to_rgb8()))
    }

    /// `(width, height)` from the header only, without decoding pixels.
    pub fn probe_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
        let (w, h) = ::image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()?
            .into_dimensions()?;
        Ok((w as usize, h as usize))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb8().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        Image::decode(&bytes)
    }

    /// Writes PNG, or binary PPM (P6) when the extension is `.ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm {
            std::fs::write(path, self.encode_ppm())?;
        } else {
            std::fs::write(path, self.encode_png()?)?;
        }
        Ok(())
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(self.to_rgb8().as_raw());
        out
    }
}

pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

pub(crate) fn quantize_value(v: f32) -> f32 {
    f32::from(to_u8(v)) / 255.0
}
