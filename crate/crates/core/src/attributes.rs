//! Normalized per-pixel degradation attributes.
//!
//! Channel 0 holds blur strength, channel 1 noise strength and channel 2
//! JPEG strength. When rendered as an image the same order maps onto red,
//! green and blue.

use serde::{Deserialize, Serialize};

use crate::degrade::{DegradationSpec, LAMBDA_MAX, QUALITY_MAX, QUALITY_MIN, SIGMA_MAX};
use crate::error::{Error, Result};
use crate::image::{clamp_unit, Image};
use crate::tensor::{shape_mismatch, Shape, Tensor};

/// Number of degradation types the networks model.
pub const ATTRIBUTE_CHANNELS: usize = 3;

/// JPEG strength of a q = 100 compressed image; anything below half of it
/// decodes as uncompressed.
const JPEG_OFFSET: f64 = 0.1;
const JPEG_SPAN: f64 = 0.9;
const JPEG_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributeChannel {
    Blur = 0,
    Noise = 1,
    Jpeg = 2,
}

impl AttributeChannel {
    pub const ALL: [AttributeChannel; ATTRIBUTE_CHANNELS] = [
        AttributeChannel::Blur,
        AttributeChannel::Noise,
        AttributeChannel::Jpeg,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AttributeChannel::Blur => "blur",
            AttributeChannel::Noise => "noise",
            AttributeChannel::Jpeg => "jpeg",
        }
    }

    /// Display colour used when a map is rendered as RGB.
    pub fn color(self) -> &'static str {
        match self {
            AttributeChannel::Blur => "red",
            AttributeChannel::Noise => "green",
            AttributeChannel::Jpeg => "blue",
        }
    }
}

/// One pixel's normalized strengths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeTriple {
    pub blur: f64,
    pub noise: f64,
    pub jpeg: f64,
}

impl AttributeTriple {
    pub fn as_array(&self) -> [f64; ATTRIBUTE_CHANNELS] {
        [self.blur, self.noise, self.jpeg]
    }

    pub fn from_array(v: [f64; ATTRIBUTE_CHANNELS]) -> Self {
        AttributeTriple {
            blur: v[0],
            noise: v[1],
            jpeg: v[2],
        }
    }
}

/// `(σ/3.5, λ/55, 0.9·(100−q)/100 + 0.1)`, with the JPEG term zero when the
/// image is not compressed.
pub fn encode_spec(spec: &DegradationSpec) -> AttributeTriple {
    let jpeg = match spec.jpeg_quality {
        Some(q) => JPEG_SPAN * (100.0 - f64::from(q)) / 100.0 + JPEG_OFFSET,
        None => 0.0,
    };
    AttributeTriple {
        blur: spec.sigma / SIGMA_MAX,
        noise: spec.lambda / LAMBDA_MAX,
        jpeg,
    }
}

/// Inverse of [`encode_spec`] after clamping each strength into `[0, 1]`.
pub fn decode_attrs(attrs: AttributeTriple) -> DegradationSpec {
    let unit = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let (b, n, c) = (unit(attrs.blur), unit(attrs.noise), unit(attrs.jpeg));
    let jpeg_quality = if c < JPEG_THRESHOLD {
        None
    } else {
        let q = (100.0 - (c - JPEG_OFFSET) * 100.0 / JPEG_SPAN).round();
        Some(q.clamp(f64::from(QUALITY_MIN), f64::from(QUALITY_MAX)) as u8)
    };
    DegradationSpec {
        sigma: SIGMA_MAX * b,
        lambda: LAMBDA_MAX * n,
        jpeg_quality,
    }
}

/// Per-pixel attribute raster, channel-planar `(3, h, w)`. Values are raw and
/// may leave `[0, 1]` when they come straight from the estimation network.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl AttributeMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("attribute map must be at least 1x1"));
        }
        if data.len() != ATTRIBUTE_CHANNELS * height * width {
            return Err(Error::invalid(format!(
                "{width}x{height} attribute map needs {} values, got {}",
                ATTRIBUTE_CHANNELS * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite attribute value"));
        }
        Ok(AttributeMap {
            height,
            width,
            data,
        })
    }

    /// Every pixel carries `encode_spec(spec)`.
    pub fn constant(spec: &DegradationSpec, height: usize, width: usize) -> Result<Self> {
        Self::uniform(encode_spec(spec), height, width)
    }

    pub fn uniform(attrs: AttributeTriple, height: usize, width: usize) -> Result<Self> {
        let plane = height * width;
        let mut data = Vec::with_capacity(ATTRIBUTE_CHANNELS * plane);
        for v in attrs.as_array() {
            data.extend(std::iter::repeat_n(v as f32, plane));
        }
        AttributeMap::new(height, width, data)
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

    pub fn channel(&self, ch: AttributeChannel) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[ch.index() * plane..(ch.index() + 1) * plane]
    }

    pub fn get(&self, ch: AttributeChannel, y: usize, x: usize) -> f32 {
        self.channel(ch)[y * self.width + x]
    }

    pub fn pixel(&self, y: usize, x: usize) -> AttributeTriple {
        AttributeTriple::from_array(AttributeChannel::ALL.map(|c| f64::from(self.get(c, y, x))))
    }

    pub fn same_size(&self, img: &Image) -> bool {
        self.height == img.height() && self.width == img.width()
    }

    pub fn clamped(&self) -> AttributeMap {
        AttributeMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| clamp_unit(v)).collect(),
        }
    }

    /// Mean of each channel.
    pub fn channel_means(&self) -> AttributeTriple {
        let plane = (self.height * self.width) as f64;
        AttributeTriple::from_array(AttributeChannel::ALL.map(|c| {
            self.channel(c).iter().map(|&v| f64::from(v)).sum::<f64>() / plane
        }))
    }

    /// Per-pixel decoded specs, row-major.
    pub fn decode_pixels(&self) -> Vec<DegradationSpec> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(decode_attrs(self.pixel(y, x)));
            }
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            Shape::new(1, ATTRIBUTE_CHANNELS, self.height, self.width),
            self.data.clone(),
        )
    }

    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != ATTRIBUTE_CHANNELS || n >= s.n {
            return Err(Error::invalid(format!(
                "cannot read attribute map {n} from tensor {s}"
            )));
        }
        AttributeMap::new(s.h, s.w, t.item(n).to_vec())
    }
}

/// Per-channel root mean squared error between two maps.
pub fn map_rmse(est: &AttributeMap, truth: &AttributeMap) -> Result<[f64; ATTRIBUTE_CHANNELS]> {
    if est.height != truth.height || est.width != truth.width {
        return Err(shape_mismatch(
            "map_rmse",
            Shape::new(1, ATTRIBUTE_CHANNELS, est.height, est.width),
            Shape::new(1, ATTRIBUTE_CHANNELS, truth.height, truth.width),
        ));
    }
    let plane = (est.height * est.width) as f64;
    Ok(AttributeChannel::ALL.map(|c| {
        let sq: f64 = est
            .channel(c)
            .iter()
            .zip(truth.channel(c))
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
            .sum();
        (sq / plane).sqrt()
    }))
}

/// Renders a map as RGB (red = blur, green = noise, blue = JPEG), clamped
/// into `[0, 1]`.
pub fn map_to_image(map: &AttributeMap) -> Image {
    Image::from_fn(map.height, map.width, |c, y, x| {
        map.get(AttributeChannel::ALL[c], y, x)
    })
    .quantize()
}

pub fn image_to_map(img: &Image) -> AttributeMap {
    AttributeMap {
        height: img.height(),
        width: img.width(),
        data: img.quantize().data().to_vec(),
    }
}
