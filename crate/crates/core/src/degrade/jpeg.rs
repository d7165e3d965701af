//! Baseline JPEG loss simulation: colour conversion, 8×8 DCT, quantization
//! and reconstruction. Entropy coding is lossless and therefore skipped.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

use super::{QUALITY_MAX, QUALITY_MIN};

const BLOCK: usize = 8;

/// Annex K luminance table, row-major.
pub const LUMA_BASE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K chrominance table, row-major.
pub const CHROMA_BASE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTables {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
}

/// Quality-scaled quantization tables (IJG scaling law).
pub fn jpeg_quant_tables(quality: u8) -> Result<QuantTables> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid(format!(
            "JPEG quality {quality} outside [1, 100]"
        )));
    }
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let scaled = |base: &[u16; 64]| {
        let mut out = [0u16; 64];
        for (o, &b) in out.iter_mut().zip(base) {
            *o = ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16;
        }
        out
    };
    Ok(QuantTables {
        luma: scaled(&LUMA_BASE),
        chroma: scaled(&CHROMA_BASE),
    })
}

/// Orthonormal DCT-II basis: `basis[u][x] = α(u)·cos((2x+1)uπ/16)`.
fn dct_basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (u, row) in m.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

pub(crate) fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|x| c[u][x] * block[y * BLOCK + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..BLOCK {
        for u in 0..BLOCK {
            out[v * BLOCK + u] = (0..BLOCK).map(|y| c[v][y] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

pub(crate) fn idct(coefs: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for v in 0..BLOCK {
        for x in 0..BLOCK {
            tmp[v * BLOCK + x] = (0..BLOCK).map(|u| c[u][x] * coefs[v * BLOCK + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y * BLOCK + x] = (0..BLOCK).map(|v| c[v][y] * tmp[v * BLOCK + x]).sum();
        }
    }
    out
}

/// Quantizes and reconstructs one plane whose sides are multiples of 8.
fn roundtrip_plane(plane: &mut [f64], h: usize, w: usize, table: &[u16; 64]) {
    let mut block = [0.0; 64];
    for by in (0..h).step_by(BLOCK) {
        for bx in (0..w).step_by(BLOCK) {
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    block[y * BLOCK + x] = plane[(by + y) * w + bx + x] - 128.0;
                }
            }
            let mut coefs = fdct(&block);
            for (c, &q) in coefs.iter_mut().zip(table) {
                let q = f64::from(q);
                *c = (*c / q).round() * q;
            }
            let rec = idct(&coefs);
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    plane[(by + y) * w + bx + x] = rec[y * BLOCK + x] + 128.0;
                }
            }
        }
    }
}

/// Full-range BT.601 (JFIF) forward transform.
fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0,
    ]
}

fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    [
        y + 1.402 * cr,
        y - 0.344_136 * cb - 0.714_136 * cr,
        y + 1.772 * cb,
    ]
}

fn padded(n: usize) -> usize {
    n.div_ceil(BLOCK) * BLOCK
}

/// Simulates baseline JPEG (4:4:4, no chroma subsampling) at quality `q`.
///
/// The input is first quantized to 8 bits; the output is decoded back to 8
/// bits as a real decoder would.
pub fn apply_jpeg(img: &Image, quality: u8) -> Result<Image> {
    if !(QUALITY_MIN..=QUALITY_MAX).contains(&quality) {
        return Err(Error::invalid(format!(
            "JPEG quality {quality} outside [{QUALITY_MIN}, {QUALITY_MAX}]"
        )));
    }
    let tables = jpeg_quant_tables(quality)?;
    let (h, w) = (img.height(), img.width());
    let (ph, pw) = (padded(h), padded(w));
    let rgb8 = img.quantize();

    // Component planes over the padded grid; padding replicates edge pixels.
    let mut planes = vec![vec![0.0f64; ph * pw]; CHANNELS];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            let px = |c: usize| f64::from(rgb8.get(c, sy, sx)) * 255.0;
            let ycc = rgb_to_ycbcr(px(0).round(), px(1).round(), px(2).round());
            for c in 0..CHANNELS {
                planes[c][y * pw + x] = ycc[c];
            }
        }
    }
    roundtrip_plane(&mut planes[0], ph, pw, &tables.luma);
    roundtrip_plane(&mut planes[1], ph, pw, &tables.chroma);
    roundtrip_plane(&mut planes[2], ph, pw, &tables.chroma);

    let mut out = vec![0.0f32; CHANNELS * h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * pw + x;
            let rgb = ycbcr_to_rgb(planes[0][i], planes[1][i], planes[2][i]);
            for c in 0..CHANNELS {
                let v = rgb[c].round().clamp(0.0, 255.0);
                out[(c * h + y) * w + x] = v as f32 / 255.0;
            }
        }
    }
    Image::new(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::Seed;
    use crate::eval::psnr;
    use crate::synth;

    #[test]
    fn quality_50_gives_base_tables() {
        let t = jpeg_quant_tables(50).unwrap();
        assert_eq!(t.luma, LUMA_BASE);
        assert_eq!(t.chroma, CHROMA_BASE);
    }

    #[test]
    fn quality_100_gives_unit_tables() {
        let t = jpeg_quant_tables(100).unwrap();
        assert!(t.luma.iter().chain(&t.chroma).all(|&v| v == 1));
    }

    #[test]
    fn tables_are_monotone_in_quality() {
        let coarse = jpeg_quant_tables(10).unwrap();
        let fine = jpeg_quant_tables(90).unwrap();
        for i in 0..64 {
            assert!(coarse.luma[i] >= fine.luma[i]);
            assert!(coarse.chroma[i] >= fine.chroma[i]);
        }
        // q = 10: s = 500, luma[0] = (16·500 + 50)/100 = 80
        assert_eq!(coarse.luma[0], 80);
        assert_eq!(jpeg_quant_tables(1).unwrap().luma[0], 255);
    }

    #[test]
    fn table_quality_range() {
        assert!(jpeg_quant_tables(0).is_err());
        assert!(jpeg_quant_tables(101).is_err());
        let img = Image::filled(8, 8, 0.5).unwrap();
        assert!(apply_jpeg(&img, 4).is_err());
        assert!(apply_jpeg(&img, 101).is_err());
    }

    #[test]
    fn dct_roundtrip() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 37) % 255) as f64 - 128.0);
        let back = idct(&fdct(&block));
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
        // DC of a constant block is 8·value
        let flat = [10.0; 64];
        assert!((fdct(&flat)[0] - 80.0).abs() < 1e-9);
    }

    #[test]
    fn constant_gray_survives_any_quality() {
        let gray = Image::filled(16, 24, 128.0 / 255.0).unwrap();
        for q in [5, 10, 25, 50, 75, 95, 100] {
            let out = apply_jpeg(&gray, q).unwrap();
            let err = out
                .data()
                .iter()
                .zip(gray.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max);
            assert!(err <= 2.0 / 255.0 + 1e-6, "q={q}: {err}");
        }
    }

    #[test]
    fn single_basis_block_is_lossless() {
        // Gray block whose luma is 128 + k·Q·basis(u,v): the (u,v)
        // coefficient is an exact multiple of its quantizer step.
        let tables = jpeg_quant_tables(50).unwrap();
        let (u, v) = (2, 1);
        let q = f64::from(tables.luma[v * 8 + u]);
        let mut coefs = [0.0; 64];
        coefs[v * 8 + u] = 4.0 * q;
        let spatial = idct(&coefs);
        let img = Image::from_fn(8, 8, |_, y, x| ((128.0 + spatial[y * 8 + x]) / 255.0) as f32).quantize();
        let out = apply_jpeg(&img, 50).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn lower_quality_loses_more() {
        let img = synth::scene(Seed(11), 48, 40);
        let coarse = psnr(&apply_jpeg(&img, 5).unwrap(), &img).unwrap();
        let fine = psnr(&apply_jpeg(&img, 95).unwrap(), &img).unwrap();
        assert!(coarse < fine, "{coarse} vs {fine}");
    }

    #[test]
    fn non_multiple_of_eight_sizes_are_cropped_back() {
        let img = synth::scene(Seed(2), 13, 21);
        let out = apply_jpeg(&img, 60).unwrap();
        assert_eq!((out.height(), out.width()), (13, 21));
        let tiny = apply_jpeg(&Image::filled(1, 1, 0.2).unwrap(), 30).unwrap();
        assert_eq!((tiny.height(), tiny.width()), (1, 1));
    }
}
