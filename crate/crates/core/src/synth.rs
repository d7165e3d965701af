//! Procedural test scenes with natural-image-like structure: smooth shading,
//! hard-edged shapes, periodic stripes and multi-octave texture everywhere.
//! Used where no photo corpus is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::degrade::Seed;
use crate::image::Image;

enum Shape {
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Disc { cy: f32, cx: f32, r: f32 },
    Stripes { freq: f32, angle: f32, cy: f32, cx: f32, r: f32 },
}

struct Layer {
    shape: Shape,
    color: [f32; 3],
    alpha: f32,
}

impl Layer {
    fn coverage(&self, y: f32, x: f32) -> Option<f32> {
        match self.shape {
            Shape::Rect { y0, x0, y1, x1 } => (y >= y0 && y < y1 && x >= x0 && x < x1).then_some(1.0),
            Shape::Disc { cy, cx, r } => ((y - cy).powi(2) + (x - cx).powi(2) <= r * r).then_some(1.0),
            Shape::Stripes { freq, angle, cy, cx, r } => {
                if (y - cy).powi(2) + (x - cx).powi(2) > r * r {
                    return None;
                }
                let t = x * angle.cos() + y * angle.sin();
                Some(0.5 + 0.5 * (t * freq).sin())
            }
        }
    }
}

/// Bilinearly interpolated random lattice with `cell`-pixel spacing.
struct ValueNoise {
    cell: f32,
    cols: usize,
    values: Vec<f32>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cell: f32, height: usize, width: usize) -> Self {
        let rows = (height as f32 / cell).ceil() as usize + 2;
        let cols = (width as f32 / cell).ceil() as usize + 2;
        let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        ValueNoise { cell, cols, values }
    }

    fn at(&self, y: f32, x: f32) -> f32 {
        let (gy, gx) = (y / self.cell, x / self.cell);
        let (iy, ix) = (gy.floor() as usize, gx.floor() as usize);
        let (fy, fx) = (gy - iy as f32, gx - ix as f32);
        let v = |r: usize, c: usize| self.values[r * self.cols + c];
        let top = v(iy, ix) * (1.0 - fx) + v(iy, ix + 1) * fx;
        let bottom = v(iy + 1, ix) * (1.0 - fx) + v(iy + 1, ix + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

// (cell size in pixels, amplitude); coarser octaves carry more energy
const OCTAVES: [(f32, f32); 4] = [(1.5, 0.035), (3.0, 0.05), (6.0, 0.07), (12.0, 0.09)];

/// A deterministic `height × width` scene for `seed`.
pub fn scene(seed: Seed, height: usize, width: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let (hf, wf) = (height as f32, width as f32);
    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.85));
    let grad: [f32; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);

    let count = rng.random_range(30..50);
    let layers: Vec<Layer> = (0..count)
        .map(|_| {
            let kind = rng.random_range(0..10);
            let cy = rng.random_range(0.0..hf);
            let cx = rng.random_range(0.0..wf);
            let extent = rng.random_range(0.03..0.25) * hf.max(wf);
            let shape = match kind {
                0..=3 => Shape::Rect {
                    y0: cy - extent * rng.random_range(0.3..1.0),
                    x0: cx - extent * rng.random_range(0.3..1.0),
                    y1: cy + extent * rng.random_range(0.3..1.0),
                    x1: cx + extent * rng.random_range(0.3..1.0),
                },
                4..=7 => Shape::Disc { cy, cx, r: extent },
                _ => Shape::Stripes {
                    freq: rng.random_range(0.4..1.6),
                    angle: rng.random_range(0.0..std::f32::consts::PI),
                    cy,
                    cx,
                    r: extent,
                },
            };
            Layer {
                shape,
                color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
                alpha: rng.random_range(0.6..1.0),
            }
        })
        .collect();

    let texture_gain: f32 = rng.random_range(0.3..1.3);
    // luminance texture plus a weaker independent colour texture
    let luma: Vec<ValueNoise> = OCTAVES.iter().map(|&(cell, _)| ValueNoise::new(&mut rng, cell, height, width)).collect();
    let chroma: Vec<[ValueNoise; 3]> = OCTAVES
        .iter()
        .map(|&(cell, _)| std::array::from_fn(|_| ValueNoise::new(&mut rng, cell, height, width)))
        .collect();

    Image::from_fn(height, width, |c, y, x| {
        let (yf, xf) = (y as f32 / hf.max(1.0), x as f32 / wf.max(1.0));
        let t = xf * angle.cos() + yf * angle.sin();
        let mut v = base[c] + grad[c] * t;
        for layer in &layers {
            if let Some(cov) = layer.coverage(y as f32, x as f32) {
                let a = layer.alpha * cov;
                v = v * (1.0 - a) + layer.color[c] * a;
            }
        }
        let (py, px) = (y as f32, x as f32);
        for (k, &(_, amp)) in OCTAVES.iter().enumerate() {
            v += texture_gain * amp * (luma[k].at(py, px) + 0.3 * chroma[k][c].at(py, px));
        }
        v
    })
}

/// `count` scenes with seeds derived from `seed`.
pub fn scenes(seed: Seed, count: usize, height: usize, width: usize) -> Vec<Image> {
    (0..count)
        .map(|i| scene(seed.derive(i as u64), height, width))
        .collect()
}
