//! PSNR, blind restoration and the evaluation grids.

use std::fmt::Write as _;

use crate::attributes::{map_rmse, AttributeMap, ATTRIBUTE_CHANNELS};
use crate::degrade::{degrade, DegradationSpec, Seed};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::{forward_estimate, forward_restore, NetworkKind, NetworkWeights};

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`, over all
/// channels jointly. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::invalid(format!(
            "psnr of {}x{} and {}x{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sq: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    let mse = sq / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Anything that produces a raw attribute map for an image.
pub trait AttributeEstimator {
    fn estimate(&self, img: &Image) -> Result<AttributeMap>;
}

impl AttributeEstimator for NetworkWeights {
    fn estimate(&self, img: &Image) -> Result<AttributeMap> {
        forward_estimate(self, img)
    }
}

/// Estimates attributes, clamps them into `[0, 1]` and restores with them.
pub fn blind_restore(
    estimator: &dyn AttributeEstimator,
    restorer: &NetworkWeights,
    img: &Image,
) -> Result<(Image, AttributeMap)> {
    restorer.expect_kind(NetworkKind::Restorer)?;
    let estimated = estimator.estimate(img)?.clamped();
    let restored = forward_restore(restorer, img, &estimated)?;
    Ok((restored, estimated))
}

/// Degradation levels spanned by an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub qualities: Vec<u8>,
}

impl Default for GridAxes {
    /// σ ∈ {0, 1.5, 3}, λ ∈ {0, 25, 55}, q ∈ {100, 50, 10}.
    fn default() -> Self {
        GridAxes {
            sigmas: vec![0.0, 1.5, 3.0],
            lambdas: vec![0.0, 25.0, 55.0],
            qualities: vec![100, 50, 10],
        }
    }
}

impl GridAxes {
    /// Cell specs in σ-major, then λ, then q order.
    pub fn specs(&self) -> Result<Vec<DegradationSpec>> {
        let mut out = Vec::new();
        for &s in &self.sigmas {
            for &l in &self.lambdas {
                for &q in &self.qualities {
                    out.push(DegradationSpec::new(s, l, Some(q))?);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("evaluation grid has no cells"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellMetrics {
    /// Per-channel RMSE (blur, noise, JPEG).
    Attributes([f64; ATTRIBUTE_CHANNELS]),
    Restoration {
        blind: f64,
        nonblind: f64,
        degraded: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub spec: DegradationSpec,
    pub metrics: CellMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalGridResult {
    pub axes: GridAxes,
    pub cells: Vec<GridCell>,
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl EvalGridResult {
    pub fn cell(&self, sigma: f64, lambda: f64, quality: u8) -> Option<&GridCell> {
        self.cells.iter().find(|c| {
            c.spec.sigma == sigma && c.spec.lambda == lambda && c.spec.jpeg_quality == Some(quality)
        })
    }

    /// One row per cell: `sigma,lambda,quality,<metrics…>`.
    pub fn to_csv(&self) -> String {
        let header = match self.cells.first().map(|c| c.metrics) {
            Some(CellMetrics::Restoration { .. }) => "psnr_blind,psnr_nonblind,psnr_degraded",
            _ => "rmse_blur,rmse_noise,rmse_jpeg",
        };
        let mut out = format!("sigma,lambda,quality,{header}\n");
        for cell in &self.cells {
            let values = match cell.metrics {
                CellMetrics::Attributes(r) => r.to_vec(),
                CellMetrics::Restoration {
                    blind,
                    nonblind,
                    degraded,
                } => vec![blind, nonblind, degraded],
            };
            let values: Vec<String> = values.into_iter().map(fmt_metric).collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                cell.spec.sigma,
                cell.spec.lambda,
                cell.spec.jpeg_quality.unwrap_or(0),
                values.join(",")
            );
        }
        out
    }

    /// Text table: one row group per λ, one column per (σ, q); each cell
    /// lists its metrics separated by `/`.
    pub fn to_table(&self) -> String {
        let width = 26;
        let mut out = String::new();
        let _ = write!(out, "{:>10}", "");
        for &s in &self.axes.sigmas {
            for &q in &self.axes.qualities {
                let _ = write!(out, " | {:^width$}", format!("sigma={s} q={q}"));
            }
        }
        out.push('\n');
        for &l in &self.axes.lambdas {
            let _ = write!(out, "{:>10}", format!("lambda={l}"));
            for &s in &self.axes.sigmas {
                for &q in &self.axes.qualities {
                    let text = match self.cell(s, l, q).map(|c| c.metrics) {
                        Some(CellMetrics::Attributes(r)) => {
                            format!("{:.3}/{:.3}/{:.3}", r[0], r[1], r[2])
                        }
                        Some(CellMetrics::Restoration {
                            blind,
                            nonblind,
                            degraded,
                        }) => format!("{blind:.2}/{nonblind:.2}/{degraded:.2}"),
                        None => "-".to_string(),
                    };
                    let _ = write!(out, " | {text:^width$}");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_images(images: &[Image]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::invalid("evaluation needs at least one test image"));
    }
    Ok(())
}

/// Noise seed for `image` in `cell`.
fn cell_seed(seed: Seed, cell: usize, image: usize, images: usize) -> Seed {
    seed.derive((cell * images + image) as u64)
}

/// Per-cell attribute RMSE against the constant truth map, averaged over
/// the test images. Cells and images are visited in order (σ, λ, q, image).
pub fn eval_estimator_grid(
    estimator: &dyn AttributeEstimator,
    images: &[Image],
    axes: &GridAxes,
    seed: Seed,
) -> Result<EvalGridResult> {
    check_images(images)?;
    let specs = axes.specs()?;
    let mut cells = Vec::with_capacity(specs.len());
    for (ci, spec) in specs.iter().enumerate() {
        let mut sum = [0.0; ATTRIBUTE_CHANNELS];
        for (ii, img) in images.iter().enumerate() {
            let degraded = degrade(img, spec, cell_seed(seed, ci, ii, images.len()))?;
            let est = estimator.estimate(&degraded)?.clamped();
            let truth = AttributeMap::constant(spec, img.height(), img.width())?;
            for (s, r) in sum.iter_mut().zip(map_rmse(&est, &truth)?) {
                *s += r;
            }
        }
        cells.push(GridCell {
            spec: *spec,
            metrics: CellMetrics::Attributes(sum.map(|s| s / images.len() as f64)),
        });
    }
    Ok(EvalGridResult {
        axes: axes.clone(),
        cells,
    })
}

/// Per-cell mean PSNR of blind restoration, nonblind restoration with the
/// true attributes, and the unrestored degraded image.
pub fn eval_restoration_grid(
    estimator: &dyn AttributeEstimator,
    restorer: &NetworkWeights,
    images: &[Image],
    axes: &GridAxes,
    seed: Seed,
) -> Result<EvalGridResult> {
    check_images(images)?;
    restorer.expect_kind(NetworkKind::Restorer)?;
    let specs = axes.specs()?;
    let n = images.len() as f64;
    let mut cells = Vec::with_capacity(specs.len());
    for (ci, spec) in specs.iter().enumerate() {
        let (mut blind, mut nonblind, mut degraded_sum) = (0.0, 0.0, 0.0);
        for (ii, img) in images.iter().enumerate() {
            let degraded = degrade(img, spec, cell_seed(seed, ci, ii, images.len()))?;
            let (restored, _) = blind_restore(estimator, restorer, &degraded)?;
            let truth = AttributeMap::constant(spec, img.height(), img.width())?;
            let informed = forward_restore(restorer, &degraded, &truth)?;
            blind += psnr(&restored, img)?;
            nonblind += psnr(&informed, img)?;
            degraded_sum += psnr(&degraded, img)?;
        }
        cells.push(GridCell {
            spec: *spec,
            metrics: CellMetrics::Restoration {
                blind: blind / n,
                nonblind: nonblind / n,
                degraded: degraded_sum / n,
            },
        });
    }
    Ok(EvalGridResult {
        axes: axes.clone(),
        cells,
    })
}
