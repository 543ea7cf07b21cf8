//! Quality metrics, reduced-resolution simulation and synthetic test scenes.

use std::str::FromStr;

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msi::{Band, Grid, MultispectralImage};
use crate::pipeline::StageTimings;
use crate::sampling::{block_average, cubic_weight, reflect_index};

/// `||x_hat - x|| / ||x||` over the flattened rasters.
pub fn nrmse(truth: &Grid, estimate: &Grid) -> Result<f64> {
    truth.ensure_same_shape(estimate)?;
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::invalid("NRMSE undefined for an all-zero reference"));
    }
    let diff: f64 = truth
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(diff.sqrt() / denom)
}

pub const SSIM_WINDOW: usize = 7;

/// Mean SSIM over all 7x7 windows lying inside the image, with the data
/// range taken from the reference (`max - min`, or 1 if the reference is flat).
pub fn ssim(truth: &Grid, estimate: &Grid) -> Result<f64> {
    let (lo, hi) = truth.min_max();
    let range = hi - lo;
    ssim_with_range(truth, estimate, if range > 0.0 { range } else { 1.0 })
}

pub fn ssim_with_range(truth: &Grid, estimate: &Grid, range: f64) -> Result<f64> {
    truth.ensure_same_shape(estimate)?;
    let w = SSIM_WINDOW;
    if truth.rows() < w || truth.cols() < w {
        return Err(Error::dim(format!(
            "SSIM needs at least {w}x{w}, got {}x{}",
            truth.rows(),
            truth.cols()
        )));
    }
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let n = (w * w) as f64;
    let (out_r, out_c) = (truth.rows() - w + 1, truth.cols() - w + 1);
    let total: f64 = (0..out_r)
        .into_par_iter()
        .map(|r0| {
            let mut row_sum = 0.0;
            for c0 in 0..out_c {
                let (mut mx, mut my) = (0.0, 0.0);
                for r in r0..r0 + w {
                    for c in c0..c0 + w {
                        mx += truth.get(r, c);
                        my += estimate.get(r, c);
                    }
                }
                mx /= n;
                my /= n;
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for r in r0..r0 + w {
                    for c in c0..c0 + w {
                        let dx = truth.get(r, c) - mx;
                        let dy = estimate.get(r, c) - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cov += dx * dy;
                    }
                }
                let norm = n - 1.0;
                let (vx, vy, cov) = (vx / norm, vy / norm, cov / norm);
                row_sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
            row_sum
        })
        .sum();
    Ok(total / (out_r * out_c) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimulationMode {
    /// Exact block averaging, identical to the forward model.
    #[serde(rename = "block")]
    Block,
    /// Box prefilter of the decimation width followed by bicubic sampling.
    #[serde(rename = "aa")]
    Antialiased,
}

impl FromStr for SimulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(SimulationMode::Block),
            "aa" => Ok(SimulationMode::Antialiased),
            other => Err(Error::invalid(format!("unknown simulation mode '{other}' (block|aa)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    /// Global downsampling applied on top of each band's own factor.
    pub factor: usize,
    pub mode: SimulationMode,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Output factor per band; defaults to each band's factor in the input.
    pub target_ls: Option<Vec<usize>>,
}

impl SimulationSpec {
    pub fn new(factor: usize, mode: SimulationMode) -> Self {
        SimulationSpec {
            factor,
            mode,
            noise_sigma: 0.0,
            seed: 0,
            target_ls: None,
        }
    }
}

/// Box filter of continuous width `d` centered on each sample.
fn box_taps(d: usize) -> Vec<(isize, f64)> {
    let df = d as f64;
    if d % 2 == 1 {
        let h = (d / 2) as isize;
        (-h..=h).map(|k| (k, 1.0 / df)).collect()
    } else {
        let h = (d / 2) as isize;
        (-h..=h)
            .map(|k| (k, if k.abs() == h { 0.5 / df } else { 1.0 / df }))
            .collect()
    }
}

/// Antialiased decimation of one axis: box prefilter, then Catmull-Rom
/// sampling at source coordinate `(i + 0.5) d - 0.5`.
fn decimate_line(line: &[f64], d: usize) -> Vec<f64> {
    let n = line.len();
    let taps = box_taps(d);
    let filtered: Vec<f64> = (0..n as isize)
        .map(|i| {
            taps.iter()
                .map(|&(k, w)| w * line[reflect_index(i + k, n)])
                .sum()
        })
        .collect();
    (0..n / d)
        .map(|i| {
            let s = (i as f64 + 0.5) * d as f64 - 0.5;
            let base = s.floor();
            let t = s - base;
            let b = base as isize;
            let w = [
                cubic_weight(t + 1.0),
                cubic_weight(t),
                cubic_weight(1.0 - t),
                cubic_weight(2.0 - t),
            ];
            (0..4)
                .map(|j| w[j] * filtered[reflect_index(b - 1 + j as isize, n)])
                .sum()
        })
        .collect()
}

/// Antialiased downsampling by `d` along both axes.
pub fn antialiased_downsample(x: &Grid, d: usize) -> Result<Grid> {
    if d == 0 || x.rows() % d != 0 || x.cols() % d != 0 {
        return Err(Error::dim(format!(
            "dims {}x{} not divisible by L={d}",
            x.rows(),
            x.cols()
        )));
    }
    if d == 1 {
        return Ok(x.clone());
    }
    let (rows, cols) = (x.rows(), x.cols());
    let horiz: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|r| decimate_line(&x.as_slice()[r * cols..(r + 1) * cols], d))
        .collect();
    let oc = cols / d;
    let cols_out: Vec<Vec<f64>> = (0..oc)
        .into_par_iter()
        .map(|c| {
            let col: Vec<f64> = horiz.iter().map(|row| row[c]).collect();
            decimate_line(&col, d)
        })
        .collect();
    let or = rows / d;
    Ok(Grid::from_fn(or, oc, |r, c| cols_out[c][r]))
}

/// Degrades every band to the reduced-resolution protocol: band `i` of the
/// input (factor `L_i`) becomes a band with factor `T_i` on a finest grid
/// `factor` times coarser, i.e. it is decimated by `factor * T_i / L_i`.
/// Noise is added band by band from one seeded stream.
pub fn simulate_dataset(gt: &MultispectralImage, spec: &SimulationSpec) -> Result<MultispectralImage> {
    if spec.factor == 0 {
        return Err(Error::invalid("simulation factor must be at least 1"));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    let targets = match &spec.target_ls {
        Some(t) if t.len() != gt.num_bands() => {
            return Err(Error::dim(format!(
                "{} target factors for {} bands",
                t.len(),
                gt.num_bands()
            )))
        }
        Some(t) => t.clone(),
        None => gt.factors(),
    };
    let f = spec.factor;
    if gt.finest_rows % f != 0 || gt.finest_cols % f != 0 {
        return Err(Error::dim(format!(
            "dims {}x{} not divisible by factor {f}",
            gt.finest_rows, gt.finest_cols
        )));
    }
    let (rows, cols) = (gt.finest_rows / f, gt.finest_cols / f);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut bands = Vec::with_capacity(gt.num_bands());
    for (i, band) in gt.bands.iter().enumerate() {
        let (l, t) = (band.factor, targets[i]);
        let name = &gt.band_names[i];
        if t == 0 || (f * t) % l != 0 {
            return Err(Error::dim(format!(
                "band {name}: cannot reach L={t} at factor {f} from L={l}"
            )));
        }
        let d = f * t / l;
        if band.rows() % d != 0 || band.cols() % d != 0 {
            return Err(Error::dim(format!(
                "band {name}: dims {}x{} not divisible by {d}",
                band.rows(),
                band.cols()
            )));
        }
        let mut grid = match spec.mode {
            SimulationMode::Block => block_average(&band.grid, d)?,
            SimulationMode::Antialiased => antialiased_downsample(&band.grid, d)?,
        };
        if spec.noise_sigma > 0.0 {
            for v in grid.as_mut_slice() {
                *v += noise.sample(&mut rng);
            }
        }
        bands.push(Band::new(grid, t));
    }
    let out = MultispectralImage::new(rows, cols, bands, gt.band_names.clone());
    out.ensure_valid()?;
    Ok(out)
}

/// Separable Gaussian blur with mirror boundaries; the kernel is truncated
/// at four standard deviations.
pub fn gaussian_smooth(x: &Grid, sigma: f64) -> Result<Grid> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("smoothing sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);
    let (rows, cols) = (x.rows(), x.cols());
    let horiz = Grid::from_fn(rows, cols, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(j, w)| w * x.get(r, reflect_index(c as isize + j as isize - radius, cols)))
            .sum()
    });
    Ok(Grid::from_fn(rows, cols, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(j, w)| w * horiz.get(reflect_index(r as isize + j as isize - radius, rows), c))
            .sum()
    }))
}

/// Exactly low-rank ground truth together with its generating factors.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// Every band at full resolution.
    pub gt: MultispectralImage,
    /// N_b x K orthonormal.
    pub basis: DMatrix<f64>,
    pub mean: RowDVector<f64>,
    /// N_p x K.
    pub coefficients: DMatrix<f64>,
    /// Factors the bands are meant to be observed at.
    pub band_ls: Vec<usize>,
}

impl SyntheticScene {
    /// Observations at `band_ls` with the given mode and noise.
    pub fn observe(&self, mode: SimulationMode, noise_sigma: f64, seed: u64) -> Result<MultispectralImage> {
        simulate_dataset(
            &self.gt,
            &SimulationSpec {
                factor: 1,
                mode,
                noise_sigma,
                seed,
                target_ls: Some(self.band_ls.clone()),
            },
        )
    }
}

/// Random scene `Z V^T + 1 mu` with smooth coefficient fields: Gaussian-blurred
/// white noise at scale `smoothness`, standardized, with amplitude
/// `0.15 / (j + 1)` for component `j`. An infinite smoothness gives constant fields.
pub fn generate_synthetic_scene(
    rows: usize,
    cols: usize,
    k_true: usize,
    smoothness: f64,
    band_ls: &[usize],
    seed: u64,
) -> Result<SyntheticScene> {
    let nb = band_ls.len();
    if k_true == 0 || k_true > nb {
        return Err(Error::invalid(format!("K_true={k_true} must lie in 1..={nb}")));
    }
    if let Some(&l) = band_ls.iter().find(|&&l| l == 0 || rows % l != 0 || cols % l != 0) {
        return Err(Error::dim(format!("dims {rows}x{cols} not divisible by L={l}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(nb, k_true, |_, _| rng.random_range(-1.0..1.0));
    let basis = raw.qr().q();
    let mean = RowDVector::from_fn(nb, |_, _| rng.random_range(0.2..0.8));
    let np = rows * cols;
    let mut coefficients = DMatrix::zeros(np, k_true);
    for j in 0..k_true {
        let amp = 0.15 / (j + 1) as f64;
        let field = if smoothness.is_infinite() {
            vec![amp; np]
        } else {
            let noise = Grid::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
            let smooth = gaussian_smooth(&noise, smoothness)?;
            let m = smooth.mean();
            let sd = (smooth.as_slice().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / np as f64).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            smooth.as_slice().iter().map(|v| amp * (v - m) / sd).collect()
        };
        coefficients.column_mut(j).copy_from_slice(&field);
    }
    let mut stack = &coefficients * basis.transpose();
    for mut row in stack.row_iter_mut() {
        row += &mean;
    }
    let names = (0..nb).map(|i| format!("B{i}")).collect();
    let gt = MultispectralImage::from_stack(&stack, rows, cols, names)?;
    Ok(SyntheticScene {
        gt,
        basis,
        mean,
        coefficients,
        band_ls: band_ls.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub name: String,
    /// Factor of the band in the input that was super-resolved.
    #[serde(rename = "L")]
    pub factor: usize,
    pub nrmse: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bands: Vec<BandMetrics>,
    /// Means over bands with `L > 1` (over all bands if none).
    pub mean_nrmse: f64,
    pub mean_ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<StageTimings>,
}

/// Per-band NRMSE and SSIM of `estimate` against `gt`; `input_factors` marks
/// which bands were super-resolved.
pub fn evaluate_reconstruction(
    gt: &MultispectralImage,
    estimate: &MultispectralImage,
    input_factors: &[usize],
    timings: Option<StageTimings>,
) -> Result<MetricsReport> {
    if gt.num_bands() != estimate.num_bands() || input_factors.len() != gt.num_bands() {
        return Err(Error::dim(format!(
            "band counts differ: truth {}, estimate {}, factors {}",
            gt.num_bands(),
            estimate.num_bands(),
            input_factors.len()
        )));
    }
    let bands = gt
        .bands
        .iter()
        .zip(&estimate.bands)
        .enumerate()
        .map(|(i, (t, e))| {
            Ok(BandMetrics {
                name: gt.band_names[i].clone(),
                factor: input_factors[i],
                nrmse: nrmse(&t.grid, &e.grid)?,
                ssim: ssim(&t.grid, &e.grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sr: Vec<&BandMetrics> = if bands.iter().any(|b| b.factor > 1) {
        bands.iter().filter(|b| b.factor > 1).collect()
    } else {
        bands.iter().collect()
    };
    let n = sr.len() as f64;
    let mean_nrmse = sr.iter().map(|b| b.nrmse).sum::<f64>() / n;
    let mean_ssim = sr.iter().map(|b| b.ssim).sum::<f64>() / n;
    Ok(MetricsReport {
        bands,
        mean_nrmse,
        mean_ssim,
        timings,
    })
}
