//! End-to-end super-resolution: normalize, fit the subspace, solve for the
//! coefficients, synthesize, apply residual correction, denormalize.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmDiagnostics, AdmmSolver};
use crate::config::{AdmmConfig, SolverConfig};
use crate::error::{Error, Result};
use crate::msi::{apply_normalization, denormalize_band, norm_params, Band, Grid, MultispectralImage, NormParams};
use crate::sampling::{bicubic_upsample, block_average};
use crate::solver::synthesize;
use crate::strategy::{CoefficientSolver, PixelLinearSolver};
use crate::subspace::{estimate_subspace, SubsampleSpec, SubspaceModel};

/// `x_svd + B (y - A x_svd)` for one band. For `L = 1` both operators are the
/// identity and the measurement is returned unchanged.
pub fn correct_band(x_svd: &Grid, y: &Band) -> Result<Grid> {
    let l = y.factor;
    if x_svd.rows() != y.rows() * l || x_svd.cols() != y.cols() * l {
        return Err(Error::dim(format!(
            "estimate is {}x{}, measurement {}x{} at L={l}",
            x_svd.rows(),
            x_svd.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if l == 1 {
        return Ok(y.grid.clone());
    }
    let predicted = block_average(x_svd, l)?;
    let residual = y.grid.zip_map(&predicted, |a, b| a - b)?;
    let up = bicubic_upsample(&residual, l)?;
    x_svd.zip_map(&up, |a, b| a + b)
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub normalize: f64,
    pub subspace: f64,
    pub solve: f64,
    pub synthesize: f64,
    pub residual_correction: f64,
    pub denormalize: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.normalize + self.subspace + self.solve + self.synthesize + self.residual_correction + self.denormalize
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// All bands at `L = 1`, in the input's units and order.
    pub msi_out: MultispectralImage,
    /// Normalized `Z V^T + 1 mu` before correction, N_p x N_b.
    pub x_svd: DMatrix<f64>,
    /// Normalized output stack (equal to `x_svd` when correction is off).
    pub x_hat: DMatrix<f64>,
    pub norm_params: Vec<NormParams>,
    pub model: SubspaceModel,
    pub coefficients: DMatrix<f64>,
    pub solver: &'static str,
    pub diagnostics: Option<AdmmDiagnostics>,
    pub timings: StageTimings,
}

fn timed<T>(slot: &mut f64, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    *slot = start.elapsed().as_secs_f64();
    out
}

fn column_grid(stack: &DMatrix<f64>, i: usize, rows: usize, cols: usize) -> Result<Grid> {
    Grid::new(rows, cols, stack.column(i).iter().copied().collect())
}

/// Runs the full pipeline with the given coefficient solver.
pub fn super_resolve_with(
    msi: &MultispectralImage,
    config: &SolverConfig,
    solver: &dyn CoefficientSolver,
    residual_correction: bool,
) -> Result<PipelineResult> {
    config.validate()?;
    msi.ensure_valid()?;
    let (rows, cols) = (msi.finest_rows, msi.finest_cols);
    let mut timings = StageTimings::default();

    let (normalized, params) = timed(&mut timings.normalize, "normalize", || {
        let params = msi
            .bands
            .iter()
            .map(|b| norm_params(&b.grid))
            .collect::<Result<Vec<_>>>()?;
        let bands = msi
            .bands
            .iter()
            .zip(&params)
            .map(|(b, p)| apply_normalization(b, *p))
            .collect();
        Ok((MultispectralImage::new(rows, cols, bands, msi.band_names.clone()), params))
    })?;

    let model = timed(&mut timings.subspace, "subspace estimation", || {
        let spec = SubsampleSpec {
            count: config.sample_count(msi.num_pixels()),
            seed: config.seed,
        };
        estimate_subspace(&normalized, config.rank, spec)
    })?;

    let estimate = timed(&mut timings.solve, "coefficient solve", || {
        solver.solve(&normalized, &model, config)
    })?;

    let x_svd = timed(&mut timings.synthesize, "synthesis", || {
        synthesize(&estimate.coefficients, &model)
    })?;

    let x_hat = timed(&mut timings.residual_correction, "residual correction", || {
        if !residual_correction {
            return Ok(x_svd.clone());
        }
        let corrected: Vec<Grid> = normalized
            .bands
            .par_iter()
            .enumerate()
            .map(|(i, y)| correct_band(&column_grid(&x_svd, i, rows, cols)?, y))
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(rows * cols, corrected.len());
        for (i, g) in corrected.iter().enumerate() {
            out.column_mut(i).copy_from_slice(g.as_slice());
        }
        Ok(out)
    })?;

    let msi_out = timed(&mut timings.denormalize, "denormalize", || {
        let bands = (0..msi.num_bands())
            .map(|i| Ok(denormalize_band(&Band::new(column_grid(&x_hat, i, rows, cols)?, 1), params[i])))
            .collect::<Result<Vec<_>>>()?;
        let out = MultispectralImage::new(rows, cols, bands, msi.band_names.clone());
        if out.bands.iter().any(|b| b.grid.as_slice().iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite output".to_string()));
        }
        Ok(out)
    })?;

    Ok(PipelineResult {
        msi_out,
        x_svd,
        x_hat,
        norm_params: params,
        model,
        coefficients: estimate.coefficients,
        solver: solver.name(),
        diagnostics: estimate.diagnostics,
        timings,
    })
}

/// Pixel-linear coefficients with residual correction.
pub fn super_resolve(msi: &MultispectralImage, config: &SolverConfig) -> Result<PipelineResult> {
    super_resolve_with(msi, config, &PixelLinearSolver, true)
}

/// ADMM coefficients with residual correction; fails if ADMM does not converge.
pub fn super_resolve_admm(
    msi: &MultispectralImage,
    config: &SolverConfig,
    admm: &AdmmConfig,
) -> Result<PipelineResult> {
    let solver = AdmmSolver {
        config: *admm,
        allow_nonconverged: false,
    };
    super_resolve_with(msi, config, &solver, true)
}

/// Bicubic upsampling of every band to the finest grid.
pub fn bicubic_baseline(msi: &MultispectralImage) -> Result<MultispectralImage> {
    msi.ensure_valid()?;
    let bands = msi
        .bands
        .iter()
        .map(|b| {
            let g = if b.factor == 1 {
                b.grid.clone()
            } else {
                bicubic_upsample(&b.grid, b.factor)?
            };
            Ok(Band::new(g, 1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultispectralImage::new(msi.finest_rows, msi.finest_cols, bands, msi.band_names.clone()))
}
