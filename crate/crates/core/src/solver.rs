//! Pixel-linear coefficient solver.
//!
//! Replacing `A_i^T A_i` by `L_i^{-2} I` in the normal equations decouples
//! pixels: every row of the coefficient image solves the same small
//! `K x K` system
//!
//! ```text
//! z_p (sum_i g_i v_i^T v_i + (lambda sigma^2 / K) diag(s)^-2) = rhs_p
//! rhs = sum_i g_i L_i^2 A_i^T (y_i - mu_i) v_i
//! ```
//!
//! where `v_i` is row `i` of the spectral basis, `g_i` the weight of the
//! band's resolution and `s` the retained singular values.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::msi::MultispectralImage;
use crate::sampling::BlockAverageOp;
use crate::subspace::SubspaceModel;

/// Data-fit weight per distinct resolution factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaWeights {
    pub by_factor: BTreeMap<usize, f64>,
}

impl GammaWeights {
    pub fn get(&self, factor: usize) -> Result<f64> {
        self.by_factor
            .get(&factor)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no weight for resolution factor L={factor}")))
    }

    /// Weight of each band, in band order.
    pub fn per_band(&self, factors: &[usize]) -> Result<Vec<f64>> {
        factors.iter().map(|&l| self.get(l)).collect()
    }

    pub fn total(&self) -> f64 {
        self.by_factor.values().sum()
    }
}

/// `gamma_1 = gamma_HR`; the lower resolutions share `1 - gamma_HR` in proportion to `1/L`.
pub fn resolution_weights(resolutions: &[usize], gamma_hr: f64) -> Result<GammaWeights> {
    if !resolutions.contains(&1) {
        return Err(Error::invalid("resolution set has no full-resolution (L=1) band"));
    }
    if !(gamma_hr > 0.0 && gamma_hr < 1.0) {
        return Err(Error::invalid(format!("gamma_HR must lie in (0, 1), got {gamma_hr}")));
    }
    let mut lower: Vec<usize> = resolutions.iter().copied().filter(|&l| l > 1).collect();
    lower.sort_unstable();
    lower.dedup();
    let inv_sum: f64 = lower.iter().map(|&l| 1.0 / l as f64).sum();
    let mut by_factor = BTreeMap::new();
    by_factor.insert(1, gamma_hr);
    for l in lower {
        by_factor.insert(l, (1.0 - gamma_hr) / inv_sum / l as f64);
    }
    Ok(GammaWeights { by_factor })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelLinearSystem {
    /// N_p x K
    pub rhs: DMatrix<f64>,
    /// K x K, symmetric
    pub lhs: DMatrix<f64>,
}

pub fn assemble_rhs(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    gamma: &GammaWeights,
) -> Result<DMatrix<f64>> {
    let nb = msi.num_bands();
    if model.num_bands() != nb {
        return Err(Error::dim(format!(
            "subspace has {} bands, image has {nb}",
            model.num_bands()
        )));
    }
    let k = model.rank();
    let mut rhs = DMatrix::zeros(msi.num_pixels(), k);
    for (i, band) in msi.bands.iter().enumerate() {
        let l = band.factor;
        let op = BlockAverageOp::new(l, msi.finest_rows, msi.finest_cols)?;
        let mu = model.mean[i];
        let centered = band.grid.map(|v| v - mu);
        let spread = op.adjoint(&centered)?;
        let w = gamma.get(l)? * (l * l) as f64;
        for j in 0..k {
            let coef = w * model.basis[(i, j)];
            if coef == 0.0 {
                continue;
            }
            for (dst, &src) in rhs.column_mut(j).iter_mut().zip(spread.as_slice()) {
                *dst += coef * src;
            }
        }
    }
    Ok(rhs)
}

/// Regularizer weight `lambda * sigma^2 / K`.
pub fn regularizer_weight(lambda: f64, sigma: f64, rank: usize) -> f64 {
    lambda * sigma * sigma / rank as f64
}

pub fn assemble_lhs(
    model: &SubspaceModel,
    gamma: &GammaWeights,
    band_factors: &[usize],
    lambda: f64,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let k = model.rank();
    if band_factors.len() != model.num_bands() {
        return Err(Error::dim("one resolution factor per band required"));
    }
    let mut lhs = DMatrix::zeros(k, k);
    for (i, &l) in band_factors.iter().enumerate() {
        let g = gamma.get(l)?;
        let v = model.basis.row(i);
        lhs += g * v.transpose() * v;
    }
    let reg = regularizer_weight(lambda, sigma, k);
    for j in 0..k {
        let s = model.singular_values[j];
        lhs[(j, j)] += reg / (s * s);
    }
    Ok(lhs)
}

pub fn assemble_system(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
) -> Result<PixelLinearSystem> {
    let gamma = resolution_weights(&msi.distinct_factors(), config.gamma_hr)?;
    let rhs = assemble_rhs(msi, model, &gamma)?;
    let lhs = assemble_lhs(model, &gamma, &msi.factors(), config.lambda, config.sigma)?;
    Ok(PixelLinearSystem { rhs, lhs })
}

/// Solves `z_p lhs = rhs_p` for every pixel with one Cholesky factorization.
pub fn solve_pixel_linear(system: &PixelLinearSystem) -> Result<DMatrix<f64>> {
    let k = system.lhs.nrows();
    if system.lhs.ncols() != k || system.rhs.ncols() != k {
        return Err(Error::dim("pixel-linear system shapes disagree"));
    }
    let chol = Cholesky::new(system.lhs.clone())
        .ok_or_else(|| Error::Numerical("system singular; increase lambda".to_string()))?;
    let zt = chol.solve(&system.rhs.transpose());
    if zt.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("system singular; increase lambda".to_string()));
    }
    Ok(zt.transpose())
}

/// `Z V^T + 1 mu`
pub fn synthesize(z: &DMatrix<f64>, model: &SubspaceModel) -> Result<DMatrix<f64>> {
    if z.ncols() != model.rank() {
        return Err(Error::dim(format!(
            "coefficients have {} columns, subspace rank is {}",
            z.ncols(),
            model.rank()
        )));
    }
    let mut x = z * model.basis.transpose();
    for mut row in x.row_iter_mut() {
        row += &model.mean;
    }
    Ok(x)
}

/// `(X - 1 mu) V`, the coefficients of a full-resolution stack.
pub fn analyze(x: &DMatrix<f64>, model: &SubspaceModel) -> DMatrix<f64> {
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &model.mean;
    }
    centered * &model.basis
}

/// Value of the exact (un-approximated) objective at coefficients `z`:
/// weighted data misfit of every band plus the spectral regularizer.
pub fn exact_loss(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
    z: &DMatrix<f64>,
) -> Result<f64> {
    let np = msi.num_pixels() as f64;
    let gamma = resolution_weights(&msi.distinct_factors(), config.gamma_hr)?;
    let x = synthesize(z, model)?;
    let mut fit = 0.0;
    for (i, band) in msi.bands.iter().enumerate() {
        let l = band.factor;
        let op = BlockAverageOp::new(l, msi.finest_rows, msi.finest_cols)?;
        let xi = crate::msi::Grid::new(msi.finest_rows, msi.finest_cols, x.column(i).as_slice().to_vec())?;
        let pred = op.apply(&xi)?;
        let misfit: f64 = band
            .grid
            .as_slice()
            .iter()
            .zip(pred.as_slice())
            .map(|(y, p)| (y - p) * (y - p))
            .sum();
        fit += gamma.get(l)? * (l * l) as f64 * misfit;
    }
    let fit = fit / (2.0 * np * config.sigma * config.sigma);
    let k = model.rank();
    let mut reg = 0.0;
    for j in 0..k {
        let s = model.singular_values[j];
        reg += z.column(j).norm_squared() / (s * s);
    }
    let reg = config.lambda * reg / (2.0 * np * k as f64);
    Ok(fit + reg)
}
