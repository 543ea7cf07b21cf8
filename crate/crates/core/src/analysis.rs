//! Diagnostics for the diagonal Gram approximation `A^T A ~ kappa I`:
//! the Frobenius deviation of the operator, its effect on images, the
//! resulting coefficient-error bound, and the gap between the pixel-linear
//! and ADMM pipelines.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::admm::dense_oracle_solve;
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::eval::{generate_synthetic_scene, SimulationMode};
use crate::msi::{Grid, MultispectralImage};
use crate::pipeline::PipelineResult;
use crate::sampling::BlockAverageOp;
use crate::solver::{assemble_system, resolution_weights, solve_pixel_linear, synthesize};
use crate::subspace::{estimate_subspace, SubsampleSpec, SubspaceModel};

/// `kappa^2 - 2 L^-4 kappa + L^-6`
pub fn q_poly(kappa: f64, factor: usize) -> f64 {
    let l = factor as f64;
    kappa * kappa - 2.0 * kappa / l.powi(4) + 1.0 / l.powi(6)
}

/// `N^-3/2 q(kappa)^1/2`
pub fn operator_deviation_analytic(num_pixels: usize, factor: usize, kappa: f64) -> f64 {
    (num_pixels as f64).powf(-1.5) * q_poly(kappa, factor).max(0.0).sqrt()
}

pub const DENSE_DEVIATION_LIMIT: usize = 4096;

/// `N^-2 ||A^T A - kappa I||_F`, accumulated column by column from the
/// Gram operator applied to every standard basis image.
pub fn operator_deviation_dense(rows: usize, cols: usize, factor: usize, kappa: f64) -> Result<f64> {
    let n = rows * cols;
    if n > DENSE_DEVIATION_LIMIT {
        return Err(Error::invalid(format!(
            "dense deviation limited to N <= {DENSE_DEVIATION_LIMIT}, got {n}"
        )));
    }
    let op = BlockAverageOp::new(factor, rows, cols)?;
    let mut basis = Grid::zeros(rows, cols);
    let mut sum = 0.0;
    for p in 0..n {
        basis.as_mut_slice()[p] = 1.0;
        let col = op.gram(&basis)?;
        for (q, v) in col.as_slice().iter().enumerate() {
            let d = if q == p { v - kappa } else { *v };
            sum += d * d;
        }
        basis.as_mut_slice()[p] = 0.0;
    }
    Ok(sum.sqrt() / (n as f64 * n as f64))
}

/// `N^-1 ||A^T A x - kappa x||^2`; `kappa` defaults to `L^-2`, the value the
/// pixel-linear solver substitutes for the Gram operator.
pub fn operator_error_on_image(x: &Grid, factor: usize, kappa: Option<f64>) -> Result<f64> {
    let op = BlockAverageOp::new(factor, x.rows(), x.cols())?;
    let kappa = kappa.unwrap_or(1.0 / (factor * factor) as f64);
    let g = op.gram(x)?;
    let s: f64 = g
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - kappa * b).powi(2))
        .sum();
    Ok(s / x.len() as f64)
}

/// How the bound's symbols are instantiated.
pub const BOUND_MAPPING: &str = "w_i = gamma_i L_i^2 / sigma^2; kappa_i = L_i^-2; \
u_i = row i of V; K = sum_i w_i kappa_i u_i^T u_i + (lambda / K) diag(s)^-2; \
E = sum_i w_i q(kappa_i)^1/2 ||u_i||^2; N = N_p";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kappa: Vec<f64>,
    pub q: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "K_matrix")]
    pub k_matrix: Vec<Vec<f64>>,
    pub inv_k_fro: f64,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub bound: f64,
    /// `||Z_hat - Z*|| / ||Z*||`
    pub observed_ratio: f64,
    /// `||X_hat - X*|| / ||X* - 1 mu||`
    pub image_ratio: f64,
    pub mapping: String,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.observed_ratio <= self.bound
    }
}

fn relative(diff: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        diff / reference
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Evaluates the coefficient-error bound for the pixel-linear solution
/// against the exact solution `z_star`.
pub fn coefficient_error_bound(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
    z_star: &DMatrix<f64>,
) -> Result<BoundReport> {
    let k = model.rank();
    let gamma = resolution_weights(&msi.distinct_factors(), config.gamma_hr)?;
    let s2 = config.sigma * config.sigma;
    let mut kappa = Vec::new();
    let mut q = Vec::new();
    let mut weights = Vec::new();
    let mut e = 0.0;
    let mut kmat = DMatrix::zeros(k, k);
    for (i, band) in msi.bands.iter().enumerate() {
        let l = band.factor;
        let w = gamma.get(l)? * (l * l) as f64 / s2;
        let kap = 1.0 / (l * l) as f64;
        let qi = q_poly(kap, l).max(0.0);
        let u = model.basis.row(i);
        e += w * qi.sqrt() * u.norm_squared();
        kmat += (w * kap) * (u.transpose() * u);
        kappa.push(kap);
        q.push(qi);
        weights.push(w);
    }
    for j in 0..k {
        let s = model.singular_values[j];
        kmat[(j, j)] += config.lambda / k as f64 / (s * s);
    }
    let inv = kmat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("bound matrix K is singular".to_string()))?;
    let inv_k_fro = inv.norm();
    let alpha = e * inv_k_fro;
    let n = msi.num_pixels();

    let z_hat = solve_pixel_linear(&assemble_system(msi, model, config)?)?;
    let observed_ratio = relative((&z_hat - z_star).norm(), z_star.norm());
    let dx = synthesize(&z_hat, model)? - synthesize(z_star, model)?;
    let image_ratio = relative(dx.norm(), (z_star * model.basis.transpose()).norm());

    Ok(BoundReport {
        kappa,
        q,
        weights,
        e,
        k_matrix: kmat.row_iter().map(|r| r.iter().copied().collect()).collect(),
        inv_k_fro,
        alpha,
        n,
        bound: alpha * (n as f64).sqrt(),
        observed_ratio,
        image_ratio,
        mapping: BOUND_MAPPING.to_string(),
    })
}

/// `N_p^-1 ||X_a - X_b||_F^2` between two normalized output stacks.
pub fn solver_gap(a: &PipelineResult, b: &PipelineResult) -> Result<f64> {
    if a.x_hat.shape() != b.x_hat.shape() {
        return Err(Error::dim(format!(
            "stacks differ in shape: {:?} vs {:?}",
            a.x_hat.shape(),
            b.x_hat.shape()
        )));
    }
    Ok((&a.x_hat - &b.x_hat).norm_squared() / a.x_hat.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCase {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "L")]
    pub factor: usize,
    pub kappa: f64,
    pub analytic: f64,
    pub dense: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceBound {
    pub seed: u64,
    pub factors: Vec<usize>,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSuiteReport {
    pub deviation_cases: Vec<DeviationCase>,
    pub max_deviation_error: f64,
    /// `q(L^-4) <= q(kappa)` on a 101-point grid over `[0, 2 L^-4]`, per L.
    pub kappa_minimizer: Vec<(usize, bool)>,
    pub instances: Vec<InstanceBound>,
    pub violations: usize,
    /// Largest `|image_ratio - observed_ratio|`.
    pub max_ratio_identity_error: f64,
}

/// Grids and factors exercised by the operator-deviation check.
pub const DEVIATION_GRIDS: [(usize, usize, usize); 4] = [(4, 4, 2), (6, 6, 2), (6, 6, 3), (12, 12, 6)];

pub fn kappa_is_minimizer(factor: usize) -> bool {
    let opt = 1.0 / (factor as f64).powi(4);
    let q_opt = q_poly(opt, factor);
    (0..=100).all(|i| q_opt <= q_poly(2.0 * opt * i as f64 / 100.0, factor))
}

/// Seeded 8x8 instance: 3 to 5 bands at factors 1 and 2, a smooth rank-2
/// scene with mild noise, and a rank-2 subspace fitted on every pixel.
pub fn tiny_instance(seed: u64) -> Result<(MultispectralImage, SubspaceModel)> {
    let nb = 3 + (seed % 3) as usize;
    let mut ls = vec![1, 2];
    ls.extend((2..nb).map(|i| 1 + ((seed >> i) & 1) as usize));
    let scene = generate_synthetic_scene(8, 8, 2, 1.5, &ls, seed)?;
    let msi = scene.observe(SimulationMode::Block, 0.01, seed ^ 0x5eed)?;
    let model = estimate_subspace(&msi, 2, SubsampleSpec { count: 64, seed })?;
    Ok((msi, model))
}

/// Runs the deviation identity, the kappa check and the coefficient bound
/// on `seeds` tiny instances.
pub fn verify_bounds(seeds: usize, config: &SolverConfig) -> Result<BoundsSuiteReport> {
    let mut deviation_cases = Vec::new();
    for (rows, cols, l) in DEVIATION_GRIDS {
        let base = 1.0 / (l as f64).powi(4);
        for kappa in [base, 0.5 * base, 2.0 * base] {
            deviation_cases.push(DeviationCase {
                rows,
                cols,
                factor: l,
                kappa,
                analytic: operator_deviation_analytic(rows * cols, l, kappa),
                dense: operator_deviation_dense(rows, cols, l, kappa)?,
            });
        }
    }
    let max_deviation_error = deviation_cases
        .iter()
        .map(|c| (c.analytic - c.dense).abs())
        .fold(0.0, f64::max);
    let kappa_minimizer = [2, 3, 6].iter().map(|&l| (l, kappa_is_minimizer(l))).collect();
    let mut instances = Vec::with_capacity(seeds);
    for seed in 0..seeds as u64 {
        let (msi, model) = tiny_instance(seed)?;
        let z_star = dense_oracle_solve(&msi, &model, config)?;
        let report = coefficient_error_bound(&msi, &model, config, &z_star)?;
        instances.push(InstanceBound {
            seed,
            factors: msi.factors(),
            report,
        });
    }
    let violations = instances.iter().filter(|i| !i.report.holds()).count();
    let max_ratio_identity_error = instances
        .iter()
        .map(|i| (i.report.image_ratio - i.report.observed_ratio).abs())
        .fold(0.0, f64::max);
    Ok(BoundsSuiteReport {
        deviation_cases,
        max_deviation_error,
        kappa_minimizer,
        instances,
        violations,
        max_ratio_identity_error,
    })
}
