//! Iterative solver for the exact coefficient problem (no diagonal Gram
//! approximation), used as the reference for the pixel-linear solver, and a
//! dense direct solve of the same normal equations for tiny instances.
//!
//! The problem is split as `X = Z V^T + 1 mu` with scaled dual `W`. The
//! penalty is `rho / (2 N_p N_b) ||X - (Z V^T + 1 mu) + W||_F^2`, against a
//! data term weighted `g_i L_i^2 / (2 N_p sigma^2)` per band and the
//! regularizer `lambda / (2 N_p K) ||Z diag(s)^-1||_F^2`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AdmmConfig, SolverConfig};
use crate::error::{Error, Result};
use crate::msi::{Grid, MultispectralImage};
use crate::sampling::BlockAverageOp;
use crate::solver::{assemble_system, regularizer_weight, resolution_weights, solve_pixel_linear, synthesize};
use crate::strategy::{CoefficientEstimate, CoefficientSolver};
use crate::subspace::SubspaceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub primal_history: Vec<f64>,
    pub dual_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    /// N_p x K coefficients
    pub z: DMatrix<f64>,
    /// N_p x N_b full-resolution auxiliary image
    pub x: DMatrix<f64>,
    /// N_p x N_b scaled dual
    pub w: DMatrix<f64>,
    pub iterations: usize,
    pub primal_history: Vec<f64>,
    pub dual_history: Vec<f64>,
}

impl AdmmState {
    /// `Z0` given, `W = 0`, `X` set to the synthesized image.
    pub fn warm_start(z0: DMatrix<f64>, model: &SubspaceModel) -> Result<Self> {
        let x = synthesize(&z0, model)?;
        let w = DMatrix::zeros(x.nrows(), x.ncols());
        Ok(AdmmState {
            z: z0,
            x,
            w,
            iterations: 0,
            primal_history: Vec::new(),
            dual_history: Vec::new(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub z: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub diagnostics: AdmmDiagnostics,
}

/// Applies `(A^T A + c I)^-1` in closed form. `A^T A` is block diagonal with
/// blocks `a J` (`J` all-ones, `a = L^-4`), and
/// `(a J + c I)^-1 = (I - a / (c + a L^2) J) / c`.
pub fn invert_shifted_gram(b: &Grid, factor: usize, c: f64) -> Result<Grid> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("shift c must be positive, got {c}")));
    }
    if factor == 1 {
        return Ok(b.map(|v| v / (1.0 + c)));
    }
    let op = BlockAverageOp::new(factor, b.rows(), b.cols())?;
    let l2 = (factor * factor) as f64;
    let a = 1.0 / (l2 * l2);
    // block sums via the averaging operator (mean * L^2)
    let sums = op.apply(b)?.map(|m| m * l2);
    let coef = a / (c + a * l2);
    let mut out = b.clone();
    for r in 0..b.rows() {
        for col in 0..b.cols() {
            let s = sums.get(r / factor, col / factor);
            out.set(r, col, (b.get(r, col) - coef * s) / c);
        }
    }
    Ok(out)
}

/// Per-band constants reused by every X-step.
struct BandTerms {
    factor: usize,
    shift: f64,
    data: Grid,
}

fn band_terms(
    msi: &MultispectralImage,
    config: &SolverConfig,
    admm: &AdmmConfig,
) -> Result<Vec<BandTerms>> {
    let gamma = resolution_weights(&msi.distinct_factors(), config.gamma_hr)?;
    let nb = msi.num_bands() as f64;
    msi.bands
        .iter()
        .map(|band| {
            let l = band.factor;
            let op = BlockAverageOp::new(l, msi.finest_rows, msi.finest_cols)?;
            let g = gamma.get(l)?;
            let shift = admm.rho * config.sigma * config.sigma / (nb * g * (l * l) as f64);
            if !(shift > 0.0) {
                return Err(Error::invalid(format!("X-step shift must be positive, got {shift}")));
            }
            Ok(BandTerms {
                factor: l,
                shift,
                data: op.adjoint(&band.grid)?,
            })
        })
        .collect()
}

fn x_step_cached(
    terms: &[BandTerms],
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    model: &SubspaceModel,
    rows: usize,
    cols: usize,
) -> Result<DMatrix<f64>> {
    let target = synthesize(z, model)? - w;
    let columns: Vec<Grid> = terms
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let tgt = target.column(i);
            let b = Grid::new(
                rows,
                cols,
                t.data
                    .as_slice()
                    .iter()
                    .zip(tgt.iter())
                    .map(|(d, v)| d + t.shift * v)
                    .collect(),
            )?;
            invert_shifted_gram(&b, t.factor, t.shift)
        })
        .collect::<Result<_>>()?;
    let mut x = DMatrix::zeros(rows * cols, terms.len());
    for (i, g) in columns.iter().enumerate() {
        x.column_mut(i).copy_from_slice(g.as_slice());
    }
    Ok(x)
}

/// Minimizes the augmented Lagrangian over `X`, band by band.
pub fn x_step(
    state: &AdmmState,
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
    admm: &AdmmConfig,
) -> Result<DMatrix<f64>> {
    let terms = band_terms(msi, config, admm)?;
    x_step_cached(&terms, &state.z, &state.w, model, msi.finest_rows, msi.finest_cols)
}

/// Minimizes the augmented Lagrangian over `Z`: a diagonal shrinkage of the
/// projection `(X + W - 1 mu) V`.
pub fn z_step(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    model: &SubspaceModel,
    config: &SolverConfig,
    admm: &AdmmConfig,
) -> DMatrix<f64> {
    let nb = model.num_bands() as f64;
    let k = model.rank() as f64;
    let penalty = admm.rho / nb;
    let mut v = x + w;
    for mut row in v.row_iter_mut() {
        row -= &model.mean;
    }
    let mut z = v * &model.basis;
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let s = model.singular_values[j];
        let factor = penalty / (config.lambda / k / (s * s) + penalty);
        col *= factor;
    }
    z
}

fn rms(m: &DMatrix<f64>) -> f64 {
    m.norm() / (m.len() as f64).sqrt()
}

/// Runs ADMM from the given starting coefficients. A run that hits
/// `max_iters` returns its last iterate with `converged = false`.
pub fn run_admm_from(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
    admm: &AdmmConfig,
    z0: DMatrix<f64>,
) -> Result<AdmmOutcome> {
    admm.validate()?;
    let terms = band_terms(msi, config, admm)?;
    let mut state = AdmmState::warm_start(z0, model)?;
    let scale = ((msi.num_pixels() * msi.num_bands()) as f64).sqrt();
    let mut converged = false;
    while state.iterations < admm.max_iters {
        state.x = x_step_cached(&terms, &state.z, &state.w, model, msi.finest_rows, msi.finest_cols)?;
        let z_new = z_step(&state.x, &state.w, model, config, admm);
        let consensus = synthesize(&z_new, model)?;
        let gap = &state.x - &consensus;
        state.w += &gap;
        let primal = rms(&gap);
        // basis columns are orthonormal, so ||dZ V^T|| = ||dZ||
        let dual = admm.rho * (&z_new - &state.z).norm() / scale;
        state.z = z_new;
        state.iterations += 1;
        state.primal_history.push(primal);
        state.dual_history.push(dual);
        if !primal.is_finite() || !dual.is_finite() {
            return Err(Error::Numerical(format!(
                "ADMM diverged at iteration {}",
                state.iterations
            )));
        }
        if primal < admm.tol_primal && dual < admm.tol_dual {
            converged = true;
            break;
        }
    }
    let diagnostics = AdmmDiagnostics {
        iterations: state.iterations,
        converged,
        primal_residual: state.primal_history.last().copied().unwrap_or(0.0),
        dual_residual: state.dual_history.last().copied().unwrap_or(0.0),
        primal_history: state.primal_history,
        dual_history: state.dual_history,
    };
    Ok(AdmmOutcome {
        z: state.z,
        x: state.x,
        diagnostics,
    })
}

/// ADMM warm-started from the pixel-linear coefficients.
pub fn run_admm(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
    admm: &AdmmConfig,
) -> Result<AdmmOutcome> {
    let z0 = solve_pixel_linear(&assemble_system(msi, model, config)?)?;
    run_admm_from(msi, model, config, admm, z0)
}

/// Largest `N_p * K` accepted by [`dense_oracle_solve`].
pub const DENSE_ORACLE_LIMIT: usize = 4096;

/// Dense block-average matrix assembled from Kronecker factors:
/// `L^-2 (I_nr (x) 1_L^T (x) I_nc (x) 1_L^T)`.
pub fn dense_block_average(rows: usize, cols: usize, factor: usize) -> DMatrix<f64> {
    let (nr, nc) = (rows / factor, cols / factor);
    let ones = DMatrix::from_element(1, factor, 1.0);
    let a = DMatrix::<f64>::identity(nr, nr)
        .kronecker(&ones)
        .kronecker(&DMatrix::identity(nc, nc))
        .kronecker(&ones);
    a / (factor * factor) as f64
}

/// Solves the exact normal equations
/// `sum_i g_i L_i^2 A_i^T A_i Z v_i^T v_i + (lambda sigma^2 / K) Z diag(s)^-2 = rhs`
/// as one dense `(N_p K) x (N_p K)` system.
pub fn dense_oracle_solve(
    msi: &MultispectralImage,
    model: &SubspaceModel,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let np = msi.num_pixels();
    let k = model.rank();
    let n = np * k;
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::invalid(format!(
            "dense oracle limited to N_p*K <= {DENSE_ORACLE_LIMIT}, got {n}"
        )));
    }
    let gamma = resolution_weights(&msi.distinct_factors(), config.gamma_hr)?;
    let mut system = DMatrix::zeros(n, n);
    let mut rhs = DMatrix::zeros(np, k);
    for (i, band) in msi.bands.iter().enumerate() {
        let l = band.factor;
        let a = dense_block_average(msi.finest_rows, msi.finest_cols, l);
        let gram = a.transpose() * &a;
        let wgt = gamma.get(l)? * (l * l) as f64;
        let v = model.basis.row(i);
        let outer = v.transpose() * v;
        system += wgt * outer.kronecker(&gram);
        let y = DVector::from_column_slice(band.grid.as_slice()).add_scalar(-model.mean[i]);
        rhs += wgt * (a.transpose() * y) * v;
    }
    let reg = regularizer_weight(config.lambda, config.sigma, k);
    for j in 0..k {
        let s = model.singular_values[j];
        for p in 0..np {
            system[(j * np + p, j * np + p)] += reg / (s * s);
        }
    }
    let b = DVector::from_column_slice(rhs.as_slice());
    let sol = system
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("dense normal equations are singular".to_string()))?;
    Ok(DMatrix::from_column_slice(np, k, sol.as_slice()))
}

/// ADMM as a registered coefficient solver.
#[derive(Debug, Clone, Copy)]
pub struct AdmmSolver {
    pub config: AdmmConfig,
    pub allow_nonconverged: bool,
}

impl CoefficientSolver for AdmmSolver {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn solve(
        &self,
        msi: &MultispectralImage,
        model: &SubspaceModel,
        config: &SolverConfig,
    ) -> Result<CoefficientEstimate> {
        let out = run_admm(msi, model, config, &self.config)?;
        let d = &out.diagnostics;
        if !d.converged && !self.allow_nonconverged {
            return Err(Error::NotConverged {
                iterations: d.iterations,
                primal: d.primal_residual,
                dual: d.dual_residual,
            });
        }
        Ok(CoefficientEstimate {
            coefficients: out.z,
            diagnostics: Some(out.diagnostics),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msi::Band;
    use crate::solver::exact_loss;
    use nalgebra::RowDVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthonormal(rng: &mut ChaCha8Rng, nb: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(nb, k, |_, _| rng.random_range(-1.0..1.0)).qr().q()
    }

    fn tiny_instance(seed: u64, n: usize, factors: &[usize], k: usize) -> (MultispectralImage, SubspaceModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bands = factors
            .iter()
            .map(|&l| Band::new(Grid::from_fn(n / l, n / l, |_, _| rng.random_range(0.0..1.0)), l))
            .collect();
        let msi = MultispectralImage::with_default_names(n, n, bands);
        let nb = factors.len();
        let mean = RowDVector::from_fn(nb, |_, _| rng.random_range(0.3..0.7));
        let s: Vec<f64> = (0..k).map(|j| 2.0 / (j + 1) as f64).collect();
        let model = SubspaceModel::new(mean, orthonormal(&mut rng, nb, k), s).unwrap();
        (msi, model)
    }

    #[test]
    fn shifted_gram_inverse_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, l) in [(4, 2), (6, 3), (12, 6), (4, 1)] {
            for c in [1e-3, 0.37, 5.0] {
                let b = Grid::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let got = invert_shifted_gram(&b, l, c).unwrap();
                let a = dense_block_average(n, n, l);
                let m = a.transpose() * &a + DMatrix::identity(n * n, n * n) * c;
                let want = m.try_inverse().unwrap() * DVector::from_column_slice(b.as_slice());
                let scale = want.amax().max(1.0);
                for (g, w) in got.as_slice().iter().zip(want.iter()) {
                    assert!((g - w).abs() < 1e-12 * scale, "n={n} L={l} c={c}");
                }
            }
        }
        assert!(invert_shifted_gram(&Grid::zeros(2, 2), 2, 0.0).is_err());
    }

    #[test]
    fn x_step_full_resolution_band_is_weighted_average() {
        let (msi, model) = tiny_instance(3, 4, &[1, 1, 2], 2);
        let cfg = SolverConfig::default();
        let admm = AdmmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = DMatrix::from_fn(16, 2, |_, _| rng.random_range(-0.5..0.5));
        let mut state = AdmmState::warm_start(z.clone(), &model).unwrap();
        state.w = DMatrix::from_fn(16, 3, |_, _| rng.random_range(-0.01..0.01));
        let x = x_step(&state, &msi, &model, &cfg, &admm).unwrap();
        let target = synthesize(&z, &model).unwrap() - &state.w;
        let gamma = resolution_weights(&[1, 2], cfg.gamma_hr).unwrap();
        let c = admm.rho * cfg.sigma * cfg.sigma / (3.0 * gamma.get(1).unwrap());
        for p in 0..16 {
            let want = (msi.bands[0].grid.as_slice()[p] + c * target[(p, 0)]) / (1.0 + c);
            assert!((x[(p, 0)] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn x_step_follows_target_for_large_rho() {
        let (msi, model) = tiny_instance(5, 4, &[1, 2, 2], 2);
        let cfg = SolverConfig::default();
        let admm = AdmmConfig {
            rho: 1e8,
            ..Default::default()
        };
        let z = DMatrix::from_element(16, 2, 0.1);
        let state = AdmmState::warm_start(z.clone(), &model).unwrap();
        let x = x_step(&state, &msi, &model, &cfg, &admm).unwrap();
        let target = synthesize(&z, &model).unwrap();
        assert!((x - target).abs().max() < 1e-4);
    }

    #[test]
    fn z_step_examples() {
        let (_, model) = tiny_instance(6, 4, &[1, 2, 1], 2);
        let cfg = SolverConfig::default();
        let admm = AdmmConfig::default();
        let mut x = DMatrix::zeros(16, 3);
        for mut row in x.row_iter_mut() {
            row.copy_from(&model.mean);
        }
        let w = DMatrix::zeros(16, 3);
        assert!(z_step(&x, &w, &model, &cfg, &admm).iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(16, 3, |_, _| rng.random_range(0.0..1.0));
        let w = DMatrix::from_fn(16, 3, |_, _| rng.random_range(-0.1..0.1));
        let tiny = SolverConfig {
            lambda: 1e-10,
            ..cfg
        };
        let z = z_step(&x, &w, &model, &tiny, &admm);
        let mut proj = &x + &w;
        for mut row in proj.row_iter_mut() {
            row -= &model.mean;
        }
        let proj = proj * &model.basis;
        assert!((z - proj).abs().max() < 1e-6);
    }

    #[test]
    fn z_step_scalar_formula() {
        let model = SubspaceModel::new(
            RowDVector::from_row_slice(&[0.2, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.6, 0.8]),
            vec![0.5],
        )
        .unwrap();
        let cfg = SolverConfig {
            rank: 1,
            lambda: 0.3,
            ..Default::default()
        };
        let admm = AdmmConfig {
            rho: 2.0,
            ..Default::default()
        };
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let w = DMatrix::from_row_slice(1, 2, &[0.1, -0.1]);
        let z = z_step(&x, &w, &model, &cfg, &admm);
        // projection 0.6*0.9 + 0.8*1.8 = 1.98; shrink (rho/b) / (lambda/(K s^2) + rho/b)
        let want = 1.98 * 1.0 / (0.3 / 0.25 + 1.0);
        assert!((z[(0, 0)] - want).abs() < 1e-14);
    }

    #[test]
    fn oracle_scalar_case_matches_shrinkage() {
        let y = Grid::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 16.0 - 0.4);
        let msi = MultispectralImage::with_default_names(
            4,
            4,
            vec![Band::new(y.clone(), 1), Band::new(Grid::zeros(4, 4), 1)],
        );
        let s = 0.25;
        let model = SubspaceModel::new(
            RowDVector::from_row_slice(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            vec![s],
        )
        .unwrap();
        let cfg = SolverConfig {
            rank: 1,
            ..Default::default()
        };
        let z = dense_oracle_solve(&msi, &model, &cfg).unwrap();
        let shrink = 0.99 / (0.99 + 0.5 * 0.0004 / (s * s));
        for (zv, yv) in z.iter().zip(y.as_slice()) {
            assert!((zv - shrink * yv).abs() < 1e-13);
        }
    }

    #[test]
    fn oracle_satisfies_exact_normal_equations() {
        let (msi, model) = tiny_instance(9, 6, &[1, 3, 1, 2], 2);
        let cfg = SolverConfig::default();
        let z = dense_oracle_solve(&msi, &model, &cfg).unwrap();
        let gamma = resolution_weights(&msi.distinct_factors(), cfg.gamma_hr).unwrap();
        let system = assemble_system(&msi, &model, &cfg).unwrap();
        let mut lhs = DMatrix::zeros(36, 2);
        for (i, band) in msi.bands.iter().enumerate() {
            let l = band.factor;
            let op = BlockAverageOp::new(l, 6, 6).unwrap();
            let v = model.basis.row(i);
            let xi = &z * v.transpose();
            let g = op.gram(&Grid::new(6, 6, xi.as_slice().to_vec()).unwrap()).unwrap();
            let wgt = gamma.get(l).unwrap() * (l * l) as f64;
            lhs += wgt * DMatrix::from_column_slice(36, 1, g.as_slice()) * v;
        }
        let reg = regularizer_weight(cfg.lambda, cfg.sigma, 2);
        for j in 0..2 {
            let s = model.singular_values[j];
            let add = z.column(j) * (reg / (s * s));
            let mut col = lhs.column_mut(j);
            col += add;
        }
        let resid = (&lhs - &system.rhs).norm() / system.rhs.norm();
        assert!(resid < 1e-10, "residual {resid}");
        assert!(dense_oracle_solve(
            &tiny_instance(1, 48, &[1, 2], 2).0,
            &tiny_instance(1, 48, &[1, 2], 2).1,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn admm_agrees_with_dense_oracle() {
        let (msi, model) = tiny_instance(11, 8, &[1, 1, 2], 2);
        let cfg = SolverConfig::default();
        let out = run_admm(&msi, &model, &cfg, &AdmmConfig::default()).unwrap();
        assert!(out.diagnostics.converged, "{:?}", out.diagnostics.iterations);
        let oracle = dense_oracle_solve(&msi, &model, &cfg).unwrap();
        let rel = (&out.z - &oracle).norm() / oracle.norm();
        assert!(rel < 1e-6, "relative error {rel}");

        let pl = solve_pixel_linear(&assemble_system(&msi, &model, &cfg).unwrap()).unwrap();
        let exact = exact_loss(&msi, &model, &cfg, &out.z).unwrap();
        assert!(exact <= exact_loss(&msi, &model, &cfg, &pl).unwrap() + 1e-9);
    }

    #[test]
    fn admm_recovers_consistent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 8;
        let factors = [1usize, 1, 2, 2];
        let model = SubspaceModel::new(
            RowDVector::from_row_slice(&[0.4, 0.5, 0.6, 0.5]),
            orthonormal(&mut rng, 4, 2),
            vec![1.0, 0.5],
        )
        .unwrap();
        // smooth coefficients
        let z0 = DMatrix::from_fn(n * n, 2, |p, j| {
            let (r, c) = ((p / n) as f64, (p % n) as f64);
            0.2 * ((0.3 * r + 0.2 * c + j as f64).sin())
        });
        let x = synthesize(&z0, &model).unwrap();
        let bands = factors
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let g = Grid::new(n, n, x.column(i).as_slice().to_vec()).unwrap();
                Band::new(BlockAverageOp::new(l, n, n).unwrap().apply(&g).unwrap(), l)
            })
            .collect();
        let msi = MultispectralImage::with_default_names(n, n, bands);
        let cfg = SolverConfig {
            lambda: 1e-10,
            ..Default::default()
        };
        let out = run_admm(&msi, &model, &cfg, &AdmmConfig::default()).unwrap();
        let rel = (&out.z - &z0).norm() / z0.norm();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn admm_zero_data_converges_immediately() {
        let bands = vec![
            Band::new(Grid::zeros(4, 4), 1),
            Band::new(Grid::zeros(2, 2), 2),
        ];
        let msi = MultispectralImage::with_default_names(4, 4, bands);
        let model = SubspaceModel::new(
            RowDVector::zeros(2),
            DMatrix::identity(2, 2),
            vec![1.0, 0.5],
        )
        .unwrap();
        let out = run_admm(&msi, &model, &SolverConfig::default(), &AdmmConfig::default()).unwrap();
        assert!(out.diagnostics.converged);
        assert!(out.diagnostics.iterations <= 2);
        assert!(out.z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonconvergence_is_flagged() {
        let (msi, model) = tiny_instance(2, 8, &[1, 2, 2], 2);
        let admm = AdmmConfig {
            max_iters: 2,
            ..Default::default()
        };
        let out = run_admm(&msi, &model, &SolverConfig::default(), &admm).unwrap();
        assert!(!out.diagnostics.converged);
        assert_eq!(out.diagnostics.primal_history.len(), 2);

        let strict = AdmmSolver {
            config: admm,
            allow_nonconverged: false,
        };
        let err = strict.solve(&msi, &model, &SolverConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let lax = AdmmSolver {
            config: admm,
            allow_nonconverged: true,
        };
        assert!(lax.solve(&msi, &model, &SolverConfig::default()).is_ok());
    }
}
