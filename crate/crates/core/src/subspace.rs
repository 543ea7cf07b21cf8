//! Spectral subspace estimation: coarse upsampling of every band to the
//! finest grid, random pixel subsampling, mean removal and a truncated SVD
//! computed from the small band-by-band Gram matrix.

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msi::MultispectralImage;
use crate::sampling::BicubicUpsampleOp;

/// Mean spectrum, orthonormal spectral basis (N_b x K) and the matching
/// singular values in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    pub mean: RowDVector<f64>,
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl SubspaceModel {
    pub fn new(mean: RowDVector<f64>, basis: DMatrix<f64>, singular_values: Vec<f64>) -> Result<Self> {
        if basis.nrows() != mean.len() || basis.ncols() != singular_values.len() {
            return Err(Error::dim(format!(
                "basis {}x{} inconsistent with mean of {} and {} singular values",
                basis.nrows(),
                basis.ncols(),
                mean.len(),
                singular_values.len()
            )));
        }
        Ok(SubspaceModel {
            mean,
            basis,
            singular_values,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn num_bands(&self) -> usize {
        self.basis.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub count: usize,
    pub seed: u64,
}

/// `max(ceil(sqrt(N_p)), 4K)`, capped at `N_p`.
pub fn default_sample_count(num_pixels: usize, rank: usize) -> usize {
    let root = (num_pixels as f64).sqrt().ceil() as usize;
    root.max(4 * rank).min(num_pixels)
}

/// N_p x N_b matrix of bicubically upsampled bands; `L = 1` columns are copied verbatim.
pub fn coarse_upsample_stack(msi: &MultispectralImage) -> Result<DMatrix<f64>> {
    let columns: Vec<Vec<f64>> = msi
        .bands
        .par_iter()
        .map(|band| {
            let op = BicubicUpsampleOp::new(band.factor, band.rows(), band.cols())?;
            let up = op.apply(&band.grid)?;
            up.ensure_shape(msi.finest_rows, msi.finest_cols)?;
            Ok(up.into_vec())
        })
        .collect::<Result<_>>()?;
    let np = msi.num_pixels();
    let mut stack = DMatrix::zeros(np, columns.len());
    for (i, col) in columns.iter().enumerate() {
        stack.column_mut(i).copy_from_slice(col);
    }
    Ok(stack)
}

/// Row indices drawn uniformly without replacement by partial Fisher-Yates.
pub fn subsample_indices(num_rows: usize, spec: SubsampleSpec) -> Result<Vec<usize>> {
    if spec.count == 0 {
        return Err(Error::invalid("subsample size must be positive"));
    }
    if spec.count > num_rows {
        return Err(Error::invalid(format!(
            "subsample size {} exceeds {num_rows} pixels",
            spec.count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut idx: Vec<usize> = (0..num_rows).collect();
    for k in 0..spec.count {
        let j = rng.random_range(k..num_rows);
        idx.swap(k, j);
    }
    idx.truncate(spec.count);
    Ok(idx)
}

pub fn subsample_rows(stack: &DMatrix<f64>, spec: SubsampleSpec) -> Result<DMatrix<f64>> {
    let idx = subsample_indices(stack.nrows(), spec)?;
    Ok(stack.select_rows(idx.iter()))
}

pub fn column_mean(d: &DMatrix<f64>) -> Result<RowDVector<f64>> {
    if d.nrows() == 0 {
        return Err(Error::invalid("cannot average an empty sample"));
    }
    Ok(d.row_mean())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors (as columns), unsorted.
pub fn jacobi_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-14 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J with J the (p, q) rotation
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Flips a vector so its largest-magnitude entry (lowest index on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Singular-value floor: `1e-8` of the largest value, or `1e-12` when all vanish.
pub fn singular_value_floor(largest: f64) -> f64 {
    if largest > 0.0 {
        1e-8 * largest
    } else {
        1e-12
    }
}

/// Top-`k` singular values (floored) and right-singular vectors of `centered`.
pub fn truncated_svd(centered: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (ns, nb) = centered.shape();
    if k == 0 || k > nb || k > ns {
        return Err(Error::invalid(format!(
            "rank K={k} must be in 1..={} for a {ns}x{nb} sample",
            nb.min(ns)
        )));
    }
    let gram = centered.tr_mul(centered);
    let (evals, evecs) = jacobi_eigen(&gram);

    let mut order: Vec<usize> = (0..nb).collect();
    // stable: ties keep lowest index first
    order.sort_by(|&i, &j| evals[j].total_cmp(&evals[i]));

    let mut values: Vec<f64> = order[..k].iter().map(|&i| evals[i].max(0.0).sqrt()).collect();
    let floor = singular_value_floor(values[0]);
    values.iter_mut().for_each(|s| *s = s.max(floor));

    let mut basis = DMatrix::zeros(nb, k);
    for (col, &i) in order[..k].iter().enumerate() {
        let mut v: Vec<f64> = evecs.column(i).iter().copied().collect();
        canonical_sign(&mut v);
        basis.column_mut(col).copy_from_slice(&v);
    }
    Ok((values, basis))
}

/// Mean and rank-`k` basis from an already subsampled `N_s x N_b` matrix.
pub fn fit_subspace(sample: &DMatrix<f64>, k: usize) -> Result<SubspaceModel> {
    let mean = column_mean(sample)?;
    let mut centered = sample.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let (values, basis) = truncated_svd(&centered, k)?;
    SubspaceModel::new(mean, basis, values)
}

/// Upsample, subsample and fit in one call.
pub fn estimate_subspace(msi: &MultispectralImage, k: usize, spec: SubsampleSpec) -> Result<SubspaceModel> {
    let stack = coarse_upsample_stack(msi)?;
    let sample = subsample_rows(&stack, spec)?;
    fit_subspace(&sample, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msi::{Band, Grid};
    use crate::sampling::bicubic_upsample;
    use nalgebra::SymmetricEigen;
    use rand::Rng;
    use proptest::prelude::*;

    fn projector(v: &DMatrix<f64>) -> DMatrix<f64> {
        v * v.transpose()
    }

    #[test]
    fn stack_of_full_resolution_bands_is_raw_matrix() {
        let a = Grid::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        let b = a.map(|v| v * 2.0 - 1.0);
        let msi = MultispectralImage::with_default_names(3, 4, vec![Band::new(a.clone(), 1), Band::new(b.clone(), 1)]);
        let stack = coarse_upsample_stack(&msi).unwrap();
        assert_eq!(stack.column(0).as_slice(), a.as_slice());
        assert_eq!(stack.column(1).as_slice(), b.as_slice());
    }

    #[test]
    fn stack_constant_and_ramp_columns() {
        let full = Grid::filled(4, 4, 0.0);
        let ramp = Grid::from_fn(2, 2, |i, j| (i + j) as f64);
        let msi = MultispectralImage::with_default_names(
            4,
            4,
            vec![
                Band::new(full, 1),
                Band::new(Grid::filled(2, 2, 1.5), 2),
                Band::new(ramp.clone(), 2),
            ],
        );
        let stack = coarse_upsample_stack(&msi).unwrap();
        assert!(stack.column(1).iter().all(|v| (v - 1.5).abs() < 1e-14));
        let expected = bicubic_upsample(&ramp, 2).unwrap();
        assert_eq!(stack.column(2).as_slice(), expected.as_slice());
    }

    #[test]
    fn complete_subsample_is_permutation() {
        let stack = DMatrix::from_fn(20, 3, |r, c| (r * 3 + c) as f64 * 0.5);
        let spec = SubsampleSpec { count: 20, seed: 9 };
        let mut idx = subsample_indices(20, spec).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
        let d = subsample_rows(&stack, spec).unwrap();
        assert_eq!(column_mean(&d).unwrap(), column_mean(&stack).unwrap());
    }

    #[test]
    fn subsample_is_deterministic_and_single_row_exists() {
        let spec = SubsampleSpec { count: 7, seed: 42 };
        assert_eq!(subsample_indices(100, spec).unwrap(), subsample_indices(100, spec).unwrap());
        let stack = DMatrix::from_fn(10, 2, |r, c| (r * 2 + c) as f64);
        let d = subsample_rows(&stack, SubsampleSpec { count: 1, seed: 1 }).unwrap();
        assert!(stack.row_iter().any(|r| r == d.row(0)));
        assert!(subsample_indices(5, SubsampleSpec { count: 6, seed: 0 }).is_err());
    }

    #[test]
    fn column_mean_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(column_mean(&d).unwrap().as_slice(), &[2.0, 3.0]);
        let same = DMatrix::from_row_slice(3, 2, &[5.0, -1.0, 5.0, -1.0, 5.0, -1.0]);
        assert_eq!(column_mean(&same).unwrap().as_slice(), &[5.0, -1.0]);
        let d = DMatrix::from_fn(9, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 + 0.1 * r as f64);
        let mu = column_mean(&d).unwrap();
        let mut centered = d.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mu;
        }
        assert!(column_mean(&centered).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn svd_two_by_two_example() {
        let c = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, 1.0]);
        let (s, v) = truncated_svd(&c, 1).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[(0, 0)] - h).abs() < 1e-12 && (v[(1, 0)] - h).abs() < 1e-12);
    }

    #[test]
    fn svd_of_zero_matrix_uses_floor_and_identity_basis() {
        let (s, v) = truncated_svd(&DMatrix::zeros(5, 3), 2).unwrap();
        assert_eq!(s, vec![1e-12, 1e-12]);
        assert_eq!(v, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn svd_rejects_oversized_rank() {
        assert!(truncated_svd(&DMatrix::zeros(5, 3), 4).is_err());
        assert!(truncated_svd(&DMatrix::zeros(2, 3), 3).is_err());
    }

    #[test]
    fn svd_recovers_known_low_rank_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (ns, nb, k) = (60, 8, 3);
        let g = DMatrix::from_fn(nb, k, |_, _| rng.random_range(-1.0..1.0));
        let v0 = g.qr().q();
        let u = DMatrix::from_fn(ns, k, |_, _| rng.random_range(-1.0..1.0));
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 2.0, 0.7]));
        let d = &u * sigma * v0.transpose();
        let (_, v) = truncated_svd(&d, k).unwrap();
        assert!((projector(&v) - projector(&v0)).norm() < 1e-8);
        let vtv = v.transpose() * &v;
        assert!((vtv - DMatrix::identity(k, k)).norm() < 1e-10);
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let mut v = [0.3, -0.8, 0.5];
        canonical_sign(&mut v);
        assert_eq!(v, [-0.3, 0.8, -0.5]);
        let mut tie = [-0.5, 0.5];
        canonical_sign(&mut tie);
        assert_eq!(tie, [0.5, -0.5]);
    }

    proptest! {
        #[test]
        fn svd_matches_independent_eigensolver(
            seed in 0u64..1000,
            nb in 2usize..12,
            k in 1usize..4,
        ) {
            let k = k.min(nb);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ns = 30;
            let d = DMatrix::from_fn(ns, nb, |_, _| rng.random_range(-1.0..1.0));
            let (s, v) = truncated_svd(&d, k).unwrap();

            let vtv = v.transpose() * &v;
            prop_assert!((vtv - DMatrix::identity(k, k)).norm() < 1e-10);

            let gram = d.transpose() * &d;
            let eig = SymmetricEigen::new(gram);
            let mut order: Vec<usize> = (0..nb).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            for (j, &i) in order[..k].iter().enumerate() {
                let want = eig.eigenvalues[i].max(0.0).sqrt();
                prop_assert!((s[j] - want).abs() <= 1e-9 * want.max(1e-300));
            }
            // projector invariance, only where the spectrum has a gap
            let gap = if k < nb { eig.eigenvalues[order[k - 1]] - eig.eigenvalues[order[k]] } else { 1.0 };
            if gap > 1e-3 {
                let sel: Vec<usize> = order[..k].to_vec();
                let v0 = eig.eigenvectors.select_columns(sel.iter());
                prop_assert!((projector(&v) - projector(&v0)).norm() < 1e-8);
            }

            // reconstruction optimality
            let resid = &d - &d * &v * v.transpose();
            let tail: f64 = order[k..].iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
            prop_assert!((resid.norm_squared() - tail).abs() < 1e-8 * (1.0 + tail));
        }
    }
}
