//! Runtime scaling of the coefficient solve with the number of pixels.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::Result;
use crate::eval::{generate_synthetic_scene, SimulationMode};
use crate::msi::{normalize_image, MultispectralImage};
use crate::solver::{assemble_system, solve_pixel_linear};
use crate::subspace::{estimate_subspace, SubsampleSpec};

/// Band factors of the benchmark scenes.
pub const BENCH_FACTORS: [usize; 12] = [1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 4, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub size: usize,
    pub num_pixels: usize,
    /// Fastest of the repeats: right-hand side assembly plus per-pixel solve.
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub factors: Vec<usize>,
    pub rank: usize,
    pub repeats: usize,
    pub points: Vec<BenchPoint>,
    /// Seconds per pixel between the smallest and largest size, relative to
    /// the smallest (1 means perfectly linear).
    pub linearity_ratio: f64,
}

/// Seeded `size x size` observation with [`BENCH_FACTORS`].
pub fn bench_scene(size: usize, seed: u64) -> Result<MultispectralImage> {
    let scene = generate_synthetic_scene(size, size, 3, size as f64 / 32.0, &BENCH_FACTORS, seed)?;
    scene.observe(SimulationMode::Block, 0.002, seed)
}

/// Fastest wall-clock of the coefficient solve over `repeats` runs, with the
/// subspace fitted once beforehand.
pub fn time_coefficient_solve(msi: &MultispectralImage, config: &SolverConfig, repeats: usize) -> Result<f64> {
    let (normalized, _) = normalize_image(msi)?;
    let spec = SubsampleSpec {
        count: config.sample_count(msi.num_pixels()),
        seed: config.seed,
    };
    let model = estimate_subspace(&normalized, config.rank, spec)?;
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let z = solve_pixel_linear(&assemble_system(&normalized, &model, config)?)?;
        best = best.min(start.elapsed().as_secs_f64());
        std::hint::black_box(z);
    }
    Ok(best)
}

pub fn run_scaling_benchmark(sizes: &[usize], config: &SolverConfig, repeats: usize) -> Result<BenchReport> {
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let msi = bench_scene(size, 0)?;
        points.push(BenchPoint {
            size,
            num_pixels: msi.num_pixels(),
            solve_seconds: time_coefficient_solve(&msi, config, repeats)?,
        });
    }
    let linearity_ratio = match (points.first(), points.last()) {
        (Some(a), Some(b)) if a.solve_seconds > 0.0 => {
            (b.solve_seconds / b.num_pixels as f64) / (a.solve_seconds / a.num_pixels as f64)
        }
        _ => f64::NAN,
    };
    Ok(BenchReport {
        factors: BENCH_FACTORS.to_vec(),
        rank: config.rank,
        repeats,
        points,
        linearity_ratio,
    })
}
