use msisr::admm::run_admm;
use msisr::analysis::solver_gap;
use msisr::eval::{generate_synthetic_scene, nrmse, SimulationMode, SyntheticScene};
use msisr::msi::normalize_image;
use msisr::pipeline::{bicubic_baseline, super_resolve, super_resolve_admm};
use msisr::solver::exact_loss;
use msisr::{AdmmConfig, PipelineResult, SolverConfig};

const TWO_HR: [usize; 6] = [1, 1, 2, 2, 2, 2];
const SENTINEL_LIKE: [usize; 12] = [6, 1, 1, 1, 2, 2, 2, 1, 2, 6, 2, 2];

fn worst_nrmse(scene: &SyntheticScene, res: &PipelineResult) -> f64 {
    scene
        .gt
        .bands
        .iter()
        .zip(&res.msi_out.bands)
        .map(|(t, e)| nrmse(&t.grid, &e.grid).unwrap())
        .fold(0.0, f64::max)
}

/// Smallest singular value of the basis restricted to the full-resolution bands.
fn hr_conditioning(scene: &SyntheticScene, ls: &[usize]) -> f64 {
    let hr: Vec<usize> = (0..ls.len()).filter(|&i| ls[i] == 1).collect();
    scene.basis.select_rows(hr.iter()).singular_values().min()
}

#[test]
fn consistent_low_rank_data_is_recovered_by_the_exact_solver() {
    let cfg = SolverConfig {
        lambda: 1e-8,
        ..Default::default()
    };
    for seed in 0..16 {
        let scene = generate_synthetic_scene(48, 48, 2, 4.0, &TWO_HR, seed).unwrap();
        let msi = scene.observe(SimulationMode::Block, 0.0, 0).unwrap();
        let res = super_resolve_admm(&msi, &cfg, &AdmmConfig::default()).unwrap();
        let e = worst_nrmse(&scene, &res);
        assert!(e < 1e-3, "seed {seed}: {e}");
    }
}

#[test]
fn pixel_linear_recovery_tightens_as_coarse_weight_vanishes() {
    for seed in 0..16 {
        let scene = generate_synthetic_scene(48, 48, 2, 4.0, &TWO_HR, seed).unwrap();
        let msi = scene.observe(SimulationMode::Block, 0.0, 0).unwrap();
        let errs: Vec<f64> = [0.99, 0.9999, 0.999999]
            .iter()
            .map(|&g| {
                let cfg = SolverConfig {
                    lambda: 1e-8,
                    gamma_hr: g,
                    ..Default::default()
                };
                worst_nrmse(&scene, &super_resolve(&msi, &cfg).unwrap())
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "seed {seed}: {errs:?}");
        assert!(errs[2] < 1e-3, "seed {seed}: {errs:?}");
    }
}

#[test]
fn pipelines_agree_on_well_conditioned_consistent_data() {
    let scene = generate_synthetic_scene(48, 48, 2, 4.0, &SENTINEL_LIKE, 3).unwrap();
    let msi = scene.observe(SimulationMode::Block, 0.0, 0).unwrap();
    let cfg = SolverConfig {
        lambda: 1e-8,
        ..Default::default()
    };
    let pl = super_resolve(&msi, &cfg).unwrap();
    let ad = super_resolve_admm(&msi, &cfg, &AdmmConfig::default()).unwrap();
    for (i, &l) in SENTINEL_LIKE.iter().enumerate() {
        let truth = &scene.gt.bands[i].grid;
        let a = nrmse(truth, &pl.msi_out.bands[i].grid).unwrap();
        let b = nrmse(truth, &ad.msi_out.bands[i].grid).unwrap();
        // the 6x bands carry the error of a subspace fitted to blurred inputs,
        // which both solvers share
        let tol = if l == 6 { 2e-2 } else { 1e-3 };
        assert!(a < tol && b < tol, "band {i} (L={l}): {a} {b}");
        if l == 6 {
            assert!((a - b).abs() < 0.05 * b, "band {i}: {a} vs {b}");
        }
    }
    assert!(solver_gap(&pl, &ad).unwrap() < 1e-4);
}

#[test]
fn super_resolution_beats_bicubic() {
    for seed in 0..20 {
        let scene = generate_synthetic_scene(48, 48, 2, 4.0, &SENTINEL_LIKE, seed).unwrap();
        let msi = scene.observe(SimulationMode::Block, 0.0, 0).unwrap();
        let sr = super_resolve(&msi, &SolverConfig::default()).unwrap();
        let bc = bicubic_baseline(&msi).unwrap();
        let spans = hr_conditioning(&scene, &SENTINEL_LIKE) >= 0.2;
        let (mut ours, mut base) = (0.0, 0.0);
        for i in (0..SENTINEL_LIKE.len()).filter(|&i| SENTINEL_LIKE[i] > 1) {
            let truth = &scene.gt.bands[i].grid;
            let a = nrmse(truth, &sr.msi_out.bands[i].grid).unwrap();
            let b = nrmse(truth, &bc.bands[i].grid).unwrap();
            // per band only when the full-resolution bands span the subspace
            assert!(!spans || a < b, "seed {seed} band {i}: {a} vs {b}");
            ours += a;
            base += b;
        }
        assert!(ours < base, "seed {seed}: {ours} vs {base}");
    }
}

#[test]
fn admm_never_increases_the_exact_objective() {
    let scene = generate_synthetic_scene(24, 24, 2, 2.0, &TWO_HR, 13).unwrap();
    let msi = scene.observe(SimulationMode::Antialiased, 0.01, 1).unwrap();
    let cfg = SolverConfig::default();
    let pl = super_resolve(&msi, &cfg).unwrap();
    let (normalized, _) = normalize_image(&msi).unwrap();
    let out = run_admm(&normalized, &pl.model, &cfg, &AdmmConfig::default()).unwrap();
    assert!(out.diagnostics.converged);
    let loss = |z| exact_loss(&normalized, &pl.model, &cfg, z).unwrap();
    assert!(loss(&out.z) <= loss(&pl.coefficients) + 1e-9);
}
