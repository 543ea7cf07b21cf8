//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use msisr::admm::AdmmDiagnostics;
use msisr::analysis::{operator_error_on_image, solver_gap, verify_bounds};
use msisr::bench::run_scaling_benchmark;
use msisr::bundle::{export_png, read_bundle, write_bundle, Stretch};
use msisr::eval::{evaluate_reconstruction, generate_synthetic_scene, simulate_dataset, SimulationMode, SimulationSpec};
use msisr::msi::{denormalize_band, Band, Grid, MultispectralImage};
use msisr::pipeline::PipelineResult;
use msisr::{Error, Result, RunConfig, SolverRegistry};

#[derive(Parser)]
#[command(name = "msisr", version, about = "Multispectral image super-resolution")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic low-rank scene as a full-resolution bundle.
    Synth {
        #[arg(long, default_value_t = 96)]
        rows: usize,
        #[arg(long, default_value_t = 96)]
        cols: usize,
        /// Rank of the scene.
        #[arg(long, default_value_t = 2)]
        rank: usize,
        /// Gaussian length scale of the coefficient fields, in pixels.
        #[arg(long, default_value_t = 4.0)]
        smoothness: f64,
        /// Number of bands.
        #[arg(long, default_value_t = 6)]
        bands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Degrade a bundle to reduced resolution.
    Simulate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1)]
        factor: usize,
        /// block | aa
        #[arg(long, default_value = "block")]
        mode: SimulationMode,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output factor per band, comma separated (default: keep each band's factor).
        #[arg(long, value_delimiter = ',')]
        target_ls: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve every band to the finest grid.
    Superres {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "pixel-linear")]
        solver: String,
        #[arg(long)]
        no_residual_correction: bool,
        /// JSON file with solver settings and an optional "admm" block.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the subsampling seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the uncorrected subspace reconstruction.
        #[arg(long)]
        dump_svd: Option<PathBuf>,
        #[arg(long)]
        timings: Option<PathBuf>,
        /// Write ADMM iteration diagnostics.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Accept an ADMM result that hit the iteration limit.
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// NRMSE and SSIM of a prediction against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Low-resolution input; its band factors select the bands averaged in the summary.
        #[arg(long = "input")]
        input: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Check the operator-deviation identity and the coefficient-error bound.
    VerifyBounds {
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Gap between the pixel-linear and ADMM pipelines on one input.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        allow_nonconverged: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Coefficient-solve runtime against image size.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write one band as an 8-bit grayscale PNG.
    ExportPng {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        band: String,
        #[arg(long)]
        out: PathBuf,
        /// p2p98 | minmax
        #[arg(long, default_value = "p2p98")]
        stretch: Stretch,
    },
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => RunConfig::default(),
    };
    cfg.solver.validate()?;
    cfg.admm.validate()?;
    Ok(cfg)
}

fn run_pipeline(
    msi: &MultispectralImage,
    cfg: &RunConfig,
    solver: &str,
    correction: bool,
    allow_nonconverged: bool,
) -> Result<PipelineResult> {
    let registry = SolverRegistry::builtin(cfg.admm, allow_nonconverged);
    let solver = registry.get(solver)?;
    msisr::super_resolve_with(msi, &cfg.solver, solver, correction)
}

fn diagnostics_summary(d: &AdmmDiagnostics) -> serde_json::Value {
    json!({
        "iterations": d.iterations,
        "converged": d.converged,
        "primal_residual": d.primal_residual,
        "dual_residual": d.dual_residual,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            rows,
            cols,
            rank,
            smoothness,
            bands,
            seed,
            out,
        } => {
            let scene = generate_synthetic_scene(rows, cols, rank, smoothness, &vec![1; bands], seed)?;
            write_bundle(&scene.gt, &out)
        }
        Command::Simulate {
            gt,
            factor,
            mode,
            noise,
            seed,
            target_ls,
            out,
        } => {
            let gt = read_bundle(&gt)?;
            let spec = SimulationSpec {
                factor,
                mode,
                noise_sigma: noise,
                seed,
                target_ls,
            };
            write_bundle(&simulate_dataset(&gt, &spec)?, &out)
        }
        Command::Superres {
            input,
            out,
            solver,
            no_residual_correction,
            config,
            seed,
            dump_svd,
            timings,
            diagnostics,
            allow_nonconverged,
        } => {
            let msi = read_bundle(&input)?;
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.solver.seed = s;
            }
            let res = run_pipeline(&msi, &cfg, &solver, !no_residual_correction, allow_nonconverged)?;
            write_bundle(&res.msi_out, &out)?;
            if let Some(path) = dump_svd {
                let (rows, cols) = (msi.finest_rows, msi.finest_cols);
                let bands = (0..msi.num_bands())
                    .map(|i| {
                        let g = Grid::new(rows, cols, res.x_svd.column(i).iter().copied().collect())?;
                        Ok(denormalize_band(&Band::new(g, 1), res.norm_params[i]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_bundle(&MultispectralImage::new(rows, cols, bands, msi.band_names.clone()), &path)?;
            }
            if let Some(path) = timings {
                write_json(&path, &json!({ "solver": res.solver, "timings": res.timings }))?;
            }
            if let Some(d) = &res.diagnostics {
                eprintln!(
                    "admm: {} iterations, converged {}, primal {:.3e}, dual {:.3e}",
                    d.iterations, d.converged, d.primal_residual, d.dual_residual
                );
                if let Some(path) = diagnostics {
                    write_json(&path, d)?;
                }
            }
            Ok(())
        }
        Command::Eval {
            gt,
            pred,
            input,
            report,
        } => {
            let gt = read_bundle(&gt)?;
            let pred = read_bundle(&pred)?;
            let factors = match input {
                Some(p) => read_bundle(&p)?.factors(),
                None => gt.factors(),
            };
            let rep = evaluate_reconstruction(&gt, &pred, &factors, None)?;
            eprintln!("mean NRMSE {:.6}, mean SSIM {:.6}", rep.mean_nrmse, rep.mean_ssim);
            write_json(&report, &rep)
        }
        Command::VerifyBounds { seeds, config, report } => {
            let cfg = load_config(config.as_deref())?;
            let rep = verify_bounds(seeds, &cfg.solver)?;
            write_json(&report, &rep)?;
            let kappa_ok = rep.kappa_minimizer.iter().all(|(_, ok)| *ok);
            eprintln!(
                "deviation max error {:.3e}, kappa minimizer {}, bound violations {}/{}, ratio identity max error {:.3e}",
                rep.max_deviation_error,
                kappa_ok,
                rep.violations,
                rep.instances.len(),
                rep.max_ratio_identity_error
            );
            if rep.violations > 0 || !kappa_ok || rep.max_deviation_error > 1e-13 || rep.max_ratio_identity_error > 1e-10 {
                return Err(Error::Numerical("bound checks failed; see report".to_string()));
            }
            Ok(())
        }
        Command::Compare {
            input,
            config,
            allow_nonconverged,
            report,
        } => {
            let msi = read_bundle(&input)?;
            let cfg = load_config(config.as_deref())?;
            let t0 = Instant::now();
            let pl = run_pipeline(&msi, &cfg, "pixel-linear", true, false)?;
            let t_pl = t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let ad = run_pipeline(&msi, &cfg, "admm", true, allow_nonconverged)?;
            let t_ad = t0.elapsed().as_secs_f64();
            let (rows, cols) = (msi.finest_rows, msi.finest_cols);
            let mut operator_error = Vec::new();
            for (i, band) in msi.bands.iter().enumerate().filter(|(_, b)| b.factor > 1) {
                let g = Grid::new(rows, cols, ad.x_svd.column(i).iter().copied().collect())?;
                operator_error.push(json!({
                    "band": msi.band_names[i],
                    "L": band.factor,
                    "error": operator_error_on_image(&g, band.factor, None)?,
                }));
            }
            let gap = solver_gap(&pl, &ad)?;
            eprintln!("per-pixel gap {gap:.4e}");
            write_json(
                &report,
                &json!({
                    "solver_gap": gap,
                    "operator_error": operator_error,
                    "admm": ad.diagnostics.as_ref().map(diagnostics_summary),
                    "timings": { "pixel_linear_seconds": t_pl, "admm_seconds": t_ad },
                }),
            )
        }
        Command::Bench { sizes, repeats, report } => {
            let rep = run_scaling_benchmark(&sizes, &Default::default(), repeats)?;
            for p in &rep.points {
                eprintln!("{:>5}x{:<5} {:.4e} s", p.size, p.size, p.solve_seconds);
            }
            write_json(&report, &rep)
        }
        Command::ExportPng {
            input,
            band,
            out,
            stretch,
        } => {
            let msi = read_bundle(&input)?;
            let i = msi.band_index(&band).ok_or_else(|| {
                Error::invalid(format!("no band '{band}' (have: {})", msi.band_names.join(", ")))
            })?;
            export_png(&msi.bands[i].grid, &out, stretch)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
