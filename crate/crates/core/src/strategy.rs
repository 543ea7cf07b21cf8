//! Interchangeable coefficient solvers, selected by name at runtime.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::admm::{AdmmDiagnostics, AdmmSolver};
use crate::config::{AdmmConfig, SolverConfig};
use crate::error::{Error, Result};
use crate::msi::MultispectralImage;
use crate::solver::{assemble_system, solve_pixel_linear};
use crate::subspace::SubspaceModel;

#[derive(Debug, Clone)]
pub struct CoefficientEstimate {
    /// N_p x K
    pub coefficients: DMatrix<f64>,
    pub diagnostics: Option<AdmmDiagnostics>,
}

/// Estimates the coefficient image from normalized measurements and a fitted subspace.
pub trait CoefficientSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(
        &self,
        msi: &MultispectralImage,
        model: &SubspaceModel,
        config: &SolverConfig,
    ) -> Result<CoefficientEstimate>;
}

/// Closed-form per-pixel solve under the diagonal Gram approximation.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelLinearSolver;

impl CoefficientSolver for PixelLinearSolver {
    fn name(&self) -> &'static str {
        "pixel-linear"
    }

    fn solve(
        &self,
        msi: &MultispectralImage,
        model: &SubspaceModel,
        config: &SolverConfig,
    ) -> Result<CoefficientEstimate> {
        let system = assemble_system(msi, model, config)?;
        Ok(CoefficientEstimate {
            coefficients: solve_pixel_linear(&system)?,
            diagnostics: None,
        })
    }
}

#[derive(Default)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn CoefficientSolver>>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `pixel-linear` and `admm` with the given ADMM settings.
    pub fn builtin(admm: AdmmConfig, allow_nonconverged: bool) -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(PixelLinearSolver));
        reg.register(Box::new(AdmmSolver {
            config: admm,
            allow_nonconverged,
        }));
        reg
    }

    /// Adds a solver, replacing any previous one with the same name.
    pub fn register(&mut self, solver: Box<dyn CoefficientSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn CoefficientSolver> {
        self.solvers.get(name).map(|s| s.as_ref()).ok_or_else(|| {
            Error::invalid(format!(
                "unknown solver '{name}' (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Zero;

    impl CoefficientSolver for Zero {
        fn name(&self) -> &'static str {
            "zero"
        }

        fn solve(
            &self,
            msi: &MultispectralImage,
            model: &SubspaceModel,
            _config: &SolverConfig,
        ) -> Result<CoefficientEstimate> {
            Ok(CoefficientEstimate {
                coefficients: DMatrix::zeros(msi.num_pixels(), model.rank()),
                diagnostics: None,
            })
        }
    }

    #[test]
    fn builtin_names_and_lookup() {
        let reg = SolverRegistry::builtin(AdmmConfig::default(), false);
        assert_eq!(reg.names(), vec!["admm", "pixel-linear"]);
        assert_eq!(reg.get("admm").unwrap().name(), "admm");
        let err = reg.get("fista").err().unwrap();
        assert!(err.to_string().contains("available: admm, pixel-linear"));
    }

    #[test]
    fn custom_solver_can_be_registered() {
        let mut reg = SolverRegistry::builtin(AdmmConfig::default(), false);
        reg.register(Box::new(Zero));
        assert_eq!(reg.get("zero").unwrap().name(), "zero");
        assert_eq!(reg.names().len(), 3);
    }
}
