//! Monte Carlo studies: strong convergence, L² conservation, slope fitting.

mod conservation;
mod convergence;
mod fit;

pub use conservation::{run_conservation, ConservationReport, DriftSeries};
pub use convergence::{
    dyadic_steps, probability_convergence_check, run_convergence, CellEstimate, ConvergenceConfig,
    ConvergenceReport, ProbabilityRow, SchemeSlope, EXACT_REGIME_TOL, MAX_FAILURE_FRACTION,
};
pub use fit::{fit_slope, SlopeFit};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, SpectralGrid};
use crate::model::{Model, Potential};

/// `u₀(x) = exp(-(x - π)² / 2)`.
pub fn gaussian_initial(grid: &SpectralGrid) -> ComplexField {
    grid.sample_real(|x| (-0.5 * (x - PI) * (x - PI)).exp())
}

/// A model together with its initial condition.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: Model,
    pub initial: ComplexField,
}

impl Problem {
    /// `V = cos` with the Gaussian initial value on `[0, 2π)`.
    pub fn standard(points: usize) -> Result<Self> {
        let model = Model::new(SpectralGrid::periodic_2pi(points)?, Potential::Cosine)?;
        Ok(Self::with_gaussian(model))
    }

    pub fn with_gaussian(model: Model) -> Self {
        let initial = gaussian_initial(model.grid());
        Problem { model, initial }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
