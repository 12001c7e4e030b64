//! Strong-convergence studies on coupled Brownian paths.
//!
//! Every sample draws one path at the reference resolution. The reference
//! trajectory (Split at `tau_ref`) and all `(scheme, tau)` trajectories are
//! advanced in lockstep: a coarse trajectory takes one step each time the
//! reference crosses one of its grid times, consuming the tree-summed
//! increment of that interval. Nothing but the current fields is stored, so
//! the sup-over-time error costs one extra norm per coarse step.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::fit::{fit_slope, SlopeFit};
use super::{with_workers, Problem};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, SobolevIndex};
use crate::integrators::SchemeKind;
use crate::noise::BrownianPath;

/// Failure fraction above which a study is aborted.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Errors below `EXACT_REGIME_TOL · ‖u₀‖_{H^m}` count as roundoff.
pub const EXACT_REGIME_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub schemes: Vec<SchemeKind>,
    pub taus: Vec<f64>,
    pub tau_ref: f64,
    pub horizon: f64,
    pub samples: usize,
    pub norm: SobolevIndex,
    pub moment: f64,
    /// Also track `sup_n ‖u_n - u_ref(t_n)‖`.
    pub sup_error: bool,
}

/// Number of steps `horizon / tau`, required to be an exact power of two.
pub fn dyadic_steps(horizon: f64, tau: f64) -> Option<usize> {
    if !(tau > 0.0 && horizon > 0.0) {
        return None;
    }
    let n = (horizon / tau).round();
    if n < 1.0 || n > (1u64 << 40) as f64 {
        return None;
    }
    let steps = n as usize;
    ((steps as f64 * tau - horizon).abs() <= 1e-12 * horizon && steps.is_power_of_two()).then_some(steps)
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::key("schemes", "at least one scheme is required"));
        }
        if self.taus.is_empty() {
            return Err(Error::key("taus", "at least one step size is required"));
        }
        if self.samples == 0 {
            return Err(Error::key("samples", "must be positive"));
        }
        if !(self.moment >= 1.0 && self.moment.is_finite()) {
            return Err(Error::key("moment", "must be a finite real >= 1"));
        }
        if !(self.tau_ref > 0.0 && self.tau_ref < 1.0) {
            return Err(Error::key("tau_ref", "must lie in (0, 1)"));
        }
        let fine = dyadic_steps(self.horizon, self.tau_ref).ok_or_else(|| {
            Error::key("tau_ref", format!("t_end / tau_ref = {} is not a power of two", self.horizon / self.tau_ref))
        })?;
        for &tau in &self.taus {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::key("taus", format!("step {tau} does not lie in (0, 1)")));
            }
            let steps = dyadic_steps(self.horizon, tau).ok_or_else(|| {
                Error::key("taus", format!("t_end / {tau} is not a power of two"))
            })?;
            if steps > fine {
                return Err(Error::key(
                    "tau_ref",
                    format!("tau_ref = {} is coarser than ladder step {tau}; it must divide every step dyadically", self.tau_ref),
                ));
            }
        }
        Ok(())
    }

    fn fine_steps(&self) -> usize {
        dyadic_steps(self.horizon, self.tau_ref).expect("validated")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellEstimate {
    pub scheme: SchemeKind,
    pub tau: f64,
    /// `E[‖u_N - u_ref(T)‖^p]^{1/p}` over successful samples.
    pub error: f64,
    /// Delta-method standard error of `error`.
    pub stderr: f64,
    pub samples: usize,
    pub failed: usize,
    /// `E[sup_n ‖u_n - u_ref(t_n)‖^p]^{1/p}` when tracked.
    pub sup_error: Option<f64>,
    /// Terminal errors of the successful samples, in sample order.
    #[serde(skip)]
    pub per_sample: Vec<f64>,
}

impl CellEstimate {
    /// `E[X^p]^{1/p}` of the stored per-sample errors.
    pub fn moment(&self, p: f64) -> f64 {
        moment(&self.per_sample, p)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeSlope {
    pub scheme: SchemeKind,
    pub fit: Option<SlopeFit>,
    /// Every error sits at roundoff, so no slope is meaningful.
    pub exact_regime: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub config: ConvergenceConfig,
    pub seed: u64,
    pub cells: Vec<CellEstimate>,
    pub slopes: Vec<SchemeSlope>,
    /// Samples whose reference trajectory failed; excluded everywhere.
    pub failed_samples: usize,
}

impl ConvergenceReport {
    pub fn cell(&self, scheme: SchemeKind, tau: f64) -> Option<&CellEstimate> {
        self.cells.iter().find(|c| c.scheme == scheme && c.tau == tau)
    }

    pub fn slope(&self, scheme: SchemeKind) -> Option<&SchemeSlope> {
        self.slopes.iter().find(|s| s.scheme == scheme)
    }
}

fn moment(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mean = values.iter().map(|e| e.powf(p)).sum::<f64>() / values.len() as f64;
    mean.powf(1.0 / p)
}

fn moment_with_stderr(values: &[f64], p: f64) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let powers: Vec<f64> = values.iter().map(|e| e.powf(p)).collect();
    let mean = powers.iter().sum::<f64>() / n as f64;
    let estimate = mean.powf(1.0 / p);
    if n < 2 {
        return (estimate, f64::NAN);
    }
    let var = powers.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se_mean = (var / n as f64).sqrt();
    let stderr = if mean > 0.0 {
        se_mean * mean.powf(1.0 / p - 1.0) / p
    } else {
        0.0
    };
    (estimate, stderr)
}

struct Cell {
    scheme: SchemeKind,
    tau: f64,
    ratio: usize,
}

struct SampleResult {
    /// `None` if the reference trajectory failed.
    cells: Option<Vec<Option<(f64, f64)>>>,
}

fn run_sample(problem: &Problem, cfg: &ConvergenceConfig, cells: &[Cell], seed: u64, index: usize) -> Result<SampleResult> {
    let fine = cfg.fine_steps();
    let path = BrownianPath::generate(seed, index as u64, cfg.horizon, fine)?;
    let model = &problem.model;
    let grid = model.grid();
    let increments: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| path.coarse_increments(fine / c.ratio))
        .collect::<Result<_>>()?;
    let mut reference = problem.initial.clone();
    let mut fields: Vec<Option<ComplexField>> = cells.iter().map(|_| Some(problem.initial.clone())).collect();
    let mut sup = vec![0.0f64; cells.len()];
    for (i, &dw) in path.increments().iter().enumerate() {
        SchemeKind::Split.advance(model, &mut reference, dw, cfg.tau_ref);
        if !reference.is_finite() {
            warn!("sample {index}: reference trajectory non-finite at step {}", i + 1);
            return Ok(SampleResult { cells: None });
        }
        let done = i + 1;
        for (c, cell) in cells.iter().enumerate() {
            if done % cell.ratio != 0 {
                continue;
            }
            let Some(u) = fields[c].as_mut() else { continue };
            let n = done / cell.ratio;
            cell.scheme.advance(model, u, increments[c][n - 1], cell.tau);
            if !u.is_finite() {
                warn!("sample {index}: {} at tau {:e} non-finite at step {n}", cell.scheme, cell.tau);
                fields[c] = None;
                continue;
            }
            if cfg.sup_error {
                sup[c] = sup[c].max(grid.sobolev_norm(&(&*u - &reference), cfg.norm));
            }
        }
    }
    let out = fields
        .iter()
        .zip(&sup)
        .map(|(f, &s)| f.as_ref().map(|u| (grid.sobolev_norm(&(u - &reference), cfg.norm), s)))
        .collect();
    Ok(SampleResult { cells: Some(out) })
}

/// Runs the study. `workers = None` uses the global rayon pool.
pub fn run_convergence(problem: &Problem, cfg: &ConvergenceConfig, seed: u64, workers: Option<usize>) -> Result<ConvergenceReport> {
    cfg.validate()?;
    problem.model.grid().check(&problem.initial);
    let fine = cfg.fine_steps();
    let cells: Vec<Cell> = cfg
        .schemes
        .iter()
        .flat_map(|&scheme| {
            cfg.taus.iter().map(move |&tau| Cell {
                scheme,
                tau,
                ratio: fine / dyadic_steps(cfg.horizon, tau).expect("validated"),
            })
        })
        .collect();

    let results: Vec<SampleResult> = with_workers(workers, || {
        (0..cfg.samples)
            .into_par_iter()
            .map(|s| run_sample(problem, cfg, &cells, seed, s))
            .collect::<Result<Vec<_>>>()
    })??;

    let failed_samples = results.iter().filter(|r| r.cells.is_none()).count();
    check_failures(failed_samples, cfg.samples)?;

    let mut estimates = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let mut terminal = Vec::new();
        let mut sups = Vec::new();
        let mut failed = failed_samples;
        for r in &results {
            match r.cells.as_ref().map(|v| v[c]) {
                Some(Some((e, s))) => {
                    terminal.push(e);
                    sups.push(s);
                }
                Some(None) => failed += 1,
                None => {}
            }
        }
        check_failures(failed, cfg.samples)?;
        let (error, stderr) = moment_with_stderr(&terminal, cfg.moment);
        estimates.push(CellEstimate {
            scheme: cell.scheme,
            tau: cell.tau,
            error,
            stderr,
            samples: terminal.len(),
            failed,
            sup_error: cfg.sup_error.then(|| moment(&sups, cfg.moment)),
            per_sample: terminal,
        });
    }

    let scale = problem.model.grid().sobolev_norm(&problem.initial, cfg.norm).max(f64::MIN_POSITIVE);
    let slopes = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let mine: Vec<&CellEstimate> = estimates.iter().filter(|e| e.scheme == scheme).collect();
            let exact_regime = mine.iter().all(|e| e.error <= EXACT_REGIME_TOL * scale);
            let fit = if exact_regime || mine.len() < 3 {
                None
            } else {
                let pts: Vec<(f64, f64)> = mine.iter().map(|e| (e.tau, e.error)).collect();
                fit_slope(&pts).map_err(|e| warn!("{scheme}: {e}")).ok()
            };
            SchemeSlope {
                scheme,
                fit,
                exact_regime,
            }
        })
        .collect();

    Ok(ConvergenceReport {
        config: cfg.clone(),
        seed,
        cells: estimates,
        slopes,
        failed_samples,
    })
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    if failed > 0 {
        warn!("{failed} of {total} samples failed and were excluded");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityRow {
    pub scheme: SchemeKind,
    pub tau: f64,
    pub c: f64,
    /// Fraction of samples with `‖u_N - u_ref(T)‖ >= c · tau`.
    pub fraction: f64,
}

/// Empirical `P(‖u_N - u_ref(T)‖ >= C τ)` for every cell and every `C`.
pub fn probability_convergence_check(report: &ConvergenceReport, c_grid: &[f64]) -> Vec<ProbabilityRow> {
    let mut rows = Vec::new();
    for cell in &report.cells {
        let n = cell.per_sample.len().max(1) as f64;
        for &c in c_grid {
            let hits = cell.per_sample.iter().filter(|&&e| e >= c * cell.tau).count();
            rows.push(ProbabilityRow {
                scheme: cell.scheme,
                tau: cell.tau,
                c,
                fraction: hits as f64 / n,
            });
        }
    }
    rows
}
