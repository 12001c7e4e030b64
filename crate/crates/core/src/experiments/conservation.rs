use serde::Serialize;

use super::convergence::dyadic_steps;
use super::Problem;
use crate::error::{Error, Result};
use crate::integrators::SchemeKind;
use crate::noise::BrownianPath;

#[derive(Clone, Debug, Serialize)]
pub struct DriftSeries {
    pub scheme: SchemeKind,
    pub times: Vec<f64>,
    /// `|‖u_n‖ - ‖u_0‖| / ‖u_0‖`, starting with `n = 0`.
    pub drift: Vec<f64>,
}

impl DriftSeries {
    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    pub tau: f64,
    pub horizon: f64,
    pub seed: u64,
    pub series: Vec<DriftSeries>,
}

impl ConservationReport {
    pub fn series(&self, scheme: SchemeKind) -> Option<&DriftSeries> {
        self.series.iter().find(|s| s.scheme == scheme)
    }
}

/// Relative L² drift of each scheme along one path (sample 0 of `seed`).
pub fn run_conservation(problem: &Problem, schemes: &[SchemeKind], tau: f64, horizon: f64, seed: u64) -> Result<ConservationReport> {
    let steps = dyadic_steps(horizon, tau)
        .ok_or_else(|| Error::key("tau", format!("t_end / tau = {} is not a power of two", horizon / tau)))?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::key("tau", "must lie in (0, 1)"));
    }
    let path = BrownianPath::generate(seed, 0, horizon, steps)?;
    let grid = problem.model.grid();
    let l0 = grid.l2_norm(&problem.initial);
    let relative = |l: f64| if l0 > 0.0 { (l - l0).abs() / l0 } else { l };
    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * tau).collect();
    let mut series = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let mut u = problem.initial.clone();
        let mut drift = Vec::with_capacity(steps + 1);
        drift.push(0.0);
        for (i, &dw) in path.increments().iter().enumerate() {
            scheme.advance(&problem.model, &mut u, dw, tau);
            if !u.is_finite() {
                return Err(Error::NonFinite { step: i + 1 });
            }
            drift.push(relative(grid.l2_norm(&u)));
        }
        series.push(DriftSeries {
            scheme,
            times: times.clone(),
            drift,
        });
    }
    Ok(ConservationReport {
        tau,
        horizon,
        seed,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;
    use crate::model::{Model, Potential};

    #[test]
    fn split_conserves_others_drift() {
        let problem = Problem::standard(64).unwrap();
        let report = run_conservation(&problem, &SchemeKind::ALL, 2f64.powi(-6), 0.5, 1).unwrap();
        let split = report.series(SchemeKind::Split).unwrap();
        assert_eq!(split.drift.len(), 33);
        assert!(split.max_drift() <= 1e-10);
        for s in [SchemeKind::Exp, SchemeKind::Mid] {
            assert!(report.series(s).unwrap().max_drift() > split.max_drift());
        }
    }

    #[test]
    fn rejects_non_dyadic_step() {
        let problem = Problem::standard(16).unwrap();
        assert!(run_conservation(&problem, &[SchemeKind::Split], 0.3, 1.0, 0).is_err());
    }

    #[test]
    fn linear_problem_drifts_nowhere() {
        let model = Model::new(SpectralGrid::periodic_2pi(64).unwrap(), Potential::Zero).unwrap();
        let problem = Problem::with_gaussian(model);
        let report = run_conservation(&problem, &SchemeKind::ALL, 2f64.powi(-6), 0.5, 1).unwrap();
        for s in &report.series {
            assert!(s.max_drift() <= 1e-12, "{}: {:e}", s.scheme, s.max_drift());
        }
    }
}
