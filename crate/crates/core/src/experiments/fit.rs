use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line through `(log₂ step, log₂ error)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log₂ units.
    pub max_residual: f64,
    pub points: usize,
}

/// Fits `log₂ error = slope · log₂ step + intercept` by ordinary least squares.
///
/// Points with a non-positive step or error are dropped with a warning. At
/// least three points with distinct steps must remain.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(step, err)| {
            if step > 0.0 && err > 0.0 && step.is_finite() && err.is_finite() {
                Some((step.log2(), err.log2()))
            } else {
                warn!("dropping point (step {step:e}, error {err:e}) from slope fit");
                None
            }
        })
        .collect();
    if logs.len() < 3 {
        return Err(Error::FitRefused(format!(
            "{} usable points, at least 3 required",
            logs.len()
        )));
    }
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitRefused("step sizes are not distinct".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let max_residual = logs
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        max_residual,
        points: logs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ladder(rate: f64, c: f64) -> Vec<(f64, f64)> {
        (4..12).map(|l| {
            let tau = 2f64.powi(-l);
            (tau, c * tau.powf(rate))
        }).collect()
    }

    #[test]
    fn exact_lines() {
        let fit = fit_slope(&ladder(1.0, 3.0)).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log2()).abs() < 1e-12);
        assert!(fit.max_residual < 1e-12);
        let fit = fit_slope(&ladder(0.5, 0.2)).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noisy_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let pts: Vec<_> = ladder(1.0, 2.0)
                .into_iter()
                .map(|(t, e)| (t, e * (1.0 + 0.05 * rng.random_range(-1.0..1.0))))
                .collect();
            let fit = fit_slope(&pts).unwrap();
            assert!((0.9..=1.1).contains(&fit.slope), "{}", fit.slope);
        }
    }

    #[test]
    fn drops_bad_points_and_refuses_short_input() {
        let mut pts = ladder(1.0, 1.0);
        pts.push((0.5, 0.0));
        pts.push((0.25, -1.0));
        let fit = fit_slope(&pts).unwrap();
        assert_eq!(fit.points, 8);
        assert!(fit_slope(&[(0.5, 1.0), (0.25, 0.5), (0.125, 0.0)]).is_err());
        assert!(fit_slope(&[(0.5, 1.0), (0.5, 0.5), (0.5, 0.2)]).is_err());
    }
}
