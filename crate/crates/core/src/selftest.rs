//! Invariant battery.
//!
//! Each `measure_*` function returns the quantity a check bounds, for a
//! caller-chosen problem size. [`run_selftest`] evaluates all of them on a
//! small grid; the acceptance tests call the same functions at full size.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::experiments::{fit_slope, run_conservation, run_convergence, ConvergenceConfig, Problem, SlopeFit};
use crate::grid::{ComplexField, SobolevIndex, SpectralGrid};
use crate::integrators::{symplectic_defect, SchemeKind};
use crate::model::{propagate_linear, FlowTime, Model, Potential};
use crate::noise::BrownianPath;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("<= {bound:e}"),
            passed: value <= bound,
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("> {bound:e}"),
            passed: value > bound,
        }
    }
}

/// Random field with independent standard normal coefficients on
/// `|mode| <= band` and zero elsewhere.
pub fn random_band_limited(rng: &mut impl Rng, grid: &SpectralGrid, band: usize) -> ComplexField {
    let coeffs = (0..grid.points())
        .map(|i| {
            if grid.mode_index(i).unsigned_abs() as usize <= band {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    grid.inverse(&crate::grid::FourierCoefficients::new(coeffs)).expect("grid-sized")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Max over fields of `‖inverse(forward(u)) - u‖_∞ / ‖u‖_∞`.
pub fn measure_round_trip(points: usize, fields: usize, seed: u64) -> Result<f64> {
    let grid = SpectralGrid::periodic_2pi(points)?;
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let u = ComplexField::new((0..points).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
        let back = grid.inverse(&grid.forward(&u)?)?;
        worst = worst.max((&back - &u).max_abs() / u.max_abs());
    }
    Ok(worst)
}

/// Max over fields, random increments and `m ∈ ms` of `|‖Su‖_{H^m} - ‖u‖_{H^m}| / ‖u‖_{H^m}`.
pub fn measure_isometry(points: usize, fields: usize, ms: &[u32], seed: u64) -> Result<f64> {
    let grid = SpectralGrid::periodic_2pi(points)?;
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let u = random_band_limited(&mut rng, &grid, points / 2);
        let dbeta = rng.random_range(-2.0..2.0);
        let su = propagate_linear(&grid, &u, dbeta);
        for &m in ms {
            let m = SobolevIndex::new(m)?;
            let (a, b) = (grid.sobolev_norm(&u, m), grid.sobolev_norm(&su, m));
            worst = worst.max((a - b).abs() / a);
        }
    }
    Ok(worst)
}

/// Max over band-limited fields, increments and `m ∈ ms` of
/// `‖Su - u‖_{H^m} / (|Δβ| ‖u‖_{H^{m+2}})`; at most one when the bound holds.
pub fn measure_increment_bound(points: usize, fields: usize, ms: &[u32], seed: u64) -> Result<f64> {
    let grid = SpectralGrid::periodic_2pi(points)?;
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let u = random_band_limited(&mut rng, &grid, points / 4);
        let z: f64 = StandardNormal.sample(&mut rng);
        let dbeta = 0.1 * z;
        let su = propagate_linear(&grid, &u, dbeta);
        for &m in ms {
            let lhs = grid.sobolev_norm(&(&su - &u), SobolevIndex::new(m)?);
            let rhs = dbeta.abs() * grid.sobolev_norm(&u, SobolevIndex::new(m + 2)?);
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(worst)
}

/// `V[u]` by the direct `O(M²)` periodic sum.
pub fn direct_convolution(potential: &Potential, grid: &SpectralGrid, u: &ComplexField) -> Result<Vec<f64>> {
    let m = grid.points();
    let w = grid.spacing();
    let samples = potential.samples(grid)?;
    let kernel = |i: usize, j: usize| match potential {
        Potential::Cosine => (grid.node(i) - grid.node(j)).cos(),
        _ => samples[(i + m - j) % m],
    };
    Ok((0..m)
        .map(|i| w * (0..m).map(|j| kernel(i, j) * u[j].norm_sqr()).sum::<f64>())
        .collect())
}

/// Max over random fields of `‖V[u]_fft - V[u]_direct‖_∞ / ‖V[u]_direct‖_∞` for `V = cos`.
pub fn measure_convolution_oracle(points: usize, fields: usize, seed: u64) -> Result<f64> {
    let model = Model::new(SpectralGrid::periodic_2pi(points)?, Potential::Cosine)?;
    let grid = model.grid();
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let u = ComplexField::new((0..points).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
        let fast = model.interaction(&u);
        let slow = direct_convolution(&Potential::Cosine, grid, &u)?;
        let scale = slow.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let diff = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Fit of `‖Ψ_τ(u₀) - Ψ₀(u₀)‖_{H¹}` against `τ = 2^{-e}` for `e ∈ exponents`.
pub fn measure_consistency_slope(points: usize, exponents: impl IntoIterator<Item = i32>) -> Result<SlopeFit> {
    let problem = Problem::standard(points)?;
    let (model, u) = (&problem.model, &problem.initial);
    let grid = model.grid();
    let psi0 = model.psi0(u);
    let pts = exponents
        .into_iter()
        .map(|e| {
            let tau = 2f64.powi(-e);
            let defect = grid.sobolev_norm(&(&model.psi_tau(FlowTime::new(tau)?, u) - &psi0), SobolevIndex::H1);
            Ok((tau, defect))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_slope(&pts)
}

/// Max symplectic defect of `scheme` over random `(u, Δβ)` draws, `V = cos`, `τ = 0.1`.
pub fn measure_symplectic(scheme: SchemeKind, points: usize, draws: usize, seed: u64) -> Result<f64> {
    let model = Model::new(SpectralGrid::periodic_2pi(points)?, Potential::Cosine)?;
    let mut rng = rng(seed);
    let tau = FlowTime::new(0.1)?;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let u = random_band_limited(&mut rng, model.grid(), points / 2);
        let dbeta = rng.random_range(-1.0..1.0);
        worst = worst.max(symplectic_defect(scheme, &model, &u, dbeta, tau)?);
    }
    Ok(worst)
}

/// With `V ≡ 0`: for each scheme, the max over `τ = T/N`, `N ∈ steps`, of
/// `‖u_N - S(β(T)) u₀‖_∞ / ‖u₀‖_∞` along one path.
pub fn measure_linear_agreement(points: usize, horizon: f64, steps: &[usize], seed: u64) -> Result<Vec<(SchemeKind, f64)>> {
    let model = Model::new(SpectralGrid::periodic_2pi(points)?, Potential::Zero)?;
    let problem = Problem::with_gaussian(model);
    let fine = steps.iter().copied().max().unwrap_or(1);
    let path = BrownianPath::generate(seed, 0, horizon, fine)?;
    let exact = propagate_linear(problem.model.grid(), &problem.initial, path.terminal_value());
    let scale = problem.initial.max_abs();
    SchemeKind::ALL
        .iter()
        .map(|&scheme| {
            let mut worst: f64 = 0.0;
            for &n in steps {
                let incs = path.coarse_increments(n)?;
                let u = crate::integrators::integrate(scheme, &problem.model, &problem.initial, &incs, horizon / n as f64)?;
                worst = worst.max((&u - &exact).max_abs() / scale);
            }
            Ok((scheme, worst))
        })
        .collect()
}

/// Max deviation between coarse-graining directly and through every
/// intermediate dyadic level (zero when the coupling is bit-exact).
pub fn measure_coupling(fine: usize, seeds: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in 0..seeds {
        let path = BrownianPath::generate(s, s, 1.0, fine)?;
        let mut level = path.increments().to_vec();
        while level.len() > 1 {
            level = crate::noise::coarsen(&level, level.len() / 2)?;
            let direct = path.coarse_increments(level.len())?;
            for (a, b) in level.iter().zip(&direct) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub points: usize,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const SELFTEST_POINTS: usize = 64;

/// Runs the battery at `M = 64`.
pub fn run_selftest(seed: u64, workers: Option<usize>) -> Result<SelftestReport> {
    let m = SELFTEST_POINTS;
    let mut checks = vec![
        Check::at_most("transform round trip", measure_round_trip(m, 1000, seed)?, 1e-12),
        Check::at_most("propagator isometry H^0..H^3", measure_isometry(m, 1000, &[0, 1, 2, 3], seed)?, 1e-12),
        Check::at_most("propagator increment bound H^0,H^1", measure_increment_bound(m, 1000, &[0, 1], seed)?, 1.0),
        Check::at_most("convolution vs direct sum", measure_convolution_oracle(m, 100, seed)?, 1e-12),
        Check::within("consistency defect slope", measure_consistency_slope(m, 6..=16)?.slope, 0.9, 1.1),
        Check::at_most("split symplectic defect (M=8)", measure_symplectic(SchemeKind::Split, 8, 20, seed)?, 1e-5),
        Check::at_most("coarse-graining coupling", measure_coupling(1 << 10, 3)?, 0.0),
    ];
    for (scheme, dev) in measure_linear_agreement(m, 1.0, &[1 << 4, 1 << 6, 1 << 8], seed)? {
        if scheme != SchemeKind::Mid {
            checks.push(Check::at_most(&format!("{scheme} exact for V = 0"), dev, 1e-12));
        }
    }

    let problem = Problem::standard(m)?;
    let conservation = run_conservation(&problem, &SchemeKind::ALL, 2f64.powi(-8), 1.0, seed)?;
    let split_drift = conservation.series(SchemeKind::Split).map_or(f64::NAN, |s| s.max_drift());
    checks.push(Check::at_most("split L2 drift", split_drift, 1e-10));
    for s in [SchemeKind::Exp, SchemeKind::Mid] {
        let d = conservation.series(s).map_or(f64::NAN, |x| x.max_drift());
        checks.push(Check::above(&format!("{s} L2 drift exceeds split"), d, split_drift));
    }
    let linear = Problem::with_gaussian(Model::new(SpectralGrid::periodic_2pi(m)?, Potential::Zero)?);
    let linear_drift = run_conservation(&linear, &SchemeKind::ALL, 2f64.powi(-8), 1.0, seed)?
        .series
        .iter()
        .map(|s| s.max_drift())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("L2 drift for V = 0", linear_drift, 1e-12));

    let cfg = ConvergenceConfig {
        schemes: vec![SchemeKind::Split],
        taus: (6..=9).map(|e| 2f64.powi(-e)).collect(),
        tau_ref: 2f64.powi(-12),
        horizon: 1.0,
        samples: 16,
        norm: SobolevIndex::H1,
        moment: 2.0,
        sup_error: false,
    };
    let report = run_convergence(&problem, &cfg, seed, workers)?;
    let slope = report
        .slope(SchemeKind::Split)
        .and_then(|s| s.fit)
        .map_or(f64::NAN, |f| f.slope);
    checks.push(Check::within("split strong order", slope, 0.8, 1.2));
    let serial = run_convergence(&problem, &cfg, seed, Some(1))?;
    let identical = serial
        .cells
        .iter()
        .zip(&report.cells)
        .all(|(a, b)| a.error.to_bits() == b.error.to_bits());
    checks.push(Check::at_most("worker-count determinism", if identical { 0.0 } else { 1.0 }, 0.0));

    Ok(SelftestReport { points: m, checks })
}
