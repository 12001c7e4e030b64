use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};
use snls::experiments::{
    gaussian_initial, probability_convergence_check, run_conservation, run_convergence, ConvergenceReport, Problem,
};
use snls::integrators::evolve;
use snls::io;
use snls::selftest::{run_selftest, Check};
use snls::{BrownianPath, Model, Potential, SpectralGrid};

use crate::config::{render, Command, InitialSource, PotentialSource, RunConfig, EFFECTIVE_CONFIG};

pub const SPLIT_DRIFT_TOL: f64 = 1e-10;
pub const LINEAR_DRIFT_TOL: f64 = 1e-12;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: Command,
    pub seed: u64,
    pub passed: bool,
    pub invariants: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
    pub results: Value,
}

impl Summary {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.invariants.iter().filter(|c| !c.passed)
    }
}

struct Artifacts {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, rel: impl AsRef<Path>, f: impl FnOnce(&mut BufWriter<fs::File>) -> snls::Result<()>) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        let mut w = BufWriter::new(io::create(&path)?);
        f(&mut w)?;
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(rel.to_path_buf());
        Ok(())
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let grid = SpectralGrid::new(cfg.grid, cfg.length)?.with_dealiasing(cfg.dealias);
    let potential = match cfg.potential_source()? {
        PotentialSource::Cosine => Potential::Cosine,
        PotentialSource::Zero => Potential::Zero,
        PotentialSource::File(p) => io::read_potential_csv(&p, &grid).context("reading `potential`")?,
    };
    let initial = match cfg.initial_source()? {
        InitialSource::Gaussian => gaussian_initial(&grid),
        InitialSource::File(p) => io::read_field_csv(&p, &grid).context("reading `initial`")?,
    };
    Ok(Problem {
        model: Model::new(grid, potential)?,
        initial,
    })
}

fn drift_checks(problem: &Problem, drifts: &[(snls::SchemeKind, f64)]) -> Vec<Check> {
    let mut checks = Vec::new();
    for &(scheme, drift) in drifts {
        if problem.model.is_linear() {
            checks.push(Check::at_most(&format!("{scheme} L2 drift for V = 0"), drift, LINEAR_DRIFT_TOL));
        } else if scheme == snls::SchemeKind::Split {
            checks.push(Check::at_most("split L2 drift", drift, SPLIT_DRIFT_TOL));
        }
    }
    checks
}

pub fn run(cfg: &RunConfig) -> Result<Summary> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let mut out = Artifacts {
        root: cfg.out.clone(),
        written: Vec::new(),
    };
    let rendered = render(cfg)?;
    out.write(EFFECTIVE_CONFIG, |w| {
        w.write_all(rendered.as_bytes()).map_err(|e| snls::Error::Io {
            path: cfg.out.join(EFFECTIVE_CONFIG),
            source: e,
        })
    })?;

    let (invariants, results) = match cfg.command {
        Command::Evolve => run_evolve(cfg, &mut out)?,
        Command::Conservation => run_drift(cfg, &mut out)?,
        Command::Convergence => run_study(cfg, &mut out)?,
        Command::Selftest => {
            let report = run_selftest(cfg.seed, cfg.workers)?;
            (report.checks, json!({ "points": report.points }))
        }
    };

    let mut summary = Summary {
        command: cfg.command,
        seed: cfg.seed,
        passed: invariants.iter().all(|c| c.passed),
        invariants,
        artifacts: Vec::new(),
        results,
    };
    out.written.push("summary.json".into());
    summary.artifacts = out.written.clone();
    let text = serde_json::to_string_pretty(&summary)?;
    let path = cfg.out.join("summary.json");
    fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(summary)
}

fn run_evolve(cfg: &RunConfig, out: &mut Artifacts) -> Result<(Vec<Check>, Value)> {
    let problem = build_problem(cfg)?;
    let steps = cfg.steps()?;
    let path = BrownianPath::generate(cfg.seed, 0, cfg.t_end, steps)?;
    if cfg.dump_path {
        out.write("path.csv", |w| io::write_path_csv(w, &path))?;
    }
    let grid = problem.model.grid();
    let mut drifts = Vec::new();
    let mut runs = Vec::new();
    for &scheme in &cfg.schemes {
        info!("evolving {scheme}: {steps} steps of {:e}", cfg.tau);
        let ev = evolve(scheme, &problem.model, &problem.initial, &path, steps, cfg.snapshot_every, cfg.norm)?;
        let dir = PathBuf::from(scheme.name());
        out.write(dir.join("diagnostics.csv"), |w| io::write_diagnostics_csv(w, &ev.diagnostics))?;
        for snap in &ev.snapshots {
            out.write(dir.join(format!("snapshots/field_{:08}.csv", snap.n)), |w| io::write_field_csv(w, grid, &snap.field))?;
        }
        drifts.push((scheme, ev.max_l2_drift()));
        runs.push(json!({
            "scheme": scheme,
            "tau": ev.tau,
            "steps": ev.state.n,
            "t": ev.state.t,
            "l2": ev.state.l2,
            "hm": ev.state.hm,
            "max_l2_drift": ev.max_l2_drift(),
            "snapshots": ev.snapshots.len(),
        }));
    }
    Ok((drift_checks(&problem, &drifts), json!({ "runs": runs })))
}

fn run_drift(cfg: &RunConfig, out: &mut Artifacts) -> Result<(Vec<Check>, Value)> {
    let problem = build_problem(cfg)?;
    let report = run_conservation(&problem, &cfg.schemes, cfg.tau, cfg.t_end, cfg.seed)?;
    out.write("conservation.csv", |w| io::write_conservation_csv(w, &report))?;
    let drifts: Vec<_> = report.series.iter().map(|s| (s.scheme, s.max_drift())).collect();
    let results = json!({
        "tau": report.tau,
        "t_end": report.horizon,
        "max_drift": drifts.iter().map(|(s, d)| json!({ "scheme": s, "drift": d })).collect::<Vec<_>>(),
    });
    Ok((drift_checks(&problem, &drifts), results))
}

/// Multiples of the smallest fitted constant `2^intercept` used for the
/// exceedance-probability table.
const PROBABILITY_MULTIPLES: [f64; 5] = [0.5, 1.0, 2.0, 10.0, 100.0];

fn probability_grid(report: &ConvergenceReport) -> Vec<f64> {
    let base = report
        .slopes
        .iter()
        .filter_map(|s| s.fit.map(|f| f.intercept.exp2()))
        .fold(f64::INFINITY, f64::min);
    if base.is_finite() {
        PROBABILITY_MULTIPLES.iter().map(|m| m * base).collect()
    } else {
        Vec::new()
    }
}

fn run_study(cfg: &RunConfig, out: &mut Artifacts) -> Result<(Vec<Check>, Value)> {
    let problem = build_problem(cfg)?;
    let report = run_convergence(&problem, &cfg.convergence(), cfg.seed, cfg.workers)?;
    out.write("convergence.csv", |w| io::write_convergence_csv(w, &report))?;
    out.write("slopes.csv", |w| io::write_slopes_csv(w, &report))?;
    let grid = probability_grid(&report);
    if !grid.is_empty() {
        let rows = probability_convergence_check(&report, &grid);
        out.write("probability.csv", |w| io::write_probability_csv(w, &rows))?;
    }
    let results = json!({
        "failed_samples": report.failed_samples,
        "slopes": report.slopes,
        "cells": report.cells,
    });
    Ok((Vec::new(), results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use snls::SchemeKind;

    #[test]
    fn drift_checks_flag_violations() {
        let problem = Problem::standard(16).unwrap();
        let checks = drift_checks(&problem, &[(SchemeKind::Split, 1e-8), (SchemeKind::Exp, 1e-3)]);
        assert_eq!(checks.len(), 1);
        assert!(!checks[0].passed);
        let linear = Problem::with_gaussian(Model::new(SpectralGrid::periodic_2pi(16).unwrap(), Potential::Zero).unwrap());
        let checks = drift_checks(&linear, &[(SchemeKind::Mid, 1e-14), (SchemeKind::Exp, 1e-11)]);
        assert_eq!(checks.iter().filter(|c| c.passed).count(), 1);
    }
}
