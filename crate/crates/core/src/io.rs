//! CSV artifacts. Every float is written with 17 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{ConservationReport, ConvergenceReport, ProbabilityRow};
use crate::grid::{ComplexField, SpectralGrid};
use crate::integrators::DiagnosticRow;
use crate::model::Potential;
use crate::noise::BrownianPath;

use num_complex::Complex64;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_f64(path: &Path, row: usize, field: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: format!("row {row}: `{field}` is not a number"),
    })
}

/// Checks that the first column reproduces the grid nodes.
fn check_nodes(path: &Path, grid: &SpectralGrid, xs: &[f64]) -> Result<()> {
    if xs.len() != grid.points() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("{} rows, grid has {} points", xs.len(), grid.points()),
        });
    }
    let tol = 1e-9 * grid.length();
    if let Some(j) = (0..xs.len()).find(|&j| (xs[j] - grid.node(j)).abs() > tol) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("row {j}: x = {} does not match grid node {}", xs[j], grid.node(j)),
        });
    }
    Ok(())
}

fn read_columns(path: &Path, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < min_cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("row {i}: expected at least {min_cols} columns"),
            });
        }
        rows.push(rec.iter().map(|f| parse_f64(path, i, f)).collect::<Result<Vec<_>>>()?);
    }
    Ok(rows)
}

/// Snapshot with columns `x,re,im,abs2`.
pub fn write_field_csv<W: Write>(w: W, grid: &SpectralGrid, u: &ComplexField) -> Result<()> {
    grid.check(u);
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "re", "im", "abs2"])?;
    for (j, z) in u.values().iter().enumerate() {
        wtr.write_record([fmt_f64(grid.node(j)), fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm_sqr())])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`] (`abs2` is optional and ignored).
pub fn read_field_csv(path: &Path, grid: &SpectralGrid) -> Result<ComplexField> {
    let rows = read_columns(path, 3)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    check_nodes(path, grid, &xs)?;
    Ok(ComplexField::new(rows.iter().map(|r| Complex64::new(r[1], r[2])).collect()))
}

/// Tabulated potential with columns `x,V` on the grid nodes.
pub fn read_potential_csv(path: &Path, grid: &SpectralGrid) -> Result<Potential> {
    let rows = read_columns(path, 2)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    check_nodes(path, grid, &xs)?;
    Ok(Potential::Tabulated(rows.iter().map(|r| r[1]).collect()))
}

pub fn write_potential_csv<W: Write>(w: W, grid: &SpectralGrid, samples: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "V"])?;
    for (j, v) in samples.iter().enumerate() {
        wtr.write_record([fmt_f64(grid.node(j)), fmt_f64(*v)])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Path dump: a `# seed=..,sample_index=..,T=..,N_fine=..` line, then `n,dW`.
pub fn write_path_csv<W: Write>(mut w: W, path: &BrownianPath) -> Result<()> {
    writeln!(
        w,
        "# seed={},sample_index={},T={},N_fine={}",
        path.seed(),
        path.sample_index(),
        fmt_f64(path.horizon()),
        path.fine_steps()
    )
    .map_err(csv::Error::from)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["n", "dW"])?;
    for (n, dw) in path.increments().iter().enumerate() {
        wtr.write_record([n.to_string(), fmt_f64(*dw)])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_path_csv(path: &Path) -> Result<BrownianPath> {
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = BufReader::new(open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| Error::io(path, e))?;
    let header = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| bad("missing `#` header line".into()))?;
    let (mut seed, mut index, mut horizon, mut fine) = (None, None, None, None);
    for kv in header.split(',') {
        let (k, v) = kv.trim().split_once('=').ok_or_else(|| bad(format!("malformed header entry `{kv}`")))?;
        let num_err = |_| bad(format!("header entry `{kv}` is not a number"));
        match k {
            "seed" => seed = Some(v.parse::<u64>().map_err(num_err)?),
            "sample_index" => index = Some(v.parse::<u64>().map_err(num_err)?),
            "T" => horizon = Some(v.parse::<f64>().map_err(|_| bad(format!("bad T `{v}`")))?),
            "N_fine" => fine = Some(v.parse::<usize>().map_err(num_err)?),
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }
    let (Some(seed), Some(index), Some(horizon), Some(fine)) = (seed, index, horizon, fine) else {
        return Err(bad("header must record seed, sample_index, T and N_fine".into()));
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut increments = Vec::with_capacity(fine);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        increments.push(parse_f64(path, i, rec.get(1).ok_or_else(|| bad(format!("row {i}: missing dW")))?)?);
    }
    if increments.len() != fine {
        return Err(bad(format!("{} increments, header says {fine}", increments.len())));
    }
    BrownianPath::from_increments(seed, index, horizon, increments)
}

/// `n,t,l2,h1,h2`.
pub fn write_diagnostics_csv<W: Write>(w: W, rows: &[DiagnosticRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["n", "t", "l2", "h1", "h2"])?;
    for r in rows {
        wtr.write_record([r.n.to_string(), fmt_f64(r.t), fmt_f64(r.l2), fmt_f64(r.h1), fmt_f64(r.h2)])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `scheme,tau,error,stderr,samples`.
pub fn write_convergence_csv<W: Write>(w: W, report: &ConvergenceReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scheme", "tau", "error", "stderr", "samples"])?;
    for c in &report.cells {
        wtr.write_record([
            c.scheme.to_string(),
            fmt_f64(c.tau),
            fmt_f64(c.error),
            fmt_f64(c.stderr),
            c.samples.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `scheme,slope,intercept,max_residual`; schemes without a fit get `NaN`.
pub fn write_slopes_csv<W: Write>(w: W, report: &ConvergenceReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scheme", "slope", "intercept", "max_residual"])?;
    for s in &report.slopes {
        let (slope, intercept, res) = s
            .fit
            .map(|f| (f.slope, f.intercept, f.max_residual))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        wtr.write_record([s.scheme.to_string(), fmt_f64(slope), fmt_f64(intercept), fmt_f64(res)])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `scheme,t,drift`.
pub fn write_conservation_csv<W: Write>(w: W, report: &ConservationReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scheme", "t", "drift"])?;
    for s in &report.series {
        for (t, d) in s.times.iter().zip(&s.drift) {
            wtr.write_record([s.scheme.to_string(), fmt_f64(*t), fmt_f64(*d)])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `scheme,tau,c,fraction`.
pub fn write_probability_csv<W: Write>(w: W, rows: &[ProbabilityRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scheme", "tau", "c", "fraction"])?;
    for r in rows {
        wtr.write_record([r.scheme.to_string(), fmt_f64(r.tau), fmt_f64(r.c), fmt_f64(r.fraction)])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
