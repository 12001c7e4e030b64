//! Run configuration: a flat TOML document, overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use snls::experiments::{dyadic_steps, ConvergenceConfig};
use snls::{SchemeKind, SobolevIndex};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Evolve,
    Conservation,
    Convergence,
    Selftest,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Evolve => "evolve",
            Command::Conservation => "conservation",
            Command::Convergence => "convergence",
            Command::Selftest => "selftest",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSource {
    Cosine,
    Zero,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSource {
    Gaussian,
    File(PathBuf),
}

fn file_source(s: &str) -> Option<PathBuf> {
    s.strip_prefix("file:").filter(|p| !p.is_empty()).map(PathBuf::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Domain length `L`.
    pub length: f64,
    /// Number of grid points `M`.
    pub grid: usize,
    pub dealias: bool,
    /// `cos`, `zero` or `file:<csv with x,V>`.
    pub potential: String,
    /// `gaussian` or `file:<csv with x,re,im,abs2>`.
    pub initial: String,
    pub t_end: f64,
    /// Step for `evolve` and `conservation`.
    pub tau: f64,
    /// Step ladder for `convergence`.
    pub taus: Vec<f64>,
    pub tau_ref: f64,
    pub samples: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeKind>,
    /// Sobolev index of the error norm.
    pub norm: SobolevIndex,
    /// Moment `p` of the error estimate.
    pub moment: f64,
    pub sup_error: bool,
    pub snapshot_every: usize,
    /// Write the driving Brownian path of `evolve`.
    pub dump_path: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Convergence,
            length: 2.0 * std::f64::consts::PI,
            grid: 1 << 10,
            dealias: false,
            potential: "cos".into(),
            initial: "gaussian".into(),
            t_end: 1.0,
            tau: 2f64.powi(-8),
            taus: (10..=16).map(|e| 2f64.powi(-e)).collect(),
            tau_ref: 2f64.powi(-18),
            samples: 100,
            seed: 0,
            schemes: SchemeKind::ALL.to_vec(),
            norm: SobolevIndex::H1,
            moment: 2.0,
            sup_error: false,
            snapshot_every: 0,
            dump_path: false,
            workers: None,
            out: PathBuf::from("snls-out"),
        }
    }
}

fn invalid(key: &str, reason: impl fmt::Display) -> anyhow::Error {
    anyhow!("invalid value for `{key}`: {reason}")
}

impl RunConfig {
    pub fn potential_source(&self) -> Result<PotentialSource> {
        match self.potential.as_str() {
            "cos" => Ok(PotentialSource::Cosine),
            "zero" => Ok(PotentialSource::Zero),
            s => file_source(s)
                .map(PotentialSource::File)
                .ok_or_else(|| invalid("potential", format!("expected `cos`, `zero` or `file:<path>`, got `{s}`"))),
        }
    }

    pub fn initial_source(&self) -> Result<InitialSource> {
        match self.initial.as_str() {
            "gaussian" => Ok(InitialSource::Gaussian),
            s => file_source(s)
                .map(InitialSource::File)
                .ok_or_else(|| invalid("initial", format!("expected `gaussian` or `file:<path>`, got `{s}`"))),
        }
    }

    pub fn convergence(&self) -> ConvergenceConfig {
        ConvergenceConfig {
            schemes: self.schemes.clone(),
            taus: self.taus.clone(),
            tau_ref: self.tau_ref,
            horizon: self.t_end,
            samples: self.samples,
            norm: self.norm,
            moment: self.moment,
            sup_error: self.sup_error,
        }
    }

    /// Number of steps of size `tau` in `[0, t_end]`.
    pub fn steps(&self) -> Result<usize> {
        dyadic_steps(self.t_end, self.tau)
            .ok_or_else(|| invalid("tau", format!("t_end / tau = {} is not a power of two", self.t_end / self.tau)))
    }

    /// Checks every field that the selected command reads.
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(invalid("length", "must be positive and finite"));
        }
        if self.grid < 4 || !self.grid.is_power_of_two() {
            return Err(invalid("grid", format!("must be a power of two >= 4, got {}", self.grid)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(invalid("t_end", "must be positive and finite"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must not exceed 2^63 - 1"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "at least one scheme is required"));
        }
        self.potential_source()?;
        self.initial_source()?;
        match self.command {
            Command::Evolve | Command::Conservation => {
                if !(self.tau > 0.0 && self.tau < 1.0) {
                    return Err(invalid("tau", "must lie in (0, 1)"));
                }
                self.steps()?;
            }
            Command::Convergence => self.convergence().validate()?,
            Command::Selftest => {}
        }
        Ok(())
    }
}

/// Values given on the command line. Dedicated flags win over `--set`.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn override_value(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("{} is not a valid configuration file", path.display()))?
        }
        None => toml::Table::new(),
    };
    for item in &overrides.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("`--set {item}`: expected key=value"))?;
        table.insert(key.trim().to_string(), override_value(value.trim()));
    }
    if let Some(c) = overrides.command {
        table.insert("command".into(), toml::Value::String(c.to_string()));
    }
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed).map_err(|_| invalid("seed", "must not exceed 2^63 - 1"))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    if let Some(w) = overrides.workers {
        table.insert("workers".into(), toml::Value::Integer(w as i64));
    }
    if let Some(out) = &overrides.out {
        table.insert("out".into(), toml::Value::String(out.display().to_string()));
    }
    // Parsed from text so errors carry a span.
    let text = toml::to_string(&table)?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| anyhow!("{}", describe_error(&text, &e)))?;
    cfg.validate()?;
    Ok(cfg)
}

fn describe_error(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
            let line_end = text[span.start..].find('\n').map_or(text.len(), |i| span.start + i);
            format!("{} (in `{}`)", e.message(), text[line_start..line_end].trim())
        }
        None => e.message().to_string(),
    }
}

pub fn render(cfg: &RunConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> Overrides {
        Overrides {
            set: items.iter().map(|s| s.to_string()).collect(),
            ..Overrides::default()
        }
    }

    #[test]
    fn defaults_mirror_the_reference_study() {
        let cfg = load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.grid, 1024);
        assert_eq!(cfg.t_end, 1.0);
        assert_eq!(cfg.taus.first(), Some(&2f64.powi(-10)));
        assert_eq!(cfg.taus.last(), Some(&2f64.powi(-16)));
        assert_eq!(cfg.tau_ref, 2f64.powi(-18));
        assert_eq!(cfg.samples, 100);
        assert_eq!(cfg.norm, SobolevIndex::H1);
        assert_eq!(cfg.moment, 2.0);
    }

    #[test]
    fn empty_file_with_selftest_command() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "").unwrap();
        let ov = Overrides {
            command: Some(Command::Selftest),
            ..Overrides::default()
        };
        let cfg = load(Some(&path), &ov).unwrap();
        assert_eq!(cfg, RunConfig { command: Command::Selftest, ..RunConfig::default() });
    }

    #[test]
    fn set_parses_toml_values_and_bare_strings() {
        let cfg = load(None, &set(&["grid=64", "schemes=[\"mid\"]", "potential=zero", "tau=0.125", "dealias=true"])).unwrap();
        assert_eq!(cfg.grid, 64);
        assert_eq!(cfg.schemes, vec![SchemeKind::Mid]);
        assert_eq!(cfg.potential_source().unwrap(), PotentialSource::Zero);
        assert_eq!(cfg.tau, 0.125);
        assert!(cfg.dealias);
    }

    #[test]
    fn flags_override_set() {
        let ov = Overrides {
            seed: Some(9),
            ..set(&["seed=3"])
        };
        assert_eq!(load(None, &ov).unwrap().seed, 9);
    }

    #[test]
    fn errors_name_the_key() {
        let msg = |items: &[&str]| format!("{:#}", load(None, &set(items)).unwrap_err());
        assert!(msg(&["bogus=1"]).contains("bogus"));
        assert!(msg(&["grid=\"big\""]).contains("grid"));
        assert!(msg(&["grid=48"]).contains("`grid`"));
        assert!(msg(&["norm=9"]).contains("norm"));
        assert!(msg(&["potential=gauss"]).contains("`potential`"));
        assert!(msg(&["command=\"evolve\"", "tau=0.3"]).contains("`tau`"));
        assert!(msg(&["workers=0"]).contains("`workers`"));
        assert!(msg(&["set-without-equals"]).contains("key=value"));
    }

    #[test]
    fn coarse_reference_is_rejected_with_divisibility_diagnostic() {
        let err = load(None, &set(&["taus=[0.25, 0.125]", "tau_ref=0.25"])).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("tau_ref") && msg.contains("divide"), "{msg}");
    }

    #[test]
    fn rendered_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load(None, &set(&["grid=128", "workers=3", "taus=[0.0625, 0.03125]", "tau_ref=0.0009765625", "seed=12345"])).unwrap();
        let path = dir.path().join(EFFECTIVE_CONFIG);
        std::fs::write(&path, render(&cfg).unwrap()).unwrap();
        assert_eq!(load(Some(&path), &Overrides::default()).unwrap(), cfg);
        let dflt = RunConfig::default();
        std::fs::write(&path, render(&dflt).unwrap()).unwrap();
        assert_eq!(load(Some(&path), &Overrides::default()).unwrap(), dflt);
    }
}
