//! Flat `key = value` experiment files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored. Keys are dotted
//! names from the table in [`KEYS`]; lists are comma separated. Points in `sweep.x0_list`
//! are separated by commas, and the two coordinates of a planar point by whitespace:
//!
//! ```text
//! potential.name = pendulum
//! grid.n = 1024
//! schedule = 10, 100, 1000
//! sweep.x0_list = 0.1, 0.25, 0.4
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Accepted keys and a one-line description of each.
pub const KEYS: [(&str, &str); 23] = [
    ("potential.name", "registered potential: pendulum, degenerate or pendulum2d"),
    ("potential.file", "tabulated potential CSV (relative to the config file)"),
    ("solver", "builtin, distance or laxoleinik"),
    ("grid.n", "grid cells per axis"),
    ("flow.dt", "base time step, at most 0.01"),
    ("flow.t_max", "horizon of the flow subcommand"),
    ("flow.eps", "distance threshold for attractor fractions"),
    ("schedule", "increasing horizons for occupational measures"),
    ("tol.crit", "|p0| threshold for critical points (default 10/n)"),
    ("tol.sing", "superdifferential diameter reported as non-smooth (default 20/n)"),
    ("tol.gap", "Hamiltonian gap for singular points (default 0.05 osc V)"),
    ("tol.v", "band around alpha0 for the potential average (default 0.02 osc V)"),
    ("tol.weak", "moment convergence tolerance"),
    ("sweep.x0_list", "initial points"),
    ("sweep.count", "number of random initial points when no list is given"),
    ("sweep.seed", "seed for random initial points and lemma cases"),
    ("output.dir", "artifact directory"),
    ("lo.dt", "time step of the Lax-Oleinik iteration"),
    ("lo.max_iter", "iteration cap of the Lax-Oleinik iteration"),
    ("lo.tol", "stopping tolerance of the Lax-Oleinik iteration"),
    ("lemmas.cases", "random cases per lemma"),
    ("flow.modes", "Fourier modes per axis for limit diagnostics"),
    ("viscosity.tol", "residual bound for the viscosity check of solve"),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("key '{key}': {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialSource {
    Name(String),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Builtin,
    Distance,
    LaxOleinik,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPoints {
    List(Vec<Vec<f64>>),
    Random { count: usize },
}

/// A parsed experiment. Tolerances left as `None` are resolved from the grid and the
/// potential when the experiment runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub potential: PotentialSource,
    pub solver: Solver,
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub eps: f64,
    pub modes: usize,
    pub schedule: Vec<f64>,
    pub tol_crit: Option<f64>,
    pub tol_sing: Option<f64>,
    pub tol_gap: Option<f64>,
    pub tol_v: Option<f64>,
    pub tol_weak: f64,
    pub viscosity_tol: f64,
    pub x0: InitialPoints,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub lo_dt: f64,
    pub lo_max_iter: usize,
    pub lo_tol: f64,
    pub lemma_cases: usize,
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: format!("unknown key '{key}'"),
            });
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(map)
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|s| {
                s.parse().map_err(|_| ConfigError::Value {
                    key: key.into(),
                    msg: format!("cannot parse '{s}'"),
                })
            })
            .transpose()
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.positive_opt(key).map(|v| v.unwrap_or(default))
    }

    fn positive_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.num(key)?;
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(ConfigError::Value {
                key: key.into(),
                msg: format!("must be positive and finite, got {x}"),
            }),
            other => Ok(other),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key)
            .map(|s| {
                s.split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| ConfigError::Value {
                            key: key.into(),
                            msg: format!("cannot parse '{}'", t.trim()),
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse `text`; relative `potential.file` paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let f = Fields(parse_lines(text)?);
        let potential = match (f.raw("potential.name"), f.raw("potential.file")) {
            (Some(name), None) => PotentialSource::Name(name.to_string()),
            (None, Some(file)) => PotentialSource::File(base.join(file)),
            _ => {
                return Err(ConfigError::Invalid(
                    "exactly one of potential.name and potential.file is required".into(),
                ))
            }
        };
        let solver = match f.raw("solver") {
            None => match potential {
                PotentialSource::Name(_) => Solver::Builtin,
                PotentialSource::File(_) => Solver::LaxOleinik,
            },
            Some("builtin") => Solver::Builtin,
            Some("distance") => Solver::Distance,
            Some("laxoleinik") => Solver::LaxOleinik,
            Some(other) => {
                return Err(ConfigError::Value {
                    key: "solver".into(),
                    msg: format!("expected builtin, distance or laxoleinik, got '{other}'"),
                })
            }
        };
        let dt = f.positive("flow.dt", 1e-3)?;
        if dt > 0.01 {
            return Err(ConfigError::Value {
                key: "flow.dt".into(),
                msg: format!("must be at most 0.01, got {dt}"),
            });
        }
        let schedule = f.list("schedule")?.unwrap_or_else(|| vec![10.0, 100.0, 1000.0]);
        if schedule.len() < 3
            || schedule[0] <= 0.0
            || schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(ConfigError::Value {
                key: "schedule".into(),
                msg: "needs at least three positive increasing horizons".into(),
            });
        }
        let x0 = match (f.raw("sweep.x0_list"), f.num::<usize>("sweep.count")?) {
            (Some(list), None) => InitialPoints::List(parse_points(list)?),
            (None, Some(count)) if count > 0 => InitialPoints::Random { count },
            (None, None) => InitialPoints::Random { count: 16 },
            (None, Some(_)) => {
                return Err(ConfigError::Value {
                    key: "sweep.count".into(),
                    msg: "must be positive".into(),
                })
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "sweep.x0_list and sweep.count are mutually exclusive".into(),
                ))
            }
        };
        Ok(ExperimentConfig {
            potential,
            solver,
            n: f.num("grid.n")?.unwrap_or(1024),
            dt,
            t_max: f.positive("flow.t_max", 10.0)?,
            eps: f.positive("flow.eps", 0.05)?,
            modes: f.num("flow.modes")?.unwrap_or(8),
            schedule,
            tol_crit: f.positive_opt("tol.crit")?,
            tol_sing: f.positive_opt("tol.sing")?,
            tol_gap: f.positive_opt("tol.gap")?,
            tol_v: f.positive_opt("tol.v")?,
            tol_weak: f.positive("tol.weak", 1e-3)?,
            viscosity_tol: f.positive("viscosity.tol", 1e-3)?,
            x0,
            seed: f.num("sweep.seed")?.unwrap_or(0),
            output_dir: PathBuf::from(f.raw("output.dir").unwrap_or("out")),
            lo_dt: f.positive("lo.dt", 0.02)?,
            lo_max_iter: f.num("lo.max_iter")?.unwrap_or(20_000),
            lo_tol: f.positive("lo.tol", 1e-8)?,
            lemma_cases: f.num("lemmas.cases")?.unwrap_or(1000),
        })
    }
}

fn parse_points(list: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    let bad = |msg: String| ConfigError::Value {
        key: "sweep.x0_list".into(),
        msg,
    };
    let points: Vec<Vec<f64>> = list
        .split(',')
        .map(|p| {
            p.split_whitespace()
                .map(|c| c.parse::<f64>().map_err(|_| bad(format!("cannot parse '{c}'"))))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;
    if points.is_empty() || points.iter().any(|p| p.is_empty() || p.len() > 2) {
        return Err(bad("points need one or two coordinates".into()));
    }
    if points.iter().any(|p| p.len() != points[0].len()) {
        return Err(bad("points of mixed dimension".into()));
    }
    Ok(points)
}
