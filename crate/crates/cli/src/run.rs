//! Executes one subcommand against a parsed experiment and records every artifact in a
//! manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ggflow_core::io::sig12;
use ggflow_core::measures::{limit_diagnostics_from, LimitConfig};
use ggflow_core::{
    builtin_solution, critical_constant, energy_residual, integrate, oscillation,
    solve_distance_like, solve_lax_oleinik, verify_viscosity, ClassificationReport,
    DichotomyConfig, DichotomyContext, FlowParams, LaxOleinikConfig, Potential, Tolerances,
    TorusPoint, ValueFunction, ViscosityTolerances,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitialPoints, PotentialSource, Solver};
use crate::lemmas;
use crate::svg::{Plot, Series};

/// Resolution at which `V` is scanned for `alpha0` and its oscillation.
pub const SCAN_N: usize = 1024;
/// Fraction of `osc V` used for the default `tol.gap`.
const GAP_FRACTION: f64 = 0.05;
/// Fraction of `osc V` used for the default `tol.v`.
const TOL_V_FRACTION: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    /// Compute the value function and check it.
    Solve,
    /// Integrate the gradient flow from each initial point.
    Flow,
    /// Classify each initial point and tabulate the verdicts.
    Classify,
    /// Classify many initial points in parallel.
    Sweep,
    /// Run randomized checks of the two averaging inequalities.
    Lemmas,
}

/// An error caused by the input rather than by the computation.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// 2 for input errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<Usage>()
            || e.is::<crate::config::ConfigError>()
            || matches!(
                e.downcast_ref::<ggflow_core::Error>(),
                Some(ggflow_core::Error::InvalidInput(_) | ggflow_core::Error::Parse(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

/// Every threshold and resolution a run depends on.
#[derive(Clone, Debug, Default, Serialize)]
struct Resolved {
    dim: usize,
    n: usize,
    spacing: f64,
    scan_n: usize,
    alpha0: Option<f64>,
    oscillation: Option<f64>,
    tolerances: Option<Tolerances>,
    tol_v: Option<f64>,
    tol_weak: f64,
    modes: usize,
    viscosity: Option<ViscosityTolerances>,
    lax_oleinik: Option<LaxOleinikConfig>,
    flow: Option<FlowParams>,
    dichotomy: Option<DichotomyConfig>,
    initial_points: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: Subcommand,
    seed: u64,
    config: &'a ExperimentConfig,
    resolved: &'a Resolved,
    artifacts: &'a [String],
    status: &'static str,
    error: Option<String>,
}

struct Problem {
    v: Potential,
    alpha0: f64,
    osc: f64,
    u: ValueFunction,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    out: PathBuf,
    artifacts: Vec<String>,
    resolved: Resolved,
}

/// Run `sub`, writing artifacts and `manifest.json` under `out`. The manifest is written
/// whether or not the subcommand succeeds.
pub fn execute(cfg: &ExperimentConfig, sub: Subcommand, out: &Path, seed: u64) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut run = Run {
        cfg,
        seed,
        out: out.to_path_buf(),
        artifacts: vec![],
        resolved: Resolved {
            n: cfg.n,
            scan_n: SCAN_N,
            tol_weak: cfg.tol_weak,
            modes: cfg.modes,
            ..Resolved::default()
        },
    };
    let result = match sub {
        Subcommand::Solve => run.solve(),
        Subcommand::Flow => run.flow(),
        Subcommand::Classify => run.classify(false),
        Subcommand::Sweep => run.classify(true),
        Subcommand::Lemmas => run.lemmas(),
    };
    let manifest = Manifest {
        tool: "ggflow",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: sub,
        seed,
        config: cfg,
        resolved: &run.resolved,
        artifacts: &run.artifacts,
        status: if result.is_ok() { "ok" } else { "failed" },
        error: result.as_ref().err().map(|e| format!("{e:#}")),
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(out.join("manifest.json"), text).context("cannot write manifest.json")?;
    result
}

fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn opt(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}

impl Run<'_> {
    fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        fs::write(self.out.join(name), contents).with_context(|| format!("cannot write {name}"))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn load_potential(&self) -> anyhow::Result<Potential> {
        match &self.cfg.potential {
            PotentialSource::Name(name) => Potential::registered(name).map_err(Into::into),
            PotentialSource::File(path) => {
                if !path.is_file() {
                    return Err(Usage(format!("potential file {} does not exist", path.display())).into());
                }
                Potential::read_csv(path).with_context(|| format!("reading {}", path.display()))
            }
        }
    }

    fn problem(&mut self) -> anyhow::Result<Problem> {
        let cfg = self.cfg;
        let v = self.load_potential()?;
        let alpha0 = critical_constant(&v, SCAN_N)?;
        let osc = oscillation(&v, SCAN_N)?;
        self.resolved.dim = v.dim();
        self.resolved.spacing = 1.0 / cfg.n as f64;
        self.resolved.alpha0 = Some(alpha0);
        self.resolved.oscillation = Some(osc);
        let defaults = Tolerances::for_grid(cfg.n, osc);
        self.resolved.tolerances = Some(Tolerances {
            crit: cfg.tol_crit.unwrap_or(defaults.crit),
            sing: cfg.tol_sing.unwrap_or(defaults.sing),
            gap: cfg.tol_gap.unwrap_or(GAP_FRACTION * osc),
        });
        self.resolved.tol_v = Some(cfg.tol_v.unwrap_or(TOL_V_FRACTION * osc));
        let u = match cfg.solver {
            Solver::Builtin => {
                let PotentialSource::Name(name) = &cfg.potential else {
                    return Err(Usage("solver 'builtin' needs potential.name".into()).into());
                };
                builtin_solution(name, cfg.n)?
            }
            Solver::Distance => solve_distance_like(&v, alpha0, cfg.n)?,
            Solver::LaxOleinik => {
                let lo = LaxOleinikConfig {
                    n: cfg.n,
                    dt: cfg.lo_dt,
                    max_iter: cfg.lo_max_iter,
                    tol: cfg.lo_tol,
                };
                self.resolved.lax_oleinik = Some(lo.clone());
                solve_lax_oleinik(&v, alpha0, &lo, None)?.solution
            }
        };
        Ok(Problem { v, alpha0, osc, u })
    }

    fn initial_points(&mut self, dim: usize) -> anyhow::Result<Vec<TorusPoint>> {
        let coords: Vec<Vec<f64>> = match &self.cfg.x0 {
            InitialPoints::List(points) => {
                if points[0].len() != dim {
                    return Err(Usage(format!(
                        "initial points have {} coordinates, the potential is {dim}-dimensional",
                        points[0].len()
                    ))
                    .into());
                }
                points.clone()
            }
            InitialPoints::Random { count } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..*count)
                    .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
                    .collect()
            }
        };
        self.resolved.initial_points = coords.clone();
        Ok(coords
            .iter()
            .map(|c| match c.as_slice() {
                [x] => TorusPoint::new1(*x),
                [x, y] => TorusPoint::new2(*x, *y),
                _ => unreachable!("points have one or two coordinates"),
            })
            .collect())
    }

    fn solve(&mut self) -> anyhow::Result<()> {
        let p = self.problem()?;
        let tols = ViscosityTolerances {
            eq: self.cfg.viscosity_tol,
            sub: self.cfg.viscosity_tol,
            kink_jump: None,
        };
        self.resolved.viscosity = Some(tols);
        self.write("value_function.csv", &p.u.to_csv_string())?;
        let shape = p.u.shape();
        let slice: Vec<(f64, f64)> = (0..shape.n)
            .map(|i| {
                let x = i as f64 * shape.spacing();
                (x, p.u.grid().values()[shape.index([i as isize, 0])])
            })
            .collect();
        let title = if p.u.dim() == 1 {
            format!("value function ({})", p.u.provenance())
        } else {
            format!("value function on x_2 = 0 ({})", p.u.provenance())
        };
        let plot = Plot {
            title,
            x_label: "x_1".into(),
            y_label: "u".into(),
            log_x: false,
            series: vec![Series::new("u", slice)],
        };
        self.write("value_function.svg", &plot.render())?;
        let report = verify_viscosity(&p.u, &p.v, p.alpha0, &tols)?;
        #[derive(Serialize)]
        struct SolveReport<'a> {
            potential: &'a str,
            provenance: String,
            alpha0: f64,
            oscillation: f64,
            lipschitz: f64,
            viscosity: &'a ggflow_core::ViscosityReport,
        }
        let out = SolveReport {
            potential: p.v.name(),
            provenance: p.u.provenance().to_string(),
            alpha0: p.alpha0,
            oscillation: p.osc,
            lipschitz: p.u.lipschitz(),
            viscosity: &report,
        };
        self.write("viscosity_report.json", &json(&out)?)?;
        if !report.passes {
            return Err(anyhow!(
                "viscosity check failed: equation residual {:.3e}, subsolution violation {:.3e} (tol {:.1e})",
                report.eq_residual,
                report.sub_violation,
                self.cfg.viscosity_tol
            ));
        }
        Ok(())
    }

    fn flow(&mut self) -> anyhow::Result<()> {
        let p = self.problem()?;
        let tols = self.resolved.tolerances.expect("resolved");
        let points = self.initial_points(p.u.dim())?;
        let params = FlowParams {
            horizon: self.cfg.t_max,
            dt: self.cfg.dt,
            tol_crit: tols.crit,
        };
        self.resolved.flow = Some(params);
        let sets = ggflow_core::CriticalSets::compute(&p.u, &p.v, p.alpha0, &tols);
        let trajectories: Vec<_> = points
            .par_iter()
            .map(|x| integrate(&p.u, x, &params, None))
            .collect();
        let mut summary = String::from("index,");
        summary.push_str(if p.u.dim() == 1 { "x_1" } else { "x_1,x_2" });
        summary.push_str(",tau,absorbed_at,energy_residual,end_1");
        if p.u.dim() == 2 {
            summary.push_str(",end_2");
        }
        summary.push('\n');
        for (i, traj) in trajectories.into_iter().enumerate() {
            let traj = traj.with_context(|| format!("integrating from initial point {i}"))?;
            self.write(&format!("trajectory_{i:03}.csv"), &traj.to_csv_string(&sets))?;
            let series = (0..p.u.dim())
                .map(|axis| {
                    let pts = traj.samples().iter().map(|s| (s.t, s.x.coord(axis))).collect();
                    Series::new(format!("x_{}", axis + 1), pts)
                })
                .collect();
            let plot = Plot {
                title: format!("trajectory {i}"),
                x_label: "t".into(),
                y_label: "x".into(),
                log_x: false,
                series,
            };
            self.write(&format!("trajectory_{i:03}.svg"), &plot.render())?;
            let tau = ggflow_core::critical_time(&traj, &p.u, &p.v, p.alpha0, &tols);
            let mut row: Vec<String> = vec![i.to_string()];
            row.extend(traj.start().coords().iter().map(|&c| sig12(c)));
            row.push(sig12(tau));
            row.push(opt(traj.absorbed_at()));
            row.push(sig12(energy_residual(&traj)));
            row.extend(traj.endpoint().coords().iter().map(|&c| sig12(c)));
            summary.push_str(&row.join(","));
            summary.push('\n');
        }
        self.write("flow_summary.csv", &summary)
    }

    fn classify(&mut self, sweep: bool) -> anyhow::Result<()> {
        let p = self.problem()?;
        let tols = self.resolved.tolerances.expect("resolved");
        let points = self.initial_points(p.u.dim())?;
        let dcfg = DichotomyConfig {
            schedule: self.cfg.schedule.clone(),
            dt: self.cfg.dt,
            eps: self.cfg.eps,
            tol_v: self.resolved.tol_v.expect("resolved"),
            tols,
        };
        self.resolved.dichotomy = Some(dcfg.clone());
        let lcfg = LimitConfig {
            dt: self.cfg.dt,
            modes: self.cfg.modes,
            tol_weak: self.cfg.tol_weak,
        };
        let ctx = DichotomyContext::new(&p.u, &p.v, p.alpha0, &tols)?;
        let params = FlowParams {
            horizon: *dcfg.schedule.last().expect("validated"),
            dt: dcfg.dt,
            tol_crit: tols.crit,
        };
        let results: Vec<PointResult> = points
            .par_iter()
            .map(|x| {
                let classification = ctx.classify(x, &dcfg);
                let limit = integrate(&p.u, x, &params, None).and_then(|traj| {
                    limit_diagnostics_from(&traj, p.u.shape(), &dcfg.schedule, &lcfg)
                });
                PointResult::new(x, classification, limit)
            })
            .collect();

        let dim = p.u.dim();
        let mut table = String::from("index,");
        table.push_str(if dim == 1 { "x_1" } else { "x_1,x_2" });
        table.push_str(",verdict,tau,t0,vbar_final,alpha0,argmax_fraction_final,attractor_fraction_final,moments_converged\n");
        let mut inconclusive = 0;
        let mut failures = vec![];
        for (i, r) in results.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(r.x0.iter().map(|&c| sig12(c)));
            match &r.report {
                Some(rep) => {
                    row.push(rep.verdict.as_str().into());
                    row.push(if rep.tau.is_finite() { sig12(rep.tau) } else { "inf".into() });
                    row.push(opt(rep.t0));
                    row.push(opt(rep.vbar_trace.last().copied()));
                    row.push(sig12(p.alpha0));
                    row.push(opt(rep.argmax_trace.last().copied()));
                    row.push(opt(rep.attractor_trace.last().copied()));
                }
                None => {
                    row.push(if r.inconclusive { "Inconclusive" } else { "Failed" }.into());
                    row.extend(["", "", ""].map(String::from));
                    row.push(opt(r.vbar_trace.as_ref().and_then(|t| t.last().copied())));
                    row.push(sig12(p.alpha0));
                    row.extend(["", ""].map(String::from));
                    if r.inconclusive {
                        inconclusive += 1;
                    } else {
                        failures.push(format!("point {i}: {}", r.error.as_deref().unwrap_or("")));
                    }
                }
            }
            row.push(r.limit.as_ref().map_or(String::new(), |l| l.converged.to_string()));
            table.push_str(&row.join(","));
            table.push('\n');
        }

        if sweep {
            self.write("sweep.json", &json(&results)?)?;
            self.write("sweep.csv", &table)?;
            let series = results
                .iter()
                .enumerate()
                .filter_map(|(i, r)| {
                    r.vbar_trace.as_ref().map(|t| {
                        Series::new(format!("{i}"), dcfg.schedule.iter().copied().zip(t.iter().copied()).collect())
                    })
                })
                .collect();
            self.write("vbar.svg", &vbar_plot(series, p.alpha0, &dcfg.schedule).render())?;
        } else {
            for (i, r) in results.iter().enumerate() {
                self.write(&format!("classification_{i:03}.json"), &json(r)?)?;
                if let Some(t) = &r.vbar_trace {
                    let s = Series::new("vbar", dcfg.schedule.iter().copied().zip(t.iter().copied()).collect());
                    self.write(&format!("vbar_{i:03}.svg"), &vbar_plot(vec![s], p.alpha0, &dcfg.schedule).render())?;
                }
            }
            self.write("classification_summary.csv", &table)?;
        }
        if !failures.is_empty() {
            return Err(anyhow!("{} point(s) failed: {}", failures.len(), failures.join("; ")));
        }
        if inconclusive > 0 && !sweep {
            return Err(anyhow!("{inconclusive} point(s) inconclusive at the final horizon"));
        }
        Ok(())
    }

    fn lemmas(&mut self) -> anyhow::Result<()> {
        let summary = lemmas::run_suite(self.cfg.lemma_cases, self.seed)?;
        self.write("lemmas.json", &json(&summary)?)?;
        let violations = summary.a1.violations + summary.a2.violations;
        if violations > 0 {
            return Err(anyhow!("{violations} lemma violation(s)"));
        }
        Ok(())
    }
}

fn vbar_plot(mut series: Vec<Series>, alpha0: f64, schedule: &[f64]) -> Plot {
    let first = schedule[0];
    let last = *schedule.last().expect("validated");
    series.push(Series::new("alpha0", vec![(first, alpha0), (last, alpha0)]));
    Plot {
        title: "average of V along the orbit".into(),
        x_label: "T".into(),
        y_label: "vbar".into(),
        log_x: true,
        series,
    }
}

#[derive(Serialize)]
struct LimitSummary {
    moment_trace: Vec<Vec<f64>>,
    converged: bool,
    converged_at: Option<f64>,
    dirac_candidate: Option<Vec<f64>>,
    dirac_mass: f64,
}

#[derive(Serialize)]
struct PointResult {
    x0: Vec<f64>,
    report: Option<ClassificationReport>,
    inconclusive: bool,
    error: Option<String>,
    vbar_trace: Option<Vec<f64>>,
    limit: Option<LimitSummary>,
    limit_error: Option<String>,
}

impl PointResult {
    fn new(
        x: &TorusPoint,
        classification: ggflow_core::Result<ClassificationReport>,
        limit: ggflow_core::Result<ggflow_core::LimitReport>,
    ) -> Self {
        let (limit, limit_error) = match limit {
            Ok(l) => (
                Some(LimitSummary {
                    moment_trace: l.moment_trace,
                    converged: l.converged,
                    converged_at: l.converged_at,
                    dirac_candidate: l.dirac_candidate.map(|p| p.coords().to_vec()),
                    dirac_mass: l.dirac_mass,
                }),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        };
        let x0 = x.coords().to_vec();
        match classification {
            Ok(r) => PointResult {
                x0,
                vbar_trace: Some(r.vbar_trace.clone()),
                report: Some(r),
                inconclusive: false,
                error: None,
                limit,
                limit_error,
            },
            Err(e) => {
                let (inconclusive, vbar_trace) = match &e {
                    ggflow_core::Error::Inconclusive { vbar_trace, .. } => (true, Some(vbar_trace.clone())),
                    _ => (false, None),
                };
                PointResult {
                    x0,
                    report: None,
                    inconclusive,
                    error: Some(e.to_string()),
                    vbar_trace,
                    limit,
                    limit_error,
                }
            }
        }
    }
}
