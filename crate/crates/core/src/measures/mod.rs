//! Occupational measures of flow trajectories and diagnostics for their weak limits.

mod dichotomy;
mod lemmas;

pub use dichotomy::{
    dichotomy_classify, ClassificationReport, DichotomyConfig, DichotomyContext, Verdict,
};
pub use lemmas::{lemma_a1_check, lemma_a2_check, LemmaA1Outcome, LemmaA2Outcome};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate, FlowParams, Trajectory};
use crate::semiconcave::CriticalSets;
use crate::torus::{dist_unchecked, GridShape, PeriodicGrid, TorusPoint};
use crate::weakkam::ValueFunction;

/// Default number of Fourier modes per axis.
pub const DEFAULT_MODES: usize = 8;
/// Default bound on successive moment vector differences.
pub const DEFAULT_TOL_WEAK: f64 = 1e-3;
/// Mass a bin cluster must hold for a Dirac candidate.
pub const DIRAC_MASS: f64 = 0.99;
/// Cluster radius for Dirac candidates, in grid cells.
pub const DIRAC_CLUSTER_CELLS: f64 = 2.0;
const HORIZON_SLACK: f64 = 1e-9;

/// Time-averaged histogram of a trajectory; bins are centered at grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationalMeasure {
    shape: GridShape,
    weights: Vec<f64>,
    horizon: f64,
    x0: TorusPoint,
}

impl OccupationalMeasure {
    /// All mass on the bin of `x`.
    pub fn dirac(shape: GridShape, x: &TorusPoint) -> Self {
        let mut weights = vec![0.0; shape.len()];
        weights[shape.nearest_node(x)] = 1.0;
        OccupationalMeasure {
            shape,
            weights,
            horizon: 0.0,
            x0: *x,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn x0(&self) -> TorusPoint {
        self.x0
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_k w_k f(c_k)` over bin centers `c_k`.
    pub fn expectation(&self, f: impl Fn(&TorusPoint) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(k, w)| w * f(&self.shape.node(k)))
            .sum()
    }

    /// Bins with positive weight, as `(center, weight)`.
    pub fn support(&self) -> impl Iterator<Item = (TorusPoint, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(k, &w)| (self.shape.node(k), w))
    }
}

/// Histogram of `x(t)` over `t in [0, T]`: each sample interval deposits its length,
/// divided by `T`, in the bin of its left endpoint.
pub fn occupational_measure(
    traj: &Trajectory,
    horizon: f64,
    shape: GridShape,
) -> Result<OccupationalMeasure> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if horizon > traj.horizon() * (1.0 + HORIZON_SLACK) {
        return Err(Error::invalid(format!(
            "horizon {horizon} exceeds the trajectory horizon {}",
            traj.horizon()
        )));
    }
    if traj.start().dim() != shape.dim {
        return Err(Error::invalid("trajectory and grid dimensions differ"));
    }
    let mut weights = vec![0.0; shape.len()];
    for w in traj.samples().windows(2) {
        if w[0].t >= horizon {
            break;
        }
        let len = w[1].t.min(horizon) - w[0].t;
        weights[shape.nearest_node(&w[0].x)] += len / horizon;
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(OccupationalMeasure {
        shape,
        weights,
        horizon,
        x0: traj.start(),
    })
}

/// `sum_k w_k f_k` for a function sampled on the same grid.
pub fn integrate_against(mu: &OccupationalMeasure, f: &PeriodicGrid) -> Result<f64> {
    if f.shape() != mu.shape {
        return Err(Error::invalid("test function and measure live on different grids"));
    }
    Ok(mu.weights.iter().zip(f.values()).map(|(w, v)| w * v).sum())
}

/// Integrals of `cos(2 pi k x_a)` and `sin(2 pi k x_a)` for `k = 1..=modes` and every
/// axis `a`.
pub fn moments(mu: &OccupationalMeasure, modes: usize) -> Vec<f64> {
    let dim = mu.shape.dim;
    let mut m = vec![0.0; 2 * modes * dim];
    for (x, w) in mu.support() {
        for a in 0..dim {
            let theta = 2.0 * PI * x.coord(a);
            for k in 1..=modes {
                let base = 2 * (a * modes + k - 1);
                let (s, c) = (k as f64 * theta).sin_cos();
                m[base] += w * c;
                m[base + 1] += w * s;
            }
        }
    }
    m
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Heaviest bin, if the bins within two cells of it carry at least `DIRAC_MASS`.
pub fn dirac_candidate(mu: &OccupationalMeasure) -> Option<(TorusPoint, f64)> {
    let (k, _) = mu
        .weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let center = mu.shape.node(k);
    let radius = DIRAC_CLUSTER_CELLS * mu.shape.spacing() + 1e-12;
    let mass: f64 = mu
        .support()
        .filter(|(x, _)| dist_unchecked(x, &center) <= radius)
        .map(|(_, w)| w)
        .sum();
    (mass >= DIRAC_MASS).then_some((center, mass))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub dt: f64,
    pub modes: usize,
    pub tol_weak: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            dt: 1e-3,
            modes: DEFAULT_MODES,
            tol_weak: DEFAULT_TOL_WEAK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub schedule: Vec<f64>,
    pub moment_trace: Vec<Vec<f64>>,
    pub converged: bool,
    /// Earliest horizon from which all successive moment vectors agree within tolerance.
    pub converged_at: Option<f64>,
    pub limit_measure: OccupationalMeasure,
    pub dirac_candidate: Option<TorusPoint>,
    pub dirac_mass: f64,
}

/// Moments of `mu_x^{T_k}` along the schedule, a convergence flag and a Dirac test on the
/// measure at the largest horizon.
pub fn limit_diagnostics(
    u: &ValueFunction,
    x0: &TorusPoint,
    schedule: &[f64],
    cfg: &LimitConfig,
) -> Result<LimitReport> {
    check_schedule(schedule)?;
    let t_max = *schedule.last().expect("checked");
    let traj = integrate(u, x0, &FlowParams::new(u, t_max, cfg.dt), None)?;
    limit_diagnostics_from(&traj, u.shape(), schedule, cfg)
}

/// [`limit_diagnostics`] for an already integrated trajectory.
pub fn limit_diagnostics_from(
    traj: &Trajectory,
    shape: GridShape,
    schedule: &[f64],
    cfg: &LimitConfig,
) -> Result<LimitReport> {
    check_schedule(schedule)?;
    let mut measures = Vec::with_capacity(schedule.len());
    for &t in schedule {
        measures.push(occupational_measure(traj, t, shape)?);
    }
    let moment_trace: Vec<Vec<f64>> = measures.iter().map(|m| moments(m, cfg.modes)).collect();
    let close: Vec<bool> = moment_trace
        .windows(2)
        .map(|w| max_diff(&w[0], &w[1]) <= cfg.tol_weak)
        .collect();
    let converged = *close.last().expect("at least three horizons");
    let converged_at = if converged {
        let first = close.iter().rposition(|&c| !c).map_or(0, |k| k + 1);
        Some(schedule[first])
    } else {
        None
    };
    let limit_measure = measures.pop().expect("nonempty");
    let dirac = dirac_candidate(&limit_measure);
    Ok(LimitReport {
        schedule: schedule.to_vec(),
        moment_trace,
        converged,
        converged_at,
        dirac_candidate: dirac.map(|d| d.0),
        dirac_mass: dirac.map_or(0.0, |d| d.1),
        limit_measure,
    })
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 3 {
        return Err(Error::invalid("the horizon schedule needs at least three entries"));
    }
    if schedule[0] <= 0.0 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("the horizon schedule must be positive and increasing"));
    }
    Ok(())
}

/// Max-norm moment difference between `mu` and its pushforward under the flow for time
/// `s`, each bin moving its mass from the bin center.
pub fn invariance_defect(
    mu: &OccupationalMeasure,
    u: &ValueFunction,
    s: f64,
    modes: usize,
    dt: f64,
) -> Result<f64> {
    if mu.shape != u.shape() {
        return Err(Error::invalid("measure and value function live on different grids"));
    }
    let params = FlowParams::new(u, s, dt);
    let mut pushed = vec![0.0; mu.shape.len()];
    for (x, w) in mu.support() {
        let end = integrate(u, &x, &params, None)?.endpoint();
        pushed[mu.shape.nearest_node(&end)] += w;
    }
    let image = OccupationalMeasure {
        weights: pushed,
        ..mu.clone()
    };
    Ok(max_diff(&moments(mu, modes), &moments(&image, modes)))
}

/// `(1/T) |{t in [0, T] : pred(x(t))}|`, with `x` constant on each sample interval.
fn time_fraction(traj: &Trajectory, horizon: f64, pred: impl Fn(&TorusPoint) -> bool) -> f64 {
    let mut time = 0.0;
    for w in traj.samples().windows(2) {
        if w[0].t >= horizon {
            break;
        }
        if pred(&w[0].x) {
            time += w[1].t.min(horizon) - w[0].t;
        }
    }
    time / horizon
}

/// Fraction of `[0, T]` spent at distance at least `eps` from the critical nodes.
pub fn attractor_fraction(traj: &Trajectory, sets: &CriticalSets, eps: f64, horizon: f64) -> Result<f64> {
    check_fraction_args(traj, eps, horizon)?;
    Ok(time_fraction(traj, horizon, |x| sets.distance_to_crit(x) >= eps))
}

/// Fraction of `[0, T]` spent at distance at least `eps` from `xbar`.
pub fn dirac_test(traj: &Trajectory, xbar: &TorusPoint, eps: f64, horizon: f64) -> Result<f64> {
    check_fraction_args(traj, eps, horizon)?;
    if xbar.dim() != traj.start().dim() {
        return Err(Error::invalid("candidate and trajectory dimensions differ"));
    }
    Ok(time_fraction(traj, horizon, |x| dist_unchecked(x, xbar) >= eps))
}

fn check_fraction_args(traj: &Trajectory, eps: f64, horizon: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if !(horizon > 0.0) || horizon > traj.horizon() * (1.0 + HORIZON_SLACK) {
        return Err(Error::invalid(format!(
            "horizon {horizon} outside (0, {}]",
            traj.horizon()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{oscillation, Potential};
    use crate::semiconcave::{classify_point, min_norm_selection, Tolerances};
    use crate::weakkam::builtin_solution;
    use approx::assert_abs_diff_eq;

    fn pendulum_run(horizon: f64) -> (ValueFunction, Trajectory) {
        let u = builtin_solution("pendulum", 1024).unwrap();
        let traj = integrate(&u, &TorusPoint::new1(0.25), &FlowParams::new(&u, horizon, 1e-3), None).unwrap();
        (u, traj)
    }

    /// Transit time of `x' = 2 sin(pi x)` from `a` to `b`.
    fn transit(a: f64, b: f64) -> f64 {
        let g = |x: f64| (PI * x / 2.0).tan().ln() / (2.0 * PI);
        g(b) - g(a)
    }

    #[test]
    fn constant_trajectory_gives_a_dirac() {
        let u = builtin_solution("pendulum", 256).unwrap();
        let x = TorusPoint::new1(0.5);
        let traj = integrate(&u, &x, &FlowParams::new(&u, 10.0, 1e-3), None).unwrap();
        let mu = occupational_measure(&traj, 10.0, u.shape()).unwrap();
        assert_eq!(mu.weights()[128], 1.0);
        let f = PeriodicGrid::from_fn(256, 1, |y| (3.0 * y.coord(0)).sin()).unwrap();
        assert_eq!(integrate_against(&mu, &f).unwrap(), f.values()[128]);
        assert!(occupational_measure(&traj, 11.0, u.shape()).is_err());
        assert_eq!(attractor_fraction(&traj, &CriticalSets { crit: vec![x], sing: vec![] }, 0.05, 10.0).unwrap(), 0.0);
        assert_eq!(dirac_test(&traj, &x, 0.05, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn pendulum_measure_concentrates_at_the_kink() {
        let (u, traj) = pendulum_run(10.0);
        let mu = occupational_measure(&traj, 10.0, u.shape()).unwrap();
        assert_abs_diff_eq!(mu.total_mass(), 1.0, epsilon = 1e-12);
        assert!(mu.weights().iter().all(|&w| w >= 0.0));
        assert!(mu.weights()[512] >= 0.985, "{}", mu.weights()[512]);

        let one = PeriodicGrid::constant(1024, 1, 1.0).unwrap();
        assert_abs_diff_eq!(integrate_against(&mu, &one).unwrap(), 1.0, epsilon = 1e-12);
        let vgrid = Potential::pendulum().sample(u.shape()).unwrap();
        // (1/T)(int_0^tau V(x(t)) dt - (T - tau)) with V(x(t)) = cos(2 pi x(t)) along the
        // exact orbit; int_0^tau cos(2 pi x) dt = int_{1/4}^{1/2} cos(2 pi y) / (2 sin pi y) dy.
        let m = 200_000;
        let h = 0.25 / m as f64;
        let part: f64 = (0..m)
            .map(|i| {
                let y = 0.25 + (i as f64 + 0.5) * h;
                (2.0 * PI * y).cos() / (2.0 * (PI * y).sin()) * h
            })
            .sum();
        let tau = transit(0.25, 0.5 - 1e-12);
        let reference = (part - (10.0 - tau)) / 10.0;
        let got = integrate_against(&mu, &vgrid).unwrap();
        assert!((got - reference).abs() <= 0.01, "{got} vs {reference}");
        assert!((got + 0.986).abs() <= 0.01);
        assert!(integrate_against(&mu, &PeriodicGrid::constant(64, 1, 1.0).unwrap()).is_err());
    }

    #[test]
    fn attractor_fraction_matches_transit_time() {
        let (u, traj) = pendulum_run(1000.0);
        let v = Potential::pendulum();
        let tols = Tolerances::for_grid(1024, oscillation(&v, 1024).unwrap());
        let sets = CriticalSets::compute(&u, &v, 1.0, &tols);
        let oracle = transit(0.25, 0.45);
        assert_abs_diff_eq!(oracle, 0.11517, epsilon = 1e-5);
        let f10 = attractor_fraction(&traj, &sets, 0.05, 10.0).unwrap();
        let f1000 = attractor_fraction(&traj, &sets, 0.05, 1000.0).unwrap();
        assert!((f10 - oracle / 10.0).abs() <= 0.002, "{f10}");
        assert!(f1000 <= 2e-4 && f1000 < f10);
        assert!(dirac_test(&traj, &TorusPoint::new1(0.5), 0.05, 1000.0).unwrap() <= 2e-4);
        assert!(dirac_test(&traj, &TorusPoint::new1(0.0), 0.05, 1000.0).unwrap() >= 0.999);
        assert!(dirac_test(&traj, &TorusPoint::new1(0.0), 0.0, 1000.0).is_err());
    }

    #[test]
    fn limits_are_critical_diracs() {
        let cfg = LimitConfig::default();
        let schedule = [100.0, 1000.0, 10_000.0];
        for (name, v, x0, alpha0) in [
            ("pendulum", Potential::pendulum(), 0.25, 1.0),
            ("degenerate", Potential::degenerate(), 0.2, 0.0),
        ] {
            let u = builtin_solution(name, 1024).unwrap();
            let tols = Tolerances::for_grid(1024, oscillation(&v, 1024).unwrap());
            let r = limit_diagnostics(&u, &TorusPoint::new1(x0), &schedule, &cfg).unwrap();
            assert!(r.converged, "{name}: {:?}", r.moment_trace);
            let c = r.dirac_candidate.expect("dirac");
            assert!((c.coord(0) - 0.5).abs() <= 1.0 / 1024.0, "{name}: {c:?}");
            assert!(classify_point(&u, &v, alpha0, &c, &tols).kind.is_critical());
            for (x, w) in r.limit_measure.support() {
                if w > 1e-3 {
                    assert!(min_norm_selection(&u, &x).unwrap().norm() <= tols.crit);
                }
            }
            assert!(invariance_defect(&r.limit_measure, &u, 1.0, cfg.modes, cfg.dt).unwrap() <= 1e-3);
        }
    }

    #[test]
    fn critical_start_converges_immediately() {
        let u = builtin_solution("pendulum", 256).unwrap();
        let x0 = TorusPoint::new1(0.5);
        let r = limit_diagnostics(&u, &x0, &[10.0, 100.0, 1000.0], &LimitConfig::default()).unwrap();
        assert_eq!(r.converged_at, Some(10.0));
        assert_eq!(r.dirac_candidate, Some(x0));
        let mu = OccupationalMeasure::dirac(u.shape(), &x0);
        assert!(invariance_defect(&mu, &u, 3.0, 8, 1e-3).unwrap() <= 1e-12);
        assert!(limit_diagnostics(&u, &x0, &[10.0, 100.0], &LimitConfig::default()).is_err());
        assert!(limit_diagnostics(&u, &x0, &[10.0, 5.0, 100.0], &LimitConfig::default()).is_err());
    }

    #[test]
    fn finite_horizon_measure_is_not_invariant() {
        let (u, traj) = pendulum_run(1.0);
        let mu = occupational_measure(&traj, 1.0, u.shape()).unwrap();
        assert!(invariance_defect(&mu, &u, 1.0, 8, 1e-3).unwrap() > 0.05);
    }

    #[test]
    fn limit_is_flow_invariant_and_u_integral_stable() {
        let u = builtin_solution("pendulum", 1024).unwrap();
        let cfg = LimitConfig::default();
        let x0 = TorusPoint::new1(0.1);
        let a = limit_diagnostics(&u, &x0, &[100.0, 1000.0, 10_000.0], &cfg).unwrap();
        let moved = integrate(&u, &x0, &FlowParams::new(&u, 1.0, cfg.dt), None).unwrap().endpoint();
        let b = limit_diagnostics(&u, &moved, &[100.0, 1000.0, 10_000.0], &cfg).unwrap();
        assert!(max_diff(a.moment_trace.last().unwrap(), b.moment_trace.last().unwrap()) <= 2e-3);
        let c = limit_diagnostics(&u, &x0, &[300.0, 3000.0, 30_000.0], &cfg).unwrap();
        let ui = |r: &LimitReport| r.limit_measure.expectation(|x| u.value(x));
        assert!((ui(&a) - ui(&c)).abs() <= 1e-3);
    }

    #[test]
    fn one_dimensional_limits_are_single_diracs() {
        let cfg = LimitConfig::default();
        for name in ["pendulum", "degenerate"] {
            let u = builtin_solution(name, 512).unwrap();
            for k in 0..10 {
                let x0 = TorusPoint::new1(0.03 + 0.1 * k as f64);
                let r = limit_diagnostics(&u, &x0, &[100.0, 1000.0, 10_000.0], &cfg).unwrap();
                assert!(r.converged && r.dirac_candidate.is_some(), "{name} {x0:?}");
            }
        }
    }
}
