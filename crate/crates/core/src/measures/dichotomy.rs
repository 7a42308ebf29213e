//! Sorting initial conditions into the two long-time behaviours of the flow: either the
//! potential averages to `alpha0` along the orbit and the orbit spends vanishing time away
//! from the argmax set of `V`, or the average stays below `alpha0` and the orbit enters
//! the singular set in finite time and never leaves it.

use serde::{Serialize, Serializer};

use super::{occupational_measure, time_fraction};
use crate::error::{Error, Result};
use crate::flow::{critical_time, integrate, FlowParams};
use crate::potential::{argmax_set, oscillation, MaxSet, Potential};
use crate::semiconcave::{classify_point, CriticalSets, Tolerances};
use crate::torus::{dist_unchecked, TorusPoint};
use crate::weakkam::ValueFunction;

/// Fraction of `delta(V)` used as the default `tol_v`.
pub const TOL_V_FRACTION: f64 = 0.02;
/// Resolution used to scan `V` for its oscillation and argmax set.
const SCAN_N: usize = 1024;
const ARGMAX_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DichotomyConfig {
    pub schedule: Vec<f64>,
    pub dt: f64,
    /// Distance defining "away from" `M(V)` and `Crit(u)`.
    pub eps: f64,
    pub tol_v: f64,
    pub tols: Tolerances,
}

impl DichotomyConfig {
    /// Schedule `{10, 100, 1000}`, `dt = 1e-3`, `eps = 0.05`, grid tolerances and
    /// `tol_v = 0.02 delta(V)`.
    pub fn standard(u: &ValueFunction, v: &Potential) -> Result<Self> {
        let osc = oscillation(v, SCAN_N)?;
        Ok(DichotomyConfig {
            schedule: vec![10.0, 100.0, 1000.0],
            dt: 1e-3,
            eps: 0.05,
            tol_v: TOL_V_FRACTION * osc,
            tols: Tolerances::for_grid(u.n(), osc),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    ApproachesRegularCritical,
    EntersSingularSet,
    StationaryCritical,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ApproachesRegularCritical => "ApproachesRegularCritical",
            Verdict::EntersSingularSet => "EntersSingularSet",
            Verdict::StationaryCritical => "StationaryCritical",
        }
    }
}

fn finite_or_inf<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub x0: Vec<f64>,
    #[serde(serialize_with = "finite_or_inf")]
    pub tau: f64,
    /// Start of the final run of singular samples.
    pub t0: Option<f64>,
    pub alpha0: f64,
    pub schedule: Vec<f64>,
    /// `int V d mu_x^{T_k}`.
    pub vbar_trace: Vec<f64>,
    /// Fraction of `[0, T_k]` at distance `>= eps` from `Crit(u)`.
    pub attractor_trace: Vec<f64>,
    /// Fraction of `[0, T_k]` at distance `>= eps` from `M(V)`.
    pub argmax_trace: Vec<f64>,
    /// `(alpha0 - vbar_final) / 3` when the orbit enters the singular set.
    pub eta: Option<f64>,
    /// Fraction of `[0, T_k]` where `1/2 |p0|^2 + V < alpha0 - eta`.
    pub eta_density_trace: Vec<f64>,
    pub eta_density_max: Option<f64>,
    pub config: DichotomyConfig,
}

/// Quantities shared by every classification with the same `u`, `V` and tolerances.
#[derive(Clone, Debug)]
pub struct DichotomyContext<'a> {
    pub u: &'a ValueFunction,
    pub v: &'a Potential,
    pub alpha0: f64,
    pub sets: CriticalSets,
    pub argmax: MaxSet,
}

impl<'a> DichotomyContext<'a> {
    pub fn new(
        u: &'a ValueFunction,
        v: &'a Potential,
        alpha0: f64,
        tols: &Tolerances,
    ) -> Result<Self> {
        if u.dim() != v.dim() {
            return Err(Error::invalid("potential and value function dimensions differ"));
        }
        Ok(DichotomyContext {
            u,
            v,
            alpha0,
            sets: CriticalSets::compute(u, v, alpha0, tols),
            argmax: argmax_set(v, SCAN_N.max(u.n()), ARGMAX_TOL)?,
        })
    }

    fn distance_to_argmax(&self, x: &TorusPoint) -> f64 {
        match &self.argmax {
            MaxSet::WholeTorus => 0.0,
            MaxSet::Points(p) => p
                .iter()
                .map(|y| dist_unchecked(x, y))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn classify(&self, x0: &TorusPoint, cfg: &DichotomyConfig) -> Result<ClassificationReport> {
        super::check_schedule(&cfg.schedule)?;
        let (u, v, alpha0) = (self.u, self.v, self.alpha0);
        let class = |x: &TorusPoint| classify_point(u, v, alpha0, x, &cfg.tols);
        let mut report = ClassificationReport {
            verdict: Verdict::StationaryCritical,
            x0: x0.coords().to_vec(),
            tau: 0.0,
            t0: None,
            alpha0,
            schedule: cfg.schedule.clone(),
            vbar_trace: vec![],
            attractor_trace: vec![],
            argmax_trace: vec![],
            eta: None,
            eta_density_trace: vec![],
            eta_density_max: None,
            config: cfg.clone(),
        };
        let t_max = *cfg.schedule.last().expect("checked");
        let params = FlowParams {
            horizon: t_max,
            dt: cfg.dt,
            tol_crit: cfg.tols.crit,
        };
        let traj = integrate(u, x0, &params, None)?;
        let vgrid = v.sample(u.shape())?;
        for &t in &cfg.schedule {
            let mu = occupational_measure(&traj, t, u.shape())?;
            report.vbar_trace.push(super::integrate_against(&mu, &vgrid)?);
            report
                .attractor_trace
                .push(time_fraction(&traj, t, |x| self.sets.distance_to_crit(x) >= cfg.eps));
            report
                .argmax_trace
                .push(time_fraction(&traj, t, |x| self.distance_to_argmax(x) >= cfg.eps));
        }
        if class(x0).kind.is_critical() {
            return Ok(report);
        }
        report.tau = critical_time(&traj, u, v, alpha0, &cfg.tols);

        let vbar = *report.vbar_trace.last().expect("nonempty");
        let fr = &report.argmax_trace;
        let decays = fr.iter().all(|&f| f == 0.0)
            || (fr.windows(2).all(|w| w[1] <= w[0]) && fr[fr.len() - 1] < fr[0]);
        if (vbar - alpha0).abs() <= cfg.tol_v && decays {
            report.verdict = Verdict::ApproachesRegularCritical;
            return Ok(report);
        }

        let singular: Vec<bool> = traj
            .points()
            .map(|x| class(&x).kind.is_singular())
            .collect();
        if vbar < alpha0 - cfg.tol_v && *singular.last().expect("nonempty") {
            let start = singular.iter().rposition(|&s| !s).map_or(0, |k| k + 1);
            report.verdict = Verdict::EntersSingularSet;
            report.t0 = Some(traj.samples()[start].t);
            let eta = (alpha0 - vbar) / 3.0;
            report.eta = Some(eta);
            report.eta_density_trace = cfg
                .schedule
                .iter()
                .map(|&t| time_fraction(&traj, t, |x| class(x).gap > eta))
                .collect();
            report.eta_density_max = report
                .eta_density_trace
                .iter()
                .copied()
                .reduce(f64::max);
            return Ok(report);
        }
        Err(Error::Inconclusive {
            reason: format!(
                "final average of V is {vbar} against alpha0 = {alpha0} (tol {}); the horizon may be too short",
                cfg.tol_v
            ),
            vbar_trace: report.vbar_trace,
        })
    }
}

/// One-off classification; build a [`DichotomyContext`] when classifying many points.
pub fn dichotomy_classify(
    u: &ValueFunction,
    v: &Potential,
    alpha0: f64,
    x0: &TorusPoint,
    cfg: &DichotomyConfig,
) -> Result<ClassificationReport> {
    DichotomyContext::new(u, v, alpha0, &cfg.tols)?.classify(x0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weakkam::builtin_solution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn pendulum_orbits_enter_the_singular_set() {
        let u = builtin_solution("pendulum", 1024).unwrap();
        let v = Potential::pendulum();
        let cfg = DichotomyConfig::standard(&u, &v).unwrap();
        let r = dichotomy_classify(&u, &v, 1.0, &TorusPoint::new1(0.25), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::EntersSingularSet);
        let oracle = (1.0 / (PI / 8.0).tan()).ln() / (2.0 * PI);
        assert!((r.t0.unwrap() - oracle).abs() < 0.01, "{:?}", r.t0);
        assert!(*r.vbar_trace.last().unwrap() <= -0.9);
        assert!(r.eta.unwrap() > 0.5);
        assert!(r.eta_density_max.unwrap() > 0.95);

        let r = dichotomy_classify(&u, &v, 1.0, &TorusPoint::new1(0.0), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::StationaryCritical);
        assert_eq!(r.tau, 0.0);
    }

    #[test]
    fn smooth_degenerate_orbits_approach_the_argmax_set() {
        let u = builtin_solution("degenerate", 1024).unwrap();
        let v = Potential::degenerate();
        let cfg = DichotomyConfig::standard(&u, &v).unwrap();
        let r = dichotomy_classify(&u, &v, 0.0, &TorusPoint::new1(0.2), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::ApproachesRegularCritical);
        assert_eq!(r.tau, f64::INFINITY);
        assert!(r.t0.is_none());
        assert!(r.vbar_trace.last().unwrap().abs() <= 0.02);
    }

    #[test]
    fn short_horizons_are_inconclusive() {
        let u = builtin_solution("degenerate", 1024).unwrap();
        let v = Potential::degenerate();
        let mut cfg = DichotomyConfig::standard(&u, &v).unwrap();
        cfg.schedule = vec![0.05, 0.1, 0.2];
        assert!(matches!(
            dichotomy_classify(&u, &v, 0.0, &TorusPoint::new1(0.2), &cfg),
            Err(Error::Inconclusive { .. })
        ));
    }

    #[test]
    fn verdicts_are_exclusive_over_random_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (name, v, alpha0, expected) in [
            ("pendulum", Potential::pendulum(), 1.0, Verdict::EntersSingularSet),
            ("degenerate", Potential::degenerate(), 0.0, Verdict::ApproachesRegularCritical),
        ] {
            let u = builtin_solution(name, 512).unwrap();
            let cfg = DichotomyConfig::standard(&u, &v).unwrap();
            let ctx = DichotomyContext::new(&u, &v, alpha0, &cfg.tols).unwrap();
            for _ in 0..50 {
                let x0 = TorusPoint::new1(rng.gen());
                let r = ctx.classify(&x0, &cfg).unwrap();
                assert!(r.verdict == expected || r.verdict == Verdict::StationaryCritical, "{name} {x0:?}");
            }
        }
    }

    #[test]
    fn report_serializes_infinite_tau_as_string() {
        let u = builtin_solution("degenerate", 256).unwrap();
        let v = Potential::degenerate();
        let cfg = DichotomyConfig::standard(&u, &v).unwrap();
        let r = dichotomy_classify(&u, &v, 0.0, &TorusPoint::new1(0.3), &cfg).unwrap();
        assert_eq!(r.verdict.as_str(), "ApproachesRegularCritical");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["tau"], "inf");
        assert_eq!(json["verdict"], "ApproachesRegularCritical");
        assert!(json["t0"].is_null());
        assert_eq!(json["schedule"].as_array().unwrap().len(), 3);
    }
}
