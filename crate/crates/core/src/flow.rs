//! Forward integration of the generalized gradient flow `x'(t) = p0(x(t))` and its
//! metric variant `x'(t) = A(x) p_A(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::sig12;
use crate::potential::Potential;
use crate::semiconcave::{
    classify_point, default_radius, min_norm_point, superdifferential, weighted_min_norm_point,
    CriticalSets, MetricField, PointKind, Tolerances,
};
use crate::torus::{wrap, Momentum, TorusPoint, MAX_DIM};
use crate::weakkam::ValueFunction;

/// Largest accepted base step.
pub const MAX_DT: f64 = 0.01;
/// Largest accepted number of base steps `T / dt`.
pub const STEP_BUDGET: f64 = 1e8;
/// Local steps never drop below `dt / MIN_STEP_DIVISOR`.
pub const MIN_STEP_DIVISOR: f64 = 64.0;
/// Window (in steps) for the stagnation test and for restoring the step after a reversal.
pub const STAGNATION_WINDOW: usize = 10;
const MONOTONE_SLACK: f64 = 1e-12;
const BISECTION_STEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: TorusPoint,
    /// Norm of the selected superdifferential element (`p0`, or `p_A` for metric flows).
    pub p0_norm: f64,
    pub u: f64,
    /// `<v, p>` for velocity `v` and selection `p`: the rate of increase of `u`.
    pub energy_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<Sample>,
    dt: f64,
    horizon: f64,
    absorbed_at: Option<f64>,
}

impl Trajectory {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn points(&self) -> impl Iterator<Item = TorusPoint> + '_ {
        self.samples.iter().map(|s| s.x)
    }

    pub fn start(&self) -> TorusPoint {
        self.samples[0].x
    }

    pub fn endpoint(&self) -> TorusPoint {
        self.samples[self.samples.len() - 1].x
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time after which the trajectory was continued as a constant.
    pub fn absorbed_at(&self) -> Option<f64> {
        self.absorbed_at
    }

    /// Position at time `t` (piecewise constant from the left sample).
    pub fn position_at(&self, t: f64) -> TorusPoint {
        let k = self.samples.partition_point(|s| s.t <= t);
        self.samples[k.saturating_sub(1)].x
    }

    /// `t, x_1[, x_2], p0_norm, u, d_crit, d_sing`, 12 significant digits.
    pub fn to_csv_string(&self, sets: &CriticalSets) -> String {
        let dim = self.samples[0].x.dim();
        let mut out = String::from("t,x_1");
        if dim == 2 {
            out.push_str(",x_2");
        }
        out.push_str(",p0_norm,u,d_crit,d_sing\n");
        for s in &self.samples {
            let mut row = vec![sig12(s.t)];
            row.extend(s.x.coords().iter().map(|&c| sig12(c)));
            row.push(sig12(s.p0_norm));
            row.push(sig12(s.u));
            row.push(sig12(sets.distance_to_crit(&s.x)));
            row.push(sig12(sets.distance_to_sing(&s.x)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Base step, horizon and stationarity threshold of an integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub horizon: f64,
    pub dt: f64,
    /// `|p| <= tol_crit` at the start means the trajectory is constant.
    pub tol_crit: f64,
}

impl FlowParams {
    /// `tol_crit = 10/n` for the grid of `u`.
    pub fn new(u: &ValueFunction, horizon: f64, dt: f64) -> Self {
        FlowParams {
            horizon,
            dt,
            tol_crit: 10.0 / u.n() as f64,
        }
    }
}

/// Velocity and the selection it came from.
fn velocity(
    u: &ValueFunction,
    x: &TorusPoint,
    metric: Option<&MetricField>,
) -> Result<(Momentum, Momentum)> {
    let sd = superdifferential(u, x, default_radius(u))?;
    match metric {
        None => {
            let p = min_norm_point(&sd)?;
            Ok((p, p))
        }
        Some(a) => {
            let p = weighted_min_norm_point(&sd, a.at(x))?;
            Ok((a.apply(x, &p), p))
        }
    }
}

fn u_at(u: &ValueFunction, x: &TorusPoint) -> Result<f64> {
    let val = u.value(x);
    if val.is_finite() {
        Ok(val)
    } else {
        Err(Error::numerical(format!("value function is not finite at {:?}", x.coords())))
    }
}

fn advance(x: &TorusPoint, v: &Momentum, h: f64) -> Result<TorusPoint> {
    let mut raw = [0.0; MAX_DIM];
    for (a, slot) in raw.iter_mut().enumerate().take(x.dim()) {
        *slot = x.coord(a) + h * v.comp(a);
    }
    wrap(&raw[..x.dim()])
}

/// Explicit Euler stepping with the selection recomputed at every step.
///
/// The local step is halved (down to `dt/64`) whenever the velocity reverses against the
/// previous one and doubled back after ten calm steps; a step that would decrease `u`
/// is retried with half the length, or replaced by standing still at the smallest
/// step. Once the net displacement over ten steps falls below `dt * tol_crit` the
/// trajectory is marked absorbed and continued as a constant up to the horizon.
pub fn integrate(
    u: &ValueFunction,
    x0: &TorusPoint,
    params: &FlowParams,
    metric: Option<&MetricField>,
) -> Result<Trajectory> {
    let FlowParams {
        horizon,
        dt,
        tol_crit,
    } = *params;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::invalid(format!("dt must lie in (0, {MAX_DT}], got {dt}")));
    }
    if horizon / dt > STEP_BUDGET {
        return Err(Error::Budget {
            steps: horizon / dt,
            limit: STEP_BUDGET,
        });
    }
    if x0.dim() != u.dim() {
        return Err(Error::invalid("initial point and value function dimensions differ"));
    }
    if let Some(a) = metric {
        if a.dim() != u.dim() {
            return Err(Error::invalid("metric and value function dimensions differ"));
        }
    }

    let min_step = dt / MIN_STEP_DIVISOR;
    let mut x = *x0;
    let mut ux = u_at(u, &x)?;
    let (mut v, mut p) = velocity(u, &x, metric)?;
    let mut samples = vec![Sample {
        t: 0.0,
        x,
        p0_norm: p.norm(),
        u: ux,
        energy_rate: v.dot(&p),
    }];
    let finish = |mut samples: Vec<Sample>, at: f64| {
        let last = *samples.last().expect("nonempty");
        if last.t < horizon {
            samples.push(Sample { t: horizon, ..last });
        }
        Trajectory {
            samples,
            dt,
            horizon,
            absorbed_at: Some(at),
        }
    };
    if p.norm() <= tol_crit {
        return Ok(finish(samples, 0.0));
    }

    let mut t = 0.0;
    let mut step = dt;
    let mut calm = 0usize;
    while t < horizon {
        let h = step.min(horizon - t);
        let mut y = advance(&x, &v, h)?;
        let mut uy = u_at(u, &y)?;
        if uy < ux - MONOTONE_SLACK {
            if step > min_step {
                step = (step * 0.5).max(min_step);
                calm = 0;
                continue;
            }
            y = x;
            uy = ux;
        }
        let (v_new, p_new) = velocity(u, &y, metric)?;
        if v_new.dot(&v) < 0.0 {
            step = (step * 0.5).max(min_step);
            calm = 0;
        } else {
            calm += 1;
            if calm >= STAGNATION_WINDOW {
                step = (step * 2.0).min(dt);
                calm = 0;
            }
        }
        t = if horizon - t <= h { horizon } else { t + h };
        x = y;
        ux = uy;
        v = v_new;
        p = p_new;
        samples.push(Sample {
            t,
            x,
            p0_norm: p.norm(),
            u: ux,
            energy_rate: v.dot(&p),
        });
        let k = samples.len();
        if k > STAGNATION_WINDOW {
            let net = samples[k - 1 - STAGNATION_WINDOW]
                .x
                .displacement_to(&x)
                .norm();
            if net < dt * tol_crit {
                return Ok(finish(samples, t));
            }
        }
    }
    Ok(Trajectory {
        samples,
        dt,
        horizon,
        absorbed_at: None,
    })
}

/// First time the trajectory reaches `Crit(u)`, or `f64::INFINITY` if it does not within
/// the horizon.
///
/// A start point with `|p0| <= tol_crit` gives 0. Afterwards only arrival at a singular
/// critical point counts: a trajectory closing in on a regular critical point does so
/// asymptotically, since `|Du|` vanishes linearly near the argmax set of `V`, and the
/// stagnation of the discrete flow there is not an arrival. The arrival time is refined
/// by bisection along the last step.
pub fn critical_time(
    traj: &Trajectory,
    u: &ValueFunction,
    v: &Potential,
    alpha0: f64,
    tols: &Tolerances,
) -> f64 {
    let samples = traj.samples();
    let class = |x: &TorusPoint| classify_point(u, v, alpha0, x, tols).kind;
    if class(&samples[0].x).is_critical() {
        return 0.0;
    }
    let Some(k) = samples
        .iter()
        .position(|s| class(&s.x) == PointKind::SingularCritical)
    else {
        return f64::INFINITY;
    };
    let (a, b) = (samples[k - 1], samples[k]);
    let d = a.x.displacement_to(&b.x);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if class(&a.x.translate(&(mid * d))) == PointKind::SingularCritical {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    a.t + hi * (b.t - a.t)
}

/// `|u(x(T)) - u(x(0)) - int_0^T <v, p> dt|` with the trapezoid rule on the samples.
pub fn energy_residual(traj: &Trajectory) -> f64 {
    let s = traj.samples();
    if s.len() < 2 {
        return 0.0;
    }
    let integral: f64 = s
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].energy_rate + w[1].energy_rate))
        .sum();
    (s[s.len() - 1].u - s[0].u - integral).abs()
}
