//! Semiconcave viscosity solutions of `1/2 |Du|^2 + V(x) = alpha0` on the torus.
//!
//! Three constructions are available and each result records which one produced it:
//! the closed forms of the registered examples, the one-dimensional distance formula
//! built from the argmax set of `V`, and a Lax–Oleinik value iteration that also works
//! in two dimensions. The equation has many solutions in general, so the constructions
//! need not agree with each other.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{argmax_set, pendulum_profile, MaxSet, Potential};
use crate::stencil::Stencil5;
use crate::torus::{GridShape, PeriodicGrid, TorusPoint, MAX_DIM};

/// Smallest resolution accepted by [`verify_viscosity`].
pub const MIN_VERIFY_RESOLUTION: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    DistanceLike,
    LaxOleinik,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::ClosedForm => "closed-form",
            Provenance::DistanceLike => "distance-like",
            Provenance::LaxOleinik => "lax-oleinik",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(Provenance::ClosedForm),
            "distance-like" => Ok(Provenance::DistanceLike),
            "lax-oleinik" => Ok(Provenance::LaxOleinik),
            other => Err(Error::Parse(format!("unknown provenance '{other}'"))),
        }
    }
}

/// Grid samples of a candidate solution `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    grid: PeriodicGrid,
    semiconcavity_constant: f64,
    provenance: Provenance,
}

impl ValueFunction {
    pub fn new(grid: PeriodicGrid, provenance: Provenance) -> Self {
        let semiconcavity_constant = semiconcavity_estimate(&grid);
        ValueFunction {
            grid,
            semiconcavity_constant,
            provenance,
        }
    }

    #[inline]
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.grid.shape()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// Largest `C` with `u(x-h) + u(x+h) - 2u(x) <= C h^2` over nodes and axes (at least 0).
    pub fn semiconcavity_constant(&self) -> f64 {
        self.semiconcavity_constant
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn value(&self, x: &TorusPoint) -> f64 {
        self.grid.interpolate(x)
    }

    /// Euclidean Lipschitz bound from adjacent-node differences (`sqrt(d)` times the
    /// largest axis slope).
    pub fn lipschitz(&self) -> f64 {
        let shape = self.shape();
        let h = shape.spacing();
        let mut slope: f64 = 0.0;
        for k in 0..shape.len() {
            let m = shape.multi_index(k);
            for axis in 0..shape.dim {
                let mut nb = m;
                nb[axis] += 1;
                slope = slope.max((self.grid.at(nb) - self.grid.values()[k]).abs() / h);
            }
        }
        slope * (shape.dim as f64).sqrt()
    }

    /// Nodal values at offsets `-2..=2` along `axis` around node `flat`.
    #[inline]
    pub fn node_stencil(&self, flat: usize, axis: usize) -> Stencil5 {
        let m = self.shape().multi_index(flat);
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            let mut idx = m;
            idx[axis] += k as isize - 2;
            *slot = self.grid.at(idx);
        }
        Stencil5 {
            v,
            h: self.spacing(),
        }
    }

    /// Interpolated values at `x + k h e_axis`, `k = -2..=2`.
    #[inline]
    pub fn stencil_at(&self, x: &TorusPoint, axis: usize) -> Stencil5 {
        let h = self.spacing();
        let mut v = [0.0; 5];
        let mut shift = [0.0; MAX_DIM];
        for (k, slot) in v.iter_mut().enumerate() {
            shift[axis] = (k as f64 - 2.0) * h;
            let y = x.translate(
                &crate::torus::Momentum::from_slice(&shift[..x.dim()]).expect("dimension"),
            );
            *slot = self.grid.interpolate(&y);
        }
        Stencil5 { v, h }
    }

    /// Shift so that `min u = 0`.
    pub fn normalized(mut self) -> Self {
        let m = self.grid.min();
        for v in self.grid.values_mut() {
            *v -= m;
        }
        self
    }

    /// `# dim,n,provenance` header, then row-major values.
    pub fn to_csv_string(&self) -> String {
        let mut s = format!("# {},{},{}\n", self.dim(), self.n(), self.provenance);
        for v in self.grid.values() {
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let (header, values) = crate::io::parse_headed_csv(text)?;
        if header.len() != 3 {
            return Err(Error::Parse(
                "value function header must be '# dim,n,provenance'".into(),
            ));
        }
        let dim = crate::io::parse_usize(&header[0], "dim")?;
        let n = crate::io::parse_usize(&header[1], "n")?;
        let provenance = header[2].parse()?;
        Ok(ValueFunction::new(PeriodicGrid::new(n, dim, values)?, provenance))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

fn semiconcavity_estimate(grid: &PeriodicGrid) -> f64 {
    let shape = grid.shape();
    let h2 = shape.spacing().powi(2);
    let mut c: f64 = 0.0;
    for k in 0..shape.len() {
        let m = shape.multi_index(k);
        for axis in 0..shape.dim {
            let (mut lo, mut hi) = (m, m);
            lo[axis] -= 1;
            hi[axis] += 1;
            c = c.max((grid.at(lo) + grid.at(hi) - 2.0 * grid.values()[k]) / h2);
        }
    }
    c
}

/// Names accepted by [`builtin_solution`].
pub const BUILTIN_SOLUTIONS: [&str; 3] = ["pendulum", "degenerate", "pendulum2d"];

/// Closed-form solutions of the registered examples, sampled on the grid.
///
/// * `pendulum`: the periodic extension of `int_0^x 2 sin(pi y) dy` on `[0, 1/2)` and
///   `int_x^1 2 sin(pi y) dy` on `[1/2, 1)`, for `V = cos(2 pi x)`;
/// * `degenerate`: the smooth solution `sqrt(2)/(2 pi) (1 - cos 2 pi x)` for
///   `V = -sin^2(2 pi x)`;
/// * `pendulum2d`: the sum of two pendulum profiles.
pub fn builtin_solution(name: &str, n: usize) -> Result<ValueFunction> {
    let grid = match name {
        "pendulum" => PeriodicGrid::from_fn(n, 1, |x| pendulum_profile(x.coord(0)))?,
        "degenerate" => PeriodicGrid::from_fn(n, 1, |x| {
            std::f64::consts::SQRT_2 / (2.0 * PI) * (1.0 - (2.0 * PI * x.coord(0)).cos())
        })?,
        "pendulum2d" => PeriodicGrid::from_fn(n, 2, |x| {
            pendulum_profile(x.coord(0)) + pendulum_profile(x.coord(1))
        })?,
        other => {
            return Err(Error::invalid(format!(
                "no closed-form solution named '{other}' (known: {})",
                BUILTIN_SOLUTIONS.join(", ")
            )))
        }
    };
    Ok(ValueFunction::new(grid, Provenance::ClosedForm))
}

/// Tolerance on `V >= alpha0 - tol` used to locate `M(V)` for the distance construction.
const DISTANCE_ARGMAX_TOL: f64 = 1e-8;
const RADICAND_TOL: f64 = 1e-12;

/// One-dimensional solution `u(x) = min over x* in M(V), over both arcs from x* to x,
/// of the arc integral of sqrt(2 (alpha0 - V))`, by cumulative trapezoid sums.
pub fn solve_distance_like(v: &Potential, alpha0: f64, n: usize) -> Result<ValueFunction> {
    if v.dim() != 1 {
        return Err(Error::invalid(
            "the distance construction is one-dimensional",
        ));
    }
    let shape = GridShape::new(n, 1)?;
    let sources = match argmax_set(v, n.max(crate::potential::MIN_SCAN_RESOLUTION), DISTANCE_ARGMAX_TOL)? {
        MaxSet::WholeTorus => {
            return Ok(ValueFunction::new(
                PeriodicGrid::constant(n, 1, 0.0)?,
                Provenance::DistanceLike,
            ))
        }
        MaxSet::Points(p) if p.is_empty() => {
            return Err(Error::Internal("argmax set of V is empty".into()))
        }
        MaxSet::Points(p) => p,
    };

    let h = shape.spacing();
    let mut integrand = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = TorusPoint::new1(i as f64 * h);
        let rad = alpha0 - v.value(&x);
        if rad < -RADICAND_TOL {
            return Err(Error::Tolerance {
                what: "negative radicand alpha0 - V",
                value: rad,
                limit: -RADICAND_TOL,
            });
        }
        integrand.push((2.0 * rad.max(0.0)).sqrt());
    }
    // cumulative[i] = integral over [0, i h]
    let mut cumulative = vec![0.0; n + 1];
    for i in 0..n {
        cumulative[i + 1] = cumulative[i] + 0.5 * h * (integrand[i] + integrand[i + 1]);
    }
    let total = cumulative[n];
    let at = |x: f64| {
        let s = x * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        (1.0 - t) * cumulative[i] + t * cumulative[i + 1]
    };

    let anchors: Vec<f64> = sources.iter().map(|p| at(p.coord(0))).collect();
    let values = (0..n)
        .map(|i| {
            anchors
                .iter()
                .map(|&a| {
                    let right = (cumulative[i] - a).rem_euclid(total.max(f64::MIN_POSITIVE));
                    right.min(total - right)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let u = ValueFunction::new(PeriodicGrid::new(n, 1, values)?, Provenance::DistanceLike);
    Ok(u.normalized())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaxOleinikConfig {
    pub n: usize,
    /// Time step of one semigroup application, in `(0, 0.5]`.
    pub dt: f64,
    pub max_iter: usize,
    /// Stop once the sup-norm change of `u - mean(u)` drops below this.
    pub tol: f64,
}

impl LaxOleinikConfig {
    pub fn new(n: usize) -> Self {
        LaxOleinikConfig {
            n,
            dt: 0.02,
            max_iter: 20_000,
            tol: 1e-8,
        }
    }
}

/// Outcome of a value iteration that converged.
#[derive(Clone, Debug, PartialEq)]
pub struct LaxOleinikRun {
    pub solution: ValueFunction,
    pub iterations: usize,
    pub residual: f64,
}

/// Fixed point of the discrete minimization semigroup
///
/// `u <- min_y [ u(y) - dt V(y)/2 + |x - y|^2 / (2 dt) ] - dt V(x)/2 + dt alpha0`,
///
/// where `y` ranges over the torus with `u` and `V` linearly interpolated between nodes
/// along each axis. The quadratic kinetic cost separates, so the minimum is taken one
/// axis at a time. The result is normalized to `min u = 0`.
pub fn solve_lax_oleinik(
    v: &Potential,
    alpha0: f64,
    cfg: &LaxOleinikConfig,
    initial: Option<&PeriodicGrid>,
) -> Result<LaxOleinikRun> {
    if !(cfg.dt > 0.0 && cfg.dt <= 0.5) {
        return Err(Error::invalid(format!("dt must lie in (0, 0.5], got {}", cfg.dt)));
    }
    let shape = GridShape::new(cfg.n, v.dim())?;
    let vgrid = v.sample(shape)?;
    let mut u = match initial {
        Some(g) if g.shape() != shape => {
            return Err(Error::invalid("initial guess has the wrong grid shape"))
        }
        Some(g) => g.values().to_vec(),
        None => vec![0.0; shape.len()],
    };
    let half = 0.5 * cfg.dt;
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        let mut w: Vec<f64> = u
            .iter()
            .zip(vgrid.values())
            .map(|(a, b)| a - half * b)
            .collect();
        for axis in 0..shape.dim {
            w = inf_convolve_axis(&w, shape, axis, cfg.dt);
        }
        for (wi, vi) in w.iter_mut().zip(vgrid.values()) {
            *wi += cfg.dt * alpha0 - half * vi;
        }
        let mean_old = mean(&u);
        let mean_new = mean(&w);
        residual = u
            .iter()
            .zip(&w)
            .map(|(a, b)| ((b - mean_new) - (a - mean_old)).abs())
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            return Err(Error::numerical("value iteration produced a non-finite value"));
        }
        u = w;
        if residual < cfg.tol {
            let solution =
                ValueFunction::new(PeriodicGrid::new(shape.n, shape.dim, u)?, Provenance::LaxOleinik)
                    .normalized();
            return Ok(LaxOleinikRun {
                solution,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iter,
        residual,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `out(x) = min_z [ w(x + z e_axis) + z^2 / (2 dt) ]` over continuous `z`, with `w`
/// piecewise linear along the axis. Offsets beyond `2 L dt` (L the axis slope bound)
/// cannot beat `z = 0` and are skipped.
fn inf_convolve_axis(w: &[f64], shape: GridShape, axis: usize, dt: f64) -> Vec<f64> {
    let h = shape.spacing();
    let at = |m: [isize; MAX_DIM]| w[shape.index(m)];
    let slope = (0..shape.len())
        .map(|k| {
            let m = shape.multi_index(k);
            let mut nb = m;
            nb[axis] += 1;
            (at(nb) - w[k]).abs() / h
        })
        .fold(0.0, f64::max);
    let reach = ((2.0 * slope * dt / h).ceil() as isize + 1).min(shape.n as isize / 2 + 1);
    let inv2dt = 0.5 / dt;
    (0..shape.len())
        .into_par_iter()
        .map(|k| {
            let m = shape.multi_index(k);
            let mut best = w[k];
            let mut idx = m;
            idx[axis] = m[axis] - reach;
            let mut left = at(idx);
            for o in -reach..reach {
                idx[axis] = m[axis] + o + 1;
                let right = at(idx);
                let s = (right - left) / h;
                let lo = o as f64 * h;
                let z = (-s * dt).clamp(lo, lo + h);
                let val = left + s * (z - lo) + z * z * inv2dt;
                if val < best {
                    best = val;
                }
                left = right;
            }
            best
        })
        .collect()
}

/// Acceptance thresholds for [`verify_viscosity`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityTolerances {
    /// Bound on `|1/2 |Du|^2 + V - alpha0|` at differentiability nodes.
    pub eq: f64,
    /// Bound on the subsolution violation at kink nodes.
    pub sub: f64,
    /// One-sided derivative jump above which a node counts as a kink; `None` means `10/n`.
    pub kink_jump: Option<f64>,
}

impl Default for ViscosityTolerances {
    fn default() -> Self {
        ViscosityTolerances {
            eq: 1e-3,
            sub: 1e-3,
            kink_jump: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    /// Max of `|1/2 |Du|^2 + V - alpha0|` over differentiability nodes (centered `Du`).
    pub eq_residual: f64,
    /// Max over kink nodes and one-sided extreme points `p` of `(1/2 |p|^2 + V - alpha0)^+`.
    pub sub_violation: f64,
    pub semiconcavity_constant: f64,
    pub differentiable_nodes: usize,
    pub kink_nodes: usize,
    pub kink_jump: f64,
    pub tolerances: ViscosityTolerances,
    pub passes: bool,
}

/// Check the equation at differentiability nodes and the subsolution inequality at
/// the extreme points of the superdifferential at kink nodes.
pub fn verify_viscosity(
    u: &ValueFunction,
    v: &Potential,
    alpha0: f64,
    tols: &ViscosityTolerances,
) -> Result<ViscosityReport> {
    let shape = u.shape();
    if shape.n < MIN_VERIFY_RESOLUTION {
        return Err(Error::invalid(format!(
            "verification needs n >= {MIN_VERIFY_RESOLUTION}, got {}",
            shape.n
        )));
    }
    if v.dim() != shape.dim {
        return Err(Error::invalid("potential and value function dimensions differ"));
    }
    let jump = tols.kink_jump.unwrap_or(10.0 / shape.n as f64);
    let mut eq_residual: f64 = 0.0;
    let mut sub_violation: f64 = 0.0;
    let (mut smooth, mut kinks) = (0usize, 0usize);
    for k in 0..shape.len() {
        let x = shape.node(k);
        let vx = v.value(&x);
        let mut sides = [(0.0, 0.0); MAX_DIM];
        let mut centered = [0.0; MAX_DIM];
        let mut is_kink = false;
        for axis in 0..shape.dim {
            let st = u.node_stencil(k, axis);
            sides[axis] = st.one_sided();
            centered[axis] = st.centered();
            is_kink |= (sides[axis].1 - sides[axis].0).abs() > jump;
        }
        if is_kink {
            kinks += 1;
            for corner in 0..(1usize << shape.dim) {
                let mut p2 = 0.0;
                for (axis, side) in sides.iter().enumerate().take(shape.dim) {
                    let p = if corner >> axis & 1 == 0 { side.0 } else { side.1 };
                    p2 += p * p;
                }
                sub_violation = sub_violation.max(0.5 * p2 + vx - alpha0);
            }
        } else {
            smooth += 1;
            let p2: f64 = centered[..shape.dim].iter().map(|p| p * p).sum();
            eq_residual = eq_residual.max((0.5 * p2 + vx - alpha0).abs());
        }
    }
    Ok(ViscosityReport {
        eq_residual,
        sub_violation,
        semiconcavity_constant: u.semiconcavity_constant(),
        differentiable_nodes: smooth,
        kink_nodes: kinks,
        kink_jump: jump,
        tolerances: *tols,
        passes: eq_residual <= tols.eq && sub_violation <= tols.sub,
    })
}
