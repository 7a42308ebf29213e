//! Superdifferentials of grid value functions, minimal-norm selections and the
//! regular/critical/singular classification of points.

mod wolfe;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::torus::{dist_unchecked, Momentum, TorusPoint, MAX_DIM};
use crate::weakkam::ValueFunction;

pub use wolfe::CERT_TOL;

/// Default gradient-sampling radius in grid cells.
pub const DEFAULT_RADIUS_CELLS: f64 = 3.0;
/// Per-axis one-sided derivative mismatch, in units of `1/n`, below which a node counts
/// as a differentiability point.
pub const DIFFERENTIABLE_JUMP: f64 = 5.0;

/// Convex hull of finitely many momenta.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperdifferentialPolytope {
    vertices: Vec<Momentum>,
    dim: usize,
}

impl SuperdifferentialPolytope {
    pub fn new(vertices: Vec<Momentum>) -> Result<Self> {
        let dim = vertices
            .first()
            .ok_or_else(|| Error::invalid("polytope needs at least one vertex"))?
            .dim();
        if vertices.iter().any(|v| v.dim() != dim) {
            return Err(Error::invalid("polytope vertices of mixed dimension"));
        }
        Ok(SuperdifferentialPolytope { vertices, dim })
    }

    /// `[lo, hi]` in one dimension (`lo <= hi`).
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
        }
        Self::new(vec![Momentum::new1(lo), Momentum::new1(hi)])
    }

    pub fn singleton(p: Momentum) -> Self {
        SuperdifferentialPolytope {
            dim: p.dim(),
            vertices: vec![p],
        }
    }

    pub fn vertices(&self) -> &[Momentum] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((*a - *b).norm());
            }
        }
        d
    }
}

/// One-sided derivatives at `x` along `axis`: `(right, left)`.
fn one_sided(u: &ValueFunction, x: &TorusPoint, axis: usize) -> (f64, f64) {
    u.stencil_at(x, axis).one_sided()
}

fn node_is_differentiable(u: &ValueFunction, flat: usize, jump: f64) -> bool {
    (0..u.dim()).all(|axis| {
        let (f, b) = u.node_stencil(flat, axis).one_sided();
        (f - b).abs() <= jump
    })
}

fn centered_gradient(u: &ValueFunction, flat: usize) -> Momentum {
    let mut g = [0.0; MAX_DIM];
    for (axis, slot) in g.iter_mut().enumerate().take(u.dim()) {
        *slot = u.node_stencil(flat, axis).centered();
    }
    Momentum::from_slice(&g[..u.dim()]).expect("dimension")
}

/// Estimate of `D+u(x)`.
///
/// In one dimension this is the interval between the right and left derivatives (a
/// reversed pair is collapsed to its midpoint). In two dimensions it is the hull of the
/// centered gradients at differentiability nodes within distance `r`; when every node
/// in that ball is a differentiability node the bilinear interpolation of the nodal
/// gradients is returned instead.
pub fn superdifferential(
    u: &ValueFunction,
    x: &TorusPoint,
    r: f64,
) -> Result<SuperdifferentialPolytope> {
    let h = u.spacing();
    if !(r >= h) {
        return Err(Error::invalid(format!(
            "sampling radius {r} is below the grid spacing {h}"
        )));
    }
    if x.dim() != u.dim() {
        return Err(Error::invalid("point and value function dimensions differ"));
    }
    if u.dim() == 1 {
        let (fwd, bwd) = one_sided(u, x, 0);
        return if fwd <= bwd {
            SuperdifferentialPolytope::interval(fwd, bwd)
        } else {
            Ok(SuperdifferentialPolytope::singleton(Momentum::new1(
                0.5 * (fwd + bwd),
            )))
        };
    }

    let shape = u.shape();
    let jump = DIFFERENTIABLE_JUMP / shape.n as f64;
    let reach = (r / h).ceil() as isize;
    let base = [
        (x.coord(0) / h).floor() as isize,
        (x.coord(1) / h).floor() as isize,
    ];
    let mut all_smooth = true;
    let mut gradients = Vec::new();
    for di in -reach..=reach + 1 {
        for dj in -reach..=reach + 1 {
            let flat = shape.index([base[0] + di, base[1] + dj]);
            if dist_unchecked(x, &shape.node(flat)) > r {
                continue;
            }
            if node_is_differentiable(u, flat, jump) {
                gradients.push(centered_gradient(u, flat));
            } else {
                all_smooth = false;
            }
        }
    }
    if all_smooth {
        let t = [
            x.coord(0) / h - base[0] as f64,
            x.coord(1) / h - base[1] as f64,
        ];
        let mut p = Momentum::zeros(2);
        for (di, wi) in [(0, 1.0 - t[0]), (1, t[0])] {
            for (dj, wj) in [(0, 1.0 - t[1]), (1, t[1])] {
                let flat = shape.index([base[0] + di, base[1] + dj]);
                p = p + (wi * wj) * centered_gradient(u, flat);
            }
        }
        return Ok(SuperdifferentialPolytope::singleton(p));
    }
    if !gradients.is_empty() {
        return SuperdifferentialPolytope::new(gradients);
    }
    let flat = shape.nearest_node(x);
    let sides: Vec<(f64, f64)> = (0..2).map(|a| u.node_stencil(flat, a).one_sided()).collect();
    let mut corners = Vec::with_capacity(4);
    for p in [sides[0].0, sides[0].1] {
        for q in [sides[1].0, sides[1].1] {
            corners.push(Momentum::new2(p, q));
        }
    }
    SuperdifferentialPolytope::new(corners)
}

pub fn default_radius(u: &ValueFunction) -> f64 {
    DEFAULT_RADIUS_CELLS * u.spacing()
}

/// Nearest point of the polytope to the origin.
pub fn min_norm_point(p: &SuperdifferentialPolytope) -> Result<Momentum> {
    if p.dim == 1 {
        let (lo, hi) = p
            .vertices
            .iter()
            .map(|v| v.comp(0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        return Ok(Momentum::new1(0.0f64.clamp(lo, hi)));
    }
    let pts: Vec<[f64; 2]> = p.vertices.iter().map(|v| [v.comp(0), v.comp(1)]).collect();
    let q = wolfe::min_norm_point(&pts)?;
    Ok(Momentum::new2(q[0], q[1]))
}

/// `p0(x)`, the minimal-norm element of `D+u(x)`.
pub fn min_norm_selection(u: &ValueFunction, x: &TorusPoint) -> Result<Momentum> {
    min_norm_point(&superdifferential(u, x, default_radius(u))?)
}

pub type Matrix2 = [[f64; 2]; 2];

/// A symmetric positive definite matrix field `A(x)`; in one dimension only the `[0][0]`
/// entry is used.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    f: Arc<dyn Fn(&TorusPoint) -> Matrix2 + Send + Sync>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField").field("dim", &self.dim).finish()
    }
}

impl MetricField {
    pub fn from_fn(dim: usize, f: impl Fn(&TorusPoint) -> Matrix2 + Send + Sync + 'static) -> Self {
        MetricField { dim, f: Arc::new(f) }
    }

    pub fn constant(dim: usize, a: Matrix2) -> Self {
        Self::from_fn(dim, move |_| a)
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(dim, [[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, x: &TorusPoint) -> Matrix2 {
        (self.f)(x)
    }

    /// `A(x) p`.
    pub fn apply(&self, x: &TorusPoint, p: &Momentum) -> Momentum {
        let a = self.at(x);
        if self.dim == 1 {
            Momentum::new1(a[0][0] * p.comp(0))
        } else {
            Momentum::new2(
                a[0][0] * p.comp(0) + a[0][1] * p.comp(1),
                a[1][0] * p.comp(0) + a[1][1] * p.comp(1),
            )
        }
    }
}

/// Lower Cholesky factor, or an error if `a` is not symmetric positive definite.
fn cholesky(a: Matrix2, dim: usize) -> Result<Matrix2> {
    let not_spd = || Error::invalid(format!("metric {a:?} is not symmetric positive definite"));
    if dim == 1 {
        return if a[0][0] > 0.0 {
            Ok([[a[0][0].sqrt(), 0.0], [0.0, 1.0]])
        } else {
            Err(not_spd())
        };
    }
    let sym_tol = 1e-12 * (a[0][1].abs() + a[1][0].abs()).max(1.0);
    if (a[0][1] - a[1][0]).abs() > sym_tol || !(a[0][0] > 0.0) {
        return Err(not_spd());
    }
    let l00 = a[0][0].sqrt();
    let l10 = a[1][0] / l00;
    let rest = a[1][1] - l10 * l10;
    if !(rest > 0.0) {
        return Err(not_spd());
    }
    Ok([[l00, 0.0], [l10, rest.sqrt()]])
}

/// Minimizer of `<A p, p>` over the polytope.
pub fn weighted_min_norm_point(p: &SuperdifferentialPolytope, a: Matrix2) -> Result<Momentum> {
    let l = cholesky(a, p.dim)?;
    // q = L^T p turns the quadratic form into |q|^2.
    let to_q = |v: &Momentum| {
        if p.dim == 1 {
            Momentum::new1(l[0][0] * v.comp(0))
        } else {
            Momentum::new2(
                l[0][0] * v.comp(0) + l[1][0] * v.comp(1),
                l[1][1] * v.comp(1),
            )
        }
    };
    let mapped = SuperdifferentialPolytope::new(p.vertices.iter().map(to_q).collect())?;
    let q = min_norm_point(&mapped)?;
    Ok(if p.dim == 1 {
        Momentum::new1(q.comp(0) / l[0][0])
    } else {
        let y = q.comp(1) / l[1][1];
        Momentum::new2((q.comp(0) - l[1][0] * y) / l[0][0], y)
    })
}

/// `p_A(x)`, the minimizer of `<A(x) p, p>` over `D+u(x)`.
pub fn weighted_min_norm_selection(
    u: &ValueFunction,
    a: &MetricField,
    x: &TorusPoint,
) -> Result<Momentum> {
    if a.dim() != u.dim() {
        return Err(Error::invalid("metric and value function dimensions differ"));
    }
    weighted_min_norm_point(&superdifferential(u, x, default_radius(u))?, a.at(x))
}

/// Thresholds for [`classify_point`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// `|p0| <= crit` means critical.
    pub crit: f64,
    /// Diameter of `D+u` above which a point is reported as visibly non-smooth.
    pub sing: f64,
    /// `1/2 |p0|^2 + V < alpha0 - gap` means singular.
    pub gap: f64,
}

impl Tolerances {
    /// `crit = 10/n`, `sing = 20/n`, `gap = 0.05 * osc V`.
    pub fn for_grid(n: usize, oscillation: f64) -> Self {
        Tolerances {
            crit: 10.0 / n as f64,
            sing: 20.0 / n as f64,
            gap: 0.05 * oscillation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    RegularNonCritical,
    RegularCritical,
    SingularCritical,
    SingularNonStationary,
}

impl PointKind {
    pub fn is_critical(self) -> bool {
        matches!(self, PointKind::RegularCritical | PointKind::SingularCritical)
    }

    pub fn is_singular(self) -> bool {
        matches!(
            self,
            PointKind::SingularCritical | PointKind::SingularNonStationary
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointClass {
    pub kind: PointKind,
    pub p0_norm: f64,
    pub diameter: f64,
    /// `alpha0 - (1/2 |p0|^2 + V(x))`; positive values mean `H` dips below the level.
    pub gap: f64,
}

/// Classify `x` by the size of `p0(x)` and the Hamiltonian gap at `p0(x)`.
pub fn classify_point(
    u: &ValueFunction,
    v: &Potential,
    alpha0: f64,
    x: &TorusPoint,
    tols: &Tolerances,
) -> PointClass {
    let (p0, diameter) = match superdifferential(u, x, default_radius(u)) {
        Ok(sd) => (selection_or_best(&sd), sd.diameter()),
        Err(_) => (Momentum::zeros(x.dim()), 0.0),
    };
    let p0_norm = p0.norm();
    let gap = alpha0 - (0.5 * p0.norm_sq() + v.value(x));
    let critical = p0_norm <= tols.crit;
    let singular = gap > tols.gap;
    let kind = match (singular, critical) {
        (false, false) => PointKind::RegularNonCritical,
        (false, true) => PointKind::RegularCritical,
        (true, true) => PointKind::SingularCritical,
        (true, false) => PointKind::SingularNonStationary,
    };
    PointClass {
        kind,
        p0_norm,
        diameter,
        gap,
    }
}

/// Minimal-norm point, falling back to the best iterate when the certificate fails.
pub(crate) fn selection_or_best(sd: &SuperdifferentialPolytope) -> Momentum {
    match min_norm_point(sd) {
        Ok(p) => p,
        Err(Error::Numerical { best: Some(b), .. }) => {
            Momentum::from_slice(&b[..sd.dim()]).unwrap_or_else(|_| Momentum::zeros(sd.dim()))
        }
        Err(_) => Momentum::zeros(sd.dim()),
    }
}

/// Grid-node approximations of `Crit(u)` and `Sing(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSets {
    pub crit: Vec<TorusPoint>,
    pub sing: Vec<TorusPoint>,
}

impl CriticalSets {
    pub fn compute(u: &ValueFunction, v: &Potential, alpha0: f64, tols: &Tolerances) -> Self {
        let shape = u.shape();
        let classes: Vec<(TorusPoint, PointKind)> = (0..shape.len())
            .into_par_iter()
            .map(|k| {
                let x = shape.node(k);
                (x, classify_point(u, v, alpha0, &x, tols).kind)
            })
            .collect();
        CriticalSets {
            crit: classes
                .iter()
                .filter(|(_, c)| c.is_critical())
                .map(|(x, _)| *x)
                .collect(),
            sing: classes
                .iter()
                .filter(|(_, c)| c.is_singular())
                .map(|(x, _)| *x)
                .collect(),
        }
    }

    /// Distance to the critical nodes, `+inf` when there are none.
    pub fn distance_to_crit(&self, x: &TorusPoint) -> f64 {
        nearest(x, &self.crit)
    }

    /// Distance to the singular nodes, `+inf` when there are none.
    pub fn distance_to_sing(&self, x: &TorusPoint) -> f64 {
        nearest(x, &self.sing)
    }
}

fn nearest(x: &TorusPoint, set: &[TorusPoint]) -> f64 {
    set.iter()
        .map(|y| dist_unchecked(x, y))
        .fold(f64::INFINITY, f64::min)
}
