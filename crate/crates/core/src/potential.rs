//! Mechanical potentials `V` on the torus and the derived constants: the critical
//! value `alpha0 = max V`, the argmax set `M(V)` and the oscillation `max V - min V`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::torus::{GridShape, Momentum, PeriodicGrid, TorusPoint};

pub type ScalarField = Arc<dyn Fn(&TorusPoint) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&TorusPoint) -> Momentum + Send + Sync>;

/// Names accepted by [`Potential::registered`].
pub const REGISTERED: [&str; 3] = ["pendulum", "degenerate", "pendulum2d"];

/// Smallest grid resolution used to locate extrema.
pub const MIN_SCAN_RESOLUTION: usize = 64;

const ASCENT_STEPS: usize = 20;
const LINE_SEARCH_HALVINGS: usize = 48;

/// Closed-form constants known for registered potentials.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticMetadata {
    pub alpha0: f64,
    pub argmax: Vec<TorusPoint>,
    pub oscillation: f64,
}

#[derive(Clone)]
pub struct Potential {
    name: String,
    dim: usize,
    value: ScalarField,
    gradient: VectorField,
    exact: Option<AnalyticMetadata>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("exact", &self.exact)
            .finish_non_exhaustive()
    }
}

impl Potential {
    pub fn from_fns(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&TorusPoint) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&TorusPoint) -> Momentum + Send + Sync + 'static,
    ) -> Result<Self> {
        GridShape::new(MIN_SCAN_RESOLUTION, dim)?;
        Ok(Potential {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            exact: None,
        })
    }

    /// `V(x) = cos(2 pi x)`.
    pub fn pendulum() -> Self {
        Potential {
            name: "pendulum".into(),
            dim: 1,
            value: Arc::new(|x| (TAU * x.coord(0)).cos()),
            gradient: Arc::new(|x| Momentum::new1(-TAU * (TAU * x.coord(0)).sin())),
            exact: Some(AnalyticMetadata {
                alpha0: 1.0,
                argmax: vec![TorusPoint::new1(0.0)],
                oscillation: 2.0,
            }),
        }
    }

    /// `V(x) = -sin^2(2 pi x)`, whose maximum is attained on two components.
    pub fn degenerate() -> Self {
        Potential {
            name: "degenerate".into(),
            dim: 1,
            value: Arc::new(|x| -(TAU * x.coord(0)).sin().powi(2)),
            // d/dx [-sin^2(2 pi x)] = -2 pi sin(4 pi x)
            gradient: Arc::new(|x| Momentum::new1(-TAU * (2.0 * TAU * x.coord(0)).sin())),
            exact: Some(AnalyticMetadata {
                alpha0: 0.0,
                argmax: vec![TorusPoint::new1(0.0), TorusPoint::new1(0.5)],
                oscillation: 1.0,
            }),
        }
    }

    /// `V(x) = cos(2 pi x1) + cos(2 pi x2)`.
    pub fn pendulum2d() -> Self {
        Potential {
            name: "pendulum2d".into(),
            dim: 2,
            value: Arc::new(|x| (TAU * x.coord(0)).cos() + (TAU * x.coord(1)).cos()),
            gradient: Arc::new(|x| {
                Momentum::new2(
                    -TAU * (TAU * x.coord(0)).sin(),
                    -TAU * (TAU * x.coord(1)).sin(),
                )
            }),
            exact: Some(AnalyticMetadata {
                alpha0: 2.0,
                argmax: vec![TorusPoint::new2(0.0, 0.0)],
                oscillation: 4.0,
            }),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        GridShape::new(MIN_SCAN_RESOLUTION, dim)?;
        Ok(Potential {
            name: format!("constant({c})"),
            dim,
            value: Arc::new(move |_| c),
            gradient: Arc::new(move |_| Momentum::zeros(dim)),
            exact: Some(AnalyticMetadata {
                alpha0: c,
                argmax: Vec::new(),
                oscillation: 0.0,
            }),
        })
    }

    pub fn registered(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::pendulum()),
            "degenerate" => Ok(Self::degenerate()),
            "pendulum2d" => Ok(Self::pendulum2d()),
            other => Err(Error::invalid(format!(
                "unknown potential '{other}' (registered: {})",
                REGISTERED.join(", ")
            ))),
        }
    }

    /// Potential given by nodal values; evaluated by multilinear interpolation, with the
    /// gradient interpolated from centered nodal differences.
    pub fn tabulated(name: impl Into<String>, grid: PeriodicGrid) -> Self {
        let dim = grid.dim();
        let shape = grid.shape();
        let h = grid.spacing();
        let mut grads: Vec<PeriodicGrid> = Vec::with_capacity(dim);
        for axis in 0..dim {
            let vals = (0..shape.len())
                .map(|k| {
                    let m = shape.multi_index(k);
                    let (mut lo, mut hi) = (m, m);
                    lo[axis] -= 1;
                    hi[axis] += 1;
                    (grid.at(hi) - grid.at(lo)) / (2.0 * h)
                })
                .collect();
            grads.push(PeriodicGrid::new(shape.n, dim, vals).expect("same shape"));
        }
        let grid = Arc::new(grid);
        let grads = Arc::new(grads);
        let g = Arc::clone(&grid);
        Potential {
            name: name.into(),
            dim,
            value: Arc::new(move |x| g.interpolate(x)),
            gradient: Arc::new(move |x| {
                let c: Vec<f64> = grads.iter().map(|gr| gr.interpolate(x)).collect();
                Momentum::from_slice(&c).expect("dimension checked")
            }),
            exact: None,
        }
    }

    /// Parse a tabulated potential: a `# dim,n` header line, then `n^dim` values,
    /// one per line, row-major.
    pub fn from_csv_str(name: impl Into<String>, text: &str) -> Result<Self> {
        let (header, values) = crate::io::parse_headed_csv(text)?;
        if header.len() < 2 {
            return Err(Error::Parse("potential header must be '# dim,n'".into()));
        }
        let dim = crate::io::parse_usize(&header[0], "dim")?;
        let n = crate::io::parse_usize(&header[1], "n")?;
        let grid = PeriodicGrid::new(n, dim, values)?;
        Ok(Self::tabulated(name, grid))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "tabulated".into());
        Self::from_csv_str(name, &text)
    }

    /// `V + c`. Closed-form metadata shifts along.
    pub fn shifted(&self, c: f64) -> Self {
        let v = Arc::clone(&self.value);
        Potential {
            name: format!("{}{:+}", self.name, c),
            dim: self.dim,
            value: Arc::new(move |x| v(x) + c),
            gradient: Arc::clone(&self.gradient),
            exact: self.exact.as_ref().map(|m| AnalyticMetadata {
                alpha0: m.alpha0 + c,
                argmax: m.argmax.clone(),
                oscillation: m.oscillation,
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn analytic(&self) -> Option<&AnalyticMetadata> {
        self.exact.as_ref()
    }

    #[inline]
    pub fn value(&self, x: &TorusPoint) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn gradient(&self, x: &TorusPoint) -> Momentum {
        (self.gradient)(x)
    }

    /// Nodal samples on a grid of the given shape.
    pub fn sample(&self, shape: GridShape) -> Result<PeriodicGrid> {
        if shape.dim != self.dim {
            return Err(Error::invalid(format!(
                "potential is {}-dimensional, grid is {}-dimensional",
                self.dim, shape.dim
            )));
        }
        PeriodicGrid::from_fn(shape.n, shape.dim, |x| self.value(x))
    }
}

/// Points at which the potential is maximal (`M(V)`).
#[derive(Clone, Debug, PartialEq)]
pub enum MaxSet {
    Points(Vec<TorusPoint>),
    /// Every node is within tolerance of the maximum (constant potential).
    WholeTorus,
}

impl MaxSet {
    pub fn points(&self) -> Option<&[TorusPoint]> {
        match self {
            MaxSet::Points(p) => Some(p),
            MaxSet::WholeTorus => None,
        }
    }
}

fn scan_shape(v: &Potential, n: usize) -> Result<GridShape> {
    if n < MIN_SCAN_RESOLUTION {
        return Err(Error::invalid(format!(
            "extremum scan needs n >= {MIN_SCAN_RESOLUTION}, got {n}"
        )));
    }
    GridShape::new(n, v.dim)
}

/// Gradient ascent on `sign * V` from `start`; each step keeps the best of a sequence of
/// halved trial steps and never accepts a decrease.
fn ascend(v: &Potential, start: TorusPoint, sign: f64, h: f64) -> (TorusPoint, f64) {
    let f = |x: &TorusPoint| sign * v.value(x);
    let mut x = start;
    let mut fx = f(&x);
    for _ in 0..ASCENT_STEPS {
        let g = sign * v.gradient(&x);
        let gn = g.norm();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let mut alpha = h / gn;
        let mut best: Option<(TorusPoint, f64)> = None;
        for _ in 0..LINE_SEARCH_HALVINGS {
            let y = x.translate(&(alpha * g));
            let fy = f(&y);
            if fy > fx && best.is_none_or(|(_, fb)| fy > fb) {
                best = Some((y, fy));
            }
            alpha *= 0.5;
        }
        match best {
            Some((y, fy)) => {
                x = y;
                fx = fy;
            }
            None => break,
        }
    }
    (x, sign * fx)
}

fn refined_extremum(v: &Potential, n: usize, sign: f64) -> Result<(TorusPoint, f64)> {
    let shape = scan_shape(v, n)?;
    let mut best = (shape.node(0), f64::NEG_INFINITY);
    for x in shape.nodes() {
        let fx = sign * v.value(&x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::numerical("potential is not finite on the grid"));
    }
    Ok(ascend(v, best.0, sign, shape.spacing()))
}

/// `max V`, located by a grid scan of resolution `n` refined by gradient ascent.
pub fn critical_constant(v: &Potential, n: usize) -> Result<f64> {
    Ok(refined_extremum(v, n, 1.0)?.1)
}

/// Refined maximizer and maximum.
pub fn argmax_point(v: &Potential, n: usize) -> Result<(TorusPoint, f64)> {
    refined_extremum(v, n, 1.0)
}

/// `max V - min V` over the refined grid.
pub fn oscillation(v: &Potential, n: usize) -> Result<f64> {
    let hi = refined_extremum(v, n, 1.0)?.1;
    let lo = refined_extremum(v, n, -1.0)?.1;
    Ok((hi - lo).max(0.0))
}

/// Default clustering radius for [`argmax_set`], in units of grid spacing.
pub const CLUSTER_RADIUS_CELLS: f64 = 2.0;

/// The set `M(V)`: one refined representative per cluster of grid points with
/// `V >= alpha0 - tol`, clustering nodes closer than two grid spacings.
pub fn argmax_set(v: &Potential, n: usize, tol: f64) -> Result<MaxSet> {
    let shape = scan_shape(v, n)?;
    let alpha0 = critical_constant(v, n)?;
    let values: Vec<f64> = shape.nodes().map(|x| v.value(&x)).collect();
    let candidate: Vec<bool> = values.iter().map(|&fx| fx >= alpha0 - tol).collect();
    let count = candidate.iter().filter(|&&c| c).count();
    if count == shape.len() {
        return Ok(MaxSet::WholeTorus);
    }
    if count == 0 {
        return Err(Error::Internal(format!(
            "no grid point within {tol:e} of max V = {alpha0}"
        )));
    }

    let r = CLUSTER_RADIUS_CELLS as isize;
    let offsets: Vec<[isize; 2]> = match shape.dim {
        1 => (-r..=r).map(|i| [i, 0]).collect(),
        _ => (-r..=r)
            .flat_map(|i| (-r..=r).map(move |j| [i, j]))
            .filter(|o| ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt() <= CLUSTER_RADIUS_CELLS)
            .collect(),
    };
    let mut label = vec![usize::MAX; shape.len()];
    let mut reps = Vec::new();
    for seed in 0..shape.len() {
        if !candidate[seed] || label[seed] != usize::MAX {
            continue;
        }
        let id = reps.len();
        label[seed] = id;
        let mut stack = vec![seed];
        let mut best = seed;
        while let Some(k) = stack.pop() {
            if values[k] > values[best] {
                best = k;
            }
            let m = shape.multi_index(k);
            for o in &offsets {
                let nb = shape.index([m[0] + o[0], m[1] + o[1]]);
                if candidate[nb] && label[nb] == usize::MAX {
                    label[nb] = id;
                    stack.push(nb);
                }
            }
        }
        let (x, _) = ascend(v, shape.node(best), 1.0, shape.spacing());
        reps.push(x);
    }
    Ok(MaxSet::Points(reps))
}

/// Pendulum-type closed forms shared by the registry and the value-function builtins.
pub(crate) fn pendulum_profile(x: f64) -> f64 {
    // integral of 2 sin(pi y) from 0 to x (x < 1/2), or from x to 1 (x >= 1/2)
    if x < 0.5 {
        (2.0 / PI) * (1.0 - (PI * x).cos())
    } else {
        (2.0 / PI) * (1.0 + (PI * x).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn critical_constants_of_registered_potentials() {
        assert_abs_diff_eq!(critical_constant(&Potential::pendulum(), 1024).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(critical_constant(&Potential::degenerate(), 1024).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(critical_constant(&Potential::pendulum2d(), 128).unwrap(), 2.0, epsilon = 1e-9);
        assert_eq!(critical_constant(&Potential::constant(1, 0.7).unwrap(), 64).unwrap(), 0.7);
        assert!(critical_constant(&Potential::pendulum(), 32).is_err());
    }

    #[test]
    fn off_grid_maximum_is_refined() {
        let c = 0.123_456_7;
        let v = Potential::from_fns(
            "shifted cosine",
            1,
            move |x| (TAU * (x.coord(0) - c)).cos(),
            move |x| Momentum::new1(-TAU * (TAU * (x.coord(0) - c)).sin()),
        )
        .unwrap();
        let (x, m) = argmax_point(&v, 64).unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.coord(0), c, epsilon = 1e-6);
    }

    #[test]
    fn shift_invariance() {
        for v in [Potential::pendulum(), Potential::degenerate()] {
            let a = critical_constant(&v, 256).unwrap();
            for c in [-3.0, 0.25, 10.0] {
                let b = critical_constant(&v.shifted(c), 256).unwrap();
                assert_abs_diff_eq!(b, a + c, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn argmax_sets() {
        let m = argmax_set(&Potential::pendulum(), 1024, 1e-6).unwrap();
        let p = m.points().unwrap();
        assert_eq!(p.len(), 1);
        assert_abs_diff_eq!(p[0].coord(0), 0.0, epsilon = 1e-9);

        let m = argmax_set(&Potential::degenerate(), 1024, 1e-3).unwrap();
        let mut xs: Vec<f64> = m.points().unwrap().iter().map(|p| p.coord(0)).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 2);
        assert_abs_diff_eq!(xs[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(xs[1], 0.5, epsilon = 1e-9);

        let m = argmax_set(&Potential::constant(2, 1.0).unwrap(), 64, 1e-9).unwrap();
        assert_eq!(m, MaxSet::WholeTorus);
    }

    #[test]
    fn argmax_points_are_stationary() {
        let tol = 1e-4;
        for v in [Potential::pendulum(), Potential::degenerate(), Potential::pendulum2d()] {
            let n = if v.dim() == 1 { 512 } else { 64 };
            for p in argmax_set(&v, n, tol).unwrap().points().unwrap() {
                assert!(v.gradient(p).norm() <= 10.0 * tol, "{} at {:?}", v.name(), p);
            }
        }
    }

    #[test]
    fn oscillations() {
        assert_abs_diff_eq!(oscillation(&Potential::pendulum(), 256).unwrap(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(oscillation(&Potential::degenerate(), 256).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(oscillation(&Potential::constant(1, 4.0).unwrap(), 64).unwrap(), 0.0);
    }

    #[test]
    fn registered_potentials_match_metadata() {
        for name in REGISTERED {
            let v = Potential::registered(name).unwrap();
            let n = if v.dim() == 1 { 1024 } else { 128 };
            let meta = v.analytic().unwrap();
            assert_abs_diff_eq!(critical_constant(&v, n).unwrap(), meta.alpha0, epsilon = 1e-9);
            assert_abs_diff_eq!(oscillation(&v, n).unwrap(), meta.oscillation, epsilon = 1e-9);
        }
        assert!(Potential::registered("nope").is_err());
    }

    #[test]
    fn periodic_and_gradient_consistent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-5;
        for name in REGISTERED {
            let v = Potential::registered(name).unwrap();
            for _ in 0..100 {
                let raw: Vec<f64> = (0..v.dim()).map(|_| rng.gen()).collect();
                let x = crate::torus::wrap(&raw).unwrap();
                for a in 0..v.dim() {
                    let mut shifted = raw.clone();
                    shifted[a] += 1.0;
                    let xs = crate::torus::wrap(&shifted).unwrap();
                    assert_abs_diff_eq!(v.value(&x), v.value(&xs), epsilon = 1e-12);
                    let mut e = [0.0; 2];
                    e[a] = eps;
                    let fwd = x.translate(&Momentum::from_slice(&e[..v.dim()]).unwrap());
                    e[a] = -eps;
                    let bwd = x.translate(&Momentum::from_slice(&e[..v.dim()]).unwrap());
                    let fd = (v.value(&fwd) - v.value(&bwd)) / (2.0 * eps);
                    assert_abs_diff_eq!(v.gradient(&x).comp(a), fd, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let n = 64;
        let mut text = format!("# 1,{n}\n");
        for i in 0..n {
            text.push_str(&format!("{}\n", (TAU * i as f64 / n as f64).cos()));
        }
        let v = Potential::from_csv_str("tab", &text).unwrap();
        assert_abs_diff_eq!(critical_constant(&v, 64).unwrap(), 1.0, epsilon = 1e-12);
        assert!(Potential::from_csv_str("bad", "# 1,64\n1.0\n").is_err());
        assert!(Potential::from_csv_str("bad", "1.0\n").is_err());
    }
}
