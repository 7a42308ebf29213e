//! Periodic geometry on the flat torus `T^d = R^d / Z^d` for `d` in {1, 2}.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 2;

/// Smallest admissible number of cells per dimension.
pub const MIN_CELLS: usize = 8;

/// A point of the torus with every coordinate reduced into `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: [f64; MAX_DIM],
    dim: usize,
}

#[inline]
fn reduce(c: f64) -> f64 {
    let r = c - c.floor();
    // `c - floor(c)` rounds to exactly 1.0 for tiny negative inputs.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::invalid(format!(
            "torus dimension must be 1 or 2, got {dim}"
        )));
    }
    Ok(())
}

/// Reduce raw coordinates modulo 1.
pub fn wrap(raw: &[f64]) -> Result<TorusPoint> {
    check_dim(raw.len())?;
    if let Some(c) = raw.iter().find(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("non-finite coordinate {c}")));
    }
    let mut coords = [0.0; MAX_DIM];
    for (dst, &c) in coords.iter_mut().zip(raw) {
        *dst = reduce(c);
    }
    Ok(TorusPoint {
        coords,
        dim: raw.len(),
    })
}

impl TorusPoint {
    /// One-dimensional point; panics on non-finite input.
    pub fn new1(x: f64) -> Self {
        wrap(&[x]).expect("finite coordinate")
    }

    /// Two-dimensional point; panics on non-finite input.
    pub fn new2(x: f64, y: f64) -> Self {
        wrap(&[x, y]).expect("finite coordinates")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> f64 {
        self.coords[axis]
    }

    /// Move by `v` and wrap back onto the torus.
    #[inline]
    pub fn translate(&self, v: &Momentum) -> TorusPoint {
        debug_assert_eq!(self.dim, v.dim);
        let mut coords = [0.0; MAX_DIM];
        for (a, c) in coords.iter_mut().enumerate().take(self.dim) {
            *c = reduce(self.coords[a] + v.comps[a]);
        }
        TorusPoint {
            coords,
            dim: self.dim,
        }
    }

    /// Shortest displacement `other - self` with components in `[-1/2, 1/2]`.
    #[inline]
    pub fn displacement_to(&self, other: &TorusPoint) -> Momentum {
        let mut comps = [0.0; MAX_DIM];
        for (a, c) in comps.iter_mut().enumerate().take(self.dim) {
            let d = other.coords[a] - self.coords[a];
            *c = d - d.round();
        }
        Momentum {
            comps,
            dim: self.dim,
        }
    }
}

/// Euclidean distance with per-coordinate wraparound.
pub fn torus_distance(a: &TorusPoint, b: &TorusPoint) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(dist_unchecked(a, b))
}

#[inline]
pub(crate) fn dist_unchecked(a: &TorusPoint, b: &TorusPoint) -> f64 {
    let mut s = 0.0;
    for k in 0..a.dim {
        let d = (a.coords[k] - b.coords[k]).abs();
        let d = d.min(1.0 - d);
        s += d * d;
    }
    s.sqrt()
}

/// Distance from `x` to the nearest member of `set`.
pub fn set_distance(x: &TorusPoint, set: &[TorusPoint]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("distance to an empty set"));
    }
    let mut best = f64::INFINITY;
    for s in set {
        best = best.min(torus_distance(x, s)?);
    }
    Ok(best)
}

/// A vector in the cotangent space (momentum units), same dimension as the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    comps: [f64; MAX_DIM],
    dim: usize,
}

impl Momentum {
    pub fn zeros(dim: usize) -> Self {
        Momentum {
            comps: [0.0; MAX_DIM],
            dim,
        }
    }

    pub fn from_slice(c: &[f64]) -> Result<Self> {
        check_dim(c.len())?;
        let mut comps = [0.0; MAX_DIM];
        comps[..c.len()].copy_from_slice(c);
        Ok(Momentum {
            comps,
            dim: c.len(),
        })
    }

    pub fn new1(p: f64) -> Self {
        Momentum {
            comps: [p, 0.0],
            dim: 1,
        }
    }

    pub fn new2(p: f64, q: f64) -> Self {
        Momentum {
            comps: [p, q],
            dim: 2,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn comps(&self) -> &[f64] {
        &self.comps[..self.dim]
    }

    #[inline]
    pub fn comp(&self, axis: usize) -> f64 {
        self.comps[axis]
    }

    #[inline]
    pub fn dot(&self, other: &Momentum) -> f64 {
        self.comps[0] * other.comps[0] + self.comps[1] * other.comps[1]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl Add for Momentum {
    type Output = Momentum;
    fn add(self, o: Momentum) -> Momentum {
        Momentum {
            comps: [self.comps[0] + o.comps[0], self.comps[1] + o.comps[1]],
            dim: self.dim,
        }
    }
}

impl Sub for Momentum {
    type Output = Momentum;
    fn sub(self, o: Momentum) -> Momentum {
        Momentum {
            comps: [self.comps[0] - o.comps[0], self.comps[1] - o.comps[1]],
            dim: self.dim,
        }
    }
}

impl Mul<Momentum> for f64 {
    type Output = Momentum;
    fn mul(self, v: Momentum) -> Momentum {
        Momentum {
            comps: [self * v.comps[0], self * v.comps[1]],
            dim: v.dim,
        }
    }
}

impl Neg for Momentum {
    type Output = Momentum;
    fn neg(self) -> Momentum {
        -1.0 * self
    }
}

/// Resolution and dimension of a uniform periodic grid, without values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n: usize,
    pub dim: usize,
}

impl GridShape {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if n < MIN_CELLS {
            return Err(Error::invalid(format!(
                "grid needs at least {MIN_CELLS} cells per dimension, got {n}"
            )));
        }
        Ok(GridShape { n, dim })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat row-major index of a (possibly out-of-range) multi-index, wrapped modulo `n`.
    #[inline]
    pub fn index(&self, idx: [isize; MAX_DIM]) -> usize {
        let n = self.n as isize;
        match self.dim {
            1 => idx[0].rem_euclid(n) as usize,
            _ => (idx[0].rem_euclid(n) * n + idx[1].rem_euclid(n)) as usize,
        }
    }

    #[inline]
    pub fn multi_index(&self, flat: usize) -> [isize; MAX_DIM] {
        match self.dim {
            1 => [flat as isize, 0],
            _ => [(flat / self.n) as isize, (flat % self.n) as isize],
        }
    }

    /// Grid node `flat` as a torus point.
    #[inline]
    pub fn node(&self, flat: usize) -> TorusPoint {
        let m = self.multi_index(flat);
        let h = self.spacing();
        TorusPoint {
            coords: [m[0] as f64 * h, m[1] as f64 * h],
            dim: self.dim,
        }
    }

    /// Index of the node nearest to `x` (the bin whose center is that node).
    #[inline]
    pub fn nearest_node(&self, x: &TorusPoint) -> usize {
        let n = self.n as f64;
        let mut idx = [0isize; MAX_DIM];
        for (a, i) in idx.iter_mut().enumerate().take(self.dim) {
            *i = (x.coords[a] * n).round() as isize;
        }
        self.index(idx)
    }

    pub fn nodes(&self) -> impl Iterator<Item = TorusPoint> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }
}

/// Real values on a uniform periodic grid, row-major, first coordinate slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicGrid {
    shape: GridShape,
    values: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        let shape = GridShape::new(n, dim)?;
        if values.len() != shape.len() {
            return Err(Error::invalid(format!(
                "expected {} grid values, got {}",
                shape.len(),
                values.len()
            )));
        }
        Ok(PeriodicGrid { shape, values })
    }

    pub fn from_fn(n: usize, dim: usize, f: impl Fn(&TorusPoint) -> f64) -> Result<Self> {
        let shape = GridShape::new(n, dim)?;
        let values = shape.nodes().map(|x| f(&x)).collect();
        Ok(PeriodicGrid { shape, values })
    }

    pub fn constant(n: usize, dim: usize, c: f64) -> Result<Self> {
        let shape = GridShape::new(n, dim)?;
        Ok(PeriodicGrid {
            shape,
            values: vec![c; shape.len()],
        })
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.shape.spacing()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at a multi-index, periodic in every axis.
    #[inline]
    pub fn at(&self, idx: [isize; MAX_DIM]) -> f64 {
        self.values[self.shape.index(idx)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Periodic multilinear interpolation.
    pub fn interpolate(&self, x: &TorusPoint) -> f64 {
        debug_assert_eq!(x.dim, self.shape.dim);
        let n = self.shape.n as f64;
        let s0 = x.coords[0] * n;
        let i0 = s0.floor();
        let t0 = s0 - i0;
        let i0 = i0 as isize;
        match self.shape.dim {
            1 => (1.0 - t0) * self.at([i0, 0]) + t0 * self.at([i0 + 1, 0]),
            _ => {
                let s1 = x.coords[1] * n;
                let i1 = s1.floor();
                let t1 = s1 - i1;
                let i1 = i1 as isize;
                let a = (1.0 - t1) * self.at([i0, i1]) + t1 * self.at([i0, i1 + 1]);
                let b = (1.0 - t1) * self.at([i0 + 1, i1]) + t1 * self.at([i0 + 1, i1 + 1]);
                (1.0 - t0) * a + t0 * b
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_examples() {
        assert_abs_diff_eq!(wrap(&[1.25]).unwrap().coord(0), 0.25);
        assert_abs_diff_eq!(wrap(&[-0.1]).unwrap().coord(0), 0.9, epsilon = 1e-15);
        let p = wrap(&[0.5, 2.0]).unwrap();
        assert_eq!(p.coords(), &[0.5, 0.0]);
        assert!(wrap(&[f64::NAN]).is_err());
        assert!(wrap(&[0.1, f64::INFINITY]).is_err());
        assert!(wrap(&[]).is_err());
        // -1e-20 would round up to 1.0 without the guard
        assert_eq!(wrap(&[-1e-20]).unwrap().coord(0), 0.0);
    }

    #[test]
    fn distance_examples() {
        let d = torus_distance(&TorusPoint::new1(0.1), &TorusPoint::new1(0.9)).unwrap();
        assert_abs_diff_eq!(d, 0.2, epsilon = 1e-15);
        let x = TorusPoint::new2(0.3, 0.7);
        assert_eq!(torus_distance(&x, &x).unwrap(), 0.0);
        let d = torus_distance(&TorusPoint::new2(0.0, 0.0), &TorusPoint::new2(0.5, 0.5)).unwrap();
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(torus_distance(&TorusPoint::new1(0.0), &x).is_err());
    }

    #[test]
    fn set_distance_examples() {
        let s = [TorusPoint::new1(0.0), TorusPoint::new1(0.5)];
        assert_abs_diff_eq!(
            set_distance(&TorusPoint::new1(0.3), &s).unwrap(),
            0.2,
            epsilon = 1e-15
        );
        assert_eq!(set_distance(&TorusPoint::new1(0.5), &s).unwrap(), 0.0);
        assert_abs_diff_eq!(
            set_distance(&TorusPoint::new1(0.9), &s[..1]).unwrap(),
            0.1,
            epsilon = 1e-15
        );
        assert!(set_distance(&TorusPoint::new1(0.9), &[]).is_err());
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut p = || TorusPoint::new2(rng.gen(), rng.gen());
            let (a, b, c) = (p(), p(), p());
            let ab = dist_unchecked(&a, &b);
            assert_eq!(ab, dist_unchecked(&b, &a));
            assert!(dist_unchecked(&a, &c) <= ab + dist_unchecked(&b, &c) + 1e-15);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(4, 1, vec![0.0; 4]).is_err());
        assert!(PeriodicGrid::new(8, 1, vec![0.0; 7]).is_err());
        assert!(PeriodicGrid::new(8, 3, vec![0.0; 512]).is_err());
        let g = PeriodicGrid::from_fn(8, 2, |x| x.coord(0) + 10.0 * x.coord(1)).unwrap();
        assert_eq!(g.at([-1, 9]), g.at([7, 1]));
    }

    #[test]
    fn interpolation_examples() {
        let g = PeriodicGrid::from_fn(16, 1, |x| (x.coord(0) * 16.0).round().rem_euclid(2.0)).unwrap();
        // nodes 0 and 1 carry 0 and 1
        assert_eq!(g.interpolate(&TorusPoint::new1(1.0 / 16.0)), 1.0);
        assert_abs_diff_eq!(g.interpolate(&TorusPoint::new1(0.5 / 16.0)), 0.5);
        let c = PeriodicGrid::constant(8, 2, 3.5).unwrap();
        assert_abs_diff_eq!(c.interpolate(&TorusPoint::new2(0.123, 0.987)), 3.5, epsilon = 1e-15);
        // periodic across the seam
        let s = PeriodicGrid::from_fn(8, 1, |x| if x.coord(0) == 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert_abs_diff_eq!(s.interpolate(&TorusPoint::new1(0.9375)), 0.5);
    }

    #[test]
    fn interpolation_of_trig_polynomial() {
        use std::f64::consts::TAU;
        let f = |x: &TorusPoint| (TAU * x.coord(0)).cos() + 0.5 * (TAU * x.coord(0)).sin();
        let g = PeriodicGrid::from_fn(1024, 1, f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut err: f64 = 0.0;
        for _ in 0..10_000 {
            let x = TorusPoint::new1(rng.gen());
            err = err.max((g.interpolate(&x) - f(&x)).abs());
        }
        assert!(err < 1e-4, "sup error {err}");
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let p = wrap(&[a, b]).unwrap();
            prop_assert!(p.coords().iter().all(|&c| (0.0..1.0).contains(&c)));
            prop_assert_eq!(wrap(p.coords()).unwrap(), p);
        }

        #[test]
        fn interpolation_within_cell_bounds(x in 0.0f64..1.0, y in 0.0f64..1.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = PeriodicGrid::new(8, 2, vals).unwrap();
            let p = TorusPoint::new2(x, y);
            let (i, j) = ((p.coord(0) * 8.0).floor() as isize, (p.coord(1) * 8.0).floor() as isize);
            let corners = [g.at([i, j]), g.at([i + 1, j]), g.at([i, j + 1]), g.at([i + 1, j + 1])];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = g.interpolate(&p);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
