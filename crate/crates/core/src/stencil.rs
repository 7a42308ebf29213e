//! One-sided finite differences for functions with kinks.
//!
//! The second-order correction is taken from whichever adjacent second difference is
//! smaller in magnitude (ENO selection), so a stencil never reaches across a kink when
//! a smooth alternative exists.

/// Values `f(x + k h)` for `k = -2..=2`.
#[derive(Clone, Copy, Debug)]
pub struct Stencil5 {
    pub v: [f64; 5],
    pub h: f64,
}

#[inline]
fn smaller(a: f64, b: f64) -> f64 {
    if a.abs() <= b.abs() {
        a
    } else {
        b
    }
}

impl Stencil5 {
    /// `(u'_+(x), u'_-(x))`: right and left derivatives.
    #[inline]
    pub fn one_sided(&self) -> (f64, f64) {
        let [m2, m1, c, p1, p2] = self.v;
        let h = self.h;
        let h2 = h * h;
        let d_center = (p1 - 2.0 * c + m1) / h2;
        let d_right = (p2 - 2.0 * p1 + c) / h2;
        let d_left = (c - 2.0 * m1 + m2) / h2;
        let fwd = (p1 - c) / h - 0.5 * h * smaller(d_center, d_right);
        let bwd = (c - m1) / h + 0.5 * h * smaller(d_center, d_left);
        (fwd, bwd)
    }

    #[inline]
    pub fn centered(&self) -> f64 {
        (self.v[3] - self.v[1]) / (2.0 * self.h)
    }

    #[inline]
    pub fn second_difference(&self) -> f64 {
        (self.v[3] - 2.0 * self.v[2] + self.v[1]) / (self.h * self.h)
    }
}
