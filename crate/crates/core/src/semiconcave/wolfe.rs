//! Wolfe's minimum-norm-point algorithm for the convex hull of finitely many points in
//! the plane (it works in any dimension; the linear algebra here is sized for d <= 2).

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 1000;
/// Optimality certificate: `<p, v - p> >= -CERT_TOL` for every vertex `v`.
pub const CERT_TOL: f64 = 1e-12;

type V2 = [f64; 2];

#[inline]
fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn combo(points: &[V2], w: &[f64]) -> V2 {
    let mut x = [0.0; 2];
    for (p, &l) in points.iter().zip(w) {
        x[0] += l * p[0];
        x[1] += l * p[1];
    }
    x
}

/// Weights `a` (summing to one) minimizing `|sum a_i s_i|` over the affine hull of `s`.
fn affine_minimizer(s: &[V2]) -> Option<Vec<f64>> {
    match s.len() {
        1 => Some(vec![1.0]),
        2 => {
            let d = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
            let dd = dot(d, d);
            if dd <= f64::EPSILON * (dot(s[0], s[0]) + dot(s[1], s[1])).max(f64::MIN_POSITIVE) {
                return None;
            }
            let b = -dot(s[0], d) / dd;
            Some(vec![1.0 - b, b])
        }
        3 => {
            // s0 + B1 d1 + B2 d2 spans the plane; the minimizer is the origin itself.
            let d1 = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
            let d2 = [s[2][0] - s[0][0], s[2][1] - s[0][1]];
            let det = d1[0] * d2[1] - d1[1] * d2[0];
            let scale = (dot(d1, d1) * dot(d2, d2)).sqrt();
            if det.abs() <= 1e-14 * scale || scale == 0.0 {
                return None;
            }
            let b1 = (-s[0][0] * d2[1] + s[0][1] * d2[0]) / det;
            let b2 = (-d1[0] * s[0][1] + d1[1] * s[0][0]) / det;
            Some(vec![1.0 - b1 - b2, b1, b2])
        }
        _ => None,
    }
}

/// Nearest point to the origin in the convex hull of `points` (each of length `dim`).
pub fn min_norm_point(points: &[V2]) -> Result<V2> {
    if points.is_empty() {
        return Err(Error::invalid("minimum-norm point of an empty set"));
    }
    let scale = points.iter().map(|&p| dot(p, p)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok([0.0; 2]);
    }
    let eps = 1e-15 * scale;

    let start = points
        .iter()
        .copied()
        .min_by(|a, b| dot(*a, *a).total_cmp(&dot(*b, *b)))
        .expect("nonempty");
    let mut s: Vec<V2> = vec![start];
    let mut lambda: Vec<f64> = vec![1.0];
    let mut x = start;

    for _ in 0..MAX_ITER {
        let (j, best) = points
            .iter()
            .enumerate()
            .map(|(j, &p)| (j, dot(x, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if dot(x, x) - best <= eps || s.contains(&points[j]) {
            return certify(points, x);
        }
        s.push(points[j]);
        lambda.push(0.0);

        loop {
            let Some(alpha) = affine_minimizer(&s) else {
                // Affinely dependent corral: drop the oldest zero-weight or lightest point.
                let (k, _) = lambda[..lambda.len() - 1]
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("at least two points");
                s.remove(k);
                lambda.remove(k);
                let total: f64 = lambda.iter().sum();
                if total > 0.0 {
                    lambda.iter_mut().for_each(|l| *l /= total);
                } else {
                    lambda.iter_mut().for_each(|l| *l = 1.0 / s.len() as f64);
                }
                continue;
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut k = 0;
            while k < s.len() {
                if lambda[k] <= 1e-14 {
                    s.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if s.is_empty() {
                return Err(Error::numerical("minimum-norm corral became empty"));
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        x = combo(&s, &lambda);
    }
    Err(Error::Numerical {
        msg: format!("minimum-norm point did not converge in {MAX_ITER} iterations"),
        best: Some(x.to_vec()),
    })
}

fn certify(points: &[V2], x: V2) -> Result<V2> {
    let scale = points.iter().map(|&p| dot(p, p)).fold(1.0, f64::max);
    let worst = points
        .iter()
        .map(|&v| dot(x, [v[0] - x[0], v[1] - x[1]]))
        .fold(f64::INFINITY, f64::min);
    if worst >= -CERT_TOL * scale {
        Ok(x)
    } else {
        Err(Error::Numerical {
            msg: format!("optimality certificate failed ({worst:e})"),
            best: Some(x.to_vec()),
        })
    }
}
