//! Gauss rules on intervals, triangles, polygons and edges.

use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("polygon is not simple or has no positive-area triangulation")]
    NotSimple,
}

/// Points and positive weights on a polygon or an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Vec2) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule on `[0, 1]`, exact to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, t);
        // map [-1, 1] -> [0, 1], ascending order
        x[n - 1 - i] = 0.5 * (t + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    if n % 2 == 1 {
        x[n / 2] = 0.5;
    }
    (x, w)
}

/// `n`-point Gauss–Lobatto nodes on `[0, 1]` (endpoints included), ascending.
pub fn gauss_lobatto(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let m = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[n - 1] = 1.0;
    for i in 1..m {
        // interior nodes are the roots of P'_m
        let mut t = -(std::f64::consts::PI * i as f64 / m as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, t);
            // P'' from the Legendre ODE
            let d2p = (2.0 * t * dp - (m * (m + 1)) as f64 * p) / (1.0 - t * t);
            let dt = dp / d2p;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (t + 1.0);
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    nodes
}

/// Collapsed-coordinate Gauss rule on a triangle, exact to `degree`.
pub fn triangle_rule(a: Vec2, b: Vec2, c: Vec2, degree: usize) -> QuadratureRule {
    let n = (degree + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let jac = (b - a).perp(&(c - a)).abs();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (s, ws) in x.iter().zip(&w) {
        for (t, wt) in x.iter().zip(&w) {
            let u = *s;
            let v = t * (1.0 - s);
            points.push(a + (b - a) * u + (c - a) * v);
            weights.push(jac * ws * wt * (1.0 - s));
        }
    }
    QuadratureRule { points, weights }
}

fn tri_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * (b - a).perp(&(c - a))
}

fn polygon_area_centroid(pts: &[Vec2]) -> (f64, Vec2) {
    let n = pts.len();
    let mut area = 0.0;
    let mut c = Vec2::zeros();
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let cross = p.perp(&q);
        area += cross;
        c += (p + q) * cross;
    }
    area *= 0.5;
    (area, c / (6.0 * area))
}

/// Triangulation of a CCW polygon: barycentre fan when every fan triangle has
/// positive area, ear clipping otherwise.
pub fn triangulate(pts: &[Vec2]) -> Result<Vec<[Vec2; 3]>, QuadratureError> {
    let n = pts.len();
    if n < 3 {
        return Err(QuadratureError::NotSimple);
    }
    if n == 3 {
        return if tri_area(pts[0], pts[1], pts[2]) > 0.0 {
            Ok(vec![[pts[0], pts[1], pts[2]]])
        } else {
            Err(QuadratureError::NotSimple)
        };
    }
    let (area, xc) = polygon_area_centroid(pts);
    if !(area > 0.0) {
        return Err(QuadratureError::NotSimple);
    }
    let scale = area / n as f64;
    let fan: Vec<[Vec2; 3]> = (0..n).map(|i| [xc, pts[i], pts[(i + 1) % n]]).collect();
    if fan.iter().all(|t| tri_area(t[0], t[1], t[2]) > 1e-12 * scale) {
        return Ok(fan);
    }
    ear_clip(pts)
}

fn ear_clip(pts: &[Vec2]) -> Result<Vec<[Vec2; 3]>, QuadratureError> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut out = Vec::with_capacity(pts.len() - 2);
    let inside = |p: Vec2, a: Vec2, b: Vec2, c: Vec2| {
        tri_area(a, b, p) >= 0.0 && tri_area(b, c, p) >= 0.0 && tri_area(c, a, p) >= 0.0
    };
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let (ia, ib, ic) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if tri_area(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx
                .iter()
                .filter(|&&j| j != ia && j != ib && j != ic)
                .any(|&j| inside(pts[j], a, b, c));
            if !blocked {
                out.push([a, b, c]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(QuadratureError::NotSimple);
        }
    }
    let (a, b, c) = (pts[idx[0]], pts[idx[1]], pts[idx[2]]);
    if tri_area(a, b, c) <= 0.0 {
        return Err(QuadratureError::NotSimple);
    }
    out.push([a, b, c]);
    Ok(out)
}

/// Rule on a CCW polygon exact for polynomials up to `degree`.
pub fn polygon_quadrature(pts: &[Vec2], degree: usize) -> Result<QuadratureRule, QuadratureError> {
    let tris = triangulate(pts)?;
    let mut rule = QuadratureRule { points: Vec::new(), weights: Vec::new() };
    for [a, b, c] in tris {
        let t = triangle_rule(a, b, c, degree);
        rule.points.extend(t.points);
        rule.weights.extend(t.weights);
    }
    Ok(rule)
}

/// `npoints` Gauss points on the segment `a -> b`, exact to degree `2 npoints - 1`.
pub fn edge_quadrature(a: Vec2, b: Vec2, npoints: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(npoints);
    let len = (b - a).norm();
    QuadratureRule {
        points: x.iter().map(|s| a + (b - a) * *s).collect(),
        weights: w.iter().map(|wi| wi * len).collect(),
    }
}
