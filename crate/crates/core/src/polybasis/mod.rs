//! Scaled monomial bases on a polygon, their vector decompositions, rigid
//! body motions and the elasticity-image basis used by the stress space.
//!
//! Polynomials are stored as coefficient vectors in the scaled monomial basis
//! `((x - x_K) / h_K)^a`, ordered by total degree and then by decreasing power
//! of `x`. Because of that ordering, `M_k` is a prefix of `M_{k+1}`. Vector
//! polynomials stack the two component blocks: `[c_1 (dim P_k), c_2 (dim P_k)]`.
//! Symmetric tensor polynomials stack `[t_11, t_12, t_22]`.

mod quadrature;

pub use quadrature::{
    edge_quadrature, gauss_legendre, gauss_lobatto, polygon_quadrature, triangle_rule, triangulate,
    QuadratureError, QuadratureRule,
};

use thiserror::Error;

use crate::dense;
use crate::mesh::{compute_cell_geometry, CellGeometry, MeshError, PolyMesh};
use crate::model::MaterialParams;
use crate::{DMat, Vec2};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("Gram matrix is numerically singular (degenerate cell)")]
    SingularGram,
    #[error("basis component counts differ ({0} vs {1})")]
    RankMismatch(usize, usize),
    #[error("expected {expected} independent directions, found {found}")]
    Rank { expected: usize, found: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// `dim P_k` in two variables.
pub const fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// `dim P_{k-1}` with the convention `P_{-1} = {0}`.
pub const fn dim_p_below(k: usize) -> usize {
    if k == 0 {
        0
    } else {
        dim_p(k - 1)
    }
}

/// Position of the exponent `(a, b)` in the degree-major ordering.
pub const fn monomial_index(a: usize, b: usize) -> usize {
    let d = a + b;
    dim_p_below(d) + b
}

/// Scaled monomials `((x - x_K)/h_K)^alpha`, `|alpha| <= degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialSet {
    pub degree: usize,
    pub center: Vec2,
    pub h: f64,
    exponents: Vec<(usize, usize)>,
}

impl MonomialSet {
    pub fn new(center: Vec2, h: f64, degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(dim_p(degree));
        for d in 0..=degree {
            for b in 0..=d {
                exponents.push((d - b, b));
            }
        }
        MonomialSet { degree, center, h, exponents }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exponents
    }

    pub fn scaled(&self, x: Vec2) -> Vec2 {
        (x - self.center) / self.h
    }

    pub fn eval(&self, i: usize, x: Vec2) -> f64 {
        let (a, b) = self.exponents[i];
        let s = self.scaled(x);
        s.x.powi(a as i32) * s.y.powi(b as i32)
    }

    /// Gradient including the `1/h` chain factor.
    pub fn gradient(&self, i: usize, x: Vec2) -> Vec2 {
        let (a, b) = self.exponents[i];
        let s = self.scaled(x);
        let dx = if a > 0 { a as f64 * s.x.powi(a as i32 - 1) * s.y.powi(b as i32) } else { 0.0 };
        let dy = if b > 0 { b as f64 * s.x.powi(a as i32) * s.y.powi(b as i32 - 1) } else { 0.0 };
        Vec2::new(dx, dy) / self.h
    }

    /// All monomial values at `x`.
    pub fn eval_all(&self, x: Vec2) -> Vec<f64> {
        let s = self.scaled(x);
        let mut px = vec![1.0; self.degree + 1];
        let mut py = vec![1.0; self.degree + 1];
        for i in 1..=self.degree {
            px[i] = px[i - 1] * s.x;
            py[i] = py[i - 1] * s.y;
        }
        self.exponents.iter().map(|&(a, b)| px[a] * py[b]).collect()
    }

    /// Evaluates the polynomial with coefficients `coef` (a prefix of this set) at `x`.
    pub fn eval_poly(&self, coef: &[f64], x: Vec2) -> f64 {
        let v = self.eval_all(x);
        coef.iter().zip(&v).map(|(c, m)| c * m).sum()
    }
}

/// Coefficients of `d/dx` (`dir = 0`) or `d/dy` (`dir = 1`) of a polynomial of
/// degree `k`, as a degree `k - 1` polynomial (length `dim_p(k-1)`), without the
/// `1/h` factor.
pub fn derivative_coefficients(coef: &[f64], k: usize, dir: usize) -> Vec<f64> {
    let set = MonomialSet::new(Vec2::zeros(), 1.0, k);
    let mut out = vec![0.0; dim_p_below(k)];
    for (i, &(a, b)) in set.exponents().iter().enumerate().take(coef.len()) {
        match dir {
            0 if a > 0 => out[monomial_index(a - 1, b)] += a as f64 * coef[i],
            1 if b > 0 => out[monomial_index(a, b - 1)] += b as f64 * coef[i],
            _ => {}
        }
    }
    out
}

/// Quadrature-sampled basis functions: `values[q][i * components + c]`.
#[derive(Debug, Clone)]
pub struct SampledBasis {
    pub len: usize,
    pub components: usize,
    pub values: Vec<Vec<f64>>,
}

impl SampledBasis {
    /// Samples `len` functions with `components` entries each. Tensor bases should
    /// be passed in Mandel form (`t_11, sqrt(2) t_12, t_22`) so that the Euclidean
    /// product equals the double contraction.
    pub fn sample(
        rule: &QuadratureRule,
        len: usize,
        components: usize,
        f: impl Fn(Vec2, &mut [f64]),
    ) -> Self {
        let values = rule
            .points
            .iter()
            .map(|p| {
                let mut v = vec![0.0; len * components];
                f(*p, &mut v);
                v
            })
            .collect();
        SampledBasis { len, components, values }
    }
}

/// `G_ij = int A_i . B_j` by quadrature.
pub fn gram_matrix(a: &SampledBasis, b: &SampledBasis, rule: &QuadratureRule) -> Result<DMat, BasisError> {
    if a.components != b.components {
        return Err(BasisError::RankMismatch(a.components, b.components));
    }
    let nc = a.components;
    let mut g = DMat::zeros(a.len, b.len);
    for (q, w) in rule.weights.iter().enumerate() {
        let va = &a.values[q];
        let vb = &b.values[q];
        for i in 0..a.len {
            for j in 0..b.len {
                let mut s = 0.0;
                for c in 0..nc {
                    s += va[i * nc + c] * vb[j * nc + c];
                }
                g[(i, j)] += w * s;
            }
        }
    }
    Ok(g)
}

/// One edge of a cell as seen from that cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    /// Global edge id (or local index when built from a bare polygon).
    pub id: usize,
    /// First vertex in global orientation.
    pub start: Vec2,
    /// Second vertex in global orientation.
    pub end: Vec2,
    pub length: f64,
    /// Global unit tangent, `start -> end`.
    pub tangent: Vec2,
    pub midpoint: Vec2,
    /// Outward unit normal of this cell.
    pub normal: Vec2,
    /// `+1` if the outward normal equals the global normal.
    pub sign: f64,
}

impl LocalEdge {
    /// Point at reference coordinate `r in [-1/2, 1/2]` along the global tangent.
    pub fn point(&self, r: f64) -> Vec2 {
        self.midpoint + self.tangent * (r * self.length)
    }
}

/// Geometry of a cell together with its oriented edges.
#[derive(Debug, Clone)]
pub struct CellFrame {
    pub geom: CellGeometry,
    pub edges: Vec<LocalEdge>,
}

impl CellFrame {
    pub fn from_mesh(mesh: &PolyMesh, cell: usize) -> Result<Self, MeshError> {
        let geom = mesh.cell_geometry(cell)?;
        let signs: Vec<(usize, f64)> = mesh.cell_edges[cell].iter().map(|ce| (ce.edge, ce.sign as f64)).collect();
        Ok(Self::build(geom, &signs))
    }

    /// Frame of a stand-alone CCW polygon; global orientation equals local orientation.
    pub fn from_polygon(pts: &[Vec2]) -> Result<Self, MeshError> {
        let geom = compute_cell_geometry(pts)?;
        let signs: Vec<(usize, f64)> = (0..pts.len()).map(|i| (i, 1.0)).collect();
        Ok(Self::build(geom, &signs))
    }

    fn build(geom: CellGeometry, signs: &[(usize, f64)]) -> Self {
        let n = geom.vertices.len();
        let edges = (0..n)
            .map(|i| {
                let (p, q) = (geom.vertices[i], geom.vertices[(i + 1) % n]);
                let (id, sign) = signs[i];
                let (start, end) = if sign > 0.0 { (p, q) } else { (q, p) };
                let length = (end - start).norm();
                LocalEdge {
                    id,
                    start,
                    end,
                    length,
                    tangent: (end - start) / length,
                    midpoint: (start + end) * 0.5,
                    normal: geom.outward_normals[i],
                    sign,
                }
            })
            .collect();
        CellFrame { geom, edges }
    }

    pub fn h(&self) -> f64 {
        self.geom.diameter
    }

    pub fn center(&self) -> Vec2 {
        self.geom.centroid
    }
}

/// Per-cell polynomial workspace: monomials up to degree `k + 1`, the cell
/// quadrature, Gram matrices and the decompositions used by both local spaces.
#[derive(Debug, Clone)]
pub struct CellBasis {
    pub k: usize,
    pub frame: CellFrame,
    /// Scalar monomials up to degree `k + 1`.
    pub mono: MonomialSet,
    /// Cell rule exact to degree `2k + 3`.
    pub rule: QuadratureRule,
    /// `mono` values at `rule` points: `values[q][i]`.
    pub values: Vec<Vec<f64>>,
    /// Scalar Gram matrix of `M_{k+1}`; its leading `dim P_k` block is the Gram of `M_k`.
    pub gram: DMat,
    pub decomposition: VectorDecomposition,
    pub rbm: RbmBases,
    pub tilde: TildeBasis,
}

/// Exactness degree of the cell rule used for operator integrals.
pub const fn cell_rule_degree(k: usize) -> usize {
    2 * k + 3
}

/// Gauss points per edge for integrals of polynomial edge traces.
pub const fn edge_points(k: usize) -> usize {
    k + 3
}

/// Cell rule degree for integrals involving non-polynomial data.
pub const fn data_rule_degree(k: usize) -> usize {
    2 * k + 16
}

/// Gauss points per edge for integrals involving non-polynomial data.
pub const fn data_edge_points(k: usize) -> usize {
    k + 12
}

/// Gauss rule on `r in [-1/2, 1/2]` with weights summing to 1.
pub fn centered_gauss(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (x.into_iter().map(|t| t - 0.5).collect(), w)
}

/// `[1, r, ..., r^k]`
pub fn powers(r: f64, k: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(k + 1);
    let mut v = 1.0;
    for _ in 0..=k {
        p.push(v);
        v *= r;
    }
    p
}

/// `M^grad_{k'}` and `M^perp_{k'}` for `k' in {k - 1, k}` as coefficient
/// matrices in vector `M_{k'}` (rows are basis elements).
#[derive(Debug, Clone)]
pub struct VectorDecomposition {
    /// `h_K grad m`, `m in M_k` non-constant: vector polynomials of degree `k - 1`.
    pub grad_km1: DMat,
    /// `h_K grad m`, `m in M_{k+1}` non-constant: vector polynomials of degree `k`.
    pub grad_k: DMat,
    /// `m_perp * M_{k-1}`: vector polynomials of degree `k`.
    pub perp_k: DMat,
}

/// Rigid body motions and an L2-orthogonal complement, as coefficient rows in vector `M_k`.
#[derive(Debug, Clone)]
pub struct RbmBases {
    pub rbm: DMat,
    pub perp: DMat,
}

/// `C eps(m)` for `m` in vector `M_{k+1}` modulo rigid body motions.
#[derive(Debug, Clone)]
pub struct TildeBasis {
    /// Generators as rows in vector `M_{k+1}` coefficients.
    pub generators: DMat,
    /// The tensors `C eps(m)` as rows of `[t11, t12, t22]` coefficients in `M_k`.
    pub tensors: DMat,
    /// The strains `eps(m)` in the same layout.
    pub strains: DMat,
}

/// Scalar Gram matrix of `M_deg` using `values`.
fn scalar_gram(values: &[Vec<f64>], rule: &QuadratureRule, n: usize) -> DMat {
    let mut g = DMat::zeros(n, n);
    for (q, w) in rule.weights.iter().enumerate() {
        let v = &values[q];
        for i in 0..n {
            let wi = w * v[i];
            for j in i..n {
                g[(i, j)] += wi * v[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Block-diagonal Gram of vector `M_deg` from the scalar Gram.
pub fn vector_gram(scalar: &DMat, np: usize) -> DMat {
    let mut g = DMat::zeros(2 * np, 2 * np);
    let s = scalar.view((0, 0), (np, np));
    g.view_mut((0, 0), (np, np)).copy_from(&s);
    g.view_mut((np, np), (np, np)).copy_from(&s);
    g
}

/// Rows `h grad m_alpha` for non-constant `alpha` in `M_{deg+1}`, in vector `M_deg` coefficients.
pub fn grad_rows(deg: usize) -> DMat {
    let n_src = dim_p(deg + 1);
    let np = dim_p(deg);
    let set = MonomialSet::new(Vec2::zeros(), 1.0, deg + 1);
    let mut out = DMat::zeros(n_src - 1, 2 * np);
    for (r, &(a, b)) in set.exponents().iter().enumerate().skip(1) {
        if a > 0 {
            out[(r - 1, monomial_index(a - 1, b))] = a as f64;
        }
        if b > 0 {
            out[(r - 1, np + monomial_index(a, b - 1))] = b as f64;
        }
    }
    out
}

/// Rows `m_perp m_beta`, `|beta| <= deg - 1`, with `m_perp = (m_01, -m_10)`, in vector `M_deg`.
pub fn perp_rows(deg: usize) -> DMat {
    let np = dim_p(deg);
    let nb = dim_p_below(deg);
    let mut out = DMat::zeros(nb, 2 * np);
    if deg == 0 {
        return out;
    }
    let set = MonomialSet::new(Vec2::zeros(), 1.0, deg - 1);
    for (r, &(a, b)) in set.exponents().iter().enumerate() {
        out[(r, monomial_index(a, b + 1))] = 1.0;
        out[(r, np + monomial_index(a + 1, b))] = -1.0;
    }
    out
}

impl CellBasis {
    /// Builds monomials, quadrature, Grams, decompositions, RBM complement and
    /// the elasticity-image basis for one cell.
    pub fn new(frame: CellFrame, k: usize, params: &MaterialParams) -> Result<Self, BasisError> {
        assert!(k >= 1, "polynomial degree must be at least 1");
        let mono = MonomialSet::new(frame.center(), frame.h(), k + 1);
        let rule = polygon_quadrature(&frame.geom.vertices, cell_rule_degree(k))?;
        let values: Vec<Vec<f64>> = rule.points.iter().map(|p| mono.eval_all(*p)).collect();
        let gram = scalar_gram(&values, &rule, mono.dim());
        let np = dim_p(k);

        let decomposition =
            VectorDecomposition { grad_km1: grad_rows(k - 1), grad_k: grad_rows(k), perp_k: perp_rows(k) };

        let mvec = vector_gram(&gram, np);
        let rbm = build_rbm(&mvec, np, frame.h(), frame.geom.area)?;
        let tilde = build_tilde(k, params);
        Ok(CellBasis { k, frame, mono, rule, values, gram, decomposition, rbm, tilde })
    }

    pub fn np(&self) -> usize {
        dim_p(self.k)
    }

    pub fn h(&self) -> f64 {
        self.frame.h()
    }

    pub fn area(&self) -> f64 {
        self.frame.geom.area
    }

    /// Scalar Gram of `M_k`.
    pub fn gram_k(&self) -> DMat {
        let np = self.np();
        self.gram.view((0, 0), (np, np)).into_owned()
    }

    /// Block-diagonal Gram of vector `M_k`.
    pub fn vector_gram_k(&self) -> DMat {
        vector_gram(&self.gram, self.np())
    }

    /// `int_K m_i n_j` for `m_i in M_k`, `n_j in M_{k+1}`.
    pub fn gram_k_kp1(&self) -> DMat {
        let np = self.np();
        let n1 = dim_p(self.k + 1);
        self.gram.view((0, 0), (np, n1)).into_owned()
    }
}

fn build_rbm(mvec: &DMat, np: usize, h: f64, area: f64) -> Result<RbmBases, BasisError> {
    let n = 2 * np;
    let mut rbm = DMat::zeros(3, n);
    rbm[(0, 0)] = 1.0 / h;
    rbm[(1, np)] = 1.0 / h;
    // ((x2K - x2)/h, (x1 - x1K)/h) = (-m_01, m_10)
    rbm[(2, monomial_index(0, 1))] = -1.0;
    rbm[(2, np + monomial_index(1, 0))] = 1.0;

    let inner = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                s += a[i] * mvec[(i, j)] * b[j];
            }
        }
        s
    };
    // modified Gram-Schmidt in L2(K), rigid motions first
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    let orthogonalize = |mut v: Vec<f64>, accepted: &Vec<Vec<f64>>| -> Option<Vec<f64>> {
        let norm0 = inner(&v, &v).sqrt();
        for _ in 0..2 {
            for q in accepted.iter() {
                let c = inner(&v, q);
                for i in 0..n {
                    v[i] -= c * q[i];
                }
            }
        }
        let norm = inner(&v, &v).sqrt();
        if norm < 1e-10 * norm0 {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Some(v)
    };
    for r in 0..3 {
        let v: Vec<f64> = rbm.row(r).iter().copied().collect();
        let q = orthogonalize(v, &accepted).ok_or(BasisError::SingularGram)?;
        accepted.push(q);
    }
    let mut perp_rows = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        if let Some(q) = orthogonalize(e, &accepted) {
            accepted.push(q.clone());
            perp_rows.push(q);
        }
    }
    let expected = n - 3;
    if perp_rows.len() != expected {
        return Err(BasisError::Rank { expected, found: perp_rows.len() });
    }
    // unit RMS over the cell, comparable in size to the monomials
    let scale = area.sqrt();
    let mut perp = DMat::zeros(expected, n);
    for (r, row) in perp_rows.iter().enumerate() {
        for j in 0..n {
            perp[(r, j)] = row[j] * scale;
        }
    }
    Ok(RbmBases { rbm, perp })
}

/// Generators of `M_{k+1}^2` modulo rigid motions: every vector monomial except
/// `(1, 0)`, `(0, 1)` and `(0, m_10)`.
fn tilde_generators(k: usize) -> Vec<(usize, usize)> {
    let n1 = dim_p(k + 1);
    let mut g = Vec::with_capacity(2 * n1 - 3);
    for comp in 0..2 {
        for i in 0..n1 {
            if i == 0 || (comp == 1 && i == monomial_index(1, 0)) {
                continue;
            }
            g.push((comp, i));
        }
    }
    g
}

fn build_tilde(k: usize, params: &MaterialParams) -> TildeBasis {
    let gens = tilde_generators(k);
    let n1 = dim_p(k + 1);
    let np = dim_p(k);
    let mut generators = DMat::zeros(gens.len(), 2 * n1);
    let mut strains = DMat::zeros(gens.len(), 3 * np);
    let set = MonomialSet::new(Vec2::zeros(), 1.0, k + 1);
    for (r, &(comp, i)) in gens.iter().enumerate() {
        generators[(r, comp * n1 + i)] = 1.0;
        let (a, b) = set.exponents()[i];
        // eps of (m, 0): e11 = dx m, e12 = dy m / 2; of (0, m): e22 = dy m, e12 = dx m / 2
        if comp == 0 {
            if a > 0 {
                strains[(r, monomial_index(a - 1, b))] += a as f64;
            }
            if b > 0 {
                strains[(r, np + monomial_index(a, b - 1))] += 0.5 * b as f64;
            }
        } else {
            if b > 0 {
                strains[(r, 2 * np + monomial_index(a, b - 1))] += b as f64;
            }
            if a > 0 {
                strains[(r, np + monomial_index(a - 1, b))] += 0.5 * a as f64;
            }
        }
    }
    // the 1/h chain factor is absorbed into the generator scaling: the tensor rows
    // are C eps(h m), which spans the same space
    let mut tensors = DMat::zeros(gens.len(), 3 * np);
    for r in 0..gens.len() {
        for i in 0..np {
            let e11 = strains[(r, i)];
            let e12 = strains[(r, np + i)];
            let e22 = strains[(r, 2 * np + i)];
            let t = params.apply_c(crate::model::SymTensor2::new(e11, e12, e22));
            tensors[(r, i)] = t.t11;
            tensors[(r, np + i)] = t.t12;
            tensors[(r, 2 * np + i)] = t.t22;
        }
    }
    TildeBasis { generators, tensors, strains }
}

impl TildeBasis {
    pub fn len(&self) -> usize {
        self.generators.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluates a `[t11, t12, t22]` coefficient row at a point given the monomial values.
pub fn eval_sym_tensor(row: &[f64], np: usize, mono_values: &[f64]) -> [f64; 3] {
    let mut t = [0.0; 3];
    for c in 0..3 {
        t[c] = (0..np).map(|i| row[c * np + i] * mono_values[i]).sum();
    }
    t
}

/// Evaluates a vector polynomial `[c1, c2]` (each of length `np`) given monomial values.
pub fn eval_vector(coef: &[f64], np: usize, mono_values: &[f64]) -> Vec2 {
    let x: f64 = (0..np).map(|i| coef[i] * mono_values[i]).sum();
    let y: f64 = (0..np).map(|i| coef[np + i] * mono_values[i]).sum();
    Vec2::new(x, y)
}

#[allow(unused)]
pub(crate) fn solve_dense(a: &DMat, b: &DMat) -> Result<DMat, BasisError> {
    dense::solve(a, b).ok_or(BasisError::SingularGram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(side: f64, shift: Vec2) -> Vec<Vec2> {
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|(x, y)| Vec2::new(*x, *y) * side + shift)
            .collect()
    }

    fn unit_params() -> MaterialParams {
        MaterialParams::unit()
    }

    fn rank(m: &DMat, tol: f64) -> usize {
        let sv = m.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter().filter(|s| **s > tol * max).count()
    }

    #[test]
    fn monomial_values() {
        let set = MonomialSet::new(Vec2::new(0.3, 0.4), 0.5, 3);
        let i00 = monomial_index(0, 0);
        assert_eq!(set.eval(i00, Vec2::new(7.0, -2.0)), 1.0);
        assert_eq!(set.gradient(i00, Vec2::new(7.0, -2.0)), Vec2::zeros());
        assert_eq!(set.eval(monomial_index(1, 0), set.center), 0.0);
        let x = set.center + Vec2::new(1.0, 1.0) * set.h;
        let i21 = monomial_index(2, 1);
        assert_relative_eq!(set.eval(i21, x), 1.0, epsilon = 1e-14);
        assert_relative_eq!(set.gradient(i21, x), Vec2::new(2.0, 1.0) / set.h, epsilon = 1e-13);
    }

    #[test]
    fn index_ordering() {
        let set = MonomialSet::new(Vec2::zeros(), 1.0, 4);
        for (i, &(a, b)) in set.exponents().iter().enumerate() {
            assert_eq!(monomial_index(a, b), i);
        }
        assert_eq!(set.dim(), 15);
    }

    #[test]
    fn dimensions_on_unit_square_k1() {
        let cb = CellBasis::new(CellFrame::from_polygon(&square(1.0, Vec2::zeros())).unwrap(), 1, &unit_params())
            .unwrap();
        assert_eq!(cb.np(), 3);
        assert_eq!(cb.decomposition.grad_km1.nrows(), 2);
        assert_eq!(cb.decomposition.perp_k.nrows(), 1);
        assert_eq!(cb.rbm.perp.nrows(), 3);
        assert_eq!(cb.tilde.len(), 9);
    }

    #[test]
    fn tilde_dimension_k2() {
        let cb = CellBasis::new(CellFrame::from_polygon(&square(1.0, Vec2::zeros())).unwrap(), 2, &unit_params())
            .unwrap();
        assert_eq!(cb.tilde.len(), 17);
        // the tensors are linearly independent
        assert_eq!(rank(&cb.tilde.tensors, 1e-12), 17);
    }

    #[test]
    fn decomposition_spans_vector_polynomials() {
        for k in 1..=3 {
            let grad = grad_rows(k);
            let perp = perp_rows(k);
            assert_eq!(grad.nrows(), dim_p(k + 1) - 1);
            assert_eq!(perp.nrows(), dim_p_below(k));
            let mut stacked = DMat::zeros(grad.nrows() + perp.nrows(), 2 * dim_p(k));
            stacked.view_mut((0, 0), grad.shape()).copy_from(&grad);
            stacked.view_mut((grad.nrows(), 0), perp.shape()).copy_from(&perp);
            let cb = CellBasis::new(
                CellFrame::from_polygon(&square(0.7, Vec2::new(0.2, -0.1))).unwrap(),
                k,
                &unit_params(),
            )
            .unwrap();
            let g = &stacked * cb.vector_gram_k() * stacked.transpose();
            assert_eq!(rank(&g, 1e-12), 2 * dim_p(k));
        }
    }

    #[test]
    fn rbm_complement_is_orthogonal() {
        let hex: Vec<Vec2> = (0..6)
            .map(|i| {
                let t = std::f64::consts::PI / 3.0 * i as f64 + 0.2;
                Vec2::new(1.3 * t.cos() + 0.4, t.sin() - 0.2)
            })
            .collect();
        for k in 1..=2 {
            let cb = CellBasis::new(CellFrame::from_polygon(&hex).unwrap(), k, &unit_params()).unwrap();
            let m = cb.vector_gram_k();
            let cross = &cb.rbm.rbm * &m * cb.rbm.perp.transpose();
            let scale = (&cb.rbm.rbm * &m * cb.rbm.rbm.transpose()).norm();
            assert!(cross.amax() <= 1e-12 * scale, "k={k}: {}", cross.amax());
            assert_eq!(cb.rbm.perp.nrows(), 2 * dim_p(k) - 3);
        }
    }

    #[test]
    fn gram_of_constant_on_unit_square() {
        let rule = polygon_quadrature(&square(1.0, Vec2::zeros()), 3).unwrap();
        let one = SampledBasis::sample(&rule, 1, 1, |_, v| v[0] = 1.0);
        let g = gram_matrix(&one, &one, &rule).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0, epsilon = 1e-14);
        let two = SampledBasis::sample(&rule, 1, 2, |_, v| v.fill(1.0));
        assert!(matches!(gram_matrix(&one, &two, &rule), Err(BasisError::RankMismatch(1, 2))));
    }

    #[test]
    fn gram_of_m1_is_spd() {
        let cb = CellBasis::new(CellFrame::from_polygon(&square(1.0, Vec2::zeros())).unwrap(), 1, &unit_params())
            .unwrap();
        let g = cb.gram_k();
        let eig = g.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|e| *e > 0.0));
        assert!(eig.max() / eig.min() < 1e3);
    }

    #[test]
    fn gram_on_triangle_matches_closed_form() {
        // triangle (0,0),(1,0),(0,1); monomials centred at origin with h = 1
        let tri = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let rule = polygon_quadrature(&tri, 6).unwrap();
        let set = MonomialSet::new(Vec2::zeros(), 1.0, 3);
        let n = set.dim();
        let basis = SampledBasis::sample(&rule, n, 1, |p, v| v.copy_from_slice(&set.eval_all(p)));
        let g = gram_matrix(&basis, &basis, &rule).unwrap();
        let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
        for (i, &(a1, b1)) in set.exponents().iter().enumerate() {
            for (j, &(a2, b2)) in set.exponents().iter().enumerate() {
                let (a, b) = (a1 + a2, b1 + b2);
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert_relative_eq!(g[(i, j)], exact, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn basis_values_are_invariant_under_similarity() {
        let base = square(1.0, Vec2::zeros());
        let moved: Vec<Vec2> = base.iter().map(|p| p * 2.0 + Vec2::new(0.3, -1.1)).collect();
        let f1 = CellFrame::from_polygon(&base).unwrap();
        let f2 = CellFrame::from_polygon(&moved).unwrap();
        let s1 = MonomialSet::new(f1.center(), f1.h(), 3);
        let s2 = MonomialSet::new(f2.center(), f2.h(), 3);
        for p in [Vec2::new(0.1, 0.2), Vec2::new(0.9, 0.45), Vec2::new(0.5, 0.5)] {
            let q = p * 2.0 + Vec2::new(0.3, -1.1);
            let (v1, v2) = (s1.eval_all(p), s2.eval_all(q));
            for (a, b) in v1.iter().zip(&v2) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn derivative_coefficients_of_cubic() {
        // p = 3 x^2 y + 2 y^3 - x
        let mut c = vec![0.0; dim_p(3)];
        c[monomial_index(2, 1)] = 3.0;
        c[monomial_index(0, 3)] = 2.0;
        c[monomial_index(1, 0)] = -1.0;
        let dx = derivative_coefficients(&c, 3, 0);
        let dy = derivative_coefficients(&c, 3, 1);
        assert_eq!(dx[monomial_index(1, 1)], 6.0);
        assert_eq!(dx[monomial_index(0, 0)], -1.0);
        assert_eq!(dy[monomial_index(2, 0)], 3.0);
        assert_eq!(dy[monomial_index(0, 2)], 6.0);
    }
}
