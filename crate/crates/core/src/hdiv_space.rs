//! Local mixed H(div) flux space (Darcy and diffusive fluxes).
//!
//! Local DoFs, in cell-outward orientation:
//!
//! * per edge: `xi . n` at the `k + 1` Gauss–Lobatto points, ordered along the
//!   global edge tangent; index `e * (k+1) + i`;
//! * per cell: `int_K xi . grad m` for non-constant `m in M_k`, then
//!   `(1/h_K) int_K xi . m_perp m_b` for `m_b in M_{k-1}`.

use nalgebra::Matrix2;

use crate::dense;
use crate::model::MaterialParams;
use crate::polybasis::{
    centered_gauss, data_edge_points, data_rule_degree, dim_p, dim_p_below, edge_points, eval_vector,
    gauss_lobatto, grad_rows, perp_rows, polygon_quadrature, powers, BasisError, CellBasis,
};
use crate::{DMat, DVec, Vec2};

/// Number of local flux DoFs on a cell with `n_edges` edges.
pub const fn hdiv_dof_count(k: usize, n_edges: usize) -> usize {
    (k + 1) * n_edges + dim_p(k) - 1 + dim_p_below(k)
}

/// Gauss–Lobatto nodes on `r in [-1/2, 1/2]`.
pub fn lobatto_nodes(k: usize) -> Vec<f64> {
    gauss_lobatto(k + 1).into_iter().map(|t| t - 0.5).collect()
}

fn lagrange(nodes: &[f64], r: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| {
            nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, xj)| (r - xj) / (nodes[i] - xj))
                .product()
        })
        .collect()
}

/// Local operators of the flux space on one cell.
#[derive(Debug, Clone)]
pub struct HdivSpace {
    pub k: usize,
    pub n_edges: usize,
    pub ndof: usize,
    nodes: Vec<f64>,
    /// `div xi` as `M_k` coefficients (`np x ndof`).
    pub div: DMat,
    /// `Pi^0 xi` as vector `M_k` coefficients (`2 np x ndof`).
    pub proj: DMat,
    /// DoFs of a vector `M_k` polynomial (`ndof x 2 np`).
    pub dof_of_poly: DMat,
    /// `(I - D P)^T (I - D P)`, the unscaled DOFI-DOFI stabilization.
    pub stab: DMat,
}

impl HdivSpace {
    pub fn edge_dof(&self, e: usize, i: usize) -> usize {
        e * (self.k + 1) + i
    }

    pub fn interior_offset(&self) -> usize {
        (self.k + 1) * self.n_edges
    }

    /// Offset of the `m_perp` moments.
    pub fn perp_offset(&self) -> usize {
        self.interior_offset() + dim_p(self.k) - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights `w` with `(xi . n_out)(r) = sum_i w_i v_i` on an edge.
    pub fn flux_shape(&self, r: f64) -> Vec<f64> {
        lagrange(&self.nodes, r)
    }

    pub fn new(cb: &CellBasis) -> Result<Self, BasisError> {
        let k = cb.k;
        let np = dim_p(k);
        let n1 = dim_p(k + 1);
        let n_edges = cb.frame.edges.len();
        let ndof = hdiv_dof_count(k, n_edges);
        let mut space = HdivSpace {
            k,
            n_edges,
            ndof,
            nodes: lobatto_nodes(k),
            div: DMat::zeros(0, 0),
            proj: DMat::zeros(0, 0),
            dof_of_poly: DMat::zeros(0, 0),
            stab: DMat::zeros(0, 0),
        };
        let h = cb.h();
        let off = space.interior_offset();
        let poff = space.perp_offset();

        // int_{dK} xi.n m_a for m_a in M_{k+1}
        let bnd = space.boundary_moments(cb, n1);
        let mut rhs = bnd.rows(0, np).into_owned();
        for a in 1..np {
            rhs[(a, off + a - 1)] -= 1.0;
        }
        let ms = cb.gram_k();
        space.div = dense::solve(&ms, &rhs).ok_or(BasisError::SingularGram)?;

        let mvec = cb.vector_gram_k();
        let gk = grad_rows(k);
        let pk = perp_rows(k);
        let nw = gk.nrows() + pk.nrows();
        let mut w = DMat::zeros(nw, 2 * np);
        w.view_mut((0, 0), gk.shape()).copy_from(&gk);
        w.view_mut((gk.nrows(), 0), pk.shape()).copy_from(&pk);
        let mut moments = DMat::zeros(nw, ndof);
        // int xi . h grad m_a = h (int_{dK} xi.n m_a - int div xi m_a)
        let cross = cb.gram.view((0, 0), (np, n1)).into_owned();
        let vol = cross.transpose() * &space.div;
        for a in 1..n1 {
            for d in 0..ndof {
                moments[(a - 1, d)] = h * (bnd[(a, d)] - vol[(a, d)]);
            }
        }
        for b in 0..pk.nrows() {
            moments[(gk.nrows() + b, poff + b)] = h;
        }
        space.proj = dense::solve(&(&w * &mvec), &moments).ok_or(BasisError::SingularGram)?;

        // DoFs of vector polynomials
        let mut dp = DMat::zeros(ndof, 2 * np);
        for (e, edge) in cb.frame.edges.iter().enumerate() {
            for (i, r) in space.nodes.iter().enumerate() {
                let vals = cb.mono.eval_all(edge.point(*r));
                for a in 0..np {
                    dp[(space.edge_dof(e, i), a)] = vals[a] * edge.normal.x;
                    dp[(space.edge_dof(e, i), np + a)] = vals[a] * edge.normal.y;
                }
            }
        }
        let gkm1 = embed_rows(&grad_rows(k - 1), dim_p(k - 1), np);
        let gm = &gkm1 * &mvec / h;
        dp.view_mut((off, 0), gm.shape()).copy_from(&gm);
        let pm = &pk * &mvec / h;
        dp.view_mut((poff, 0), pm.shape()).copy_from(&pm);
        let resid = DMat::identity(ndof, ndof) - &dp * &space.proj;
        space.stab = dense::symmetrize(&(resid.transpose() * resid));
        space.dof_of_poly = dp;
        Ok(space)
    }

    /// `int_{dK} (xi . n_out) m_a` for the first `n` monomials of `M_{k+1}`.
    fn boundary_moments(&self, cb: &CellBasis, n: usize) -> DMat {
        let (rs, ws) = centered_gauss(edge_points(self.k));
        let mut out = DMat::zeros(n, self.ndof);
        for (e, edge) in cb.frame.edges.iter().enumerate() {
            for (r, w) in rs.iter().zip(&ws) {
                let vals = cb.mono.eval_all(edge.point(*r));
                let shape = self.flux_shape(*r);
                for a in 0..n {
                    for (i, s) in shape.iter().enumerate() {
                        out[(a, self.edge_dof(e, i))] += w * edge.length * vals[a] * s;
                    }
                }
            }
        }
        out
    }

    pub fn divergence(&self, dofs: &DVec) -> DVec {
        &self.div * dofs
    }

    pub fn project(&self, dofs: &DVec) -> DVec {
        &self.proj * dofs
    }

    /// Weighted vector mass `int w(x) m_i . m_j` with `w` sampled at the cell rule.
    fn weighted_mass(cb: &CellBasis, weight: impl Fn(usize, Vec2) -> Matrix2<f64>) -> DMat {
        let np = dim_p(cb.k);
        let mut m = DMat::zeros(2 * np, 2 * np);
        for (q, (x, w)) in cb.rule.iter().enumerate() {
            let k = weight(q, x);
            let v = &cb.values[q];
            for c in 0..2 {
                for d in 0..2 {
                    let f = w * k[(c, d)];
                    if f == 0.0 {
                        continue;
                    }
                    for a in 0..np {
                        for b in 0..np {
                            m[(c * np + a, d * np + b)] += f * v[a] * v[b];
                        }
                    }
                }
            }
        }
        dense::symmetrize(&m)
    }

    /// `(kappa^-1 Pi^0 z, Pi^0 w)`.
    pub fn consistency_c(&self, cb: &CellBasis, params: &MaterialParams) -> DMat {
        let kinv = params.kappa_inv();
        let m = Self::weighted_mass(cb, |_, _| kinv);
        dense::symmetrize(&(self.proj.transpose() * m * &self.proj))
    }

    /// Darcy block `C_h` with DOFI-DOFI stabilization scaled by `||int_K kappa^-1||_F`.
    pub fn local_c(&self, cb: &CellBasis, params: &MaterialParams) -> DMat {
        let scale = cb.area() * params.kappa_inv().norm();
        self.consistency_c(cb, params) + &self.stab * scale
    }

    /// `rho^-1(tr sigma_hat)` at the cell rule points, from `M_k` trace coefficients.
    pub fn rho_inv_samples(cb: &CellBasis, params: &MaterialParams, trace_coef: &[f64]) -> Vec<f64> {
        let np = dim_p(cb.k);
        cb.values
            .iter()
            .map(|v| {
                let t: f64 = (0..np).map(|a| trace_coef[a] * v[a]).sum();
                params.rho_inv(t)
            })
            .collect()
    }

    /// `(rho^-1 Pi^0 zeta, Pi^0 xi)`.
    pub fn consistency_a(&self, cb: &CellBasis, rho_inv: &[f64]) -> DMat {
        let m = Self::weighted_mass(cb, |q, _| Matrix2::identity() * rho_inv[q]);
        dense::symmetrize(&(self.proj.transpose() * m * &self.proj))
    }

    /// Diffusion block `a_h` for the stress trace `tr Pi^C sigma` given in `M_k`
    /// coefficients; stabilization scaled by `|int_K rho^-1|`.
    pub fn local_a(&self, cb: &CellBasis, params: &MaterialParams, trace_coef: &[f64]) -> DMat {
        let rho_inv = Self::rho_inv_samples(cb, params, trace_coef);
        let scale: f64 = cb.rule.weights.iter().zip(&rho_inv).map(|(w, r)| w * r).sum::<f64>().abs();
        self.consistency_a(cb, &rho_inv) + &self.stab * scale
    }

    /// `b(xi, psi) = -(div xi, psi)` with rows over `psi in M_k`.
    pub fn local_b(&self, cb: &CellBasis) -> DMat {
        -(cb.gram_k() * &self.div)
    }

    /// `int g (xi . n_out)` over the listed local edges.
    pub fn flux_load(&self, cb: &CellBasis, edges: &[usize], g: &dyn Fn(Vec2) -> f64) -> DVec {
        let (rs, ws) = centered_gauss(data_edge_points(self.k));
        let mut out = DVec::zeros(self.ndof);
        for &e in edges {
            let edge = &cb.frame.edges[e];
            for (r, w) in rs.iter().zip(&ws) {
                let gv = g(edge.point(*r));
                for (i, s) in self.flux_shape(*r).iter().enumerate() {
                    out[self.edge_dof(e, i)] += w * edge.length * gv * s;
                }
            }
        }
        out
    }

    /// Edge DoFs of `xi` on local edge `e`: Gauss–Lobatto values of the
    /// `L^2(f)` projection of `xi . n_out` onto `P_k(f)` (equal to the point
    /// values whenever `xi . n` is a polynomial of degree `<= k` on the edge).
    pub fn interpolate_edge(&self, cb: &CellBasis, e: usize, xi: &dyn Fn(Vec2) -> Vec2) -> Vec<f64> {
        let edge = &cb.frame.edges[e];
        let (rs, ws) = centered_gauss(data_edge_points(self.k));
        let mut mom = DVec::zeros(self.k + 1);
        for (r, w) in rs.iter().zip(&ws) {
            let f = xi(edge.point(*r)).dot(&edge.normal);
            for (j, p) in powers(*r, self.k).iter().enumerate() {
                mom[j] += w * f * p;
            }
        }
        let e_mat = DMat::from_fn(self.k + 1, self.k + 1, |i, j| {
            let p = i + j;
            if p % 2 == 1 {
                0.0
            } else {
                2.0 * 0.5f64.powi(p as i32 + 1) / (p as f64 + 1.0)
            }
        });
        let coef = dense::solve_vec(&e_mat, &mom).expect("edge moment matrix is SPD");
        self.nodes.iter().map(|r| powers(*r, self.k).iter().zip(coef.iter()).map(|(a, b)| a * b).sum()).collect()
    }

    /// Edge DoFs by plain point evaluation of `xi . n_out` at the Gauss–Lobatto points.
    pub fn nodal_edge_values(&self, cb: &CellBasis, e: usize, xi: &dyn Fn(Vec2) -> Vec2) -> Vec<f64> {
        let edge = &cb.frame.edges[e];
        self.nodes.iter().map(|r| xi(edge.point(*r)).dot(&edge.normal)).collect()
    }

    /// DoF interpolant of a point-evaluable flux.
    pub fn interpolate(&self, cb: &CellBasis, xi: &dyn Fn(Vec2) -> Vec2) -> Result<DVec, BasisError> {
        let mut dofs = DVec::zeros(self.ndof);
        for e in 0..self.n_edges {
            for (i, v) in self.interpolate_edge(cb, e, xi).into_iter().enumerate() {
                dofs[self.edge_dof(e, i)] = v;
            }
        }
        self.fill_interior(cb, xi, &mut dofs)?;
        Ok(dofs)
    }

    fn fill_interior(&self, cb: &CellBasis, xi: &dyn Fn(Vec2) -> Vec2, dofs: &mut DVec) -> Result<(), BasisError> {
        let k = self.k;
        let np = dim_p(k);
        let h = cb.h();
        let rule = polygon_quadrature(&cb.frame.geom.vertices, data_rule_degree(k))?;
        let g = grad_rows(k - 1);
        let npm1 = dim_p(k - 1);
        let pk = perp_rows(k);
        let off = self.interior_offset();
        let poff = self.perp_offset();
        for (x, w) in rule.iter() {
            let v = xi(x);
            let vals = cb.mono.eval_all(x);
            for a in 0..g.nrows() {
                let gv = eval_vector(g.row(a).transpose().as_slice(), npm1, &vals);
                dofs[off + a] += w * v.dot(&gv) / h;
            }
            for b in 0..pk.nrows() {
                let pv = eval_vector(pk.row(b).transpose().as_slice(), np, &vals);
                dofs[poff + b] += w * v.dot(&pv) / h;
            }
        }
        Ok(())
    }
}

/// Re-lays rows of vector `M_from` coefficients into vector `M_to` (`from <= to`).
fn embed_rows(rows: &DMat, n_from: usize, n_to: usize) -> DMat {
    let mut out = DMat::zeros(rows.nrows(), 2 * n_to);
    for r in 0..rows.nrows() {
        for c in 0..2 {
            for a in 0..n_from {
                out[(r, c * n_to + a)] = rows[(r, c * n_from + a)];
            }
        }
    }
    out
}
