//! Local Hellinger–Reissner stress space.
//!
//! Local DoFs, in cell-outward orientation:
//!
//! * per edge `e`, component `c` and `j = 0..=k`: `(1/h_f) int_f (tau n)_c r^j`,
//!   `r = s / h_f in [-1/2, 1/2]` measured from the midpoint along the global
//!   edge tangent; index `e * 2(k+1) + c * (k+1) + j`;
//! * per cell: `(1/h_K) int_K div tau . q` for `q` in the RBM complement.
//!
//! The global DoF of an edge moment is the local one times the cell's edge sign.

use crate::dense;
use crate::model::{MaterialParams, SymTensor2};
use crate::polybasis::{
    centered_gauss, data_edge_points, data_rule_degree, derivative_coefficients, dim_p, edge_points,
    eval_vector, polygon_quadrature, powers, BasisError, CellBasis,
};
use crate::{DMat, DVec, Vec2};

/// Number of local stress DoFs on a cell with `n_edges` edges.
pub const fn hr_dof_count(k: usize, n_edges: usize) -> usize {
    2 * (k + 1) * n_edges + 2 * dim_p(k) - 3
}

/// Inverse of the moment matrix `E_ij = int_{-1/2}^{1/2} r^(i+j) dr`.
fn edge_moment_inverse(k: usize) -> DMat {
    let e = DMat::from_fn(k + 1, k + 1, |i, j| {
        let p = i + j;
        if p % 2 == 1 {
            0.0
        } else {
            2.0 * 0.5f64.powi(p as i32 + 1) / (p as f64 + 1.0)
        }
    });
    e.try_inverse().expect("edge moment matrix is SPD")
}

/// Local operators of the stress space on one cell.
#[derive(Debug, Clone)]
pub struct HrSpace {
    pub k: usize,
    pub n_edges: usize,
    pub ndof: usize,
    einv: DMat,
    /// `div tau` as vector `M_k` coefficients (`2 np x ndof`).
    pub div: DMat,
    /// `Pi^C tau` as coefficients over the elasticity-image basis.
    pub proj: DMat,
    /// `G_ij = int C^-1 mt_i : mt_j`.
    pub energy: DMat,
    /// `tr Pi^C tau` as `M_k` coefficients.
    pub trace: DMat,
    /// Traction stabilization, already composed with `I - Pi^C`.
    pub stab: DMat,
}

impl HrSpace {
    pub fn edge_dof(&self, e: usize, c: usize, j: usize) -> usize {
        e * 2 * (self.k + 1) + c * (self.k + 1) + j
    }

    pub fn interior_offset(&self) -> usize {
        2 * (self.k + 1) * self.n_edges
    }

    pub fn n_interior(&self) -> usize {
        2 * dim_p(self.k) - 3
    }

    /// Weights `w` with `(tau n)_c(r) = sum_j w_j d_{c,j}`.
    pub fn traction_shape(&self, r: f64) -> Vec<f64> {
        let p = powers(r, self.k);
        (0..=self.k).map(|i| (0..=self.k).map(|j| self.einv[(j, i)] * p[j]).sum()).collect()
    }

    /// Builds divergence, projector and stabilization for the cell.
    pub fn new(cb: &CellBasis, params: &MaterialParams) -> Result<Self, BasisError> {
        let k = cb.k;
        let np = dim_p(k);
        let n_edges = cb.frame.edges.len();
        let ndof = hr_dof_count(k, n_edges);
        let mut space = HrSpace {
            k,
            n_edges,
            ndof,
            einv: edge_moment_inverse(k),
            div: DMat::zeros(0, 0),
            proj: DMat::zeros(0, 0),
            energy: DMat::zeros(0, 0),
            trace: DMat::zeros(0, 0),
            stab: DMat::zeros(0, 0),
        };
        let h = cb.h();
        let mvec = cb.vector_gram_k();

        // divergence from rigid-motion boundary moments and interior moments
        let mut q = DMat::zeros(2 * np, 2 * np);
        q.view_mut((0, 0), (3, 2 * np)).copy_from(&cb.rbm.rbm);
        q.view_mut((3, 0), (2 * np - 3, 2 * np)).copy_from(&cb.rbm.perp);
        let mut rhs = DMat::zeros(2 * np, ndof);
        let bnd = space.boundary_moments(cb, &cb.rbm.rbm, k);
        rhs.view_mut((0, 0), (3, ndof)).copy_from(&bnd);
        let off = space.interior_offset();
        for i in 0..space.n_interior() {
            rhs[(3 + i, off + i)] = h;
        }
        space.div = dense::solve(&(&q * &mvec), &rhs).ok_or(BasisError::SingularGram)?;

        // C-energy projection
        let n1 = dim_p(k + 1);
        let mut tmass = DMat::zeros(3 * np, 3 * np);
        let ms = cb.gram_k();
        for (c, w) in [(0, 1.0), (1, 2.0), (2, 1.0)] {
            tmass.view_mut((c * np, c * np), (np, np)).copy_from(&(&ms * w));
        }
        let tilde = &cb.tilde;
        let energy = dense::symmetrize(&(&tilde.strains * &tmass * tilde.tensors.transpose()));
        let cross = cb.gram.view((0, 0), (n1, np)).into_owned();
        let mut w = DMat::zeros(tilde.len(), 2 * np);
        for c in 0..2 {
            let g = tilde.generators.columns(c * n1, n1) * &cross;
            w.columns_mut(c * np, np).copy_from(&g);
        }
        let bgen = space.boundary_moments(cb, &tilde.generators, k + 1);
        let b = (bgen - w * &space.div) * h;
        space.proj = dense::solve(&energy, &b).ok_or(BasisError::SingularGram)?;
        space.energy = energy;

        let mut ttr = DMat::zeros(np, tilde.len());
        for i in 0..tilde.len() {
            for a in 0..np {
                ttr[(a, i)] = tilde.tensors[(i, a)] + tilde.tensors[(i, 2 * np + a)];
            }
        }
        space.trace = ttr * &space.proj;
        space.stab = space.build_stab(cb, params);
        Ok(space)
    }

    /// `int_{dK} (tau n_out) . m` for vector polynomials `m` given as rows in
    /// vector `M_deg` coefficients (`deg <= k + 1`).
    fn boundary_moments(&self, cb: &CellBasis, rows: &DMat, deg: usize) -> DMat {
        let npd = dim_p(deg);
        let (rs, ws) = centered_gauss(edge_points(self.k));
        let mut out = DMat::zeros(rows.nrows(), self.ndof);
        for (e, edge) in cb.frame.edges.iter().enumerate() {
            for (r, w) in rs.iter().zip(&ws) {
                let vals = cb.mono.eval_all(edge.point(*r));
                let shape = self.traction_shape(*r);
                for row in 0..rows.nrows() {
                    let m = eval_vector(rows.row(row).transpose().as_slice(), npd, &vals);
                    for c in 0..2 {
                        let f = w * edge.length * m[c];
                        for (j, s) in shape.iter().enumerate() {
                            out[(row, self.edge_dof(e, c, j))] += f * s;
                        }
                    }
                }
            }
        }
        out
    }

    /// Values of the elasticity-image basis at `x`.
    pub fn tilde_values(cb: &CellBasis, x: Vec2) -> Vec<SymTensor2> {
        let np = dim_p(cb.k);
        let vals = cb.mono.eval_all(x);
        (0..cb.tilde.len())
            .map(|i| {
                let row = cb.tilde.tensors.row(i);
                let t = |c: usize| (0..np).map(|a| row[c * np + a] * vals[a]).sum::<f64>();
                SymTensor2::new(t(0), t(1), t(2))
            })
            .collect()
    }

    /// Rows mapping DoFs to the residual traction `(tau - Pi^C tau) n_out` at
    /// edge point `r` (2 x ndof).
    fn residual_traction(&self, cb: &CellBasis, e: usize, r: f64) -> DMat {
        let edge = &cb.frame.edges[e];
        let mut out = DMat::zeros(2, self.ndof);
        for (j, s) in self.traction_shape(r).iter().enumerate() {
            out[(0, self.edge_dof(e, 0, j))] += s;
            out[(1, self.edge_dof(e, 1, j))] += s;
        }
        let tv = Self::tilde_values(cb, edge.point(r));
        for (i, t) in tv.iter().enumerate() {
            let tn = t.apply(edge.normal);
            for d in 0..self.ndof {
                out[(0, d)] -= tn.x * self.proj[(i, d)];
                out[(1, d)] -= tn.y * self.proj[(i, d)];
            }
        }
        out
    }

    /// Prefactor `h_K w / 2` of the traction stabilization.
    pub fn stab_scale(cb: &CellBasis, params: &MaterialParams) -> f64 {
        cb.h() * params.stress_stab_weight() / 2.0
    }

    fn build_stab(&self, cb: &CellBasis, params: &MaterialParams) -> DMat {
        let scale = Self::stab_scale(cb, params);
        let (rs, ws) = centered_gauss(edge_points(self.k));
        let mut s = DMat::zeros(self.ndof, self.ndof);
        for (e, edge) in cb.frame.edges.iter().enumerate() {
            for (r, w) in rs.iter().zip(&ws) {
                let rt = self.residual_traction(cb, e, *r);
                s += rt.transpose() * &rt * (scale * w * edge.length);
            }
        }
        dense::symmetrize(&s)
    }

    /// Coefficients of `div tau` in vector `M_k`.
    pub fn divergence(&self, dofs: &DVec) -> DVec {
        &self.div * dofs
    }

    /// Coefficients of `Pi^C tau` over the elasticity-image basis.
    pub fn project(&self, dofs: &DVec) -> DVec {
        &self.proj * dofs
    }

    /// Evaluates `Pi^C tau` at `x` from projected coefficients.
    pub fn eval_projection(cb: &CellBasis, coef: &[f64], x: Vec2) -> SymTensor2 {
        Self::tilde_values(cb, x)
            .iter()
            .zip(coef)
            .fold(SymTensor2::default(), |acc, (t, c)| acc.add(&t.scale(*c)))
    }

    /// Local `A_h` over `(tau, q)`: stress DoFs followed by `np` pressure coefficients.
    pub fn local_a(&self, cb: &CellBasis, params: &MaterialParams) -> DMat {
        let np = dim_p(self.k);
        let n = self.ndof;
        let ms = cb.gram_k();
        let ls = params.lame_sum();
        let mut a = DMat::zeros(n + np, n + np);
        let ass = self.proj.transpose() * &self.energy * &self.proj + &self.stab;
        a.view_mut((0, 0), (n, n)).copy_from(&dense::symmetrize(&ass));
        let coupling = &ms * &self.trace * (params.alpha / ls);
        a.view_mut((n, 0), (np, n)).copy_from(&coupling);
        a.view_mut((0, n), (n, np)).copy_from(&coupling.transpose());
        let pp = &ms * (params.s0 + 2.0 * params.alpha * params.alpha / ls);
        a.view_mut((n, n), (np, np)).copy_from(&pp);
        a
    }

    /// `(v, div tau)` with rows over vector `M_k` coefficients of `v`.
    pub fn local_b_div(&self, cb: &CellBasis) -> DMat {
        cb.vector_gram_k() * &self.div
    }

    /// `D_h(psi, (tau, q))` with rows over `(tau, q)` and columns over `psi` in `M_k`.
    pub fn local_d(&self, cb: &CellBasis, params: &MaterialParams) -> DMat {
        let np = dim_p(self.k);
        let n = self.ndof;
        let ms = cb.gram_k();
        let ls = params.lame_sum();
        let mut d = DMat::zeros(n + np, np);
        let st = (&ms * &self.trace).transpose() * (params.beta / ls);
        d.view_mut((0, 0), (n, np)).copy_from(&st);
        let pq = &ms * (2.0 * params.alpha * params.beta / ls);
        d.view_mut((n, 0), (np, np)).copy_from(&pq);
        d
    }

    /// `int_{dK} g . (tau n_out)` for a point-evaluable `g`, over stress DoFs.
    pub fn traction_load(&self, cb: &CellBasis, edges: &[usize], g: &dyn Fn(Vec2) -> Vec2) -> DVec {
        let (rs, ws) = centered_gauss(data_edge_points(self.k));
        let mut out = DVec::zeros(self.ndof);
        for &e in edges {
            let edge = &cb.frame.edges[e];
            for (r, w) in rs.iter().zip(&ws) {
                let gv = g(edge.point(*r));
                for (j, s) in self.traction_shape(*r).iter().enumerate() {
                    out[self.edge_dof(e, 0, j)] += w * edge.length * gv.x * s;
                    out[self.edge_dof(e, 1, j)] += w * edge.length * gv.y * s;
                }
            }
        }
        out
    }

    /// Edge moments of `sigma n_out` on local edge `e`.
    pub fn interpolate_edge(&self, cb: &CellBasis, e: usize, sigma: &dyn Fn(Vec2) -> SymTensor2) -> Vec<f64> {
        let edge = &cb.frame.edges[e];
        let (rs, ws) = centered_gauss(data_edge_points(self.k));
        let mut d = vec![0.0; 2 * (self.k + 1)];
        for (r, w) in rs.iter().zip(&ws) {
            let t = sigma(edge.point(*r)).apply(edge.normal);
            for (j, p) in powers(*r, self.k).iter().enumerate() {
                d[j] += w * t.x * p;
                d[self.k + 1 + j] += w * t.y * p;
            }
        }
        d
    }

    /// DoF interpolant. Interior moments use `div_sigma` when supplied and
    /// otherwise `-int sigma : eps(q) + int_{dK} (sigma n) . q`.
    pub fn interpolate(
        &self,
        cb: &CellBasis,
        sigma: &dyn Fn(Vec2) -> SymTensor2,
        div_sigma: Option<&dyn Fn(Vec2) -> Vec2>,
    ) -> Result<DVec, BasisError> {
        let mut dofs = DVec::zeros(self.ndof);
        for e in 0..self.n_edges {
            for (i, v) in self.interpolate_edge(cb, e, sigma).into_iter().enumerate() {
                dofs[e * 2 * (self.k + 1) + i] = v;
            }
        }
        let np = dim_p(self.k);
        let h = cb.h();
        let rule = polygon_quadrature(&cb.frame.geom.vertices, data_rule_degree(self.k))?;
        let perp = &cb.rbm.perp;
        let off = self.interior_offset();
        match div_sigma {
            Some(div) => {
                for (x, w) in rule.iter() {
                    let dv = div(x);
                    let vals = cb.mono.eval_all(x);
                    for i in 0..perp.nrows() {
                        let q = eval_vector(perp.row(i).transpose().as_slice(), np, &vals);
                        dofs[off + i] += w * dv.dot(&q) / h;
                    }
                }
            }
            None => {
                let d = |c: &[f64], dir| derivative_coefficients(c, self.k, dir);
                let strains: Vec<[Vec<f64>; 4]> = (0..perp.nrows())
                    .map(|i| {
                        let row: Vec<f64> = perp.row(i).iter().copied().collect();
                        let (q1, q2) = (&row[..np], &row[np..]);
                        [d(q1, 0), d(q1, 1), d(q2, 0), d(q2, 1)]
                    })
                    .collect();
                for (x, w) in rule.iter() {
                    let s = sigma(x);
                    let vals = cb.mono.eval_all(x);
                    let ev = |c: &[f64]| c.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / h;
                    for (i, [q1x, q1y, q2x, q2y]) in strains.iter().enumerate() {
                        let eps = SymTensor2::new(ev(q1x), 0.5 * (ev(q1y) + ev(q2x)), ev(q2y));
                        dofs[off + i] -= w * s.ddot(&eps) / h;
                    }
                }
                let (rs, ws) = centered_gauss(data_edge_points(self.k));
                for edge in &cb.frame.edges {
                    for (r, w) in rs.iter().zip(&ws) {
                        let x = edge.point(*r);
                        let t = sigma(x).apply(edge.normal);
                        let vals = cb.mono.eval_all(x);
                        for i in 0..perp.nrows() {
                            let q = eval_vector(perp.row(i).transpose().as_slice(), np, &vals);
                            dofs[off + i] += w * edge.length * t.dot(&q) / h;
                        }
                    }
                }
            }
        }
        Ok(dofs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StressStabilization;
    use crate::polybasis::CellFrame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hexagon() -> Vec<Vec2> {
        (0..6)
            .map(|i| {
                let t = std::f64::consts::PI / 3.0 * i as f64 + 0.3;
                Vec2::new(0.5 + 0.4 * t.cos() * (1.0 + 0.1 * i as f64), 0.4 + 0.3 * t.sin())
            })
            .collect()
    }

    fn square(side: f64) -> Vec<Vec2> {
        vec![Vec2::new(0.0, 0.0), Vec2::new(side, 0.0), Vec2::new(side, side), Vec2::new(0.0, side)]
    }

    fn params() -> MaterialParams {
        MaterialParams { mu: 1.3, lambda: 2.1, alpha: 0.7, beta: 0.4, s0: 0.5, ..MaterialParams::default() }
    }

    fn setup(pts: &[Vec2], k: usize, p: &MaterialParams) -> (CellBasis, HrSpace) {
        let cb = CellBasis::new(CellFrame::from_polygon(pts).unwrap(), k, p).unwrap();
        let hr = HrSpace::new(&cb, p).unwrap();
        (cb, hr)
    }

    /// `C eps(m)` for the quadratic `m = (a x^2 + b xy + c y^2, d x^2 + e xy + f y^2)`,
    /// plus its (constant) divergence.
    struct QuadStress {
        c: [f64; 6],
        p: MaterialParams,
    }

    impl QuadStress {
        fn sigma(&self, x: Vec2) -> SymTensor2 {
            let [a, b, c, d, e, f] = self.c;
            let e11 = 2.0 * a * x.x + b * x.y;
            let e22 = e * x.x + 2.0 * f * x.y;
            let e12 = 0.5 * (b * x.x + 2.0 * c * x.y + 2.0 * d * x.x + e * x.y);
            self.p.apply_c(SymTensor2::new(e11, e12, e22))
        }

        fn div(&self) -> Vec2 {
            let [a, b, c, d, e, f] = self.c;
            let (mu, la) = (self.p.mu, self.p.lambda);
            Vec2::new(
                4.0 * mu * a + la * (2.0 * a + e) + mu * (2.0 * c + e),
                mu * (b + 2.0 * d) + 4.0 * mu * f + la * (b + 2.0 * f),
            )
        }
    }

    fn random_dofs(n: usize, seed: u64) -> DVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dof_counts() {
        assert_eq!(hr_dof_count(1, 4), 19);
        assert_eq!(hr_dof_count(2, 3), 3 * 6 + 9);
    }

    #[test]
    fn constant_stress_has_zero_divergence() {
        let p = params();
        for k in 1..=2 {
            let (cb, hr) = setup(&hexagon(), k, &p);
            let s = SymTensor2::new(1.5, -0.3, 0.8);
            let dofs = hr.interpolate(&cb, &|_| s, Some(&|_| Vec2::zeros())).unwrap();
            assert!(hr.divergence(&dofs).amax() <= 1e-12);
            let coef = hr.project(&dofs);
            let back = HrSpace::eval_projection(&cb, coef.as_slice(), Vec2::new(0.5, 0.4));
            assert!((back.t11 - 1.5).abs() < 1e-12 && (back.t12 + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_quadratic_strain_field() {
        let p = params();
        let qs = QuadStress { c: [0.3, -1.1, 0.7, 0.25, 0.9, -0.4], p };
        let (cb, hr) = setup(&hexagon(), 1, &p);
        let dofs = hr.interpolate(&cb, &|x| qs.sigma(x), None).unwrap();
        let coef = hr.divergence(&dofs);
        let expected = qs.div();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = Vec2::new(rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.6));
            let got = eval_vector(coef.as_slice(), 3, &cb.mono.eval_all(x));
            assert!((got - expected).norm() <= 1e-11 * expected.norm(), "{got} vs {expected}");
        }
    }

    #[test]
    fn divergence_from_single_edge_traction() {
        let p = params();
        let (cb, hr) = setup(&hexagon(), 2, &p);
        let np = dim_p(2);
        let mut dofs = DVec::zeros(hr.ndof);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..2 * 3 {
            dofs[hr.edge_dof(2, 0, 0) + i] = rng.gen_range(-1.0..1.0);
        }
        let div = hr.divergence(&dofs);
        let lhs = &cb.rbm.rbm * cb.vector_gram_k() * &div;
        // direct edge integral of the traction polynomial against each rigid motion
        let edge = &cb.frame.edges[2];
        let (rs, ws) = centered_gauss(8);
        for r in 0..3 {
            let row: Vec<f64> = cb.rbm.rbm.row(r).iter().copied().collect();
            let mut acc = 0.0;
            for (t, w) in rs.iter().zip(&ws) {
                let shape = hr.traction_shape(*t);
                let tr = Vec2::new(
                    (0..3).map(|j| shape[j] * dofs[hr.edge_dof(2, 0, j)]).sum(),
                    (0..3).map(|j| shape[j] * dofs[hr.edge_dof(2, 1, j)]).sum(),
                );
                let rv = eval_vector(&row, np, &cb.mono.eval_all(edge.point(*t)));
                acc += w * edge.length * tr.dot(&rv);
            }
            assert!((lhs[r] - acc).abs() <= 1e-12 * (1.0 + acc.abs()));
        }
    }

    #[test]
    fn projection_reproduces_image_basis() {
        let p = params();
        for k in 1..=2 {
            let (cb, hr) = setup(&hexagon(), k, &p);
            for i in 0..cb.tilde.len() {
                let f = |x: Vec2| HrSpace::tilde_values(&cb, x)[i];
                let dofs = hr.interpolate(&cb, &f, None).unwrap();
                let c = hr.project(&dofs);
                let mut e = DVec::zeros(cb.tilde.len());
                e[i] = 1.0;
                assert!((c - e).amax() <= 1e-11, "k={k}, i={i}");
            }
        }
    }

    #[test]
    fn projection_orthogonality_by_quadrature() {
        let p = params();
        let (cb, hr) = setup(&hexagon(), 2, &p);
        let dofs = random_dofs(hr.ndof, 4);
        let c = hr.project(&dofs);
        let div = hr.divergence(&dofs);
        let np = dim_p(2);
        let n1 = dim_p(3);
        let h = cb.h();
        let rule = polygon_quadrature(&cb.frame.geom.vertices, 12).unwrap();
        let (rs, ws) = centered_gauss(10);
        for i in 0..cb.tilde.len() {
            let gen: Vec<f64> = cb.tilde.generators.row(i).iter().copied().collect();
            let mstar = |x: Vec2| eval_vector(&gen, n1, &cb.mono.eval_all(x)) * h;
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for (x, w) in rule.iter() {
                let pi = HrSpace::eval_projection(&cb, c.as_slice(), x);
                lhs += w * p.apply_cinv(pi).ddot(&HrSpace::tilde_values(&cb, x)[i]);
                rhs -= w * eval_vector(div.as_slice(), np, &cb.mono.eval_all(x)).dot(&mstar(x));
            }
            for (e, edge) in cb.frame.edges.iter().enumerate() {
                for (r, w) in rs.iter().zip(&ws) {
                    let shape = hr.traction_shape(*r);
                    let tr = Vec2::new(
                        (0..=2).map(|j| shape[j] * dofs[hr.edge_dof(e, 0, j)]).sum(),
                        (0..=2).map(|j| shape[j] * dofs[hr.edge_dof(e, 1, j)]).sum(),
                    );
                    rhs += w * edge.length * tr.dot(&mstar(edge.point(*r)));
                }
            }
            assert!((lhs - rhs).abs() <= 1e-12 * dofs.norm() * cb.tilde.tensors.amax(), "{lhs} {rhs}");
        }
    }

    #[test]
    fn local_a_symmetric_psd() {
        let p = params();
        for k in 1..=2 {
            let (cb, hr) = setup(&hexagon(), k, &p);
            let a = hr.local_a(&cb, &p);
            assert!(dense::asymmetry(&a) <= 1e-13);
            for s in 0..100 {
                let x = random_dofs(a.nrows(), s);
                assert!(x.dot(&(&a * &x)) >= -1e-12 * x.norm_squared());
            }
        }
    }

    #[test]
    fn local_a_consistency_on_polynomials() {
        let p = params();
        let (cb, hr) = setup(&hexagon(), 1, &p);
        let a = hr.local_a(&cb, &p);
        let rule = polygon_quadrature(&cb.frame.geom.vertices, 8).unwrap();
        let nt = cb.tilde.len();
        let dofs: Vec<DVec> = (0..nt)
            .map(|i| hr.interpolate(&cb, &|x| HrSpace::tilde_values(&cb, x)[i], None).unwrap())
            .collect();
        for i in 0..nt {
            for j in 0..nt {
                let exact = rule.integrate(|x| {
                    let t = HrSpace::tilde_values(&cb, x);
                    p.apply_cinv(t[i]).ddot(&t[j])
                });
                let got = dofs[i].dot(&(a.view((0, 0), (hr.ndof, hr.ndof)) * &dofs[j]));
                assert!((got - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
            }
        }
    }

    #[test]
    fn stabilization_kernel_and_psd() {
        let p = params();
        let (cb, hr) = setup(&hexagon(), 2, &p);
        for s in 0..50 {
            let x = random_dofs(hr.ndof, 100 + s);
            assert!(x.dot(&(&hr.stab * &x)) >= -1e-12 * x.norm_squared());
        }
        for i in 0..cb.tilde.len() {
            let d = hr.interpolate(&cb, &|x| HrSpace::tilde_values(&cb, x)[i], None).unwrap();
            assert!((&hr.stab * &d).amax() <= 1e-11 * hr.stab.amax());
        }
    }

    #[test]
    fn stabilization_scale_doubles_with_cell() {
        let p = params();
        let (c1, _) = setup(&square(1.0), 1, &p);
        let (c2, _) = setup(&square(2.0), 1, &p);
        let r = HrSpace::stab_scale(&c2, &p) / HrSpace::stab_scale(&c1, &p);
        assert!((r - 2.0).abs() < 1e-14);
        let cinv = (3.0 - 2.0 * 2.1 / (2.0 * 1.3 + 2.0 * 2.1)) / (2.0 * 1.3);
        assert!((HrSpace::stab_scale(&c1, &p) - 2f64.sqrt() * cinv / 2.0).abs() < 1e-13);
        let q = MaterialParams { stress_stabilization: StressStabilization::StiffnessTrace, ..p };
        assert!((HrSpace::stab_scale(&c1, &q) - 2f64.sqrt() * (2.0 * 2.1 + 6.0 * 1.3) / 2.0).abs() < 1e-13);
    }

    #[test]
    fn divergence_orthogonal_to_constants_without_traction() {
        let p = params();
        let (cb, hr) = setup(&hexagon(), 1, &p);
        let b = hr.local_b_div(&cb);
        let mut dofs = DVec::zeros(hr.ndof);
        for i in 0..hr.n_interior() {
            dofs[hr.interior_offset() + i] = 1.0 + i as f64;
        }
        // rows 0 and np are the constant monomials (1,0) and (0,1)
        let bd = &b * &dofs;
        assert!(bd[0].abs() < 1e-13 && bd[3].abs() < 1e-13);
    }

    #[test]
    fn b_matches_quadrature_of_divergence() {
        let p = params();
        let qs = QuadStress { c: [0.1, 0.5, -0.2, 0.3, -0.6, 0.8], p };
        let (cb, hr) = setup(&hexagon(), 1, &p);
        let dofs = hr.interpolate(&cb, &|x| qs.sigma(x), Some(&|_| qs.div())).unwrap();
        let bd = hr.local_b_div(&cb) * &dofs;
        let rule = polygon_quadrature(&cb.frame.geom.vertices, 6).unwrap();
        let np = 3;
        for row in 0..2 * np {
            let exact = rule.integrate(|x| {
                let v = cb.mono.eval_all(x);
                let m = if row < np { Vec2::new(v[row], 0.0) } else { Vec2::new(0.0, v[row - np]) };
                m.dot(&qs.div())
            });
            assert!((bd[row] - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn d_vanishes_without_beta() {
        let p = MaterialParams { beta: 0.0, ..params() };
        let (cb, hr) = setup(&hexagon(), 2, &p);
        assert_eq!(hr.local_d(&cb, &p).amax(), 0.0);
    }

    #[test]
    fn a_is_coercive_on_divergence_free_dofs() {
        let p = params();
        for k in 1..=2 {
            let (cb, hr) = setup(&hexagon(), k, &p);
            let a = hr.local_a(&cb, &p);
            let ass = a.view((0, 0), (hr.ndof, hr.ndof)).into_owned();
            let svd = hr.div.clone().svd(false, true);
            let vt = svd.v_t.unwrap();
            let rank = svd.singular_values.iter().filter(|s| **s > 1e-12).count();
            // complete the row space to the full space to get a nullspace basis
            let full = DMat::identity(hr.ndof, hr.ndof) - vt.rows(0, rank).transpose() * vt.rows(0, rank);
            let null = full.svd(true, false);
            let u = null.u.unwrap();
            let nn = null.singular_values.iter().filter(|s| **s > 0.5).count();
            assert_eq!(nn, hr.ndof - rank);
            let z = u.columns(0, nn).into_owned();
            let restricted = z.transpose() * ass * &z;
            let min = restricted.symmetric_eigen().eigenvalues.min();
            assert!(min > 1e-8, "k={k}: {min}");
        }
    }
}
