//! Global numbering, the Biot and diffusion block systems and the load functionals.
//!
//! Unknowns are numbered field by field: stress, pressure, displacement, Darcy
//! flux, diffusive flux, concentration. Within the stress and flux fields the
//! edge DoFs come first (edge by edge, in global orientation) and the cell
//! interior DoFs after. Pressure, displacement and concentration are stored as
//! cellwise scaled-monomial coefficients.
//!
//! The Biot system couples the first four fields, the diffusion system the
//! last two. Edge DoFs on Neumann edges are essential and are eliminated
//! symmetrically with the values supplied by [`ProblemData`].

use std::ops::Range;

use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use rayon::prelude::*;
use thiserror::Error;

use crate::hdiv_space::{hdiv_dof_count, HdivSpace};
use crate::hr_space::{hr_dof_count, HrSpace};
use crate::mesh::{BoundaryTag, MeshError, PolyMesh};
use crate::model::{MaterialParams, SymTensor2};
use crate::polybasis::{
    data_rule_degree, dim_p, dim_p_below, polygon_quadrature, BasisError, CellBasis, CellFrame, QuadratureRule,
};
use crate::{DMat, DVec, Vec2};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("boundary edge {0} has no boundary tag")]
    Untagged(usize),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("cell {cell}: {source}")]
    Cell { cell: usize, source: BasisError },
    #[error("sparse matrix construction failed: {0}")]
    Sparse(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// The six unknown fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Sigma,
    P,
    U,
    Z,
    Zeta,
    Phi,
}

impl Field {
    pub const ALL: [Field; 6] = [Field::Sigma, Field::P, Field::U, Field::Z, Field::Zeta, Field::Phi];

    fn index(self) -> usize {
        self as usize
    }
}

/// Contiguous global index ranges of all fields.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDofMap {
    pub k: usize,
    pub n_cells: usize,
    pub n_edges: usize,
    offsets: [usize; 7],
    neumann_edges: Vec<usize>,
}

impl GlobalDofMap {
    /// Stress DoFs per edge.
    pub fn sigma_per_edge(&self) -> usize {
        2 * (self.k + 1)
    }

    pub fn sigma_per_cell(&self) -> usize {
        2 * dim_p(self.k) - 3
    }

    pub fn flux_per_edge(&self) -> usize {
        self.k + 1
    }

    pub fn flux_per_cell(&self) -> usize {
        dim_p(self.k) - 1 + dim_p_below(self.k)
    }

    pub fn np(&self) -> usize {
        dim_p(self.k)
    }

    pub fn range(&self, f: Field) -> Range<usize> {
        self.offsets[f.index()]..self.offsets[f.index() + 1]
    }

    pub fn size(&self, f: Field) -> usize {
        self.range(f).len()
    }

    pub fn total(&self) -> usize {
        self.offsets[6]
    }

    /// Size of the Biot system (stress, pressure, displacement, Darcy flux).
    pub fn n_biot(&self) -> usize {
        self.offsets[4]
    }

    /// Size of the diffusion system (diffusive flux, concentration).
    pub fn n_diffusion(&self) -> usize {
        self.offsets[6] - self.offsets[4]
    }

    pub fn neumann_edges(&self) -> &[usize] {
        &self.neumann_edges
    }

    fn edge_field(&self, f: Field, per_edge: usize, per_cell: usize, mesh: &PolyMesh, cell: usize) -> Vec<(usize, f64)> {
        let off = self.offsets[f.index()];
        let mut out = Vec::new();
        for ce in &mesh.cell_edges[cell] {
            let s = ce.sign as f64;
            for j in 0..per_edge {
                out.push((off + ce.edge * per_edge + j, s));
            }
        }
        let base = off + self.n_edges * per_edge + cell * per_cell;
        out.extend((0..per_cell).map(|i| (base + i, 1.0)));
        out
    }

    /// Global indices and orientation signs of a cell's local DoFs for `f`.
    pub fn cell_dofs(&self, mesh: &PolyMesh, f: Field, cell: usize) -> Vec<(usize, f64)> {
        match f {
            Field::Sigma => self.edge_field(f, self.sigma_per_edge(), self.sigma_per_cell(), mesh, cell),
            Field::Z | Field::Zeta => self.edge_field(f, self.flux_per_edge(), self.flux_per_cell(), mesh, cell),
            Field::P | Field::Phi => {
                let np = self.np();
                let off = self.offsets[f.index()] + cell * np;
                (0..np).map(|a| (off + a, 1.0)).collect()
            }
            Field::U => {
                let n = 2 * self.np();
                let off = self.offsets[f.index()] + cell * n;
                (0..n).map(|a| (off + a, 1.0)).collect()
            }
        }
    }

    /// Global indices of the edge DoFs of `f` on edge `e`.
    pub fn edge_dofs(&self, f: Field, e: usize) -> Range<usize> {
        let per = match f {
            Field::Sigma => self.sigma_per_edge(),
            Field::Z | Field::Zeta => self.flux_per_edge(),
            _ => 0,
        };
        let start = self.offsets[f.index()] + e * per;
        start..start + per
    }

    /// Constrained global indices of `f` (edge DoFs on Neumann edges).
    pub fn constrained(&self, f: Field) -> Vec<usize> {
        match f {
            Field::Sigma | Field::Z | Field::Zeta => {
                self.neumann_edges.iter().flat_map(|&e| self.edge_dofs(f, e)).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Gathers the local (cell-oriented) DoF vector of `f` from a field vector
    /// indexed from the start of `f`.
    pub fn gather(&self, mesh: &PolyMesh, f: Field, cell: usize, values: &DVec) -> DVec {
        let off = self.offsets[f.index()];
        let idx = self.cell_dofs(mesh, f, cell);
        DVec::from_iterator(idx.len(), idx.iter().map(|(g, s)| s * values[g - off]))
    }
}

/// Numbers all unknowns of a tagged mesh for polynomial degree `k`.
pub fn number_dofs(mesh: &PolyMesh, k: usize) -> Result<GlobalDofMap, AssemblyError> {
    let mut neumann_edges = Vec::new();
    for e in mesh.boundary_edges() {
        match mesh.boundary_tag[e] {
            None => return Err(AssemblyError::Untagged(e)),
            Some(BoundaryTag::Neumann) => neumann_edges.push(e),
            Some(BoundaryTag::Dirichlet) => {}
        }
    }
    let (nc, ne) = (mesh.num_cells(), mesh.num_edges());
    let np = dim_p(k);
    let sizes = [
        ne * 2 * (k + 1) + nc * (2 * np - 3),
        nc * np,
        nc * 2 * np,
        ne * (k + 1) + nc * (np - 1 + dim_p_below(k)),
        ne * (k + 1) + nc * (np - 1 + dim_p_below(k)),
        nc * np,
    ];
    let mut offsets = [0; 7];
    for i in 0..6 {
        offsets[i + 1] = offsets[i] + sizes[i];
    }
    Ok(GlobalDofMap { k, n_cells: nc, n_edges: ne, offsets, neumann_edges })
}

/// Point-evaluable data of a boundary value problem.
pub trait ProblemData: Sync {
    /// Body force.
    fn f(&self, x: Vec2) -> Vec2;
    /// Fluid source.
    fn g(&self, x: Vec2) -> f64;
    /// Concentration source.
    fn ell(&self, x: Vec2) -> f64;
    /// Displacement on the Dirichlet boundary.
    fn u_d(&self, x: Vec2) -> Vec2;
    /// Pressure on the Dirichlet boundary.
    fn p_d(&self, x: Vec2) -> f64;
    /// Concentration on the Dirichlet boundary.
    fn phi_d(&self, x: Vec2) -> f64;
    /// Stress whose traction is imposed on Neumann edges.
    fn sigma_n(&self, _x: Vec2) -> SymTensor2 {
        SymTensor2::default()
    }
    /// Darcy flux whose normal component is imposed on Neumann edges.
    fn z_n(&self, _x: Vec2) -> Vec2 {
        Vec2::zeros()
    }
    /// Diffusive flux whose normal component is imposed on Neumann edges.
    fn zeta_n(&self, _x: Vec2) -> Vec2 {
        Vec2::zeros()
    }
}

/// All data identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroData;

impl ProblemData for ZeroData {
    fn f(&self, _: Vec2) -> Vec2 {
        Vec2::zeros()
    }
    fn g(&self, _: Vec2) -> f64 {
        0.0
    }
    fn ell(&self, _: Vec2) -> f64 {
        0.0
    }
    fn u_d(&self, _: Vec2) -> Vec2 {
        Vec2::zeros()
    }
    fn p_d(&self, _: Vec2) -> f64 {
        0.0
    }
    fn phi_d(&self, _: Vec2) -> f64 {
        0.0
    }
}

/// Cell-level operators shared by every assembly pass.
#[derive(Debug, Clone)]
pub struct CellOperators {
    pub basis: CellBasis,
    pub hr: HrSpace,
    pub hdiv: HdivSpace,
    /// High-order rule for data integrals.
    pub data_rule: QuadratureRule,
    /// Local indices of Dirichlet edges.
    pub dirichlet_edges: Vec<usize>,
}

/// Mesh, numbering, parameters and per-cell operators.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: PolyMesh,
    pub map: GlobalDofMap,
    pub params: MaterialParams,
    pub cells: Vec<CellOperators>,
}

impl Discretization {
    pub fn new(mesh: PolyMesh, k: usize, params: MaterialParams) -> Result<Self, crate::Error> {
        params.validate()?;
        mesh.validate_tagged()?;
        let map = number_dofs(&mesh, k)?;
        let cells = (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| -> Result<CellOperators, AssemblyError> {
                let wrap = |source| AssemblyError::Cell { cell: c, source };
                let frame = CellFrame::from_mesh(&mesh, c)?;
                let basis = CellBasis::new(frame, k, &params).map_err(wrap)?;
                let hr = HrSpace::new(&basis, &params).map_err(wrap)?;
                let hdiv = HdivSpace::new(&basis).map_err(wrap)?;
                let data_rule = polygon_quadrature(&basis.frame.geom.vertices, data_rule_degree(k))
                    .map_err(|e| wrap(e.into()))?;
                let dirichlet_edges = mesh.cell_edges[c]
                    .iter()
                    .enumerate()
                    .filter(|(_, ce)| mesh.boundary_tag[ce.edge] == Some(BoundaryTag::Dirichlet))
                    .map(|(i, _)| i)
                    .collect();
                Ok(CellOperators { basis, hr, hdiv, data_rule, dirichlet_edges })
            })
            .collect::<Result<Vec<_>, _>>()?;
        debug_assert!(cells.iter().all(|c| c.hr.ndof == hr_dof_count(k, c.hr.n_edges)));
        debug_assert!(cells.iter().all(|c| c.hdiv.ndof == hdiv_dof_count(k, c.hdiv.n_edges)));
        Ok(Discretization { mesh, map, params, cells })
    }

    pub fn k(&self) -> usize {
        self.map.k
    }
}

/// Square sparse system with its right-hand side.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: DVec,
    /// Eliminated rows/columns (identity rows holding the prescribed values).
    pub constrained: Vec<usize>,
}

impl BlockSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `A x`.
    pub fn apply(&self, x: &DVec) -> DVec {
        sparse_apply(&self.matrix, x)
    }

    /// `max |A_ij - A_ji| / max |A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut entries = std::collections::HashMap::new();
        let m = &self.matrix;
        let mut scale: f64 = 0.0;
        for j in 0..m.ncols() {
            let rows = m.row_idx_of_col_raw(j);
            let vals = m.val_of_col(j);
            for (i, v) in rows.iter().zip(vals) {
                entries.insert((*i, j), *v);
                scale = scale.max(v.abs());
            }
        }
        let mut worst: f64 = 0.0;
        for (&(i, j), v) in &entries {
            let t = entries.get(&(j, i)).copied().unwrap_or(0.0);
            worst = worst.max((v - t).abs());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

pub(crate) fn sparse_apply(m: &SparseColMat<usize, f64>, x: &DVec) -> DVec {
    let mut y = DVec::zeros(m.nrows());
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (i, v) in m.row_idx_of_col_raw(j).iter().zip(m.val_of_col(j)) {
            y[*i] += v * xj;
        }
    }
    y
}

/// Assembles `sum_K P_K^T A_K P_K` directly in compressed-column form, cell
/// by cell in mesh order, then eliminates `constrained` symmetrically with
/// `values` (same order): `rhs -= A[:, c] g`, unit diagonal, `rhs_c = g`.
fn assemble_csc(
    n: usize,
    idx: &[Vec<(usize, f64)>],
    local: &(dyn Fn(usize) -> DMat + Sync),
    mut rhs: DVec,
    constrained: &[usize],
    values: &[f64],
) -> Result<BlockSystem, AssemblyError> {
    let mut start = vec![0usize; n + 1];
    for l in idx {
        for (g, _) in l {
            start[g + 1] += 1;
        }
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut next = start.clone();
    let mut cells_of = vec![0usize; start[n]];
    for (c, l) in idx.iter().enumerate() {
        for (g, _) in l {
            cells_of[next[*g]] = c;
            next[*g] += 1;
        }
    }
    drop(next);
    let cols: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rows: Vec<usize> =
                cells_of[start[j]..start[j + 1]].iter().flat_map(|&c| idx[c].iter().map(|(g, _)| *g)).collect();
            rows.sort_unstable();
            rows.dedup();
            rows
        })
        .collect();
    drop(cells_of);
    let mut col_ptr = Vec::with_capacity(n + 1);
    col_ptr.push(0usize);
    let mut row_idx = Vec::with_capacity(cols.iter().map(Vec::len).sum());
    for c in cols {
        row_idx.extend_from_slice(&c);
        col_ptr.push(row_idx.len());
    }
    let mut val = vec![0.0; row_idx.len()];

    const CHUNK: usize = 256;
    for first in (0..idx.len()).step_by(CHUNK) {
        let last = (first + CHUNK).min(idx.len());
        let mats: Vec<DMat> = (first..last).into_par_iter().map(local).collect();
        for (c, m) in (first..last).zip(mats) {
            let l = &idx[c];
            for (b, (gj, sj)) in l.iter().enumerate() {
                let (lo, hi) = (col_ptr[*gj], col_ptr[gj + 1]);
                let rows = &row_idx[lo..hi];
                for (a, (gi, si)) in l.iter().enumerate() {
                    let v = m[(a, b)];
                    if v != 0.0 {
                        let pos = rows.binary_search(gi).map_err(|_| AssemblyError::Sparse(format!("({gi}, {gj}) missing from pattern")))?;
                        val[lo + pos] += si * sj * v;
                    }
                }
            }
        }
    }

    let mut fixed = vec![None; n];
    for (c, v) in constrained.iter().zip(values) {
        fixed[*c] = Some(*v);
    }
    // in-place compaction: the write cursor never passes the read cursor
    let mut w = 0;
    let mut read = 0;
    for j in 0..n {
        let end = col_ptr[j + 1];
        match fixed[j] {
            Some(g) => {
                for p in read..end {
                    if fixed[row_idx[p]].is_none() {
                        rhs[row_idx[p]] -= val[p] * g;
                    }
                }
                row_idx[w] = j;
                val[w] = 1.0;
                w += 1;
            }
            None => {
                for p in read..end {
                    if fixed[row_idx[p]].is_none() {
                        row_idx[w] = row_idx[p];
                        val[w] = val[p];
                        w += 1;
                    }
                }
            }
        }
        read = end;
        col_ptr[j + 1] = w;
    }
    row_idx.truncate(w);
    val.truncate(w);
    for (c, v) in constrained.iter().zip(values) {
        rhs[*c] = *v;
    }
    let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
    Ok(BlockSystem { matrix: SparseColMat::new(symbolic, val), rhs, constrained: constrained.to_vec() })
}

/// Local Biot matrix over `(sigma, p, u, z)`.
fn local_biot(ops: &CellOperators, params: &MaterialParams) -> DMat {
    let cb = &ops.basis;
    let np = dim_p(cb.k);
    let (ns, nz) = (ops.hr.ndof, ops.hdiv.ndof);
    let n = ns + np + 2 * np + nz;
    let mut m = DMat::zeros(n, n);
    let a = ops.hr.local_a(cb, params);
    m.view_mut((0, 0), a.shape()).copy_from(&a);
    let (ou, oz) = (ns + np, ns + 3 * np);
    let b = ops.hr.local_b_div(cb);
    m.view_mut((ou, 0), b.shape()).copy_from(&b);
    m.view_mut((0, ou), (ns, 2 * np)).copy_from(&b.transpose());
    let bz = cb.gram_k() * &ops.hdiv.div;
    m.view_mut((ns, oz), bz.shape()).copy_from(&bz);
    m.view_mut((oz, ns), (nz, np)).copy_from(&bz.transpose());
    let c = ops.hdiv.local_c(cb, params);
    m.view_mut((oz, oz), c.shape()).copy_from(&(-c));
    m
}

fn biot_indices(d: &Discretization, c: usize) -> Vec<(usize, f64)> {
    let mut idx = Vec::new();
    for f in [Field::Sigma, Field::P, Field::U, Field::Z] {
        idx.extend(d.map.cell_dofs(&d.mesh, f, c));
    }
    idx
}

fn diffusion_indices(d: &Discretization, c: usize) -> Vec<(usize, f64)> {
    let off = d.map.range(Field::Zeta).start;
    let mut idx = Vec::new();
    for f in [Field::Zeta, Field::Phi] {
        idx.extend(d.map.cell_dofs(&d.mesh, f, c).into_iter().map(|(g, s)| (g - off, s)));
    }
    idx
}

/// Global vectors of the four load functionals, each indexed from the start of
/// its own block: `F` over `(sigma, p)`, `G` over `(u, z)`, `H` over `zeta`,
/// `I` over `phi`.
#[derive(Debug, Clone)]
pub struct Functionals {
    pub f: DVec,
    pub g: DVec,
    pub h: DVec,
    pub i: DVec,
}

/// Assembles `F`, `G`, `H`, `I`.
pub fn assemble_functionals(d: &Discretization, data: &dyn ProblemData) -> Functionals {
    let map = &d.map;
    let np = map.np();
    let locals: Vec<[DVec; 6]> = d
        .cells
        .par_iter()
        .map(|ops| {
            let cb = &ops.basis;
            let dir = &ops.dirichlet_edges;
            let fs = ops.hr.traction_load(cb, dir, &|x| data.u_d(x));
            let fz = ops.hdiv.flux_load(cb, dir, &|x| data.p_d(x));
            let fzeta = -ops.hdiv.flux_load(cb, dir, &|x| data.phi_d(x));
            let mut fp = DVec::zeros(np);
            let mut fu = DVec::zeros(2 * np);
            let mut fphi = DVec::zeros(np);
            for (x, w) in ops.data_rule.iter() {
                let v = cb.mono.eval_all(x);
                let (g, l, f) = (data.g(x), data.ell(x), data.f(x));
                for a in 0..np {
                    fp[a] += w * g * v[a];
                    fphi[a] -= w * l * v[a];
                    fu[a] -= w * f.x * v[a];
                    fu[np + a] -= w * f.y * v[a];
                }
            }
            [fs, fp, fu, fz, fzeta, fphi]
        })
        .collect();
    let mut all = DVec::zeros(map.total());
    for (c, loc) in locals.iter().enumerate() {
        for (f, v) in Field::ALL.iter().zip(loc) {
            for ((g, s), val) in map.cell_dofs(&d.mesh, *f, c).iter().zip(v.iter()) {
                all[*g] += s * val;
            }
        }
    }
    let r = |a: Field, b: Field| all.rows(map.range(a).start, map.range(b).end - map.range(a).start).into_owned();
    Functionals { f: r(Field::Sigma, Field::P), g: r(Field::U, Field::Z), h: r(Field::Zeta, Field::Zeta), i: r(Field::Phi, Field::Phi) }
}

/// Values of the essential DoFs of `f` (global orientation), interpolated from the data.
pub fn essential_values(d: &Discretization, data: &dyn ProblemData, f: Field) -> (Vec<usize>, Vec<f64>) {
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for &e in d.map.neumann_edges() {
        let c = d.mesh.edges[e].cells[0].expect("boundary edge has a cell");
        let local = d.mesh.cell_edges[c].iter().position(|ce| ce.edge == e).expect("edge belongs to cell");
        let sign = d.mesh.cell_edges[c][local].sign as f64;
        let ops = &d.cells[c];
        let v = match f {
            Field::Sigma => ops.hr.interpolate_edge(&ops.basis, local, &|x| data.sigma_n(x)),
            Field::Z => ops.hdiv.interpolate_edge(&ops.basis, local, &|x| data.z_n(x)),
            Field::Zeta => ops.hdiv.interpolate_edge(&ops.basis, local, &|x| data.zeta_n(x)),
            _ => Vec::new(),
        };
        idx.extend(d.map.edge_dofs(f, e));
        vals.extend(v.into_iter().map(|x| sign * x));
    }
    (idx, vals)
}

/// The Biot matrix with essential conditions and the lifted load `[F; G]`.
/// Neither depends on the concentration.
#[derive(Debug, Clone)]
pub struct BiotOperator {
    pub system: BlockSystem,
    fixed: Vec<bool>,
}

/// Assembles the Biot matrix and the concentration-independent right-hand side.
pub fn assemble_biot_operator(d: &Discretization, data: &dyn ProblemData, fun: &Functionals) -> Result<BiotOperator, AssemblyError> {
    let n = d.map.n_biot();
    let idx: Vec<_> = (0..d.mesh.num_cells()).map(|c| biot_indices(d, c)).collect();
    let mut rhs = DVec::zeros(n);
    rhs.rows_mut(0, fun.f.len()).copy_from(&fun.f);
    rhs.rows_mut(fun.f.len(), fun.g.len()).copy_from(&fun.g);
    let mut constrained = Vec::new();
    let mut values = Vec::new();
    for f in [Field::Sigma, Field::Z] {
        let (i, v) = essential_values(d, data, f);
        constrained.extend(i);
        values.extend(v);
    }
    let system = assemble_csc(n, &idx, &|c| local_biot(&d.cells[c], &d.params), rhs, &constrained, &values)?;
    let mut fixed = vec![false; n];
    for c in &constrained {
        fixed[*c] = true;
    }
    Ok(BiotOperator { system, fixed })
}

impl BiotOperator {
    /// Right-hand side `F - D_h(phi_hat) ; G` with the essential values lifted.
    pub fn rhs(&self, d: &Discretization, phi_hat: &DVec) -> Result<DVec, AssemblyError> {
        let nphi = d.map.size(Field::Phi);
        if phi_hat.len() != nphi {
            return Err(AssemblyError::Dimension { what: "concentration", expected: nphi, got: phi_hat.len() });
        }
        let mut rhs = self.system.rhs.clone();
        let np = d.map.np();
        let contrib: Vec<(Vec<(usize, f64)>, DVec)> = (0..d.mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let ops = &d.cells[c];
                let phi = phi_hat.rows(c * np, np).into_owned();
                let v = ops.hr.local_d(&ops.basis, &d.params) * phi;
                let mut idx = d.map.cell_dofs(&d.mesh, Field::Sigma, c);
                idx.extend(d.map.cell_dofs(&d.mesh, Field::P, c));
                (idx, v)
            })
            .collect();
        for (idx, v) in contrib {
            for ((g, s), val) in idx.iter().zip(v.iter()) {
                if !self.fixed[*g] {
                    rhs[*g] -= s * val;
                }
            }
        }
        Ok(rhs)
    }
}

/// Full Biot system for a given concentration.
pub fn assemble_biot(d: &Discretization, data: &dyn ProblemData, phi_hat: &DVec) -> Result<BlockSystem, AssemblyError> {
    let fun = assemble_functionals(d, data);
    let op = assemble_biot_operator(d, data, &fun)?;
    let rhs = op.rhs(d, phi_hat)?;
    Ok(BlockSystem { rhs, ..op.system })
}

/// Diffusion system for stress traces `tr Pi^C sigma` given per cell in `M_k` coefficients.
pub fn assemble_diffusion(
    d: &Discretization,
    data: &dyn ProblemData,
    fun: &Functionals,
    stress_traces: &[DVec],
) -> Result<BlockSystem, AssemblyError> {
    if stress_traces.len() != d.mesh.num_cells() {
        return Err(AssemblyError::Dimension { what: "stress traces", expected: d.mesh.num_cells(), got: stress_traces.len() });
    }
    let n = d.map.n_diffusion();
    let np = d.map.np();
    let idx: Vec<_> = (0..d.mesh.num_cells()).map(|c| diffusion_indices(d, c)).collect();
    let local = |c: usize| {
        let ops = &d.cells[c];
        let cb = &ops.basis;
        let nz = ops.hdiv.ndof;
        let mut local = DMat::zeros(nz + np, nz + np);
        let a = ops.hdiv.local_a(cb, &d.params, stress_traces[c].as_slice());
        local.view_mut((0, 0), a.shape()).copy_from(&a);
        let b = ops.hdiv.local_b(cb);
        local.view_mut((nz, 0), b.shape()).copy_from(&b);
        local.view_mut((0, nz), (nz, np)).copy_from(&b.transpose());
        local.view_mut((nz, nz), (np, np)).copy_from(&(-cb.gram_k()));
        local
    };
    let mut rhs = DVec::zeros(n);
    rhs.rows_mut(0, fun.h.len()).copy_from(&fun.h);
    rhs.rows_mut(fun.h.len(), fun.i.len()).copy_from(&fun.i);
    let (cidx, vals) = essential_values(d, data, Field::Zeta);
    let off = d.map.range(Field::Zeta).start;
    let cidx: Vec<usize> = cidx.into_iter().map(|g| g - off).collect();
    assemble_csc(n, &idx, &local, rhs, &cidx, &vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_quad, example1_boundary};

    fn disc(n: usize, k: usize, params: MaterialParams) -> Discretization {
        let mesh = build_structured_quad(n).tag_boundary(example1_boundary);
        Discretization::new(mesh, k, params).unwrap()
    }

    #[test]
    fn counts_on_single_square() {
        let mesh = build_structured_quad(1).tag_boundary(|_| BoundaryTag::Dirichlet);
        let map = number_dofs(&mesh, 1).unwrap();
        assert_eq!(map.size(Field::Sigma), 19);
        assert_eq!(map.size(Field::Z), 11);
        assert_eq!(map.size(Field::Zeta), 11);
        assert_eq!(map.size(Field::P), 3);
        assert_eq!(map.size(Field::Phi), 3);
        assert_eq!(map.size(Field::U), 6);
        assert!(map.constrained(Field::Sigma).is_empty());
    }

    #[test]
    fn shared_edges_counted_once() {
        let mesh = build_structured_quad(2).tag_boundary(example1_boundary);
        let map = number_dofs(&mesh, 1).unwrap();
        assert_eq!(map.size(Field::Sigma), 60);
        assert_eq!(map.constrained(Field::Sigma).len(), 4 * 4);
        assert_eq!(map.constrained(Field::Z).len(), 4 * 2);
        // every global index is referenced by some cell
        let mut seen = vec![false; map.total()];
        for c in 0..mesh.num_cells() {
            for f in Field::ALL {
                for (g, _) in map.cell_dofs(&mesh, f, c) {
                    seen[g] = true;
                }
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn untagged_mesh_rejected() {
        assert!(matches!(number_dofs(&build_structured_quad(2), 1), Err(AssemblyError::Untagged(_))));
    }

    #[test]
    fn homogeneous_data_gives_zero_loads() {
        let d = disc(2, 1, MaterialParams::default());
        let fun = assemble_functionals(&d, &ZeroData);
        for v in [&fun.f, &fun.g, &fun.h, &fun.i] {
            assert_eq!(v.amax(), 0.0);
        }
        let sys = assemble_biot(&d, &ZeroData, &DVec::zeros(d.map.size(Field::Phi))).unwrap();
        assert_eq!(sys.rhs.amax(), 0.0);
    }

    #[test]
    fn unit_source_gives_monomial_integrals() {
        struct UnitG;
        impl ProblemData for UnitG {
            fn f(&self, _: Vec2) -> Vec2 {
                Vec2::zeros()
            }
            fn g(&self, _: Vec2) -> f64 {
                1.0
            }
            fn ell(&self, _: Vec2) -> f64 {
                0.0
            }
            fn u_d(&self, _: Vec2) -> Vec2 {
                Vec2::zeros()
            }
            fn p_d(&self, _: Vec2) -> f64 {
                0.0
            }
            fn phi_d(&self, _: Vec2) -> f64 {
                0.0
            }
        }
        let d = disc(3, 2, MaterialParams::default());
        let fun = assemble_functionals(&d, &UnitG);
        let ns = d.map.size(Field::Sigma);
        for (c, ops) in d.cells.iter().enumerate() {
            let g = ops.basis.gram_k();
            for a in 0..6 {
                assert!((fun.f[ns + c * 6 + a] - g[(0, a)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn systems_are_symmetric() {
        let d = disc(3, 1, MaterialParams::default());
        let sys = assemble_biot(&d, &ZeroData, &DVec::zeros(d.map.size(Field::Phi))).unwrap();
        assert!(sys.asymmetry() <= 1e-12);
        let fun = assemble_functionals(&d, &ZeroData);
        let traces = vec![DVec::from_vec(vec![1.0, 0.5, -0.2]); d.mesh.num_cells()];
        let diff = assemble_diffusion(&d, &ZeroData, &fun, &traces).unwrap();
        assert!(diff.asymmetry() <= 1e-12);
    }

    #[test]
    fn biot_independent_of_phi_without_beta() {
        struct Src;
        impl ProblemData for Src {
            fn f(&self, x: Vec2) -> Vec2 {
                Vec2::new(x.x, 1.0)
            }
            fn g(&self, x: Vec2) -> f64 {
                x.y
            }
            fn ell(&self, _: Vec2) -> f64 {
                1.0
            }
            fn u_d(&self, x: Vec2) -> Vec2 {
                Vec2::new(x.y, 0.0)
            }
            fn p_d(&self, _: Vec2) -> f64 {
                1.0
            }
            fn phi_d(&self, _: Vec2) -> f64 {
                0.0
            }
        }
        let d = disc(2, 1, MaterialParams { beta: 0.0, ..MaterialParams::default() });
        let n = d.map.size(Field::Phi);
        let a = assemble_biot(&d, &Src, &DVec::zeros(n)).unwrap();
        let b = assemble_biot(&d, &Src, &DVec::from_element(n, 3.7)).unwrap();
        assert_eq!(a.rhs, b.rhs);
        assert_eq!(a.matrix.val(), b.matrix.val());
        assert_eq!(a.matrix.row_idx(), b.matrix.row_idx());
    }

    #[test]
    fn diffusion_independent_of_stress_without_eta1() {
        let d = disc(2, 1, MaterialParams { eta1: 0.0, ..MaterialParams::default() });
        let fun = assemble_functionals(&d, &ZeroData);
        let t0 = vec![DVec::zeros(3); 4];
        let t1 = vec![DVec::from_vec(vec![4.0, -1.0, 2.0]); 4];
        let a = assemble_diffusion(&d, &ZeroData, &fun, &t0).unwrap();
        let b = assemble_diffusion(&d, &ZeroData, &fun, &t1).unwrap();
        assert_eq!(a.matrix.val(), b.matrix.val());
    }

    #[test]
    fn dimension_mismatch_reported() {
        let d = disc(2, 1, MaterialParams::default());
        let fun = assemble_functionals(&d, &ZeroData);
        let op = assemble_biot_operator(&d, &ZeroData, &fun).unwrap();
        assert!(matches!(op.rhs(&d, &DVec::zeros(5)), Err(AssemblyError::Dimension { .. })));
        assert!(assemble_diffusion(&d, &ZeroData, &fun, &[]).is_err());
    }
}
