//! Manufactured solutions, computable error norms and convergence studies.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::assembly::{Discretization, Field, ProblemData};
use crate::hr_space::HrSpace;
use crate::mesh::{build_structured_quad, build_triangular, distort_quad, example1_boundary, BoundaryTag, PolyMesh};
use crate::model::{MaterialParams, SymTensor2};
use crate::polybasis::{dim_p, eval_vector, CellBasis, QuadratureRule};
use crate::solver::{picard, FieldState, FixedPointConfig, SolveReport};
use crate::{DVec, Vec2};

/// Exact `u`, `p`, `phi` with first and second derivatives.
///
/// `grad_u` has rows `grad u_i`; `hess_u[i]` is the Hessian of `u_i`.
pub trait ExactSolution: Send + Sync {
    fn u(&self, x: Vec2) -> Vec2;
    fn grad_u(&self, x: Vec2) -> Matrix2<f64>;
    fn hess_u(&self, x: Vec2) -> [Matrix2<f64>; 2];
    fn p(&self, x: Vec2) -> f64;
    fn grad_p(&self, x: Vec2) -> Vec2;
    fn hess_p(&self, x: Vec2) -> Matrix2<f64>;
    fn phi(&self, x: Vec2) -> f64;
    fn grad_phi(&self, x: Vec2) -> Vec2;
    fn hess_phi(&self, x: Vec2) -> Matrix2<f64>;
}

/// Trigonometric/exponential solution on the unit square.
#[derive(Debug, Clone, Copy, Default)]
pub struct Example1;

impl ExactSolution for Example1 {
    fn u(&self, x: Vec2) -> Vec2 {
        let (a, b) = (4.0 * PI * x.x, 4.0 * PI * x.y);
        Vec2::new(a.cos() * b.cos() + (-x.x).exp(), a.sin() * b.sin() + (-x.y).exp())
    }

    fn grad_u(&self, x: Vec2) -> Matrix2<f64> {
        let w = 4.0 * PI;
        let (a, b) = (w * x.x, w * x.y);
        let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
        Matrix2::new(
            -w * sa * cb - (-x.x).exp(),
            -w * ca * sb,
            w * ca * sb,
            w * sa * cb - (-x.y).exp(),
        )
    }

    fn hess_u(&self, x: Vec2) -> [Matrix2<f64>; 2] {
        let w = 4.0 * PI;
        let w2 = w * w;
        let (a, b) = (w * x.x, w * x.y);
        let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
        let h1 = Matrix2::new(-w2 * ca * cb + (-x.x).exp(), w2 * sa * sb, w2 * sa * sb, -w2 * ca * cb);
        let h2 = Matrix2::new(-w2 * sa * sb, w2 * ca * cb, w2 * ca * cb, -w2 * sa * sb + (-x.y).exp());
        [h1, h2]
    }

    fn p(&self, x: Vec2) -> f64 {
        (2.0 * PI * x.x).cos() * (2.0 * PI * x.y).cos() + x.y.exp()
    }

    fn grad_p(&self, x: Vec2) -> Vec2 {
        let w = 2.0 * PI;
        let (a, b) = (w * x.x, w * x.y);
        Vec2::new(-w * a.sin() * b.cos(), -w * a.cos() * b.sin() + x.y.exp())
    }

    fn hess_p(&self, x: Vec2) -> Matrix2<f64> {
        let w = 2.0 * PI;
        let w2 = w * w;
        let (a, b) = (w * x.x, w * x.y);
        let cc = a.cos() * b.cos();
        let ss = a.sin() * b.sin();
        Matrix2::new(-w2 * cc, w2 * ss, w2 * ss, -w2 * cc + x.y.exp())
    }

    fn phi(&self, x: Vec2) -> f64 {
        (2.0 * PI * x.x).sin() * (2.0 * PI * x.y).sin() + x.x.exp()
    }

    fn grad_phi(&self, x: Vec2) -> Vec2 {
        let w = 2.0 * PI;
        let (a, b) = (w * x.x, w * x.y);
        Vec2::new(w * a.cos() * b.sin() + x.x.exp(), w * a.sin() * b.cos())
    }

    fn hess_phi(&self, x: Vec2) -> Matrix2<f64> {
        let w = 2.0 * PI;
        let w2 = w * w;
        let (a, b) = (w * x.x, w * x.y);
        let cc = a.cos() * b.cos();
        let ss = a.sin() * b.sin();
        Matrix2::new(-w2 * ss + x.x.exp(), w2 * cc, w2 * cc, -w2 * ss)
    }
}

/// `c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quadratic(pub [f64; 6]);

impl Quadratic {
    pub fn eval(&self, x: Vec2) -> f64 {
        let c = &self.0;
        c[0] + c[1] * x.x + c[2] * x.y + c[3] * x.x * x.x + c[4] * x.x * x.y + c[5] * x.y * x.y
    }

    pub fn grad(&self, x: Vec2) -> Vec2 {
        let c = &self.0;
        Vec2::new(c[1] + 2.0 * c[3] * x.x + c[4] * x.y, c[2] + c[4] * x.x + 2.0 * c[5] * x.y)
    }

    pub fn hess(&self) -> Matrix2<f64> {
        let c = &self.0;
        Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5])
    }

    pub fn degree(&self) -> usize {
        let c = &self.0;
        if c[3..].iter().any(|v| *v != 0.0) {
            2
        } else if c[1..3].iter().any(|v| *v != 0.0) {
            1
        } else {
            0
        }
    }
}

/// Solution with quadratic (or lower) components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadraticSolution {
    pub u: [Quadratic; 2],
    pub p: Quadratic,
    pub phi: Quadratic,
}

impl QuadraticSolution {
    pub fn degree(&self) -> usize {
        [self.u[0], self.u[1], self.p, self.phi].iter().map(Quadratic::degree).max().unwrap_or(0)
    }
}

impl ExactSolution for QuadraticSolution {
    fn u(&self, x: Vec2) -> Vec2 {
        Vec2::new(self.u[0].eval(x), self.u[1].eval(x))
    }
    fn grad_u(&self, x: Vec2) -> Matrix2<f64> {
        let (a, b) = (self.u[0].grad(x), self.u[1].grad(x));
        Matrix2::new(a.x, a.y, b.x, b.y)
    }
    fn hess_u(&self, _: Vec2) -> [Matrix2<f64>; 2] {
        [self.u[0].hess(), self.u[1].hess()]
    }
    fn p(&self, x: Vec2) -> f64 {
        self.p.eval(x)
    }
    fn grad_p(&self, x: Vec2) -> Vec2 {
        self.p.grad(x)
    }
    fn hess_p(&self, _: Vec2) -> Matrix2<f64> {
        self.p.hess()
    }
    fn phi(&self, x: Vec2) -> f64 {
        self.phi.eval(x)
    }
    fn grad_phi(&self, x: Vec2) -> Vec2 {
        self.phi.grad(x)
    }
    fn hess_phi(&self, _: Vec2) -> Matrix2<f64> {
        self.phi.hess()
    }
}

/// Exact solution, parameters and boundary partition, with every derived field.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub exact: Arc<dyn ExactSolution>,
    pub params: MaterialParams,
    pub boundary: fn(Vec2) -> BoundaryTag,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase").field("name", &self.name).field("params", &self.params).finish()
    }
}

/// Completes an exact solution with stress, fluxes and source terms.
pub fn derive_fields(
    name: &str,
    exact: Arc<dyn ExactSolution>,
    params: MaterialParams,
    boundary: fn(Vec2) -> BoundaryTag,
) -> ManufacturedCase {
    ManufacturedCase { name: name.to_string(), exact, params, boundary }
}

/// Example 1: Neumann on `x = 0` and `y = 0`, Dirichlet elsewhere.
pub fn example1_case(params: MaterialParams) -> ManufacturedCase {
    derive_fields("example1", Arc::new(Example1), params, example1_boundary)
}

/// Quadratic displacement with harmonic quadratic pressure and concentration,
/// so that every derived field lies in the `k = 2` discrete spaces when `eta1 = 0`.
pub fn custom_case(params: MaterialParams) -> ManufacturedCase {
    let exact = QuadraticSolution {
        u: [Quadratic([0.1, 0.5, -0.3, 0.4, 0.2, -0.6]), Quadratic([-0.2, 0.3, 0.7, -0.5, 0.1, 0.3])],
        p: Quadratic([1.0, 0.5, -0.2, 0.3, 0.4, -0.3]),
        phi: Quadratic([2.0, -0.3, 0.6, -0.25, 0.5, 0.25]),
    };
    derive_fields("custom", Arc::new(exact), params, example1_boundary)
}

impl ManufacturedCase {
    pub fn u(&self, x: Vec2) -> Vec2 {
        self.exact.u(x)
    }

    pub fn p(&self, x: Vec2) -> f64 {
        self.exact.p(x)
    }

    pub fn phi(&self, x: Vec2) -> f64 {
        self.exact.phi(x)
    }

    pub fn div_u(&self, x: Vec2) -> f64 {
        self.exact.grad_u(x).trace()
    }

    pub fn strain(&self, x: Vec2) -> SymTensor2 {
        let g = self.exact.grad_u(x);
        SymTensor2::new(g[(0, 0)], 0.5 * (g[(0, 1)] + g[(1, 0)]), g[(1, 1)])
    }

    fn coupling(&self, x: Vec2) -> f64 {
        self.params.alpha * self.p(x) + self.params.beta * self.phi(x)
    }

    pub fn sigma(&self, x: Vec2) -> SymTensor2 {
        self.params.apply_c(self.strain(x)).add(&SymTensor2::identity().scale(-self.coupling(x)))
    }

    /// `grad div u`.
    fn grad_div_u(&self, x: Vec2) -> Vec2 {
        let h = self.exact.hess_u(x);
        Vec2::new(h[0][(0, 0)] + h[1][(0, 1)], h[0][(1, 0)] + h[1][(1, 1)])
    }

    pub fn div_sigma(&self, x: Vec2) -> Vec2 {
        let pr = &self.params;
        let h = self.exact.hess_u(x);
        let lap = Vec2::new(h[0].trace(), h[1].trace());
        let gc = self.exact.grad_p(x) * pr.alpha + self.exact.grad_phi(x) * pr.beta;
        lap * pr.mu + self.grad_div_u(x) * (pr.mu + pr.lambda) - gc
    }

    pub fn tr_sigma(&self, x: Vec2) -> f64 {
        self.sigma(x).trace()
    }

    pub fn grad_tr_sigma(&self, x: Vec2) -> Vec2 {
        let pr = &self.params;
        let gc = self.exact.grad_p(x) * pr.alpha + self.exact.grad_phi(x) * pr.beta;
        self.grad_div_u(x) * (2.0 * (pr.mu + pr.lambda)) - gc * 2.0
    }

    pub fn z(&self, x: Vec2) -> Vec2 {
        -(self.params.kappa * self.exact.grad_p(x))
    }

    pub fn div_z(&self, x: Vec2) -> f64 {
        -self.params.kappa.component_mul(&self.exact.hess_p(x)).sum()
    }

    pub fn zeta(&self, x: Vec2) -> Vec2 {
        -self.exact.grad_phi(x) * self.params.rho(self.tr_sigma(x))
    }

    pub fn div_zeta(&self, x: Vec2) -> f64 {
        let t = self.tr_sigma(x);
        let gphi = self.exact.grad_phi(x);
        -self.params.rho_prime(t) * self.grad_tr_sigma(x).dot(&gphi) - self.params.rho(t) * self.exact.hess_phi(x).trace()
    }

    pub fn body_force(&self, x: Vec2) -> Vec2 {
        -self.div_sigma(x)
    }

    pub fn fluid_source(&self, x: Vec2) -> f64 {
        self.params.s0 * self.p(x) + self.params.alpha * self.div_u(x) + self.div_z(x)
    }

    pub fn concentration_source(&self, x: Vec2) -> f64 {
        self.phi(x) + self.div_zeta(x)
    }
}

impl ProblemData for ManufacturedCase {
    fn f(&self, x: Vec2) -> Vec2 {
        self.body_force(x)
    }
    fn g(&self, x: Vec2) -> f64 {
        self.fluid_source(x)
    }
    fn ell(&self, x: Vec2) -> f64 {
        self.concentration_source(x)
    }
    fn u_d(&self, x: Vec2) -> Vec2 {
        self.u(x)
    }
    fn p_d(&self, x: Vec2) -> f64 {
        self.p(x)
    }
    fn phi_d(&self, x: Vec2) -> f64 {
        self.phi(x)
    }
    fn sigma_n(&self, x: Vec2) -> SymTensor2 {
        self.sigma(x)
    }
    fn z_n(&self, x: Vec2) -> Vec2 {
        self.z(x)
    }
    fn zeta_n(&self, x: Vec2) -> Vec2 {
        self.zeta(x)
    }
}

/// Coefficients of the `L^2(K)` projection of a scalar onto `M_k`.
pub fn project_scalar(cb: &CellBasis, rule: &QuadratureRule, f: &dyn Fn(Vec2) -> f64) -> DVec {
    let np = cb.np();
    let mut rhs = DVec::zeros(np);
    for (x, w) in rule.iter() {
        let v = cb.mono.eval_all(x);
        let fx = f(x);
        for a in 0..np {
            rhs[a] += w * fx * v[a];
        }
    }
    cb.gram_k().cholesky().expect("Gram matrix is SPD").solve(&rhs)
}

/// Coefficients of the `L^2(K)` projection of a vector onto vector `M_k`.
pub fn project_vector(cb: &CellBasis, rule: &QuadratureRule, f: &dyn Fn(Vec2) -> Vec2) -> DVec {
    let np = cb.np();
    let a = project_scalar(cb, rule, &|x| f(x).x);
    let b = project_scalar(cb, rule, &|x| f(x).y);
    DVec::from_iterator(2 * np, a.iter().chain(b.iter()).copied())
}

fn eval_scalar(cb: &CellBasis, coef: &[f64], x: Vec2) -> f64 {
    cb.mono.eval_all(x).iter().zip(coef).map(|(a, b)| a * b).sum()
}

fn eval_vec(cb: &CellBasis, coef: &[f64], x: Vec2) -> Vec2 {
    eval_vector(coef, cb.np(), &cb.mono.eval_all(x))
}

/// DoF interpolant of the exact fields. Pressure, displacement and
/// concentration are `L^2` projections.
pub fn interpolate_state(d: &Discretization, case: &ManufacturedCase) -> crate::Result<FieldState> {
    let map = &d.map;
    let locals: Vec<_> = d
        .cells
        .par_iter()
        .map(|ops| -> crate::Result<[DVec; 6]> {
            let cb = &ops.basis;
            let rule = &ops.data_rule;
            let s = ops.hr.interpolate(cb, &|x| case.sigma(x), Some(&|x| case.div_sigma(x)))?;
            let z = ops.hdiv.interpolate(cb, &|x| case.z(x))?;
            let zeta = ops.hdiv.interpolate(cb, &|x| case.zeta(x))?;
            let p = project_scalar(cb, rule, &|x| case.p(x));
            let u = project_vector(cb, rule, &|x| case.u(x));
            let phi = project_scalar(cb, rule, &|x| case.phi(x));
            Ok([s, p, u, z, zeta, phi])
        })
        .collect::<Result<_, _>>()?;
    let mut state = FieldState::zeros(map);
    for (c, loc) in locals.iter().enumerate() {
        for (f, v) in Field::ALL.iter().zip(loc) {
            let off = map.range(*f).start;
            let target = state.field_mut(*f);
            for ((g, s), val) in map.cell_dofs(&d.mesh, *f, c).iter().zip(v.iter()) {
                target[g - off] = s * val;
            }
        }
    }
    Ok(state)
}

/// Computable errors. Each entry is the root of its squared terms; for the
/// diffusive flux the `L^4` part enters squared.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub e_sigma: f64,
    pub e_u: f64,
    pub e_z: f64,
    pub e_p: f64,
    pub e_zeta: f64,
    pub e_phi: f64,
    pub total: f64,
    pub h: f64,
    pub ndofs: usize,
    pub iterations: usize,
}

impl ErrorReport {
    /// `[sigma, u, z, p, zeta, phi]`.
    pub fn components(&self) -> [f64; 6] {
        [self.e_sigma, self.e_u, self.e_z, self.e_p, self.e_zeta, self.e_phi]
    }

    /// `[total, sigma, u, z, p, zeta, phi]`.
    pub fn with_total(&self) -> [f64; 7] {
        let c = self.components();
        [self.total, c[0], c[1], c[2], c[3], c[4], c[5]]
    }
}

/// Cell-wise squared error contributions.
#[derive(Debug, Clone, Copy, Default)]
struct CellErrors {
    sigma: f64,
    div_sigma: f64,
    u: f64,
    z: f64,
    div_z: f64,
    p: f64,
    zeta4: f64,
    div_zeta: f64,
    phi: f64,
}

impl std::ops::Add for CellErrors {
    type Output = CellErrors;
    fn add(self, o: CellErrors) -> CellErrors {
        CellErrors {
            sigma: self.sigma + o.sigma,
            div_sigma: self.div_sigma + o.div_sigma,
            u: self.u + o.u,
            z: self.z + o.z,
            div_z: self.div_z + o.div_z,
            p: self.p + o.p,
            zeta4: self.zeta4 + o.zeta4,
            div_zeta: self.div_zeta + o.div_zeta,
            phi: self.phi + o.phi,
        }
    }
}

fn sq(t: &SymTensor2) -> f64 {
    t.ddot(t)
}

/// Errors of a discrete state against the exact fields of `case`.
pub fn compute_errors(d: &Discretization, state: &FieldState, case: &ManufacturedCase) -> ErrorReport {
    let map = &d.map;
    let np = map.np();
    let total = d
        .cells
        .par_iter()
        .enumerate()
        .map(|(c, ops)| {
            let cb = &ops.basis;
            let sig = map.gather(&d.mesh, Field::Sigma, c, &state.sigma);
            let s_proj = ops.hr.project(&sig);
            let s_div = ops.hr.divergence(&sig);
            let z = map.gather(&d.mesh, Field::Z, c, &state.z);
            let (z_proj, z_div) = (ops.hdiv.project(&z), ops.hdiv.divergence(&z));
            let zeta = map.gather(&d.mesh, Field::Zeta, c, &state.zeta);
            let (zt_proj, zt_div) = (ops.hdiv.project(&zeta), ops.hdiv.divergence(&zeta));
            let p = state.p.rows(c * np, np);
            let phi = state.phi.rows(c * np, np);
            let u = state.u.rows(2 * c * np, 2 * np);
            let mut e = CellErrors::default();
            for (x, w) in ops.data_rule.iter() {
                let ds = case.sigma(x).add(&HrSpace::eval_projection(cb, s_proj.as_slice(), x).scale(-1.0));
                e.sigma += w * sq(&ds);
                e.div_sigma += w * (case.div_sigma(x) - eval_vec(cb, s_div.as_slice(), x)).norm_squared();
                e.u += w * (case.u(x) - eval_vec(cb, u.as_slice(), x)).norm_squared();
                e.z += w * (case.z(x) - eval_vec(cb, z_proj.as_slice(), x)).norm_squared();
                e.div_z += w * (case.div_z(x) - eval_scalar(cb, z_div.as_slice(), x)).powi(2);
                e.p += w * (case.p(x) - eval_scalar(cb, p.as_slice(), x)).powi(2);
                e.zeta4 += w * (case.zeta(x) - eval_vec(cb, zt_proj.as_slice(), x)).norm_squared().powi(2);
                e.div_zeta += w * (case.div_zeta(x) - eval_scalar(cb, zt_div.as_slice(), x)).powi(2);
                e.phi += w * (case.phi(x) - eval_scalar(cb, phi.as_slice(), x)).powi(2);
            }
            e
        })
        .reduce(CellErrors::default, |a, b| a + b);
    let mut r = ErrorReport {
        e_sigma: (total.sigma + total.div_sigma).sqrt(),
        e_u: total.u.sqrt(),
        e_z: (total.z + total.div_z).sqrt(),
        e_p: total.p.sqrt(),
        e_zeta: (total.zeta4.sqrt() + total.div_zeta).sqrt(),
        e_phi: total.phi.sqrt(),
        h: d.mesh.h(),
        ndofs: map.total(),
        ..Default::default()
    };
    r.total = r.components().iter().map(|v| v * v).sum::<f64>().sqrt();
    r
}

/// `log(e / e_prev) / log(h / h_prev)`.
pub fn rate(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e / e_prev).ln() / (h / h_prev).ln()
}

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub label: usize,
    pub errors: ErrorReport,
    /// `[total, sigma, u, z, p, zeta, phi]`; absent on the first level.
    pub rates: Option<[f64; 7]>,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Default)]
pub struct RateTable {
    pub k: usize,
    pub levels: Vec<LevelResult>,
}

impl RateTable {
    pub fn push(&mut self, label: usize, errors: ErrorReport, report: SolveReport) {
        let rates = self.levels.last().map(|prev| {
            let (a, b) = (prev.errors.with_total(), errors.with_total());
            std::array::from_fn(|i| rate(a[i], b[i], prev.errors.h, errors.h))
        });
        self.levels.push(LevelResult { label, errors, rates, report });
    }

    pub fn final_rates(&self) -> Option<[f64; 7]> {
        self.levels.last().and_then(|l| l.rates)
    }

    pub fn max_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.report.iterations).max().unwrap_or(0)
    }

    pub fn all_converged(&self) -> bool {
        self.levels.iter().all(|l| l.report.converged)
    }
}

/// Structured mesh families on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    Quad,
    Tri,
    /// Quads with interior vertices moved by up to `fraction * (1/n)`.
    Distorted { fraction: f64, seed: u64 },
}

impl MeshFamily {
    pub fn build(&self, n: usize) -> Result<PolyMesh, crate::mesh::MeshError> {
        match *self {
            MeshFamily::Quad => Ok(build_structured_quad(n)),
            MeshFamily::Tri => Ok(build_triangular(n)),
            MeshFamily::Distorted { fraction, seed } => distort_quad(&build_structured_quad(n), fraction / n as f64, seed),
        }
    }
}

/// Solves `case` on every mesh and tabulates errors and rates.
pub fn run_study(
    meshes: Vec<(usize, PolyMesh)>,
    k: usize,
    case: &ManufacturedCase,
    cfg: &FixedPointConfig,
) -> crate::Result<RateTable> {
    let mut table = RateTable { k, levels: Vec::new() };
    for (label, mesh) in meshes {
        let mesh = mesh.tag_boundary(case.boundary);
        let d = Discretization::new(mesh, k, case.params)?;
        let (state, report) = picard(&d, case, cfg)?;
        let mut errors = compute_errors(&d, &state, case);
        errors.iterations = report.iterations;
        log::info!("level {label}: h {:.3e}, e_total {:.3e}, iterations {}", errors.h, errors.total, report.iterations);
        table.push(label, errors, report);
    }
    Ok(table)
}

/// Per-cell RMS residuals of the discrete balance laws and the RMS data scale
/// each is measured against.
#[derive(Debug, Clone)]
pub struct BalanceResiduals {
    /// `div sigma_h + Pi^0 f`.
    pub momentum: Vec<f64>,
    /// `s0 p_h + alpha tr C^-1 (Pi^C sigma_h + (alpha p_h + beta phi) I) + div z_h - Pi^0 g`.
    pub mass: Vec<f64>,
    /// `phi_h + div zeta_h - Pi^0 ell`.
    pub diffusion: Vec<f64>,
    /// Largest cell RMS of `Pi^0 f`, `Pi^0 g`, `Pi^0 ell`.
    pub scale: [f64; 3],
}

impl BalanceResiduals {
    /// Worst residual of each law relative to its data scale.
    pub fn relative(&self) -> [f64; 3] {
        let m = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        [m(&self.momentum) / self.scale[0], m(&self.mass) / self.scale[1], m(&self.diffusion) / self.scale[2]]
    }
}

/// Cell balance residuals. `biot_phi` is the concentration used in the last
/// Biot solve (the mass balance is exact for that one).
pub fn balance_residuals(
    d: &Discretization,
    state: &FieldState,
    biot_phi: &DVec,
    data: &dyn ProblemData,
) -> BalanceResiduals {
    let map = &d.map;
    let np = map.np();
    let pr = &d.params;
    let ls = pr.lame_sum();
    let rows: Vec<[f64; 6]> = d
        .cells
        .par_iter()
        .enumerate()
        .map(|(c, ops)| {
            let cb = &ops.basis;
            let rule = &ops.data_rule;
            let rms = |coef: &DVec, vector: bool| {
                let m = if vector { cb.vector_gram_k() } else { cb.gram_k() };
                (coef.dot(&(m * coef)).max(0.0) / cb.area()).sqrt()
            };
            let sig = map.gather(&d.mesh, Field::Sigma, c, &state.sigma);
            let pf = project_vector(cb, rule, &|x| data.f(x));
            let mom = ops.hr.divergence(&sig) + &pf;
            let p = state.p.rows(c * np, np).into_owned();
            let phi = biot_phi.rows(c * np, np).into_owned();
            let z = map.gather(&d.mesh, Field::Z, c, &state.z);
            let pg = project_scalar(cb, rule, &|x| data.g(x));
            let tr = &ops.hr.trace * &sig;
            let mass = &p * pr.s0 + (tr + &p * (2.0 * pr.alpha) + &phi * (2.0 * pr.beta)) * (pr.alpha / ls)
                + ops.hdiv.divergence(&z)
                - &pg;
            let zeta = map.gather(&d.mesh, Field::Zeta, c, &state.zeta);
            let pl = project_scalar(cb, rule, &|x| data.ell(x));
            let diff = state.phi.rows(c * np, np) + ops.hdiv.divergence(&zeta) - &pl;
            [rms(&mom, true), rms(&mass, false), rms(&diff, false), rms(&pf, true), rms(&pg, false), rms(&pl, false)]
        })
        .collect();
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    let max = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    BalanceResiduals { momentum: col(0), mass: col(1), diffusion: col(2), scale: [max(3), max(4), max(5)] }
}

/// `(1 / h_K) int_K v . m` companion moments of a displacement, for output.
pub fn displacement_moments(cb: &CellBasis, coef: &[f64]) -> DVec {
    let np = dim_p(cb.k);
    (cb.vector_gram_k() * DVec::from_column_slice(&coef[..2 * np])) / cb.h()
}

/// Discrete fields evaluated at one cell centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSample {
    pub centroid: Vec2,
    /// Frobenius norm of `Pi^C sigma_h`.
    pub sigma: f64,
    pub p: f64,
    pub u: f64,
    /// `|Pi^0 z_h|`.
    pub z: f64,
    /// `|Pi^0 zeta_h|`.
    pub zeta: f64,
    pub phi: f64,
}

/// One [`CellSample`] per cell, in cell order.
pub fn cell_samples(d: &Discretization, state: &FieldState) -> Vec<CellSample> {
    let map = &d.map;
    let np = map.np();
    d.cells
        .par_iter()
        .enumerate()
        .map(|(c, ops)| {
            let cb = &ops.basis;
            let x = cb.frame.center();
            let sig = ops.hr.project(&map.gather(&d.mesh, Field::Sigma, c, &state.sigma));
            let z = ops.hdiv.project(&map.gather(&d.mesh, Field::Z, c, &state.z));
            let zeta = ops.hdiv.project(&map.gather(&d.mesh, Field::Zeta, c, &state.zeta));
            CellSample {
                centroid: x,
                sigma: HrSpace::eval_projection(cb, sig.as_slice(), x).norm(),
                p: eval_scalar(cb, state.p.rows(c * np, np).as_slice(), x),
                u: eval_vec(cb, state.u.rows(2 * c * np, 2 * np).as_slice(), x).norm(),
                z: eval_vec(cb, z.as_slice(), x).norm(),
                zeta: eval_vec(cb, zeta.as_slice(), x).norm(),
                phi: eval_scalar(cb, state.phi.rows(c * np, np).as_slice(), x),
            }
        })
        .collect()
}
