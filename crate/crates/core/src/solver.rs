//! Sparse block solves and the Picard loop coupling the Biot and diffusion systems.

use std::sync::Arc;
use std::time::{Duration, Instant};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::prelude::Solve;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::linalg::LuError;
use faer::sparse::SparseColMat;
use faer::{Conj, Mat, Par, Side};
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    assemble_biot_operator, assemble_diffusion, assemble_functionals, sparse_apply, AssemblyError, BlockSystem,
    Discretization, Field, GlobalDofMap, ProblemData,
};
use crate::DVec;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix is structurally singular at pivot {0}")]
    SymbolicSingular(usize),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solution is not finite (zero pivot near row {0})")]
    NotFinite(usize),
    #[error("relative residual {0:.3e} above 1e-10 after refinement")]
    Residual(f64),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Relative residual target for [`solve_block`].
pub const RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINEMENT: usize = 20;

fn lu_error(e: LuError) -> SolveError {
    match e {
        LuError::SymbolicSingular { index } => SolveError::SymbolicSingular(index),
        LuError::Generic(g) => SolveError::Factorization(format!("{g:?}")),
    }
}

/// Symbolic LDL^T analysis (AMD ordering) that can be shared between
/// matrices with the same lower-triangular pattern.
#[derive(Clone)]
pub struct SymbolicAnalysis {
    symbolic: Arc<SymbolicCholesky<usize>>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SymbolicAnalysis {
    pub fn new(matrix: &SparseColMat<usize, f64>) -> Result<Self, SolveError> {
        let symbolic = factorize_symbolic_cholesky(
            matrix.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(SymbolicAnalysis {
            symbolic: Arc::new(symbolic),
            col_ptr: matrix.col_ptr().to_vec(),
            row_idx: matrix.row_idx().to_vec(),
        })
    }

    pub fn fits(&self, matrix: &SparseColMat<usize, f64>) -> bool {
        self.col_ptr.as_slice() == matrix.col_ptr() && self.row_idx.as_slice() == matrix.row_idx()
    }

    /// Number of stored entries in the factor.
    pub fn factor_len(&self) -> usize {
        self.symbolic.len_val()
    }
}

enum Numeric {
    Ldlt { symbolic: Arc<SymbolicCholesky<usize>>, values: Vec<f64> },
    Lu(Lu<usize, f64>),
}

/// A numeric factorization together with the matrix it came from.
///
/// Symmetric matrices are factored as `L D L^T` with static pivoting: a pivot
/// whose sign disagrees with the expected inertia, or that is tiny, is replaced
/// by a small signed value and the perturbation is removed by iterative
/// refinement against the original matrix. If that fails, sparse LU with
/// partial pivoting is used instead.
pub struct Factorization<'a> {
    matrix: &'a SparseColMat<usize, f64>,
    numeric: Numeric,
}

impl<'a> Factorization<'a> {
    /// LU factorization without symmetry assumptions.
    pub fn lu(matrix: &'a SparseColMat<usize, f64>) -> Result<Self, SolveError> {
        let lu = matrix.sp_lu().map_err(lu_error)?;
        Ok(Factorization { matrix, numeric: Numeric::Lu(lu) })
    }

    /// Regularized LDL^T. `signs[i]` is the expected sign of pivot `i`
    /// (`+1` for primal, `-1` for multiplier unknowns).
    pub fn ldlt(
        matrix: &'a SparseColMat<usize, f64>,
        signs: &[i8],
        analysis: Option<&SymbolicAnalysis>,
    ) -> Result<Self, SolveError> {
        let n = matrix.nrows();
        if signs.len() != n {
            return Err(SolveError::Dimension { what: "pivot signs", expected: n, got: signs.len() });
        }
        let owned;
        let analysis = match analysis {
            Some(a) if a.fits(matrix) => a,
            _ => {
                owned = SymbolicAnalysis::new(matrix)?;
                &owned
            }
        };
        let symbolic = analysis.symbolic.clone();
        let scale = matrix.val().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut values = vec![0.0; symbolic.len_val()];
        let par = Par::Seq;
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(par, Default::default()));
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                matrix.as_ref(),
                Side::Lower,
                LdltRegularization {
                    dynamic_regularization_signs: Some(signs),
                    dynamic_regularization_delta: scale * 1e-10,
                    dynamic_regularization_epsilon: scale * 1e-13,
                },
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Factorization { matrix, numeric: Numeric::Ldlt { symbolic, values } })
    }

    pub fn method(&self) -> &'static str {
        match self.numeric {
            Numeric::Ldlt { .. } => "sparse LDL^T (AMD ordering, signed static pivoting, iterative refinement)",
            Numeric::Lu(_) => "sparse LU with partial pivoting, iterative refinement",
        }
    }

    fn raw_solve(&self, b: &DVec) -> DVec {
        let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        match &self.numeric {
            Numeric::Ldlt { symbolic, values } => {
                let par = Par::Seq;
                let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, par));
                LdltRef::<usize, f64>::new(symbolic, values).solve_in_place_with_conj(
                    Conj::No,
                    x.as_mut(),
                    par,
                    MemStack::new(&mut mem),
                );
            }
            Numeric::Lu(lu) => lu.solve_in_place(x.as_mut()),
        }
        DVec::from_fn(b.len(), |i, _| x[(i, 0)])
    }

    /// Solves `A x = b` with iterative refinement.
    /// Returns the solution and its relative residual.
    pub fn solve(&self, b: &DVec) -> Result<(DVec, f64), SolveError> {
        let n = self.matrix.nrows();
        if b.len() != n {
            return Err(SolveError::Dimension { what: "right-hand side", expected: n, got: b.len() });
        }
        let bn = b.norm();
        if bn == 0.0 {
            return Ok((DVec::zeros(n), 0.0));
        }
        let mut x = self.raw_solve(b);
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolveError::NotFinite(i));
        }
        let mut r = b - sparse_apply(self.matrix, &x);
        let mut rel = r.norm() / bn;
        for _ in 0..MAX_REFINEMENT {
            if rel <= 1e-14 {
                break;
            }
            let cand = &x + self.raw_solve(&r);
            let rc = b - sparse_apply(self.matrix, &cand);
            let relc = rc.norm() / bn;
            if !(relc < rel) {
                break;
            }
            x = cand;
            r = rc;
            rel = relc;
        }
        if rel > RESIDUAL_TOL {
            return Err(SolveError::Residual(rel));
        }
        Ok((x, rel))
    }
}

/// Factors with LDL^T and falls back to LU if that factorization cannot
/// reach the residual target on `probe`.
pub fn factor_symmetric<'a>(
    matrix: &'a SparseColMat<usize, f64>,
    signs: &[i8],
    analysis: Option<&SymbolicAnalysis>,
    probe: &DVec,
) -> Result<Factorization<'a>, SolveError> {
    match Factorization::ldlt(matrix, signs, analysis) {
        Ok(f) => match f.solve(probe) {
            Ok(_) => return Ok(f),
            Err(e) => log::warn!("LDL^T rejected ({e}), falling back to LU"),
        },
        Err(e) => log::warn!("LDL^T failed ({e}), falling back to LU"),
    }
    Factorization::lu(matrix)
}

/// Solves a block system by sparse LU. Returns the solution and its relative residual.
pub fn solve_block(system: &BlockSystem) -> Result<(DVec, f64), SolveError> {
    if system.rhs.norm() == 0.0 {
        return Ok((DVec::zeros(system.dim()), 0.0));
    }
    Factorization::lu(&system.matrix)?.solve(&system.rhs)
}

/// Expected pivot signs: `+1` for the listed positive ranges and for
/// constrained rows, `-1` elsewhere.
pub fn pivot_signs(n: usize, positive: &[std::ops::Range<usize>], constrained: &[usize]) -> Vec<i8> {
    let mut s = vec![-1i8; n];
    for r in positive {
        s[r.clone()].iter_mut().for_each(|v| *v = 1);
    }
    for &c in constrained {
        s[c] = 1;
    }
    s
}

/// Global coefficient vectors of the six fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub sigma: DVec,
    pub p: DVec,
    pub u: DVec,
    pub z: DVec,
    pub zeta: DVec,
    pub phi: DVec,
}

impl FieldState {
    pub fn zeros(map: &GlobalDofMap) -> Self {
        FieldState {
            sigma: DVec::zeros(map.size(Field::Sigma)),
            p: DVec::zeros(map.size(Field::P)),
            u: DVec::zeros(map.size(Field::U)),
            z: DVec::zeros(map.size(Field::Z)),
            zeta: DVec::zeros(map.size(Field::Zeta)),
            phi: DVec::zeros(map.size(Field::Phi)),
        }
    }

    pub fn field(&self, f: Field) -> &DVec {
        match f {
            Field::Sigma => &self.sigma,
            Field::P => &self.p,
            Field::U => &self.u,
            Field::Z => &self.z,
            Field::Zeta => &self.zeta,
            Field::Phi => &self.phi,
        }
    }

    pub fn field_mut(&mut self, f: Field) -> &mut DVec {
        match f {
            Field::Sigma => &mut self.sigma,
            Field::P => &mut self.p,
            Field::U => &mut self.u,
            Field::Z => &mut self.z,
            Field::Zeta => &mut self.zeta,
            Field::Phi => &mut self.phi,
        }
    }

    pub fn matches(&self, map: &GlobalDofMap) -> bool {
        Field::ALL.iter().all(|f| self.field(*f).len() == map.size(*f))
    }

    /// Concatenation in field order.
    pub fn concat(&self) -> DVec {
        let n: usize = Field::ALL.iter().map(|f| self.field(*f).len()).sum();
        DVec::from_iterator(n, Field::ALL.iter().flat_map(|f| self.field(*f).iter().copied()))
    }

    fn set_biot(&mut self, map: &GlobalDofMap, x: &DVec) {
        for f in [Field::Sigma, Field::P, Field::U, Field::Z] {
            let r = map.range(f);
            *self.field_mut(f) = x.rows(r.start, r.len()).into_owned();
        }
    }

    fn set_diffusion(&mut self, map: &GlobalDofMap, x: &DVec) {
        let off = map.range(Field::Zeta).start;
        for f in [Field::Zeta, Field::Phi] {
            let r = map.range(f);
            *self.field_mut(f) = x.rows(r.start - off, r.len()).into_owned();
        }
    }

    /// Per-cell `M_k` coefficients of `tr Pi^C sigma`.
    pub fn stress_traces(&self, d: &Discretization) -> Vec<DVec> {
        d.cells
            .par_iter()
            .enumerate()
            .map(|(c, ops)| {
                let local = d.map.gather(&d.mesh, Field::Sigma, c, &self.sigma);
                &ops.hr.trace * local
            })
            .collect()
    }
}

/// Which DoFs enter the Picard increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IncrementNorm {
    #[default]
    All,
    Phi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial concentration; `None` means zero.
    pub initial_phi: Option<DVec>,
    pub norm: IncrementNorm,
    /// Divide the increment by the norm of the new iterate.
    pub relative: bool,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { tolerance: 5e-6, max_iterations: 50, initial_phi: None, norm: IncrementNorm::All, relative: false }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(SolveError::Factorization(format!(
                "invalid fixed-point settings: tolerance {} max_iterations {}",
                self.tolerance, self.max_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub increments: Vec<f64>,
    /// Relative residuals of every linear solve, Biot and diffusion alternating.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
    pub linear_solver: &'static str,
    pub initial_guess: &'static str,
    /// Concentration entering the last Biot solve.
    pub biot_phi: DVec,
}

impl SolveReport {
    /// Successive increment ratios.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.increments.windows(2).map(|w| w[1] / w[0]).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn increment(cfg: &FixedPointConfig, old: &FieldState, new: &FieldState) -> f64 {
    let (a, b) = match cfg.norm {
        IncrementNorm::All => (old.concat(), new.concat()),
        IncrementNorm::Phi => (old.phi.clone(), new.phi.clone()),
    };
    let inc = (&b - &a).norm();
    if cfg.relative {
        let s = b.norm();
        if s > 0.0 {
            return inc / s;
        }
    }
    inc
}

/// Picard iteration: Biot solve with the previous concentration, projected
/// stress traces, diffusion solve, until the DoF increment falls below the
/// tolerance. Non-convergence is reported through `SolveReport::converged`.
pub fn picard(
    d: &Discretization,
    data: &dyn ProblemData,
    cfg: &FixedPointConfig,
) -> Result<(FieldState, SolveReport), SolveError> {
    cfg.validate()?;
    let start = Instant::now();
    let map = &d.map;
    let mut state = FieldState::zeros(map);
    let initial_guess = match &cfg.initial_phi {
        Some(phi) => {
            if phi.len() != map.size(Field::Phi) {
                return Err(SolveError::Dimension { what: "initial concentration", expected: map.size(Field::Phi), got: phi.len() });
            }
            state.phi = phi.clone();
            "user-supplied concentration"
        }
        None => "zero concentration",
    };
    let fun = assemble_functionals(d, data);
    let biot = assemble_biot_operator(d, data, &fun)?;
    let off = map.range(Field::Zeta).start;
    let biot_signs = pivot_signs(
        map.n_biot(),
        &[map.range(Field::Sigma).start..map.range(Field::P).end],
        &biot.system.constrained,
    );
    let probe = DVec::from_element(map.n_biot(), 1.0);
    let biot_lu = factor_symmetric(&biot.system.matrix, &biot_signs, None, &probe)?;
    let zeta_range = map.range(Field::Zeta);
    let mut diff_symbolic: Option<SymbolicAnalysis> = None;
    let mut diff_signs: Option<Vec<i8>> = None;

    let mut report = SolveReport {
        iterations: 0,
        increments: Vec::new(),
        residuals: Vec::new(),
        converged: false,
        wall_time: Duration::ZERO,
        linear_solver: biot_lu.method(),
        initial_guess,
        biot_phi: state.phi.clone(),
    };
    let mut best: Option<(f64, FieldState, DVec)> = None;
    for it in 1..=cfg.max_iterations {
        let mut next = state.clone();
        report.biot_phi = state.phi.clone();
        let rhs = biot.rhs(d, &state.phi)?;
        let (xb, rb) = biot_lu.solve(&rhs)?;
        next.set_biot(map, &xb);
        report.residuals.push(rb);

        let traces = next.stress_traces(d);
        let sys = assemble_diffusion(d, data, &fun, &traces)?;
        let m = &sys.matrix;
        if !diff_symbolic.as_ref().is_some_and(|a| a.fits(m)) {
            diff_symbolic = Some(SymbolicAnalysis::new(m)?);
        }
        let signs = diff_signs.get_or_insert_with(|| {
            pivot_signs(map.n_diffusion(), &[zeta_range.start - off..zeta_range.end - off], &sys.constrained)
        });
        let (xd, rd) = match Factorization::ldlt(m, signs, diff_symbolic.as_ref()).and_then(|f| f.solve(&sys.rhs)) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("diffusion LDL^T failed ({e}), falling back to LU");
                Factorization::lu(m)?.solve(&sys.rhs)?
            }
        };
        next.set_diffusion(map, &xd);
        report.residuals.push(rd);

        let inc = increment(cfg, &state, &next);
        report.increments.push(inc);
        report.iterations = it;
        log::debug!("picard iteration {it}: increment {inc:.3e}, residuals {rb:.1e} {rd:.1e}");
        state = next;
        if inc <= cfg.tolerance {
            report.converged = true;
            break;
        }
        if best.as_ref().map_or(true, |(b, _, _)| inc < *b) {
            best = Some((inc, state.clone(), report.biot_phi.clone()));
        }
    }
    if !report.converged {
        log::warn!("picard did not converge in {} iterations", cfg.max_iterations);
        if let Some((_, s, phi)) = best {
            state = s;
            report.biot_phi = phi;
        }
    }
    report.wall_time = start.elapsed();
    Ok((state, report))
}
