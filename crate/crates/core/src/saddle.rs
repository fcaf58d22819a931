//! Finite-dimensional checks of the well-posedness theorem for Q-elliptic
//! perturbed saddle-point problems
//!
//! ```text
//! [ A  B^T ] [sigma]   [F]
//! [ B  -C  ] [  u  ] = [G]
//! ```
//!
//! with `A` positive semi-definite, `B` (m x n) injective with smallest singular
//! value `beta_hat`, and `C` symmetric positive definite with smallest eigenvalue
//! `gamma`. Euclidean norms stand in for the norms of `H` and `Q`.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::{DMat, DVec};

#[derive(Debug, Error, PartialEq)]
pub enum SaddleError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("hypothesis {0} violated: {1}")]
    Hypothesis(&'static str, String),
    #[error("saddle-point matrix is singular")]
    Singular,
    #[error("relative residual {0:.3e} above 1e-10")]
    Residual(f64),
}

/// Problem data. `b` is `m x n`, `a` is `n x n`, `c` is `m x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSaddleInstance {
    pub a: DMat,
    pub b: DMat,
    pub c: DMat,
    pub f: DVec,
    pub g: DVec,
}

/// Quantities entering the hypotheses and the a priori constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypotheses {
    /// Smallest eigenvalue of `(A + A^T) / 2`.
    pub a_min_eig: f64,
    /// Smallest singular value of `B`.
    pub beta_hat: f64,
    /// Largest singular value of `B`.
    pub norm_b: f64,
    /// Smallest eigenvalue of `C`.
    pub gamma: f64,
    /// Largest singular value of `C`.
    pub norm_c: f64,
    pub c_asymmetry: f64,
}

impl Hypotheses {
    pub fn check(&self) -> Result<(), SaddleError> {
        if self.a_min_eig < -1e-12 {
            return Err(SaddleError::Hypothesis("i", format!("a is indefinite, min eigenvalue {:.3e}", self.a_min_eig)));
        }
        if !(self.beta_hat > 1e-12 * self.norm_b) {
            return Err(SaddleError::Hypothesis("ii", format!("transposed inf-sup constant {:.3e}", self.beta_hat)));
        }
        if !(self.gamma > 1e-12 * self.norm_c) || self.c_asymmetry > 1e-12 * self.norm_c.max(1.0) {
            return Err(SaddleError::Hypothesis("iii", format!("gamma {:.3e}, asymmetry {:.3e}", self.gamma, self.c_asymmetry)));
        }
        Ok(())
    }

    /// Ellipticity constant of `Theta`: `gamma beta_hat^2 / |c|^2`.
    pub fn alpha_theta(&self) -> f64 {
        self.gamma * self.beta_hat * self.beta_hat / (self.norm_c * self.norm_c)
    }

    /// `[C_sigma_F, C_sigma_G, C_u_F, C_u_G]` from the proof of the theorem.
    pub fn constants(&self) -> [f64; 4] {
        let (b, c, g, bh) = (self.norm_b, self.norm_c, self.gamma, self.beta_hat);
        let s_f = c * c / (g * bh * bh);
        let s_g = b * c * c / (g * g * bh * bh);
        let u_g = b * b * c * c / (g * g * g * bh * bh) + 1.0 / g;
        [s_f, s_g, s_g, u_g]
    }
}

fn singular_extremes(m: &DMat) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

fn min_eig_sym(m: &DMat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

impl PerturbedSaddleInstance {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate_shapes(&self) -> Result<(), SaddleError> {
        let (n, m) = (self.a.nrows(), self.c.nrows());
        let dims = [
            ("a columns", n, self.a.ncols()),
            ("b rows", m, self.b.nrows()),
            ("b columns", n, self.b.ncols()),
            ("c columns", m, self.c.ncols()),
            ("F length", n, self.f.len()),
            ("G length", m, self.g.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(SaddleError::Dimension { what, expected, got });
            }
        }
        if m < n || n == 0 {
            return Err(SaddleError::Dimension { what: "m >= n >= 1, m", expected: n.max(1), got: m });
        }
        Ok(())
    }

    pub fn hypotheses(&self) -> Hypotheses {
        let (beta_hat, norm_b) = singular_extremes(&self.b);
        let (_, norm_c) = singular_extremes(&self.c);
        Hypotheses {
            a_min_eig: min_eig_sym(&self.a),
            beta_hat,
            norm_b,
            gamma: min_eig_sym(&self.c),
            norm_c,
            c_asymmetry: (&self.c - self.c.transpose()).amax(),
        }
    }

    /// The full `(n + m) x (n + m)` matrix.
    pub fn matrix(&self) -> DMat {
        let (n, m) = (self.n(), self.m());
        let mut k = DMat::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.a);
        k.view_mut((0, n), (n, m)).copy_from(&self.b.transpose());
        k.view_mut((n, 0), (m, n)).copy_from(&self.b);
        k.view_mut((n, n), (m, m)).copy_from(&(-&self.c));
        k
    }

    /// `u_zeta = C^-1 B zeta`.
    pub fn u_of(&self, zeta: &DVec) -> Option<DVec> {
        self.c.clone().lu().solve(&(&self.b * zeta))
    }

    /// `Theta(zeta, zeta) = zeta^T A zeta + zeta^T B^T u_zeta`.
    pub fn theta(&self, zeta: &DVec) -> Option<f64> {
        let u = self.u_of(zeta)?;
        Some(zeta.dot(&(&self.a * zeta)) + (&self.b * zeta).dot(&u))
    }

    pub fn with_loads(&self, f: DVec, g: DVec) -> Self {
        PerturbedSaddleInstance { f, g, ..self.clone() }
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMat {
    let r = DMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    r.qr().q()
}

/// Random instance satisfying the three hypotheses. `A = R^T R` with `R`
/// possibly rank deficient, singular values of `B` in `[0.5, 2]`, eigenvalues
/// of `C` in `[0.5, 3]`.
pub fn random_instance(n: usize, m: usize, seed: u64) -> Result<PerturbedSaddleInstance, SaddleError> {
    if n == 0 || m < n {
        return Err(SaddleError::Dimension { what: "m >= n >= 1, m", expected: n.max(1), got: m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = rng.gen_range(0..=n);
    let r = DMat::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
    let a = r.transpose() * r;
    let u = random_orthogonal(&mut rng, m);
    let v = random_orthogonal(&mut rng, n);
    let mut s = DMat::zeros(m, n);
    for i in 0..n {
        s[(i, i)] = rng.gen_range(0.5..=2.0);
    }
    let b = u * s * v.transpose();
    let q = random_orthogonal(&mut rng, m);
    let lam = DMat::from_diagonal(&DVec::from_fn(m, |_, _| rng.gen_range(0.5..=3.0)));
    let c = &q * lam * q.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let f = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let g = DVec::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    Ok(PerturbedSaddleInstance { a, b, c, f, g })
}

/// Solves the perturbed saddle-point system by dense LU with one refinement step.
/// Returns `(sigma, u, relative residual)`.
pub fn solve_perturbed(inst: &PerturbedSaddleInstance) -> Result<(DVec, DVec, f64), SaddleError> {
    inst.validate_shapes()?;
    let (n, m) = (inst.n(), inst.m());
    let k = inst.matrix();
    let rhs = DVec::from_iterator(n + m, inst.f.iter().chain(inst.g.iter()).copied());
    let bn = rhs.norm();
    if bn == 0.0 {
        return Ok((DVec::zeros(n), DVec::zeros(m), 0.0));
    }
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(SaddleError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::Singular);
    }
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        let cand = &x + dx;
        if (&rhs - &k * &cand).norm() < r.norm() {
            x = cand;
        }
    }
    let res = (&rhs - &k * &x).norm() / bn;
    if res > 1e-10 {
        return Err(SaddleError::Residual(res));
    }
    Ok((x.rows(0, n).into_owned(), x.rows(n, m).into_owned(), res))
}

/// A load or direction for which a check failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub vector: DVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub hypotheses: Hypotheses,
    pub sigma_norm: f64,
    pub u_norm: f64,
    /// `[C_sigma_F, C_sigma_G, C_u_F, C_u_G]`.
    pub constants: [f64; 4],
    pub sigma_bound: f64,
    pub u_bound: f64,
    pub residual: f64,
    /// Norm of the solution with zero loads.
    pub homogeneous_norm: f64,
    pub alpha_theta: f64,
    /// Smallest `Theta(zeta, zeta) / |zeta|^2` over the sampled directions.
    pub theta_min_ratio: f64,
    pub directions: usize,
    pub linearity_error: f64,
    pub violations: Vec<Violation>,
}

impl BoundReport {
    pub fn sigma_ok(&self) -> bool {
        self.sigma_norm <= self.sigma_bound * (1.0 + 1e-12)
    }

    pub fn u_ok(&self) -> bool {
        self.u_norm <= self.u_bound * (1.0 + 1e-12)
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the a priori bounds for the instance loads, `Theta`-ellipticity on
/// `directions` random unit vectors, uniqueness and the linearity of
/// `zeta -> u_zeta`.
pub fn verify_theorem(inst: &PerturbedSaddleInstance, directions: usize, seed: u64) -> Result<BoundReport, SaddleError> {
    inst.validate_shapes()?;
    let hyp = inst.hypotheses();
    hyp.check()?;
    let (sigma, u, residual) = solve_perturbed(inst)?;
    let constants = hyp.constants();
    let (nf, ng) = (inst.f.norm(), inst.g.norm());
    let sigma_bound = constants[0] * nf + constants[1] * ng;
    let u_bound = constants[2] * nf + constants[3] * ng;
    let load = DVec::from_iterator(inst.n() + inst.m(), inst.f.iter().chain(inst.g.iter()).copied());
    let mut violations = Vec::new();
    if sigma.norm() > sigma_bound * (1.0 + 1e-12) {
        violations.push(Violation { check: "sigma bound", lhs: sigma.norm(), rhs: sigma_bound, vector: load.clone() });
    }
    if u.norm() > u_bound * (1.0 + 1e-12) {
        violations.push(Violation { check: "u bound", lhs: u.norm(), rhs: u_bound, vector: load });
    }

    let zero = inst.with_loads(DVec::zeros(inst.n()), DVec::zeros(inst.m()));
    let (s0, u0, _) = solve_perturbed(&zero)?;
    let homogeneous_norm = (s0.norm_squared() + u0.norm_squared()).sqrt();
    if homogeneous_norm > 1e-12 {
        violations.push(Violation { check: "uniqueness", lhs: homogeneous_norm, rhs: 1e-12, vector: DVec::zeros(0) });
    }

    let alpha_theta = hyp.alpha_theta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta_min_ratio = f64::INFINITY;
    for _ in 0..directions {
        let mut z = DVec::from_fn(inst.n(), |_, _| rng.gen_range(-1.0..1.0));
        let zn = z.norm();
        if zn == 0.0 {
            continue;
        }
        z /= zn;
        let t = inst.theta(&z).ok_or(SaddleError::Singular)?;
        theta_min_ratio = theta_min_ratio.min(t);
        if t < alpha_theta * (1.0 - 1e-12) {
            violations.push(Violation { check: "theta ellipticity", lhs: t, rhs: alpha_theta, vector: z });
        }
    }

    let z1 = DVec::from_fn(inst.n(), |_, _| rng.gen_range(-1.0..1.0));
    let z2 = DVec::from_fn(inst.n(), |_, _| rng.gen_range(-1.0..1.0));
    let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let u12 = inst.u_of(&(&z1 * x + &z2 * y)).ok_or(SaddleError::Singular)?;
    let (u1, u2) = (inst.u_of(&z1).ok_or(SaddleError::Singular)?, inst.u_of(&z2).ok_or(SaddleError::Singular)?);
    let comb = &u1 * x + &u2 * y;
    let linearity_error = (&u12 - &comb).norm() / comb.norm().max(1.0);
    if linearity_error > 1e-12 {
        violations.push(Violation { check: "linearity", lhs: linearity_error, rhs: 1e-12, vector: z1 });
    }

    Ok(BoundReport {
        hypotheses: hyp,
        sigma_norm: sigma.norm(),
        u_norm: u.norm(),
        constants,
        sigma_bound,
        u_bound,
        residual,
        homogeneous_norm,
        alpha_theta,
        theta_min_ratio,
        directions,
        linearity_error,
        violations,
    })
}

/// Cross-check against the classical coercive estimate: when `A` is positive
/// definite with smallest eigenvalue `alpha`, testing with `(sigma, -u)` gives
/// `|(sigma, u)| <= |(F, G)| / min(alpha, gamma)`. Returns `(lhs, rhs)`, or
/// `None` when `A` is singular.
pub fn classical_cross_check(inst: &PerturbedSaddleInstance) -> Result<Option<(f64, f64)>, SaddleError> {
    let hyp = inst.hypotheses();
    if hyp.a_min_eig <= 1e-12 {
        return Ok(None);
    }
    let (sigma, u, _) = solve_perturbed(inst)?;
    let lhs = (sigma.norm_squared() + u.norm_squared()).sqrt();
    let rhs = (inst.f.norm_squared() + inst.g.norm_squared()).sqrt() / hyp.a_min_eig.min(hyp.gamma);
    Ok(Some((lhs, rhs)))
}

/// Outcome of the hypothesis-necessity probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub gamma: f64,
    /// Smallest singular value of the full matrix relative to the largest.
    pub relative_min_singular: f64,
    pub hypothesis_rejected: bool,
    pub singular: bool,
}

/// Replaces `C` of an instance with `m > n` by a semi-definite matrix whose
/// null vector also annihilates `B^T`, so that `(0, v)` lies in the kernel of
/// the full matrix.
pub fn degenerate_c_probe(n: usize, m: usize, seed: u64) -> Result<ProbeOutcome, SaddleError> {
    if m <= n {
        return Err(SaddleError::Dimension { what: "m > n, m", expected: n + 1, got: m });
    }
    let mut inst = random_instance(n, m, seed)?;
    let svd = inst.b.clone().svd(true, false);
    let u_full = svd.u.expect("left singular vectors requested");
    // thin SVD: complete the range of B to find a vector orthogonal to it
    let proj = DMat::identity(m, m) - &u_full * u_full.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut v = &proj * DVec::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    v /= v.norm();
    let p = DMat::identity(m, m) - &v * v.transpose();
    inst.c = &p * &inst.c * &p;
    inst.c = (&inst.c + inst.c.transpose()) * 0.5;
    let hyp = inst.hypotheses();
    let sv = inst.matrix().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rel = min / max;
    Ok(ProbeOutcome {
        gamma: hyp.gamma,
        relative_min_singular: rel,
        hypothesis_rejected: hyp.check().is_err(),
        singular: rel <= 1e-12 || solve_perturbed(&inst).is_err(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub passed: usize,
    pub max_residual: f64,
    pub max_homogeneous: f64,
    pub failures: Vec<(u64, String)>,
}

impl TrialSummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

/// Runs [`verify_theorem`] on `trials` random instances with `m, n <= max_dim`.
pub fn run_trials(trials: usize, max_dim: usize, directions: usize, seed: u64) -> TrialSummary {
    let max_dim = max_dim.max(1);
    let results: Vec<(u64, Result<BoundReport, SaddleError>)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = rng.gen_range(1..=max_dim);
            let m = rng.gen_range(n..=max_dim);
            let r = random_instance(n, m, s).and_then(|inst| verify_theorem(&inst, directions, s));
            (s, r)
        })
        .collect();
    let mut summary = TrialSummary { trials, passed: 0, max_residual: 0.0, max_homogeneous: 0.0, failures: Vec::new() };
    for (s, r) in results {
        match r {
            Ok(rep) => {
                summary.max_residual = summary.max_residual.max(rep.residual);
                summary.max_homogeneous = summary.max_homogeneous.max(rep.homogeneous_norm);
                if rep.passed() {
                    summary.passed += 1;
                } else {
                    let names: Vec<_> = rep.violations.iter().map(|v| v.check).collect();
                    summary.failures.push((s, names.join(", ")));
                }
            }
            Err(e) => summary.failures.push((s, e.to_string())),
        }
    }
    summary
}
