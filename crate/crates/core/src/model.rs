//! Material parameters, isotropic elasticity operators and the stress-assisted
//! diffusivity law.

use nalgebra::Matrix2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} out of range ({rule})")]
    OutOfRange { name: &'static str, value: f64, rule: &'static str },
    #[error("permeability is not symmetric positive definite (eigenvalues {0}, {1})")]
    KappaNotSpd(f64, f64),
}

/// Symmetric 2x2 tensor stored as `(t11, t12, t22)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub t11: f64,
    pub t12: f64,
    pub t22: f64,
}

impl SymTensor2 {
    pub const fn new(t11: f64, t12: f64, t22: f64) -> Self {
        SymTensor2 { t11, t12, t22 }
    }

    pub const fn identity() -> Self {
        SymTensor2::new(1.0, 0.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        self.t11 + self.t22
    }

    /// `self : other`
    pub fn ddot(&self, other: &SymTensor2) -> f64 {
        self.t11 * other.t11 + 2.0 * self.t12 * other.t12 + self.t22 * other.t22
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymTensor2::new(self.t11 * s, self.t12 * s, self.t22 * s)
    }

    pub fn add(&self, o: &SymTensor2) -> Self {
        SymTensor2::new(self.t11 + o.t11, self.t12 + o.t12, self.t22 + o.t22)
    }

    /// `t n`
    pub fn apply(&self, n: crate::Vec2) -> crate::Vec2 {
        crate::Vec2::new(self.t11 * n.x + self.t12 * n.y, self.t12 * n.x + self.t22 * n.y)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t11, self.t12, self.t22]
    }
}

/// Weight of the traction stabilization `h_K w / 2 * int_{dK} sigma n . tau n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StressStabilization {
    /// `w = tr(C^-1)`, comparable to the compliance form uniformly in lambda.
    #[default]
    ComplianceTrace,
    /// `w = tr(C) = 2 lambda + 6 mu`; grows with lambda.
    StiffnessTrace,
}

/// Parameters of the coupled model. Defaults are unit values with `eta1 = 1e-3`
/// and `kappa = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s0: f64,
    pub kappa: Matrix2<f64>,
    pub rho0: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub stress_stabilization: StressStabilization,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            mu: 1.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
            s0: 1.0,
            kappa: Matrix2::identity(),
            rho0: 1.0,
            eta0: 1.0,
            eta1: 1e-3,
            stress_stabilization: StressStabilization::ComplianceTrace,
        }
    }
}

fn check(name: &'static str, value: f64, ok: bool, rule: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::OutOfRange { name, value, rule })
    }
}

impl MaterialParams {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check("mu", self.mu, self.mu > 0.0, "> 0")?;
        check("lambda", self.lambda, self.lambda >= 0.0, ">= 0")?;
        check("alpha", self.alpha, true, "finite")?;
        check("beta", self.beta, true, "finite")?;
        check("s0", self.s0, self.s0 >= 0.0, ">= 0")?;
        check("rho0", self.rho0, self.rho0 > 0.0, "> 0")?;
        check("eta0", self.eta0, self.eta0 > 0.0, "> 0")?;
        check("eta1", self.eta1, self.eta1 >= 0.0, ">= 0")?;
        check("2mu + 2lambda", self.lame_sum(), self.lame_sum() > 0.0, "> 0")?;
        let (k1, k2) = self.kappa_eigenvalues();
        let sym = (self.kappa[(0, 1)] - self.kappa[(1, 0)]).abs() <= 1e-14 * self.kappa.amax();
        if !sym || !(k1 > 0.0) {
            return Err(ModelError::KappaNotSpd(k1, k2));
        }
        Ok(())
    }

    /// `2 mu + d lambda` with `d = 2`.
    pub fn lame_sum(&self) -> f64 {
        2.0 * self.mu + 2.0 * self.lambda
    }

    /// Eigenvalues `k1 <= k2` of the symmetric part of `kappa`.
    pub fn kappa_eigenvalues(&self) -> (f64, f64) {
        let k = &self.kappa;
        let (a, b, c) = (k[(0, 0)], 0.5 * (k[(0, 1)] + k[(1, 0)]), k[(1, 1)]);
        let m = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (m - r, m + r)
    }

    pub fn kappa_inv(&self) -> Matrix2<f64> {
        self.kappa.try_inverse().expect("kappa is SPD")
    }

    /// `C eps = 2 mu eps + lambda tr(eps) I`
    pub fn apply_c(&self, eps: SymTensor2) -> SymTensor2 {
        let tr = self.lambda * eps.trace();
        SymTensor2::new(2.0 * self.mu * eps.t11 + tr, 2.0 * self.mu * eps.t12, 2.0 * self.mu * eps.t22 + tr)
    }

    /// `C^-1 sig = (sig - lambda / (2 mu + 2 lambda) tr(sig) I) / (2 mu)`
    pub fn apply_cinv(&self, sig: SymTensor2) -> SymTensor2 {
        let s = self.lambda / self.lame_sum() * sig.trace();
        let f = 1.0 / (2.0 * self.mu);
        SymTensor2::new(f * (sig.t11 - s), f * sig.t12, f * (sig.t22 - s))
    }

    /// Full trace `C_ijij = 2 lambda + 6 mu` of the 2D isotropic tensor.
    pub fn trace_c(&self) -> f64 {
        2.0 * self.lambda + 6.0 * self.mu
    }

    /// Full trace `(C^-1)_ijij = (3 - 2 lambda / (2 mu + 2 lambda)) / (2 mu)` of the compliance.
    pub fn trace_cinv(&self) -> f64 {
        (3.0 - 2.0 * self.lambda / self.lame_sum()) / (2.0 * self.mu)
    }

    /// Weight `w` of the traction stabilization.
    pub fn stress_stab_weight(&self) -> f64 {
        match self.stress_stabilization {
            StressStabilization::ComplianceTrace => self.trace_cinv(),
            StressStabilization::StiffnessTrace => self.trace_c(),
        }
    }

    /// `rho(t) = eta0 rho0 + exp(-eta1 t^2)`
    pub fn rho(&self, tr_sigma: f64) -> f64 {
        self.eta0 * self.rho0 + (-self.eta1 * tr_sigma * tr_sigma).exp()
    }

    pub fn rho_inv(&self, tr_sigma: f64) -> f64 {
        1.0 / self.rho(tr_sigma)
    }

    /// `d rho / d t`
    pub fn rho_prime(&self, tr_sigma: f64) -> f64 {
        -2.0 * self.eta1 * tr_sigma * (-self.eta1 * tr_sigma * tr_sigma).exp()
    }

    /// Bounds `[1/(eta0 rho0 + 1), 1/(eta0 rho0)]` of `rho^-1`.
    pub fn rho_inv_bounds(&self) -> (f64, f64) {
        let b = self.eta0 * self.rho0;
        (1.0 / (b + 1.0), 1.0 / b)
    }
}
