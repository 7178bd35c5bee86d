//! Reduced semi-discrete form `d_t a = Jhat(a) grad H(a) + Ghat(a) grad S(a)`
//! with `Jhat(a) = M^{-1} J(a) M^{-1}` and `Ghat(a) = M^{-1} G(a) M^{-1}`,
//! plus the discrete Poisson/metric brackets and the structural checks
//! (skewness, definiteness, degeneracy conditions, equilibria).

use crate::error::{Error, Result};
use crate::linalg::{max_norm, CsrMatrix, SpdSolver};

/// Declared sign of a model's metric operator `G`: entropy-producing models
/// use a positive semi-definite `G`, energy-dissipating ones a negative
/// semi-definite `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GSign {
    PositiveSemiDefinite,
    NegativeSemiDefinite,
}

pub type MatFn = Box<dyn Fn(&[f64]) -> Result<CsrMatrix> + Send + Sync>;
pub type VecFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A declared Casimir functional: conserved by the conservative part of the
/// dynamics regardless of the Hamiltonian.
pub struct Casimir {
    pub name: &'static str,
    pub gradient: VecFn,
}

/// All ingredients of one model, bundled for [`MetriplecticSystem::new`].
pub struct SystemParts {
    pub mass: CsrMatrix,
    pub j_builder: MatFn,
    pub g_builder: MatFn,
    pub grad_h: VecFn,
    pub grad_s: VecFn,
    pub h_value: ScalarFn,
    pub s_value: ScalarFn,
    pub g_sign: GSign,
    pub casimirs: Vec<Casimir>,
    /// True when the model satisfies the mutual degeneracy conditions
    /// `Ghat grad H = 0` and `Jhat grad S = 0`.
    pub metriplectic: bool,
}

pub struct MetriplecticSystem {
    n_dofs: usize,
    mass: CsrMatrix,
    mass_solver: SpdSolver,
    parts: SystemParts,
}

/// Coefficient vector of the P1 expansion at one instant.
#[derive(Debug, Clone)]
pub struct State {
    pub a: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(a: Vec<f64>, t: f64) -> Result<State> {
        if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(State { a, t })
    }
}

/// Norms reported by [`MetriplecticSystem::check_null_conditions`].
#[derive(Debug, Clone, Copy)]
pub struct NullConditionReport {
    /// `|| Ghat(a) grad H(a) ||_inf`
    pub g_grad_h_norm: f64,
    /// `|| Jhat(a) grad S(a) ||_inf`
    pub j_grad_s_norm: f64,
}

impl NullConditionReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.g_grad_h_norm <= tol && self.j_grad_s_norm <= tol
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MetriplecticSystem {
    pub fn new(parts: SystemParts) -> Result<MetriplecticSystem> {
        let n_dofs = parts.mass.n_rows();
        let mass = parts.mass.clone();
        let mass_solver = SpdSolver::new(&mass, 1e-13)?;
        Ok(MetriplecticSystem {
            n_dofs,
            mass,
            mass_solver,
            parts,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn mass_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.mass_solver.solve(rhs)
    }

    pub fn j_matrix(&self, a: &[f64]) -> Result<CsrMatrix> {
        (self.parts.j_builder)(a)
    }

    pub fn g_matrix(&self, a: &[f64]) -> Result<CsrMatrix> {
        (self.parts.g_builder)(a)
    }

    pub fn grad_h(&self, a: &[f64]) -> Vec<f64> {
        (self.parts.grad_h)(a)
    }

    pub fn grad_s(&self, a: &[f64]) -> Vec<f64> {
        (self.parts.grad_s)(a)
    }

    pub fn h_value(&self, a: &[f64]) -> f64 {
        (self.parts.h_value)(a)
    }

    pub fn s_value(&self, a: &[f64]) -> f64 {
        (self.parts.s_value)(a)
    }

    pub fn g_sign(&self) -> GSign {
        self.parts.g_sign
    }

    pub fn casimirs(&self) -> &[Casimir] {
        &self.parts.casimirs
    }

    pub fn is_metriplectic(&self) -> bool {
        self.parts.metriplectic
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_dofs {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `Jhat(a) w = M^{-1} J(a) M^{-1} w`.
    pub fn j_hat_apply(&self, a: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(a)?;
        self.check_len(w)?;
        let inner = self.mass_solver.solve(w)?;
        let j = self.j_matrix(a)?;
        self.mass_solver.solve(&j.matvec(&inner))
    }

    /// `Ghat(a) w = M^{-1} G(a) M^{-1} w`.
    pub fn g_hat_apply(&self, a: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(a)?;
        self.check_len(w)?;
        let inner = self.mass_solver.solve(w)?;
        let g = self.g_matrix(a)?;
        self.mass_solver.solve(&g.matvec(&inner))
    }

    /// Right-hand side of the reduced system: solves `M b = grad H`,
    /// `M c = grad S`, then `M x = J(a) b + G(a) c`.
    pub fn rhs(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.check_len(a)?;
        let b = self.mass_solver.solve(&self.grad_h(a))?;
        let c = self.mass_solver.solve(&self.grad_s(a))?;
        let j = self.j_matrix(a)?;
        let g = self.g_matrix(a)?;
        let jb = j.matvec(&b);
        let gc = g.matvec(&c);
        let sum: Vec<f64> = jb.iter().zip(&gc).map(|(x, y)| x + y).collect();
        self.mass_solver.solve(&sum)
    }

    /// Discrete Poisson bracket `{F, L}_N(a) = Jhat(a) grad F . grad L`.
    pub fn poisson_bracket(&self, a: &[f64], grad_f: &[f64], grad_l: &[f64]) -> Result<f64> {
        Ok(dot(&self.j_hat_apply(a, grad_f)?, grad_l))
    }

    /// Discrete metric bracket `(F, L)_N(a) = Ghat(a) grad F . grad L`.
    pub fn metric_bracket(&self, a: &[f64], grad_f: &[f64], grad_l: &[f64]) -> Result<f64> {
        Ok(dot(&self.g_hat_apply(a, grad_f)?, grad_l))
    }

    /// Degeneracy norms `||Ghat grad H||` and `||Jhat grad S||` at `a`.
    pub fn check_null_conditions(&self, a: &[f64]) -> Result<NullConditionReport> {
        let gh = self.g_hat_apply(a, &self.grad_h(a))?;
        let js = self.j_hat_apply(a, &self.grad_s(a))?;
        Ok(NullConditionReport {
            g_grad_h_norm: max_norm(&gh),
            j_grad_s_norm: max_norm(&js),
        })
    }

    /// True iff `||rhs(a_star)||_inf <= tol`.
    pub fn check_equilibrium(&self, a_star: &[f64], tol: f64) -> Result<bool> {
        Ok(max_norm(&self.rhs(a_star)?) <= tol)
    }
}

/// Double-bracket metric operator `G_db = J^T M^{-1} J`, symmetric positive
/// semi-definite with kernel containing the kernel of `J`. Formed densely;
/// intended for small analysis problems, not production time stepping.
pub fn double_bracket_metric(j: &CsrMatrix, m: &CsrMatrix) -> Result<CsrMatrix> {
    let n = j.n_rows();
    let solver = SpdSolver::new(m, 1e-13)?;
    let mut triplets = Vec::new();
    let jt = j.transpose();
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let jcol = {
            // J e_col
            let mut v = vec![0.0; n];
            for (i, jj, val) in j.triplets() {
                if jj == col {
                    v[i] += val;
                }
            }
            let _ = e;
            v
        };
        let minv = solver.solve(&jcol)?;
        let g_col = jt.matvec(&minv);
        for (i, &v) in g_col.iter().enumerate() {
            if v != 0.0 {
                triplets.push((i, col, v));
            }
        }
    }
    // symmetrise away the rounding of the two triangular halves
    let g = CsrMatrix::from_triplets(n, n, &triplets);
    Ok(g.add_scaled(&g.transpose(), 1.0).scaled(0.5))
}
