//! Time integrators: implicit midpoint rule and the average vector field
//! (AVF) method, both as generic steppers for any [`MetriplecticSystem`] and
//! as the specialised fully discrete KdV and Navier-Stokes update equations
//! with the d1/d2 coefficient scheme.
//!
//! All nonlinear systems are solved by plain Picard (fixed point) iteration
//! with the previous state as initial guess; the linear part of each step
//! operator is factorised once per stepper and reused.

use nalgebra::DMatrix;

use crate::assembly::{assemble_ns_poisson_tensor, P1Space};
use crate::error::{Error, Result};
use crate::linalg::{
    fixed_point_solve, CsrMatrix, DenseLu, FixedPointConfig, SpdSolver, TrilinearForm,
    ZeroMeanSolver,
};
use crate::system::MetriplecticSystem;

/// Time integration scheme. The d1/d2 coefficients below encode how each
/// scheme discretises the nonlinear terms of the fully discrete KdV and NS
/// systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeId {
    Midpoint,
    Avf,
}

impl SchemeId {
    /// (d1, d2) for the cubic KdV term: midpoint (4, 8), AVF (6, 6).
    pub fn kdv_coefficients(self) -> (f64, f64) {
        match self {
            SchemeId::Midpoint => (4.0, 8.0),
            SchemeId::Avf => (6.0, 6.0),
        }
    }

    /// (d1, d2) for the quadratic NS term: midpoint (4, 4), AVF (3, 6).
    pub fn ns_coefficients(self) -> (f64, f64) {
        match self {
            SchemeId::Midpoint => (4.0, 4.0),
            SchemeId::Avf => (3.0, 6.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Midpoint => "midpoint",
            SchemeId::Avf => "avf",
        }
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<SchemeId> {
        match s {
            "midpoint" => Ok(SchemeId::Midpoint),
            "avf" => Ok(SchemeId::Avf),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme '{other}', expected 'midpoint' or 'avf'"
            ))),
        }
    }
}

/// Uniform partition of the temporal interval.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<TimeGrid> {
        if !(t_end > t0) || n_steps < 1 {
            return Err(Error::InvalidArgument(format!(
                "invalid time grid [{t0}, {t_end}] with {n_steps} steps"
            )));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub a: Vec<f64>,
    pub fp_iterations: usize,
}

/// 3-point Gauss-Legendre rule on [0, 1]; exact for polynomials of degree 5,
/// hence exact for the chord average of any vector field that is polynomial
/// of degree <= 5 in the state (all models here are cubic at most).
const GAUSS3: [(f64, f64); 3] = [
    (0.112701665379258311, 0.277777777777777778),
    (0.5, 0.444444444444444444),
    (0.887298334620741689, 0.277777777777777778),
];

/// One implicit-midpoint step: `a1 = a0 + dt f((a0 + a1)/2)`.
pub fn step_midpoint(
    system: &MetriplecticSystem,
    a0: &[f64],
    dt: f64,
    fp: &FixedPointConfig,
) -> Result<StepResult> {
    let map = |a1: &[f64]| -> Result<Vec<f64>> {
        let mid: Vec<f64> = a0.iter().zip(a1).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = system.rhs(&mid)?;
        Ok(a0.iter().zip(&f).map(|(x, fi)| x + dt * fi).collect())
    };
    let r = fixed_point_solve(map, a0, fp)?;
    Ok(StepResult {
        a: r.x,
        fp_iterations: r.iterations,
    })
}

/// One AVF step: `a1 = a0 + dt * avg_{xi in [0,1]} f((1-xi) a0 + xi a1)`,
/// with the chord average evaluated by 3-point Gauss-Legendre (exact for the
/// polynomial vector fields of all models here).
pub fn step_avf(
    system: &MetriplecticSystem,
    a0: &[f64],
    dt: f64,
    fp: &FixedPointConfig,
) -> Result<StepResult> {
    let n = a0.len();
    let map = |a1: &[f64]| -> Result<Vec<f64>> {
        let mut avg = vec![0.0; n];
        for &(xi, w) in &GAUSS3 {
            let point: Vec<f64> = a0
                .iter()
                .zip(a1)
                .map(|(x, y)| (1.0 - xi) * x + xi * y)
                .collect();
            let f = system.rhs(&point)?;
            for i in 0..n {
                avg[i] += w * f[i];
            }
        }
        Ok(a0.iter().zip(&avg).map(|(x, fi)| x + dt * fi).collect())
    };
    let r = fixed_point_solve(map, a0, fp)?;
    Ok(StepResult {
        a: r.x,
        fp_iterations: r.iterations,
    })
}

pub fn step_generic(
    scheme: SchemeId,
    system: &MetriplecticSystem,
    a0: &[f64],
    dt: f64,
    fp: &FixedPointConfig,
) -> Result<StepResult> {
    match scheme {
        SchemeId::Midpoint => step_midpoint(system, a0, dt, fp),
        SchemeId::Avf => step_avf(system, a0, dt, fp),
    }
}

/// Assembled 1D operators of the KdV discretisation.
pub struct KdvOperators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub advection: CsrMatrix,
    pub trilinear: TrilinearForm,
}

#[derive(Debug, Clone)]
pub struct KdvStepOutput {
    pub a: Vec<f64>,
    pub b_star: Vec<f64>,
    pub fp_iterations: usize,
}

/// Fully discrete KdV stepper:
///
/// ```text
/// (M + dt/2 nu K) a1 + dt A b* = (M - dt/2 nu K) a0
/// M b* = alpha R(d2^-1 a1 (x) a1 + d2^-1 a0 (x) a0 + d1^-1 a1 (x) a0)
///        - eta K (a0 + a1)/2
/// ```
///
/// `b*` is eliminated through the mass matrix, leaving one equation for `a1`
/// whose linear part `L = M + dt/2 nu K - dt eta/2 A M^-1 K` is factorised
/// once (dense LU; `L` is nonsymmetric). Only the quadratic contractions are
/// lagged in the Picard sweep.
pub struct KdvStepper {
    scheme: SchemeId,
    dt: f64,
    alpha: f64,
    eta: f64,
    nu: f64,
    ops: KdvOperators,
    lu: DenseLu,
    mass_solver: SpdSolver,
    fp: FixedPointConfig,
    n: usize,
}

impl KdvStepper {
    pub fn new(
        scheme: SchemeId,
        ops: KdvOperators,
        alpha: f64,
        eta: f64,
        nu: f64,
        dt: f64,
        fp: FixedPointConfig,
    ) -> Result<KdvStepper> {
        fp.validate()?;
        let n = ops.mass.n_rows();
        let mass_solver = SpdSolver::new(&ops.mass, 1e-13)?;
        // X = M^-1 K column by column, then L = M + dt/2 nu K - dt eta/2 A X
        let mut l = ops.mass.to_dense();
        let k_dense = ops.stiffness.to_dense();
        let a_dense = ops.advection.to_dense();
        let mut x = DMatrix::zeros(n, n);
        for col in 0..n {
            let kcol: Vec<f64> = (0..n).map(|r| k_dense[(r, col)]).collect();
            let sol = mass_solver.solve(&kcol)?;
            for r in 0..n {
                x[(r, col)] = sol[r];
            }
        }
        l += 0.5 * dt * nu * &k_dense;
        l -= 0.5 * dt * eta * &a_dense * x;
        let lu = DenseLu::new(l)?;
        Ok(KdvStepper {
            scheme,
            dt,
            alpha,
            eta,
            nu,
            ops,
            lu,
            mass_solver,
            fp,
            n,
        })
    }

    /// The scheme's quadratic contraction
    /// `alpha R(d2^-1 a1 (x) a1 + d2^-1 a0 (x) a0 + d1^-1 a1 (x) a0)`.
    fn quadratic(&self, a0: &[f64], a1: &[f64]) -> Vec<f64> {
        let (d1, d2) = self.scheme.kdv_coefficients();
        let r = &self.ops.trilinear;
        let q11 = r.contract(a1, a1);
        let q00 = r.contract(a0, a0);
        let q10 = r.contract(a1, a0);
        (0..self.n)
            .map(|i| self.alpha * (q11[i] / d2 + q00[i] / d2 + q10[i] / d1))
            .collect()
    }

    pub fn step(&self, a0: &[f64]) -> Result<KdvStepOutput> {
        if a0.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: a0.len(),
            });
        }
        // constant part of the right-hand side:
        // (M - dt/2 nu K) a0 + dt eta/2 A M^-1 K a0
        let ka0 = self.ops.stiffness.matvec(a0);
        let minv_ka0 = self.mass_solver.solve(&ka0)?;
        let a_minv_ka0 = self.ops.advection.matvec(&minv_ka0);
        let ma0 = self.ops.mass.matvec(a0);
        let rhs0: Vec<f64> = (0..self.n)
            .map(|i| ma0[i] - 0.5 * self.dt * self.nu * ka0[i] + 0.5 * self.dt * self.eta * a_minv_ka0[i])
            .collect();

        let map = |a1: &[f64]| -> Result<Vec<f64>> {
            let q = self.quadratic(a0, a1);
            let minv_q = self.mass_solver.solve(&q)?;
            let aq = self.ops.advection.matvec(&minv_q);
            let rhs: Vec<f64> = (0..self.n).map(|i| rhs0[i] - self.dt * aq[i]).collect();
            self.lu.solve(&rhs)
        };
        let r = fixed_point_solve(map, a0, &self.fp)?;
        let a1 = r.x;

        // recover b* for diagnostics
        let q = self.quadratic(a0, &a1);
        let k_mid = self.ops.stiffness.matvec(
            &a0.iter()
                .zip(&a1)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<_>>(),
        );
        let rhs_b: Vec<f64> = (0..self.n).map(|i| q[i] - self.eta * k_mid[i]).collect();
        let b_star = self.mass_solver.solve(&rhs_b)?;

        Ok(KdvStepOutput {
            a: a1,
            b_star,
            fp_iterations: r.iterations,
        })
    }
}

#[derive(Debug, Clone)]
pub struct NsStepOutput {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub fp_iterations: usize,
}

/// Fully discrete Navier-Stokes stepper:
///
/// ```text
/// (M + dt/2 nu K) a1 = (M - dt/2 nu K) a0
///   + dt [ d1^-1 J(a1) b1 + d2^-1 J(a1) b0 + d2^-1 J(a0) b1 + d1^-1 J(a0) b0 ]
/// K b = M a   (zero-mean stream solve at every iterate)
/// ```
///
/// The SPD operator `M + dt/2 nu K` and the deflated stiffness matrix are
/// factorised once; each Picard sweep reassembles `J(a1)` and refreshes the
/// stream function `b1`.
pub struct NsStepper {
    scheme: SchemeId,
    dt: f64,
    nu: f64,
    space: std::sync::Arc<P1Space>,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    step_solver: SpdSolver,
    stream_solver: ZeroMeanSolver,
    fp: FixedPointConfig,
    n: usize,
}

impl NsStepper {
    pub fn new(
        scheme: SchemeId,
        space: std::sync::Arc<P1Space>,
        mass: CsrMatrix,
        stiffness: CsrMatrix,
        nu: f64,
        dt: f64,
        fp: FixedPointConfig,
    ) -> Result<NsStepper> {
        fp.validate()?;
        let n = mass.n_rows();
        let step_matrix = mass.add_scaled(&stiffness, 0.5 * dt * nu);
        let step_solver = SpdSolver::new(&step_matrix, 1e-13)?;
        let stream_solver = ZeroMeanSolver::new(&stiffness, mass.row_sums(), 1e-12)?;
        Ok(NsStepper {
            scheme,
            dt,
            nu,
            space,
            mass,
            stiffness,
            step_solver,
            stream_solver,
            fp,
            n,
        })
    }

    /// Zero-mean stream function `b` solving `K b = M a`.
    pub fn stream(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.stream_solver.solve(&self.mass.matvec(a))
    }

    fn stream_warm(&self, a: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        self.stream_solver
            .solve_warm(&self.mass.matvec(a), Some(guess))
    }

    /// One step from `(a0, b0)`; `b0` must be the stream function of `a0`.
    pub fn step(&self, a0: &[f64], b0: &[f64]) -> Result<NsStepOutput> {
        if a0.len() != self.n || b0.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: a0.len(),
            });
        }
        let (d1, d2) = self.scheme.ns_coefficients();
        let j0 = assemble_ns_poisson_tensor(&self.space, a0)?;
        let j0b0 = j0.matvec(b0);
        let ka0 = self.stiffness.matvec(a0);
        let ma0 = self.mass.matvec(a0);
        let rhs0: Vec<f64> = (0..self.n)
            .map(|i| ma0[i] - 0.5 * self.dt * self.nu * ka0[i] + self.dt / d1 * j0b0[i])
            .collect();

        let b_cell = std::cell::RefCell::new(b0.to_vec());
        let map = |a1: &[f64]| -> Result<Vec<f64>> {
            let b1 = self.stream_warm(a1, &b_cell.borrow())?;
            let j1 = assemble_ns_poisson_tensor(&self.space, a1)?;
            let j1b1 = j1.matvec(&b1);
            let j1b0 = j1.matvec(b0);
            let j0b1 = j0.matvec(&b1);
            let rhs: Vec<f64> = (0..self.n)
                .map(|i| {
                    rhs0[i] + self.dt * (j1b1[i] / d1 + j1b0[i] / d2 + j0b1[i] / d2)
                })
                .collect();
            *b_cell.borrow_mut() = b1;
            self.step_solver.solve_warm(&rhs, Some(a1))
        };
        let r = fixed_point_solve(map, a0, &self.fp)?;
        let a1 = r.x;
        let b1 = self.stream_warm(&a1, &b_cell.borrow())?;
        Ok(NsStepOutput {
            a: a1,
            b: b1,
            fp_iterations: r.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble_advection_1d, assemble_mass, assemble_stiffness, assemble_trilinear_kdv,
    };
    use crate::linalg::max_norm;
    use crate::mesh::{build_periodic_interval, build_torus_mesh};
    use crate::system::{GSign, MetriplecticSystem, SystemParts};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn fp() -> FixedPointConfig {
        FixedPointConfig {
            tolerance: 1e-13,
            max_iterations: 200,
        }
    }

    /// Scalar test system with rhs f(a) = lambda a (M = I, G = lambda I,
    /// grad S = a).
    fn scalar_system(lambda: f64) -> MetriplecticSystem {
        MetriplecticSystem::new(SystemParts {
            mass: CsrMatrix::identity(1),
            j_builder: Box::new(|_| Ok(CsrMatrix::zeros(1, 1))),
            g_builder: Box::new(move |_| {
                Ok(CsrMatrix::from_triplets(1, 1, &[(0, 0, lambda)]))
            }),
            grad_h: Box::new(|_| vec![0.0]),
            grad_s: Box::new(|a| a.to_vec()),
            h_value: Box::new(|_| 0.0),
            s_value: Box::new(|_| 0.0),
            g_sign: GSign::NegativeSemiDefinite,
            casimirs: vec![],
            metriplectic: false,
        })
        .unwrap()
    }

    /// Linear Hamiltonian toy: M from a 1D mesh, J = A constant,
    /// H = 0.5 a^T M a (grad H = M a), G = -nu K, S = 0.5 a^T M a.
    fn linear_system(n: usize, nu: f64) -> MetriplecticSystem {
        let sp = P1Space::Interval(build_periodic_interval(2.0 * PI, n).unwrap());
        let m = assemble_mass(&sp);
        let a_mat = assemble_advection_1d(&sp).unwrap();
        let k = assemble_stiffness(&sp);
        let m_h = m.clone();
        let m_s = m.clone();
        let m_val = m.clone();
        let m_val2 = m.clone();
        MetriplecticSystem::new(SystemParts {
            mass: m,
            j_builder: Box::new(move |_| Ok(a_mat.scaled(-1.0))),
            g_builder: Box::new(move |_| Ok(k.scaled(-nu))),
            grad_h: Box::new(move |a| m_h.matvec(a)),
            grad_s: Box::new(move |a| m_s.matvec(a)),
            h_value: Box::new(move |a| {
                0.5 * a.iter().zip(m_val.matvec(a)).map(|(x, y)| x * y).sum::<f64>()
            }),
            s_value: Box::new(move |a| {
                0.5 * a.iter().zip(m_val2.matvec(a)).map(|(x, y)| x * y).sum::<f64>()
            }),
            g_sign: GSign::NegativeSemiDefinite,
            casimirs: vec![],
            metriplectic: false,
        })
        .unwrap()
    }

    #[test]
    fn time_grid() {
        let g = TimeGrid::new(0.0, 15.0, 800).unwrap();
        assert!((g.dt() - 15.0 / 800.0).abs() < 1e-15);
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_field_is_identity() {
        let sys = scalar_system(0.0);
        let a = vec![1.7];
        assert_eq!(step_midpoint(&sys, &a, 0.1, &fp()).unwrap().a, a);
        assert_eq!(step_avf(&sys, &a, 0.1, &fp()).unwrap().a, a);
    }

    #[test]
    fn midpoint_scalar_closed_form() {
        let lambda = -0.8;
        let dt = 0.05;
        let sys = scalar_system(lambda);
        let out = step_midpoint(&sys, &[2.0], dt, &fp()).unwrap();
        let exact = 2.0 * (1.0 + 0.5 * lambda * dt) / (1.0 - 0.5 * lambda * dt);
        assert!((out.a[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn avf_equals_midpoint_for_linear_systems() {
        let sys = linear_system(16, 0.3);
        let mut a: Vec<f64> = (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).sin()).collect();
        for _ in 0..5 {
            let m = step_midpoint(&sys, &a, 0.02, &fp()).unwrap();
            let v = step_avf(&sys, &a, 0.02, &fp()).unwrap();
            let diff = max_norm(
                &m.a.iter().zip(&v.a).map(|(x, y)| x - y).collect::<Vec<_>>(),
            );
            assert!(diff <= 1e-12, "diff {diff}");
            a = m.a;
        }
    }

    #[test]
    fn midpoint_conserves_quadratic_hamiltonian() {
        let sys = linear_system(24, 0.0);
        let mut a: Vec<f64> = (0..24)
            .map(|i| (2.0 * PI * i as f64 / 24.0).sin() + 0.3 * (4.0 * PI * i as f64 / 24.0).cos())
            .collect();
        let h0 = sys.h_value(&a);
        for _ in 0..20 {
            a = step_midpoint(&sys, &a, 0.05, &fp()).unwrap().a;
        }
        assert!((sys.h_value(&a) - h0).abs() <= 1e-11 * h0.abs());
    }

    #[test]
    fn gradient_flow_dissipates() {
        // dissipative flow; dt small enough for the Picard map to contract
        let sys = linear_system(16, 0.5);
        let mut a: Vec<f64> = (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).sin()).collect();
        let mut s_prev = sys.s_value(&a);
        for _ in 0..10 {
            a = step_avf(&sys, &a, 0.005, &fp()).unwrap().a;
            let s = sys.s_value(&a);
            assert!(s <= s_prev + 1e-12);
            s_prev = s;
        }
    }

    #[test]
    fn midpoint_time_reversible() {
        let sys = linear_system(16, 0.0);
        let a0: Vec<f64> = (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).sin()).collect();
        let fwd = step_midpoint(&sys, &a0, 0.1, &fp()).unwrap().a;
        let back = step_midpoint(&sys, &fwd, -0.1, &fp()).unwrap().a;
        let diff = max_norm(&a0.iter().zip(&back).map(|(x, y)| x - y).collect::<Vec<_>>());
        assert!(diff <= 1e-12);
    }

    #[test]
    fn second_order_in_time() {
        // self-convergence on the linear advection-diffusion flow; mild
        // diffusion keeps the Picard map contractive at the coarsest dt
        let sys = linear_system(16, 0.05);
        let a0: Vec<f64> = (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).sin()).collect();
        let run = |scheme: SchemeId, n_steps: usize| -> Vec<f64> {
            let dt = 1.0 / n_steps as f64;
            let mut a = a0.clone();
            for _ in 0..n_steps {
                a = step_generic(scheme, &sys, &a, dt, &fp()).unwrap().a;
            }
            a
        };
        for scheme in [SchemeId::Midpoint, SchemeId::Avf] {
            let c = run(scheme, 8);
            let m = run(scheme, 16);
            let f = run(scheme, 32);
            // successive differences: their ratio tends to 2^order
            let e_c = max_norm(&c.iter().zip(&m).map(|(x, y)| x - y).collect::<Vec<_>>());
            let e_m = max_norm(&m.iter().zip(&f).map(|(x, y)| x - y).collect::<Vec<_>>());
            let ratio = e_c / e_m;
            assert!((ratio - 4.0).abs() <= 0.6, "order ratio {ratio}");
        }
    }

    fn kdv_ops(n: usize, length: f64) -> KdvOperators {
        let sp = P1Space::Interval(build_periodic_interval(length, n).unwrap());
        KdvOperators {
            mass: assemble_mass(&sp),
            stiffness: assemble_stiffness(&sp),
            advection: assemble_advection_1d(&sp).unwrap(),
            trilinear: assemble_trilinear_kdv(&sp).unwrap(),
        }
    }

    fn soliton(x: f64, t: f64) -> f64 {
        let arg = 0.5 * 2.0_f64.sqrt() * (x - 5.0 * PI - 2.0 * t);
        (1.0 / arg.cosh()).powi(2)
    }

    #[test]
    fn kdv_constant_state_is_fixed() {
        for scheme in [SchemeId::Midpoint, SchemeId::Avf] {
            let stepper =
                KdvStepper::new(scheme, kdv_ops(32, 20.0 * PI), 6.0, 1.0, 0.0, 0.01, fp()).unwrap();
            let a = vec![0.7; 32];
            let out = stepper.step(&a).unwrap();
            let diff = max_norm(&a.iter().zip(&out.a).map(|(x, y)| x - y).collect::<Vec<_>>());
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn kdv_conserves_mass() {
        let n = 64;
        let ops = kdv_ops(n, 20.0 * PI);
        let ones = vec![1.0; n];
        for scheme in [SchemeId::Midpoint, SchemeId::Avf] {
            let ops = kdv_ops(n, 20.0 * PI);
            let stepper = KdvStepper::new(scheme, ops, 6.0, 1.0, 0.0, 0.01, fp()).unwrap();
            let mesh = build_periodic_interval(20.0 * PI, n).unwrap();
            let mut a: Vec<f64> = mesh.node_coords.iter().map(|&x| soliton(x, 0.0)).collect();
            let m = assemble_mass(&P1Space::Interval(mesh));
            let mass0: f64 = ones.iter().zip(m.matvec(&a)).map(|(x, y)| x * y).sum();
            for _ in 0..20 {
                a = stepper.step(&a).unwrap().a;
            }
            let mass1: f64 = ones.iter().zip(m.matvec(&a)).map(|(x, y)| x * y).sum();
            assert!((mass1 - mass0).abs() <= 1e-10, "mass drift {}", mass1 - mass0);
        }
        let _ = ops;
    }

    /// Semi-discrete KdV as a MetriplecticSystem, to cross-validate the
    /// d1/d2 stepper against the generic chord-average code path.
    fn kdv_system(n: usize, nu: f64) -> MetriplecticSystem {
        let sp = P1Space::Interval(build_periodic_interval(20.0 * PI, n).unwrap());
        let m = assemble_mass(&sp);
        let k = assemble_stiffness(&sp);
        let a_mat = assemble_advection_1d(&sp).unwrap();
        let r = assemble_trilinear_kdv(&sp).unwrap();
        let (alpha, eta) = (6.0, 1.0);
        let k_g = k.clone();
        let k_h = k.clone();
        let m_s = m.clone();
        let r_h = r.clone();
        MetriplecticSystem::new(SystemParts {
            mass: m,
            j_builder: Box::new(move |_| Ok(a_mat.scaled(-1.0))),
            g_builder: Box::new(move |_| Ok(k_g.scaled(nu))),
            grad_h: Box::new(move |a| {
                let q = r_h.contract(a, a);
                let ka = k_h.matvec(a);
                (0..a.len()).map(|i| 0.5 * alpha * q[i] - eta * ka[i]).collect()
            }),
            grad_s: Box::new(move |a| m_s.matvec(a).iter().map(|v| -v).collect()),
            h_value: Box::new(|_| 0.0),
            s_value: Box::new(|_| 0.0),
            g_sign: GSign::PositiveSemiDefinite,
            casimirs: vec![],
            metriplectic: false,
        })
        .unwrap()
    }

    #[test]
    fn kdv_d_coefficients_match_generic_steppers() {
        let n = 32;
        let mesh = build_periodic_interval(20.0 * PI, n).unwrap();
        let a0: Vec<f64> = mesh.node_coords.iter().map(|&x| soliton(x, 0.0)).collect();
        let dt = 0.005;
        for (scheme, nu) in [
            (SchemeId::Midpoint, 0.0),
            (SchemeId::Avf, 0.0),
            (SchemeId::Midpoint, 0.25),
            (SchemeId::Avf, 0.25),
        ] {
            let stepper =
                KdvStepper::new(scheme, kdv_ops(n, 20.0 * PI), 6.0, 1.0, nu, dt, fp()).unwrap();
            let fast = stepper.step(&a0).unwrap().a;
            let sys = kdv_system(n, nu);
            let slow = step_generic(scheme, &sys, &a0, dt, &fp()).unwrap().a;
            let diff = max_norm(&fast.iter().zip(&slow).map(|(x, y)| x - y).collect::<Vec<_>>());
            assert!(diff <= 5e-10, "{} nu={nu}: diff {diff}", scheme.name());
        }
    }

    fn torus_setup(nx: usize) -> (Arc<P1Space>, CsrMatrix, CsrMatrix) {
        let sp = Arc::new(P1Space::Surface(
            build_torus_mesh(2.0 * PI, 2.0 * PI, nx, nx).unwrap(),
        ));
        let m = assemble_mass(&sp);
        let k = assemble_stiffness(&sp);
        (sp, m, k)
    }

    fn walsh_ic(sp: &P1Space) -> Vec<f64> {
        sp.surface()
            .unwrap()
            .vertices
            .iter()
            .map(|v| {
                let (x, y) = (v[0], v[1]);
                -25.0
                    * (0.25 * (3.0 * x).cos() * (4.0 * y).sin()
                        - 0.2 * (5.0 * y).cos()
                        - 0.2 * (5.0 * x).sin())
            })
            .collect()
    }

    #[test]
    fn ns_zero_state_stays_zero() {
        let (sp, m, k) = torus_setup(4);
        let stepper = NsStepper::new(SchemeId::Avf, sp, m, k, 1e-2, 0.01, fp()).unwrap();
        let a = vec![0.0; 16];
        let b = stepper.stream(&a).unwrap();
        let out = stepper.step(&a, &b).unwrap();
        assert!(max_norm(&out.a) == 0.0);
    }

    #[test]
    fn ns_midpoint_conserves_quadratic_invariants() {
        let (sp, m, k) = torus_setup(12);
        let stepper =
            NsStepper::new(SchemeId::Midpoint, sp.clone(), m.clone(), k.clone(), 0.0, 0.01, fp())
                .unwrap();
        let mut a = walsh_ic(&sp);
        let mut b = stepper.stream(&a).unwrap();
        let energy = |a: &[f64], b: &[f64]| {
            0.5 * a.iter().zip(m.matvec(b)).map(|(x, y)| x * y).sum::<f64>()
        };
        let enstrophy =
            |a: &[f64]| 0.5 * a.iter().zip(m.matvec(a)).map(|(x, y)| x * y).sum::<f64>();
        let h0 = energy(&a, &b);
        let e0 = enstrophy(&a);
        for _ in 0..10 {
            let out = stepper.step(&a, &b).unwrap();
            a = out.a;
            b = out.b;
        }
        assert!((energy(&a, &b) - h0).abs() <= 1e-10 * h0.abs(), "H drift");
        assert!((enstrophy(&a) - e0).abs() <= 1e-10 * e0.abs(), "E drift");
    }

    #[test]
    fn ns_d_coefficients_match_generic_steppers() {
        let (sp, m, k) = torus_setup(6);
        let a0 = walsh_ic(&sp);
        let dt = 0.002;
        let nu = 1e-2;
        for scheme in [SchemeId::Midpoint, SchemeId::Avf] {
            let stepper =
                NsStepper::new(scheme, sp.clone(), m.clone(), k.clone(), nu, dt, fp()).unwrap();
            let b0 = stepper.stream(&a0).unwrap();
            let fast = stepper.step(&a0, &b0).unwrap().a;

            // generic path: rhs(a) = M^-1 (J(a) b(a) - nu K a) with
            // grad H = M b(a) via the zero-mean stream solve
            let stream = ZeroMeanSolver::new(&k, m.row_sums(), 1e-13).unwrap();
            let sp_j = sp.clone();
            let m_h = m.clone();
            let m_str = m.clone();
            let k_g = k.clone();
            let m_s = m.clone();
            let sys = MetriplecticSystem::new(SystemParts {
                mass: m.clone(),
                j_builder: Box::new(move |a| assemble_ns_poisson_tensor(&sp_j, a)),
                g_builder: Box::new(move |_| Ok(k_g.scaled(-nu))),
                grad_h: Box::new(move |a| {
                    let b = stream.solve(&m_str.matvec(a)).unwrap();
                    m_h.matvec(&b)
                }),
                grad_s: Box::new(move |a| m_s.matvec(a)),
                h_value: Box::new(|_| 0.0),
                s_value: Box::new(|_| 0.0),
                g_sign: GSign::NegativeSemiDefinite,
                casimirs: vec![],
                metriplectic: true,
            })
            .unwrap();
            let slow = step_generic(scheme, &sys, &a0, dt, &fp()).unwrap().a;
            let diff = max_norm(&fast.iter().zip(&slow).map(|(x, y)| x - y).collect::<Vec<_>>());
            let scale = max_norm(&a0);
            assert!(diff <= 5e-10 * scale, "{}: diff {diff}", scheme.name());
        }
    }
}
