//! High-level run drivers: advance a model over a time grid while recording
//! the full diagnostics series, and mesh-convergence studies that repeat a
//! run over a family of refinements.

use std::sync::Arc;

use crate::assembly::{assemble_mass, assemble_stiffness, P1Space};
use crate::diagnostics::{
    entropy_residual, ns_invariants, rel_l2_error_1d, rel_l2_error_surface, total_mass,
    ConvergenceTable, DiagnosticsRecord,
};
use crate::error::Result;
use crate::integrators::{
    step_generic, KdvStepper, NsStepper, SchemeId, TimeGrid,
};
use crate::linalg::FixedPointConfig;
use crate::mesh::{build_icosphere, build_periodic_interval, build_torus_mesh};
use crate::models::{
    interpolate_1d, interpolate_surface, kdv_operators, soliton_exact, sphere_angles,
    sphere_harmonic_exact, walsh_exact, KdvParams, NsParams,
};
use crate::system::MetriplecticSystem;

/// Result of a full time-stepping run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: Vec<f64>,
    /// `L^inf(T; L^2)` relative error when an exact solution was supplied.
    pub max_rel_l2_error: Option<f64>,
}

impl RunOutput {
    fn from_records(records: Vec<DiagnosticsRecord>, final_state: Vec<f64>) -> Result<RunOutput> {
        for r in &records {
            r.validate()?;
        }
        let max_rel_l2_error = records
            .iter()
            .filter_map(|r| r.rel_l2_error)
            .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
        Ok(RunOutput {
            records,
            final_state,
            max_rel_l2_error,
        })
    }
}

/// Advance the dissipative KdV model over the grid, recording mass,
/// Hamiltonian, entropy and the per-step entropy-production residual.
pub fn run_kdv(
    params: &KdvParams,
    scheme: SchemeId,
    space: &P1Space,
    grid: &TimeGrid,
    fp: &FixedPointConfig,
    initial: &[f64],
    exact: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<RunOutput> {
    params.validate()?;
    let mesh = space.interval()?.clone();
    let ops = kdv_operators(space)?;
    let dt = grid.dt();
    let stepper = KdvStepper::new(
        scheme,
        kdv_operators(space)?,
        params.alpha,
        params.eta,
        params.nu,
        dt,
        fp.clone(),
    )?;

    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let hamiltonian = |a: &[f64]| {
        (params.alpha / 6.0) * ops.trilinear.triple(a, a, a)
            - 0.5 * params.eta * dot(a, &ops.stiffness.matvec(a))
    };
    let entropy = |a: &[f64]| -0.5 * dot(a, &ops.mass.matvec(a));

    let mut a = initial.to_vec();
    let mut records = Vec::with_capacity(grid.n_steps + 1);
    let record = |records: &mut Vec<DiagnosticsRecord>,
                  step: usize,
                  a: &[f64],
                  residual: Option<f64>,
                  fp_iterations: usize|
     -> Result<()> {
        let t = grid.t0 + step as f64 * dt;
        let rel = match exact {
            Some(f) => Some(rel_l2_error_1d(a, &|x| f(x, t), &mesh)?),
            None => None,
        };
        records.push(DiagnosticsRecord {
            step,
            time: t,
            mass: total_mass(&ops.mass, a),
            hamiltonian: hamiltonian(a),
            entropy: entropy(a),
            enstrophy: None,
            palinstrophy: None,
            entropy_residual: residual,
            rel_l2_error: rel,
            fp_iterations,
        });
        Ok(())
    };

    record(&mut records, 0, &a, None, 0)?;
    for k in 1..=grid.n_steps {
        let out = stepper.step(&a)?;
        let residual = entropy_residual(&a, &out.a, dt, params.nu, &ops.mass, &ops.stiffness);
        a = out.a;
        record(&mut records, k, &a, Some(residual), out.fp_iterations)?;
    }
    RunOutput::from_records(records, a)
}

/// Advance the Navier-Stokes model over the grid, recording the Hamiltonian,
/// enstrophy and palinstrophy series (the entropy column carries enstrophy,
/// the model's dissipated functional).
pub fn run_ns(
    params: &NsParams,
    scheme: SchemeId,
    space: Arc<P1Space>,
    grid: &TimeGrid,
    fp: &FixedPointConfig,
    initial: &[f64],
    exact: Option<&dyn Fn([f64; 3], f64) -> f64>,
) -> Result<RunOutput> {
    params.validate()?;
    let mesh = space.surface()?.clone();
    let mass = assemble_mass(&space);
    let stiffness = assemble_stiffness(&space);
    let dt = grid.dt();
    let stepper = NsStepper::new(
        scheme,
        space.clone(),
        mass.clone(),
        stiffness.clone(),
        params.nu,
        dt,
        fp.clone(),
    )?;

    let mut a = initial.to_vec();
    let mut b = stepper.stream(&a)?;
    let mut records = Vec::with_capacity(grid.n_steps + 1);
    let record = |records: &mut Vec<DiagnosticsRecord>,
                  step: usize,
                  a: &[f64],
                  b: &[f64],
                  fp_iterations: usize|
     -> Result<()> {
        let t = grid.t0 + step as f64 * dt;
        let (h, e, p) = ns_invariants(a, b, &mass, &stiffness);
        let rel = match exact {
            Some(f) => Some(rel_l2_error_surface(a, &|x| f(x, t), &mesh)?),
            None => None,
        };
        records.push(DiagnosticsRecord {
            step,
            time: t,
            mass: total_mass(&mass, a),
            hamiltonian: h,
            entropy: e,
            enstrophy: Some(e),
            palinstrophy: Some(p),
            entropy_residual: None,
            rel_l2_error: rel,
            fp_iterations,
        });
        Ok(())
    };

    record(&mut records, 0, &a, &b, 0)?;
    for k in 1..=grid.n_steps {
        let out = stepper.step(&a, &b)?;
        a = out.a;
        b = out.b;
        record(&mut records, k, &a, &b, out.fp_iterations)?;
    }
    RunOutput::from_records(records, a)
}

/// Advance an arbitrary metriplectic system with the generic midpoint/AVF
/// steppers, recording mass (`1^T M a`), `H` and `S`.
pub fn run_generic(
    system: &MetriplecticSystem,
    scheme: SchemeId,
    grid: &TimeGrid,
    fp: &FixedPointConfig,
    initial: &[f64],
) -> Result<RunOutput> {
    let dt = grid.dt();
    let mut a = initial.to_vec();
    let mut records = Vec::with_capacity(grid.n_steps + 1);
    let record = |records: &mut Vec<DiagnosticsRecord>,
                  step: usize,
                  a: &[f64],
                  fp_iterations: usize| {
        records.push(DiagnosticsRecord {
            step,
            time: grid.t0 + step as f64 * dt,
            mass: total_mass(system.mass(), a),
            hamiltonian: system.h_value(a),
            entropy: system.s_value(a),
            enstrophy: None,
            palinstrophy: None,
            entropy_residual: None,
            rel_l2_error: None,
            fp_iterations,
        });
    };

    record(&mut records, 0, &a, 0);
    for k in 1..=grid.n_steps {
        let out = step_generic(scheme, system, &a, dt, fp)?;
        a = out.a;
        record(&mut records, k, &a, out.fp_iterations);
    }
    RunOutput::from_records(records, a)
}

/// KdV soliton convergence study: one conservative run per mesh size at a
/// fixed time step, errors measured in `L^inf(T; L^2)` against the exact
/// soliton.
pub fn kdv_convergence_study(
    scheme: SchemeId,
    n_list: &[usize],
    grid: &TimeGrid,
    fp: &FixedPointConfig,
) -> Result<ConvergenceTable> {
    let params = KdvParams::default();
    let mut data = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mesh = build_periodic_interval(params.domain_length, n)?;
        let space = P1Space::Interval(mesh.clone());
        let initial = interpolate_1d(&mesh, |x| soliton_exact(x, 0.0));
        let out = run_kdv(
            &params,
            scheme,
            &space,
            grid,
            fp,
            &initial,
            Some(&soliton_exact),
        )?;
        data.push((n, out.max_rel_l2_error.expect("error series present")));
    }
    ConvergenceTable::from_errors(&data, 1)
}

/// Navier-Stokes torus convergence study against the Walsh solution on
/// `[0, 2 pi]^2`; `nx_list` gives the grid resolution per direction.
pub fn ns_torus_convergence_study(
    scheme: SchemeId,
    nx_list: &[usize],
    nu: f64,
    grid: &TimeGrid,
    fp: &FixedPointConfig,
) -> Result<ConvergenceTable> {
    let params = NsParams { nu };
    let l = 2.0 * std::f64::consts::PI;
    let exact = move |p: [f64; 3], t: f64| walsh_exact(p[0], p[1], t, nu).1;
    let mut data = Vec::with_capacity(nx_list.len());
    for &nx in nx_list {
        let mesh = build_torus_mesh(l, l, nx, nx)?;
        let initial = interpolate_surface(&mesh, |p| exact(p, 0.0));
        let space = Arc::new(P1Space::Surface(mesh));
        let n_dofs = space.n_dofs();
        let out = run_ns(&params, scheme, space, grid, fp, &initial, Some(&exact))?;
        data.push((n_dofs, out.max_rel_l2_error.expect("error series present")));
    }
    ConvergenceTable::from_errors(&data, 2)
}

/// Navier-Stokes sphere convergence study against the decaying `l = 1`
/// harmonic, one run per icosphere subdivision level.
pub fn ns_sphere_convergence_study(
    scheme: SchemeId,
    subdivisions: &[usize],
    nu: f64,
    grid: &TimeGrid,
    fp: &FixedPointConfig,
) -> Result<ConvergenceTable> {
    let params = NsParams { nu };
    let exact = move |p: [f64; 3], t: f64| {
        let (theta, phi) = sphere_angles(p);
        sphere_harmonic_exact(theta, phi, t, nu).1
    };
    let mut data = Vec::with_capacity(subdivisions.len());
    for &s in subdivisions {
        let mesh = build_icosphere(s);
        let initial = interpolate_surface(&mesh, |p| exact(p, 0.0));
        let space = Arc::new(P1Space::Surface(mesh));
        let n_dofs = space.n_dofs();
        let out = run_ns(&params, scheme, space, grid, fp, &initial, Some(&exact))?;
        data.push((n_dofs, out.max_rel_l2_error.expect("error series present")));
    }
    ConvergenceTable::from_errors(&data, 2)
}
