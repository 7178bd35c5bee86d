//! Benchmarks for the hot paths: operator assembly and one time step of
//! each fully discrete scheme.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use metrifem::assembly::{
    assemble_mass, assemble_ns_poisson_tensor, assemble_stiffness, P1Space,
};
use metrifem::integrators::{KdvStepper, NsStepper, SchemeId};
use metrifem::linalg::FixedPointConfig;
use metrifem::mesh::{build_periodic_interval, build_torus_mesh};
use metrifem::models::{interpolate_1d, interpolate_surface, kdv_operators, soliton_exact, walsh_exact};

fn fp() -> FixedPointConfig {
    FixedPointConfig {
        tolerance: 1e-13,
        max_iterations: 200,
    }
}

fn bench_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for nx in [16usize, 32] {
        let l = 2.0 * std::f64::consts::PI;
        let mesh = build_torus_mesh(l, l, nx, nx).unwrap();
        let space = P1Space::Surface(mesh.clone());
        let a = interpolate_surface(&mesh, |p| walsh_exact(p[0], p[1], 0.0, 0.0).1);
        group.bench_with_input(BenchmarkId::new("stiffness", nx * nx), &space, |b, sp| {
            b.iter(|| assemble_stiffness(sp))
        });
        group.bench_with_input(
            BenchmarkId::new("poisson-tensor", nx * nx),
            &(&space, &a),
            |b, (sp, a)| b.iter(|| assemble_ns_poisson_tensor(sp, a).unwrap()),
        );
    }
    group.finish();
}

fn bench_kdv_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("kdv-step");
    for n in [128usize, 512] {
        let l = 20.0 * std::f64::consts::PI;
        let mesh = build_periodic_interval(l, n).unwrap();
        let space = P1Space::Interval(mesh.clone());
        let a0 = interpolate_1d(&mesh, |x| soliton_exact(x, 0.0));
        for scheme in [SchemeId::Midpoint, SchemeId::Avf] {
            let stepper = KdvStepper::new(
                scheme,
                kdv_operators(&space).unwrap(),
                6.0,
                1.0,
                0.0,
                15.0 / 800.0,
                fp(),
            )
            .unwrap();
            group.bench_with_input(
                BenchmarkId::new(scheme.name(), n),
                &(&stepper, &a0),
                |b, (stepper, a0)| b.iter(|| stepper.step(a0).unwrap()),
            );
        }
    }
    group.finish();
}

fn bench_ns_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("ns-step");
    group.sample_size(20);
    for nx in [16usize, 32] {
        let l = 2.0 * std::f64::consts::PI;
        let mesh = build_torus_mesh(l, l, nx, nx).unwrap();
        let a0 = interpolate_surface(&mesh, |p| walsh_exact(p[0], p[1], 0.0, 1e-2).1);
        let space = Arc::new(P1Space::Surface(mesh));
        let mass = assemble_mass(&space);
        let stiffness = assemble_stiffness(&space);
        let stepper = NsStepper::new(
            SchemeId::Midpoint,
            space,
            mass,
            stiffness,
            1e-2,
            1.0 / 200.0,
            fp(),
        )
        .unwrap();
        let b0 = stepper.stream(&a0).unwrap();
        group.bench_with_input(
            BenchmarkId::new("midpoint", nx * nx),
            &(&stepper, &a0, &b0),
            |b, (stepper, a0, b0)| b.iter(|| stepper.step(a0, b0).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_assembly, bench_kdv_step, bench_ns_step);
criterion_main!(benches);
