//! `metrifem`: configuration-driven driver for the structure-preserving
//! finite element experiments. Subcommands: `run` (time integration with
//! diagnostics CSV + summary JSON), `check` (structural report at a random
//! state), `converge` (mesh-convergence study), `dump-mesh`.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{ConvergenceConfig, InitialKind, MeshKind, ModelKind, RunConfig};
use metrifem::assembly::{assemble_advection_1d, assemble_mass, assemble_stiffness, P1Space};
use metrifem::diagnostics::write_series_csv;
use metrifem::driver::{
    kdv_convergence_study, ns_sphere_convergence_study, ns_torus_convergence_study, run_generic,
    run_kdv, run_ns, RunOutput,
};
use metrifem::error::{Error, Result};
use metrifem::integrators::TimeGrid;
use metrifem::linalg::{max_norm, CsrMatrix, FixedPointConfig};
use metrifem::mesh::{
    build_icosphere, build_periodic_interval, build_torus_mesh, write_mesh_text,
    write_mesh_text_1d,
};
use metrifem::models::{
    advection_diffusion_system, interpolate_1d, interpolate_surface, kdv_system, ns_system,
    point_vortex_ic, soliton_exact, sphere_angles, sphere_harmonic_exact, walsh_exact, KdvParams,
    NsParams, PointVortexConfig,
};
use metrifem::system::{GSign, MetriplecticSystem};

#[derive(Parser)]
#[command(name = "metrifem", about = "Structure-preserving FEM experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-integrate a configured model, writing the diagnostics series
    /// (CSV) and a run summary (JSON).
    Run(CommonArgs),
    /// Evaluate the structural checks (skewness, definiteness, gradients,
    /// null conditions) at a random state and report as JSON.
    Check(CheckArgs),
    /// Run the mesh-convergence study configured under `[convergence]`.
    Converge(CommonArgs),
    /// Write the configured mesh as a text file (`V F` header, vertex and
    /// face lines).
    DumpMesh(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in preset.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Exit nonzero when structural checks fail.
    #[arg(long)]
    strict: bool,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dump an assembled operator as `i j value` triplets;
    /// NAME is one of mass, stiffness, advection, poisson, metric.
    #[arg(long = "dump-matrix", value_name = "NAME:PATH")]
    dump_matrix: Vec<String>,
    /// Additionally write the mesh next to the run outputs.
    #[arg(long = "dump-mesh")]
    dump_mesh: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Symmetrise the Poisson operator before checking (negative control).
    #[arg(long, hide = true)]
    corrupt_j: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Check(args) => cmd_check(&args),
        Command::Converge(args) => cmd_converge(&args),
        Command::DumpMesh(args) => cmd_dump_mesh(&args),
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read {}: {e}", path.display()))
            })?;
            RunConfig::parse(&text)?
        }
        (None, Some(name)) => config::preset(name)?,
        _ => {
            return Err(Error::InvalidArgument(
                "exactly one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    Ok(cfg)
}

fn build_space(cfg: &RunConfig) -> Result<Arc<P1Space>> {
    Ok(Arc::new(match cfg.mesh.kind {
        MeshKind::Interval => P1Space::Interval(build_periodic_interval(
            cfg.mesh.length.unwrap(),
            cfg.mesh.n.unwrap(),
        )?),
        MeshKind::Torus => {
            let l = cfg.mesh.length.unwrap();
            let n = cfg.mesh.n.unwrap();
            P1Space::Surface(build_torus_mesh(l, l, n, n)?)
        }
        MeshKind::Sphere => P1Space::Surface(build_icosphere(cfg.mesh.subdivisions.unwrap())),
    }))
}

fn build_initial(cfg: &RunConfig, space: &P1Space) -> Result<Vec<f64>> {
    let nu = cfg.params.nu;
    match cfg.initial.kind {
        InitialKind::Soliton => Ok(interpolate_1d(space.interval()?, |x| soliton_exact(x, 0.0))),
        InitialKind::Walsh => Ok(interpolate_surface(space.surface()?, |p| {
            walsh_exact(p[0], p[1], 0.0, nu).1
        })),
        InitialKind::SphereHarmonic => Ok(interpolate_surface(space.surface()?, |p| {
            let (theta, phi) = sphere_angles(p);
            sphere_harmonic_exact(theta, phi, 0.0, nu).1
        })),
        InitialKind::PointVortices => {
            let mesh = space.surface()?;
            let vc = PointVortexConfig {
                n_vortices: cfg.initial.n_vortices.unwrap(),
                intensity: cfg.initial.intensity.unwrap(),
                seed: cfg.seed.unwrap_or(0),
                regularisation_width: cfg.initial.width_factor.unwrap_or(2.0)
                    * mesh.mean_edge_length(),
            };
            point_vortex_ic(&vc, space)
        }
        InitialKind::Sine => {
            let mesh = space.interval()?;
            let k = 2.0 * std::f64::consts::PI / mesh.domain_length;
            Ok(interpolate_1d(mesh, |x| (k * x).sin()))
        }
    }
}

fn build_system(cfg: &RunConfig, space: &Arc<P1Space>) -> Result<MetriplecticSystem> {
    match cfg.model {
        ModelKind::Kdv => kdv_system(&kdv_params(cfg), space),
        ModelKind::NsTorus | ModelKind::NsSphere => {
            ns_system(&NsParams { nu: cfg.params.nu }, space.clone())
        }
        ModelKind::Advdiff => {
            advection_diffusion_system(cfg.params.velocity.unwrap(), cfg.params.nu, space)
        }
    }
}

fn kdv_params(cfg: &RunConfig) -> KdvParams {
    KdvParams {
        alpha: cfg.params.alpha.unwrap(),
        eta: cfg.params.eta.unwrap(),
        nu: cfg.params.nu,
        domain_length: cfg.mesh.length.unwrap(),
    }
}

fn fp_config(cfg: &RunConfig) -> FixedPointConfig {
    FixedPointConfig {
        tolerance: cfg.solver.fp_tolerance,
        max_iterations: cfg.solver.fp_max_iterations,
    }
}

fn time_grid(cfg: &RunConfig) -> Result<TimeGrid> {
    TimeGrid::new(cfg.time.t0, cfg.time.t_end, cfg.time.n_steps)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(args: &CommonArgs) -> Result<()> {
    fs::create_dir_all(&args.out).map_err(|e| {
        Error::InvalidArgument(format!("cannot create {}: {e}", args.out.display()))
    })
}

/// Write a sparse matrix as one `i j value` triplet per line.
fn write_matrix_text(path: &Path, matrix: &CsrMatrix) -> Result<()> {
    let mut text = String::new();
    for (i, j, v) in matrix.triplets() {
        text.push_str(&format!("{i} {j} {v:.16e}\n"));
    }
    write_text(path, &text)
}

fn dump_matrices(args: &CommonArgs, cfg: &RunConfig, space: &Arc<P1Space>, state: &[f64]) -> Result<()> {
    for spec in &args.dump_matrix {
        let (name, path) = spec.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("--dump-matrix expects NAME:PATH, got {spec:?}"))
        })?;
        let system = build_system(cfg, space)?;
        let matrix = match name {
            "mass" => assemble_mass(space),
            "stiffness" => assemble_stiffness(space),
            "advection" => assemble_advection_1d(space)?,
            "poisson" => system.j_matrix(state)?,
            "metric" => system.g_matrix(state)?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown matrix {name:?} (mass, stiffness, advection, poisson, metric)"
                )))
            }
        };
        write_matrix_text(Path::new(path), &matrix)?;
        println!("wrote {path}");
    }
    Ok(())
}

fn dump_mesh_file(cfg: &RunConfig, space: &P1Space, out: &Path) -> Result<()> {
    let path = out.join(format!("{}-mesh.txt", cfg.name));
    let mut buf: Vec<u8> = Vec::new();
    match space {
        P1Space::Interval(mesh) => write_mesh_text_1d(mesh, &mut buf),
        P1Space::Surface(mesh) => write_mesh_text(mesh, &mut buf),
    }
    .map_err(|e| Error::InvalidArgument(format!("mesh dump failed: {e}")))?;
    fs::write(&path, buf)
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Structural checks evaluated at one state, reported in the run summary.
fn structural_report(
    cfg: &RunConfig,
    system: &MetriplecticSystem,
    state: &[f64],
) -> Result<(serde_json::Value, bool)> {
    let j = system.j_matrix(state)?;
    let g = system.g_matrix(state)?;
    let j_skew = j.skewness_error();
    let g_sym = g.symmetry_error();
    let mut pass = j_skew <= 1e-11 && g_sym <= 1e-11;
    let mut value = serde_json::json!({
        "j_skewness_error": j_skew,
        "g_symmetry_error": g_sym,
    });
    if matches!(cfg.model, ModelKind::NsTorus | ModelKind::NsSphere) {
        let j_grad_s = max_norm(&system.j_hat_apply(state, &system.grad_s(state))?);
        let scale = max_norm(state).max(1.0);
        let null = if cfg.params.nu > 0.0 {
            let gh = system.g_hat_apply(state, &system.grad_h(state))?;
            let res: Vec<f64> = gh
                .iter()
                .zip(state)
                .map(|(g, a)| g / cfg.params.nu + a)
                .collect();
            max_norm(&res)
        } else {
            0.0
        };
        pass = pass && j_grad_s <= 1e-10 * scale && null <= 1e-9 * scale;
        value["j_grad_s_norm"] = serde_json::json!(j_grad_s);
        value["g_grad_h_null_residual"] = serde_json::json!(null);
    }
    value["pass"] = serde_json::json!(pass);
    Ok((value, pass))
}

fn cmd_run(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    ensure_out_dir(args)?;
    let space = build_space(&cfg)?;
    let initial = build_initial(&cfg, &space)?;
    let scheme = cfg.integrator.scheme_id()?;
    let grid = time_grid(&cfg)?;
    let fp = fp_config(&cfg);
    let nu = cfg.params.nu;

    let output: RunOutput = match cfg.model {
        ModelKind::Kdv => {
            let params = kdv_params(&cfg);
            let exact_valid = nu == 0.0 && params.alpha == 6.0 && params.eta == 1.0;
            let exact: Option<&dyn Fn(f64, f64) -> f64> =
                if exact_valid { Some(&soliton_exact) } else { None };
            run_kdv(&params, scheme, &space, &grid, &fp, &initial, exact)?
        }
        ModelKind::NsTorus => {
            let exact = move |p: [f64; 3], t: f64| walsh_exact(p[0], p[1], t, nu).1;
            run_ns(
                &NsParams { nu },
                scheme,
                space.clone(),
                &grid,
                &fp,
                &initial,
                Some(&exact),
            )?
        }
        ModelKind::NsSphere => {
            let exact = move |p: [f64; 3], t: f64| {
                let (theta, phi) = sphere_angles(p);
                sphere_harmonic_exact(theta, phi, t, nu).1
            };
            let exact_ref: Option<&dyn Fn([f64; 3], f64) -> f64> =
                if cfg.initial.kind == InitialKind::SphereHarmonic {
                    Some(&exact)
                } else {
                    None
                };
            run_ns(&NsParams { nu }, scheme, space.clone(), &grid, &fp, &initial, exact_ref)?
        }
        ModelKind::Advdiff => {
            let system = build_system(&cfg, &space)?;
            run_generic(&system, scheme, &grid, &fp, &initial)?
        }
    };

    let series_path = args.out.join(format!("{}-series.csv", cfg.name));
    write_series_csv(&series_path, &output.records)?;
    println!("wrote {}", series_path.display());

    let system = build_system(&cfg, &space)?;
    let (structural, pass) = structural_report(&cfg, &system, &output.final_state)?;
    let first = &output.records[0];
    let last = output.records.last().unwrap();
    let mass_drift = output
        .records
        .iter()
        .map(|r| (r.mass - first.mass).abs())
        .fold(0.0f64, f64::max);
    let h_drift_rel = output
        .records
        .iter()
        .map(|r| (r.hamiltonian - first.hamiltonian).abs())
        .fold(0.0f64, f64::max)
        / first.hamiltonian.abs().max(f64::MIN_POSITIVE);
    let summary = serde_json::json!({
        "name": cfg.name,
        "model": cfg.model.name(),
        "scheme": scheme.name(),
        "n_dofs": space.n_dofs(),
        "n_steps": grid.n_steps,
        "dt": grid.dt(),
        "seed": cfg.seed,
        "final": {
            "time": last.time,
            "mass": last.mass,
            "hamiltonian": last.hamiltonian,
            "entropy": last.entropy,
            "enstrophy": last.enstrophy,
            "palinstrophy": last.palinstrophy,
        },
        "mass_drift": mass_drift,
        "hamiltonian_drift_rel": h_drift_rel,
        "max_rel_l2_error": output.max_rel_l2_error,
        "max_fp_iterations": output.records.iter().map(|r| r.fp_iterations).max(),
        "structural": structural,
    });
    let summary_path = args.out.join(format!("{}-summary.json", cfg.name));
    write_text(&summary_path, &format!("{:#}\n", summary))?;
    println!("wrote {}", summary_path.display());

    dump_matrices(args, &cfg, &space, &initial)?;
    if args.dump_mesh {
        dump_mesh_file(&cfg, &space, &args.out)?;
    }

    if args.strict && !pass {
        eprintln!("strict mode: structural checks failed");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_check(args: &CheckArgs) -> Result<i32> {
    let cfg = load_config(&args.common)?;
    ensure_out_dir(&args.common)?;
    let space = build_space(&cfg)?;
    let system = build_system(&cfg, &space)?;
    let n = space.n_dofs();

    // random state; zero weighted mean for NS so grad H is kernel-consistent
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let mut state: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if matches!(cfg.model, ModelKind::NsTorus | ModelKind::NsSphere) {
        let weights = assemble_mass(&space).row_sums();
        let total: f64 = weights.iter().sum();
        let mean = weights.iter().zip(&state).map(|(w, v)| w * v).sum::<f64>() / total;
        for v in state.iter_mut() {
            *v -= mean;
        }
    }

    let mut j = system.j_matrix(&state)?;
    if args.corrupt_j {
        // negative control: replace J by a symmetric corruption (elementwise
        // magnitudes), which must trip the skewness check
        let corrupted: Vec<(usize, usize, f64)> =
            j.triplets().map(|(r, c, v)| (r, c, v.abs())).collect();
        j = CsrMatrix::from_triplets(n, n, &corrupted);
    }
    let g = system.g_matrix(&state)?;
    let j_skew = j.skewness_error();
    let g_sym = g.symmetry_error();

    // worst-case Rayleigh margin against the declared sign of G
    let mut rayleigh_margin = f64::INFINITY;
    for _ in 0..50 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gx = g.matvec(&x);
        let r = x.iter().zip(&gx).map(|(p, q)| p * q).sum::<f64>()
            / x.iter().map(|p| p * p).sum::<f64>();
        let margin = match system.g_sign() {
            GSign::PositiveSemiDefinite => r,
            GSign::NegativeSemiDefinite => -r,
        };
        rayleigh_margin = rayleigh_margin.min(margin);
    }

    // finite-difference gradient check on a subsample of components
    let eps = 1e-5;
    let gh = system.grad_h(&state);
    let gs = system.grad_s(&state);
    let stride = (n / 16).max(1);
    let mut grad_h_fd = 0.0f64;
    let mut grad_s_fd = 0.0f64;
    for i in (0..n).step_by(stride) {
        let mut p = state.clone();
        let mut q = state.clone();
        p[i] += eps;
        q[i] -= eps;
        grad_h_fd = grad_h_fd.max(
            ((system.h_value(&p) - system.h_value(&q)) / (2.0 * eps) - gh[i]).abs(),
        );
        grad_s_fd = grad_s_fd.max(
            ((system.s_value(&p) - system.s_value(&q)) / (2.0 * eps) - gs[i]).abs(),
        );
    }

    // Casimir production rates under the Hamiltonian part of the dynamics
    let j_flow = system.j_hat_apply(&state, &gh)?;
    let mut casimir_rates = serde_json::Map::new();
    let mut casimir_worst = 0.0f64;
    for casimir in system.casimirs() {
        let grad_c = (casimir.gradient)(&state);
        let rate = grad_c.iter().zip(&j_flow).map(|(c, f)| c * f).sum::<f64>();
        casimir_worst = casimir_worst.max(rate.abs());
        casimir_rates.insert(casimir.name.to_string(), serde_json::json!(rate));
    }

    let mut pass = j_skew <= 1e-11
        && g_sym <= 1e-11
        && rayleigh_margin >= -1e-11
        && grad_h_fd <= 1e-6
        && grad_s_fd <= 1e-6
        && casimir_worst <= 1e-9;
    let mut report = serde_json::json!({
        "name": cfg.name,
        "model": cfg.model.name(),
        "n_dofs": n,
        "seed": cfg.seed,
        "j_skewness_error": j_skew,
        "g_symmetry_error": g_sym,
        "g_rayleigh_margin": rayleigh_margin,
        "grad_h_fd_error": grad_h_fd,
        "grad_s_fd_error": grad_s_fd,
        "casimir_rates": casimir_rates,
    });
    if matches!(cfg.model, ModelKind::NsTorus | ModelKind::NsSphere) {
        let scale = max_norm(&state).max(1.0);
        let j_grad_s = max_norm(&system.j_hat_apply(&state, &system.grad_s(&state))?);
        pass = pass && j_grad_s <= 1e-10 * scale;
        report["j_grad_s_norm"] = serde_json::json!(j_grad_s);
        if cfg.params.nu > 0.0 {
            let ghat = system.g_hat_apply(&state, &gh)?;
            let res: Vec<f64> = ghat
                .iter()
                .zip(&state)
                .map(|(g, a)| g / cfg.params.nu + a)
                .collect();
            let null = max_norm(&res);
            pass = pass && null <= 1e-9 * scale;
            report["g_grad_h_null_residual"] = serde_json::json!(null);
        }
    }
    if cfg.model == ModelKind::Kdv {
        let constant = vec![1.0; n];
        let eq = system.check_equilibrium(&constant, 1e-10)?;
        pass = pass && eq;
        report["constant_state_equilibrium"] = serde_json::json!(eq);
    }
    report["pass"] = serde_json::json!(pass);

    let text = format!("{:#}\n", report);
    print!("{text}");
    let path = args.common.out.join(format!("{}-check.json", cfg.name));
    write_text(&path, &text)?;

    dump_matrices(&args.common, &cfg, &space, &state)?;
    if args.common.strict && !pass {
        eprintln!("strict mode: structural checks failed");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_converge(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    ensure_out_dir(args)?;
    let ConvergenceConfig { resolutions } = cfg.convergence.clone().ok_or_else(|| {
        Error::InvalidArgument("config has no [convergence] section".into())
    })?;
    let scheme = cfg.integrator.scheme_id()?;
    let grid = time_grid(&cfg)?;
    let fp = fp_config(&cfg);

    let table = match cfg.model {
        ModelKind::Kdv => kdv_convergence_study(scheme, &resolutions, &grid, &fp)?,
        ModelKind::NsTorus => {
            ns_torus_convergence_study(scheme, &resolutions, cfg.params.nu, &grid, &fp)?
        }
        ModelKind::NsSphere => {
            ns_sphere_convergence_study(scheme, &resolutions, cfg.params.nu, &grid, &fp)?
        }
        ModelKind::Advdiff => {
            return Err(Error::InvalidArgument(
                "no exact-solution convergence study for advdiff".into(),
            ))
        }
    };

    let csv_path = args.out.join(format!("{}-convergence.csv", cfg.name));
    table.write_csv(&csv_path)?;
    println!("wrote {}", csv_path.display());

    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "n_dofs": r.n_dofs,
                "error": r.error,
                "rate_dofs": r.rate_dofs,
                "rate_h": r.rate_h,
            })
        })
        .collect();
    let json = serde_json::json!({
        "name": cfg.name,
        "model": cfg.model.name(),
        "scheme": scheme.name(),
        "rows": rows,
        "final_rate_dofs": table.final_rate_dofs(),
    });
    let json_path = args.out.join(format!("{}-convergence.json", cfg.name));
    write_text(&json_path, &format!("{:#}\n", json))?;
    println!("wrote {}", json_path.display());
    Ok(0)
}

fn cmd_dump_mesh(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    ensure_out_dir(args)?;
    let space = build_space(&cfg)?;
    dump_mesh_file(&cfg, &space, &args.out)?;
    Ok(0)
}
