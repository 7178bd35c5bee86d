//! Diagnostics and persistence: per-step invariant time series, entropy
//! production residuals, relative L2 errors against exact solutions, and
//! mesh-convergence tables, all with bit-exact CSV round-tripping.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::assembly::P1Space;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{Mesh1D, SurfaceGeometry, TriMesh};

/// One row of the per-step time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub hamiltonian: f64,
    pub entropy: f64,
    pub enstrophy: Option<f64>,
    pub palinstrophy: Option<f64>,
    pub entropy_residual: Option<f64>,
    pub rel_l2_error: Option<f64>,
    pub fp_iterations: usize,
}

impl DiagnosticsRecord {
    pub fn validate(&self) -> Result<()> {
        let finite = self.time.is_finite()
            && self.mass.is_finite()
            && self.hamiltonian.is_finite()
            && self.entropy.is_finite()
            && self.enstrophy.map_or(true, f64::is_finite)
            && self.palinstrophy.map_or(true, f64::is_finite)
            && self.entropy_residual.map_or(true, f64::is_finite)
            && self.rel_l2_error.map_or(true, f64::is_finite);
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }
}

pub const SERIES_HEADER: &str =
    "step,time,mass,hamiltonian,entropy,enstrophy,palinstrophy,entropy_residual,rel_l2_error,fp_iterations";

fn fmt_f64(v: f64) -> String {
    // 17 significant digits: round-trips every f64 exactly
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Render a diagnostics series as CSV text.
pub fn series_to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::new();
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.time),
            fmt_f64(r.mass),
            fmt_f64(r.hamiltonian),
            fmt_f64(r.entropy),
            fmt_opt(r.enstrophy),
            fmt_opt(r.palinstrophy),
            fmt_opt(r.entropy_residual),
            fmt_opt(r.rel_l2_error),
            r.fp_iterations,
        );
    }
    out
}

/// Write a diagnostics series to a CSV file.
pub fn write_series_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    fs::write(path, series_to_csv(records))
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("line {line}: bad number {field:?}")))
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line).map(Some)
    }
}

/// Parse a diagnostics series from CSV text.
pub fn series_from_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SERIES_HEADER => {}
        _ => return Err(Error::InvalidArgument("bad or missing CSV header".into())),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected 10 fields, got {}",
                i + 1,
                f.len()
            )));
        }
        records.push(DiagnosticsRecord {
            step: f[0]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad step", i + 1)))?,
            time: parse_f64(f[1], i + 1)?,
            mass: parse_f64(f[2], i + 1)?,
            hamiltonian: parse_f64(f[3], i + 1)?,
            entropy: parse_f64(f[4], i + 1)?,
            enstrophy: parse_opt(f[5], i + 1)?,
            palinstrophy: parse_opt(f[6], i + 1)?,
            entropy_residual: parse_opt(f[7], i + 1)?,
            rel_l2_error: parse_opt(f[8], i + 1)?,
            fp_iterations: f[9]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad fp_iterations", i + 1)))?,
        });
    }
    Ok(records)
}

/// Read a diagnostics series from a CSV file.
pub fn read_series_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    series_from_csv(&text)
}

// 4-point Gauss-Legendre rule on [0, 1], exact to degree 7
const GAUSS4: [(f64, f64); 4] = [
    (0.5 - 0.5 * 0.339_981_043_584_856_3, 0.5 * 0.652_145_154_862_546_1),
    (0.5 + 0.5 * 0.339_981_043_584_856_3, 0.5 * 0.652_145_154_862_546_1),
    (0.5 - 0.5 * 0.861_136_311_594_052_6, 0.5 * 0.347_854_845_137_453_86),
    (0.5 + 0.5 * 0.861_136_311_594_052_6, 0.5 * 0.347_854_845_137_453_86),
];

// Dunavant degree-4 rule on the reference triangle: two orbits of 3 points,
// barycentric coordinates and weights (summing to 1)
const DUNAVANT4: [([f64; 3], f64); 6] = [
    (
        [0.108_103_018_168_070, 0.445_948_490_915_965, 0.445_948_490_915_965],
        0.223_381_589_678_011,
    ),
    (
        [0.445_948_490_915_965, 0.108_103_018_168_070, 0.445_948_490_915_965],
        0.223_381_589_678_011,
    ),
    (
        [0.445_948_490_915_965, 0.445_948_490_915_965, 0.108_103_018_168_070],
        0.223_381_589_678_011,
    ),
    (
        [0.816_847_572_980_459, 0.091_576_213_509_771, 0.091_576_213_509_771],
        0.109_951_743_655_322,
    ),
    (
        [0.091_576_213_509_771, 0.816_847_572_980_459, 0.091_576_213_509_771],
        0.109_951_743_655_322,
    ),
    (
        [0.091_576_213_509_771, 0.091_576_213_509_771, 0.816_847_572_980_459],
        0.109_951_743_655_322,
    ),
];

fn rel_error_from(num: f64, den: f64) -> Result<f64> {
    if den <= 0.0 {
        return Err(Error::InvalidArgument(
            "exact solution has zero L2 norm".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// Relative L2 error of the P1 interpolant coefficients `a` against a 1D
/// exact solution, by 4-point Gauss quadrature per cell.
pub fn rel_l2_error_1d(a: &[f64], exact: &dyn Fn(f64) -> f64, mesh: &Mesh1D) -> Result<f64> {
    if a.len() != mesh.n_nodes {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes,
            got: a.len(),
        });
    }
    let h = mesh.cell_size;
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..mesh.n_cells() {
        let (p, q) = mesh.cell(c);
        let x0 = mesh.node_coords[p];
        for &(xi, w) in &GAUSS4 {
            let uh = (1.0 - xi) * a[p] + xi * a[q];
            let ue = exact(x0 + xi * h);
            num += w * h * (uh - ue) * (uh - ue);
            den += w * h * ue * ue;
        }
    }
    rel_error_from(num, den)
}

/// Relative L2 error on a surface mesh by the degree-4 Dunavant rule per
/// triangle. On the sphere the exact solution is evaluated at the radial
/// projection of each quadrature point onto the unit sphere.
pub fn rel_l2_error_surface(
    a: &[f64],
    exact: &dyn Fn([f64; 3]) -> f64,
    mesh: &TriMesh,
) -> Result<f64> {
    if a.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_vertices(),
            got: a.len(),
        });
    }
    let on_sphere = matches!(mesh.geometry, SurfaceGeometry::Sphere);
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..mesh.n_triangles() {
        let corners = &mesh.corners[t];
        let tri = &mesh.triangles[t];
        let area = mesh.triangle_area(t);
        for &(bary, w) in &DUNAVANT4 {
            let mut p = [0.0; 3];
            let mut uh = 0.0;
            for l in 0..3 {
                for d in 0..3 {
                    p[d] += bary[l] * corners[l][d];
                }
                uh += bary[l] * a[tri[l]];
            }
            if on_sphere {
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                p = [p[0] / r, p[1] / r, p[2] / r];
            }
            let ue = exact(p);
            num += w * area * (uh - ue) * (uh - ue);
            den += w * area * ue * ue;
        }
    }
    rel_error_from(num, den)
}

/// Relative L2 error dispatching on the space kind; the exact solution takes
/// a 3D position (1D meshes pass `[x, 0, 0]`).
pub fn rel_l2_error(a: &[f64], exact: &dyn Fn([f64; 3]) -> f64, space: &P1Space) -> Result<f64> {
    match space {
        P1Space::Interval(mesh) => rel_l2_error_1d(a, &|x| exact([x, 0.0, 0.0]), mesh),
        P1Space::Surface(mesh) => rel_l2_error_surface(a, exact, mesh),
    }
}

/// Total discrete mass `1^T M a`.
pub fn total_mass(mass: &CsrMatrix, a: &[f64]) -> f64 {
    mass.matvec(a).iter().sum()
}

/// Discrete entropy-production residual for the dissipative KdV scheme:
/// `(S(a_k1) - S(a_k)) / dt - nu m^T K m` with `m` the midpoint coefficients
/// and `S(a) = -1/2 a^T M a`.
pub fn entropy_residual(
    a_k: &[f64],
    a_k1: &[f64],
    dt: f64,
    nu: f64,
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
) -> f64 {
    let s = |a: &[f64]| -0.5 * a.iter().zip(mass.matvec(a)).map(|(x, y)| x * y).sum::<f64>();
    let m: Vec<f64> = a_k.iter().zip(a_k1).map(|(x, y)| 0.5 * (x + y)).collect();
    let km = stiffness.matvec(&m);
    let production: f64 = m.iter().zip(km).map(|(x, y)| x * y).sum();
    (s(a_k1) - s(a_k)) / dt - nu * production
}

/// Navier-Stokes invariants `(H, E, P)` from vorticity `a` and stream
/// coefficients `b` (`K b = M a`): Hamiltonian `1/2 a^T M b`, enstrophy
/// `1/2 a^T M a`, palinstrophy `1/2 a^T K a`.
pub fn ns_invariants(a: &[f64], b: &[f64], mass: &CsrMatrix, stiffness: &CsrMatrix) -> (f64, f64, f64) {
    let ma = mass.matvec(a);
    let h = 0.5 * b.iter().zip(&ma).map(|(x, y)| x * y).sum::<f64>();
    let e = 0.5 * a.iter().zip(&ma).map(|(x, y)| x * y).sum::<f64>();
    let p = 0.5 * a.iter().zip(stiffness.matvec(a)).map(|(x, y)| x * y).sum::<f64>();
    (h, e, p)
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n_dofs: usize,
    pub error: f64,
    pub rate_dofs: Option<f64>,
    pub rate_h: Option<f64>,
}

/// Mesh-convergence table with observed rates in dofs and in mesh size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

pub const CONVERGENCE_HEADER: &str = "n_dofs,error,rate_dofs,rate_h";

impl ConvergenceTable {
    /// Build a table from `(n_dofs, error)` pairs; `dimension` is the
    /// spatial dimension relating dofs and mesh size (`h ~ N^{-1/d}`), so
    /// `rate_h = d * rate_dofs`.
    pub fn from_errors(data: &[(usize, f64)], dimension: usize) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(Error::InvalidArgument(format!(
                "unsupported dimension {dimension}"
            )));
        }
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(data.len());
        for (i, &(n, e)) in data.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::NonFinite);
            }
            let rate_dofs = if i == 0 {
                None
            } else {
                let (np, ep) = data[i - 1];
                if n <= np {
                    return Err(Error::InvalidArgument(
                        "dof counts must be strictly increasing".into(),
                    ));
                }
                Some((ep / e).ln() / (n as f64 / np as f64).ln())
            };
            rows.push(ConvergenceRow {
                n_dofs: n,
                error: e,
                rate_dofs,
                rate_h: rate_dofs.map(|r| dimension as f64 * r),
            });
        }
        Ok(ConvergenceTable { rows })
    }

    /// Observed rate in dofs between the two finest meshes.
    pub fn final_rate_dofs(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate_dofs)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CONVERGENCE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.n_dofs,
                fmt_f64(r.error),
                fmt_opt(r.rate_dofs),
                fmt_opt(r.rate_h),
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())
            .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == CONVERGENCE_HEADER => {}
            _ => return Err(Error::InvalidArgument("bad or missing CSV header".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::InvalidArgument(format!(
                    "line {}: expected 4 fields, got {}",
                    i + 1,
                    f.len()
                )));
            }
            rows.push(ConvergenceRow {
                n_dofs: f[0]
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("line {}: bad n_dofs", i + 1)))?,
                error: parse_f64(f[1], i + 1)?,
                rate_dofs: parse_opt(f[2], i + 1)?,
                rate_h: parse_opt(f[3], i + 1)?,
            });
        }
        Ok(ConvergenceTable { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, assemble_stiffness};
    use crate::mesh::{build_icosphere, build_periodic_interval, build_torus_mesh};
    use crate::models::{
        interpolate_1d, interpolate_surface, soliton_exact, sphere_angles, sphere_harmonic_exact,
        walsh_exact,
    };
    use std::f64::consts::PI;

    fn sample_records() -> Vec<DiagnosticsRecord> {
        vec![
            DiagnosticsRecord {
                step: 0,
                time: 0.0,
                mass: 1.0 / 3.0,
                hamiltonian: -2.718281828459045,
                entropy: 0.1,
                enstrophy: None,
                palinstrophy: None,
                entropy_residual: None,
                rel_l2_error: Some(1.2345678901234567e-5),
                fp_iterations: 0,
            },
            DiagnosticsRecord {
                step: 1,
                time: 0.012500000000000001,
                mass: 0.3333333333333333,
                hamiltonian: f64::MIN_POSITIVE,
                entropy: -1.0e-308,
                enstrophy: Some(7.0),
                palinstrophy: Some(14.000000000000002),
                entropy_residual: Some(-3.3e-17),
                rel_l2_error: None,
                fp_iterations: 11,
            },
        ]
    }

    #[test]
    fn series_csv_round_trip_is_byte_exact() {
        let records = sample_records();
        let text = series_to_csv(&records);
        let back = series_from_csv(&text).unwrap();
        assert_eq!(back, records);
        assert_eq!(series_to_csv(&back), text);
    }

    #[test]
    fn series_csv_rejects_malformed_input() {
        assert!(series_from_csv("nope\n1,2,3").is_err());
        let short = format!("{SERIES_HEADER}\n0,1,2\n");
        assert!(series_from_csv(&short).is_err());
        let bad = format!("{SERIES_HEADER}\n0,x,0,0,0,,,,,0\n");
        assert!(series_from_csv(&bad).is_err());
    }

    #[test]
    fn record_validation_rejects_non_finite() {
        let mut r = sample_records().remove(0);
        assert!(r.validate().is_ok());
        r.hamiltonian = f64::NAN;
        assert!(r.validate().is_err());
    }

    #[test]
    fn rel_l2_error_1d_interpolant_is_small_but_nonzero() {
        let mesh = build_periodic_interval(2.0 * PI, 64).unwrap();
        let a = interpolate_1d(&mesh, |x| x.sin());
        let e = rel_l2_error_1d(&a, &|x| x.sin(), &mesh).unwrap();
        assert!(e > 0.0 && e < 1e-3, "e = {e}");
        // interpolation error scales like h^2
        let mesh2 = build_periodic_interval(2.0 * PI, 128).unwrap();
        let a2 = interpolate_1d(&mesh2, |x| x.sin());
        let e2 = rel_l2_error_1d(&a2, &|x| x.sin(), &mesh2).unwrap();
        assert!((e / e2 - 4.0).abs() < 0.2, "ratio {}", e / e2);
    }

    #[test]
    fn rel_l2_error_1d_matches_fine_riemann_oracle() {
        let n = 16;
        let mesh = build_periodic_interval(2.0 * PI, n).unwrap();
        let a = interpolate_1d(&mesh, |x| (2.0 * x).cos());
        let e = rel_l2_error_1d(&a, &|x| (2.0 * x).cos(), &mesh).unwrap();
        // midpoint-rule oracle with 10^5 subintervals
        let m = 100_000;
        let h = 2.0 * PI / m as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m {
            let x = (i as f64 + 0.5) * h;
            let cell = ((x / mesh.cell_size) as usize).min(n - 1);
            let (p, q) = mesh.cell(cell);
            let xi = (x - mesh.node_coords[p]) / mesh.cell_size;
            let uh = (1.0 - xi) * a[p] + xi * a[q];
            let ue = (2.0 * x).cos();
            num += h * (uh - ue) * (uh - ue);
            den += h * ue * ue;
        }
        let oracle = (num / den).sqrt();
        assert!((e - oracle).abs() / oracle < 1e-6, "{e} vs {oracle}");
    }

    #[test]
    fn rel_l2_error_rejects_zero_exact() {
        let mesh = build_periodic_interval(1.0, 8).unwrap();
        let a = vec![0.5; 8];
        assert!(rel_l2_error_1d(&a, &|_| 0.0, &mesh).is_err());
    }

    #[test]
    fn soliton_interpolant_error_pinned() {
        let mesh = build_periodic_interval(20.0 * PI, 512).unwrap();
        let a = interpolate_1d(&mesh, |x| soliton_exact(x, 0.0));
        // pinned regression bound: measured 1.04e-3 (pure O(h^2) interpolation
        // error at h = 20 pi / 512)
        let e = rel_l2_error_1d(&a, &|x| soliton_exact(x, 0.0), &mesh).unwrap();
        assert!(e <= 1.1e-3, "e = {e}");
    }

    #[test]
    fn rel_l2_error_surface_exact_for_linear_data() {
        let mesh = build_torus_mesh(2.0 * PI, 2.0 * PI, 8, 8).unwrap();
        let a = vec![2.5; mesh.n_vertices()];
        let e = rel_l2_error_surface(&a, &|_| 2.5, &mesh).unwrap();
        assert!(e < 1e-14);
    }

    #[test]
    fn rel_l2_error_surface_matches_refined_quadrature() {
        // oracle: same integrand on each triangle split into 16 sub-triangles
        let mesh = build_torus_mesh(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let a = interpolate_surface(&mesh, |p| walsh_exact(p[0], p[1], 0.0, 0.0).1);
        let exact = |p: [f64; 3]| walsh_exact(p[0], p[1], 0.0, 0.0).1;
        let e = rel_l2_error_surface(&a, &exact, &mesh).unwrap();

        let (mut num, mut den) = (0.0, 0.0);
        for t in 0..mesh.n_triangles() {
            let c = &mesh.corners[t];
            let tri = &mesh.triangles[t];
            let area = mesh.triangle_area(t) / 16.0;
            let levels = 4;
            // enumerate the 16 congruent sub-triangles in barycentric form
            for i in 0..levels {
                for j in 0..(levels - i) {
                    let mut subs = vec![[
                        [i as f64, j as f64, (levels - i - j) as f64],
                        [(i + 1) as f64, j as f64, (levels - i - j - 1) as f64],
                        [i as f64, (j + 1) as f64, (levels - i - j - 1) as f64],
                    ]];
                    if i + j < levels - 1 {
                        subs.push([
                            [(i + 1) as f64, (j + 1) as f64, (levels - i - j - 2) as f64],
                            [(i + 1) as f64, j as f64, (levels - i - j - 1) as f64],
                            [i as f64, (j + 1) as f64, (levels - i - j - 1) as f64],
                        ]);
                    }
                    for sub in subs {
                        for &(bq, w) in &DUNAVANT4 {
                            let mut bary = [0.0; 3];
                            for l in 0..3 {
                                for d in 0..3 {
                                    bary[d] += bq[l] * sub[l][d] / levels as f64;
                                }
                            }
                            let mut p = [0.0; 3];
                            let mut uh = 0.0;
                            for l in 0..3 {
                                for d in 0..3 {
                                    p[d] += bary[l] * c[l][d];
                                }
                                uh += bary[l] * a[tri[l]];
                            }
                            let ue = exact(p);
                            num += w * area * (uh - ue) * (uh - ue);
                            den += w * area * ue * ue;
                        }
                    }
                }
            }
        }
        let oracle = (num / den).sqrt();
        assert!((e - oracle).abs() / oracle < 5e-3, "{e} vs {oracle}");
    }

    #[test]
    fn rel_l2_error_sphere_projects_quadrature_points() {
        let mesh = build_icosphere(3);
        let a = interpolate_surface(&mesh, |p| p[2]);
        // without projection the flat-facet offset would dominate; with it the
        // error is the pure O(h^2) interpolation error
        let e = rel_l2_error_surface(&a, &|p| p[2], &mesh).unwrap();
        assert!(e < 5e-3, "e = {e}");
    }

    #[test]
    fn entropy_residual_trivial_cases() {
        let sp = P1Space::Interval(build_periodic_interval(1.0, 8).unwrap());
        let m = assemble_mass(&sp);
        let k = assemble_stiffness(&sp);
        let a = vec![0.3; 8];
        assert_eq!(entropy_residual(&a, &a, 0.1, 0.0, &m, &k), 0.0);
    }

    #[test]
    fn ns_invariants_zero_state() {
        let sp = P1Space::Surface(build_torus_mesh(1.0, 1.0, 4, 4).unwrap());
        let m = assemble_mass(&sp);
        let k = assemble_stiffness(&sp);
        let z = vec![0.0; 16];
        assert_eq!(ns_invariants(&z, &z, &m, &k), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sphere_harmonic_palinstrophy_ratio() {
        // P ≈ 2 E for the l=1 harmonic (eigenvalue l(l+1) = 2)
        let mesh = build_icosphere(4);
        let sp = P1Space::Surface(mesh.clone());
        let m = assemble_mass(&sp);
        let k = assemble_stiffness(&sp);
        let a = interpolate_surface(&mesh, |p| {
            let (th, ph) = sphere_angles(p);
            sphere_harmonic_exact(th, ph, 0.0, 0.0).1
        });
        let (_, e, p) = ns_invariants(&a, &a, &m, &k);
        assert!((p / e - 2.0).abs() / 2.0 < 0.05, "P/E = {}", p / e);
    }

    #[test]
    fn convergence_table_exact_second_order() {
        // 1D, error = C N^-2 → rate_dofs = rate_h = 2
        let data = [(64, 1.0 / 64.0f64.powi(2)), (128, 1.0 / 128.0f64.powi(2)), (256, 1.0 / 256.0f64.powi(2))];
        let table = ConvergenceTable::from_errors(&data, 1).unwrap();
        assert!(table.rows[0].rate_dofs.is_none());
        for r in &table.rows[1..] {
            assert!((r.rate_dofs.unwrap() - 2.0).abs() < 1e-12);
            assert!((r.rate_h.unwrap() - 2.0).abs() < 1e-12);
        }
        // 2D convention: error = C N^-1 in dofs is rate 2 in h
        let data2 = [(256, 1.0 / 256.0), (1024, 1.0 / 1024.0)];
        let t2 = ConvergenceTable::from_errors(&data2, 2).unwrap();
        assert!((t2.final_rate_dofs().unwrap() - 1.0).abs() < 1e-12);
        assert!((t2.rows[1].rate_h.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_table_single_row_and_errors() {
        let t = ConvergenceTable::from_errors(&[(64, 0.5)], 1).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.final_rate_dofs().is_none());
        assert!(ConvergenceTable::from_errors(&[(64, 0.5), (64, 0.1)], 1).is_err());
        assert!(ConvergenceTable::from_errors(&[(64, f64::NAN)], 1).is_err());
    }

    #[test]
    fn convergence_csv_round_trip() {
        let data = [(64, 3.1e-3), (128, 7.9e-4), (256, 2.0e-4)];
        let table = ConvergenceTable::from_errors(&data, 1).unwrap();
        let text = table.to_csv();
        let back = ConvergenceTable::from_csv(&text).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.to_csv(), text);
    }
}
