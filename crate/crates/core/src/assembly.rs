//! Assembly of the discrete operators: mass `M`, stiffness `K`, 1D advection
//! `A`, the KdV triple tensor `R` and the state-dependent Navier-Stokes
//! Poisson matrix `J(a)`.
//!
//! All element integrals of P1 products are closed-form (no quadrature
//! error): in 1D the usual `h/6 [1 4 1]` style stencils, on triangles the
//! barycentric formulas with `∫ v_i = area/3`. On a triangle every basis
//! gradient is constant, so the vorticity bracket `{v_k, v_j}` is constant
//! per element and its pairing with `v_i` is exact as well.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TrilinearForm};
use crate::mesh::{cross, dot, norm, Mesh1D, TriMesh};

/// Continuous piecewise-linear finite element space on one of the supported
/// geometries. Degrees of freedom are the mesh vertices after periodic
/// identification.
#[derive(Debug, Clone)]
pub enum P1Space {
    Interval(Mesh1D),
    Surface(TriMesh),
}

impl P1Space {
    pub fn n_dofs(&self) -> usize {
        match self {
            P1Space::Interval(m) => m.n_nodes,
            P1Space::Surface(m) => m.n_vertices(),
        }
    }

    /// Total measure of the computational domain (sum of cell measures).
    pub fn domain_measure(&self) -> f64 {
        match self {
            P1Space::Interval(m) => m.domain_length,
            P1Space::Surface(m) => m.total_area(),
        }
    }

    pub fn interval(&self) -> Result<&Mesh1D> {
        match self {
            P1Space::Interval(m) => Ok(m),
            P1Space::Surface(_) => Err(Error::WrongSpaceKind {
                expected: "1D periodic interval",
            }),
        }
    }

    pub fn surface(&self) -> Result<&TriMesh> {
        match self {
            P1Space::Surface(m) => Ok(m),
            P1Space::Interval(_) => Err(Error::WrongSpaceKind { expected: "surface" }),
        }
    }
}

/// Geometry of one flat triangle: constant basis gradients, area and unit
/// normal. `gradients[l]` is the (in-plane) gradient of the basis function of
/// local vertex `l`.
pub(crate) struct TriGeometry {
    pub gradients: [[f64; 3]; 3],
    pub area: f64,
    pub normal: [f64; 3],
}

pub(crate) fn tri_geometry(corners: &[[f64; 3]; 3]) -> TriGeometry {
    let e01 = [
        corners[1][0] - corners[0][0],
        corners[1][1] - corners[0][1],
        corners[1][2] - corners[0][2],
    ];
    let e02 = [
        corners[2][0] - corners[0][0],
        corners[2][1] - corners[0][1],
        corners[2][2] - corners[0][2],
    ];
    let n2 = cross(e01, e02); // |n2| = 2 * area
    let double_area = norm(n2);
    let area = 0.5 * double_area;
    let normal = [n2[0] / double_area, n2[1] / double_area, n2[2] / double_area];
    // grad of basis l is (normal x opposite_edge) / (2 area), with the
    // opposite edge traversed counter-clockwise
    let edge = |a: usize, b: usize| {
        [
            corners[b][0] - corners[a][0],
            corners[b][1] - corners[a][1],
            corners[b][2] - corners[a][2],
        ]
    };
    let g = |opp: [f64; 3]| {
        let c = cross(normal, opp);
        [c[0] / double_area, c[1] / double_area, c[2] / double_area]
    };
    TriGeometry {
        gradients: [g(edge(1, 2)), g(edge(2, 0)), g(edge(0, 1))],
        area,
        normal,
    }
}

/// Mass matrix `M_{ij} = <v_j, v_i>`.
pub fn assemble_mass(space: &P1Space) -> CsrMatrix {
    let n = space.n_dofs();
    let mut triplets = Vec::new();
    match space {
        P1Space::Interval(m) => {
            let h = m.cell_size;
            for c in 0..m.n_cells() {
                let (a, b) = m.cell(c);
                triplets.push((a, a, h / 3.0));
                triplets.push((b, b, h / 3.0));
                triplets.push((a, b, h / 6.0));
                triplets.push((b, a, h / 6.0));
            }
        }
        P1Space::Surface(m) => {
            for t in 0..m.n_triangles() {
                let area = m.triangle_area(t);
                let tri = &m.triangles[t];
                for li in 0..3 {
                    for lj in 0..3 {
                        let v = if li == lj { area / 6.0 } else { area / 12.0 };
                        triplets.push((tri[li], tri[lj], v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Stiffness matrix `K_{ij} = <grad v_j, grad v_i>` (Laplace-Beltrami on the
/// sphere via flat-triangle tangential gradients). Constants are in the
/// kernel: `K 1 = 0` exactly.
pub fn assemble_stiffness(space: &P1Space) -> CsrMatrix {
    let n = space.n_dofs();
    let mut triplets = Vec::new();
    match space {
        P1Space::Interval(m) => {
            let h = m.cell_size;
            for c in 0..m.n_cells() {
                let (a, b) = m.cell(c);
                triplets.push((a, a, 1.0 / h));
                triplets.push((b, b, 1.0 / h));
                triplets.push((a, b, -1.0 / h));
                triplets.push((b, a, -1.0 / h));
            }
        }
        P1Space::Surface(m) => {
            for t in 0..m.n_triangles() {
                let geo = tri_geometry(&m.corners[t]);
                let tri = &m.triangles[t];
                for li in 0..3 {
                    for lj in 0..3 {
                        let v = geo.area * dot(geo.gradients[li], geo.gradients[lj]);
                        triplets.push((tri[li], tri[lj], v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// 1D advection matrix `A_{ij} = <d/dx v_j, v_i>`; skew-symmetric on the
/// periodic interval, `A 1 = 0`.
pub fn assemble_advection_1d(space: &P1Space) -> Result<CsrMatrix> {
    let m = space.interval()?;
    let n = m.n_nodes;
    let mut triplets = Vec::new();
    for c in 0..m.n_cells() {
        let (a, b) = m.cell(c);
        // d/dx v_a = -1/h, d/dx v_b = 1/h on the cell; ∫ v_i = h/2
        triplets.push((a, a, -0.5));
        triplets.push((a, b, 0.5));
        triplets.push((b, a, -0.5));
        triplets.push((b, b, 0.5));
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// KdV triple tensor `R(i, j, k) = <v_j v_k, v_i>` on the periodic interval.
/// Exact element integrals: `h/4` when all three local indices coincide,
/// `h/12` otherwise.
pub fn assemble_trilinear_kdv(space: &P1Space) -> Result<TrilinearForm> {
    let m = space.interval()?;
    let n = m.n_nodes;
    let h = m.cell_size;
    let mut acc: std::collections::BTreeMap<(u32, u32, u32), f64> = std::collections::BTreeMap::new();
    for c in 0..m.n_cells() {
        let (a, b) = m.cell(c);
        let local = [a as u32, b as u32];
        for li in 0..2 {
            for lj in 0..2 {
                for lk in 0..2 {
                    let v = if li == lj && lj == lk { h / 4.0 } else { h / 12.0 };
                    *acc.entry((local[li], local[lj], local[lk])).or_insert(0.0) += v;
                }
            }
        }
    }
    let entries = acc.into_iter().map(|((i, j, k), v)| (i, j, k, v)).collect();
    Ok(TrilinearForm::new(n, entries))
}

/// Navier-Stokes Poisson matrix `J(a)_{ij} = sum_k a_k <{v_k, v_j}, v_i>`
/// with the bracket `{f, g} = grad f . (n x grad g)` rotated about the
/// element normal. On each flat triangle the bracket of two basis functions
/// is constant, so the pairing with `v_i` is exactly `area/3` times that
/// constant. Skew-symmetry and `J(a) a = 0` hold to rounding for every `a`.
pub fn assemble_ns_poisson_tensor(space: &P1Space, a: &[f64]) -> Result<CsrMatrix> {
    let m = space.surface()?;
    let n = m.n_vertices();
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.len(),
        });
    }
    let mut triplets = Vec::with_capacity(9 * m.n_triangles());
    for t in 0..m.n_triangles() {
        let geo = tri_geometry(&m.corners[t]);
        let tri = &m.triangles[t];
        // gradient of the P1 interpolant of a on this element
        let mut grad_a = [0.0; 3];
        for l in 0..3 {
            let c = a[tri[l]];
            for d in 0..3 {
                grad_a[d] += c * geo.gradients[l][d];
            }
        }
        let weight = geo.area / 3.0;
        for lj in 0..3 {
            // {a_h, v_j} = grad a_h . (n x grad v_j), constant on the element
            let bracket = dot(grad_a, cross(geo.normal, geo.gradients[lj]));
            let contrib = weight * bracket;
            for li in 0..3 {
                triplets.push((tri[li], tri[lj], contrib));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}
