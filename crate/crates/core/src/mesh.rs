//! Computational geometries: periodic interval, periodic torus triangulation,
//! and subdivided icosphere.
//!
//! All builders are deterministic: the same arguments always produce the same
//! vertex ordering and hence the same assembled matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::{Error, Result};

/// Uniform partition of a periodic interval `[0, L)`.
#[derive(Debug, Clone)]
pub struct Mesh1D {
    pub domain_length: f64,
    pub n_nodes: usize,
    pub node_coords: Vec<f64>,
    pub cell_size: f64,
}

impl Mesh1D {
    /// Cell `i` spans `[node i, node i+1 mod N)`.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        (i, (i + 1) % self.n_nodes)
    }

    pub fn n_cells(&self) -> usize {
        self.n_nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceGeometry {
    Torus { lx: f64, ly: f64 },
    Sphere,
}

/// Triangulated closed surface. Periodic identification is already applied:
/// `triangles` index into the identified vertex set, while `corners` keeps the
/// actual corner positions of each element (so wrapped torus elements retain
/// their true geometry).
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub corners: Vec<[[f64; 3]; 3]>,
    pub geometry: SurfaceGeometry,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let c = &self.corners[t];
        0.5 * norm(cross(sub(c[1], c[0]), sub(c[2], c[0])))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// V - E + F, edges counted on the identified vertex set.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = BTreeSet::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.n_vertices() as i64 - edges.len() as i64 + self.n_triangles() as i64
    }

    /// Number of triangles sharing each edge; a closed surface has exactly 2
    /// everywhere.
    pub fn edge_incidence(&self) -> BTreeMap<(usize, usize), usize> {
        let mut counts = BTreeMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for c in &self.corners {
            sum += norm(sub(c[1], c[0])) + norm(sub(c[2], c[1])) + norm(sub(c[0], c[2]));
            count += 3;
        }
        sum / count as f64
    }
}

/// Uniform periodic partition of `[0, L)` with `n_cells` nodes (node `n_cells`
/// is identified with node 0).
pub fn build_periodic_interval(domain_length: f64, n_cells: usize) -> Result<Mesh1D> {
    if !(domain_length > 0.0) {
        return Err(Error::InvalidMesh(format!(
            "domain length must be positive, got {domain_length}"
        )));
    }
    if n_cells < 3 {
        return Err(Error::InvalidMesh(format!(
            "need at least 3 cells, got {n_cells}"
        )));
    }
    let h = domain_length / n_cells as f64;
    Ok(Mesh1D {
        domain_length,
        n_nodes: n_cells,
        node_coords: (0..n_cells).map(|i| i as f64 * h).collect(),
        cell_size: h,
    })
}

/// Structured criss-cross triangulation of a periodic rectangle. Vertex
/// `(i, j)` sits at `(i lx/nx, j ly/ny, 0)` with index `j*nx + i`; each grid
/// quad is split along the same diagonal, giving `2 nx ny` triangles, all
/// counter-clockwise with respect to +z.
pub fn build_torus_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<TriMesh> {
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidMesh(format!(
            "side lengths must be positive, got {lx} x {ly}"
        )));
    }
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidMesh(format!(
            "need at least 3 cells per direction, got {nx} x {ny}"
        )));
    }
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([i as f64 * hx, j as f64 * hy, 0.0]);
        }
    }
    let idx = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    let pos = |i: usize, j: usize| [i as f64 * hx, j as f64 * hy, 0.0];
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut corners = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // quad (i,j) split along the (i,j)-(i+1,j+1) diagonal
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            corners.push([pos(i, j), pos(i + 1, j), pos(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            corners.push([pos(i, j), pos(i + 1, j + 1), pos(i, j + 1)]);
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
        corners,
        geometry: SurfaceGeometry::Torus { lx, ly },
    })
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let n = norm(p);
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Regular icosahedron subdivided `subdivisions` times, vertices projected to
/// the unit sphere. Vertex count is `10 * 4^s + 2`, triangle count `20 * 4^s`.
pub fn build_icosphere(subdivisions: usize) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();

    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mid = [0usize; 3];
            for (e, (a, b)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                .into_iter()
                .enumerate()
            {
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let p = normalize([
                        0.5 * (vertices[a][0] + vertices[b][0]),
                        0.5 * (vertices[a][1] + vertices[b][1]),
                        0.5 * (vertices[a][2] + vertices[b][2]),
                    ]);
                    vertices.push(p);
                    vertices.len() - 1
                });
            }
            next.push([tri[0], mid[0], mid[2]]);
            next.push([tri[1], mid[1], mid[0]]);
            next.push([tri[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        triangles = next;
    }

    let corners = triangles
        .iter()
        .map(|t| [vertices[t[0]], vertices[t[1]], vertices[t[2]]])
        .collect();
    TriMesh {
        vertices,
        triangles,
        corners,
        geometry: SurfaceGeometry::Sphere,
    }
}

/// Plain-text mesh dump: header line `V F`, then V vertex lines `x y z`, then
/// F face lines of 0-based vertex index triples.
pub fn write_mesh_text<W: Write>(mesh: &TriMesh, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{} {}", mesh.n_vertices(), mesh.n_triangles())?;
    for v in &mesh.vertices {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// 1D meshes dump with zero faces: nodes as `x 0 0`.
pub fn write_mesh_text_1d<W: Write>(mesh: &Mesh1D, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{} 0", mesh.n_nodes)?;
    for &x in &mesh.node_coords {
        writeln!(out, "{:.16e} 0 0", x)?;
    }
    Ok(())
}
