//! Concrete model systems and their analytic reference solutions: the
//! dissipative KdV equation on a periodic interval, 2D incompressible
//! Navier-Stokes in vorticity form on the torus and on the sphere, and a
//! linear advection-diffusion smoke-test model.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_advection_1d, assemble_mass, assemble_ns_poisson_tensor, assemble_stiffness,
    assemble_trilinear_kdv, P1Space,
};
use crate::error::{Error, Result};
use crate::integrators::KdvOperators;
use crate::linalg::{SpdSolver, ZeroMeanSolver};
use crate::mesh::{Mesh1D, SurfaceGeometry, TriMesh};
use crate::system::{Casimir, GSign, MetriplecticSystem, SystemParts};

/// Parameters of `u_t + alpha u u_x + eta u_xxx = nu u_xx`.
#[derive(Debug, Clone, Copy)]
pub struct KdvParams {
    pub alpha: f64,
    pub eta: f64,
    pub nu: f64,
    pub domain_length: f64,
}

impl Default for KdvParams {
    fn default() -> Self {
        KdvParams {
            alpha: 6.0,
            eta: 1.0,
            nu: 0.0,
            domain_length: 20.0 * std::f64::consts::PI,
        }
    }
}

impl KdvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.eta > 0.0 && self.nu >= 0.0 && self.domain_length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid KdV parameters alpha={} eta={} nu={} L={}",
                self.alpha, self.eta, self.nu, self.domain_length
            )));
        }
        Ok(())
    }
}

/// Parameters of the vorticity-form Navier-Stokes model.
#[derive(Debug, Clone, Copy)]
pub struct NsParams {
    pub nu: f64,
}

impl NsParams {
    pub fn validate(&self) -> Result<()> {
        if self.nu < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be nonnegative, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// Configuration of the point-vortex initial condition on the sphere.
#[derive(Debug, Clone, Copy)]
pub struct PointVortexConfig {
    pub n_vortices: usize,
    pub intensity: f64,
    pub seed: u64,
    /// Width of the regularising geodesic Gaussians; typically about twice
    /// the mean mesh spacing.
    pub regularisation_width: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Assemble the four KdV operators in one call.
pub fn kdv_operators(space: &P1Space) -> Result<KdvOperators> {
    Ok(KdvOperators {
        mass: assemble_mass(space),
        stiffness: assemble_stiffness(space),
        advection: assemble_advection_1d(space)?,
        trilinear: assemble_trilinear_kdv(space)?,
    })
}

/// KdV as a metriplectic-form system:
/// `M d_t a = -A b - nu K a`, `M b = (alpha/2) R a(x)a - eta K a`, i.e.
/// `J = -A`, `H(a) = (alpha/6) R(a,a,a) - (eta/2) a^T K a`,
/// `G = nu K`, `S(a) = -1/2 a^T M a`. Mass `1^T M a` is a Casimir.
pub fn kdv_system(params: &KdvParams, space: &P1Space) -> Result<MetriplecticSystem> {
    params.validate()?;
    let ops = kdv_operators(space)?;
    let n = space.n_dofs();
    let (alpha, eta, nu) = (params.alpha, params.eta, params.nu);
    let m = ops.mass.clone();
    let k = ops.stiffness.clone();
    let a_mat = ops.advection.clone();
    let r = ops.trilinear.clone();

    let k_g = k.clone();
    let k_h = k.clone();
    let r_h = r.clone();
    let m_s = m.clone();
    let m_sv = m.clone();
    let m_c = m.clone();
    MetriplecticSystem::new(SystemParts {
        mass: m,
        j_builder: Box::new(move |_| Ok(a_mat.scaled(-1.0))),
        g_builder: Box::new(move |_| Ok(k_g.scaled(nu))),
        grad_h: Box::new(move |a| {
            let q = r_h.contract(a, a);
            let ka = k_h.matvec(a);
            (0..a.len())
                .map(|i| 0.5 * alpha * q[i] - eta * ka[i])
                .collect()
        }),
        grad_s: Box::new(move |a| m_s.matvec(a).iter().map(|v| -v).collect()),
        h_value: Box::new(move |a| {
            (alpha / 6.0) * r.triple(a, a, a) - 0.5 * eta * dot(a, &k.matvec(a))
        }),
        s_value: Box::new(move |a| -0.5 * dot(a, &m_sv.matvec(a))),
        g_sign: GSign::PositiveSemiDefinite,
        casimirs: vec![Casimir {
            name: "mass",
            gradient: Box::new(move |_| m_c.matvec(&vec![1.0; n])),
        }],
        metriplectic: false,
    })
}

/// One-soliton solution of KdV with `alpha = 6`, `eta = 1`:
/// `u(x, t) = sech^2( (sqrt 2 / 2) (x - 5 pi - 2 t) )`.
pub fn soliton_exact(x: f64, t: f64) -> f64 {
    let arg = 0.5 * 2.0_f64.sqrt() * (x - 5.0 * std::f64::consts::PI - 2.0 * t);
    let s = 1.0 / arg.cosh();
    s * s
}

/// Vorticity-form Navier-Stokes on a closed surface:
/// `M d_t a = J(a) b - nu K a`, `K b = M a` (zero-mean stream solve), so
/// `H(a) = 1/2 a^T M b`, `E(a) = 1/2 a^T M a` (enstrophy, a Casimir),
/// `G = -nu K`. Total vorticity `1^T M a` is a Casimir as well.
pub fn ns_system(params: &NsParams, space: Arc<P1Space>) -> Result<MetriplecticSystem> {
    params.validate()?;
    let nu = params.nu;
    let n = space.n_dofs();
    let m = assemble_mass(&space);
    let k = assemble_stiffness(&space);
    let stream = Arc::new(ZeroMeanSolver::new(&k, m.row_sums(), 1e-13)?);

    let sp_j = space.clone();
    let k_g = k;
    let m_h = m.clone();
    let m_h2 = m.clone();
    let m_s = m.clone();
    let m_sv = m.clone();
    let m_hv = m.clone();
    let m_hv2 = m.clone();
    let m_c1 = m.clone();
    let m_c2 = m.clone();
    let stream_h = stream.clone();
    let stream_hv = stream;
    MetriplecticSystem::new(SystemParts {
        mass: m,
        j_builder: Box::new(move |a| assemble_ns_poisson_tensor(&sp_j, a)),
        g_builder: Box::new(move |_| Ok(k_g.scaled(-nu))),
        grad_h: Box::new(move |a| {
            let b = stream_h
                .solve(&m_h.matvec(a))
                .expect("stream solve failed in grad H");
            m_h2.matvec(&b)
        }),
        grad_s: Box::new(move |a| m_s.matvec(a)),
        h_value: Box::new(move |a| {
            let b = stream_hv
                .solve(&m_hv.matvec(a))
                .expect("stream solve failed in H");
            0.5 * dot(a, &m_hv2.matvec(&b))
        }),
        s_value: Box::new(move |a| 0.5 * dot(a, &m_sv.matvec(a))),
        g_sign: GSign::NegativeSemiDefinite,
        casimirs: vec![
            Casimir {
                name: "enstrophy",
                gradient: Box::new(move |a| m_c1.matvec(a)),
            },
            Casimir {
                name: "total_vorticity",
                gradient: Box::new(move |_| m_c2.matvec(&vec![1.0; n])),
            },
        ],
        metriplectic: false,
    })
}

/// [`ns_system`] restricted to torus meshes.
pub fn ns_torus_system(params: &NsParams, space: Arc<P1Space>) -> Result<MetriplecticSystem> {
    match space.surface()?.geometry {
        SurfaceGeometry::Torus { .. } => ns_system(params, space),
        SurfaceGeometry::Sphere => Err(Error::WrongSpaceKind { expected: "torus" }),
    }
}

/// [`ns_system`] restricted to sphere meshes.
pub fn ns_sphere_system(params: &NsParams, space: Arc<P1Space>) -> Result<MetriplecticSystem> {
    match space.surface()?.geometry {
        SurfaceGeometry::Sphere => ns_system(params, space),
        SurfaceGeometry::Torus { .. } => Err(Error::WrongSpaceKind { expected: "sphere" }),
    }
}

/// Walsh's exact torus solution with `lambda = 25`:
/// `Psi = e^{-nu lambda t} [ 1/4 cos(3x) sin(4y) - 1/5 cos(5y) - 1/5 sin(5x) ]`
/// and `omega = -lambda Psi`. Returns `(Psi, omega)`.
pub fn walsh_exact(x: f64, y: f64, t: f64, nu: f64) -> (f64, f64) {
    let lambda = 25.0;
    let psi = (-nu * lambda * t).exp()
        * (0.25 * (3.0 * x).cos() * (4.0 * y).sin() - 0.2 * (5.0 * y).cos() - 0.2 * (5.0 * x).sin());
    (psi, -lambda * psi)
}

/// First spherical harmonic solution on the unit sphere:
/// `Psi = 1/2 sin(theta) cos(phi) e^{-2 nu t}` and `omega = -2 Psi`
/// (eigenvalue `l(l+1) = 2` of the Laplace-Beltrami operator).
/// Returns `(Psi, omega)`.
pub fn sphere_harmonic_exact(theta: f64, phi: f64, t: f64, nu: f64) -> (f64, f64) {
    let psi = 0.5 * theta.sin() * phi.cos() * (-2.0 * nu * t).exp();
    (psi, -2.0 * psi)
}

/// Nodal interpolation of a scalar function on a 1D mesh.
pub fn interpolate_1d(mesh: &Mesh1D, f: impl Fn(f64) -> f64) -> Vec<f64> {
    mesh.node_coords.iter().map(|&x| f(x)).collect()
}

/// Nodal interpolation of a scalar function of position on a surface mesh.
pub fn interpolate_surface(mesh: &TriMesh, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    mesh.vertices.iter().map(|&v| f(v)).collect()
}

/// Spherical angles of a point on the unit sphere: `theta` is the polar
/// angle from the +z axis, `phi` the azimuth.
pub fn sphere_angles(p: [f64; 3]) -> (f64, f64) {
    let theta = p[2].clamp(-1.0, 1.0).acos();
    let phi = p[1].atan2(p[0]);
    (theta, phi)
}

/// Point-vortex initial condition on the sphere: `n_vortices` vortices at
/// uniformly random positions with alternating signs, each regularised as a
/// geodesic Gaussian of the configured width, L2-projected onto P1 and
/// mean-corrected to exactly zero total vorticity.
pub fn point_vortex_ic(config: &PointVortexConfig, space: &P1Space) -> Result<Vec<f64>> {
    let mesh = space.surface()?;
    if !matches!(mesh.geometry, SurfaceGeometry::Sphere) {
        return Err(Error::WrongSpaceKind { expected: "sphere" });
    }
    if config.n_vortices == 0 || config.n_vortices % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_vortices must be even and positive, got {}",
            config.n_vortices
        )));
    }
    if !(config.regularisation_width > 0.0) {
        return Err(Error::InvalidArgument(
            "regularisation width must be positive".into(),
        ));
    }

    // uniformly random unit vectors, alternating vortex signs
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers = Vec::with_capacity(config.n_vortices);
    for i in 0..config.n_vortices {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let r = (1.0 - z * z).sqrt();
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        centers.push(([r * phi.cos(), r * phi.sin(), z], sign * config.intensity));
    }

    let w2 = config.regularisation_width * config.regularisation_width;
    let field = |p: [f64; 3]| -> f64 {
        let mut v = 0.0;
        for &(c, s) in &centers {
            let cosang = (p[0] * c[0] + p[1] * c[1] + p[2] * c[2]).clamp(-1.0, 1.0);
            let d = cosang.acos(); // geodesic distance on the unit sphere
            v += s * (-(d * d) / (2.0 * w2)).exp();
        }
        v
    };

    // L2 projection: load vector by the edge-midpoint rule (degree-2 exact),
    // then a mass solve
    let n = space.n_dofs();
    let mut load = vec![0.0; n];
    for t in 0..mesh.n_triangles() {
        let c = &mesh.corners[t];
        let area = mesh.triangle_area(t);
        let tri = &mesh.triangles[t];
        for (la, lb) in [(0usize, 1usize), (1, 2), (2, 0)] {
            let mid = [
                0.5 * (c[la][0] + c[lb][0]),
                0.5 * (c[la][1] + c[lb][1]),
                0.5 * (c[la][2] + c[lb][2]),
            ];
            let nrm = (mid[0] * mid[0] + mid[1] * mid[1] + mid[2] * mid[2]).sqrt();
            let f = field([mid[0] / nrm, mid[1] / nrm, mid[2] / nrm]);
            // basis values at an edge midpoint: 1/2 at each edge endpoint
            load[tri[la]] += area / 3.0 * 0.5 * f;
            load[tri[lb]] += area / 3.0 * 0.5 * f;
        }
    }
    let mass = assemble_mass(space);
    let solver = SpdSolver::new(&mass, 1e-13)?;
    let mut a = solver.solve(&load)?;

    // correct the weighted mean to exactly zero total vorticity
    let weights = mass.row_sums();
    let total_weight: f64 = weights.iter().sum();
    for _ in 0..2 {
        let mean = dot(&weights, &a) / total_weight;
        for v in a.iter_mut() {
            *v -= mean;
        }
    }
    Ok(a)
}

/// Linear advection-diffusion `u_t + v u_x = nu u_xx` on a periodic
/// interval: `J = -v A`, `G = -nu K`, `H = S = 1/2 a^T M a`.
pub fn advection_diffusion_system(v: f64, nu: f64, space: &P1Space) -> Result<MetriplecticSystem> {
    if nu < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "viscosity must be nonnegative, got {nu}"
        )));
    }
    let n = space.n_dofs();
    let m = assemble_mass(space);
    let k = assemble_stiffness(space);
    let a_mat = assemble_advection_1d(space)?;
    let m_h = m.clone();
    let m_s = m.clone();
    let m_hv = m.clone();
    let m_sv = m.clone();
    let m_c = m.clone();
    MetriplecticSystem::new(SystemParts {
        mass: m,
        j_builder: Box::new(move |_| Ok(a_mat.scaled(-v))),
        g_builder: Box::new(move |_| Ok(k.scaled(-nu))),
        grad_h: Box::new(move |a| m_h.matvec(a)),
        grad_s: Box::new(move |a| m_s.matvec(a)),
        h_value: Box::new(move |a| 0.5 * dot(a, &m_hv.matvec(a))),
        s_value: Box::new(move |a| 0.5 * dot(a, &m_sv.matvec(a))),
        g_sign: GSign::NegativeSemiDefinite,
        casimirs: vec![Casimir {
            name: "mass",
            gradient: Box::new(move |_| m_c.matvec(&vec![1.0; n])),
        }],
        metriplectic: false,
    })
}
