//! Sparse matrix storage, linear solvers and the Picard iteration used by the
//! fully discrete schemes.
//!
//! Solver strategy: systems up to [`DENSE_LIMIT`] unknowns are factorised once
//! (Cholesky, or LU for the nonsymmetric KdV operator) and reused for every
//! step; larger systems fall back to Jacobi-preconditioned conjugate
//! gradients. Singular stiffness matrices of closed surfaces are handled by
//! deflating the constant mode explicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Above this size dense factorisation is replaced by conjugate gradients.
pub const DENSE_LIMIT: usize = 6000;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed, column
    /// indices end up sorted and unique within each row.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet ({i},{j}) out of bounds");
            per_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> CsrMatrix {
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(n, n, &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &triplets)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> CsrMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut triplets: Vec<_> = self.triplets().collect();
        triplets.extend(other.triplets().map(|(i, j, v)| (i, j, alpha * v)));
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max-norm of `A - A^T`.
    pub fn symmetry_error(&self) -> f64 {
        let t = self.transpose();
        let diff = self.add_scaled(&t, -1.0);
        diff.max_abs()
    }

    /// max-norm of `A + A^T` (skewness defect).
    pub fn skewness_error(&self) -> f64 {
        let t = self.transpose();
        let sum = self.add_scaled(&t, 1.0);
        sum.max_abs()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows.min(self.n_cols)];
        for i in 0..d.len() {
            for (j, v) in self.row(i) {
                if j == i {
                    d[i] = v;
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }
}

/// Sparse triple tensor `R` with entries `R(i, j, k) = <v_j v_k, v_i>`; fully
/// symmetric storage (every index ordering present explicitly).
#[derive(Debug, Clone)]
pub struct TrilinearForm {
    n: usize,
    entries: Vec<(u32, u32, u32, f64)>,
}

impl TrilinearForm {
    pub fn new(n: usize, entries: Vec<(u32, u32, u32, f64)>) -> TrilinearForm {
        TrilinearForm { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(u32, u32, u32, f64)] {
        &self.entries
    }

    /// `out[i] = sum_{j,k} R(i,j,k) x[j] y[k]`.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let mut out = vec![0.0; self.n];
        for &(i, j, k, v) in &self.entries {
            out[i as usize] += v * x[j as usize] * y[k as usize];
        }
        out
    }

    /// Scalar triple contraction `sum_{i,j,k} R(i,j,k) w[i] x[j] y[k]`.
    pub fn triple(&self, w: &[f64], x: &[f64], y: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, k, v)| v * w[i as usize] * x[j as usize] * y[k as usize])
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointConfig {
    /// Max-norm tolerance on the state update between sweeps.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tolerance: 1e-12,
            max_iterations: 100,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fixed point tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument(
                "fixed point max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub x: Vec<f64>,
    pub iterations: usize,
}

pub fn max_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn sub_max_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Plain Picard iteration `x <- map(x)` until the update max-norm drops below
/// the configured tolerance.
pub fn fixed_point_solve<F>(map: F, initial: &[f64], config: &FixedPointConfig) -> Result<FixedPointResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    config.validate()?;
    let mut x = initial.to_vec();
    let mut last_update = f64::INFINITY;
    for iter in 1..=config.max_iterations {
        let next = map(&x)?;
        last_update = sub_max_norm(&next, &x);
        x = next;
        if last_update <= config.tolerance {
            return Ok(FixedPointResult { x, iterations: iter });
        }
    }
    Err(Error::FixedPointDiverged {
        iterations: config.max_iterations,
        last_update,
        last_iterate: x,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned CG. `project` (when present) is applied to the
/// right-hand side, the initial guess and every iterate; it is used to deflate
/// the constant mode of singular stiffness matrices.
fn pcg(
    a: &CsrMatrix,
    rhs: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut b = rhs.to_vec();
    if let Some(p) = project {
        p(&mut b);
    }
    let bnorm = norm2(&b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = match guess {
        Some(g) => {
            let mut g = g.to_vec();
            if let Some(p) = project {
                p(&mut g);
            }
            g
        }
        None => vec![0.0; n],
    };
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if let Some(p) = project {
        p(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p_dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r);
    for _ in 0..max_iter {
        if res <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.matvec(&p_dir);
        let pap = dot(&p_dir, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p_dir[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(pr) = project {
            pr(&mut x);
            pr(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if let Some(pr) = project {
            pr(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p_dir[i] = z[i] + beta * p_dir[i];
        }
        res = norm2(&r);
    }
    if res <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::SolverDiverged {
            iterations: max_iter,
            residual: res / bnorm,
        })
    }
}

enum SpdBackend {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Cg { matrix: CsrMatrix, tol: f64 },
}

/// Reusable solver for a symmetric positive definite matrix.
pub struct SpdSolver {
    backend: SpdBackend,
    n: usize,
}

impl SpdSolver {
    pub fn new(matrix: &CsrMatrix, tol: f64) -> Result<SpdSolver> {
        let n = matrix.n_rows();
        assert_eq!(n, matrix.n_cols());
        let backend = if n <= DENSE_LIMIT {
            let chol = matrix
                .to_dense()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?;
            SpdBackend::Dense(chol)
        } else {
            SpdBackend::Cg {
                matrix: matrix.clone(),
                tol,
            }
        };
        Ok(SpdSolver { backend, n })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_warm(rhs, None)
    }

    pub fn solve_warm(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        match &self.backend {
            SpdBackend::Dense(chol) => {
                let b = DVector::from_column_slice(rhs);
                Ok(chol.solve(&b).as_slice().to_vec())
            }
            SpdBackend::Cg { matrix, tol } => {
                let max_iter = 40 * (self.n as f64).sqrt() as usize + 200;
                pcg(matrix, rhs, guess, *tol, max_iter, None)
            }
        }
    }
}

/// One-shot SPD solve with an explicit residual check
/// `||A x - b||_2 <= tol ||b||_2`.
pub fn solve_spd(matrix: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let solver = SpdSolver::new(matrix, tol)?;
    let x = solver.solve(rhs)?;
    let ax = matrix.matvec(&x);
    let res = norm2(&ax.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
    let bnorm = norm2(rhs);
    if bnorm > 0.0 && res > tol.max(1e-13) * bnorm {
        return Err(Error::SolverDiverged {
            iterations: 0,
            residual: res / bnorm,
        });
    }
    Ok(x)
}

enum ZeroMeanBackend {
    /// Cholesky of `K + sigma * 1 1^T` (rank-one shift removes the constant
    /// kernel; with a mean-free right-hand side the shifted solve returns the
    /// mean-free solution of `K x = b`).
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Cg { matrix: CsrMatrix, tol: f64 },
}

/// Solver for stiffness matrices of closed surfaces: the kernel is the
/// constant vector. The right-hand side is orthogonalised against the
/// constants internally, so a kernel-inconsistent input is projected rather
/// than rejected (a constant rhs therefore yields the zero solution). The
/// returned representative has zero weighted mean: `m . x = 0` where `m` is
/// the mass-matrix row-sum vector.
pub struct ZeroMeanSolver {
    backend: ZeroMeanBackend,
    mass_weights: Vec<f64>,
    n: usize,
}

impl ZeroMeanSolver {
    pub fn new(stiffness: &CsrMatrix, mass_weights: Vec<f64>, tol: f64) -> Result<ZeroMeanSolver> {
        let n = stiffness.n_rows();
        assert_eq!(n, mass_weights.len());
        let backend = if n <= DENSE_LIMIT {
            let mut dense = stiffness.to_dense();
            let sigma = dense.trace() / n as f64 / n as f64;
            for i in 0..n {
                for j in 0..n {
                    dense[(i, j)] += sigma;
                }
            }
            ZeroMeanBackend::Dense(dense.cholesky().ok_or(Error::NotPositiveDefinite)?)
        } else {
            ZeroMeanBackend::Cg {
                matrix: stiffness.clone(),
                tol,
            }
        };
        Ok(ZeroMeanSolver {
            backend,
            mass_weights,
            n,
        })
    }

    fn remove_mean(rhs: &mut [f64]) {
        let mean: f64 = rhs.iter().sum::<f64>() / rhs.len() as f64;
        for v in rhs.iter_mut() {
            *v -= mean;
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_warm(rhs, None)
    }

    pub fn solve_warm(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let mut b = rhs.to_vec();
        Self::remove_mean(&mut b);
        let mut x = match &self.backend {
            ZeroMeanBackend::Dense(chol) => {
                let b = DVector::from_column_slice(&b);
                chol.solve(&b).as_slice().to_vec()
            }
            ZeroMeanBackend::Cg { matrix, tol } => {
                let max_iter = 60 * (self.n as f64).sqrt() as usize + 200;
                pcg(
                    matrix,
                    &b,
                    guess,
                    *tol,
                    max_iter,
                    Some(&Self::remove_mean),
                )?
            }
        };
        // shift to the zero-weighted-mean representative
        let total: f64 = self.mass_weights.iter().sum();
        for _ in 0..2 {
            let mean = dot(&self.mass_weights, &x) / total;
            for v in x.iter_mut() {
                *v -= mean;
            }
        }
        Ok(x)
    }
}

/// One-shot variant of [`ZeroMeanSolver`].
pub fn solve_saddle_zero_mean(
    stiffness: &CsrMatrix,
    mass_weights: &[f64],
    rhs: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    ZeroMeanSolver::new(stiffness, mass_weights.to_vec(), tol)?.solve(rhs)
}

/// Dense LU factorisation for the nonsymmetric KdV step operator.
pub struct DenseLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl DenseLu {
    pub fn new(matrix: DMatrix<f64>) -> Result<DenseLu> {
        let n = matrix.nrows();
        let lu = matrix.lu();
        Ok(DenseLu { lu, n })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let b = DVector::from_column_slice(rhs);
        self.lu
            .solve(&b)
            .map(|x| x.as_slice().to_vec())
            .ok_or(Error::NotPositiveDefinite)
    }
}
