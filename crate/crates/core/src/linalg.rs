//! Dense linear algebra for the corrector solve and the finite-difference
//! reference.
//!
//! Least squares goes through a column-pivoted Householder QR of `A`; a ridge
//! term is folded in afterwards by re-triangularizing `[R; sqrt(ridge) I]`,
//! which is the same as factoring the stacked matrix `[A; sqrt(ridge) I]`
//! but lets several ridge values share one factorization of `A`.

use std::f64::consts::PI;

use thiserror::Error;

/// Relative threshold on |R_kk| below which a column counts as dependent.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("non-finite entry in {what}")]
    NonFiniteInput { what: &'static str },
    #[error("rank-deficient system: numerical rank {rank} of {cols} columns")]
    SingularSystem { rank: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("direct solve residual {residual:e} above tolerance {tolerance:e}")]
    ConvergenceFailure { residual: f64, tolerance: f64 },
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Aᵀ y`
    pub fn tr_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    /// Dense product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Euclidean norm of column `j`.
    pub fn column_norm(&self, j: usize) -> f64 {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j].powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Builds a Householder reflector for `x` in place. On return `x[0]` holds
/// the new diagonal value, `x[1..]` the reflector tail (with implicit leading
/// 1), and the returned value is `tau` such that `H = I - tau v vᵀ`.
fn householder(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let tail_sq: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail_sq == 0.0 {
        return 0.0;
    }
    let norm = (alpha * alpha + tail_sq).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta - alpha) / beta
}

/// Applies `H = I - tau v vᵀ` (v[0] = 1 implicit) to `y`.
fn apply_reflector(v_tail: &[f64], tau: f64, y: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let mut dot = y[0];
    for (a, b) in v_tail.iter().zip(&y[1..]) {
        dot += a * b;
    }
    let s = tau * dot;
    y[0] -= s;
    for (a, b) in v_tail.iter().zip(y[1..].iter_mut()) {
        *b -= s * a;
    }
}

/// Column-pivoted Householder QR of a least-squares problem, reusable for
/// several ridge values.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    cols: usize,
    /// Upper-triangular factor, column-major `cols x cols`, in pivoted order.
    r: Vec<f64>,
    /// `Qᵀ b` restricted to the first `cols` entries.
    qtb: Vec<f64>,
    /// Squared norm of the part of `b` orthogonal to range(A).
    residual_sq: f64,
    perm: Vec<usize>,
    rank: usize,
}

impl RidgeSolver {
    pub fn new(a: &DenseMatrix, b: &[f64]) -> Result<Self, LinalgError> {
        let (m, n) = (a.rows(), a.cols());
        if b.len() != m {
            return Err(LinalgError::DimensionMismatch(format!(
                "A has {m} rows but b has {} entries",
                b.len()
            )));
        }
        if n == 0 {
            return Err(LinalgError::SingularSystem { rank: 0, cols: 0 });
        }
        if !a.is_finite() {
            return Err(LinalgError::NonFiniteInput { what: "matrix" });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFiniteInput { what: "right-hand side" });
        }

        // Column-major working copy, one contiguous slice per column.
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..m).map(|i| a[(i, j)]).collect())
            .collect();
        let mut rhs = b.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut taus = vec![0.0; steps];

        for k in 0..steps {
            // Pivot on the largest remaining column norm, recomputed exactly.
            let mut best = k;
            let mut best_norm = -1.0;
            for (j, col) in cols.iter().enumerate().skip(k) {
                let nrm: f64 = col[k..].iter().map(|v| v * v).sum();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            cols.swap(k, best);
            perm.swap(k, best);

            let (left, right) = cols.split_at_mut(k + 1);
            let pivot = &mut left[k];
            let tau = householder(&mut pivot[k..]);
            taus[k] = tau;
            let v_tail = &pivot[k + 1..];
            for col in right.iter_mut() {
                apply_reflector(v_tail, tau, &mut col[k..]);
            }
            apply_reflector(v_tail, tau, &mut rhs[k..]);
        }

        let mut r = vec![0.0; n * n];
        for (j, col) in cols.iter().enumerate() {
            let top = (j + 1).min(steps);
            r[j * n..j * n + top].copy_from_slice(&col[..top]);
        }
        let mut qtb = vec![0.0; n];
        qtb[..steps].copy_from_slice(&rhs[..steps]);
        let residual_sq = rhs[steps..].iter().map(|v| v * v).sum();

        let r00 = if steps > 0 { r[0].abs() } else { 0.0 };
        let rank = (0..steps)
            .take_while(|&k| r[k * n + k].abs() > RANK_TOL * r00)
            .count();

        Ok(Self {
            cols: n,
            r,
            qtb,
            residual_sq,
            perm,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Minimizer of `‖Ac − b‖² + ridge‖c‖²`.
    pub fn solve(&self, ridge: f64) -> Result<Vec<f64>, LinalgError> {
        let n = self.cols;
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(LinalgError::NonFiniteInput { what: "ridge" });
        }
        let z = if ridge == 0.0 {
            if self.rank < n {
                return Err(LinalgError::SingularSystem {
                    rank: self.rank,
                    cols: n,
                });
            }
            back_substitute(&self.r, n, &self.qtb)
        } else {
            // Re-triangularize [R; sqrt(ridge) I] with Givens rotations; row
            // i of the identity block only touches columns >= i.
            let mut r = self.r.clone();
            let mut rhs = self.qtb.clone();
            let sq = ridge.sqrt();
            let mut extra = vec![0.0; n];
            for i in 0..n {
                extra.iter_mut().for_each(|v| *v = 0.0);
                extra[i] = sq;
                let mut extra_rhs = 0.0;
                for k in i..n {
                    let a = r[k * n + k];
                    let bv = extra[k];
                    if bv == 0.0 {
                        continue;
                    }
                    let h = a.hypot(bv);
                    let (c, s) = (a / h, bv / h);
                    for j in k..n {
                        let rk = r[j * n + k];
                        let ek = extra[j];
                        r[j * n + k] = c * rk + s * ek;
                        extra[j] = -s * rk + c * ek;
                    }
                    let t = rhs[k];
                    rhs[k] = c * t + s * extra_rhs;
                    extra_rhs = -s * t + c * extra_rhs;
                }
            }
            back_substitute(&r, n, &rhs)
        };
        let mut c = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            c[p] = z[k];
        }
        Ok(c)
    }

    /// Squared residual of the unregularized problem that lies outside the
    /// column space of `A`.
    pub fn orthogonal_residual_sq(&self) -> f64 {
        self.residual_sq
    }
}

fn back_substitute(r: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut z = rhs.to_vec();
    for i in (0..n).rev() {
        let mut s = z[i];
        for j in i + 1..n {
            s -= r[j * n + i] * z[j];
        }
        z[i] = s / r[i * n + i];
    }
    z
}

/// Ridge-regularized least squares: `argmin ‖Ac − b‖² + ridge‖c‖²`.
///
/// With `ridge = 0` the system must have full column rank (numerically,
/// relative to [`RANK_TOL`]); the unique least-squares solution is returned.
pub fn ridge_lstsq(a: &DenseMatrix, b: &[f64], ridge: f64) -> Result<Vec<f64>, LinalgError> {
    RidgeSolver::new(a, b)?.solve(ridge)
}

/// Five-point Dirichlet Laplacian on an `n x n` interior grid with spacing
/// `h`: `(4u_ij − u_{i±1,j} − u_{i,j±1}) / h² = rhs_ij`, zero boundary values.
///
/// `rhs` is row-major with index `i * n + j`, `i` along y and `j` along x.
#[derive(Debug, Clone)]
pub struct FivePointSystem {
    pub n: usize,
    pub h: f64,
    pub rhs: Vec<f64>,
}

impl FivePointSystem {
    /// Applies the stencil operator to `u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let inv_h2 = 1.0 / (self.h * self.h);
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                0.0
            } else {
                u[i as usize * n + j as usize]
            }
        };
        let mut out = vec![0.0; n * n];
        for i in 0..n as isize {
            for j in 0..n as isize {
                let c = at(i, j);
                out[i as usize * n + j as usize] = (4.0 * c
                    - at(i - 1, j)
                    - at(i + 1, j)
                    - at(i, j - 1)
                    - at(i, j + 1))
                    * inv_h2;
            }
        }
        out
    }
}

/// Direct solve of the five-point system by diagonalizing with the discrete
/// sine transform, followed by a residual check at `1e-10 · ‖rhs‖∞`.
pub fn solve_five_point(system: &FivePointSystem) -> Result<Vec<f64>, LinalgError> {
    let n = system.n;
    if system.rhs.len() != n * n {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs has {} entries for a {n}x{n} grid",
            system.rhs.len()
        )));
    }
    if system.rhs.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFiniteInput { what: "right-hand side" });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let np1 = (n + 1) as f64;
    let mut sine = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            sine[(i, k)] = (PI * ((i + 1) * (k + 1)) as f64 / np1).sin();
        }
    }
    let f = DenseMatrix::from_row_major(n, n, system.rhs.clone())?;
    // S is symmetric and S·S = (n+1)/2 · I.
    let mut spectral = sine.matmul(&f).matmul(&sine);
    let inv_h2 = 1.0 / (system.h * system.h);
    let eig: Vec<f64> = (0..n)
        .map(|k| (2.0 - 2.0 * (PI * (k + 1) as f64 / np1).cos()) * inv_h2)
        .collect();
    let norm = (2.0 / np1).powi(2);
    for i in 0..n {
        for j in 0..n {
            spectral[(i, j)] *= norm / (eig[i] + eig[j]);
        }
    }
    let u = sine.matmul(&spectral).matmul(&sine).data;

    let residual: Vec<f64> = system
        .apply(&u)
        .iter()
        .zip(&system.rhs)
        .map(|(a, b)| a - b)
        .collect();
    let res = norm_inf(&residual);
    let tolerance = 1e-10 * norm_inf(&system.rhs);
    if res > tolerance && res > f64::MIN_POSITIVE {
        return Err(LinalgError::ConvergenceFailure {
            residual: res,
            tolerance,
        });
    }
    Ok(u)
}
