//! Dense column-major matrices with the few factorizations the solver needs.

use crate::tensor::TensorError;

/// Dense real matrix, column-major: entry `(i, j)` lives at `data[i + rows * j]`.
///
/// Column-major matches the first-index-fastest layout of [`crate::tensor::DenseTensor`],
/// so unfolding a tensor whose modes are already in storage order is a plain copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                got: data.len(),
                want: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + n * i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + rows * j] = f(i, j);
            }
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Contiguous view of column `j` (storage is column-major).
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + self.rows * j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + self.rows * j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.data[j + self.cols * i] = self.data[i + self.rows * j];
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s * other`; shapes must match.
    pub fn add_scaled(&mut self, s: f64, other: &Matrix) -> Result<(), TensorError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(TensorError::DimensionMismatch(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    /// Adds `s` to each diagonal entry (square not required; stops at the short side).
    pub fn add_diagonal(&mut self, s: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i + self.rows * i] += s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::DimensionMismatch(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            (1, self.rows as isize),
            &other.data,
            (1, other.rows as isize),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix, TensorError> {
        if self.cols != other.cols {
            return Err(TensorError::DimensionMismatch(format!(
                "matmul_nt: {}x{} * ({}x{})^T",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            &self.data,
            (1, self.rows as isize),
            &other.data,
            (other.rows as isize, 1),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix, TensorError> {
        if self.rows != other.rows {
            return Err(TensorError::DimensionMismatch(format!(
                "matmul_tn: ({}x{})^T * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(
            self.cols,
            self.rows,
            other.cols,
            &self.data,
            (self.rows as isize, 1),
            &other.data,
            (1, other.rows as isize),
            &mut out.data,
        );
        Ok(out)
    }
}

/// `c = a * b` for column-major buffers with explicit (row, col) strides.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

/// Solves `lhs * x = rhs` for symmetric positive definite `lhs` via Cholesky.
///
/// Only the lower triangle of `lhs` is referenced. Fails with
/// [`TensorError::NotPositiveDefinite`] when a pivot is not strictly positive.
pub fn spd_solve(lhs: &Matrix, rhs: &Matrix) -> Result<Matrix, TensorError> {
    if lhs.rows != lhs.cols {
        return Err(TensorError::DimensionMismatch(format!(
            "spd_solve: lhs {}x{} is not square",
            lhs.rows, lhs.cols
        )));
    }
    if lhs.rows != rhs.rows {
        return Err(TensorError::DimensionMismatch(format!(
            "spd_solve: lhs {}x{} vs rhs {}x{}",
            lhs.rows, lhs.cols, rhs.rows, rhs.cols
        )));
    }
    let mut chol = lhs.clone();
    cholesky_in_place(&mut chol)?;
    let mut x = rhs.clone();
    cholesky_solve_in_place(&chol, &mut x);
    Ok(x)
}

/// Blocked right-looking Cholesky; lower triangle of `a` receives the factor.
fn cholesky_in_place(a: &mut Matrix) -> Result<(), TensorError> {
    let n = a.rows;
    let lda = n;
    const NB: usize = 64;
    let mut j0 = 0;
    while j0 < n {
        let jb = NB.min(n - j0);
        // Panel factorization: columns j0..j0+jb over rows j0..n.
        for c in j0..j0 + jb {
            for k in j0..c {
                let lck = a.data[c + lda * k];
                let (col_k, col_c) = {
                    let (lo, hi) = a.data.split_at_mut(lda * c);
                    (&lo[lda * k..lda * k + n], &mut hi[..n])
                };
                for i in c..n {
                    col_c[i] -= col_k[i] * lck;
                }
            }
            let d = a.data[c + lda * c];
            if !(d > 0.0) || !d.is_finite() {
                return Err(TensorError::NotPositiveDefinite { col: c, pivot: d });
            }
            let s = d.sqrt();
            a.data[c + lda * c] = s;
            let inv = 1.0 / s;
            for i in c + 1..n {
                a.data[i + lda * c] *= inv;
            }
        }
        let j1 = j0 + jb;
        // Trailing update A22 -= L21 * L21^T through dgemm (full square; upper
        // half is dead weight but the factorization only reads the lower part).
        if j1 < n {
            let t = n - j1;
            unsafe {
                let base = a.data.as_mut_ptr();
                let l21 = base.add(j1 + lda * j0) as *const f64;
                let a22 = base.add(j1 + lda * j1);
                matrixmultiply::dgemm(
                    t,
                    jb,
                    t,
                    -1.0,
                    l21,
                    1,
                    lda as isize,
                    l21,
                    lda as isize,
                    1,
                    1.0,
                    a22,
                    1,
                    lda as isize,
                );
            }
        }
        j0 = j1;
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given the lower factor from `cholesky_in_place`.
fn cholesky_solve_in_place(chol: &Matrix, b: &mut Matrix) {
    let n = chol.rows;
    let lda = n;
    for col in 0..b.cols {
        let x = &mut b.data[col * n..(col + 1) * n];
        // Forward: L y = b, column-oriented.
        for k in 0..n {
            let yk = x[k] / chol.data[k + lda * k];
            x[k] = yk;
            let ck = &chol.data[lda * k..lda * k + n];
            for i in k + 1..n {
                x[i] -= ck[i] * yk;
            }
        }
        // Backward: L^T x = y; column k of L is row k of L^T.
        for k in (0..n).rev() {
            let ck = &chol.data[lda * k..lda * k + n];
            let mut s = x[k];
            for i in k + 1..n {
                s -= ck[i] * x[i];
            }
            x[k] = s / ck[k];
        }
    }
}

/// Thin singular value decomposition `m = u * diag(s) * v^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Matrix,
    /// Singular values, nonincreasing and nonnegative.
    pub s: Vec<f64>,
    /// `cols x k` with orthonormal columns.
    pub v: Matrix,
}

/// One-sided Jacobi SVD. Intended for the small dense slices this crate
/// analyzes (up to a few hundred per side); accuracy is near machine epsilon.
pub fn svd(m: &Matrix) -> Result<Svd, TensorError> {
    if m.rows < m.cols {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let rows = m.rows;
    let cols = m.cols;
    let mut a = m.clone();
    let mut v = Matrix::identity(cols);

    const MAX_SWEEPS: usize = 64;
    const TOL: f64 = 1e-14;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let x = a.data[i + rows * p];
                    let y = a.data[i + rows * q];
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= TOL * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let x = a.data[i + rows * p];
                    let y = a.data[i + rows * q];
                    a.data[i + rows * p] = c * x - s * y;
                    a.data[i + rows * q] = s * x + c * y;
                }
                for i in 0..cols {
                    let x = v.data[i + cols * p];
                    let y = v.data[i + cols * q];
                    v.data[i + cols * p] = c * x - s * y;
                    v.data[i + cols * q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TensorError::SvdNoConvergence(MAX_SWEEPS));
    }

    let mut norms: Vec<f64> = (0..cols)
        .map(|j| {
            a.data[rows * j..rows * (j + 1)]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = Matrix::zeros(rows, cols);
    let mut vs = Matrix::zeros(cols, cols);
    let mut s = vec![0.0; cols];
    let smax = norms[order[0]];
    let cutoff = smax * (rows.max(cols) as f64) * f64::EPSILON;
    let mut null_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        for i in 0..cols {
            vs.data[i + cols * dst] = v.data[i + cols * src];
        }
        if norms[src] > cutoff && norms[src] > 0.0 {
            let inv = 1.0 / norms[src];
            for i in 0..rows {
                u.data[i + rows * dst] = a.data[i + rows * src] * inv;
            }
        } else {
            null_cols.push(dst);
        }
    }
    // Numerically zero columns carry no direction; complete U to an orthonormal
    // set so downstream orthogonality checks still hold.
    if !null_cols.is_empty() {
        complete_orthonormal(&mut u, &null_cols);
    }
    norms.clear();
    Ok(Svd { u, s, v: vs })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut Matrix, empty: &[usize]) {
    let rows = u.rows;
    let cols = u.cols;
    let mut filled: Vec<usize> = (0..cols).filter(|j| !empty.contains(j)).collect();
    let mut basis = 0usize;
    for &j in empty {
        loop {
            assert!(basis < rows, "orthonormal completion exhausted basis vectors");
            let mut w = vec![0.0; rows];
            w[basis] = 1.0;
            basis += 1;
            for &f in &filled {
                let dot: f64 = (0..rows).map(|i| u.data[i + rows * f] * w[i]).sum();
                for i in 0..rows {
                    w[i] -= dot * u.data[i + rows * f];
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for i in 0..rows {
                    u.data[i + rows * j] = w[i] / norm;
                }
                filled.push(j);
                break;
            }
        }
    }
}
