//! Minimal dense linear algebra for small regression problems.
//!
//! Design matrices here are tall and narrow (hundreds of rows, a dozen
//! columns at most), so everything is written directly against `Vec`
//! storage. The least-squares path is Householder QR processed left to
//! right: a column whose remaining norm falls below `pivot_tol` times the
//! largest pivot seen so far is recorded as dropped instead of entering
//! the factorization. Processing in input order means that when two
//! columns are collinear the later one is dropped, so callers control
//! survival priority by column order.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Multiply by a vector: `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += self.get(r, c) * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// Largest absolute asymmetry, for sanity checks on covariance output.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in 0..r {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }
}

/// Result of a rank-revealing least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Indices (into the input column list) of columns that survived.
    pub retained: Vec<usize>,
    /// Indices of columns dropped as linearly dependent.
    pub dropped: Vec<usize>,
    /// Coefficients aligned to `retained`.
    pub coefficients: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    /// `(X'X)^-1` over the retained columns.
    pub xtx_inv: Matrix,
}

/// Householder QR least squares over a list of columns.
///
/// Columns are visited in order; column `j` is kept only if the norm of
/// its residual part (after projecting out previously retained columns)
/// exceeds `pivot_tol` times the largest pivot so far. Returns `None`
/// when no column is retained.
pub fn qr_least_squares(columns: &[Vec<f64>], y: &[f64], pivot_tol: f64) -> Option<LeastSquares> {
    let n = y.len();
    let m = columns.len();
    let mut work: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();

    let mut retained: Vec<usize> = Vec::with_capacity(m);
    let mut dropped: Vec<usize> = Vec::new();
    let mut max_pivot = 0.0f64;

    for j in 0..m {
        debug_assert_eq!(work[j].len(), n);
        let step = retained.len();
        let pivot = norm(&work[j][step..]);
        let keep = if step >= n {
            false
        } else if max_pivot == 0.0 {
            pivot > 0.0
        } else {
            pivot > pivot_tol * max_pivot
        };
        if !keep {
            dropped.push(j);
            continue;
        }

        // Form the Householder reflector for the residual part of column j
        // and apply it to every later column and to the response.
        let mut v: Vec<f64> = work[j][step..].to_vec();
        let alpha = if v[0] >= 0.0 { -pivot } else { pivot };
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            let beta = 2.0 / vtv;
            for col in work.iter_mut().skip(j + 1) {
                reflect(&mut col[step..], &v, beta);
            }
            reflect(&mut qty[step..], &v, beta);
        }
        // Column j itself becomes (alpha, 0, ..., 0) below `step`.
        work[j][step] = alpha;
        for x in work[j][step + 1..].iter_mut() {
            *x = 0.0;
        }

        retained.push(j);
        max_pivot = max_pivot.max(pivot);
    }

    let k = retained.len();
    if k == 0 {
        return None;
    }

    // R is upper triangular over the retained columns.
    let mut r = Matrix::zeros(k, k);
    for (c, &j) in retained.iter().enumerate() {
        for i in 0..=c {
            r.set(i, c, work[j][i]);
        }
    }

    let coefficients = back_substitute(&r, &qty[..k]);
    let rss: f64 = qty[k..].iter().map(|x| x * x).sum();

    // (X'X)^-1 = R^-1 R^-T, built from the columns of R^-1.
    let mut r_inv = Matrix::zeros(k, k);
    for c in 0..k {
        let mut e = vec![0.0; k];
        e[c] = 1.0;
        let col = back_substitute(&r, &e);
        for i in 0..k {
            r_inv.set(i, c, col[i]);
        }
    }
    let mut xtx_inv = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let mut acc = 0.0;
            for c in 0..k {
                acc += r_inv.get(i, c) * r_inv.get(j, c);
            }
            xtx_inv.set(i, j, acc);
            xtx_inv.set(j, i, acc);
        }
    }

    Some(LeastSquares {
        retained,
        dropped,
        coefficients,
        rss,
        xtx_inv,
    })
}

/// Solve `R x = b` for upper-triangular `R`.
fn back_substitute(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = b[i];
        for j in i + 1..k {
            acc -= r.get(i, j) * x[j];
        }
        x[i] = acc / r.get(i, i);
    }
    x
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn reflect(target: &mut [f64], v: &[f64], beta: f64) {
    let mut w = 0.0;
    for (t, vi) in target.iter().zip(v.iter()) {
        w += t * vi;
    }
    let w = beta * w;
    for (t, vi) in target.iter_mut().zip(v.iter()) {
        *t -= w * vi;
    }
}

/// Cholesky factor `L` (lower) of a positive semi-definite matrix.
///
/// Semi-definite directions produce zero columns in `L` instead of a
/// failure, which covers degenerate covariances (a zero matrix yields a
/// zero factor).
pub fn cholesky_psd(a: &Matrix) -> Matrix {
    assert_eq!(a.rows, a.cols);
    let k = a.rows;
    let mut l = Matrix::zeros(k, k);
    let scale = (0..k).map(|i| a.get(i, i).abs()).fold(0.0f64, f64::max);
    let eps = 1e-12 * scale.max(1e-300);
    for j in 0..k {
        let mut d = a.get(j, j);
        for c in 0..j {
            d -= l.get(j, c) * l.get(j, c);
        }
        if d <= eps {
            continue; // semi-definite direction: leave column j zero
        }
        let root = d.sqrt();
        l.set(j, j, root);
        for i in j + 1..k {
            let mut acc = a.get(i, j);
            for c in 0..j {
                acc -= l.get(i, c) * l.get(j, c);
            }
            l.set(i, j, acc / root);
        }
    }
    l
}
