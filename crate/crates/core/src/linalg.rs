//! Dense square matrices, cyclic Jacobi eigendecomposition and PSD projection.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("matrix rows must form a square".into()));
        }
        Ok(Matrix {
            n,
            data: rows.concat(),
        })
    }

    /// `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let n = v.len();
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `Tr(A^T B)`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut s = self.clone();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Square matrix stored as `(row, col, value)` triplets, duplicates summed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    /// Sorted by flat index `row * n + col`, no duplicates, no zeros.
    entries: Vec<(usize, f64)>,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut flat = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            flat.push((i * n + j, v));
        }
        flat.sort_by_key(|e| e.0);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(flat.len());
        for (k, v) in flat {
            match entries.last_mut() {
                Some(last) if last.0 == k => last.1 += v,
                _ => entries.push((k, v)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        Ok(SparseMatrix { n, entries })
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let entries = m
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k, *v))
            .collect();
        SparseMatrix {
            n: m.dim(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(flat index, value)` pairs in ascending index order.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n);
        for &(k, v) in &self.entries {
            m.data[k] = v;
        }
        m
    }

    /// Frobenius inner product with a dense matrix.
    pub fn dot(&self, x: &Matrix) -> f64 {
        let xs = x.as_slice();
        self.entries.iter().map(|&(k, v)| v * xs[k]).sum()
    }

    /// Frobenius inner product of two sparse matrices.
    pub fn dot_sparse(&self, other: &SparseMatrix) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for &(k, v) in &self.entries {
            let t = (k % n) * n + k / n;
            let w = self
                .entries
                .binary_search_by_key(&t, |e| e.0)
                .map_or(0.0, |p| self.entries[p].1);
            worst = worst.max((v - w).abs());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, e| m.max(e.1.abs()))
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn reconstruct(&self) -> Matrix {
        recompose(&self.values, &self.vectors.transpose(), |l| l)
    }
}

const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

fn check_symmetric(a: &Matrix) -> Result<()> {
    let asym = a.max_asymmetry();
    if asym > 1e-9 * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Cyclic Jacobi rotations until the off-diagonal norm drops below
/// `1e-12 * ||A||_F`.
pub fn symmetric_eig(a: &Matrix) -> Result<SymEigen> {
    check_symmetric(a)?;
    let mut work = a.symmetrized();
    let mut vt = Matrix::identity(a.dim());
    jacobi_sweeps(&mut work, &mut vt, a.frobenius_norm());
    Ok(sorted_eigen(&work, &vt))
}

fn sorted_eigen(work: &Matrix, vt: &Matrix) -> SymEigen {
    let n = work.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| work[(i, i)].total_cmp(&work[(j, j)]));
    let values = order.iter().map(|&i| work[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = vt[(i, r)];
        }
    }
    SymEigen { values, vectors }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    (2.0 * s).sqrt()
}

/// Runs cyclic Jacobi on `a` in place; rotations are applied to the rows of `vt`.
fn jacobi_sweeps(a: &mut Matrix, vt: &mut Matrix, norm: f64) {
    let n = a.dim();
    let target = JACOBI_TOL * norm;
    let mut new_p = vec![0.0; n];
    let mut new_q = vec![0.0; n];
    for sweep in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(a);
        if off <= target || off == 0.0 {
            return;
        }
        // early sweeps skip small entries (threshold Jacobi)
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= threshold {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                {
                    let rp = &a.data[p * n..(p + 1) * n];
                    let rq = &a.data[q * n..(q + 1) * n];
                    for k in 0..n {
                        new_p[k] = c * rp[k] - s * rq[k];
                        new_q[k] = s * rp[k] + c * rq[k];
                    }
                }
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    a.data[p * n + k] = new_p[k];
                    a.data[k * n + p] = new_p[k];
                    a.data[q * n + k] = new_q[k];
                    a.data[k * n + q] = new_q[k];
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                let (head, tail) = vt.data.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
    }
    log::debug!("jacobi hit the sweep cap at n = {n}");
}

/// `sum_i f(l_i) v_i v_i^T` over eigenvalues with `f(l_i) != 0`; `vt` holds eigenvectors as rows.
fn recompose(values: &[f64], vt: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let n = vt.dim();
    let mut out = Matrix::zeros(n);
    for (i, &l) in values.iter().enumerate() {
        let w = f(l);
        if w == 0.0 {
            continue;
        }
        let v = vt.row(i);
        for r in 0..n {
            let wr = w * v[r];
            if wr == 0.0 {
                continue;
            }
            let row = &mut out.data[r * n..(r + 1) * n];
            for (o, &vc) in row.iter_mut().zip(v) {
                *o += wr * vc;
            }
        }
    }
    out
}

/// Nearest positive semidefinite matrix in Frobenius norm: negative
/// eigenvalues clamped to zero. Uses a tridiagonal QR eigensolver, which is
/// several times faster than Jacobi at the sizes the SDP solver sees.
pub fn project_psd(a: &Matrix) -> Result<Matrix> {
    check_symmetric(a)?;
    let n = a.dim();
    let sym = a.symmetrized();
    let eig = nalgebra::DMatrix::from_row_slice(n, n, sym.as_slice()).symmetric_eigen();
    let mut vt = Matrix::zeros(n);
    for i in 0..n {
        for r in 0..n {
            vt[(i, r)] = eig.eigenvectors[(r, i)];
        }
    }
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    Ok(recompose(&values, &vt, |l| l.max(0.0)))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.dim();
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 1e-14 * a[(j, j)].abs().max(1e-300)) {
                return Err(Error::NotPositiveDefinite);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[(i, k)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[(k, i)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }
}
