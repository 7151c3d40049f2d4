//! Dense symmetric matrices, the symmetric eigendecomposition and the
//! proximal maps the ADMM blocks need.

use crate::error::SolverError;

/// Largest tolerated `|M_ij - M_ji|`, relative to `max(1, max |M_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Square matrix stored row-major. Used for symmetric operands throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..dim * dim).map(|idx| f(idx / dim, idx % dim)).collect();
        Self { dim, data }
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self, SolverError> {
        if data.len() != dim * dim {
            return Err(SolverError::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    /// `v v^T`
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }

    pub fn check_symmetric(&self) -> Result<(), SolverError> {
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let asym = self.max_asymmetry();
        if asym > SYMMETRY_TOL * scale {
            return Err(SolverError::NotSymmetric(asym));
        }
        Ok(())
    }

    /// Averages with the transpose.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn matmul(&self, other: &SymMatrix) -> SymMatrix {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        matmul_into(&self.data, &other.data, &mut out, n);
        SymMatrix { dim: n, data: out }
    }

    pub fn transpose(&self) -> SymMatrix {
        let n = self.dim;
        SymMatrix::from_fn(n, |i, j| self.data[j * n + i])
    }
}

/// `out = a * b` for row-major `n x n` operands.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in row.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                *o += aik * bkj;
            }
        }
    }
}

/// Eigenvalues in descending order; column `j` of `vectors` pairs with
/// `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: SymMatrix,
}

impl SymEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        let n = self.vectors.dim;
        (0..n).map(|i| self.vectors.data[i * n + j]).collect()
    }

    /// `Q diag(f(lambda)) Q^T`, skipping eigenvalues mapped to zero.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.vectors.dim;
        let q = &self.vectors.data;
        let mut out = SymMatrix::zeros(n);
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let qr = w * q[r * n + j];
                if qr == 0.0 {
                    continue;
                }
                let row = &mut out.data[r * n..(r + 1) * n];
                for (c, o) in row.iter_mut().enumerate() {
                    *o += qr * q[c * n + j];
                }
            }
        }
        out
    }
}

/// Symmetric eigendecomposition, eigenvalues in descending order.
///
/// Rows that are entirely zero are split off as zero eigenpairs and the
/// remaining block goes through Householder tridiagonalization and implicit
/// QR. Cyclic Jacobi takes over if that produces non-finite output.
pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen, SolverError> {
    m.check_symmetric()?;
    let n = m.dim;
    let mut a = m.clone();
    a.symmetrize();
    let active: Vec<usize> = (0..n)
        .filter(|&r| a.data[r * n..(r + 1) * n].iter().any(|&v| v != 0.0))
        .collect();
    let k = active.len();
    let block: Vec<f64> = active
        .iter()
        .flat_map(|&r| active.iter().map(move |&c| (r, c)))
        .map(|(r, c)| a.data[r * n + c])
        .collect();

    let (mut values, mut vt) = qr_eigen(&block, k);
    if values.iter().chain(&vt).any(|v| !v.is_finite()) {
        (values, vt) = jacobi_eigen(&block, k);
    }

    // zero rows contribute unit eigenvectors with eigenvalue 0
    values.resize(n, 0.0);
    let mut vectors = SymMatrix::zeros(n);
    for c in 0..k {
        for (i, &r) in active.iter().enumerate() {
            vectors.data[r * n + c] = vt[c * k + i];
        }
    }
    let mut is_active = vec![false; n];
    for &r in &active {
        is_active[r] = true;
    }
    for (c, r) in (k..n).zip((0..n).filter(|&r| !is_active[r])) {
        vectors.data[r * n + c] = 1.0;
    }
    Ok(sorted(values, vectors))
}

/// Eigenvalues and eigenvectors as rows of a `k x k` row-major buffer.
fn qr_eigen(block: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    if k == 0 {
        return (Vec::new(), Vec::new());
    }
    let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_row_slice(k, k, block));
    let vt = (0..k)
        .flat_map(|c| (0..k).map(move |r| (r, c)))
        .map(|(r, c)| eig.eigenvectors[(r, c)])
        .collect();
    (eig.eigenvalues.as_slice().to_vec(), vt)
}

/// Cyclic Jacobi rotations; same output layout as [`qr_eigen`].
pub(crate) fn jacobi_eigen(block: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = block.to_vec();
    let mut vt = SymMatrix::identity(k).data;
    jacobi_sweeps(&mut a, &mut vt, k);
    ((0..k).map(|i| a[i * k + i]).collect(), vt)
}

/// Cyclic Jacobi on the full symmetric `a`; `vt` accumulates the rotations
/// as rows (it holds the transpose of the eigenvector matrix).
fn jacobi_sweeps(a: &mut [f64], vt: &mut [f64], n: usize) {
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return;
    }
    let target = (1e-15 * total).powi(2);
    for _ in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= target {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(a, n, p, q, c, s);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                rotate_rows(vt, n, p, q, c, s);
            }
        }
    }
}

/// Applies the rotation to rows `p`, `q` and mirrors them into the columns.
/// The 2x2 block is overwritten by the caller.
#[inline]
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    rotate_rows(a, n, p, q, c, s);
    for r in 0..n {
        a[r * n + p] = a[p * n + r];
        a[r * n + q] = a[q * n + r];
    }
}

#[inline]
fn rotate_rows(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = m.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (xp, xq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (vp, vq) = (*xp, *xq);
        *xp = c * vp - s * vq;
        *xq = s * vp + c * vq;
    }
}

fn sorted(values: Vec<f64>, vectors: SymMatrix) -> SymEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let q = SymMatrix::from_fn(n, |r, c| vectors.data[r * n + order[c]]);
    SymEigen {
        values: sorted_values,
        vectors: q,
    }
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn psd_project(m: &SymMatrix) -> Result<SymMatrix, SolverError> {
    Ok(sym_eigen(m)?.reconstruct_with(|l| l.max(0.0)))
}

/// Entrywise `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(m: &SymMatrix, t: f64) -> SymMatrix {
    SymMatrix {
        dim: m.dim,
        data: m.data.iter().map(|&v| soft(v, t)).collect(),
    }
}

#[inline]
pub(crate) fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
