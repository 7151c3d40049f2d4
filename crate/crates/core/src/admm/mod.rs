//! First-order solver for semidefinite programs of the form
//!
//! ```text
//! minimize    <C, X> + l1_weight * sum_ij |X_ij|
//! subject to  <A_r, X> = b_r,   <G_s, X> >= h_s,
//!             lo <= X_ij <= hi,  X_ij = 0 on a fixed mask,  X PSD.
//! ```
//!
//! The solver runs consensus ADMM over three blocks on the extended variable
//! `(X, t)`, where `t >= 0` are slacks turning the inequalities into
//! `<G_s, X> - t_s = h_s`:
//!
//! 1. the affine set of all linear constraints plus the linear objective,
//!    projected with a pseudo-inverse of the constraint Gram matrix that is
//!    factored once per problem;
//! 2. the PSD cone, by eigenvalue clamping;
//! 3. entrywise box clamping, mask zeroing, the L1 proximal step, and `t >= 0`.
//!
//! Indices whose diagonal entry is masked to zero are removed before solving:
//! a PSD matrix with a zero diagonal entry has a zero row and column.

mod linalg;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use linalg::{psd_project, soft_threshold, sym_eigen, SymEigen, SymMatrix};

use crate::error::SolverError;
use linalg::soft;

/// Residual growth factor that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Symmetric matrix given by its upper-triangle entries `(i, j, A_ij)`,
/// `i <= j`; `A_ji` equals `A_ij`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` to both `(i, j)` and `(j, i)` (once when `i == j`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match self.entries.iter_mut().find(|e| e.0 == i && e.1 == j) {
            Some(e) => e.2 += v,
            None => self.entries.push((i, j, v)),
        }
    }

    /// Appends without merging duplicates; for builders that emit each pair once.
    pub fn push_unique(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((i, j, v));
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `<A, X>` for symmetric `X`.
    pub fn dot(&self, x: &SymMatrix) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * x.get(i, i) } else { 2.0 * v * x.get(i, j) })
            .sum()
    }

    pub fn to_dense(&self, dim: usize) -> SymMatrix {
        let mut m = SymMatrix::zeros(dim);
        for &(i, j, v) in &self.entries {
            m.set(i, j, m.get(i, j) + v);
            if i != j {
                m.set(j, i, m.get(j, i) + v);
            }
        }
        m
    }

    fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.1).max()
    }
}

/// `<matrix, X> = rhs` as an equality, `<matrix, X> >= rhs` as an inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub matrix: SparseSym,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: SymMatrix,
    pub l1_weight: f64,
    pub eq_constraints: Vec<LinearConstraint>,
    pub ineq_constraints: Vec<LinearConstraint>,
    /// Entrywise `(lo, hi)`.
    pub bounds: Option<(f64, f64)>,
    /// Row-major `dim * dim`; `true` fixes the entry at zero.
    pub fixed_zero_mask: Option<Vec<bool>>,
}

impl SdpProblem {
    /// Zero objective, no constraints beyond `X` PSD.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: SymMatrix::zeros(dim),
            l1_weight: 0.0,
            eq_constraints: Vec::new(),
            ineq_constraints: Vec::new(),
            bounds: None,
            fixed_zero_mask: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let dim = self.dim;
        if self.objective.dim() != dim {
            return Err(SolverError::DimensionMismatch {
                expected: dim,
                found: self.objective.dim(),
            });
        }
        self.objective.check_symmetric()?;
        if !(self.l1_weight >= 0.0) {
            return Err(SolverError::InvalidProblem("l1 weight must be nonnegative".into()));
        }
        for c in self.eq_constraints.iter().chain(&self.ineq_constraints) {
            if let Some(i) = c.matrix.max_index().filter(|&i| i >= dim) {
                return Err(SolverError::DimensionMismatch { expected: dim, found: i + 1 });
            }
            if !c.rhs.is_finite() {
                return Err(SolverError::InvalidProblem("non-finite right-hand side".into()));
            }
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo <= hi) {
                return Err(SolverError::InvalidProblem(format!("box bounds {lo} > {hi}")));
            }
        }
        if let Some(mask) = &self.fixed_zero_mask {
            if mask.len() != dim * dim {
                return Err(SolverError::DimensionMismatch {
                    expected: dim * dim,
                    found: mask.len(),
                });
            }
        }
        Ok(())
    }

    pub fn is_fixed_zero(&self, i: usize, j: usize) -> bool {
        self.fixed_zero_mask.as_ref().is_some_and(|m| m[i * self.dim + j])
    }

    /// `<C, X> + l1_weight * ||X||_1`.
    pub fn objective_value(&self, x: &SymMatrix) -> f64 {
        let l1: f64 = x.data().iter().map(|v| v.abs()).sum();
        self.objective.dot(x) + self.l1_weight * l1
    }

    /// Largest `|<A_r, X> - b_r|`.
    pub fn eq_violation(&self, x: &SymMatrix) -> f64 {
        self.eq_constraints
            .iter()
            .fold(0.0, |m, c| m.max((c.matrix.dot(x) - c.rhs).abs()))
    }

    /// Largest `max(0, h_s - <G_s, X>)`.
    pub fn ineq_violation(&self, x: &SymMatrix) -> f64 {
        self.ineq_constraints
            .iter()
            .fold(0.0, |m, c| m.max(c.rhs - c.matrix.dot(x)))
    }

    /// Largest violation of the box bounds and the zero mask.
    pub fn entry_violation(&self, x: &SymMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = x.get(i, j);
                if self.is_fixed_zero(i, j) {
                    worst = worst.max(v.abs());
                } else if let Some((lo, hi)) = self.bounds {
                    worst = worst.max(lo - v).max(v - hi);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub eps_primal: f64,
    pub eps_dual: f64,
    /// Seeds the small random starting point.
    pub seed: u64,
    /// Keep one [`TraceRow`] per iteration.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 20_000,
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            seed: 0,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.rho > 0.0 && self.eps_primal > 0.0 && self.eps_dual > 0.0 && self.max_iters > 0) {
            return Err(SolverError::InvalidProblem(
                "rho, tolerances and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Undivided fixed-point residual `sqrt(r_p^2 + (r_d / rho)^2)`.
    pub combined_residual: f64,
    pub objective: f64,
}

/// Writes `iter,primal_residual,dual_residual,objective` rows.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,primal_residual,dual_residual,objective")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.primal_residual, r.dual_residual, r.objective)?;
    }
    Ok(())
}

/// Solver output. Residuals are relative: the primal one is divided by
/// `max(1, ||Z||_F)` and the dual one by `max(1, rho ||U||_F)` where `Z` is
/// the consensus iterate and `U` the stacked scaled duals.
///
/// `matrix` is the affine-block iterate: it satisfies the linear equalities
/// to roundoff and is within the primal residual of the PSD cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub matrix: SymMatrix,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iters: usize,
    pub status: SolveStatus,
    pub trace: Vec<TraceRow>,
}

/// Problem restricted to the indices whose diagonal is not masked, with
/// every constraint flattened to sparse rows over the `d * d` entries.
struct Reduced {
    active: Vec<usize>,
    d: usize,
    objective: Vec<f64>,
    /// `true` where the entry is fixed to zero.
    mask: Vec<bool>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    n_eq: usize,
    gram_pinv: Vec<f64>,
}

impl Reduced {
    fn new(p: &SdpProblem) -> Result<Self, SolverError> {
        let active: Vec<usize> = (0..p.dim).filter(|&i| !p.is_fixed_zero(i, i)).collect();
        let d = active.len();
        let mut position = vec![usize::MAX; p.dim];
        for (new, &old) in active.iter().enumerate() {
            position[old] = new;
        }
        let objective = (0..d * d)
            .map(|idx| p.objective.get(active[idx / d], active[idx % d]))
            .collect();
        let mask = (0..d * d)
            .map(|idx| p.is_fixed_zero(active[idx / d], active[idx % d]))
            .collect();
        let flatten = |c: &LinearConstraint| -> Vec<(usize, f64)> {
            let mut row = Vec::with_capacity(2 * c.matrix.entries().len());
            for &(i, j, v) in c.matrix.entries() {
                let (pi, pj) = (position[i], position[j]);
                if pi == usize::MAX || pj == usize::MAX || v == 0.0 {
                    continue;
                }
                row.push((pi * d + pj, v));
                if pi != pj {
                    row.push((pj * d + pi, v));
                }
            }
            row
        };
        let mut rows: Vec<Vec<(usize, f64)>> = p.eq_constraints.iter().map(flatten).collect();
        rows.extend(p.ineq_constraints.iter().map(flatten));
        let rhs = p
            .eq_constraints
            .iter()
            .chain(&p.ineq_constraints)
            .map(|c| c.rhs)
            .collect();
        let n_eq = p.eq_constraints.len();
        let gram_pinv = gram_pseudo_inverse(&rows, n_eq, d)?;
        Ok(Self {
            active,
            d,
            objective,
            mask,
            rows,
            rhs,
            n_eq,
            gram_pinv,
        })
    }

    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Euclidean projection of `(x, t)` onto `{A x = b, G x - t = h}`.
    fn project_affine(&self, x: &mut [f64], t: &mut [f64], scratch: &mut [f64], y: &mut [f64]) {
        let r_total = self.n_rows();
        for (r, row) in self.rows.iter().enumerate() {
            let mut v: f64 = row.iter().map(|&(idx, c)| c * x[idx]).sum();
            if r >= self.n_eq {
                v -= t[r - self.n_eq];
            }
            scratch[r] = v - self.rhs[r];
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.gram_pinv[r * r_total..(r + 1) * r_total];
            *yr = row.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
        }
        for (r, row) in self.rows.iter().enumerate() {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for &(idx, c) in row {
                x[idx] -= yr * c;
            }
            if r >= self.n_eq {
                t[r - self.n_eq] += yr;
            }
        }
    }

    fn expand(&self, x: &[f64], dim: usize) -> SymMatrix {
        let mut out = SymMatrix::zeros(dim);
        let d = self.d;
        for (a, &i) in self.active.iter().enumerate() {
            for (b, &j) in self.active.iter().enumerate() {
                out.set(i, j, x[a * d + b]);
            }
        }
        out
    }
}

/// Pseudo-inverse of `[[A A^T, A G^T], [G A^T, G G^T + I]]`.
fn gram_pseudo_inverse(rows: &[Vec<(usize, f64)>], n_eq: usize, d: usize) -> Result<Vec<f64>, SolverError> {
    let r_total = rows.len();
    if r_total == 0 {
        return Ok(Vec::new());
    }
    let mut dense = vec![0.0; d * d];
    let mut gram = SymMatrix::zeros(r_total);
    for (r, row) in rows.iter().enumerate() {
        for &(idx, c) in row {
            dense[idx] += c;
        }
        for (s, other) in rows.iter().enumerate().skip(r) {
            let v: f64 = other.iter().map(|&(idx, c)| c * dense[idx]).sum();
            gram.set(r, s, v);
            gram.set(s, r, v);
        }
        for &(idx, _) in row {
            dense[idx] = 0.0;
        }
        if r >= n_eq {
            gram.set(r, r, gram.get(r, r) + 1.0);
        }
    }
    let eig = sym_eigen(&gram)?;
    let cutoff = 1e-10 * eig.values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    Ok(eig
        .reconstruct_with(|l| if l > cutoff { 1.0 / l } else { 0.0 })
        .data()
        .to_vec())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Runs consensus ADMM; see the module documentation for the splitting.
pub fn solve(p: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution, SolverError> {
    p.validate()?;
    cfg.validate()?;
    let red = Reduced::new(p)?;
    let d = red.d;
    let nx = d * d;
    let nt = p.ineq_constraints.len();
    let rho = cfg.rho;
    let (lo, hi) = p.bounds.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let l1_step = p.l1_weight / rho;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut zx = vec![0.0; nx];
    for i in 0..d {
        for j in i..d {
            if !red.mask[i * d + j] {
                let v = 1e-3 * rng.random_range(-1.0..1.0);
                zx[i * d + j] = v;
                zx[j * d + i] = v;
            }
        }
    }
    let mut zt = vec![0.0; nt];
    let mut ux = vec![vec![0.0; nx]; 3];
    let mut ut = vec![vec![0.0; nt]; 3];
    let mut wx = vec![vec![0.0; nx]; 3];
    let mut wt = vec![vec![0.0; nt]; 3];
    let mut scratch = vec![0.0; red.n_rows()];
    let mut y = vec![0.0; red.n_rows()];
    let mut psd_in = SymMatrix::zeros(d);

    let mut trace = Vec::new();
    let mut first_combined: Option<f64> = None;
    let mut status = SolveStatus::MaxIters;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut iters = 0;

    for iter in 1..=cfg.max_iters {
        iters = iter;
        // block 1: linear objective + affine constraints
        for (k, w) in wx[0].iter_mut().enumerate() {
            *w = zx[k] - ux[0][k] - red.objective[k] / rho;
        }
        for (k, w) in wt[0].iter_mut().enumerate() {
            *w = zt[k] - ut[0][k];
        }
        red.project_affine(&mut wx[0], &mut wt[0], &mut scratch, &mut y);

        // block 2: PSD cone
        for (k, v) in psd_in.data_mut().iter_mut().enumerate() {
            *v = zx[k] - ux[1][k];
        }
        psd_in.symmetrize();
        let projected = sym_eigen(&psd_in)?.reconstruct_with(|l| l.max(0.0));
        wx[1].copy_from_slice(projected.data());
        for (k, w) in wt[1].iter_mut().enumerate() {
            *w = zt[k] - ut[1][k];
        }

        // block 3: entrywise
        for (k, w) in wx[2].iter_mut().enumerate() {
            let v = zx[k] - ux[2][k];
            *w = if red.mask[k] { 0.0 } else { soft(v, l1_step).clamp(lo, hi) };
        }
        for (k, w) in wt[2].iter_mut().enumerate() {
            *w = (zt[k] - ut[2][k]).max(0.0);
        }

        // consensus and dual updates
        let mut dz = 0.0;
        for k in 0..nx {
            let z = (wx[0][k] + ux[0][k] + wx[1][k] + ux[1][k] + wx[2][k] + ux[2][k]) / 3.0;
            dz += (z - zx[k]) * (z - zx[k]);
            zx[k] = z;
        }
        for k in 0..nt {
            let z = (wt[0][k] + ut[0][k] + wt[1][k] + ut[1][k] + wt[2][k] + ut[2][k]) / 3.0;
            dz += (z - zt[k]) * (z - zt[k]);
            zt[k] = z;
        }
        let mut r_prim_sq = 0.0;
        let mut u_norm_sq = 0.0;
        for b in 0..3 {
            r_prim_sq += sq_dist(&wx[b], &zx) + sq_dist(&wt[b], &zt);
            for k in 0..nx {
                ux[b][k] += wx[b][k] - zx[k];
            }
            for k in 0..nt {
                ut[b][k] += wt[b][k] - zt[k];
            }
            u_norm_sq += sq_norm(&ux[b]) + sq_norm(&ut[b]);
        }
        let r_prim = r_prim_sq.sqrt();
        let r_dual = rho * (3.0 * dz).sqrt();
        let z_norm = (sq_norm(&zx) + sq_norm(&zt)).sqrt();
        primal = r_prim / z_norm.max(1.0);
        dual = r_dual / (rho * u_norm_sq.sqrt()).max(1.0);
        let combined = (r_prim_sq + 3.0 * dz).sqrt();

        if cfg.record_trace {
            let current = red.expand(&wx[0], p.dim);
            trace.push(TraceRow {
                iter,
                primal_residual: primal,
                dual_residual: dual,
                combined_residual: combined,
                objective: p.objective_value(&current),
            });
        }

        if !combined.is_finite() {
            return Err(SolverError::Diverged { iters: iter });
        }
        match first_combined {
            None => first_combined = Some(combined),
            Some(c0) if c0 > 0.0 && combined > DIVERGENCE_FACTOR * c0 => {
                return Err(SolverError::Diverged { iters: iter });
            }
            _ => {}
        }
        if primal <= cfg.eps_primal && dual <= cfg.eps_dual {
            status = SolveStatus::Converged;
            break;
        }
    }

    let mut matrix = red.expand(&wx[0], p.dim);
    matrix.symmetrize();
    Ok(SdpSolution {
        objective: p.objective_value(&matrix),
        matrix,
        primal_residual: primal,
        dual_residual: dual,
        iters,
        status,
        trace,
    })
}
