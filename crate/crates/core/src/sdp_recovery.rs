//! Two-stage convex recovery: a semidefinite program for the support
//! indicator `u` (lifted to `S = u u^T`), then an L1-minimizing program for
//! the lifted signal `X = x x^T` restricted to that support.
//!
//! Both programs live on the `m = 2n` grid of the zero-padded signal and use
//! cyclic index arithmetic modulo `m`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admm::{self, sym_eigen, LinearConstraint, SdpProblem, SolverConfig, SparseSym, SymMatrix};
use crate::combinatorial::{verify, LagSet};
use crate::error::RecoveryError;
use crate::signal::{Autocorrelation, Signal, SupportSet};

/// Lower bound on the cyclic lag sums at nonzero lags. The rank-one witness
/// reaches at least 1 on every such lag.
pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_RANK_TOL: f64 = 1e-4;
pub const DEFAULT_BIAS_REDRAWS: usize = 1;

/// Data of the support program.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSdpSpec {
    pub m: usize,
    pub k: usize,
    /// Cyclic lags in `1..=n` with no support pair. Lag `m - l` mirrors `l`.
    pub zero_lags: Vec<usize>,
    /// Lags in `0..n` with a nonzero autocorrelation value.
    pub nonzero_lags: Vec<usize>,
    pub bias: SymMatrix,
    pub epsilon: f64,
}

impl SupportSdpSpec {
    pub fn new(a: &Autocorrelation, k: usize, bias_seed: u64, epsilon: f64, tol: f64) -> Result<Self, RecoveryError> {
        let n = a.n();
        let m = 2 * n;
        if k == 0 {
            return Err(RecoveryError::InfeasibleSpec("k must be positive".into()));
        }
        if !(epsilon > 0.0) {
            return Err(RecoveryError::InfeasibleSpec("epsilon must be positive".into()));
        }
        let lags = crate::combinatorial::lag_set(a, tol);
        if lags.is_empty() {
            return Err(RecoveryError::InfeasibleSpec("autocorrelation is zero".into()));
        }
        let n_pos = lags.positive().len();
        if k > n_pos + 1 {
            return Err(RecoveryError::InfeasibleSpec(format!(
                "k = {k} exceeds {} nonzero lags + 1",
                n_pos
            )));
        }
        let zero_lags = (1..=n).filter(|&l| !lags.contains(l)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(bias_seed);
        let raw: Vec<f64> = (0..m * m).map(|_| rng.random::<f64>()).collect();
        let bias = SymMatrix::from_fn(m, |i, j| 0.5 * (raw[i * m + j] + raw[j * m + i]));
        Ok(Self {
            m,
            k,
            zero_lags,
            nonzero_lags: lags.lags().to_vec(),
            bias,
            epsilon,
        })
    }

    pub fn to_problem(&self) -> SdpProblem {
        let m = self.m;
        let k = self.k as f64;
        let mut p = SdpProblem::new(m);
        p.objective = self.bias.clone();

        let mut trace = SparseSym::new();
        for i in 0..m {
            trace.push_unique(i, i, 1.0);
        }
        p.eq_constraints.push(LinearConstraint { matrix: trace, rhs: k });
        // sum_i S_ij - k S_jj = 0; the column sums coincide for symmetric S
        for j in 0..m {
            let mut row = SparseSym::new();
            for i in 0..m {
                if i == j {
                    row.push_unique(j, j, 1.0 - k);
                } else {
                    row.push_unique(i, j, 0.5);
                }
            }
            p.eq_constraints.push(LinearConstraint { matrix: row, rhs: 0.0 });
        }

        let mut mask = vec![false; m * m];
        for &l in &self.zero_lags {
            for i in 0..m {
                let j = (i + l) % m;
                mask[i * m + j] = true;
                mask[j * m + i] = true;
            }
        }
        p.fixed_zero_mask = Some(mask);

        for &l in self.nonzero_lags.iter().filter(|&&l| l > 0) {
            let mut g = SparseSym::new();
            for i in 0..m {
                g.push_unique(i, (i + l) % m, 0.5);
            }
            p.ineq_constraints.push(LinearConstraint {
                matrix: g,
                rhs: self.epsilon,
            });
        }
        p.bounds = Some((0.0, 1.0));
        p
    }
}

/// Support program for `a` with sparsity `k`; zero lags are those with
/// `|a_l| <= a.default_tol()`.
pub fn build_support_sdp(a: &Autocorrelation, k: usize, bias_seed: u64, epsilon: f64) -> Result<SdpProblem, RecoveryError> {
    Ok(SupportSdpSpec::new(a, k, bias_seed, epsilon, a.default_tol())?.to_problem())
}

/// Indices of the `k` largest diagonal entries of `s`.
///
/// Each must exceed `threshold` and beat the `(k+1)`-th by more than
/// `threshold`. The indices are read on the cycle of length `m = dim`: the
/// result starts after the widest cyclic gap, is anchored at 0 and must fit
/// in `n = m / 2`. With `lags` given, every pairwise distance of the result
/// must be a nonzero lag.
pub fn extract_support(
    s: &SymMatrix,
    k: usize,
    threshold: f64,
    lags: Option<&LagSet>,
) -> Result<SupportSet, RecoveryError> {
    let m = s.dim();
    let n = m / 2;
    if k == 0 || k > m {
        return Err(RecoveryError::InfeasibleSpec(format!("k = {k} for dimension {m}")));
    }
    let diag = s.diag();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let kth = diag[order[k - 1]];
    let next = order.get(k).map_or(0.0, |&i| diag[i]);
    if kth <= threshold || kth - next <= threshold {
        return Err(RecoveryError::AmbiguousSupport);
    }
    let mut chosen: Vec<usize> = order[..k].to_vec();
    chosen.sort_unstable();

    // start after the widest gap on the cycle
    let widest = (0..k)
        .max_by_key(|&t| {
            let gap = (chosen[(t + 1) % k] + m - chosen[t]) % m;
            if gap == 0 {
                m
            } else {
                gap
            }
        })
        .expect("k >= 1");
    let start = chosen[(widest + 1) % k];
    let mut indices: Vec<usize> = chosen.iter().map(|&i| (i + m - start) % m).collect();
    indices.sort_unstable();
    if indices.last().copied().unwrap_or(0) >= n.max(1) {
        return Err(RecoveryError::SupportInconsistent);
    }
    let support = SupportSet::new(n.max(1), indices);
    if let Some(lags) = lags {
        let realized = LagSet::of_support(&support);
        if realized.lags().iter().any(|&l| !lags.contains(l)) {
            return Err(RecoveryError::SupportInconsistent);
        }
    }
    Ok(support)
}

/// Data of the lifted signal program.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSdpSpec {
    pub m: usize,
    pub y: Vec<f64>,
    /// Row-major `m * m`; `true` where `X_ij` may be nonzero.
    pub support_mask: Vec<bool>,
}

impl SignalSdpSpec {
    pub fn to_problem(&self) -> SdpProblem {
        let m = self.m;
        let mut p = SdpProblem::new(m);
        p.l1_weight = 1.0;
        let allowed: Vec<usize> = (0..m).filter(|&i| self.support_mask[i * m + i]).collect();
        for (freq, &yk) in self.y.iter().enumerate() {
            let mut row = SparseSym::new();
            for (t, &i) in allowed.iter().enumerate() {
                row.push_unique(i, i, 1.0);
                for &j in &allowed[t + 1..] {
                    if self.support_mask[i * m + j] {
                        let phase = 2.0 * PI * ((freq * (j - i)) % m) as f64 / m as f64;
                        row.push_unique(i, j, phase.cos());
                    }
                }
            }
            p.eq_constraints.push(LinearConstraint { matrix: row, rhs: yk });
        }
        p.fixed_zero_mask = Some(self.support_mask.iter().map(|&ok| !ok).collect());
        p
    }
}

/// `trace(M_k X) = Y_k` for all `k`, `X_ij = 0` where `mask` is false,
/// minimizing `||X||_1`. `(M_k)_pq = cos(2 pi k (p - q) / m)`.
pub fn build_signal_sdp(y: &[f64], mask: &[bool]) -> SdpProblem {
    SignalSdpSpec {
        m: y.len(),
        y: y.to_vec(),
        support_mask: mask.to_vec(),
    }
    .to_problem()
}

/// `D x D` allowed-entry mask on the `m`-grid.
pub fn support_mask(d: &SupportSet, m: usize) -> Vec<bool> {
    let mut mask = vec![false; m * m];
    for &i in d.indices() {
        for &j in d.indices() {
            mask[i * m + j] = true;
        }
    }
    mask
}

/// `sqrt(lambda_1) v_1` with the first nonzero entry positive. Fails when
/// `lambda_2 / lambda_1 > rank_tol`.
pub fn extract_signal(x: &SymMatrix, rank_tol: f64) -> Result<Signal, RecoveryError> {
    let eig = sym_eigen(x)?;
    let dim = x.dim();
    let l1 = eig.values.first().copied().unwrap_or(0.0);
    if l1 <= 0.0 {
        return Ok(Signal::zeros(dim));
    }
    let l2 = eig.values.get(1).copied().unwrap_or(0.0).max(0.0);
    if l2 / l1 > rank_tol {
        return Err(RecoveryError::NotRankOne(l2 / l1));
    }
    Ok(leading_signal(&eig.vector(0), l1))
}

fn leading_signal(v: &[f64], lambda: f64) -> Signal {
    let scale = lambda.max(0.0).sqrt();
    let peak = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let sign = v
        .iter()
        .find(|x| x.abs() > 1e-8 * peak)
        .map_or(1.0, |x| x.signum());
    Signal::new(v.iter().map(|x| sign * scale * x).collect()).expect("finite eigenvector")
}

/// How a lifted solution that is not rank one is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// Report [`RecoveryError::NotRankOne`].
    Strict,
    /// Start local refinement from the leading eigenpair anyway.
    LeadingEigenvector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm2Config {
    pub bias_seed: u64,
    pub epsilon: f64,
    pub support_threshold: f64,
    pub rank_tol: f64,
    pub rounding: Rounding,
    /// Fresh bias matrices tried after a failed attempt.
    pub bias_redraws: usize,
    /// Autocorrelation values at or below this count as zero; also the
    /// verification bound. `None` uses `a.default_tol()`.
    pub tol: Option<f64>,
    pub support_solver: SolverConfig,
    pub signal_solver: SolverConfig,
}

impl Default for Algorithm2Config {
    fn default() -> Self {
        Self {
            bias_seed: 0,
            epsilon: DEFAULT_EPSILON,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            rank_tol: DEFAULT_RANK_TOL,
            rounding: Rounding::LeadingEigenvector,
            bias_redraws: DEFAULT_BIAS_REDRAWS,
            tol: None,
            support_solver: SolverConfig::default(),
            signal_solver: SolverConfig::default(),
        }
    }
}

/// Solves the support program and reads off the support.
pub fn solve_support(a: &Autocorrelation, k: usize, cfg: &Algorithm2Config) -> Result<SupportSet, RecoveryError> {
    let tol = cfg.tol.unwrap_or_else(|| a.default_tol());
    let spec = SupportSdpSpec::new(a, k, cfg.bias_seed, cfg.epsilon, tol)?;
    let sol = admm::solve(&spec.to_problem(), &cfg.support_solver)?;
    let lags = crate::combinatorial::lag_set(a, tol);
    extract_support(&sol.matrix, k, cfg.support_threshold, Some(&lags))
}

/// Support program, then the signal program on the recovered support, then
/// local refinement and verification against `a`.
///
/// A failed support readout, rank-one readout or verification is retried
/// with a freshly drawn bias matrix, up to `cfg.bias_redraws` times.
pub fn algorithm2(a: &Autocorrelation, k: usize, cfg: &Algorithm2Config) -> Result<Signal, RecoveryError> {
    if a.is_zero() {
        return if k == 0 {
            Ok(Signal::zeros(a.n()))
        } else {
            Err(RecoveryError::InfeasibleSpec("autocorrelation is zero".into()))
        };
    }
    let mut attempt = 0;
    loop {
        let bias_seed = cfg.bias_seed.wrapping_add((attempt as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        match recover_with_bias(a, k, cfg, bias_seed) {
            Err(
                RecoveryError::AmbiguousSupport
                | RecoveryError::SupportInconsistent
                | RecoveryError::NotRankOne(_)
                | RecoveryError::VerificationFailed(_),
            ) if attempt < cfg.bias_redraws => attempt += 1,
            result => return result,
        }
    }
}

fn recover_with_bias(a: &Autocorrelation, k: usize, cfg: &Algorithm2Config, bias_seed: u64) -> Result<Signal, RecoveryError> {
    let n = a.n();
    let tol = cfg.tol.unwrap_or_else(|| a.default_tol());
    let support = solve_support(a, k, &Algorithm2Config { bias_seed, ..cfg.clone() })?;
    let m = 2 * n;
    let problem = build_signal_sdp(&a.power_spectrum(), &support_mask(&support, m));
    let sol = admm::solve(&problem, &cfg.signal_solver)?;
    let lifted = match extract_signal(&sol.matrix, cfg.rank_tol) {
        Ok(x) => x,
        Err(RecoveryError::NotRankOne(ratio)) => match cfg.rounding {
            Rounding::Strict => return Err(RecoveryError::NotRankOne(ratio)),
            Rounding::LeadingEigenvector => {
                let eig = sym_eigen(&sol.matrix)?;
                leading_signal(&eig.vector(0), eig.values[0])
            }
        },
        Err(e) => return Err(e),
    };
    let start: Vec<f64> = support.indices().iter().map(|&i| lifted.values()[i]).collect();
    let values = refine_on_support(a, &support, &start);
    let entries: Vec<(usize, f64)> = support.indices().iter().copied().zip(values).collect();
    let x = Signal::from_entries(n, &entries)
        .map_err(|_| RecoveryError::VerificationFailed(f64::INFINITY))?
        .canonical();
    verify(&x, a, tol)?;
    Ok(x)
}

/// Levenberg-Marquardt on `sum_p x_p x_{p+l} = a_l` for the lags realized by
/// `support`, starting from `start`.
pub fn refine_on_support(a: &Autocorrelation, support: &SupportSet, start: &[f64]) -> Vec<f64> {
    let d = support.indices();
    let k = d.len();
    let scale = a.energy().max(f64::MIN_POSITIVE);
    let lags: Vec<usize> = LagSet::of_support(support).lags().to_vec();
    // pairs (p, q) with d_q - d_p = lag, as positions into d
    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lags.len()];
    for p in 0..k {
        for q in p..k {
            let lag = d[q] - d[p];
            let row = lags.binary_search(&lag).expect("realized lag");
            pairs[row].push((p, q));
        }
    }
    let residuals = |x: &[f64]| -> Vec<f64> {
        lags.iter()
            .zip(&pairs)
            .map(|(&l, ps)| {
                let v: f64 = ps.iter().map(|&(p, q)| x[p] * x[q]).sum();
                (v - a.lags()[l]) / scale
            })
            .collect()
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut x = start.to_vec();
    let mut r = residuals(&x);
    let mut c = cost(&r);
    let mut mu = 1e-3;
    for _ in 0..200 {
        if c <= 1e-30 {
            break;
        }
        // J^T J and J^T r
        let mut jtj = SymMatrix::zeros(k);
        let mut jtr = vec![0.0; k];
        let mut jrow = vec![0.0; k];
        for (row, ps) in pairs.iter().enumerate() {
            jrow.iter_mut().for_each(|v| *v = 0.0);
            for &(p, q) in ps {
                jrow[p] += x[q] / scale;
                jrow[q] += x[p] / scale;
            }
            for i in 0..k {
                if jrow[i] == 0.0 {
                    continue;
                }
                jtr[i] += jrow[i] * r[row];
                for j in 0..k {
                    jtj.set(i, j, jtj.get(i, j) + jrow[i] * jrow[j]);
                }
            }
        }
        let Ok(eig) = sym_eigen(&jtj) else { break };
        let peak = eig.values.first().copied().unwrap_or(0.0);
        let mut improved = false;
        for _ in 0..30 {
            let damp = mu * peak.max(1e-12);
            let inv = eig.reconstruct_with(|l| 1.0 / (l.max(0.0) + damp));
            let trial: Vec<f64> = (0..k)
                .map(|i| x[i] - (0..k).map(|j| inv.get(i, j) * jtr[j]).sum::<f64>())
                .collect();
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct < c {
                x = trial;
                r = rt;
                c = ct;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::autocorrelation;

    fn sig(n: usize, entries: &[(usize, f64)]) -> Signal {
        Signal::from_entries(n, entries).unwrap()
    }

    #[test]
    fn support_witness_is_feasible() {
        let x = sig(8, &[(0, 1.0), (1, -0.4), (3, 2.0)]);
        let a = autocorrelation(&x);
        let p = build_support_sdp(&a, 3, 7, DEFAULT_EPSILON).unwrap();
        let mut u = vec![0.0; 16];
        for i in [0, 1, 3] {
            u[i] = 1.0;
        }
        let s = SymMatrix::outer(&u);
        assert!(p.eq_violation(&s) < 1e-12);
        assert!(p.ineq_violation(&s) <= 0.0);
        assert_eq!(p.entry_violation(&s), 0.0);
    }

    #[test]
    fn single_spike_masks_every_off_diagonal() {
        let a = autocorrelation(&sig(4, &[(2, 3.0)]));
        let p = build_support_sdp(&a, 1, 0, DEFAULT_EPSILON).unwrap();
        let mask = p.fixed_zero_mask.unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(mask[i * 8 + j], i != j, "({i},{j})");
            }
        }
        assert!(p.ineq_constraints.is_empty());
    }

    #[test]
    fn too_large_k_is_infeasible() {
        let a = autocorrelation(&sig(8, &[(0, 1.0), (2, 1.0)]));
        assert!(matches!(
            build_support_sdp(&a, 3, 0, DEFAULT_EPSILON),
            Err(RecoveryError::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn clear_diagonal_is_extracted() {
        let mut d = vec![0.0; 8];
        d[..4].copy_from_slice(&[0.99, 0.01, 0.98, 0.97]);
        let s = SymMatrix::diagonal(&d);
        let got = extract_support(&s, 3, DEFAULT_SUPPORT_THRESHOLD, None).unwrap();
        assert_eq!(got.indices(), &[0, 2, 3]);
    }

    #[test]
    fn flat_diagonal_is_ambiguous() {
        let s = SymMatrix::diagonal(&[3.0 / 8.0; 8]);
        assert_eq!(
            extract_support(&s, 3, DEFAULT_SUPPORT_THRESHOLD, None),
            Err(RecoveryError::AmbiguousSupport)
        );
    }

    #[test]
    fn wrapped_support_is_unrotated() {
        // {6, 7, 1} on the cycle of 8 is {0, 1, 3} shifted by 6
        let mut d = vec![0.0; 8];
        for i in [6, 7, 1] {
            d[i] = 1.0;
        }
        let got = extract_support(&SymMatrix::diagonal(&d), 3, 0.5, None).unwrap();
        assert_eq!(got.indices(), &[0, 1, 3]);
    }

    #[test]
    fn signal_witness_is_feasible() {
        let x = sig(8, &[(1, 0.7), (2, -1.3), (6, 0.2)]);
        let mut padded = x.values().to_vec();
        padded.resize(16, 0.0);
        let y = crate::signal::fourier_magnitudes(&x);
        let d = SupportSet::new(8, vec![1, 2, 6]);
        let p = build_signal_sdp(&y, &support_mask(&d, 16));
        let xx = SymMatrix::outer(&padded);
        assert!(p.eq_violation(&xx) < 1e-9 * y[0], "{}", p.eq_violation(&xx));
        assert_eq!(p.entry_violation(&xx), 0.0);
    }

    #[test]
    fn single_spike_signal_program_is_forced() {
        let x = sig(4, &[(0, 1.5)]);
        let y = crate::signal::fourier_magnitudes(&x);
        let p = build_signal_sdp(&y, &support_mask(&SupportSet::new(4, vec![0]), 8));
        let sol = admm::solve(&p, &SolverConfig::default()).unwrap();
        assert!((sol.matrix.get(0, 0) - 2.25).abs() < 1e-6);
    }

    #[test]
    fn rank_one_readout() {
        let v = [0.0, 2.0, -1.0, 3.0];
        let got = extract_signal(&SymMatrix::outer(&v), DEFAULT_RANK_TOL).unwrap();
        for (g, e) in got.values().iter().zip(v) {
            assert!((g - e).abs() < 1e-9);
        }
        let neg = extract_signal(&SymMatrix::outer(&[0.0, -2.0, 1.0]), DEFAULT_RANK_TOL).unwrap();
        assert!((neg.values()[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn identity_is_not_rank_one() {
        assert!(matches!(
            extract_signal(&SymMatrix::identity(3), DEFAULT_RANK_TOL),
            Err(RecoveryError::NotRankOne(_))
        ));
    }

    #[test]
    fn refinement_converges_from_nearby_start() {
        let x = sig(16, &[(0, 2.0), (1, -1.0), (6, 3.0), (9, 1.0)]);
        let a = autocorrelation(&x);
        let d = SupportSet::new(16, vec![0, 1, 6, 9]);
        let got = refine_on_support(&a, &d, &[1.9, -1.1, 3.05, 0.9]);
        for (g, e) in got.iter().zip([2.0, -1.0, 3.0, 1.0]) {
            assert!((g - e).abs() < 1e-9, "{got:?}");
        }
    }

    #[test]
    fn redraws_stop_at_the_configured_count() {
        let x = sig(16, &[(0, 2.0), (1, -1.0), (6, 3.0), (9, 1.0)]);
        let a = autocorrelation(&x);
        for redraws in [0, 3] {
            let cfg = Algorithm2Config {
                bias_redraws: redraws,
                support_solver: SolverConfig {
                    max_iters: 1,
                    ..SolverConfig::default()
                },
                ..Algorithm2Config::default()
            };
            assert!(algorithm2(&a, 4, &cfg).is_err());
        }
    }

    #[test]
    fn zero_autocorrelation_gives_zero_signal() {
        let a = Autocorrelation::new(vec![0.0; 5]).unwrap();
        let got = algorithm2(&a, 0, &Algorithm2Config::default()).unwrap();
        assert_eq!(got, Signal::zeros(5));
    }
}
