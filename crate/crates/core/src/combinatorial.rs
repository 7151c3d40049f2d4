//! Combinatorial recovery: support from the lag set by extreme-distance
//! extraction and set intersection, then values from the good-pair graph.
//!
//! Support indices are written `d_1 < d_2 < ... < d_k` and `d_ij = |d_i - d_j|`.
//! The lag set `A` holds every `d_ij`, including the zero lag.

use std::collections::{HashMap, VecDeque};

use crate::error::RecoveryError;
use crate::signal::{autocorrelation, Autocorrelation, Signal, SupportSet};

/// Sorted set of lags at which the autocorrelation is nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSet {
    lags: Vec<usize>,
    member: Vec<bool>,
}

impl LagSet {
    pub fn from_lags(mut lags: Vec<usize>) -> Self {
        lags.sort_unstable();
        lags.dedup();
        let len = lags.last().map_or(0, |m| m + 1);
        let mut member = vec![false; len];
        for &l in &lags {
            member[l] = true;
        }
        Self { lags, member }
    }

    /// All pairwise distances of a support, including 0.
    pub fn of_support(d: &SupportSet) -> Self {
        let idx = d.indices();
        let mut lags = Vec::with_capacity(idx.len() * idx.len() / 2 + 1);
        for (p, &i) in idx.iter().enumerate() {
            lags.extend(idx[p..].iter().map(|&j| j - i));
        }
        Self::from_lags(lags)
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn contains(&self, lag: usize) -> bool {
        self.member.get(lag).copied().unwrap_or(false)
    }

    fn contains_signed(&self, lag: i64) -> bool {
        lag >= 0 && self.contains(lag as usize)
    }

    /// Lags other than 0.
    pub fn positive(&self) -> &[usize] {
        match self.lags.first() {
            Some(0) => &self.lags[1..],
            _ => &self.lags,
        }
    }
}

/// `{l : |a_l| > tol}`, plus lag 0 whenever `a` is nonzero.
pub fn lag_set(a: &Autocorrelation, tol: f64) -> LagSet {
    let mut lags: Vec<usize> = a
        .lags()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > tol)
        .map(|(l, _)| l)
        .collect();
    if !lags.is_empty() && lags[0] != 0 {
        lags.insert(0, 0);
    }
    LagSet::from_lags(lags)
}

/// The outer distances that anchor the support reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtremeDistances {
    pub d_1k: usize,
    pub d_2k: usize,
    pub d_12: usize,
    pub d_1k_minus_1: usize,
    pub d_k_minus_1_k: usize,
}

/// Reads `d_1k`, `d_2k`, `d_12` off the top of the lag set and scans down
/// for `d_{1,k-1}`: the largest lag `t < d_2k` with `d_2k - t` not a lag.
pub fn extract_extremes(a: &LagSet) -> Result<ExtremeDistances, RecoveryError> {
    let pos = a.positive();
    if pos.len() < 3 {
        return Err(RecoveryError::TooSmall);
    }
    let d_1k = pos[pos.len() - 1];
    let d_2k = pos[pos.len() - 2];
    let d_1k_minus_1 = pos[..pos.len() - 2]
        .iter()
        .rev()
        .copied()
        .find(|&t| !a.contains(d_2k - t))
        .ok_or(RecoveryError::NoCandidate)?;
    Ok(ExtremeDistances {
        d_1k,
        d_2k,
        d_12: d_1k - d_2k,
        d_1k_minus_1,
        d_k_minus_1_k: d_1k - d_1k_minus_1,
    })
}

/// Recovers the support (anchored at 0) from the autocorrelation's lag set.
///
/// The as-read orientation is tried first, then the reversed one. When the
/// scan finds no candidate, or both orientations fail, the equal-end-gap
/// hypothesis `d_{k-1,k} = d_12` is tried last. Exactly two positive lags
/// (a uniform three-point support) give [`RecoveryError::TooSmall`].
pub fn recover_support(a: &Autocorrelation, tol: f64) -> Result<SupportSet, RecoveryError> {
    let n = a.n();
    let lags = lag_set(a, tol);
    let pos = lags.positive();
    match (lags.is_empty(), pos.len()) {
        (true, _) => return Ok(SupportSet::new(n, vec![])),
        (false, 0) => return Ok(SupportSet::new(n, vec![0])),
        (false, 1) => return Ok(SupportSet::new(n, vec![0, pos[0]])),
        (false, 2) => return Err(RecoveryError::TooSmall),
        _ => {}
    }
    let d_1k = pos[pos.len() - 1];
    let d_12 = d_1k - pos[pos.len() - 2];

    let extremes = extract_extremes(&lags);
    let mut hypotheses = Vec::with_capacity(3);
    if let Ok(e) = &extremes {
        let (first, last) = (e.d_12, e.d_k_minus_1_k);
        if first <= last {
            hypotheses.extend([(first, last), (last, first)]);
        } else {
            hypotheses.extend([(last, first), (first, last)]);
        }
    }
    if !hypotheses.contains(&(d_12, d_12)) {
        hypotheses.push((d_12, d_12));
    }

    for (first, last) in hypotheses {
        if let Some(support) = support_from_end_gaps(&lags, d_1k, first, last) {
            if LagSet::of_support(&support).lags == lags.lags {
                return Ok(SupportSet::new(n, support.indices().to_vec()));
            }
        }
    }
    match extremes {
        Err(RecoveryError::NoCandidate) => Err(RecoveryError::NoCandidate),
        _ => Err(RecoveryError::SupportInconsistent),
    }
}

/// Survivors of `(A ∩ A_1) ∩ (d_{2,k-1} - (A ∩ A_2))` give the interior
/// distances `d_2i`; returns `None` when the end gaps are incompatible.
fn support_from_end_gaps(a: &LagSet, d_1k: usize, first: usize, last: usize) -> Option<SupportSet> {
    if first == 0 || last == 0 || first + last > d_1k {
        return None;
    }
    let d_2k_minus_1 = (d_1k - first - last) as i64;
    let (first_i, last_i) = (first as i64, last as i64);
    let survivors = a.positive().iter().map(|&b| b as i64).filter(|&b| {
        let c = d_2k_minus_1 - b;
        a.contains_signed(b + first_i) && a.contains_signed(c) && a.contains_signed(c + last_i)
    });
    let mut indices = vec![0, first, d_1k];
    indices.extend(survivors.map(|b| first + b as usize));
    let support = SupportSet::new(d_1k + 1, indices);
    // d_{k-1} must be the largest interior index
    let interior_max = support.indices()[support.sparsity() - 2];
    (interior_max == d_1k - last).then_some(support)
}

/// Edge between support positions `i < j` (indices into the support list).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Weighted graph on support elements; an edge joins every pair whose
/// distance occurs exactly once, weighted by the autocorrelation at that lag.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodPairGraph {
    pub vertices: SupportSet,
    pub edges: Vec<Edge>,
}

pub fn build_good_pair_graph(d: &SupportSet, a: &Autocorrelation, tol: f64) -> GoodPairGraph {
    let idx = d.indices();
    // distance -> (multiplicity, first pair)
    let mut seen: HashMap<usize, (usize, usize, usize)> = HashMap::new();
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            seen.entry(idx[j] - idx[i])
                .and_modify(|e| e.0 += 1)
                .or_insert((1, i, j));
        }
    }
    let mut edges: Vec<Edge> = seen
        .into_iter()
        .filter(|(dist, (count, _, _))| *count == 1 && *dist < a.n() && a.lags()[*dist].abs() > tol)
        .map(|(dist, (_, i, j))| Edge {
            i,
            j,
            weight: a.lags()[dist],
        })
        .collect();
    edges.sort_by_key(|e| (e.i, e.j));
    GoodPairGraph {
        vertices: d.clone(),
        edges,
    }
}

/// Solves for the values on the support from an odd cycle and a spanning
/// tree. The first cycle vertex takes the positive square root.
pub fn solve_graph(g: &GoodPairGraph) -> Result<Signal, RecoveryError> {
    let k = g.vertices.sparsity();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for e in &g.edges {
        adj[e.i].push((e.j, e.weight));
        adj[e.j].push((e.i, e.weight));
    }
    let cycle = find_triangle(k, &g.edges).or_else(|| find_odd_cycle(&adj)).ok_or(RecoveryError::NoOddCycle)?;

    let weight = |u: usize, v: usize| adj[u].iter().find(|(w, _)| *w == v).map(|(_, wt)| *wt).unwrap();
    let len = cycle.len();
    let (mut num, mut den) = (1.0, 1.0);
    for t in 0..len {
        let w = weight(cycle[t], cycle[(t + 1) % len]);
        if t % 2 == 0 {
            num *= w;
        } else {
            den *= w;
        }
    }
    let square = num / den;
    if !(square > 0.0) || !square.is_finite() {
        return Err(RecoveryError::NegativeSquare(square));
    }

    let root = cycle[0];
    let mut value = vec![f64::NAN; k];
    value[root] = square.sqrt();
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, w) in &adj[u] {
            if value[v].is_nan() {
                value[v] = w / value[u];
                queue.push_back(v);
            }
        }
    }
    if value.iter().any(|v| v.is_nan()) {
        return Err(RecoveryError::Disconnected);
    }
    let n = g.vertices.n();
    let mut out = vec![0.0; n];
    for (&pos, v) in g.vertices.indices().iter().zip(value) {
        out[pos] = v;
    }
    Ok(Signal::new(out).expect("finite values on a positive-length signal"))
}

fn find_triangle(k: usize, edges: &[Edge]) -> Option<Vec<usize>> {
    let mut linked = vec![false; k * k];
    for e in edges {
        linked[e.i * k + e.j] = true;
        linked[e.j * k + e.i] = true;
    }
    edges.iter().find_map(|e| {
        (0..k)
            .find(|&w| linked[e.i * k + w] && linked[e.j * k + w])
            .map(|w| vec![e.i, e.j, w])
    })
}

/// Odd cycle via BFS two-colouring: an edge joining two vertices at equal
/// depth closes an odd cycle through their lowest common ancestor.
fn find_odd_cycle(adj: &[Vec<(usize, f64)>]) -> Option<Vec<usize>> {
    let k = adj.len();
    let mut depth = vec![usize::MAX; k];
    let mut parent = vec![usize::MAX; k];
    for start in 0..k {
        if depth[start] != usize::MAX {
            continue;
        }
        depth[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                } else if depth[v] == depth[u] && u < v {
                    let (mut a, mut b) = (u, v);
                    let (mut left, mut right) = (vec![a], vec![b]);
                    while a != b {
                        a = parent[a];
                        b = parent[b];
                        left.push(a);
                        right.push(b);
                    }
                    // u .. lca .. v, closed by the edge (v, u)
                    right.pop();
                    left.extend(right.into_iter().rev());
                    return Some(left);
                }
            }
        }
    }
    None
}

/// Full combinatorial pipeline. `tol` is the absolute threshold for zero
/// lags; the result is checked against `a` before it is returned.
///
/// An all-zero autocorrelation yields the all-zero signal. One and two
/// element supports are solved in closed form.
pub fn algorithm1(a: &Autocorrelation, tol: f64) -> Result<Signal, RecoveryError> {
    let n = a.n();
    let lags = lag_set(a, tol);
    if lags.is_empty() {
        return Ok(Signal::zeros(n));
    }
    let a0 = a.energy();
    let pos = lags.positive();
    let x = match pos.len() {
        0 => Signal::from_entries(n, &[(0, a0.sqrt())]).expect("index 0 in range"),
        1 => two_point(n, a0, pos[0], a.lags()[pos[0]])?,
        _ => {
            let support = recover_support(a, tol)?;
            let graph = build_good_pair_graph(&support, a, tol);
            solve_graph(&graph)?
        }
    };
    let x = x.canonical();
    verify(&x, a, tol)?;
    Ok(x)
}

/// `x_0^2 + x_d^2 = a_0`, `x_0 x_d = a_d`; the two roots differ by a swap,
/// which is a time reversal.
fn two_point(n: usize, a0: f64, d: usize, ad: f64) -> Result<Signal, RecoveryError> {
    let sum = (a0 + 2.0 * ad).max(0.0).sqrt();
    let diff = (a0 - 2.0 * ad).max(0.0).sqrt();
    let (x0, xd) = ((sum + diff) / 2.0, (sum - diff) / 2.0);
    if x0 == 0.0 || xd == 0.0 {
        return Err(RecoveryError::VerificationFailed(ad.abs()));
    }
    Ok(Signal::from_entries(n, &[(0, x0), (d, xd)]).expect("indices in range"))
}

/// Rejects `x` unless its autocorrelation matches `a` within `tol`
/// (floored at `1e-9 * a_0` for roundoff).
pub(crate) fn verify(x: &Signal, a: &Autocorrelation, tol: f64) -> Result<(), RecoveryError> {
    let bound = tol.max(1e-9 * a.energy());
    let diff = autocorrelation(x).max_abs_diff(a).unwrap_or(f64::INFINITY);
    if diff <= bound {
        Ok(())
    } else {
        Err(RecoveryError::VerificationFailed(diff))
    }
}
