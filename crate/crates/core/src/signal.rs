//! Real 1-D signals, their linear autocorrelation and power spectrum.
//!
//! Autocorrelations are linear: lag `l` sums `x[j] * x[j + l]` over the
//! in-range indices only. This is the cyclic autocorrelation of the signal
//! zero-padded to `m = 2n`, restricted to nonnegative lags.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

/// Relative threshold (times `a_0`) below which an autocorrelation lag is
/// treated as zero.
pub const DEFAULT_ZERO_REL_TOL: f64 = 1e-9;

/// A dense real signal of positive length.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self, FormatError> {
        if values.is_empty() {
            return Err(FormatError::EmptySignal);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(i));
        }
        Ok(Self { values })
    }

    /// The all-zero signal of length `n` (the "empty signal" outcome).
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "signal length must be positive");
        Self { values: vec![0.0; n] }
    }

    /// Builds a length-`n` signal from `(index, value)` pairs.
    pub fn from_entries(n: usize, entries: &[(usize, f64)]) -> Result<Self, FormatError> {
        if n == 0 {
            return Err(FormatError::EmptySignal);
        }
        let mut values = vec![0.0; n];
        let mut prev: Option<usize> = None;
        for &(index, value) in entries {
            if index >= n {
                return Err(FormatError::IndexOutOfRange { index, n });
            }
            if prev.is_some_and(|p| p >= index) {
                return Err(FormatError::UnsortedEntries(index));
            }
            if !value.is_finite() {
                return Err(FormatError::NonFinite(index));
            }
            values[index] = value;
            prev = Some(index);
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Nonzero `(index, value)` pairs in increasing index order.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn reversed(&self) -> Signal {
        let mut values = self.values.clone();
        values.reverse();
        Signal { values }
    }

    pub fn negated(&self) -> Signal {
        Signal {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    /// Shifts the support to start at index 0 and flips the global sign so the
    /// first nonzero value is positive. Orientation is left unchanged.
    pub fn canonical(&self) -> Signal {
        let n = self.n();
        let Some(first) = self.values.iter().position(|v| *v != 0.0) else {
            return Signal::zeros(n);
        };
        let sign = self.values[first].signum();
        let mut values = vec![0.0; n];
        for (dst, v) in values.iter_mut().zip(&self.values[first..]) {
            *dst = sign * v;
        }
        Signal { values }
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<(), FormatError> {
        let file = SignalFile {
            n: self.n(),
            entries: self.entries(),
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, FormatError> {
        let file: SignalFile = serde_json::from_reader(reader)?;
        Signal::from_entries(file.n, &file.entries)
    }
}

#[derive(Serialize, Deserialize)]
struct SignalFile {
    n: usize,
    entries: Vec<(usize, f64)>,
}

/// Linear autocorrelation, lags `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    lags: Vec<f64>,
}

impl Autocorrelation {
    /// Wraps raw lag values, checking the structural invariants
    /// (`a_0 >= 0` and `a_0 >= |a_l|` up to roundoff).
    pub fn new(lags: Vec<f64>) -> Result<Self, FormatError> {
        if lags.is_empty() {
            return Err(FormatError::EmptySignal);
        }
        if let Some(i) = lags.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(i));
        }
        let a0 = lags[0];
        let slack = 1e-9 * a0.abs().max(f64::MIN_POSITIVE);
        if a0 < 0.0 {
            return Err(FormatError::InvalidLags("negative lag 0"));
        }
        if lags.iter().any(|v| v.abs() > a0 + slack) {
            return Err(FormatError::InvalidLags("|a_l| exceeds a_0"));
        }
        Ok(Self { lags })
    }

    pub fn n(&self) -> usize {
        self.lags.len()
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn energy(&self) -> f64 {
        self.lags[0]
    }

    pub fn is_zero(&self) -> bool {
        self.lags.iter().all(|v| *v == 0.0)
    }

    /// `1e-9 * a_0`, the default threshold for treating a lag as zero.
    pub fn default_tol(&self) -> f64 {
        DEFAULT_ZERO_REL_TOL * self.lags[0]
    }

    /// Largest absolute lag difference; `None` when lengths differ.
    pub fn max_abs_diff(&self, other: &Autocorrelation) -> Option<f64> {
        (self.n() == other.n()).then(|| {
            self.lags
                .iter()
                .zip(&other.lags)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
    }

    /// Power spectrum on the `m = 2n` point grid, computed from the lags:
    /// `Y_k = a_0 + 2 sum_l a_l cos(2 pi k l / m)`.
    pub fn power_spectrum(&self) -> Vec<f64> {
        let n = self.n();
        let m = 2 * n;
        let mut buf: Vec<Complex64> = (0..m)
            .map(|j| {
                let lag = if j < n { j } else { m - j };
                Complex64::new(if lag < n { self.lags[lag] } else { 0.0 }, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<(), FormatError> {
        let file = AutocorrelationFile {
            n: self.n(),
            lags: self.lags.clone(),
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, FormatError> {
        let file: AutocorrelationFile = serde_json::from_reader(reader)?;
        if file.lags.len() != file.n {
            return Err(FormatError::LengthMismatch {
                expected: file.n,
                found: file.lags.len(),
            });
        }
        Autocorrelation::new(file.lags)
    }
}

#[derive(Serialize, Deserialize)]
struct AutocorrelationFile {
    n: usize,
    lags: Vec<f64>,
}

/// Sorted, deduplicated support indices within `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    n: usize,
    indices: Vec<usize>,
}

impl SupportSet {
    /// Sorts and deduplicates `indices`; panics if any index is `>= n`.
    pub fn new(n: usize, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        assert!(
            indices.last().is_none_or(|&i| i < n),
            "support index out of range"
        );
        Self { n, indices }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn sparsity(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Mirror image `i -> max + min - i`, keeping the same span.
    pub fn reversed(&self) -> SupportSet {
        match (self.indices.first(), self.indices.last()) {
            (Some(&lo), Some(&hi)) => {
                SupportSet::new(self.n, self.indices.iter().map(|&i| lo + hi - i).collect())
            }
            _ => self.clone(),
        }
    }

    /// Translated so the smallest index is 0.
    pub fn anchored(&self) -> SupportSet {
        let lo = self.indices.first().copied().unwrap_or(0);
        SupportSet {
            n: self.n,
            indices: self.indices.iter().map(|&i| i - lo).collect(),
        }
    }

    /// Equal up to translation and reversal.
    pub fn same_shape(&self, other: &SupportSet) -> bool {
        let a = self.anchored();
        let b = other.anchored();
        a.indices == b.indices || a.indices == b.reversed().indices
    }
}

/// Distribution of the nonzero values in [`random_sparse_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueDist {
    #[default]
    StandardNormal,
    /// Uniform on `[-1, 1]`.
    UniformPm1Magnitude,
}

impl std::str::FromStr for ValueDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard_normal" => Ok(ValueDist::StandardNormal),
            "uniform_pm1_magnitude" => Ok(ValueDist::UniformPm1Magnitude),
            other => Err(format!("unknown value distribution '{other}'")),
        }
    }
}

/// Bernoulli(`s/n`) support model with i.i.d. values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseModelParams {
    pub n: usize,
    pub s: f64,
    pub seed: u64,
    pub value_dist: ValueDist,
}

impl SparseModelParams {
    pub fn new(n: usize, s: f64, seed: u64) -> Self {
        Self {
            n,
            s,
            seed,
            value_dist: ValueDist::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("n must be positive".into());
        }
        if !(self.s > 0.0 && self.s <= self.n as f64) {
            return Err(format!("s must lie in (0, n], got {}", self.s));
        }
        Ok(())
    }
}

/// Linear autocorrelation `a_l = sum_j x_j x_{j+l}`, `l = 0..n`.
///
/// Runs over nonzero pairs only, so cost is quadratic in the sparsity.
pub fn autocorrelation(x: &Signal) -> Autocorrelation {
    let n = x.n();
    let nz = x.entries();
    let mut lags = vec![0.0; n];
    for (p, &(i, xi)) in nz.iter().enumerate() {
        for &(j, xj) in &nz[p..] {
            lags[j - i] += xi * xj;
        }
    }
    Autocorrelation { lags }
}

/// Squared magnitudes of the `m = 2n` point DFT of the zero-padded signal.
pub fn fourier_magnitudes(x: &Signal) -> Vec<f64> {
    let m = 2 * x.n();
    let mut buf: Vec<Complex64> = x
        .values()
        .iter()
        .map(|v| Complex64::new(*v, 0.0))
        .chain(std::iter::repeat_n(Complex64::new(0.0, 0.0), x.n()))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Draws a signal where each index joins the support independently with
/// probability `s/n`. Deterministic in `params.seed`.
pub fn random_sparse_signal(params: &SparseModelParams) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let p = (params.s / params.n as f64).clamp(0.0, 1.0);
    let values = (0..params.n)
        .map(|_| {
            if rng.random::<f64>() < p {
                draw_value(&mut rng, params.value_dist)
            } else {
                0.0
            }
        })
        .collect();
    Signal { values }
}

fn draw_value<R: Rng>(rng: &mut R, dist: ValueDist) -> f64 {
    loop {
        let v = match dist {
            ValueDist::StandardNormal => rng.sample::<f64, _>(StandardNormal),
            ValueDist::UniformPm1Magnitude => rng.random_range(-1.0..=1.0),
        };
        // an exact zero would silently shrink the support
        if v != 0.0 {
            return v;
        }
    }
}

/// Indices with `|x_i| > tol`.
pub fn support_set(x: &Signal, tol: f64) -> SupportSet {
    SupportSet {
        n: x.n(),
        indices: x
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, _)| i)
            .collect(),
    }
}

/// Whether `y` equals `x` up to global sign, translation and time reversal,
/// entrywise within `tol`.
///
/// Both signals are trimmed to the span of their entries exceeding `tol`
/// before comparison, so signals of different lengths may be equivalent.
pub fn equivalent(x: &Signal, y: &Signal, tol: f64) -> bool {
    let (cx, cy) = (trimmed(x.values(), tol), trimmed(y.values(), tol));
    if cx.len() != cy.len() {
        return false;
    }
    if cx.is_empty() {
        return true;
    }
    let close = |f: &dyn Fn(usize) -> f64| cy.iter().enumerate().all(|(i, v)| (v - f(i)).abs() <= tol);
    let last = cx.len() - 1;
    close(&|i| cx[i]) || close(&|i| -cx[i]) || close(&|i| cx[last - i]) || close(&|i| -cx[last - i])
}

fn trimmed(values: &[f64], tol: f64) -> &[f64] {
    let Some(first) = values.iter().position(|v| v.abs() > tol) else {
        return &[];
    };
    let last = values.iter().rposition(|v| v.abs() > tol).unwrap_or(first);
    &values[first..=last]
}
