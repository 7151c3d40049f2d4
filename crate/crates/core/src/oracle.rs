//! Brute-force spectral factorization of small autocorrelations.
//!
//! With `L` the largest nonzero lag, `z^L A(z) = X(z) z^L X(1/z)` where
//! `A(z) = sum_l a_|l| z^l`. The zeros of `X` together with their reciprocals
//! are the zeros of `z^L A(z)`; every real signal sharing the autocorrelation
//! picks one member of each reciprocal pair, keeping conjugate pairs together.

use num_complex::Complex64;

use crate::error::OracleError;
use crate::signal::{autocorrelation, equivalent, Autocorrelation, Signal, SupportSet};

const MAX_ITERS: usize = 5000;
/// Relative backward error accepted for a computed root.
const ROOT_RESIDUAL: f64 = 1e-8;
/// Pairing tolerance `|r conj(s) - 1| <= PAIR_TOL (1 + |r|^2)`.
const PAIR_TOL: f64 = 1e-6;
/// Distance from the unit circle below which a root counts as on it.
const UNIT_TOL: f64 = 1e-5;

/// All complex roots of `sum_i coeffs[i] z^i` (ascending powers) by
/// Durand-Kerner iteration with a Newton polish.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>, OracleError> {
    let Some(&lead) = coeffs.last() else {
        return Err(OracleError::DegeneratePolynomial);
    };
    if lead == 0.0 || !coeffs.iter().all(|c| c.is_finite()) {
        return Err(OracleError::DegeneratePolynomial);
    }
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let monic: Vec<Complex64> = coeffs.iter().map(|&c| Complex64::new(c / lead, 0.0)).collect();
    // Cauchy bound on the root moduli
    let radius = 1.0 + monic[..deg].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|i| Complex64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * i as f64 / deg as f64))
        .collect();

    for _ in 0..MAX_ITERS {
        let mut max_step = 0.0f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(1e-300, 0.0);
            }
            let step = horner(&monic, z[i]) / denom;
            z[i] -= step;
            max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
        }
        if !max_step.is_finite() {
            break;
        }
        if max_step <= 1e-15 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner_with_derivative(&monic, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *r - p / dp;
            if backward_error(&monic, next) <= backward_error(&monic, *r) {
                *r = next;
            } else {
                break;
            }
        }
    }
    let worst = z.iter().map(|&r| backward_error(&monic, r)).fold(0.0, f64::max);
    if !(worst <= ROOT_RESIDUAL) {
        return Err(OracleError::NoConvergence(MAX_ITERS));
    }
    Ok(z)
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci)
}

fn horner_with_derivative(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    c.iter().rev().fold((zero, zero), |(p, dp), &ci| (p * z + ci, dp * z + p))
}

/// `|p(r)| / sum_i |c_i| |r|^i`.
fn backward_error(c: &[Complex64], r: Complex64) -> f64 {
    let scale = c.iter().rev().fold(0.0, |acc, ci| acc * r.norm() + ci.norm());
    horner(c, r).norm() / scale.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadrupleKind {
    /// `z0, conj(z0), 1/z0, 1/conj(z0)` all distinct.
    Generic,
    /// Real `z0` and `1/z0`.
    RealPair,
    /// Conjugate pair on the unit circle.
    UnitConjugate,
    /// `z0 = 1` or `z0 = -1`.
    RealUnit,
}

/// One symmetry class of zeros of `z^L A(z)`. `root` is the member inside
/// the unit circle (upper half plane for complex classes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroQuadruple {
    pub root: Complex64,
    /// Times the class occurs in `X(z)`.
    pub multiplicity: usize,
    pub kind: QuadrupleKind,
    /// Outside-circle partner as computed, for off-circle classes.
    partner: Complex64,
}

impl ZeroQuadruple {
    /// Whether swapping the class between `X(z)` and `z^L X(1/z)` yields a
    /// different real factor.
    pub fn is_choice(&self) -> bool {
        matches!(self.kind, QuadrupleKind::Generic | QuadrupleKind::RealPair)
    }

    /// Zeros contributed to `X(z)`; `flip` takes the outside members.
    fn members(&self, flip: bool) -> Vec<Complex64> {
        let base = if flip { self.partner } else { self.root };
        let one = match self.kind {
            QuadrupleKind::RealPair | QuadrupleKind::RealUnit => vec![Complex64::new(base.re, 0.0)],
            QuadrupleKind::Generic | QuadrupleKind::UnitConjugate => vec![base, base.conj()],
        };
        std::iter::repeat_n(one, self.multiplicity).flatten().collect()
    }
}

/// Groups the `2L` roots of `z^L A(z)` into symmetry classes.
pub fn group_roots(roots: &[Complex64]) -> Result<Vec<ZeroQuadruple>, OracleError> {
    let mut classes = Vec::new();

    // unit circle: each zero of X appears twice
    let mut unit: Vec<Complex64> = roots
        .iter()
        .copied()
        .filter(|r| (r.norm() - 1.0).abs() <= UNIT_TOL)
        .collect();
    let mut pairs = Vec::with_capacity(unit.len() / 2);
    while let Some(r) = unit.pop() {
        let (j, d) = unit
            .iter()
            .enumerate()
            .map(|(j, s)| (j, (r - s).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(OracleError::RootPairingFailed)?;
        if d > 1e-3 {
            return Err(OracleError::RootPairingFailed);
        }
        pairs.push([r, unit.swap_remove(j)]);
    }
    let unit_pairs = pairs.len();
    for pair in pairs {
        let mid = (pair[0] + pair[1]) / 2.0;
        let on_circle = mid / mid.norm();
        if on_circle.im.abs() <= UNIT_TOL {
            classes.push(ZeroQuadruple {
                root: Complex64::new(on_circle.re.signum(), 0.0),
                multiplicity: 1,
                kind: QuadrupleKind::RealUnit,
                partner: Complex64::new(on_circle.re.signum(), 0.0),
            });
        } else if on_circle.im > 0.0 {
            classes.push(ZeroQuadruple {
                root: on_circle,
                multiplicity: 1,
                kind: QuadrupleKind::UnitConjugate,
                partner: on_circle,
            });
        }
    }
    let upper_unit = classes.iter().filter(|c| c.kind == QuadrupleKind::UnitConjugate).count();
    let real_unit = classes.iter().filter(|c| c.kind == QuadrupleKind::RealUnit).count();
    if 2 * upper_unit + real_unit != unit_pairs {
        return Err(OracleError::RootPairingFailed);
    }

    let inside: Vec<Complex64> = roots.iter().copied().filter(|r| r.norm() < 1.0 - UNIT_TOL).collect();
    let mut outside: Vec<Option<Complex64>> = roots
        .iter()
        .copied()
        .filter(|r| r.norm() > 1.0 + UNIT_TOL)
        .map(Some)
        .collect();
    if inside.len() != outside.len() {
        return Err(OracleError::RootPairingFailed);
    }
    let mut partner_of = Vec::with_capacity(inside.len());
    for &r in &inside {
        let best = outside
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, (r * s.conj() - 1.0).norm())))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, err)) if err <= PAIR_TOL * (1.0 + r.norm_sqr()) => {
                partner_of.push(outside[i].take().expect("unused"));
            }
            _ => return Err(OracleError::RootPairingFailed),
        }
    }

    let mut used = vec![false; inside.len()];
    for i in 0..inside.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let r = inside[i];
        if r.im.abs() <= PAIR_TOL * (1.0 + r.norm()) {
            classes.push(ZeroQuadruple {
                root: Complex64::new(r.re, 0.0),
                multiplicity: 1,
                kind: QuadrupleKind::RealPair,
                partner: Complex64::new(partner_of[i].re, 0.0),
            });
            continue;
        }
        let conj = (0..inside.len())
            .filter(|&j| !used[j])
            .map(|j| (j, (inside[j] - r.conj()).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match conj {
            Some((j, err)) if err <= PAIR_TOL * (1.0 + r.norm()) => {
                used[j] = true;
                let (root, partner) = if r.im > 0.0 {
                    (r, partner_of[i])
                } else {
                    (inside[j], partner_of[j])
                };
                classes.push(ZeroQuadruple {
                    root,
                    multiplicity: 1,
                    kind: QuadrupleKind::Generic,
                    partner,
                });
            }
            _ => return Err(OracleError::RootPairingFailed),
        }
    }
    Ok(classes)
}

/// Signals sharing one autocorrelation, one per equivalence class.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationSet {
    pub signals: Vec<Signal>,
}

impl FactorizationSet {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    /// Whether some member is equivalent to `x` within `tol`.
    pub fn contains(&self, x: &Signal, tol: f64) -> bool {
        self.signals.iter().any(|s| equivalent(s, x, tol))
    }

    /// Members with the fewest entries above `1e-6` of their peak.
    pub fn sparsest(&self) -> Vec<&Signal> {
        let count = |s: &Signal| {
            let peak = s.max_abs();
            s.values().iter().filter(|v| v.abs() > 1e-6 * peak).count()
        };
        let Some(min) = self.signals.iter().map(count).min() else {
            return Vec::new();
        };
        self.signals.iter().filter(|s| count(s) == min).collect()
    }
}

/// Every real signal of length `a.n()` whose autocorrelation matches `a`.
///
/// Lags with `|a_l| <= tol` are treated as zero when locating the largest
/// lag. A candidate is kept when its autocorrelation is within
/// `max(tol, 1e-6 a_0)` of `a`; candidates are deduplicated up to sign,
/// shift and reversal.
pub fn enumerate_factorizations(a: &Autocorrelation, tol: f64) -> Result<FactorizationSet, OracleError> {
    let n = a.n();
    let a0 = a.energy();
    if a.is_zero() {
        return Ok(FactorizationSet {
            signals: vec![Signal::zeros(n)],
        });
    }
    let lags = a.lags();
    let last = (0..n).rev().find(|&l| lags[l].abs() > tol).unwrap_or(0);
    if last == 0 {
        let x = Signal::from_entries(n, &[(0, a0.sqrt())]).expect("index 0 in range");
        return Ok(FactorizationSet { signals: vec![x] });
    }
    let coeffs: Vec<f64> = (0..=2 * last).map(|j| lags[j.abs_diff(last)]).collect();
    let roots = poly_roots(&coeffs)?;
    let classes = group_roots(&roots)?;
    let fixed: Vec<Complex64> = classes
        .iter()
        .filter(|c| !c.is_choice())
        .flat_map(|c| c.members(false))
        .collect();
    let choices: Vec<&ZeroQuadruple> = classes.iter().filter(|c| c.is_choice()).collect();

    let accept = tol.max(1e-6 * a0);
    let dedupe = 1e-6 * a0.sqrt();
    let mut signals: Vec<Signal> = Vec::new();
    // flipping every class at once is a time reversal
    let assignments: u64 = if choices.is_empty() { 1 } else { 1 << (choices.len() - 1) };
    for bits in 0..assignments {
        let mut zeros = fixed.clone();
        for (i, c) in choices.iter().enumerate() {
            zeros.extend(c.members(i > 0 && bits >> (i - 1) & 1 == 1));
        }
        let Some(x) = real_factor(&zeros, n, a0) else {
            continue;
        };
        let diff = autocorrelation(&x).max_abs_diff(a).unwrap_or(f64::INFINITY);
        if diff <= accept && !signals.iter().any(|s| equivalent(s, &x, dedupe)) {
            signals.push(x);
        }
    }
    Ok(FactorizationSet { signals })
}

/// Monic polynomial with the given zeros, rescaled to energy `a0`, with
/// negligible coefficients dropped. `None` when it is not real.
fn real_factor(zeros: &[Complex64], n: usize, a0: f64) -> Option<Signal> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &z in zeros {
        c.push(Complex64::new(0.0, 0.0));
        for i in (1..c.len()).rev() {
            let prev = c[i - 1];
            c[i] = c[i] * (-z) + prev;
        }
        c[0] *= -z;
    }
    if c.len() > n {
        return None;
    }
    let peak = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if c.iter().any(|v| v.im.abs() > 1e-6 * peak) {
        return None;
    }
    let energy: f64 = c.iter().map(|v| v.re * v.re).sum();
    let scale = (a0 / energy).sqrt();
    let mut values = vec![0.0; n];
    for (dst, v) in values.iter_mut().zip(&c) {
        if v.re.abs() > 1e-9 * peak {
            *dst = v.re * scale;
        }
    }
    Some(Signal::new(values).ok()?.canonical())
}

/// Full linear convolution, length `g.n() + h.n() - 1`.
pub fn convolve(g: &Signal, h: &Signal) -> Signal {
    let mut out = vec![0.0; g.n() + h.n() - 1];
    for (i, &gi) in g.values().iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        for (j, &hj) in h.values().iter().enumerate() {
            out[i + j] += gi * hj;
        }
    }
    Signal::new(out).expect("finite products")
}

/// `(g * h, g * reverse(h))`; both share one autocorrelation.
pub fn construct_ambiguous_pair(g: &Signal, h: &Signal) -> (Signal, Signal) {
    (convolve(g, h), convolve(g, &h.reversed()))
}

/// Whether the indices form an arithmetic progression; at most two indices
/// always do.
pub fn is_uniform_support(d: &SupportSet) -> bool {
    let idx = d.indices();
    idx.len() <= 2 || idx.windows(2).all(|w| w[1] - w[0] == idx[1] - idx[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    fn sorted_real(mut r: Vec<Complex64>) -> Vec<f64> {
        assert!(r.iter().all(|z| z.im.abs() < 1e-9));
        r.sort_by(|a, b| a.re.total_cmp(&b.re));
        r.iter().map(|z| z.re).collect()
    }

    #[test]
    fn quadratic_roots() {
        let r = sorted_real(poly_roots(&[-1.0, 0.0, 1.0]).unwrap());
        assert!((r[0] + 1.0).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
        let r = sorted_real(poly_roots(&[3.0, 10.0, 3.0]).unwrap());
        assert!((r[0] + 3.0).abs() < 1e-12 && (r[1] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_polynomials() {
        assert_eq!(poly_roots(&[]), Err(OracleError::DegeneratePolynomial));
        assert_eq!(poly_roots(&[1.0, 0.0]), Err(OracleError::DegeneratePolynomial));
        assert_eq!(poly_roots(&[2.0]), Ok(vec![]));
    }

    #[test]
    fn two_point_has_one_class() {
        let set = enumerate_factorizations(&Autocorrelation::new(vec![10.0, 3.0]).unwrap(), 1e-12).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.contains(&sig(&[1.0, 3.0]), 1e-9));
    }

    #[test]
    fn three_point_has_two_classes() {
        let set = enumerate_factorizations(&Autocorrelation::new(vec![62.0, 35.0, 6.0]).unwrap(), 1e-12).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&sig(&[1.0, 5.0, 6.0]), 1e-9));
        assert!(set.contains(&sig(&[3.0, 7.0, 2.0]), 1e-9));
    }

    #[test]
    fn spike_has_one_class() {
        let set = enumerate_factorizations(&Autocorrelation::new(vec![4.0, 0.0, 0.0]).unwrap(), 1e-12).unwrap();
        assert_eq!(set.signals, vec![sig(&[2.0, 0.0, 0.0])]);
    }

    #[test]
    fn grouping_kinds() {
        // X(z) = (z - 0.5)(z - 1)(z^2 + 1) and its reflection
        let x = convolve(&convolve(&sig(&[-0.5, 1.0]), &sig(&[-1.0, 1.0])), &sig(&[1.0, 0.0, 1.0]));
        let a = autocorrelation(&x);
        let last = a.n() - 1;
        let coeffs: Vec<f64> = (0..=2 * last).map(|j| a.lags()[j.abs_diff(last)]).collect();
        let classes = group_roots(&poly_roots(&coeffs).unwrap()).unwrap();
        let mut kinds: Vec<QuadrupleKind> = classes.iter().map(|c| c.kind).collect();
        kinds.sort_by_key(|k| *k as u8);
        assert_eq!(
            kinds,
            vec![QuadrupleKind::RealPair, QuadrupleKind::UnitConjugate, QuadrupleKind::RealUnit]
        );
    }

    #[test]
    fn ambiguous_pair_example() {
        let (f1, f2) = construct_ambiguous_pair(&sig(&[1.0, 2.0]), &sig(&[1.0, 3.0]));
        assert_eq!(f1.values(), &[1.0, 5.0, 6.0]);
        assert_eq!(f2.values(), &[3.0, 7.0, 2.0]);
        assert_eq!(autocorrelation(&f1).lags(), &[62.0, 35.0, 6.0]);
        assert_eq!(autocorrelation(&f2).lags(), &[62.0, 35.0, 6.0]);
    }

    #[test]
    fn palindromic_h_gives_identical_pair() {
        let (f1, f2) = construct_ambiguous_pair(&sig(&[1.0, -2.0, 0.5]), &sig(&[2.0, 1.0, 2.0]));
        assert_eq!(f1, f2);
    }

    #[test]
    fn uniform_support_examples() {
        assert!(is_uniform_support(&SupportSet::new(8, vec![0, 2, 4, 6])));
        assert!(!is_uniform_support(&SupportSet::new(10, vec![0, 1, 6, 9])));
        assert!(is_uniform_support(&SupportSet::new(8, vec![5])));
        assert!(is_uniform_support(&SupportSet::new(8, vec![1, 6])));
    }
}
