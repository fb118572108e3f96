//! Output distribution of `n` binary symmetric channel agents observing a
//! uniform ±1 source, together with the log-odds machinery used by the
//! estimator.
//!
//! Agent `i` flips the source with probability `x_i`. Parameter vectors live
//! in `[0, 1]^n` and are tagged with a [`Region`]: interior vectors have every
//! coordinate in `(0, 1)`, singly-extreme vectors have exactly one coordinate
//! at `0` or `1`. Vectors with two or more extreme coordinates are
//! [`Region::Invalid`]: two fully (un)reliable agents that disagree make the
//! likelihood an undefined `0 · ∞`.
//!
//! Every interior likelihood goes through the log-odds sum `<r, l_x>` with
//! `l_i = log((1 - x_i) / x_i)`; raw products of ratios are never formed.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric;

/// Largest `n` for which exact `2^n` enumeration is allowed.
pub const ENUMERATION_CAP: usize = 20;

/// Default per-verdict tolerance for [`indistinguishable`].
pub const DEFAULT_INDISTINGUISHABLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    Interior,
    /// Exactly one coordinate (the index) is 0 or 1.
    SinglyExtreme(usize),
    Invalid,
}

/// Classifies a raw parameter vector. Rejects NaN and values outside `[0, 1]`.
pub fn classify_region(values: &[f64]) -> Result<Region> {
    let mut extreme = None;
    let mut count = 0usize;
    for (index, &value) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange { index, value });
        }
        if value == 0.0 || value == 1.0 {
            count += 1;
            extreme = Some(index);
        }
    }
    Ok(match (count, extreme) {
        (0, _) => Region::Interior,
        (1, Some(i)) => Region::SinglyExtreme(i),
        _ => Region::Invalid,
    })
}

/// A point of `[0, 1]^n` with its region tag.
#[derive(Debug, Clone, PartialEq)]
pub struct UnreliabilityVector {
    values: Vec<f64>,
    region: Region,
}

impl UnreliabilityVector {
    /// Builds a vector in any region, including [`Region::Invalid`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty parameter vector".into()));
        }
        let region = classify_region(&values)?;
        Ok(Self { values, region })
    }

    /// Builds a vector and requires it to be interior.
    pub fn interior(values: Vec<f64>) -> Result<Self> {
        let v = Self::new(values)?;
        v.require_interior()?;
        Ok(v)
    }

    /// The centroid `½·1`.
    pub fn half(n: usize) -> Self {
        Self {
            values: vec![0.5; n],
            region: Region::Interior,
        }
    }

    /// `1 - x`, which has the same output distribution as `x`.
    pub fn complement(&self) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| 1.0 - v).collect();
        let region = classify_region(&values).expect("complement stays in [0, 1]");
        Self { values, region }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// For a singly-extreme vector, the extreme index and whether it sits at 1.
    pub fn extreme(&self) -> Option<(usize, bool)> {
        match self.region {
            Region::SinglyExtreme(i) => Some((i, self.values[i] == 1.0)),
            _ => None,
        }
    }

    pub fn require_valid(&self) -> Result<()> {
        match self.region {
            Region::Invalid => Err(Error::InvalidRegion),
            _ => Ok(()),
        }
    }

    pub fn require_interior(&self) -> Result<()> {
        match self.region {
            Region::Interior => Ok(()),
            Region::Invalid => Err(Error::InvalidRegion),
            Region::SinglyExtreme(_) => Err(Error::NotInterior),
        }
    }

    pub(crate) fn require_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// One round of agent outputs, each entry `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct VerdictVector(Vec<i8>);

impl VerdictVector {
    pub fn new(verdicts: Vec<i8>) -> Result<Self> {
        if verdicts.is_empty() {
            return Err(Error::InvalidArgument("empty verdict vector".into()));
        }
        if let Some((index, &v)) = verdicts.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::BadVerdict {
                index,
                value: v as i64,
            });
        }
        Ok(Self(verdicts))
    }

    /// Verdict number `index` of the `2^n` enumeration: bit `i` set means
    /// `r_i = -1`.
    pub fn from_index(n: usize, index: usize) -> Self {
        Self((0..n).map(|i| verdict_sign(index, i) as i8).collect())
    }

    /// Inverse of [`VerdictVector::from_index`].
    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < 0)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    /// All `2^n` verdict vectors in index order.
    pub fn all(n: usize) -> impl Iterator<Item = VerdictVector> {
        (0..1usize << n).map(move |k| Self::from_index(n, k))
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub(crate) fn require_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.len(),
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn verdict_sign(index: usize, i: usize) -> f64 {
    if index >> i & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// A likelihood carrier that keeps infinities as tags instead of IEEE
/// infinities, so every consumer has to branch on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// `h(a, b) = ab + (1 - a)(1 - b)`: the probability that two independent
/// channels with crossover `a` and `b` agree.
pub fn h(a: f64, b: f64) -> f64 {
    a * b + (1.0 - a) * (1.0 - b)
}

/// Cross-entropy `H_a(x) = -a log x - (1 - a) log(1 - x)`.
///
/// A zero coefficient kills its term even when the log diverges; otherwise
/// `x ∈ {0, 1}` gives `PosInf`.
pub fn cross_entropy_term(a: f64, x: f64) -> ExtendedReal {
    let term = |coef: f64, p: f64| -> Option<f64> {
        if coef == 0.0 {
            Some(0.0)
        } else if p == 0.0 {
            None
        } else {
            Some(-coef * p.ln())
        }
    };
    match (term(a, x), term(1.0 - a, 1.0 - x)) {
        (Some(u), Some(v)) => ExtendedReal::Finite(u + v),
        _ => ExtendedReal::PosInf,
    }
}

/// Per-coordinate log-odds `log((1 - x_i) / x_i)`; `x_i = 0` maps to
/// `PosInf` and `x_i = 1` to `NegInf`.
pub fn log_odds(x: &UnreliabilityVector) -> Result<Vec<ExtendedReal>> {
    x.require_valid()?;
    Ok(x.values()
        .iter()
        .map(|&v| {
            if v == 0.0 {
                ExtendedReal::PosInf
            } else if v == 1.0 {
                ExtendedReal::NegInf
            } else {
                ExtendedReal::Finite(logit_complement(v))
            }
        })
        .collect())
}

#[inline]
pub(crate) fn logit_complement(v: f64) -> f64 {
    (1.0 - v).ln() - v.ln()
}

/// Log-odds of an interior vector as plain floats.
pub(crate) fn interior_log_odds(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| logit_complement(v)).collect()
}

/// `<r, l_x>` for an interior vector.
pub(crate) fn log_odds_dot(r: &[i8], ell: &[f64]) -> f64 {
    r.iter().zip(ell).map(|(&ri, &li)| ri as f64 * li).sum()
}

/// For singly-extreme `x` at index `i`, whether `r_i` matches `(-1)^{x_i}`,
/// the pattern for which the likelihood ratio is zero.
#[inline]
pub(crate) fn boundary_agrees(r_i: f64, at_one: bool) -> bool {
    let sigma = if at_one { -1.0 } else { 1.0 };
    r_i == sigma
}

/// Likelihood ratio `P(r | S = -1) / P(r | S = +1)` under parameters `x`.
///
/// Interior: `exp(-<r, l_x>)`. Singly-extreme at `i`: `0` when
/// `r_i = (-1)^{x_i}`, `PosInf` otherwise.
pub fn likelihood_ratio(r: &VerdictVector, x: &UnreliabilityVector) -> Result<ExtendedReal> {
    x.require_valid()?;
    r.require_len(x.len())?;
    if let Some((i, at_one)) = x.extreme() {
        return Ok(if boundary_agrees(r.get(i) as f64, at_one) {
            ExtendedReal::Finite(0.0)
        } else {
            ExtendedReal::PosInf
        });
    }
    let s = log_odds_dot(r.as_slice(), &interior_log_odds(x.values()));
    let l = (-s).exp();
    Ok(if l.is_infinite() {
        ExtendedReal::PosInf
    } else {
        ExtendedReal::Finite(l)
    })
}

/// `φ(x, r)`: probability that a channel with crossover `x` emits `r` when
/// the source is `+1`.
#[inline]
fn channel(x: f64, r: f64) -> f64 {
    if r > 0.0 {
        x
    } else {
        1.0 - x
    }
}

/// Half-sum product form `½(∏ φ(x_i, r_i) + ∏ φ(x_i, -r_i))`.
///
/// Valid on all of `[0, 1]^n` with the `0^0 = 1` convention built in.
pub fn output_prob_product(r: &VerdictVector, x: &UnreliabilityVector) -> Result<f64> {
    r.require_len(x.len())?;
    Ok(product_form(x.values(), |i| r.get(i) as f64))
}

fn product_form(x: &[f64], sign: impl Fn(usize) -> f64) -> f64 {
    let (mut plus, mut minus) = (1.0, 1.0);
    for (i, &xi) in x.iter().enumerate() {
        let s = sign(i);
        plus *= channel(xi, s);
        minus *= channel(xi, -s);
    }
    0.5 * (plus + minus)
}

/// Cosh form `cosh(<r, l_x>/2) · ∏ sqrt(x_i (1 - x_i))`, interior only.
pub fn output_prob_cosh(r: &VerdictVector, x: &UnreliabilityVector) -> Result<f64> {
    x.require_interior()?;
    r.require_len(x.len())?;
    let ell = interior_log_odds(x.values());
    let s = log_odds_dot(r.as_slice(), &ell);
    let log_scale: f64 = x.values().iter().map(|&v| 0.5 * (v * (1.0 - v)).ln()).sum();
    Ok((numeric::log_cosh(0.5 * s) + log_scale).exp())
}

/// Probability `g_x(r)` of observing `r` under parameters `x`.
///
/// Interior vectors use the product form; singly-extreme vectors use the
/// reduced product over the other agents.
pub fn output_prob(r: &VerdictVector, x: &UnreliabilityVector) -> Result<f64> {
    x.require_valid()?;
    r.require_len(x.len())?;
    match x.extreme() {
        None => Ok(product_form(x.values(), |i| r.get(i) as f64)),
        Some((i, at_one)) => Ok(boundary_prob(x.values(), i, at_one, |k| r.get(k) as f64)),
    }
}

/// Reduced product for `x` singly-extreme at `i`:
/// `½ ∏_{k≠i} φ(x_k, -r_k)` if `r_i = (-1)^{x_i}`, else `½ ∏_{k≠i} φ(x_k, r_k)`.
fn boundary_prob(x: &[f64], i: usize, at_one: bool, sign: impl Fn(usize) -> f64) -> f64 {
    let flip = if boundary_agrees(sign(i), at_one) {
        -1.0
    } else {
        1.0
    };
    0.5 * x
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(k, &xk)| channel(xk, flip * sign(k)))
        .product::<f64>()
}

/// `log g_x(r)` for the verdict with enumeration index `index`.
pub(crate) fn log_prob_indexed(x: &UnreliabilityVector, ell: &[f64], index: usize) -> f64 {
    match x.extreme() {
        None => {
            let s: f64 = ell
                .iter()
                .enumerate()
                .map(|(i, &l)| verdict_sign(index, i) * l)
                .sum();
            let log_scale: f64 = x.values().iter().map(|&v| 0.5 * (v * (1.0 - v)).ln()).sum();
            numeric::log_cosh(0.5 * s) + log_scale
        }
        Some((i, at_one)) => boundary_prob(x.values(), i, at_one, |k| verdict_sign(index, k)).ln(),
    }
}

pub(crate) fn check_cap(n: usize) -> Result<()> {
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// The full table `g_x(r)` over all `2^n` verdicts, indexed as in
/// [`VerdictVector::from_index`].
#[derive(Debug, Clone)]
pub struct OutputDistribution {
    n: usize,
    probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn new(x: &UnreliabilityVector) -> Result<Self> {
        x.require_valid()?;
        check_cap(x.len())?;
        let n = x.len();
        let probs = (0..1usize << n)
            .map(|k| match x.extreme() {
                None => product_form(x.values(), |i| verdict_sign(k, i)),
                Some((i, at_one)) => boundary_prob(x.values(), i, at_one, |j| verdict_sign(k, j)),
            })
            .collect();
        Ok(Self { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, r: &VerdictVector) -> f64 {
        self.probs[r.index()]
    }

    pub fn total(&self) -> f64 {
        numeric::neumaier_sum(self.probs.iter().copied())
    }
}

/// Largest absolute per-verdict gap `max_r |g_x(r) - g_pi(r)|`.
pub fn max_distribution_gap(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<f64> {
    x.require_len(pi.len())?;
    let gx = OutputDistribution::new(x)?;
    let gp = OutputDistribution::new(pi)?;
    Ok(gx
        .probs()
        .iter()
        .zip(gp.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Whether `x` and `pi` induce the same verdict distribution, checked
/// exhaustively over all `2^n` verdicts with an absolute per-verdict `tol`.
pub fn indistinguishable(x: &UnreliabilityVector, pi: &UnreliabilityVector, tol: f64) -> Result<bool> {
    x.require_interior()?;
    pi.require_interior()?;
    Ok(max_distribution_gap(x, pi)? <= tol)
}

/// Residuals `(½ - x_i)(½ - x_j) - (½ - pi_i)(½ - pi_j)` for all pairs
/// `i < j` in lexicographic order.
pub fn pairwise_constraint_residual(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<Vec<f64>> {
    x.require_len(pi.len())?;
    Ok(pair_residuals(x.values(), pi.values()))
}

fn pair_residuals(x: &[f64], pi: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((0.5 - x[i]) * (0.5 - x[j]) - (0.5 - pi[i]) * (0.5 - pi[j]));
        }
    }
    out
}

/// Zero set of [`pairwise_constraint_residual`] located by a grid scan of
/// `[0, 1]^n` and polished with Gauss-Newton.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualCensus {
    /// Distinct roots, each with its final `‖residual‖∞`.
    pub roots: Vec<(Vec<f64>, f64)>,
    /// Grid points whose residual fell under the scan threshold.
    pub grid_candidates: usize,
    pub clusters: usize,
}

/// Scans `[0, 1]^n` on a grid of spacing `step`, keeps points whose residuals
/// are all below `2·step`, clusters them, and polishes one representative
/// per cluster. Roots closer than `dedup` (∞-norm) are merged.
pub fn residual_zero_census(pi: &UnreliabilityVector, step: f64, dedup: f64) -> Result<ResidualCensus> {
    let n = pi.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two agents".into()));
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidArgument(format!("grid step {step} not in (0, 1)")));
    }
    let p = pi.values();
    let threshold = 2.0 * step;
    let ticks = (1.0 / step).round() as usize;
    let grid: Vec<f64> = (0..=ticks).map(|k| (k as f64 * step).min(1.0)).collect();

    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut point = vec![0.0; n];
    scan(&grid, p, threshold, 0, &mut point, &mut candidates);
    let grid_candidates = candidates.len();

    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cluster_radius = 10.0 * step;
    let mut representatives: Vec<Vec<f64>> = Vec::new();
    for (_, c) in candidates {
        if !representatives
            .iter()
            .any(|rep| numeric::max_abs_diff(rep, &c) <= cluster_radius)
        {
            representatives.push(c);
        }
    }
    let clusters = representatives.len();

    let mut roots: Vec<(Vec<f64>, f64)> = Vec::new();
    for rep in representatives {
        let (root, res) = polish_pair_residuals(rep, p);
        if res <= 1e-12 && !roots.iter().any(|(r, _)| numeric::max_abs_diff(r, &root) <= dedup) {
            roots.push((root, res));
        }
    }
    Ok(ResidualCensus {
        roots,
        grid_candidates,
        clusters,
    })
}

fn scan(grid: &[f64], pi: &[f64], threshold: f64, depth: usize, point: &mut [f64], out: &mut Vec<(f64, Vec<f64>)>) {
    let n = pi.len();
    if depth == n {
        let worst = pair_residuals(point, pi).iter().fold(0.0f64, |m, r| m.max(r.abs()));
        out.push((worst, point.to_vec()));
        return;
    }
    for &g in grid {
        point[depth] = g;
        let pruned = (0..depth).any(|i| {
            let r = (0.5 - point[i]) * (0.5 - g) - (0.5 - pi[i]) * (0.5 - pi[depth]);
            r.abs() > threshold
        });
        if !pruned {
            scan(grid, pi, threshold, depth + 1, point, out);
        }
    }
}

fn polish_pair_residuals(mut x: Vec<f64>, pi: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len();
    let m = n * (n - 1) / 2;
    for _ in 0..100 {
        let res = pair_residuals(&x, pi);
        let worst = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if worst < 1e-15 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m, n);
        let mut row = 0;
        for i in 0..n {
            for j in i + 1..n {
                jac[(row, i)] = -(0.5 - x[j]);
                jac[(row, j)] = -(0.5 - x[i]);
                row += 1;
            }
        }
        let rhs = -DVector::from_vec(res);
        let Ok(delta) = jac.svd(true, true).solve(&rhs, 1e-14) else {
            break;
        };
        if delta.amax() < 1e-17 {
            break;
        }
        for (xi, d) in x.iter_mut().zip(delta.iter()) {
            *xi += d;
        }
    }
    let worst = pair_residuals(&x, pi).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    (x, worst)
}
