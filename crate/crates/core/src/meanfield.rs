//! Mean-field vector field `f(x) = E_{R~g_π}[f̃(R, x)]`, its ODE flow and
//! the equilibrium census.
//!
//! Sign convention: `f_i = -x_i (1 - x_i) ∂V/∂x_i`, so `<∇V, f> ≤ 0`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::soft_update_boundary;
use crate::lyapunov::Lyapunov;
use crate::model::{check_cap, h, interior_log_odds, verdict_sign, OutputDistribution, UnreliabilityVector};
use crate::numeric::{euclidean, max_abs};

/// Mean field for a fixed `π`, with `g_π` tabulated once.
#[derive(Debug, Clone)]
pub struct MeanField {
    pi: UnreliabilityVector,
    g_pi: Vec<f64>,
}

impl MeanField {
    pub fn new(pi: &UnreliabilityVector) -> Result<Self> {
        pi.require_interior()?;
        check_cap(pi.len())?;
        let g_pi = OutputDistribution::new(pi)?.probs().to_vec();
        Ok(Self { pi: pi.clone(), g_pi })
    }

    pub fn pi(&self) -> &UnreliabilityVector {
        &self.pi
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    /// Exact sum over verdicts in the interior, closed form on the boundary.
    pub fn eval(&self, x: &UnreliabilityVector) -> Result<Vec<f64>> {
        x.require_valid()?;
        x.require_len(self.n())?;
        match x.extreme() {
            None => Ok(self.eval_interior(x.values())),
            Some(_) => self.boundary_closed_form(x),
        }
    }

    /// `Σ_r g_π(r) f̃(r, x)` by enumeration, for any valid `x`.
    pub fn eval_enumerated(&self, x: &UnreliabilityVector) -> Result<Vec<f64>> {
        x.require_valid()?;
        x.require_len(self.n())?;
        let Some((i, at_one)) = x.extreme() else {
            return Ok(self.eval_interior(x.values()));
        };
        let n = self.n();
        let mut acc = vec![0.0; n];
        let mut buf = vec![0.0; n];
        for (k, &g) in self.g_pi.iter().enumerate() {
            soft_update_boundary(|j| verdict_sign(k, j), x.values(), i, at_one, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += g * b;
            }
        }
        Ok(acc)
    }

    /// `f_i = 0`, `f_j = h(π_i, h(x_i, π_j)) - x_j` for `x` singly-extreme at `i`.
    pub fn boundary_closed_form(&self, x: &UnreliabilityVector) -> Result<Vec<f64>> {
        x.require_len(self.n())?;
        let (i, _) = x.extreme().ok_or(Error::InvalidArgument("expected a singly-extreme vector".into()))?;
        let (xv, pv) = (x.values(), self.pi.values());
        Ok((0..self.n())
            .map(|j| if j == i { 0.0 } else { h(pv[i], h(xv[i], pv[j])) - xv[j] })
            .collect())
    }

    /// `f` on raw interior coordinates, skipping validation.
    pub(crate) fn eval_interior(&self, x: &[f64]) -> Vec<f64> {
        let ell = interior_log_odds(x);
        let mut acc = vec![0.0; x.len()];
        for (k, &g) in self.g_pi.iter().enumerate() {
            let s: f64 = ell.iter().enumerate().map(|(i, &l)| verdict_sign(k, i) * l).sum();
            let w = g * (0.5 * s).tanh();
            for (i, a) in acc.iter_mut().enumerate() {
                *a += w * verdict_sign(k, i);
            }
        }
        acc.iter().zip(x).map(|(a, xi)| 0.5 - 0.5 * a - xi).collect()
    }

    /// `f` for a raw vector that is interior or singly-extreme.
    pub(crate) fn eval_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval(&UnreliabilityVector::new(x.to_vec())?)
    }
}

pub fn mean_field(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<Vec<f64>> {
    x.require_len(pi.len())?;
    MeanField::new(pi)?.eval(x)
}

/// The `2n` singly-extreme stationary points, ordered by agent and then
/// `x_i = 0` before `x_i = 1`:
/// `x_j = (1 - x_i) h(π_i, 1 - π_j) + x_i h(π_i, π_j)`.
pub fn boundary_equilibria(pi: &UnreliabilityVector) -> Result<Vec<UnreliabilityVector>> {
    pi.require_interior()?;
    let p = pi.values();
    let n = p.len();
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for xi in [0.0, 1.0] {
            let values = (0..n)
                .map(|j| if j == i { xi } else { (1.0 - xi) * h(p[i], 1.0 - p[j]) + xi * h(p[i], p[j]) })
                .collect();
            out.push(UnreliabilityVector::new(values)?);
        }
    }
    Ok(out)
}

/// Whether `|x_i - x_j| ≤ h(π_i, 1 - π_j) ≤ x_i + x_j` for every pair.
pub fn equilibrium_bounds_check(x: &[f64], pi: &[f64]) -> Result<bool> {
    equilibrium_bounds_check_with(x, pi, 0.0)
}

/// As [`equilibrium_bounds_check`] with both inequalities relaxed by `slack`.
pub fn equilibrium_bounds_check_with(x: &[f64], pi: &[f64], slack: f64) -> Result<bool> {
    if x.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            got: x.len(),
        });
    }
    let n = x.len();
    for i in 0..n {
        for j in i + 1..n {
            let b = h(pi[i], 1.0 - pi[j]);
            if (x[i] - x[j]).abs() > b + slack || b > x[i] + x[j] + slack {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Reference points for the census distance: `π`, `1 - π`, `½·1` and the
/// boundary equilibria. Completeness of this set is conjectural for
/// `n ≥ 4`, hence the name.
#[derive(Debug, Clone)]
pub struct Census {
    points: Vec<Vec<f64>>,
}

impl Census {
    pub fn new(pi: &UnreliabilityVector) -> Result<Self> {
        let mut points = vec![
            pi.values().to_vec(),
            pi.complement().into_values(),
            vec![0.5; pi.len()],
        ];
        points.extend(boundary_equilibria(pi)?.into_iter().map(UnreliabilityVector::into_values));
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Euclidean distance to the nearest census point.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.points.iter().map(|p| euclidean(p, x)).fold(f64::INFINITY, f64::min)
    }
}

pub fn census_distance(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<f64> {
    x.require_len(pi.len())?;
    Ok(Census::new(pi)?.distance(x.values()))
}

/// Coordinates of interior flows are kept in `[δ, 1 - δ]`.
pub const FLOW_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    pub step: f64,
    /// Number of coordinates pulled back into `[δ, 1 - δ]`.
    pub clamp_events: u64,
    /// Largest per-step increase of `V` seen (zero if `V` never rose).
    pub max_v_increase: f64,
}

impl FlowTrajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("flow always holds the initial sample")
    }

    /// CSV with header `s,x_1..x_n,V`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("V".into());
        writeln!(w, "{}", header.join(","))?;
        for sample in &self.samples {
            let mut row = vec![sample.s.to_string()];
            row.extend(sample.x.iter().map(|v| v.to_string()));
            row.push(sample.v.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-step RK4 for `ẋ = f(x)` over `[0, duration]`.
///
/// A singly-extreme start keeps its extreme coordinate fixed. Aborts with
/// [`Error::LyapunovIncrease`] if `V` rises by more than `1e-8 (1 + |V|)`
/// in one step.
pub fn ode_flow(x0: &UnreliabilityVector, pi: &UnreliabilityVector, duration: f64, step: f64) -> Result<FlowTrajectory> {
    x0.require_valid()?;
    x0.require_len(pi.len())?;
    if !(step > 0.0 && step.is_finite()) || !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("need step > 0 and duration >= 0, got {step}, {duration}")));
    }
    let field = MeanField::new(pi)?;
    let lyap = Lyapunov::new(pi)?;
    let fixed = x0.extreme().map(|(i, _)| i);
    let mut clamp_events = 0u64;
    let mut clamp = |x: &mut [f64]| {
        for (j, v) in x.iter_mut().enumerate() {
            if Some(j) == fixed {
                continue;
            }
            let c = v.clamp(FLOW_CLAMP, 1.0 - FLOW_CLAMP);
            if c != *v {
                clamp_events += 1;
                *v = c;
            }
        }
    };

    let steps = (duration / step).ceil() as u64;
    let mut x = x0.values().to_vec();
    clamp(&mut x);
    let mut v = lyap.value(&UnreliabilityVector::new(x.clone())?)?;
    let mut samples = vec![FlowSample { s: 0.0, x: x.clone(), v }];
    let mut max_v_increase = 0.0f64;
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    for m in 1..=steps {
        let dt = step.min(duration - (m - 1) as f64 * step);
        let k1 = field.eval_raw(&x)?;
        let mut y = axpy(&x, 0.5 * dt, &k1);
        clamp(&mut y);
        let k2 = field.eval_raw(&y)?;
        let mut y = axpy(&x, 0.5 * dt, &k2);
        clamp(&mut y);
        let k3 = field.eval_raw(&y)?;
        let mut y = axpy(&x, dt, &k3);
        clamp(&mut y);
        let k4 = field.eval_raw(&y)?;
        for j in 0..x.len() {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        clamp(&mut x);
        let next = lyap.value(&UnreliabilityVector::new(x.clone())?)?;
        let increase = next - v;
        let allowed = 1e-8 * (1.0 + v.abs());
        let s = if m == steps { duration } else { m as f64 * step };
        if increase > allowed {
            return Err(Error::LyapunovIncrease { time: s, increase, allowed });
        }
        max_v_increase = max_v_increase.max(increase);
        v = next;
        samples.push(FlowSample { s, x: x.clone(), v });
    }
    Ok(FlowTrajectory {
        samples,
        step,
        clamp_events,
        max_v_increase,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOptions {
    pub starts: usize,
    pub seed: u64,
    /// Damping of the fixed-point iteration `x ← x + α f(x)`.
    pub alpha: f64,
    pub max_iter: u64,
    /// Central-difference step for the Newton Jacobian.
    pub fd_step: f64,
    /// Points closer than this in the ∞-norm are merged.
    pub dedup: f64,
    pub residual_tol: f64,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            starts: 1000,
            seed: 0,
            alpha: 0.5,
            max_iter: 100_000,
            fd_step: 1e-6,
            dedup: 1e-6,
            residual_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorEquilibrium {
    pub x: Vec<f64>,
    pub residual: f64,
    /// Number of starts whose fixed-point iteration settled here. Zero for
    /// points reached only by Newton, such as saddles.
    pub basin: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MultistartMeta {
    pub starts: usize,
    /// Fixed-point runs that did not settle within the iteration budget.
    pub dropped: usize,
    /// Fixed-point runs that settled against the clamp at the boundary.
    pub boundary_bound: usize,
    /// Settled fixed-point runs whose Newton polish missed the tolerance.
    pub polish_failures: usize,
    /// Newton runs that failed to reach the residual tolerance.
    pub newton_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryEquilibrium {
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSet {
    pub interior: Vec<InteriorEquilibrium>,
    pub boundary: Vec<BoundaryEquilibrium>,
    pub meta: MultistartMeta,
}

impl EquilibriumSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Whether some interior point is within `tol` (∞-norm) of `x`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.interior.iter().any(|e| linf(&e.x, x) <= tol)
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Interior iterates stay this far from `{0, 1}`; settling closer counts
/// as boundary-bound.
const INTERIOR_MARGIN: f64 = 1e-6;
const ITER_CLAMP: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// Multistart census of interior zeros of `f`.
///
/// Each uniform start runs two routes: the damped fixed-point iteration,
/// which only finds attracting equilibria, and damped Newton directly from
/// the start, which also lands on saddles such as `½·1`. Settled points are
/// Newton-polished and kept if `‖f‖∞ ≤ residual_tol`. Never claims
/// completeness.
pub fn find_equilibria(pi: &UnreliabilityVector, options: &MultistartOptions) -> Result<EquilibriumSet> {
    pi.require_interior()?;
    if pi.len() > 8 {
        return Err(Error::InvalidArgument(format!("equilibrium search supports n <= 8, got {}", pi.len())));
    }
    let field = MeanField::new(pi)?;
    let n = pi.len();
    let mut meta = MultistartMeta {
        starts: options.starts,
        ..Default::default()
    };
    let mut found: Vec<InteriorEquilibrium> = Vec::new();
    let mut record = |x: Vec<f64>, residual: f64, attracted: bool| {
        if let Some(e) = found.iter_mut().find(|e| linf(&e.x, &x) <= options.dedup) {
            e.basin += usize::from(attracted);
            if residual < e.residual {
                e.x = x;
                e.residual = residual;
            }
        } else {
            found.push(InteriorEquilibrium {
                x,
                residual,
                basin: usize::from(attracted),
            });
        }
    };

    for k in 0..options.starts {
        let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
        rng.set_stream(k as u64);
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(INTERIOR_MARGIN..1.0 - INTERIOR_MARGIN)).collect();

        match fixed_point(&field, &start, options) {
            FixedPoint::Settled(x) if is_interior(&x) => match newton(&field, &x, options) {
                Some((x, r)) => record(x, r, true),
                None => meta.polish_failures += 1,
            },
            FixedPoint::Settled(_) => meta.boundary_bound += 1,
            FixedPoint::Dropped => meta.dropped += 1,
        }
        match newton(&field, &start, options) {
            Some((x, r)) => record(x, r, false),
            None => meta.newton_failures += 1,
        }
    }
    found.sort_by(|a, b| a.x.iter().zip(&b.x).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let boundary = boundary_equilibria(pi)?
        .into_iter()
        .map(|p| BoundaryEquilibrium { x: p.into_values() })
        .collect();
    Ok(EquilibriumSet {
        interior: found,
        boundary,
        meta,
    })
}

fn is_interior(x: &[f64]) -> bool {
    x.iter().all(|&v| v > INTERIOR_MARGIN && v < 1.0 - INTERIOR_MARGIN)
}

enum FixedPoint {
    Settled(Vec<f64>),
    Dropped,
}

fn fixed_point(field: &MeanField, start: &[f64], options: &MultistartOptions) -> FixedPoint {
    let mut x = start.to_vec();
    for _ in 0..options.max_iter {
        let f = field.eval_interior(&x);
        if max_abs(&f) <= 1e-9 {
            return FixedPoint::Settled(x);
        }
        for (xi, fi) in x.iter_mut().zip(&f) {
            *xi = (*xi + options.alpha * fi).clamp(ITER_CLAMP, 1.0 - ITER_CLAMP);
        }
    }
    FixedPoint::Dropped
}

/// Damped Newton with a central-difference Jacobian. Steps are shortened
/// to stay inside the open cube and backtracked until `‖f‖₂` decreases.
fn newton(field: &MeanField, start: &[f64], options: &MultistartOptions) -> Option<(Vec<f64>, f64)> {
    let n = start.len();
    let norm2 = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = start.to_vec();
    let mut f = field.eval_interior(&x);
    for _ in 0..NEWTON_MAX_ITER {
        if max_abs(&f) <= options.residual_tol {
            break;
        }
        let jac = fd_jacobian(field, &x, options.fd_step);
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let delta = jac
            .clone()
            .lu()
            .solve(&rhs)
            .or_else(|| jac.svd(true, true).solve(&rhs, 1e-14).ok())?;
        let mut lambda = 1.0f64;
        for (xi, di) in x.iter().zip(delta.iter()) {
            let target = xi + di;
            if target <= 0.0 {
                lambda = lambda.min(0.9 * xi / -di);
            } else if target >= 1.0 {
                lambda = lambda.min(0.9 * (1.0 - xi) / di);
            }
        }
        let current = norm2(&f);
        let mut accepted = false;
        while lambda > 1e-10 {
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(xi, di)| xi + lambda * di).collect();
            let ft = field.eval_interior(&trial);
            if norm2(&ft) < current {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = max_abs(&f);
    (residual <= options.residual_tol && is_interior(&x)).then_some((x, residual))
}

fn fd_jacobian(field: &MeanField, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let hj = step.min(0.5 * x[j]).min(0.5 * (1.0 - x[j]));
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[j] += hj;
        minus[j] -= hj;
        let (fp, fm) = (field.eval_interior(&plus), field.eval_interior(&minus));
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * hj);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::soft_update;
    use crate::model::VerdictVector;
    use approx::assert_abs_diff_eq;

    fn uv(v: &[f64]) -> UnreliabilityVector {
        UnreliabilityVector::new(v.to_vec()).unwrap()
    }

    fn pi3() -> UnreliabilityVector {
        uv(&[0.1, 0.2, 0.3])
    }

    #[test]
    fn known_zeros() {
        let pi = pi3();
        for x in [pi.clone(), pi.complement(), UnreliabilityVector::half(3), uv(&[0.0, 0.26, 0.34])] {
            let f = mean_field(&x, &pi).unwrap();
            assert!(max_abs(&f) < 1e-15, "{x:?}: {f:?}");
        }
    }

    #[test]
    fn enumeration_matches_direct_soft_update_sum() {
        let pi = uv(&[0.15, 0.4, 0.25, 0.35]);
        let g = OutputDistribution::new(&pi).unwrap();
        for x in [uv(&[0.3, 0.6, 0.2, 0.45]), uv(&[1.0, 0.6, 0.2, 0.45])] {
            let mut direct = vec![0.0; 4];
            for r in VerdictVector::all(4) {
                let ft = soft_update(&r, &x).unwrap();
                for (d, v) in direct.iter_mut().zip(&ft) {
                    *d += g.prob(&r) * v;
                }
            }
            let f = mean_field(&x, &pi).unwrap();
            for (a, b) in f.iter().zip(&direct) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn boundary_closed_form_matches_enumeration() {
        let pi = uv(&[0.1, 0.35, 0.2, 0.4]);
        let field = MeanField::new(&pi).unwrap();
        for x in [uv(&[0.3, 0.0, 0.7, 0.5]), uv(&[0.3, 0.6, 1.0, 0.1])] {
            let a = field.boundary_closed_form(&x).unwrap();
            let b = field.eval_enumerated(&x).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert_abs_diff_eq!(p, q, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn boundary_points() {
        let pts = boundary_equilibria(&pi3()).unwrap();
        assert_eq!(pts.len(), 6);
        let expect0 = [0.0, 0.26, 0.34];
        let expect1 = [1.0, 0.74, 0.66];
        for (a, b) in pts[0].values().iter().zip(&expect0) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        for (a, b) in pts[1].values().iter().zip(&expect1) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        for pair in pts.chunks(2) {
            for (a, b) in pair[0].values().iter().zip(pair[1].values()) {
                assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-15);
            }
        }
        let field = MeanField::new(&pi3()).unwrap();
        for p in &pts {
            assert!(max_abs(&field.eval(p).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn bounds_check() {
        let pi = pi3();
        assert!(equilibrium_bounds_check(pi.values(), pi.values()).unwrap());
        assert!(equilibrium_bounds_check(&[0.5; 3], pi.values()).unwrap());
        assert!(!equilibrium_bounds_check(&[0.99, 0.01, 0.5], pi.values()).unwrap());
        assert!(equilibrium_bounds_check(&[0.5; 2], pi.values()).is_err());
    }

    #[test]
    fn mean_field_antisymmetry() {
        let pi = uv(&[0.2, 0.3, 0.45]);
        let x = uv(&[0.1, 0.7, 0.4]);
        let f = mean_field(&x, &pi).unwrap();
        let g = mean_field(&x.complement(), &pi).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-14);
        }
    }

    #[test]
    fn flow_from_equilibrium_is_constant() {
        let pi = pi3();
        let traj = ode_flow(&pi, &pi, 5.0, 0.1).unwrap();
        assert_eq!(traj.samples.len(), 51);
        for s in &traj.samples {
            assert!(linf(&s.x, pi.values()) < 1e-14);
        }
    }

    #[test]
    fn flow_mirrors_and_descends() {
        let pi = pi3();
        let x0 = uv(&[0.11, 0.21, 0.31]);
        let a = ode_flow(&x0, &pi, 200.0, 0.05).unwrap();
        let b = ode_flow(&x0.complement(), &pi, 200.0, 0.05).unwrap();
        for (p, q) in a.samples.iter().zip(&b.samples) {
            assert!(p.x.iter().zip(&q.x).all(|(u, v)| (u + v - 1.0).abs() < 1e-12));
        }
        assert!(Census::new(&pi).unwrap().distance(&a.last().x) < 1e-4);
        assert!(a.samples.windows(2).all(|w| w[1].s > w[0].s));
    }

    #[test]
    fn boundary_flow_holds_extreme_coordinate() {
        let pi = pi3();
        let traj = ode_flow(&uv(&[0.0, 0.6, 0.6]), &pi, 50.0, 0.05).unwrap();
        let end = &traj.last().x;
        assert_eq!(end[0], 0.0);
        assert!(linf(end, &[0.0, 0.26, 0.34]) < 1e-6);
    }

    #[test]
    fn flow_csv_header() {
        let traj = ode_flow(&pi3(), &pi3(), 0.1, 0.1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("s,x_1,x_2,x_3,V\n0,"));
    }

    #[test]
    fn census_small() {
        let pi = pi3();
        let set = find_equilibria(
            &pi,
            &MultistartOptions {
                starts: 40,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(set.boundary.len(), 6);
        for target in [pi.values().to_vec(), pi.complement().into_values(), vec![0.5; 3]] {
            assert!(set.contains(&target, 1e-6), "missing {target:?} in {set:?}");
        }
        for e in &set.interior {
            assert!(e.residual <= 1e-10);
            assert!(equilibrium_bounds_check_with(&e.x, pi.values(), 1e-9).unwrap());
        }
        let json = set.to_json().unwrap();
        assert!(json.contains("\"interior\"") && json.contains("\"boundary\""));
    }
}
