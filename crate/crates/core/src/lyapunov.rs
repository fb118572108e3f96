//! The Lyapunov function `V(x) = KL(g_π ‖ g_x)` and its descent certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::{boundary_equilibria, equilibrium_bounds_check, MeanField};
use crate::model::{
    check_cap, cross_entropy_term, h, interior_log_odds, log_prob_indexed, ExtendedReal, OutputDistribution, Region,
    UnreliabilityVector,
};
use crate::numeric::neumaier_sum;

/// Central difference step for [`fd_gradient`].
pub const FD_STEP: f64 = 1e-6;
/// One-sided step used at an extreme coordinate.
pub const FD_STEP_ONE_SIDED: f64 = 1e-8;
/// `‖f‖∞` below which a point is reported as an equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `V` for a fixed `π`, with `log g_π` and `C_π` tabulated once.
#[derive(Debug, Clone)]
pub struct Lyapunov {
    pi: UnreliabilityVector,
    g_pi: Vec<f64>,
    log_g_pi: Vec<f64>,
    c_pi: f64,
}

impl Lyapunov {
    pub fn new(pi: &UnreliabilityVector) -> Result<Self> {
        pi.require_interior()?;
        check_cap(pi.len())?;
        let g_pi = OutputDistribution::new(pi)?.probs().to_vec();
        let ell = interior_log_odds(pi.values());
        let log_g_pi: Vec<f64> = (0..g_pi.len()).map(|k| log_prob_indexed(pi, &ell, k)).collect();
        let c_pi = sorted_sum(g_pi.iter().zip(&log_g_pi).map(|(g, l)| g * l).collect());
        Ok(Self {
            pi: pi.clone(),
            g_pi,
            log_g_pi,
            c_pi,
        })
    }

    pub fn pi(&self) -> &UnreliabilityVector {
        &self.pi
    }

    /// `C_π = E_{g_π}[log g_π]`, minus the entropy of `g_π`.
    pub fn c_pi(&self) -> f64 {
        self.c_pi
    }

    /// Exact KL sum in the interior, closed form on the boundary.
    pub fn value(&self, x: &UnreliabilityVector) -> Result<f64> {
        x.require_valid()?;
        x.require_len(self.pi.len())?;
        match x.extreme() {
            None => Ok(self.value_enumerated(x)),
            Some(_) => self.boundary_closed_form(x),
        }
    }

    /// KL sum over all verdicts for any valid `x`.
    pub fn value_enumerated(&self, x: &UnreliabilityVector) -> f64 {
        let ell = if x.extreme().is_none() {
            interior_log_odds(x.values())
        } else {
            Vec::new()
        };
        let terms = self
            .g_pi
            .iter()
            .zip(&self.log_g_pi)
            .enumerate()
            .map(|(k, (g, lg))| g * (lg - log_prob_indexed(x, &ell, k)))
            .collect();
        // KL is non-negative; only rounding can push the sum below zero.
        sorted_sum(terms).max(0.0)
    }

    /// `C_π + log 2 + Σ_{k≠i} H_{h(π_i, π_k)}(h(x_i, x_k))` for `x`
    /// singly-extreme at `i`.
    pub fn boundary_closed_form(&self, x: &UnreliabilityVector) -> Result<f64> {
        let (i, _) = x
            .extreme()
            .ok_or(Error::InvalidArgument("expected a singly-extreme vector".into()))?;
        let (p, xv) = (self.pi.values(), x.values());
        let mut total = self.c_pi + std::f64::consts::LN_2;
        for k in (0..p.len()).filter(|&k| k != i) {
            match cross_entropy_term(h(p[i], p[k]), h(xv[i], xv[k])) {
                ExtendedReal::Finite(v) => total += v,
                _ => return Ok(f64::INFINITY),
            }
        }
        Ok(total.max(0.0))
    }

    /// Infimum of `V` over the face `x_i ∈ {0, 1}`, attained where
    /// `h(x_i, x_k) = h(π_i, π_k)`.
    pub fn boundary_minimum(&self, i: usize) -> f64 {
        let p = self.pi.values();
        let mut total = self.c_pi + std::f64::consts::LN_2;
        for k in (0..p.len()).filter(|&k| k != i) {
            let a = h(p[i], p[k]);
            total += cross_entropy_term(a, a).finite().unwrap_or(0.0);
        }
        total
    }
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    neumaier_sum(terms)
}

pub fn lyapunov_value(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<f64> {
    Lyapunov::new(pi)?.value(x)
}

pub fn c_pi(pi: &UnreliabilityVector) -> Result<f64> {
    Ok(Lyapunov::new(pi)?.c_pi())
}

/// `∂V/∂x_i = -f_i / (x_i (1 - x_i))`.
///
/// At a singly-extreme `x` the extreme coordinate has no closed form and
/// is filled with an inward one-sided difference of step `1e-8`.
pub fn lyapunov_gradient(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<Vec<f64>> {
    x.require_valid()?;
    let f = MeanField::new(pi)?.eval(x)?;
    let mut grad: Vec<f64> = f
        .iter()
        .zip(x.values())
        .map(|(fi, xi)| -fi / (xi * (1.0 - xi)))
        .collect();
    if let Some((i, _)) = x.extreme() {
        grad[i] = one_sided(&Lyapunov::new(pi)?, x, i)?;
    }
    Ok(grad)
}

fn one_sided(lyap: &Lyapunov, x: &UnreliabilityVector, i: usize) -> Result<f64> {
    let mut moved = x.values().to_vec();
    let dir = if moved[i] == 0.0 { 1.0 } else { -1.0 };
    moved[i] += dir * FD_STEP_ONE_SIDED;
    let v0 = lyap.value(x)?;
    let v1 = lyap.value(&UnreliabilityVector::new(moved)?)?;
    Ok(dir * (v1 - v0) / FD_STEP_ONE_SIDED)
}

/// Finite-difference gradient of `V`: central with step `step` on
/// non-extreme coordinates, one-sided at an extreme one.
pub fn fd_gradient(x: &UnreliabilityVector, pi: &UnreliabilityVector, step: f64) -> Result<Vec<f64>> {
    x.require_valid()?;
    let lyap = Lyapunov::new(pi)?;
    let extreme = x.extreme().map(|(i, _)| i);
    (0..x.len())
        .map(|j| {
            if Some(j) == extreme {
                return one_sided(&lyap, x, j);
            }
            let mut plus = x.values().to_vec();
            let mut minus = plus.clone();
            plus[j] += step;
            minus[j] -= step;
            let vp = lyap.value(&UnreliabilityVector::new(plus)?)?;
            let vm = lyap.value(&UnreliabilityVector::new(minus)?)?;
            Ok((vp - vm) / (2.0 * step))
        })
        .collect()
}

/// Relative error of a gradient component against a reference.
///
/// The denominator is floored at `1e-4`: near-zero components carry about
/// `1e-10` of finite-difference rounding noise, which would otherwise
/// dominate the ratio.
pub fn gradient_relative_error(closed: f64, reference: f64) -> f64 {
    (closed - reference).abs() / closed.abs().max(reference.abs()).max(1e-4)
}

/// `<∇V, f> = -Σ f_i² / (x_i (1 - x_i))`; an extreme coordinate contributes 0.
pub fn descent_value(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<f64> {
    let f = MeanField::new(pi)?.eval(x)?;
    Ok(descent_from_field(x, &f))
}

pub(crate) fn descent_from_field(x: &UnreliabilityVector, f: &[f64]) -> f64 {
    let extreme = x.extreme().map(|(i, _)| i);
    -f.iter()
        .zip(x.values())
        .enumerate()
        .filter(|&(i, _)| Some(i) != extreme)
        .map(|(_, (fi, xi))| fi * fi / (xi * (1.0 - xi)))
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelConstants {
    pub m_min: f64,
    /// Per agent, the infimum of `V` over the face where that agent is extreme.
    pub boundary_minima: Vec<f64>,
    /// `V` at each boundary equilibrium, in [`boundary_equilibria`] order.
    pub boundary_equilibrium_values: Vec<f64>,
}

pub fn level_constants(pi: &UnreliabilityVector) -> Result<LevelConstants> {
    let lyap = Lyapunov::new(pi)?;
    let boundary_minima: Vec<f64> = (0..pi.len()).map(|i| lyap.boundary_minimum(i)).collect();
    let m_min = boundary_minima.iter().copied().fold(f64::INFINITY, f64::min);
    let boundary_equilibrium_values = boundary_equilibria(pi)?
        .iter()
        .map(|p| lyap.value(p))
        .collect::<Result<_>>()?;
    Ok(LevelConstants {
        m_min,
        boundary_minima,
        boundary_equilibrium_values,
    })
}

/// Computable stand-in for the existential level bound: the largest `V`
/// among `samples` uniform interior points that satisfy the pairwise
/// equilibrium bounds. A lower estimate of the true supremum.
pub fn set_a_sup_surrogate(pi: &UnreliabilityVector, samples: usize, seed: u64) -> Result<f64> {
    let lyap = Lyapunov::new(pi)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..pi.len()).map(|_| rng.gen_range(1e-9..1.0 - 1e-9)).collect();
        if equilibrium_bounds_check(&x, pi.values())? {
            best = best.max(lyap.value(&UnreliabilityVector::interior(x)?)?);
        }
    }
    Ok(best)
}

/// Interior points `x^(k)` with `x_i = 10^-k` and the remaining coordinates
/// at the minimiser of the `x_i = 0` face. `V(x^(k))` tends to the face
/// minimum, so every sublevel set above it reaches the boundary.
pub fn sublevel_escape_sequence(pi: &UnreliabilityVector, i: usize, depth: u32) -> Result<Vec<(Vec<f64>, f64)>> {
    if i >= pi.len() {
        return Err(Error::InvalidArgument(format!("agent index {i} out of range")));
    }
    let lyap = Lyapunov::new(pi)?;
    let face = &boundary_equilibria(pi)?[2 * i];
    (1..=depth)
        .map(|k| {
            let mut x = face.values().to_vec();
            x[i] = 10f64.powi(-(k as i32));
            let v = lyap.value(&UnreliabilityVector::interior(x.clone())?)?;
            Ok((x, v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub x: Vec<f64>,
    #[serde(rename = "V")]
    pub v: f64,
    pub gradient: Vec<f64>,
    pub descent: f64,
    pub region: Region,
    pub equilibrium: bool,
}

pub fn report(x: &UnreliabilityVector, pi: &UnreliabilityVector) -> Result<LyapunovReport> {
    let f = MeanField::new(pi)?.eval(x)?;
    Ok(LyapunovReport {
        x: x.values().to_vec(),
        v: lyapunov_value(x, pi)?,
        gradient: lyapunov_gradient(x, pi)?,
        descent: descent_from_field(x, &f),
        region: x.region(),
        equilibrium: crate::numeric::max_abs(&f) <= RESIDUAL_TOL,
    })
}
