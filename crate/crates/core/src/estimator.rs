//! The online unreliability estimator.
//!
//! Each round the estimate moves toward the soft label
//! `½(1 + ((L - 1)/(L + 1)) r_i)`, where `L` is the likelihood ratio of the
//! round's verdicts under the current estimate:
//!
//! ```text
//! P(t+1) = P(t) + η_t f̃(R(t+1), P(t)),   f̃_i(r, x) = ½(1 - tanh(<r, l_x>/2) r_i) - x_i
//! ```
//!
//! The truncated variant keeps the estimate inside a growing family of
//! compact sets `K_0 ⊆ K_1 ⊆ ...`; a step that would leave the active set
//! `K_γ` is replaced by a reset to `P₀` and the counter `γ` increments.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{boundary_agrees, interior_log_odds, log_odds_dot, UnreliabilityVector, VerdictVector};

/// Soft update `f̃(r, x)`.
///
/// Interior points use the tanh form in log-odds space. For `x`
/// singly-extreme at `i` the ratio `(L - 1)/(L + 1)` is `-1` when
/// `r_i = (-1)^{x_i}` and `+1` otherwise, which leaves coordinate `i`
/// stationary.
pub fn soft_update(r: &VerdictVector, x: &UnreliabilityVector) -> Result<Vec<f64>> {
    x.require_valid()?;
    r.require_len(x.len())?;
    let mut out = vec![0.0; x.len()];
    match x.extreme() {
        None => {
            let ell = interior_log_odds(x.values());
            soft_update_interior(|i| r.get(i) as f64, x.values(), &ell, &mut out);
        }
        Some((i, at_one)) => soft_update_boundary(|k| r.get(k) as f64, x.values(), i, at_one, &mut out),
    }
    Ok(out)
}

#[inline]
pub(crate) fn soft_update_interior(sign: impl Fn(usize) -> f64, x: &[f64], ell: &[f64], out: &mut [f64]) {
    let s: f64 = ell.iter().enumerate().map(|(i, &l)| sign(i) * l).sum();
    let t = (0.5 * s).tanh();
    for (i, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
        *o = 0.5 * (1.0 - t * sign(i)) - xi;
    }
}

#[inline]
pub(crate) fn soft_update_boundary(sign: impl Fn(usize) -> f64, x: &[f64], i: usize, at_one: bool, out: &mut [f64]) {
    let ratio = if boundary_agrees(sign(i), at_one) { -1.0 } else { 1.0 };
    for (k, (o, &xk)) in out.iter_mut().zip(x).enumerate() {
        *o = if k == i { 0.0 } else { 0.5 * (1.0 + ratio * sign(k)) - xk };
    }
}

/// `f̃` through the raw ratio `(L - 1)/(L + 1)` with `L = exp(-<r, l_x>)`.
///
/// Independent route for cross-checking [`soft_update`]; interior only, and
/// only meaningful while `L` is representable.
pub fn soft_update_ratio_form(r: &VerdictVector, x: &UnreliabilityVector) -> Result<Vec<f64>> {
    x.require_interior()?;
    r.require_len(x.len())?;
    let l: f64 = x
        .values()
        .iter()
        .zip(r.as_slice())
        .map(|(&xi, &ri)| (xi / (1.0 - xi)).powi(ri as i32))
        .product();
    let ratio = (l - 1.0) / (l + 1.0);
    Ok(x.values()
        .iter()
        .zip(r.as_slice())
        .map(|(&xi, &ri)| 0.5 * (1.0 + ratio * ri as f64) - xi)
        .collect())
}

/// Source label estimate: `+1` iff `L(r, x) < 1`, i.e. `<r, l_x> > 0`.
/// A tie `L = 1` returns `-1`.
pub fn label_estimate(r: &VerdictVector, x: &UnreliabilityVector) -> Result<i8> {
    x.require_valid()?;
    r.require_len(x.len())?;
    if let Some((i, at_one)) = x.extreme() {
        return Ok(if boundary_agrees(r.get(i) as f64, at_one) { 1 } else { -1 });
    }
    let s = log_odds_dot(r.as_slice(), &interior_log_odds(x.values()));
    Ok(if s > 0.0 { 1 } else { -1 })
}

/// Step-size sequence `η_t`.
#[derive(Clone)]
pub enum StepSchedule {
    /// `η_t = 1 / (t + offset)`.
    Harmonic { offset: f64 },
    /// `η_t = scale · (t + 1)^(-exponent)`.
    PowerLaw { exponent: f64, scale: f64 },
    Custom {
        eta: Arc<dyn Fn(u64) -> f64 + Send + Sync>,
        description: String,
    },
}

impl StepSchedule {
    /// `η_t = 1/(t + 1)`.
    pub fn harmonic() -> Self {
        StepSchedule::Harmonic { offset: 1.0 }
    }

    pub fn harmonic_with_offset(offset: f64) -> Result<Self> {
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::Schedule(format!("harmonic offset {offset} must be positive")));
        }
        Ok(StepSchedule::Harmonic { offset })
    }

    /// Power law with exponent in `(½, 1]`.
    pub fn power_law(exponent: f64, scale: f64) -> Result<Self> {
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::Schedule(format!("power-law exponent {exponent} not in (1/2, 1]")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Schedule(format!("power-law scale {scale} must be positive")));
        }
        Ok(StepSchedule::PowerLaw { exponent, scale })
    }

    pub fn custom(description: impl Into<String>, eta: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        StepSchedule::Custom {
            eta: Arc::new(eta),
            description: description.into(),
        }
    }

    pub fn eta(&self, t: u64) -> f64 {
        match self {
            StepSchedule::Harmonic { offset } => 1.0 / (t as f64 + offset),
            StepSchedule::PowerLaw { exponent, scale } => scale * (t as f64 + 1.0).powf(-exponent),
            StepSchedule::Custom { eta, .. } => eta(t),
        }
    }

    pub fn description(&self) -> String {
        match self {
            StepSchedule::Harmonic { offset } => format!("harmonic: 1/(t+{offset})"),
            StepSchedule::PowerLaw { exponent, scale } => format!("power: {scale}*(t+1)^-{exponent}"),
            StepSchedule::Custom { description, .. } => description.clone(),
        }
    }
}

impl fmt::Debug for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("StepSchedule").field(&self.description()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScheduleCondition {
    Positive,
    NonIncreasing,
    DivergentSum,
    SquareSummable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleFailure {
    pub condition: ScheduleCondition,
    /// First offending index for pointwise conditions; start of the tail
    /// block for the sum conditions.
    pub index: u64,
    pub detail: String,
}

/// Finite-horizon thresholds for the sum conditions.
///
/// Divergence of `Σ η_t` and summability of `Σ η_t²` cannot be decided from a
/// finite prefix, so both are judged from the partial sums and from the ratio
/// of the last two dyadic blocks `(T/2, T]` and `(T/4, T/2]`. A p-series
/// `t^-p` has block ratio `2^(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCheck {
    /// Minimum `Σ η_t`; `None` uses `½ ln(T + 1)`.
    pub growth_floor: Option<f64>,
    pub divergent_ratio_min: f64,
    pub square_ratio_max: f64,
}

impl Default for ScheduleCheck {
    fn default() -> Self {
        Self {
            growth_floor: None,
            divergent_ratio_min: 0.98,
            square_ratio_max: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub horizon: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_block_ratio: f64,
    pub sum_sq_block_ratio: f64,
    /// Increment of `Σ η_t²` over the final dyadic block.
    pub sum_sq_tail: f64,
    pub failures: Vec<ScheduleFailure>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failed(&self, condition: ScheduleCondition) -> Option<&ScheduleFailure> {
        self.failures.iter().find(|f| f.condition == condition)
    }
}

pub fn validate_schedule(schedule: &StepSchedule, horizon: u64) -> ScheduleReport {
    validate_schedule_with(schedule, horizon, &ScheduleCheck::default())
}

pub fn validate_schedule_with(schedule: &StepSchedule, horizon: u64, check: &ScheduleCheck) -> ScheduleReport {
    let mut failures = Vec::new();
    let quarter = horizon / 4;
    let half = horizon / 2;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let (mut b1, mut b2, mut q1, mut q2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut prev = f64::INFINITY;
    let mut positive_ok = true;
    let mut monotone_ok = true;
    for t in 0..=horizon {
        let eta = schedule.eta(t);
        if positive_ok && !(eta > 0.0) {
            positive_ok = false;
            failures.push(ScheduleFailure {
                condition: ScheduleCondition::Positive,
                index: t,
                detail: format!("eta_{t} = {eta}"),
            });
        }
        if monotone_ok && eta > prev {
            monotone_ok = false;
            failures.push(ScheduleFailure {
                condition: ScheduleCondition::NonIncreasing,
                index: t,
                detail: format!("eta_{t} = {eta} > eta_{} = {prev}", t - 1),
            });
        }
        prev = eta;
        sum += eta;
        sum_sq += eta * eta;
        if t > half {
            b2 += eta;
            q2 += eta * eta;
        } else if t > quarter {
            b1 += eta;
            q1 += eta * eta;
        }
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::NAN };
    let sum_block_ratio = ratio(b2, b1);
    let sum_sq_block_ratio = ratio(q2, q1);
    let floor = check
        .growth_floor
        .unwrap_or_else(|| 0.5 * ((horizon + 1) as f64).ln());

    if horizon < 8 {
        failures.push(ScheduleFailure {
            condition: ScheduleCondition::DivergentSum,
            index: horizon,
            detail: "horizon too short to judge the sum conditions".into(),
        });
    } else {
        if !(sum >= floor && sum_block_ratio >= check.divergent_ratio_min) {
            failures.push(ScheduleFailure {
                condition: ScheduleCondition::DivergentSum,
                index: half + 1,
                detail: format!(
                    "sum {sum} (floor {floor}), tail block ratio {sum_block_ratio} (min {})",
                    check.divergent_ratio_min
                ),
            });
        }
        if !(sum_sq_block_ratio <= check.square_ratio_max) {
            failures.push(ScheduleFailure {
                condition: ScheduleCondition::SquareSummable,
                index: half + 1,
                detail: format!(
                    "non-summable tail: squared block ratio {sum_sq_block_ratio} (max {}), tail increment {q2}",
                    check.square_ratio_max
                ),
            });
        }
    }
    ScheduleReport {
        horizon,
        sum,
        sum_sq,
        sum_block_ratio,
        sum_sq_block_ratio,
        sum_sq_tail: q2,
        failures,
    }
}

/// Truncation sets `K_q = ∪_i {x : |x_j - ½| ≤ r_q for all j ≠ i}` with
/// radius `r_q = ½ - c (q + 1)^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationFamily {
    c: f64,
    exponent: f64,
}

impl Default for TruncationFamily {
    /// `c = ¼`, exponent `½`, so `r_0 = ¼`.
    fn default() -> Self {
        Self { c: 0.25, exponent: 0.5 }
    }
}

impl TruncationFamily {
    pub fn new(c: f64, exponent: f64) -> Result<Self> {
        if !(c > 0.0 && c < 0.5) {
            return Err(Error::Truncation(format!("c = {c} not in (0, 1/2)")));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::Truncation(format!("exponent {exponent} must be positive")));
        }
        Ok(Self { c, exponent })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn radius(&self, q: u64) -> f64 {
        0.5 - self.c * (q as f64 + 1.0).powf(-self.exponent)
    }

    /// Whether at most one coordinate of `x` deviates from ½ by more than `r_q`.
    pub fn contains(&self, q: u64, x: &[f64]) -> bool {
        let r = self.radius(q);
        x.iter().filter(|&&v| (v - 0.5).abs() > r).count() <= 1
    }

    /// Smallest `q` with `x ∈ K_q`, or `None` when two coordinates are
    /// extreme (no member of the family contains `x`).
    pub fn min_level(&self, x: &[f64]) -> Option<u64> {
        let mut dev: Vec<f64> = x.iter().map(|v| (v - 0.5).abs()).collect();
        dev.sort_by(|a, b| b.total_cmp(a));
        let second = dev.get(1).copied().unwrap_or(0.0);
        if second >= 0.5 {
            return None;
        }
        if second <= self.radius(0) {
            return Some(0);
        }
        let need = (self.c / (0.5 - second)).powf(1.0 / self.exponent);
        if !(need < 1e18) {
            return None;
        }
        let mut q = (need.ceil() as u64).saturating_sub(1);
        while !self.contains(q, x) {
            q += 1;
        }
        while q > 0 && self.contains(q - 1, x) {
            q -= 1;
        }
        Some(q)
    }
}

/// `P₀_i = ½ - 0.05 · i/n` for `i = 1..n`; a slight tilt off the centroid,
/// which is itself a mean-field equilibrium.
pub fn default_reset_point(n: usize) -> UnreliabilityVector {
    let values = (1..=n).map(|i| 0.5 - 0.05 * i as f64 / n as f64).collect();
    UnreliabilityVector::interior(values).expect("tilted centroid is interior")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetEvent {
    /// Index of the estimate that was replaced by `P₀`.
    pub t: u64,
    /// The rejected candidate.
    pub y: Vec<f64>,
    pub gamma_after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub reset: bool,
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    estimate: UnreliabilityVector,
    t: u64,
    gamma: u64,
    schedule: StepSchedule,
    family: TruncationFamily,
    reset_point: UnreliabilityVector,
    reset_log: Vec<ResetEvent>,
    correction_log: Option<Vec<Vec<f64>>>,
}

impl EstimatorState {
    /// Starts at `P(0) = P₀`. Rejects `P₀ ∉ K_0` and schedules with `η_0 > 1`.
    pub fn new(schedule: StepSchedule, family: TruncationFamily, reset_point: UnreliabilityVector) -> Result<Self> {
        reset_point.require_valid()?;
        if !family.contains(0, reset_point.values()) {
            return Err(Error::Truncation("reset point is not in K_0".into()));
        }
        let eta0 = schedule.eta(0);
        if eta0 > 1.0 {
            return Err(Error::StepTooLarge { t: 0, eta: eta0 });
        }
        Ok(Self {
            estimate: reset_point.clone(),
            t: 0,
            gamma: 0,
            schedule,
            family,
            reset_point,
            reset_log: Vec::new(),
            correction_log: None,
        })
    }

    /// Overrides `P(0)`. The override must lie in `K_0`.
    pub fn with_initial_estimate(mut self, initial: UnreliabilityVector) -> Result<Self> {
        initial.require_valid()?;
        initial.require_len(self.reset_point.len())?;
        if !self.family.contains(0, initial.values()) {
            return Err(Error::Truncation("initial estimate is not in K_0".into()));
        }
        self.estimate = initial;
        Ok(self)
    }

    /// Keep the reset correction `Z(t+1)` of every truncated step.
    pub fn with_correction_log(mut self) -> Self {
        self.correction_log = Some(Vec::new());
        self
    }

    pub fn estimate(&self) -> &UnreliabilityVector {
        &self.estimate
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn gamma(&self) -> u64 {
        self.gamma
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn family(&self) -> &TruncationFamily {
        &self.family
    }

    pub fn reset_point(&self) -> &UnreliabilityVector {
        &self.reset_point
    }

    pub fn reset_log(&self) -> &[ResetEvent] {
        &self.reset_log
    }

    pub fn correction_log(&self) -> Option<&[Vec<f64>]> {
        self.correction_log.as_deref()
    }

    fn candidate(&self, r: &VerdictVector) -> Result<(f64, Vec<f64>)> {
        let eta = self.schedule.eta(self.t);
        if eta > 1.0 {
            return Err(Error::StepTooLarge { t: self.t, eta });
        }
        let drift = soft_update(r, &self.estimate)?;
        let y = self
            .estimate
            .values()
            .iter()
            .zip(&drift)
            // (1-η)P + η·label is a convex combination; clamp the last-ulp
            // rounding back into [0, 1].
            .map(|(p, d)| (p + eta * d).clamp(0.0, 1.0))
            .collect();
        Ok((eta, y))
    }

    /// `P(t+1) = P(t) + η_t f̃(r, P(t))` with no truncation.
    pub fn step_plain(&mut self, r: &VerdictVector) -> Result<()> {
        let (_, y) = self.candidate(r)?;
        self.estimate = UnreliabilityVector::new(y)?;
        self.t += 1;
        Ok(())
    }

    /// Truncated step: accept the candidate if it lies in `K_γ`, otherwise
    /// reset to `P₀` and increment `γ`.
    pub fn step_truncated(&mut self, r: &VerdictVector) -> Result<StepOutcome> {
        let (eta, y) = self.candidate(r)?;
        let reset = !self.family.contains(self.gamma, &y);
        if let Some(log) = self.correction_log.as_mut() {
            let z = if reset {
                self.reset_point
                    .values()
                    .iter()
                    .zip(&y)
                    .map(|(p0, yi)| (p0 - yi) / eta)
                    .collect()
            } else {
                vec![0.0; y.len()]
            };
            log.push(z);
        }
        if reset {
            self.gamma += 1;
            self.reset_log.push(ResetEvent {
                t: self.t + 1,
                y,
                gamma_after: self.gamma,
            });
            self.estimate = self.reset_point.clone();
        } else {
            self.estimate = UnreliabilityVector::new(y)?;
        }
        self.t += 1;
        Ok(StepOutcome { reset })
    }
}

/// Recursive add-β update `Q_i ← (1 - ν_t) Q_i + ν_t 1{r_i ≠ s}`,
/// `ν_t = 1/(t + 1 + 2β)`. Needs the true label, so it is a diagnostic
/// baseline only.
pub fn oracle_add_beta(q: &[f64], s_true: i8, r: &VerdictVector, t: u64, beta: f64) -> Vec<f64> {
    let nu = 1.0 / (t as f64 + 1.0 + 2.0 * beta);
    q.iter()
        .zip(r.as_slice())
        .map(|(&qi, &ri)| (1.0 - nu) * qi + nu * if ri != s_true { 1.0 } else { 0.0 })
        .collect()
}

/// Closed form `(β + errors) / (t + 2β)`.
pub fn add_beta_batch(errors: u64, t: u64, beta: f64) -> f64 {
    (beta + errors as f64) / (t as f64 + 2.0 * beta)
}

/// Stateful wrapper around [`oracle_add_beta`] starting from `Q(0) = ½·1`.
#[derive(Debug, Clone)]
pub struct AddBetaEstimator {
    q: Vec<f64>,
    t: u64,
    beta: f64,
}

impl AddBetaEstimator {
    pub fn new(n: usize, beta: f64) -> Self {
        Self {
            q: vec![0.5; n],
            t: 0,
            beta,
        }
    }

    pub fn update(&mut self, s_true: i8, r: &VerdictVector) {
        self.q = oracle_add_beta(&self.q, s_true, r, self.t, self.beta);
        self.t += 1;
    }

    pub fn estimate(&self) -> &[f64] {
        &self.q
    }

    pub fn t(&self) -> u64 {
        self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Truncated,
    Plain,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub lyapunov: Option<f64>,
    pub dist_pi: Option<f64>,
    pub dist_complement: Option<f64>,
    pub dist_half: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub estimate: Vec<f64>,
    pub gamma: u64,
    pub reset: bool,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub n: usize,
    pub records: Vec<TrajectoryRecord>,
    pub resets: Vec<ResetEvent>,
    /// The stream ran out before the horizon.
    pub truncated: bool,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory always holds the initial record")
    }

    pub fn last_reset(&self) -> Option<u64> {
        self.resets.last().map(|e| e.t)
    }

    /// CSV with header `t,P_1..P_n,gamma,reset,V,dist_pi,dist_1mpi,dist_half`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n).map(|i| format!("P_{i}")));
        header.extend(["gamma", "reset", "V", "dist_pi", "dist_1mpi", "dist_half"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for rec in &self.records {
            let mut row = vec![rec.t.to_string()];
            row.extend(rec.estimate.iter().map(|v| v.to_string()));
            row.push(rec.gamma.to_string());
            row.push(u8::from(rec.reset).to_string());
            let d = rec.diagnostics.clone().unwrap_or_default();
            row.extend([d.lyapunov, d.dist_pi, d.dist_complement, d.dist_half].map(opt));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// One JSON object per reset: `{"t":..,"y":[..],"gamma_after":..}`.
    pub fn write_resets_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for event in &self.resets {
            serde_json::to_writer(&mut w, event)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub horizon: u64,
    pub mode: Mode,
    /// Record every `cadence` steps (plus every reset and the final step).
    pub cadence: u64,
}

impl RunOptions {
    /// Default cadence `⌈T / 10^4⌉`.
    pub fn new(horizon: u64, mode: Mode) -> Self {
        Self {
            horizon,
            mode,
            cadence: default_cadence(horizon),
        }
    }
}

pub fn default_cadence(horizon: u64) -> u64 {
    horizon.div_ceil(10_000).max(1)
}

pub type Probe<'a> = &'a dyn Fn(&UnreliabilityVector) -> Diagnostics;

/// Advances `state` for up to `options.horizon` steps, pulling one verdict
/// vector per step from `stream`.
pub fn run<I>(state: &mut EstimatorState, options: &RunOptions, stream: I, probe: Option<Probe<'_>>) -> Result<Trajectory>
where
    I: IntoIterator<Item = VerdictVector>,
{
    if options.cadence == 0 {
        return Err(Error::InvalidArgument("cadence must be at least 1".into()));
    }
    let n = state.estimate.len();
    let record = |state: &EstimatorState, reset: bool| TrajectoryRecord {
        t: state.t,
        estimate: state.estimate.values().to_vec(),
        gamma: state.gamma,
        reset,
        diagnostics: probe.map(|p| p(&state.estimate)),
    };
    let mut records = vec![record(state, false)];
    let resets_before = state.reset_log.len();
    let mut stream = stream.into_iter();
    let mut truncated = false;
    for step in 1..=options.horizon {
        let Some(r) = stream.next() else {
            truncated = true;
            break;
        };
        let reset = match options.mode {
            Mode::Plain => {
                state.step_plain(&r)?;
                false
            }
            Mode::Truncated => state.step_truncated(&r)?.reset,
        };
        if reset || step % options.cadence == 0 || step == options.horizon {
            records.push(record(state, reset));
        }
    }
    if truncated && records.last().map(|r| r.t) != Some(state.t) {
        records.push(record(state, false));
    }
    Ok(Trajectory {
        n,
        records,
        resets: state.reset_log[resets_before..].to_vec(),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uv(v: &[f64]) -> UnreliabilityVector {
        UnreliabilityVector::new(v.to_vec()).unwrap()
    }

    fn rv(v: &[i8]) -> VerdictVector {
        VerdictVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn soft_update_vanishes_at_centroid() {
        let x = UnreliabilityVector::half(3);
        for r in VerdictVector::all(3) {
            assert_eq!(soft_update(&r, &x).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn soft_update_example_both_forms() {
        let (r, x) = (rv(&[1, -1]), uv(&[0.1, 0.5]));
        let tanh_form = soft_update(&r, &x).unwrap();
        let ratio_form = soft_update_ratio_form(&r, &x).unwrap();
        for (a, b) in tanh_form.iter().zip(&ratio_form) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(tanh_form[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tanh_form[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn boundary_coordinate_is_stationary() {
        for x in [uv(&[0.0, 0.3, 0.7]), uv(&[1.0, 0.3, 0.7])] {
            for r in VerdictVector::all(3) {
                let f = soft_update(&r, &x).unwrap();
                assert_eq!(f[0], 0.0);
                assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
        // x_1 = 0 and r_1 = +1: L = 0, ratio -1, agent 2 is labelled "agrees
        // with agent 1".
        let f = soft_update(&rv(&[1, 1]), &uv(&[0.0, 0.3])).unwrap();
        assert_abs_diff_eq!(f[1], -0.3, epsilon = 1e-15);
        assert!(soft_update(&rv(&[1, 1]), &uv(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn labels() {
        let half = UnreliabilityVector::half(3);
        for r in VerdictVector::all(3) {
            assert_eq!(label_estimate(&r, &half).unwrap(), -1);
        }
        let x = uv(&[0.1, 0.1, 0.1]);
        let r = rv(&[1, 1, -1]);
        // MAP oracle: compare P(r | S = s) for both signs directly.
        let lik = |s: f64| -> f64 {
            r.as_slice()
                .iter()
                .zip(x.values())
                .map(|(&ri, &xi)| if ri as f64 == s { 1.0 - xi } else { xi })
                .product()
        };
        let map = if lik(1.0) > lik(-1.0) { 1 } else { -1 };
        assert_eq!(map, 1);
        assert_eq!(label_estimate(&r, &x).unwrap(), map);
        assert_eq!(label_estimate(&rv(&[1, -1]), &uv(&[0.0, 0.2])).unwrap(), 1);
        assert_eq!(label_estimate(&rv(&[-1, 1]), &uv(&[0.0, 0.2])).unwrap(), -1);
    }

    #[test]
    fn plain_steps() {
        let family = TruncationFamily::default();
        let mut state = EstimatorState::new(StepSchedule::harmonic(), family, UnreliabilityVector::half(2)).unwrap();
        state.step_plain(&rv(&[1, -1])).unwrap();
        assert_eq!(state.estimate().values(), &[0.5, 0.5]);

        let sched = StepSchedule::custom("constant 0.1", |_| 0.1);
        let mut state = EstimatorState::new(sched, family, UnreliabilityVector::half(2))
            .unwrap()
            .with_initial_estimate(uv(&[0.3, 0.5]))
            .unwrap();
        // Replace the estimate directly for the worked example outside K_0.
        state.estimate = uv(&[0.1, 0.5]);
        state.step_plain(&rv(&[1, -1])).unwrap();
        assert_abs_diff_eq!(state.estimate().values()[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(state.estimate().values()[1], 0.54, epsilon = 1e-15);
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn full_step_lands_on_soft_label() {
        let x = uv(&[0.2, 0.35, 0.6]);
        let r = rv(&[1, -1, -1]);
        let mut state = EstimatorState::new(StepSchedule::harmonic(), TruncationFamily::default(), x.clone()).unwrap();
        state.step_plain(&r).unwrap();
        let l = likelihood(&r, &x);
        for (i, &p) in state.estimate().values().iter().enumerate() {
            let label = 0.5 * (1.0 + (l - 1.0) / (l + 1.0) * r.get(i) as f64);
            assert_abs_diff_eq!(p, label, epsilon = 1e-14);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    fn likelihood(r: &VerdictVector, x: &UnreliabilityVector) -> f64 {
        x.values()
            .iter()
            .zip(r.as_slice())
            .map(|(&xi, &ri)| (xi / (1.0 - xi)).powi(ri as i32))
            .product()
    }

    #[test]
    fn step_rejects_large_eta() {
        let sched = StepSchedule::custom("bad", |t| if t == 0 { 0.5 } else { 2.0 });
        let mut state = EstimatorState::new(sched, TruncationFamily::default(), UnreliabilityVector::half(2)).unwrap();
        state.step_plain(&rv(&[1, 1])).unwrap();
        assert!(matches!(state.step_plain(&rv(&[1, 1])), Err(Error::StepTooLarge { t: 1, .. })));
        let sched = StepSchedule::harmonic_with_offset(0.5).unwrap();
        assert!(EstimatorState::new(sched, TruncationFamily::default(), UnreliabilityVector::half(2)).is_err());
    }

    #[test]
    fn truncated_step_accepts_and_resets() {
        let family = TruncationFamily::default();
        let p0 = default_reset_point(3);
        let sched = StepSchedule::custom("small", |_| 0.01);
        let mut state = EstimatorState::new(sched, family, p0.clone()).unwrap().with_correction_log();
        let r = rv(&[1, 1, -1]);
        let mut plain = state.clone();
        let out = state.step_truncated(&r).unwrap();
        plain.step_plain(&r).unwrap();
        assert!(!out.reset);
        assert_eq!(state.gamma(), 0);
        assert_eq!(state.estimate(), plain.estimate());

        // A full step from a confident estimate leaves K_0.
        let mut state = EstimatorState::new(StepSchedule::harmonic(), family, p0.clone())
            .unwrap()
            .with_initial_estimate(uv(&[0.26, 0.26, 0.5]))
            .unwrap()
            .with_correction_log();
        let out = state.step_truncated(&rv(&[1, 1, -1])).unwrap();
        assert!(out.reset);
        assert_eq!(state.gamma(), 1);
        assert_eq!(state.estimate(), &p0);
        let event = &state.reset_log()[0];
        assert_eq!(event.t, 1);
        assert_eq!(event.gamma_after, 1);
        assert!(!family.contains(0, &event.y));
        let z = &state.correction_log().unwrap()[0];
        for ((zi, p0i), yi) in z.iter().zip(p0.values()).zip(&event.y) {
            assert_abs_diff_eq!(*zi, p0i - yi, epsilon = 1e-15);
        }
    }

    #[test]
    fn truncation_membership() {
        let fam = TruncationFamily::default();
        assert_eq!(fam.radius(0), 0.25);
        for q in [0, 1, 5, 1000] {
            assert!(fam.contains(q, &[0.5; 4]));
            assert!(fam.contains(q, &[1.0, 0.5, 0.5]));
            assert!(fam.radius(q + 1) > fam.radius(q));
        }
        let q = 3;
        let eps = 1e-3;
        let x = [1.0, 0.5 + fam.radius(q) + eps, 0.5];
        assert!(!fam.contains(q, &x));
        let level = fam.min_level(&x).unwrap();
        // Oracle: walk the family until the radius covers the deviation.
        let walked = (0..).find(|&k| fam.radius(k) >= fam.radius(q) + eps).unwrap();
        assert_eq!(level, walked);
        assert!(fam.contains(level, &x));
        assert!(!fam.contains(level - 1, &x));
        assert_eq!(fam.min_level(&[0.0, 1.0, 0.5]), None);
        assert!(TruncationFamily::new(0.5, 1.0).is_err());
    }

    #[test]
    fn schedule_validation() {
        let report = validate_schedule(&StepSchedule::harmonic(), 1_000_000);
        assert!(report.passed(), "{report:?}");

        let report = validate_schedule(&StepSchedule::custom("const", |_| 0.1), 100_000);
        assert!(report.failed(ScheduleCondition::SquareSummable).is_some());
        assert!(report.failed(ScheduleCondition::DivergentSum).is_none());

        let report = validate_schedule(&StepSchedule::power_law(0.6, 1.0).unwrap(), 1_000_000);
        assert!(report.passed(), "{report:?}");
        // p-series oracle: block ratios 2^(1-p) and 2^(1-2p).
        assert_abs_diff_eq!(report.sum_block_ratio, 2f64.powf(0.4), epsilon = 1e-3);
        assert_abs_diff_eq!(report.sum_sq_block_ratio, 2f64.powf(-0.2), epsilon = 1e-3);

        let summable = StepSchedule::custom("t^-1.5", |t| (t as f64 + 1.0).powf(-1.5));
        assert!(validate_schedule(&summable, 100_000)
            .failed(ScheduleCondition::DivergentSum)
            .is_some());

        let bumpy = StepSchedule::custom("bump", |t| if t == 7 { 1.0 } else { 1.0 / (t as f64 + 1.0) });
        let f = validate_schedule(&bumpy, 1000);
        assert_eq!(f.failed(ScheduleCondition::NonIncreasing).unwrap().index, 7);

        let neg = StepSchedule::custom("neg", |t| if t >= 3 { -0.1 } else { 0.5 });
        assert_eq!(validate_schedule(&neg, 100).failed(ScheduleCondition::Positive).unwrap().index, 3);

        assert!(StepSchedule::power_law(0.5, 1.0).is_err());
    }

    #[test]
    fn add_beta_recursion_matches_batch() {
        let r_stream = [rv(&[1, -1]), rv(&[1, 1]), rv(&[-1, -1]), rv(&[1, -1])];
        let s_stream = [1i8, 1, 1, -1];
        for beta in [0.0, 0.5, 1.0] {
            let mut est = AddBetaEstimator::new(2, beta);
            let mut errors = [0u64; 2];
            for (r, &s) in r_stream.iter().zip(&s_stream) {
                est.update(s, r);
                for i in 0..2 {
                    errors[i] += u64::from(r.get(i) != s);
                    assert_abs_diff_eq!(est.estimate()[i], add_beta_batch(errors[i], est.t(), beta), epsilon = 1e-15);
                }
            }
        }
        let mut est = AddBetaEstimator::new(3, 0.0);
        for _ in 0..10 {
            est.update(1, &rv(&[1, 1, 1]));
        }
        assert_eq!(est.estimate(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn run_zero_horizon_has_initial_record() {
        let mut state =
            EstimatorState::new(StepSchedule::harmonic(), TruncationFamily::default(), default_reset_point(3)).unwrap();
        let traj = run(&mut state, &RunOptions::new(0, Mode::Truncated), std::iter::empty(), None).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.records[0].t, 0);
        assert!(!traj.truncated);
    }

    #[test]
    fn run_flags_exhausted_stream() {
        let mut state =
            EstimatorState::new(StepSchedule::harmonic(), TruncationFamily::default(), default_reset_point(2)).unwrap();
        let stream = vec![rv(&[1, 1]); 5];
        let traj = run(&mut state, &RunOptions::new(10, Mode::Truncated), stream, None).unwrap();
        assert!(traj.truncated);
        assert_eq!(traj.last().t, 5);
    }

    #[test]
    fn csv_header_and_empty_diagnostics() {
        let mut state =
            EstimatorState::new(StepSchedule::harmonic(), TruncationFamily::default(), default_reset_point(2)).unwrap();
        let traj = run(&mut state, &RunOptions::new(2, Mode::Plain), vec![rv(&[1, 1]); 2], None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,P_1,P_2,gamma,reset,V,dist_pi,dist_1mpi,dist_half");
        assert!(lines.next().unwrap().ends_with(",0,0,,,,"));
    }
}
