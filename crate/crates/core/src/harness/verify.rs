//! Certificate sweep: every numerical identity and bound the estimator
//! relies on, checked on seeded random instances.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::execute;
use super::sim::sample_round;
use crate::error::Result;
use crate::estimator::{soft_update, soft_update_ratio_form};
use crate::lyapunov::{descent_value, fd_gradient, gradient_relative_error, lyapunov_gradient, Lyapunov, FD_STEP};
use crate::meanfield::{boundary_equilibria, MeanField};
use crate::model::{
    output_prob_cosh, output_prob_product, residual_zero_census, OutputDistribution, UnreliabilityVector, VerdictVector,
};
use crate::numeric::{max_abs, max_abs_diff, neumaier_sum};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub dims: Vec<usize>,
    /// Random points per dimension for the pointwise checks.
    pub points: usize,
    pub martingale_pairs: usize,
    pub martingale_draws: u64,
    pub census_step: f64,
    pub reset_seeds: usize,
    pub reset_horizon: u64,
    /// Debug hook: inflate every `g_x` table by this factor before the
    /// normalization check. `1.0` leaves it intact.
    pub corrupt_g: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: (2..=6).collect(),
            points: 100,
            martingale_pairs: 5,
            martingale_draws: 100_000,
            census_step: 1e-2,
            reset_seeds: 3,
            reset_horizon: 1_000_000,
            corrupt_g: 1.0,
        }
    }
}

impl VerifyConfig {
    /// A reduced sweep that finishes in well under a second.
    pub fn quick() -> Self {
        Self {
            dims: vec![2, 3],
            points: 10,
            martingale_pairs: 1,
            martingale_draws: 20_000,
            reset_seeds: 1,
            reset_horizon: 20_000,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub checks_run: u64,
    /// Largest observed statistic; the check passes iff it is within `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub max_violation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub checks_run: u64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub sweep: Vec<SweepRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// CSV `n,seed,checks_run,max_violation`.
    pub fn write_sweep_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,seed,checks_run,max_violation")?;
        for row in &self.sweep {
            writeln!(w, "{},{},{},{}", row.n, row.seed, row.checks_run, row.max_violation)?;
        }
        Ok(())
    }
}

/// Accumulates one named check, with per-dimension tallies for the sweep.
struct Check {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    runs: u64,
    detail: String,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            runs: 0,
            detail: String::new(),
        }
    }

    fn observe(&mut self, value: f64, sweep: &mut Sweep, n: usize) {
        self.runs += 1;
        // NaN must count as a failure.
        if !(value <= self.worst) {
            self.worst = value;
        }
        let entry = sweep.entry(n).or_insert((0, 0.0));
        entry.0 += 1;
        let excess = if value.is_nan() { f64::INFINITY } else { (value - self.tolerance).max(0.0) };
        entry.1 = f64::max(entry.1, excess);
    }

    fn finish(self) -> CheckResult {
        let passed = self.worst <= self.tolerance && self.runs > 0;
        CheckResult {
            name: self.name.to_string(),
            passed,
            checks_run: self.runs,
            worst: self.worst,
            tolerance: self.tolerance,
            max_violation: if self.worst.is_nan() {
                f64::INFINITY
            } else {
                (self.worst - self.tolerance).max(0.0)
            },
            detail: self.detail,
        }
    }
}

type Sweep = BTreeMap<usize, (u64, f64)>;

fn random_vector(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> UnreliabilityVector {
    UnreliabilityVector::interior((0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("range is interior")
}

/// Runs the full sweep. Deterministic given the config.
pub fn verify_suite(config: &VerifyConfig) -> Result<VerifyReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut sweep = Sweep::new();
    let mut checks = Vec::new();

    let mut normalization = Check::new("normalization", 1e-12);
    let mut forms = Check::new("form_equivalence", 1e-10);
    let mut descent = Check::new("descent", 1e-14);
    let mut gradient = Check::new("gradient_consistency", 1e-5);
    let mut boundary = Check::new("boundary_equilibria", 1e-12);
    let mut boundary_limit = Check::new("boundary_lyapunov_limit", 1e-4);
    for &n in &config.dims {
        for _ in 0..config.points {
            let x = random_vector(&mut rng, n, 0.01, 0.99);
            let pi = random_vector(&mut rng, n, 0.01, 0.99);

            let table = OutputDistribution::new(&x)?;
            let total = neumaier_sum(table.probs().iter().map(|p| p * config.corrupt_g));
            normalization.observe((total - 1.0).abs(), &mut sweep, n);

            let mut gap = 0.0f64;
            for r in VerdictVector::all(n) {
                gap = gap.max((output_prob_product(&r, &x)? - output_prob_cosh(&r, &x)?).abs());
                gap = gap.max(max_abs_diff(&soft_update(&r, &x)?, &soft_update_ratio_form(&r, &x)?));
            }
            forms.observe(gap, &mut sweep, n);

            descent.observe(descent_value(&x, &pi)?, &mut sweep, n);

            let closed = lyapunov_gradient(&x, &pi)?;
            let fd = fd_gradient(&x, &pi, FD_STEP)?;
            let rel = closed
                .iter()
                .zip(&fd)
                .map(|(c, d)| gradient_relative_error(*c, *d))
                .fold(0.0, f64::max);
            gradient.observe(rel, &mut sweep, n);
        }
        let pi = random_vector(&mut rng, n, 0.01, 0.99);
        let field = MeanField::new(&pi)?;
        for point in boundary_equilibria(&pi)? {
            boundary.observe(max_abs(&field.eval(&point)?), &mut sweep, n);
            boundary_limit.observe(boundary_limit_gap(&pi, &point)?, &mut sweep, n);
        }
    }
    normalization.detail = format!("|sum g - 1| over {} random points", normalization.runs);
    descent.detail = "<grad V, f> on random interior points".into();
    checks.extend([normalization, forms, descent, gradient, boundary, boundary_limit].map(Check::finish));

    checks.push(martingale_check(config, &mut rng, &mut sweep)?);
    checks.push(census_check(config)?);
    checks.push(reset_check(config)?);

    let sweep = sweep
        .into_iter()
        .map(|(n, (checks_run, max_violation))| SweepRow {
            n,
            seed: config.seed,
            checks_run,
            max_violation,
        })
        .collect();
    Ok(VerifyReport {
        seed: config.seed,
        checks,
        sweep,
    })
}

/// Empirical mean of `f̃(R, x) - f(x)` against its `4σ/√N` band, plus the
/// `‖f̃ - f‖∞ ≤ 2` bound.
fn martingale_check(config: &VerifyConfig, rng: &mut ChaCha20Rng, sweep: &mut Sweep) -> Result<CheckResult> {
    let n = 4;
    let mut check = Check::new("martingale", 4.0);
    let mut sup = 0.0f64;
    for _ in 0..config.martingale_pairs {
        let x = random_vector(rng, n, 0.01, 0.99);
        let pi = random_vector(rng, n, 0.01, 0.99);
        let z = martingale_z_scores(&x, &pi, config.martingale_draws, rng.gen())?;
        sup = sup.max(z.sup_norm);
        check.observe(z.max_abs_z, sweep, n);
    }
    if sup > 2.0 {
        check.worst = f64::INFINITY;
    }
    check.detail = format!("max |mean|/(sd/sqrt N); sup |f~ - f| = {sup}");
    Ok(check.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleStats {
    /// Largest `|mean_i| / (sd_i / √N)` over coordinates.
    pub max_abs_z: f64,
    /// Largest `|f̃_i(R, x) - f_i(x)|` over all draws.
    pub sup_norm: f64,
}

/// Draws `R ~ g_π` and measures how far the mean of `f̃(R, x) - f(x)` sits
/// from zero in standard errors.
pub fn martingale_z_scores(x: &UnreliabilityVector, pi: &UnreliabilityVector, draws: u64, seed: u64) -> Result<MartingaleStats> {
    let f = MeanField::new(pi)?.eval(x)?;
    let n = x.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut sup = 0.0f64;
    for _ in 0..draws {
        let (_, r) = sample_round(pi.values(), &mut rng);
        let ft = soft_update(&r, x)?;
        for i in 0..n {
            let d = ft[i] - f[i];
            sum[i] += d;
            sum_sq[i] += d * d;
            sup = sup.max(d.abs());
        }
    }
    let nn = draws as f64;
    let max_abs_z = (0..n)
        .map(|i| {
            let mean = sum[i] / nn;
            let var = (sum_sq[i] / nn - mean * mean).max(0.0);
            let se = (var / nn).sqrt();
            if se > 0.0 {
                mean.abs() / se
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(MartingaleStats {
        max_abs_z,
        sup_norm: sup,
    })
}

/// For `π = (0.1, 0.2, 0.3)` the only points matching all pairwise output
/// statistics are `π` and `1 - π`.
fn census_check(config: &VerifyConfig) -> Result<CheckResult> {
    let pi = UnreliabilityVector::interior(vec![0.1, 0.2, 0.3])?;
    let census = residual_zero_census(&pi, config.census_step, 1e-6)?;
    let targets = [pi.values().to_vec(), pi.complement().into_values()];
    let worst = targets
        .iter()
        .map(|t| {
            census
                .roots
                .iter()
                .map(|(r, _)| max_abs_diff(r, t))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let extra = census.roots.len() != 2;
    Ok(CheckResult {
        name: "indistinguishability_census".into(),
        passed: !extra && worst <= 1e-6,
        checks_run: census.clusters as u64,
        worst,
        tolerance: 1e-6,
        max_violation: if extra { f64::INFINITY } else { (worst - 1e-6).max(0.0) },
        detail: format!("{} roots from {} clusters", census.roots.len(), census.clusters),
    })
}

/// Every run's last reset must fall in the first 10% of the horizon.
fn reset_check(config: &VerifyConfig) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut counts = Vec::new();
    for k in 0..config.reset_seeds {
        let run = ExperimentConfig {
            seed: config.seed.wrapping_add(k as u64),
            horizon: config.reset_horizon,
            ..Default::default()
        };
        let summary = execute(&run)?.summary;
        counts.push(summary.reset_count);
        let frac = summary.last_reset.map_or(0.0, |t| t as f64 / config.reset_horizon.max(1) as f64);
        worst = worst.max(frac);
    }
    Ok(CheckResult {
        name: "reset_finiteness".into(),
        passed: worst <= 0.1,
        checks_run: config.reset_seeds as u64,
        worst,
        tolerance: 0.1,
        max_violation: (worst - 0.1).max(0.0),
        detail: format!("last reset as fraction of horizon; reset counts {counts:?}"),
    })
}

/// Largest `V` mismatch between the closed boundary form and the
/// extrapolated interior limit, for tests and the sweep.
pub fn boundary_limit_gap(pi: &UnreliabilityVector, point: &UnreliabilityVector) -> Result<f64> {
    let lyap = Lyapunov::new(pi)?;
    let (i, at_one) = point
        .extreme()
        .ok_or_else(|| crate::Error::InvalidArgument("expected a singly-extreme vector".into()))?;
    let at = |e: f64| -> Result<f64> {
        let mut x = point.values().to_vec();
        x[i] = if at_one { 1.0 - e } else { e };
        lyap.value(&UnreliabilityVector::interior(x)?)
    };
    let (a, b) = (1e-6, 1e-9);
    let extrapolated = (a * at(b)? - b * at(a)?) / (a - b);
    Ok((lyap.value(point)? - extrapolated).abs())
}
