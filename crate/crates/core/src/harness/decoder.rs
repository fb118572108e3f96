//! Linear-threshold decoders `S_{α,τ}(r) = sgn(Σ α_i r_i - τ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::sim::sample_round;
use crate::error::{Error, Result};
use crate::model::{check_cap, interior_log_odds, verdict_sign, UnreliabilityVector, VerdictVector};

/// `sgn(Σ α_i r_i - τ)` with `sgn(0) = -1`, matching the tie rule of the
/// label estimate.
pub fn decode(alpha: &[f64], tau: f64, r: &VerdictVector) -> i8 {
    let score: f64 = alpha.iter().zip(r.as_slice()).map(|(a, &ri)| a * ri as f64).sum::<f64>() - tau;
    if score > 0.0 {
        1
    } else {
        -1
    }
}

/// Log-odds weights `log((1 - π_i)/π_i)`, the minimum-error choice for a
/// uniform source.
pub fn optimal_weights(pi: &UnreliabilityVector) -> Result<Vec<f64>> {
    pi.require_interior()?;
    Ok(interior_log_odds(pi.values()))
}

fn check_alpha(pi: &UnreliabilityVector, alpha: &[f64]) -> Result<()> {
    pi.require_interior()?;
    if alpha.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            got: alpha.len(),
        });
    }
    Ok(())
}

/// Exact `P(S_{α,τ}(R) ≠ S)` summed over both source signs and all verdicts.
pub fn decoder_error_exact(pi: &UnreliabilityVector, alpha: &[f64], tau: f64) -> Result<f64> {
    check_alpha(pi, alpha)?;
    check_cap(pi.len())?;
    let n = pi.len();
    let mut err = 0.0;
    for k in 0..1usize << n {
        let r = VerdictVector::from_index(n, k);
        let decoded = decode(alpha, tau, &r);
        for s in [-1.0, 1.0] {
            if decoded as f64 == s {
                continue;
            }
            let lik: f64 = pi
                .values()
                .iter()
                .enumerate()
                .map(|(i, &p)| if verdict_sign(k, i) == s { 1.0 - p } else { p })
                .product();
            err += 0.5 * lik;
        }
    }
    Ok(err)
}

/// Empirical error rate over `rounds` simulated rounds, with its binomial
/// standard error.
pub fn decoder_error_monte_carlo(
    pi: &UnreliabilityVector,
    alpha: &[f64],
    tau: f64,
    rounds: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    check_alpha(pi, alpha)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("need at least one round".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut errors = 0u64;
    for _ in 0..rounds {
        let (s, r) = sample_round(pi.values(), &mut rng);
        errors += u64::from(decode(alpha, tau, &r) != s);
    }
    let p = errors as f64 / rounds as f64;
    Ok((p, (p * (1.0 - p) / rounds as f64).sqrt()))
}
