//! Small numeric helpers shared across modules.

/// `log(cosh(a))` without overflow for large `|a|`.
#[inline]
pub fn log_cosh(a: f64) -> f64 {
    let m = a.abs();
    m + (-2.0 * m).exp().ln_1p() - std::f64::consts::LN_2
}

/// Neumaier (improved Kahan) compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cosh_matches_direct_and_is_stable() {
        for a in [-3.0, -0.5, 0.0, 0.25, 4.0] {
            assert!((log_cosh(a) - f64::cosh(a).ln()).abs() < 1e-14);
        }
        assert!((log_cosh(1000.0) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(neumaier_sum(values), 2e-16);
    }
}
