pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// One-sided sign test: `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
/// Ties are excluded by the caller.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut tail = if wins == 0 { log_pmf.exp() } else { 0.0 };
    for k in 1..=n {
        log_pmf += ((n - k + 1) as f64).ln() - (k as f64).ln();
        if k >= wins {
            tail += log_pmf.exp();
        }
    }
    tail.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_small_cases() {
        // n = 3: P(X >= 3) = 1/8, P(X >= 2) = 4/8.
        assert!((sign_test_p_value(3, 0) - 0.125).abs() < 1e-15);
        assert!((sign_test_p_value(2, 1) - 0.5).abs() < 1e-15);
        assert!((sign_test_p_value(0, 5) - 1.0).abs() < 1e-12);
        assert_eq!(sign_test_p_value(0, 0), 1.0);
        // n = 10, wins = 9: (10 + 1) / 1024.
        assert!((sign_test_p_value(9, 1) - 11.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((std_dev(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
