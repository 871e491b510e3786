//! Small numeric helpers shared across modules.

/// log(sum(exp(x))) over a slice, accumulated in slice order after a
/// max shift so the result is bit-stable for a fixed input ordering.
///
/// Empty input and all-`-inf` input both return `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &x in xs {
        if x > f64::NEG_INFINITY {
            sum += (x - max).exp();
        }
    }
    max + sum.ln()
}

/// ln(n!) computed by direct summation. Exact enough for the desk-scale
/// counts used here (relative error a few ulp up to n ~ 1e6).
pub fn ln_factorial(n: u64) -> f64 {
    let mut acc = 0.0;
    for k in 2..=n {
        acc += (k as f64).ln();
    }
    acc
}

/// Relative mismatch |a - b| / max(a, b) for non-negative quantities,
/// with the convention 0/0 = 0.
pub fn relative_mismatch(a: f64, b: f64) -> f64 {
    let denom = a.max(b);
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Relative gap |a - b| / max(|a|, |b|), 0/0 = 0. For signed quantities.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_naive_sum() {
        let xs = [0.0_f64, -1.0, 2.5, -30.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum();
        assert!((logsumexp(&xs) - naive.ln()).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_handles_neg_infinity() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let xs = [f64::NEG_INFINITY, 1.0];
        assert!((logsumexp(&xs) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_is_stable_for_large_inputs() {
        let xs = [1000.0_f64, 1000.0];
        assert!((logsumexp(&xs) - (1000.0 + 2.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn ln_factorial_small_values() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120.0_f64.ln()).abs() < 1e-13);
        assert!((ln_factorial(20) - 2.43290200817664e18_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mismatch_conventions() {
        assert_eq!(relative_mismatch(0.0, 0.0), 0.0);
        assert_eq!(relative_mismatch(2.0, 1.0), 0.5);
        assert_eq!(relative_gap(-1.0, 1.0), 2.0);
    }
}
