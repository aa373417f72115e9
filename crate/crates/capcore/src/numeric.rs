//! Numeric helpers shared across modules: tolerant comparisons for geometric
//! feasibility, stable log-domain sums, and significant-digit rounding.

/// Relative tolerance for feasibility comparisons. States on the exact
/// boundary of a constraint count as feasible, and values within this relative
/// slack of the boundary are treated as on it.
pub const REL_TOL: f64 = 1e-9;

/// `lhs ≥ rhs` up to relative tolerance: accepts `lhs` that undershoots by at
/// most `REL_TOL · |rhs|`.
#[inline]
pub fn geq_tol(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - rhs.abs() * REL_TOL
}

/// `lhs ≤ rhs` up to relative tolerance: accepts `lhs` that overshoots by at
/// most `REL_TOL · |rhs|`.
#[inline]
pub fn leq_tol(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + rhs.abs() * REL_TOL
}

/// Numerically stable `log(Σ exp(x))`.
///
/// Returns negative infinity for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Round `x` to `digits` significant decimal digits.
///
/// Used when writing coordinates and rates so that emitted files are stable
/// across platforms while keeping far more precision than the constructions
/// need.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let shift = digits as i32 - 1 - magnitude;
    let scale = 10f64.powi(shift);
    (x * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_equality_counts_as_satisfied() {
        assert!(geq_tol(2.0, 2.0));
        assert!(leq_tol(2.0, 2.0));
        // Within relative slack of the boundary.
        assert!(geq_tol(2.0 - 1e-12, 2.0));
        assert!(leq_tol(2.0 + 1e-12, 2.0));
        // Clearly off the boundary.
        assert!(!geq_tol(1.9999, 2.0));
        assert!(!leq_tol(2.0001, 2.0));
    }

    #[test]
    fn geq_tol_is_exact_at_zero_threshold() {
        assert!(geq_tol(0.0, 0.0));
        assert!(!geq_tol(-1e-300, 0.0));
    }

    #[test]
    fn log_sum_exp_matches_direct_computation() {
        let xs = [0.0, (2.0f64).ln(), (3.0f64).ln()];
        assert!((log_sum_exp(&xs) - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_survives_extreme_magnitudes() {
        let xs = [700.0, 700.0 + (2.0f64).ln()];
        assert!((log_sum_exp(&xs) - (700.0 + 3.0f64.ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn round_sig_keeps_twelve_digits() {
        assert_eq!(round_sig(9.87654321098765, 12), 9.87654321099);
        assert_eq!(round_sig(123456.789012345, 12), 123456.789012);
        assert_eq!(round_sig(0.0, 12), 0.0);
        assert_eq!(round_sig(-1.5e-7, 3), -1.5e-7);
    }
}
