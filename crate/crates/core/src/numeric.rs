//! Small shared kernels: max-shifted log-sum-exp and the nonnegative KL summand.

/// `log Σ exp(x_i)` with the max shift. Entries equal to `-inf` contribute nothing;
/// an all `-inf` input returns `-inf`.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = x.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Shift log-weights so they are normalized log-probabilities.
pub(crate) fn normalize_logs(x: &mut [f64]) {
    let lse = log_sum_exp(x);
    for v in x.iter_mut() {
        *v -= lse;
    }
}

/// `q·φ(log(p/q))` with `φ(x) = x·e^x − e^x + 1`, the per-coordinate KL summand in the
/// form `Σ q_i (r_i log r_i − r_i + 1)`. Every term is nonnegative, so the sum never
/// goes negative from cancellation. Valid as KL only when both vectors are normalized.
#[inline]
pub(crate) fn kl_term(q: f64, log_ratio: f64) -> f64 {
    let x = log_ratio;
    let ex = x.exp();
    q * (x * ex - x.exp_m1())
}

/// KL(p‖q) from normalized log-probabilities. `-inf` in `lp` means `p_i = 0`.
/// Returns `None` when `p_i > 0` where `q_i = 0`.
pub(crate) fn kl_from_logs(lp: &[f64], lq: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    for (&a, &b) in lp.iter().zip(lq) {
        if a == f64::NEG_INFINITY {
            acc += b.exp();
            continue;
        }
        if b == f64::NEG_INFINITY {
            return None;
        }
        acc += kl_term(b.exp(), a - b);
    }
    Some(acc.max(0.0))
}
