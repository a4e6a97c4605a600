//! Reference computations that share nothing with the modules they check beyond
//! arithmetic and a local log-sum-exp.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::simplex::{ScoreVector, SimplexPoint, Temperature};

pub const FD_STEP: f64 = 1e-5;
const PROX_MAX_SWEEPS: usize = 200_000;
const PROX_LOG_TOL: f64 = 1e-13;

/// Log-sum-exp kept separate from the library kernel on purpose.
pub fn lse(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn normalized(logs: &[f64]) -> Result<SimplexPoint> {
    let z = lse(logs);
    let q: Vec<f64> = logs.iter().map(|v| (v - z).exp()).collect();
    let total: f64 = q.iter().sum();
    SimplexPoint::new(q.into_iter().map(|v| v / total).collect())
}

/// Central differences, one coordinate at a time.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + step;
            let up = f(&y);
            y[i] = x[i] - step;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Central-difference Jacobian of a vector map; row `i` is the derivative of output `i`.
pub fn fd_jacobian<G: Fn(&[f64]) -> Vec<f64>>(g: G, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let m = g(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut y = x.to_vec();
    for j in 0..n {
        y[j] = x[j] + step;
        let up = g(&y);
        y[j] = x[j] - step;
        let down = g(&y);
        y[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    jac
}

/// Gradient at `step` plus a Richardson comparison against `2·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedGradient {
    pub gradient: Vec<f64>,
    pub richardson_gap: f64,
    pub allowed_gap: f64,
}

/// `third_derivative` bounds `|f'''|` near `x`; the two estimates may differ by at most
/// ten times their expected truncation plus rounding error, otherwise the oracle itself
/// is declared unreliable.
pub fn fd_gradient_checked<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    step: f64,
    third_derivative: f64,
) -> Result<CheckedGradient> {
    let fine = fd_gradient(&f, x, step);
    let coarse = fd_gradient(&f, x, 2.0 * step);
    let gap = fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = f(x).abs().max(1.0);
    let truncation = third_derivative * (2.0 * step).powi(2) / 6.0;
    let rounding = f64::EPSILON * scale / step;
    let allowed = 10.0 * (truncation + rounding);
    if gap > allowed {
        return Err(Error::OracleFailure(format!(
            "finite differences disagree across step sizes: gap {gap:e} > {allowed:e}"
        )));
    }
    Ok(CheckedGradient {
        gradient: fine,
        richardson_gap: gap,
        allowed_gap: allowed,
    })
}

/// Numerically maximizes `⟨q,s⟩ + T·H(q) − KL(q‖p)/η` by cyclic coordinate ascent.
///
/// Each move keeps the relative proportions of the other coordinates and sets `q_i`
/// to the maximizer of the objective along that segment (a one-dimensional concave
/// problem whose stationarity condition is linear in the logit of `q_i`).
pub fn prox_objective_maximizer(
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: f64,
) -> Result<SimplexPoint> {
    let n = p.len();
    if n != s.len() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    if let Some(index) = p.first_zero() {
        return Err(Error::NotInterior { index });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput("η must be positive".into()));
    }
    let (tv, s) = (t.value(), s.values());
    let log_p: Vec<f64> = p.probs().iter().map(|v| v.ln()).collect();
    let mut log_q = log_p.clone();
    let inv_eta = 1.0 / eta;
    let mut rest = vec![0.0; n];

    for _ in 0..PROX_MAX_SWEEPS {
        let mut biggest = 0.0f64;
        for i in 0..n {
            // Proportions of the other coordinates.
            rest.clear();
            rest.extend((0..n).filter(|&j| j != i).map(|j| log_q[j]));
            let log_mass = lse(&rest);
            let (mut mean_s, mut neg_entropy, mut kl_rest) = (0.0, 0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                let lr = log_q[j] - log_mass;
                let r = lr.exp();
                mean_s += r * s[j];
                neg_entropy += r * lr;
                kl_rest += r * (lr - log_p[j]);
            }
            let logit = (s[i] - mean_s + tv * neg_entropy + inv_eta * (log_p[i] + kl_rest))
                / (tv + inv_eta);
            // log x and log(1 − x) for x = σ(logit).
            let log_x = -softplus(-logit);
            let log_1mx = -softplus(logit);
            biggest = biggest.max((log_x - log_q[i]).abs());
            let shift = log_1mx - log_mass;
            for j in (0..n).filter(|&j| j != i) {
                log_q[j] += shift;
                biggest = biggest.max(shift.abs());
            }
            log_q[i] = log_x;
        }
        if biggest < PROX_LOG_TOL {
            return normalized(&log_q);
        }
    }
    Err(Error::OracleFailure(
        "prox maximizer did not converge within the sweep budget".into(),
    ))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// The prox objective itself, for comparing candidate maximizers.
pub fn prox_objective(q: &SimplexPoint, p: &SimplexPoint, s: &ScoreVector, t: Temperature, eta: f64) -> f64 {
    let mut value = 0.0;
    for ((&qi, &pi), &si) in q.probs().iter().zip(p.probs()).zip(s.values()) {
        value += qi * si;
        if qi > 0.0 {
            value -= t.value() * qi * qi.ln() + qi * (qi / pi).ln() / eta;
        }
    }
    value
}

/// Constant-fitness replicator flow: `p_i(t) ∝ p_i(0)·exp(s_i t / T)`.
pub fn closed_form_literal(
    p0: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    time: f64,
) -> Result<SimplexPoint> {
    let logs: Vec<f64> = p0
        .probs()
        .iter()
        .zip(s.values())
        .map(|(&p, &si)| p.ln() + si * time / t.value())
        .collect();
    normalized(&logs)
}

/// Entropic flow at constant temperature. In log-coordinates the field is linear,
/// `d/dt log p = s/T − log p + c(t)`, so `log p(t) = e^{−t} log p(0) + (1 − e^{−t}) s/T`
/// up to normalization.
pub fn closed_form_entropic(
    p0: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    time: f64,
) -> Result<SimplexPoint> {
    let decay = (-time).exp();
    let gain = -(-time).exp_m1();
    let logs: Vec<f64> = p0
        .probs()
        .iter()
        .zip(s.values())
        .map(|(&p, &si)| {
            let lp = p.ln();
            if lp == f64::NEG_INFINITY {
                lp
            } else {
                decay * lp + gain * si / t.value()
            }
        })
        .collect();
    normalized(&logs)
}

/// `softmax(s/T)` through the local log-sum-exp.
pub fn reference_softmax(s: &ScoreVector, t: Temperature) -> SimplexPoint {
    let logs: Vec<f64> = s.values().iter().map(|v| v / t.value()).collect();
    normalized(&logs).expect("finite scores give a valid distribution")
}

/// `T·log Σ exp(s_i/T)` through the local log-sum-exp.
pub fn reference_log_partition(s: &[f64], t: f64) -> f64 {
    let scaled: Vec<f64> = s.iter().map(|v| v / t).collect();
    t * lse(&scaled)
}
