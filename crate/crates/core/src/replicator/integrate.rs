//! Simplex-preserving integration of the replicator flows.
//!
//! The state is carried in log-coordinates `y = log p` (up to an additive constant). Both
//! fields become `dy/dt = f(t, p)` with `p = normalize(exp y)`, because the mean fitness
//! only shifts every coordinate by the same amount. A single forward-Euler stage in `y` is
//! the multiplicative step `p ← normalize(p ⊙ exp(h f))`; we use classical RK4 stages in
//! the same coordinates with step doubling for error control. Positivity and exact
//! normalization hold by construction, and coordinates that start at zero stay at
//! `y = -inf`, so faces are invariant bit for bit.

use serde::{Deserialize, Serialize};

use super::{
    field_from_fitness, fitness_into, sup_norm, FieldKind, ScoreSource, TemperatureSchedule,
    TerminalStatus, TrajectoryRecord, TrajectorySample,
};
use crate::error::{Error, Result};
use crate::numeric::{kl_from_logs, log_sum_exp};
use crate::simplex::{ScoreVector, SimplexPoint, NORM_EPS};

/// `log(1e-300)`: entropic runs whose log-probabilities fall below this are flagged.
const ENTROPIC_LOG_FLOOR: f64 = -690.775_527_898_213_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// `t = 0` plus `count − 1` geometrically spaced times from `min(dt0, horizon)` to the horizon.
    Geometric { count: usize },
    /// `count` equally spaced times on `[0, horizon]`.
    Uniform { count: usize },
    /// Explicit, strictly increasing times in `(0, horizon]`; `t = 0` is always recorded.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub dt0: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Stop once the KL to the field's equilibrium drops below this; `0` disables it.
    pub convergence_kl: f64,
    pub sampling: Sampling,
    /// Budget on attempted steps; exhausting it reports `Diverged`.
    pub max_steps: usize,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            dt0: 1e-2,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            convergence_kl: 1e-10,
            sampling: Sampling::Geometric { count: 200 },
            max_steps: 5_000_000,
        }
    }
}

pub const DEFAULT_HORIZON: f64 = 1e3;

impl Controls {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.dt0) || !ok(self.rel_tol) || !(self.abs_tol.is_finite() && self.abs_tol >= 0.0) {
            return Err(Error::InvalidInput(
                "dt0 and rel_tol must be positive, abs_tol nonnegative".into(),
            ));
        }
        if self.convergence_kl.is_nan() || self.convergence_kl < 0.0 {
            return Err(Error::InvalidInput("convergence_kl must be nonnegative".into()));
        }
        Ok(())
    }

    fn sample_times(&self, horizon: f64) -> Result<Vec<f64>> {
        let times = match &self.sampling {
            Sampling::Geometric { count } => {
                let first = self.dt0.min(horizon);
                let n = count.saturating_sub(1).max(1);
                if n == 1 || first >= horizon {
                    vec![horizon]
                } else {
                    let ratio = (horizon / first).ln() / (n - 1) as f64;
                    let mut v: Vec<f64> = (0..n).map(|k| first * (ratio * k as f64).exp()).collect();
                    v[n - 1] = horizon;
                    v
                }
            }
            Sampling::Uniform { count } => {
                let n = (*count).max(2);
                (1..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect()
            }
            Sampling::Times(v) => {
                let mut prev = 0.0;
                let mut out = Vec::with_capacity(v.len());
                for &t in v {
                    if t == 0.0 && out.is_empty() {
                        continue;
                    }
                    if !(t > prev && t <= horizon) {
                        return Err(Error::InvalidInput(format!(
                            "sample time {t} is not strictly increasing within (0, {horizon}]"
                        )));
                    }
                    out.push(t);
                    prev = t;
                }
                out
            }
        };
        let mut dedup: Vec<f64> = Vec::with_capacity(times.len());
        for t in times {
            if dedup.last().is_none_or(|&last| t > last) {
                dedup.push(t);
            }
        }
        Ok(dedup)
    }
}

struct System<'a, S: ?Sized> {
    kind: FieldKind,
    scores: &'a S,
    schedule: &'a TemperatureSchedule,
    support: Vec<bool>,
}

/// Everything recorded about one state.
struct Observation {
    p: Vec<f64>,
    free_energy: f64,
    kl_to_target: f64,
    field_norm: f64,
}

impl<S: ScoreSource + ?Sized> System<'_, S> {
    fn dim(&self) -> usize {
        self.support.len()
    }

    fn normalized(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lse = log_sum_exp(y);
        let logp: Vec<f64> = y.iter().map(|v| v - lse).collect();
        let p = logp.iter().map(|v| v.exp()).collect();
        (logp, p)
    }

    fn deriv(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let (logp, p) = self.normalized(y);
        let scores = self.scores.scores_at(&p);
        fitness_into(self.kind, &scores, &logp, &self.support, self.schedule.at(t), out);
    }

    fn rk4(&self, t: f64, y: &[f64], h: f64) -> Vec<f64> {
        let n = self.dim();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.deriv(t, y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        self.deriv(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        self.deriv(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        self.deriv(t + h, &tmp, &mut k4);
        let mut out: Vec<f64> = (0..n)
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let lse = log_sum_exp(&out);
        for v in out.iter_mut() {
            *v -= lse;
        }
        out
    }

    /// Scaled step-doubling error of the half-step solution `fine` against `coarse`.
    fn error_norm(&self, coarse: &[f64], fine: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..self.dim() {
            if !self.support[i] {
                continue;
            }
            let p = fine[i].exp();
            let dy = (fine[i] - coarse[i]).abs() / 15.0;
            let e = p * dy / (abs_tol + rel_tol * p);
            err = err.max(if e.is_nan() { f64::INFINITY } else { e });
        }
        err
    }

    fn observe(&self, t: f64, logp: &[f64]) -> Observation {
        let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        let temp = self.schedule.at(t);
        let scores = self.scores.scores_at(&p);
        let mut inner = 0.0;
        let mut h = 0.0;
        for i in 0..p.len() {
            if p[i] > 0.0 {
                inner += p[i] * scores[i];
                h -= p[i] * logp[i];
            }
        }
        let mut fit = vec![0.0; p.len()];
        fitness_into(self.kind, &scores, logp, &self.support, temp, &mut fit);
        let field_norm = sup_norm(&field_from_fitness(&p, &fit));
        Observation {
            kl_to_target: self.kl_to_target(&p, logp, &scores, temp),
            free_energy: inner + temp * h.max(0.0),
            field_norm,
            p,
        }
    }

    fn kl_to_target(&self, p: &[f64], logp: &[f64], scores: &[f64], temp: f64) -> f64 {
        match self.kind {
            FieldKind::Entropic => {
                let mut target: Vec<f64> = (0..p.len())
                    .map(|i| if self.support[i] { scores[i] / temp } else { f64::NEG_INFINITY })
                    .collect();
                let lse = log_sum_exp(&target);
                for v in target.iter_mut() {
                    *v -= lse;
                }
                kl_from_logs(logp, &target).unwrap_or(f64::INFINITY)
            }
            FieldKind::Literal => {
                let max = (0..p.len())
                    .filter(|&i| self.support[i])
                    .map(|i| scores[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                let cut = max - 1e-12 * max.abs().max(1.0);
                let rest: f64 = (0..p.len())
                    .filter(|&i| self.support[i] && scores[i] < cut)
                    .map(|i| p[i])
                    .sum();
                if rest >= 1.0 {
                    f64::INFINITY
                } else {
                    // + 0.0 turns -0 into 0 when nothing is off the argmax set.
                    -(-rest).ln_1p() + 0.0
                }
            }
        }
    }
}

fn sample_from(t: f64, obs: Observation) -> Result<TrajectorySample> {
    Ok(TrajectorySample {
        t,
        p: SimplexPoint::new(obs.p)?,
        free_energy: obs.free_energy,
        kl_to_target: obs.kl_to_target,
        field_norm: obs.field_norm,
    })
}

/// Integrates the replicator flow of `kind` for fixed scores under a temperature schedule.
pub fn integrate(
    kind: FieldKind,
    p0: &SimplexPoint,
    s: &ScoreVector,
    schedule: &TemperatureSchedule,
    horizon: f64,
    controls: &Controls,
) -> Result<TrajectoryRecord> {
    integrate_scores(kind, p0, s, schedule, horizon, controls)
}

/// Integrates the flow for any score source, including path-dependent fields.
///
/// The run lives on the face spanned by the support of `p0`: zero coordinates stay zero,
/// and the entropic field is evaluated relative to that face.
pub fn integrate_scores<S: ScoreSource + ?Sized>(
    kind: FieldKind,
    p0: &SimplexPoint,
    scores: &S,
    schedule: &TemperatureSchedule,
    horizon: f64,
    controls: &Controls,
) -> Result<TrajectoryRecord> {
    if p0.len() != scores.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: point has {}, scores have {}",
            p0.len(),
            scores.dim()
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    schedule.validate()?;
    controls.validate()?;
    let sample_times = controls.sample_times(horizon)?;

    let sys = System {
        kind,
        scores,
        schedule,
        support: p0.probs().iter().map(|&v| v > 0.0).collect(),
    };

    let mut y = p0.log_probs();
    let lse = log_sum_exp(&y);
    for v in y.iter_mut() {
        *v -= lse;
    }

    let mut record = TrajectoryRecord {
        kind,
        samples: vec![sample_from(0.0, sys.observe(0.0, &y))?],
        terminal_status: TerminalStatus::MaxTime,
        accepted_steps: 0,
        rejected_steps: 0,
        renormalizations: 0,
        diagnostics: None,
    };
    if record.samples[0].kl_to_target < controls.convergence_kl {
        record.terminal_status = TerminalStatus::Converged;
        return Ok(record);
    }

    let mut t = 0.0;
    let mut h = controls.dt0;
    let mut next_sample = 0;
    let mut attempts = 0usize;

    while t < horizon {
        let target = sample_times
            .get(next_sample)
            .copied()
            .unwrap_or(horizon)
            .min(schedule.next_breakpoint(t).unwrap_or(f64::INFINITY))
            .min(horizon);
        let remaining = target - t;
        let h_min = 1e-14 * t.abs().max(1.0);

        let (t_new, y_new) = if remaining <= h_min {
            (target, y.clone())
        } else {
            attempts += 1;
            if attempts > controls.max_steps {
                record.terminal_status = TerminalStatus::Diverged;
                record.diagnostics = Some(format!("step budget exhausted at t = {t}"));
                break;
            }
            let hit = h >= remaining;
            let h_try = if hit { remaining } else { h };
            let coarse = sys.rk4(t, &y, h_try);
            let half = sys.rk4(t, &y, 0.5 * h_try);
            let fine = sys.rk4(t + 0.5 * h_try, &half, 0.5 * h_try);
            let err = sys.error_norm(&coarse, &fine, controls.rel_tol, controls.abs_tol);
            if err > 1.0 {
                record.rejected_steps += 1;
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < h_min {
                    record.terminal_status = TerminalStatus::Diverged;
                    record.diagnostics = Some(format!(
                        "step size underflow (h = {h:e}) at t = {t}"
                    ));
                    break;
                }
                continue;
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if hit { h.max(h_try * grow) } else { h_try * grow };
            record.accepted_steps += 1;
            (if hit { target } else { t + h_try }, fine)
        };
        t = t_new;
        y = y_new;

        if y.iter().any(|v| v.is_nan()) {
            record.terminal_status = TerminalStatus::Diverged;
            record.diagnostics = Some(format!("non-finite state at t = {t}"));
            break;
        }
        if kind == FieldKind::Entropic
            && y.iter().zip(&sys.support).any(|(&v, &s)| s && v < ENTROPIC_LOG_FLOOR)
        {
            record.terminal_status = TerminalStatus::Diverged;
            record.diagnostics = Some(format!("log-probability below log(1e-300) at t = {t}"));
            break;
        }
        let sum: f64 = y.iter().map(|v| v.exp()).sum();
        if (sum - 1.0).abs() > NORM_EPS {
            record.renormalizations += 1;
            let shift = sum.ln();
            for v in y.iter_mut() {
                *v -= shift;
            }
        }

        let obs = sys.observe(t, &y);
        let converged = obs.kl_to_target < controls.convergence_kl;
        let at_sample = next_sample < sample_times.len() && t >= sample_times[next_sample];
        if at_sample {
            next_sample += 1;
        }
        if at_sample || converged || t >= horizon {
            record.samples.push(sample_from(t, obs)?);
        }
        if converged {
            record.terminal_status = TerminalStatus::Converged;
            break;
        }
    }
    Ok(record)
}
