//! Continuous-time replicator dynamics on the simplex.
//!
//! Two vector fields share the form `X_i = p_i (f_i − Σ_j p_j f_j)`:
//!
//! * [`FieldKind::Literal`] with fitness `f = s/T`. Its interior rest points require
//!   constant scores; for generic `s` it flows to the argmax vertex set.
//! * [`FieldKind::Entropic`] with fitness `f = (s − T log p)/T`, the natural gradient of
//!   the free energy under the Shahshahani metric. It vanishes at `softmax(s, T)` and
//!   converges there.

mod integrate;
mod schedule;

pub use integrate::{integrate, integrate_scores, Controls, Sampling, DEFAULT_HORIZON};
pub use schedule::{effective_time, EffectiveTime, TemperatureSchedule};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror::{self, MirrorStepKind, StepSize};
use crate::simplex::{free_energy_raw, ScoreVector, SimplexPoint, Temperature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    Literal,
    Entropic,
}

impl FieldKind {
    pub fn label(self) -> &'static str {
        match self {
            FieldKind::Literal => "literal",
            FieldKind::Entropic => "entropic",
        }
    }
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "entropic" => Ok(Self::Entropic),
            other => Err(Error::InvalidInput(format!("unknown dynamics `{other}`"))),
        }
    }
}

/// Anything that yields a score vector at a point of the simplex: fixed logits, or a
/// path-dependent field `s(p)`.
pub trait ScoreSource: Sync {
    fn dim(&self) -> usize;
    fn scores_into(&self, p: &[f64], out: &mut [f64]);

    fn scores_at(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.scores_into(p, &mut out);
        out
    }
}

impl ScoreSource for ScoreVector {
    fn dim(&self) -> usize {
        self.len()
    }
    fn scores_into(&self, _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.values());
    }
}

/// Fitness in log-coordinates; zero off the support of `p`.
pub(crate) fn fitness_into(
    kind: FieldKind,
    scores: &[f64],
    logp: &[f64],
    support: &[bool],
    t: f64,
    out: &mut [f64],
) {
    for i in 0..scores.len() {
        out[i] = if !support[i] {
            0.0
        } else {
            match kind {
                FieldKind::Literal => scores[i] / t,
                FieldKind::Entropic => scores[i] / t - logp[i],
            }
        };
    }
}

/// `X_i = p_i (f_i − f̄)` with the weighted mean subtracted before scaling.
pub(crate) fn field_from_fitness(p: &[f64], fitness: &[f64]) -> Vec<f64> {
    let mean: f64 = p.iter().zip(fitness).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(fitness)
        .map(|(&pi, &fi)| if pi == 0.0 { 0.0 } else { pi * (fi - mean) })
        .collect()
}

/// Field restricted to the support of `p`. The entropic fitness is evaluated only where
/// `p_i > 0`, which is the face-relative version of the field.
pub(crate) fn field_on_support(kind: FieldKind, p: &SimplexPoint, scores: &[f64], t: f64) -> Vec<f64> {
    let support: Vec<bool> = p.probs().iter().map(|&v| v > 0.0).collect();
    let logp = p.log_probs();
    let mut f = vec![0.0; scores.len()];
    fitness_into(kind, scores, &logp, &support, t, &mut f);
    field_from_fitness(p.probs(), &f)
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Evaluates the chosen replicator field at `p`.
///
/// The entropic field needs `log p` and therefore a strictly interior point.
pub fn eval_field(
    kind: FieldKind,
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
) -> Result<Vec<f64>> {
    eval_field_with_scores(kind, p, s.values(), t)
}

pub(crate) fn eval_field_with_scores(
    kind: FieldKind,
    p: &SimplexPoint,
    scores: &[f64],
    t: Temperature,
) -> Result<Vec<f64>> {
    if p.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: point has {}, scores have {}",
            p.len(),
            scores.len()
        )));
    }
    if kind == FieldKind::Entropic {
        if let Some(index) = p.first_zero() {
            return Err(Error::NotInterior { index });
        }
    }
    Ok(field_on_support(kind, p, scores, t.value()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub p: SimplexPoint,
    pub free_energy: f64,
    /// Entropic: `KL(p‖softmax)` on the support. Literal: `−log` of the mass on the
    /// argmax set, i.e. the KL from `p` conditioned on that set back to `p`.
    pub kl_to_target: f64,
    pub field_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalStatus {
    Converged,
    MaxTime,
    Diverged,
}

impl TerminalStatus {
    pub fn label(self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxTime => "max-time",
            TerminalStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub kind: FieldKind,
    pub samples: Vec<TrajectorySample>,
    pub terminal_status: TerminalStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Accepted steps whose mass drifted by more than `NORM_EPS` before renormalization.
    pub renormalizations: usize,
    pub diagnostics: Option<String>,
}

impl TrajectoryRecord {
    pub fn terminal(&self) -> &TrajectorySample {
        self.samples.last().expect("a trajectory always holds its initial sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn free_energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.free_energy).collect()
    }
}

/// Monotonicity scan of the free energy along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub monotone: bool,
    /// Smallest consecutive difference `F(t_{k+1}) − F(t_k)`; 0 with fewer than two samples.
    pub worst_drop: f64,
}

/// Slack allowed per consecutive sample pair before a decrease counts.
pub const LYAPUNOV_SLACK: f64 = 1e-9;

impl LyapunovReport {
    pub fn from_values(values: &[f64]) -> Self {
        let worst_drop = values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let worst_drop = if worst_drop.is_finite() { worst_drop } else { 0.0 };
        Self {
            monotone: worst_drop >= -LYAPUNOV_SLACK,
            worst_drop,
        }
    }
}

/// Recomputes `F = ⟨p,s⟩ + T·H(p)` at every sample and scans for decreases.
pub fn lyapunov_report(traj: &TrajectoryRecord, s: &ScoreVector, t: Temperature) -> LyapunovReport {
    let values: Vec<f64> = traj
        .samples
        .iter()
        .map(|x| free_energy_raw(&x.p, s.values(), t.value()).value)
        .collect();
    LyapunovReport::from_values(&values)
}

/// Result of comparing a discrete step against the field it should linearize to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerConsistency {
    pub etas: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares slope of `log r` against `log η`; `+inf` when every residual vanishes.
    pub order: f64,
}

/// `r(η) = ‖(step(p, η) − p)/η − X(p)‖∞` over a ladder of step sizes.
///
/// `PrintedMW` is compared with the literal field. `ExactProx` is run with step `η/T`,
/// the scaling under which its first-order term is the entropic field (both maps then
/// advance the same unit of time).
pub fn euler_consistency(
    step_kind: MirrorStepKind,
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    etas: &[f64],
) -> Result<EulerConsistency> {
    let field_kind = match step_kind {
        MirrorStepKind::PrintedMW => FieldKind::Literal,
        MirrorStepKind::ExactProx => FieldKind::Entropic,
    };
    let field = eval_field(field_kind, p, s, t)?;
    let mut residuals = Vec::with_capacity(etas.len());
    for &eta in etas {
        let step = match step_kind {
            MirrorStepKind::PrintedMW => eta,
            MirrorStepKind::ExactProx => eta / t.value(),
        };
        let q = mirror::mirror_step(step_kind, p, s, t, StepSize::new(step)?)?;
        let r = q
            .probs()
            .iter()
            .zip(p.probs())
            .zip(&field)
            .map(|((qi, pi), xi)| ((qi - pi) / eta - xi).abs())
            .fold(0.0, f64::max);
        residuals.push(r);
    }
    let order = fit_order(etas, &residuals);
    Ok(EulerConsistency {
        etas: etas.to_vec(),
        residuals,
        order,
    })
}

/// Slope of `log r` vs `log η` over the positive residuals.
fn fit_order(etas: &[f64], residuals: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = etas
        .iter()
        .zip(residuals)
        .filter(|(_, &r)| r > 1e-300)
        .map(|(&e, &r)| (e.ln(), r.ln()))
        .collect();
    if pts.is_empty() {
        return f64::INFINITY;
    }
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Outcome of the temperature-as-time comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReparamCheck {
    /// `max_k ‖p(t_k) − p̃(τ(t_k))‖∞`.
    pub max_deviation: f64,
    /// Contract bound: ten times `rel_tol + abs_tol`.
    pub tolerance: f64,
    pub within_contract: bool,
}

/// Number of comparison points on `[0, horizon]`.
const REPARAM_POINTS: usize = 101;

/// Integrates the schedule-driven system and the unit-temperature system, then compares
/// `p(t)` with `p̃(τ(t))`.
///
/// The identity is exact only for the literal field, where `T` enters as a pure `1/T`
/// prefactor; the entropic field is rejected. [`reparameterization_deviation`] computes
/// the same statistic for either kind.
pub fn check_time_reparameterization(
    kind: FieldKind,
    s: &ScoreVector,
    p0: &SimplexPoint,
    schedule: &TemperatureSchedule,
    horizon: f64,
    controls: &Controls,
) -> Result<ReparamCheck> {
    if kind != FieldKind::Literal {
        return Err(Error::UnsupportedIdentity(
            "temperature enters the entropic fitness beyond a 1/T prefactor".into(),
        ));
    }
    reparameterization_deviation(kind, s, p0, schedule, horizon, controls)
}

/// Statistic behind [`check_time_reparameterization`], without the kind restriction.
pub fn reparameterization_deviation(
    kind: FieldKind,
    s: &ScoreVector,
    p0: &SimplexPoint,
    schedule: &TemperatureSchedule,
    horizon: f64,
    controls: &Controls,
) -> Result<ReparamCheck> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let times: Vec<f64> = (0..REPARAM_POINTS)
        .map(|k| horizon * k as f64 / (REPARAM_POINTS - 1) as f64)
        .collect();
    let taus: Vec<f64> = times
        .iter()
        .map(|&t| effective_time(schedule, t).value())
        .collect();

    let mut c = controls.clone();
    c.convergence_kl = 0.0;
    c.sampling = Sampling::Times(times);
    let driven = integrate(kind, p0, s, schedule, horizon, &c)?;

    c.sampling = Sampling::Times(taus.clone());
    let unit = TemperatureSchedule::Constant { value: 1.0 };
    let reference = integrate(kind, p0, s, &unit, *taus.last().unwrap(), &c)?;

    if driven.samples.len() != reference.samples.len() {
        return Err(Error::OracleFailure(format!(
            "reparameterization runs ended early ({:?} / {:?})",
            driven.terminal_status, reference.terminal_status
        )));
    }
    let max_deviation = driven
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(a, b)| a.p.linf_distance(&b.p))
        .fold(0.0, f64::max);
    let tolerance = 10.0 * (controls.rel_tol + controls.abs_tol);
    Ok(ReparamCheck {
        max_deviation,
        tolerance,
        within_contract: max_deviation <= tolerance,
    })
}
