//! Discrete constraint-respecting updates on the simplex.
//!
//! Two one-step maps are provided:
//!
//! * [`MirrorStepKind::ExactProx`]: the maximizer of `⟨q,s⟩ + T·H(q) − D(q‖p)/η`.
//!   Stationarity gives `log q_i = (log p_i + η s_i)/(1 + ηT) + const`, whose fixed point
//!   is `softmax(s, T)` for every `η > 0`.
//! * [`MirrorStepKind::PrintedMW`]: the multiplicative-weights map
//!   `q_i ∝ p_i exp((η/T) s_i)`. It drops the entropy gradient, so repeated application
//!   concentrates on the argmax of `s` instead of converging to softmax.
//!
//! Iterates are carried as normalized log-probabilities so long multiplicative runs do
//! not underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{kl_from_logs, log_sum_exp, normalize_logs};
use crate::simplex::{log_softmax, ScoreVector, SimplexPoint, Temperature};

pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_KL_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MirrorStepKind {
    ExactProx,
    PrintedMW,
}

impl MirrorStepKind {
    pub fn label(self) -> &'static str {
        match self {
            MirrorStepKind::ExactProx => "exact-prox",
            MirrorStepKind::PrintedMW => "printed-mw",
        }
    }
}

impl std::fmt::Display for MirrorStepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MirrorStepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-prox" => Ok(Self::ExactProx),
            "printed-mw" => Ok(Self::PrintedMW),
            other => Err(Error::InvalidInput(format!("unknown step kind `{other}`"))),
        }
    }
}

/// Positive, finite step size `η`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StepSize(f64);

impl StepSize {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "step size must be positive and finite, got {eta}"
            )));
        }
        Ok(Self(eta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for StepSize {
    fn default() -> Self {
        Self(DEFAULT_ETA)
    }
}

impl TryFrom<f64> for StepSize {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StepSize> for f64 {
    fn from(s: StepSize) -> Self {
        s.0
    }
}

/// One-step ascent bookkeeping: `slack = F(p⁺) − F(p) − D(p⁺‖p)/η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentCertificate {
    pub f_before: f64,
    pub f_after: f64,
    pub kl_move: f64,
    pub slack: f64,
}

fn require_interior(p: &SimplexPoint) -> Result<()> {
    match p.first_zero() {
        Some(index) => Err(Error::NotInterior { index }),
        None => Ok(()),
    }
}

fn check_dims(p: &SimplexPoint, s: &ScoreVector) -> Result<()> {
    if p.len() != s.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: point has {}, scores have {}",
            p.len(),
            s.len()
        )));
    }
    Ok(())
}

/// One step in log space; the result is normalized.
pub(crate) fn step_logs(
    kind: MirrorStepKind,
    logp: &[f64],
    s: &[f64],
    t: f64,
    eta: f64,
) -> Vec<f64> {
    let mut out: Vec<f64> = match kind {
        MirrorStepKind::ExactProx => {
            let denom = 1.0 + eta * t;
            logp.iter()
                .zip(s)
                .map(|(&lp, &si)| (lp + eta * si) / denom)
                .collect()
        }
        MirrorStepKind::PrintedMW => {
            let rate = eta / t;
            logp.iter().zip(s).map(|(&lp, &si)| lp + rate * si).collect()
        }
    };
    normalize_logs(&mut out);
    out
}

/// `F` evaluated from normalized log-probabilities.
pub(crate) fn free_energy_from_logs(logp: &[f64], s: &[f64], t: f64) -> f64 {
    let mut inner = 0.0;
    let mut h = 0.0;
    for (&lp, &si) in logp.iter().zip(s) {
        let p = lp.exp();
        if p > 0.0 {
            inner += p * si;
            h -= p * lp;
        }
    }
    inner + t * h.max(0.0)
}

fn certificate_from_logs(
    before: &[f64],
    after: &[f64],
    s: &[f64],
    t: f64,
    eta: f64,
) -> AscentCertificate {
    let f_before = free_energy_from_logs(before, s, t);
    let f_after = free_energy_from_logs(after, s, t);
    let kl_move = kl_from_logs(after, before).expect("steps preserve the support");
    AscentCertificate {
        f_before,
        f_after,
        kl_move,
        slack: f_after - f_before - kl_move / eta,
    }
}

/// Closed-form maximizer of the KL-prox objective started from interior `p`.
pub fn exact_prox_step(
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: StepSize,
) -> Result<SimplexPoint> {
    mirror_step(MirrorStepKind::ExactProx, p, s, t, eta)
}

/// `q_i ∝ p_i exp((η/T) s_i)`.
pub fn printed_mw_step(
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: StepSize,
) -> Result<SimplexPoint> {
    mirror_step(MirrorStepKind::PrintedMW, p, s, t, eta)
}

pub fn mirror_step(
    kind: MirrorStepKind,
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: StepSize,
) -> Result<SimplexPoint> {
    check_dims(p, s)?;
    require_interior(p)?;
    let next = step_logs(kind, &p.log_probs(), s.values(), t.value(), eta.value());
    SimplexPoint::from_log_weights(&next)
}

/// Free energy before and after one step of `kind`, with the ascent slack.
///
/// For `ExactProx` the slack is nonnegative up to rounding (the prox objective at the
/// new point dominates its value at the old point). `PrintedMW` carries no guarantee.
pub fn ascent_certificate(
    kind: MirrorStepKind,
    p: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: StepSize,
) -> Result<AscentCertificate> {
    check_dims(p, s)?;
    require_interior(p)?;
    let before = p.log_probs();
    let after = step_logs(kind, &before, s.values(), t.value(), eta.value());
    Ok(certificate_from_logs(
        &before,
        &after,
        s.values(),
        t.value(),
        eta.value(),
    ))
}

/// Stop after `max_steps` or once the per-step move `D(p_{t+1}‖p_t)` drops below `kl_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_steps: usize,
    pub kl_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            kl_tol: DEFAULT_KL_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterateStatus {
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateStep {
    pub step: usize,
    pub p: SimplexPoint,
    pub free_energy: f64,
    /// `D(p_{t+1}‖p_t)`.
    pub kl_step: f64,
    pub kl_to_softmax: f64,
    pub certificate: AscentCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub kind: MirrorStepKind,
    pub eta: f64,
    pub temperature: f64,
    pub initial: SimplexPoint,
    pub initial_free_energy: f64,
    pub initial_kl_to_softmax: f64,
    pub steps: Vec<IterateStep>,
    pub status: IterateStatus,
}

impl IterateRecord {
    pub fn terminal(&self) -> &SimplexPoint {
        self.steps.last().map(|s| &s.p).unwrap_or(&self.initial)
    }

    pub fn terminal_kl_to_softmax(&self) -> f64 {
        self.steps
            .last()
            .map(|s| s.kl_to_softmax)
            .unwrap_or(self.initial_kl_to_softmax)
    }

    /// Most negative ascent slack over all recorded steps (`+inf` when there are none).
    pub fn min_slack(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.certificate.slack)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Repeats one step kind from `p0`, recording free energy, KL to softmax and the ascent
/// certificate of every step. Hitting `max_steps` is reported through the status.
pub fn iterate(
    kind: MirrorStepKind,
    p0: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: StepSize,
    stop: StopRule,
) -> Result<IterateRecord> {
    check_dims(p0, s)?;
    require_interior(p0)?;
    if stop.kl_tol.is_nan() || stop.kl_tol < 0.0 {
        return Err(Error::InvalidInput("kl_tol must be nonnegative".into()));
    }
    let target = log_softmax(s, t);
    let (tv, ev) = (t.value(), eta.value());
    let mut logp = p0.log_probs();
    normalize_logs(&mut logp);

    let mut record = IterateRecord {
        kind,
        eta: ev,
        temperature: tv,
        initial: p0.clone(),
        initial_free_energy: free_energy_from_logs(&logp, s.values(), tv),
        initial_kl_to_softmax: kl_from_logs(&logp, &target).unwrap_or(f64::INFINITY),
        steps: Vec::new(),
        status: IterateStatus::MaxSteps,
    };

    for step in 1..=stop.max_steps {
        let next = step_logs(kind, &logp, s.values(), tv, ev);
        let certificate = certificate_from_logs(&logp, &next, s.values(), tv, ev);
        let kl_to_softmax = kl_from_logs(&next, &target).unwrap_or(f64::INFINITY);
        record.steps.push(IterateStep {
            step,
            p: SimplexPoint::from_log_weights(&next)?,
            free_energy: certificate.f_after,
            kl_step: certificate.kl_move,
            kl_to_softmax,
            certificate,
        });
        logp = next;
        if certificate.kl_move < stop.kl_tol {
            record.status = IterateStatus::Converged;
            break;
        }
    }
    Ok(record)
}

/// `t` printed-MW steps collapse into one step with `η' = tη`; this evaluates that
/// closed form directly.
pub fn printed_mw_telescoped(
    p0: &SimplexPoint,
    s: &ScoreVector,
    t: Temperature,
    eta: StepSize,
    steps: usize,
) -> Result<SimplexPoint> {
    check_dims(p0, s)?;
    require_interior(p0)?;
    let rate = steps as f64 * eta.value() / t.value();
    let logs: Vec<f64> = p0
        .log_probs()
        .iter()
        .zip(s.values())
        .map(|(lp, si)| lp + rate * si)
        .collect();
    let lse = log_sum_exp(&logs);
    SimplexPoint::from_log_weights(&logs.iter().map(|l| l - lse).collect::<Vec<_>>())
}
