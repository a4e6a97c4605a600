//! Independent reference computations and the claim adjudication matrix.
//!
//! Every verdict is decided by a numerical run: either a statistic that stays inside
//! its tolerance over seeded random instances, or a concrete counterexample.

mod random;
mod reference;

pub use random::{InstanceGenerator, DIMENSIONS, SCORE_RANGE, TEMPERATURE_RANGE};
pub use reference::{
    closed_form_entropic, closed_form_literal, fd_gradient, fd_gradient_checked, fd_jacobian,
    lse, prox_objective, prox_objective_maximizer, reference_log_partition, reference_softmax,
    CheckedGradient, FD_STEP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror::{self, MirrorStepKind, StepSize, StopRule};
use crate::replicator::{
    eval_field, integrate, lyapunov_report, reparameterization_deviation, Controls, FieldKind,
    Sampling, TemperatureSchedule,
};
use crate::simplex::{
    build_face_topk, free_energy, kl_divergence, log_partition, restrict_to_face, softmax,
    ScoreVector, SimplexPoint, Temperature,
};

pub const DEFAULT_SEED: u64 = 20_250_917;
pub const DEFAULT_TRIALS: usize = 24;

/// Claim identifiers in adjudication order.
pub const CLAIM_IDS: [&str; 8] = [
    "cor-convergence",
    "cor-faces",
    "cor-temp-rescale",
    "lemma-forward-invariance",
    "prop-ascent",
    "prop-lyapunov",
    "prop-mirror-step",
    "thm-manifold-3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dynamics {
    #[serde(rename = "exact-prox")]
    ExactProx,
    #[serde(rename = "printed-mw")]
    PrintedMW,
    #[serde(rename = "literal")]
    Literal,
    #[serde(rename = "entropic")]
    Entropic,
}

impl Dynamics {
    pub fn label(self) -> &'static str {
        match self {
            Dynamics::ExactProx => "exact-prox",
            Dynamics::PrintedMW => "printed-mw",
            Dynamics::Literal => "literal",
            Dynamics::Entropic => "entropic",
        }
    }
}

impl From<MirrorStepKind> for Dynamics {
    fn from(k: MirrorStepKind) -> Self {
        match k {
            MirrorStepKind::ExactProx => Dynamics::ExactProx,
            MirrorStepKind::PrintedMW => Dynamics::PrintedMW,
        }
    }
}

impl From<FieldKind> for Dynamics {
    fn from(k: FieldKind) -> Self {
        match k {
            FieldKind::Literal => Dynamics::Literal,
            FieldKind::Entropic => Dynamics::Entropic,
        }
    }
}

impl std::fmt::Display for Dynamics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A point where the claimed property fails, with the offending value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub point: SimplexPoint,
    pub scores: Vec<f64>,
    pub temperature: f64,
    pub value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    /// Worst value of `name` over `trials` seeded instances.
    Statistic { name: String, value: f64, trials: usize },
    Counterexample(Counterexample),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim_id: String,
    pub dynamics: Dynamics,
    pub holds: bool,
    pub evidence: Evidence,
    pub tolerance: f64,
}

/// The part of a verdict that must be reproduced exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedVerdict {
    pub claim_id: String,
    pub dynamics: Dynamics,
    pub holds: bool,
}

impl From<&ClaimVerdict> for ExpectedVerdict {
    fn from(v: &ClaimVerdict) -> Self {
        Self {
            claim_id: v.claim_id.clone(),
            dynamics: v.dynamics,
            holds: v.holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTest {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationConfig {
    pub seed: u64,
    pub trials: usize,
    /// Restrict to these claim ids; `None` runs all of them.
    pub claims: Option<Vec<String>>,
}

impl Default for AdjudicationConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            trials: DEFAULT_TRIALS,
            claims: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationReport {
    pub seed: u64,
    pub trials: usize,
    pub self_tests: Vec<SelfTest>,
    pub verdicts: Vec<ClaimVerdict>,
}

impl AdjudicationReport {
    pub fn matrix(&self) -> Vec<ExpectedVerdict> {
        self.verdicts.iter().map(ExpectedVerdict::from).collect()
    }

    /// Human-readable table, one verdict per line.
    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<26} {:<11} {:<6} evidence\n", "claim", "dynamics", "holds");
        for v in &self.verdicts {
            let evidence = match &v.evidence {
                Evidence::Statistic { name, value, trials } => {
                    format!("{name} = {value:.3e} over {trials} trials (tol {:.0e})", v.tolerance)
                }
                Evidence::Counterexample(c) => format!("counterexample: {} = {:.3e}", c.note, c.value),
            };
            out.push_str(&format!(
                "{:<26} {:<11} {:<6} {}\n",
                v.claim_id,
                v.dynamics.label(),
                v.holds,
                evidence
            ));
        }
        out
    }
}

/// Entries of `expected` that `actual` does not reproduce, plus unexpected extras.
pub fn compare_matrix(expected: &[ExpectedVerdict], actual: &[ExpectedVerdict]) -> Vec<String> {
    let mut problems = Vec::new();
    for e in expected {
        match actual
            .iter()
            .find(|a| a.claim_id == e.claim_id && a.dynamics == e.dynamics)
        {
            None => problems.push(format!("missing verdict {} / {}", e.claim_id, e.dynamics)),
            Some(a) if a.holds != e.holds => problems.push(format!(
                "{} / {}: expected holds = {}, got {}",
                e.claim_id, e.dynamics, e.holds, a.holds
            )),
            _ => {}
        }
    }
    for a in actual {
        if !expected
            .iter()
            .any(|e| e.claim_id == a.claim_id && e.dynamics == a.dynamics)
        {
            problems.push(format!("unexpected verdict {} / {}", a.claim_id, a.dynamics));
        }
    }
    problems
}

fn check(name: &str, passed: bool, detail: String) -> SelfTest {
    SelfTest {
        name: name.into(),
        passed,
        detail,
    }
}

fn sv(v: &[f64]) -> ScoreVector {
    ScoreVector::new(v.to_vec()).expect("static scores")
}

fn temp(v: f64) -> Temperature {
    Temperature::new(v).expect("static temperature")
}

/// Sanity checks on the oracles themselves. They must all pass before any verdict
/// is trusted.
pub fn oracle_self_tests() -> Result<Vec<SelfTest>> {
    let mut out = Vec::new();

    let c = [0.3, -1.2, 2.5];
    let g = fd_gradient(|x| x.iter().zip(&c).map(|(a, b)| a * b).sum(), &[0.1, 0.2, 0.3], FD_STEP);
    let err = g.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(check("fd-gradient-linear", err < 1e-9, format!("max error {err:e}")));

    let a = |x: &[f64]| reference_log_partition(x, 1.0);
    let g = fd_gradient(a, &[1.0, 0.0], FD_STEP);
    let pi = [0.7310585786300049, 0.2689414213699951];
    let err = g.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(check("fd-gradient-log-partition", err < 1e-6, format!("max error {err:e}")));

    let shifted = fd_gradient(a, &[1.0 + 0.75, 0.75], FD_STEP);
    let err = g.iter().zip(&shifted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(check("fd-gradient-shift", err < 1e-6, format!("max change {err:e}")));

    let p = SimplexPoint::new(vec![0.5, 0.3, 0.2])?;
    let s = sv(&[1.0, -0.5, 2.0]);
    let q = prox_objective_maximizer(&p, &s, temp(1.0), 1e-9)?;
    let d = q.linf_distance(&p);
    out.push(check("prox-small-step", d < 1e-7, format!("distance to p {d:e}")));
    let q = prox_objective_maximizer(&p, &s, temp(1.0), 1e12)?;
    let d = q.linf_distance(&reference_softmax(&s, temp(1.0)));
    out.push(check("prox-large-step", d < 1e-7, format!("distance to softmax {d:e}")));

    let d = closed_form_literal(&p, &s, temp(0.5), 0.0)?.linf_distance(&p);
    out.push(check("literal-closed-form-origin", d < 1e-15, format!("distance {d:e}")));
    let d = closed_form_literal(&p, &sv(&[0.4, 0.4, 0.4]), temp(0.5), 7.0)?.linf_distance(&p);
    out.push(check("literal-closed-form-constant", d < 1e-15, format!("distance {d:e}")));
    let d = closed_form_literal(&p, &s, temp(0.5), 200.0)?.linf_distance(&SimplexPoint::vertex(3, 2));
    out.push(check("literal-closed-form-limit", d < 1e-12, format!("distance {d:e}")));

    let d = closed_form_entropic(&p, &s, temp(0.5), 0.0)?.linf_distance(&p);
    out.push(check("entropic-closed-form-origin", d < 1e-15, format!("distance {d:e}")));
    Ok(out)
}

/// Runs the oracle self-tests and then every requested claim.
pub fn run_adjudication(config: &AdjudicationConfig) -> Result<AdjudicationReport> {
    if let Some(claims) = &config.claims {
        if let Some(bad) = claims.iter().find(|c| !CLAIM_IDS.contains(&c.as_str())) {
            return Err(Error::InvalidInput(format!("unknown claim id `{bad}`")));
        }
    }
    if config.trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let self_tests = oracle_self_tests()?;
    if let Some(failed) = self_tests.iter().find(|t| !t.passed) {
        return Err(Error::OracleFailure(format!(
            "self-test {} failed: {}",
            failed.name, failed.detail
        )));
    }
    let wanted = |id: &str| {
        config
            .claims
            .as_ref()
            .map_or(true, |c| c.iter().any(|x| x == id))
    };
    let mut verdicts = Vec::new();
    for (k, id) in CLAIM_IDS.iter().enumerate() {
        if !wanted(id) {
            continue;
        }
        // Each claim gets its own stream so that filtering does not change results.
        let mut rng = InstanceGenerator::new(config.seed.wrapping_add(k as u64));
        let n = config.trials;
        let mut add = |v: ClaimVerdict| verdicts.push(v);
        match *id {
            "cor-convergence" => {
                add(convergence(FieldKind::Literal, &mut rng, n)?);
                add(convergence(FieldKind::Entropic, &mut rng, n)?);
            }
            "cor-faces" => add(faces(&mut rng, n)?),
            "cor-temp-rescale" => {
                add(temp_rescale(FieldKind::Literal, &mut rng, n)?);
                add(temp_rescale(FieldKind::Entropic, &mut rng, n)?);
            }
            "lemma-forward-invariance" => add(forward_invariance(&mut rng, n)?),
            "prop-ascent" => {
                add(ascent(MirrorStepKind::ExactProx, &mut rng, n)?);
                add(ascent(MirrorStepKind::PrintedMW, &mut rng, n)?);
            }
            "prop-lyapunov" => {
                add(lyapunov(FieldKind::Literal, &mut rng, n)?);
                add(lyapunov(FieldKind::Entropic, &mut rng, n)?);
            }
            "prop-mirror-step" => {
                add(mirror_step(MirrorStepKind::ExactProx, &mut rng, n)?);
                add(mirror_step(MirrorStepKind::PrintedMW, &mut rng, n)?);
            }
            "thm-manifold-3" => {
                add(manifold(FieldKind::Literal, &mut rng, n)?);
                add(manifold(FieldKind::Entropic, &mut rng, n)?);
            }
            _ => unreachable!("claim ids are validated above"),
        }
    }
    Ok(AdjudicationReport {
        seed: config.seed,
        trials: config.trials,
        self_tests,
        verdicts,
    })
}

const SMALL_DIMS: [usize; 4] = [2, 3, 8, 64];

/// One random instance.
struct Instance {
    s: ScoreVector,
    t: Temperature,
    p0: SimplexPoint,
}

fn instance(rng: &mut InstanceGenerator, dims: &[usize]) -> Instance {
    let v = rng.dimension_from(dims);
    Instance {
        s: rng.scores(v),
        t: rng.temperature(),
        p0: rng.interior_point(v),
    }
}

/// Accumulates the worst statistic over trials, stopping at the first violation.
struct Trials {
    claim_id: &'static str,
    dynamics: Dynamics,
    statistic: &'static str,
    tolerance: f64,
    worst: f64,
    count: usize,
}

impl Trials {
    fn new(claim_id: &'static str, dynamics: Dynamics, statistic: &'static str, tolerance: f64) -> Self {
        Self {
            claim_id,
            dynamics,
            statistic,
            tolerance,
            worst: f64::NEG_INFINITY,
            count: 0,
        }
    }

    fn record(&mut self, value: f64) {
        self.worst = self.worst.max(value);
        self.count += 1;
    }

    fn passed(self) -> ClaimVerdict {
        ClaimVerdict {
            claim_id: self.claim_id.into(),
            dynamics: self.dynamics,
            holds: true,
            evidence: Evidence::Statistic {
                name: self.statistic.into(),
                value: self.worst,
                trials: self.count,
            },
            tolerance: self.tolerance,
        }
    }

    fn failed(self, c: Counterexample) -> ClaimVerdict {
        ClaimVerdict {
            claim_id: self.claim_id.into(),
            dynamics: self.dynamics,
            holds: false,
            evidence: Evidence::Counterexample(c),
            tolerance: self.tolerance,
        }
    }
}

fn counterexample(p: &SimplexPoint, s: &ScoreVector, t: Temperature, value: f64, note: &str) -> Counterexample {
    Counterexample {
        point: p.clone(),
        scores: s.values().to_vec(),
        temperature: t.value(),
        value,
        note: note.into(),
    }
}

/// The canonical two-token instance `s = (1, 0)`, `T = 1`, started at softmax.
fn two_token_at_softmax() -> (ScoreVector, Temperature, SimplexPoint) {
    let s = sv(&[1.0, 0.0]);
    let t = temp(1.0);
    let p = softmax(&s, t);
    (s, t, p)
}

fn long_run_controls() -> Controls {
    Controls {
        convergence_kl: 1e-12,
        ..Controls::default()
    }
}

/// Free energy never decreases across one step.
fn ascent(kind: MirrorStepKind, rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-10;
    let mut trials = Trials::new("prop-ascent", kind.into(), "largest free-energy decrease per step", TOL);
    let (s, t, p) = two_token_at_softmax();
    let mut cases = vec![(s, t, p, 0.5)];
    for _ in 0..n {
        let x = instance(rng, &SMALL_DIMS);
        let eta = [0.1, 0.5, 1.0][rng.index(3)];
        let start = if rng.index(2) == 0 { softmax(&x.s, x.t) } else { x.p0 };
        cases.push((x.s, x.t, start, eta));
    }
    for (s, t, p, eta) in cases {
        let record = mirror::iterate(
            kind,
            &p,
            &s,
            t,
            StepSize::new(eta)?,
            StopRule {
                max_steps: 200,
                kl_tol: 1e-14,
            },
        )?;
        let mut prev = record.initial_free_energy;
        let mut drop = 0.0f64;
        for step in &record.steps {
            drop = drop.max(prev - step.free_energy);
            prev = step.free_energy;
        }
        if drop > TOL {
            let note = format!("largest one-step free-energy decrease with eta {eta}");
            return Ok(trials.failed(counterexample(&p, &s, t, drop, &note)));
        }
        trials.record(drop);
    }
    Ok(trials.passed())
}

/// The step equals the maximizer of the KL-prox objective.
fn mirror_step(kind: MirrorStepKind, rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-8;
    let mut trials = Trials::new(
        "prop-mirror-step",
        kind.into(),
        "distance to the numerical prox maximizer",
        TOL,
    );
    for _ in 0..n {
        let x = instance(rng, &[2, 3, 8, 16]);
        let eta = rng.uniform(0.05, 2.0);
        let step = mirror::mirror_step(kind, &x.p0, &x.s, x.t, StepSize::new(eta)?)?;
        let best = prox_objective_maximizer(&x.p0, &x.s, x.t, eta)?;
        let d = step.linf_distance(&best);
        if d > TOL {
            let gap = prox_objective(&best, &x.p0, &x.s, x.t, eta) - prox_objective(&step, &x.p0, &x.s, x.t, eta);
            let note = format!("prox objective shortfall with eta {eta:.4}");
            return Ok(trials.failed(counterexample(&x.p0, &x.s, x.t, gap, &note)));
        }
        trials.record(d);
    }
    Ok(trials.passed())
}

/// `F` is nondecreasing along the flow.
fn lyapunov(kind: FieldKind, rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-9;
    let mut trials = Trials::new("prop-lyapunov", kind.into(), "largest free-energy drop between samples", TOL);
    let (s, t, p) = two_token_at_softmax();
    let mut cases = vec![(s, t, p)];
    for _ in 0..n {
        let x = instance(rng, &SMALL_DIMS);
        cases.push((x.s, x.t, x.p0));
    }
    for (s, t, p) in cases {
        let traj = integrate(kind, &p, &s, &TemperatureSchedule::constant(t), 50.0, &long_run_controls())?;
        let report = lyapunov_report(&traj, &s, t);
        if !report.monotone {
            return Ok(trials.failed(counterexample(&p, &s, t, -report.worst_drop, "free-energy drop along the trajectory")));
        }
        trials.record((-report.worst_drop).max(0.0));
    }
    Ok(trials.passed())
}

/// Softmax is a rest point of the field and attracts interior starts.
fn manifold(kind: FieldKind, rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-8;
    let mut trials = Trials::new(
        "thm-manifold-3",
        kind.into(),
        "field norm at softmax and terminal KL to softmax",
        TOL,
    );
    let (s, t, p) = two_token_at_softmax();
    let mut cases = vec![(s, t, p)];
    for _ in 0..n {
        let x = instance(rng, &SMALL_DIMS);
        cases.push((x.s, x.t, x.p0));
    }
    for (s, t, p0) in cases {
        let pi = softmax(&s, t);
        let norm = eval_field(kind, &pi, &s, t)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > TOL {
            return Ok(trials.failed(counterexample(&pi, &s, t, norm, "field norm at softmax")));
        }
        let traj = integrate(kind, &p0, &s, &TemperatureSchedule::constant(t), 1e3, &long_run_controls())?;
        let kl = kl_divergence(&traj.terminal().p, &pi)?;
        if !(kl <= TOL) {
            return Ok(trials.failed(counterexample(&p0, &s, t, kl, "terminal KL to softmax")));
        }
        trials.record(norm.max(kl));
    }
    Ok(trials.passed())
}

/// Interior trajectories converge to softmax and `F` rises to the log-partition.
fn convergence(kind: FieldKind, rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-8;
    let mut trials = Trials::new(
        "cor-convergence",
        kind.into(),
        "terminal KL to softmax and free-energy gap to A(s)",
        TOL,
    );
    let s = sv(&[1.0, 0.0]);
    let mut cases = vec![(s, temp(1.0), SimplexPoint::uniform(2))];
    for _ in 0..n {
        let x = instance(rng, &SMALL_DIMS);
        cases.push((x.s, x.t, x.p0));
    }
    for (s, t, p0) in cases {
        let traj = integrate(kind, &p0, &s, &TemperatureSchedule::constant(t), 1e3, &long_run_controls())?;
        let end = &traj.terminal().p;
        let kl = kl_divergence(end, &softmax(&s, t))?;
        let gap = (log_partition(&s, t) - free_energy(end, &s, t)?.value).abs();
        let worst = kl.max(gap);
        if !(worst <= TOL) {
            return Ok(trials.failed(counterexample(&p0, &s, t, worst, "terminal KL / free-energy gap")));
        }
        trials.record(worst);
    }
    Ok(trials.passed())
}

/// Temperature schedules act as a reparameterization of time.
fn temp_rescale(kind: FieldKind, rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-7;
    let mut trials = Trials::new(
        "cor-temp-rescale",
        kind.into(),
        "trajectory deviation under the effective-time map",
        TOL,
    );
    let controls = Controls {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..Controls::default()
    };
    let mut cases = vec![(
        sv(&[1.0, 0.0]),
        SimplexPoint::uniform(2),
        TemperatureSchedule::Constant { value: 2.0 },
    )];
    for k in 0..n {
        let x = instance(rng, &[2, 3, 8]);
        let schedule = match k % 3 {
            0 => TemperatureSchedule::constant(x.t),
            1 => TemperatureSchedule::piecewise(
                vec![1.0, 2.5],
                vec![x.t.value(), rng.uniform(0.25, 4.0), rng.uniform(0.25, 4.0)],
            )?,
            _ => TemperatureSchedule::exponential(x.t.value(), rng.uniform(-0.5, 0.5))?,
        };
        cases.push((x.s, x.p0, schedule));
    }
    for (s, p0, schedule) in cases {
        let check = reparameterization_deviation(kind, &s, &p0, &schedule, 5.0, &controls)?;
        if check.max_deviation > TOL {
            let t = temp(schedule.at(0.0));
            return Ok(trials.failed(counterexample(&p0, &s, t, check.max_deviation, "deviation from the reparameterized unit-temperature run")));
        }
        trials.record(check.max_deviation);
    }
    Ok(trials.passed())
}

/// Zero coordinates stay exactly zero and positive ones stay positive.
fn forward_invariance(rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    let mut trials = Trials::new(
        "lemma-forward-invariance",
        Dynamics::Literal,
        "coordinates leaving their face",
        0.0,
    );
    for _ in 0..n {
        let x = instance(rng, &[3, 8, 64]);
        let v = x.s.len();
        let zeros = 1 + rng.index(v - 1);
        let mut probs = x.p0.probs().to_vec();
        for _ in 0..zeros {
            probs[rng.index(v)] = 0.0;
        }
        if probs.iter().all(|&q| q == 0.0) {
            probs[0] = 1.0;
        }
        let total: f64 = probs.iter().sum();
        let p0 = SimplexPoint::new(probs.iter().map(|q| q / total).collect())?;
        let controls = Controls {
            convergence_kl: 0.0,
            sampling: Sampling::Uniform { count: 201 },
            ..Controls::default()
        };
        let traj = integrate(FieldKind::Literal, &p0, &x.s, &TemperatureSchedule::constant(x.t), 20.0, &controls)?;
        let escaped = traj
            .samples
            .iter()
            .map(|sample| {
                sample
                    .p
                    .probs()
                    .iter()
                    .zip(p0.probs())
                    .filter(|(now, start)| (**start == 0.0) != (**now == 0.0))
                    .count()
            })
            .max()
            .unwrap_or(0);
        if escaped > 0 {
            return Ok(trials.failed(counterexample(&p0, &x.s, x.t, escaped as f64, "coordinates that changed support")));
        }
        trials.record(0.0);
    }
    Ok(trials.passed())
}

/// A run on a face coincides with the run of the restricted system.
fn faces(rng: &mut InstanceGenerator, n: usize) -> Result<ClaimVerdict> {
    const TOL: f64 = 1e-8;
    let mut trials = Trials::new("cor-faces", Dynamics::Literal, "face run vs restricted run", TOL);
    for _ in 0..n {
        let x = instance(rng, &[3, 8, 64]);
        let k = 2 + rng.index(x.s.len() - 1);
        let mask = build_face_topk(&x.s, k)?;
        let (s_face, p_face) = restrict_to_face(&x.s, &x.p0, &mask)?;
        let p_full = mask.embed(&p_face)?;
        let controls = Controls {
            convergence_kl: 0.0,
            sampling: Sampling::Uniform { count: 101 },
            ..Controls::default()
        };
        let schedule = TemperatureSchedule::constant(x.t);
        let full = integrate(FieldKind::Literal, &p_full, &x.s, &schedule, 20.0, &controls)?;
        let small = integrate(FieldKind::Literal, &p_face, &s_face, &schedule, 20.0, &controls)?;
        let mut worst = 0.0f64;
        for (a, b) in full.samples.iter().zip(&small.samples) {
            worst = worst.max(a.p.linf_distance(&mask.embed(&b.p)?));
        }
        if full.samples.len() != small.samples.len() || worst > TOL {
            return Ok(trials.failed(counterexample(&p_full, &x.s, x.t, worst, "face vs restricted deviation")));
        }
        trials.record(worst);
    }
    Ok(trials.passed())
}
