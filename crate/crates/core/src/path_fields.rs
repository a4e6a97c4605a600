//! Path-dependent scores `s(p) = s0 + B·p`.
//!
//! The symmetric part of `B` is the gradient of the potential `½⟨p, Bp⟩`; the
//! antisymmetric part is pure curl. Curl makes the flow nonconservative and allows
//! closed orbits; strong symmetric coupling creates several attracting basins.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replicator::{
    eval_field_with_scores, integrate_scores, Controls, FieldKind, ScoreSource,
    TemperatureSchedule, TerminalStatus, TrajectoryRecord,
};
use crate::simplex::{entropy, ScoreVector, SimplexPoint, Temperature};

pub const DEFAULT_DELTA_REC: f64 = 1e-3;
pub const DEFAULT_MIN_SEPARATION: f64 = 0.5;
/// The path must leave a ball of this many `δ_rec` around the loop start.
pub const EXCURSION_FACTOR: f64 = 5.0;
/// Terminal points closer than this (sup norm) share a basin.
pub const BASIN_RADIUS: f64 = 1e-4;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreFieldKind {
    Constant(ScoreVector),
    Linear { s0: ScoreVector, b: DMatrix<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreFieldWire", into = "ScoreFieldWire")]
pub struct ScoreField {
    kind: ScoreFieldKind,
    lipschitz_bound: f64,
}

/// JSON layout: `{"kind": "constant" | "linear", "s0": [...], "B": [row-major]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoreFieldWire {
    kind: String,
    s0: Vec<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
}

impl TryFrom<ScoreFieldWire> for ScoreField {
    type Error = Error;
    fn try_from(w: ScoreFieldWire) -> Result<Self> {
        let s0 = ScoreVector::new(w.s0)?;
        match (w.kind.as_str(), w.b) {
            ("constant", None) => Ok(Self::constant(s0)),
            ("linear", Some(b)) => {
                let n = s0.len();
                if b.len() != n * n {
                    return Err(Error::InvalidInput(format!(
                        "B needs {} entries, got {}",
                        n * n,
                        b.len()
                    )));
                }
                Self::linear(s0, DMatrix::from_row_slice(n, n, &b))
            }
            ("constant", Some(_)) => Err(Error::InvalidInput("constant field takes no B".into())),
            ("linear", None) => Err(Error::InvalidInput("linear field needs B".into())),
            (other, _) => Err(Error::InvalidInput(format!("unknown field kind `{other}`"))),
        }
    }
}

impl From<ScoreField> for ScoreFieldWire {
    fn from(f: ScoreField) -> Self {
        match f.kind {
            ScoreFieldKind::Constant(s0) => Self {
                kind: "constant".into(),
                s0: s0.into(),
                b: None,
            },
            ScoreFieldKind::Linear { s0, b } => {
                let n = b.nrows();
                let flat = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| b[(i, j)]);
                Self {
                    kind: "linear".into(),
                    s0: s0.into(),
                    b: Some(flat.collect()),
                }
            }
        }
    }
}

impl ScoreField {
    pub fn constant(s0: ScoreVector) -> Self {
        Self {
            kind: ScoreFieldKind::Constant(s0),
            lipschitz_bound: 0.0,
        }
    }

    pub fn linear(s0: ScoreVector, b: DMatrix<f64>) -> Result<Self> {
        let n = s0.len();
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "B must be {n}×{n}, got {}×{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("B has non-finite entries".into()));
        }
        let lipschitz_bound = b.clone().singular_values().max();
        Ok(Self {
            kind: ScoreFieldKind::Linear { s0, b },
            lipschitz_bound,
        })
    }

    pub fn kind(&self) -> &ScoreFieldKind {
        &self.kind
    }

    /// Spectral norm of the Jacobian of `s(p)`, i.e. `‖B‖₂`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn base_scores(&self) -> &ScoreVector {
        match &self.kind {
            ScoreFieldKind::Constant(s0) | ScoreFieldKind::Linear { s0, .. } => s0,
        }
    }

    pub fn coupling(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            ScoreFieldKind::Constant(_) => None,
            ScoreFieldKind::Linear { b, .. } => Some(b),
        }
    }

    /// Same field with `s0` shifted by `c·1`.
    pub fn shifted(&self, c: f64) -> Self {
        let kind = match &self.kind {
            ScoreFieldKind::Constant(s0) => ScoreFieldKind::Constant(s0.shifted(c)),
            ScoreFieldKind::Linear { s0, b } => ScoreFieldKind::Linear {
                s0: s0.shifted(c),
                b: b.clone(),
            },
        };
        Self {
            kind,
            lipschitz_bound: self.lipschitz_bound,
        }
    }

    /// Same `s0`, coupling multiplied by `factor`.
    pub fn with_coupling_scaled(&self, factor: f64) -> Result<Self> {
        match &self.kind {
            ScoreFieldKind::Constant(_) => Ok(self.clone()),
            ScoreFieldKind::Linear { s0, b } => Self::linear(s0.clone(), b * factor),
        }
    }

    pub fn scores(&self, p: &SimplexPoint) -> Result<Vec<f64>> {
        if p.len() != self.dim() {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        Ok(self.scores_at(p.probs()))
    }
}

impl ScoreSource for ScoreField {
    fn dim(&self) -> usize {
        self.base_scores().len()
    }

    fn scores_into(&self, p: &[f64], out: &mut [f64]) {
        match &self.kind {
            ScoreFieldKind::Constant(s0) => out.copy_from_slice(s0.values()),
            ScoreFieldKind::Linear { s0, b } => {
                let n = p.len();
                for i in 0..n {
                    let mut acc = s0.values()[i];
                    for j in 0..n {
                        acc += b[(i, j)] * p[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

/// Cyclic antisymmetric coupling on three tokens (rock–paper–scissors), `s0 = 0`.
pub fn rotational_field(beta: f64) -> Result<ScoreField> {
    let b = DMatrix::from_row_slice(3, 3, &[0.0, beta, -beta, -beta, 0.0, beta, beta, -beta, 0.0]);
    ScoreField::linear(ScoreVector::new(vec![0.0; 3])?, b)
}

/// Replicator field with state-dependent scores.
pub fn eval_path_field(
    field: &ScoreField,
    kind: FieldKind,
    p: &SimplexPoint,
    t: Temperature,
) -> Result<Vec<f64>> {
    let scores = field.scores(p)?;
    eval_field_with_scores(kind, p, &scores, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurlReport {
    pub conservative: bool,
    /// `‖B − Bᵀ‖_F`.
    pub curl_magnitude: f64,
}

/// A linear field is conservative iff `B` is symmetric.
pub fn is_conservative(field: &ScoreField) -> CurlReport {
    match field.coupling() {
        None => CurlReport {
            conservative: true,
            curl_magnitude: 0.0,
        },
        Some(b) => {
            let curl = (b - b.transpose()).norm();
            CurlReport {
                conservative: curl <= SYMMETRY_TOL,
                curl_magnitude: curl,
            }
        }
    }
}

/// `G(p) = ⟨p, s0⟩ + ½⟨p, Bp⟩ + T·H(p)`, a Lyapunov function of the entropic flow when
/// `B` is symmetric.
pub fn generalized_free_energy(field: &ScoreField, p: &SimplexPoint, t: Temperature) -> f64 {
    let x = p.probs();
    let mut g = p.dot(field.base_scores().values());
    if let Some(b) = field.coupling() {
        let n = x.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * b[(i, j)] * x[j];
            }
        }
        g += 0.5 * quad;
    }
    g + t.value() * entropy(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub recurrent: bool,
    pub loop_start: Option<f64>,
    pub first_return_time: Option<f64>,
    /// Sup-norm distance at the detected return; smallest qualifying distance otherwise
    /// (`+inf` when no pair separated by an excursion exists).
    pub return_distance: f64,
    /// Net change of the recorded free energy over the detected loop.
    pub drift_per_cycle: f64,
}

/// Finds the first pair `(t₁, t₂)` with `t₂ − t₁ ≥ min_separation` and
/// `‖p(t₂) − p(t₁)‖∞ ≤ δ` where the path in between leaves the ball of radius
/// `5δ` around `p(t₁)`.
pub fn detect_recurrence(
    traj: &TrajectoryRecord,
    delta: f64,
    min_separation: f64,
) -> Result<RecurrenceReport> {
    let n = traj.samples.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "recurrence detection needs at least two samples".into(),
        ));
    }
    if !(delta > 0.0 && min_separation >= 0.0) {
        return Err(Error::InvalidInput("δ must be positive, separation nonnegative".into()));
    }
    let excursion = EXCURSION_FACTOR * delta;
    let mut closest = f64::INFINITY;
    for i in 0..n {
        let a = &traj.samples[i];
        let mut left = false;
        for b in &traj.samples[i + 1..] {
            let d = a.p.linf_distance(&b.p);
            if d > excursion {
                left = true;
            }
            if left && b.t - a.t >= min_separation {
                closest = closest.min(d);
                if d <= delta {
                    return Ok(RecurrenceReport {
                        recurrent: true,
                        loop_start: Some(a.t),
                        first_return_time: Some(b.t),
                        return_distance: d,
                        drift_per_cycle: b.free_energy - a.free_energy,
                    });
                }
            }
        }
    }
    Ok(RecurrenceReport {
        recurrent: false,
        loop_start: None,
        first_return_time: None,
        return_distance: closest,
        drift_per_cycle: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basin {
    pub center: SimplexPoint,
    /// Indices into the list of starts.
    pub members: Vec<usize>,
    pub terminal_free_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockinReport {
    pub basins: Vec<Basin>,
    pub diverged: Vec<usize>,
}

/// Integrates every start and groups terminal points within [`BASIN_RADIUS`].
pub fn lockin_probe(
    field: &ScoreField,
    kind: FieldKind,
    starts: &[SimplexPoint],
    t: Temperature,
    horizon: f64,
    controls: &Controls,
) -> Result<LockinReport> {
    let schedule = TemperatureSchedule::constant(t);
    let mut report = LockinReport {
        basins: Vec::new(),
        diverged: Vec::new(),
    };
    for (idx, p0) in starts.iter().enumerate() {
        if let Some(index) = p0.first_zero() {
            return Err(Error::NotInterior { index });
        }
        let traj = integrate_scores(kind, p0, field, &schedule, horizon, controls)?;
        if traj.terminal_status == TerminalStatus::Diverged {
            report.diverged.push(idx);
            continue;
        }
        let end = traj.terminal();
        match report
            .basins
            .iter_mut()
            .find(|b| b.center.linf_distance(&end.p) <= BASIN_RADIUS)
        {
            Some(basin) => basin.members.push(idx),
            None => report.basins.push(Basin {
                center: end.p.clone(),
                members: vec![idx],
                terminal_free_energy: end.free_energy,
            }),
        }
    }
    Ok(report)
}

/// One cell of a coupling-strength sweep on the rotational field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationCell {
    pub beta: f64,
    pub status: TerminalStatus,
    pub recurrence: RecurrenceReport,
}

/// Integrates the rotational field for each `β` on a uniform grid of spacing `dt` and
/// runs the recurrence detector with the default thresholds.
pub fn rotation_sweep(
    kind: FieldKind,
    betas: &[f64],
    t: Temperature,
    p0: &SimplexPoint,
    horizon: f64,
    dt: f64,
) -> Result<Vec<RotationCell>> {
    let controls = Controls {
        convergence_kl: 0.0,
        sampling: crate::replicator::Sampling::Uniform {
            count: (horizon / dt).round() as usize + 1,
        },
        ..Controls::default()
    };
    let schedule = TemperatureSchedule::constant(t);
    betas
        .iter()
        .map(|&beta| {
            let field = rotational_field(beta)?;
            let traj = integrate_scores(kind, p0, &field, &schedule, horizon, &controls)?;
            Ok(RotationCell {
                beta,
                status: traj.terminal_status,
                recurrence: detect_recurrence(&traj, DEFAULT_DELTA_REC, DEFAULT_MIN_SEPARATION)?,
            })
        })
        .collect()
}

/// A symmetric coupling found by [`search_multistable_symmetric`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistableInstance {
    pub field: ScoreField,
    /// Strict local maxima of `G` on the search grid.
    pub maxima: Vec<SimplexPoint>,
    pub candidates_tried: usize,
}

/// Brute-force search over symmetric 3×3 integer couplings with entries in
/// `[-max_entry, max_entry]` (and `s0 = 0`), visited in order of increasing total
/// magnitude, for the first `B` whose generalized free energy has at least two
/// well-separated strict local maxima on a triangular grid of resolution `grid`.
pub fn search_multistable_symmetric(
    t: Temperature,
    max_entry: i32,
    grid: usize,
) -> Result<Option<MultistableInstance>> {
    let range: Vec<i32> = (-max_entry..=max_entry).collect();
    let mut candidates: Vec<[i32; 6]> = Vec::new();
    for &a in &range {
        for &b in &range {
            for &c in &range {
                for &d in &range {
                    for &e in &range {
                        for &f in &range {
                            candidates.push([a, b, c, d, e, f]);
                        }
                    }
                }
            }
        }
    }
    candidates.sort_by_key(|c| (c.iter().map(|v| v.abs()).sum::<i32>(), *c));

    let zero = ScoreVector::new(vec![0.0; 3])?;
    let points = simplex_grid(grid);
    for (tried, c) in candidates.iter().enumerate() {
        // Diagonal entries c[0..3], off-diagonal (01, 02, 12) c[3..6].
        let b = DMatrix::from_row_slice(
            3,
            3,
            &[
                c[0] as f64, c[3] as f64, c[4] as f64,
                c[3] as f64, c[1] as f64, c[5] as f64,
                c[4] as f64, c[5] as f64, c[2] as f64,
            ],
        );
        let field = ScoreField::linear(zero.clone(), b)?;
        let maxima = grid_local_maxima(&field, t, grid, &points);
        if maxima.len() >= 2 {
            return Ok(Some(MultistableInstance {
                field,
                maxima,
                candidates_tried: tried + 1,
            }));
        }
    }
    Ok(None)
}

fn simplex_grid(n: usize) -> Vec<(usize, usize)> {
    let mut pts = Vec::new();
    for i in 0..=n {
        for j in 0..=n - i {
            pts.push((i, j));
        }
    }
    pts
}

fn grid_point(n: usize, i: usize, j: usize) -> SimplexPoint {
    let k = n - i - j;
    let nf = n as f64;
    SimplexPoint::new(vec![i as f64 / nf, j as f64 / nf, k as f64 / nf])
        .expect("grid points are normalized")
}

/// Interior grid points whose `G` exceeds all six neighbors, kept only if pairwise
/// separated by more than a tenth of the simplex.
fn grid_local_maxima(
    field: &ScoreField,
    t: Temperature,
    n: usize,
    points: &[(usize, usize)],
) -> Vec<SimplexPoint> {
    let g = |i: usize, j: usize| generalized_free_energy(field, &grid_point(n, i, j), t);
    let mut maxima: Vec<SimplexPoint> = Vec::new();
    for &(i, j) in points {
        let k = n - i - j;
        if i == 0 || j == 0 || k == 0 {
            continue;
        }
        let centre = g(i, j);
        let neighbours = [
            (i + 1, j),
            (i - 1, j),
            (i, j + 1),
            (i, j - 1),
            (i + 1, j - 1),
            (i - 1, j + 1),
        ];
        let is_max = neighbours
            .iter()
            .filter(|&&(a, b)| a + b <= n)
            .all(|&(a, b)| centre > g(a, b));
        if is_max {
            let p = grid_point(n, i, j);
            if maxima.iter().all(|m| m.linf_distance(&p) > 0.1) {
                maxima.push(p);
            }
        }
    }
    maxima
}
