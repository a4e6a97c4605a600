//! Domain types on the probability simplex and the softmax / log-partition primitives.
//!
//! Everything here is a pure function of immutable values. Exponentials always go through
//! a max-shifted log-sum-exp, so `|s_i| / T` up to a few hundred is safe.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{kl_term, log_sum_exp};

/// Tolerated normalization error of a stored [`SimplexPoint`].
pub const NORM_EPS: f64 = 1e-12;
/// Largest normalization drift that construction silently repairs.
pub const RENORMALIZE_LIMIT: f64 = 1e-9;

/// Fixed logits `s ∈ ℝ^V` for a frozen context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "score vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("score {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `s + c·1`.
    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }

    /// `α·s`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| v * alpha).collect())
    }

    /// Largest score minus smallest score.
    pub fn spread(&self) -> f64 {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.0.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Whether every score is equal.
    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&v| v == self.0[0])
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(s: ScoreVector) -> Self {
        s.0
    }
}

/// Positive, finite temperature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive and finite, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> Self {
        t.0
    }
}

/// A probability vector: nonnegative entries summing to one within [`NORM_EPS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates and renormalizes. Drift in the total mass within [`NORM_EPS`] is kept as is,
    /// drift up to [`RENORMALIZE_LIMIT`] is divided out, and anything larger is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        for (i, &v) in probs.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "probability {i} = {v} is not a finite nonnegative number"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_LIMIT {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        if (sum - 1.0).abs() <= NORM_EPS {
            return Ok(Self(probs));
        }
        Ok(Self(probs.into_iter().map(|v| v / sum).collect()))
    }

    /// Normalized point from log-weights (`-inf` allowed for zero mass).
    pub fn from_log_weights(logs: &[f64]) -> Result<Self> {
        if logs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidInput("log-weights contain NaN or +inf".into()));
        }
        let lse = log_sum_exp(logs);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateFace);
        }
        let p: Vec<f64> = logs.iter().map(|&l| (l - lse).exp()).collect();
        Self::new(p)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn vertex(dim: usize, index: usize) -> Self {
        let mut p = vec![0.0; dim];
        p[index] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    /// Index of the first zero coordinate, if any.
    pub fn first_zero(&self) -> Option<usize> {
        self.0.iter().position(|&v| v == 0.0)
    }

    /// Log-probabilities, `-inf` on zero coordinates.
    pub fn log_probs(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v.ln()).collect()
    }

    pub fn support(&self) -> FaceMask {
        FaceMask::new(self.0.iter().map(|&v| v > 0.0).collect())
            .expect("a normalized point has at least one positive entry")
    }

    /// `⟨p, s⟩`.
    pub fn dot(&self, s: &[f64]) -> f64 {
        self.0.iter().zip(s).map(|(p, s)| p * s).sum()
    }

    /// `max_i |p_i − q_i|`.
    pub fn linf_distance(&self, other: &SimplexPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

/// Support subset `S ⊆ {0..V}` selecting the face `Δ_S`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceMask {
    support: Vec<bool>,
}

impl FaceMask {
    pub fn new(support: Vec<bool>) -> Result<Self> {
        if !support.iter().any(|&b| b) {
            return Err(Error::InvalidInput("face mask selects no coordinates".into()));
        }
        Ok(Self { support })
    }

    pub fn full(dim: usize) -> Self {
        Self {
            support: vec![true; dim],
        }
    }

    /// Mask from zero-based indices.
    pub fn from_indices(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut support = vec![false; dim];
        for &i in indices {
            if i >= dim {
                return Err(Error::InvalidInput(format!(
                    "face index {i} out of range for dimension {dim}"
                )));
            }
            support[i] = true;
        }
        Self::new(support)
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// Number of selected coordinates.
    pub fn k(&self) -> usize {
        self.support.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.support[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.support
    }

    /// Zero-based selected indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.support.len()).filter(|&i| self.support[i]).collect()
    }

    /// Embeds a point on the `k`-dimensional face back into `V` coordinates with zeros
    /// off the face.
    pub fn embed(&self, face_point: &SimplexPoint) -> Result<SimplexPoint> {
        if face_point.len() != self.k() {
            return Err(Error::InvalidInput(format!(
                "face point has {} coordinates, face has {}",
                face_point.len(),
                self.k()
            )));
        }
        let mut full = vec![0.0; self.dim()];
        for (j, i) in self.indices().into_iter().enumerate() {
            full[i] = face_point.probs()[j];
        }
        SimplexPoint::new(full)
    }
}

/// `F(p) = ⟨p,s⟩ + T·H(p)` with its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub inner: f64,
    pub entropy: f64,
    pub value: f64,
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {a} vs {b}"
        )));
    }
    Ok(())
}

/// `log π_i = s_i/T − log Σ_j exp(s_j/T)`.
pub fn log_softmax(s: &ScoreVector, t: Temperature) -> Vec<f64> {
    let scaled: Vec<f64> = s.values().iter().map(|v| v / t.value()).collect();
    let lse = log_sum_exp(&scaled);
    scaled.into_iter().map(|v| v - lse).collect()
}

/// Gibbs distribution `π_i ∝ exp(s_i/T)`, the unique maximizer of the free energy.
pub fn softmax(s: &ScoreVector, t: Temperature) -> SimplexPoint {
    let lp = log_softmax(s, t);
    let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    let sum: f64 = p.iter().sum();
    SimplexPoint(p.into_iter().map(|v| v / sum).collect())
}

/// `A(s) = T·log Σ exp(s_i/T)`.
pub fn log_partition(s: &ScoreVector, t: Temperature) -> f64 {
    let scaled: Vec<f64> = s.values().iter().map(|v| v / t.value()).collect();
    t.value() * log_sum_exp(&scaled)
}

/// Shannon entropy in nats with `0·log 0 = 0`.
pub fn entropy(p: &SimplexPoint) -> f64 {
    let h: f64 = p
        .probs()
        .iter()
        .map(|&v| if v == 0.0 { 0.0 } else { -v * v.ln() })
        .sum();
    h.clamp(0.0, (p.len() as f64).ln())
}

pub fn free_energy(p: &SimplexPoint, s: &ScoreVector, t: Temperature) -> Result<FreeEnergyReport> {
    check_dims(p.len(), s.len())?;
    Ok(free_energy_raw(p, s.values(), t.value()))
}

pub(crate) fn free_energy_raw(p: &SimplexPoint, s: &[f64], t: f64) -> FreeEnergyReport {
    let inner = p.dot(s);
    let entropy = entropy(p);
    FreeEnergyReport {
        inner,
        entropy,
        value: inner + t * entropy,
    }
}

/// `D(p‖q) = Σ_{p_i>0} p_i log(p_i/q_i)`.
///
/// Summed as `Σ q_i (r_i log r_i − r_i + 1)` with `r = p/q`, whose terms are individually
/// nonnegative; the result is therefore never negative and is exactly zero for `p = q`.
pub fn kl_divergence(p: &SimplexPoint, q: &SimplexPoint) -> Result<f64> {
    check_dims(p.len(), q.len())?;
    let mut acc = 0.0;
    for (i, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a == 0.0 {
            acc += b;
        } else if b == 0.0 {
            return Err(Error::SupportMismatch { index: i });
        } else {
            acc += kl_term(b, a.ln() - b.ln());
        }
    }
    Ok(acc.max(0.0))
}

/// Jacobian of softmax in `s`: `(1/T)(diag π − ππᵀ)`, the Hessian of `A`.
pub fn softmax_jacobian(s: &ScoreVector, t: Temperature) -> DMatrix<f64> {
    let pi = softmax(s, t);
    let p = pi.probs();
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { p[i] } else { 0.0 };
        (d - p[i] * p[j]) / t.value()
    })
}

/// Restricts scores and point to the face `S`, renormalizing the point on `S`.
///
/// Requires `k ≥ 2` because a score vector has at least two entries; a one-point face
/// carries no dynamics.
pub fn restrict_to_face(
    s: &ScoreVector,
    p: &SimplexPoint,
    mask: &FaceMask,
) -> Result<(ScoreVector, SimplexPoint)> {
    check_dims(s.len(), mask.dim())?;
    check_dims(p.len(), mask.dim())?;
    let idx = mask.indices();
    let mass: f64 = idx.iter().map(|&i| p.probs()[i]).sum();
    if mass <= 0.0 {
        return Err(Error::DegenerateFace);
    }
    if idx.len() < 2 {
        return Err(Error::InvalidInput(
            "cannot restrict to a face with fewer than 2 coordinates".into(),
        ));
    }
    let scores = ScoreVector::new(idx.iter().map(|&i| s.values()[i]).collect())?;
    let probs: Vec<f64> = idx.iter().map(|&i| p.probs()[i] / mass).collect();
    Ok((scores, SimplexPoint::new(probs)?))
}

/// Indices sorted by descending key, ties broken by the lower index.
fn descending_order(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order
}

/// The `k` largest scores; ties go to the lowest index.
pub fn build_face_topk(s: &ScoreVector, k: usize) -> Result<FaceMask> {
    if k == 0 || k > s.len() {
        return Err(Error::InvalidInput(format!(
            "top-k needs 1 ≤ k ≤ {}, got {k}",
            s.len()
        )));
    }
    let order = descending_order(s.values());
    FaceMask::from_indices(s.len(), &order[..k])
}

/// Smallest prefix of the softmax-sorted indices whose cumulative mass reaches `mass`.
pub fn build_face_nucleus(s: &ScoreVector, t: Temperature, mass: f64) -> Result<FaceMask> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "nucleus mass must lie in (0, 1], got {mass}"
        )));
    }
    let pi = softmax(s, t);
    let order = descending_order(pi.probs());
    let mut cumulative = 0.0;
    let mut take = order.len();
    for (n, &i) in order.iter().enumerate() {
        cumulative += pi.probs()[i];
        if cumulative >= mass {
            take = n + 1;
            break;
        }
    }
    FaceMask::from_indices(s.len(), &order[..take])
}
