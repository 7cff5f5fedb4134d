//! Vector-valued return geometry.
//!
//! Every objective is maximized. [`ParetoFront`] keeps its points in a
//! canonical order (lexicographically descending) so that fronts built from
//! the same set of vectors compare and serialize identically regardless of
//! insertion order.

mod hypervolume;
pub mod io;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypervolume::{hypervolume_monte_carlo, McEstimate, MonteCarlo, MAX_EXACT_OBJECTIVES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value vector needs at least 2 objectives, got {0}")]
    TooFewObjectives(usize),
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("weight vector is not on the simplex: {0}")]
    NotOnSimplex(String),
    #[error("degenerate objective range at index {index}: min {min} >= max {max}")]
    DegenerateRange { index: usize, min: f64, max: f64 },
    #[error("front is empty")]
    EmptyFront,
    #[error("weight list is empty")]
    EmptyWeights,
    #[error("reference front has zero normalized hypervolume")]
    ZeroDenominator,
    #[error("expected utility of the reference front is zero; ratio undefined")]
    UndefinedRatio,
    #[error("exact hypervolume supports at most {MAX_EXACT_OBJECTIVES} objectives, got {0}")]
    TooManyObjectives(usize),
    #[error("monte carlo estimate needs at least one sample")]
    NoSamples,
    #[error("{0}")]
    Parse(String),
}

/// Per-objective discounted return of a policy.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(mut values: Vec<f64>) -> Result<Self, ParetoError> {
        if values.len() < 2 {
            return Err(ParetoError::TooFewObjectives(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ParetoError::NonFinite(i));
        }
        // fold -0.0 into 0.0 so equal vectors also sort equal
        for v in &mut values {
            *v += 0.0;
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        assert!(k >= 2, "value vectors have at least two objectives");
        Self(vec![0.0; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ValueVector {
    type Error = ParetoError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ValueVector> for Vec<f64> {
    fn from(v: ValueVector) -> Self {
        v.0
    }
}

impl fmt::Debug for ValueVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Point on the unit simplex parameterizing a linear utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self, ParetoError> {
        if weights.is_empty() {
            return Err(ParetoError::NotOnSimplex("no components".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(ParetoError::NotOnSimplex(format!(
                "component {i} is {}",
                weights[i]
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(ParetoError::NotOnSimplex(format!(
                "components sum to {sum}"
            )));
        }
        Ok(Self(weights))
    }

    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        debug_assert!(Self::new(weights.clone()).is_ok());
        Self(weights)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = ParetoError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(v: WeightVector) -> Self {
        v.0
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), ParetoError> {
    if expected != got {
        return Err(ParetoError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn dominates_raw(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &ValueVector, b: &ValueVector) -> Result<bool, ParetoError> {
    check_dim(a.dim(), b.dim())?;
    Ok(dominates_raw(&a.0, &b.0))
}

fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Indices of the nondominated representatives of `points`, in canonical
/// (lexicographically descending) order. Among exact duplicates the earliest
/// input index is kept.
pub fn pareto_indices(points: &[ValueVector]) -> Result<Vec<usize>, ParetoError> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    for p in points {
        check_dim(first.dim(), p.dim())?;
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    // stable: equal vectors keep input order, so the first occurrence wins
    order.sort_by(|&i, &j| lex_desc(&points[i].0, &points[j].0));
    // a dominator always sorts strictly before what it dominates, so one
    // pass against the kept set suffices
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = &points[i].0;
        let covered = kept.iter().any(|&j| {
            let q = &points[j].0;
            q == p || dominates_raw(q, p)
        });
        if !covered {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// A deduplicated antichain of value vectors.
#[derive(Clone, PartialEq, Default, Serialize)]
#[serde(into = "Vec<ValueVector>")]
pub struct ParetoFront {
    points: Vec<ValueVector>,
}

impl ParetoFront {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[ValueVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Objective count, or `None` for the empty front.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(ValueVector::dim)
    }

    /// Points as plain coordinate slices.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.as_slice())
    }

    /// Front of `self` together with `other`.
    pub fn union(&self, other: &ParetoFront) -> Result<ParetoFront, ParetoError> {
        let mut all = self.points.clone();
        all.extend(other.points.iter().cloned());
        pareto_filter(&all)
    }
}

impl From<ParetoFront> for Vec<ValueVector> {
    fn from(f: ParetoFront) -> Self {
        f.points
    }
}

impl<'de> Deserialize<'de> for ParetoFront {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let points = Vec::<ValueVector>::deserialize(d)?;
        pareto_filter(&points).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for ParetoFront {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.points.iter()).finish()
    }
}

/// Nondominated subset of `points` with duplicates collapsed.
pub fn pareto_filter(points: &[ValueVector]) -> Result<ParetoFront, ParetoError> {
    let idx = pareto_indices(points)?;
    Ok(ParetoFront {
        points: idx.into_iter().map(|i| points[i].clone()).collect(),
    })
}

/// Exact hypervolume of the region between `ref_point` and the front. Points
/// not strictly above the reference in every objective add nothing.
pub fn hypervolume(front: &ParetoFront, ref_point: &ValueVector) -> Result<f64, ParetoError> {
    let k = ref_point.dim();
    if let Some(d) = front.dim() {
        check_dim(k, d)?;
    }
    if k > MAX_EXACT_OBJECTIVES {
        return Err(ParetoError::TooManyObjectives(k));
    }
    let rows: Vec<&[f64]> = front.rows().collect();
    Ok(hypervolume::exact(&rows, ref_point.as_slice()))
}

/// Hypervolume value and whether it came from sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypervolume {
    pub value: f64,
    pub estimated: bool,
}

/// Exact hypervolume up to [`MAX_EXACT_OBJECTIVES`] objectives, a Monte
/// Carlo estimate beyond.
pub fn hypervolume_with(
    front: &ParetoFront,
    ref_point: &ValueVector,
    mc: MonteCarlo,
) -> Result<Hypervolume, ParetoError> {
    if ref_point.dim() <= MAX_EXACT_OBJECTIVES {
        return hypervolume(front, ref_point).map(|value| Hypervolume {
            value,
            estimated: false,
        });
    }
    let est = hypervolume_monte_carlo(front, ref_point, mc)?;
    Ok(Hypervolume {
        value: est.value,
        estimated: true,
    })
}

/// Elementwise lower and upper bounds used to normalize a front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontBounds {
    v_min: ValueVector,
    v_max: ValueVector,
}

impl FrontBounds {
    pub fn new(v_min: ValueVector, v_max: ValueVector) -> Result<Self, ParetoError> {
        check_dim(v_min.dim(), v_max.dim())?;
        for (index, (&lo, &hi)) in v_min.0.iter().zip(&v_max.0).enumerate() {
            if hi <= lo {
                return Err(ParetoError::DegenerateRange {
                    index,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(Self { v_min, v_max })
    }

    /// Elementwise min/max of a nonempty front.
    pub fn of(front: &ParetoFront) -> Result<Self, ParetoError> {
        let (lo, hi) = elementwise_min_max(front)?;
        Self::new(lo, hi)
    }

    pub fn v_min(&self) -> &ValueVector {
        &self.v_min
    }

    pub fn v_max(&self) -> &ValueVector {
        &self.v_max
    }

    /// Maps `v` into the unit cube, clamping out-of-range components.
    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.v_min.0.iter().zip(&self.v_max.0))
            .map(|(&x, (&lo, &hi))| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }
}

/// Elementwise minimum and maximum of a nonempty front, without range checks.
pub fn elementwise_min_max(front: &ParetoFront) -> Result<(ValueVector, ValueVector), ParetoError> {
    let first = front.points.first().ok_or(ParetoError::EmptyFront)?;
    let mut lo = first.0.clone();
    let mut hi = first.0.clone();
    for p in &front.points[1..] {
        for (i, &x) in p.0.iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    Ok((ValueVector(lo), ValueVector(hi)))
}

/// Hypervolume of the front after min-max normalization by `bounds`, with the
/// origin as reference. Always in `[0, 1]`.
pub fn hv_norm(front: &ParetoFront, bounds: &FrontBounds) -> Result<f64, ParetoError> {
    let k = bounds.v_min.dim();
    if let Some(d) = front.dim() {
        check_dim(k, d)?;
    }
    if k > MAX_EXACT_OBJECTIVES {
        return Err(ParetoError::TooManyObjectives(k));
    }
    let normalized: Vec<Vec<f64>> = front.rows().map(|p| bounds.normalize(p)).collect();
    let rows: Vec<&[f64]> = normalized.iter().map(Vec::as_slice).collect();
    let origin = vec![0.0; k];
    Ok(hypervolume::exact(&rows, &origin).clamp(0.0, 1.0))
}

/// Normalized hypervolume of `approx` relative to that of `optimal`, both
/// normalized by the bounds of `optimal`. Capped at 1.
pub fn nhgr(approx: &ParetoFront, optimal: &ParetoFront) -> Result<f64, ParetoError> {
    let bounds = FrontBounds::of(optimal)?;
    let denom = hv_norm(optimal, &bounds)?;
    if denom <= 0.0 {
        return Err(ParetoError::ZeroDenominator);
    }
    let num = hv_norm(approx, &bounds)?;
    Ok((num / denom).min(1.0))
}

/// `wᵀv`.
pub fn linear_utility(v: &ValueVector, w: &WeightVector) -> Result<f64, ParetoError> {
    check_dim(v.dim(), w.dim())?;
    Ok(dot(&v.0, &w.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Expected utility: mean over `weights` of the best linear utility among
/// `points`.
pub fn eum_of_points(points: &[ValueVector], weights: &[WeightVector]) -> Result<f64, ParetoError> {
    let first = points.first().ok_or(ParetoError::EmptyFront)?;
    if weights.is_empty() {
        return Err(ParetoError::EmptyWeights);
    }
    for p in points {
        check_dim(first.dim(), p.dim())?;
    }
    let mut total = 0.0;
    for w in weights {
        check_dim(first.dim(), w.dim())?;
        let best = points
            .iter()
            .map(|p| dot(&p.0, &w.0))
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    Ok(total / weights.len() as f64)
}

pub fn eum(front: &ParetoFront, weights: &[WeightVector]) -> Result<f64, ParetoError> {
    eum_of_points(&front.points, weights)
}

/// Expected-utility ratio. `negative_denominator` is set when the reference
/// front's expected utility is negative, where a larger ratio means a
/// *worse* agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eugr {
    pub ratio: f64,
    pub negative_denominator: bool,
}

pub fn eugr(
    approx: &ParetoFront,
    optimal: &ParetoFront,
    weights: &[WeightVector],
) -> Result<Eugr, ParetoError> {
    let denom = eum(optimal, weights)?;
    let num = eum(approx, weights)?;
    if denom == 0.0 {
        return Err(ParetoError::UndefinedRatio);
    }
    Ok(Eugr {
        ratio: num / denom,
        negative_denominator: denom < 0.0,
    })
}
