//! Upper concave envelope of a finitely sampled extended-real function in
//! one variable, its evaluation, and its superdifferential.
//!
//! The envelope is taken relative to the sampled domain: off the span of
//! the finite-valued samples it is `-inf`. Samples equal to `-inf` never
//! become hull vertices.

use std::str::FromStr;

use thiserror::Error;

use crate::ext_real::ExtReal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("sampled function has no points")]
    Empty,
    #[error("abscissa {index} is not finite")]
    NonFiniteAbscissa { index: usize },
    #[error("abscissas are not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("sample {index} has value +inf")]
    PlusInfinityValue { index: usize },
    #[error("superdifferential is undefined (envelope is -inf at the query)")]
    UndefinedSuperdifferential,
}

/// Samples `(abscissa, value)` with strictly increasing abscissas.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFn {
    points: Vec<(f64, ExtReal)>,
}

impl SampledFn {
    pub fn new(points: Vec<(f64, ExtReal)>) -> Result<Self, EnvelopeError> {
        if points.is_empty() {
            return Err(EnvelopeError::Empty);
        }
        for (i, (x, v)) in points.iter().enumerate() {
            if !x.is_finite() {
                return Err(EnvelopeError::NonFiniteAbscissa { index: i });
            }
            if i > 0 && points[i - 1].0 >= *x {
                return Err(EnvelopeError::NotIncreasing { index: i });
            }
            if v.is_pos_inf() {
                return Err(EnvelopeError::PlusInfinityValue { index: i });
            }
        }
        Ok(SampledFn { points })
    }

    /// Builds from parallel slices.
    pub fn from_parts(xs: &[f64], vs: &[ExtReal]) -> Result<Self, EnvelopeError> {
        Self::new(xs.iter().copied().zip(vs.iter().copied()).collect())
    }

    pub fn points(&self) -> &[(f64, ExtReal)] {
        &self.points
    }
}

/// Piecewise-linear concave majorant, stored by its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFn {
    vertices: Vec<(f64, f64)>,
}

/// Envelope value at a query point with the superdifferential interval
/// `[superdiff_lo, superdiff_hi]` = `[right slope, left slope]`.
///
/// A side is `None` when the query sits on the boundary vertex of the
/// hull's domain (the envelope drops to `-inf` beyond it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeResult {
    pub value: ExtReal,
    pub superdiff_lo: Option<f64>,
    pub superdiff_hi: Option<f64>,
}

impl EnvelopeResult {
    const NEG_INF: EnvelopeResult = EnvelopeResult {
        value: ExtReal::NEG_INF,
        superdiff_lo: None,
        superdiff_hi: None,
    };
}

/// Tie-break inside the superdifferential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupergradientPolicy {
    #[default]
    Midpoint,
    Lower,
    Upper,
}

impl FromStr for SupergradientPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "midpoint" | "mid" => Ok(SupergradientPolicy::Midpoint),
            "lower" | "lo" => Ok(SupergradientPolicy::Lower),
            "upper" | "hi" => Ok(SupergradientPolicy::Upper),
            other => Err(format!("unknown supergradient policy '{other}'")),
        }
    }
}

/// Pushes one finite point through the monotone upper-hull pass.
#[inline]
fn push_vertex(stack: &mut Vec<(f64, f64)>, p: (f64, f64)) {
    while stack.len() >= 2 {
        let a = stack[stack.len() - 2];
        let b = stack[stack.len() - 1];
        // b is dropped when it lies on or below the chord a -> p
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross >= 0.0 {
            stack.pop();
        } else {
            break;
        }
    }
    stack.push(p);
}

/// Evaluates the hull with the given vertices at `q`.
fn eval_vertices(v: &[(f64, f64)], q: f64) -> EnvelopeResult {
    let (first, last) = match (v.first(), v.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return EnvelopeResult::NEG_INF,
    };
    if q < first.0 || q > last.0 {
        return EnvelopeResult::NEG_INF;
    }
    let slope = |k: usize| (v[k + 1].1 - v[k].1) / (v[k + 1].0 - v[k].0);
    // first vertex with abscissa >= q
    let k = v.partition_point(|p| p.0 < q);
    if v[k].0 == q {
        EnvelopeResult {
            value: ExtReal::finite(v[k].1),
            superdiff_lo: (k + 1 < v.len()).then(|| slope(k)),
            superdiff_hi: (k > 0).then(|| slope(k - 1)),
        }
    } else {
        let (a, b) = (v[k - 1], v[k]);
        let value = ((b.0 - q) * a.1 + (q - a.0) * b.1) / (b.0 - a.0);
        let s = slope(k - 1);
        EnvelopeResult {
            value: ExtReal::finite(value),
            superdiff_lo: Some(s),
            superdiff_hi: Some(s),
        }
    }
}

/// Envelope at `q` of the samples yielded by `points` (abscissas increasing,
/// no `+inf`), using `scratch` for the hull. Allocation-free once
/// `scratch` has grown; this is the inner loop of the operator.
pub(crate) fn envelope_of_iter<I>(points: I, q: f64, scratch: &mut Vec<(f64, f64)>) -> EnvelopeResult
where
    I: IntoIterator<Item = (f64, ExtReal)>,
{
    scratch.clear();
    let mut at_q = None;
    for (x, v) in points {
        if let Some(y) = v.finite_value() {
            push_vertex(scratch, (x, y));
            if x == q {
                at_q = Some(y);
            }
        }
    }
    let mut res = eval_vertices(scratch, q);
    // chord interpolation can round below a sample sitting on the chord
    if let (Some(y), Some(v)) = (at_q, res.value.finite_value()) {
        if y > v {
            res.value = ExtReal::finite(y);
        }
    }
    res
}

/// The concave majorant of the finite-valued samples over their span.
pub fn upper_concave_hull(f: &SampledFn) -> HullFn {
    let mut vertices = Vec::with_capacity(f.points.len());
    for &(x, v) in &f.points {
        if let Some(y) = v.finite_value() {
            push_vertex(&mut vertices, (x, y));
        }
    }
    HullFn { vertices }
}

impl HullFn {
    /// Hull vertices; a subsequence of the finite input points.
    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn is_neg_inf(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn eval(&self, q: f64) -> ExtReal {
        eval_vertices(&self.vertices, q).value
    }

    pub fn envelope_at(&self, q: f64) -> EnvelopeResult {
        eval_vertices(&self.vertices, q)
    }
}

/// Envelope value and superdifferential of `f` at `query`.
pub fn envelope_at(f: &SampledFn, query: f64) -> EnvelopeResult {
    envelope_of_iter(f.points.iter().copied(), query, &mut Vec::new())
}

/// Picks a single supergradient from `res`.
///
/// With both sides defined the policy chooses. On a domain-boundary vertex
/// only one side is defined and every slope beyond it is also a
/// supergradient, so the defined side is returned. An isolated hull vertex
/// has the whole real line as superdifferential; 0 is returned.
pub fn select_supergradient(
    res: &EnvelopeResult,
    policy: SupergradientPolicy,
) -> Result<f64, EnvelopeError> {
    if !res.value.is_finite() {
        return Err(EnvelopeError::UndefinedSuperdifferential);
    }
    Ok(match (res.superdiff_lo, res.superdiff_hi) {
        (Some(lo), Some(hi)) => match policy {
            SupergradientPolicy::Midpoint => 0.5 * (lo + hi),
            SupergradientPolicy::Lower => lo,
            SupergradientPolicy::Upper => hi,
        },
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => 0.0,
    })
}
