//! Problem data `(Z, X, phi, f, z0)` on a finite state set, its validation,
//! and the JSON problem file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ext_real::ExtReal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("state set is empty")]
    EmptyStateSet,
    #[error("increment grid is empty")]
    EmptyIncrements,
    #[error("increment grid does not contain 0")]
    MissingZeroIncrement,
    #[error("increment {index} is not finite")]
    NonFiniteIncrement { index: usize },
    #[error("increments are not strictly increasing at index {index}")]
    IncrementsNotIncreasing { index: usize },
    #[error("state {state} does not map to itself under the zero increment")]
    NotIdentityAtZero { state: usize },
    #[error("payoff is +inf at state {state}")]
    PlusInfinityPayoff { state: usize },
    #[error("{field}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        field: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{field}: expected length {expected}, found {found}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("scaled state {state}: {reason}")]
    InvalidScaledState { state: usize, reason: String },
    #[error("{field}: {message}")]
    Parse { field: String, message: String },
}

/// Opaque state label; either a name or real coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateLabel {
    Coord(f64),
    Coords(Vec<f64>),
    Name(String),
}

impl StateLabel {
    /// Real coordinates, when the label carries them.
    pub fn coords(&self) -> Option<Vec<f64>> {
        match self {
            StateLabel::Coord(x) => Some(vec![*x]),
            StateLabel::Coords(v) => Some(v.clone()),
            StateLabel::Name(_) => None,
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Coord(x) => write!(f, "{x}"),
            StateLabel::Coords(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(" "))
            }
            StateLabel::Name(s) => f.write_str(s),
        }
    }
}

/// A state whose value is tied to an anchor state: `g(state) = factor * g(anchor)`.
///
/// This is how homogeneous problems on a cone are folded onto a finite set:
/// a state on the ray of `anchor` carries no dynamics of its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledState {
    pub state: usize,
    pub anchor: usize,
    pub factor: f64,
}

/// Raw problem data as read from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(rename = "states")]
    pub state_labels: Vec<StateLabel>,
    pub increments: Vec<f64>,
    pub transition: Vec<Vec<usize>>,
    pub payoff: Vec<ExtReal>,
    #[serde(rename = "z0")]
    pub initial_state: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scaled: Vec<ScaledState>,
}

/// Strictly increasing increment grid containing 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementGrid {
    values: Vec<f64>,
    zero_index: usize,
}

impl IncrementGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, ProblemError> {
        if values.is_empty() {
            return Err(ProblemError::EmptyIncrements);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProblemError::NonFiniteIncrement { index: i });
            }
            if i > 0 && values[i - 1] >= *v {
                return Err(ProblemError::IncrementsNotIncreasing { index: i });
            }
        }
        let zero_index = values
            .iter()
            .position(|&v| v == 0.0)
            .ok_or(ProblemError::MissingZeroIncrement)?;
        Ok(IncrementGrid { values, zero_index })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    pub fn get(&self, j: usize) -> f64 {
        self.values[j]
    }
}

/// Dense `(state, increment index) -> state` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    n_increments: usize,
    next: Vec<usize>,
}

impl TransitionTable {
    fn from_rows(
        rows: &[Vec<usize>],
        n_states: usize,
        n_increments: usize,
    ) -> Result<Self, ProblemError> {
        if rows.len() != n_states {
            return Err(ProblemError::LengthMismatch {
                field: "transition",
                expected: n_states,
                found: rows.len(),
            });
        }
        let mut next = Vec::with_capacity(n_states * n_increments);
        for row in rows {
            if row.len() != n_increments {
                return Err(ProblemError::LengthMismatch {
                    field: "transition row",
                    expected: n_increments,
                    found: row.len(),
                });
            }
            for &z in row {
                if z >= n_states {
                    return Err(ProblemError::IndexOutOfRange {
                        field: "transition",
                        index: z,
                        bound: n_states,
                    });
                }
            }
            next.extend_from_slice(row);
        }
        Ok(TransitionTable { n_increments, next })
    }

    #[inline]
    pub fn next_state(&self, z: usize, j: usize) -> usize {
        self.next[z * self.n_increments + j]
    }

    /// Successors of `z`, one per increment.
    #[inline]
    pub fn row(&self, z: usize) -> &[usize] {
        &self.next[z * self.n_increments..(z + 1) * self.n_increments]
    }
}

/// An extended-real function on the state set, indexed by state id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFn(Vec<ExtReal>);

impl GridFn {
    pub fn new(values: Vec<ExtReal>) -> Self {
        GridFn(values)
    }

    pub fn from_f64(values: &[f64]) -> Self {
        GridFn(values.iter().map(|&v| ExtReal::from(v)).collect())
    }

    pub fn constant(len: usize, v: ExtReal) -> Self {
        GridFn(vec![v; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [ExtReal] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<ExtReal> {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExtReal> {
        self.0.iter()
    }

    /// `self >= other` at every state.
    pub fn dominates(&self, other: &GridFn) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }
}

impl std::ops::Index<usize> for GridFn {
    type Output = ExtReal;

    fn index(&self, i: usize) -> &ExtReal {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for GridFn {
    fn index_mut(&mut self, i: usize) -> &mut ExtReal {
        &mut self.0[i]
    }
}

/// A problem whose invariants have been checked. Required by every solver.
#[derive(Debug, Clone)]
pub struct ValidatedProblem {
    spec: ProblemSpec,
    increments: IncrementGrid,
    transition: TransitionTable,
    payoff: GridFn,
    scaling: Vec<Option<(usize, f64)>>,
}

/// Checks every invariant of `spec` and returns a validated handle.
pub fn validate_problem(spec: ProblemSpec) -> Result<ValidatedProblem, ProblemError> {
    let n = spec.state_labels.len();
    if n == 0 {
        return Err(ProblemError::EmptyStateSet);
    }
    let increments = IncrementGrid::new(spec.increments.clone())?;
    let transition = TransitionTable::from_rows(&spec.transition, n, increments.len())?;
    if spec.payoff.len() != n {
        return Err(ProblemError::LengthMismatch {
            field: "payoff",
            expected: n,
            found: spec.payoff.len(),
        });
    }
    if let Some(state) = spec.payoff.iter().position(|v| v.is_pos_inf()) {
        return Err(ProblemError::PlusInfinityPayoff { state });
    }
    if spec.initial_state >= n {
        return Err(ProblemError::IndexOutOfRange {
            field: "z0",
            index: spec.initial_state,
            bound: n,
        });
    }
    let zero = increments.zero_index();
    if let Some(state) = (0..n).find(|&z| transition.next_state(z, zero) != z) {
        return Err(ProblemError::NotIdentityAtZero { state });
    }

    let mut scaling = vec![None; n];
    for s in &spec.scaled {
        for (field, idx) in [("scaled.state", s.state), ("scaled.anchor", s.anchor)] {
            if idx >= n {
                return Err(ProblemError::IndexOutOfRange {
                    field,
                    index: idx,
                    bound: n,
                });
            }
        }
        let bad = |reason: &str| ProblemError::InvalidScaledState {
            state: s.state,
            reason: reason.to_string(),
        };
        if !(s.factor.is_finite() && s.factor > 0.0) {
            return Err(bad("factor must be finite and positive"));
        }
        if s.state == s.anchor {
            return Err(bad("state is its own anchor"));
        }
        if scaling[s.state].is_some() {
            return Err(bad("listed twice"));
        }
        if transition.row(s.state).iter().any(|&z| z != s.state) {
            return Err(bad("transitions of a scaled state must all be self-loops"));
        }
        scaling[s.state] = Some((s.anchor, s.factor));
    }
    for s in &spec.scaled {
        if scaling[s.anchor].is_some() {
            return Err(ProblemError::InvalidScaledState {
                state: s.state,
                reason: format!("anchor {} is itself scaled", s.anchor),
            });
        }
        let tied = spec.payoff[s.anchor].scale(s.factor);
        let own = spec.payoff[s.state];
        let consistent = match (tied.finite_value(), own.finite_value()) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())),
            _ => tied == own,
        };
        if !consistent {
            return Err(ProblemError::InvalidScaledState {
                state: s.state,
                reason: format!("payoff {own} differs from factor * anchor payoff {tied}"),
            });
        }
    }

    let payoff = GridFn::new(spec.payoff.clone());
    Ok(ValidatedProblem {
        spec,
        increments,
        transition,
        payoff,
        scaling,
    })
}

impl ValidatedProblem {
    pub fn n_states(&self) -> usize {
        self.scaling.len()
    }

    pub fn increments(&self) -> &IncrementGrid {
        &self.increments
    }

    pub fn transition(&self) -> &TransitionTable {
        &self.transition
    }

    #[inline]
    pub fn next_state(&self, z: usize, j: usize) -> usize {
        self.transition.next_state(z, j)
    }

    pub fn payoff(&self) -> &GridFn {
        &self.payoff
    }

    pub fn initial_state(&self) -> usize {
        self.spec.initial_state
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.spec.state_labels
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// `(anchor, factor)` when `z` is a scaled state.
    #[inline]
    pub fn scaling(&self, z: usize) -> Option<(usize, f64)> {
        self.scaling[z]
    }

    pub fn has_scaled_states(&self) -> bool {
        self.scaling.iter().any(Option::is_some)
    }

    /// Returns a copy with a different initial state.
    pub fn with_initial_state(&self, z0: usize) -> Result<ValidatedProblem, ProblemError> {
        let mut spec = self.spec.clone();
        spec.initial_state = z0;
        validate_problem(spec)
    }

    /// Returns a copy with a different payoff (re-validated).
    pub fn with_payoff(&self, payoff: GridFn) -> Result<ValidatedProblem, ProblemError> {
        let mut spec = self.spec.clone();
        spec.payoff = payoff.into_inner();
        validate_problem(spec)
    }
}

/// Parses a problem document. Errors name the offending field path.
pub fn parse_problem(text: &str) -> Result<ProblemSpec, ProblemError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ProblemError::Parse {
        field: match e.path().to_string() {
            p if p == "." => "document".to_string(),
            p => p,
        },
        message: e.inner().to_string(),
    })
}

pub fn serialize_problem(spec: &ProblemSpec) -> String {
    serde_json::to_string_pretty(spec).expect("problem specs always serialize")
}

pub fn read_problem_file(path: &Path) -> Result<ProblemSpec, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Parse {
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_problem(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(transition: Vec<Vec<usize>>, increments: Vec<f64>, payoff: Vec<ExtReal>) -> ProblemSpec {
        ProblemSpec {
            state_labels: (0..transition.len())
                .map(|i| StateLabel::Name(format!("z{i}")))
                .collect(),
            increments,
            transition,
            payoff,
            initial_state: 0,
            scaled: vec![],
        }
    }

    #[test]
    fn minimal_identity_system_is_valid() {
        let p = validate_problem(spec(vec![vec![0]], vec![0.0], vec![ExtReal::ZERO])).unwrap();
        assert_eq!(p.n_states(), 1);
        assert_eq!(p.next_state(0, 0), 0);
    }

    #[test]
    fn zero_increment_must_be_identity() {
        let s = spec(
            vec![vec![0, 1], vec![1, 1]],
            vec![-1.0, 0.0],
            vec![ExtReal::ZERO; 2],
        );
        // row 0 is [0, 1]: zero increment (index 1) sends z0 to z1
        assert_eq!(
            validate_problem(s).unwrap_err(),
            ProblemError::NotIdentityAtZero { state: 0 }
        );
    }

    #[test]
    fn plus_infinity_payoff_rejected() {
        let s = spec(vec![vec![0], vec![1]], vec![0.0], vec![ExtReal::ZERO, ExtReal::POS_INF]);
        assert_eq!(
            validate_problem(s).unwrap_err(),
            ProblemError::PlusInfinityPayoff { state: 1 }
        );
    }

    #[test]
    fn grid_errors() {
        assert_eq!(
            IncrementGrid::new(vec![-1.0, 1.0]).unwrap_err(),
            ProblemError::MissingZeroIncrement
        );
        assert_eq!(
            IncrementGrid::new(vec![0.0, 0.0]).unwrap_err(),
            ProblemError::IncrementsNotIncreasing { index: 1 }
        );
        assert_eq!(IncrementGrid::new(vec![]).unwrap_err(), ProblemError::EmptyIncrements);
        let g = IncrementGrid::new(vec![-2.0, 0.0, 0.5]).unwrap();
        assert_eq!(g.zero_index(), 1);
    }

    #[test]
    fn out_of_range_transition() {
        let s = spec(vec![vec![3]], vec![0.0], vec![ExtReal::ZERO]);
        assert!(matches!(
            validate_problem(s).unwrap_err(),
            ProblemError::IndexOutOfRange { field: "transition", .. }
        ));
    }

    #[test]
    fn scaled_state_checks() {
        let mut s = spec(
            vec![vec![0, 0, 1], vec![1, 1, 1]],
            vec![-1.0, 0.0, 1.0],
            vec![ExtReal::finite(-1.0), ExtReal::finite(-2.0)],
        );
        s.scaled = vec![ScaledState { state: 1, anchor: 0, factor: 2.0 }];
        let p = validate_problem(s.clone()).unwrap();
        assert_eq!(p.scaling(1), Some((0, 2.0)));
        s.payoff[1] = ExtReal::finite(-3.0);
        assert!(matches!(
            validate_problem(s).unwrap_err(),
            ProblemError::InvalidScaledState { state: 1, .. }
        ));
    }

    #[test]
    fn parse_reports_field() {
        let text = r#"{"states":["a"],"increments":[0],"transition":[[0]],"payoff":["oops"],"z0":0}"#;
        match parse_problem(text).unwrap_err() {
            ProblemError::Parse { field, .. } => assert_eq!(field, "payoff[0]"),
            e => panic!("unexpected {e:?}"),
        }
        let text = r#"{"states":["a"],"increments":[0],"transition":[[0]],"payoff":[0]}"#;
        match parse_problem(text).unwrap_err() {
            ProblemError::Parse { message, .. } => assert!(message.contains("z0")),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn parse_neg_inf_and_coordinates() {
        let text = r#"{"states":[0.5,[1,2],"c"],"increments":[-1,0,1],
            "transition":[[0,0,1],[1,1,2],[2,2,2]],"payoff":[1,"-inf",2.5],"z0":1}"#;
        let s = parse_problem(text).unwrap();
        assert_eq!(s.payoff[1], ExtReal::NEG_INF);
        assert_eq!(s.state_labels[1].coords(), Some(vec![1.0, 2.0]));
        assert_eq!(s.state_labels[0].coords(), Some(vec![0.5]));
        assert!(s.state_labels[2].coords().is_none());
        validate_problem(s).unwrap();
    }
}
