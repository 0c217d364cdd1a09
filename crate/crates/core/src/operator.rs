//! The envelope operator `A` on grid functions:
//! `(Ag)(z) = [g(phi(z, .))]^#(0)`.
//!
//! Finite-horizon values `A^T f`, monotone iteration to the smallest fixed
//! point dominating `f`, fixed-point certificates, hedge-ratio extraction,
//! and a few structural checks.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::envelope::{envelope_of_iter, select_supergradient, SupergradientPolicy};
use crate::ext_real::ExtReal;
use crate::problem::{GridFn, ValidatedProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("grid function has length {found}, problem has {expected} states")]
    LengthMismatch { expected: usize, found: usize },
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("value cap {cap} must be finite and exceed the largest finite payoff {max_payoff}")]
    BadCap { cap: f64, max_payoff: f64 },
    #[error("value tables are empty")]
    NoValueTables,
    #[error("state {state} has no real coordinate label")]
    MissingCoordinates { state: usize },
}

fn check_len(problem: &ValidatedProblem, g: &GridFn) -> Result<(), OperatorError> {
    if g.len() != problem.n_states() {
        return Err(OperatorError::LengthMismatch {
            expected: problem.n_states(),
            found: g.len(),
        });
    }
    Ok(())
}

/// One application of `A`, writing into `out`.
fn apply_a_into(
    problem: &ValidatedProblem,
    g: &[ExtReal],
    out: &mut Vec<ExtReal>,
    scratch: &mut Vec<(f64, f64)>,
) {
    let d = problem.increments().values();
    let n = problem.n_states();
    out.clear();
    out.resize(n, ExtReal::NEG_INF);
    for z in 0..n {
        if problem.scaling(z).is_some() {
            continue;
        }
        let row = problem.transition().row(z);
        if row.iter().any(|&w| g[w].is_pos_inf()) {
            out[z] = ExtReal::POS_INF;
            continue;
        }
        let samples = d.iter().zip(row).map(|(&dj, &w)| (dj, g[w]));
        out[z] = envelope_of_iter(samples, 0.0, scratch).value;
    }
    for z in 0..n {
        if let Some((anchor, factor)) = problem.scaling(z) {
            out[z] = out[anchor].scale(factor);
        }
    }
}

/// `Ag` for every state. Satisfies `Ag >= g` whenever scaled states of `g`
/// agree with their anchors.
pub fn apply_a(problem: &ValidatedProblem, g: &GridFn) -> Result<GridFn, OperatorError> {
    check_len(problem, g)?;
    let mut out = Vec::with_capacity(g.len());
    let mut scratch = Vec::new();
    apply_a_into(problem, g.values(), &mut out, &mut scratch);
    Ok(GridFn::new(out))
}

/// `[f, Af, ..., A^T f]`.
pub fn finite_horizon_value(
    problem: &ValidatedProblem,
    f: &GridFn,
    horizon: usize,
) -> Result<Vec<GridFn>, OperatorError> {
    check_len(problem, f)?;
    let mut tables = Vec::with_capacity(horizon + 1);
    tables.push(f.clone());
    let mut scratch = Vec::new();
    for _ in 0..horizon {
        let mut out = Vec::with_capacity(f.len());
        apply_a_into(problem, tables.last().unwrap().values(), &mut out, &mut scratch);
        tables.push(GridFn::new(out));
    }
    Ok(tables)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationStatus {
    Converged,
    Diverged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub value_cap: f64,
}

impl IterationOptions {
    pub const DEFAULT_TOL: f64 = 1e-10;
    pub const DEFAULT_MAX_ITER: usize = 100_000;

    /// Default cap `1e6 * (1 + max |finite f|)`.
    pub fn default_cap(f: &GridFn) -> f64 {
        1e6 * (1.0 + max_abs_finite(f))
    }

    pub fn for_payoff(f: &GridFn) -> Self {
        IterationOptions {
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            value_cap: Self::default_cap(f),
        }
    }
}

fn max_abs_finite(f: &GridFn) -> f64 {
    f.iter()
        .filter_map(|v| v.finite_value())
        .fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub result: GridFn,
    pub status: IterationStatus,
    pub iterations: usize,
    /// Last sup-norm change over states with finite new values.
    pub sup_delta: f64,
    pub cap_hit_states: Vec<usize>,
}

/// Iterates `A` from `f` until the sup-norm change drops to `tol`
/// (`Converged`), some value exceeds the cap (`Diverged`, those states are
/// set to `+inf`), or `max_iter` steps were taken.
pub fn iterate_to_fixed_point(
    problem: &ValidatedProblem,
    f: &GridFn,
    opts: &IterationOptions,
) -> Result<IterationReport, OperatorError> {
    check_len(problem, f)?;
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(OperatorError::BadTolerance(opts.tol));
    }
    let max_payoff = f
        .iter()
        .filter_map(|v| v.finite_value())
        .fold(f64::NEG_INFINITY, f64::max);
    if !opts.value_cap.is_finite() || opts.value_cap <= max_payoff {
        return Err(OperatorError::BadCap {
            cap: opts.value_cap,
            max_payoff,
        });
    }

    let mut current = f.values().to_vec();
    let mut next = Vec::with_capacity(current.len());
    let mut scratch = Vec::new();
    let mut sup_delta = f64::INFINITY;
    for it in 1..=opts.max_iter {
        apply_a_into(problem, &current, &mut next, &mut scratch);
        let cap_hit: Vec<usize> = (0..next.len())
            .filter(|&z| next[z] > ExtReal::finite(opts.value_cap))
            .collect();
        sup_delta = next
            .iter()
            .zip(&current)
            .filter(|(n, _)| n.is_finite())
            .map(|(n, c)| match c.finite_value() {
                Some(c) => (n.to_f64() - c).abs(),
                None => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        std::mem::swap(&mut current, &mut next);
        if !cap_hit.is_empty() {
            for &z in &cap_hit {
                current[z] = ExtReal::POS_INF;
            }
            return Ok(IterationReport {
                result: GridFn::new(current),
                status: IterationStatus::Diverged,
                iterations: it,
                sup_delta,
                cap_hit_states: cap_hit,
            });
        }
        if sup_delta <= opts.tol {
            return Ok(IterationReport {
                result: GridFn::new(current),
                status: IterationStatus::Converged,
                iterations: it,
                sup_delta,
                cap_hit_states: vec![],
            });
        }
    }
    Ok(IterationReport {
        result: GridFn::new(current),
        status: IterationStatus::MaxIterations,
        iterations: opts.max_iter,
        sup_delta,
        cap_hit_states: vec![],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub dominates: bool,
    pub superfixed: bool,
    /// `max_z (Au - u)(z)`.
    pub worst_gap: f64,
    pub worst_state: usize,
}

impl FixedPointReport {
    pub fn certified(&self) -> bool {
        self.dominates && self.superfixed
    }
}

/// Certificate that `u` is a fixed point of `A` above `f`: `u >= f` and
/// `Au <= u + tol`. Any such `u` bounds the optimal constant from above.
pub fn verify_fixed_point(
    problem: &ValidatedProblem,
    u: &GridFn,
    f: &GridFn,
    tol: f64,
) -> Result<FixedPointReport, OperatorError> {
    check_len(problem, u)?;
    check_len(problem, f)?;
    let au = apply_a(problem, u)?;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_state = 0;
    for z in 0..u.len() {
        let gap = if au[z] == u[z] {
            0.0
        } else if au[z].is_neg_inf() || u[z].is_pos_inf() {
            f64::NEG_INFINITY
        } else if au[z].is_pos_inf() || u[z].is_neg_inf() {
            f64::INFINITY
        } else {
            au[z].to_f64() - u[z].to_f64()
        };
        if gap > worst_gap {
            worst_gap = gap;
            worst_state = z;
        }
    }
    Ok(FixedPointReport {
        dominates: u.dominates(f),
        superfixed: worst_gap <= tol,
        worst_gap,
        worst_state,
    })
}

/// Hedge ratios `xi[t-1][z]` for `t = 1..=T`; `None` where the envelope is
/// `-inf` (no admissible continuation with a finite value).
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    xi: Vec<Vec<Option<f64>>>,
}

impl Strategy {
    pub fn new(xi: Vec<Vec<Option<f64>>>) -> Self {
        Strategy { xi }
    }

    pub fn horizon(&self) -> usize {
        self.xi.len()
    }

    /// Ratio held over period `t` (1-based) in state `z`. `None` when
    /// undefined or out of the table.
    pub fn get(&self, t: usize, z: usize) -> Option<f64> {
        self.xi.get(t.checked_sub(1)?)?.get(z).copied().flatten()
    }

    /// Whether `(t, z)` is covered by the table at all.
    pub fn covers(&self, t: usize, z: usize) -> bool {
        t >= 1 && self.xi.get(t - 1).is_some_and(|row| z < row.len())
    }

    pub fn table(&self) -> &[Vec<Option<f64>>] {
        &self.xi
    }

    pub fn table_mut(&mut self) -> &mut [Vec<Option<f64>>] {
        &mut self.xi
    }

    /// `(t, z)` pairs without a hedge ratio.
    pub fn undefined_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, row) in self.xi.iter().enumerate() {
            for (z, x) in row.iter().enumerate() {
                if x.is_none() {
                    out.push((t + 1, z));
                }
            }
        }
        out
    }
}

/// `xi(t, z)` = a supergradient at 0 of `d -> A^{T-t} f(phi(z, d))`,
/// where `value_tables` is the output of [`finite_horizon_value`].
pub fn extract_strategy(
    problem: &ValidatedProblem,
    value_tables: &[GridFn],
    policy: SupergradientPolicy,
) -> Result<Strategy, OperatorError> {
    if value_tables.is_empty() {
        return Err(OperatorError::NoValueTables);
    }
    for table in value_tables {
        check_len(problem, table)?;
    }
    let horizon = value_tables.len() - 1;
    let d = problem.increments().values();
    let mut scratch = Vec::new();
    let mut xi = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let g = &value_tables[horizon - t];
        let row: Vec<Option<f64>> = (0..problem.n_states())
            .map(|z| {
                let next = problem.transition().row(z);
                let samples = d.iter().zip(next).map(|(&dj, &w)| (dj, g[w]));
                let res = envelope_of_iter(samples, 0.0, &mut scratch);
                select_supergradient(&res, policy).ok()
            })
            .collect();
        xi.push(row);
    }
    Ok(Strategy { xi })
}

/// `state -> (ray id, scale)`; states on a common ray are compared.
pub type RayStructure = BTreeMap<usize, (usize, f64)>;

/// True iff `u(scale * z) = scale^p u(z)` within `tol` (relative to
/// `max(1, |u|)`) for every pair of states on a common ray.
pub fn check_homogeneity(u: &GridFn, rays: &RayStructure, p: f64, tol: f64) -> bool {
    let mut groups: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (&state, &(ray, scale)) in rays {
        groups.entry(ray).or_default().push((state, scale));
    }
    groups.values().all(|members| {
        let (base, base_scale) = members[0];
        let ub = u[base];
        members[1..].iter().all(|&(z, s)| {
            let factor = (s / base_scale).powf(p);
            match (u[z].finite_value(), ub.finite_value()) {
                (Some(a), Some(b)) => {
                    let expected = factor * b;
                    (a - expected).abs() <= tol * a.abs().max(expected.abs()).max(1.0)
                }
                _ => u[z] == ub,
            }
        })
    })
}

/// The submartingale extension condition: `d -> u(phi(z, d))` is
/// nonincreasing over the increment grid at every state.
pub fn check_submartingale_extension(
    problem: &ValidatedProblem,
    u: &GridFn,
) -> Result<bool, OperatorError> {
    check_len(problem, u)?;
    if let Some(state) = problem.labels().iter().position(|l| l.coords().is_none()) {
        return Err(OperatorError::MissingCoordinates { state });
    }
    Ok((0..problem.n_states()).all(|z| {
        problem
            .transition()
            .row(z)
            .windows(2)
            .all(|w| u[w[1]] <= u[w[0]])
    }))
}
