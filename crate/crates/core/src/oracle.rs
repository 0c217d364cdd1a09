//! Brute-force reference computations that do not touch the hull code.
//!
//! One-step problems are solved as linear programs over measures with a
//! fixed barycenter by enumerating supports of at most two atoms, which is
//! exact in one dimension.

use std::collections::HashMap;

use thiserror::Error;

use crate::ext_real::ExtReal;
use crate::operator::Strategy;
use crate::problem::{GridFn, ValidatedProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no samples")]
    Empty,
    #[error("sample {index} has value +inf")]
    PlusInfinityValue { index: usize },
    #[error("sample {index} has a non-finite abscissa")]
    NonFiniteAbscissa { index: usize },
    #[error("path table has {found} entries, expected {expected}")]
    IncompleteTable { expected: usize, found: usize },
    #[error("no hedge ratio for reachable state {state} at time {time}")]
    UndefinedStrategyState { time: usize, state: usize },
    #[error("grid function has length {found}, problem has {expected} states")]
    LengthMismatch { expected: usize, found: usize },
}

/// `sup { sum l_i v_i : l >= 0, sum l_i = 1, sum l_i d_i = barycenter }`
/// over the finite-valued samples; `-inf` when infeasible.
pub fn one_step_lp(samples: &[(f64, ExtReal)], barycenter: f64) -> Result<ExtReal, OracleError> {
    if samples.is_empty() {
        return Err(OracleError::Empty);
    }
    for (index, (d, v)) in samples.iter().enumerate() {
        if !d.is_finite() {
            return Err(OracleError::NonFiniteAbscissa { index });
        }
        if v.is_pos_inf() {
            return Err(OracleError::PlusInfinityValue { index });
        }
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|&(d, v)| v.finite_value().map(|v| (d, v)))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for (i, &(di, vi)) in pts.iter().enumerate() {
        if di == barycenter {
            best = best.max(vi);
        }
        for &(dj, vj) in &pts[i + 1..] {
            let (lo, hi) = if di < dj { ((di, vi), (dj, vj)) } else { ((dj, vj), (di, vi)) };
            if lo.0 < barycenter && barycenter < hi.0 {
                let w = (hi.0 - barycenter) / (hi.0 - lo.0);
                best = best.max(w * lo.1 + (1.0 - w) * hi.1);
            }
        }
    }
    Ok(ExtReal::new(best).unwrap_or(ExtReal::NEG_INF))
}

fn check_len(problem: &ValidatedProblem, f: &GridFn) -> Result<(), OracleError> {
    if f.len() != problem.n_states() {
        return Err(OracleError::LengthMismatch {
            expected: problem.n_states(),
            found: f.len(),
        });
    }
    Ok(())
}

struct TreeRecursion<'a> {
    problem: &'a ValidatedProblem,
    f: &'a GridFn,
    horizon: usize,
    memo: HashMap<(usize, usize), ExtReal>,
}

impl TreeRecursion<'_> {
    fn value(&mut self, t: usize, z: usize) -> Result<ExtReal, OracleError> {
        if t == self.horizon {
            return Ok(self.f[z]);
        }
        if let Some(&v) = self.memo.get(&(t, z)) {
            return Ok(v);
        }
        let v = if let Some((anchor, factor)) = self.problem.scaling(z) {
            self.value(t, anchor)?.scale(factor)
        } else {
            let d = self.problem.increments().values();
            let mut samples = Vec::with_capacity(d.len());
            let mut plus_inf = false;
            for (j, &dj) in d.iter().enumerate() {
                let next = self.value(t + 1, self.problem.next_state(z, j))?;
                plus_inf |= next.is_pos_inf();
                samples.push((dj, next));
            }
            if plus_inf {
                ExtReal::POS_INF
            } else {
                one_step_lp(&samples, 0.0)?
            }
        };
        self.memo.insert((t, z), v);
        Ok(v)
    }
}

/// Horizon-`T` value at `z0` by backward recursion over the scenario tree,
/// each step solved by [`one_step_lp`].
pub fn enumerate_tree_value(
    problem: &ValidatedProblem,
    f: &GridFn,
    horizon: usize,
    z0: usize,
) -> Result<ExtReal, OracleError> {
    check_len(problem, f)?;
    let mut rec = TreeRecursion {
        problem,
        f,
        horizon,
        memo: HashMap::new(),
    };
    rec.value(0, z0)
}

/// Optimal constant for a path-dependent payoff. `table` lists the payoff of
/// every increment-index sequence of length `horizon` in lexicographic
/// order, first step most significant.
pub fn path_dp(table: &[ExtReal], increments: &[f64], horizon: usize) -> Result<ExtReal, OracleError> {
    let m = increments.len();
    if m == 0 {
        return Err(OracleError::Empty);
    }
    let expected = u32::try_from(horizon)
        .ok()
        .and_then(|h| m.checked_pow(h))
        .unwrap_or(usize::MAX);
    if table.len() != expected {
        return Err(OracleError::IncompleteTable {
            expected,
            found: table.len(),
        });
    }
    let mut layer = table.to_vec();
    let mut samples = Vec::with_capacity(m);
    for _ in 0..horizon {
        let mut prev = Vec::with_capacity(layer.len() / m);
        for block in layer.chunks(m) {
            samples.clear();
            samples.extend(increments.iter().copied().zip(block.iter().copied()));
            prev.push(one_step_lp(&samples, 0.0)?);
        }
        layer = prev;
    }
    Ok(layer[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeReport {
    /// `min over paths of a + sum xi d - f(Z_T)`; `+inf` if no path counts.
    pub min_slack: f64,
    /// Increment indices of a minimizing path.
    pub worst_path: Option<Vec<usize>>,
    /// Set only when `min_slack < 0`.
    pub violating_path: Option<Vec<usize>>,
}

fn reachable(problem: &ValidatedProblem, z0: usize, horizon: usize) -> Vec<Vec<bool>> {
    let n = problem.n_states();
    let mut layers = vec![vec![false; n]; horizon + 1];
    layers[0][z0] = true;
    for t in 0..horizon {
        for z in 0..n {
            if layers[t][z] {
                for &w in problem.transition().row(z) {
                    layers[t + 1][w] = true;
                }
            }
        }
    }
    layers
}

fn hedge_ratio(
    strategy: &Strategy,
    t: usize,
    z: usize,
) -> Result<Option<f64>, OracleError> {
    if !strategy.covers(t, z) {
        return Err(OracleError::UndefinedStrategyState { time: t, state: z });
    }
    Ok(strategy.get(t, z))
}

/// Minimum superhedging slack over every increment path of length
/// `horizon` from the initial state. Computed exactly by a backward
/// minimization over (time, state). Paths through states whose hedge ratio
/// is undefined, or ending at a `-inf` payoff, count as `+inf` slack.
pub fn hedge_check(
    problem: &ValidatedProblem,
    strategy: &Strategy,
    a: f64,
    f: &GridFn,
    horizon: usize,
) -> Result<HedgeReport, OracleError> {
    check_len(problem, f)?;
    let n = problem.n_states();
    let d = problem.increments().values();
    let reach = reachable(problem, problem.initial_state(), horizon);

    let terminal: Vec<f64> = f
        .iter()
        .map(|v| if v.is_neg_inf() { f64::INFINITY } else { -v.to_f64() })
        .collect();
    let mut tables = vec![terminal];
    let mut choices: Vec<Vec<usize>> = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let next = tables.last().unwrap();
        let mut cur = vec![f64::INFINITY; n];
        let mut arg = vec![0; n];
        for z in (0..n).filter(|&z| reach[t - 1][z]) {
            let Some(xi) = hedge_ratio(strategy, t, z)? else {
                continue;
            };
            for (j, &dj) in d.iter().enumerate() {
                let s = xi * dj + next[problem.next_state(z, j)];
                if s < cur[z] {
                    cur[z] = s;
                    arg[z] = j;
                }
            }
        }
        tables.push(cur);
        choices.push(arg);
    }
    tables.reverse();
    choices.reverse();

    let z0 = problem.initial_state();
    let min_slack = a + tables[0][z0];
    let worst_path = min_slack.is_finite().then(|| {
        let mut z = z0;
        let mut path = Vec::with_capacity(horizon);
        for arg in &choices {
            let j = arg[z];
            path.push(j);
            z = problem.next_state(z, j);
        }
        path
    });
    let violating_path = if min_slack < 0.0 { worst_path.clone() } else { None };
    Ok(HedgeReport {
        min_slack,
        worst_path,
        violating_path,
    })
}

/// Slack of one increment path; `None` when it passes through a state
/// without a hedge ratio.
pub fn path_slack(
    problem: &ValidatedProblem,
    strategy: &Strategy,
    a: f64,
    f: &GridFn,
    path: &[usize],
) -> Result<Option<f64>, OracleError> {
    let d = problem.increments().values();
    let mut z = problem.initial_state();
    let mut gains = 0.0;
    for (i, &j) in path.iter().enumerate() {
        let Some(xi) = hedge_ratio(strategy, i + 1, z)? else {
            return Ok(None);
        };
        gains += xi * d[j];
        z = problem.next_state(z, j);
    }
    Ok(Some(match f[z].finite_value() {
        Some(fz) => a + gains - fz,
        None => f64::INFINITY,
    }))
}

/// Same contract as [`hedge_check`], by explicit enumeration of all
/// `|grid|^horizon` paths. Returns the number of paths visited as well.
pub fn hedge_check_exhaustive(
    problem: &ValidatedProblem,
    strategy: &Strategy,
    a: f64,
    f: &GridFn,
    horizon: usize,
) -> Result<(HedgeReport, usize), OracleError> {
    check_len(problem, f)?;
    let m = problem.increments().len();
    let d = problem.increments().values();
    let mut best = f64::INFINITY;
    let mut best_path = None;
    let mut count = 0usize;
    let mut path = vec![0usize; horizon];
    let mut states = vec![problem.initial_state(); horizon + 1];
    let mut gains = vec![0.0; horizon + 1];
    loop {
        let mut ok = true;
        for i in 0..horizon {
            let z = states[i];
            match hedge_ratio(strategy, i + 1, z)? {
                Some(xi) => {
                    gains[i + 1] = gains[i] + xi * d[path[i]];
                    states[i + 1] = problem.next_state(z, path[i]);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        count += 1;
        if ok {
            let zt = states[horizon];
            let s = match f[zt].finite_value() {
                Some(fz) => a + gains[horizon] - fz,
                None => f64::INFINITY,
            };
            if s < best {
                best = s;
                best_path = Some(path.clone());
            }
        }
        let mut i = horizon;
        loop {
            if i == 0 {
                let violating_path = if best < 0.0 { best_path.clone() } else { None };
                return Ok((
                    HedgeReport {
                        min_slack: best,
                        worst_path: best_path,
                        violating_path,
                    },
                    count,
                ));
            }
            i -= 1;
            path[i] += 1;
            if path[i] < m {
                break;
            }
            path[i] = 0;
        }
    }
}
