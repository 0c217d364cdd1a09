//! Doob's maximal inequality `E[Y^p - c|X|^p] <= u(x, y)` for the running
//! maximum `Y = max(y, max |X_t|)`.
//!
//! The reduced problem lives on `r = |x| / y in [0, 1]`. Increments are
//! measured in units of `y`, so a step from `r` lands at `s = r + d`. For
//! `|s| <= 1` the maximum does not move and the value is `rho(|s|)`. For
//! `|s| > 1` the maximum becomes `|s|` and the point is stored as a scaled
//! copy of the `r = 1` state.

use std::collections::BTreeMap;

use super::PresetError;
use crate::ext_real::ExtReal;
use crate::operator::{iterate_to_fixed_point, IterationOptions, IterationStatus, RayStructure};
use crate::problem::{
    validate_problem, GridFn, ProblemSpec, ScaledState, StateLabel, ValidatedProblem,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoobParams {
    pub p: f64,
    pub c: f64,
    /// Number of equally spaced nodes on `[0, 1]`, both ends included.
    pub grid_points: usize,
    pub span: f64,
}

/// `(p / (p - 1))^p`.
pub fn sharp_constant(p: f64) -> f64 {
    (p / (p - 1.0)).powf(p)
}

impl DoobParams {
    pub const DEFAULT_SPAN: f64 = 3.0;

    pub fn new(p: f64, grid_points: usize) -> Self {
        DoobParams {
            p,
            c: sharp_constant(p),
            grid_points,
            span: Self::DEFAULT_SPAN,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<(), PresetError> {
        let bad = |m: String| Err(PresetError::InvalidParams(m));
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p must be a finite number above 1, got {}", self.p));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be finite and nonnegative, got {}", self.c));
        }
        if self.grid_points < 3 {
            return bad(format!("grid_points must be at least 3, got {}", self.grid_points));
        }
        if !(self.span > 1.0 && self.span.is_finite()) {
            return bad(format!("span must be finite and above 1, got {}", self.span));
        }
        Ok(())
    }

    pub fn is_sharp(&self) -> bool {
        let cs = sharp_constant(self.p);
        (self.c - cs).abs() <= 1e-12 * cs
    }

    pub fn cells(&self) -> usize {
        self.grid_points - 1
    }

    /// `r` at node `i`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.cells() as f64
    }

    /// Location of the kink `(p - 1) / p`.
    pub fn kink(&self) -> f64 {
        (self.p - 1.0) / self.p
    }
}

/// The smallest fixed point above `y^p - c|x|^p` at the sharp constant.
pub fn doob_closed_form(params: &DoobParams, x: f64, y: f64) -> Result<f64, PresetError> {
    if !params.is_sharp() {
        return Err(PresetError::NonSharpConstant {
            c: params.c,
            sharp: sharp_constant(params.p),
        });
    }
    let ax = x.abs();
    if !(ax <= y) {
        return Err(PresetError::OutsideStateSpace { x, y });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let p = params.p;
    Ok(if ax < (1.0 - 1.0 / p) * y {
        y.powf(p) - params.c * ax.powf(p)
    } else {
        p * y.powf(p) - p * p / (p - 1.0) * ax * y.powf(p - 1.0)
    })
}

/// `rho(r) = u(r, 1)`.
pub fn doob_rho(params: &DoobParams, r: f64) -> Result<f64, PresetError> {
    doob_closed_form(params, r, 1.0)
}

/// Increments in grid units: all of `-8..=8`, then powers of two, up to
/// `span + 1`.
fn increment_units(params: &DoobParams) -> Vec<i64> {
    let kmax = ((params.span + 1.0) * params.cells() as f64).ceil() as i64;
    let mut pos: Vec<i64> = (1..=8.min(kmax)).collect();
    let mut k = 16;
    while k < kmax {
        pos.push(k);
        k *= 2;
    }
    if *pos.last().unwrap() < kmax {
        pos.push(kmax);
    }
    let mut all: Vec<i64> = pos.iter().rev().map(|k| -k).collect();
    all.push(0);
    all.extend(pos);
    all
}

/// Multiplier of `rho(1)` at `|s| > 1`: the tangent `1 + p(|s| - 1)` to
/// `|s|^p` at 1.
pub fn tail_factor(p: f64, s: f64) -> f64 {
    1.0 + p * (s.abs() - 1.0)
}

/// Reduced problem. States `0..grid_points` are the nodes in increasing
/// order; further states are scaled copies of `r = 1`. The initial state
/// is `r = 0`.
pub fn build_doob_problem(params: &DoobParams) -> Result<ValidatedProblem, PresetError> {
    params.validate()?;
    let n = params.cells() as i64;
    let h = 1.0 / n as f64;
    let units = increment_units(params);
    let payoff_at = |r: f64| 1.0 - params.c * r.powf(params.p);
    let f1 = payoff_at(1.0);

    let mut labels: Vec<StateLabel> = (0..=n).map(|i| StateLabel::Coord(params.node(i as usize))).collect();
    let mut payoff: Vec<ExtReal> = (0..=n).map(|i| ExtReal::finite(payoff_at(params.node(i as usize)))).collect();
    let mut aliases: BTreeMap<i64, usize> = BTreeMap::new();
    for i in 0..=n {
        for &k in &units {
            if (i + k).abs() > n {
                aliases.insert((i + k).abs(), 0);
            }
        }
    }
    let mut scaled = Vec::with_capacity(aliases.len());
    for (s, idx) in aliases.iter_mut() {
        *idx = labels.len();
        let r = *s as f64 * h;
        let factor = tail_factor(params.p, r);
        labels.push(StateLabel::Coord(r));
        payoff.push(ExtReal::finite(factor * f1));
        scaled.push(ScaledState {
            state: *idx,
            anchor: n as usize,
            factor,
        });
    }
    let mut transition: Vec<Vec<usize>> = (0..=n)
        .map(|i| {
            units
                .iter()
                .map(|&k| {
                    let s = (i + k).abs();
                    if s <= n { s as usize } else { aliases[&s] }
                })
                .collect()
        })
        .collect();
    transition.extend(aliases.values().map(|&idx| vec![idx; units.len()]));
    let spec = ProblemSpec {
        state_labels: labels,
        increments: units.iter().map(|&k| k as f64 * h).collect(),
        transition,
        payoff,
        initial_state: 0,
        scaled,
    };
    Ok(validate_problem(spec)?)
}

/// Values of a function of `r` on the reduced problem, tail states included.
pub fn doob_grid_fn(
    params: &DoobParams,
    problem: &ValidatedProblem,
    rho: impl Fn(f64) -> f64,
) -> GridFn {
    let at_one = rho(1.0);
    GridFn::new(
        (0..problem.n_states())
            .map(|z| match problem.scaling(z) {
                Some((_, factor)) => ExtReal::finite(factor * at_one),
                None => ExtReal::finite(rho(params.node(z))),
            })
            .collect(),
    )
}

/// The closed form sampled on the reduced problem.
pub fn doob_closed_form_grid(
    params: &DoobParams,
    problem: &ValidatedProblem,
) -> Result<GridFn, PresetError> {
    doob_rho(params, 0.0)?;
    Ok(doob_grid_fn(params, problem, |r| doob_rho(params, r).unwrap()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoobSolution {
    /// `(r, rho(r))` on the nodes of `[0, 1]`.
    pub rho: Vec<(f64, ExtReal)>,
    pub status: IterationStatus,
    pub iterations: usize,
    pub sup_delta: f64,
    /// `(intercept, slope)` of the affine part of `rho` near 1.
    pub tangent: Option<(f64, f64)>,
    /// Full table over every state of the reduced problem.
    pub values: GridFn,
}

impl DoobSolution {
    pub fn rho_at_one(&self) -> ExtReal {
        self.rho.last().unwrap().1
    }

    pub fn rho_at_zero(&self) -> ExtReal {
        self.rho[0].1
    }
}

/// Width of the window `[1 - w, 1]` used for the tangent fit.
pub const TANGENT_WINDOW: f64 = 0.1;

/// Least-squares line through the nodes with `r >= 1 - TANGENT_WINDOW`.
pub fn fit_tangent(rho: &[(f64, ExtReal)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = rho
        .iter()
        .filter(|(r, _)| *r >= 1.0 - TANGENT_WINDOW - 1e-12)
        .map(|(r, v)| v.finite_value().map(|v| (*r, v)))
        .collect::<Option<_>>()?;
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mr = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mr).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mr) * (p.1 - mv)).sum();
    let slope = sxy / sxx;
    Some((mv - slope * mr, slope))
}

pub fn doob_solve(params: &DoobParams, opts: Option<IterationOptions>) -> Result<DoobSolution, PresetError> {
    let problem = build_doob_problem(params)?;
    let f = problem.payoff().clone();
    let opts = opts.unwrap_or_else(|| IterationOptions::for_payoff(&f));
    let report = iterate_to_fixed_point(&problem, &f, &opts)?;
    let rho: Vec<(f64, ExtReal)> = (0..params.grid_points)
        .map(|i| (params.node(i), report.result[i]))
        .collect();
    let tangent = if report.status == IterationStatus::Converged {
        fit_tangent(&rho)
    } else {
        None
    };
    Ok(DoobSolution {
        rho,
        status: report.status,
        iterations: report.iterations,
        sup_delta: report.sup_delta,
        tangent,
        values: report.result,
    })
}

/// Sup-norm distance between a solution and the closed form on `[0, 1]`.
pub fn doob_sup_error(params: &DoobParams, sol: &DoobSolution) -> Result<f64, PresetError> {
    let mut worst = 0.0f64;
    for &(r, v) in &sol.rho {
        let exact = doob_rho(params, r)?;
        worst = worst.max(match v.finite_value() {
            Some(v) => (v - exact).abs(),
            None => f64::INFINITY,
        });
    }
    Ok(worst)
}

/// A finite-horizon Doob problem on integer points `(x, y)`, `|x| <= y`,
/// with the maximum carried in the state. From `(x, y)` the increments are
/// `k * y` for `|k| <= k_max`. States are everything reachable within
/// `horizon` steps of the listed starting points; states first reached at
/// step `horizon` are absorbing.
#[derive(Debug, Clone)]
pub struct DoobLattice {
    pub problem: ValidatedProblem,
    pub points: Vec<(i64, i64)>,
    /// Starting points grouped into rays: `state -> (ray, scale)`.
    pub rays: RayStructure,
}

pub fn build_doob_lattice(
    p: f64,
    c: f64,
    k_max: i64,
    horizon: usize,
    bases: &[(i64, i64)],
    scales: &[i64],
) -> Result<DoobLattice, PresetError> {
    if !(p > 1.0 && p.is_finite() && c.is_finite() && c >= 0.0) || k_max < 1 {
        return Err(PresetError::InvalidParams("lattice needs p > 1, c >= 0, k_max >= 1".into()));
    }
    if scales.iter().any(|&s| s < 1) || bases.is_empty() || scales.is_empty() {
        return Err(PresetError::InvalidParams("bases and positive scales required".into()));
    }
    for &(x, y) in bases {
        if !(y > 0 && x.abs() <= y) {
            return Err(PresetError::OutsideStateSpace { x: x as f64, y: y as f64 });
        }
    }
    let ks: Vec<i64> = (-k_max..=k_max).collect();
    let mut index: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut points = Vec::new();
    let mut rays = RayStructure::new();
    let mut frontier = Vec::new();
    for (ray, &(x, y)) in bases.iter().enumerate() {
        for &s in scales {
            let pt = (x * s, y * s);
            let z = *index.entry(pt).or_insert_with(|| {
                points.push(pt);
                frontier.push(pt);
                points.len() - 1
            });
            rays.insert(z, (ray, s as f64));
        }
    }
    let step = |(x, y): (i64, i64), k: i64| {
        let nx = x + k * y;
        (nx, y.max(nx.abs()))
    };
    let mut expanded = vec![false; points.len()];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for pt in frontier {
            let z = index[&pt];
            if expanded.len() <= z {
                expanded.resize(z + 1, false);
            }
            expanded[z] = true;
            for &k in &ks {
                let q = step(pt, k);
                index.entry(q).or_insert_with(|| {
                    points.push(q);
                    next.push(q);
                    points.len() - 1
                });
            }
        }
        frontier = next;
    }
    expanded.resize(points.len(), false);
    let transition = points
        .iter()
        .enumerate()
        .map(|(z, &pt)| {
            ks.iter()
                .map(|&k| if expanded[z] { index[&step(pt, k)] } else { z })
                .collect()
        })
        .collect();
    let payoff = points
        .iter()
        .map(|&(x, y)| ExtReal::finite((y as f64).powf(p) - c * (x.abs() as f64).powf(p)))
        .collect();
    let spec = ProblemSpec {
        state_labels: points
            .iter()
            .map(|&(x, y)| StateLabel::Coords(vec![x as f64, y as f64]))
            .collect(),
        increments: ks.iter().map(|&k| k as f64).collect(),
        transition,
        payoff,
        initial_state: 0,
        scaled: vec![],
    };
    Ok(DoobLattice {
        problem: validate_problem(spec)?,
        points,
        rays,
    })
}
