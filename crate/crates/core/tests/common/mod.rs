#![allow(dead_code)]

use martineq::problem::{validate_problem, GridFn, ProblemSpec, StateLabel, ValidatedProblem};
use martineq::tchakaloff::{MartingaleTree, TreeNode};
use martineq::ExtReal;
use proptest::prelude::*;
use rand::Rng;

/// Value in `[-10, 10]`, `-inf` with the given probability.
pub fn ext_value(neg_inf_prob: f64) -> impl Strategy<Value = ExtReal> {
    (0.0..1.0f64, -10.0..10.0f64).prop_map(move |(u, v)| if u < neg_inf_prob { ExtReal::NEG_INF } else { ExtReal::finite(v) })
}

/// Strictly increasing abscissas in `[-5, 5]` with sampled values.
pub fn sampled_points(max_len: usize, neg_inf_prob: f64) -> impl Strategy<Value = Vec<(f64, ExtReal)>> {
    prop::collection::btree_set(-50i32..=50, 1..=max_len).prop_flat_map(move |xs| {
        let xs: Vec<f64> = xs.into_iter().map(|k| k as f64 / 10.0).collect();
        let n = xs.len();
        prop::collection::vec(ext_value(neg_inf_prob), n).prop_map(move |vs| xs.iter().copied().zip(vs).collect())
    })
}

/// Increment grid of at most `max_len` points containing 0.
pub fn increment_grid(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(-20i32..=20, 0..max_len).prop_map(|mut ks| {
        ks.insert(0);
        ks.into_iter().map(|k| k as f64 / 4.0).collect()
    })
}

/// A random closed system: `n <= max_states`, at most `max_incs`
/// increments, arbitrary transitions except the identity at 0.
pub fn random_problem(max_states: usize, max_incs: usize, neg_inf_prob: f64) -> impl Strategy<Value = ValidatedProblem> {
    (1..=max_states, increment_grid(max_incs)).prop_flat_map(move |(n, incs)| {
        let m = incs.len();
        (
            Just(incs),
            prop::collection::vec(prop::collection::vec(0..n, m), n),
            prop::collection::vec(ext_value(neg_inf_prob), n),
            0..n,
        )
            .prop_map(|(incs, mut rows, payoff, z0)| {
                let zero = incs.iter().position(|&d| d == 0.0).unwrap();
                for (z, row) in rows.iter_mut().enumerate() {
                    row[zero] = z;
                }
                let spec = ProblemSpec {
                    state_labels: (0..rows.len()).map(|z| StateLabel::Coord(z as f64)).collect(),
                    increments: incs,
                    transition: rows,
                    payoff,
                    initial_state: z0,
                    scaled: vec![],
                };
                validate_problem(spec).expect("generated problem is valid")
            })
    })
}

pub fn grid_fn(n: usize, neg_inf_prob: f64) -> impl Strategy<Value = GridFn> {
    prop::collection::vec(ext_value(neg_inf_prob), n).prop_map(GridFn::new)
}

/// Random walk on `{-k, ..., k}` with increments `{-2, ..., 2}`; leaving
/// the range lands in a cemetery state with payoff `-inf`.
pub fn lattice_walk(k: i64, payoff: impl Fn(i64) -> f64) -> ValidatedProblem {
    let incs = [-2i64, -1, 0, 1, 2];
    let n = (2 * k + 1) as usize;
    let cemetery = n;
    let mut rows = Vec::new();
    for i in 0..n as i64 {
        let x = i - k;
        rows.push(
            incs.iter()
                .map(|d| {
                    let y = x + d;
                    if y.abs() <= k {
                        (y + k) as usize
                    } else {
                        cemetery
                    }
                })
                .collect(),
        );
    }
    rows.push(vec![cemetery; incs.len()]);
    let mut labels: Vec<StateLabel> = (-k..=k).map(|x| StateLabel::Coord(x as f64)).collect();
    labels.push(StateLabel::Name("cemetery".into()));
    let mut f: Vec<ExtReal> = (-k..=k).map(|x| ExtReal::finite(payoff(x))).collect();
    f.push(ExtReal::NEG_INF);
    validate_problem(ProblemSpec {
        state_labels: labels,
        increments: incs.iter().map(|&d| d as f64).collect(),
        transition: rows,
        payoff: f,
        initial_state: k as usize,
        scaled: vec![],
    })
    .unwrap()
}

/// Random mean-zero law on the integer increments `{-2, ..., 2}` as a
/// mixture of two-point laws.
pub fn random_lattice_law<R: Rng>(rng: &mut R) -> Vec<(f64, i64)> {
    let mut w = [0.0f64; 5];
    let parts = rng.gen_range(1..=3);
    for _ in 0..parts {
        let share = rng.gen_range(0.1..1.0);
        let a = -rng.gen_range(1..=2i64);
        let b = rng.gen_range(0..=2i64);
        if b == 0 {
            w[2] += share;
        } else {
            let pa = b as f64 / (b - a) as f64;
            w[(a + 2) as usize] += share * pa;
            w[(b + 2) as usize] += share * (1.0 - pa);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (p / total, i as i64 - 2))
        .collect()
}

/// Martingale tree on the integer lattice starting at 0.
pub fn lattice_tree<R: Rng>(rng: &mut R, horizon: usize) -> MartingaleTree {
    fn grow<R: Rng>(rng: &mut R, x: i64, depth: usize) -> Vec<TreeNode> {
        if depth == 0 {
            return vec![];
        }
        random_lattice_law(rng)
            .into_iter()
            .map(|(w, d)| TreeNode {
                w,
                x: vec![(x + d) as f64],
                children: grow(rng, x + d, depth - 1),
            })
            .collect()
    }
    MartingaleTree {
        n: 1,
        horizon,
        x0: vec![0.0],
        children: grow(rng, 0, horizon),
    }
}

/// Weights `u_i exp(theta y_i)` normalized, with `theta` found by
/// bisection so that the barycenter is `x`.
fn tilt(u: &[f64], ys: &[f64], x: f64) -> Vec<f64> {
    let weights = |theta: f64| {
        let top = ys.iter().fold(f64::NEG_INFINITY, |m, &y| m.max(theta * y));
        let w: Vec<f64> = u.iter().zip(ys).map(|(u, y)| u * (theta * y - top).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    let mean = |w: &[f64]| w.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>();
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(&weights(mid)) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    weights(0.5 * (lo + hi))
}

/// Tree with `width` children per node, values in `[-5, 5]`; weights are
/// tilted to make each sibling set average to its parent.
pub fn random_tree<R: Rng>(rng: &mut R, horizon: usize, width: usize) -> MartingaleTree {
    fn grow<R: Rng>(rng: &mut R, x: f64, depth: usize, width: usize) -> Vec<TreeNode> {
        if depth == 0 {
            return vec![];
        }
        let margin = (0.25 * (5.0 - x.abs())).min(0.5);
        let ys: Vec<f64> = loop {
            let ys: Vec<f64> = (0..width).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
            if lo + margin < x && x < hi - margin {
                break ys;
            }
        };
        let u: Vec<f64> = (0..width).map(|_| rng.gen_range(0.1..1.0)).collect();
        let ws = tilt(&u, &ys, x);
        ws.into_iter()
            .zip(ys)
            .map(|(w, y)| TreeNode {
                w,
                x: vec![y],
                children: grow(rng, y, depth - 1, width),
            })
            .collect()
    }
    let x0: f64 = rng.gen_range(-1.0..1.0);
    MartingaleTree {
        n: 1,
        horizon,
        x0: vec![x0],
        children: grow(rng, x0, horizon, width),
    }
}

pub fn close(a: ExtReal, b: ExtReal, tol: f64) -> bool {
    match (a.finite_value(), b.finite_value()) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => a == b,
    }
}
