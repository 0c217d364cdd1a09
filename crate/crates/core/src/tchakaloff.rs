//! Support reduction for finitely supported martingale laws.
//!
//! A law is stored as a scenario tree with conditional weights. The
//! reduction keeps a subset of the original paths, reweights them, and
//! preserves the barycenter at every node together with the expectation of
//! a vector-valued path function. Each node ends up with at most
//! `n + k + 1` children.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TchakaloffError {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("no kernel vector found at the rank tolerance")]
    DegenerateKernel,
    #[error("atom {index} has weight {weight}, expected a positive finite number")]
    BadWeight { index: usize, weight: f64 },
    #[error("atom {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("payoff at leaf {leaf} has {found} components, expected {expected}")]
    PayoffDimension { leaf: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    pub w: f64,
    pub x: Vec<f64>,
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

/// Law of an `R^n`-valued simple martingale started at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleTree {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;
const BARYCENTER_TOL: f64 = 1e-10;

fn barycenter_defect(x: &[f64], children: &[TreeNode]) -> f64 {
    let mass: f64 = children.iter().map(|c| c.w).sum();
    let mut worst = (mass - 1.0).abs();
    for (i, xi) in x.iter().enumerate() {
        let mean: f64 = children.iter().map(|c| c.w * c.x[i]).sum();
        worst = worst.max((mean - xi).abs());
    }
    worst
}

impl MartingaleTree {
    pub fn from_json(text: &str) -> Result<Self, TchakaloffError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            TchakaloffError::InvalidTree(format!("{}: {}", e.path(), e.inner()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    /// Checks dimensions, depths, positive weights summing to 1 (within
    /// 1e-12) and the barycenter property (within 1e-10).
    pub fn validate(&self) -> Result<(), TchakaloffError> {
        let bad = |m: String| Err(TchakaloffError::InvalidTree(m));
        if self.x0.len() != self.n {
            return bad(format!("x0 has {} coordinates, n = {}", self.x0.len(), self.n));
        }
        fn walk(
            tree: &MartingaleTree,
            x: &[f64],
            children: &[TreeNode],
            depth: usize,
            path: &mut Vec<usize>,
        ) -> Result<(), TchakaloffError> {
            let bad = |m: String| Err(TchakaloffError::InvalidTree(m));
            if depth == tree.horizon {
                if !children.is_empty() {
                    return bad(format!("node {path:?} at depth {depth} has children"));
                }
                return Ok(());
            }
            if children.is_empty() {
                return bad(format!("leaf {path:?} at depth {depth}, expected {}", tree.horizon));
            }
            for (i, c) in children.iter().enumerate() {
                path.push(i);
                if !(c.w > 0.0 && c.w.is_finite()) {
                    return bad(format!("node {path:?} has weight {}", c.w));
                }
                if c.x.len() != tree.n || c.x.iter().any(|v| !v.is_finite()) {
                    return bad(format!("node {path:?} needs {} finite coordinates", tree.n));
                }
                path.pop();
            }
            let mass: f64 = children.iter().map(|c| c.w).sum();
            if (mass - 1.0).abs() > WEIGHT_SUM_TOL {
                return bad(format!("children of {path:?} have total weight {mass}"));
            }
            let defect = barycenter_defect(x, children);
            if defect > BARYCENTER_TOL {
                return bad(format!("children of {path:?} miss the barycenter by {defect:e}"));
            }
            for (i, c) in children.iter().enumerate() {
                path.push(i);
                walk(tree, &c.x, &c.children, depth + 1, path)?;
                path.pop();
            }
            Ok(())
        }
        walk(self, &self.x0, &self.children, 0, &mut Vec::new())
    }

    /// Number of leaves.
    pub fn support(&self) -> usize {
        fn count(children: &[TreeNode]) -> usize {
            if children.is_empty() {
                1
            } else {
                children.iter().map(|c| count(&c.children)).sum()
            }
        }
        if self.horizon == 0 {
            1
        } else {
            count(&self.children)
        }
    }

    /// Every leaf as `(probability, path of values x0..x_T)`, depth first.
    pub fn leaves(&self) -> Vec<(f64, Vec<Vec<f64>>)> {
        fn walk(
            children: &[TreeNode],
            prob: f64,
            path: &mut Vec<Vec<f64>>,
            out: &mut Vec<(f64, Vec<Vec<f64>>)>,
        ) {
            if children.is_empty() {
                out.push((prob, path.clone()));
                return;
            }
            for c in children {
                path.push(c.x.clone());
                walk(&c.children, prob * c.w, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.children, 1.0, &mut vec![self.x0.clone()], &mut out);
        out
    }

    /// Largest deviation from mass 1 or from the barycenter over all nodes.
    pub fn martingale_error(&self) -> f64 {
        fn walk(x: &[f64], children: &[TreeNode]) -> f64 {
            if children.is_empty() {
                return 0.0;
            }
            children
                .iter()
                .map(|c| walk(&c.x, &c.children))
                .fold(barycenter_defect(x, children), f64::max)
        }
        walk(&self.x0, &self.children)
    }

    /// `sum over leaves of probability * f(leaf)`.
    pub fn expectation(&self, f: &mut PathFn<'_>) -> Vec<f64> {
        let mut total: Vec<f64> = Vec::new();
        for (i, (prob, path)) in self.leaves().into_iter().enumerate() {
            let refs: Vec<&[f64]> = path.iter().map(Vec::as_slice).collect();
            let v = f(i, &refs);
            if total.is_empty() {
                total = vec![0.0; v.len()];
            }
            for (t, vi) in total.iter_mut().zip(v) {
                *t += prob * vi;
            }
        }
        total
    }
}

/// Path function: `(leaf index, [x0, x1, ..., x_T]) -> R^k`.
pub type PathFn<'a> = dyn FnMut(usize, &[&[f64]]) -> Vec<f64> + 'a;

/// A kernel vector of the `m x (m + 1)` matrix whose columns are `cols`,
/// by Gauss-Jordan elimination with partial pivoting.
fn kernel_vector(cols: &[&[f64]], m: usize) -> Result<Vec<f64>, TchakaloffError> {
    let q = cols.len();
    let mut a: Vec<Vec<f64>> = (0..m).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let rank_tol = 1e-12 * scale;
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    let mut free = None;
    for col in 0..q {
        if row == m {
            free.get_or_insert(col);
            break;
        }
        let (best, best_abs) = (row..m)
            .map(|r| (r, a[r][col].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_abs <= rank_tol {
            free.get_or_insert(col);
            continue;
        }
        a.swap(row, best);
        let piv = a[row][col];
        for v in a[row].iter_mut() {
            *v /= piv;
        }
        for r in 0..m {
            if r != row && a[r][col] != 0.0 {
                let factor = a[r][col];
                for cc in 0..q {
                    a[r][cc] -= factor * a[row][cc];
                }
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    let free = free.ok_or(TchakaloffError::DegenerateKernel)?;
    let mut c = vec![0.0; q];
    c[free] = 1.0;
    for &(r, pc) in &pivots {
        c[pc] = -a[r][free];
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(TchakaloffError::DegenerateKernel);
    }
    Ok(c)
}

/// Reduces positively weighted vectors to at most `m` of them (the vector
/// dimension) with new positive weights and the same weighted sum. Returns
/// `(weight, input index)` pairs in input order.
pub fn caratheodory_reduce(atoms: &[(f64, Vec<f64>)], tol: f64) -> Result<Vec<(f64, usize)>, TchakaloffError> {
    let m = atoms.first().map_or(0, |a| a.1.len());
    for (index, (w, v)) in atoms.iter().enumerate() {
        if !(*w > 0.0 && w.is_finite()) {
            return Err(TchakaloffError::BadWeight { index, weight: *w });
        }
        if v.len() != m {
            return Err(TchakaloffError::DimensionMismatch {
                index,
                expected: m,
                found: v.len(),
            });
        }
    }
    let mut active: Vec<(f64, usize)> = atoms.iter().enumerate().map(|(i, a)| (a.0, i)).collect();
    while active.len() > m {
        let batch = &mut active[..m + 1];
        let cols: Vec<&[f64]> = batch.iter().map(|&(_, i)| atoms[i].1.as_slice()).collect();
        let mut c = kernel_vector(&cols, m)?;
        if !c.iter().any(|&v| v > 0.0) {
            for v in c.iter_mut() {
                *v = -*v;
            }
        }
        let (arg, t) = c
            .iter()
            .enumerate()
            .filter(|(_, &ci)| ci > 0.0)
            .map(|(i, &ci)| (i, batch[i].0 / ci))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if arg == usize::MAX {
            return Err(TchakaloffError::DegenerateKernel);
        }
        for (slot, ci) in batch.iter_mut().zip(&c) {
            slot.0 -= t * ci;
        }
        batch[arg].0 = 0.0;
        let wmax = active.iter().fold(0.0f64, |s, a| s.max(a.0));
        active.retain(|a| a.0 > tol * wmax);
    }
    active.sort_by_key(|a| a.1);
    Ok(active)
}

/// One-step reduction with the moment map `(f, x', 1)`: at most `k + n + 1`
/// children survive, with the mass, the barycenter and the mean of `f`
/// preserved.
pub fn reduce_one_step(
    parent_x: &[f64],
    children: &[(f64, Vec<f64>)],
    f_values: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<(f64, usize)>, TchakaloffError> {
    let n = parent_x.len();
    if f_values.len() != children.len() {
        return Err(TchakaloffError::InvalidTree(format!(
            "{} payoff vectors for {} children",
            f_values.len(),
            children.len()
        )));
    }
    let atoms: Vec<(f64, Vec<f64>)> = children
        .iter()
        .zip(f_values)
        .enumerate()
        .map(|(i, ((w, x), fv))| {
            if x.len() != n {
                return Err(TchakaloffError::DimensionMismatch {
                    index: i,
                    expected: n,
                    found: x.len(),
                });
            }
            let mut v = fv.clone();
            v.extend_from_slice(x);
            v.push(1.0);
            Ok((*w, v))
        })
        .collect::<Result<_, _>>()?;
    caratheodory_reduce(&atoms, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub reduced: MartingaleTree,
    pub support_before: usize,
    pub support_after: usize,
    /// `(n + k + 1)^T`.
    pub bound: usize,
    /// `max_i |nu[f_i] - mu[f_i]|`.
    pub moment_error: f64,
    /// Largest mass or barycenter defect over the nodes of the output.
    pub martingale_error: f64,
    /// Each output leaf as child indices into the input tree.
    pub leaf_paths: Vec<Vec<usize>>,
}

/// Working node: conditional weight, value, index among the input
/// siblings, and a cached moment vector.
struct WNode {
    w: f64,
    x: Vec<f64>,
    index: usize,
    val: Vec<f64>,
    children: Vec<WNode>,
}

fn to_work(children: &[TreeNode]) -> Vec<WNode> {
    children
        .iter()
        .enumerate()
        .map(|(index, c)| WNode {
            w: c.w,
            x: c.x.clone(),
            index,
            val: vec![],
            children: to_work(&c.children),
        })
        .collect()
}

fn from_work(children: &[WNode]) -> Vec<TreeNode> {
    children
        .iter()
        .map(|c| TreeNode {
            w: c.w,
            x: c.x.clone(),
            children: from_work(&c.children),
        })
        .collect()
}

fn for_each_at_depth(root: &mut WNode, depth: usize, f: &mut dyn FnMut(&mut WNode) -> Result<(), TchakaloffError>) -> Result<(), TchakaloffError> {
    if depth == 0 {
        return f(root);
    }
    for c in root.children.iter_mut() {
        for_each_at_depth(c, depth - 1, f)?;
    }
    Ok(())
}

/// Reduces the tree truncated at depth `d` with respect to the cached
/// values at depth `d`.
fn reduce_to_depth(root: &mut WNode, d: usize, tol: f64) -> Result<(), TchakaloffError> {
    if d == 0 {
        return Ok(());
    }
    for_each_at_depth(root, d - 1, &mut |node| {
        let k = node.children[0].val.len();
        let mut g = vec![0.0; k];
        for c in &node.children {
            for (gi, vi) in g.iter_mut().zip(&c.val) {
                *gi += c.w * vi;
            }
        }
        node.val = g;
        Ok(())
    })?;
    reduce_to_depth(root, d - 1, tol)?;
    for_each_at_depth(root, d - 1, &mut |node| {
        let kids: Vec<(f64, Vec<f64>)> = node.children.iter().map(|c| (c.w, c.x.clone())).collect();
        let vals: Vec<Vec<f64>> = node.children.iter().map(|c| c.val.clone()).collect();
        let keep = reduce_one_step(&node.x, &kids, &vals, tol)?;
        let mut old: Vec<Option<WNode>> = std::mem::take(&mut node.children).into_iter().map(Some).collect();
        node.children = keep
            .into_iter()
            .map(|(w, i)| {
                let mut c = old[i].take().expect("indices are distinct");
                c.w = w;
                c
            })
            .collect();
        Ok(())
    })
}

fn leaf_index_paths(children: &[WNode], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if children.is_empty() {
        out.push(prefix.clone());
        return;
    }
    for c in children {
        prefix.push(c.index);
        leaf_index_paths(&c.children, prefix, out);
        prefix.pop();
    }
}

/// Reduces a martingale tree so that every node keeps at most `n + k + 1`
/// children, preserving `E f` and the martingale property. The first
/// reduction is applied to the law up to time `T - 1` with respect to the
/// conditional expectation of `f`, then to each surviving last-step
/// branching with respect to `f` itself.
pub fn reduce_martingale_tree(
    tree: &MartingaleTree,
    f: &mut PathFn<'_>,
    tol: f64,
) -> Result<ReductionReport, TchakaloffError> {
    tree.validate()?;
    let leaves = tree.leaves();
    let mut values = Vec::with_capacity(leaves.len());
    let mut k = None;
    for (i, (_, path)) in leaves.iter().enumerate() {
        let refs: Vec<&[f64]> = path.iter().map(Vec::as_slice).collect();
        let v = f(i, &refs);
        let expected = *k.get_or_insert(v.len());
        if v.len() != expected || v.iter().any(|x| !x.is_finite()) {
            return Err(TchakaloffError::PayoffDimension {
                leaf: i,
                expected,
                found: v.len(),
            });
        }
        values.push(v);
    }
    let k = k.unwrap_or(0);
    let mu: Vec<f64> = (0..k)
        .map(|j| leaves.iter().zip(&values).map(|((p, _), v)| p * v[j]).sum())
        .collect();

    let mut root = WNode {
        w: 1.0,
        x: tree.x0.clone(),
        index: 0,
        val: vec![],
        children: to_work(&tree.children),
    };
    let mut next_leaf = values.into_iter();
    for_each_at_depth(&mut root, tree.horizon, &mut |leaf| {
        leaf.val = next_leaf.next().expect("one value per leaf");
        Ok(())
    })?;
    reduce_to_depth(&mut root, tree.horizon, tol)?;

    let mut leaf_paths = Vec::new();
    leaf_index_paths(&root.children, &mut Vec::new(), &mut leaf_paths);
    let reduced = MartingaleTree {
        n: tree.n,
        horizon: tree.horizon,
        x0: tree.x0.clone(),
        children: from_work(&root.children),
    };
    let mut nu = vec![0.0; k];
    for (prob, leaf) in leaves_with_values(&root) {
        for (j, v) in leaf.iter().enumerate() {
            nu[j] += prob * v;
        }
    }
    let moment_error = mu.iter().zip(&nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bound = (tree.n + k + 1).saturating_pow(tree.horizon as u32);
    Ok(ReductionReport {
        support_before: tree.support(),
        support_after: reduced.support(),
        martingale_error: reduced.martingale_error(),
        reduced,
        bound,
        moment_error,
        leaf_paths,
    })
}

fn leaves_with_values(root: &WNode) -> Vec<(f64, Vec<f64>)> {
    fn walk(node: &WNode, prob: f64, out: &mut Vec<(f64, Vec<f64>)>) {
        if node.children.is_empty() {
            out.push((prob, node.val.clone()));
            return;
        }
        for c in &node.children {
            walk(c, prob * c.w, out);
        }
    }
    let mut out = Vec::new();
    walk(root, 1.0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform4() -> MartingaleTree {
        MartingaleTree {
            n: 1,
            horizon: 1,
            x0: vec![0.0],
            children: [-2.0, -1.0, 1.0, 2.0]
                .iter()
                .map(|&x| TreeNode {
                    w: 0.25,
                    x: vec![x],
                    children: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn small_input_unchanged() {
        let atoms = vec![(0.5, vec![1.0, 2.0]), (0.5, vec![3.0, 4.0])];
        assert_eq!(caratheodory_reduce(&atoms, 1e-12).unwrap(), vec![(0.5, 0), (0.5, 1)]);
    }

    #[test]
    fn duplicates_merge() {
        let atoms = vec![(0.5, vec![1.0]), (0.5, vec![1.0])];
        let out = caratheodory_reduce(&atoms, 1e-12).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn four_atoms_three_moments() {
        let atoms: Vec<_> = [-2.0f64, -1.0, 1.0, 2.0]
            .iter()
            .map(|&x| (0.25, vec![x * x, x, 1.0]))
            .collect();
        let out = caratheodory_reduce(&atoms, 1e-12).unwrap();
        assert!(out.len() <= 3);
        let mut m = [0.0; 3];
        for &(w, i) in &out {
            assert!(w > 0.0);
            for (mj, vj) in m.iter_mut().zip(&atoms[i].1) {
                *mj += w * vj;
            }
        }
        assert!((m[0] - 2.5).abs() < 1e-12 && m[1].abs() < 1e-12 && (m[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_weights_rejected() {
        assert!(matches!(
            caratheodory_reduce(&[(0.0, vec![1.0])], 1e-12),
            Err(TchakaloffError::BadWeight { index: 0, .. })
        ));
    }

    #[test]
    fn one_step_examples() {
        let single = reduce_one_step(&[0.0], &[(1.0, vec![0.0])], &[vec![0.0]], 1e-12).unwrap();
        assert_eq!(single, vec![(1.0, 0)]);
        let kids: Vec<_> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&x| (0.25, vec![x])).collect();
        let fv: Vec<_> = kids.iter().map(|(_, x)| vec![x[0] * x[0]]).collect();
        let out = reduce_one_step(&[0.0], &kids, &fv, 1e-12).unwrap();
        assert!(out.len() <= 3);
        let mass: f64 = out.iter().map(|a| a.0).sum();
        let mean: f64 = out.iter().map(|&(w, i)| w * kids[i].1[0]).sum();
        let ef: f64 = out.iter().map(|&(w, i)| w * fv[i][0]).sum();
        assert!((mass - 1.0).abs() < 1e-12 && mean.abs() < 1e-12 && (ef - 2.5).abs() < 1e-12);
    }

    #[test]
    fn tree_one_step_example() {
        let t = uniform4();
        let rep = reduce_martingale_tree(&t, &mut |_, p| vec![p[1][0].powi(2)], 1e-12).unwrap();
        assert_eq!(rep.support_before, 4);
        assert!(rep.support_after <= 3);
        assert_eq!(rep.bound, 3);
        assert!(rep.moment_error <= 1e-10);
        let ef = rep.reduced.expectation(&mut |_, p| vec![p[1][0].powi(2)]);
        assert!((ef[0] - 2.5).abs() < 1e-10);
    }

    #[test]
    fn small_tree_keeps_paths() {
        let t = MartingaleTree {
            n: 1,
            horizon: 1,
            x0: vec![0.0],
            children: vec![
                TreeNode { w: 0.5, x: vec![-1.0], children: vec![] },
                TreeNode { w: 0.5, x: vec![1.0], children: vec![] },
            ],
        };
        let rep = reduce_martingale_tree(&t, &mut |_, p| vec![p[1][0]], 1e-12).unwrap();
        assert_eq!(rep.leaf_paths, vec![vec![0], vec![1]]);
        assert!(rep.moment_error <= 1e-12);
        assert_eq!(rep.reduced, t);
    }

    #[test]
    fn validation_errors() {
        let mut t = uniform4();
        t.children[0].w = 0.3;
        assert!(matches!(t.validate(), Err(TchakaloffError::InvalidTree(_))));
        let mut t = uniform4();
        t.horizon = 2;
        assert!(t.validate().is_err());
        let mut t = uniform4();
        t.children[0].x = vec![-2.5];
        assert!(t.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = uniform4();
        let back = MartingaleTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let err = MartingaleTree::from_json(r#"{"n":1,"T":1,"x0":[0],"children":[{"w":"a","x":[0]}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("children[0].w"), "{err}");
    }

    #[test]
    fn zero_horizon() {
        let t = MartingaleTree { n: 2, horizon: 0, x0: vec![1.0, 2.0], children: vec![] };
        let rep = reduce_martingale_tree(&t, &mut |_, p| vec![p[0][0]], 1e-12).unwrap();
        assert_eq!(rep.support_after, 1);
        assert_eq!(rep.leaf_paths, vec![Vec::<usize>::new()]);
    }
}
