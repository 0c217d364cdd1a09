//! Burkholder's inequality for differentially subordinate martingales in
//! `R^2`: `E[|N_T|^p - (p* - 1)^p |M_T|^p] <= u(|M_0|, |N_0|)`.
//!
//! The value function is checked against its characterization (majorizes
//! the payoff, concave along every subordinate line) rather than solved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PresetError;
use crate::ext_real::ExtReal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurkholderParams {
    pub p: f64,
}

impl BurkholderParams {
    pub fn new(p: f64) -> Result<Self, PresetError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(PresetError::InvalidParams(format!("p must be above 1, got {p}")));
        }
        Ok(BurkholderParams { p })
    }

    /// `max(p, p / (p - 1))`.
    pub fn p_star(&self) -> f64 {
        self.p.max(self.p / (self.p - 1.0))
    }
}

fn check_norms(x1: f64, x2: f64) -> Result<(), PresetError> {
    if x1 >= 0.0 && x2 >= 0.0 {
        Ok(())
    } else {
        Err(PresetError::NegativeInput(x1, x2))
    }
}

/// `x2^p - (p* - 1)^p x1^p`.
pub fn burkholder_payoff(params: &BurkholderParams, x1: f64, x2: f64) -> Result<f64, PresetError> {
    check_norms(x1, x2)?;
    let p = params.p;
    Ok(x2.powf(p) - (params.p_star() - 1.0).powf(p) * x1.powf(p))
}

/// `p (1 - 1/p*)^(p-1) (x2 - (p* - 1) x1) (x1 + x2)^(p-1)`.
pub fn burkholder_special(params: &BurkholderParams, x1: f64, x2: f64) -> Result<f64, PresetError> {
    check_norms(x1, x2)?;
    let p = params.p;
    let ps = params.p_star();
    Ok(p * (1.0 - 1.0 / ps).powf(p - 1.0) * (x2 - (ps - 1.0) * x1) * (x1 + x2).powf(p - 1.0))
}

/// Value at norms `(x1, x2) = (|M|, |N|)`.
pub fn burkholder_closed_form(params: &BurkholderParams, x1: f64, x2: f64) -> Result<f64, PresetError> {
    let inner = x2 <= (params.p_star() - 1.0) * x1;
    if inner == (params.p <= 2.0) {
        burkholder_special(params, x1, x2)
    } else {
        burkholder_payoff(params, x1, x2)
    }
}

/// Point of the state space; `None` is the cemetery state entered once
/// subordination is violated.
pub fn burkholder_value(params: &BurkholderParams, state: Option<(f64, f64)>) -> Result<ExtReal, PresetError> {
    match state {
        None => Ok(ExtReal::NEG_INF),
        Some((x1, x2)) => Ok(ExtReal::finite(burkholder_closed_form(params, x1, x2)?)),
    }
}

/// `(x1, x2)` with each coordinate in `R^2`.
pub type Point4 = [f64; 4];

fn norms(z: &Point4) -> (f64, f64) {
    (z[0].hypot(z[1]), z[2].hypot(z[3]))
}

fn u_at(params: &BurkholderParams, z: &Point4) -> f64 {
    let (a, b) = norms(z);
    burkholder_closed_form(params, a, b).expect("norms are nonnegative")
}

fn along(z: &Point4, d: &Point4, r: f64) -> Point4 {
    std::array::from_fn(|i| z[i] + r * d[i])
}

/// `(u(a) + u(b)) / 2 - u((a + b) / 2)` for `a = z + (r - delta) d`,
/// `b = z + (r + delta) d`, relative to `max(1, |u|)`. Positive values
/// violate concavity.
pub fn line_concavity_defect(params: &BurkholderParams, z: &Point4, d: &Point4, r: f64, delta: f64) -> f64 {
    let lo = u_at(params, &along(z, d, r - delta));
    let mid = u_at(params, &along(z, d, r));
    let hi = u_at(params, &along(z, d, r + delta));
    let scale = lo.abs().max(mid.abs()).max(hi.abs()).max(1.0);
    (0.5 * (lo + hi) - mid) / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurkholderSampling {
    pub state_samples: usize,
    pub direction_samples: usize,
    /// Midpoint triples per sampled line.
    pub ray_samples: usize,
    /// Extra lines checked as given, without restricting to `|d2| <= |d1|`.
    pub extra_lines: Vec<(Point4, Point4)>,
    pub seed: u64,
}

impl BurkholderSampling {
    pub fn new(state_samples: usize, direction_samples: usize, ray_samples: usize, seed: u64) -> Self {
        BurkholderSampling {
            state_samples,
            direction_samples,
            ray_samples,
            extra_lines: vec![],
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineWitness {
    pub base: Point4,
    pub direction: Point4,
    pub r: f64,
    pub delta: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurkholderReport {
    pub dominates: bool,
    pub line_concave: bool,
    /// Largest `(f - u) / max(1, |u|)` over sampled states.
    pub worst_domination: f64,
    pub worst_domination_at: (f64, f64),
    /// Largest relative concavity defect over sampled triples.
    pub worst_concavity: f64,
    pub worst_line: Option<LineWitness>,
}

/// Radius of the sampled region.
const SAMPLE_RADIUS: f64 = 3.0;

fn random_plane(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let len = radius * rng.gen::<f64>();
    [len * angle.cos(), len * angle.sin()]
}

/// A pair `(d1, d2)` with `|d2| <= |d1|`.
fn subordinate_direction(rng: &mut ChaCha8Rng) -> Point4 {
    let d1 = random_plane(rng, 1.0);
    let n1 = d1[0].hypot(d1[1]);
    let d2 = random_plane(rng, n1);
    [d1[0], d1[1], d2[0], d2[1]]
}

/// Samples the two defining properties of the value function: `f <= u`
/// and concavity of `r -> u(z + r d)` whenever `|d2| <= |d1|`.
pub fn burkholder_verify(params: &BurkholderParams, sampling: &BurkholderSampling, tol: f64) -> BurkholderReport {
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut worst_domination = f64::NEG_INFINITY;
    let mut worst_domination_at = (0.0, 0.0);
    for _ in 0..sampling.state_samples {
        let x1 = SAMPLE_RADIUS * rng.gen::<f64>();
        let x2 = SAMPLE_RADIUS * rng.gen::<f64>();
        let u = burkholder_closed_form(params, x1, x2).unwrap();
        let f = burkholder_payoff(params, x1, x2).unwrap();
        let gap = (f - u) / u.abs().max(1.0);
        if gap > worst_domination {
            worst_domination = gap;
            worst_domination_at = (x1, x2);
        }
    }

    let mut worst_concavity = f64::NEG_INFINITY;
    let mut worst_line = None;
    let mut check = |rng: &mut ChaCha8Rng, base: Point4, dir: Point4| {
        for _ in 0..sampling.ray_samples {
            let r = rng.gen_range(-1.0..1.0);
            let delta = rng.gen_range(1e-3..1.0);
            let defect = line_concavity_defect(params, &base, &dir, r, delta);
            if defect > worst_concavity {
                worst_concavity = defect;
                worst_line = Some(LineWitness {
                    base,
                    direction: dir,
                    r,
                    delta,
                    defect,
                });
            }
        }
    };
    for _ in 0..sampling.direction_samples {
        let a = random_plane(&mut rng, SAMPLE_RADIUS);
        let b = random_plane(&mut rng, SAMPLE_RADIUS);
        let dir = subordinate_direction(&mut rng);
        check(&mut rng, [a[0], a[1], b[0], b[1]], dir);
    }
    for &(base, dir) in &sampling.extra_lines {
        check(&mut rng, base, dir);
    }

    BurkholderReport {
        dominates: worst_domination <= tol,
        line_concave: worst_concavity <= tol,
        worst_domination,
        worst_domination_at,
        worst_concavity,
        worst_line,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McReport {
    pub estimate: f64,
    pub std_error: f64,
    pub value: f64,
    /// `estimate - value`.
    pub max_gap: f64,
    /// Gap above three standard errors.
    pub flagged: bool,
}

/// Monte Carlo estimate of `E f(M_T, N_T)` over random simple subordinate
/// martingale pairs started at norms `z0`. Each step draws a subordinate
/// pair `(d1, d2)` and moves by `a (d1, d2)` with probability `q`, else by
/// `-b (d1, d2)` with `q a = (1 - q) b`.
pub fn burkholder_mc_check(
    params: &BurkholderParams,
    z0: (f64, f64),
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McReport, PresetError> {
    let value = burkholder_closed_form(params, z0.0, z0.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ps1 = (params.p_star() - 1.0).powf(params.p);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_paths {
        let mut z: Point4 = [z0.0, 0.0, 0.0, z0.1];
        for _ in 0..horizon {
            let d = subordinate_direction(&mut rng);
            let q: f64 = rng.gen_range(0.2..0.8);
            let a: f64 = rng.gen_range(0.5..1.5);
            let step = if rng.gen::<f64>() < q { a } else { -q * a / (1.0 - q) };
            z = along(&z, &d, step);
        }
        let (m, n) = norms(&z);
        let f = n.powf(params.p) - ps1 * m.powf(params.p);
        sum += f;
        sum_sq += f * f;
    }
    let k = n_paths.max(1) as f64;
    let estimate = sum / k;
    let var = if n_paths > 1 {
        ((sum_sq - k * estimate * estimate) / (k - 1.0)).max(0.0)
    } else {
        0.0
    };
    let std_error = (var / k).sqrt();
    let max_gap = estimate - value;
    Ok(McReport {
        estimate,
        std_error,
        value,
        max_gap,
        flagged: max_gap > 3.0 * std_error,
    })
}
