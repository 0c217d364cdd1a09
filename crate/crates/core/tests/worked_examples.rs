mod common;

use common::*;
use martineq::envelope::{envelope_at, SampledFn, SupergradientPolicy};
use martineq::operator::{
    apply_a, check_homogeneity, check_submartingale_extension, extract_strategy, finite_horizon_value,
    iterate_to_fixed_point, verify_fixed_point, IterationOptions, IterationStatus,
};
use martineq::oracle::{enumerate_tree_value, hedge_check, one_step_lp};
use martineq::presets::burkholder::{
    burkholder_mc_check, burkholder_verify, line_concavity_defect, BurkholderParams, BurkholderSampling,
};
use martineq::presets::doob::{
    build_doob_lattice, build_doob_problem, doob_closed_form_grid, doob_rho, doob_solve, DoobParams,
};
use martineq::problem::{GridFn, ValidatedProblem};
use martineq::tchakaloff::reduce_martingale_tree;
use martineq::ExtReal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn composite(problem: &ValidatedProblem, u: &GridFn, z: usize) -> Vec<(f64, ExtReal)> {
    let d = problem.increments().values();
    (0..d.len()).map(|j| (d[j], u[problem.next_state(z, j)])).collect()
}

fn node_index(params: &DoobParams, r: f64) -> usize {
    (r * (params.grid_points - 1) as f64).round() as usize
}

#[test]
fn doob_composite_at_three_quarters() {
    let params = DoobParams::new(2.0, 201);
    let problem = build_doob_problem(&params).unwrap();
    let z = node_index(&params, 0.75);
    assert!((params.node(z) - 0.75).abs() < 1e-12);

    let exact = doob_closed_form_grid(&params, &problem).unwrap();
    let samples = composite(&problem, &exact, z);
    let env = envelope_at(&SampledFn::new(samples.clone()).unwrap(), 0.0).value;
    assert!((env.to_f64() + 1.0).abs() < 1e-12, "{env}");
    assert!((one_step_lp(&samples, 0.0).unwrap().to_f64() + 1.0).abs() < 1e-12);

    let sol = doob_solve(&params, None).unwrap();
    assert_eq!(sol.status, IterationStatus::Converged);
    let samples = composite(&problem, &sol.values, z);
    let env = envelope_at(&SampledFn::new(samples.clone()).unwrap(), 0.0).value.to_f64();
    let lp = one_step_lp(&samples, 0.0).unwrap().to_f64();
    assert!((env + 1.0).abs() < 1e-2, "{env}");
    assert!((env - lp).abs() < 1e-9);
}

#[test]
fn doob_payoff_step_at_origin() {
    let params = DoobParams::new(2.0, 101);
    let problem = build_doob_problem(&params).unwrap();
    let af = apply_a(&problem, problem.payoff()).unwrap();
    assert!((af[0].to_f64() - 1.0).abs() < 1e-12);
    let lp = one_step_lp(&composite(&problem, problem.payoff(), 0), 0.0).unwrap();
    assert!((lp.to_f64() - 1.0).abs() < 1e-12);
}

#[test]
fn doob_closed_form_is_a_fixed_point() {
    for (p, n) in [(1.5, 200), (2.0, 1000), (3.0, 300)] {
        let params = DoobParams::new(p, n);
        let problem = build_doob_problem(&params).unwrap();
        let u = doob_closed_form_grid(&params, &problem).unwrap();
        let rep = verify_fixed_point(&problem, &u, problem.payoff(), 1e-6).unwrap();
        assert!(rep.certified(), "p = {p}: {rep:?}");

        let it = iterate_to_fixed_point(&problem, &u, &IterationOptions::for_payoff(problem.payoff())).unwrap();
        assert_eq!(it.status, IterationStatus::Converged);
        assert_eq!(it.iterations, 1);
    }
}

#[test]
fn doob_payoff_is_not_fixed() {
    let params = DoobParams::new(2.0, 101);
    let problem = build_doob_problem(&params).unwrap();
    let rep = verify_fixed_point(&problem, problem.payoff(), problem.payoff(), 1e-9).unwrap();
    assert!(rep.dominates);
    assert!(!rep.superfixed);
    let r = problem.labels()[rep.worst_state].coords().unwrap()[0];
    assert!(r >= 0.5, "worst state at r = {r}");
}

#[test]
fn doob_below_sharp_constant_diverges() {
    let sol = doob_solve(&DoobParams::new(2.0, 201).with_c(3.9), None).unwrap();
    assert_eq!(sol.status, IterationStatus::Diverged);
}

#[test]
fn doob_tangent_condition() {
    for p in [1.5, 2.0, 3.0] {
        let params = DoobParams::new(p, 201);
        let sol = doob_solve(&params, None).unwrap();
        assert_eq!(sol.status, IterationStatus::Converged);
        let rho1 = sol.rho_at_one().to_f64();
        assert!(rho1 < 0.0);
        let (_, slope) = sol.tangent.unwrap();
        assert!(slope < 0.0 && slope >= p * rho1 - 1e-6, "p = {p}: slope {slope}, rho(1) {rho1}");
        assert!((rho1 - doob_rho(&params, 1.0).unwrap()).abs() < 0.05);
    }
}

#[test]
fn doob_converged_value_is_not_a_submartingale_bound() {
    let params = DoobParams::new(2.0, 101);
    let problem = build_doob_problem(&params).unwrap();
    let sol = doob_solve(&params, None).unwrap();
    assert!(!check_submartingale_extension(&problem, &sol.values).unwrap());
    let flat = GridFn::constant(problem.n_states(), ExtReal::finite(2.0));
    assert!(check_submartingale_extension(&problem, &flat).unwrap());
}

#[test]
fn doob_tree_oracle_agrees() {
    let params = DoobParams::new(2.0, 41);
    let problem = build_doob_problem(&params).unwrap();
    let z0 = problem.initial_state();
    let hull = finite_horizon_value(&problem, problem.payoff(), 3).unwrap()[3][z0];
    let tree = enumerate_tree_value(&problem, problem.payoff(), 3, z0).unwrap();
    assert!(close(hull, tree, 1e-9), "{hull} vs {tree}");
}

#[test]
fn doob_hedge_six_steps() {
    let params = DoobParams::new(2.0, 200);
    let problem = build_doob_problem(&params).unwrap();
    let f = problem.payoff();
    let tables = finite_horizon_value(&problem, f, 6).unwrap();
    let strategy = extract_strategy(&problem, &tables, SupergradientPolicy::Midpoint).unwrap();
    let a = tables[6][problem.initial_state()].to_f64();
    let rep = hedge_check(&problem, &strategy, a, f, 6).unwrap();
    assert!(rep.min_slack >= -1e-9, "{}", rep.min_slack);
}

#[test]
fn doob_lattice_is_homogeneous() {
    let lat = build_doob_lattice(2.0, 4.0, 2, 3, &[(0, 1), (1, 1), (1, 2), (1, 3)], &[1, 2, 3]).unwrap();
    let tables = finite_horizon_value(&lat.problem, lat.problem.payoff(), 3).unwrap();
    let u = &tables[3];
    assert!(check_homogeneity(u, &lat.rays, 2.0, 1e-6));
    assert!(!check_homogeneity(u, &lat.rays, 3.0, 1e-6));
}

#[test]
fn tchakaloff_two_step_fourth_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tree = random_tree(&mut rng, 2, 50);
    let mut f = |_: usize, path: &[&[f64]]| vec![path[2][0].powi(4)];
    let rep = reduce_martingale_tree(&tree, &mut f, 1e-12).unwrap();
    assert_eq!(rep.support_before, 2500);
    assert!(rep.support_after <= 9);
    assert!(rep.martingale_error <= 1e-10);
    assert!(rep.moment_error <= 1e-8);
    let mu = tree.expectation(&mut f)[0];
    let nu = rep.reduced.expectation(&mut f)[0];
    assert!((mu - nu).abs() <= 1e-8);
}

#[test]
fn burkholder_cubic_case_verifies() {
    let params = BurkholderParams::new(3.0).unwrap();
    let rep = burkholder_verify(&params, &BurkholderSampling::new(10_000, 10_000, 4, 5), 1e-7);
    assert!(rep.dominates && rep.line_concave, "{rep:?}");
    let mc = burkholder_mc_check(&params, (1.0, 0.0), 3, 100_000, 9).unwrap();
    assert!(mc.max_gap <= 3.0 * mc.std_error, "{mc:?}");
}

#[test]
fn burkholder_needs_subordination() {
    let params = BurkholderParams::new(3.0).unwrap();
    let base = [1.0, 0.0, 0.0, 1.0];
    let dir = [0.1, 0.0, 0.0, 1.0];
    let worst = (-20..=20)
        .map(|k| line_concavity_defect(&params, &base, &dir, k as f64 * 0.1, 0.05))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst > 1e-3, "{worst}");

    let mut sampling = BurkholderSampling::new(100, 100, 4, 1);
    sampling.extra_lines.push((base, dir));
    let rep = burkholder_verify(&params, &sampling, 1e-7);
    assert!(!rep.line_concave);
    assert!(rep.worst_line.is_some());
}
