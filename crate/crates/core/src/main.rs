use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use martineq::envelope::{envelope_at, SampledFn, SupergradientPolicy};
use martineq::operator::{
    extract_strategy, finite_horizon_value, iterate_to_fixed_point, verify_fixed_point,
    IterationOptions, IterationStatus,
};
use martineq::oracle::{enumerate_tree_value, hedge_check};
use martineq::output::{format_real, format_value, read_values_csv, write_strategy_csv, write_values_csv};
use martineq::presets::burkholder::{
    burkholder_mc_check, burkholder_verify, BurkholderParams, BurkholderSampling,
};
use martineq::presets::doob::{build_doob_problem, doob_rho, doob_solve, DoobParams};
use martineq::problem::{read_problem_file, serialize_problem, validate_problem, GridFn, ValidatedProblem};
use martineq::tchakaloff::{reduce_martingale_tree, MartingaleTree};

const EXIT_INPUT: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_MAX_ITER: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "martineq", version, about = "Optimal constants for martingale inequalities on finite grids")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Tolerance (meaning depends on the subcommand)
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = IterationOptions::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Divergence cap (default 1e6 * (1 + max |finite payoff|))
    #[arg(long, global = true)]
    cap: Option<f64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate to the smallest fixed point above the payoff, or compute A^T f
    Solve {
        problem: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Check that a candidate table is a fixed point dominating the payoff
    Verify { problem: PathBuf, candidate: PathBuf },
    /// Extract hedge ratios and check the superhedging inequality on all paths
    HedgeCheck {
        problem: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value = "midpoint")]
        policy: SupergradientPolicy,
        /// Add uniform noise in [-x, x] to every hedge ratio
        #[arg(long, default_value_t = 0.0)]
        xi_noise: f64,
    },
    /// Reduce the support of a martingale tree
    Reduce {
        tree: PathBuf,
        /// `power:q`, `moments:q`, or `table:FILE` (JSON list of per-leaf vectors)
        #[arg(long, default_value = "power:2")]
        payoff: String,
    },
    /// Solve the reduced Doob problem
    Doob {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Payoff constant (default: the sharp constant)
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        grid_points: usize,
        #[arg(long, default_value_t = DoobParams::DEFAULT_SPAN)]
        span: f64,
        /// Write the generated problem here and exit
        #[arg(long)]
        emit_problem: Option<PathBuf>,
    },
    /// Check the Burkholder value function by sampling and Monte Carlo
    Burkholder {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        ray_samples: usize,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0])]
        z0: Vec<f64>,
    },
    /// Compare the operator with the scenario-tree recursion at z0
    Enumerate {
        problem: PathBuf,
        #[arg(long)]
        horizon: usize,
    },
}

struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_INPUT, e.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let g = &cli.global;
    fs::create_dir_all(&g.out_dir)?;
    match &cli.command {
        Command::Solve { problem, horizon } => cmd_solve(g, problem, *horizon),
        Command::Verify { problem, candidate } => cmd_verify(g, problem, candidate),
        Command::HedgeCheck {
            problem,
            horizon,
            policy,
            xi_noise,
        } => cmd_hedge_check(g, problem, *horizon, *policy, *xi_noise),
        Command::Reduce { tree, payoff } => cmd_reduce(g, tree, payoff),
        Command::Doob {
            p,
            c,
            grid_points,
            span,
            emit_problem,
        } => {
            let mut params = DoobParams::new(*p, *grid_points);
            if let Some(c) = c {
                params.c = *c;
            }
            params.span = *span;
            cmd_doob(g, &params, emit_problem.as_deref())
        }
        Command::Burkholder {
            p,
            samples,
            ray_samples,
            paths,
            horizon,
            z0,
        } => cmd_burkholder(g, *p, *samples, *ray_samples, *paths, *horizon, z0),
        Command::Enumerate { problem, horizon } => cmd_enumerate(g, problem, *horizon),
    }
}

fn load(path: &Path) -> Result<ValidatedProblem, Failure> {
    let spec = read_problem_file(path)?;
    Ok(validate_problem(spec)?)
}

fn options(g: &Global, problem: &ValidatedProblem) -> IterationOptions {
    IterationOptions {
        tol: g.tol.unwrap_or(IterationOptions::DEFAULT_TOL),
        max_iter: g.max_iter,
        value_cap: g.cap.unwrap_or_else(|| IterationOptions::default_cap(problem.payoff())),
    }
}

fn status_name(s: IterationStatus) -> &'static str {
    match s {
        IterationStatus::Converged => "converged",
        IterationStatus::Diverged => "diverged",
        IterationStatus::MaxIterations => "max_iterations",
    }
}

fn status_code(s: IterationStatus) -> u8 {
    match s {
        IterationStatus::Converged => 0,
        IterationStatus::Diverged => EXIT_DIVERGED,
        IterationStatus::MaxIterations => EXIT_MAX_ITER,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// States whose envelope at 0 changes when the two outermost increments
/// are dropped, i.e. where the grid span may be limiting the value.
fn span_limited_states(problem: &ValidatedProblem, u: &GridFn) -> Vec<usize> {
    let d = problem.increments().values();
    let m = d.len();
    let zero = problem.increments().zero_index();
    if m < 3 || zero == 0 || zero == m - 1 {
        return vec![];
    }
    (0..problem.n_states())
        .filter(|&z| problem.scaling(z).is_none())
        .filter(|&z| {
            let pts: Vec<_> = (0..m).map(|j| (d[j], u[problem.next_state(z, j)])).collect();
            let (Ok(full), Ok(inner)) = (SampledFn::new(pts.clone()), SampledFn::new(pts[1..m - 1].to_vec())) else {
                return false;
            };
            let (a, b) = (envelope_at(&full, 0.0).value, envelope_at(&inner, 0.0).value);
            match (a.finite_value(), b.finite_value()) {
                (Some(a), Some(b)) => a - b > 1e-12 * (1.0 + a.abs()),
                _ => a != b,
            }
        })
        .collect()
}

fn cmd_solve(g: &Global, path: &Path, horizon: Option<usize>) -> CmdResult {
    let problem = load(path)?;
    let z0 = problem.initial_state();
    let (values, summary, code) = match horizon {
        Some(t) => {
            let tables = finite_horizon_value(&problem, problem.payoff(), t)?;
            let values = tables.last().unwrap().clone();
            let summary = json!({
                "status": "finite_horizon",
                "horizon": t,
                "z0": z0,
                "value_at_z0": format_value(values[z0]),
            });
            (values, summary, 0)
        }
        None => {
            let rep = iterate_to_fixed_point(&problem, problem.payoff(), &options(g, &problem))?;
            let summary = json!({
                "status": status_name(rep.status),
                "iterations": rep.iterations,
                "sup_delta": rep.sup_delta,
                "z0": z0,
                "value_at_z0": format_value(rep.result[z0]),
                "cap_hit_states": rep.cap_hit_states,
            });
            (rep.result, summary, status_code(rep.status))
        }
    };
    let limited = span_limited_states(&problem, &values);
    let mut summary = summary;
    summary["span_limited_states"] = json!(limited);
    write_values_csv(File::create(g.out_dir.join("values.csv"))?, problem.labels(), &values)?;
    write_json(&g.out_dir.join("summary.json"), &summary)?;
    println!("status: {}", summary["status"].as_str().unwrap());
    if let Some(it) = summary.get("iterations") {
        println!("iterations: {it}  sup_delta: {}", summary["sup_delta"]);
    }
    println!("value at z0 ({z0}): {}", format_value(values[z0]));
    if !limited.is_empty() {
        println!("{} states use the outermost increments; the grid span may be limiting", limited.len());
    }
    Ok(code)
}

fn cmd_verify(g: &Global, path: &Path, candidate: &Path) -> CmdResult {
    let problem = load(path)?;
    let u = read_values_csv(File::open(candidate)?)?;
    let tol = g.tol.unwrap_or(1e-9);
    let rep = verify_fixed_point(&problem, &u, problem.payoff(), tol)?;
    println!("dominates: {}  superfixed: {}", rep.dominates, rep.superfixed);
    println!("worst_gap: {}  worst_state: {}", format_real(rep.worst_gap), rep.worst_state);
    Ok(if rep.certified() { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_hedge_check(
    g: &Global,
    path: &Path,
    horizon: usize,
    policy: SupergradientPolicy,
    xi_noise: f64,
) -> CmdResult {
    let problem = load(path)?;
    let f = problem.payoff();
    let tables = finite_horizon_value(&problem, f, horizon)?;
    let mut strategy = extract_strategy(&problem, &tables, policy)?;
    if xi_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
        for row in strategy.table_mut() {
            for xi in row.iter_mut().flatten() {
                *xi += rng.gen_range(-xi_noise..=xi_noise);
            }
        }
    }
    write_strategy_csv(File::create(g.out_dir.join("strategy.csv"))?, &strategy)?;
    let z0 = problem.initial_state();
    let a = tables[horizon][z0]
        .finite_value()
        .ok_or_else(|| Failure(EXIT_CHECK_FAILED, format!("A^T f(z0) = {} is not finite", tables[horizon][z0])))?;
    let rep = hedge_check(&problem, &strategy, a, f, horizon)?;
    let tol = g.tol.unwrap_or(1e-9);
    println!("a = A^{horizon} f(z0): {}", format_real(a));
    println!("min_slack: {}", format_real(rep.min_slack));
    if rep.min_slack < -tol {
        if let Some(path) = &rep.violating_path {
            let d = problem.increments().values();
            let incs: Vec<String> = path.iter().map(|&j| d[j].to_string()).collect();
            println!("violating path (increments): [{}]", incs.join(", "));
        }
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(0)
}

fn leaf_payoff(spec: &str) -> Result<Box<dyn FnMut(usize, &[&[f64]]) -> Vec<f64>>, Failure> {
    let bad = || Failure(EXIT_INPUT, format!("payoff '{spec}': expected power:q, moments:q or table:FILE"));
    let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
    match kind {
        "power" | "moments" => {
            let q: i32 = arg.parse().map_err(|_| bad())?;
            if q < 1 {
                return Err(bad());
            }
            if kind == "power" {
                Ok(Box::new(move |_, path| vec![path.last().unwrap().iter().map(|x| x.powi(q)).sum()]))
            } else {
                Ok(Box::new(move |_, path| {
                    let last = path.last().unwrap();
                    (1..=q).flat_map(|j| last.iter().map(move |x| x.powi(j))).collect()
                }))
            }
        }
        "table" => {
            let table: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(arg)?)?;
            Ok(Box::new(move |i, _| table.get(i).cloned().unwrap_or_default()))
        }
        _ => Err(bad()),
    }
}

const REDUCE_MOMENT_TOL: f64 = 1e-8;
const REDUCE_MARTINGALE_TOL: f64 = 1e-10;

fn cmd_reduce(g: &Global, path: &Path, payoff: &str) -> CmdResult {
    let tree = MartingaleTree::from_json(&fs::read_to_string(path)?)?;
    let mut f = leaf_payoff(payoff)?;
    let tol = g.tol.unwrap_or(1e-12);
    let rep = reduce_martingale_tree(&tree, &mut *f, tol)?;
    fs::write(g.out_dir.join("reduced.json"), rep.reduced.to_json() + "\n")?;
    let ok = rep.support_after <= rep.bound
        && rep.moment_error <= REDUCE_MOMENT_TOL
        && rep.martingale_error <= REDUCE_MARTINGALE_TOL;
    write_json(
        &g.out_dir.join("reduction.json"),
        &json!({
            "support_before": rep.support_before,
            "support_after": rep.support_after,
            "bound": rep.bound,
            "moment_error": rep.moment_error,
            "martingale_error": rep.martingale_error,
            "leaf_paths": rep.leaf_paths,
            "ok": ok,
        }),
    )?;
    println!("support: {} -> {} (bound {})", rep.support_before, rep.support_after, rep.bound);
    println!("moment_error: {:e}  martingale_error: {:e}", rep.moment_error, rep.martingale_error);
    Ok(if ok { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_doob(g: &Global, params: &DoobParams, emit: Option<&Path>) -> CmdResult {
    if let Some(out) = emit {
        let problem = build_doob_problem(params)?;
        fs::write(out, serialize_problem(problem.spec()) + "\n")?;
        println!("wrote {} states to {}", problem.n_states(), out.display());
        return Ok(0);
    }
    let problem = build_doob_problem(params)?;
    let sol = doob_solve(params, Some(options(g, &problem)))?;
    let mut w = csv::Writer::from_path(g.out_dir.join("rho.csv"))?;
    w.write_record(["r", "value", "closed_form", "abs_err"])?;
    let sharp = params.is_sharp();
    let mut sup_err = 0.0f64;
    for &(r, v) in &sol.rho {
        let (cf, err) = if sharp {
            let cf = doob_rho(params, r)?;
            let err = v.finite_value().map_or(f64::INFINITY, |v| (v - cf).abs());
            sup_err = sup_err.max(err);
            (format_real(cf), format_real(err))
        } else {
            (String::new(), String::new())
        };
        w.write_record([format_real(r), format_value(v), cf, err])?;
    }
    w.flush()?;
    println!(
        "status: {}  iterations: {}  sup_delta: {:e}",
        status_name(sol.status),
        sol.iterations,
        sol.sup_delta
    );
    println!("rho(0): {}  rho(1): {}", format_value(sol.rho_at_zero()), format_value(sol.rho_at_one()));
    if let Some((a, b)) = sol.tangent {
        println!("tangent: intercept {a:.6}  slope {b:.6}");
    }
    if sharp && sol.status == IterationStatus::Converged {
        println!("sup error against closed form: {sup_err:e}");
    }
    Ok(status_code(sol.status))
}

fn cmd_burkholder(
    g: &Global,
    p: f64,
    samples: usize,
    ray_samples: usize,
    paths: usize,
    horizon: usize,
    z0: &[f64],
) -> CmdResult {
    let params = BurkholderParams::new(p)?;
    let &[x1, x2] = z0 else {
        return Err(Failure(EXIT_INPUT, "--z0 takes two norms, e.g. 1,1".into()));
    };
    let tol = g.tol.unwrap_or(1e-7);
    let rep = burkholder_verify(&params, &BurkholderSampling::new(samples, samples, ray_samples, g.seed), tol);
    let mc = burkholder_mc_check(&params, (x1, x2), horizon, paths, g.seed)?;
    println!("p = {p}, p* = {}", params.p_star());
    println!("dominates: {} (worst {:e})", rep.dominates, rep.worst_domination);
    println!("line_concave: {} (worst {:e})", rep.line_concave, rep.worst_concavity);
    println!(
        "monte carlo: estimate {:.6} +- {:.6}, u(z0) = {:.6}, gap {:.6}{}",
        mc.estimate,
        mc.std_error,
        mc.value,
        mc.max_gap,
        if mc.flagged { " (above 3 standard errors)" } else { "" }
    );
    write_json(
        &g.out_dir.join("burkholder.json"),
        &json!({
            "p": p,
            "dominates": rep.dominates,
            "line_concave": rep.line_concave,
            "worst_domination": rep.worst_domination,
            "worst_concavity": rep.worst_concavity,
            "mc_estimate": mc.estimate,
            "mc_std_error": mc.std_error,
            "value": mc.value,
            "gap": mc.max_gap,
            "flagged": mc.flagged,
        }),
    )?;
    Ok(if rep.dominates && rep.line_concave && !mc.flagged { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_enumerate(g: &Global, path: &Path, horizon: usize) -> CmdResult {
    let problem = load(path)?;
    let z0 = problem.initial_state();
    let tables = finite_horizon_value(&problem, problem.payoff(), horizon)?;
    let hull = tables[horizon][z0];
    let tree = enumerate_tree_value(&problem, problem.payoff(), horizon, z0)?;
    let tol = g.tol.unwrap_or(1e-9);
    let agree = match (hull.finite_value(), tree.finite_value()) {
        (Some(a), Some(b)) => (a - b).abs() <= tol,
        _ => hull == tree,
    };
    println!("operator: {}", format_value(hull));
    println!("tree:     {}", format_value(tree));
    Ok(if agree { 0 } else { EXIT_CHECK_FAILED })
}
