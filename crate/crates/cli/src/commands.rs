use std::fs;
use std::time::Instant;

use pwamc::bench::{compare, oracle_cost, write_feedback_curve, write_policy_curve, AnalyticValueFunction, BoundGap};
use pwamc::policy::{run_policy, write_trajectory_csv, PolicyConfig, PolicyError, PolicyRun, PolyValue, RunStatus};
use pwamc::problem::render;
use pwamc::relaxation::{
    hierarchy, minimum_order, solve_order, OrderSolution, RelaxationError, RelaxationOptions, ValueFunctionFile,
};
use pwamc::sdp::{write_sdpa, SolveStatus};
use pwamc::{builtin_example, parse_problem, PwaOcp};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{sha256_hex, InputRecord, OutputDir};
use crate::{BenchmarkArgs, CliError, ProblemSource, RelaxArgs, SolveArgs, SynthesizeArgs};

fn options_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn load_problem(src: &ProblemSource) -> Result<(PwaOcp, InputRecord), CliError> {
    match &src.problem {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read problem file {}: {e}", path.display())))?;
            let ocp = parse_problem(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Ok((ocp, InputRecord { source: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) }))
        }
        None => builtin(),
    }
}

fn builtin() -> Result<(PwaOcp, InputRecord), CliError> {
    let ocp = builtin_example();
    let digest = sha256_hex(render(&ocp).as_bytes());
    Ok((ocp, InputRecord { source: "builtin-example".into(), sha256: digest }))
}

fn relax_options(ocp: &mut PwaOcp, a: &RelaxArgs) -> Result<RelaxationOptions, CliError> {
    if let Some(b) = a.mass_bound {
        if !(b.is_finite() && b > 0.0) {
            return Err(CliError::Usage(format!("--mass-bound must be positive, got {b}")));
        }
        ocp.mass_bound = Some(b);
    }
    if !(a.tol.is_finite() && a.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", a.tol)));
    }
    Ok(RelaxationOptions { scaling: !a.no_scaling, tol: a.tol, max_iter: a.max_iter })
}

fn relax_error(e: RelaxationError) -> CliError {
    match e {
        RelaxationError::OrderTooSmall { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Solver(e.to_string()),
    }
}

#[derive(Serialize)]
struct SolveReport {
    min_order: u32,
    monotone: bool,
    all_optimal: bool,
    orders: Vec<serde_json::Value>,
}

/// Writes value-function files, timings and optionally SDPA dumps, and
/// returns the per-order report entries without their timings.
fn write_orders(out: &mut OutputDir, ocp: &PwaOcp, orders: &[OrderSolution], dump_sdpa: bool) -> Result<Vec<serde_json::Value>, CliError> {
    let mut reports = Vec::new();
    for o in orders {
        let rep = o.report(ocp);
        out.record_timing(&format!("order_{}", o.order), &rep.timings);
        out.write_json(&format!("value_function_d{}.json", o.order), &rep.value_function)?;
        if dump_sdpa {
            let title = format!("order {} relaxation", o.order);
            out.write(&format!("sdpa/order_{}.dat-s", o.order), write_sdpa(&o.relaxation.program, &title).as_bytes())?;
        }
        let mut v = serde_json::to_value(&rep).map_err(|e| CliError::Usage(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut v {
            map.remove("timings");
        }
        reports.push(v);
    }
    Ok(reports)
}

fn failed_orders(orders: &[OrderSolution]) -> Vec<String> {
    orders
        .iter()
        .filter(|o| o.status() != SolveStatus::Optimal)
        .map(|o| format!("d={} {:?}", o.order, o.status()))
        .collect()
}

pub fn solve(a: &SolveArgs) -> Result<(), CliError> {
    let (mut ocp, input) = load_problem(&a.source)?;
    let opts = relax_options(&mut ocp, &a.relax)?;
    let start = Instant::now();
    let h = hierarchy(&ocp, a.dmax, &opts, !a.sequential).map_err(relax_error)?;
    let mut out = OutputDir::create(&a.out)?;
    out.record_timing("hierarchy_s", start.elapsed().as_secs_f64());
    let reports = write_orders(&mut out, &ocp, &h.orders, a.relax.dump_sdpa)?;
    let failed = failed_orders(&h.orders);
    let report = SolveReport { min_order: h.min_order, monotone: h.monotone, all_optimal: failed.is_empty(), orders: reports };
    out.write_report("report.json", &report)?;
    out.finish("solve", vec![input], options_json(a))?;
    for o in &h.orders {
        println!("d={} {:?} lower bound {:.10}", o.order, o.status(), o.lower_bound());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(format!("solver did not reach optimality: {}", failed.join(", "))))
    }
}

fn policy_error(e: PolicyError) -> CliError {
    match e {
        PolicyError::Config(_) | PolicyError::Dimension(_) => CliError::Usage(e.to_string()),
        _ => CliError::Synthesis(e.to_string()),
    }
}

#[derive(Serialize)]
struct SynthesisSummary<'a> {
    x0: &'a [f64],
    target: &'a [f64],
    diameter: f64,
    epsilon: f64,
    status: RunStatus,
    steps: usize,
    cost: f64,
    terminal_cost: f64,
    total_time: f64,
    final_state: &'a [f64],
    diagnostics: &'a Option<String>,
    points: &'a [pwamc::policy::PartitionPoint],
}

impl<'a> SynthesisSummary<'a> {
    fn new(run: &'a PolicyRun, x0: &'a [f64], target: &'a [f64], cfg: &PolicyConfig) -> Self {
        SynthesisSummary {
            x0,
            target,
            diameter: cfg.diameter,
            epsilon: cfg.epsilon,
            status: run.status,
            steps: run.steps(),
            cost: run.cost,
            terminal_cost: run.terminal_cost,
            total_time: run.total_time,
            final_state: &run.final_state,
            diagnostics: &run.diagnostics,
            points: &run.points,
        }
    }
}

pub fn synthesize(a: &SynthesizeArgs) -> Result<(), CliError> {
    let (ocp, input) = load_problem(&a.source)?;
    let path = &a.value_function;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read value-function file {}: {e}", path.display())))?;
    let vf: ValueFunctionFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if vf.variables.len() != ocp.n {
        return Err(CliError::Usage(format!(
            "{}: value function has {} variables, the problem has {} states",
            path.display(),
            vf.variables.len(),
            ocp.n
        )));
    }
    let v = vf.polynomial().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let x0 = match &a.x0 {
        Some(x) => x.clone(),
        None => ocp
            .initial_point()
            .map(<[f64]>::to_vec)
            .ok_or_else(|| CliError::Usage("the initial measure is not a point; pass --x0".into()))?,
    };
    let target = match &a.target {
        Some(x) => x.clone(),
        None => ocp
            .terminal_point()
            .ok_or_else(|| CliError::Usage("the terminal set is not a single point; pass --target".into()))?,
    };
    let mut cfg = PolicyConfig::new(a.diameter, a.epsilon);
    cfg.max_steps = a.max_steps;
    let start = Instant::now();
    let run = run_policy(&ocp, &PolyValue::new(v), &x0, &target, &cfg).map_err(policy_error)?;
    let mut out = OutputDir::create(&a.out)?;
    out.record_timing("policy_s", start.elapsed().as_secs_f64());
    out.write_with("trajectory.csv", |w| write_trajectory_csv(&run, &ocp, w))?;
    out.write_report("summary.json", &SynthesisSummary::new(&run, &x0, &target, &cfg))?;
    let vf_input = InputRecord { source: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) };
    out.finish("synthesize", vec![input, vf_input], options_json(a))?;
    println!("{:?} after {} steps, cost {:.10}", run.status, run.steps(), run.cost);
    match run.status {
        RunStatus::ReachedTarget => Ok(()),
        s => Err(CliError::Synthesis(format!(
            "run ended with status {s:?}{}",
            run.diagnostics.as_deref().map(|d| format!(": {d}")).unwrap_or_default()
        ))),
    }
}

#[derive(Serialize)]
struct RunSummary {
    diameter: f64,
    status: RunStatus,
    steps: usize,
    policy_cost: f64,
    cost_gap: f64,
    feedback_sup_dev: f64,
    cost_within_10pct: bool,
    feedback_within_0_1: bool,
}

#[derive(Serialize)]
struct BenchmarkReport {
    x0: f64,
    oracle_cost: f64,
    policy_order: u32,
    bounds: Vec<BoundGap>,
    /// Relative gap of the highest solved order.
    relative_bound_gap: f64,
    bound_within_5pct: bool,
    bounds_below_oracle: bool,
    runs: Vec<RunSummary>,
    /// `|cost_gap|` non-increasing, within 1e-3, as the diameter shrinks.
    refinement_nonincreasing: bool,
}

#[derive(Serialize)]
struct RunComparison<'a> {
    diameter: f64,
    epsilon: f64,
    order: u32,
    report: &'a pwamc::bench::ComparisonReport,
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}

fn write_value_functions(w: &mut Vec<u8>, orders: &[OrderSolution]) -> std::io::Result<()> {
    use std::io::Write;
    let mut header = String::from("x,v_star");
    for o in orders {
        header.push_str(&format!(",v_{}", o.order));
    }
    writeln!(w, "{header}")?;
    for x in grid(-2.0, 2.0, 401) {
        write!(w, "{x},{}", AnalyticValueFunction::value_at(x))?;
        for o in orders {
            write!(w, ",{}", o.value.v.eval_at(&[x]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<(), CliError> {
    let (mut ocp, input) = builtin()?;
    let opts = relax_options(&mut ocp, &a.relax)?;
    if a.diameter.is_empty() {
        return Err(CliError::Usage("--diameter needs at least one value".into()));
    }
    let oracle = oracle_cost(a.x0, 1e-10).map_err(|e| CliError::Usage(e.to_string()))?;
    let start = Instant::now();
    let orders: Vec<OrderSolution> = match &a.orders {
        Some(list) => {
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            let min = minimum_order(&ocp);
            if let Some(&d) = list.iter().find(|&&d| d < min) {
                return Err(CliError::Usage(format!("order {d} is below the minimum order {min}")));
            }
            list.par_iter().map(|&d| solve_order(&ocp, d, &opts)).collect::<Result<_, _>>().map_err(relax_error)?
        }
        None => hierarchy(&ocp, a.dmax, &opts, true).map_err(relax_error)?.orders,
    };
    let hierarchy_s = start.elapsed().as_secs_f64();
    let top = orders.last().ok_or_else(|| CliError::Usage("no orders to solve".into()))?;
    let v = PolyValue::new(top.value.v.clone());

    let start = Instant::now();
    let runs: Vec<(f64, PolicyRun)> = a
        .diameter
        .par_iter()
        .map(|&d| run_policy(&ocp, &v, &[a.x0], &[1.0], &PolicyConfig::new(d, a.epsilon)).map(|r| (d, r)))
        .collect::<Result<_, _>>()
        .map_err(policy_error)?;
    let policy_s = start.elapsed().as_secs_f64();

    let mut out = OutputDir::create(&a.out)?;
    out.record_timing("hierarchy_s", hierarchy_s);
    out.record_timing("policy_s", policy_s);
    let order_reports = write_orders(&mut out, &ocp, &orders, a.relax.dump_sdpa)?;
    let failed = failed_orders(&orders);
    out.write_report(
        "report.json",
        &SolveReport {
            min_order: minimum_order(&ocp),
            monotone: orders.windows(2).all(|w| w[1].lower_bound() >= w[0].lower_bound() - 10.0 * opts.tol),
            all_optimal: failed.is_empty(),
            orders: order_reports,
        },
    )?;

    let bounds: Vec<(u32, f64)> = orders.iter().map(|o| (o.order, o.lower_bound())).collect();
    let mut summaries = Vec::new();
    for (k, (d, run)) in runs.iter().enumerate() {
        let rep = compare(&bounds, run, a.x0, oracle).map_err(|e| CliError::Synthesis(e.to_string()))?;
        out.write_report(
            &format!("comparison_{k}.json"),
            &RunComparison { diameter: *d, epsilon: a.epsilon, order: top.order, report: &rep },
        )?;
        out.write_with(&format!("policy_curve_{k}.csv"), |w| write_policy_curve(run, w))?;
        out.write_with(&format!("trajectory_{k}.csv"), |w| write_trajectory_csv(run, &ocp, w))?;
        summaries.push(RunSummary {
            diameter: *d,
            status: run.status,
            steps: run.steps(),
            policy_cost: run.cost,
            cost_gap: rep.cost_gap,
            feedback_sup_dev: rep.feedback_sup_dev,
            cost_within_10pct: rep.cost_gap.abs() <= 0.1 * oracle,
            feedback_within_0_1: rep.feedback_sup_dev <= 0.1,
        });
    }
    out.write_with("feedback_curve.csv", |w| write_feedback_curve(-2.0, 2.0, 401, w))?;
    out.write_with("value_functions.csv", |w| write_value_functions(w, &orders))?;
    out.write_with("bounds.csv", |w| {
        use std::io::Write;
        writeln!(w, "d,lower_bound,oracle,bound_gap")?;
        for &(d, lb) in &bounds {
            writeln!(w, "{d},{lb},{oracle},{}", oracle - lb)?;
        }
        Ok(())
    })?;

    let mut by_diameter: Vec<&RunSummary> = summaries.iter().collect();
    by_diameter.sort_by(|p, q| q.diameter.total_cmp(&p.diameter));
    let refinement = by_diameter.windows(2).all(|w| w[1].cost_gap.abs() <= w[0].cost_gap.abs() + 1e-3);
    let rel_gap = (oracle - top.lower_bound()) / oracle;
    let report = BenchmarkReport {
        x0: a.x0,
        oracle_cost: oracle,
        policy_order: top.order,
        bounds: bounds.iter().map(|&(d, lb)| BoundGap { d, lower_bound: lb, bound_gap: oracle - lb }).collect(),
        relative_bound_gap: rel_gap,
        bound_within_5pct: rel_gap.abs() <= 0.05,
        bounds_below_oracle: bounds.iter().all(|&(_, lb)| lb <= oracle + 1e-4),
        runs: summaries,
        refinement_nonincreasing: refinement,
    };
    out.write_report("benchmark.json", &report)?;
    out.finish("benchmark", vec![input], options_json(a))?;

    println!("oracle cost from x0 = {}: {oracle:.10}", a.x0);
    for b in &report.bounds {
        println!("d={} lower bound {:.10} gap {:.3e}", b.d, b.lower_bound, b.bound_gap);
    }
    for r in &report.runs {
        println!(
            "diameter {} {:?} steps {} cost {:.8} gap {:+.3e} max |u - k*| {:.3e}",
            r.diameter, r.status, r.steps, r.policy_cost, r.cost_gap, r.feedback_sup_dev
        );
    }
    if !failed.is_empty() {
        return Err(CliError::Solver(format!("solver did not reach optimality: {}", failed.join(", "))));
    }
    if let Some(r) = report.runs.iter().find(|r| r.status != RunStatus::ReachedTarget) {
        return Err(CliError::Synthesis(format!("run with diameter {} ended with status {:?}", r.diameter, r.status)));
    }
    Ok(())
}
