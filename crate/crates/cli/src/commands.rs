//! The four verbs behind the `dempc` binary. Each returns the process exit
//! code directly so policy failures (deficient excitation, infeasible
//! instances, audit violations) exit nonzero with diagnostics on stdout,
//! while IO and configuration errors propagate as hard errors.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dempc_core::data::DEFAULT_RANK_TOL;
use dempc_core::{
    average_performance, bound_updates_exact, box_audit, check_excitation, diagnose_infeasibility,
    monotonicity_audit, optimal_achievable_cost, run_closed_loop, solve_empc, BoxSet,
    ClosedLoopLog, DataTrajectory, EmpcError, EmpcSolution, InitialBound, LpStatus,
};

use crate::scenario::Scenario;
use crate::{CheckPeArgs, GenDataArgs, RunArgs, SolveOnceArgs};

/// Tolerance for the closed-loop box and monotonicity audits.
const AUDIT_TOL: f64 = 1e-8;
/// An input or output channel counts as active when it sits within this
/// relative distance of its box bound.
const ACTIVE_TOL: f64 = 1e-7;

/// Directory the scenario's relative paths resolve against.
fn scenario_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Excitation order the controller needs: horizon + 2 * order_bound + 1.
fn required_order(scenario: &Scenario) -> usize {
    scenario.empc.horizon + 2 * scenario.empc.order_bound + 1
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write(&mut out)?;
    out.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn gen_data(args: GenDataArgs) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.scenario)?;
    let plant = scenario.build_plant()?;
    let base = scenario_dir(&args.scenario);
    let data = scenario.load_data(&plant, &base)?;

    let output = args
        .output
        .unwrap_or_else(|| scenario.output_dir.join("dataset.csv"));
    write_file(&output, |out| {
        data.write_csv(out).context("writing the dataset")
    })?;

    let order = required_order(&scenario);
    let report =
        check_excitation(data.inputs(), order, DEFAULT_RANK_TOL).context("auditing excitation")?;

    println!("dataset: {}", output.display());
    println!("samples: {}", data.len());
    println!("fingerprint: {}", data.fingerprint());
    println!("{report}");
    if report.satisfied {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "dataset is not persistently exciting at order {order}; \
             the controller needs horizon + 2 * order_bound + 1"
        );
        Ok(ExitCode::FAILURE)
    }
}

pub fn check_pe(args: CheckPeArgs) -> Result<ExitCode> {
    let order = match (args.order, &args.scenario) {
        (Some(order), _) => order,
        (None, Some(path)) => required_order(&Scenario::load(path)?),
        (None, None) => bail!("pass --order or --scenario to fix the excitation order"),
    };
    let file = fs::File::open(&args.data)
        .with_context(|| format!("opening dataset {}", args.data.display()))?;
    let data = DataTrajectory::read_csv(file)
        .with_context(|| format!("parsing dataset {}", args.data.display()))?;
    let tol = args.tol.unwrap_or(DEFAULT_RANK_TOL);
    let report = check_excitation(data.inputs(), order, tol).context("auditing excitation")?;

    println!("dataset: {}", args.data.display());
    println!("samples: {}", data.len());
    println!("{report}");
    Ok(if report.satisfied {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

/// Channels of the predicted trajectory resting on their box bounds.
fn active_constraints(
    solution: &EmpcSolution,
    input_box: &BoxSet,
    output_box: &BoxSet,
) -> Vec<String> {
    let mut active = Vec::new();
    let mut scan = |label: &str, values: &nalgebra::DVector<f64>, boxset: &BoxSet, k: isize| {
        for ch in 0..boxset.dim() {
            let lo = boxset.lower()[ch];
            let hi = boxset.upper()[ch];
            let v = values[ch];
            if lo.is_finite() && (v - lo).abs() <= ACTIVE_TOL * (1.0 + lo.abs()) {
                active.push(format!("{label}_{}@k={k} lower", ch + 1));
            } else if hi.is_finite() && (hi - v).abs() <= ACTIVE_TOL * (1.0 + hi.abs()) {
                active.push(format!("{label}_{}@k={k} upper", ch + 1));
            }
        }
    };
    for k in 0..=solution.horizon() as isize {
        scan("u", solution.input_at(k), input_box, k);
        scan("y", solution.output_at(k), output_box, k);
    }
    active
}

fn join_components(v: &nalgebra::DVector<f64>) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn solve_once(args: SolveOnceArgs) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.scenario)?;
    let plant = scenario.build_plant()?;
    let base = scenario_dir(&args.scenario);
    let data = scenario.load_data(&plant, &base)?;
    let cfg = scenario.empc_config(args.beta.unwrap_or(scenario.empc.beta))?;
    let xi = scenario.initial_state(&plant)?;

    let bound = match (args.bound, cfg.initial_bound) {
        (Some(bound), _) => bound,
        (None, InitialBound::Explicit(bound)) => bound,
        (None, InitialBound::OptimalReachable) => match optimal_achievable_cost(&data, &xi, &cfg) {
            Ok(bound) => bound,
            Err(EmpcError::SolveFailed {
                status: LpStatus::Infeasible,
            }) => {
                let cause = diagnose_infeasibility(&data, &xi, f64::INFINITY, &cfg)?;
                println!("status: infeasible");
                println!("cause: {cause}");
                return Ok(ExitCode::FAILURE);
            }
            Err(err) => return Err(err).context("computing the initial bound"),
        },
    };

    match solve_empc(&data, &xi, bound, &cfg) {
        Ok(solution) => {
            println!("status: optimal");
            println!("bound: {bound}");
            println!(
                "equilibrium_input: {}",
                join_components(&solution.equilibrium_input)
            );
            println!(
                "equilibrium_output: {}",
                join_components(&solution.equilibrium_output)
            );
            println!("terminal_cost: {}", solution.terminal_cost);
            println!("objective: {}", solution.objective);
            println!("objective_with_reg: {}", solution.objective_with_reg);
            println!("alpha_l1: {}", solution.alpha_l1());
            println!("first_input: {}", join_components(solution.input_at(0)));
            println!("iterations: {}", solution.iterations);
            let active = active_constraints(&solution, &cfg.input_box, &cfg.output_box);
            if active.is_empty() {
                println!("active_constraints: none");
            } else {
                println!("active_constraints: {}", active.join(", "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(EmpcError::SolveFailed {
            status: LpStatus::Infeasible,
        }) => {
            let cause = diagnose_infeasibility(&data, &xi, bound, &cfg)?;
            println!("status: infeasible");
            println!("bound: {bound}");
            println!("cause: {cause}");
            Ok(ExitCode::FAILURE)
        }
        Err(err) => Err(err).context("solving the instance"),
    }
}

/// Everything `summary.json` reports for one sweep point.
#[derive(Serialize)]
#[serde(untagged)]
enum RunReport {
    Completed(RunStats),
    Failed { beta: f64, error: String },
}

#[derive(Serialize)]
struct RunStats {
    beta: f64,
    steps: usize,
    tail: usize,
    tail_average: f64,
    final_terminal_cost: f64,
    max_box_violation: f64,
    monotonicity_max_increase: f64,
    bound_updates_exact: bool,
    all_optimal: bool,
    passed: bool,
    log_file: String,
    dataset_fingerprint: String,
}

#[derive(Serialize)]
struct Summary {
    scenario: Scenario,
    runs: Vec<RunReport>,
    all_passed: bool,
}

pub fn run(args: RunArgs) -> Result<ExitCode> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(steps) = args.steps {
        scenario.run.steps = steps;
    }
    if let Some(tail) = args.tail {
        scenario.run.tail = Some(tail);
    }
    if let Some(dir) = args.output_dir {
        scenario.output_dir = dir;
    }
    scenario.validate()?;

    let plant = scenario.build_plant()?;
    let base = scenario_dir(&args.scenario);
    let data = scenario.load_data(&plant, &base)?;
    let xi0 = scenario.initial_state(&plant)?;
    let measured_cost = scenario.true_cost()?;
    let betas = scenario.betas();
    let steps = scenario.run.steps;

    // Sweep points are independent LP sequences; solve them concurrently.
    let outcomes: Vec<Result<ClosedLoopLog, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = betas
            .iter()
            .map(|&beta| {
                let (plant, data, xi0, cost, scenario) =
                    (&plant, &data, &xi0, &measured_cost, &scenario);
                scope.spawn(move || {
                    let cfg = scenario.empc_config(beta).map_err(|e| format!("{e:#}"))?;
                    run_closed_loop(plant, data, xi0, None, &cfg, steps, cost)
                        .map_err(|e| e.to_string())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread"))
            .collect()
    });

    fs::create_dir_all(&scenario.output_dir)
        .with_context(|| format!("creating {}", scenario.output_dir.display()))?;

    let mut reports = Vec::with_capacity(betas.len());
    let mut completed: Vec<(f64, &ClosedLoopLog)> = Vec::new();
    for (&beta, outcome) in betas.iter().zip(&outcomes) {
        match outcome {
            Ok(log) => {
                let file_name = format!("run_beta_{beta}.csv");
                write_file(&scenario.output_dir.join(&file_name), |out| {
                    log.write_csv(out).context("writing the run log")
                })?;
                let boxes = box_audit(log);
                let mono = monotonicity_audit(log);
                let stats = RunStats {
                    beta,
                    steps: log.len(),
                    tail: scenario.run.tail.unwrap_or(log.len()).min(log.len()),
                    tail_average: average_performance(log, scenario.run.tail)
                        .context("averaging the run")?,
                    final_terminal_cost: log.steps().last().map_or(f64::NAN, |r| r.terminal_cost),
                    max_box_violation: boxes.max_violation,
                    monotonicity_max_increase: mono.max_increase,
                    bound_updates_exact: bound_updates_exact(log),
                    all_optimal: log.all_optimal(),
                    passed: log.all_optimal()
                        && boxes.passes(AUDIT_TOL)
                        && mono.passes(AUDIT_TOL)
                        && bound_updates_exact(log),
                    log_file: file_name,
                    dataset_fingerprint: log.dataset_fingerprint().to_string(),
                };
                println!(
                    "beta {beta}: {} steps, tail average {}, terminal cost {}, {}",
                    stats.steps,
                    stats.tail_average,
                    stats.final_terminal_cost,
                    if stats.passed {
                        "passed"
                    } else {
                        "FAILED audits"
                    }
                );
                completed.push((beta, log));
                reports.push(RunReport::Completed(stats));
            }
            Err(error) => {
                println!("beta {beta}: FAILED ({error})");
                reports.push(RunReport::Failed {
                    beta,
                    error: error.clone(),
                });
            }
        }
    }

    // Combined table: stage cost per step, one column per sweep point.
    if !completed.is_empty() {
        write_file(&scenario.output_dir.join("stage_costs.csv"), |out| {
            let header: Vec<String> = std::iter::once("t".to_string())
                .chain(completed.iter().map(|(beta, _)| format!("beta_{beta}")))
                .collect();
            writeln!(out, "{}", header.join(",")).context("writing stage costs")?;
            for t in 0..steps {
                let mut line = t.to_string();
                for (_, log) in &completed {
                    line.push(',');
                    line.push_str(&log.steps()[t].stage_cost.to_string());
                }
                writeln!(out, "{line}").context("writing stage costs")?;
            }
            Ok(())
        })?;
    }

    let all_passed = reports.iter().all(|r| match r {
        RunReport::Completed(stats) => stats.passed,
        RunReport::Failed { .. } => false,
    });
    let summary = Summary {
        scenario,
        runs: reports,
        all_passed,
    };
    let summary_path = summary.scenario.output_dir.join("summary.json");
    write_file(&summary_path, |out| {
        serde_json::to_writer_pretty(&mut *out, &summary).context("writing the summary")?;
        writeln!(out).context("writing the summary")
    })?;

    println!("summary: {}", summary_path.display());
    println!("all_passed: {all_passed}");
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
