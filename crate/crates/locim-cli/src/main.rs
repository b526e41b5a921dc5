//! Command-line entry point tying solving, execution, benchmarking,
//! sweeping, verification, and the swarm simulation together.
//!
//! Exit status: 0 on success, 1 on golden or property failure, 2 on usage
//! errors.

use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use locim::bench;
use locim::envs;
use locim::extraction::Executor;
use locim::model::{EnvSpec, Model};
use locim::rollout::{self, RolloutConfig, RolloutPolicy};
use locim::solver::{c_of, solve_finite_horizon, SolverConfig};
use locim::swarm::{self, SwarmConfig};
use locim::verify;

#[derive(Parser)]
#[command(name = "locim", version, about = "locally interdependent multi-agent MDP toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cutoff tables for an environment and write the artifact.
    Solve {
        /// registry name or a JSON environment spec path
        #[arg(long)]
        env: String,
        /// extra computation visibility on top of the execution visibility
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        /// extra horizon on top of c
        #[arg(long, default_value_t = 0)]
        eta: usize,
        #[arg(long)]
        out: PathBuf,
        /// also export the tables as JSONL for inspection
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[arg(long)]
        max_group: Option<usize>,
    },
    /// Roll out a policy and write the trace.
    Rollout {
        #[arg(long)]
        env: String,
        /// joint | trivial:amalgam | trivial:cutoff | trivial:fsfho |
        /// trivial:finite-amalgam | trivial:<xi>:<eta> | smbe:<v_comp>
        #[arg(long)]
        policy: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the benchmark suite against the registered golden returns.
    Bench {
        /// named suite; appendix-a covers every registered environment
        #[arg(long, default_value = "appendix-a")]
        suite: String,
        /// environments to run (default: the whole suite)
        #[arg(long, value_delimiter = ',')]
        envs: Vec<String>,
        /// policy name filters, e.g. trivial:amalgam,smbe
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        /// run the layout reconstruction search instead of the suite
        #[arg(long)]
        reconstruct: Option<String>,
    },
    /// Sweep the (xi, eta) grid on one environment.
    Sweep {
        #[arg(long)]
        env: String,
        #[arg(long, default_value = "trivial")]
        method: String,
        #[arg(long, value_delimiter = ',')]
        xi: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        eta: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the property suites and emit a JSON report.
    Verify {
        /// all | decomposition | dtl | theorems | cpp | group-bound
        #[arg(long, default_value = "all")]
        property: String,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the many-agent room navigation simulation.
    Swarm {
        #[arg(long, default_value_t = 100)]
        agents: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Summarize a JSONL trace as a human-readable table.
    Trace {
        #[arg(long)]
        input: PathBuf,
    },
    /// Export a registered environment as a JSON spec.
    Env {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(failures) => {
            if failures {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_env(name: &str) -> Result<Model, locim::LocimError> {
    if name.ends_with(".json") {
        let text = std::fs::read_to_string(name)?;
        let spec: EnvSpec = serde_json::from_str(&text)?;
        Model::compile(spec)
    } else {
        envs::build_env(name)
    }
}

fn run(cli: Cli) -> Result<bool, locim::LocimError> {
    match cli.command {
        Command::Solve { env, xi, eta, out, jsonl, max_group } => {
            let model = load_env(&env)?;
            let report = model.validate();
            if !report.is_empty() {
                return Err(locim::LocimError::InvalidConfig(format!(
                    "model fails validation: {report:?}"
                )));
            }
            let consts = model.consts();
            let c = c_of(consts.v_exec, consts.r)?;
            let config = SolverConfig::identity(
                consts.v_exec + xi,
                c + eta,
                max_group.unwrap_or(model.n()),
            );
            let tables = solve_finite_horizon(&model, config)?;
            let tmp = out.with_extension("tmp");
            let mut w = BufWriter::new(File::create(&tmp)?);
            tables.write_artifact(&model, &mut w)?;
            w.flush()?;
            std::fs::rename(&tmp, &out)?;
            println!(
                "solved {} group states (v_comp={}, H={}) -> {}",
                tables.keys.len(),
                config.v_comp,
                config.horizon,
                out.display()
            );
            if let Some(path) = jsonl {
                let mut w = BufWriter::new(File::create(&path)?);
                tables.write_jsonl(&mut w)?;
            }
            Ok(false)
        }
        Command::Rollout { env, policy, steps, seed, trace } => {
            let model = load_env(&env)?;
            let policy = bench::parse_policy(&policy)?;
            let horizon = steps.unwrap_or_else(|| bench::rollout_horizon(&model));
            if let bench::PolicyId::JointOptimal = policy {
                let sol = verify::solve_joint_optimal(&model, 1e-7)?;
                let res = rollout::rollout(
                    &model,
                    &RolloutPolicy::Joint(&sol),
                    &model.initial(),
                    &RolloutConfig { seed, ..RolloutConfig::deterministic(horizon) },
                )?;
                report_rollout(&res, trace)?;
                return Ok(false);
            }
            let (method, v_comp, solve_h) = bench::resolve_policy(&model, &policy, 100.0).unwrap();
            let tables = bench::solve_for(&model, v_comp, solve_h)?;
            let executor = Executor::new(&model, &tables, method);
            let res = rollout::rollout(
                &model,
                &RolloutPolicy::Extracted(&executor),
                &model.initial(),
                &RolloutConfig { seed, ..RolloutConfig::deterministic(horizon) },
            )?;
            report_rollout(&res, trace)?;
            Ok(false)
        }
        Command::Bench { suite, envs: env_filter, policies, report, tol, reconstruct } => {
            if suite != "appendix-a" {
                return Err(locim::LocimError::InvalidInput(format!(
                    "unknown suite '{suite}' (available: appendix-a)"
                )));
            }
            if let Some(env) = reconstruct {
                let rec = match env.as_str() {
                    "highway" => bench::reconstruct_highway(tol)?,
                    other => bench::verify_layout(other, tol)?,
                };
                println!("{}", serde_json::to_string_pretty(&rec)?);
                return Ok(!rec.found);
            }
            let mut cells = bench::run_benchmark_suite(&env_filter, tol)?;
            if !policies.is_empty() {
                cells.retain(|c| policies.iter().any(|p| c.policy.starts_with(p.as_str())));
            }
            let mut out: Box<dyn Write> = match &report {
                Some(path) => Box::new(BufWriter::new(File::create(path)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            bench::write_suite_csv(&cells, &mut out)?;
            out.flush()?;
            let failed = cells.iter().any(|c| c.status.starts_with("fail"));
            Ok(failed)
        }
        Command::Sweep { env, method, xi, eta, report } => {
            let xis = if xi.is_empty() { vec![0.0] } else { xi };
            let etas = if eta.is_empty() { vec![0] } else { eta };
            let cells = bench::sweep(&env, method == "smbe", &xis, &etas)?;
            let mut out: Box<dyn Write> = match &report {
                Some(path) => Box::new(BufWriter::new(File::create(path)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            bench::write_suite_csv(&cells, &mut out)?;
            out.flush()?;
            Ok(false)
        }
        Command::Verify { property, instances, seed, json } => {
            let mut outcomes = Vec::new();
            let all = property == "all";
            if all || property == "decomposition" {
                outcomes.push(verify::suite_decomposition(instances, seed)?);
            }
            if all || property == "dtl" {
                outcomes.push(verify::suite_dependence_time(instances.max(100) * 10, seed)?);
            }
            if all || property == "theorems" {
                outcomes.push(verify::suite_theorem_bounds(instances, seed)?);
            }
            if all || property == "cpp" {
                outcomes.push(verify::suite_cpp(instances.min(25), seed)?);
            }
            if all || property == "group-bound" {
                outcomes.push(verify::suite_group_bound()?);
            }
            if outcomes.is_empty() {
                return Err(locim::LocimError::InvalidInput(format!(
                    "unknown property '{property}'"
                )));
            }
            let text = serde_json::to_string_pretty(&outcomes)?;
            match json {
                Some(path) => std::fs::write(path, &text)?,
                None => println!("{text}"),
            }
            for o in &outcomes {
                println!(
                    "{}: {} ({} checked, {} failures)",
                    o.name,
                    if o.pass { "pass" } else { "FAIL" },
                    o.checked,
                    o.failures
                );
            }
            Ok(outcomes.iter().any(|o| !o.pass))
        }
        Command::Swarm { agents, steps, seed, stats } => {
            let config = SwarmConfig {
                n_agents: agents,
                steps,
                seed,
                checkpoints: vec![50, 150, 500, 1000]
                    .into_iter()
                    .filter(|&t| t <= steps)
                    .chain(std::iter::once(steps))
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect(),
                ..SwarmConfig::default()
            };
            let outcome = swarm::run_swarm(&config)?;
            for s in &outcome.stats {
                println!(
                    "t={:5} objectives avg={:.2} min={} max={} total={} | max-room={} max-group={} \
                     avg-group={:.2} sizes={:.1}%/{:.1}%/{:.1}%/{:.2}% | collisions={} heuristic={:.2}%",
                    s.t,
                    s.avg_objectives,
                    s.min_objectives,
                    s.max_objectives,
                    s.total_objectives,
                    s.max_agents_in_room,
                    s.max_group_size,
                    s.avg_group_size,
                    s.proportion_size[0] * 100.0,
                    s.proportion_size[1] * 100.0,
                    s.proportion_size[2] * 100.0,
                    s.proportion_size[3] * 100.0,
                    s.collisions,
                    s.heuristic_fraction * 100.0
                );
            }
            if let Some(path) = stats {
                std::fs::write(path, serde_json::to_string_pretty(&outcome.stats)?)?;
            }
            Ok(false)
        }
        Command::Env { name, out } => {
            let model = envs::build_env(&name)?;
            let text = serde_json::to_string_pretty(&model.spec)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(false)
        }
        Command::Trace { input } => {
            let text = std::fs::read_to_string(&input)?;
            let records = rollout::read_trace_jsonl(&text)?;
            if records.is_empty() {
                println!("(empty trace)");
                return Ok(false);
            }
            println!("{:>5} {:>30} {:>16} {:>10} {:>12}  partition", "t", "state", "action", "reward", "return");
            for rec in &records {
                let state: Vec<String> = rec
                    .state
                    .iter()
                    .map(|s| format!("{:?}/{}", s.pos, s.y))
                    .collect();
                let blocks: Vec<String> =
                    rec.z_exec.blocks.iter().map(|b| format!("{b:?}")).collect();
                println!(
                    "{:>5} {:>30} {:>16} {:>10.2} {:>12.4}  {}",
                    rec.t,
                    state.join(" "),
                    format!("{:?}", rec.action),
                    rec.reward,
                    rec.discounted_cum,
                    blocks.join(" ")
                );
            }
            if let Some(cycle) = rollout::detect_cycle_in_trace(&records) {
                println!("cycle: period {} entered at t={}", cycle.period, cycle.entry);
            }
            Ok(false)
        }
    }
}

fn report_rollout(
    res: &rollout::RolloutResult,
    trace: Option<PathBuf>,
) -> Result<(), locim::LocimError> {
    println!("return: {:.4}  (tail bound {:.6})", res.ret, res.tail_bound);
    if let Some(cycle) = res.cycle {
        println!("cycle: period {} entered at t={}", cycle.period, cycle.entry);
    }
    if let Some(path) = trace {
        let mut w = BufWriter::new(File::create(&path)?);
        rollout::write_trace_jsonl(&res.trace, &mut w)?;
        w.flush()?;
        println!("trace -> {}", path.display());
    }
    Ok(())
}
