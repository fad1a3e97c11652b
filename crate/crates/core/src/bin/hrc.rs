use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hrc_kernel::frp::Outcome;
use hrc_kernel::planner::{plan, PlanError, PlanningContext};
use hrc_kernel::registry::Registry;
use hrc_kernel::scenario::{Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "hrc", version, about = "Validate, plan and simulate human-robot collaboration scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every section of a scenario file.
    Validate { scenario: PathBuf },
    /// Print the abstract plan for one task without executing it.
    Plan {
        scenario: PathBuf,
        /// Index into the scenario's task list.
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long)]
        json: bool,
    },
    /// Simulate the scenario until every task has an outcome or the horizon.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Write the event trace here as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the verdict as one JSON document.
        #[arg(long)]
        json_verdict: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Plan { scenario, task, json } => plan_cmd(&scenario, task, json),
        Command::Run {
            scenario,
            seed,
            max_ticks,
            trace,
            json_verdict,
        } => run(&scenario, seed, max_ticks, trace, json_verdict),
    }
}

fn report(e: &ScenarioError) {
    for i in &e.issues {
        eprintln!("{i}");
    }
}

/// Loads and validates; on failure reports and yields the exit code.
fn load_valid(path: &PathBuf) -> Result<Scenario, ExitCode> {
    let s = Scenario::load(path).map_err(|e| {
        report(&e);
        ExitCode::from(2)
    })?;
    let issues = s.validate();
    if !issues.is_empty() {
        for i in &issues {
            eprintln!("{i}");
        }
        return Err(ExitCode::from(2));
    }
    Ok(s)
}

fn validate(path: &PathBuf) -> ExitCode {
    let s = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) if e.unreadable => {
            report(&e);
            return ExitCode::from(2);
        }
        Err(e) => {
            for i in &e.issues {
                println!("{i}");
            }
            return ExitCode::from(1);
        }
    };
    let issues = s.validate();
    if issues.is_empty() {
        println!("{}: ok", path.display());
        ExitCode::SUCCESS
    } else {
        for i in &issues {
            println!("{i}");
        }
        ExitCode::from(1)
    }
}

fn plan_cmd(path: &PathBuf, index: usize, json: bool) -> ExitCode {
    let s = match load_valid(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let Some(t) = s.tasks.get(index) else {
        eprintln!("task index {index} out of range: the scenario has {} tasks", s.tasks.len());
        return ExitCode::from(2);
    };
    let sim = match s.build() {
        Ok(sim) => sim,
        Err(e) => {
            report(&e);
            return ExitCode::from(2);
        }
    };
    let providers = s.providers.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let registry: &Registry = sim.registry();
    let mut ctx = PlanningContext::new(registry, &providers, sim.ontology(), sim.regions());
    ctx.critical = s.safeguards.iter().map(|g| g.critical.clone()).collect();
    ctx.budget = s.config.search_budget;
    match plan(&t.task, &ctx, sim.world()) {
        Ok(p) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&p).expect("plans serialize"));
            } else {
                println!("{} steps", p.len());
                for st in &p.steps {
                    println!("  {} {} {}", st.id, st.service_type, st.task);
                }
                for (a, b) in &p.order {
                    println!("  order {a} < {b}");
                }
                for l in &p.causal_links {
                    println!("  link {} --{}--> {}", l.producer, l.atom, l.consumer);
                }
            }
            ExitCode::SUCCESS
        }
        Err(PlanError::Unsolvable { reason, expanded, depth }) => {
            println!("Unsolvable: {reason} ({expanded} states expanded, depth {depth})");
            ExitCode::from(1)
        }
        Err(e) => {
            println!("No plan: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(
    path: &PathBuf,
    seed: Option<u64>,
    max_ticks: Option<u64>,
    trace: Option<PathBuf>,
    json_verdict: bool,
) -> ExitCode {
    let mut s = match load_valid(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(seed) = seed {
        s.config.seed = seed;
    }
    if let Some(m) = max_ticks {
        s.config.max_ticks = m;
    }
    let mut sim = match s.build() {
        Ok(sim) => sim,
        Err(e) => {
            report(&e);
            return ExitCode::from(2);
        }
    };
    let verdict = sim.run();
    if let Some(out) = trace {
        let written = File::create(&out).and_then(|f| sim.trace().write_jsonl(BufWriter::new(f)));
        if let Err(e) = written {
            eprintln!("{}: {e}", out.display());
            return ExitCode::from(2);
        }
    }
    if json_verdict {
        println!("{}", serde_json::to_string_pretty(&verdict).expect("verdicts serialize"));
    } else {
        for t in &verdict.tasks {
            let outcome = t
                .outcome
                .map_or("none (horizon exceeded)".to_string(), |o| format!("{o:?}"));
            println!(
                "task {}: {outcome} after {} ticks, {} replans, {} safeguard activations ({} resolved)",
                t.index,
                t.ticks.unwrap_or(verdict.ticks),
                t.replans,
                t.safeguard_activations,
                t.safeguard_resolutions
            );
        }
    }
    let ok = !verdict.horizon_exceeded && verdict.tasks.iter().all(|t| t.outcome == Some(Outcome::Completed));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
