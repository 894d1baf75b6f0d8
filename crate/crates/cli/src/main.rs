mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmplan_core::agent::{train, write_stats_csv};
use mmplan_core::harness::{
    run_method, run_study, training_curves, write_curves_csv, write_raw_jsonl, write_report_csv, Method, Policies,
};
use mmplan_core::neural::Checkpoint;
use mmplan_core::{
    generate_week, total_cost, utilization, Assignment, CapacitySetting, Money, SelectionHeuristic, WeekScenario,
};

use config::{RunConfig, QUICK_EPISODES, QUICK_WEEKS};

/// Online container planning over a week of train schedules.
#[derive(Debug, Parser)]
#[command(name = "mmplan", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Base seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one week and print it as JSON.
    Generate {
        /// Slots per schedule, 1 to 6, or `random`.
        #[arg(long)]
        capacity: Option<CapacitySetting>,
        #[arg(long)]
        containers: Option<usize>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a week to optimality.
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a week with one of the planners.
    Plan {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        method: PlanMethod,
        /// Checkpoint for `--method drl`.
        #[arg(long)]
        load: Option<PathBuf>,
        /// Container order of the learned planner.
        #[arg(long)]
        heuristic: Option<SelectionHeuristic>,
        /// Container order of the greedy planners.
        #[arg(long)]
        order: Option<SelectionHeuristic>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a Q-network planner.
    Train {
        #[arg(long)]
        heuristic: Option<SelectionHeuristic>,
        #[arg(long)]
        capacity: Option<CapacitySetting>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write the trained network and optimizer state here.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Write the per-episode statistics CSV here.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Short run of 400 episodes unless `--episodes` is given.
        #[arg(long)]
        quick: bool,
    },
    /// Train both learned planners and compare every method on held-out weeks.
    Bench {
        /// Capacity settings to study; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        capacity: Vec<CapacitySetting>,
        /// Methods to evaluate; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        weeks: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Directory for report.csv, curves_*.csv and raw_weeks.jsonl.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// 20 weeks and 400 training episodes unless set explicitly.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlanMethod {
    First,
    Cheapest,
    #[value(name = "2ilp")]
    TwoIlp,
    #[value(name = "7ilp")]
    SevenIlp,
    Optimal,
    Drl,
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    method: &'a str,
    cost: Money,
    utilization: f64,
    used_slots: u32,
    trucks: usize,
    assignment: &'a Assignment,
}

fn read_scenario(path: &Path) -> Result<WeekScenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let scenario: WeekScenario =
        serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
    scenario.validate()?;
    Ok(scenario)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn emit_plan(method: &str, assignment: &Assignment, scenario: &WeekScenario, out: Option<&Path>) -> Result<()> {
    let cost = total_cost(assignment, scenario)?;
    let util = utilization(assignment, scenario)?;
    let body = PlanOutput {
        method,
        cost,
        utilization: util.fraction,
        used_slots: util.used_slots,
        trucks: assignment.trucks(),
        assignment,
    };
    emit(out, &(serde_json::to_string_pretty(&body)? + "\n"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match cli.command {
        Command::Generate { capacity, containers, out } => {
            if let Some(c) = capacity {
                cfg.generator.capacity = c;
            }
            if let Some(n) = containers {
                cfg.generator.containers_per_week = n;
            }
            let week = generate_week(&cfg.generator.with_seed(cfg.seed))?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&week)? + "\n"))
        }
        Command::Solve { scenario, out } => {
            let s = read_scenario(&scenario)?;
            let plan = mmplan_core::solve_optimal(&s);
            emit_plan("optimal", &plan.assignment, &s, out.as_deref())
        }
        Command::Plan {
            scenario,
            method,
            load,
            heuristic,
            order,
            out,
        } => {
            let s = read_scenario(&scenario)?;
            if let Some(o) = order {
                cfg.baselines.greedy_order = o;
            }
            let heuristic = heuristic.unwrap_or(cfg.training.heuristic);
            let mut policies = Policies::default();
            let method = match method {
                PlanMethod::First => Method::FirstTrain,
                PlanMethod::Cheapest => Method::CheapestTrain,
                PlanMethod::TwoIlp => Method::TwoIlp,
                PlanMethod::SevenIlp => Method::SevenIlp,
                PlanMethod::Optimal => Method::Optimal,
                PlanMethod::Drl => {
                    let path = load.context("--method drl needs a checkpoint via --load")?;
                    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
                    match heuristic {
                        SelectionHeuristic::Fifo => {
                            policies.fifo = Some(ck.network);
                            Method::DrlFifo
                        }
                        SelectionHeuristic::Edf => {
                            policies.edf = Some(ck.network);
                            Method::DrlEdf
                        }
                        SelectionHeuristic::Booking => bail!("learned planners use the fifo or edf order"),
                    }
                }
            };
            let a = run_method(method, &s, &policies, &cfg.baselines)?;
            emit_plan(method.name(), &a, &s, out.as_deref())
        }
        Command::Train {
            heuristic,
            capacity,
            episodes,
            save,
            stats,
            quick,
        } => {
            if let Some(h) = heuristic {
                cfg.training.heuristic = h;
            }
            if let Some(c) = capacity {
                cfg.generator.capacity = c;
            }
            cfg.training.episodes = episodes.unwrap_or(if quick { QUICK_EPISODES } else { cfg.training.episodes });
            let tc = cfg.training_config();
            let agent = train(&tc)?;
            if let Some(p) = &save {
                agent.checkpoint().save(p).with_context(|| format!("saving {}", p.display()))?;
            }
            if let Some(p) = &stats {
                write_stats_csv(&agent.stats, create(p)?)?;
            }
            let slopes = training_curves(&agent.stats);
            let tail = agent.stats.len().min(200);
            let recent_gap = agent.stats[agent.stats.len() - tail..]
                .iter()
                .map(|s| s.cost_gap as f64)
                .sum::<f64>()
                / tail.max(1) as f64;
            eprintln!(
                "trained {} episodes ({} order, capacity {}): reward slope {:.4e}, cost-gap slope {:.4e}, mean gap of last {tail} episodes {recent_gap:.1}",
                tc.episodes, tc.heuristic, tc.generator.capacity, slopes.mean_reward, slopes.cost_gap
            );
            Ok(())
        }
        Command::Bench {
            capacity,
            methods,
            weeks,
            episodes,
            out_dir,
            quick,
        } => {
            if !capacity.is_empty() {
                cfg.bench.settings = capacity;
            }
            if !methods.is_empty() {
                cfg.bench.methods = methods;
            }
            cfg.bench.weeks = weeks.unwrap_or(if quick { QUICK_WEEKS } else { cfg.bench.weeks });
            cfg.training.episodes = episodes.unwrap_or(if quick { QUICK_EPISODES } else { cfg.training.episodes });
            if let Some(d) = out_dir {
                cfg.paths.output_dir = d;
            }
            let result = run_study(&cfg.study_config(), |line| eprintln!("{line}"))?;
            write_report_csv(&result.reports, create(&cfg.paths.report_path())?)?;
            write_raw_jsonl(&result.reports, create(&cfg.paths.raw_path())?)?;
            for h in [SelectionHeuristic::Fifo, SelectionHeuristic::Edf] {
                let curves = result.curves(h);
                if !curves.is_empty() {
                    write_curves_csv(&curves, create(&cfg.paths.curves_path(h))?)?;
                }
            }
            for r in &result.reports {
                for s in &r.summaries {
                    println!(
                        "capacity={:<6} {:<14} mean_cost={:>10.1} cost_diff={:>+7.2}% utilization={:.4} ({:+.2} pp)",
                        r.capacity.to_string(),
                        s.method.name(),
                        s.mean_cost,
                        s.cost_diff_pct,
                        s.mean_utilization,
                        s.utilization_diff_pp
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
