//! Benchmark harness: trains both DQN variants, evaluates every planner on a
//! shared set of held-out weeks and aggregates costs and utilization against
//! the exact optimum.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{act_greedy, csv_error, train, EpisodeStats, TrainingConfig};
use crate::baselines::{cheapest_train, first_train, k_ilp, ReplanSchedule};
use crate::domain::{total_cost, utilization, Assignment, Money, WeekScenario};
use crate::env::SelectionHeuristic;
use crate::error::{Error, Result};
use crate::exact::solve_optimal;
use crate::neural::QNetwork;
use crate::scenario::{derive_seed, generate_week, streams, CapacitySetting, GeneratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "optimal")]
    Optimal,
    #[serde(rename = "drl-edf")]
    DrlEdf,
    #[serde(rename = "drl-fifo")]
    DrlFifo,
    #[serde(rename = "2-ilp")]
    TwoIlp,
    #[serde(rename = "7-ilp")]
    SevenIlp,
    #[serde(rename = "first-train")]
    FirstTrain,
    #[serde(rename = "cheapest-train")]
    CheapestTrain,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Optimal,
        Method::DrlEdf,
        Method::DrlFifo,
        Method::TwoIlp,
        Method::SevenIlp,
        Method::FirstTrain,
        Method::CheapestTrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Optimal => "optimal",
            Method::DrlEdf => "drl-edf",
            Method::DrlFifo => "drl-fifo",
            Method::TwoIlp => "2-ilp",
            Method::SevenIlp => "7-ilp",
            Method::FirstTrain => "first-train",
            Method::CheapestTrain => "cheapest-train",
        }
    }

    /// Container order used by the learned planners.
    pub fn drl_heuristic(self) -> Option<SelectionHeuristic> {
        match self {
            Method::DrlEdf => Some(SelectionHeuristic::Edf),
            Method::DrlFifo => Some(SelectionHeuristic::Fifo),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// Settings of the non-learned planners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    /// Order in which the greedy planners take containers.
    pub greedy_order: SelectionHeuristic,
    pub two_ilp: ReplanSchedule,
    pub seven_ilp: ReplanSchedule,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            greedy_order: SelectionHeuristic::Booking,
            two_ilp: ReplanSchedule::twice_weekly(),
            seven_ilp: ReplanSchedule::daily(),
        }
    }
}

/// Trained networks for the learned planners.
#[derive(Debug, Clone, Default)]
pub struct Policies {
    pub fifo: Option<QNetwork>,
    pub edf: Option<QNetwork>,
}

impl Policies {
    fn network(&self, method: Method) -> Option<&QNetwork> {
        match method {
            Method::DrlFifo => self.fifo.as_ref(),
            Method::DrlEdf => self.edf.as_ref(),
            _ => None,
        }
    }

    fn check(&self, methods: &[Method]) -> Result<()> {
        match methods.iter().find(|m| m.drl_heuristic().is_some() && self.network(**m).is_none()) {
            Some(m) => Err(Error::MissingPolicy(m.name().to_string())),
            None => Ok(()),
        }
    }
}

/// Runs one planner on one week.
pub fn run_method(
    method: Method,
    scenario: &WeekScenario,
    policies: &Policies,
    options: &BaselineOptions,
) -> Result<Assignment> {
    Ok(match method {
        Method::Optimal => solve_optimal(scenario).assignment,
        Method::DrlEdf | Method::DrlFifo => {
            let net = policies
                .network(method)
                .ok_or_else(|| Error::MissingPolicy(method.name().to_string()))?;
            act_greedy(net, scenario, method.drl_heuristic().expect("learned method"))?
        }
        Method::TwoIlp => k_ilp(scenario, &options.two_ilp),
        Method::SevenIlp => k_ilp(scenario, &options.seven_ilp),
        Method::FirstTrain => first_train(scenario, options.greedy_order),
        Method::CheapestTrain => cheapest_train(scenario, options.greedy_order),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub weeks: usize,
    /// Base seed; week `i` uses the evaluation stream derived from it.
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub baselines: BaselineOptions,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            weeks: 200,
            seed: 0,
            generator: GeneratorConfig::default(),
            baselines: BaselineOptions::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn week_scenario(&self, week: usize) -> Result<WeekScenario> {
        generate_week(&self.generator.with_seed(derive_seed(self.seed, streams::EVALUATION, week as u64)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekResult {
    pub capacity: CapacitySetting,
    pub week: usize,
    pub scenario_seed: u64,
    pub method: Method,
    pub cost: Money,
    pub utilization: f64,
    pub trucks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_utilization: f64,
    pub std_utilization: f64,
    /// `(mean_cost - optimal) / optimal * 100`.
    pub cost_diff_pct: f64,
    /// Difference of mean utilization fractions, times 100.
    pub utilization_diff_pp: f64,
    /// Utilization difference relative to the optimum's utilization, in percent.
    pub utilization_diff_rel_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub capacity: CapacitySetting,
    pub weeks: usize,
    pub seed: u64,
    pub summaries: Vec<MethodSummary>,
    pub raw: Vec<WeekResult>,
}

impl EvaluationReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Mean and sample standard deviation, summed in slice order.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn relative_pct(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        (value - reference) / reference * 100.0
    }
}

/// Runs `methods` on `config.weeks` generated weeks. Every method sees the
/// same weeks; differences are measured against the exact optimum, which is
/// always computed even when not listed.
pub fn evaluate(methods: &[Method], config: &EvaluationConfig, policies: &Policies) -> Result<EvaluationReport> {
    policies.check(methods)?;
    config.generator.validate()?;
    let mut listed: Vec<Method> = Vec::new();
    for &m in methods {
        if !listed.contains(&m) {
            listed.push(m);
        }
    }
    let mut run: Vec<Method> = vec![Method::Optimal];
    run.extend(listed.iter().filter(|&&m| m != Method::Optimal));

    let per_week: Vec<Vec<WeekResult>> = (0..config.weeks)
        .into_par_iter()
        .map(|week| {
            let scenario = config.week_scenario(week)?;
            run.iter()
                .map(|&method| {
                    let a = run_method(method, &scenario, policies, &config.baselines)?;
                    Ok(WeekResult {
                        capacity: config.generator.capacity,
                        week,
                        scenario_seed: scenario.seed,
                        method,
                        cost: total_cost(&a, &scenario)?,
                        utilization: utilization(&a, &scenario)?.fraction,
                        trucks: a.trucks(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut by_method: BTreeMap<Method, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in per_week.iter().flatten() {
        let e = by_method.entry(r.method).or_default();
        e.0.push(r.cost as f64);
        e.1.push(r.utilization);
    }
    let stats = |m: Method| {
        let (c, u) = &by_method[&m];
        (mean_std(c), mean_std(u))
    };
    let ((opt_cost, _), (opt_util, _)) = stats(Method::Optimal);
    let summaries = listed
        .iter()
        .map(|&method| {
            let ((mean_cost, std_cost), (mean_utilization, std_utilization)) = stats(method);
            MethodSummary {
                method,
                mean_cost,
                std_cost,
                mean_utilization,
                std_utilization,
                cost_diff_pct: relative_pct(mean_cost, opt_cost),
                utilization_diff_pp: (mean_utilization - opt_util) * 100.0,
                utilization_diff_rel_pct: relative_pct(mean_utilization, opt_util),
            }
        })
        .collect();
    let raw = per_week
        .into_iter()
        .flatten()
        .filter(|r| listed.contains(&r.method))
        .collect();

    Ok(EvaluationReport {
        capacity: config.generator.capacity,
        weeks: config.weeks,
        seed: config.seed,
        summaries,
        raw,
    })
}

/// Least-squares line `y = intercept + slope * x` through `(i, ys[i])`.
pub fn least_squares(ys: &[f64]) -> (f64, f64) {
    let n = ys.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    if n == 1 {
        return (0.0, ys[0]);
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (slope, mean_y - slope * mean_x)
}

/// Fitted slope per episode of each training series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSlopes {
    pub mean_reward: f64,
    pub reward_variance: f64,
    pub cost_gap: f64,
}

pub fn training_curves(stats: &[EpisodeStats]) -> CurveSlopes {
    let series = |f: fn(&EpisodeStats) -> f64| least_squares(&stats.iter().map(f).collect::<Vec<_>>()).0;
    CurveSlopes {
        mean_reward: series(|s| s.mean_reward),
        reward_variance: series(|s| s.reward_variance),
        cost_gap: series(|s| s.cost_gap as f64),
    }
}

#[derive(Serialize)]
struct CurveRow {
    capacity: CapacitySetting,
    episode: usize,
    mean_reward: f64,
    reward_variance: f64,
    cost_gap: Money,
    mean_reward_trend: f64,
    reward_variance_trend: f64,
    cost_gap_trend: f64,
}

/// Training series with their least-squares trend lines, one block per
/// capacity setting.
pub fn write_curves_csv<W: Write>(runs: &[(CapacitySetting, &[EpisodeStats])], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (capacity, stats) in runs {
        let fit = |f: fn(&EpisodeStats) -> f64| least_squares(&stats.iter().map(f).collect::<Vec<_>>());
        let reward = fit(|s| s.mean_reward);
        let variance = fit(|s| s.reward_variance);
        let gap = fit(|s| s.cost_gap as f64);
        for (i, s) in stats.iter().enumerate() {
            let x = i as f64;
            w.serialize(CurveRow {
                capacity: *capacity,
                episode: s.episode,
                mean_reward: s.mean_reward,
                reward_variance: s.reward_variance,
                cost_gap: s.cost_gap,
                mean_reward_trend: reward.1 + reward.0 * x,
                reward_variance_trend: variance.1 + variance.0 * x,
                cost_gap_trend: gap.1 + gap.0 * x,
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportRow<'a> {
    capacity: CapacitySetting,
    method: &'a str,
    weeks: usize,
    mean_cost: f64,
    std_cost: f64,
    cost_diff_pct: f64,
    mean_utilization: f64,
    std_utilization: f64,
    utilization_diff_pp: f64,
    utilization_diff_rel_pct: f64,
}

/// One row per capacity setting and method.
pub fn write_report_csv<W: Write>(reports: &[EvaluationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for s in &r.summaries {
            w.serialize(ReportRow {
                capacity: r.capacity,
                method: s.method.name(),
                weeks: r.weeks,
                mean_cost: s.mean_cost,
                std_cost: s.std_cost,
                cost_diff_pct: s.cost_diff_pct,
                mean_utilization: s.mean_utilization,
                std_utilization: s.std_utilization,
                utilization_diff_pp: s.utilization_diff_pp,
                utilization_diff_rel_pct: s.utilization_diff_rel_pct,
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per week and method.
pub fn write_raw_jsonl<W: Write>(reports: &[EvaluationReport], mut out: W) -> Result<()> {
    for r in reports.iter().flat_map(|r| &r.raw) {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Train-then-evaluate study over several capacity settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub settings: Vec<CapacitySetting>,
    pub methods: Vec<Method>,
    /// Template for both learned planners; heuristic and capacity are set per run.
    pub training: TrainingConfig,
    /// Template for evaluation; capacity is set per run.
    pub evaluation: EvaluationConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            settings: CapacitySetting::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            training: TrainingConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub capacity: CapacitySetting,
    pub heuristic: SelectionHeuristic,
    pub stats: Vec<EpisodeStats>,
    pub network: QNetwork,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub training: Vec<TrainingRun>,
    pub reports: Vec<EvaluationReport>,
}

impl StudyResult {
    pub fn curves(&self, heuristic: SelectionHeuristic) -> Vec<(CapacitySetting, &[EpisodeStats])> {
        self.training
            .iter()
            .filter(|r| r.heuristic == heuristic)
            .map(|r| (r.capacity, r.stats.as_slice()))
            .collect()
    }
}

/// For each setting: trains the learned planners that `methods` needs, then
/// evaluates all methods. `progress` receives a line per finished stage.
pub fn run_study(config: &StudyConfig, mut progress: impl FnMut(&str)) -> Result<StudyResult> {
    let mut training = Vec::new();
    let mut reports = Vec::new();
    for &capacity in &config.settings {
        let mut policies = Policies::default();
        for heuristic in [SelectionHeuristic::Fifo, SelectionHeuristic::Edf] {
            let method = if heuristic == SelectionHeuristic::Fifo {
                Method::DrlFifo
            } else {
                Method::DrlEdf
            };
            if !config.methods.contains(&method) {
                continue;
            }
            let mut cfg = config.training.clone();
            cfg.heuristic = heuristic;
            cfg.generator.capacity = capacity;
            let agent = train(&cfg)?;
            let slopes = training_curves(&agent.stats);
            progress(&format!(
                "trained {method} capacity={capacity} episodes={} reward_slope={:.4e} gap_slope={:.4e}",
                cfg.episodes, slopes.mean_reward, slopes.cost_gap
            ));
            match heuristic {
                SelectionHeuristic::Fifo => policies.fifo = Some(agent.network.clone()),
                _ => policies.edf = Some(agent.network.clone()),
            }
            training.push(TrainingRun {
                capacity,
                heuristic,
                stats: agent.stats,
                network: agent.network,
            });
        }
        let mut eval = config.evaluation.clone();
        eval.generator.capacity = capacity;
        let report = evaluate(&config.methods, &eval, &policies)?;
        progress(&format!("evaluated capacity={capacity} weeks={}", eval.weeks));
        reports.push(report);
    }
    Ok(StudyResult { training, reports })
}
