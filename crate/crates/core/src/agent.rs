//! Deep Q-learning planner: masked epsilon-greedy acting, a replay memory and
//! periodic minibatch updates against Bellman targets.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, Money, WeekScenario, NUM_ACTIONS};
use crate::env::{ActionId, ActionMask, PlanState, PlanningEnv, SelectionHeuristic, Transition, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::exact::solve_optimal;
use crate::neural::{train_batch, ActionTarget, Adam, Checkpoint, QNetwork};
use crate::scenario::{derive_seed, generate_week, streams, GeneratorConfig};

/// Fixed-capacity ring buffer of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buffer: Vec::with_capacity(capacity),
            next: 0,
            inserted: 0,
        }
    }

    pub fn push(&mut self, transition: Transition) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(transition);
        } else {
            self.buffer[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.buffer.split_at(if self.buffer.len() < self.capacity { 0 } else { self.next });
        older.iter().chain(newer)
    }

    /// `batch` distinct transitions drawn uniformly, or `None` when fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if self.buffer.len() < batch {
            return None;
        }
        Some(index::sample(rng, self.buffer.len(), batch).iter().map(|i| &self.buffer[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSchedule {
    /// Straight line from `start` to `end` over the first `decay_fraction` of
    /// the episodes, then flat.
    Linear { start: f64, end: f64, decay_fraction: f64 },
    /// Subtract `step` after every episode until `end` is reached.
    Step { start: f64, end: f64, step: f64 },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::Linear {
            start: 0.95,
            end: 0.05,
            decay_fraction: 0.2,
        }
    }
}

impl EpsilonSchedule {
    /// Exploration rate for the zero-based `episode` of `total`.
    pub fn value(&self, episode: usize, total: usize) -> f64 {
        match *self {
            Self::Linear {
                start,
                end,
                decay_fraction,
            } => {
                let span = decay_fraction * total as f64;
                let progress = if span <= 0.0 { 1.0 } else { (episode as f64 / span).min(1.0) };
                start + (end - start) * progress
            }
            Self::Step { start, end, step } => (start - step * episode as f64).max(end),
        }
    }

    fn validate(&self) -> Result<()> {
        let (start, end, third, name) = match *self {
            Self::Linear {
                start,
                end,
                decay_fraction,
            } => (start, end, decay_fraction, "decay_fraction"),
            Self::Step { start, end, step } => (start, end, step, "step"),
        };
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || end > start {
            return Err(Error::InvalidConfig(format!(
                "epsilon must satisfy 0 <= end <= start <= 1, got start {start} end {end}"
            )));
        }
        if !(third.is_finite() && third >= 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon {name} must be non-negative, got {third}")));
        }
        Ok(())
    }
}

/// Per-step cost added back to every reward inside Bellman targets.
///
/// Every step of an episode gets the same shift and the episode length is
/// fixed by the scenario, so the greedy policy is unchanged while the
/// regression targets shrink from whole-week costs to deviations from a
/// typical per-step cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostBaseline {
    None,
    Fixed { value: f64 },
    /// Mean per-container optimal cost over the training weeks seen so far.
    OptimalMean,
    /// Mean per-step cost the agent itself has incurred so far.
    ObservedMean,
}

/// Running sums behind [`CostBaseline`].
#[derive(Debug, Clone, Copy, Default)]
struct BaselineTracker {
    optimal_cost: f64,
    optimal_steps: f64,
    observed_cost: f64,
    observed_steps: f64,
}

impl BaselineTracker {
    fn value(&self, mode: CostBaseline) -> f64 {
        let ratio = |c: f64, n: f64| if n > 0.0 { c / n } else { 0.0 };
        match mode {
            CostBaseline::None => 0.0,
            CostBaseline::Fixed { value } => value,
            CostBaseline::OptimalMean => ratio(self.optimal_cost, self.optimal_steps),
            CostBaseline::ObservedMean => ratio(self.observed_cost, self.observed_steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub episodes: usize,
    /// Environment steps between minibatch updates.
    pub update_interval: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub heuristic: SelectionHeuristic,
    /// Scenario source; its `seed` is replaced by a per-episode derived seed.
    pub generator: GeneratorConfig,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    /// When set, the learning rate falls linearly from `learning_rate` at the
    /// first episode to this value at the last.
    pub final_learning_rate: Option<f64>,
    pub hidden_layers: Vec<usize>,
    /// Rewards are multiplied by this before entering Bellman targets, so the
    /// network regresses on returns of order one instead of thousands.
    pub reward_scale: f64,
    pub cost_baseline: CostBaseline,
    /// Bootstrap from a frozen copy re-synced every this many updates; `None`
    /// bootstraps from the live network.
    pub target_sync: Option<u64>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 4000,
            update_interval: 20,
            batch_size: 10,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            heuristic: SelectionHeuristic::Fifo,
            generator: GeneratorConfig::default(),
            replay_capacity: 10_000,
            learning_rate: 0.0005,
            final_learning_rate: Some(0.00002),
            hidden_layers: vec![100, 100],
            reward_scale: 0.002,
            cost_baseline: CostBaseline::OptimalMean,
            target_sync: Some(100),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.update_interval == 0 || self.batch_size == 0 {
            return bad("update_interval and batch_size must be positive".into());
        }
        if self.replay_capacity < self.batch_size {
            return bad(format!(
                "replay_capacity {} is smaller than batch_size {}",
                self.replay_capacity, self.batch_size
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad(format!("reward_scale must be positive, got {}", self.reward_scale));
        }
        if let Some(lr) = self.final_learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("final_learning_rate must be positive, got {lr}"));
            }
        }
        if let CostBaseline::Fixed { value } = self.cost_baseline {
            if !value.is_finite() {
                return bad(format!("cost baseline must be finite, got {value}"));
            }
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.target_sync == Some(0) {
            return bad("target_sync must be positive when set".into());
        }
        self.epsilon.validate()?;
        self.generator.validate()
    }

    /// Layer widths of the Q-network, input and output included.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(FEATURE_LEN)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(NUM_ACTIONS))
            .collect()
    }

    /// Scenario of the zero-based training `episode`.
    pub fn episode_scenario(&self, episode: usize) -> Result<WeekScenario> {
        generate_week(&self.generator.with_seed(derive_seed(self.seed, streams::TRAINING, episode as u64)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub total_reward: Money,
    pub mean_reward: f64,
    /// Population variance of the per-step rewards.
    pub reward_variance: f64,
    pub episode_cost: Money,
    pub optimal_cost: Money,
    pub cost_gap: Money,
    pub epsilon: f64,
    pub updates: usize,
    /// Mean pre-update minibatch loss, 0 when no update ran.
    pub mean_loss: f64,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub network: QNetwork,
    pub adam: Adam,
    pub stats: Vec<EpisodeStats>,
    /// Actions checked against the mask during training; every one was eligible.
    pub actions_checked: u64,
}

impl TrainedAgent {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.network.clone(), self.adam.clone())
    }
}

/// Index of the largest eligible output; ties go to the lowest action id.
fn masked_argmax(q: &[f64], mask: ActionMask) -> ActionId {
    let mut best: Option<(ActionId, f64)> = None;
    for a in mask.iter() {
        let v = q[a.index()];
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.expect("mask always contains the truck").0
}

fn check_network(net: &QNetwork) -> Result<()> {
    if net.input_len() != FEATURE_LEN {
        return Err(Error::Dimension {
            expected: FEATURE_LEN,
            got: net.input_len(),
        });
    }
    if net.output_len() != NUM_ACTIONS {
        return Err(Error::Dimension {
            expected: NUM_ACTIONS,
            got: net.output_len(),
        });
    }
    Ok(())
}

/// Epsilon-greedy choice among the eligible actions of `state`.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &PlanState,
    eligible: ActionMask,
    epsilon: f64,
    rng: &mut R,
) -> Result<ActionId> {
    if rng.gen::<f64>() < epsilon {
        let k = rng.gen_range(0..eligible.len());
        return Ok(eligible.iter().nth(k).expect("k < len"));
    }
    let q = net.forward(&state.features())?;
    Ok(masked_argmax(&q, eligible))
}

/// `r` for terminal transitions, else `r + gamma * max Q(s', a')` over the
/// actions eligible in `s'`.
pub fn bellman_target(transition: &Transition, net: &QNetwork, gamma: f64) -> Result<f64> {
    scaled_bellman_target(transition, net, gamma, 1.0, 0.0)
}

/// [`bellman_target`] on the transformed reward `(r + cost_baseline) * reward_scale`.
pub fn scaled_bellman_target(
    transition: &Transition,
    net: &QNetwork,
    gamma: f64,
    reward_scale: f64,
    cost_baseline: f64,
) -> Result<f64> {
    let r = (transition.reward as f64 + cost_baseline) * reward_scale;
    match &transition.next_state {
        None => Ok(r),
        Some(next) => {
            let q = net.forward(&next.features())?;
            let best = next.mask().iter().map(|a| q[a.index()]).fold(f64::NEG_INFINITY, f64::max);
            Ok(r + gamma * best)
        }
    }
}

fn reward_moments(rewards: &[Money]) -> (f64, f64) {
    if rewards.is_empty() {
        return (0.0, 0.0);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().map(|&r| r as f64).sum::<f64>() / n;
    let var = rewards.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Runs the full training loop: one fresh scenario per episode, a decision
/// per container, and a minibatch update every `update_interval` steps.
pub fn train(config: &TrainingConfig) -> Result<TrainedAgent> {
    config.validate()?;
    let mut net_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::NETWORK, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::AGENT, 0));
    let mut network = QNetwork::new(&config.layer_sizes(), &mut net_rng);
    let mut adam = Adam::new(&network, config.learning_rate);
    let mut target = config.target_sync.map(|_| network.clone());
    let mut replay = ReplayMemory::new(config.replay_capacity);

    let mut stats = Vec::with_capacity(config.episodes);
    let mut steps: u64 = 0;
    let mut updates: u64 = 0;
    let mut actions_checked: u64 = 0;
    let mut tracker = BaselineTracker::default();

    // Scenarios and their optima are independent of the learner, so they are
    // produced in parallel ahead of each block of episodes.
    const BLOCK: usize = 64;
    for block_start in (0..config.episodes).step_by(BLOCK) {
        let block_end = (block_start + BLOCK).min(config.episodes);
        let weeks: Vec<(WeekScenario, Money)> = (block_start..block_end)
            .into_par_iter()
            .map(|ep| {
                let s = config.episode_scenario(ep)?;
                let opt = solve_optimal(&s).cost;
                Ok((s, opt))
            })
            .collect::<Result<_>>()?;

        for (offset, (scenario, optimal_cost)) in weeks.into_iter().enumerate() {
            let episode = block_start + offset;
            let epsilon = config.epsilon.value(episode, config.episodes);
            if let Some(end) = config.final_learning_rate {
                let progress = if config.episodes > 1 {
                    episode as f64 / (config.episodes - 1) as f64
                } else {
                    0.0
                };
                adam.learning_rate = config.learning_rate + (end - config.learning_rate) * progress;
            }
            tracker.optimal_cost += optimal_cost as f64;
            tracker.optimal_steps += scenario.containers.len() as f64;
            let mut env = PlanningEnv::reset(&scenario, config.heuristic);
            let mut rewards = Vec::with_capacity(env.len());
            let mut episode_updates = 0;
            let mut loss_sum = 0.0;

            while let Some(state) = env.state() {
                let mask = state.mask();
                let action = select_action(&network, &state, mask, epsilon, &mut rng)?;
                actions_checked += 1;
                if !mask.contains(action) {
                    return Err(Error::MaskedAction { action: action.index() });
                }
                let transition = env.step(action)?;
                rewards.push(transition.reward);
                tracker.observed_cost -= transition.reward as f64;
                tracker.observed_steps += 1.0;
                replay.push(transition);
                steps += 1;

                if steps % config.update_interval as u64 != 0 {
                    continue;
                }
                let Some(batch) = replay.sample(config.batch_size, &mut rng) else {
                    continue;
                };
                let bootstrap = target.as_ref().unwrap_or(&network);
                let baseline = tracker.value(config.cost_baseline);
                let mut inputs = Vec::with_capacity(batch.len());
                let mut targets = Vec::with_capacity(batch.len());
                for t in batch {
                    inputs.push(t.state.features());
                    targets.push(ActionTarget {
                        action: t.action.index(),
                        value: scaled_bellman_target(t, bootstrap, config.gamma, config.reward_scale, baseline)?,
                    });
                }
                let loss = train_batch(&mut network, &mut adam, &inputs, &targets).map_err(|e| match e {
                    Error::NonFinite { context } => Error::NonFinite {
                        context: format!("episode {episode}, step {}: {context}", rewards.len()),
                    },
                    other => other,
                })?;
                loss_sum += loss;
                episode_updates += 1;
                updates += 1;
                if let (Some(every), Some(t)) = (config.target_sync, target.as_mut()) {
                    if updates % every == 0 {
                        t.clone_from(&network);
                    }
                }
            }

            let episode_cost = -rewards.iter().sum::<Money>();
            let (mean_reward, reward_variance) = reward_moments(&rewards);
            debug_assert!(episode_cost >= optimal_cost, "optimum is a lower bound");
            stats.push(EpisodeStats {
                episode,
                total_reward: -episode_cost,
                mean_reward,
                reward_variance,
                episode_cost,
                optimal_cost,
                cost_gap: episode_cost - optimal_cost,
                epsilon,
                updates: episode_updates,
                mean_loss: if episode_updates == 0 {
                    0.0
                } else {
                    loss_sum / episode_updates as f64
                },
            });
        }
    }

    Ok(TrainedAgent {
        network,
        adam,
        stats,
        actions_checked,
    })
}

/// Greedy rollout of `net` over `scenario`.
pub fn act_greedy(net: &QNetwork, scenario: &WeekScenario, heuristic: SelectionHeuristic) -> Result<Assignment> {
    check_network(net)?;
    let mut env = PlanningEnv::reset(scenario, heuristic);
    while let Some(state) = env.state() {
        let q = net.forward(&state.features())?;
        env.step(masked_argmax(&q, state.mask()))?;
    }
    Ok(env.into_assignment())
}

#[derive(Serialize)]
struct StatsRow {
    episode: usize,
    mean_reward: f64,
    reward_variance: f64,
    episode_cost: Money,
    optimal_cost: Money,
    cost_gap: Money,
    epsilon: f64,
}

/// Per-episode training log as CSV.
pub fn write_stats_csv<W: Write>(stats: &[EpisodeStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(StatsRow {
            episode: s.episode,
            mean_reward: s.mean_reward,
            reward_variance: s.reward_variance,
            episode_cost: s.episode_cost,
            optimal_cost: s.optimal_cost,
            cost_gap: s.cost_gap,
            epsilon: s.epsilon,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::scenario_with;
    use crate::domain::{schedule_index, NUM_SCHEDULES};
    use crate::scenario::CapacitySetting;

    fn state(caps: [u32; NUM_SCHEDULES], e: u8, l: u8) -> PlanState {
        PlanState {
            residual_caps: caps,
            next_e: e,
            next_l: l,
        }
    }

    fn transition(reward: Money, next: Option<PlanState>) -> Transition {
        Transition {
            state: state([1; NUM_SCHEDULES], 1, 7),
            action: ActionId::TRUCK,
            reward,
            next_state: next,
        }
    }

    /// Single linear layer whose output `a` equals `values[a]` for any input.
    fn constant_net(values: &[f64; NUM_ACTIONS]) -> QNetwork {
        let mut net = QNetwork::zeros(&[FEATURE_LEN, NUM_ACTIONS]);
        net.layers_mut()[0].bias_mut().copy_from_slice(values);
        net
    }

    #[test]
    fn replay_evicts_oldest_first() {
        let mut mem = ReplayMemory::new(3);
        for r in 0..5 {
            mem.push(transition(-r, None));
        }
        assert_eq!(mem.len(), 3);
        assert_eq!(mem.inserted(), 5);
        let kept: Vec<Money> = mem.iter().map(|t| t.reward).collect();
        assert_eq!(kept, vec![-2, -3, -4]);
    }

    #[test]
    fn replay_sampling_is_without_replacement() {
        let mut mem = ReplayMemory::new(50);
        assert!(mem.sample(1, &mut ChaCha8Rng::seed_from_u64(0)).is_none());
        for r in 0..10 {
            mem.push(transition(-r, None));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mem.sample(11, &mut rng).is_none());
        for _ in 0..100 {
            let mut got: Vec<Money> = mem.sample(10, &mut rng).unwrap().iter().map(|t| t.reward).collect();
            got.sort_unstable();
            assert_eq!(got, (-9..=0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn epsilon_linear_schedule() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0, 100), 0.95);
        assert!((s.value(10, 100) - 0.5).abs() < 1e-12);
        assert!((s.value(20, 100) - 0.05).abs() < 1e-12);
        assert!((s.value(99, 100) - 0.05).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for ep in 0..4000 {
            let v = s.value(ep, 4000);
            assert!(v <= prev && (0.05 - 1e-12..=0.95).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn epsilon_step_schedule_hits_floor_after_nine_episodes() {
        let s = EpsilonSchedule::Step {
            start: 0.95,
            end: 0.05,
            step: 0.1,
        };
        assert!((s.value(8, 4000) - 0.15).abs() < 1e-12);
        assert_eq!(s.value(9, 4000), 0.05);
        assert_eq!(s.value(3000, 4000), 0.05);
    }

    #[test]
    fn bellman_terminal() {
        let net = constant_net(&[7.0; NUM_ACTIONS]);
        assert_eq!(bellman_target(&transition(-500, None), &net, 0.99).unwrap(), -500.0);
    }

    #[test]
    fn bellman_zero_discount() {
        let net = constant_net(&[-3.0; NUM_ACTIONS]);
        let t = transition(-15, Some(state([2; NUM_SCHEDULES], 2, 5)));
        assert_eq!(bellman_target(&t, &net, 0.0).unwrap(), -15.0);
    }

    #[test]
    fn bellman_masks_next_state() {
        // Only schedule (3,4) and the truck are eligible in the next state.
        let mut caps = [0; NUM_SCHEDULES];
        let open = schedule_index(3, 4).unwrap();
        caps[open] = 1;
        let mut q = [50.0; NUM_ACTIONS];
        q[open] = -100.0;
        q[ActionId::TRUCK.index()] = -250.0;
        let net = constant_net(&q);
        let t = transition(-15, Some(state(caps, 3, 5)));
        let expected = -15.0 + 0.99 * -100.0;
        assert_eq!(expected, -114.0);
        assert!((bellman_target(&t, &net, 0.99).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn full_exploration_is_uniform_over_eligible() {
        let mut caps = [0; NUM_SCHEDULES];
        for (d, a) in [(2, 3), (2, 4), (4, 4)] {
            caps[schedule_index(d, a).unwrap()] = 2;
        }
        caps[schedule_index(1, 2).unwrap()] = 5;
        let s = state(caps, 2, 5);
        let mask = s.mask();
        assert_eq!(mask.len(), 4);
        let net = QNetwork::zeros(&[FEATURE_LEN, NUM_ACTIONS]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0u32; NUM_ACTIONS];
        let trials = 10_000;
        for _ in 0..trials {
            let a = select_action(&net, &s, mask, 1.0, &mut rng).unwrap();
            assert!(mask.contains(a));
            counts[a.index()] += 1;
        }
        let p = 1.0 / mask.len() as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for a in mask.iter() {
            let dev = (f64::from(counts[a.index()]) - trials as f64 * p).abs();
            assert!(dev < 3.0 * sigma, "action {a} count {}", counts[a.index()]);
        }
    }

    #[test]
    fn greedy_ignores_masked_maximum() {
        let mut caps = [0; NUM_SCHEDULES];
        let ok = schedule_index(5, 6).unwrap();
        caps[ok] = 1;
        let blocked = schedule_index(1, 1).unwrap();
        caps[blocked] = 1;
        let mut q = [0.0; NUM_ACTIONS];
        q[blocked] = 1000.0;
        q[ok] = -1.0;
        q[ActionId::TRUCK.index()] = -2.0;
        let net = constant_net(&q);
        let s = state(caps, 3, 7);
        let a = select_action(&net, &s, s.mask(), 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a.index(), ok);
    }

    #[test]
    fn truck_only_mask_always_trucks() {
        let s = state([0; NUM_SCHEDULES], 4, 6);
        let mut q = [100.0; NUM_ACTIONS];
        q[ActionId::TRUCK.index()] = -1e9;
        let net = constant_net(&q);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for eps in [0.0, 0.5, 1.0] {
            for _ in 0..50 {
                assert_eq!(select_action(&net, &s, s.mask(), eps, &mut rng).unwrap(), ActionId::TRUCK);
            }
        }
    }

    #[test]
    fn zero_network_rollout_takes_lowest_eligible_id() {
        let caps = [1; NUM_SCHEDULES];
        let s = scenario_with(caps, &[(2, 7), (2, 7), (6, 6)]);
        let net = QNetwork::zeros(&[FEATURE_LEN, 8, NUM_ACTIONS]);
        let a = act_greedy(&net, &s, SelectionHeuristic::Fifo).unwrap();
        assert_eq!(a, act_greedy(&net, &s, SelectionHeuristic::Fifo).unwrap());
        // Lowest eligible ids for e = 2 are (2,2) then (2,3).
        assert_eq!(a.get(0), Some(crate::domain::Vehicle::Train(schedule_index(2, 2).unwrap())));
        assert_eq!(a.get(1), Some(crate::domain::Vehicle::Train(schedule_index(2, 3).unwrap())));
        assert_eq!(a.get(2), Some(crate::domain::Vehicle::Train(schedule_index(6, 6).unwrap())));
        s.check(&a).unwrap();
    }

    #[test]
    fn random_network_rollouts_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (i, setting) in CapacitySetting::ALL.into_iter().enumerate() {
            let net = QNetwork::new(&[FEATURE_LEN, 16, NUM_ACTIONS], &mut rng);
            let s = generate_week(&GeneratorConfig {
                capacity: setting,
                seed: i as u64,
                ..GeneratorConfig::default()
            })
            .unwrap();
            for h in [SelectionHeuristic::Fifo, SelectionHeuristic::Edf] {
                s.check(&act_greedy(&net, &s, h).unwrap()).unwrap();
            }
        }
    }

    fn small_config(episodes: usize) -> TrainingConfig {
        TrainingConfig {
            episodes,
            hidden_layers: vec![16],
            seed: 5,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn five_updates_per_hundred_step_episode() {
        let out = train(&small_config(3)).unwrap();
        assert_eq!(out.stats.len(), 3);
        assert_eq!(out.actions_checked, 300);
        for s in &out.stats {
            assert_eq!(s.updates, 5);
            assert!(s.cost_gap >= 0);
            assert_eq!(s.cost_gap, s.episode_cost - s.optimal_cost);
        }
    }

    #[test]
    fn update_skipped_until_replay_fills_a_batch() {
        let mut cfg = small_config(1);
        cfg.generator.containers_per_week = 30;
        cfg.update_interval = 5;
        cfg.batch_size = 12;
        // Steps 5 and 10 find fewer than 12 transitions; 15..=30 update.
        assert_eq!(train(&cfg).unwrap().stats[0].updates, 4);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_config(4);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.network, b.network);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_stats_csv(&a.stats, &mut ca).unwrap();
        write_stats_csv(&b.stats, &mut cb).unwrap();
        assert_eq!(ca, cb);
        let header = String::from_utf8(ca).unwrap();
        assert!(header.starts_with("episode,mean_reward,reward_variance,episode_cost,optimal_cost,cost_gap,epsilon\n"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainingConfig::default();
        for cfg in [
            TrainingConfig { gamma: 1.5, ..base.clone() },
            TrainingConfig { batch_size: 0, ..base.clone() },
            TrainingConfig { replay_capacity: 5, ..base.clone() },
            TrainingConfig { learning_rate: 0.0, ..base.clone() },
            TrainingConfig { target_sync: Some(0), ..base.clone() },
            TrainingConfig {
                epsilon: EpsilonSchedule::Linear { start: 0.1, end: 0.5, decay_fraction: 0.5 },
                ..base.clone()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }
}
