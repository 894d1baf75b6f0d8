//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmplan_core::neural::QNetwork;
use mmplan_core::{generate_week, GeneratorConfig, PlanState, WeekScenario, FEATURE_LEN, NUM_ACTIONS};

/// A default-sized week with random capacities.
pub fn fixture_week(seed: u64) -> WeekScenario {
    generate_week(&GeneratorConfig::default().with_seed(seed)).expect("default generator config is valid")
}

/// Randomly initialized network of the default shape.
pub fn fixture_network(seed: u64) -> QNetwork {
    QNetwork::new(&[FEATURE_LEN, 100, 100, NUM_ACTIONS], &mut ChaCha8Rng::seed_from_u64(seed))
}

/// The opening state of `week` under FIFO order.
pub fn opening_state(week: &WeekScenario) -> PlanState {
    mmplan_core::PlanningEnv::reset(week, mmplan_core::SelectionHeuristic::Fifo)
        .state()
        .expect("fixture week has containers")
}
