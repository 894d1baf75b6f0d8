//! Intermodal container planning: a weekly train/truck assignment model, an
//! exact min-cost-flow solver, greedy and rolling-horizon baselines, and a
//! deep Q-learning planner that assigns containers one at a time.

pub mod agent;
pub mod baselines;
pub mod domain;
pub mod env;
pub mod error;
pub mod exact;
pub mod flow;
pub mod harness;
pub mod neural;
pub mod scenario;

pub use domain::{
    schedule_days, schedule_index, schedule_pairs, total_cost, utilization, Assignment, Constraint,
    ConstraintViolation, Container, CostModel, Money, TrainSchedule, Utilization, Vehicle, WeekScenario,
    DAYS, MAX_CAPACITY, NUM_ACTIONS, NUM_SCHEDULES,
};
pub use env::{ActionId, ActionMask, PlanState, PlanningEnv, SelectionHeuristic, Transition, FEATURE_LEN};
pub use error::{Error, Result};
pub use exact::{brute_force_optimal, solve_optimal, OptimalPlan};
pub use scenario::{derive_seed, generate_week, CapacitySetting, DueDayRule, GeneratorConfig, TrainTariff};
