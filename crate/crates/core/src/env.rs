//! Sequential planning environment: one container is decided per step.
//!
//! The state holds the residual slots of all 28 schedules and the next
//! container's `(earliest, due)` days. Actions `0..28` board the schedule with
//! that id, action `28` sends the container by truck. The reward is the
//! negative cost of the chosen vehicle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{
    schedule_days, Assignment, Container, Money, Vehicle, WeekScenario, DAYS, MAX_CAPACITY, NUM_ACTIONS,
    NUM_SCHEDULES,
};
use crate::error::{Error, Result};

/// Width of the network input: 28 capacities plus two day features.
pub const FEATURE_LEN: usize = NUM_SCHEDULES + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(u8);

impl ActionId {
    pub const TRUCK: ActionId = ActionId(NUM_SCHEDULES as u8);

    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_ACTIONS).then(|| ActionId(index as u8))
    }

    pub fn train(schedule: usize) -> Option<Self> {
        (schedule < NUM_SCHEDULES).then(|| ActionId(schedule as u8))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn vehicle(self) -> Vehicle {
        if self == Self::TRUCK {
            Vehicle::Truck
        } else {
            Vehicle::Train(self.index())
        }
    }

    pub fn from_vehicle(vehicle: Vehicle) -> Option<Self> {
        match vehicle {
            Vehicle::Train(t) => Self::train(t),
            Vehicle::Truck => Some(Self::TRUCK),
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.vehicle().fmt(f)
    }
}

/// Set of eligible actions. Bit `i` is action `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionMask(u32);

impl ActionMask {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn insert(&mut self, action: ActionId) {
        self.0 |= 1 << action.index();
    }

    pub fn contains(self, action: ActionId) -> bool {
        self.0 & (1 << action.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Eligible actions in ascending id order.
    pub fn iter(self) -> impl Iterator<Item = ActionId> {
        (0..NUM_ACTIONS).filter(move |i| self.0 & (1 << i) != 0).map(|i| ActionId(i as u8))
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

impl FromIterator<ActionId> for ActionMask {
    fn from_iter<I: IntoIterator<Item = ActionId>>(iter: I) -> Self {
        let mut m = Self::empty();
        for a in iter {
            m.insert(a);
        }
        m
    }
}

/// Order in which pending containers are presented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionHeuristic {
    /// Earliest availability first; ties by due day, then id.
    Fifo,
    /// Earliest due day first; ties by earliest day, then id.
    Edf,
    /// Booking order, i.e. ascending container id.
    Booking,
}

impl SelectionHeuristic {
    /// Containers sorted into decision order.
    pub fn order(self, containers: &[Container]) -> Vec<Container> {
        let mut out = containers.to_vec();
        match self {
            Self::Fifo => out.sort_by_key(|c| (c.earliest_day, c.due_day, c.id)),
            Self::Edf => out.sort_by_key(|c| (c.due_day, c.earliest_day, c.id)),
            Self::Booking => out.sort_by_key(|c| c.id),
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fifo => "fifo",
            Self::Edf => "edf",
            Self::Booking => "booking",
        }
    }
}

impl fmt::Display for SelectionHeuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionHeuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Self::Fifo),
            "edf" => Ok(Self::Edf),
            "booking" => Ok(Self::Booking),
            _ => Err(Error::InvalidConfig(format!(
                "unknown heuristic '{s}' (expected fifo, edf or booking)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanState {
    pub residual_caps: [u32; NUM_SCHEDULES],
    pub next_e: u8,
    pub next_l: u8,
}

impl PlanState {
    /// Eligible actions: trains departing no earlier than `next_e`, arriving
    /// no later than `next_l`, with a free slot; the truck is always eligible.
    pub fn mask(&self) -> ActionMask {
        let mut m = ActionMask::empty();
        for (t, &cap) in self.residual_caps.iter().enumerate() {
            let (d, a) = schedule_days(t).expect("schedule id in range");
            if d >= self.next_e && a <= self.next_l && cap >= 1 {
                m.insert(ActionId(t as u8));
            }
        }
        m.insert(ActionId::TRUCK);
        m
    }

    /// Normalized network input: capacities over 6, days over 7.
    pub fn features(&self) -> [f64; FEATURE_LEN] {
        let mut f = [0.0; FEATURE_LEN];
        for (slot, &cap) in f.iter_mut().zip(&self.residual_caps) {
            *slot = f64::from(cap) / f64::from(MAX_CAPACITY);
        }
        f[NUM_SCHEDULES] = f64::from(self.next_e) / f64::from(DAYS);
        f[NUM_SCHEDULES + 1] = f64::from(self.next_l) / f64::from(DAYS);
        f
    }
}

/// Free-function form of [`PlanState::mask`].
pub fn mask(state: &PlanState) -> ActionMask {
    state.mask()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: PlanState,
    pub action: ActionId,
    /// Negative cost of the chosen vehicle.
    pub reward: Money,
    /// `None` once every container has been decided.
    pub next_state: Option<PlanState>,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next_state.is_none()
    }
}

/// Single-owner episode over one scenario.
#[derive(Debug, Clone)]
pub struct PlanningEnv {
    order: Vec<Container>,
    cursor: usize,
    initial_caps: [u32; NUM_SCHEDULES],
    residual_caps: [u32; NUM_SCHEDULES],
    train_costs: [Money; NUM_SCHEDULES],
    truck_cost: Money,
    assignment: Assignment,
}

impl PlanningEnv {
    /// Starts an episode: full capacities, containers queued by `heuristic`.
    pub fn reset(scenario: &WeekScenario, heuristic: SelectionHeuristic) -> Self {
        let caps = scenario.capacities();
        let mut train_costs = [0; NUM_SCHEDULES];
        for s in &scenario.schedules {
            train_costs[s.id] = s.cost_per_container;
        }
        Self {
            order: heuristic.order(&scenario.containers),
            cursor: 0,
            initial_caps: caps,
            residual_caps: caps,
            train_costs,
            truck_cost: scenario.cost_model.truck_cost,
            assignment: Assignment::new(),
        }
    }

    /// Current state, or `None` when the episode is over.
    pub fn state(&self) -> Option<PlanState> {
        self.order.get(self.cursor).map(|c| PlanState {
            residual_caps: self.residual_caps,
            next_e: c.earliest_day,
            next_l: c.due_day,
        })
    }

    pub fn current_container(&self) -> Option<&Container> {
        self.order.get(self.cursor)
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.order.len()
    }

    pub fn mask(&self) -> Option<ActionMask> {
        self.state().map(|s| s.mask())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn initial_caps(&self) -> &[u32; NUM_SCHEDULES] {
        &self.initial_caps
    }

    pub fn residual_caps(&self) -> &[u32; NUM_SCHEDULES] {
        &self.residual_caps
    }

    pub fn action_cost(&self, action: ActionId) -> Money {
        match action.vehicle() {
            Vehicle::Train(t) => self.train_costs[t],
            Vehicle::Truck => self.truck_cost,
        }
    }

    /// Applies `action` to the current container. Masked actions are rejected.
    pub fn step(&mut self, action: ActionId) -> Result<Transition> {
        let state = self.state().ok_or(Error::EpisodeFinished)?;
        if !state.mask().contains(action) {
            return Err(Error::MaskedAction { action: action.index() });
        }
        let container = self.order[self.cursor];
        let vehicle = action.vehicle();
        if let Vehicle::Train(t) = vehicle {
            self.residual_caps[t] -= 1;
        }
        self.assignment.assign(container.id, vehicle);
        self.cursor += 1;
        Ok(Transition {
            state,
            action,
            reward: -self.action_cost(action),
            next_state: self.state(),
        })
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn into_assignment(self) -> Assignment {
        self.assignment
    }
}

/// Total cost of a complete episode, i.e. the negated reward sum.
pub fn episode_cost(transitions: &[Transition]) -> Result<Money> {
    let terminal_at = transitions.iter().position(Transition::is_terminal);
    match terminal_at {
        None if transitions.is_empty() => Ok(0),
        Some(i) if i + 1 == transitions.len() => Ok(-transitions.iter().map(|t| t.reward).sum::<Money>()),
        _ => Err(Error::EpisodeIncomplete {
            decided: transitions.len(),
        }),
    }
}
