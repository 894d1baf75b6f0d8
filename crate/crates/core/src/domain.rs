//! Core domain types shared by every planner: train schedules, containers,
//! the cost model, assignments and the weekly scenario.
//!
//! Days are 1-based (`1..=7`). Money is integral so every cost comparison is
//! exact.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Number of days in the planning horizon.
pub const DAYS: u8 = 7;
/// Number of (departure, arrival) schedule pairs in a week.
pub const NUM_SCHEDULES: usize = 28;
/// Trains plus the truck option.
pub const NUM_ACTIONS: usize = NUM_SCHEDULES + 1;
/// Largest per-schedule capacity any generator setting produces.
pub const MAX_CAPACITY: u32 = 6;

pub type Money = i64;

/// All `(depart_day, arrive_day)` pairs with `1 <= d <= a <= 7`, in schedule id
/// order: `(1,1), (1,2), .., (1,7), (2,2), .., (7,7)`.
pub fn schedule_pairs() -> impl Iterator<Item = (u8, u8)> {
    (1..=DAYS).flat_map(|d| (d..=DAYS).map(move |a| (d, a)))
}

/// Schedule id of a `(depart_day, arrive_day)` pair.
pub fn schedule_index(depart_day: u8, arrive_day: u8) -> Option<usize> {
    if !(1..=DAYS).contains(&depart_day) || !(depart_day..=DAYS).contains(&arrive_day) {
        return None;
    }
    let d = usize::from(depart_day - 1);
    // Rows for earlier departure days hold 7, 6, .. entries.
    let before: usize = (0..d).map(|k| usize::from(DAYS) - k).sum();
    Some(before + usize::from(arrive_day - depart_day))
}

/// `(depart_day, arrive_day)` of a schedule id.
pub fn schedule_days(id: usize) -> Option<(u8, u8)> {
    schedule_pairs().nth(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub id: usize,
    pub depart_day: u8,
    pub arrive_day: u8,
    pub capacity: u32,
    pub cost_per_container: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Container {
    pub id: usize,
    pub earliest_day: u8,
    pub due_day: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost of moving one container by truck. Trucks are uncapacitated.
    pub truck_cost: Money,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { truck_cost: 500 }
    }
}

/// The vehicle a container is placed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vehicle {
    Train(usize),
    Truck,
}

impl fmt::Display for Vehicle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vehicle::Train(t) => write!(f, "train {t}"),
            Vehicle::Truck => f.write_str("truck"),
        }
    }
}

/// A container-id to vehicle mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    vehicles: BTreeMap<usize, Vehicle>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places a container, returning the previous vehicle if it was already placed.
    pub fn assign(&mut self, container: usize, vehicle: Vehicle) -> Option<Vehicle> {
        self.vehicles.insert(container, vehicle)
    }

    pub fn get(&self, container: usize) -> Option<Vehicle> {
        self.vehicles.get(&container).copied()
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Vehicle)> + '_ {
        self.vehicles.iter().map(|(&c, &v)| (c, v))
    }

    pub fn trucks(&self) -> usize {
        self.vehicles.values().filter(|v| **v == Vehicle::Truck).count()
    }

    /// Containers placed on each schedule, indexed by schedule id.
    pub fn train_loads(&self) -> [u32; NUM_SCHEDULES] {
        let mut loads = [0u32; NUM_SCHEDULES];
        for v in self.vehicles.values() {
            if let Vehicle::Train(t) = v {
                if *t < NUM_SCHEDULES {
                    loads[*t] += 1;
                }
            }
        }
        loads
    }
}

impl FromIterator<(usize, Vehicle)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (usize, Vehicle)>>(iter: I) -> Self {
        Self {
            vehicles: iter.into_iter().collect(),
        }
    }
}

/// The four feasibility rules an assignment must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// Every container is placed on exactly one train or truck.
    AssignedOnce,
    /// A train departs on or after the container's earliest day.
    DepartsAfterAvailable,
    /// A train arrives no later than the container's due day.
    ArrivesByDueDay,
    /// A schedule never carries more containers than its capacity.
    TrainCapacity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintViolation {
    #[error("container {container} has no vehicle")]
    Unassigned { container: usize },
    #[error("assignment names container {container}, which is not in the scenario")]
    UnknownContainer { container: usize },
    #[error("container {container} is placed on unknown schedule {schedule}")]
    UnknownSchedule { container: usize, schedule: usize },
    #[error("container {container} (earliest day {earliest_day}) cannot board schedule {schedule} departing day {depart_day}")]
    DepartsBeforeAvailable {
        container: usize,
        schedule: usize,
        earliest_day: u8,
        depart_day: u8,
    },
    #[error("container {container} (due day {due_day}) would arrive late on schedule {schedule} arriving day {arrive_day}")]
    ArrivesAfterDue {
        container: usize,
        schedule: usize,
        due_day: u8,
        arrive_day: u8,
    },
    #[error("schedule {schedule} carries {assigned} containers but has capacity {capacity}")]
    CapacityExceeded {
        schedule: usize,
        assigned: u32,
        capacity: u32,
    },
}

impl ConstraintViolation {
    pub fn constraint(&self) -> Constraint {
        match self {
            Self::Unassigned { .. } | Self::UnknownContainer { .. } | Self::UnknownSchedule { .. } => {
                Constraint::AssignedOnce
            }
            Self::DepartsBeforeAvailable { .. } => Constraint::DepartsAfterAvailable,
            Self::ArrivesAfterDue { .. } => Constraint::ArrivesByDueDay,
            Self::CapacityExceeded { .. } => Constraint::TrainCapacity,
        }
    }
}

/// One week of planning input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekScenario {
    pub schedules: Vec<TrainSchedule>,
    pub containers: Vec<Container>,
    pub cost_model: CostModel,
    pub seed: u64,
}

impl WeekScenario {
    /// Builds the 28 weekly schedules from per-schedule capacities and costs.
    pub fn from_parts(
        capacities: [u32; NUM_SCHEDULES],
        costs: [Money; NUM_SCHEDULES],
        containers: Vec<Container>,
        cost_model: CostModel,
        seed: u64,
    ) -> Self {
        let schedules = schedule_pairs()
            .enumerate()
            .map(|(id, (depart_day, arrive_day))| TrainSchedule {
                id,
                depart_day,
                arrive_day,
                capacity: capacities[id],
                cost_per_container: costs[id],
            })
            .collect();
        Self {
            schedules,
            containers,
            cost_model,
            seed,
        }
    }

    pub fn capacities(&self) -> [u32; NUM_SCHEDULES] {
        let mut caps = [0; NUM_SCHEDULES];
        for s in &self.schedules {
            caps[s.id] = s.capacity;
        }
        caps
    }

    pub fn total_capacity(&self) -> u32 {
        self.schedules.iter().map(|s| s.capacity).sum()
    }

    /// Cost of moving one container on `vehicle`.
    pub fn vehicle_cost(&self, vehicle: Vehicle) -> Money {
        match vehicle {
            Vehicle::Train(t) => self.schedules[t].cost_per_container,
            Vehicle::Truck => self.cost_model.truck_cost,
        }
    }

    /// Checks the structural invariants: the 28 schedules in id order, valid
    /// container days, unique container ids and trains cheaper than trucks.
    pub fn validate(&self) -> Result<()> {
        if self.schedules.len() != NUM_SCHEDULES {
            return Err(Error::InvalidScenario(format!(
                "expected {NUM_SCHEDULES} schedules, found {}",
                self.schedules.len()
            )));
        }
        for ((id, (d, a)), s) in schedule_pairs().enumerate().zip(&self.schedules) {
            if s.id != id || s.depart_day != d || s.arrive_day != a {
                return Err(Error::InvalidScenario(format!(
                    "schedule at position {id} must be ({d},{a}) with id {id}, found id {} ({},{})",
                    s.id, s.depart_day, s.arrive_day
                )));
            }
            if s.cost_per_container < 0 || s.cost_per_container >= self.cost_model.truck_cost {
                return Err(Error::InvalidScenario(format!(
                    "schedule {id} cost {} must be in [0, truck cost {})",
                    s.cost_per_container, self.cost_model.truck_cost
                )));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(self.containers.len());
        for c in &self.containers {
            if !(1..=DAYS).contains(&c.earliest_day) || !(c.earliest_day..=DAYS).contains(&c.due_day) {
                return Err(Error::InvalidScenario(format!(
                    "container {} has invalid days ({}, {})",
                    c.id, c.earliest_day, c.due_day
                )));
            }
            if !seen.insert(c.id) {
                return Err(Error::InvalidScenario(format!("duplicate container id {}", c.id)));
            }
        }
        Ok(())
    }

    /// Checks every feasibility rule of `assignment` against this scenario.
    pub fn check(&self, assignment: &Assignment) -> Result<(), ConstraintViolation> {
        let by_id: BTreeMap<usize, &Container> = self.containers.iter().map(|c| (c.id, c)).collect();
        for (container, _) in assignment.iter() {
            if !by_id.contains_key(&container) {
                return Err(ConstraintViolation::UnknownContainer { container });
            }
        }
        for c in &self.containers {
            let Some(vehicle) = assignment.get(c.id) else {
                return Err(ConstraintViolation::Unassigned { container: c.id });
            };
            if let Vehicle::Train(t) = vehicle {
                let Some(s) = self.schedules.get(t) else {
                    return Err(ConstraintViolation::UnknownSchedule {
                        container: c.id,
                        schedule: t,
                    });
                };
                if s.depart_day < c.earliest_day {
                    return Err(ConstraintViolation::DepartsBeforeAvailable {
                        container: c.id,
                        schedule: t,
                        earliest_day: c.earliest_day,
                        depart_day: s.depart_day,
                    });
                }
                if s.arrive_day > c.due_day {
                    return Err(ConstraintViolation::ArrivesAfterDue {
                        container: c.id,
                        schedule: t,
                        due_day: c.due_day,
                        arrive_day: s.arrive_day,
                    });
                }
            }
        }
        let loads = assignment.train_loads();
        for s in &self.schedules {
            if loads[s.id] > s.capacity {
                return Err(ConstraintViolation::CapacityExceeded {
                    schedule: s.id,
                    assigned: loads[s.id],
                    capacity: s.capacity,
                });
            }
        }
        Ok(())
    }
}

/// Total transport cost of a feasible assignment.
pub fn total_cost(assignment: &Assignment, scenario: &WeekScenario) -> Result<Money, ConstraintViolation> {
    scenario.check(assignment)?;
    Ok(assignment.iter().map(|(_, v)| scenario.vehicle_cost(v)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    /// Containers placed on trains.
    pub used_slots: u32,
    /// `used_slots` over the week's total train capacity.
    pub fraction: f64,
}

/// Share of the week's train slots filled by a feasible assignment.
pub fn utilization(assignment: &Assignment, scenario: &WeekScenario) -> Result<Utilization, ConstraintViolation> {
    scenario.check(assignment)?;
    let used_slots = assignment.train_loads().iter().sum::<u32>();
    let total = scenario.total_capacity();
    // Zero capacity forces zero train usage, which counts as full use.
    let fraction = if total == 0 {
        1.0
    } else {
        f64::from(used_slots) / f64::from(total)
    };
    Ok(Utilization { used_slots, fraction })
}

/// Whether `container` may board `schedule` given its remaining slots.
pub fn is_eligible(container: &Container, schedule: &TrainSchedule, residual_capacity: u32) -> bool {
    schedule.depart_day >= container.earliest_day
        && schedule.arrive_day <= container.due_day
        && residual_capacity >= 1
}
