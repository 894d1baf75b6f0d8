//! Exact offline optimum.
//!
//! The assignment problem is a transportation problem, so it is solved as a
//! min-cost flow: source -> container (1, 0), container -> schedule (1, train
//! cost) for each date-compatible pair, container -> sink (1, truck cost),
//! schedule -> sink (capacity, 0). Integral flows give an integral optimum.

use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, Money, Vehicle, WeekScenario, NUM_SCHEDULES};
use crate::error::{Error, Result};
use crate::flow::{ArcId, FlowNetwork};

/// Largest instance `brute_force_optimal` accepts.
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalPlan {
    pub assignment: Assignment,
    pub cost: Money,
}

/// Flow network for a scenario with the arc ids needed to read back an assignment.
#[derive(Debug, Clone)]
pub struct AssignmentNetwork {
    pub network: FlowNetwork,
    pub source: usize,
    pub sink: usize,
    /// Per container: its id, its train arcs `(schedule, arc)` and its truck arc.
    container_arcs: Vec<(usize, Vec<(usize, ArcId)>, ArcId)>,
}

impl AssignmentNetwork {
    pub fn build(scenario: &WeekScenario) -> Self {
        let n = scenario.containers.len();
        let source = 0;
        let schedule_node = |t: usize| 1 + n + t;
        let sink = 1 + n + NUM_SCHEDULES;
        let mut network = FlowNetwork::new(sink + 1);

        let mut container_arcs = Vec::with_capacity(n);
        for (k, c) in scenario.containers.iter().enumerate() {
            let node = 1 + k;
            network.add_arc(source, node, 1, 0);
            let trains = scenario
                .schedules
                .iter()
                .filter(|s| s.depart_day >= c.earliest_day && s.arrive_day <= c.due_day)
                .map(|s| (s.id, network.add_arc(node, schedule_node(s.id), 1, s.cost_per_container)))
                .collect();
            let truck = network.add_arc(node, sink, 1, scenario.cost_model.truck_cost);
            container_arcs.push((c.id, trains, truck));
        }
        for s in &scenario.schedules {
            network.add_arc(schedule_node(s.id), sink, i64::from(s.capacity), 0);
        }
        Self {
            network,
            source,
            sink,
            container_arcs,
        }
    }

    pub fn demand(&self) -> i64 {
        self.container_arcs.len() as i64
    }

    /// Reads the container placements off a solved network.
    pub fn assignment(&self) -> Assignment {
        self.container_arcs
            .iter()
            .map(|(id, trains, truck)| {
                let vehicle = trains
                    .iter()
                    .find(|(_, arc)| self.network.flow(*arc) == 1)
                    .map(|&(t, _)| Vehicle::Train(t));
                debug_assert!(vehicle.is_some() || self.network.flow(*truck) == 1);
                (*id, vehicle.unwrap_or(Vehicle::Truck))
            })
            .collect()
    }
}

/// Minimum-cost assignment of every container in `scenario`.
pub fn solve_optimal(scenario: &WeekScenario) -> OptimalPlan {
    let mut net = AssignmentNetwork::build(scenario);
    let demand = net.demand();
    // Truck arcs give every container a path to the sink.
    let solution = net
        .network
        .min_cost_flow(net.source, net.sink, demand)
        .expect("truck arcs make every instance feasible");
    OptimalPlan {
        assignment: net.assignment(),
        cost: solution.cost,
    }
}

/// Exhaustive search over every per-container vehicle choice. Test oracle for
/// small instances only.
pub fn brute_force_optimal(scenario: &WeekScenario) -> Result<Money> {
    let n = scenario.containers.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            containers: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    // Candidate vehicles per container: every date-compatible schedule with
    // any capacity, plus the truck.
    let options: Vec<Vec<Vehicle>> = scenario
        .containers
        .iter()
        .map(|c| {
            scenario
                .schedules
                .iter()
                .filter(|s| s.capacity > 0 && s.depart_day >= c.earliest_day && s.arrive_day <= c.due_day)
                .map(|s| Vehicle::Train(s.id))
                .chain(std::iter::once(Vehicle::Truck))
                .collect()
        })
        .collect();

    let mut best = Money::MAX;
    let mut choice = vec![0usize; n];
    loop {
        let mut loads = [0u32; NUM_SCHEDULES];
        let mut cost = 0;
        let mut feasible = true;
        for (k, &pick) in choice.iter().enumerate() {
            let v = options[k][pick];
            cost += scenario.vehicle_cost(v);
            if let Vehicle::Train(t) = v {
                loads[t] += 1;
                if loads[t] > scenario.schedules[t].capacity {
                    feasible = false;
                }
            }
        }
        if feasible {
            best = best.min(cost);
        }

        // Odometer increment over the mixed-radix choice vector.
        let mut k = 0;
        loop {
            if k == n {
                return Ok(if n == 0 { 0 } else { best });
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::scenario_with;
    use crate::domain::{schedule_index, total_cost};

    #[test]
    fn empty_scenario() {
        let s = scenario_with([1; NUM_SCHEDULES], &[]);
        let plan = solve_optimal(&s);
        assert!(plan.assignment.is_empty());
        assert_eq!(plan.cost, 0);
        assert_eq!(brute_force_optimal(&s).unwrap(), 0);
    }

    #[test]
    fn single_container_takes_the_train() {
        let mut caps = [0; NUM_SCHEDULES];
        let t = schedule_index(2, 3).unwrap();
        caps[t] = 1;
        let s = scenario_with(caps, &[(1, 4)]);
        let plan = solve_optimal(&s);
        assert_eq!(plan.cost, 15);
        assert_eq!(plan.assignment.get(0), Some(Vehicle::Train(t)));
    }

    #[test]
    fn two_containers_one_slot() {
        let mut caps = [0; NUM_SCHEDULES];
        caps[schedule_index(3, 5).unwrap()] = 1;
        let s = scenario_with(caps, &[(2, 6), (1, 7)]);
        // Hand enumeration: (T,T) over capacity, (T,K)=515, (K,T)=515, (K,K)=1000.
        assert_eq!(brute_force_optimal(&s).unwrap(), 515);
        assert_eq!(solve_optimal(&s).cost, 515);
    }

    #[test]
    fn ineligible_containers_all_truck() {
        let mut caps = [0; NUM_SCHEDULES];
        caps[schedule_index(1, 1).unwrap()] = 3;
        let s = scenario_with(caps, &[(2, 7), (3, 3), (5, 6)]);
        assert_eq!(brute_force_optimal(&s).unwrap(), 1500);
        assert_eq!(solve_optimal(&s).cost, 1500);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let s = scenario_with([1; NUM_SCHEDULES], &[(1, 7); 9]);
        assert!(matches!(
            brute_force_optimal(&s),
            Err(Error::InstanceTooLarge { containers: 9, limit: 8 })
        ));
    }

    #[test]
    fn full_week_plan_is_valid_and_consistent() {
        use crate::scenario::{generate_week, GeneratorConfig};
        for seed in 0..5 {
            let s = generate_week(&GeneratorConfig {
                seed,
                ..GeneratorConfig::default()
            })
            .unwrap();
            let plan = solve_optimal(&s);
            assert_eq!(total_cost(&plan.assignment, &s).unwrap(), plan.cost);
        }
    }
}
