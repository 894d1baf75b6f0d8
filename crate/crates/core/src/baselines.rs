//! Comparison planners: two greedy rules and the rolling k-ILP re-optimizer.

use serde::{Deserialize, Serialize};

use crate::domain::{is_eligible, Assignment, Money, TrainSchedule, Vehicle, WeekScenario, DAYS};
use crate::env::SelectionHeuristic;
use crate::error::{Error, Result};
use crate::exact::solve_optimal;

/// Places each container, in heuristic order, on the eligible train that
/// minimizes `key`, or on a truck when no train is eligible.
fn greedy<K: Ord>(
    scenario: &WeekScenario,
    heuristic: SelectionHeuristic,
    key: impl Fn(&TrainSchedule) -> K,
) -> Assignment {
    let mut residual = scenario.capacities();
    let mut plan = Assignment::new();
    for c in heuristic.order(&scenario.containers) {
        let pick = scenario
            .schedules
            .iter()
            .filter(|s| is_eligible(&c, s, residual[s.id]))
            .min_by_key(|s| key(s));
        let vehicle = match pick {
            Some(s) => {
                residual[s.id] -= 1;
                Vehicle::Train(s.id)
            }
            None => Vehicle::Truck,
        };
        plan.assign(c.id, vehicle);
    }
    plan
}

/// Earliest departing eligible train; ties by earliest arrival, then id.
pub fn first_train(scenario: &WeekScenario, heuristic: SelectionHeuristic) -> Assignment {
    greedy(scenario, heuristic, |s| (s.depart_day, s.arrive_day, s.id))
}

/// Cheapest eligible train; ties by earliest departure, then id.
pub fn cheapest_train(scenario: &WeekScenario, heuristic: SelectionHeuristic) -> Assignment {
    greedy(scenario, heuristic, |s| (s.cost_per_container, s.depart_day, s.id))
}

/// Days on which the rolling optimizer re-plans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawReplanSchedule")]
pub struct ReplanSchedule {
    days: Vec<u8>,
    /// When set, a run on day `p` may only use trains departing on day `p` or
    /// later. Off by default: a container revealed by day `p` may still take
    /// any train departing on or after its earliest day.
    #[serde(default)]
    pub block_departed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReplanSchedule {
    days: Vec<u8>,
    #[serde(default)]
    block_departed: bool,
}

impl TryFrom<RawReplanSchedule> for ReplanSchedule {
    type Error = Error;

    fn try_from(raw: RawReplanSchedule) -> Result<Self> {
        Ok(Self::new(raw.days)?.with_block_departed(raw.block_departed))
    }
}

impl ReplanSchedule {
    pub fn new(mut days: Vec<u8>) -> Result<Self> {
        days.sort_unstable();
        days.dedup();
        if days.is_empty() || days.iter().any(|d| !(1..=DAYS).contains(d)) {
            return Err(Error::InvalidConfig(format!(
                "planning days must be a non-empty subset of 1..=7, got {days:?}"
            )));
        }
        Ok(Self {
            days,
            block_departed: false,
        })
    }

    /// Twice a week, on days 1 and 4.
    pub fn twice_weekly() -> Self {
        Self::new(vec![1, 4]).expect("valid days")
    }

    pub fn daily() -> Self {
        Self::new((1..=DAYS).collect()).expect("valid days")
    }

    pub fn with_block_departed(mut self, block: bool) -> Self {
        self.block_departed = block;
        self
    }

    pub fn days(&self) -> &[u8] {
        &self.days
    }

    /// Planning days including the closing day-7 run for late arrivals.
    fn runs(&self) -> Vec<u8> {
        let mut runs = self.days.clone();
        if runs.last() != Some(&DAYS) {
            runs.push(DAYS);
        }
        runs
    }
}

/// Re-plans on each planning day with only the containers available so far,
/// committing every decision for good.
pub fn k_ilp(scenario: &WeekScenario, replan: &ReplanSchedule) -> Assignment {
    k_ilp_runs(scenario, replan).into_iter().fold(Assignment::new(), |mut acc, run| {
        for (c, v) in run.committed.iter() {
            acc.assign(c, v);
        }
        acc
    })
}

/// One planning-day run of the rolling optimizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplanRun {
    pub day: u8,
    pub committed: Assignment,
    pub cost: Money,
}

/// The individual runs of [`k_ilp`], in planning-day order.
pub fn k_ilp_runs(scenario: &WeekScenario, replan: &ReplanSchedule) -> Vec<ReplanRun> {
    let mut residual = scenario.capacities();
    let mut planned = vec![false; scenario.containers.len()];
    let mut runs = Vec::new();

    for day in replan.runs() {
        let batch: Vec<usize> = (0..scenario.containers.len())
            .filter(|&k| !planned[k] && scenario.containers[k].earliest_day <= day)
            .collect();
        if batch.is_empty() {
            continue;
        }
        let mut sub = scenario.clone();
        sub.containers = batch.iter().map(|&k| scenario.containers[k]).collect();
        for s in sub.schedules.iter_mut() {
            s.capacity = if replan.block_departed && s.depart_day < day {
                0
            } else {
                residual[s.id]
            };
        }
        let plan = solve_optimal(&sub);
        for (_, v) in plan.assignment.iter() {
            if let Vehicle::Train(t) = v {
                residual[t] -= 1;
            }
        }
        for &k in &batch {
            planned[k] = true;
        }
        runs.push(ReplanRun {
            day,
            committed: plan.assignment,
            cost: plan.cost,
        });
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::scenario_with;
    use crate::domain::{schedule_index, total_cost, NUM_SCHEDULES};
    use crate::exact::brute_force_optimal;
    use crate::scenario::{generate_week, CapacitySetting, GeneratorConfig};

    fn t(d: u8, a: u8) -> usize {
        schedule_index(d, a).unwrap()
    }

    #[test]
    fn first_train_takes_earliest_departure() {
        let s = scenario_with([1; NUM_SCHEDULES], &[(2, 7)]);
        let plan = first_train(&s, SelectionHeuristic::Fifo);
        assert_eq!(plan.get(0), Some(Vehicle::Train(t(2, 2))));
    }

    #[test]
    fn no_capacity_means_all_trucks() {
        let s = scenario_with([0; NUM_SCHEDULES], &[(1, 7), (3, 4), (6, 6)]);
        for plan in [
            first_train(&s, SelectionHeuristic::Fifo),
            cheapest_train(&s, SelectionHeuristic::Edf),
            k_ilp(&s, &ReplanSchedule::daily()),
        ] {
            assert_eq!(total_cost(&plan, &s).unwrap(), 1500);
        }
    }

    #[test]
    fn greedy_can_be_beaten_by_optimum() {
        // Search tiny instances for one where first-train trucks a container
        // that the optimum places on a train.
        let pool = [(1, 3), (2, 2), (3, 3), (1, 7), (4, 5), (2, 4)];
        let mut found = None;
        'search: for slots in 0..(1u32 << pool.len()) {
            if slots.count_ones() != 3 {
                continue;
            }
            let mut caps = [0; NUM_SCHEDULES];
            for (i, &(d, a)) in pool.iter().enumerate() {
                if slots & (1 << i) != 0 {
                    caps[t(d, a)] = 1;
                }
            }
            for x in pool {
                for y in pool {
                    for z in pool {
                        let s = scenario_with(caps, &[x, y, z]);
                        let greedy = total_cost(&first_train(&s, SelectionHeuristic::Fifo), &s).unwrap();
                        let best = brute_force_optimal(&s).unwrap();
                        if greedy > best && solve_optimal(&s).assignment.trucks() == 0 {
                            found = Some((s, greedy, best));
                            break 'search;
                        }
                    }
                }
            }
        }
        let (s, greedy, best) = found.expect("an instance where greedy loses");
        assert_eq!(first_train(&s, SelectionHeuristic::Fifo).trucks(), 1);
        assert!(greedy > best);
        assert_eq!(solve_optimal(&s).cost, best);
    }

    #[test]
    fn uniform_costs_make_cheapest_equal_first() {
        for seed in 0..20 {
            let s = generate_week(&GeneratorConfig {
                seed,
                tariff: crate::scenario::TrainTariff::Uniform { cost: 15 },
                ..GeneratorConfig::default()
            })
            .unwrap();
            for h in [SelectionHeuristic::Fifo, SelectionHeuristic::Edf, SelectionHeuristic::Booking] {
                assert_eq!(first_train(&s, h), cheapest_train(&s, h));
            }
        }
    }

    #[test]
    fn cheapest_prefers_lower_price() {
        let mut s = scenario_with([1; NUM_SCHEDULES], &[(2, 4)]);
        s.schedules[t(2, 2)].cost_per_container = 20;
        s.schedules[t(3, 4)].cost_per_container = 10;
        assert_eq!(
            cheapest_train(&s, SelectionHeuristic::Fifo).get(0),
            Some(Vehicle::Train(t(3, 4)))
        );
    }

    #[test]
    fn daily_replan_with_everything_known_on_day_one_is_optimal() {
        for seed in 0..10 {
            let mut s = generate_week(&GeneratorConfig {
                seed,
                capacity: CapacitySetting::RandomUniform,
                ..GeneratorConfig::default()
            })
            .unwrap();
            for c in s.containers.iter_mut() {
                c.earliest_day = 1;
            }
            let best = solve_optimal(&s).cost;
            let daily = total_cost(&k_ilp(&s, &ReplanSchedule::daily()), &s).unwrap();
            let twice = total_cost(&k_ilp(&s, &ReplanSchedule::twice_weekly()), &s).unwrap();
            assert_eq!(daily, best);
            assert!(daily <= twice);
        }
    }

    #[test]
    fn early_commitment_blocks_a_later_container() {
        // Day 1: container (1,7) is alone and the open slots are on (2,2)
        // and the cheaper (3,3). The day-1 run grabs (3,3)...
        let mut caps = [0; NUM_SCHEDULES];
        caps[t(2, 2)] = 1;
        caps[t(3, 3)] = 1;
        let mut s = scenario_with(caps, &[(1, 7), (3, 3)]);
        s.schedules[t(2, 2)].cost_per_container = 16;
        s.schedules[t(3, 3)].cost_per_container = 12;
        // ...so the container arriving on day 3 and due day 3 must truck.
        let plan = k_ilp(&s, &ReplanSchedule::daily());
        assert_eq!(plan.get(0), Some(Vehicle::Train(t(3, 3))));
        assert_eq!(plan.get(1), Some(Vehicle::Truck));
        let rolling = total_cost(&plan, &s).unwrap();
        let best = solve_optimal(&s).cost;
        assert_eq!(best, 28);
        assert!(rolling > best);
    }

    #[test]
    fn commitments_never_change_across_runs() {
        let s = generate_week(&GeneratorConfig {
            seed: 3,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let runs = k_ilp_runs(&s, &ReplanSchedule::daily());
        let mut seen = std::collections::HashSet::new();
        for run in &runs {
            for (c, _) in run.committed.iter() {
                assert!(seen.insert(c), "container {c} re-planned on day {}", run.day);
                let k = s.containers.iter().find(|k| k.id == c).unwrap();
                assert!(k.earliest_day <= run.day);
            }
        }
        assert_eq!(seen.len(), s.containers.len());
        let merged = k_ilp(&s, &ReplanSchedule::daily());
        assert_eq!(
            total_cost(&merged, &s).unwrap(),
            runs.iter().map(|r| r.cost).sum::<Money>()
        );
    }

    #[test]
    fn late_arrivals_are_planned_by_the_closing_run() {
        let s = scenario_with([1; NUM_SCHEDULES], &[(6, 7), (2, 2)]);
        let replan = ReplanSchedule::twice_weekly();
        let runs = k_ilp_runs(&s, &replan);
        assert_eq!(runs.iter().map(|r| r.day).collect::<Vec<_>>(), vec![4, 7]);
        let plan = k_ilp(&s, &replan);
        assert_eq!(plan.len(), 2);
        assert_eq!(total_cost(&plan, &s).unwrap(), 30);
    }

    #[test]
    fn blocking_departed_trains_restricts_late_runs() {
        let s = scenario_with([1; NUM_SCHEDULES], &[(2, 2)]);
        let open = k_ilp(&s, &ReplanSchedule::twice_weekly());
        let blocked = k_ilp(&s, &ReplanSchedule::twice_weekly().with_block_departed(true));
        assert_eq!(open.get(0), Some(Vehicle::Train(t(2, 2))));
        assert_eq!(blocked.get(0), Some(Vehicle::Truck));
    }

    #[test]
    fn replan_schedule_validation() {
        assert!(ReplanSchedule::new(vec![]).is_err());
        assert!(ReplanSchedule::new(vec![0, 3]).is_err());
        assert!(ReplanSchedule::new(vec![8]).is_err());
        assert_eq!(ReplanSchedule::new(vec![4, 1, 4]).unwrap().days(), &[1, 4]);
        let parsed: ReplanSchedule = serde_json::from_str(r#"{"days":[3,1],"block_departed":true}"#).unwrap();
        assert_eq!(parsed, ReplanSchedule::new(vec![1, 3]).unwrap().with_block_departed(true));
        assert!(serde_json::from_str::<ReplanSchedule>(r#"{"days":[9]}"#).is_err());
        assert!(serde_json::from_str::<ReplanSchedule>(r#"{"days":[1],"extra":0}"#).is_err());
    }

    #[test]
    fn every_planner_is_feasible_and_bounded() {
        for (i, setting) in CapacitySetting::ALL.into_iter().enumerate() {
            for seed in 0..6u64 {
                let s = generate_week(&GeneratorConfig {
                    capacity: setting,
                    seed: seed * 31 + i as u64,
                    ..GeneratorConfig::default()
                })
                .unwrap();
                let best = solve_optimal(&s).cost;
                let ceiling = s.containers.len() as Money * s.cost_model.truck_cost;
                let plans = [
                    first_train(&s, SelectionHeuristic::Booking),
                    cheapest_train(&s, SelectionHeuristic::Fifo),
                    k_ilp(&s, &ReplanSchedule::twice_weekly()),
                    k_ilp(&s, &ReplanSchedule::daily()),
                ];
                for p in &plans {
                    let cost = total_cost(p, &s).unwrap();
                    assert!(best <= cost && cost <= ceiling);
                }
            }
        }
    }
}
