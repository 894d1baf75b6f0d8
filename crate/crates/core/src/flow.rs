//! Min-cost flow by successive shortest augmenting paths.
//!
//! Dijkstra runs on reduced costs `c(u,v) + pi(u) - pi(v)`, which stay
//! non-negative because every arc cost is non-negative at construction and
//! potentials are advanced by the shortest-path distances after each round.
//! Equal-distance ties resolve to the lowest node index.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub type Flow = i64;
pub type Cost = i64;

const INF: Cost = Cost::MAX / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArcId(usize);

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    residual: Flow,
    cost: Cost,
}

/// Directed network with paired residual arcs (arc `i ^ 1` is the reverse of `i`).
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    arcs: Vec<Arc>,
    capacity: Vec<Flow>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowSolution {
    pub flow: Flow,
    pub cost: Cost,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            capacity: Vec::new(),
            adjacency: vec![Vec::new(); nodes],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len() / 2
    }

    /// Adds `from -> to`. Costs and capacities must be non-negative.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: Flow, cost: Cost) -> ArcId {
        assert!(from < self.node_count() && to < self.node_count(), "arc endpoint out of range");
        assert!(capacity >= 0, "negative capacity");
        assert!(cost >= 0, "negative arc cost");
        let id = self.arcs.len();
        self.arcs.push(Arc {
            to,
            residual: capacity,
            cost,
        });
        self.arcs.push(Arc {
            to: from,
            residual: 0,
            cost: -cost,
        });
        self.capacity.push(capacity);
        self.capacity.push(0);
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
        ArcId(id)
    }

    /// Units of flow currently on an arc.
    pub fn flow(&self, arc: ArcId) -> Flow {
        self.capacity[arc.0] - self.arcs[arc.0].residual
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = (ArcId, usize)> + '_ {
        self.adjacency[node]
            .iter()
            .filter(|&&i| i % 2 == 0)
            .map(move |&i| (ArcId(i), self.arcs[i].to))
    }

    /// Sends `amount` units from `source` to `sink` at minimum total cost.
    pub fn min_cost_flow(&mut self, source: usize, sink: usize, amount: Flow) -> Result<FlowSolution> {
        let n = self.node_count();
        let mut potential = vec![0 as Cost; n];
        let mut dist = vec![INF; n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut sent: Flow = 0;
        let mut cost: Cost = 0;

        while sent < amount {
            dist.fill(INF);
            parent.fill(None);
            dist[source] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0 as Cost, source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &i in &self.adjacency[u] {
                    let arc = &self.arcs[i];
                    if arc.residual == 0 {
                        continue;
                    }
                    let reduced = arc.cost + potential[u] - potential[arc.to];
                    debug_assert!(reduced >= 0, "negative reduced cost on arc {i}");
                    let nd = d + reduced;
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        parent[arc.to] = Some(i);
                        heap.push(Reverse((nd, arc.to)));
                    }
                }
            }
            if dist[sink] == INF {
                return Err(Error::FlowInfeasible {
                    requested: amount,
                    achieved: sent,
                });
            }
            for v in 0..n {
                if dist[v] < INF {
                    potential[v] += dist[v];
                }
            }

            let mut push = amount - sent;
            let mut v = sink;
            while let Some(i) = parent[v] {
                push = push.min(self.arcs[i].residual);
                v = self.arcs[i ^ 1].to;
            }
            let mut v = sink;
            while let Some(i) = parent[v] {
                self.arcs[i].residual -= push;
                self.arcs[i ^ 1].residual += push;
                cost += push * self.arcs[i].cost;
                v = self.arcs[i ^ 1].to;
            }
            sent += push;

            #[cfg(debug_assertions)]
            self.assert_potentials_valid(&potential, &dist);
        }
        Ok(FlowSolution { flow: sent, cost })
    }

    #[cfg(debug_assertions)]
    fn assert_potentials_valid(&self, potential: &[Cost], dist: &[Cost]) {
        for (u, arcs) in self.adjacency.iter().enumerate() {
            if dist[u] == INF {
                continue;
            }
            for &i in arcs {
                let arc = &self.arcs[i];
                if arc.residual > 0 && dist[arc.to] < INF {
                    debug_assert!(arc.cost + potential[u] - potential[arc.to] >= 0);
                }
            }
        }
    }
}
