use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FiniteMetricSpace;
use crate::error::{Error, Result};

/// Shortest-path distances inside a subset, restricted to hops of length ≤ h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum IntrinsicMetric {
    Connected {
        /// Subset points (global indices) in table order.
        subset: Vec<usize>,
        link_radius: f64,
        /// Row-major `|subset| × |subset|` table.
        table: Vec<f64>,
    },
    Disconnected {
        link_radius: f64,
        /// Components as lists of global indices.
        components: Vec<Vec<usize>>,
    },
}

impl IntrinsicMetric {
    pub fn is_connected(&self) -> bool {
        matches!(self, IntrinsicMetric::Connected { .. })
    }
}

#[derive(Copy, Clone, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(State {
        cost: 0.0,
        node: source,
    });
    while let Some(State { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let c = cost + w;
            if c < dist[next] {
                dist[next] = c;
                heap.push(State {
                    cost: c,
                    node: next,
                });
            }
        }
    }
    dist
}

/// Connected components of the h-link graph, as lists of positions in `subset`.
fn components(adj: &[Vec<(usize, f64)>]) -> Vec<Vec<usize>> {
    let mut comp = vec![usize::MAX; adj.len()];
    let mut out = Vec::new();
    for s in 0..adj.len() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Discrete induced intrinsic metric: all-pairs shortest paths in the graph
/// joining subset points at ambient distance ≤ `h`, weighted by ambient
/// distance.
pub fn intrinsic_metric(
    space: &FiniteMetricSpace,
    subset: &[usize],
    h: f64,
) -> Result<IntrinsicMetric> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveLinkRadius(h));
    }
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let m = subset.len();
    let adj: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|a| {
            (0..m)
                .filter(|&b| b != a)
                .filter_map(|b| {
                    let d = space.dist(subset[a], subset[b]);
                    (d <= h).then_some((b, d))
                })
                .collect()
        })
        .collect();
    let comps = components(&adj);
    if comps.len() > 1 {
        return Ok(IntrinsicMetric::Disconnected {
            link_radius: h,
            components: comps
                .into_iter()
                .map(|c| c.into_iter().map(|a| subset[a]).collect())
                .collect(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..m).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
    let mut table = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            // symmetrize against summation-order noise
            table.push(rows[a][b].min(rows[b][a]));
        }
    }
    Ok(IntrinsicMetric::Connected {
        subset: subset.to_vec(),
        link_radius: h,
        table,
    })
}
