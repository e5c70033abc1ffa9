//! Turns a relaxed `v†` into a feasible binary solution: priority-greedy
//! layer deployment per node, then gap-ordered task assignment with the
//! cloud as terminal fallback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::VariableLayout;
use crate::latency::LatencyTable;
use crate::model::{Scenario, Solution};

/// What the layer greedy does when the next layer does not fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop scanning the node at the first layer that does not fit.
    #[default]
    FirstFailure,
    /// Skip the layer and keep trying lower-priority ones.
    SkipAndContinue,
}

/// Layer and service deployment read off the relaxed solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub x: Vec<Vec<bool>>,
    pub y: Vec<Vec<bool>>,
    /// MB left on each node.
    pub residual_storage: Vec<f64>,
}

/// Services whose every layer is present, per node.
pub fn services_from_layers(s: &Scenario, y: &[Vec<bool>]) -> Vec<Vec<bool>> {
    y.iter()
        .map(|layers| {
            (0..s.num_services())
                .map(|i| s.catalog.layers_of(i).all(|l| layers[l]))
                .collect()
        })
        .collect()
}

/// Deploys layers per node in descending relaxed priority while they fit.
/// Layers with non-positive priority are never deployed; ties go to the
/// smaller layer index.
pub fn round_layers(v: &[f64], s: &Scenario, layout: &VariableLayout, stop: StopRule) -> Deployment {
    let sizes = &s.catalog.layer_sizes;
    let mut y = vec![vec![false; s.num_layers()]; s.num_nodes()];
    let mut residual_storage = Vec::with_capacity(s.num_nodes());
    for (n, row) in y.iter_mut().enumerate() {
        let mut order: Vec<(usize, f64)> = (0..s.num_layers())
            .map(|l| (l, v[layout.y(n, l)]))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut left = s.nodes[n].storage_capacity;
        for (l, _) in order {
            if sizes[l] <= left {
                row[l] = true;
                left -= sizes[l];
            } else if stop == StopRule::FirstFailure {
                break;
            }
        }
        residual_storage.push(left);
    }
    let x = services_from_layers(s, &y);
    Deployment { x, y, residual_storage }
}

/// Result of the assignment heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Chosen target per user.
    pub targets: Vec<usize>,
    /// Users that missed their relaxed choice, with their latency gap, in
    /// the order they were served.
    pub deferred: Vec<(usize, f64)>,
    /// GHz left on each node.
    pub residual_compute: Vec<f64>,
}

/// Reachable targets for user `u` that can host its service under the
/// deployment `x` (the cloud always can), ascending by latency.
fn candidates(s: &Scenario, lt: &LatencyTable, x: &[Vec<bool>], u: usize) -> Vec<(usize, f64)> {
    let service = s.users[u].requested_service;
    let cloud = s.cloud();
    lt.targets_by_latency(u)
        .into_iter()
        .filter(|&(m, _)| m == cloud || x[m][service])
        .collect()
}

/// Gap between the second-best and best candidate latency; infinite when
/// the user has a single candidate.
fn latency_gap(cands: &[(usize, f64)]) -> f64 {
    match cands {
        [first, second, ..] => second.1 - first.1,
        _ => f64::INFINITY,
    }
}

/// Assigns every task: first to the relaxed favourite when it can host the
/// task, then the rest by descending latency gap onto their fastest
/// candidate with spare compute.
pub fn assign_tasks(
    v: &[f64],
    x: &[Vec<bool>],
    s: &Scenario,
    lt: &LatencyTable,
    layout: &VariableLayout,
) -> Result<Assignment> {
    let cloud = s.cloud();
    let mut residual: Vec<f64> = s.nodes.iter().map(|n| n.compute_capacity).collect();
    let mut targets = vec![usize::MAX; s.num_users()];
    let mut deferred = Vec::new();

    for u in 0..s.num_users() {
        let service = s.users[u].requested_service;
        let demand = s.demand_of(u);
        let mut best = 0;
        for m in 1..s.num_targets() {
            if v[layout.w(u, m)] > v[layout.w(u, best)] {
                best = m;
            }
        }
        let reachable = lt.xi(u, best).is_some();
        if reachable && best == cloud {
            targets[u] = cloud;
        } else if reachable && x[best][service] && residual[best] >= demand {
            targets[u] = best;
            residual[best] -= demand;
        } else {
            let gap = latency_gap(&candidates(s, lt, x, u));
            deferred.push((u, gap));
        }
    }

    deferred.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(u, _) in &deferred {
        let demand = s.demand_of(u);
        for (m, _) in candidates(s, lt, x, u) {
            if m == cloud {
                targets[u] = cloud;
                break;
            }
            if residual[m] >= demand {
                targets[u] = m;
                residual[m] -= demand;
                break;
            }
        }
        if targets[u] == usize::MAX {
            return Err(Error::Precondition(format!("user {u} cannot reach the cloud")));
        }
    }
    Ok(Assignment { targets, deferred, residual_compute: residual })
}

/// Full rounding pass producing a feasible [`Solution`].
pub fn round(v: &[f64], s: &Scenario, lt: &LatencyTable, stop: StopRule) -> Result<Solution> {
    let layout = VariableLayout::for_scenario(s);
    if v.len() != layout.q() {
        return Err(Error::DimensionMismatch { what: "relaxed solution", expected: layout.q(), actual: v.len() });
    }
    let dep = round_layers(v, s, &layout, stop);
    let asg = assign_tasks(v, &dep.x, s, lt, &layout)?;
    Solution::assemble(s, lt, dep.x, dep.y, &asg.targets)
}
