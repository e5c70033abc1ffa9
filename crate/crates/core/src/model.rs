//! Problem-instance data model and the solver-independent feasibility checks.
//!
//! Indexing is zero-based throughout. With `N + 1` radio nodes the small
//! cells occupy `0..N`, the macro cell is node `N`, and the central cloud is
//! the extra assignment target `N + 1`. The cloud is never a [`NodeSpec`]: it
//! hosts every image and has unbounded compute.
//!
//! Units: MB for storage, GHz for compute, Mbit for data, Mbps for link
//! bandwidth, MHz for channel width, seconds for latency, meters for distance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::LatencyTable;

/// Slack allowed when comparing resource sums against capacities.
const CAPACITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    /// MB.
    pub storage_capacity: f64,
    /// GHz.
    pub compute_capacity: f64,
    pub position: Point,
    /// Meters.
    pub coverage_radius: f64,
    pub is_mcn: bool,
}

/// Connectivity between radio nodes plus the macro-cell backhaul.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// `(N+1) x (N+2)`; the last column is the cloud and is all ones.
    pub adjacency: Vec<Vec<bool>>,
    /// `(N+1) x (N+1)` Mbps. Zero where there is no link and on the diagonal
    /// (a node talking to itself is never routed over a link).
    pub link_bandwidth: Vec<Vec<f64>>,
    /// Mbps between the macro cell and the cloud.
    pub backhaul_bandwidth: f64,
}

impl Topology {
    /// Whether node `n` can hand a task to target `m` (`m` may be the cloud).
    pub fn linked(&self, n: usize, m: usize) -> bool {
        self.adjacency[n][m]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceCatalog {
    /// MB per layer.
    pub layer_sizes: Vec<f64>,
    /// `I x L` layer membership of each image.
    pub membership: Vec<Vec<bool>>,
    /// GHz required by one container of each service.
    pub compute_demand: Vec<f64>,
}

impl MicroserviceCatalog {
    pub fn num_services(&self) -> usize {
        self.membership.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn layers_of(&self, service: usize) -> impl Iterator<Item = usize> + '_ {
        self.membership[service]
            .iter()
            .enumerate()
            .filter_map(|(l, &needed)| needed.then_some(l))
    }

    pub fn image_size(&self, service: usize) -> f64 {
        self.layers_of(service).map(|l| self.layer_sizes[l]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub position: Point,
    pub requested_service: usize,
    /// Mbit.
    pub data_size: f64,
    /// dBm; converted to mW when the uplink rate is evaluated.
    pub transmit_power_dbm: f64,
    /// Small-scale fading power gain towards each radio node.
    pub channel_gains: Vec<f64>,
}

/// Radio constants shared by every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// MHz of dedicated uplink channel per user.
    pub channel_bandwidth: f64,
    pub noise_power: f64,
    pub path_loss_exponent: f64,
    /// Meters per unit of distance inside the path-loss term.
    pub path_loss_reference: f64,
    /// Meters; distances below this are clamped before path loss.
    pub min_distance: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            channel_bandwidth: 6.0,
            noise_power: 1.0,
            path_loss_exponent: 4.0,
            path_loss_reference: 1000.0,
            min_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nodes: Vec<NodeSpec>,
    pub topology: Topology,
    pub catalog: MicroserviceCatalog,
    pub users: Vec<UserSpec>,
    pub physics: Physics,
}

impl Scenario {
    /// Radio nodes including the macro cell (`N + 1`).
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Assignment targets: radio nodes plus the cloud (`N + 2`).
    pub fn num_targets(&self) -> usize {
        self.nodes.len() + 1
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_services(&self) -> usize {
        self.catalog.num_services()
    }

    pub fn num_layers(&self) -> usize {
        self.catalog.num_layers()
    }

    pub fn cloud(&self) -> usize {
        self.nodes.len()
    }

    pub fn mcn(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Coverage indicator: user `u` lies inside node `n`'s disk.
    pub fn covers(&self, u: usize, n: usize) -> bool {
        let node = &self.nodes[n];
        self.users[u].position.distance(&node.position) <= node.coverage_radius
    }

    /// Compute demand of the service user `u` requests.
    pub fn demand_of(&self, u: usize) -> f64 {
        self.catalog.compute_demand[self.users[u].requested_service]
    }

    /// Whether some covering node of `u` is linked to target `m`.
    pub fn routable(&self, u: usize, m: usize) -> bool {
        (0..self.num_nodes()).any(|n| self.covers(u, n) && self.topology.linked(n, m))
    }
}

/// A structural defect found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioIssue {
    Shape(String),
    NonPositive { what: &'static str, index: usize },
    McnPlacement,
    AdjacencyDiagonal { node: usize },
    AdjacencyAsymmetric { n: usize, m: usize },
    McnRowIncomplete { node: usize },
    CloudColumnIncomplete { node: usize },
    BandwidthMismatch { n: usize, m: usize },
    ServiceWithoutLayers { service: usize },
    RequestOutOfRange { user: usize },
    NegativeChannelGain { user: usize, node: usize },
    UserNotCovered { user: usize },
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape(msg) => write!(f, "shape: {msg}"),
            Self::NonPositive { what, index } => write!(f, "{what}[{index}] must be positive"),
            Self::McnPlacement => write!(f, "exactly one macro cell is required and it must be the last node"),
            Self::AdjacencyDiagonal { node } => {
                write!(f, "adjacency diagonal must be 1 (node {node})")
            }
            Self::AdjacencyAsymmetric { n, m } => {
                write!(f, "adjacency must be symmetric between nodes ({n}, {m})")
            }
            Self::McnRowIncomplete { node } => {
                write!(f, "macro cell must connect to every node (missing {node})")
            }
            Self::CloudColumnIncomplete { node } => {
                write!(f, "cloud column must be all ones (node {node})")
            }
            Self::BandwidthMismatch { n, m } => write!(
                f,
                "link bandwidth ({n}, {m}) must be positive exactly where nodes are adjacent"
            ),
            Self::ServiceWithoutLayers { service } => {
                write!(f, "service {service} requires no layer")
            }
            Self::RequestOutOfRange { user } => {
                write!(f, "user {user} requests an unknown service")
            }
            Self::NegativeChannelGain { user, node } => {
                write!(f, "channel gain of user {user} towards node {node} is negative")
            }
            Self::UserNotCovered { user } => write!(
                f,
                "user {user} is outside every coverage disk; the coverage access constraint is infeasible"
            ),
        }
    }
}

/// Lists every violated structural invariant; an empty list means well-formed.
pub fn validate_scenario(s: &Scenario) -> Vec<ScenarioIssue> {
    let mut issues = Vec::new();
    let nodes = s.num_nodes();
    if nodes == 0 {
        issues.push(ScenarioIssue::Shape("scenario has no nodes".into()));
        return issues;
    }
    let services = s.catalog.membership.len();

    let shape_ok = check_shape(s, &mut issues);

    for (n, node) in s.nodes.iter().enumerate() {
        if !(node.storage_capacity > 0.0) {
            issues.push(ScenarioIssue::NonPositive { what: "storage_capacity", index: n });
        }
        if !(node.compute_capacity > 0.0) {
            issues.push(ScenarioIssue::NonPositive { what: "compute_capacity", index: n });
        }
        if !(node.coverage_radius > 0.0) {
            issues.push(ScenarioIssue::NonPositive { what: "coverage_radius", index: n });
        }
    }
    let mcn_count = s.nodes.iter().filter(|n| n.is_mcn).count();
    if mcn_count != 1 || !s.nodes[nodes - 1].is_mcn {
        issues.push(ScenarioIssue::McnPlacement);
    }
    for (l, &size) in s.catalog.layer_sizes.iter().enumerate() {
        if !(size > 0.0) {
            issues.push(ScenarioIssue::NonPositive { what: "layer_sizes", index: l });
        }
    }
    for (i, &demand) in s.catalog.compute_demand.iter().enumerate() {
        if !(demand > 0.0) {
            issues.push(ScenarioIssue::NonPositive { what: "compute_demand", index: i });
        }
    }
    for (i, row) in s.catalog.membership.iter().enumerate() {
        if !row.iter().any(|&b| b) {
            issues.push(ScenarioIssue::ServiceWithoutLayers { service: i });
        }
    }
    if !(s.topology.backhaul_bandwidth > 0.0) {
        issues.push(ScenarioIssue::NonPositive { what: "backhaul_bandwidth", index: 0 });
    }
    for (u, user) in s.users.iter().enumerate() {
        if user.requested_service >= services {
            issues.push(ScenarioIssue::RequestOutOfRange { user: u });
        }
        if !(user.data_size > 0.0) {
            issues.push(ScenarioIssue::NonPositive { what: "data_size", index: u });
        }
        for (n, &g) in user.channel_gains.iter().enumerate() {
            if !(g >= 0.0) {
                issues.push(ScenarioIssue::NegativeChannelGain { user: u, node: n });
            }
        }
    }

    if !shape_ok {
        return issues;
    }

    let topo = &s.topology;
    let mcn = nodes - 1;
    for n in 0..nodes {
        if !topo.adjacency[n][n] {
            issues.push(ScenarioIssue::AdjacencyDiagonal { node: n });
        }
        if !topo.adjacency[n][nodes] {
            issues.push(ScenarioIssue::CloudColumnIncomplete { node: n });
        }
        if !topo.adjacency[mcn][n] {
            issues.push(ScenarioIssue::McnRowIncomplete { node: n });
        }
        for m in 0..nodes {
            if topo.adjacency[n][m] != topo.adjacency[m][n] {
                if n < m {
                    issues.push(ScenarioIssue::AdjacencyAsymmetric { n, m });
                }
                continue;
            }
            if n != m {
                let bw = topo.link_bandwidth[n][m];
                let ok = if topo.adjacency[n][m] { bw > 0.0 } else { bw == 0.0 };
                if !ok {
                    issues.push(ScenarioIssue::BandwidthMismatch { n, m });
                }
            }
        }
    }
    for u in 0..s.num_users() {
        if !(0..nodes).any(|n| s.covers(u, n)) {
            issues.push(ScenarioIssue::UserNotCovered { user: u });
        }
    }
    issues
}

fn check_shape(s: &Scenario, issues: &mut Vec<ScenarioIssue>) -> bool {
    let nodes = s.num_nodes();
    let before = issues.len();
    let topo = &s.topology;
    if topo.adjacency.len() != nodes || topo.adjacency.iter().any(|r| r.len() != nodes + 1) {
        issues.push(ScenarioIssue::Shape(format!(
            "adjacency must be {} x {}",
            nodes,
            nodes + 1
        )));
    }
    if topo.link_bandwidth.len() != nodes || topo.link_bandwidth.iter().any(|r| r.len() != nodes) {
        issues.push(ScenarioIssue::Shape(format!("link_bandwidth must be {nodes} x {nodes}")));
    }
    let layers = s.catalog.layer_sizes.len();
    if s.catalog.membership.iter().any(|r| r.len() != layers) {
        issues.push(ScenarioIssue::Shape(format!("membership rows must have {layers} entries")));
    }
    if s.catalog.compute_demand.len() != s.catalog.membership.len() {
        issues.push(ScenarioIssue::Shape("compute_demand must have one entry per service".into()));
    }
    for (u, user) in s.users.iter().enumerate() {
        if user.channel_gains.len() != nodes {
            issues.push(ScenarioIssue::Shape(format!(
                "user {u} must carry {nodes} channel gains"
            )));
        }
    }
    issues.len() == before
}

/// Binary decisions plus the total latency they incur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// `(N+1) x I` service deployment.
    pub x: Vec<Vec<bool>>,
    /// `(N+1) x L` layer deployment.
    pub y: Vec<Vec<bool>>,
    /// `U x (N+1)` access selection.
    pub z: Vec<Vec<bool>>,
    /// `U x (N+2)` task assignment.
    pub w: Vec<Vec<bool>>,
    /// Seconds.
    pub objective: f64,
}

impl Solution {
    /// Builds a complete solution from deployments and one target per user:
    /// access nodes come from the latency table's minimizers and the
    /// objective is evaluated on the result.
    pub fn assemble(
        s: &Scenario,
        lt: &LatencyTable,
        x: Vec<Vec<bool>>,
        y: Vec<Vec<bool>>,
        assignment: &[usize],
    ) -> Result<Self> {
        if assignment.len() != s.num_users() {
            return Err(Error::DimensionMismatch {
                what: "assignment",
                expected: s.num_users(),
                actual: assignment.len(),
            });
        }
        let w: Vec<Vec<bool>> = assignment
            .iter()
            .map(|&m| (0..s.num_targets()).map(|t| t == m).collect())
            .collect();
        let z = lt.recover_access(&w);
        let mut sol = Solution { x, y, z, w, objective: 0.0 };
        sol.objective = evaluate_objective(s, lt, &sol)?;
        Ok(sol)
    }

    /// Everything on the cloud with nothing deployed at the edge.
    pub fn all_cloud(s: &Scenario, lt: &LatencyTable) -> Result<Self> {
        let assignment = vec![s.cloud(); s.num_users()];
        Self::assemble(
            s,
            lt,
            vec![vec![false; s.num_services()]; s.num_nodes()],
            vec![vec![false; s.num_layers()]; s.num_nodes()],
            &assignment,
        )
    }

    /// The target each user is assigned to, if exactly one.
    pub fn assignment(&self) -> Vec<Option<usize>> {
        self.w
            .iter()
            .map(|row| {
                let mut hits = row.iter().enumerate().filter(|(_, &b)| b).map(|(m, _)| m);
                match (hits.next(), hits.next()) {
                    (Some(m), None) => Some(m),
                    _ => None,
                }
            })
            .collect()
    }
}

/// The model constraints checked by [`check_feasible`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// Deployed layers fit each node's storage.
    Storage,
    /// A deployed service has all its layers deployed.
    LayerDependency,
    /// Each user attaches to exactly one covering node.
    CoverageAccess,
    /// Each user attaches to exactly one node.
    SingleAccess,
    /// Each task goes to exactly one target.
    SingleAssignment,
    /// Tasks only go to nodes hosting the requested service.
    DeploymentGating,
    /// Assigned demand fits each node's compute.
    ComputeCapacity,
    /// The access node is linked to the execution target.
    Routing,
}

impl Constraint {
    pub const ALL: [Constraint; 8] = [
        Constraint::Storage,
        Constraint::LayerDependency,
        Constraint::CoverageAccess,
        Constraint::SingleAccess,
        Constraint::SingleAssignment,
        Constraint::DeploymentGating,
        Constraint::ComputeCapacity,
        Constraint::Routing,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResult {
    pub constraint: Constraint,
    /// Index tuple of the first violation, e.g. `[n]`, `[n, i, l]` or `[u, n]`.
    pub first_violation: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub results: Vec<ConstraintResult>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.results.iter().all(|r| r.first_violation.is_none())
    }

    pub fn violation(&self, c: Constraint) -> Option<&[usize]> {
        self.results
            .iter()
            .find(|r| r.constraint == c)
            .and_then(|r| r.first_violation.as_deref())
    }

    pub fn passes(&self, c: Constraint) -> bool {
        self.violation(c).is_none()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            match &r.first_violation {
                None => writeln!(f, "{:?}: ok", r.constraint)?,
                Some(idx) => writeln!(f, "{:?}: violated at {:?}", r.constraint, idx)?,
            }
        }
        Ok(())
    }
}

fn check_dims(what: &'static str, m: &[Vec<bool>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::DimensionMismatch { what, expected: rows, actual: m.len() });
    }
    if let Some(r) = m.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch { what, expected: cols, actual: r.len() });
    }
    Ok(())
}

/// Evaluates every model constraint directly on the binary decisions.
pub fn check_feasible(s: &Scenario, sol: &Solution) -> Result<FeasibilityReport> {
    let nodes = s.num_nodes();
    let targets = s.num_targets();
    let users = s.num_users();
    let services = s.num_services();
    let layers = s.num_layers();
    check_dims("x", &sol.x, nodes, services)?;
    check_dims("y", &sol.y, nodes, layers)?;
    check_dims("z", &sol.z, users, nodes)?;
    check_dims("w", &sol.w, users, targets)?;

    let cat = &s.catalog;
    let storage = (0..nodes).find(|&n| {
        let used: f64 = (0..layers).filter(|&l| sol.y[n][l]).map(|l| cat.layer_sizes[l]).sum();
        let cap = s.nodes[n].storage_capacity;
        used > cap + CAPACITY_EPS * cap.max(1.0)
    });

    let mut layer_dep = None;
    'outer: for n in 0..nodes {
        for i in 0..services {
            if !sol.x[n][i] {
                continue;
            }
            for l in 0..layers {
                if cat.membership[i][l] && !sol.y[n][l] {
                    layer_dep = Some(vec![n, i, l]);
                    break 'outer;
                }
            }
        }
    }

    let count = |row: &[bool]| row.iter().filter(|&&b| b).count();
    let coverage = (0..users).find(|&u| {
        let covered = (0..nodes).filter(|&n| sol.z[u][n] && s.covers(u, n)).count();
        covered != 1
    });
    let single_access = (0..users).find(|&u| count(&sol.z[u]) != 1);
    let single_assignment = (0..users).find(|&u| count(&sol.w[u]) != 1);

    let mut gating = None;
    'gate: for u in 0..users {
        let service = s.users[u].requested_service;
        for n in 0..nodes {
            if sol.w[u][n] && !sol.x[n][service] {
                gating = Some(vec![u, n]);
                break 'gate;
            }
        }
    }

    let compute = (0..nodes).find(|&m| {
        let load: f64 = (0..users).filter(|&u| sol.w[u][m]).map(|u| s.demand_of(u)).sum();
        let cap = s.nodes[m].compute_capacity;
        load > cap + CAPACITY_EPS * cap.max(1.0)
    });

    let routing = (0..users).find(|&u| {
        let mut paths = 0usize;
        for n in 0..nodes {
            if !sol.z[u][n] {
                continue;
            }
            for m in 0..targets {
                if sol.w[u][m] && s.topology.linked(n, m) {
                    paths += 1;
                }
            }
        }
        paths != 1
    });

    let single = |v: Option<usize>| v.map(|i| vec![i]);
    let results = vec![
        ConstraintResult { constraint: Constraint::Storage, first_violation: single(storage) },
        ConstraintResult { constraint: Constraint::LayerDependency, first_violation: layer_dep },
        ConstraintResult { constraint: Constraint::CoverageAccess, first_violation: single(coverage) },
        ConstraintResult { constraint: Constraint::SingleAccess, first_violation: single(single_access) },
        ConstraintResult {
            constraint: Constraint::SingleAssignment,
            first_violation: single(single_assignment),
        },
        ConstraintResult { constraint: Constraint::DeploymentGating, first_violation: gating },
        ConstraintResult { constraint: Constraint::ComputeCapacity, first_violation: single(compute) },
        ConstraintResult { constraint: Constraint::Routing, first_violation: single(routing) },
    ];
    Ok(FeasibilityReport { results })
}

/// First `(u, m)` whose assigned target cannot be reached from any covering
/// node, ignoring the access decisions.
pub fn unroutable_assignment(s: &Scenario, w: &[Vec<bool>]) -> Option<(usize, usize)> {
    for (u, row) in w.iter().enumerate() {
        for (m, &assigned) in row.iter().enumerate() {
            if assigned && !s.routable(u, m) {
                return Some((u, m));
            }
        }
    }
    None
}

/// Total latency of the selected (access, target) pairs in seconds.
pub fn evaluate_objective(s: &Scenario, lt: &LatencyTable, sol: &Solution) -> Result<f64> {
    check_dims("z", &sol.z, s.num_users(), s.num_nodes())?;
    check_dims("w", &sol.w, s.num_users(), s.num_targets())?;
    let mut total = 0.0;
    for u in 0..s.num_users() {
        for n in (0..s.num_nodes()).filter(|&n| sol.z[u][n]) {
            for m in (0..s.num_targets()).filter(|&m| sol.w[u][m]) {
                match lt.latency(u, n, m) {
                    Some(t) => total += t,
                    None => return Err(Error::UnreachableSelection { user: u, access: n, target: m }),
                }
            }
        }
    }
    Ok(total)
}
