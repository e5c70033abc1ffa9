//! Uplink rates, the per-(user, access, target) latency tensor, and its
//! reduction to the best access node per (user, target).

use crate::model::Scenario;

/// Dense latency data for one scenario. `None` marks an unreachable entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyTable {
    users: usize,
    nodes: usize,
    targets: usize,
    t: Vec<Option<f64>>,
    xi: Vec<Option<f64>>,
    zeta: Vec<Option<usize>>,
    uplink: Vec<f64>,
}

/// Shannon uplink rate in Mbps between user `u` and node `n`, zero when `n`
/// does not cover `u`.
pub fn uplink_bandwidth(s: &Scenario, u: usize, n: usize) -> f64 {
    if !s.covers(u, n) {
        return 0.0;
    }
    let phys = &s.physics;
    let user = &s.users[u];
    let power_mw = 10f64.powf(user.transmit_power_dbm / 10.0);
    let dist = user.position.distance(&s.nodes[n].position).max(phys.min_distance)
        / phys.path_loss_reference;
    let snr = power_mw * user.channel_gains[n] * dist.powf(-phys.path_loss_exponent) / phys.noise_power;
    phys.channel_bandwidth * (1.0 + snr).log2()
}

/// Builds the full latency tensor. The reduced tables are left empty; see
/// [`reduce_access`] or [`LatencyTable::build`].
pub fn latency_tensor(s: &Scenario) -> LatencyTable {
    let users = s.num_users();
    let nodes = s.num_nodes();
    let targets = s.num_targets();
    let cloud = s.cloud();
    let mcn = s.mcn();
    let topo = &s.topology;

    let mut uplink = vec![0.0; users * nodes];
    let mut t = vec![None; users * nodes * targets];
    for u in 0..users {
        let data = s.users[u].data_size;
        for n in 0..nodes {
            let e = uplink_bandwidth(s, u, n);
            uplink[u * nodes + n] = e;
            if !(e > 0.0) {
                continue;
            }
            let up = 1.0 / e;
            for m in 0..targets {
                if !topo.linked(n, m) {
                    continue;
                }
                let per_bit = if m == n {
                    Some(up)
                } else if m == cloud {
                    if n == mcn {
                        Some(up + 1.0 / topo.backhaul_bandwidth)
                    } else {
                        let relay = topo.link_bandwidth[n][mcn];
                        (relay > 0.0).then(|| up + 1.0 / relay + 1.0 / topo.backhaul_bandwidth)
                    }
                } else {
                    let b = topo.link_bandwidth[n][m];
                    (b > 0.0).then(|| up + 1.0 / b)
                };
                t[(u * nodes + n) * targets + m] = per_bit.map(|p| data * p);
            }
        }
    }
    LatencyTable {
        users,
        nodes,
        targets,
        t,
        xi: vec![None; users * targets],
        zeta: vec![None; users * targets],
        uplink,
    }
}

/// Fills the best-access latency and its minimizing node for every
/// (user, target). Ties go to the lowest node index.
pub fn reduce_access(mut lt: LatencyTable) -> LatencyTable {
    for u in 0..lt.users {
        for m in 0..lt.targets {
            let mut best: Option<(usize, f64)> = None;
            for n in 0..lt.nodes {
                if let Some(v) = lt.latency(u, n, m) {
                    if best.map_or(true, |(_, b)| v < b) {
                        best = Some((n, v));
                    }
                }
            }
            lt.xi[u * lt.targets + m] = best.map(|(_, v)| v);
            lt.zeta[u * lt.targets + m] = best.map(|(n, _)| n);
        }
    }
    lt
}

impl LatencyTable {
    /// Tensor plus reduction in one step.
    pub fn build(s: &Scenario) -> Self {
        reduce_access(latency_tensor(s))
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_targets(&self) -> usize {
        self.targets
    }

    pub fn latency(&self, u: usize, n: usize, m: usize) -> Option<f64> {
        self.t[(u * self.nodes + n) * self.targets + m]
    }

    /// Best latency from user `u` to target `m` over all access nodes.
    pub fn xi(&self, u: usize, m: usize) -> Option<f64> {
        self.xi[u * self.targets + m]
    }

    /// Access node that attains [`Self::xi`].
    pub fn zeta(&self, u: usize, m: usize) -> Option<usize> {
        self.zeta[u * self.targets + m]
    }

    pub fn uplink(&self, u: usize, n: usize) -> f64 {
        self.uplink[u * self.nodes + n]
    }

    /// Targets reachable by `u`, sorted by ascending latency (ties by index).
    pub fn targets_by_latency(&self, u: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> =
            (0..self.targets).filter_map(|m| self.xi(u, m).map(|x| (m, x))).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Access decisions implied by an assignment: each user attaches to the
    /// node minimizing latency towards its assigned target.
    pub fn recover_access(&self, w: &[Vec<bool>]) -> Vec<Vec<bool>> {
        let mut z = vec![vec![false; self.nodes]; w.len()];
        for (u, row) in w.iter().enumerate() {
            for (m, &assigned) in row.iter().enumerate() {
                if assigned {
                    if let Some(n) = self.zeta(u, m) {
                        z[u][n] = true;
                    }
                }
            }
        }
        z
    }
}
