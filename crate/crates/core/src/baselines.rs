//! Benchmark heuristics and the exact small-instance oracle.

use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmOutcome, AdmmParams};
use crate::error::{Error, Result};
use crate::ilp::IlpInstance;
use crate::latency::LatencyTable;
use crate::model::{Scenario, Solution};
use crate::rounding::{self, services_from_layers, StopRule};

/// Per-node deployment bookkeeping shared by the greedy baselines.
struct EdgeState<'a> {
    s: &'a Scenario,
    y: Vec<Vec<bool>>,
    hosts: Vec<Vec<bool>>,
    storage: Vec<f64>,
    compute: Vec<f64>,
}

impl<'a> EdgeState<'a> {
    fn new(s: &'a Scenario) -> Self {
        Self {
            s,
            y: vec![vec![false; s.num_layers()]; s.num_nodes()],
            hosts: vec![vec![false; s.num_services()]; s.num_nodes()],
            storage: s.nodes.iter().map(|n| n.storage_capacity).collect(),
            compute: s.nodes.iter().map(|n| n.compute_capacity).collect(),
        }
    }

    /// MB still needed at `n` to host `service`; shared layers count once.
    fn missing_bytes(&self, n: usize, service: usize) -> f64 {
        self.s
            .catalog
            .layers_of(service)
            .filter(|&l| !self.y[n][l])
            .map(|l| self.s.catalog.layer_sizes[l])
            .sum()
    }

    fn can_deploy(&self, n: usize, service: usize) -> bool {
        self.hosts[n][service] || self.missing_bytes(n, service) <= self.storage[n]
    }

    fn deploy(&mut self, n: usize, service: usize) {
        if self.hosts[n][service] {
            return;
        }
        let missing: Vec<usize> = self.s.catalog.layers_of(service).filter(|&l| !self.y[n][l]).collect();
        for l in missing {
            self.y[n][l] = true;
            self.storage[n] -= self.s.catalog.layer_sizes[l];
        }
        self.hosts[n][service] = true;
    }

    fn finish(self, lt: &LatencyTable, targets: &[usize]) -> Result<Solution> {
        let x = services_from_layers(self.s, &self.y);
        Solution::assemble(self.s, lt, x, self.y, targets)
    }
}

fn gap(options: &[(usize, f64)]) -> f64 {
    match options {
        [a, b, ..] => b.1 - a.1,
        _ => f64::INFINITY,
    }
}

/// Latency-difference greedy: users with the most to lose go first and take
/// their fastest target that can still host (or already hosts) the service.
pub fn ldg(s: &Scenario, lt: &LatencyTable) -> Result<Solution> {
    let cloud = s.cloud();
    let mut order: Vec<(usize, f64)> = (0..s.num_users()).map(|u| (u, gap(&lt.targets_by_latency(u)))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut st = EdgeState::new(s);
    let mut targets = vec![cloud; s.num_users()];
    for (u, _) in order {
        let service = s.users[u].requested_service;
        let demand = s.demand_of(u);
        for (m, _) in lt.targets_by_latency(u) {
            if m == cloud {
                break;
            }
            if st.compute[m] >= demand && st.can_deploy(m, service) {
                st.deploy(m, service);
                st.compute[m] -= demand;
                targets[u] = m;
                break;
            }
        }
    }
    st.finish(lt, &targets)
}

/// Popularity greedy: each node deploys the services most requested inside
/// its coverage until the next one does not fit, then users take their
/// fastest hosting target with spare compute.
pub fn mdg(s: &Scenario, lt: &LatencyTable) -> Result<Solution> {
    let cloud = s.cloud();
    let mut st = EdgeState::new(s);
    for n in 0..s.num_nodes() {
        let mut counts = vec![0usize; s.num_services()];
        for u in (0..s.num_users()).filter(|&u| s.covers(u, n)) {
            counts[s.users[u].requested_service] += 1;
        }
        let mut ranked: Vec<usize> = (0..s.num_services()).filter(|&i| counts[i] > 0).collect();
        ranked.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        for i in ranked {
            if !st.can_deploy(n, i) {
                break;
            }
            st.deploy(n, i);
        }
    }
    let hosts = services_from_layers(s, &st.y);

    let mut targets = vec![cloud; s.num_users()];
    for (u, target) in targets.iter_mut().enumerate() {
        let service = s.users[u].requested_service;
        let demand = s.demand_of(u);
        for (m, _) in lt.targets_by_latency(u) {
            if m == cloud {
                break;
            }
            if hosts[m][service] && st.compute[m] >= demand {
                st.compute[m] -= demand;
                *target = m;
                break;
            }
        }
    }
    st.finish(lt, &targets)
}

/// Greedy rounding of the box relaxation: ADMM without the sphere, then the
/// same rounding as the proposed pipeline.
pub fn gr(
    s: &Scenario,
    lt: &LatencyTable,
    inst: &IlpInstance,
    params: &AdmmParams,
    stop: StopRule,
) -> Result<(Solution, AdmmOutcome)> {
    let relaxed = admm::run(inst, &params.box_only(), None)?;
    let sol = rounding::round(&relaxed.v, s, lt, stop)?;
    Ok((sol, relaxed))
}

/// Size limits of the exact oracle. `max_scns` excludes the macro cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_scns: usize,
    pub max_users: usize,
    pub max_services: usize,
    pub max_layers: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_scns: 4, max_users: 8, max_services: 4, max_layers: 10 }
    }
}

struct Search<'a> {
    s: &'a Scenario,
    order: Vec<usize>,
    options: Vec<Vec<(usize, f64)>>,
    /// `suffix_bound[k]`: sum of best latencies of users `order[k..]`.
    suffix_bound: Vec<f64>,
    union_bytes: Vec<f64>,
    masks: Vec<usize>,
    load: Vec<f64>,
    current: Vec<usize>,
    best_cost: f64,
    best: Vec<usize>,
}

impl Search<'_> {
    fn descend(&mut self, k: usize, cost: f64) {
        if cost + self.suffix_bound[k] >= self.best_cost - 1e-12 {
            return;
        }
        if k == self.order.len() {
            self.best_cost = cost;
            self.best.clone_from(&self.current);
            return;
        }
        let u = self.order[k];
        let cloud = self.s.cloud();
        let bit = 1usize << self.s.users[u].requested_service;
        let demand = self.s.demand_of(u);
        for j in 0..self.options[u].len() {
            let (m, t) = self.options[u][j];
            if m == cloud {
                self.current[u] = m;
                self.descend(k + 1, cost + t);
                continue;
            }
            let node = &self.s.nodes[m];
            if self.load[m] + demand > node.compute_capacity {
                continue;
            }
            let mask = self.masks[m] | bit;
            if self.union_bytes[mask] > node.storage_capacity {
                continue;
            }
            let saved = self.masks[m];
            self.masks[m] = mask;
            self.load[m] += demand;
            self.current[u] = m;
            self.descend(k + 1, cost + t);
            self.load[m] -= demand;
            self.masks[m] = saved;
        }
    }
}

/// Globally optimal deployment and assignment by branch and bound over the
/// task assignment. A node's deployment is implied by the services assigned
/// to it: the union of their layers, which must fit its storage.
pub fn exact(s: &Scenario, lt: &LatencyTable, limits: &OracleLimits) -> Result<Solution> {
    let scns = s.num_nodes() - 1;
    if scns > limits.max_scns
        || s.num_users() > limits.max_users
        || s.num_services() > limits.max_services
        || s.num_layers() > limits.max_layers
    {
        return Err(Error::OracleLimits(format!(
            "N={scns} U={} I={} L={} exceeds N<={} U<={} I<={} L<={}",
            s.num_users(),
            s.num_services(),
            s.num_layers(),
            limits.max_scns,
            limits.max_users,
            limits.max_services,
            limits.max_layers
        )));
    }
    let services = s.num_services();
    let union_bytes: Vec<f64> = (0..1usize << services)
        .map(|mask| {
            (0..s.num_layers())
                .filter(|&l| (0..services).any(|i| mask >> i & 1 == 1 && s.catalog.membership[i][l]))
                .map(|l| s.catalog.layer_sizes[l])
                .sum()
        })
        .collect();

    let options: Vec<Vec<(usize, f64)>> = (0..s.num_users()).map(|u| lt.targets_by_latency(u)).collect();
    if let Some(u) = options.iter().position(|o| !o.iter().any(|&(m, _)| m == s.cloud())) {
        return Err(Error::Precondition(format!("user {u} cannot reach the cloud")));
    }
    let mut order: Vec<usize> = (0..s.num_users()).collect();
    order.sort_by(|&a, &b| gap(&options[b]).total_cmp(&gap(&options[a])).then(a.cmp(&b)));
    let mut suffix_bound = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix_bound[k] = suffix_bound[k + 1] + options[order[k]][0].1;
    }
    let cloud_assignment = vec![s.cloud(); s.num_users()];
    let cloud_cost: f64 = (0..s.num_users()).map(|u| lt.xi(u, s.cloud()).unwrap_or(f64::INFINITY)).sum();

    let mut search = Search {
        s,
        order,
        options,
        suffix_bound,
        union_bytes,
        masks: vec![0; s.num_nodes()],
        load: vec![0.0; s.num_nodes()],
        current: cloud_assignment.clone(),
        best_cost: cloud_cost + 1e-9,
        best: cloud_assignment,
    };
    search.descend(0, 0.0);

    let mut x = vec![vec![false; services]; s.num_nodes()];
    let mut y = vec![vec![false; s.num_layers()]; s.num_nodes()];
    for (u, &m) in search.best.iter().enumerate() {
        if m < s.num_nodes() {
            let service = s.users[u].requested_service;
            x[m][service] = true;
            for l in s.catalog.layers_of(service) {
                y[m][l] = true;
            }
        }
    }
    Solution::assemble(s, lt, x, y, &search.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::{update_duals, AdmmProblem, AdmmState};
    use crate::ilp::build_ilp;
    use crate::model::check_feasible;
    use crate::scenario::{generate, GenerationConfig};
    use crate::testkit::Hand;

    fn small(seed: u64, users: usize) -> Scenario {
        generate(&GenerationConfig {
            seed,
            num_users: users,
            num_scns: 2,
            num_services: 2,
            num_layers: 8,
            ..Default::default()
        })
        .unwrap()
    }

    /// Tries every target per user; the deployment of a node is the union of
    /// the layers its tasks need, which is the cheapest one that hosts them.
    fn brute_force(s: &Scenario, lt: &LatencyTable) -> f64 {
        let (users, targets) = (s.num_users(), s.num_targets());
        let mut best = f64::INFINITY;
        let mut choice = vec![0usize; users];
        loop {
            if choice.iter().enumerate().all(|(u, &m)| lt.xi(u, m).is_some()) {
                let mut x = vec![vec![false; s.num_services()]; s.num_nodes()];
                let mut y = vec![vec![false; s.num_layers()]; s.num_nodes()];
                for (u, &m) in choice.iter().enumerate() {
                    if m < s.num_nodes() {
                        let i = s.users[u].requested_service;
                        x[m][i] = true;
                        for l in s.catalog.layers_of(i) {
                            y[m][l] = true;
                        }
                    }
                }
                let sol = Solution::assemble(s, lt, x, y, &choice).unwrap();
                if check_feasible(s, &sol).unwrap().is_feasible() {
                    best = best.min(sol.objective);
                }
            }
            let mut k = 0;
            while k < users {
                choice[k] += 1;
                if choice[k] < targets {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == users {
                return best;
            }
        }
    }

    #[test]
    fn exact_matches_brute_force() {
        for seed in 0..25 {
            let s = small(seed, 5);
            let lt = LatencyTable::build(&s);
            let sol = exact(&s, &lt, &OracleLimits::default()).unwrap();
            assert!(check_feasible(&s, &sol).unwrap().is_feasible());
            let bf = brute_force(&s, &lt);
            assert!((sol.objective - bf).abs() <= 1e-9 * bf, "seed {seed}: {} vs {bf}", sol.objective);
        }
    }

    #[test]
    fn exact_is_a_lower_bound_for_the_heuristics() {
        for seed in 0..15 {
            let s = small(seed, 8);
            let lt = LatencyTable::build(&s);
            let inst = build_ilp(&s, &lt);
            let opt = exact(&s, &lt, &OracleLimits::default()).unwrap().objective;
            let (gr_sol, _) = gr(&s, &lt, &inst, &AdmmParams::default(), StopRule::FirstFailure).unwrap();
            for (name, sol) in [("ldg", ldg(&s, &lt).unwrap()), ("mdg", mdg(&s, &lt).unwrap()), ("gr", gr_sol)] {
                assert!(check_feasible(&s, &sol).unwrap().is_feasible(), "{name} seed {seed}");
                assert!(opt <= sol.objective + 1e-9, "{name} seed {seed}: {} < {opt}", sol.objective);
            }
        }
    }

    fn one_user(storage: f64) -> Scenario {
        Hand::new(&[40.0, 60.0], &[&[0, 1]], &[0.5])
            .scn(storage, 1.0)
            .mcn(storage, 1.0)
            .user(0, 6.0, &[(0, 12.0), (1, 6.0)])
            .build()
    }

    #[test]
    fn single_user_takes_its_fastest_target() {
        let s = one_user(200.0);
        let lt = LatencyTable::build(&s);
        let best = lt.targets_by_latency(0)[0];
        assert_eq!(best.0, 0);
        for sol in [ldg(&s, &lt).unwrap(), exact(&s, &lt, &OracleLimits::default()).unwrap()] {
            assert_eq!(sol.assignment(), vec![Some(0)]);
            assert!((sol.objective - best.1).abs() < 1e-12);
        }
        // Exact picks min(node, cloud) even when the node cannot hold the image.
        let tight = one_user(99.0);
        let lt = LatencyTable::build(&tight);
        let sol = exact(&tight, &lt, &OracleLimits::default()).unwrap();
        assert_eq!(sol.objective, lt.xi(0, tight.cloud()).unwrap());
    }

    #[test]
    fn no_storage_means_all_cloud() {
        let s = one_user(0.0);
        let lt = LatencyTable::build(&s);
        let cloud = Solution::all_cloud(&s, &lt).unwrap();
        assert_eq!(ldg(&s, &lt).unwrap(), cloud);
        assert_eq!(mdg(&s, &lt).unwrap(), cloud);
        assert_eq!(exact(&s, &lt, &OracleLimits::default()).unwrap(), cloud);
    }

    #[test]
    fn nodes_without_compute_are_never_used() {
        // The macro cell has 0.1 GHz against a 0.5 GHz demand; the SCN fits
        // both tasks.
        let s = Hand::new(&[40.0], &[&[0]], &[0.5])
            .scn(100.0, 1.0)
            .mcn(100.0, 0.1)
            .user(0, 6.0, &[(0, 12.0), (1, 6.0)])
            .user(0, 6.0, &[(0, 12.0), (1, 6.0)])
            .build();
        let lt = LatencyTable::build(&s);
        let sol = exact(&s, &lt, &OracleLimits::default()).unwrap();
        assert!(sol.objective <= Solution::all_cloud(&s, &lt).unwrap().objective);
        assert_eq!(sol.assignment(), vec![Some(0), Some(0)]);
        for sol in [ldg(&s, &lt).unwrap(), mdg(&s, &lt).unwrap()] {
            assert!(sol.assignment().iter().all(|t| *t != Some(1)));
        }
    }

    #[test]
    fn everything_stays_in_the_cloud_when_it_is_fastest() {
        // A 1 Gbps backhaul against a 1 Mbps link from the access node to the
        // SCN makes relaying to the SCN slower than going to the cloud.
        let s = Hand::new(&[40.0], &[&[0]], &[0.5])
            .bandwidths(1.0, 1.0, 1000.0)
            .scn(100.0, 1.0)
            .mcn(0.0, 1.0)
            .user(0, 6.0, &[(1, 6.0)])
            .user(0, 6.0, &[(1, 6.0)])
            .build();
        let lt = LatencyTable::build(&s);
        assert!(lt.xi(0, s.cloud()).unwrap() < lt.xi(0, 0).unwrap());
        let cloud = Solution::all_cloud(&s, &lt).unwrap();
        assert_eq!(exact(&s, &lt, &OracleLimits::default()).unwrap(), cloud);
        assert_eq!(ldg(&s, &lt).unwrap(), cloud);
    }

    #[test]
    fn larger_gap_wins_the_contended_node() {
        // The SCN fits one task. User 1 has the faster uplink to it and a
        // slow macro path, so it loses more by being displaced.
        let s = Hand::new(&[40.0], &[&[0]], &[0.6])
            .scn(100.0, 1.0)
            .mcn(0.0, 1.0)
            .user(0, 6.0, &[(0, 12.0), (1, 6.0)])
            .user(0, 6.0, &[(0, 30.0), (1, 3.0)])
            .build();
        let lt = LatencyTable::build(&s);
        let gap = |u| {
            let t = lt.targets_by_latency(u);
            t[1].1 - t[0].1
        };
        assert!(gap(1) > gap(0));
        let sol = ldg(&s, &lt).unwrap();
        assert_eq!(sol.assignment(), vec![Some(s.cloud()), Some(0)]);
    }

    /// Two single-layer services of 60 MB on an SCN that fits one.
    fn popularity(counts: [usize; 2]) -> Scenario {
        let mut h = Hand::new(&[60.0, 60.0], &[&[0], &[1]], &[0.1, 0.1]).scn(100.0, 10.0).mcn(0.0, 10.0);
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                h = h.user(i, 6.0, &[(0, 12.0), (1, 6.0)]);
            }
        }
        h.build()
    }

    #[test]
    fn popular_service_is_deployed() {
        let s = popularity([1, 5]);
        let lt = LatencyTable::build(&s);
        let sol = mdg(&s, &lt).unwrap();
        assert_eq!(sol.x[0], vec![false, true]);
        let a = sol.assignment();
        assert_eq!(a[0], Some(s.cloud()));
        assert!(a[1..].iter().all(|&t| t == Some(0)));
    }

    #[test]
    fn popularity_ties_go_to_the_lower_index() {
        let s = popularity([2, 2]);
        let lt = LatencyTable::build(&s);
        assert_eq!(mdg(&s, &lt).unwrap().x[0], vec![true, false]);
    }

    #[test]
    fn popularity_greedy_by_hand() {
        // Services: 0 = {0, 1}, 1 = {1, 2}, 2 = {3}; sizes 30, 40, 20, 50.
        // SCN 0 (storage 100) covers users 0..4: services 1, 1, 0, 2.
        // SCN 1 (storage 60) covers users 0..6: the above plus 2, 2.
        // SCN 0 deploys 1 (60 MB), then 0 needs only layer 0 (30 MB), then 2
        // (50 MB) no longer fits. SCN 1 ranks 2 first (3 users): 50 MB, then
        // 1 (60 MB) does not fit and the scan stops.
        let s = Hand::new(&[30.0, 40.0, 20.0, 50.0], &[&[0, 1], &[1, 2], &[3]], &[0.4, 0.4, 0.4])
            .scn(100.0, 1.0)
            .scn(60.0, 1.0)
            .mcn(0.0, 1.0)
            .user(1, 6.0, &[(0, 20.0), (1, 10.0), (2, 6.0)])
            .user(1, 6.0, &[(0, 20.0), (1, 10.0), (2, 6.0)])
            .user(0, 6.0, &[(0, 20.0), (1, 10.0), (2, 6.0)])
            .user(2, 6.0, &[(0, 20.0), (1, 10.0), (2, 6.0)])
            .user(2, 6.0, &[(1, 10.0), (2, 6.0)])
            .user(2, 6.0, &[(1, 10.0), (2, 6.0)])
            .build();
        let lt = LatencyTable::build(&s);
        let sol = mdg(&s, &lt).unwrap();
        assert_eq!(sol.x[0], vec![true, true, false]);
        assert_eq!(sol.y[0], vec![true, true, true, false]);
        assert_eq!(sol.x[1], vec![false, false, true]);
        assert_eq!(sol.y[1], vec![false, false, false, true]);
        assert!(check_feasible(&s, &sol).unwrap().is_feasible());
        // Compute: two tasks per SCN at 0.4 GHz each.
        let a: Vec<usize> = sol.assignment().into_iter().map(Option::unwrap).collect();
        for n in 0..2 {
            assert!(a.iter().filter(|&&m| m == n).count() <= 2);
        }
        // User 3 (service 2) is not hosted at SCN 0 and lands on SCN 1.
        assert_eq!(a[3], 1);
    }

    #[test]
    fn box_relaxation_is_exact_on_an_integral_instance() {
        let s = one_user(200.0);
        let lt = LatencyTable::build(&s);
        let inst = build_ilp(&s, &lt);
        let opt = exact(&s, &lt, &OracleLimits::default()).unwrap();
        let (sol, relaxed) = gr(&s, &lt, &inst, &AdmmParams::default(), StopRule::FirstFailure).unwrap();
        assert!((sol.objective - opt.objective).abs() < 1e-12);
        assert!(relaxed.trace.iter().all(|r| r.sphere_residual == 0.0));
    }

    #[test]
    fn sphere_terms_are_inert_without_the_sphere() {
        let s = one_user(200.0);
        let inst = build_ilp(&s, &LatencyTable::build(&s));
        let params = AdmmParams::default().box_only();
        let problem = AdmmProblem::new(&inst, true);
        let mut st = AdmmState::new(&problem, &params, Some(vec![0.3; inst.q()]));
        assert_eq!(st.rho.rho2, 0.0);
        st.e2 = vec![0.9; inst.q()];
        st.e1 = vec![0.0; inst.q()];
        update_duals(&mut st, &problem, 1.0);
        assert_eq!(st.k2, vec![0.0; inst.q()]);
        assert_eq!(st.e2, vec![0.9; inst.q()]);
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let s = small(1, 9);
        let lt = LatencyTable::build(&s);
        assert!(matches!(exact(&s, &lt, &OracleLimits::default()), Err(Error::OracleLimits(_))));
        let wide = OracleLimits { max_users: 9, ..OracleLimits::default() };
        assert!(exact(&s, &lt, &wide).is_ok());
    }
}
