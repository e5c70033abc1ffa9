//! Hand-built scenarios for unit tests.
//!
//! Every node sits at the origin and user `u` on the ring of radius
//! `10·(u+1)` m, so a node covers a prefix of the users and its radius is
//! the ring of the last user it covers. Uplink rates are set directly: the
//! builder solves for the channel gain that makes the Shannon formula return
//! the requested rate.

use crate::model::{MicroserviceCatalog, NodeSpec, Physics, Point, Scenario, Topology, UserSpec};

pub struct Hand {
    nodes: Vec<NodeSpec>,
    catalog: MicroserviceCatalog,
    users: Vec<(usize, f64, Vec<(usize, f64)>)>,
    unlinks: Vec<(usize, usize)>,
    scn_link: f64,
    mcn_link: f64,
    backhaul: f64,
}

/// Ring spacing in meters.
const USER_OFFSET: f64 = 10.0;

impl Hand {
    /// `services` lists the layer indices of each image.
    pub fn new(layer_sizes: &[f64], services: &[&[usize]], demand: &[f64]) -> Self {
        let membership = services
            .iter()
            .map(|layers| (0..layer_sizes.len()).map(|l| layers.contains(&l)).collect())
            .collect();
        Self {
            nodes: Vec::new(),
            catalog: MicroserviceCatalog {
                layer_sizes: layer_sizes.to_vec(),
                membership,
                compute_demand: demand.to_vec(),
            },
            users: Vec::new(),
            unlinks: Vec::new(),
            scn_link: 30.0,
            mcn_link: 10.0,
            backhaul: 20.0,
        }
    }

    /// Adds a small cell; call before [`Hand::mcn`].
    pub fn scn(mut self, storage: f64, compute: f64) -> Self {
        self.nodes.push(node(storage, compute, false));
        self
    }

    /// Adds the macro cell as the last node.
    pub fn mcn(mut self, storage: f64, compute: f64) -> Self {
        self.nodes.push(node(storage, compute, true));
        self
    }

    /// Adds a user requesting `service` with `data` Mbit, covered exactly by
    /// the listed nodes at the given uplink rates (Mbps).
    pub fn user(mut self, service: usize, data: f64, rates: &[(usize, f64)]) -> Self {
        self.users.push((service, data, rates.to_vec()));
        self
    }

    /// Bandwidth of every SCN-SCN, SCN-MCN and MCN-cloud link.
    pub fn bandwidths(mut self, scn_link: f64, mcn_link: f64, backhaul: f64) -> Self {
        self.scn_link = scn_link;
        self.mcn_link = mcn_link;
        self.backhaul = backhaul;
        self
    }

    pub fn unlink(mut self, n: usize, m: usize) -> Self {
        self.unlinks.push((n, m));
        self
    }

    pub fn build(self) -> Scenario {
        let physics = Physics::default();
        let count = self.nodes.len();
        assert!(count > 0 && self.nodes[count - 1].is_mcn, "the macro cell must be added last");
        let mcn = count - 1;
        let mut nodes = self.nodes;

        let mut users = Vec::new();
        let mut radii = vec![0.0f64; count];
        let mut min_uncovered = vec![f64::INFINITY; count];
        for (u, (service, data, rates)) in self.users.iter().enumerate() {
            let ring = USER_OFFSET * (u + 1) as f64;
            let mut gains = vec![0.0; count];
            for &(n, rate) in rates {
                gains[n] = gain_for_rate(&physics, rate, ring);
                radii[n] = radii[n].max(ring);
            }
            for n in 0..count {
                if !rates.iter().any(|&(m, _)| m == n) {
                    min_uncovered[n] = min_uncovered[n].min(ring);
                }
            }
            users.push(UserSpec {
                position: Point::new(ring, 0.0),
                requested_service: *service,
                data_size: *data,
                transmit_power_dbm: 23.0,
                channel_gains: gains,
            });
        }
        for n in 0..count {
            assert!(
                radii[n] < min_uncovered[n],
                "node {n}: coverage sets must be nested by user index (covered users first)"
            );
            nodes[n].coverage_radius = if radii[n] > 0.0 { radii[n] } else { 0.5 * USER_OFFSET };
        }

        let mut adjacency = vec![vec![false; count + 1]; count];
        let mut link_bandwidth = vec![vec![0.0; count]; count];
        for n in 0..count {
            for m in 0..count {
                adjacency[n][m] = true;
                if n != m {
                    link_bandwidth[n][m] = if n == mcn || m == mcn { self.mcn_link } else { self.scn_link };
                }
            }
            adjacency[n][count] = true;
        }
        for (n, m) in self.unlinks {
            adjacency[n][m] = false;
            adjacency[m][n] = false;
            link_bandwidth[n][m] = 0.0;
            link_bandwidth[m][n] = 0.0;
        }

        Scenario {
            nodes,
            topology: Topology { adjacency, link_bandwidth, backhaul_bandwidth: self.backhaul },
            catalog: self.catalog,
            users,
            physics,
        }
    }
}

fn node(storage: f64, compute: f64, is_mcn: bool) -> NodeSpec {
    NodeSpec {
        storage_capacity: storage,
        compute_capacity: compute,
        position: Point::new(0.0, 0.0),
        coverage_radius: 1.0,
        is_mcn,
    }
}

/// Channel gain giving uplink `rate` Mbps at `distance` meters.
pub fn gain_for_rate(phys: &Physics, rate: f64, distance: f64) -> f64 {
    let snr = (rate / phys.channel_bandwidth).exp2() - 1.0;
    let power_mw = 10f64.powf(23.0 / 10.0);
    let d = distance.max(phys.min_distance) / phys.path_loss_reference;
    snr * phys.noise_power / (power_mw * d.powf(-phys.path_loss_exponent))
}
