//! Random scenario generation with long-tail request popularity.
//!
//! Every draw comes from one `ChaCha8Rng` seeded with the config seed, in
//! this order:
//!
//! 1. small-cell positions (radius, angle per cell);
//! 2. small-cell storage then compute, per cell (skipped when homogeneous);
//! 3. for each small-cell pair `n < m`: link coin, then link bandwidth;
//! 4. small-cell to macro-cell bandwidth, per cell;
//! 5. per service: layer count, shareable fraction, compute demand;
//! 6. shared-pool permutation, pool layer sizes, pool picks, private sizes;
//! 7. per user: position, data size, channel gains per node;
//! 8. one `u64` seeding the request sampler.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MicroserviceCatalog, NodeSpec, Physics, Point, Scenario, Topology, UserSpec};

/// Zipf exponent placing 90% of requests on the 263 most popular of 1300
/// services.
pub const DEFAULT_ZIPF_EXPONENT: f64 = 1.204_676_827_386_31;

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn is_valid(&self) -> bool {
        self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub lo: usize,
    pub hi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub seed: u64,
    pub num_users: usize,
    pub num_scns: usize,
    pub num_services: usize,
    pub num_layers: usize,
    pub area_radius: f64,
    pub scn_radius: f64,
    pub storage_range: Range,
    pub compute_range: Range,
    pub mcn_storage: f64,
    pub mcn_compute: f64,
    pub layer_size_range: Range,
    pub layers_per_service_range: CountRange,
    pub shareable_fraction_range: Range,
    pub service_compute_range: Range,
    pub data_size_range: Range,
    pub inter_scn_bw_range: Range,
    pub scn_mcn_bw_range: Range,
    pub backhaul_bw: f64,
    pub edge_prob_scale: f64,
    pub zipf_exponent: f64,
    pub transmit_power_dbm: f64,
    /// Replace per-cell storage and compute draws with range midpoints.
    pub homogeneous: bool,
    pub physics: Physics,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_users: 100,
            num_scns: 15,
            num_services: 20,
            num_layers: 116,
            area_radius: 1000.0,
            scn_radius: 350.0,
            storage_range: Range::new(500.0, 1500.0),
            compute_range: Range::new(1.6, 2.4),
            mcn_storage: 2250.0,
            mcn_compute: 3.0,
            layer_size_range: Range::new(10.0, 400.0),
            layers_per_service_range: CountRange { lo: 4, hi: 8 },
            shareable_fraction_range: Range::new(0.12, 0.51),
            service_compute_range: Range::new(0.15, 0.45),
            data_size_range: Range::new(5.0, 20.0),
            inter_scn_bw_range: Range::new(30.0, 45.0),
            scn_mcn_bw_range: Range::new(8.0, 12.0),
            backhaul_bw: 20.0,
            edge_prob_scale: 500.0,
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
            transmit_power_dbm: 23.0,
            homogeneous: false,
            physics: Physics::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let ranges = [
            ("storage_range", self.storage_range),
            ("compute_range", self.compute_range),
            ("layer_size_range", self.layer_size_range),
            ("shareable_fraction_range", self.shareable_fraction_range),
            ("service_compute_range", self.service_compute_range),
            ("data_size_range", self.data_size_range),
            ("inter_scn_bw_range", self.inter_scn_bw_range),
            ("scn_mcn_bw_range", self.scn_mcn_bw_range),
        ];
        for (name, r) in ranges {
            if !r.is_valid() {
                return bad(format!("{name} must satisfy 0 < lo <= hi"));
            }
        }
        if self.shareable_fraction_range.hi >= 1.0 {
            return bad("shareable_fraction_range must stay below 1".into());
        }
        let scalars = [
            ("area_radius", self.area_radius),
            ("scn_radius", self.scn_radius),
            ("mcn_storage", self.mcn_storage),
            ("mcn_compute", self.mcn_compute),
            ("backhaul_bw", self.backhaul_bw),
            ("edge_prob_scale", self.edge_prob_scale),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be non-negative".into());
        }
        if self.num_services == 0 {
            return bad("num_services must be at least 1".into());
        }
        let k = self.layers_per_service_range;
        if k.lo < 2 || k.hi < k.lo {
            return bad("layers_per_service_range must satisfy 2 <= lo <= hi".into());
        }
        // Each image keeps at least as many private as shared layers and the
        // shared pool must be able to serve the widest shared draw.
        let min_layers = self.num_services * k.lo.div_ceil(2) + k.hi / 2;
        let max_layers = self.num_services * k.hi;
        if self.num_layers < min_layers || self.num_layers > max_layers {
            return bad(format!(
                "num_layers must lie in {min_layers}..={max_layers} for {} services",
                self.num_services
            ));
        }
        Ok(())
    }
}

/// Long-tail request popularity over service ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Popularity {
    pub exponent: f64,
}

impl Popularity {
    pub fn new(exponent: f64) -> Self {
        Self { exponent }
    }

    /// Probabilities of ranks `1..=n`, renormalized to sum to one.
    pub fn head_distribution(&self, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-self.exponent)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

fn head_mass(exponent: f64, total: usize, head: usize) -> f64 {
    let mut head_sum = 0.0;
    let mut all = 0.0;
    for r in 1..=total {
        let p = (r as f64).powf(-exponent);
        if r <= head {
            head_sum += p;
        }
        all += p;
    }
    head_sum / all
}

/// Finds the Zipf exponent whose `head_count` most popular of
/// `total_services` ranks carry `head_mass` of the probability.
pub fn fit_popularity(total_services: usize, head_count: usize, head_mass_target: f64) -> Result<f64> {
    if !(head_count > 0 && head_count < total_services) {
        return Err(Error::Precondition(format!(
            "head count {head_count} must lie strictly between 0 and {total_services}"
        )));
    }
    if !(head_mass_target > 0.0 && head_mass_target < 1.0) {
        return Err(Error::Precondition(format!("head mass {head_mass_target} must lie in (0, 1)")));
    }
    let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
    let mass_lo = head_mass(lo, total_services, head_count);
    let mass_hi = head_mass(hi, total_services, head_count);
    if (mass_lo - head_mass_target).abs() < 1e-12 {
        return Ok(0.0);
    }
    if head_mass_target < mass_lo || head_mass_target > mass_hi {
        return Err(Error::PopularityFit { target: head_mass_target, lo: mass_lo, hi: mass_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if head_mass(mid, total_services, head_count) < head_mass_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let err = (head_mass(s, total_services, head_count) - head_mass_target).abs();
    if err >= 1e-6 {
        return Err(Error::PopularityFit { target: head_mass_target, lo: mass_lo, hi: mass_hi });
    }
    Ok(s)
}

/// Draws one requested service per user from the renormalized head of the
/// popularity law: service `i` is rank `i + 1`.
pub fn sample_requests(popularity: &Popularity, num_users: usize, num_services: usize, seed: u64) -> Vec<usize> {
    if num_services <= 1 {
        return vec![0; num_users];
    }
    let weights = popularity.head_distribution(num_services);
    let dist = WeightedIndex::new(&weights).expect("zipf weights are positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_users).map(|_| dist.sample(&mut rng)).collect()
}

fn uniform_in_disk<R: Rng>(rng: &mut R, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Point::new(r * theta.cos(), r * theta.sin())
}

/// Builds a random scenario. The macro cell sits at the origin and covers
/// the whole area, so every user is reachable.
pub fn generate(cfg: &GenerationConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_scn = cfg.num_scns;
    let nodes_total = n_scn + 1;

    let positions: Vec<Point> = (0..n_scn).map(|_| uniform_in_disk(&mut rng, cfg.area_radius)).collect();
    let mut nodes: Vec<NodeSpec> = positions
        .iter()
        .map(|&position| {
            let (storage, compute) = if cfg.homogeneous {
                (cfg.storage_range.midpoint(), cfg.compute_range.midpoint())
            } else {
                let s = cfg.storage_range.sample(&mut rng);
                (s, cfg.compute_range.sample(&mut rng))
            };
            NodeSpec {
                storage_capacity: storage,
                compute_capacity: compute,
                position,
                coverage_radius: cfg.scn_radius,
                is_mcn: false,
            }
        })
        .collect();
    nodes.push(NodeSpec {
        storage_capacity: cfg.mcn_storage,
        compute_capacity: cfg.mcn_compute,
        position: Point::new(0.0, 0.0),
        coverage_radius: cfg.area_radius,
        is_mcn: true,
    });

    let mcn = n_scn;
    let mut adjacency = vec![vec![false; nodes_total + 1]; nodes_total];
    let mut link_bandwidth = vec![vec![0.0; nodes_total]; nodes_total];
    for (n, row) in adjacency.iter_mut().enumerate() {
        row[n] = true;
        row[nodes_total] = true;
        row[mcn] = true;
    }
    for n in 0..n_scn {
        for m in n + 1..n_scn {
            let d = positions[n].distance(&positions[m]);
            let linked = rng.random::<f64>() < (-d / cfg.edge_prob_scale).exp();
            let bw = cfg.inter_scn_bw_range.sample(&mut rng);
            if linked {
                adjacency[n][m] = true;
                adjacency[m][n] = true;
                link_bandwidth[n][m] = bw;
                link_bandwidth[m][n] = bw;
            }
        }
    }
    for n in 0..n_scn {
        let bw = cfg.scn_mcn_bw_range.sample(&mut rng);
        adjacency[mcn][n] = true;
        link_bandwidth[n][mcn] = bw;
        link_bandwidth[mcn][n] = bw;
    }
    let topology = Topology { adjacency, link_bandwidth, backhaul_bandwidth: cfg.backhaul_bw };

    let catalog = generate_catalog(cfg, &mut rng)?;

    let mut users: Vec<UserSpec> = (0..cfg.num_users)
        .map(|_| {
            let position = uniform_in_disk(&mut rng, cfg.area_radius);
            let data_size = cfg.data_size_range.sample(&mut rng);
            let channel_gains = (0..nodes_total).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            UserSpec {
                position,
                requested_service: 0,
                data_size,
                transmit_power_dbm: cfg.transmit_power_dbm,
                channel_gains,
            }
        })
        .collect();
    let request_seed: u64 = rng.random();
    let requests = sample_requests(
        &Popularity::new(cfg.zipf_exponent),
        cfg.num_users,
        cfg.num_services,
        request_seed,
    );
    for (user, service) in users.iter_mut().zip(requests) {
        user.requested_service = service;
    }

    Ok(Scenario { nodes, topology, catalog, users, physics: cfg.physics.clone() })
}

/// Per-service layer counts: `shared` layers come from the common pool and
/// `private` ones belong to the image alone.
#[derive(Debug, Clone, Copy)]
struct ImageShape {
    shared: usize,
    private: usize,
    fraction: f64,
}

/// Adjusts sampled image shapes so that pool plus private layers add up to
/// exactly `num_layers`, every pool layer is used by some image, and each
/// image keeps `1 <= shared <= private` within the per-image layer range.
/// Pool sizes are tried in order of distance from the one the sample
/// implies; a sample that already satisfies everything is kept. Returns the
/// pool size.
fn balance_layer_counts(shapes: &mut [ImageShape], cfg: &GenerationConfig) -> Result<usize> {
    let total = cfg.num_layers;
    let sampled_private: usize = shapes.iter().map(|s| s.private).sum();
    let natural = total.saturating_sub(sampled_private).max(1);
    let mut pools: Vec<usize> = (1..total).collect();
    pools.sort_by_key(|&p| (p.abs_diff(natural), p));
    for pool in pools {
        if let Some(fitted) = fit_shapes(shapes, pool, cfg) {
            shapes.copy_from_slice(&fitted);
            return Ok(pool);
        }
    }
    Err(Error::InvalidConfig(format!(
        "cannot arrange {} services into exactly {} layers",
        cfg.num_services, cfg.num_layers
    )))
}

/// Shapes for a fixed pool size, staying close to the sampled ones.
fn fit_shapes(sampled: &[ImageShape], pool: usize, cfg: &GenerationConfig) -> Option<Vec<ImageShape>> {
    let k = cfg.layers_per_service_range;
    let private_total = cfg.num_layers.checked_sub(pool)?;
    let (p_lo, p_hi) = (k.lo.div_ceil(2), k.hi - 1);
    let mut shapes = sampled.to_vec();
    for s in &mut shapes {
        s.private = s.private.clamp(p_lo, p_hi);
    }
    // Move the private sum onto its target one layer at a time, always on
    // the image with the most room in that direction.
    let mut sum: usize = shapes.iter().map(|s| s.private).sum();
    while sum < private_total {
        let s = shapes.iter_mut().filter(|s| s.private < p_hi).min_by_key(|s| s.private)?;
        s.private += 1;
        sum += 1;
    }
    while sum > private_total {
        let s = shapes.iter_mut().filter(|s| s.private > p_lo).max_by_key(|s| s.private)?;
        s.private -= 1;
        sum -= 1;
    }
    let mut slots = 0;
    for s in &mut shapes {
        let lo = 1.max(k.lo.saturating_sub(s.private));
        let hi = s.private.min(k.hi - s.private).min(pool);
        if lo > hi {
            return None;
        }
        s.shared = s.shared.clamp(lo, hi);
        slots += s.shared;
    }
    // Every pool layer needs at least one user.
    for s in &mut shapes {
        if slots >= pool {
            break;
        }
        let hi = s.private.min(k.hi - s.private).min(pool);
        let add = (hi - s.shared).min(pool - slots);
        s.shared += add;
        slots += add;
    }
    (slots >= pool).then_some(shapes)
}

/// Spreads `total` over `count` sizes inside `[lo, hi]` using random weights.
fn split_sizes<R: Rng>(rng: &mut R, count: usize, total: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut sizes = vec![lo; count];
    let weights: Vec<f64> = (0..count).map(|_| rng.random::<f64>() + 1e-3).collect();
    let mut budget = (total - lo * count as f64).max(0.0);
    let mut open: Vec<usize> = (0..count).collect();
    while budget > 1e-12 && !open.is_empty() {
        let wsum: f64 = open.iter().map(|&j| weights[j]).sum();
        let mut spilled = 0.0;
        let mut still_open = Vec::with_capacity(open.len());
        for &j in &open {
            let add = budget * weights[j] / wsum;
            let room = hi - sizes[j];
            if add >= room {
                sizes[j] = hi;
                spilled += add - room;
            } else {
                sizes[j] += add;
                still_open.push(j);
            }
        }
        budget = spilled;
        open = still_open;
    }
    sizes
}

fn generate_catalog<R: Rng>(cfg: &GenerationConfig, rng: &mut R) -> Result<MicroserviceCatalog> {
    let k = cfg.layers_per_service_range;
    let frac = cfg.shareable_fraction_range;
    let mut shapes = Vec::with_capacity(cfg.num_services);
    let mut demand = Vec::with_capacity(cfg.num_services);
    for _ in 0..cfg.num_services {
        let count = rng.random_range(k.lo..=k.hi);
        let fraction = frac.sample(rng);
        let shared = ((fraction * count as f64).round() as usize).clamp(1, count / 2);
        shapes.push(ImageShape { shared, private: count - shared, fraction });
        demand.push(cfg.service_compute_range.sample(rng));
    }
    let pool = balance_layer_counts(&mut shapes, cfg)?;

    let sizes = cfg.layer_size_range;
    let mut layer_sizes = vec![0.0; cfg.num_layers];
    let mut membership = vec![vec![false; cfg.num_layers]; cfg.num_services];

    let mut order: Vec<usize> = (0..pool).collect();
    order.shuffle(rng);
    for size in layer_sizes.iter_mut().take(pool) {
        *size = sizes.sample(rng);
    }
    let mut cursor = 0;
    for (i, shape) in shapes.iter().enumerate() {
        for _ in 0..shape.shared {
            let pick = if cursor < pool {
                cursor += 1;
                order[cursor - 1]
            } else {
                let free: Vec<usize> = (0..pool).filter(|&l| !membership[i][l]).collect();
                free[rng.random_range(0..free.len())]
            };
            membership[i][pick] = true;
        }
    }

    let mut next = pool;
    for (i, shape) in shapes.iter().enumerate() {
        let shared_bytes: f64 = (0..pool).filter(|&l| membership[i][l]).map(|l| layer_sizes[l]).sum();
        let p = shape.private as f64;
        // Fractions reachable with private sizes inside the size range.
        let reach_lo = shared_bytes / (shared_bytes + sizes.hi * p);
        let reach_hi = shared_bytes / (shared_bytes + sizes.lo * p);
        let lo = frac.lo.max(reach_lo);
        let hi = frac.hi.min(reach_hi);
        let target = if lo <= hi {
            shape.fraction.clamp(lo, hi)
        } else {
            shape.fraction.clamp(reach_lo, reach_hi)
        };
        let private_total = shared_bytes * (1.0 - target) / target;
        let private_sizes = split_sizes(rng, shape.private, private_total, sizes.lo, sizes.hi);
        for size in private_sizes {
            layer_sizes[next] = size;
            membership[i][next] = true;
            next += 1;
        }
    }
    debug_assert_eq!(next, cfg.num_layers);

    Ok(MicroserviceCatalog { layer_sizes, membership, compute_demand: demand })
}
