//! Seeded experiment sweeps, solver dispatch and CSV result tables.
//!
//! Result CSV columns, in order (schema [`RESULT_SCHEMA`]):
//!
//! `scenario_id, seed, sweep_value, algorithm, global_latency,
//! edge_containers, distinct_containers, runtime_ms, admm_iterations, feasible`
//!
//! `edge_containers` counts tasks served at the edge; `distinct_containers`
//! counts distinct `(node, service)` pairs serving at least one task.
//! `runtime_ms` is zero unless timing is enabled, so that untimed runs are
//! byte-reproducible.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmParams};
use crate::baselines::{self, OracleLimits};
use crate::error::{Error, Result};
use crate::format::write_scenario;
use crate::ilp::build_ilp;
use crate::latency::LatencyTable;
use crate::model::{check_feasible, Scenario, Solution};
use crate::rounding::{self, StopRule};
use crate::scenario::{generate, GenerationConfig, Range};

pub const RESULT_SCHEMA: &str = "mslayer-results/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Sphere-box ADMM followed by the rounding heuristic.
    Admm,
    Ldg,
    Mdg,
    Gr,
    Exact,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Admm, Self::Ldg, Self::Mdg, Self::Gr, Self::Exact];
    /// Everything that scales to default-size scenarios.
    pub const HEURISTICS: [Algorithm; 4] = [Self::Admm, Self::Ldg, Self::Mdg, Self::Gr];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Admm => "admm",
            Self::Ldg => "ldg",
            Self::Mdg => "mdg",
            Self::Gr => "gr",
            Self::Exact => "exact",
        }
    }

    pub fn uses_admm(self) -> bool {
        matches!(self, Self::Admm | Self::Gr)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?} (expected admm, ldg, mdg, gr or exact)")))
    }
}

/// Knobs shared by every solver.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub admm: AdmmParams,
    pub stop: StopRule,
    pub oracle: OracleLimits,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub solution: Solution,
    /// Zero for solvers that do not iterate.
    pub admm_iterations: usize,
    pub runtime_ms: f64,
}

/// Runs one algorithm on one scenario. The result is not validated here.
pub fn solve(alg: Algorithm, s: &Scenario, lt: &LatencyTable, cfg: &SolverConfig) -> Result<SolveReport> {
    let start = Instant::now();
    let (solution, admm_iterations) = match alg {
        Algorithm::Admm => {
            let inst = build_ilp(s, lt);
            let relaxed = admm::run(&inst, &cfg.admm, None)?;
            (rounding::round(&relaxed.v, s, lt, cfg.stop)?, relaxed.iterations)
        }
        Algorithm::Gr => {
            let inst = build_ilp(s, lt);
            let (sol, relaxed) = baselines::gr(s, lt, &inst, &cfg.admm, cfg.stop)?;
            (sol, relaxed.iterations)
        }
        Algorithm::Ldg => (baselines::ldg(s, lt)?, 0),
        Algorithm::Mdg => (baselines::mdg(s, lt)?, 0),
        Algorithm::Exact => (baselines::exact(s, lt, &cfg.oracle)?, 0),
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(SolveReport { algorithm: alg, solution, admm_iterations, runtime_ms })
}

/// Tasks served at an edge node (one container each).
pub fn count_edge_containers(sol: &Solution) -> usize {
    sol.w
        .iter()
        .filter(|row| row.iter().take(row.len().saturating_sub(1)).any(|&b| b))
        .count()
}

/// Distinct `(node, service)` pairs that serve at least one task.
pub fn count_distinct_containers(s: &Scenario, sol: &Solution) -> usize {
    let mut used = vec![vec![false; s.num_services()]; s.num_nodes()];
    for (u, row) in sol.w.iter().enumerate() {
        for (m, &on) in row.iter().enumerate().take(s.num_nodes()) {
            if on {
                used[m][s.users[u].requested_service] = true;
            }
        }
    }
    used.iter().flatten().filter(|&&b| b).count()
}

/// Which generator parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Number of users.
    Workload,
    /// Mean SCN storage in MB; cells draw from `[0.5v, 1.5v]`.
    Storage,
    /// Mean SCN compute in GHz; cells draw from `[0.8v, 1.2v]`.
    Compute,
    /// Number of SCNs.
    Density,
    /// A single point using the base configuration unchanged.
    None,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Workload => "workload",
            Self::Storage => "storage",
            Self::Compute => "compute",
            Self::Density => "density",
            Self::None => "none",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, Self::Workload | Self::Density)
    }

    /// The base configuration with this axis set to `value`.
    pub fn apply(self, base: &GenerationConfig, value: f64) -> GenerationConfig {
        let mut cfg = base.clone();
        match self {
            Self::Workload => cfg.num_users = value as usize,
            Self::Density => cfg.num_scns = value as usize,
            Self::Storage => cfg.storage_range = Range::new(0.5 * value, 1.5 * value),
            Self::Compute => cfg.compute_range = Range::new(0.8 * value, 1.2 * value),
            Self::None => {}
        }
        cfg
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Workload, Self::Storage, Self::Compute, Self::Density, Self::None]
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown sweep axis {s:?} (expected workload, storage, compute, density or none)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub repetitions: usize,
    /// Its seed is the base of every derived scenario seed.
    pub base: GenerationConfig,
    pub algorithms: Vec<Algorithm>,
    pub solver: SolverConfig,
    /// Record wall-clock runtimes (breaks byte-reproducibility).
    pub timing: bool,
    /// Where infeasible scenarios are dumped before aborting.
    pub dump_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            axis: SweepAxis::None,
            values: vec![0.0],
            repetitions: 1,
            base: GenerationConfig::default(),
            algorithms: Algorithm::HEURISTICS.to_vec(),
            solver: SolverConfig::default(),
            timing: false,
            dump_dir: None,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.values.is_empty() {
            return bad("a plan needs at least one axis value".into());
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("axis values must be strictly increasing".into());
        }
        if self.axis.is_count() && self.values.iter().any(|&v| !(v >= 1.0 && v.fract() == 0.0)) {
            return bad(format!("{} values must be positive integers", self.axis));
        }
        if matches!(self.axis, SweepAxis::Storage | SweepAxis::Compute) && self.values.iter().any(|&v| !(v > 0.0)) {
            return bad(format!("{} values must be positive", self.axis));
        }
        if self.algorithms.is_empty() {
            return bad("a plan needs at least one algorithm".into());
        }
        if self.values.len() > u32::MAX as usize || self.repetitions > u32::MAX as usize {
            return bad("too many plan points".into());
        }
        self.solver.admm.validate()?;
        for &v in &self.values {
            self.axis.apply(&self.base, v).validate()?;
        }
        Ok(())
    }
}

/// splitmix64 output function; a bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scenario seed for one plan point: `mix64(base + (k+1)·φ)` with
/// `k = axis_index·2³² + repetition` and `φ` the odd golden-ratio constant.
/// Injective in `(axis_index, repetition)` for indices below 2³².
pub fn child_seed(base_seed: u64, axis_index: usize, repetition: usize) -> u64 {
    let k = ((axis_index as u64) << 32) | (repetition as u64 & 0xffff_ffff);
    mix64(base_seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub seed: u64,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    /// Seconds.
    pub global_latency: f64,
    pub edge_containers: usize,
    pub distinct_containers: usize,
    pub runtime_ms: f64,
    pub admm_iterations: usize,
    pub feasible: bool,
}

/// Solves and validates one scenario with every algorithm in the plan.
fn run_point(plan: &ExperimentPlan, id: &str, seed: u64, value: f64, s: &Scenario) -> Result<Vec<ResultRow>> {
    let lt = LatencyTable::build(s);
    let mut rows = Vec::with_capacity(plan.algorithms.len());
    for &alg in &plan.algorithms {
        let report = solve(alg, s, &lt, &plan.solver)?;
        let feas = check_feasible(s, &report.solution)?;
        if !feas.is_feasible() {
            let mut detail = format!("scenario {id} (seed {seed}): {feas}");
            if let Some(dir) = &plan.dump_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{id}.json"));
                write_scenario(&path, s)?;
                detail.push_str(&format!("; scenario written to {}", path.display()));
            }
            return Err(Error::Infeasible { solver: alg.to_string(), detail });
        }
        rows.push(ResultRow {
            scenario_id: id.to_string(),
            seed,
            sweep_value: value,
            algorithm: alg,
            global_latency: report.solution.objective,
            edge_containers: count_edge_containers(&report.solution),
            distinct_containers: count_distinct_containers(s, &report.solution),
            runtime_ms: if plan.timing { report.runtime_ms } else { 0.0 },
            admm_iterations: report.admm_iterations,
            feasible: true,
        });
    }
    Ok(rows)
}

/// Runs every `(value, repetition, algorithm)` combination. Each
/// `(value, repetition)` pair gets one scenario shared by all algorithms.
/// Rows come out sorted by value, then repetition, then plan algorithm order.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    let mut rows = Vec::with_capacity(plan.values.len() * plan.repetitions * plan.algorithms.len());
    for (vi, &value) in plan.values.iter().enumerate() {
        for rep in 0..plan.repetitions {
            let seed = child_seed(plan.base.seed, vi, rep);
            let mut cfg = plan.axis.apply(&plan.base, value);
            cfg.seed = seed;
            let s = generate(&cfg)?;
            let id = format!("{}-{vi}-{rep}", plan.axis);
            rows.extend(run_point(plan, &id, seed, value, &s)?);
        }
    }
    Ok(rows)
}

pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

/// Metrics aggregated by [`emit_plot_data`].
pub const PLOT_METRICS: [&str; 5] =
    ["global_latency", "edge_containers", "distinct_containers", "runtime_ms", "admm_iterations"];

fn metric(row: &ResultRow, name: &str) -> f64 {
    match name {
        "global_latency" => row.global_latency,
        "edge_containers" => row.edge_containers as f64,
        "distinct_containers" => row.distinct_containers as f64,
        "runtime_ms" => row.runtime_ms,
        "admm_iterations" => row.admm_iterations as f64,
        _ => unreachable!("unknown metric {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repetition.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub metric: &'static str,
    pub rows: Vec<AggregateRow>,
}

impl PlotTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Mean and sample standard deviation per `(sweep value, algorithm)`, one
/// table per metric. Groups keep their first-appearance order.
pub fn emit_plot_data(rows: &[ResultRow]) -> Result<Vec<PlotTable>> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no result rows to aggregate".into()));
    }
    let mut groups: Vec<((f64, Algorithm), Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        let key = (row.sweep_value, row.algorithm);
        match groups.iter_mut().find(|(k, _)| k.0.to_bits() == key.0.to_bits() && k.1 == key.1) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    let tables = PLOT_METRICS
        .iter()
        .map(|&name| PlotTable {
            metric: name,
            rows: groups
                .iter()
                .map(|((value, alg), members)| {
                    let xs: Vec<f64> = members.iter().map(|r| metric(r, name)).collect();
                    let (mean, std) = mean_std(&xs);
                    AggregateRow { sweep_value: *value, algorithm: *alg, count: xs.len(), mean, std }
                })
                .collect(),
        })
        .collect();
    Ok(tables)
}

/// Mean and sample (n − 1) standard deviation; the latter is zero for n = 1.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
