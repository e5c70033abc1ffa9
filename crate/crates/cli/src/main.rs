use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mslayer::admm::{self, write_trace_csv};
use mslayer::format::{read_scenario, write_scenario};
use mslayer::harness::{
    self, count_distinct_containers, count_edge_containers, emit_plot_data, read_results, run_experiment,
    write_results, ExperimentPlan, SolverConfig, SweepAxis,
};
use mslayer::ilp::{build_ilp, write_lp};
use mslayer::model::validate_scenario;
use mslayer::{check_feasible, generate, AdmmParams, Algorithm, Error, GenerationConfig, LatencyTable, StopRule};

#[derive(Parser)]
#[command(name = "mslayer", version, about = "Layer-aware microservice placement and task assignment for small-cell edge networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario and write it as JSON.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one scenario with one algorithm.
    Solve {
        /// Scenario JSON; generated from the generation flags when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, value_enum, default_value = "admm")]
        algo: AlgoArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the binary program in CPLEX LP format.
        #[arg(long)]
        lp_out: Option<PathBuf>,
        /// Write the per-iteration ADMM diagnostics as CSV (admm and gr only).
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run a seeded parameter sweep and write the result CSV.
    Sweep {
        /// Experiment plan as JSON; flags below are ignored when given.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "workload")]
        sweep: AxisArg,
        /// Comma-separated axis values; defaults to the axis' standard range.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Comma-separated algorithms.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "admm,ldg,mdg,gr")]
        algo: Vec<AlgoArg>,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Record wall-clock runtimes (output is then not byte-reproducible).
        #[arg(long)]
        timing: bool,
        /// Directory for scenarios that produced an infeasible solution.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a result CSV into one mean/std table per metric.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        /// Output directory; one `<metric>.csv` per metric.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    /// JSON generation config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    scns: Option<usize>,
    #[arg(long)]
    services: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Give every small cell the midpoint storage and compute.
    #[arg(long)]
    homogeneous: bool,
}

impl GenArgs {
    fn config(&self) -> Result<GenerationConfig, Error> {
        let mut cfg: GenerationConfig = match &self.config {
            Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))?,
            None => GenerationConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.users {
            cfg.num_users = v;
        }
        if let Some(v) = self.scns {
            cfg.num_scns = v;
        }
        if let Some(v) = self.services {
            cfg.num_services = v;
        }
        if let Some(v) = self.layers {
            cfg.num_layers = v;
        }
        cfg.homogeneous |= self.homogeneous;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    admm_rho1: Option<f64>,
    #[arg(long)]
    admm_rho2: Option<f64>,
    #[arg(long)]
    admm_rho3: Option<f64>,
    #[arg(long)]
    admm_rho4: Option<f64>,
    #[arg(long)]
    admm_gamma: Option<f64>,
    /// Defaults to the number of variables.
    #[arg(long)]
    admm_max_iters: Option<usize>,
    #[arg(long)]
    admm_near_binary_tol: Option<f64>,
    #[arg(long)]
    admm_equality_tol: Option<f64>,
    #[arg(long)]
    admm_pcg_tol: Option<f64>,
    #[arg(long)]
    admm_pcg_max_iters: Option<usize>,
    #[arg(long)]
    admm_rho_growth: Option<f64>,
    #[arg(long)]
    admm_rho2_growth: Option<f64>,
    #[arg(long)]
    admm_growth_every: Option<usize>,
    #[arg(long)]
    admm_rho_max: Option<f64>,
    /// Keep the inequality rows in their original units.
    #[arg(long)]
    admm_no_scale_rows: bool,
    /// Layer greedy keeps scanning past a layer that does not fit.
    #[arg(long)]
    skip_and_continue: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut p = AdmmParams::default();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.rho1, self.admm_rho1);
        set(&mut p.rho2, self.admm_rho2);
        set(&mut p.rho3, self.admm_rho3);
        set(&mut p.rho4, self.admm_rho4);
        set(&mut p.gamma, self.admm_gamma);
        set(&mut p.near_binary_tol, self.admm_near_binary_tol);
        set(&mut p.equality_tol, self.admm_equality_tol);
        set(&mut p.pcg_tol, self.admm_pcg_tol);
        set(&mut p.rho_growth, self.admm_rho_growth);
        set(&mut p.rho2_growth, self.admm_rho2_growth);
        set(&mut p.rho_max, self.admm_rho_max);
        if self.admm_max_iters.is_some() {
            p.max_iters = self.admm_max_iters;
        }
        if let Some(v) = self.admm_pcg_max_iters {
            p.pcg_max_iters = v;
        }
        if let Some(v) = self.admm_growth_every {
            p.growth_every = v;
        }
        p.scale_rows = !self.admm_no_scale_rows;
        let stop = if self.skip_and_continue { StopRule::SkipAndContinue } else { StopRule::FirstFailure };
        SolverConfig { admm: p, stop, ..SolverConfig::default() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Admm,
    Ldg,
    Mdg,
    Gr,
    Exact,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Admm => Algorithm::Admm,
            AlgoArg::Ldg => Algorithm::Ldg,
            AlgoArg::Mdg => Algorithm::Mdg,
            AlgoArg::Gr => Algorithm::Gr,
            AlgoArg::Exact => Algorithm::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Workload,
    Storage,
    Compute,
    Density,
    None,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Workload => SweepAxis::Workload,
            AxisArg::Storage => SweepAxis::Storage,
            AxisArg::Compute => SweepAxis::Compute,
            AxisArg::Density => SweepAxis::Density,
            AxisArg::None => SweepAxis::None,
        }
    }
}

fn default_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Workload => (4..=10).map(|k| f64::from(k) * 10.0).collect(),
        SweepAxis::Storage => (2..=8).map(|k| f64::from(k) * 250.0).collect(),
        SweepAxis::Compute => (1..=6).map(|k| f64::from(k) * 0.5).collect(),
        SweepAxis::Density => (5..=15).step_by(2).map(f64::from).collect(),
        SweepAxis::None => vec![0.0],
    }
}

/// Failure that maps to a process exit code.
enum Failure {
    /// A solver produced (or could not avoid) an unusable result.
    Solver(String),
    /// Bad flags, files or configuration.
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible { .. } | Error::Diverged { .. } | Error::PcgNotConverged { .. } => {
                Failure::Solver(e.to_string())
            }
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_scenario(path: Option<&Path>, gen: &GenArgs) -> Result<mslayer::Scenario, Failure> {
    let s = match path {
        Some(p) => read_scenario(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
        None => generate(&gen.config()?)?,
    };
    let issues = validate_scenario(&s);
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(ToString::to_string).collect();
        return Err(Failure::Input(format!("invalid scenario: {}", list.join("; "))));
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { gen, out } => {
            let s = generate(&gen.config()?)?;
            write_scenario(&out, &s)?;
            println!(
                "wrote {} ({} SCNs, {} users, {} services, {} layers)",
                out.display(),
                s.num_nodes() - 1,
                s.num_users(),
                s.num_services(),
                s.num_layers()
            );
        }
        Command::Solve { scenario, gen, algo, solver, out, lp_out, trace_out } => {
            let s = load_scenario(scenario.as_deref(), &gen)?;
            let lt = LatencyTable::build(&s);
            let cfg = solver.config();
            cfg.admm.validate()?;
            let alg = Algorithm::from(algo);
            if let Some(path) = &lp_out {
                std::fs::write(path, write_lp(&build_ilp(&s, &lt)))?;
            }
            let report = harness::solve(alg, &s, &lt, &cfg)?;
            if let Some(path) = &trace_out {
                if !alg.uses_admm() {
                    return Err(Failure::Input(format!("--trace-out needs admm or gr, not {alg}")));
                }
                let params = if alg == Algorithm::Gr { cfg.admm.box_only() } else { cfg.admm.clone() };
                let outcome = admm::run(&build_ilp(&s, &lt), &params, None)?;
                write_trace_csv(&outcome.trace, create(path)?)?;
            }
            if let Some(path) = &out {
                serde_json::to_writer_pretty(create(path)?, &report.solution)?;
            }
            let feas = check_feasible(&s, &report.solution)?;
            println!(
                "algorithm={alg} global_latency={:.6} edge_containers={} distinct_containers={} admm_iterations={} feasible={}",
                report.solution.objective,
                count_edge_containers(&report.solution),
                count_distinct_containers(&s, &report.solution),
                report.admm_iterations,
                feas.is_feasible()
            );
            if !feas.is_feasible() {
                return Err(Failure::Solver(format!("{alg} produced an infeasible solution: {feas}")));
            }
        }
        Command::Sweep { plan, sweep, values, reps, algo, gen, solver, timing, dump_dir, out } => {
            let plan = match plan {
                Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))?,
                None => {
                    let axis = SweepAxis::from(sweep);
                    ExperimentPlan {
                        axis,
                        values: values.unwrap_or_else(|| default_values(axis)),
                        repetitions: reps,
                        base: gen.config()?,
                        algorithms: algo.into_iter().map(Algorithm::from).collect(),
                        solver: solver.config(),
                        timing,
                        dump_dir,
                    }
                }
            };
            let rows = run_experiment(&plan)?;
            write_results(&rows, create(&out)?)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Aggregate { input, out } => {
            let rows = read_results(BufReader::new(File::open(&input)?))?;
            let tables = emit_plot_data(&rows)?;
            std::fs::create_dir_all(&out)?;
            for table in &tables {
                let path = out.join(format!("{}.csv", table.metric));
                table.write_csv(create(&path)?)?;
            }
            println!("wrote {} tables to {}", tables.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
