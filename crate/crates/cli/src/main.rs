use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mecopt_core::earnings::{fit_params, parse_samples};
use mecopt_core::harness::{
    emit_results, format_metadata, generate_scenario, oracle_compare, run_sweep, ScenarioSpec,
    SweepKind, SweepSpec,
};
use mecopt_core::model::snap_resolution;
use mecopt_core::optimizer::{run_method, SdrCache};
use mecopt_core::{EarnFamily, Method, SdpSettings};

#[derive(Parser)]
#[command(
    name = "mecopt",
    version,
    about = "Joint power, association and resolution optimization for edge-served Metaverse users"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and print the allocation.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "proposed")]
        method: Method,
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Sweep omega, the resolution floor or the user count and write CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        kind: SweepKind,
        /// Comma-separated subset of proposed,optlat,optearn,random.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "proposed,optlat,optearn,random"
        )]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Comma-separated grid; defaults to the desk grid for the kind.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Record wall time per row (output is then not reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        sdp_tol: Option<f64>,
    },
    /// Compare the relaxation and its rounding with brute force.
    OracleCompare {
        #[arg(long, default_value_t = 6)]
        max_users: usize,
        #[arg(long, default_value_t = 3)]
        max_servers: usize,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Fit an earning function to `x,score` samples.
    FitEarnings {
        #[arg(long)]
        family: EarnFamily,
        #[arg(long)]
        samples: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Flat `key = value` scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    servers: Option<usize>,
    /// Paper-scale population (100 users, 20 servers); very slow.
    #[arg(long)]
    large: bool,
    /// Balance earnings and latency weights per scenario.
    #[arg(long)]
    auto_normalize: bool,
}

impl ScenarioArgs {
    /// Defaults, then the config file, then `MECOPT_SEED`, then flags.
    fn resolve(&self) -> Result<ScenarioSpec> {
        let mut spec = if self.large {
            ScenarioSpec::large()
        } else {
            ScenarioSpec::default()
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            spec.apply_config(&text)?;
        }
        if let Ok(seed) = std::env::var("MECOPT_SEED") {
            spec.seed = seed
                .trim()
                .parse()
                .context("MECOPT_SEED must be an unsigned integer")?;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(k) = self.users {
            spec.num_users = k;
        }
        if let Some(n) = self.servers {
            spec.num_servers = n;
        }
        spec.auto_normalize |= self.auto_normalize;
        spec.validate()?;
        Ok(spec)
    }
}

fn run(scenario: &ScenarioArgs, method: Method, omega: Option<f64>) -> Result<()> {
    let mut spec = scenario.resolve()?;
    if let Some(w) = omega {
        spec.config.weight_omega = w;
    }
    let sc = generate_scenario(&spec)?;
    let mut opts = mecopt_core::harness::desk_solve_options(spec.seed);
    if scenario.large {
        opts.sdp.tol = 1e-2;
    }
    let (alloc, trace) = run_method(
        method,
        &sc.config,
        &sc.users,
        &sc.servers,
        &opts,
        &mut SdrCache::new(),
    )?;
    println!(
        "method {method}  seed {}  users {} ({} dropped)  servers {}  omega {}  eta_e {:.4e}  eta_l {:.4e}",
        spec.seed,
        sc.users.len(),
        sc.dropped_users,
        sc.servers.len(),
        sc.config.weight_omega,
        sc.config.eta_earn,
        sc.config.eta_lat
    );
    println!(
        "{:>4} {:>6} {:>9} {:>12} {:>6} {:>10} {:>10}",
        "user", "server", "power_w", "res_px", "tier", "latency_s", "earnings"
    );
    for k in 0..sc.users.len() {
        println!(
            "{:>4} {:>6} {:>9.4} {:>12.0} {:>6} {:>10.5} {:>10.4}",
            k,
            alloc.association.server_of(k),
            alloc.powers[k],
            alloc.resolutions[k],
            snap_resolution(alloc.resolutions[k]).label(),
            alloc.per_user_latency[k].total(),
            alloc.per_user_earnings[k]
        );
    }
    println!(
        "objective {:.6e}  mean latency {:.5} s  total earnings {:.4}  outer iterations {}  converged {}",
        alloc.objective,
        alloc.mean_latency(),
        alloc.total_earnings(),
        trace.outer_iterations(),
        trace.converged
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    scenario: &ScenarioArgs,
    kind: SweepKind,
    methods: Vec<Method>,
    seeds: usize,
    grid: Vec<f64>,
    out: PathBuf,
    timing: bool,
    sdp_tol: Option<f64>,
) -> Result<()> {
    let spec = scenario.resolve()?;
    let mut sw = SweepSpec::new(kind, spec);
    sw.methods = methods;
    sw.num_seeds = seeds;
    sw.record_wall_time = timing;
    if !grid.is_empty() {
        sw.grid = grid;
    }
    if scenario.large {
        sw.solve.sdp.tol = 1e-2;
    }
    if let Some(tol) = sdp_tol {
        sw.solve.sdp.tol = tol;
    }
    let rows = run_sweep(&sw)?;
    emit_results(&rows, &out)?;
    let meta = out.with_extension("meta");
    std::fs::write(&meta, format_metadata(&sw))
        .with_context(|| format!("writing {}", meta.display()))?;
    let failed = rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    info!("wrote {} rows to {}", rows.len(), out.display());
    println!(
        "{} rows written to {} ({failed} failed)",
        rows.len(),
        out.display()
    );
    Ok(())
}

fn oracle(users: usize, servers: usize, instances: usize, samples: usize, seed: u64) -> Result<()> {
    if instances == 0 {
        bail!("need at least one instance");
    }
    let settings = SdpSettings::default();
    let cases = oracle_compare(users, servers, instances, seed, samples, &settings)?;
    let bound_ok = cases.iter().filter(|c| c.bound_holds(1e-6)).count();
    let within = cases.iter().filter(|c| c.rounding_excess() <= 0.05).count();
    let exact = cases
        .iter()
        .filter(|c| c.rounding_excess() <= 1e-12)
        .count();
    let worst = cases
        .iter()
        .map(|c| c.rounding_excess())
        .fold(0.0, f64::max);
    println!("instances {instances}  users {users}  servers {servers}  samples {samples}");
    println!("relaxation bound holds     {bound_ok}/{instances}");
    println!("rounding within 5%         {within}/{instances}");
    println!("rounding optimal           {exact}/{instances}");
    println!("worst rounding excess      {:.3}%", 100.0 * worst);
    Ok(())
}

fn fit(family: EarnFamily, samples: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&samples)
        .with_context(|| format!("reading {}", samples.display()))?;
    let data = parse_samples(&text)?;
    let report = fit_params(&data, family)?;
    println!(
        "family {family}  alpha {:.6}  beta {:.6}  ssr {:.6e}  iterations {}  status {:?}",
        report.params.alpha, report.params.beta, report.residual, report.iterations, report.status
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            method,
            omega,
        } => run(&scenario, method, omega),
        Command::Sweep {
            scenario,
            kind,
            methods,
            seeds,
            grid,
            out,
            timing,
            sdp_tol,
        } => sweep(&scenario, kind, methods, seeds, grid, out, timing, sdp_tol),
        Command::OracleCompare {
            max_users,
            max_servers,
            instances,
            samples,
            seed,
        } => oracle(max_users, max_servers, instances, samples, seed),
        Command::FitEarnings { family, samples } => fit(family, samples),
    }
}
