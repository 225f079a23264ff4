//! Scenario generation, experiment sweeps, oracle comparisons and CSV output.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::association::{
    brute_force_association, build_qcqp, gaussian_randomize, solve_association_sdr,
};
use crate::earnings::EarnFamily;
use crate::error::{Error, Result};
use crate::model::{
    dbm_per_hz_to_w_per_hz, Allocation, Association, Decision, ServerProfile, SystemConfig,
    UserProfile, BITS_PER_PIXEL, RES_720P,
};
use crate::optimizer::{auto_normalize, run_method, Method, SdrCache, SolveOptions};
use crate::power::{feasibility_ratio, optimal_powers};
use crate::resolution::optimal_resolutions;
use crate::sdp::{SdpSettings, SdpStatus};

/// Draws per user before an energy-infeasible user is dropped.
pub const MAX_RESAMPLES: usize = 100;

pub const CSV_HEADER: &str =
    "method,seed,omega,s_min_px,num_users,mean_latency_s,mean_earnings_norm,mean_utility,iters,sdr_gap,wall_ms,status";

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub num_users: usize,
    pub num_servers: usize,
    pub cell_radius_km: f64,
    /// Users closer than this to the server site are not placed.
    pub min_distance_km: f64,
    pub compute_tflops: RangeInclusive<f64>,
    pub compression_ratio: RangeInclusive<f64>,
    pub downlink_mbps: RangeInclusive<f64>,
    /// Downlink processing per pixel.
    pub kflop_per_px: RangeInclusive<f64>,
    pub earn_scale: RangeInclusive<f64>,
    pub uplink_kbits: RangeInclusive<f64>,
    pub energy_budget_j: RangeInclusive<f64>,
    pub power_cap_w: f64,
    /// Replace `eta_earn`/`eta_lat` with scenario-balanced weights.
    pub auto_normalize: bool,
    /// Global constants; `num_users`/`num_servers` are taken from the fields above.
    pub config: SystemConfig,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 1,
            num_users: 20,
            num_servers: 5,
            cell_radius_km: 0.5,
            min_distance_km: 0.05,
            compute_tflops: 1.0..=5.0,
            compression_ratio: 300.0..=600.0,
            downlink_mbps: 10.0..=20.0,
            kflop_per_px: 1.0..=100.0,
            earn_scale: 0.5..=1.5,
            uplink_kbits: 50.0..=200.0,
            energy_budget_j: 0.05..=0.2,
            power_cap_w: 0.2,
            auto_normalize: false,
            config: SystemConfig::default(),
        }
    }
}

fn check_range(name: &str, r: &RangeInclusive<f64>) -> Result<()> {
    if !(r.start().is_finite() && r.end().is_finite() && *r.start() > 0.0 && r.start() <= r.end()) {
        return Err(Error::InvalidConfig(format!(
            "{name} range {}..{} must be positive and ordered",
            r.start(),
            r.end()
        )));
    }
    Ok(())
}

fn parse_range(key: &str, value: &str) -> Result<RangeInclusive<f64>> {
    let (lo, hi) = value
        .split_once("..")
        .ok_or_else(|| Error::Parse(format!("{key}: expected `lo..hi`, got `{value}`")))?;
    Ok(parse_num::<f64>(key, lo)?..=parse_num::<f64>(key, hi)?)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("{key}: cannot parse `{}`: {e}", value.trim())))
}

impl ScenarioSpec {
    /// Paper-scale population. Expect hours per sweep point.
    pub fn large() -> Self {
        ScenarioSpec {
            num_users: 100,
            num_servers: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_servers == 0 {
            return Err(Error::InvalidConfig(
                "need at least one user and one server".into(),
            ));
        }
        if !(self.cell_radius_km > 0.0
            && self.min_distance_km > 0.0
            && self.min_distance_km < self.cell_radius_km)
        {
            return Err(Error::InvalidConfig(format!(
                "distances must satisfy 0 < min ({}) < radius ({})",
                self.min_distance_km, self.cell_radius_km
            )));
        }
        for (name, r) in [
            ("compute_tflops", &self.compute_tflops),
            ("compression_ratio", &self.compression_ratio),
            ("downlink_mbps", &self.downlink_mbps),
            ("kflop_per_px", &self.kflop_per_px),
            ("earn_scale", &self.earn_scale),
            ("uplink_kbits", &self.uplink_kbits),
            ("energy_budget_j", &self.energy_budget_j),
        ] {
            check_range(name, r)?;
        }
        if !(self.power_cap_w > 0.0) {
            return Err(Error::InvalidConfig("power_cap_w must be positive".into()));
        }
        if self.downlink_mbps.end() * 1e6 > self.config.rate_norm_bps {
            return Err(Error::InvalidConfig(format!(
                "downlink rates up to {} Mbit/s exceed the normalization rate",
                self.downlink_mbps.end()
            )));
        }
        if self.config.s_max_px > self.config.res_norm_px {
            return Err(Error::InvalidConfig(
                "s_max_px exceeds the normalization resolution".into(),
            ));
        }
        self.system_config().validate()
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            num_users: self.num_users,
            num_servers: self.num_servers,
            ..self.config.clone()
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let c = &mut self.config;
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "num_users" => self.num_users = parse_num(key, value)?,
            "num_servers" => self.num_servers = parse_num(key, value)?,
            "cell_radius_km" => self.cell_radius_km = parse_num(key, value)?,
            "min_distance_km" => self.min_distance_km = parse_num(key, value)?,
            "compute_tflops" => self.compute_tflops = parse_range(key, value)?,
            "compression_ratio" => self.compression_ratio = parse_range(key, value)?,
            "downlink_mbps" => self.downlink_mbps = parse_range(key, value)?,
            "kflop_per_px" => self.kflop_per_px = parse_range(key, value)?,
            "earn_scale" => self.earn_scale = parse_range(key, value)?,
            "uplink_kbits" => self.uplink_kbits = parse_range(key, value)?,
            "energy_budget_j" => self.energy_budget_j = parse_range(key, value)?,
            "power_cap_w" => self.power_cap_w = parse_num(key, value)?,
            "auto_normalize" => self.auto_normalize = parse_num(key, value)?,
            "bandwidth_hz" => c.bandwidth_hz = parse_num(key, value)?,
            "noise_dbm_per_hz" => {
                c.noise_density_w_per_hz = dbm_per_hz_to_w_per_hz(parse_num(key, value)?)
            }
            "weight_omega" => c.weight_omega = parse_num(key, value)?,
            "eta_earn" => c.eta_earn = parse_num(key, value)?,
            "eta_lat" => c.eta_lat = parse_num(key, value)?,
            "lambda_up_flop_per_bit" => c.lambda_up_flop_per_bit = parse_num(key, value)?,
            "s_min_px" => c.s_min_px = parse_num(key, value)?,
            "s_max_px" => c.s_max_px = parse_num(key, value)?,
            "res_norm_px" => c.res_norm_px = parse_num(key, value)?,
            "rate_norm_bps" => c.rate_norm_bps = parse_num(key, value)?,
            other => return Err(Error::Parse(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub users: Vec<UserProfile>,
    pub servers: Vec<ServerProfile>,
    /// Users discarded after `MAX_RESAMPLES` infeasible draws.
    pub dropped_users: usize,
}

/// Large-scale path loss in dB at `distance_km`.
pub fn path_loss_db(distance_km: f64) -> f64 {
    128.1 + 37.6 * distance_km.log10()
}

pub fn channel_gain(distance_km: f64) -> f64 {
    10f64.powf(-path_loss_db(distance_km) / 10.0)
}

fn sample_user(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> UserProfile {
    let (r0, r1) = (spec.min_distance_km, spec.cell_radius_km);
    // uniform over the annulus area
    let distance = rng.random_range(r0 * r0..=r1 * r1).sqrt();
    let compression_ratio = rng.random_range(spec.compression_ratio.clone());
    let kflop = rng.random_range(spec.kflop_per_px.clone());
    let family = EarnFamily::ALL[rng.random_range(0..EarnFamily::ALL.len())];
    UserProfile {
        channel_gain: channel_gain(distance),
        uplink_bits: rng.random_range(spec.uplink_kbits.clone()) * 1e3,
        compression_ratio,
        downlink_rate_bps: rng.random_range(spec.downlink_mbps.clone()) * 1e6,
        earn_scale: rng.random_range(spec.earn_scale.clone()),
        earn: family.fitted(),
        energy_budget_j: rng.random_range(spec.energy_budget_j.clone()),
        power_cap_w: spec.power_cap_w,
        // per-bit rate so that lambda_d * D^d = kflop * 1e3 * s
        lambda_down_flop_per_bit: kflop * 1e3 * compression_ratio / BITS_PER_PIXEL,
    }
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let servers: Vec<ServerProfile> = (0..spec.num_servers)
        .map(|_| ServerProfile {
            compute_flops: rng.random_range(spec.compute_tflops.clone()) * 1e12,
        })
        .collect();
    let mut config = spec.system_config();
    let mut users = Vec::with_capacity(spec.num_users);
    let mut dropped_users = 0;
    for k in 0..spec.num_users {
        let feasible = (0..MAX_RESAMPLES)
            .map(|_| sample_user(spec, &mut rng))
            .find(|u| feasibility_ratio(&config, u) < 1.0);
        match feasible {
            Some(u) => users.push(u),
            None => {
                warn!("user {k}: no energy-feasible draw in {MAX_RESAMPLES} attempts, dropped");
                dropped_users += 1;
            }
        }
    }
    if users.is_empty() {
        return Err(Error::InvalidConfig(
            "every user was energy-infeasible".into(),
        ));
    }
    config.num_users = users.len();
    if spec.auto_normalize {
        let (eta_earn, eta_lat) = auto_normalize(&config, &users, &servers)?;
        config.eta_earn = eta_earn;
        config.eta_lat = eta_lat;
    }
    Ok(Scenario {
        config,
        users,
        servers,
        dropped_users,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Omega,
    SMin,
    UserCount,
}

impl SweepKind {
    /// Desk-scale grid.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::Omega => (1..=10).map(|i| 0.5 * i as f64).collect(),
            SweepKind::SMin => vec![
                RES_720P,
                1920.0 * 1080.0,
                2560.0 * 1440.0,
                3840.0 * 2160.0,
                6400.0 * 4800.0,
            ],
            SweepKind::UserCount => vec![8.0, 12.0, 16.0, 20.0],
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "omega" => Ok(SweepKind::Omega),
            "smin" => Ok(SweepKind::SMin),
            "users" => Ok(SweepKind::UserCount),
            other => Err(Error::Parse(format!("unknown sweep kind `{other}`"))),
        }
    }
}

/// Solver settings for desk-scale sweeps: a looser relaxation tolerance
/// keeps a 20-user solve under a second without changing the rounding.
pub fn desk_solve_options(seed: u64) -> SolveOptions {
    SolveOptions {
        rng_seed: seed,
        sdp: SdpSettings {
            tol: 1e-3,
            ..SdpSettings::default()
        },
        ..SolveOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub num_seeds: usize,
    pub scenario: ScenarioSpec,
    /// Per-seed options are derived from this with `rng_seed` replaced.
    pub solve: SolveOptions,
    /// Fill `wall_ms`; off by default so output is reproducible.
    pub record_wall_time: bool,
}

impl SweepSpec {
    pub fn new(kind: SweepKind, scenario: ScenarioSpec) -> Self {
        SweepSpec {
            kind,
            grid: kind.default_grid(),
            methods: Method::ALL.to_vec(),
            num_seeds: 20,
            solve: desk_solve_options(scenario.seed),
            scenario,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub omega: f64,
    pub s_min_px: f64,
    pub num_users: usize,
    pub mean_latency_s: f64,
    /// Total earnings over the scenario's maximum (every user at `s_max`).
    pub mean_earnings_norm: f64,
    pub mean_utility: f64,
    pub iters: usize,
    /// Last relaxation gap, `NaN` for methods without one.
    pub sdr_gap: f64,
    pub wall_ms: f64,
    pub status: String,
}

impl ResultRow {
    fn sweep_value(&self, kind: SweepKind) -> f64 {
        match kind {
            SweepKind::Omega => self.omega,
            SweepKind::SMin => self.s_min_px,
            SweepKind::UserCount => self.num_users as f64,
        }
    }
}

/// Sum of earnings with every user at `s_max`.
pub fn max_total_earnings(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
) -> Result<f64> {
    let powers: Vec<f64> = optimal_powers(cfg, users)?
        .iter()
        .map(|p| p.p_star)
        .collect();
    let alloc = Allocation::evaluate(
        cfg,
        users,
        servers,
        &Decision {
            powers,
            resolutions: vec![cfg.s_max_px; users.len()],
            association: Association::round_robin(users.len(), servers.len()),
        },
    )?;
    Ok(alloc.total_earnings())
}

fn solve_row(
    method: Method,
    seed: u64,
    scenario: &Scenario,
    opts: &SolveOptions,
    cache: &mut SdrCache,
    timed: bool,
) -> ResultRow {
    let cfg = &scenario.config;
    let start = Instant::now();
    let outcome = run_method(method, cfg, &scenario.users, &scenario.servers, opts, cache)
        .and_then(|r| {
            Ok((
                r,
                max_total_earnings(cfg, &scenario.users, &scenario.servers)?,
            ))
        });
    let wall_ms = if timed {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let mut row = ResultRow {
        method,
        seed,
        omega: cfg.weight_omega,
        s_min_px: cfg.s_min_px,
        num_users: scenario.users.len(),
        mean_latency_s: f64::NAN,
        mean_earnings_norm: f64::NAN,
        mean_utility: f64::NAN,
        iters: 0,
        sdr_gap: f64::NAN,
        wall_ms,
        status: String::new(),
    };
    match outcome {
        Ok(((alloc, trace), max_earn)) => {
            row.mean_latency_s = alloc.mean_latency();
            row.mean_earnings_norm = alloc.total_earnings() / max_earn;
            row.mean_utility = alloc.mean_utility();
            row.iters = trace.outer_iterations();
            row.sdr_gap = trace.sdr_gaps.last().copied().unwrap_or(f64::NAN);
            row.status = if trace.sdp_capped > 0 {
                "sdp_capped"
            } else {
                "ok"
            }
            .to_string();
        }
        Err(e) => {
            warn!("{method} seed {seed}: {e}");
            row.status = format!("error: {e}").replace([',', '\n'], ";");
        }
    }
    row
}

/// Runs every (seed, grid point, method) combination; rows come back sorted
/// by method label, sweep value and seed.
pub fn run_sweep(sweep: &SweepSpec) -> Result<Vec<ResultRow>> {
    if sweep.grid.is_empty() || sweep.methods.is_empty() || sweep.num_seeds == 0 {
        return Err(Error::InvalidInput(
            "sweep needs grid points, methods and seeds".into(),
        ));
    }
    sweep.scenario.validate()?;
    let mut rows = Vec::new();
    for i in 0..sweep.num_seeds {
        let seed = sweep.scenario.seed.wrapping_add(i as u64);
        let base = ScenarioSpec {
            seed,
            ..sweep.scenario.clone()
        };
        let opts = SolveOptions {
            rng_seed: seed,
            ..sweep.solve.clone()
        };
        let mut cache = SdrCache::new();
        let mut fixed: Option<Scenario> = None;
        for &point in &sweep.grid {
            let scenario = match sweep.kind {
                SweepKind::Omega => {
                    let s = match &fixed {
                        Some(s) => s.clone(),
                        None => fixed.insert(generate_scenario(&base)?).clone(),
                    };
                    Scenario {
                        config: SystemConfig {
                            weight_omega: point,
                            ..s.config
                        },
                        ..s
                    }
                }
                SweepKind::SMin => {
                    let mut spec = base.clone();
                    spec.config.s_min_px = point;
                    generate_scenario(&spec)?
                }
                SweepKind::UserCount => {
                    if point < 1.0 || point.fract() != 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "user count {point} is not a positive integer"
                        )));
                    }
                    cache = SdrCache::new();
                    generate_scenario(&ScenarioSpec {
                        num_users: point as usize,
                        ..base.clone()
                    })?
                }
            };
            for &method in &sweep.methods {
                rows.push(solve_row(
                    method,
                    seed,
                    &scenario,
                    &opts,
                    &mut cache,
                    sweep.record_wall_time,
                ));
            }
        }
        info!("seed {seed} done ({} rows)", rows.len());
    }
    let kind = sweep.kind;
    rows.sort_by(|a, b| {
        a.method
            .label()
            .cmp(b.method.label())
            .then(a.sweep_value(kind).total_cmp(&b.sweep_value(kind)))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        "NaN".to_string()
    }
}

pub fn format_csv(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no result rows to write".into()));
    }
    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.seed,
            fmt_float(r.omega),
            fmt_float(r.s_min_px),
            r.num_users,
            fmt_float(r.mean_latency_s),
            fmt_float(r.mean_earnings_norm),
            fmt_float(r.mean_utility),
            r.iters,
            fmt_float(r.sdr_gap),
            fmt_float(r.wall_ms),
            r.status
        )
        .expect("writing to a String");
    }
    Ok(out)
}

pub fn emit_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let text = format_csv(rows)?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `key = value` description of a sweep's settings, written next to its CSV.
pub fn format_metadata(sweep: &SweepSpec) -> String {
    let c = &sweep.scenario.config;
    let weights = if sweep.scenario.auto_normalize {
        "auto (each term divided by its total change from s_min to s_max)".to_string()
    } else {
        format!("eta_earn = {}, eta_lat = {}", c.eta_earn, c.eta_lat)
    };
    let grid: Vec<String> = sweep.grid.iter().map(|g| g.to_string()).collect();
    let methods: Vec<&str> = sweep.methods.iter().map(|m| m.label()).collect();
    format!(
        "kind = {:?}\ngrid = {}\nmethods = {}\nfirst_seed = {}\nnum_seeds = {}\nnum_users = {}\nnum_servers = {}\n\
         weights = {weights}\nearnings_reference = total earnings with every user at s_max\nsdp_tol = {}\n\
         rand_samples = {}\n",
        sweep.kind,
        grid.join(","),
        methods.join(","),
        sweep.scenario.seed,
        sweep.num_seeds,
        sweep.scenario.num_users,
        sweep.scenario.num_servers,
        sweep.solve.sdp.tol,
        sweep.solve.rand_samples_l,
    )
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or unexpected CSV header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(Error::Parse(format!(
                    "row {}: expected 12 fields, found {}",
                    i + 1,
                    f.len()
                )));
            }
            Ok(ResultRow {
                method: f[0].parse()?,
                seed: parse_num("seed", f[1])?,
                omega: parse_num("omega", f[2])?,
                s_min_px: parse_num("s_min_px", f[3])?,
                num_users: parse_num("num_users", f[4])?,
                mean_latency_s: parse_num("mean_latency_s", f[5])?,
                mean_earnings_norm: parse_num("mean_earnings_norm", f[6])?,
                mean_utility: parse_num("mean_utility", f[7])?,
                iters: parse_num("iters", f[8])?,
                sdr_gap: parse_num("sdr_gap", f[9])?,
                wall_ms: parse_num("wall_ms", f[10])?,
                status: f[11].to_string(),
            })
        })
        .collect()
}

/// Relaxation bound and rounded cost against exhaustive search on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub seed: u64,
    pub lower_bound: f64,
    pub rounded_cost: f64,
    pub optimal_cost: f64,
    pub sdp_status: SdpStatus,
}

impl OracleCase {
    pub fn bound_holds(&self, slack: f64) -> bool {
        self.lower_bound <= self.optimal_cost + slack * self.optimal_cost.abs().max(1.0)
    }

    /// `(rounded - optimal) / optimal`.
    pub fn rounding_excess(&self) -> f64 {
        (self.rounded_cost - self.optimal_cost) / self.optimal_cost.abs()
    }
}

/// Compares the relaxation and its rounding with brute force on random
/// instances of the given size with resolutions drawn per user and held fixed.
pub fn oracle_compare(
    users: usize,
    servers: usize,
    instances: usize,
    base_seed: u64,
    samples: usize,
    settings: &SdpSettings,
) -> Result<Vec<OracleCase>> {
    (0..instances)
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let scenario = generate_scenario(&ScenarioSpec {
                seed,
                num_users: users,
                num_servers: servers,
                auto_normalize: false,
                ..ScenarioSpec::default()
            })?;
            let cfg = &scenario.config;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let resolutions: Vec<f64> = (0..scenario.users.len())
                .map(|_| rng.random_range(cfg.s_min_px..=cfg.s_max_px))
                .collect();
            let powers: Vec<f64> = optimal_powers(cfg, &scenario.users)?
                .iter()
                .map(|p| p.p_star)
                .collect();
            let inst = build_qcqp(cfg, &scenario.users, &scenario.servers, &resolutions)?;
            let sdr = solve_association_sdr(&inst, settings, None)?;
            let report = gaussian_randomize(&inst, sdr.b(), samples, seed)?;
            let bf = brute_force_association(
                cfg,
                &scenario.users,
                &scenario.servers,
                &powers,
                &resolutions,
            )?;
            Ok(OracleCase {
                seed,
                lower_bound: sdr.lower_bound,
                rounded_cost: report.best_objective,
                optimal_cost: bf.association_cost,
                sdp_status: sdr.sdp.status,
            })
        })
        .collect()
}

/// Exhaustive joint optimum: every association with its exact best resolutions.
pub fn joint_brute_force(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
) -> Result<Allocation> {
    let (k, n) = (users.len(), servers.len());
    if (n as f64).powi(k as i32) > crate::association::BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("{n}^{k} associations")));
    }
    let powers: Vec<f64> = optimal_powers(cfg, users)?
        .iter()
        .map(|p| p.p_star)
        .collect();
    let mut digits = vec![0usize; k];
    let mut best: Option<Allocation> = None;
    loop {
        let assoc = Association::new(digits.clone(), n)?;
        let resolutions = optimal_resolutions(cfg, users, servers, &assoc)?;
        let alloc = Allocation::evaluate(
            cfg,
            users,
            servers,
            &Decision {
                powers: powers.clone(),
                resolutions,
                association: assoc,
            },
        )?;
        if best.as_ref().is_none_or(|b| alloc.objective < b.objective) {
            best = Some(alloc);
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one association"));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < n {
                break;
            }
            digits[pos] = 0;
        }
    }
}
