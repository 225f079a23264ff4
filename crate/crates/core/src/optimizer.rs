//! Alternating joint optimization and the comparison methods.
//!
//! Powers depend on nothing else and are fixed first. The loop then
//! alternates between the relaxed association (rounded by Gaussian
//! randomization, kept only if it lowers `F`) and the exact per-user
//! resolution update until the objective settles.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::association::{
    build_qcqp, gaussian_randomize, solve_association_sdr, QcqpInstance, SdrSolution,
};
use crate::error::{Error, Result};
use crate::model::{Allocation, Association, Decision, ServerProfile, SystemConfig, UserProfile};
use crate::power::optimal_powers;
use crate::resolution::optimal_resolutions;
use crate::sdp::{SdpSettings, SdpStatus, SdpWarmStart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proposed,
    OptLatency,
    OptEarnings,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Proposed,
        Method::OptLatency,
        Method::OptEarnings,
        Method::Random,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::OptLatency => "optlat",
            Method::OptEarnings => "optearn",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Stop when `|F_t - F_{t-1}| <= tol_rel |F_{t-1}|`.
    pub tol_rel: f64,
    pub max_outer_iters: usize,
    /// Gaussian randomization draws per association step.
    pub rand_samples_l: usize,
    pub rng_seed: u64,
    /// Starting resolution for every user; `None` means `s_min`.
    pub init_resolution: Option<f64>,
    pub sdp: SdpSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_rel: 1e-4,
            max_outer_iters: 50,
            rand_samples_l: 1000,
            rng_seed: 0,
            init_resolution: None,
            sdp: SdpSettings::default(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol_rel must be positive, got {}",
                self.tol_rel
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig(
                "max_outer_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub method: Method,
    /// `F` after each outer iteration.
    pub objectives: Vec<f64>,
    /// Whether each iteration's rounded association replaced the previous one.
    pub accepted: Vec<bool>,
    /// Relative gap between the rounded association cost and the relaxation bound.
    pub sdr_gaps: Vec<f64>,
    pub sdp_iterations: usize,
    /// Relaxations that stopped at the iteration cap.
    pub sdp_capped: usize,
    pub converged: bool,
    pub final_allocation: Option<Allocation>,
}

impl SolveTrace {
    fn new(method: Method) -> Self {
        SolveTrace {
            method,
            objectives: Vec::new(),
            accepted: Vec::new(),
            sdr_gaps: Vec::new(),
            sdp_iterations: 0,
            sdp_capped: 0,
            converged: false,
            final_allocation: None,
        }
    }

    pub fn outer_iterations(&self) -> usize {
        self.objectives.len()
    }

    /// Objective values of iterations whose association was accepted.
    pub fn accepted_objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.objectives
            .iter()
            .zip(&self.accepted)
            .filter(|(_, &a)| a)
            .map(|(&f, _)| f)
    }
}

/// A failed solve together with the iterations completed before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("solve failed after {} outer iterations: {error}", partial.outer_iterations())]
pub struct SolveFailure {
    pub error: Error,
    pub partial: Box<SolveTrace>,
}

impl From<SolveFailure> for Error {
    fn from(f: SolveFailure) -> Self {
        f.error
    }
}

/// Memoized cold-start relaxations keyed by the instance's workloads and
/// server capacities. The relaxed solution does not depend on `eta_l * omega`,
/// so sweeps over the weight share them.
#[derive(Debug, Default)]
pub struct SdrCache {
    entries: HashMap<Vec<u64>, SdrSolution>,
}

impl SdrCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(inst: &QcqpInstance, settings: &SdpSettings) -> Vec<u64> {
        let mut key = vec![
            settings.tol.to_bits(),
            settings.max_iter as u64,
            settings.rho.to_bits(),
        ];
        key.extend(inst.workloads.iter().map(|w| w.to_bits()));
        key.extend(inst.server_flops.iter().map(|f| f.to_bits()));
        key
    }

    /// Solves the relaxation, reusing a stored result for cold starts.
    pub fn solve(
        &mut self,
        inst: &QcqpInstance,
        settings: &SdpSettings,
        warm: Option<&SdpWarmStart>,
    ) -> Result<SdrSolution> {
        if warm.is_some() {
            return solve_association_sdr(inst, settings, warm);
        }
        let key = Self::key(inst, settings);
        let sdr = match self.entries.get(&key) {
            Some(hit) => hit.clone(),
            None => {
                let sdr = solve_association_sdr(inst, settings, None)?;
                self.entries.insert(key, sdr.clone());
                sdr
            }
        };
        Ok(SdrSolution {
            lower_bound: inst.weight * sdr.sdp.objective,
            sdp: sdr.sdp,
        })
    }
}

fn check_scenario(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
) -> Result<()> {
    cfg.validate()?;
    if users.is_empty() || servers.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one user and one server".into(),
        ));
    }
    for u in users {
        u.validate()?;
    }
    if let Some(s) = servers
        .iter()
        .find(|s| !(s.compute_flops > 0.0 && s.compute_flops.is_finite()))
    {
        return Err(Error::InvalidInput(format!(
            "server capacity {} must be positive",
            s.compute_flops
        )));
    }
    Ok(())
}

fn evaluate(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    powers: &[f64],
    resolutions: &[f64],
    association: &Association,
) -> Result<Allocation> {
    Allocation::evaluate(
        cfg,
        users,
        servers,
        &Decision {
            powers: powers.to_vec(),
            resolutions: resolutions.to_vec(),
            association: association.clone(),
        },
    )
}

/// Relaxation plus randomized rounding at fixed resolutions.
fn sdr_association(
    inst: &QcqpInstance,
    opts: &SolveOptions,
    warm: Option<&SdpWarmStart>,
    iteration: usize,
    cache: &mut SdrCache,
    trace: &mut SolveTrace,
) -> Result<(Association, SdpWarmStart)> {
    let sdr = cache.solve(inst, &opts.sdp, warm)?;
    trace.sdp_iterations += sdr.sdp.iterations;
    if sdr.sdp.status == SdpStatus::IterationCap {
        trace.sdp_capped += 1;
        warn!(
            "relaxation hit the iteration cap (primal {:.2e}, dual {:.2e}); rounding anyway",
            sdr.sdp.primal_residual, sdr.sdp.dual_residual
        );
    }
    let seed = opts.rng_seed.wrapping_add(iteration as u64);
    let report = gaussian_randomize(inst, sdr.b(), opts.rand_samples_l, seed)?;
    trace.sdr_gaps.push(report.gap);
    Ok((report.best_assoc, sdr.sdp.warm_start))
}

pub fn solve_joint(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    opts: &SolveOptions,
) -> std::result::Result<(Allocation, SolveTrace), SolveFailure> {
    solve_joint_cached(cfg, users, servers, opts, &mut SdrCache::new())
}

pub fn solve_joint_cached(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    opts: &SolveOptions,
    cache: &mut SdrCache,
) -> std::result::Result<(Allocation, SolveTrace), SolveFailure> {
    let mut trace = SolveTrace::new(Method::Proposed);
    match joint_loop(cfg, users, servers, opts, cache, &mut trace) {
        Ok(alloc) => {
            trace.final_allocation = Some(alloc.clone());
            Ok((alloc, trace))
        }
        Err(error) => Err(SolveFailure {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn joint_loop(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    opts: &SolveOptions,
    cache: &mut SdrCache,
    trace: &mut SolveTrace,
) -> Result<Allocation> {
    check_scenario(cfg, users, servers)?;
    opts.validate()?;
    let powers: Vec<f64> = optimal_powers(cfg, users)?
        .iter()
        .map(|p| p.p_star)
        .collect();
    let init = opts.init_resolution.unwrap_or(cfg.s_min_px);
    let mut resolutions = vec![init; users.len()];
    let mut current: Option<Allocation> = None;
    let mut warm: Option<SdpWarmStart> = None;

    for t in 0..opts.max_outer_iters {
        let inst = build_qcqp(cfg, users, servers, &resolutions)?;
        let (candidate, next_warm) = sdr_association(&inst, opts, warm.as_ref(), t, cache, trace)?;
        warm = Some(next_warm);

        let accepted = match &current {
            None => true,
            Some(prev) => {
                candidate != prev.association
                    && evaluate(cfg, users, servers, &powers, &resolutions, &candidate)?.objective
                        < evaluate(
                            cfg,
                            users,
                            servers,
                            &powers,
                            &resolutions,
                            &prev.association,
                        )?
                        .objective
            }
        };
        let association = match (&current, accepted) {
            (Some(prev), false) => prev.association.clone(),
            _ => candidate,
        };

        resolutions = optimal_resolutions(cfg, users, servers, &association)?;
        let alloc = evaluate(cfg, users, servers, &powers, &resolutions, &association)?;
        let f = alloc.objective;
        debug!("outer {t}: F = {f:.6e}, accepted = {accepted}");
        trace.objectives.push(f);
        trace.accepted.push(accepted);

        let prev_f = current.as_ref().map(|a| a.objective);
        current = Some(alloc);
        if let Some(prev_f) = prev_f {
            if (f - prev_f).abs() <= opts.tol_rel * prev_f.abs() {
                trace.converged = true;
                break;
            }
        }
    }
    Ok(current.expect("at least one outer iteration"))
}

fn uniform_association(rng: &mut ChaCha8Rng, users: usize, servers: usize) -> Association {
    let servers_of = (0..users).map(|_| rng.random_range(0..servers)).collect();
    Association::new(servers_of, servers).expect("sampled indices are in range")
}

/// Runs one of the comparison methods, or the proposed one.
pub fn run_method(
    method: Method,
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    opts: &SolveOptions,
    cache: &mut SdrCache,
) -> Result<(Allocation, SolveTrace)> {
    if method == Method::Proposed {
        return Ok(solve_joint_cached(cfg, users, servers, opts, cache)?);
    }
    check_scenario(cfg, users, servers)?;
    opts.validate()?;
    let mut trace = SolveTrace::new(method);
    let powers: Vec<f64> = optimal_powers(cfg, users)?
        .iter()
        .map(|p| p.p_star)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let (k, n) = (users.len(), servers.len());
    let (resolutions, association) = match method {
        Method::OptLatency => {
            let resolutions = vec![cfg.s_min_px; k];
            let inst = build_qcqp(cfg, users, servers, &resolutions)?;
            let (assoc, _) = sdr_association(&inst, opts, None, 0, cache, &mut trace)?;
            (resolutions, assoc)
        }
        Method::OptEarnings => (vec![cfg.s_max_px; k], uniform_association(&mut rng, k, n)),
        Method::Random => {
            let resolutions = (0..k)
                .map(|_| rng.random_range(cfg.s_min_px..=cfg.s_max_px))
                .collect();
            (resolutions, uniform_association(&mut rng, k, n))
        }
        Method::Proposed => unreachable!(),
    };
    let alloc = evaluate(cfg, users, servers, &powers, &resolutions, &association)?;
    trace.objectives.push(alloc.objective);
    trace.accepted.push(true);
    trace.converged = true;
    trace.final_allocation = Some(alloc.clone());
    Ok((alloc, trace))
}

pub fn run_baseline(
    method: Method,
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    opts: &SolveOptions,
) -> Result<Allocation> {
    Ok(run_method(method, cfg, users, servers, opts, &mut SdrCache::new())?.0)
}

/// Weights that put earnings and latency on a common scale: each is divided
/// by the total change it undergoes when every user moves from `s_min` to
/// `s_max` (round-robin association, optimal powers).
pub fn auto_normalize(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
) -> Result<(f64, f64)> {
    check_scenario(cfg, users, servers)?;
    let powers: Vec<f64> = optimal_powers(cfg, users)?
        .iter()
        .map(|p| p.p_star)
        .collect();
    let assoc = Association::round_robin(users.len(), servers.len());
    let unit = SystemConfig {
        eta_earn: 1.0,
        eta_lat: 1.0,
        ..cfg.clone()
    };
    let at = |s: f64| {
        evaluate(
            &unit,
            users,
            servers,
            &powers,
            &vec![s; users.len()],
            &assoc,
        )
    };
    let (lo, hi) = (at(cfg.s_min_px)?, at(cfg.s_max_px)?);
    let earn_span = hi.total_earnings() - lo.total_earnings();
    let lat_span = (hi.mean_latency() - lo.mean_latency()) * users.len() as f64;
    if !(earn_span > 0.0 && lat_span > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "cannot normalize: earnings span {earn_span:e}, latency span {lat_span:e}"
        )));
    }
    Ok((1.0 / earn_span, 1.0 / lat_span))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earnings::EarnFamily;
    use crate::model::total_objective;
    use crate::power::optimal_power;
    use crate::resolution::{optimal_resolution, ResolutionSubproblem};

    fn scenario(
        k: usize,
        n: usize,
        seed: u64,
    ) -> (SystemConfig, Vec<UserProfile>, Vec<ServerProfile>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SystemConfig {
            num_users: k,
            num_servers: n,
            weight_omega: 2.0,
            ..SystemConfig::default()
        };
        let users = (0..k)
            .map(|i| {
                let com = rng.random_range(300.0..600.0);
                UserProfile {
                    channel_gain: 10f64.powf(-rng.random_range(8.0..10.0)),
                    uplink_bits: rng.random_range(50e3..200e3),
                    compression_ratio: com,
                    downlink_rate_bps: rng.random_range(10e6..20e6),
                    earn_scale: rng.random_range(0.5..1.5),
                    earn: EarnFamily::ALL[i % 3].fitted(),
                    energy_budget_j: rng.random_range(0.05..0.2),
                    power_cap_w: 0.2,
                    lambda_down_flop_per_bit: rng.random_range(1e3..1e5) * com / 48.0,
                }
            })
            .collect();
        let servers = (0..n)
            .map(|_| ServerProfile {
                compute_flops: rng.random_range(1e12..5e12),
            })
            .collect();
        (cfg, users, servers)
    }

    fn fast_opts(seed: u64) -> SolveOptions {
        SolveOptions {
            rng_seed: seed,
            rand_samples_l: 200,
            sdp: SdpSettings {
                tol: 1e-4,
                ..SdpSettings::default()
            },
            ..SolveOptions::default()
        }
    }

    #[test]
    fn single_user_single_server() {
        let (cfg, users, servers) = scenario(1, 1, 1);
        let (alloc, trace) = solve_joint(&cfg, &users, &servers, &fast_opts(1)).unwrap();
        assert!(trace.outer_iterations() <= 2);
        let assoc = Association::round_robin(1, 1);
        let sub = ResolutionSubproblem::new(&cfg, &users, &servers, &assoc, 0).unwrap();
        assert_eq!(
            alloc.resolutions[0],
            optimal_resolution(&sub, &users[0].earn)
        );
        assert_eq!(
            alloc.powers[0],
            optimal_power(&cfg, &users[0]).unwrap().p_star
        );
        let d = Decision {
            powers: alloc.powers.clone(),
            resolutions: alloc.resolutions.clone(),
            association: assoc,
        };
        assert_eq!(
            alloc.objective,
            total_objective(&cfg, &users, &servers, &d).unwrap()
        );
    }

    #[test]
    fn accepted_objectives_never_increase() {
        for seed in 0..10 {
            let (cfg, users, servers) = scenario(6, 3, seed);
            let (alloc, trace) = solve_joint(&cfg, &users, &servers, &fast_opts(seed)).unwrap();
            let accepted: Vec<f64> = trace.accepted_objectives().collect();
            assert!(accepted
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
            assert!(trace
                .objectives
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
            assert_eq!(trace.final_allocation.as_ref(), Some(&alloc));
            assert!(alloc
                .resolutions
                .iter()
                .all(|&s| (cfg.s_min_px..=cfg.s_max_px).contains(&s)));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (cfg, users, servers) = scenario(6, 3, 3);
        let a = solve_joint(&cfg, &users, &servers, &fast_opts(9)).unwrap();
        let b = solve_joint(&cfg, &users, &servers, &fast_opts(9)).unwrap();
        assert_eq!(a, b);
        let r1 = run_baseline(Method::Random, &cfg, &users, &servers, &fast_opts(9)).unwrap();
        let r2 = run_baseline(Method::Random, &cfg, &users, &servers, &fast_opts(9)).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn cache_does_not_change_results() {
        let (cfg, users, servers) = scenario(6, 3, 4);
        let opts = fast_opts(4);
        let mut cache = SdrCache::new();
        let other = SystemConfig {
            weight_omega: 4.5,
            ..cfg.clone()
        };
        solve_joint_cached(&other, &users, &servers, &opts, &mut cache).unwrap();
        assert!(!cache.is_empty());
        let cached = solve_joint_cached(&cfg, &users, &servers, &opts, &mut cache).unwrap();
        let fresh = solve_joint(&cfg, &users, &servers, &opts).unwrap();
        assert_eq!(cached.0, fresh.0);
        assert_eq!(cached.1.objectives, fresh.1.objectives);
    }

    #[test]
    fn resolution_order_does_not_matter() {
        let (cfg, users, servers) = scenario(8, 3, 5);
        let assoc = Association::new(vec![0, 1, 2, 0, 1, 2, 0, 0], 3).unwrap();
        let powers: Vec<f64> = optimal_powers(&cfg, &users)
            .unwrap()
            .iter()
            .map(|p| p.p_star)
            .collect();
        let mut forward = vec![cfg.s_min_px; 8];
        let mut backward = forward.clone();
        for k in 0..8 {
            let sub = ResolutionSubproblem::new(&cfg, &users, &servers, &assoc, k).unwrap();
            forward[k] = optimal_resolution(&sub, &users[k].earn);
        }
        for k in (0..8).rev() {
            let sub = ResolutionSubproblem::new(&cfg, &users, &servers, &assoc, k).unwrap();
            backward[k] = optimal_resolution(&sub, &users[k].earn);
        }
        let fa = evaluate(&cfg, &users, &servers, &powers, &forward, &assoc)
            .unwrap()
            .objective;
        let fb = evaluate(&cfg, &users, &servers, &powers, &backward, &assoc)
            .unwrap()
            .objective;
        assert!((fa - fb).abs() <= 1e-12 * fa.abs());
    }

    #[test]
    fn baselines_follow_their_rules() {
        let (cfg, users, servers) = scenario(6, 3, 6);
        let opts = fast_opts(6);
        let lat = run_baseline(Method::OptLatency, &cfg, &users, &servers, &opts).unwrap();
        assert!(lat.resolutions.iter().all(|&s| s == cfg.s_min_px));
        let earn = run_baseline(Method::OptEarnings, &cfg, &users, &servers, &opts).unwrap();
        assert!(earn.resolutions.iter().all(|&s| s == cfg.s_max_px));
        let rnd = run_baseline(Method::Random, &cfg, &users, &servers, &opts).unwrap();
        for alloc in [&lat, &rnd] {
            assert!(earn.total_earnings() >= alloc.total_earnings());
        }
        // the first outer iteration starts from the same rounded association
        let proposed = solve_joint(&cfg, &users, &servers, &opts).unwrap().0;
        assert!(proposed.objective <= lat.objective + 1e-9 * lat.objective.abs());
    }

    #[test]
    fn infeasible_user_is_rejected() {
        let (cfg, mut users, servers) = scenario(3, 2, 7);
        users[1].energy_budget_j = 1e-12;
        let err = solve_joint(&cfg, &users, &servers, &fast_opts(7)).unwrap_err();
        assert!(err.partial.objectives.is_empty());
        assert!(err.to_string().contains("user 1"));
    }

    #[test]
    fn normalization_balances_spans() {
        let (cfg, users, servers) = scenario(6, 3, 8);
        let (eta_e, eta_l) = auto_normalize(&cfg, &users, &servers).unwrap();
        assert!(eta_e > 0.0 && eta_l > 0.0);
        let cfg = SystemConfig {
            eta_earn: eta_e,
            eta_lat: eta_l,
            weight_omega: 1.0,
            ..cfg
        };
        let powers: Vec<f64> = optimal_powers(&cfg, &users)
            .unwrap()
            .iter()
            .map(|p| p.p_star)
            .collect();
        let assoc = Association::round_robin(6, 3);
        let f = |s: f64| {
            evaluate(&cfg, &users, &servers, &powers, &[s; 6], &assoc)
                .unwrap()
                .objective
        };
        // both terms change by exactly one unit, so F is unchanged
        assert!((f(cfg.s_max_px) - f(cfg.s_min_px)).abs() < 1e-9);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("fastest".parse::<Method>().is_err());
    }
}
