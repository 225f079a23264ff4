//! Physical system model: uplink/downlink transmission, edge computation,
//! uplink energy, and the per-user latency-vs-earnings utility.

use std::f64::consts::LN_2;
use std::fmt;

use crate::earnings::{eval_earning, normalize_input, EarnParams};
use crate::error::{Error, Result};

/// Bits per frame pixel: two eye images at 24 bits each.
pub const BITS_PER_PIXEL: f64 = 48.0;

pub const RES_720P: f64 = 1280.0 * 720.0;
pub const RES_8K: f64 = 7680.0 * 4320.0;

/// Converts a spectral density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_w_per_hz(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub num_users: usize,
    pub num_servers: usize,
    /// Noise power spectral density; per-user noise power is `(B/K) * density`.
    pub noise_density_w_per_hz: f64,
    pub weight_omega: f64,
    pub eta_earn: f64,
    pub eta_lat: f64,
    pub lambda_up_flop_per_bit: f64,
    pub s_min_px: f64,
    pub s_max_px: f64,
    pub res_norm_px: f64,
    pub rate_norm_bps: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            bandwidth_hz: 20e6,
            num_users: 20,
            num_servers: 5,
            noise_density_w_per_hz: dbm_per_hz_to_w_per_hz(-134.0),
            weight_omega: 1.0,
            eta_earn: 1.0,
            eta_lat: 1.0,
            lambda_up_flop_per_bit: 5.5e3,
            s_min_px: RES_720P,
            s_max_px: RES_8K,
            res_norm_px: RES_8K,
            rate_norm_bps: 20e6,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_density_w_per_hz", self.noise_density_w_per_hz),
            ("weight_omega", self.weight_omega),
            ("eta_earn", self.eta_earn),
            ("eta_lat", self.eta_lat),
            ("lambda_up_flop_per_bit", self.lambda_up_flop_per_bit),
            ("s_min_px", self.s_min_px),
            ("s_max_px", self.s_max_px),
            ("res_norm_px", self.res_norm_px),
            ("rate_norm_bps", self.rate_norm_bps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.num_users == 0 || self.num_servers == 0 {
            return Err(Error::InvalidConfig(
                "need at least one user and one server".into(),
            ));
        }
        if self.s_min_px >= self.s_max_px {
            return Err(Error::InvalidConfig(format!(
                "s_min_px ({}) must be below s_max_px ({})",
                self.s_min_px, self.s_max_px
            )));
        }
        Ok(())
    }

    /// Bandwidth share of one user under equal OFDMA allocation.
    pub fn user_bandwidth(&self) -> f64 {
        self.bandwidth_hz / self.num_users as f64
    }

    /// Noise power over one user's band.
    pub fn user_noise_power(&self) -> f64 {
        self.user_bandwidth() * self.noise_density_w_per_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub channel_gain: f64,
    pub uplink_bits: f64,
    pub compression_ratio: f64,
    pub downlink_rate_bps: f64,
    /// Earning ability `tau`.
    pub earn_scale: f64,
    pub earn: EarnParams,
    pub energy_budget_j: f64,
    pub power_cap_w: f64,
    pub lambda_down_flop_per_bit: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("channel_gain", self.channel_gain),
            ("uplink_bits", self.uplink_bits),
            ("compression_ratio", self.compression_ratio),
            ("downlink_rate_bps", self.downlink_rate_bps),
            ("earn_scale", self.earn_scale),
            ("energy_budget_j", self.energy_budget_j),
            ("power_cap_w", self.power_cap_w),
            ("lambda_down_flop_per_bit", self.lambda_down_flop_per_bit),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "user {name} must be positive, got {v}"
                )));
            }
        }
        self.earn.validate()
    }

    /// Computation needed for one task: `lambda_u D^u + lambda_d D^d(s)`.
    pub fn workload_flop(&self, cfg: &SystemConfig, resolution_px: f64) -> f64 {
        cfg.lambda_up_flop_per_bit * self.uplink_bits
            + self.lambda_down_flop_per_bit * downlink_bits(self, resolution_px)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerProfile {
    pub compute_flops: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssociationDefect {
    Shape { expected: usize, found: usize },
    NonBinary { col: usize, value: f64 },
    RowSum(f64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("row {row}: {defect}")]
pub struct AssociationViolation {
    pub row: usize,
    pub defect: AssociationDefect,
}

impl fmt::Display for AssociationDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssociationDefect::Shape { expected, found } => {
                write!(f, "expected {expected} columns, found {found}")
            }
            AssociationDefect::NonBinary { col, value } => {
                write!(f, "entry in column {col} is {value}, not 0 or 1")
            }
            AssociationDefect::RowSum(s) => write!(f, "row sums to {s}, not 1"),
        }
    }
}

/// One-hot user-to-server assignment, stored as the chosen server per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Association {
    server_of: Vec<usize>,
    num_servers: usize,
}

impl Association {
    pub fn new(server_of: Vec<usize>, num_servers: usize) -> Result<Self> {
        if num_servers == 0 {
            return Err(Error::InvalidInput(
                "association needs at least one server".into(),
            ));
        }
        if let Some((k, &n)) = server_of
            .iter()
            .enumerate()
            .find(|(_, &n)| n >= num_servers)
        {
            return Err(Error::InvalidInput(format!(
                "user {k} assigned to server {n}, only {num_servers} exist"
            )));
        }
        Ok(Association {
            server_of,
            num_servers,
        })
    }

    /// Assigns user `k` to server `k mod N`.
    pub fn round_robin(num_users: usize, num_servers: usize) -> Self {
        Association {
            server_of: (0..num_users).map(|k| k % num_servers).collect(),
            num_servers,
        }
    }

    pub fn num_users(&self) -> usize {
        self.server_of.len()
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn server_of(&self, user: usize) -> usize {
        self.server_of[user]
    }

    pub fn servers(&self) -> &[usize] {
        &self.server_of
    }

    /// Number of users on each server.
    pub fn loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.num_servers];
        for &n in &self.server_of {
            loads[n] += 1;
        }
        loads
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.server_of
            .iter()
            .map(|&n| {
                let mut row = vec![0.0; self.num_servers];
                row[n] = 1.0;
                row
            })
            .collect()
    }

    /// Stacked row-major indicator vector of length `K*N`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.to_matrix().concat()
    }
}

/// Accepts a `K x N` matrix iff every entry is 0 or 1 and every row sums to 1.
pub fn validate_association(
    matrix: &[Vec<f64>],
) -> std::result::Result<Association, AssociationViolation> {
    let n = matrix.first().map_or(0, Vec::len);
    let mut server_of = Vec::with_capacity(matrix.len());
    for (row, entries) in matrix.iter().enumerate() {
        if entries.len() != n || n == 0 {
            return Err(AssociationViolation {
                row,
                defect: AssociationDefect::Shape {
                    expected: n,
                    found: entries.len(),
                },
            });
        }
        if let Some((col, &value)) = entries
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(AssociationViolation {
                row,
                defect: AssociationDefect::NonBinary { col, value },
            });
        }
        let sum: f64 = entries.iter().sum();
        if sum != 1.0 {
            return Err(AssociationViolation {
                row,
                defect: AssociationDefect::RowSum(sum),
            });
        }
        server_of.push(entries.iter().position(|&v| v == 1.0).unwrap());
    }
    Ok(Association {
        server_of,
        num_servers: n,
    })
}

/// Decision variables of one candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub powers: Vec<f64>,
    pub resolutions: Vec<f64>,
    pub association: Association,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UserLatency {
    pub uplink_s: f64,
    pub downlink_s: f64,
    pub compute_s: f64,
}

impl UserLatency {
    pub fn total(&self) -> f64 {
        self.uplink_s + self.downlink_s + self.compute_s
    }
}

/// Achievable uplink rate in bit/s over the user's equal bandwidth share.
pub fn uplink_rate(cfg: &SystemConfig, user: &UserProfile, power_w: f64) -> f64 {
    if power_w <= 0.0 {
        return 0.0;
    }
    let snr = user.channel_gain * power_w / cfg.user_noise_power();
    cfg.user_bandwidth() * snr.ln_1p() / LN_2
}

/// Downlink payload in bits for a frame of `resolution_px` pixels.
pub fn downlink_bits(user: &UserProfile, resolution_px: f64) -> f64 {
    BITS_PER_PIXEL * resolution_px / user.compression_ratio
}

/// Uplink transmit energy `p * D^u / R^u(p)`.
pub fn transmit_energy(cfg: &SystemConfig, user: &UserProfile, power_w: f64) -> f64 {
    power_w * user.uplink_bits / uplink_rate(cfg, user, power_w)
}

fn check_decision(users: &[UserProfile], servers: &[ServerProfile], d: &Decision) -> Result<()> {
    let k = users.len();
    if d.powers.len() != k || d.resolutions.len() != k || d.association.num_users() != k {
        return Err(Error::InvalidInput(format!(
            "decision sized for {} users, scenario has {k}",
            d.association.num_users()
        )));
    }
    if d.association.num_servers() != servers.len() {
        return Err(Error::InvalidInput(format!(
            "association has {} servers, scenario has {}",
            d.association.num_servers(),
            servers.len()
        )));
    }
    Ok(())
}

fn latency_with_load(
    cfg: &SystemConfig,
    user: &UserProfile,
    server: &ServerProfile,
    load: usize,
    power_w: f64,
    resolution_px: f64,
    k: usize,
) -> Result<UserLatency> {
    let rate = uplink_rate(cfg, user, power_w);
    if rate <= 0.0 {
        return Err(Error::ZeroRate { user: k });
    }
    Ok(UserLatency {
        uplink_s: user.uplink_bits / rate,
        downlink_s: downlink_bits(user, resolution_px) / user.downlink_rate_bps,
        compute_s: user.workload_flop(cfg, resolution_px) * load as f64 / server.compute_flops,
    })
}

/// Uplink, downlink and computation latency of user `k`; the server's
/// capacity is split equally among the users associated with it.
pub fn per_user_latency(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    decision: &Decision,
    k: usize,
) -> Result<UserLatency> {
    check_decision(users, servers, decision)?;
    let n = decision.association.server_of(k);
    let load = decision
        .association
        .servers()
        .iter()
        .filter(|&&m| m == n)
        .count();
    latency_with_load(
        cfg,
        &users[k],
        &servers[n],
        load,
        decision.powers[k],
        decision.resolutions[k],
        k,
    )
}

/// Earnings `tau * h(x)` of a user at the given resolution.
pub fn user_earnings(cfg: &SystemConfig, user: &UserProfile, resolution_px: f64) -> Result<f64> {
    let x = normalize_input(cfg, resolution_px, user.downlink_rate_bps)?;
    Ok(eval_earning(&user.earn, user.earn_scale, x))
}

pub fn user_utility(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    decision: &Decision,
    k: usize,
) -> Result<f64> {
    let lat = per_user_latency(cfg, users, servers, decision, k)?;
    let earn = user_earnings(cfg, &users[k], decision.resolutions[k])?;
    Ok(cfg.eta_earn * earn - cfg.eta_lat * cfg.weight_omega * lat.total())
}

/// `F = -sum_k U_k`, the minimization objective.
pub fn total_objective(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    decision: &Decision,
) -> Result<f64> {
    Ok(Allocation::evaluate(cfg, users, servers, decision)?.objective)
}

/// A decision together with its latency, earnings and utility breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub powers: Vec<f64>,
    pub resolutions: Vec<f64>,
    pub association: Association,
    pub per_user_latency: Vec<UserLatency>,
    pub per_user_earnings: Vec<f64>,
    pub per_user_utility: Vec<f64>,
    pub objective: f64,
}

impl Allocation {
    pub fn evaluate(
        cfg: &SystemConfig,
        users: &[UserProfile],
        servers: &[ServerProfile],
        decision: &Decision,
    ) -> Result<Self> {
        check_decision(users, servers, decision)?;
        let loads = decision.association.loads();
        let mut per_user_latency = Vec::with_capacity(users.len());
        let mut per_user_earnings = Vec::with_capacity(users.len());
        let mut per_user_utility = Vec::with_capacity(users.len());
        for (k, user) in users.iter().enumerate() {
            let n = decision.association.server_of(k);
            let lat = latency_with_load(
                cfg,
                user,
                &servers[n],
                loads[n],
                decision.powers[k],
                decision.resolutions[k],
                k,
            )?;
            let earn = user_earnings(cfg, user, decision.resolutions[k])?;
            per_user_utility
                .push(cfg.eta_earn * earn - cfg.eta_lat * cfg.weight_omega * lat.total());
            per_user_latency.push(lat);
            per_user_earnings.push(earn);
        }
        let objective = -per_user_utility.iter().sum::<f64>();
        Ok(Allocation {
            powers: decision.powers.clone(),
            resolutions: decision.resolutions.clone(),
            association: decision.association.clone(),
            per_user_latency,
            per_user_earnings,
            per_user_utility,
            objective,
        })
    }

    pub fn decision(&self) -> Decision {
        Decision {
            powers: self.powers.clone(),
            resolutions: self.resolutions.clone(),
            association: self.association.clone(),
        }
    }

    pub fn mean_latency(&self) -> f64 {
        self.per_user_latency
            .iter()
            .map(UserLatency::total)
            .sum::<f64>()
            / self.per_user_latency.len() as f64
    }

    pub fn total_earnings(&self) -> f64 {
        self.per_user_earnings.iter().sum()
    }

    pub fn mean_utility(&self) -> f64 {
        self.per_user_utility.iter().sum::<f64>() / self.per_user_utility.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolutionTier {
    P720,
    P1080,
    P1440,
    K4,
    K8,
}

impl ResolutionTier {
    pub const ALL: [ResolutionTier; 5] = [
        ResolutionTier::P720,
        ResolutionTier::P1080,
        ResolutionTier::P1440,
        ResolutionTier::K4,
        ResolutionTier::K8,
    ];

    pub fn pixels(self) -> f64 {
        match self {
            ResolutionTier::P720 => 1280.0 * 720.0,
            ResolutionTier::P1080 => 1920.0 * 1080.0,
            ResolutionTier::P1440 => 2560.0 * 1440.0,
            ResolutionTier::K4 => 3840.0 * 2160.0,
            ResolutionTier::K8 => 7680.0 * 4320.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ResolutionTier::P720 => "720p",
            ResolutionTier::P1080 => "1080p",
            ResolutionTier::P1440 => "1440p",
            ResolutionTier::K4 => "4k",
            ResolutionTier::K8 => "8k",
        }
    }
}

/// Nearest standard tier by pixel count. Reporting only; the optimizer works
/// with continuous resolutions.
pub fn snap_resolution(resolution_px: f64) -> ResolutionTier {
    ResolutionTier::ALL
        .into_iter()
        .min_by(|a, b| {
            (a.pixels() - resolution_px)
                .abs()
                .total_cmp(&(b.pixels() - resolution_px).abs())
        })
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earnings::EarnFamily;
    use rand::{Rng, SeedableRng};

    pub(crate) fn user() -> UserProfile {
        UserProfile {
            channel_gain: 1e-10,
            uplink_bits: 1e5,
            compression_ratio: 300.0,
            downlink_rate_bps: 15e6,
            earn_scale: 1.0,
            earn: EarnFamily::Log.fitted(),
            energy_budget_j: 0.1,
            power_cap_w: 0.2,
            lambda_down_flop_per_bit: 1e4,
        }
    }

    fn cfg10() -> SystemConfig {
        SystemConfig {
            num_users: 10,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn rate_at_snr_three_is_two_bits_per_hz() {
        let cfg = cfg10();
        let mut u = user();
        let p = 0.1;
        u.channel_gain = 3.0 * cfg.user_noise_power() / p;
        let r = uplink_rate(&cfg, &u, p);
        assert!((r - 4e6).abs() < 1e-6, "{r}");
        assert_eq!(uplink_rate(&cfg, &u, 0.0), 0.0);
    }

    #[test]
    fn rate_matches_high_precision_reference() {
        // 50-digit evaluation: g=1e-10, p=0.1 W, B=20 MHz, K=10, density 10^-16.4 W/Hz
        let cfg = cfg10();
        assert_eq!(cfg.noise_density_w_per_hz, 10f64.powf(-16.4));
        let r = uplink_rate(&cfg, &user(), 0.1);
        let reference = 341_373.911_127_612_6;
        assert!(((r - reference) / reference).abs() < 1e-12, "{r}");
    }

    #[test]
    fn downlink_payload() {
        let mut u = user();
        assert_eq!(downlink_bits(&u, 921_600.0), 147_456.0);
        assert_eq!(downlink_bits(&u, 0.0), 0.0);
        u.compression_ratio = 600.0;
        assert_eq!(downlink_bits(&u, 7680.0 * 4320.0), 2_654_208.0);
    }

    fn one_user_decision(power: f64, res: f64) -> Decision {
        Decision {
            powers: vec![power],
            resolutions: vec![res],
            association: Association::round_robin(1, 1),
        }
    }

    #[test]
    fn compute_latency_single_user_one_tflops() {
        let cfg = SystemConfig {
            num_users: 1,
            lambda_up_flop_per_bit: 1e4,
            ..SystemConfig::default()
        };
        let mut u = user();
        // lambda_u D^u = 1e9 exactly when the downlink part is off
        u.lambda_down_flop_per_bit = 1e-300;
        let servers = [ServerProfile {
            compute_flops: 1e12,
        }];
        let lat =
            per_user_latency(&cfg, &[u], &servers, &one_user_decision(0.1, RES_720P), 0).unwrap();
        assert!((lat.compute_s - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn shared_server_doubles_compute_latency() {
        let cfg = SystemConfig {
            num_users: 2,
            ..SystemConfig::default()
        };
        let users = [user(), user()];
        let servers = [
            ServerProfile {
                compute_flops: 2e12,
            },
            ServerProfile {
                compute_flops: 2e12,
            },
        ];
        let mut d = Decision {
            powers: vec![0.1, 0.1],
            resolutions: vec![RES_720P, RES_720P],
            association: Association::new(vec![0, 1], 2).unwrap(),
        };
        let alone = per_user_latency(&cfg, &users, &servers, &d, 0)
            .unwrap()
            .compute_s;
        d.association = Association::new(vec![0, 0], 2).unwrap();
        let shared = per_user_latency(&cfg, &users, &servers, &d, 0)
            .unwrap()
            .compute_s;
        assert_eq!(shared, 2.0 * alone);
    }

    #[test]
    fn zero_power_is_a_zero_rate_error() {
        let cfg = SystemConfig {
            num_users: 1,
            ..SystemConfig::default()
        };
        let servers = [ServerProfile {
            compute_flops: 1e12,
        }];
        let err = per_user_latency(
            &cfg,
            &[user()],
            &servers,
            &one_user_decision(0.0, RES_720P),
            0,
        );
        assert_eq!(err, Err(Error::ZeroRate { user: 0 }));
    }

    #[test]
    fn energy_one_second_transmission() {
        let cfg = cfg10();
        let mut u = user();
        u.uplink_bits = 1e6;
        // SNR chosen so the rate is exactly 1 Mbit/s: (B/K) log2(1+snr) = 1e6
        let snr = 2f64.powf(1e6 / cfg.user_bandwidth()) - 1.0;
        u.channel_gain = snr * cfg.user_noise_power() / 0.1;
        let e = transmit_energy(&cfg, &u, 0.1);
        assert!((e - 0.1).abs() < 1e-12, "{e}");
    }

    #[test]
    fn energy_increasing_and_zero_power_limit() {
        let cfg = cfg10();
        let u = user();
        let mut prev = 0.0;
        for i in 1..=1000 {
            let p = 0.2 * i as f64 / 1000.0;
            let e = transmit_energy(&cfg, &u, p);
            assert!(e > prev, "not increasing at p = {p}");
            prev = e;
        }
        let limit = u.uplink_bits * LN_2 * cfg.noise_density_w_per_hz / u.channel_gain;
        let near = transmit_energy(&cfg, &u, 1e-12);
        assert!(((near - limit) / limit).abs() < 1e-6, "{near} vs {limit}");
    }

    #[test]
    fn rate_increasing_and_concave() {
        let cfg = cfg10();
        let u = user();
        for i in 1..=100 {
            let p = 0.2 * i as f64 / 101.0;
            let h = 1e-4 * p;
            let (lo, mid, hi) = (
                uplink_rate(&cfg, &u, p - h),
                uplink_rate(&cfg, &u, p),
                uplink_rate(&cfg, &u, p + h),
            );
            assert!(hi - lo > 0.0);
            assert!(hi - 2.0 * mid + lo < 0.0, "p = {p}");
        }
    }

    fn random_instance(
        seed: u64,
    ) -> (SystemConfig, Vec<UserProfile>, Vec<ServerProfile>, Decision) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..8);
        let n = rng.random_range(1..4);
        let cfg = SystemConfig {
            num_users: k,
            num_servers: n,
            weight_omega: rng.random_range(0.5..5.0),
            eta_earn: rng.random_range(0.1..2.0),
            eta_lat: rng.random_range(0.1..2.0),
            ..SystemConfig::default()
        };
        let users: Vec<_> = (0..k)
            .map(|i| UserProfile {
                channel_gain: 10f64.powf(rng.random_range(-11.0..-8.0)),
                uplink_bits: rng.random_range(5e4..2e5),
                compression_ratio: rng.random_range(300.0..600.0),
                downlink_rate_bps: rng.random_range(10e6..20e6),
                earn_scale: rng.random_range(0.5..1.5),
                earn: EarnFamily::ALL[i % 3].fitted(),
                energy_budget_j: 0.1,
                power_cap_w: 0.2,
                lambda_down_flop_per_bit: rng.random_range(1e3..1e5) * 450.0 / 48.0,
            })
            .collect();
        let servers: Vec<_> = (0..n)
            .map(|_| ServerProfile {
                compute_flops: rng.random_range(1e12..5e12),
            })
            .collect();
        let d = Decision {
            powers: (0..k).map(|_| rng.random_range(0.01..0.2)).collect(),
            resolutions: (0..k).map(|_| rng.random_range(RES_720P..RES_8K)).collect(),
            association: Association::new((0..k).map(|_| rng.random_range(0..n)).collect(), n)
                .unwrap(),
        };
        (cfg, users, servers, d)
    }

    // Independent term-by-term evaluation straight from the model equations.
    fn reference_terms(
        cfg: &SystemConfig,
        users: &[UserProfile],
        servers: &[ServerProfile],
        d: &Decision,
        k: usize,
    ) -> (f64, f64, f64, f64) {
        let u = &users[k];
        let bw = cfg.bandwidth_hz / users.len() as f64;
        let rate =
            bw * (1.0 + u.channel_gain * d.powers[k] / (bw * cfg.noise_density_w_per_hz)).log2();
        let dd = 24.0 * 2.0 * d.resolutions[k] / u.compression_ratio;
        let n = d.association.server_of(k);
        let share = servers[n].compute_flops
            / (0..users.len())
                .filter(|&j| d.association.server_of(j) == n)
                .count() as f64;
        let lu = u.uplink_bits / rate;
        let ld = dd / u.downlink_rate_bps;
        let lp =
            (cfg.lambda_up_flop_per_bit * u.uplink_bits + u.lambda_down_flop_per_bit * dd) / share;
        let x = 0.5 * d.resolutions[k] / cfg.res_norm_px
            + 0.5 * u.downlink_rate_bps / cfg.rate_norm_bps;
        let h = match u.earn.family {
            EarnFamily::Pow => u.earn.alpha * x.powf(u.earn.beta),
            EarnFamily::Log => u.earn.alpha * (1.0 + u.earn.beta * x).ln(),
            EarnFamily::Exp => u.earn.alpha * (1.0 - (-u.earn.beta * x).exp()),
        };
        (lu, ld, lp, u.earn_scale * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn latency_utility_objective_match_reference() {
        for seed in 0..200 {
            let (cfg, users, servers, d) = random_instance(seed);
            let mut sum_u = 0.0;
            for k in 0..users.len() {
                let lat = per_user_latency(&cfg, &users, &servers, &d, k).unwrap();
                let (lu, ld, lp, earn) = reference_terms(&cfg, &users, &servers, &d, k);
                assert!(rel(lat.uplink_s, lu) < 1e-12);
                assert!(rel(lat.downlink_s, ld) < 1e-12);
                assert!(rel(lat.compute_s, lp) < 1e-12);
                let util = user_utility(&cfg, &users, &servers, &d, k).unwrap();
                let expect = cfg.eta_earn * earn - cfg.eta_lat * cfg.weight_omega * (lu + ld + lp);
                assert!((util - expect).abs() < 1e-9 * expect.abs().max(1.0));
                sum_u += util;
            }
            let f = total_objective(&cfg, &users, &servers, &d).unwrap();
            assert!(rel(f, -sum_u) < 1e-9);
        }
    }

    #[test]
    fn utility_switches() {
        let (mut cfg, users, servers, d) = random_instance(3);
        cfg.eta_earn = 0.0;
        let lat = per_user_latency(&cfg, &users, &servers, &d, 0).unwrap();
        let u = user_utility(&cfg, &users, &servers, &d, 0).unwrap();
        assert_eq!(u, -cfg.eta_lat * cfg.weight_omega * lat.total());
        cfg.eta_earn = 1.3;
        cfg.weight_omega = 0.0;
        let u = user_utility(&cfg, &users, &servers, &d, 0).unwrap();
        assert_eq!(
            u,
            1.3 * user_earnings(&cfg, &users[0], d.resolutions[0]).unwrap()
        );
    }

    #[test]
    fn objective_single_user_and_duplication() {
        let (mut cfg, users, servers, _) = random_instance(5);
        cfg.num_users = 1;
        let one = Decision {
            powers: vec![0.1],
            resolutions: vec![RES_720P * 3.0],
            association: Association::new(vec![0], servers.len()).unwrap(),
        };
        let f1 = total_objective(&cfg, &users[..1], &servers, &one).unwrap();
        assert_eq!(
            f1,
            -user_utility(&cfg, &users[..1], &servers, &one, 0).unwrap()
        );

        // duplicate user 0, each on its own identical server; bandwidth per user held fixed
        let cfg2 = SystemConfig {
            num_users: 2,
            bandwidth_hz: cfg.bandwidth_hz * 2.0,
            ..cfg.clone()
        };
        let two_servers = vec![servers[0], servers[0]];
        let one_server = vec![servers[0]];
        let single = Decision {
            association: Association::new(vec![0], 1).unwrap(),
            ..one.clone()
        };
        let dup = Decision {
            powers: vec![0.1, 0.1],
            resolutions: vec![RES_720P * 3.0; 2],
            association: Association::new(vec![0, 1], 2).unwrap(),
        };
        let f_single = total_objective(&cfg, &users[..1], &one_server, &single).unwrap();
        let f_dup = total_objective(
            &cfg2,
            &[users[0].clone(), users[0].clone()],
            &two_servers,
            &dup,
        )
        .unwrap();
        assert!(rel(f_dup, 2.0 * f_single) < 1e-12);
    }

    #[test]
    fn downlink_latency_is_linear_in_resolution() {
        let (cfg, users, servers, mut d) = random_instance(9);
        d.resolutions[0] = 4e6;
        let a = per_user_latency(&cfg, &users, &servers, &d, 0)
            .unwrap()
            .downlink_s;
        d.resolutions[0] = 8e6;
        let b = per_user_latency(&cfg, &users, &servers, &d, 0)
            .unwrap()
            .downlink_s;
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn association_validation() {
        let ok = validate_association(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(ok.servers(), &[0, 1]);
        let zero_row = validate_association(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap_err();
        assert_eq!(zero_row.row, 1);
        assert_eq!(zero_row.defect, AssociationDefect::RowSum(0.0));
        let frac = validate_association(&[vec![0.5, 0.5]]).unwrap_err();
        assert_eq!(
            frac.defect,
            AssociationDefect::NonBinary { col: 0, value: 0.5 }
        );
        let two = validate_association(&[vec![1.0, 1.0]]).unwrap_err();
        assert_eq!(two.defect, AssociationDefect::RowSum(2.0));
        let ragged = validate_association(&[vec![1.0, 0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(ragged.defect, AssociationDefect::Shape { .. }));
        assert_eq!(validate_association(&ok.to_matrix()), Ok(ok));
    }

    #[test]
    fn tier_snapping() {
        assert_eq!(snap_resolution(RES_720P), ResolutionTier::P720);
        assert_eq!(snap_resolution(2.1e6), ResolutionTier::P1080);
        assert_eq!(snap_resolution(3.0e7), ResolutionTier::K8);
        assert_eq!(snap_resolution(8.0e6), ResolutionTier::K4);
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = SystemConfig {
            s_min_px: RES_8K,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let zero = SystemConfig {
            num_servers: 0,
            ..SystemConfig::default()
        };
        assert!(zero.validate().is_err());
        assert!(user().validate().is_ok());
    }
}
