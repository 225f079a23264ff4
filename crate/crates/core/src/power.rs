//! Per-user optimal transmit power under a power cap and an energy budget.
//!
//! Uplink latency falls with power while uplink energy `p D / R(p)` rises,
//! so the best power is the cap or the root of `energy(p) = E_max`,
//! whichever is smaller. With `N0 = (B/K) sigma^2` and
//! `z = ln2 D N0 / (B/K E_max g) = y(0+) / E_max`, substituting
//! `u = (1 + g p / N0) z` into the energy equation gives `u e^-u = z e^-z`.
//! `u = z` is the trivial root `p = 0` (principal branch); the positive
//! root is on the lower branch, `u = -W-1(-z e^-z)`, so
//! `p = (N0 / g) (u / z - 1)`.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::lambert::lower_branch_gap;
use crate::model::{SystemConfig, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerBinding {
    PowerCap,
    EnergyBudget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSolution {
    pub p_star: f64,
    pub binding: PowerBinding,
    /// Energy needed per budget as `p -> 0`; the budget is reachable iff `z < 1`.
    pub z: f64,
    /// Root of `energy(p) = E_max`.
    pub p_hat: f64,
}

/// `y(0+) / E_max`.
pub fn feasibility_ratio(cfg: &SystemConfig, user: &UserProfile) -> f64 {
    LN_2 * user.uplink_bits * cfg.noise_density_w_per_hz
        / (user.energy_budget_j * user.channel_gain)
}

/// Positive root of `energy(p) = E_max` from the lower Lambert branch.
pub fn energy_limited_power(cfg: &SystemConfig, user: &UserProfile) -> Result<f64> {
    let z = feasibility_ratio(cfg, user);
    if !(z < 1.0) {
        return Err(Error::EnergyInfeasible { z });
    }
    let v = lower_branch_gap(z)?;
    // u / z - 1 with u = 1 + v, written to keep precision as z -> 1
    Ok(cfg.user_noise_power() / user.channel_gain * (v + (1.0 - z)) / z)
}

pub fn optimal_power(cfg: &SystemConfig, user: &UserProfile) -> Result<PowerSolution> {
    let z = feasibility_ratio(cfg, user);
    let p_hat = energy_limited_power(cfg, user)?;
    let (p_star, binding) = if p_hat >= user.power_cap_w {
        (user.power_cap_w, PowerBinding::PowerCap)
    } else {
        (p_hat, PowerBinding::EnergyBudget)
    };
    Ok(PowerSolution {
        p_star,
        binding,
        z,
        p_hat,
    })
}

/// Optimal powers for every user, or the index of the first infeasible one.
pub fn optimal_powers(cfg: &SystemConfig, users: &[UserProfile]) -> Result<Vec<PowerSolution>> {
    users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            optimal_power(cfg, u).map_err(|e| match e {
                Error::EnergyInfeasible { z } => {
                    Error::InvalidInput(format!("user {k}: energy budget infeasible (z = {z:.6})"))
                }
                other => other,
            })
        })
        .collect()
}

/// Uplink energy written directly from bandwidth, noise and gain.
fn energy_direct(cfg: &SystemConfig, user: &UserProfile, p: f64) -> f64 {
    let k = cfg.num_users as f64;
    let snr = user.channel_gain * p * k / (cfg.bandwidth_hz * cfg.noise_density_w_per_hz);
    p * user.uplink_bits * k * LN_2 / (cfg.bandwidth_hz * snr.ln_1p())
}

/// Bisection root of `energy(p) = E_max`, independent of the Lambert path.
pub fn energy_root_oracle(cfg: &SystemConfig, user: &UserProfile) -> Result<f64> {
    let budget = user.energy_budget_j;
    let mut lo = 1e-12;
    if energy_direct(cfg, user, lo) >= budget {
        return Err(Error::EnergyInfeasible {
            z: feasibility_ratio(cfg, user),
        });
    }
    let mut hi = 1.0;
    while energy_direct(cfg, user, hi) <= budget {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidInput(
                "energy never reaches the budget".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if energy_direct(cfg, user, mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
