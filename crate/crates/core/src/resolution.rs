//! Per-user downlink resolution under a fixed power and association.
//!
//! A user's resolution enters its latency linearly and its earnings through
//! the concave `h`, so each user maximizes
//! `phi(s) = eta_e tau h(x0 + dx_ds s) - c1 s` over `[s_min, s_max]`
//! independently of everyone else.

use crate::earnings::{EarnFamily, EarnParams};
use crate::error::{Error, Result};
use crate::model::{Association, ServerProfile, SystemConfig, UserProfile, BITS_PER_PIXEL};

const BISECTION_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionSubproblem {
    pub user: usize,
    /// Utility lost per extra pixel through downlink and compute latency.
    pub latency_coeff: f64,
    /// `eta_e * tau`.
    pub earn_scale: f64,
    /// Normalized earning input per pixel.
    pub dx_ds: f64,
    /// Normalized earning input contributed by the downlink bitrate.
    pub x_offset: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl ResolutionSubproblem {
    pub fn new(
        cfg: &SystemConfig,
        users: &[UserProfile],
        servers: &[ServerProfile],
        assoc: &Association,
        user: usize,
    ) -> Result<Self> {
        let n = assoc.server_of(user);
        let count = assoc.servers().iter().filter(|&&m| m == n).count();
        let u = &users[user];
        let sub = ResolutionSubproblem {
            user,
            latency_coeff: latency_coefficient(cfg, u, count, &servers[n]),
            earn_scale: cfg.eta_earn * u.earn_scale,
            dx_ds: 0.5 / cfg.res_norm_px,
            x_offset: 0.5 * u.downlink_rate_bps / cfg.rate_norm_bps,
            s_min: cfg.s_min_px,
            s_max: cfg.s_max_px,
        };
        sub.validate()?;
        Ok(sub)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latency_coeff >= 0.0 && self.latency_coeff.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "user {}: latency coefficient {} must be non-negative",
                self.user, self.latency_coeff
            )));
        }
        if !(self.earn_scale >= 0.0 && self.earn_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "user {}: earning scale {} must be non-negative",
                self.user, self.earn_scale
            )));
        }
        if !(self.dx_ds > 0.0 && self.dx_ds.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "user {}: dx_ds must be positive",
                self.user
            )));
        }
        if !(self.s_min < self.s_max && self.s_min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "user {}: bounds [{}, {}] not ordered",
                self.user, self.s_min, self.s_max
            )));
        }
        Ok(())
    }

    fn x(&self, s: f64) -> f64 {
        self.x_offset + self.dx_ds * s
    }

    /// Net utility of resolution `s`.
    pub fn phi(&self, params: &EarnParams, s: f64) -> f64 {
        self.earn_scale * params.h(self.x(s)) - self.latency_coeff * s
    }

    pub fn dphi(&self, params: &EarnParams, s: f64) -> f64 {
        self.earn_scale * params.dh(self.x(s)) * self.dx_ds - self.latency_coeff
    }

    pub fn d2phi(&self, params: &EarnParams, s: f64) -> f64 {
        self.earn_scale * params.d2h(self.x(s)) * self.dx_ds * self.dx_ds
    }
}

/// `d latency / d s` weighted by `eta_l * omega`, with the server shared by `count` users.
pub fn latency_coefficient(
    cfg: &SystemConfig,
    user: &UserProfile,
    count: usize,
    server: &ServerProfile,
) -> f64 {
    let per_bit = 1.0 / user.downlink_rate_bps
        + user.lambda_down_flop_per_bit * count as f64 / server.compute_flops;
    cfg.eta_lat * cfg.weight_omega * BITS_PER_PIXEL / user.compression_ratio * per_bit
}

/// Maximizer of `phi` over the bounds.
pub fn optimal_resolution(sub: &ResolutionSubproblem, params: &EarnParams) -> f64 {
    if sub.earn_scale == 0.0 {
        return sub.s_min;
    }
    if sub.latency_coeff == 0.0 {
        return sub.s_max;
    }
    match stationary_input(sub, params) {
        Some(x) => ((x - sub.x_offset) / sub.dx_ds).clamp(sub.s_min, sub.s_max),
        None => bisect_resolution(sub, params),
    }
}

/// Root of `phi'` in normalized-input space, when the family has one in closed form.
fn stationary_input(sub: &ResolutionSubproblem, params: &EarnParams) -> Option<f64> {
    let (a, b) = (params.alpha, params.beta);
    let ratio = sub.latency_coeff / (sub.earn_scale * a * b * sub.dx_ds);
    let x = match params.family {
        // linear h: phi' has constant sign
        EarnFamily::Pow if b == 1.0 => return None,
        EarnFamily::Pow => ratio.powf(1.0 / (b - 1.0)),
        EarnFamily::Log => (1.0 / ratio - 1.0) / b,
        EarnFamily::Exp => -ratio.ln() / b,
    };
    x.is_finite().then_some(x)
}

/// Bisection on `phi'`; valid for any concave earning function.
pub fn bisect_resolution(sub: &ResolutionSubproblem, params: &EarnParams) -> f64 {
    let (mut lo, mut hi) = (sub.s_min, sub.s_max);
    if sub.dphi(params, lo) <= 0.0 {
        return lo;
    }
    if sub.dphi(params, hi) >= 0.0 {
        return hi;
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if sub.dphi(params, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Best resolution of every user under `assoc`.
pub fn optimal_resolutions(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    assoc: &Association,
) -> Result<Vec<f64>> {
    (0..users.len())
        .map(|k| {
            let sub = ResolutionSubproblem::new(cfg, users, servers, assoc, k)?;
            Ok(optimal_resolution(&sub, &users[k].earn))
        })
        .collect()
}
