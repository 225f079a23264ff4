//! Play-to-earn earning functions.
//!
//! A user's earnings are `tau * h(x)` where `x` combines the normalized
//! downlink resolution and the normalized downlink bitrate, each mapped to
//! `[0, 0.5]`, so `x` lives in `[0, 1]`. Three fitted families are supported:
//!
//! ```text
//! Pow: h(x) = alpha * x^beta
//! Log: h(x) = alpha * ln(1 + beta * x)
//! Exp: h(x) = alpha * (1 - exp(-beta * x))
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EarnFamily {
    Pow,
    Log,
    Exp,
}

impl EarnFamily {
    pub const ALL: [EarnFamily; 3] = [EarnFamily::Pow, EarnFamily::Log, EarnFamily::Exp];

    /// Fitted constants for this family (seated/standing MOS and expert-score fits).
    pub fn fitted(self) -> EarnParams {
        match self {
            EarnFamily::Pow => EarnParams::new(self, 4.268, 0.2714),
            EarnFamily::Log => EarnParams::new(self, 1.159, 91.92),
            EarnFamily::Exp => EarnParams::new(self, 89.95, 4.732),
        }
    }
}

impl fmt::Display for EarnFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EarnFamily::Pow => "pow",
            EarnFamily::Log => "log",
            EarnFamily::Exp => "exp",
        };
        f.write_str(s)
    }
}

impl FromStr for EarnFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pow" => Ok(EarnFamily::Pow),
            "log" => Ok(EarnFamily::Log),
            "exp" => Ok(EarnFamily::Exp),
            other => Err(Error::Parse(format!("unknown earning family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarnParams {
    pub family: EarnFamily,
    pub alpha: f64,
    pub beta: f64,
}

impl EarnParams {
    pub const fn new(family: EarnFamily, alpha: f64, beta: f64) -> Self {
        EarnParams {
            family,
            alpha,
            beta,
        }
    }

    /// Parameter bounds: both positive, and `beta <= 1` for the power family.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.family == EarnFamily::Pow && self.beta > 1.0 {
            return Err(Error::InvalidInput(format!(
                "power family requires beta <= 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// `h(x)` without the `tau` scale.
    pub fn h(&self, x: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        match self.family {
            EarnFamily::Pow => a * x.powf(b),
            EarnFamily::Log => a * (b * x).ln_1p(),
            EarnFamily::Exp => -a * (-b * x).exp_m1(),
        }
    }

    /// `dh/dx`. Infinite for the power family at `x = 0` when `beta < 1`.
    pub fn dh(&self, x: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        match self.family {
            EarnFamily::Pow => a * b * x.powf(b - 1.0),
            EarnFamily::Log => a * b / (1.0 + b * x),
            EarnFamily::Exp => a * b * (-b * x).exp(),
        }
    }

    /// `d^2h/dx^2`.
    pub fn d2h(&self, x: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        match self.family {
            EarnFamily::Pow => a * b * (b - 1.0) * x.powf(b - 2.0),
            EarnFamily::Log => -a * b * b / (1.0 + b * x).powi(2),
            EarnFamily::Exp => -a * b * b * (-b * x).exp(),
        }
    }

    /// `dh/dbeta` at unit alpha, used by the fitter's Jacobian.
    fn dh_dbeta_unit(&self, x: f64) -> f64 {
        let b = self.beta;
        match self.family {
            EarnFamily::Pow => {
                if x > 0.0 {
                    x.powf(b) * x.ln()
                } else {
                    0.0
                }
            }
            EarnFamily::Log => x / (1.0 + b * x),
            EarnFamily::Exp => x * (-b * x).exp(),
        }
    }
}

/// Normalized earning input `x` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NormalizedInput(f64);

impl NormalizedInput {
    pub fn new(x: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&x) {
            Ok(NormalizedInput(x))
        } else {
            Err(Error::InvalidInput(format!(
                "normalized input {x} outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Maps resolution and downlink bitrate to `[0, 0.5]` each and sums them.
pub fn normalize_input(
    cfg: &SystemConfig,
    resolution_px: f64,
    downlink_rate_bps: f64,
) -> Result<NormalizedInput> {
    if !(0.0..=cfg.res_norm_px).contains(&resolution_px) {
        return Err(Error::InvalidInput(format!(
            "resolution {resolution_px} px outside [0, {}]",
            cfg.res_norm_px
        )));
    }
    if !(0.0..=cfg.rate_norm_bps).contains(&downlink_rate_bps) {
        return Err(Error::InvalidInput(format!(
            "downlink rate {downlink_rate_bps} bit/s outside [0, {}]",
            cfg.rate_norm_bps
        )));
    }
    let x = 0.5 * resolution_px / cfg.res_norm_px + 0.5 * downlink_rate_bps / cfg.rate_norm_bps;
    // rounding can push the sum of two halves a hair above one
    NormalizedInput::new(x.min(1.0))
}

pub fn eval_earning(params: &EarnParams, tau: f64, x: NormalizedInput) -> f64 {
    tau * params.h(x.value())
}

pub fn eval_earning_derivative(params: &EarnParams, tau: f64, x: NormalizedInput) -> Result<f64> {
    let x = x.value();
    if params.family == EarnFamily::Pow && x == 0.0 && params.beta < 1.0 {
        return Err(Error::Singular(format!(
            "power family derivative at x = 0 with beta = {}",
            params.beta
        )));
    }
    Ok(tau * params.dh(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assumption1Violation {
    NotIncreasing { x: f64, slope: f64 },
    NotConcave { x: f64, curvature: f64 },
}

impl fmt::Display for Assumption1Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption1Violation::NotIncreasing { x, slope } => {
                write!(f, "not strictly increasing at x = {x} (dh/dx = {slope:e})")
            }
            Assumption1Violation::NotConcave { x, curvature } => {
                write!(
                    f,
                    "not strictly concave at x = {x} (d2h/dx2 = {curvature:e})"
                )
            }
        }
    }
}

/// Checks strict monotonicity and strict concavity on the grid `i/1000`, `i = 1..=1000`.
pub fn check_assumption1(params: &EarnParams) -> std::result::Result<(), Assumption1Violation> {
    for i in 1..=1000 {
        let x = i as f64 / 1000.0;
        let slope = params.dh(x);
        if !(slope > 0.0) {
            return Err(Assumption1Violation::NotIncreasing { x, slope });
        }
        let curvature = params.d2h(x);
        if !(curvature < 0.0) {
            return Err(Assumption1Violation::NotConcave { x, curvature });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    /// Refinement hit its iteration cap; the best point seen is returned.
    IterationCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub params: EarnParams,
    /// Sum of squared residuals.
    pub residual: f64,
    pub status: FitStatus,
    pub iterations: usize,
}

const FIT_GRID: usize = 400;
const FIT_MAX_ITERS: usize = 200;

fn beta_grid(family: EarnFamily) -> Vec<f64> {
    match family {
        EarnFamily::Pow => (1..=FIT_GRID).map(|i| i as f64 / FIT_GRID as f64).collect(),
        EarnFamily::Log | EarnFamily::Exp => {
            let (lo, hi) = (-3.0f64, 4.0f64);
            (0..FIT_GRID)
                .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (FIT_GRID - 1) as f64))
                .collect()
        }
    }
}

/// Closed-form least-squares alpha for fixed beta, and the resulting SSR.
fn best_alpha(family: EarnFamily, beta: f64, samples: &[(f64, f64)]) -> (f64, f64) {
    let unit = EarnParams::new(family, 1.0, beta);
    let (mut fy, mut ff) = (0.0, 0.0);
    for &(x, y) in samples {
        let f = unit.h(x);
        fy += f * y;
        ff += f * f;
    }
    if ff <= 0.0 {
        return (0.0, samples.iter().map(|(_, y)| y * y).sum());
    }
    let alpha = fy / ff;
    (alpha, ssr(&EarnParams::new(family, alpha, beta), samples))
}

fn ssr(p: &EarnParams, samples: &[(f64, f64)]) -> f64 {
    samples.iter().map(|&(x, y)| (p.h(x) - y).powi(2)).sum()
}

/// Least-squares fit of `(alpha, beta)` to `(x, score)` samples: coarse grid
/// over beta with closed-form alpha, then damped Gauss-Newton refinement.
pub fn fit_params(samples: &[(f64, f64)], family: EarnFamily) -> Result<FitReport> {
    if samples.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "need at least 5 samples, got {}",
            samples.len()
        )));
    }
    if let Some(&(x, _)) = samples.iter().find(|(x, _)| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidInput(format!(
            "sample x = {x} outside [0, 1]"
        )));
    }
    let (ymin, ymax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
            (lo.min(y), hi.max(y))
        });
    let yscale = ymax.abs().max(ymin.abs()).max(1.0);
    if ymax - ymin <= 1e-12 * yscale {
        return Err(Error::DegenerateFit(
            "scores are constant; the curve has no shape to fit".into(),
        ));
    }
    let (xmin, xmax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
            (lo.min(x), hi.max(x))
        });
    if xmax - xmin <= 1e-12 {
        return Err(Error::DegenerateFit("all samples share the same x".into()));
    }

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for beta in beta_grid(family) {
        let (alpha, r) = best_alpha(family, beta, samples);
        if alpha > 0.0 && r < best.0 {
            best = (r, alpha, beta);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::DegenerateFit(
            "no grid point gives a positive alpha".into(),
        ));
    }
    let grid_params = EarnParams::new(family, best.1, best.2);

    // Levenberg-Marquardt in (alpha, ln beta) so beta stays positive.
    let mut cur = grid_params;
    let mut cur_ssr = best.0;
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < FIT_MAX_ITERS {
        iterations += 1;
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for &(x, y) in samples {
            let unit = EarnParams::new(family, 1.0, cur.beta);
            let r = cur.alpha * unit.h(x) - y;
            let j = [unit.h(x), cur.alpha * unit.dh_dbeta_unit(x) * cur.beta];
            for a in 0..2 {
                jtr[a] += j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut step = None;
        while damping < 1e12 {
            let m = [
                [jtj[0][0] * (1.0 + damping), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + damping)],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() > 0.0 && det.is_finite() {
                let d0 = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
                let d1 = -(-m[1][0] * jtr[0] + m[0][0] * jtr[1]) / det;
                let mut beta = cur.beta * d1.exp();
                if family == EarnFamily::Pow {
                    beta = beta.min(1.0);
                }
                let cand = EarnParams::new(family, cur.alpha + d0, beta);
                let cand_ssr = ssr(&cand, samples);
                if cand.alpha > 0.0 && cand_ssr <= cur_ssr {
                    step = Some((
                        cand,
                        cand_ssr,
                        d0.abs() / cur.alpha.abs().max(1e-300) + d1.abs(),
                    ));
                    damping = (damping * 0.3).max(1e-12);
                    break;
                }
            }
            damping *= 10.0;
        }
        let Some((cand, cand_ssr, rel_step)) = step else {
            // no descent direction left: at a stationary point
            converged = true;
            break;
        };
        let improvement = cur_ssr - cand_ssr;
        cur = cand;
        cur_ssr = cand_ssr;
        if rel_step < 1e-12 || improvement <= 1e-15 * cur_ssr.max(1e-300) || cur_ssr == 0.0 {
            converged = true;
            break;
        }
    }

    if converged {
        Ok(FitReport {
            params: cur,
            residual: cur_ssr,
            status: FitStatus::Converged,
            iterations,
        })
    } else {
        log::warn!("earning fit for {family} did not converge in {FIT_MAX_ITERS} iterations; returning the grid optimum");
        Ok(FitReport {
            params: grid_params,
            residual: best.0,
            status: FitStatus::IterationCap,
            iterations,
        })
    }
}

/// Parses `x,score` lines. Blank lines and `#` comments are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(x), Some(y), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!(
                "line {}: expected `x,score`",
                lineno + 1
            )));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        out.push((parse(x)?, parse(y)?));
    }
    Ok(out)
}
