//! Real branches of the Lambert W function.
//!
//! `W(x)` solves `w * exp(w) = x`. On `[-1/e, 0)` there are two real
//! solutions: the principal branch `W0 >= -1` and the lower branch
//! `W-1 <= -1`; they meet at the branch point `W(-1/e) = -1`.

use std::f64::consts::E;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Principal,
    Lower,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Principal => "principal",
            Branch::Lower => "lower",
        })
    }
}

// e = E_HI + E_LO to ~32 digits, so e*x + 1 keeps its precision near -1/e.
const E_HI: f64 = E;
const E_LO: f64 = 1.445_646_891_729_250_2e-16;

const MAX_ITERS: usize = 50;

/// Distance `e*x + 1` from the branch point, computed without cancellation.
fn branch_offset(x: f64) -> f64 {
    E_HI.mul_add(x, 1.0) + E_LO * x
}

/// Series about the branch point in `p = +-sqrt(2(e*x + 1))`.
fn branch_series(p: f64) -> f64 {
    -1.0 + p
        * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0 + p * (769.0 / 17280.0)))))
}

pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    let domain_err = || Error::LambertDomain {
        x,
        branch: match branch {
            Branch::Principal => "principal",
            Branch::Lower => "lower",
        },
    };
    if x.is_nan() {
        return Err(domain_err());
    }
    let q = branch_offset(x);
    if q < -4.0 * f64::EPSILON {
        return Err(domain_err());
    }
    if branch == Branch::Lower && x >= 0.0 {
        return Err(domain_err());
    }
    if q <= 0.0 {
        return Ok(-1.0);
    }
    if branch == Branch::Principal && x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let w0 = if q < 0.3 {
        let p = (2.0 * q).sqrt();
        let p = if branch == Branch::Principal { p } else { -p };
        if p.abs() < 1e-3 {
            return Ok(branch_series(p));
        }
        branch_series(p)
    } else {
        match branch {
            Branch::Principal if x < 3.0 => x.ln_1p(),
            Branch::Principal => {
                let l1 = x.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
            Branch::Lower => {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    };
    Ok(halley(w0, x))
}

fn halley(mut w: f64, x: f64) -> f64 {
    for _ in 0..MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let w1 = w + 1.0;
        let step = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// `t - ln(1 + t)` for `t > -1`, accurate near zero.
fn log1p_gap(t: f64) -> f64 {
    if t.abs() < 0.1 {
        // alternating series sum_{k>=2} (-1)^k t^k / k
        let mut term = t * t;
        let mut sum = 0.0f64;
        let mut k = 2.0;
        let mut sign = 1.0;
        while term.abs() > 1e-18 * sum.abs() || k < 4.0 {
            sum += sign * term / k;
            term *= t;
            sign = -sign;
            k += 1.0;
            if k > 60.0 {
                break;
            }
        }
        sum
    } else {
        t - t.ln_1p()
    }
}

/// Lower-branch solution of `w * exp(w) = -z * exp(-z)` for `z` in `(0, 1)`,
/// returned as `v = -w - 1 > 0`.
///
/// Works on `u - ln u = z - ln z` (with `u = -w`) in the variable
/// `psi(t) = sqrt(2 (t - ln(1+t)))`, which is smooth through the branch point,
/// so the result keeps full relative precision as `z -> 1`.
pub fn lower_branch_gap(z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::LambertDomain {
            x: -z * (-z).exp(),
            branch: "lower",
        });
    }
    // z - 1 is exact for z >= 1/2; below that, ln z keeps z's precision
    let gap_z = if z >= 0.5 {
        log1p_gap(z - 1.0)
    } else {
        (z - 1.0) - z.ln()
    };
    let target = (2.0 * gap_z).sqrt();
    let psi = |v: f64| (2.0 * log1p_gap(v)).sqrt();

    let mut v = if target < 1.0 {
        target
    } else {
        let c = z - z.ln();
        (c + c.ln()) - 1.0
    };
    for _ in 0..100 {
        let pv = psi(v);
        if pv == 0.0 {
            v = target;
            continue;
        }
        let slope = v / (1.0 + v) / pv;
        let mut next = v - (pv - target) / slope;
        if next <= 0.0 {
            next = 0.5 * v;
        }
        let done = (next - v).abs() <= 2.0 * f64::EPSILON * next;
        v = next;
        if done {
            break;
        }
    }
    Ok(v)
}

/// `W-1(-z * exp(-z))` for `z` in `(0, 1)`; the principal branch returns `-z` itself.
pub fn lower_branch_of_neg_z_exp(z: f64) -> Result<f64> {
    Ok(-1.0 - lower_branch_gap(z)?)
}
