//! Small dense SDP solver:
//!
//! ```text
//! minimize   <C, X>
//! subject to <A_i, X> = b_i,  X_ij >= 0 for i, j in S,  <Y, X> <= 0,  X psd
//! ```
//!
//! Three-block consensus ADMM. Each block projects onto one constraint set:
//! the affine equalities (plus the linear cost), the PSD cone, and the
//! sign/halfspace set.

use crate::error::{Error, Result};
use crate::linalg::{project_psd, Cholesky, Matrix, SparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub cost: Matrix,
    /// `(A_i, b_i)` for `<A_i, X> = b_i`.
    pub eq_constraints: Vec<(SparseMatrix, f64)>,
    /// Indices whose pairwise entries must be nonnegative.
    pub nonneg: Vec<usize>,
    /// `Y` in `<Y, X> <= 0`.
    pub trace_ineq: Option<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            tol: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
        }
    }
}

/// Iterates carried from one solve to the next on a slightly changed problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpWarmStart {
    z: Matrix,
    u: [Matrix; 3],
    rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: Matrix,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
    pub warm_start: SdpWarmStart,
}

type Sparse = Vec<(usize, f64)>;

fn sparse_dot(a: &Sparse, x: &Matrix) -> f64 {
    let xs = x.as_slice();
    a.iter().map(|&(i, v)| v * xs[i]).sum()
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        let sym = |name: &str, m: &Matrix| -> Result<()> {
            if m.dim() != n {
                return Err(Error::InvalidInput(format!(
                    "{name} has side {}, expected {n}",
                    m.dim()
                )));
            }
            if m.max_asymmetry() > 1e-12 * m.max_abs().max(1.0) {
                return Err(Error::NotSymmetric(m.max_asymmetry()));
            }
            Ok(())
        };
        sym("cost", &self.cost)?;
        for (i, (a, b)) in self.eq_constraints.iter().enumerate() {
            if a.dim() != n {
                return Err(Error::InvalidInput(format!(
                    "constraint {i} has side {}, expected {n}",
                    a.dim()
                )));
            }
            if a.max_asymmetry() > 1e-12 * a.max_abs().max(1.0) {
                return Err(Error::NotSymmetric(a.max_asymmetry()));
            }
            if !b.is_finite() {
                return Err(Error::InvalidInput(format!("constraint {i} has rhs {b}")));
            }
        }
        if let Some(y) = &self.trace_ineq {
            sym("trace inequality", y)?;
        }
        if let Some(&i) = self.nonneg.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "nonneg index {i} out of range"
            )));
        }
        Ok(())
    }
}

/// Affine projection `X - sum_i lambda_i A_i` with a cached Gram factor.
struct EqProjector {
    rows: Vec<Sparse>,
    rhs: Vec<f64>,
    gram: Option<Cholesky>,
}

impl EqProjector {
    fn new(prob: &SdpProblem) -> Result<Self> {
        let rows: Vec<Sparse> = prob
            .eq_constraints
            .iter()
            .map(|(a, _)| a.entries().to_vec())
            .collect();
        let rhs = prob.eq_constraints.iter().map(|(_, b)| *b).collect();
        let m = rows.len();
        let gram = if m == 0 {
            None
        } else {
            let mut g = Matrix::zeros(m);
            for i in 0..m {
                for j in 0..=i {
                    let v = prob.eq_constraints[i]
                        .0
                        .dot_sparse(&prob.eq_constraints[j].0);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            Some(Cholesky::new(&g).map_err(|_| {
                Error::InvalidInput("equality constraints are linearly dependent".into())
            })?)
        };
        Ok(EqProjector { rows, rhs, gram })
    }

    fn project(&self, v: &mut Matrix) {
        let Some(gram) = &self.gram else { return };
        let r: Vec<f64> = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| sparse_dot(a, v) - b)
            .collect();
        let lambda = gram.solve(&r);
        let data = v.as_mut_slice();
        for (a, l) in self.rows.iter().zip(lambda) {
            for &(i, x) in a {
                data[i] -= l * x;
            }
        }
    }

    fn max_residual(&self, x: &Matrix) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (sparse_dot(a, x) - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Projection onto `{X_S >= 0} ∩ {<Y, X> <= 0}`.
struct SignProjector {
    mask: Vec<bool>,
    y: Option<Sparse>,
}

impl SignProjector {
    fn new(prob: &SdpProblem) -> Self {
        let n = prob.dim;
        let mut on = vec![false; n];
        for &i in &prob.nonneg {
            on[i] = true;
        }
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                mask[i * n + j] = on[i] && on[j];
            }
        }
        SignProjector {
            mask,
            y: prob
                .trace_ineq
                .as_ref()
                .map(|y| SparseMatrix::from_dense(y).entries().to_vec()),
        }
    }

    fn clamp(&self, v: &mut Matrix) {
        for (x, &m) in v.as_mut_slice().iter_mut().zip(&self.mask) {
            if m && *x < 0.0 {
                *x = 0.0;
            }
        }
    }

    /// `<Y, clamp(V - mu Y)>`, touching only the support of `Y`.
    fn shifted_trace(&self, y: &Sparse, v: &Matrix, mu: f64) -> f64 {
        let vs = v.as_slice();
        y.iter()
            .map(|&(i, w)| {
                let mut x = vs[i] - mu * w;
                if self.mask[i] && x < 0.0 {
                    x = 0.0;
                }
                w * x
            })
            .sum()
    }

    fn project(&self, v: &mut Matrix) {
        let Some(y) = &self.y else {
            self.clamp(v);
            return;
        };
        if self.shifted_trace(y, v, 0.0) <= 0.0 {
            self.clamp(v);
            return;
        }
        let mut hi = 1.0;
        let mut doublings = 0;
        while self.shifted_trace(y, v, hi) > 0.0 && doublings < 200 {
            hi *= 2.0;
            doublings += 1;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.shifted_trace(y, v, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let data = v.as_mut_slice();
        for &(i, w) in y {
            data[i] -= hi * w;
        }
        self.clamp(v);
    }

    fn min_entry(&self, x: &Matrix) -> f64 {
        x.as_slice()
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min)
    }

    fn trace_value(&self, x: &Matrix) -> f64 {
        self.y
            .as_ref()
            .map_or(f64::NEG_INFINITY, |y| sparse_dot(y, x))
    }
}

struct Residuals {
    primal: f64,
    dual: f64,
}

pub fn solve_sdp(prob: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    solve_sdp_with(
        prob,
        &SdpSettings {
            tol,
            max_iter,
            ..SdpSettings::default()
        },
        None,
    )
}

const OVER_RELAX: f64 = 1.6;
const RHO_EVERY: usize = 50;

pub fn solve_sdp_with(
    prob: &SdpProblem,
    settings: &SdpSettings,
    warm: Option<&SdpWarmStart>,
) -> Result<SdpSolution> {
    prob.validate()?;
    if !(settings.tol > 0.0) || settings.max_iter == 0 || !(settings.rho > 0.0) {
        return Err(Error::InvalidConfig(
            "SDP tolerance, iteration cap and rho must be positive".into(),
        ));
    }
    let n = prob.dim;
    let eq = EqProjector::new(prob)?;
    let sign = SignProjector::new(prob);
    let cost_scale = prob.cost.frobenius_norm();
    let cost = if cost_scale > 0.0 {
        prob.cost.scaled(1.0 / cost_scale)
    } else {
        prob.cost.clone()
    };
    let tol = settings.tol;

    let (mut z, mut u, mut rho) = match warm {
        Some(w) if w.z.dim() == n => (w.z.clone(), w.u.clone(), w.rho),
        _ => (
            Matrix::zeros(n),
            [Matrix::zeros(n), Matrix::zeros(n), Matrix::zeros(n)],
            settings.rho,
        ),
    };
    let mut x2 = z.clone();
    let mut res = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
    };
    let mut iterations = 0;
    let mut status = SdpStatus::IterationCap;
    let mut x1 = Matrix::zeros(n);
    let mut x3 = Matrix::zeros(n);

    for it in 1..=settings.max_iter {
        iterations = it;
        // affine block carries the cost
        {
            let (zs, us, cs) = (z.as_slice(), u[0].as_slice(), cost.as_slice());
            for (k, x) in x1.as_mut_slice().iter_mut().enumerate() {
                *x = zs[k] - us[k] - cs[k] / rho;
            }
        }
        eq.project(&mut x1);
        x2 = project_psd(&z.sub(&u[1]))?;
        {
            let (zs, us) = (z.as_slice(), u[2].as_slice());
            for (k, x) in x3.as_mut_slice().iter_mut().enumerate() {
                *x = zs[k] - us[k];
            }
        }
        sign.project(&mut x3);
        // over-relaxed copies feed the averaging step; x2 stays the reported iterate
        let mut x2r = x2.clone();
        for x in [&mut x1, &mut x2r, &mut x3] {
            for (a, b) in x.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *a = OVER_RELAX * *a + (1.0 - OVER_RELAX) * b;
            }
        }

        let mut z_new = Matrix::zeros(n);
        {
            let zn = z_new.as_mut_slice();
            for (x, ui) in [&x1, &x2r, &x3].into_iter().zip(u.iter()) {
                for ((o, a), b) in zn.iter_mut().zip(x.as_slice()).zip(ui.as_slice()) {
                    *o += (a + b) / 3.0;
                }
            }
        }
        let mut consensus = 0.0;
        for (x, ui) in [&x1, &x2r, &x3].into_iter().zip(u.iter_mut()) {
            for ((uv, a), b) in ui
                .as_mut_slice()
                .iter_mut()
                .zip(x.as_slice())
                .zip(z_new.as_slice())
            {
                let d = a - b;
                consensus += d * d;
                *uv += d;
            }
        }
        let dz = z_new.sub(&z).frobenius_norm();
        z = z_new;

        let consensus_rel = consensus.sqrt() / z.frobenius_norm().max(1.0);
        let dual = rho * dz * 3f64.sqrt();

        if it % 5 == 0 || it == settings.max_iter {
            let nonneg_violation = (-sign.min_entry(&x2)).max(0.0);
            let primal = consensus_rel
                .max(eq.max_residual(&x2))
                .max(sign.trace_value(&x2).max(0.0))
                .max(nonneg_violation);
            res = Residuals { primal, dual };
            if primal <= tol && dual <= tol && nonneg_violation <= 0.1 * tol {
                status = SdpStatus::Converged;
                break;
            }
        }
        if it % RHO_EVERY == 0 {
            let scale = if consensus_rel > 10.0 * dual {
                2.0
            } else if dual > 10.0 * consensus_rel {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                for ui in u.iter_mut() {
                    for v in ui.as_mut_slice() {
                        *v /= scale;
                    }
                }
            }
        }
    }
    if status == SdpStatus::IterationCap {
        log::debug!(
            "SDP stopped at {iterations} iterations (primal {:.3e}, dual {:.3e})",
            res.primal,
            res.dual
        );
    }
    let objective = prob.cost.dot(&x2);
    Ok(SdpSolution {
        x: x2,
        objective,
        primal_residual: res.primal,
        dual_residual: res.dual,
        iterations,
        status,
        warm_start: SdpWarmStart { z, u, rho },
    })
}

impl SdpSolution {
    /// Turns an iteration-cap stop into an error for callers that need convergence.
    pub fn require_converged(self) -> Result<Self> {
        match self.status {
            SdpStatus::Converged => Ok(self),
            SdpStatus::IterationCap => Err(Error::SdpIterationCap {
                iterations: self.iterations,
                primal: self.primal_residual,
                dual: self.dual_residual,
            }),
        }
    }
}
