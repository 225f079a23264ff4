//! User-to-server association as a binary QCQP, its semidefinite relaxation,
//! and Gaussian-randomization rounding.
//!
//! With `a` the row-major `K*N` indicator vector and `w_k` user `k`'s task
//! workload, the shared-compute latency cost is
//! `sum_n load_n sum_{k on n} w_k / f_n = a^T P a`, where block `(j, k)` of
//! `P` is `diag(w_k / f_n)`. Lifting `b = [a; 1]` and `B = b b^T` turns the
//! problem into a linear objective over `B` with row-sum equalities, entrywise
//! nonnegativity and `<Y, B> <= 0` (integrality); dropping `rank B = 1`
//! leaves an SDP whose value is a lower bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eig, Matrix, SparseMatrix};
use crate::model::{Allocation, Association, Decision, ServerProfile, SystemConfig, UserProfile};
use crate::sdp::{solve_sdp_with, SdpProblem, SdpSettings, SdpSolution, SdpWarmStart};

/// Largest `N^K` the enumeration oracle accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    pub num_users: usize,
    pub num_servers: usize,
    /// `eta_l * omega`.
    pub weight: f64,
    /// Per-user task workload in FLOP.
    pub workloads: Vec<f64>,
    pub server_flops: Vec<f64>,
    /// `M x M` quadratic cost, `M = K * N`.
    pub p: Matrix,
    /// `K x M` row selectors.
    pub q: Vec<Vec<f64>>,
    /// `P` bordered with a zero row and column.
    pub p_lifted: Matrix,
    /// `-I` on the `M x M` block, `1/2` on the border.
    pub y: Matrix,
    /// Row-sum matrices, `q_j / 2` on the border.
    pub g: Vec<SparseMatrix>,
}

impl QcqpInstance {
    pub fn dim(&self) -> usize {
        self.num_users * self.num_servers
    }

    pub fn index(&self, user: usize, server: usize) -> usize {
        user * self.num_servers + server
    }

    /// `a^T P a` evaluated from the matrix.
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        self.p.quad_form(a)
    }

    /// `weight * a^T P a` evaluated from server loads.
    pub fn association_cost(&self, assoc: &Association) -> f64 {
        let loads = assoc.loads();
        let total: f64 = assoc
            .servers()
            .iter()
            .zip(&self.workloads)
            .map(|(&n, w)| w * loads[n] as f64 / self.server_flops[n])
            .sum();
        self.weight * total
    }

    /// Relaxation with the unweighted cost `P`; `weight` only rescales the
    /// objective, so the relaxed solution does not depend on it.
    pub fn sdp_problem(&self) -> SdpProblem {
        let m = self.dim();
        let mut eq: Vec<(SparseMatrix, f64)> = self.g.iter().map(|g| (g.clone(), 1.0)).collect();
        let corner =
            SparseMatrix::from_triplets(m + 1, &[(m, m, 1.0)]).expect("corner inside the matrix");
        eq.push((corner, 1.0));
        SdpProblem {
            dim: m + 1,
            cost: self.p_lifted.symmetrized(),
            eq_constraints: eq,
            nonneg: (0..=m).collect(),
            trace_ineq: Some(self.y.clone()),
        }
    }
}

fn check_inputs(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    resolutions: &[f64],
) -> Result<()> {
    if users.is_empty() || servers.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one user and one server".into(),
        ));
    }
    if resolutions.len() != users.len() {
        return Err(Error::InvalidInput(format!(
            "{} resolutions for {} users",
            resolutions.len(),
            users.len()
        )));
    }
    if let Some(s) = resolutions
        .iter()
        .find(|&&s| !(s >= cfg.s_min_px * (1.0 - 1e-12) && s <= cfg.s_max_px * (1.0 + 1e-12)))
    {
        return Err(Error::InvalidInput(format!(
            "resolution {s} outside [{}, {}]",
            cfg.s_min_px, cfg.s_max_px
        )));
    }
    Ok(())
}

pub fn build_qcqp(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    resolutions: &[f64],
) -> Result<QcqpInstance> {
    check_inputs(cfg, users, servers, resolutions)?;
    let (k_users, n_servers) = (users.len(), servers.len());
    let m = k_users * n_servers;
    let workloads: Vec<f64> = users
        .iter()
        .zip(resolutions)
        .map(|(u, &s)| u.workload_flop(cfg, s))
        .collect();
    let server_flops: Vec<f64> = servers.iter().map(|s| s.compute_flops).collect();

    let mut p = Matrix::zeros(m);
    let mut p_lifted = Matrix::zeros(m + 1);
    for j in 0..k_users {
        for (k, w) in workloads.iter().enumerate() {
            for (n, f) in server_flops.iter().enumerate() {
                let v = w / f;
                p[(j * n_servers + n, k * n_servers + n)] = v;
                p_lifted[(j * n_servers + n, k * n_servers + n)] = v;
            }
        }
    }
    let q: Vec<Vec<f64>> = (0..k_users)
        .map(|j| {
            let mut row = vec![0.0; m];
            row[j * n_servers..(j + 1) * n_servers].fill(1.0);
            row
        })
        .collect();
    let mut y = Matrix::zeros(m + 1);
    for i in 0..m {
        y[(i, i)] = -1.0;
        y[(i, m)] = 0.5;
        y[(m, i)] = 0.5;
    }
    let g = (0..k_users)
        .map(|j| {
            let trip: Vec<(usize, usize, f64)> = (0..n_servers)
                .flat_map(|n| {
                    let i = j * n_servers + n;
                    [(i, m, 0.5), (m, i, 0.5)]
                })
                .collect();
            SparseMatrix::from_triplets(m + 1, &trip)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(QcqpInstance {
        num_users: k_users,
        num_servers: n_servers,
        weight: cfg.eta_lat * cfg.weight_omega,
        workloads,
        server_flops,
        p,
        q,
        p_lifted,
        y,
        g,
    })
}

/// Relaxed solution `B*` and its objective, a lower bound on the binary optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrSolution {
    pub lower_bound: f64,
    pub sdp: SdpSolution,
}

impl SdrSolution {
    pub fn b(&self) -> &Matrix {
        &self.sdp.x
    }
}

/// Solves the relaxation. A solve that stops at the iteration cap is still
/// returned; its status and residuals travel in `sdp`.
pub fn solve_association_sdr(
    inst: &QcqpInstance,
    settings: &SdpSettings,
    warm: Option<&SdpWarmStart>,
) -> Result<SdrSolution> {
    let sdp = solve_sdp_with(&inst.sdp_problem(), settings, warm)?;
    Ok(SdrSolution {
        lower_bound: inst.weight * sdp.objective,
        sdp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingReport {
    pub num_samples: usize,
    /// Association cost `weight * a^T P a` of the best candidate, in the same
    /// units as the relaxation bound.
    pub best_objective: f64,
    pub best_assoc: Association,
    pub sdr_lower_bound: f64,
    /// `(best - bound) / |bound|`.
    pub gap: f64,
    /// Cost of the candidate rounded from the diagonal of `B*`.
    pub diagonal_objective: f64,
}

/// Per-user argmax over servers, ties to the lowest index.
fn project_rows(inst: &QcqpInstance, v: &[f64]) -> Association {
    let n = inst.num_servers;
    let servers = (0..inst.num_users)
        .map(|k| {
            let row = &v[k * n..(k + 1) * n];
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    Association::new(servers, n).expect("argmax indices are in range")
}

pub fn gaussian_randomize(
    inst: &QcqpInstance,
    b: &Matrix,
    samples: usize,
    seed: u64,
) -> Result<RoundingReport> {
    let m = inst.dim();
    if b.dim() != m + 1 {
        return Err(Error::InvalidInput(format!(
            "B has side {}, expected {}",
            b.dim(),
            m + 1
        )));
    }
    let eig = symmetric_eig(&b.symmetrized())?;
    let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    // columns of U diag(sqrt(l)); eigenvalues at rounding-noise level are dropped
    let factors: Vec<(f64, usize)> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 1e-12 * top)
        .map(|(i, &l)| (l.sqrt(), i))
        .collect();
    let sdr_lower_bound = inst.weight * inst.p_lifted.dot(b);

    let diag_assoc = project_rows(inst, &b.diag()[..m]);
    let diagonal_objective = inst.association_cost(&diag_assoc);
    let mut best_assoc = diag_assoc;
    let mut best_objective = diagonal_objective;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = vec![0.0; m + 1];
    let mut cand = vec![0.0; m + 1];
    for _ in 0..samples {
        for x in r.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        cand.fill(0.0);
        for &(sl, col) in &factors {
            let c = sl * r[col];
            for (row, x) in cand.iter_mut().enumerate() {
                *x += eig.vectors[(row, col)] * c;
            }
        }
        // orient so the homogenizing coordinate is positive
        if cand[m] < 0.0 {
            cand.iter_mut().for_each(|x| *x = -*x);
        }
        let assoc = project_rows(inst, &cand[..m]);
        let cost = inst.association_cost(&assoc);
        if cost < best_objective {
            best_objective = cost;
            best_assoc = assoc;
        }
    }
    let gap = (best_objective - sdr_lower_bound) / sdr_lower_bound.abs().max(f64::MIN_POSITIVE);
    Ok(RoundingReport {
        num_samples: samples,
        best_objective,
        best_assoc,
        sdr_lower_bound,
        gap,
        diagonal_objective,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub association: Association,
    /// Full objective `F` at the best association.
    pub objective: f64,
    /// Association-dependent part, comparable with the relaxation bound.
    pub association_cost: f64,
}

/// Exhaustive search over all `N^K` associations with power and resolution fixed.
pub fn brute_force_association(
    cfg: &SystemConfig,
    users: &[UserProfile],
    servers: &[ServerProfile],
    powers: &[f64],
    resolutions: &[f64],
) -> Result<BruteForce> {
    let inst = build_qcqp(cfg, users, servers, resolutions)?;
    let (k, n) = (users.len(), servers.len());
    if (n as f64).powi(k as i32) > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "{n}^{k} associations exceed {BRUTE_FORCE_LIMIT:e}"
        )));
    }
    let mut digits = vec![0usize; k];
    let mut best: Option<(f64, Association)> = None;
    loop {
        let assoc = Association::new(digits.clone(), n)?;
        let cost = inst.association_cost(&assoc);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, assoc));
        }
        // odometer, last user fastest
        let mut pos = k;
        loop {
            if pos == 0 {
                let (association_cost, association) = best.expect("at least one association");
                let objective = Allocation::evaluate(
                    cfg,
                    users,
                    servers,
                    &Decision {
                        powers: powers.to_vec(),
                        resolutions: resolutions.to_vec(),
                        association: association.clone(),
                    },
                )?
                .objective;
                return Ok(BruteForce {
                    association,
                    objective,
                    association_cost,
                });
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earnings::EarnFamily;
    use crate::model::{per_user_latency, RES_720P};
    use crate::sdp::SdpStatus;
    use rand::Rng;

    fn random_instance(
        k: usize,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> (SystemConfig, Vec<UserProfile>, Vec<ServerProfile>, Vec<f64>) {
        let cfg = SystemConfig {
            num_users: k,
            num_servers: n,
            ..SystemConfig::default()
        };
        let users = (0..k)
            .map(|_| UserProfile {
                channel_gain: 1e-11,
                uplink_bits: rng.random_range(50e3..200e3),
                compression_ratio: rng.random_range(300.0..600.0),
                downlink_rate_bps: rng.random_range(10e6..20e6),
                earn_scale: 1.0,
                earn: EarnFamily::Pow.fitted(),
                energy_budget_j: 0.1,
                power_cap_w: 0.2,
                lambda_down_flop_per_bit: rng.random_range(1e3..100e3) * 450.0 / 48.0,
            })
            .collect();
        let servers = (0..n)
            .map(|_| ServerProfile {
                compute_flops: rng.random_range(1e12..5e12),
            })
            .collect();
        let res = (0..k)
            .map(|_| rng.random_range(cfg.s_min_px..cfg.s_max_px))
            .collect();
        (cfg, users, servers, res)
    }

    fn random_assoc(k: usize, n: usize, rng: &mut ChaCha8Rng) -> Association {
        Association::new((0..k).map(|_| rng.random_range(0..n)).collect(), n).unwrap()
    }

    #[test]
    fn single_user_single_server() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (cfg, users, servers, res) = random_instance(1, 1, &mut rng);
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        let w = users[0].workload_flop(&cfg, res[0]);
        assert_eq!(inst.p.as_slice(), &[w / servers[0].compute_flops]);
        assert_eq!(inst.q, vec![vec![1.0]]);
    }

    #[test]
    fn quadratic_form_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (cfg, users, servers, res) = random_instance(2, 2, &mut rng);
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        for code in 0..4 {
            let assoc = Association::new(vec![code / 2, code % 2], 2).unwrap();
            let a = assoc.to_vector();
            // sum_n sum_j sum_k a_jn a_kn w_k / f_n
            let mut direct = 0.0;
            for n in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        direct +=
                            a[j * 2 + n] * a[k * 2 + n] * inst.workloads[k] / inst.server_flops[n];
                    }
                }
            }
            assert!((inst.quadratic_form(&a) - direct).abs() <= 1e-12 * direct);
            let mut b = a.clone();
            b.push(1.0);
            assert_eq!(inst.p_lifted.quad_form(&b), inst.quadratic_form(&a));
        }
    }

    #[test]
    fn quadratic_form_matches_compute_latency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = rng.random_range(1..=10);
            let n = rng.random_range(1..=5);
            let (cfg, users, servers, res) = random_instance(k, n, &mut rng);
            let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
            let assoc = random_assoc(k, n, &mut rng);
            let decision = Decision {
                powers: vec![0.1; k],
                resolutions: res.clone(),
                association: assoc.clone(),
            };
            let lp: f64 = (0..k)
                .map(|i| {
                    per_user_latency(&cfg, &users, &servers, &decision, i)
                        .unwrap()
                        .compute_s
                })
                .sum();
            let quad = inst.weight * inst.quadratic_form(&assoc.to_vector());
            assert!(((quad - lp) / lp).abs() < 1e-9);
            assert!(((inst.association_cost(&assoc) - lp) / lp).abs() < 1e-12);
        }
    }

    #[test]
    fn integrality_and_row_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (cfg, users, servers, res) = random_instance(3, 3, &mut rng);
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        let lift = |a: &[f64]| {
            let mut b = a.to_vec();
            b.push(1.0);
            Matrix::outer(&b)
        };
        let binary = random_assoc(3, 3, &mut rng).to_vector();
        assert_eq!(inst.y.dot(&lift(&binary)), 0.0);
        for g in &inst.g {
            assert_eq!(g.dot(&lift(&binary)), 1.0);
        }
        for _ in 0..1000 {
            let mut a = Vec::new();
            for _ in 0..3 {
                let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                a.extend(raw.iter().map(|x| x / s));
            }
            assert!(inst.y.dot(&lift(&a)) > 0.0);
            for g in &inst.g {
                assert!((g.dot(&lift(&a)) - 1.0).abs() < 1e-12);
            }
        }
        // breaking one row sum shows up in exactly that constraint
        let mut broken = binary.clone();
        broken[0] += 1.0;
        assert!((inst.g[0].dot(&lift(&broken)) - 2.0).abs() < 1e-12);
        assert_eq!(inst.g[1].dot(&lift(&broken)), 1.0);
    }

    #[test]
    fn forced_assignment_relaxation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (cfg, users, servers, res) = random_instance(1, 1, &mut rng);
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        let sdr = solve_association_sdr(
            &inst,
            &SdpSettings {
                tol: 1e-8,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert_eq!(sdr.sdp.status, SdpStatus::Converged);
        let expect = inst.association_cost(&Association::round_robin(1, 1));
        assert!(((sdr.lower_bound - expect) / expect).abs() < 1e-6);
        assert!(
            sdr.b()
                .sub(&Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap())
                .max_abs()
                < 1e-5
        );
    }

    #[test]
    fn fast_server_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (cfg, users, mut servers, res) = random_instance(1, 2, &mut rng);
        servers[0].compute_flops = 5e12;
        servers[1].compute_flops = 5e10;
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        let sdr = solve_association_sdr(&inst, &SdpSettings::default(), None).unwrap();
        assert!(sdr.b()[(0, 0)] > 0.99);
        let bf = brute_force_association(&cfg, &users, &servers, &[0.1], &res).unwrap();
        assert_eq!(bf.association.servers(), &[0]);
    }

    #[test]
    fn relaxation_bounds_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let (cfg, users, servers, res) = random_instance(4, 2, &mut rng);
            let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
            let sdr = solve_association_sdr(&inst, &SdpSettings::default(), None).unwrap();
            assert_eq!(sdr.sdp.status, SdpStatus::Converged);
            for g in &inst.g {
                assert!((g.dot(sdr.b()) - 1.0).abs() < 1e-6);
            }
            let bf = brute_force_association(&cfg, &users, &servers, &[0.1; 4], &res).unwrap();
            assert!(sdr.lower_bound <= bf.association_cost + 1e-6);
            let report = gaussian_randomize(&inst, sdr.b(), 200, 1).unwrap();
            assert!(report.best_objective >= bf.association_cost - 1e-12);
            assert!(report.best_objective >= report.sdr_lower_bound - 1e-6);
            assert!(report.best_objective <= report.diagonal_objective);
        }
    }

    #[test]
    fn rank_one_randomization_recovers_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (cfg, users, servers, res) = random_instance(4, 3, &mut rng);
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        let assoc = random_assoc(4, 3, &mut rng);
        let mut b = assoc.to_vector();
        b.push(1.0);
        let report = gaussian_randomize(&inst, &Matrix::outer(&b), 100, 3).unwrap();
        assert_eq!(report.best_assoc, assoc);
        assert_eq!(report.best_objective, inst.association_cost(&assoc));
    }

    #[test]
    fn randomization_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (cfg, users, servers, res) = random_instance(4, 3, &mut rng);
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        let sdr = solve_association_sdr(&inst, &SdpSettings::default(), None).unwrap();
        let a = gaussian_randomize(&inst, sdr.b(), 500, 42).unwrap();
        let b = gaussian_randomize(&inst, sdr.b(), 500, 42).unwrap();
        assert_eq!(a, b);
        let zero = gaussian_randomize(&inst, sdr.b(), 0, 42).unwrap();
        assert_eq!(zero.best_objective, zero.diagonal_objective);
    }

    #[test]
    fn enumeration_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // identical users on identical servers split up
        let (cfg, mut users, mut servers, _) = random_instance(2, 2, &mut rng);
        users[1] = users[0].clone();
        servers[1] = servers[0];
        let res = vec![RES_720P; 2];
        let bf = brute_force_association(&cfg, &users, &servers, &[0.1; 2], &res).unwrap();
        assert_ne!(bf.association.server_of(0), bf.association.server_of(1));

        let (cfg, users, servers, res) = random_instance(5, 3, &mut rng);
        let bf = brute_force_association(&cfg, &users, &servers, &[0.1; 5], &res).unwrap();
        let inst = build_qcqp(&cfg, &users, &servers, &res).unwrap();
        for _ in 0..50 {
            assert!(bf.association_cost <= inst.association_cost(&random_assoc(5, 3, &mut rng)));
        }

        let (cfg, users, servers, res) = random_instance(13, 3, &mut rng);
        assert!(matches!(
            brute_force_association(&cfg, &users, &servers, &[0.1; 13], &res),
            Err(Error::TooLarge(_))
        ));
    }
}
