//! Consensus ADMM for the phase-shift block.
//!
//! At fixed powers and auxiliaries the phase objective to minimize is
//! `θ^H Q θ + Σ_kj w_kj |θ^H A_kj θ|²`. The variable is split into copies
//! `z` (quartic coupling), `k` (unit disk) and `s` (power budget) tied to
//! `θ` by scaled duals.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_normal;
use crate::error::{Error, Result};
use crate::linalg::{dotc, hermitize, norm_sqr, solve_shifted_low_rank, CMat, CVec};
use crate::moments::MomentSet;

/// How the power budget enters the phase block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseBudget {
    /// The `s` copy is projected onto the budget halfspace at the current
    /// powers.
    #[default]
    Coupled,
    /// The `s` copy is unconstrained; feasibility is restored afterwards by
    /// scaling the powers down.
    Deferred,
}

/// Coefficients of the phase subproblem at fixed `p`, `ξ`, `η`.
#[derive(Clone, Debug)]
pub struct PhaseProblem {
    /// Coefficient of `A_kk` in `Q`.
    pub q_a: Vec<f64>,
    /// Coefficient of `D_k` in `Q`.
    pub q_d: Vec<f64>,
    /// `w_kj = η_k² p_j α_k α_j β_k β_j`.
    pub weights: DMatrix<f64>,
    /// `p_k α_k β_k`, the budget normal is `Σ_k budget_dir[k] A_kk θ`.
    pub budget_dir: Vec<f64>,
    /// `P_max - Σ p_k C_k`, or `+∞` for a deferred budget.
    pub budget_rhs: f64,
}

impl PhaseProblem {
    pub fn new(ms: &MomentSet, p: &[f64], xi: &[f64], eta: &[f64], p_max: f64, budget: PhaseBudget) -> Self {
        let k = ms.users();
        let (a, b, c) = (&ms.alpha, &ms.beta, &ms.c);
        let q_a = (0..k)
            .map(|u| {
                -(2.0 * eta[u] * a[u] * b[u] * ((1.0 + xi[u]) * p[u]).sqrt()
                    - 2.0 * eta[u] * eta[u] * p[u] * a[u] * c[u] * b[u])
            })
            .collect();
        let mut q_d = vec![0.0; k];
        for u in 0..k {
            for j in (0..k).filter(|&j| j != u) {
                let base = eta[u] * eta[u] * p[j] * a[u] * a[j];
                q_d[u] += base * b[u] * (1.0 - b[j]);
                q_d[j] += base * b[j] * (1.0 - b[u]);
            }
        }
        let weights = DMatrix::from_fn(k, k, |u, j| eta[u] * eta[u] * p[j] * a[u] * a[j] * b[u] * b[j]);
        let budget_dir = (0..k).map(|u| p[u] * a[u] * b[u]).collect();
        let budget_rhs = match budget {
            PhaseBudget::Coupled => p_max - (0..k).map(|u| p[u] * c[u]).sum::<f64>(),
            PhaseBudget::Deferred => f64::INFINITY,
        };
        Self { q_a, q_d, weights, budget_dir, budget_rhs }
    }

    /// Dense `Q = Σ_k q_a[k] A_kk + q_d[k] D_k`.
    pub fn build_q(&self, ms: &MomentSet) -> CMat {
        let n = ms.elements();
        let mut q = CMat::zeros(n, n);
        for u in 0..ms.users() {
            if self.q_a[u] != 0.0 {
                q += ms.a_matrix(u, u) * Complex64::new(self.q_a[u], 0.0);
            }
            if self.q_d[u] != 0.0 {
                q += ms.d_matrix(u) * Complex64::new(self.q_d[u], 0.0);
            }
        }
        hermitize(&mut q);
        q
    }

    pub fn apply_q(&self, ms: &MomentSet, x: &CVec) -> CVec {
        self.q_from(ms, &Probe::new(ms, x))
    }

    fn q_from(&self, ms: &MomentSet, probe: &Probe) -> CVec {
        let k = ms.users();
        let mut out = CVec::zeros(ms.elements());
        for u in 0..k {
            let col = probe.back.column(u) * Complex64::new(self.q_a[u], 0.0)
                + probe.back.column(k + u) * Complex64::new(self.q_d[u], 0.0);
            out += ms.weight_conj(u, &col);
        }
        out
    }

    /// `θ^H Q θ + Σ w_kj |θ^H A_kj θ|²`.
    pub fn objective(&self, ms: &MomentSet, theta: &CVec) -> f64 {
        let probe = Probe::new(ms, theta);
        let quad = dotc(theta.as_slice(), self.q_from(ms, &probe).as_slice()).re;
        let k = ms.users();
        let mut quartic = 0.0;
        for u in 0..k {
            for j in 0..k {
                let a = dotc(probe.forward.column(u).as_slice(), probe.forward.column(j).as_slice());
                quartic += self.weights[(u, j)] * a.norm_sqr();
            }
        }
        quad + quartic
    }

    /// Columns `√w_kj A_kj x` (or `√w_kj A_kj^H x` when `adjoint`), skipping
    /// zero weights.
    fn factor(&self, ms: &MomentSet, probe: &Probe, adjoint: bool) -> CMat {
        let k = ms.users();
        let mut cols = Vec::new();
        for u in 0..k {
            for j in 0..k {
                let w = self.weights[(u, j)];
                if w > 0.0 {
                    // A_kj^H x = A_jk x
                    let (row, src) = if adjoint { (j, u) } else { (u, j) };
                    let v = ms.weight_conj(row, &probe.back.column(src).into_owned());
                    cols.push(v * Complex64::new(w.sqrt(), 0.0));
                }
            }
        }
        if cols.is_empty() {
            CMat::zeros(ms.elements(), 0)
        } else {
            CMat::from_columns(&cols)
        }
    }

    fn budget_normal_from(&self, ms: &MomentSet, probe: &Probe) -> CVec {
        let mut c = CVec::zeros(ms.elements());
        for u in 0..ms.users() {
            if self.budget_dir[u] != 0.0 {
                let col = probe.back.column(u) * Complex64::new(self.budget_dir[u], 0.0);
                c += ms.weight_conj(u, &col);
            }
        }
        c
    }

    /// `c = Σ_k p_k α_k β_k A_kk^H θ`.
    pub fn budget_normal(&self, ms: &MomentSet, theta: &CVec) -> CVec {
        self.budget_normal_from(ms, &Probe::new(ms, theta))
    }
}

/// `F (ḡ_k ⊙ x)` and `F^H` applied to those and to `F F^H` times those.
struct Probe {
    forward: CMat,
    /// Columns `0..K`: `F^H F (ḡ_k ⊙ x)`; columns `K..2K`: `F^H F F^H F (ḡ_k ⊙ x)`.
    back: CMat,
}

impl Probe {
    fn new(ms: &MomentSet, x: &CVec) -> Self {
        let forward = ms.project(x);
        let k = ms.users();
        let twice = ms.ffh() * &forward;
        let mut both = CMat::zeros(ms.antennas(), 2 * k);
        both.columns_mut(0, k).copy_from(&forward);
        both.columns_mut(k, k).copy_from(&twice);
        let back = ms.back(&both);
        Self { forward, back }
    }
}

/// Primal copies and scaled duals.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmVars {
    pub theta: CVec,
    pub z: CVec,
    pub k: CVec,
    pub s: CVec,
    pub lambda_z: CVec,
    pub lambda_k: CVec,
    pub lambda_s: CVec,
    pub rho: f64,
}

impl AdmmVars {
    /// All copies equal to `theta`, duals zero.
    pub fn consensus(theta: &CVec, rho: f64) -> Self {
        let zero = CVec::zeros(theta.len());
        Self {
            theta: theta.clone(),
            z: theta.clone(),
            k: theta.clone(),
            s: theta.clone(),
            lambda_z: zero.clone(),
            lambda_k: zero.clone(),
            lambda_s: zero,
            rho,
        }
    }

    /// `max(‖z-θ‖, ‖k-θ‖, ‖s-θ‖)`.
    pub fn residual(&self) -> f64 {
        [&self.z, &self.k, &self.s].iter().map(|v| (*v - &self.theta).norm()).fold(0.0, f64::max)
    }

    fn rescale_duals(&mut self, factor: f64) {
        let f = Complex64::new(factor, 0.0);
        self.lambda_z *= f;
        self.lambda_k *= f;
        self.lambda_s *= f;
    }
}

fn theta_from(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars, probe_z: &Probe) -> Result<CVec> {
    let u = prob.factor(ms, probe_z, false);
    let rho = Complex64::new(v.rho, 0.0);
    let rhs = (&v.z + &v.lambda_z + &v.k + &v.lambda_k + &v.s + &v.lambda_s) * rho
        - prob.q_from(ms, probe_z) * Complex64::new(0.5, 0.0);
    solve_shifted_low_rank(&u, 3.0 * v.rho, &rhs)
}

fn z_from(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars, probe_theta: &Probe) -> Result<CVec> {
    let u = prob.factor(ms, probe_theta, true);
    let rhs =
        (&v.theta - &v.lambda_z) * Complex64::new(v.rho, 0.0) - prob.q_from(ms, probe_theta) * Complex64::new(0.5, 0.0);
    solve_shifted_low_rank(&u, v.rho, &rhs)
}

fn s_from(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars, probe_theta: &Probe) -> Result<CVec> {
    let s0 = &v.theta - &v.lambda_s;
    if prob.budget_rhs.is_infinite() {
        return Ok(s0);
    }
    let c = prob.budget_normal_from(ms, probe_theta);
    project_halfspace(&s0, &c, prob.budget_rhs)
}

/// `θ = (Υ(z) + 3ρI)^{-1} v_θ`.
pub fn admm_theta(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars) -> Result<CVec> {
    theta_from(prob, ms, v, &Probe::new(ms, &v.z))
}

/// `z = (Υ'(θ) + ρI)^{-1} v_z`.
pub fn admm_z(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars) -> Result<CVec> {
    z_from(prob, ms, v, &Probe::new(ms, &v.theta))
}

/// Elementwise projection onto the closed unit disk.
pub fn project_unit_disk(x: &CVec) -> CVec {
    x.map(|z| {
        let m = z.norm();
        if m <= 1.0 {
            z
        } else {
            z / m
        }
    })
}

pub fn admm_k(v: &AdmmVars) -> CVec {
    project_unit_disk(&(&v.theta - &v.lambda_k))
}

/// Projection of `s0` onto `{s : Re(c^H s) ≤ b}`.
pub fn project_halfspace(s0: &CVec, c: &CVec, b: f64) -> Result<CVec> {
    let cc = norm_sqr(c.as_slice());
    if cc == 0.0 {
        if b < 0.0 {
            return Err(Error::Infeasible("power budget is exhausted by the scattered component".into()));
        }
        return Ok(s0.clone());
    }
    let val = dotc(c.as_slice(), s0.as_slice()).re;
    if val <= b {
        return Ok(s0.clone());
    }
    Ok(s0 - c * Complex64::new((val - b) / cc, 0.0))
}

pub fn admm_s(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars) -> Result<CVec> {
    s_from(prob, ms, v, &Probe::new(ms, &v.theta))
}

pub fn admm_duals(v: &mut AdmmVars) {
    v.lambda_z += &v.z - &v.theta;
    v.lambda_k += &v.k - &v.theta;
    v.lambda_s += &v.s - &v.theta;
}

/// `Re θ^H Q z + Σ w |θ^H A_kj z|² + ρ(‖z-θ+λ_z‖² + ‖k-θ+λ_k‖² + ‖s-θ+λ_s‖²)`.
pub fn augmented_lagrangian(prob: &PhaseProblem, ms: &MomentSet, v: &AdmmVars) -> f64 {
    let probe = Probe::new(ms, &v.z);
    let qz = prob.q_from(ms, &probe);
    let mut val = dotc(v.theta.as_slice(), qz.as_slice()).re;
    let k = ms.users();
    let ptheta = ms.project(&v.theta);
    for u in 0..k {
        for j in 0..k {
            let w = prob.weights[(u, j)];
            if w > 0.0 {
                // θ^H A_kj z = (F(ḡ_k⊙θ))^H F(ḡ_j⊙z)
                let a = dotc(ptheta.column(u).as_slice(), probe.forward.column(j).as_slice());
                val += w * a.norm_sqr();
            }
        }
    }
    let pen = |copy: &CVec, dual: &CVec| norm_sqr((copy - &v.theta + dual).as_slice());
    val + v.rho * (pen(&v.z, &v.lambda_z) + pen(&v.k, &v.lambda_k) + pen(&v.s, &v.lambda_s))
}

#[derive(Clone, Copy, Debug)]
pub struct AdmmSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Residual balancing period; 0 disables it.
    pub balance_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Runs ADMM iterations in place, warm-started from `v`.
pub fn run_admm(prob: &PhaseProblem, ms: &MomentSet, v: &mut AdmmVars, settings: AdmmSettings) -> Result<AdmmReport> {
    let mut z_prev = v.z.clone();
    let mut residual = v.residual();
    let mut iterations = 0;
    for it in 0..settings.max_iterations {
        let probe_z = Probe::new(ms, &v.z);
        v.theta = theta_from(prob, ms, v, &probe_z)?;
        let probe_theta = Probe::new(ms, &v.theta);
        v.z = z_from(prob, ms, v, &probe_theta)?;
        v.k = admm_k(v);
        v.s = s_from(prob, ms, v, &probe_theta)?;
        admm_duals(v);
        residual = v.residual();
        iterations = it + 1;
        if settings.balance_every > 0 && iterations % settings.balance_every == 0 {
            let dual = v.rho * (&v.z - &z_prev).norm();
            if residual > 10.0 * dual {
                v.rho *= 2.0;
                v.rescale_duals(0.5);
            } else if dual > 10.0 * residual {
                v.rho /= 2.0;
                v.rescale_duals(2.0);
            }
        }
        z_prev.copy_from(&v.z);
        if residual < settings.tolerance {
            break;
        }
    }
    Ok(AdmmReport { iterations, residual })
}

/// Power-iteration estimate of the spectral norm of `Q`.
pub fn q_norm_estimate<R: Rng + ?Sized>(prob: &PhaseProblem, ms: &MomentSet, rng: &mut R, iterations: usize) -> f64 {
    let n = ms.elements();
    let mut x = CVec::from_iterator(n, (0..n).map(|_| complex_normal(rng)));
    let mut est = 0.0;
    for _ in 0..iterations {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        x /= Complex64::new(nx, 0.0);
        x = prob.apply_q(ms, &x);
        est = x.norm();
    }
    est
}
