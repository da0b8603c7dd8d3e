//! Alternating optimization of transmit powers and IRS phase shifts under
//! statistical CSI.
//!
//! Each outer iteration refreshes the fractional-programming auxiliaries,
//! re-optimizes the powers by coordinate ascent, then runs a warm-started
//! ADMM pass on the relaxed phases. The projected candidate is kept only if
//! it does not lower the approximate sum rate.

pub mod admm;
pub mod surrogate;

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{unit_phase, CVec};
use crate::moments::{sum_rate, MomentSet};
use crate::stats::substream;

pub use admm::{AdmmSettings, AdmmVars, PhaseBudget, PhaseProblem};
pub use surrogate::PowerSettings;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Outer loop stops when the sum rate gains less than this (bit/s/Hz).
    pub tolerance: f64,
    pub max_outer: usize,
    pub inner_iterations: usize,
    pub inner_tolerance: f64,
    /// Once the outer loop stalls it gets one more round with this ADMM
    /// budget before declaring convergence.
    pub polish_iterations: usize,
    pub polish_tolerance: f64,
    pub balance_every: usize,
    /// Multiplier on the spectral-norm estimate used as the initial penalty.
    pub rho_scale: f64,
    pub budget: PhaseBudget,
    /// Seeds the initial phases and the penalty estimate; scenario runs
    /// derive it from the scenario seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_outer: 200,
            inner_iterations: 50,
            inner_tolerance: 1e-6,
            polish_iterations: 500,
            polish_tolerance: 1e-4,
            balance_every: 10,
            rho_scale: 1.0,
            budget: PhaseBudget::Coupled,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.inner_tolerance > 0.0) || !(self.polish_tolerance > 0.0) {
            return Err(Error::Config("optimizer tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.inner_iterations == 0 {
            return Err(Error::Config("optimizer iteration limits must be positive".into()));
        }
        if !(self.rho_scale > 0.0) || !self.rho_scale.is_finite() {
            return Err(Error::Config(format!("rho_scale must be positive (got {})", self.rho_scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub p: Vec<f64>,
    pub theta: CVec,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub admm: AdmmVars,
    /// Sum rate before the first iteration and after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// `Σ p_k E_k(θ)` alongside `objective_trace`.
    pub power_trace: Vec<f64>,
    /// Final ADMM residual of each outer iteration.
    pub residual_trace: Vec<f64>,
    pub accepted: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl OptimizerState {
    pub fn sum_rate(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts non-empty")
    }

    /// `outer_iter,objective,power_used,admm_residual_max`; the residual is
    /// empty for the starting point.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "outer_iter,objective,power_used,admm_residual_max")?;
        for (i, (r, pw)) in self.objective_trace.iter().zip(&self.power_trace).enumerate() {
            match i.checked_sub(1).and_then(|j| self.residual_trace.get(j)) {
                Some(res) => writeln!(out, "{i},{r:.12e},{pw:.12e},{res:.6e}")?,
                None => writeln!(out, "{i},{r:.12e},{pw:.12e},")?,
            }
        }
        Ok(())
    }

    pub fn document(&self) -> StateDocument {
        StateDocument {
            sum_rate: self.sum_rate(),
            powers: self.p.clone(),
            phases: self.theta.iter().map(|z| z.arg()).collect(),
            xi: self.xi.clone(),
            eta: self.eta.clone(),
            rho: self.admm.rho,
            accepted: self.accepted,
            outer_iterations: self.outer_iterations,
            converged: self.converged,
            objective_trace: self.objective_trace.clone(),
        }
    }
}

/// Serializable summary of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDocument {
    pub sum_rate: f64,
    pub powers: Vec<f64>,
    /// Phase of each element in radians, row-major over the IRS grid.
    pub phases: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub rho: f64,
    pub accepted: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// Unit-modulus phases with independent uniform angles.
pub fn random_phases<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_iterator(n, (0..n).map(|_| unit_phase(std::f64::consts::TAU * rng.random::<f64>())))
}

/// Elementwise `e^{j arg x}`, mapping zeros to one.
pub fn project_unit_modulus(x: &CVec) -> CVec {
    x.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) })
}

/// Runs the optimizer from random phases drawn from `cfg.seed`.
pub fn optimize(ms: &MomentSet, sigmas: &[f64], p_max: f64, cfg: &OptimizerConfig) -> Result<OptimizerState> {
    let theta = random_phases(ms.elements(), &mut substream(cfg.seed, 0));
    optimize_from(ms, sigmas, p_max, theta, cfg)
}

pub fn optimize_from(
    ms: &MomentSet,
    sigmas: &[f64],
    p_max: f64,
    theta0: CVec,
    cfg: &OptimizerConfig,
) -> Result<OptimizerState> {
    cfg.validate()?;
    if theta0.len() != ms.elements() {
        return Err(Error::Dimension(format!("{} phases for {} elements", theta0.len(), ms.elements())));
    }
    if !(p_max > 0.0) {
        return Err(Error::Infeasible(format!("power budget must be positive (got {p_max})")));
    }
    let k = ms.users();
    let mut rng = substream(cfg.seed, 1);
    let mut theta = project_unit_modulus(&theta0);
    let forms = ms.forms(&theta)?;
    let (first, _) = ms.moments_from(&forms);
    if let Some(u) = (0..k).find(|&u| !(first[u] > 0.0)) {
        return Err(Error::Degenerate(format!("user {u} has zero expected channel power")));
    }
    let mut p: Vec<f64> = first.iter().map(|e| 0.5 * p_max / (k as f64 * e)).collect();
    let initial = sum_rate(&ms.sinr_terms_from(&forms, &p, sigmas)?);

    let mut state = OptimizerState {
        p: p.clone(),
        theta: theta.clone(),
        xi: vec![0.0; k],
        eta: vec![0.0; k],
        admm: AdmmVars::consensus(&theta, 1.0),
        objective_trace: vec![initial],
        power_trace: vec![ms.power_used(&theta, &p)?],
        residual_trace: Vec::new(),
        accepted: 0,
        outer_iterations: 0,
        converged: false,
    };
    let mut rho: Option<f64> = None;
    let mut polished = false;
    let mut inner = AdmmSettings {
        max_iterations: cfg.inner_iterations,
        tolerance: cfg.inner_tolerance,
        balance_every: cfg.balance_every,
    };

    for outer in 0..cfg.max_outer {
        state.outer_iterations = outer + 1;
        let terms = ms.sinr_terms(&theta, &p, sigmas)?;
        let xi = surrogate::update_xi(&terms)?;
        let eta = surrogate::update_eta(&terms, &xi)?;
        p = surrogate::update_power(ms, &theta, &p, &xi, &eta, p_max)?;

        let prob = PhaseProblem::new(ms, &p, &xi, &eta, p_max, cfg.budget);
        if rho.is_none() {
            let est = admm::q_norm_estimate(&prob, ms, &mut rng, 30);
            let r = if est > 0.0 { est * cfg.rho_scale } else { 1.0 };
            rho = Some(r);
            state.admm.rho = r;
        }
        let report = admm::run_admm(&prob, ms, &mut state.admm, inner)?;
        state.residual_trace.push(report.residual);

        let candidate = project_unit_modulus(&state.admm.theta);
        let cand_forms = ms.forms(&candidate)?;
        let used: f64 = (0..k).map(|u| p[u] * ms.first_moment_from(&cand_forms, u)).sum();
        let scale = if used > p_max { p_max / used } else { 1.0 };
        let cand_p: Vec<f64> = p.iter().map(|x| x * scale).collect();
        let current = ms.approx_sum_rate(&theta, &p, sigmas)?;
        let proposed = sum_rate(&ms.sinr_terms_from(&cand_forms, &cand_p, sigmas)?);
        if proposed >= current {
            theta = candidate;
            p = cand_p;
            state.accepted += 1;
        }
        state.xi = xi;
        state.eta = eta;
        let prev = *state.objective_trace.last().unwrap();
        let now = proposed.max(current);
        state.objective_trace.push(now);
        state.power_trace.push(ms.power_used(&theta, &p)?);

        if outer > 0 && now - prev < cfg.tolerance {
            if !polished {
                polished = true;
                inner.max_iterations = cfg.polish_iterations;
                inner.tolerance = cfg.polish_tolerance;
                continue;
            }
            state.converged = true;
            break;
        }
    }
    state.p = p;
    state.theta = theta;
    Ok(state)
}
