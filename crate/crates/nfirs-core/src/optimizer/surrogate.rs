//! Fractional-programming auxiliaries and the power-allocation block.
//!
//! Both surrogates use the natural logarithm, so at the closed-form
//! auxiliaries they equal `ln 2` times the approximate sum rate in bits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::{MomentSet, SinrTerms};

/// `ξ_k = S_k / J_k`.
pub fn update_xi(terms: &[SinrTerms]) -> Result<Vec<f64>> {
    terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            if !(t.interference > 0.0) {
                return Err(Error::Degenerate(format!("interference-plus-noise of user {k} is not positive")));
            }
            Ok(t.signal / t.interference)
        })
        .collect()
}

/// `η_k = √((1+ξ_k) S_k) / (S_k + J_k)`.
pub fn update_eta(terms: &[SinrTerms], xi: &[f64]) -> Result<Vec<f64>> {
    terms
        .iter()
        .zip(xi)
        .enumerate()
        .map(|(k, (t, x))| {
            let den = t.signal + t.interference;
            if !(den > 0.0) {
                return Err(Error::Degenerate(format!("S + J of user {k} is not positive")));
            }
            Ok(((1.0 + x) * t.signal).sqrt() / den)
        })
        .collect()
}

/// Lagrangian-dual surrogate `Σ ln(1+ξ) - ξ + (1+ξ) S / (S+J)`.
pub fn dual_objective(terms: &[SinrTerms], xi: &[f64]) -> f64 {
    terms.iter().zip(xi).map(|(t, x)| (1.0 + x).ln() - x + (1.0 + x) * t.signal / (t.signal + t.interference)).sum()
}

/// Quadratic-transform surrogate `Σ ln(1+ξ) - ξ + 2η√((1+ξ)S) - η²(S+J)`.
pub fn quadratic_objective(terms: &[SinrTerms], xi: &[f64], eta: &[f64]) -> f64 {
    terms
        .iter()
        .zip(xi.iter().zip(eta))
        .map(|(t, (x, e))| {
            (1.0 + x).ln() - x + 2.0 * e * ((1.0 + x) * t.signal).sqrt() - e * e * (t.signal + t.interference)
        })
        .sum()
}

/// SINR terms for powers `p` given first moments `E_k` and the matrix of
/// second moments.
pub fn terms_for_power(first: &[f64], second: &DMatrix<f64>, sigmas: &[f64], p: &[f64]) -> Vec<SinrTerms> {
    let k = first.len();
    (0..k)
        .map(|u| SinrTerms {
            signal: p[u] * first[u] * first[u],
            interference: (0..k).filter(|&j| j != u).map(|j| p[j] * second[(u, j)]).sum::<f64>() + sigmas[u],
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct PowerSettings {
    pub max_sweeps: usize,
    /// Sweeps stop once every entry moves by less than this fraction of the
    /// largest power.
    pub tolerance: f64,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self { max_sweeps: 50, tolerance: 1e-8 }
    }
}

/// Cyclic coordinate maximization of the quadratic surrogate over `p`,
/// users visited in natural order.
pub fn update_power_with(
    first: &[f64],
    second: &DMatrix<f64>,
    xi: &[f64],
    eta: &[f64],
    p: &[f64],
    p_max: f64,
    settings: PowerSettings,
) -> Result<Vec<f64>> {
    if !(p_max > 0.0) {
        return Err(Error::Infeasible(format!("power budget must be positive (got {p_max})")));
    }
    let k = first.len();
    let c1: Vec<f64> = (0..k)
        .map(|u| {
            eta[u] * eta[u] * first[u] * first[u]
                + (0..k).filter(|&j| j != u).map(|j| eta[j] * eta[j] * second[(j, u)]).sum::<f64>()
        })
        .collect();
    if let Some(u) = (0..k).find(|&u| !(c1[u] > 0.0)) {
        return Err(Error::Degenerate(format!("power coefficient c1 of user {u} is not positive")));
    }
    let c2: Vec<f64> = (0..k).map(|u| 2.0 * eta[u] * (1.0 + xi[u]).sqrt() * first[u]).collect();
    let mut p = p.to_vec();
    for _ in 0..settings.max_sweeps {
        let old = p.clone();
        for u in 0..k {
            if !(first[u] > 0.0) {
                p[u] = 0.0;
                continue;
            }
            let others: f64 = (0..k).filter(|&j| j != u).map(|j| p[j] * first[j]).sum();
            let cap = (p_max - others) / first[u];
            let stationary = (c2[u] / (2.0 * c1[u])).powi(2);
            p[u] = cap.min(stationary).max(0.0);
        }
        let scale = p.iter().cloned().fold(0.0, f64::max);
        let change = p.iter().zip(&old).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change <= settings.tolerance * scale {
            break;
        }
    }
    Ok(p)
}

pub fn update_power(
    ms: &MomentSet,
    theta: &crate::linalg::CVec,
    p: &[f64],
    xi: &[f64],
    eta: &[f64],
    p_max: f64,
) -> Result<Vec<f64>> {
    let forms = ms.forms(theta)?;
    let (first, second) = ms.moments_from(&forms);
    update_power_with(&first, &second, xi, eta, p, p_max, PowerSettings::default())
}
