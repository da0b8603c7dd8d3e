//! Statistical-CSI moments of the cascaded channels and the approximate
//! ergodic sum rate built from them.
//!
//! The coupling matrices `A_kj = diag(ḡ_k)^H F^H F diag(ḡ_j)` and
//! `D_k = diag(ḡ_k)^H F^H F F^H F diag(ḡ_k)` are kept in factored form:
//! every quadratic form goes through the `M`-dimensional projections
//! `y_k = F (ḡ_k ⊙ θ)`, so `θ^H A_kj θ = y_k^H y_j` and
//! `θ^H D_k θ = ‖F^H y_k‖²`. Dense matrices are available through
//! [`MomentSet::a_matrix`] and [`MomentSet::d_matrix`].

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{write_matrix_binary, IrsUserLink};
use crate::error::{Error, Result};
use crate::linalg::{dotc, hermitize, norm_sqr, CMat, CVec, SplitMat};

#[derive(Clone, Debug)]
pub struct MomentSet {
    f: CMat,
    f_split: SplitMat,
    ffh: CMat,
    los: Vec<CVec>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `C_k = α_k (1-β_k) ‖F‖_F²`.
    pub c: Vec<f64>,
    /// `C_kj = α_k α_j (1-β_k)(1-β_j) tr((FF^H)²)`.
    pub c_cross: DMatrix<f64>,
    pub f_frob_sq: f64,
    pub ffh_sq_trace: f64,
}

/// Quadratic forms at one `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForms {
    /// `θ^H A_kj θ`.
    pub a: CMat,
    /// `θ^H D_k θ`.
    pub d: Vec<f64>,
}

/// Signal and interference-plus-noise of the approximate SINR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrTerms {
    pub signal: f64,
    pub interference: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        self.signal / self.interference
    }

    pub fn rate(&self) -> f64 {
        (1.0 + self.sinr()).log2()
    }
}

pub fn build_moment_set(f: &CMat, links: &[IrsUserLink]) -> Result<MomentSet> {
    let n = f.ncols();
    if let Some(l) = links.iter().find(|l| l.elements() != n) {
        return Err(Error::Dimension(format!("link has {} elements, F has {n} columns", l.elements())));
    }
    let f_split = SplitMat::new(f);
    let mut ffh = f_split.mul(&f.adjoint());
    hermitize(&mut ffh);
    let f_frob_sq = norm_sqr(f.as_slice());
    let ffh_sq_trace = norm_sqr(ffh.as_slice());
    let alpha: Vec<f64> = links.iter().map(|l| l.alpha).collect();
    let beta: Vec<f64> = links.iter().map(|l| l.beta).collect();
    let nlos: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a * (1.0 - b)).collect();
    let k = links.len();
    Ok(MomentSet {
        f: f.clone(),
        f_split,
        ffh,
        los: links.iter().map(|l| l.los_steering.clone()).collect(),
        c: nlos.iter().map(|x| x * f_frob_sq).collect(),
        c_cross: DMatrix::from_fn(k, k, |a, b| nlos[a] * nlos[b] * ffh_sq_trace),
        alpha,
        beta,
        f_frob_sq,
        ffh_sq_trace,
    })
}

impl MomentSet {
    pub fn users(&self) -> usize {
        self.los.len()
    }

    pub fn elements(&self) -> usize {
        self.f.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.f.nrows()
    }

    pub fn channel(&self) -> &CMat {
        &self.f
    }

    pub fn los(&self, k: usize) -> &CVec {
        &self.los[k]
    }

    /// `F F^H`.
    pub fn ffh(&self) -> &CMat {
        &self.ffh
    }

    fn check_theta(&self, theta: &CVec) -> Result<()> {
        if theta.len() != self.elements() {
            return Err(Error::Dimension(format!("theta has {} entries, IRS has {}", theta.len(), self.elements())));
        }
        Ok(())
    }

    /// Columns `F (ḡ_k ⊙ x)` for every user.
    pub fn project(&self, x: &CVec) -> CMat {
        let k = self.users();
        let mut cols = CMat::zeros(self.elements(), k);
        for (u, g) in self.los.iter().enumerate() {
            cols.set_column(u, &g.component_mul(x));
        }
        self.f_split.mul(&cols)
    }

    /// `F^H Y`.
    pub fn back(&self, y: &CMat) -> CMat {
        self.f_split.adjoint_mul(y)
    }

    /// `diag(ḡ_k)^H v`.
    pub fn weight_conj(&self, k: usize, v: &CVec) -> CVec {
        self.los[k].zip_map(v, |g, x| g.conj() * x)
    }

    pub fn forms_from_projections(&self, y: &CMat) -> QuadForms {
        let k = self.users();
        let a = CMat::from_fn(k, k, |r, c| dotc(y.column(r).as_slice(), y.column(c).as_slice()));
        let fy = self.back(y);
        let d = (0..k).map(|u| norm_sqr(fy.column(u).as_slice())).collect();
        QuadForms { a, d }
    }

    pub fn forms(&self, theta: &CVec) -> Result<QuadForms> {
        self.check_theta(theta)?;
        Ok(self.forms_from_projections(&self.project(theta)))
    }

    /// `E[h_k^H h_k] = C_k + α_k β_k θ^H A_kk θ`.
    pub fn first_moment_from(&self, forms: &QuadForms, k: usize) -> f64 {
        self.c[k] + self.alpha[k] * self.beta[k] * forms.a[(k, k)].re
    }

    /// `E[|h_k^H h_j|²]`, `k ≠ j`.
    pub fn second_moment_from(&self, forms: &QuadForms, k: usize, j: usize) -> f64 {
        let (ak, aj, bk, bj) = (self.alpha[k], self.alpha[j], self.beta[k], self.beta[j]);
        ak * aj * bk * bj * forms.a[(k, j)].norm_sqr()
            + ak * aj * bk * (1.0 - bj) * forms.d[k]
            + ak * aj * bj * (1.0 - bk) * forms.d[j]
            + self.c_cross[(k, j)]
    }

    pub fn first_moment(&self, theta: &CVec, k: usize) -> Result<f64> {
        let forms = self.forms(theta)?;
        Ok(self.first_moment_from(&forms, k))
    }

    pub fn second_moment(&self, theta: &CVec, k: usize, j: usize) -> Result<f64> {
        if k == j {
            return Err(Error::Dimension(format!("second moment needs distinct users (got {k} twice)")));
        }
        let forms = self.forms(theta)?;
        Ok(self.second_moment_from(&forms, k, j))
    }

    /// All first moments `E_k` and the matrix of second moments
    /// `E2[k][j]` (zero diagonal).
    pub fn moments_from(&self, forms: &QuadForms) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.users();
        let first = (0..k).map(|u| self.first_moment_from(forms, u)).collect();
        let second = DMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { self.second_moment_from(forms, a, b) });
        (first, second)
    }

    pub fn sinr_terms_from(&self, forms: &QuadForms, p: &[f64], sigmas: &[f64]) -> Result<Vec<SinrTerms>> {
        let k = self.users();
        if p.len() != k || sigmas.len() != k {
            return Err(Error::Dimension(format!("{k} users, {} powers, {} noise powers", p.len(), sigmas.len())));
        }
        if let Some(&s) = sigmas.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::NonPositiveNoise(s));
        }
        let (first, second) = self.moments_from(forms);
        Ok((0..k)
            .map(|u| {
                let interference: f64 = (0..k).filter(|&j| j != u).map(|j| p[j] * second[(u, j)]).sum();
                SinrTerms { signal: p[u] * first[u] * first[u], interference: interference + sigmas[u] }
            })
            .collect())
    }

    pub fn sinr_terms(&self, theta: &CVec, p: &[f64], sigmas: &[f64]) -> Result<Vec<SinrTerms>> {
        let forms = self.forms(theta)?;
        self.sinr_terms_from(&forms, p, sigmas)
    }

    pub fn approx_sinr(&self, theta: &CVec, p: &[f64], k: usize, sigmas: &[f64]) -> Result<f64> {
        Ok(self.sinr_terms(theta, p, sigmas)?[k].sinr())
    }

    pub fn approx_sum_rate(&self, theta: &CVec, p: &[f64], sigmas: &[f64]) -> Result<f64> {
        Ok(sum_rate(&self.sinr_terms(theta, p, sigmas)?))
    }

    /// `Σ_k p_k E_k(θ)`.
    pub fn power_used(&self, theta: &CVec, p: &[f64]) -> Result<f64> {
        let forms = self.forms(theta)?;
        Ok((0..self.users()).map(|u| p[u] * self.first_moment_from(&forms, u)).sum())
    }

    /// `A_kj x = conj(ḡ_k) ⊙ F^H F (ḡ_j ⊙ x)`.
    pub fn apply_a(&self, k: usize, j: usize, x: &CVec) -> CVec {
        let y = &self.f * self.los[j].component_mul(x);
        self.weight_conj(k, &(self.f.adjoint() * y))
    }

    /// `D_k x = conj(ḡ_k) ⊙ F^H F F^H F (ḡ_k ⊙ x)`.
    pub fn apply_d(&self, k: usize, x: &CVec) -> CVec {
        let y = &self.ffh * (&self.f * self.los[k].component_mul(x));
        self.weight_conj(k, &(self.f.adjoint() * y))
    }

    fn gram(&self) -> CMat {
        self.f_split.gram()
    }

    pub fn a_matrix(&self, k: usize, j: usize) -> CMat {
        let g = self.gram();
        CMat::from_fn(self.elements(), self.elements(), |r, c| self.los[k][r].conj() * g[(r, c)] * self.los[j][c])
    }

    pub fn d_matrix(&self, k: usize) -> CMat {
        let fhf = self.gram();
        let mut g2 = &fhf * &fhf;
        hermitize(&mut g2);
        CMat::from_fn(self.elements(), self.elements(), |r, c| self.los[k][r].conj() * g2[(r, c)] * self.los[k][c])
    }

    /// Writes every `A_kj` (row-major in `(k, j)`) followed by every `D_k`,
    /// each `N × N` in the binary matrix format. Intended for small fixtures.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        for k in 0..self.users() {
            for j in 0..self.users() {
                write_matrix_binary(&mut out, &self.a_matrix(k, j))?;
            }
        }
        for k in 0..self.users() {
            write_matrix_binary(&mut out, &self.d_matrix(k))?;
        }
        Ok(())
    }
}

pub fn sum_rate(terms: &[SinrTerms]) -> f64 {
    terms.iter().map(SinrTerms::rate).sum()
}

/// Convenience: `θ^H M θ` for a dense matrix, used by tests and oracles.
pub fn quadratic_form(m: &CMat, theta: &CVec) -> Complex64 {
    theta.dotc(&(m * theta))
}
