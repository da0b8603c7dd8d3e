//! Monte Carlo ergodic rates with MRT precoding.
//!
//! All schemes evaluated in one call see the same Rician draws, so the
//! per-sample dominance of the interference-free bound is exact.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{complex_normal, IrsUserLink};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, SplitMat};
use crate::optimizer::random_phases;
use crate::stats::{batched, mean_stderr, substream, Estimate, BATCH};

/// Per-sample sum rates (bits/s/Hz). `random_phase` is NaN when the random
/// baseline was not requested.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRates {
    pub mrt: f64,
    pub interference_free: f64,
    pub random_phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeRates {
    pub mrt: Estimate,
    pub interference_free: Estimate,
    pub random_phase: Option<Estimate>,
}

/// Stream offset for the random-phase draws, kept apart from the fading
/// substreams of the same seed.
const PHASE_STREAM: u64 = 1 << 32;

/// Budget, noise and sizes shared by every evaluation in a scenario.
pub struct RateContext<'a> {
    pub f: &'a CMat,
    pub links: &'a [IrsUserLink],
    pub sigmas: &'a [f64],
    pub p_max: f64,
}

impl RateContext<'_> {
    fn check(&self, theta: &CVec, p: &[f64]) -> Result<()> {
        let k = self.links.len();
        if k == 0 || p.len() != k || self.sigmas.len() != k {
            return Err(Error::Dimension(format!("{k} users, {} powers, {} noise powers", p.len(), self.sigmas.len())));
        }
        let n = self.f.ncols();
        if theta.len() != n || self.links.iter().any(|l| l.elements() != n) {
            return Err(Error::Dimension("phase and link lengths must match the IRS size".into()));
        }
        if let Some(&s) = self.sigmas.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::NonPositiveNoise(s));
        }
        Ok(())
    }
}

/// `(with interference, without)` sum rates from the Gram matrix
/// `G[k][j] = h_k^H h_j` of one sample.
fn rates_from_gram(gram: &CMat, p: &[f64], sigmas: &[f64]) -> (f64, f64) {
    let k = p.len();
    let mut with = 0.0;
    let mut without = 0.0;
    for u in 0..k {
        let own = gram[(u, u)].re;
        let signal = p[u] * own * own;
        let interference: f64 = (0..k).filter(|&j| j != u).map(|j| p[j] * gram[(u, j)].norm_sqr()).sum();
        with += (1.0 + signal / (interference + sigmas[u])).log2();
        without += (1.0 + signal / sigmas[u]).log2();
    }
    (with, without)
}

/// Rician draws for `count` samples, columns ordered sample-major.
fn fading_block<R: Rng + ?Sized>(links: &[IrsUserLink], count: usize, rng: &mut R) -> CMat {
    let n = links[0].elements();
    let k = links.len();
    let mut g = CMat::zeros(n, count * k);
    for s in 0..count {
        for (u, link) in links.iter().enumerate() {
            let los = (link.alpha * link.beta).sqrt();
            let nlos = (link.alpha * (1.0 - link.beta)).sqrt();
            let mut col = g.column_mut(s * k + u);
            for i in 0..n {
                col[i] = link.los_steering[i] * los;
                if nlos > 0.0 {
                    col[i] += complex_normal(rng) * nlos;
                }
            }
        }
    }
    g
}

/// Multiplies the columns of sample `s` by `phases(s)`.
fn apply_phases<'t>(g: &CMat, k: usize, phases: impl Fn(usize) -> &'t CVec) -> CMat {
    let mut x = g.clone();
    for (c, mut col) in x.column_iter_mut().enumerate() {
        col.component_mul_assign(phases(c / k));
    }
    x
}

fn gram_of(h: &CMat, s: usize, k: usize) -> CMat {
    let block = h.columns(s * k, k);
    block.adjoint() * block
}

/// Per-sample rates for fixed `(θ, p)` and, when `with_random` is set, for
/// independent uniform phases per sample with the budget split equally
/// across users (`p_k = P / (K E_k(θ))`).
pub fn sample_rates(
    ctx: &RateContext,
    theta: &CVec,
    p: &[f64],
    samples: usize,
    seed: u64,
    with_random: bool,
) -> Result<Vec<SampleRates>> {
    ctx.check(theta, p)?;
    let fs = SplitMat::new(ctx.f);
    let k = ctx.links.len();
    let n = ctx.f.ncols();
    let frob: f64 = ctx.f.iter().map(|z| z.norm_sqr()).sum();
    let scattered: Vec<f64> = ctx.links.iter().map(|l| l.alpha * (1.0 - l.beta) * frob).collect();
    let steering = CMat::from_columns(&ctx.links.iter().map(|l| l.los_steering.clone()).collect::<Vec<_>>());

    Ok(batched(samples, seed, |rng, start, count| {
        let g = fading_block(ctx.links, count, rng);
        let h = fs.mul(&apply_phases(&g, k, |_| theta));
        let random = with_random.then(|| {
            let mut phase_rng = substream(seed, PHASE_STREAM + (start / BATCH) as u64);
            let thetas: Vec<CVec> = (0..count).map(|_| random_phases(n, &mut phase_rng)).collect();
            let hr = fs.mul(&apply_phases(&g, k, |s| &thetas[s]));
            let los =
                fs.mul(&apply_phases(&CMat::from_fn(n, count * k, |i, c| steering[(i, c % k)]), k, |s| &thetas[s]));
            (hr, los)
        });
        (0..count)
            .map(|s| {
                let (mrt, interference_free) = rates_from_gram(&gram_of(&h, s, k), p, ctx.sigmas);
                let random_phase = match &random {
                    Some((hr, los)) => {
                        let pr: Vec<f64> = (0..k)
                            .map(|u| {
                                let l = &ctx.links[u];
                                let lp: f64 = los.column(s * k + u).iter().map(|z| z.norm_sqr()).sum();
                                let e = scattered[u] + l.alpha * l.beta * lp;
                                ctx.p_max / (k as f64 * e)
                            })
                            .collect();
                        rates_from_gram(&gram_of(hr, s, k), &pr, ctx.sigmas).0
                    }
                    None => f64::NAN,
                };
                SampleRates { mrt, interference_free, random_phase }
            })
            .collect()
    }))
}

pub fn summarize(samples: &[SampleRates]) -> SchemeRates {
    let pick = |f: fn(&SampleRates) -> f64| mean_stderr(&samples.iter().map(f).collect::<Vec<_>>());
    let random_phase = samples.first().filter(|s| !s.random_phase.is_nan()).map(|_| pick(|s| s.random_phase));
    SchemeRates { mrt: pick(|s| s.mrt), interference_free: pick(|s| s.interference_free), random_phase }
}

/// MC ergodic sum rate of MRT at `(θ, p)`.
pub fn mc_ergodic_rate(ctx: &RateContext, theta: &CVec, p: &[f64], samples: usize, seed: u64) -> Result<Estimate> {
    Ok(summarize(&sample_rates(ctx, theta, p, samples, seed, false)?).mrt)
}

/// Same draws as [`mc_ergodic_rate`] with inter-user interference removed.
pub fn interference_free_rate(
    ctx: &RateContext,
    theta: &CVec,
    p: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(summarize(&sample_rates(ctx, theta, p, samples, seed, false)?).interference_free)
}

/// Rate averaged over uniform random phases and fading, equal power split.
pub fn random_phase_baseline(ctx: &RateContext, samples: usize, seed: u64) -> Result<Estimate> {
    let k = ctx.links.len();
    let theta = CVec::from_element(ctx.f.ncols(), Complex64::new(1.0, 0.0));
    let p = vec![0.0; k];
    let rates = sample_rates(ctx, &theta, &p, samples, seed, true)?;
    Ok(summarize(&rates).random_phase.expect("random baseline requested"))
}
