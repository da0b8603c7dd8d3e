//! Channel correlation, effective degrees of freedom and the
//! favorable-propagation metric `g_jk`, in closed form and by Monte Carlo.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{bs_irs, default_rho_t, irs_user_los, ChannelVariant, IrsUserLink};
use crate::error::{Error, Result};
use crate::geometry::{phase_increment, PhaseIncrement, SystemGeometry};
use crate::linalg::{dotc, norm_sqr, unit_phase, CMat, CVec, SplitMat};
use crate::stats::{batched, mean_stderr, pairwise_sum, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GjkMethod {
    ExactLemma1,
    Theorem1,
    Prop2,
    CorollarySquare,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FavorablePropagationResult {
    pub g_jk: f64,
    pub method: GjkMethod,
    /// Raw `var{h_j^H h_k}` when the method computes it.
    pub variance: Option<f64>,
    /// `E‖h_j‖² E‖h_k‖²` when the method computes it.
    pub denom: Option<f64>,
    pub stderr: Option<f64>,
}

impl FavorablePropagationResult {
    fn closed_form(g_jk: f64, method: GjkMethod) -> Self {
        Self { g_jk, method, variance: None, denom: None, stderr: None }
    }
}

/// `|h_j^H h_k| / (‖h_j‖ ‖h_k‖)`.
pub fn correlation_coeff(h_j: &CVec, h_k: &CVec) -> Result<f64> {
    if h_j.len() != h_k.len() {
        return Err(Error::Dimension(format!("lengths {} and {}", h_j.len(), h_k.len())));
    }
    let nj = norm_sqr(h_j.as_slice()).sqrt();
    let nk = norm_sqr(h_k.as_slice()).sqrt();
    if nj == 0.0 || nk == 0.0 {
        return Err(Error::ZeroInput);
    }
    Ok((dotc(h_j.as_slice(), h_k.as_slice()).norm() / (nj * nk)).min(1.0))
}

fn edof_of_columns(h: &CMat) -> f64 {
    let g = h.adjoint() * h;
    let trace: f64 = (0..g.nrows()).map(|i| g[(i, i)].re).sum();
    let fro = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (trace / fro).powi(2)
}

/// `(tr(HH^H) / ‖HH^H‖_F)²`, evaluated on the `K × K` Gram matrix.
pub fn edof(h: &CMat) -> Result<f64> {
    if h.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroInput);
    }
    Ok(edof_of_columns(h))
}

fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_iterator(n, (0..n).map(|_| unit_phase(2.0 * PI * rng.random::<f64>())))
}

/// Mean EDoF of `H = F diag(θ) [g_1 .. g_K]` over i.i.d. uniform phases,
/// with `g_k` the LoS channel of each link.
pub fn expected_edof(f: &CMat, links: &[IrsUserLink], samples: usize, seed: u64) -> Result<Estimate> {
    if samples == 0 || links.is_empty() {
        return Err(Error::Dimension("need at least one sample and one user".into()));
    }
    let n = f.ncols();
    if links.iter().any(|l| l.elements() != n) {
        return Err(Error::Dimension("link length differs from IRS size".into()));
    }
    let k = links.len();
    let los: Vec<CVec> = links.iter().map(|l| l.los_channel()).collect();
    let split = SplitMat::new(f);
    let values = batched(samples, seed, |rng, _, count| {
        let mut x = CMat::zeros(n, k * count);
        for b in 0..count {
            let theta = random_phases(rng, n);
            for (u, g) in los.iter().enumerate() {
                x.set_column(b * k + u, &theta.component_mul(g));
            }
        }
        let h = split.mul(&x);
        (0..count).map(|b| edof_of_columns(&h.columns(b * k, k).into_owned())).collect()
    });
    Ok(mean_stderr(&values))
}

fn check_pair(f: &CMat, g_j: &CVec, g_k: &CVec) -> Result<()> {
    if g_j.len() != f.ncols() || g_k.len() != f.ncols() {
        return Err(Error::Dimension(format!(
            "F has {} columns, g_j has {}, g_k has {}",
            f.ncols(),
            g_j.len(),
            g_k.len()
        )));
    }
    Ok(())
}

/// `Σ_{n1≠n2} |g_j[n1]|² |g_k[n2]|² |[F^H F]_{n1,n2}|²`.
pub fn variance_lemma1(f: &CMat, g_j: &CVec, g_k: &CVec) -> Result<f64> {
    check_pair(f, g_j, g_k)?;
    let gram = SplitMat::new(f).gram();
    let n = f.ncols();
    let rows: Vec<f64> = (0..n)
        .map(|a| {
            let wa = g_j[a].norm_sqr();
            let terms: Vec<f64> =
                (0..n).filter(|&b| b != a).map(|b| g_k[b].norm_sqr() * gram[(a, b)].norm_sqr()).collect();
            wa * pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// `E‖F diag(θ) g‖² = Σ_n |g[n]|² Σ_i |F_in|²` under uniform phases.
pub fn expected_channel_power(f: &CMat, g: &CVec) -> f64 {
    let terms: Vec<f64> = (0..f.ncols()).map(|n| g[n].norm_sqr() * norm_sqr(f.column(n).as_slice())).collect();
    pairwise_sum(&terms)
}

pub fn g_jk_exact(f: &CMat, g_j: &CVec, g_k: &CVec) -> Result<FavorablePropagationResult> {
    let variance = variance_lemma1(f, g_j, g_k)?;
    let denom = expected_channel_power(f, g_j) * expected_channel_power(f, g_k);
    let g_jk = if denom > 0.0 { variance / denom } else { 0.0 };
    Ok(FavorablePropagationResult {
        g_jk,
        method: GjkMethod::ExactLemma1,
        variance: Some(variance),
        denom: Some(denom),
        stderr: None,
    })
}

/// `g_jk_exact` for users `j`, `k` of `geom`, with the BS-IRS channel built
/// from `variant` (exact by default; Taylor2 isolates the expansion error).
pub fn g_jk_for_geometry(
    geom: &SystemGeometry,
    j: usize,
    k: usize,
    variant: ChannelVariant,
) -> Result<FavorablePropagationResult> {
    let f = bs_irs(geom, default_rho_t(geom), variant)?.f;
    let gj = irs_user_los(geom, j, None)?.los_channel();
    let gk = irs_user_los(geom, k, None)?.los_channel();
    g_jk_exact(&f, &gj, &gk)
}

/// `(sin(Mx/2) / sin(x/2))²`. Within `1e-9` of a null of `sin(x/2)` the
/// argument is reduced to the nearest multiple of `2π` and the ratio is
/// evaluated through sinc functions, giving `M²` at the multiple itself.
pub fn dirichlet_kernel(m: usize, x: f64) -> f64 {
    let mf = m as f64;
    let den = (x / 2.0).sin();
    if den.abs() >= 1e-9 {
        let r = (mf * x / 2.0).sin() / den;
        return r * r;
    }
    let y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    let sinc = |t: f64| if t == 0.0 { 1.0 } else { t.sin() / t };
    let r = mf * sinc(mf * y / 2.0) / sinc(y / 2.0);
    r * r
}

/// Lag-weighted kernel sum `(1/M²N²) Σ_{s,t} (N_u-|s|)(N_v-|t|) f_M(Δ_{s,t})`.
pub fn kernel_lag_sum(m: usize, rows: usize, cols: usize, inc: &PhaseIncrement) -> f64 {
    let n = (rows * cols) as f64;
    let mut per_s = Vec::with_capacity(2 * rows);
    for s in -(rows as i64 - 1)..=(rows as i64 - 1) {
        let ws = (rows as i64 - s.abs()) as f64;
        let terms: Vec<f64> = (-(cols as i64 - 1)..=(cols as i64 - 1))
            .map(|t| {
                let wt = (cols as i64 - t.abs()) as f64;
                wt * dirichlet_kernel(m, inc.at(s as f64, t as f64))
            })
            .collect();
        per_s.push(ws * pairwise_sum(&terms));
    }
    let mm = m as f64;
    pairwise_sum(&per_s) / (mm * mm * n * n)
}

pub fn g_jk_theorem1(geom: &SystemGeometry) -> Result<FavorablePropagationResult> {
    geom.validate()?;
    let inc = phase_increment(geom)?;
    let g = kernel_lag_sum(geom.bs_antennas, geom.irs_rows, geom.irs_cols, &inc);
    Ok(FavorablePropagationResult::closed_form(g, GjkMethod::Theorem1))
}

/// Value at the kernel nulls: only the diagonal lags `s = t` survive.
pub fn g_jk_prop2(rows: usize, cols: usize) -> f64 {
    let nmin = rows.min(cols) as i64;
    let terms: Vec<f64> =
        (-(nmin - 1)..=(nmin - 1)).map(|s| ((rows as i64 - s.abs()) * (cols as i64 - s.abs())) as f64).collect();
    let n = (rows * cols) as f64;
    pairwise_sum(&terms) / (n * n)
}

/// `(2N + 1) / (3 N^{3/2})` for a square panel of `N` elements.
pub fn g_jk_corollary_square(n: usize) -> Result<f64> {
    let r = (n as f64).sqrt().round() as usize;
    if n == 0 || r * r != n {
        return Err(Error::NotSquare(n));
    }
    let nf = n as f64;
    Ok((2.0 * nf + 1.0) / (3.0 * nf * nf.sqrt()))
}

/// `Σ_n conj(g_j[n]) g_k[n] Σ_i |F_in|²`.
pub fn expected_inner_product(f: &CMat, g_j: &CVec, g_k: &CVec) -> Result<Complex64> {
    check_pair(f, g_j, g_k)?;
    let weights: Vec<Complex64> =
        (0..f.ncols()).map(|n| g_j[n].conj() * g_k[n] * norm_sqr(f.column(n).as_slice())).collect();
    let re: Vec<f64> = weights.iter().map(|z| z.re).collect();
    let im: Vec<f64> = weights.iter().map(|z| z.im).collect();
    Ok(Complex64::new(pairwise_sum(&re), pairwise_sum(&im)))
}

/// Sample statistics of `x = h_j^H h_k` over uniform random phases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductStats {
    pub samples: usize,
    pub mean: Complex64,
    /// Standard error of each component of `mean`.
    pub mean_stderr: f64,
    /// `E|x - E x|²`.
    pub variance: Estimate,
    pub power_j: Estimate,
    pub power_k: Estimate,
}

impl InnerProductStats {
    /// Monte Carlo `g_jk` with a first-order standard error.
    pub fn g_jk(&self) -> FavorablePropagationResult {
        let denom = self.power_j.mean * self.power_k.mean;
        FavorablePropagationResult {
            g_jk: self.variance.mean / denom,
            method: GjkMethod::MonteCarlo,
            variance: Some(self.variance.mean),
            denom: Some(denom),
            stderr: Some(self.variance.stderr / denom),
        }
    }
}

pub fn mc_inner_product(f: &CMat, g_j: &CVec, g_k: &CVec, samples: usize, seed: u64) -> Result<InnerProductStats> {
    check_pair(f, g_j, g_k)?;
    if samples < 2 {
        return Err(Error::Dimension("need at least two samples".into()));
    }
    let n = f.ncols();
    let split = SplitMat::new(f);
    let draws: Vec<(Complex64, f64, f64)> = batched(samples, seed, |rng, _, count| {
        let mut x = CMat::zeros(n, 2 * count);
        for b in 0..count {
            let theta = random_phases(rng, n);
            x.set_column(2 * b, &theta.component_mul(g_j));
            x.set_column(2 * b + 1, &theta.component_mul(g_k));
        }
        let h = split.mul(&x);
        (0..count)
            .map(|b| {
                let hj = h.column(2 * b);
                let hk = h.column(2 * b + 1);
                (hj.dotc(&hk), hj.norm_squared(), hk.norm_squared())
            })
            .collect()
    });
    let re: Vec<f64> = draws.iter().map(|d| d.0.re).collect();
    let im: Vec<f64> = draws.iter().map(|d| d.0.im).collect();
    let (mre, mim) = (mean_stderr(&re), mean_stderr(&im));
    let mean = Complex64::new(mre.mean, mim.mean);
    let dev: Vec<f64> = draws.iter().map(|d| (d.0 - mean).norm_sqr()).collect();
    let scale = samples as f64 / (samples as f64 - 1.0);
    let v = mean_stderr(&dev);
    let pj: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let pk: Vec<f64> = draws.iter().map(|d| d.2).collect();
    Ok(InnerProductStats {
        samples,
        mean,
        mean_stderr: mre.stderr.max(mim.stderr),
        variance: Estimate { mean: v.mean * scale, stderr: v.stderr * scale },
        power_j: mean_stderr(&pj),
        power_k: mean_stderr(&pk),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::farfield_bs_irs;
    use crate::geometry::{solve_deployment, GridMode};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn correlation_examples() {
        let h = CVec::from_vec(vec![c(1.0, 2.0), c(0.5, -1.0)]);
        assert_relative_eq!(correlation_coeff(&h, &h).unwrap(), 1.0, max_relative = 1e-15);
        let a = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let b = CVec::from_vec(vec![c(0.0, 0.0), c(0.0, 3.0)]);
        assert_eq!(correlation_coeff(&a, &b).unwrap(), 0.0);
        assert!(correlation_coeff(&a, &CVec::zeros(2)).is_err());
    }

    #[test]
    fn farfield_channels_are_fully_correlated() {
        let g = SystemGeometry::reference().with_irs_size(9, 9);
        let f = farfield_bs_irs(&g, c(1.0, 0.0)).unwrap().f;
        let g0 = irs_user_los(&g, 0, None).unwrap().los_channel();
        let g1 = irs_user_los(&g, 1, None).unwrap().los_channel();
        let theta = CVec::from_fn(81, |i, _| unit_phase(0.37 * (i * i) as f64));
        let h0 = &f * theta.component_mul(&g0);
        let h1 = &f * theta.component_mul(&g1);
        assert!((correlation_coeff(&h0, &h1).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn edof_examples() {
        let eye = CMat::identity(4, 3);
        assert_relative_eq!(edof(&eye).unwrap(), 3.0, max_relative = 1e-15);
        let v = CVec::from_vec(vec![c(1.0, 1.0), c(2.0, 0.0)]);
        let rank_one = CMat::from_columns(&[v.clone(), v * c(0.0, 3.0)]);
        assert_relative_eq!(edof(&rank_one).unwrap(), 1.0, max_relative = 1e-14);
        // Gram eigenvalues (2, 1)
        let h = CMat::from_diagonal(&CVec::from_vec(vec![c(2f64.sqrt(), 0.0), c(1.0, 0.0)]));
        assert_relative_eq!(edof(&h).unwrap(), 1.8, max_relative = 1e-14);
        assert!(edof(&CMat::zeros(2, 2)).is_err());
    }

    #[test]
    fn single_user_edof_is_one() {
        let mut g = SystemGeometry::reference().with_irs_size(5, 5);
        g.users.truncate(1);
        let f = bs_irs(&g, default_rho_t(&g), ChannelVariant::Exact).unwrap().f;
        let links = vec![irs_user_los(&g, 0, None).unwrap()];
        let e = expected_edof(&f, &links, 300, 1).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn lemma1_vanishes_for_orthogonal_columns() {
        let f = CMat::identity(4, 4);
        let g = CVec::from_element(4, c(1.0, 0.0));
        assert_eq!(variance_lemma1(&f, &g, &g).unwrap(), 0.0);
        assert_eq!(g_jk_exact(&f, &g, &g).unwrap().g_jk, 0.0);
        let one = CMat::from_element(3, 1, c(1.0, 0.0));
        let g1 = CVec::from_element(1, c(1.0, 0.0));
        assert_eq!(variance_lemma1(&one, &g1, &g1).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_examples() {
        assert_eq!(dirichlet_kernel(7, 0.0), 49.0);
        assert_relative_eq!(dirichlet_kernel(7, 4.0 * PI), 49.0, max_relative = 1e-12);
        assert!(dirichlet_kernel(8, 2.0 * PI / 8.0) < 1e-28);
        assert_relative_eq!(dirichlet_kernel(3, PI), 1.0, max_relative = 1e-15);
        // continuity across the branch threshold
        let a = dirichlet_kernel(9, 2.1e-9);
        let b = dirichlet_kernel(9, 1.9e-9);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn theorem1_single_element_is_one() {
        let g = SystemGeometry::reference().with_irs_size(1, 1);
        assert_relative_eq!(g_jk_theorem1(&g).unwrap().g_jk, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn theorem1_far_limit_is_lag_weight_floor() {
        let g = SystemGeometry::reference().with_irs_size(6, 4);
        let far = g.with_irs_center(g.irs_center.map(|x| x * 1e9));
        let mut w = 0.0;
        for s in -5i64..=5 {
            for t in -3i64..=3 {
                w += ((6 - s.abs()) * (4 - t.abs())) as f64;
            }
        }
        assert_relative_eq!(g_jk_theorem1(&far).unwrap().g_jk, w / (24.0 * 24.0), max_relative = 1e-9);
    }

    #[test]
    fn theorem1_tracks_second_order_channel_up_to_diagonal() {
        // The closed form keeps the zero-lag term, which is worth exactly 1/N.
        for size in [8usize, 16] {
            let g = SystemGeometry::reference().with_irs_size(size, size);
            let t1 = g_jk_theorem1(&g).unwrap().g_jk;
            let t2 = g_jk_for_geometry(&g, 0, 1, ChannelVariant::Taylor2).unwrap().g_jk;
            let n = (size * size) as f64;
            assert_relative_eq!(t1 - t2, 1.0 / n, max_relative = 1e-6);
        }
    }

    #[test]
    fn prop2_and_corollary_examples() {
        assert_eq!(g_jk_prop2(1, 1), 1.0);
        assert_eq!(g_jk_prop2(2, 2), 0.375);
        assert_eq!(g_jk_corollary_square(1).unwrap(), 1.0);
        assert_relative_eq!(g_jk_corollary_square(4).unwrap(), 0.375, max_relative = 1e-15);
        assert_relative_eq!(g_jk_prop2(40, 40), g_jk_corollary_square(1600).unwrap(), max_relative = 1e-12);
        assert!((g_jk_corollary_square(1600).unwrap() - 0.016672).abs() < 1e-6);
        assert!(matches!(g_jk_corollary_square(10), Err(Error::NotSquare(10))));
    }

    #[test]
    fn theorem1_collapses_at_kernel_nulls() {
        let r = SystemGeometry::reference();
        let center = solve_deployment(2, 128, 3.0, 6.0, [-0.72, 0.51, 0.51], r.wavelength()).unwrap();
        let g = r.with_irs_size(12, 12).with_irs_center(center);
        let t1 = g_jk_theorem1(&g).unwrap().g_jk;
        assert_relative_eq!(t1, g_jk_prop2(12, 12), max_relative = 1e-12);
    }

    #[test]
    fn expected_inner_product_examples() {
        let g = SystemGeometry { grid: GridMode::Odd, ..SystemGeometry::reference().with_irs_size(3, 3) };
        let g = SystemGeometry { bs_antennas: 5, ..g };
        let f = bs_irs(&g, c(0.2, 0.0), ChannelVariant::Exact).unwrap().f;
        let gk = irs_user_los(&g, 0, None).unwrap().los_channel();
        let self_ip = expected_inner_product(&f, &gk, &gk).unwrap();
        assert_relative_eq!(self_ip.re, 5.0 * 0.04 * gk.norm_squared(), max_relative = 1e-12);
        let a = CVec::from_vec((0..9).map(|i| if i == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect());
        let b = CVec::from_vec((0..9).map(|i| if i == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect());
        assert_eq!(expected_inner_product(&f, &a, &b).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn g_jk_exact_is_invariant_to_rho_t_scaling() {
        let g =
            SystemGeometry { grid: GridMode::Odd, bs_antennas: 7, ..SystemGeometry::reference().with_irs_size(5, 5) };
        let gj = irs_user_los(&g, 0, None).unwrap().los_channel();
        let gk = irs_user_los(&g, 2, None).unwrap().los_channel();
        let a = g_jk_exact(&bs_irs(&g, c(1.0, 0.0), ChannelVariant::Exact).unwrap().f, &gj, &gk).unwrap();
        let b = g_jk_exact(&bs_irs(&g, c(-3e-4, 2e-4), ChannelVariant::Exact).unwrap().f, &gj, &gk).unwrap();
        assert_relative_eq!(a.g_jk, b.g_jk, max_relative = 1e-12);
        assert_relative_eq!(a.g_jk, a.variance.unwrap() / a.denom.unwrap());
    }
}
