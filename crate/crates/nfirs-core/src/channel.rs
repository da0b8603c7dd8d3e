//! BS-IRS and IRS-user channel synthesis, Rician sampling and instantaneous
//! rates.
//!
//! Angle convention for the IRS-user link: with `e` the unit vector from the
//! IRS center to the user, the elevation `θ` is the polar angle measured from
//! the y-axis (`cos θ = e_y`) and the azimuth `φ` satisfies
//! `e_x = sin θ cos φ`, `e_z = sin θ sin φ`. The steering arguments are then
//! `Φ = π ζ_IRS e_y` and `Θ = π ζ_IRS e_z`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{direction_cosines, norm, SystemGeometry};
use crate::linalg::{dotc, norm_sqr, unit_phase, CMat, CVec};
use crate::stats::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelVariant {
    Exact,
    FarField,
    Taylor2,
}

#[derive(Clone, Debug)]
pub struct BsIrsChannel {
    pub f: CMat,
    pub rho_t: Complex64,
    pub variant: ChannelVariant,
}

/// Free-space amplitude gain `λ / (4π d)`.
pub fn free_space_gain(wavelength: f64, distance: f64) -> f64 {
    wavelength / (4.0 * PI * distance)
}

/// `[1, e^{jX}, ..., e^{jX(L-1)}]`.
pub fn ula_response(len: usize, x: f64) -> CVec {
    CVec::from_iterator(len, (0..len).map(|i| unit_phase(x * i as f64)))
}

/// `a_{N_u}(X) ⊗ a_{N_v}(Y)` in row-major element order.
pub fn upa_response(x: f64, y: f64, rows: usize, cols: usize) -> CVec {
    let a = ula_response(rows, x);
    let b = ula_response(cols, y);
    CVec::from_iterator(rows * cols, (0..rows * cols).map(|n| a[n / cols] * b[n % cols]))
}

pub fn bs_irs(geom: &SystemGeometry, rho_t: Complex64, variant: ChannelVariant) -> Result<BsIrsChannel> {
    match variant {
        ChannelVariant::Exact => exact_bs_irs(geom, rho_t),
        ChannelVariant::FarField => farfield_bs_irs(geom, rho_t),
        ChannelVariant::Taylor2 => taylor2_bs_irs(geom, rho_t),
    }
}

/// Default BS-IRS gain: free-space amplitude at the IRS center distance.
pub fn default_rho_t(geom: &SystemGeometry) -> Complex64 {
    Complex64::new(free_space_gain(geom.wavelength(), geom.irs_distance()), 0.0)
}

fn from_distances(
    geom: &SystemGeometry,
    rho_t: Complex64,
    variant: ChannelVariant,
    dist: impl Fn(f64, f64, f64) -> f64,
) -> BsIrsChannel {
    let k = 2.0 * PI / geom.wavelength();
    let bs = geom.bs_indices();
    let irs = geom.irs_indices();
    let f = CMat::from_fn(bs.len(), irs.len(), |r, c| {
        let (u, v) = irs[c];
        rho_t * unit_phase(-k * dist(bs[r], u, v))
    });
    BsIrsChannel { f, rho_t, variant }
}

/// Spherical-wavefront channel from exact element distances.
pub fn exact_bs_irs(geom: &SystemGeometry, rho_t: Complex64) -> Result<BsIrsChannel> {
    geom.validate()?;
    let db = geom.bs_spacing();
    let di = geom.irs_spacing();
    let [cx, cy, cz] = geom.irs_center;
    Ok(from_distances(geom, rho_t, ChannelVariant::Exact, |i, u, v| {
        let dx = cx - i * db;
        let dy = cy + u * di;
        let dz = cz + v * di;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }))
}

/// Channel from the second-order expansion of the element distances about
/// the array centers.
pub fn taylor2_bs_irs(geom: &SystemGeometry, rho_t: Complex64) -> Result<BsIrsChannel> {
    geom.validate()?;
    let [mx, my, mz] = direction_cosines(geom)?;
    let l = geom.irs_distance();
    let lam = geom.wavelength();
    let (zb, zi) = (geom.zeta_bs, geom.zeta_irs);
    Ok(from_distances(geom, rho_t, ChannelVariant::Taylor2, |i, u, v| {
        let (bi, iu, iv) = (i * zb, u * zi, v * zi);
        let linear = lam / 2.0 * (-bi * mx + iu * my + iv * mz);
        let quad =
            lam * lam / (8.0 * l) * (bi * bi * (1.0 - mx * mx) + iu * iu * (1.0 - my * my) + iv * iv * (1.0 - mz * mz));
        let cross = lam * lam / (4.0 * l) * (bi * iu * mx * my + bi * iv * mx * mz - iu * iv * my * mz);
        l + linear + quad + cross
    }))
}

/// Rank-one planar-wavefront channel `ρ_T e^{-j2πl/λ} a_M(Θ_T) a_S^H`,
/// built on centered indices with `Θ_T = π ζ_BS μ_x`.
pub fn farfield_bs_irs(geom: &SystemGeometry, rho_t: Complex64) -> Result<BsIrsChannel> {
    geom.validate()?;
    let [mx, my, mz] = direction_cosines(geom)?;
    let k = 2.0 * PI / geom.wavelength();
    let base = rho_t * unit_phase(-k * geom.irs_distance());
    let theta_t = PI * geom.zeta_bs * mx;
    let bs: Vec<Complex64> = geom.bs_indices().iter().map(|i| unit_phase(theta_t * i)).collect();
    let irs: Vec<Complex64> =
        geom.irs_indices().iter().map(|(u, v)| unit_phase(PI * geom.zeta_irs * (u * my + v * mz))).collect();
    let f = CMat::from_fn(bs.len(), irs.len(), |r, c| base * bs[r] * irs[c].conj());
    Ok(BsIrsChannel { f, rho_t, variant: ChannelVariant::FarField })
}

/// Largest entrywise phase difference, wrapped to `[0, π]`.
pub fn max_phase_deviation(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).arg().abs()).fold(0.0, f64::max)
}

/// Statistics of one IRS-user link. `los_steering` has unit-modulus entries;
/// the LoS channel is `rho_r * los_steering`.
#[derive(Clone, Debug, PartialEq)]
pub struct IrsUserLink {
    pub los_steering: CVec,
    pub rho_r: Complex64,
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    pub distance: f64,
}

impl IrsUserLink {
    /// Sets the Rician factor (linear). `f64::INFINITY` means pure LoS.
    pub fn with_kappa(mut self, kappa: f64) -> Self {
        assert!(kappa >= 0.0, "Rician factor must be nonnegative");
        self.kappa = kappa;
        self.beta = if kappa.is_infinite() { 1.0 } else { kappa / (kappa + 1.0) };
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn los_channel(&self) -> CVec {
        self.los_steering.map(|a| a * self.rho_r)
    }

    pub fn elements(&self) -> usize {
        self.los_steering.len()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// LoS part of the link to `user_index`. `rho_r = None` uses the free-space
/// gain at the IRS-user distance; `alpha = |ρ_R|²`. The link is returned
/// with `kappa = ∞`; use [`IrsUserLink::with_kappa`] to add scattering.
pub fn irs_user_los(geom: &SystemGeometry, user_index: usize, rho_r: Option<Complex64>) -> Result<IrsUserLink> {
    geom.validate()?;
    let user =
        *geom.users.get(user_index).ok_or_else(|| Error::Dimension(format!("no user with index {user_index}")))?;
    let c = geom.irs_center;
    let diff = [user[0] - c[0], user[1] - c[1], user[2] - c[2]];
    let distance = norm(diff);
    if !(distance > 0.0) {
        return Err(Error::CoincidentUser(user_index));
    }
    let e = diff.map(|x| x / distance);
    let elevation = e[1].clamp(-1.0, 1.0).acos();
    let azimuth = e[2].atan2(e[0]);
    let phi_arg = PI * geom.zeta_irs * elevation.cos();
    let theta_arg = PI * geom.zeta_irs * azimuth.sin() * elevation.sin();
    let los_steering = CVec::from_iterator(
        geom.irs_elements(),
        geom.irs_indices().into_iter().map(|(u, v)| unit_phase(u * phi_arg + v * theta_arg)),
    );
    let rho_r = rho_r.unwrap_or_else(|| Complex64::new(free_space_gain(geom.wavelength(), distance), 0.0));
    Ok(IrsUserLink {
        los_steering,
        rho_r,
        alpha: rho_r.norm_sqr(),
        kappa: f64::INFINITY,
        beta: 1.0,
        aod_azimuth: azimuth,
        aod_elevation: elevation,
        distance,
    })
}

/// Links for every user in `geom`, with one Rician factor (linear) per user.
pub fn user_links(geom: &SystemGeometry, kappas: &[f64]) -> Result<Vec<IrsUserLink>> {
    if kappas.len() != geom.users.len() {
        return Err(Error::Dimension(format!("{} Rician factors for {} users", kappas.len(), geom.users.len())));
    }
    (0..geom.users.len()).map(|k| Ok(irs_user_los(geom, k, None)?.with_kappa(kappas[k]))).collect()
}

/// Standard circularly-symmetric complex normal.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One Rician draw `√(αβ) ḡ + √(α(1-β)) g̃`.
pub fn sample_rician_with<R: Rng + ?Sized>(link: &IrsUserLink, rng: &mut R) -> CVec {
    let los = (link.alpha * link.beta).sqrt();
    let nlos = (link.alpha * (1.0 - link.beta)).sqrt();
    if nlos == 0.0 {
        return link.los_steering.map(|a| a * los);
    }
    link.los_steering.map(|a| a * los + complex_normal(rng) * nlos)
}

pub fn sample_rician(link: &IrsUserLink, seed: u64) -> CVec {
    sample_rician_with(link, &mut substream(seed, 0))
}

/// `h = F diag(θ) g`.
pub fn cascaded(f: &CMat, theta: &CVec, g: &CVec) -> Result<CVec> {
    if theta.len() != f.ncols() || g.len() != f.ncols() {
        return Err(Error::Dimension(format!(
            "F has {} columns, theta has {}, g has {}",
            f.ncols(),
            theta.len(),
            g.len()
        )));
    }
    Ok(f * theta.component_mul(g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    pub sum_rate: f64,
}

/// Per-user SINR and sum rate (bits/s/Hz) for linear precoders.
pub fn instantaneous_rate(channels: &[CVec], precoders: &[CVec], noise_powers: &[f64]) -> Result<RateReport> {
    let k = channels.len();
    if k == 0 || precoders.len() != k || noise_powers.len() != k {
        return Err(Error::Dimension(format!(
            "{k} channels, {} precoders, {} noise powers",
            precoders.len(),
            noise_powers.len()
        )));
    }
    let m = channels[0].len();
    if channels.iter().chain(precoders).any(|v| v.len() != m) {
        return Err(Error::Dimension("channel and precoder lengths differ".into()));
    }
    if let Some(&s) = noise_powers.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::NonPositiveNoise(s));
    }
    let mut sinr = Vec::with_capacity(k);
    for (kk, h) in channels.iter().enumerate() {
        let mut interference = 0.0;
        let mut signal = 0.0;
        for (j, w) in precoders.iter().enumerate() {
            let g = dotc(h.as_slice(), w.as_slice()).norm_sqr();
            if j == kk {
                signal = g;
            } else {
                interference += g;
            }
        }
        sinr.push(signal / (interference + noise_powers[kk]));
    }
    let sum_rate = sinr.iter().map(|g| (1.0 + g).log2()).sum();
    Ok(RateReport { sinr, sum_rate })
}

/// MRT precoders `√p_k h_k`.
pub fn mrt_precoders(channels: &[CVec], powers: &[f64]) -> Vec<CVec> {
    channels.iter().zip(powers).map(|(h, p)| h * Complex64::new(p.sqrt(), 0.0)).collect()
}

/// Writes a matrix as CSV rows `i,n,re,im`.
pub fn write_matrix_csv<W: Write>(mut out: W, a: &CMat) -> Result<()> {
    writeln!(out, "i,n,re,im")?;
    for i in 0..a.nrows() {
        for n in 0..a.ncols() {
            let z = a[(i, n)];
            writeln!(out, "{i},{n},{:e},{:e}", z.re, z.im)?;
        }
    }
    Ok(())
}

/// Writes a matrix as row-major interleaved little-endian f64 `re, im`
/// pairs with no header; the shape travels out of band.
pub fn write_matrix_binary<W: Write>(mut out: W, a: &CMat) -> Result<()> {
    let mut buf = Vec::with_capacity(a.len() * 16);
    for i in 0..a.nrows() {
        for n in 0..a.ncols() {
            let z = a[(i, n)];
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut input: R, rows: usize, cols: usize) -> Result<CMat> {
    let mut buf = vec![0u8; rows * cols * 16];
    input.read_exact(&mut buf)?;
    let val = |off: usize| f64::from_le_bytes(buf[off..off + 8].try_into().expect("8-byte slice"));
    Ok(CMat::from_fn(rows, cols, |i, n| {
        let off = (i * cols + n) * 16;
        Complex64::new(val(off), val(off + 8))
    }))
}

/// Squared norm of a complex vector, compensated.
pub fn power(v: &CVec) -> f64 {
    norm_sqr(v.as_slice())
}
