//! Array placement and the decorrelating deployment criterion.
//!
//! The BS is a sparse ULA on the x-axis centered at the origin. The IRS is a
//! sparse UPA parallel to the y-z plane centered at `irs_center`. Element
//! indices are centered: `idx - (count - 1) / 2`, which gives integers for
//! odd counts and half-integers for even counts (the `Centered` grid mode).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Which element counts are accepted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Odd counts only; indices are integers.
    #[default]
    Odd,
    /// Any count; even counts use the half-integer grid ±1/2, ±3/2, ...
    Centered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub carrier_frequency: f64,
    pub bs_antennas: usize,
    pub zeta_bs: f64,
    pub irs_rows: usize,
    pub irs_cols: usize,
    pub zeta_irs: f64,
    pub irs_center: [f64; 3],
    pub users: Vec<[f64; 3]>,
    pub grid: GridMode,
}

impl SystemGeometry {
    /// 60 GHz, 128-antenna BS with sparsity 3, 40×40 IRS with sparsity 6 at
    /// (-0.72, 0.51, 0.51) m and four users in the horizontal plane.
    pub fn reference() -> Self {
        Self {
            carrier_frequency: 60e9,
            bs_antennas: 128,
            zeta_bs: 3.0,
            irs_rows: 40,
            irs_cols: 40,
            zeta_irs: 6.0,
            irs_center: [-0.72, 0.51, 0.51],
            users: vec![[10.0, 70.0, 0.0], [30.0, 60.0, 0.0], [20.0, 50.0, 0.0], [45.0, 45.0, 0.0]],
            grid: GridMode::Centered,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn bs_spacing(&self) -> f64 {
        self.zeta_bs * self.wavelength() / 2.0
    }

    pub fn irs_spacing(&self) -> f64 {
        self.zeta_irs * self.wavelength() / 2.0
    }

    pub fn irs_elements(&self) -> usize {
        self.irs_rows * self.irs_cols
    }

    /// Distance `l` from the BS origin to the IRS center.
    pub fn irs_distance(&self) -> f64 {
        norm(self.irs_center)
    }

    pub fn with_irs_center(&self, center: [f64; 3]) -> Self {
        Self { irs_center: center, ..self.clone() }
    }

    pub fn with_irs_size(&self, rows: usize, cols: usize) -> Self {
        Self { irs_rows: rows, irs_cols: cols, ..self.clone() }
    }

    pub fn with_sparsity(&self, zeta_bs: f64, zeta_irs: f64) -> Self {
        Self { zeta_bs, zeta_irs, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency.is_finite() && self.carrier_frequency > 0.0) {
            return Err(Error::Geometry(format!(
                "carrier frequency must be positive (got {})",
                self.carrier_frequency
            )));
        }
        for (name, value) in [
            ("M (bs_antennas)", self.bs_antennas),
            ("N_u (irs_rows)", self.irs_rows),
            ("N_v (irs_cols)", self.irs_cols),
        ] {
            if value == 0 {
                return Err(Error::Geometry(format!("{name} must be positive")));
            }
            if self.grid == GridMode::Odd && value % 2 == 0 {
                return Err(Error::EvenCount { name, value });
            }
        }
        for (name, zeta) in [("zeta_bs", self.zeta_bs), ("zeta_irs", self.zeta_irs)] {
            if !(zeta.is_finite() && zeta >= 1.0) {
                return Err(Error::Geometry(format!("{name} must be at least 1 (got {zeta})")));
            }
        }
        if !self.irs_center.iter().all(|c| c.is_finite()) {
            return Err(Error::Geometry("IRS center must be finite".into()));
        }
        if self.irs_distance() == 0.0 {
            return Err(Error::DegenerateCenter);
        }
        for (k, u) in self.users.iter().enumerate() {
            if !u.iter().all(|c| c.is_finite()) {
                return Err(Error::Geometry(format!("user {k} position must be finite")));
            }
        }
        Ok(())
    }

    /// Centered BS antenna indices in ascending order.
    pub fn bs_indices(&self) -> Vec<f64> {
        centered_indices(self.bs_antennas)
    }

    /// Centered `(u_n, v_n)` IRS indices in row-major element order.
    pub fn irs_indices(&self) -> Vec<(f64, f64)> {
        let cols = self.irs_cols;
        let half_u = (self.irs_rows as f64 - 1.0) / 2.0;
        let half_v = (cols as f64 - 1.0) / 2.0;
        (0..self.irs_elements()).map(|n| ((n / cols) as f64 - half_u, (n % cols) as f64 - half_v)).collect()
    }
}

pub fn centered_indices(count: usize) -> Vec<f64> {
    let half = (count as f64 - 1.0) / 2.0;
    (0..count).map(|i| i as f64 - half).collect()
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn bs_positions(geom: &SystemGeometry) -> Result<Vec<[f64; 3]>> {
    geom.validate()?;
    let d = geom.bs_spacing();
    Ok(geom.bs_indices().into_iter().map(|i| [i * d, 0.0, 0.0]).collect())
}

pub fn irs_positions(geom: &SystemGeometry) -> Result<Vec<[f64; 3]>> {
    geom.validate()?;
    let d = geom.irs_spacing();
    let [cx, cy, cz] = geom.irs_center;
    Ok(geom.irs_indices().into_iter().map(|(u, v)| [cx, cy + u * d, cz + v * d]).collect())
}

pub fn direction_cosines(geom: &SystemGeometry) -> Result<[f64; 3]> {
    let l = geom.irs_distance();
    if !(l > 0.0) {
        return Err(Error::DegenerateCenter);
    }
    let [x, y, z] = geom.irs_center;
    Ok([x / l, y / l, z / l])
}

/// BS aperture length `(M - 1) d_BS`.
pub fn bs_aperture(geom: &SystemGeometry) -> f64 {
    (geom.bs_antennas as f64 - 1.0) * geom.bs_spacing()
}

/// IRS aperture taken as the panel diagonal.
pub fn irs_aperture(geom: &SystemGeometry) -> f64 {
    let du = geom.irs_rows as f64 - 1.0;
    let dv = geom.irs_cols as f64 - 1.0;
    (du * du + dv * dv).sqrt() * geom.irs_spacing()
}

pub fn fraunhofer_distance(geom: &SystemGeometry) -> f64 {
    let d = bs_aperture(geom) + irs_aperture(geom);
    2.0 * d * d / geom.wavelength()
}

/// Phase increments of the BS array factor. `delta_y` multiplies the row
/// lag `s`, `delta_z` the column lag `t`; the fundamental increment is
/// `delta = delta_y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseIncrement {
    pub delta: f64,
    pub delta_y: f64,
    pub delta_z: f64,
}

impl PhaseIncrement {
    pub fn at(&self, s: f64, t: f64) -> f64 {
        s * self.delta_y + t * self.delta_z
    }
}

pub fn phase_increment(geom: &SystemGeometry) -> Result<PhaseIncrement> {
    let [mx, my, mz] = direction_cosines(geom)?;
    let scale = std::f64::consts::PI * geom.wavelength() / (2.0 * geom.irs_distance()) * geom.zeta_bs * geom.zeta_irs;
    let delta_y = scale * mx * my;
    let delta_z = scale * mx * mz;
    Ok(PhaseIncrement { delta: delta_y, delta_y, delta_z })
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn check_q(q: usize, m: usize) -> Result<()> {
    if q == 0 || q % 2 != 0 {
        return Err(Error::Deployment(format!("q must be even and positive (got {q})")));
    }
    if q % m == 0 {
        return Err(Error::Deployment(format!("q = {q} must not be a multiple of M = {m}")));
    }
    if gcd(q / 2, m) != 1 {
        return Err(Error::Deployment(format!("gcd(q/2, M) must be 1 (q = {q}, M = {m})")));
    }
    Ok(())
}

/// Places the IRS on the ray `direction` at the distance where the
/// fundamental phase increment equals `q π / M` in magnitude.
pub fn solve_deployment(
    q: usize,
    bs_antennas: usize,
    zeta_bs: f64,
    zeta_irs: f64,
    direction: [f64; 3],
    wavelength: f64,
) -> Result<[f64; 3]> {
    if bs_antennas == 0 {
        return Err(Error::Deployment("M must be positive".into()));
    }
    check_q(q, bs_antennas)?;
    let n = norm(direction);
    if !(n > 0.0) {
        return Err(Error::Deployment("direction must be nonzero".into()));
    }
    let [mx, my, mz] = direction.map(|c| c / n);
    if (my - mz).abs() > 1e-9 {
        return Err(Error::Deployment(format!("direction must satisfy mu_y = mu_z (got {my} vs {mz})")));
    }
    if mx * my == 0.0 {
        return Err(Error::Deployment("mu_x * mu_y must be nonzero".into()));
    }
    let l = bs_antennas as f64 * wavelength * zeta_bs * zeta_irs * (mx * my).abs() / (2.0 * q as f64);
    Ok([mx * l, my * l, mz * l])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub delta: f64,
    pub q: usize,
    pub q_nearest: i64,
    /// `| |delta| - q π / M | / (π / M)` for the supplied `q`.
    pub q_error: f64,
    pub symmetric: bool,
    pub q_even: bool,
    pub q_coprime: bool,
    pub aperture_ok: bool,
}

impl DeploymentReport {
    pub const Q_TOLERANCE: f64 = 0.01;

    /// All predicates hold, the nearest null index is the requested one and
    /// the increment is within `Q_TOLERANCE` null spacings of it.
    pub fn satisfied(&self) -> bool {
        self.symmetric
            && self.q_even
            && self.q_coprime
            && self.aperture_ok
            && self.q_nearest == self.q as i64
            && self.q_error < Self::Q_TOLERANCE
    }
}

/// Evaluates the deployment predicates. Parity and coprimality are judged on
/// the null index nearest to the actual increment.
pub fn validate_criterion(geom: &SystemGeometry, q: usize) -> Result<DeploymentReport> {
    let inc = phase_increment(geom)?;
    let [_, my, mz] = direction_cosines(geom)?;
    let m = geom.bs_antennas;
    let spacing = std::f64::consts::PI / m as f64;
    let ratio = inc.delta.abs() / spacing;
    let q_nearest = ratio.round() as i64;
    let qn = q_nearest as usize;
    Ok(DeploymentReport {
        delta: inc.delta,
        q,
        q_nearest,
        q_error: (ratio - q as f64).abs(),
        symmetric: (my - mz).abs() < 1e-3,
        q_even: qn > 0 && qn % 2 == 0 && qn % m != 0,
        q_coprime: qn >= 2 && gcd(qn / 2, m) == 1,
        aperture_ok: m + 2 > geom.irs_rows + geom.irs_cols,
    })
}

/// Writes points as CSV with header `index,x_m,y_m,z_m`.
pub fn write_positions_csv<W: Write>(mut out: W, points: &[[f64; 3]]) -> Result<()> {
    writeln!(out, "index,x_m,y_m,z_m")?;
    for (i, p) in points.iter().enumerate() {
        writeln!(out, "{i},{:e},{:e},{:e}", p[0], p[1], p[2])?;
    }
    Ok(())
}
