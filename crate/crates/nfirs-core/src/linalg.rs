//! Complex dense helpers: split-real products, Gram matrices, compensated
//! inner products and Hermitian solves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

const JITTER: f64 = 1e-12;

/// A complex matrix stored as separate real and imaginary parts, plus their
/// transposes, so that products go through the real blocked gemm kernel.
#[derive(Clone, Debug)]
pub struct SplitMat {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    re_t: DMatrix<f64>,
    im_t: DMatrix<f64>,
}

impl SplitMat {
    pub fn new(a: &CMat) -> Self {
        let re = a.map(|z| z.re);
        let im = a.map(|z| z.im);
        Self { re_t: re.transpose(), im_t: im.transpose(), re, im }
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    /// `A * X`.
    pub fn mul(&self, x: &CMat) -> CMat {
        let (xr, xi) = split(x);
        let re = &self.re * &xr - &self.im * &xi;
        let im = &self.re * &xi + &self.im * &xr;
        join(&re, &im)
    }

    /// `A^H * Y`.
    pub fn adjoint_mul(&self, y: &CMat) -> CMat {
        let (yr, yi) = split(y);
        let re = &self.re_t * &yr + &self.im_t * &yi;
        let im = &self.re_t * &yi - &self.im_t * &yr;
        join(&re, &im)
    }

    /// `A^H * A`, Hermitian by construction.
    pub fn gram(&self) -> CMat {
        let re = &self.re_t * &self.re + &self.im_t * &self.im;
        let im = &self.re_t * &self.im - &self.im_t * &self.re;
        let mut g = join(&re, &im);
        hermitize(&mut g);
        g
    }
}

fn split(x: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (x.map(|z| z.re), x.map(|z| z.im))
}

fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMat {
    re.zip_map(im, Complex64::new)
}

/// Overwrites the strict lower triangle with the conjugate of the upper one
/// and zeroes the imaginary part of the diagonal.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            a[(i, j)] = a[(j, i)].conj();
        }
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// `a^H b` with compensated summation of the real and imaginary parts.
pub fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    for (x, y) in a.iter().zip(b) {
        re.add(x.re * y.re);
        re.add(x.im * y.im);
        im.add(x.re * y.im);
        im.add(-x.im * y.re);
    }
    Complex64::new(re.value(), im.value())
}

/// `‖a‖²` with compensated summation.
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    let mut acc = Compensated::default();
    for x in a {
        acc.add(x.norm_sqr());
    }
    acc.value()
}

/// Real part of a Hermitian form value after checking that the imaginary
/// residue is negligible.
pub fn hermitian_real(value: Complex64) -> f64 {
    debug_assert!(
        value.im.abs() <= 1e-10 * value.norm().max(f64::MIN_POSITIVE),
        "Hermitian form has imaginary residue {value}"
    );
    value.re
}

/// Lower Cholesky factor of a Hermitian matrix, or `None` when a pivot is
/// not strictly positive. Only the lower triangle of `a` is read.
fn cholesky_lower(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &CMat, b: &CVec) -> CVec {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)].conj() * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `A x = b` for Hermitian positive definite `A` by Cholesky, retrying
/// once with a relative diagonal jitter.
pub fn solve_hpd(a: &CMat, b: &CVec) -> Result<CVec> {
    if let Some(l) = cholesky_lower(a) {
        return Ok(cholesky_solve(&l, b));
    }
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += Complex64::new(JITTER * scale, 0.0);
    }
    cholesky_lower(&shifted).map(|l| cholesky_solve(&l, b)).ok_or(Error::NotPositiveDefinite)
}

/// Above this many columns conjugate gradients is tried before the
/// capacitance solve.
const CG_MIN_RANK: usize = 48;
const CG_MAX_ITERATIONS: usize = 300;
const CG_TOLERANCE: f64 = 1e-13;

/// Solves `(c I + U U^H) x = v`. Small ranks go through the `r × r`
/// capacitance system; larger ones through conjugate gradients, falling
/// back to the capacitance system if those stall.
pub fn solve_shifted_low_rank(u: &CMat, c: f64, v: &CVec) -> Result<CVec> {
    if !(c > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    if u.ncols() == 0 {
        return Ok(v / Complex64::new(c, 0.0));
    }
    let split = SplitMat::new(u);
    if u.ncols() >= CG_MIN_RANK {
        if let Some(x) = shifted_cg(&split, c, v) {
            return Ok(x);
        }
    }
    capacitance_solve(&split, c, v)
}

fn shifted_apply(split: &SplitMat, c: f64, x: &CVec) -> CVec {
    let col = CMat::from_column_slice(x.len(), 1, x.as_slice());
    let back = split.mul(&split.adjoint_mul(&col));
    back.column(0) + x * Complex64::new(c, 0.0)
}

fn shifted_cg(split: &SplitMat, c: f64, v: &CVec) -> Option<CVec> {
    let target = CG_TOLERANCE * v.norm();
    let mut x = v / Complex64::new(c, 0.0);
    let mut r = v - shifted_apply(split, c, &x);
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..CG_MAX_ITERATIONS {
        if rr.sqrt() <= target {
            return Some(x);
        }
        let ad = shifted_apply(split, c, &d);
        let step = Complex64::new(rr / dotc(d.as_slice(), ad.as_slice()).re, 0.0);
        x += &d * step;
        r -= ad * step;
        let next = r.norm_squared();
        d = &r + d * Complex64::new(next / rr, 0.0);
        rr = next;
    }
    (rr.sqrt() <= target).then_some(x)
}

fn capacitance_solve(split: &SplitMat, c: f64, v: &CVec) -> Result<CVec> {
    let mut cap = split.gram();
    for i in 0..cap.nrows() {
        cap[(i, i)] += Complex64::new(c, 0.0);
    }
    let uv = split.adjoint_mul(&CMat::from_column_slice(v.len(), 1, v.as_slice()));
    let y = solve_hpd(&cap, &uv.column(0).into_owned())?;
    let uy = split.mul(&CMat::from_column_slice(y.len(), 1, y.as_slice()));
    Ok((v - uy.column(0)) / Complex64::new(c, 0.0))
}

pub fn unit_phase(angle: f64) -> Complex64 {
    Complex64::from_polar(1.0, angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn split_products_match_native() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_mat(&mut rng, 7, 5);
        let x = random_mat(&mut rng, 5, 3);
        let y = random_mat(&mut rng, 7, 3);
        let s = SplitMat::new(&a);
        assert!((s.mul(&x) - &a * &x).norm() < 1e-13);
        assert!((s.adjoint_mul(&y) - a.adjoint() * &y).norm() < 1e-13);
        assert!((s.gram() - a.adjoint() * &a).norm() < 1e-13);
    }

    #[test]
    fn compensated_dot_recovers_cancellation() {
        let a = vec![Complex64::new(1e16, 0.0), Complex64::new(1.0, 0.0), Complex64::new(-1e16, 0.0)];
        let b = vec![Complex64::new(1.0, 0.0); 3];
        assert_eq!(dotc(&a, &b).re, 1.0);
    }

    #[test]
    fn low_rank_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_mat(&mut rng, 9, 4);
        let v = CVec::from_fn(9, |_, _| Complex64::new(rng.random(), rng.random()));
        let x = solve_shifted_low_rank(&u, 0.7, &v).unwrap();
        let mut dense = &u * u.adjoint();
        for i in 0..9 {
            dense[(i, i)] += Complex64::new(0.7, 0.0);
        }
        assert!((&dense * &x - &v).norm() < 1e-12 * v.norm());
        let y = solve_hpd(&dense, &v).unwrap();
        assert!((x - y).norm() < 1e-12 * v.norm());
    }

    #[test]
    fn iterative_and_capacitance_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_mat(&mut rng, 80, 64);
        let v = CVec::from_fn(80, |_, _| Complex64::new(rng.random(), rng.random()));
        let split = SplitMat::new(&u);
        for c in [0.05, 1.0, 30.0] {
            let iterative = shifted_cg(&split, c, &v).unwrap();
            let direct = capacitance_solve(&split, c, &v).unwrap();
            assert!((&iterative - &direct).norm() < 1e-10 * direct.norm(), "c = {c}");
            let x = solve_shifted_low_rank(&u, c, &v).unwrap();
            assert!((shifted_apply(&split, c, &x) - &v).norm() < 1e-11 * v.norm());
        }
    }

    #[test]
    fn indefinite_system_is_rejected() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]));
        let b = CVec::from_element(2, Complex64::new(1.0, 0.0));
        assert!(matches!(solve_hpd(&a, &b), Err(Error::NotPositiveDefinite)));
    }
}
