//! Periodic grid on the circle, real fields on it, and spectral operations.
//!
//! Node `j` sits at `theta_j = -pi + j * h` with `h = 2 pi / n`. Inner products
//! use the rectangle rule, which is spectrally accurate for smooth periodic
//! integrands and is exactly invariant under the discrete translations below.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform grid of `n` nodes on `[-pi, pi)` with cached FFT plans.
pub struct Grid {
    n: usize,
    spacing: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    nodes: Vec<f64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl Grid {
    pub fn new(n: usize) -> Result<Arc<Grid>> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be even and >= 16, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let spacing = 2.0 * PI / n as f64;
        Ok(Arc::new(Grid {
            n,
            spacing,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            nodes: (0..n).map(|j| -PI + j as f64 * spacing).collect(),
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the node at `theta = 0`.
    pub fn origin_index(&self) -> usize {
        self.n / 2
    }

    /// Signed frequency of DFT slot `k`; the Nyquist slot maps to `+n/2`.
    pub fn frequency(&self, k: usize) -> f64 {
        if k <= self.n / 2 {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }

    pub fn fft(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse DFT returning the real part, scaled so that `ifft(fft(x)) = x`.
    pub fn ifft_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let s = 1.0 / self.n as f64;
        spec.iter().map(|c| c.re * s).collect()
    }
}

fn check(a: &Grid, b: &Grid) -> Result<()> {
    if a.n != b.n {
        return Err(Error::GridMismatch { left: a.n, right: b.n });
    }
    Ok(())
}

/// A real-valued function sampled on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch { left: grid.n, right: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite field value {v}")));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Wraps values without the finiteness check. Used on hot paths that
    /// check for blow-up themselves.
    pub(crate) fn raw(grid: &Arc<Grid>, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.n);
        Field { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field { grid: grid.clone(), values: vec![0.0; grid.n] }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Field {
        Field { grid: grid.clone(), values: vec![c; grid.n] }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: grid.clone(), values: grid.nodes.iter().map(|&t| f(t)).collect() }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    ///
    /// # Panics
    /// If the grids differ. Use [`try_zip`](Self::try_zip) for a checked version.
    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        self.try_zip(other, f).expect("fields on different grids")
    }

    pub fn try_zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        check(&self.grid, &other.grid)?;
        Ok(Field::raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        self.zip(other, |a, b| a + s * b)
    }

    /// Rectangle-rule inner product. Panics on grid mismatch.
    pub fn dot(&self, other: &Field) -> f64 {
        inner_product(self, other).expect("fields on different grids")
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.fft(&self.values)
    }

    pub fn from_spectrum(grid: &Arc<Grid>, spec: Vec<Complex64>) -> Field {
        Field::raw(grid, grid.ifft_real(spec))
    }

    /// Reflection `theta -> -theta`.
    pub fn reflect(&self) -> Field {
        let n = self.grid.n;
        Field::raw(&self.grid, (0..n).map(|j| self.values[(n - j) % n]).collect())
    }

    /// Band-limited interpolation onto another grid.
    pub fn resample(&self, target: &Arc<Grid>) -> Field {
        let spec = self.spectrum();
        let n = self.grid.n as f64;
        Field::from_fn(target, |t| {
            let mut acc = 0.0;
            for (k, c) in spec.iter().enumerate() {
                let w = self.grid.frequency(k);
                let coef = c / n;
                let phase = w * (t + PI);
                if k == self.grid.n / 2 {
                    acc += coef.re * phase.cos();
                } else {
                    acc += coef.re * phase.cos() - coef.im * phase.sin();
                }
            }
            acc
        })
    }
}

/// `spacing * sum_j f_j g_j`.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    check(&f.grid, &g.grid)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(f.grid.spacing * s)
}

/// Circular convolution `(J * f)(theta_j) = h sum_k J(theta_j - theta_k) f_k`.
pub fn convolve(kernel: &Field, f: &Field) -> Result<Field> {
    check(&kernel.grid, &f.grid)?;
    let grid = &f.grid;
    let kh = kernel.spectrum();
    let mut fh = f.spectrum();
    let h = grid.spacing;
    for (k, (a, b)) in fh.iter_mut().zip(&kh).enumerate() {
        // The kernel is sampled from -pi, so its lag-0 value sits at index n/2.
        let sign = if k % 2 == 0 { h } else { -h };
        *a *= b * sign;
    }
    Ok(Field::from_spectrum(grid, fh))
}

/// Direct O(n^2) convolution, kept as a reference implementation.
pub fn convolve_direct(kernel: &Field, f: &Field) -> Result<Field> {
    check(&kernel.grid, &f.grid)?;
    let n = f.grid.n;
    let h = f.grid.spacing;
    let out = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| kernel.values[(j + n - k + n / 2) % n] * f.values[k])
                .sum::<f64>()
                * h
        })
        .collect();
    Ok(Field::raw(&f.grid, out))
}

/// Spectral derivative of order 1 or 2. The Nyquist mode is dropped in both
/// cases so that the second derivative is the first applied twice.
pub fn differentiate(f: &Field, order: u32) -> Field {
    let grid = &f.grid;
    let n = grid.n;
    let mut spec = f.spectrum();
    for (k, c) in spec.iter_mut().enumerate() {
        let w = grid.frequency(k);
        *c = match order {
            0 => *c,
            1 | 2 if k == n / 2 => Complex64::new(0.0, 0.0),
            1 => *c * Complex64::new(0.0, w),
            2 => *c * (-w * w),
            _ => panic!("differentiate supports order 1 or 2"),
        };
    }
    Field::from_spectrum(grid, spec)
}

/// Fourier phase-shift translation `(T_s f)(theta) = f(theta - s)`.
///
/// The Nyquist coefficient is left untouched, which keeps the operator an
/// exact isometry and a group in `s`.
pub fn translate(f: &Field, shift: f64) -> Field {
    if shift == 0.0 {
        return f.clone();
    }
    let grid = &f.grid;
    let mut spec = f.spectrum();
    shift_spectrum(grid, &mut spec, shift);
    Field::from_spectrum(grid, spec)
}

pub(crate) fn shift_spectrum(grid: &Grid, spec: &mut [Complex64], shift: f64) {
    let n = grid.n;
    for (k, c) in spec.iter_mut().enumerate() {
        if k == n / 2 || k == 0 {
            continue;
        }
        let w = grid.frequency(k);
        *c *= Complex64::from_polar(1.0, -w * shift);
    }
}

/// Cached spectrum of a fixed field, for fast pairings against its translates.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(f: &Field) -> Spectrum {
        Spectrum { grid: f.grid.clone(), coeffs: f.spectrum() }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `<u, T_beta psi>` and its first two `beta`-derivatives, where `u_hat`
    /// is the spectrum of `u` and `self` holds `psi`.
    pub fn pair_translated(&self, u_hat: &[Complex64], beta: f64) -> [f64; 3] {
        let n = self.grid.n;
        let mut acc = [0.0; 3];
        for k in 0..n {
            let p = u_hat[k] * self.coeffs[k].conj();
            if k == 0 || k == n / 2 {
                acc[0] += p.re;
                continue;
            }
            let w = self.grid.frequency(k);
            let z = p * Complex64::from_polar(1.0, w * beta);
            acc[0] += z.re;
            acc[1] -= w * z.im;
            acc[2] -= w * w * z.re;
        }
        let s = self.grid.spacing / n as f64;
        [acc[0] * s, acc[1] * s, acc[2] * s]
    }

    /// `||u - T_beta f||` for the stored `f`, given the spectrum of `u`.
    pub fn distance_to_translate(&self, u_hat: &[Complex64], beta: f64) -> f64 {
        let n = self.grid.n;
        let mut acc = 0.0;
        for k in 0..n {
            let f = if k == 0 || k == n / 2 {
                self.coeffs[k]
            } else {
                self.coeffs[k] * Complex64::from_polar(1.0, -self.grid.frequency(k) * beta)
            };
            acc += (u_hat[k] - f).norm_sqr();
        }
        (acc * self.grid.spacing / n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::new(n).unwrap()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(15).is_err());
        assert!(Grid::new(8).is_err());
        assert!(Grid::new(17).is_err());
    }

    #[test]
    fn node_layout() {
        let g = grid(32);
        assert_eq!(g.nodes()[0], -PI);
        assert!(g.nodes()[g.origin_index()].abs() < 1e-15);
    }

    #[test]
    fn cos_cos_is_pi() {
        for n in [16, 32, 64] {
            let g = grid(n);
            let c = Field::from_fn(&g, f64::cos);
            assert!((c.dot(&c) - PI).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_inner_product() {
        let g = grid(32);
        let z = Field::zeros(&g);
        let s = Field::from_fn(&g, |t| (3.0 * t).sin() + 1.0);
        assert_eq!(inner_product(&z, &s).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grids_error() {
        let a = Field::zeros(&grid(16));
        let b = Field::zeros(&grid(32));
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch { .. })));
        assert!(convolve(&a, &b).is_err());
    }

    #[test]
    fn delta_kernel_is_identity() {
        let g = grid(32);
        let mut k = Field::zeros(&g);
        k.values_mut()[g.origin_index()] = 1.0 / g.spacing();
        let f = Field::from_fn(&g, |t| (t.sin() * 2.0).exp());
        let out = convolve(&k, &f).unwrap();
        assert!(out.sub(&f).max_abs() < 1e-13);
    }

    #[test]
    fn cos_convolution() {
        let g = grid(64);
        let c = Field::from_fn(&g, f64::cos);
        let out = convolve(&c, &c).unwrap();
        assert!(out.sub(&c.scale(PI)).max_abs() < 1e-12);
        let zero = convolve(&Field::zeros(&g), &c).unwrap();
        assert!(zero.max_abs() < 1e-15);
    }

    #[test]
    fn derivative_of_modes() {
        let g = grid(32);
        let s = Field::from_fn(&g, f64::sin);
        let d = differentiate(&s, 1);
        assert!(d.sub(&Field::from_fn(&g, f64::cos)).max_abs() < 1e-12);
        let d2 = differentiate(&s, 2);
        assert!(d2.add(&s).max_abs() < 1e-12);
        assert!(differentiate(&Field::constant(&g, 3.0), 1).max_abs() < 1e-14);
    }

    #[test]
    fn translate_modes() {
        let g = grid(32);
        let c = Field::from_fn(&g, f64::cos);
        let t = translate(&c, PI / 2.0);
        assert!(t.sub(&Field::from_fn(&g, |x| (x - PI / 2.0).cos())).max_abs() < 1e-13);
        assert_eq!(translate(&c, 0.0), c);
        assert!(translate(&c, 2.0 * PI).sub(&c).max_abs() < 1e-12);
    }

    #[test]
    fn reflect_maps_theta_to_minus_theta() {
        let g = grid(16);
        let f = Field::from_fn(&g, |t| t.sin() + 0.3 * (2.0 * t).cos());
        let r = f.reflect();
        let expect = Field::from_fn(&g, |t| -t.sin() + 0.3 * (2.0 * t).cos());
        assert!(r.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn resample_band_limited() {
        let f = Field::from_fn(&grid(32), |t| (2.0 * t).sin() + 0.5 * t.cos());
        let g2 = grid(64);
        let r = f.resample(&g2);
        let expect = Field::from_fn(&g2, |t| (2.0 * t).sin() + 0.5 * t.cos());
        assert!(r.sub(&expect).max_abs() < 1e-13);
    }

    #[test]
    fn translated_pairing_matches_explicit() {
        let g = grid(32);
        let u = Field::from_fn(&g, |t| (t.cos() * 1.5).exp());
        let psi = Field::from_fn(&g, |t| t.sin() * (t.cos()).exp());
        let spec = Spectrum::of(&psi);
        let uh = u.spectrum();
        for beta in [0.0, 0.4, -2.1] {
            let [p, dp, d2p] = spec.pair_translated(&uh, beta);
            assert!((p - u.dot(&translate(&psi, beta))).abs() < 1e-12);
            let dpsi = differentiate(&psi, 1);
            assert!((dp + u.dot(&translate(&dpsi, beta))).abs() < 1e-12);
            let d2psi = differentiate(&psi, 2);
            assert!((d2p - u.dot(&translate(&d2psi, beta))).abs() < 1e-11);
        }
    }
}
