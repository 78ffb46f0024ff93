//! Trace-class spatial noise `B(u) dW` in a real Fourier basis, with
//! reproducible Wiener increments.
//!
//! Basis index `j = 0` is the constant `1/sqrt(2 pi)`, `j = 2k - 1` is
//! `cos(k theta)/sqrt(pi)` and `j = 2k` is `sin(k theta)/sqrt(pi)`. Both
//! members of a pair share the amplitude `b_k`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    #[default]
    None,
    /// `g(u) = s / (1 + exp(-r (u - c)))` with params `[s, r, c]`.
    Sigmoid,
    /// `g(u) = a + c u` with params `[a, c]`.
    Affine,
}

/// A fixed spatial profile `w(theta) = 1 + sum_k (c_k cos k theta + s_k sin k theta)`
/// multiplying the noise. It does not move with the pattern, so it pins the phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Window {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl Window {
    pub fn eval(&self, theta: f64) -> f64 {
        let c: f64 = self.cos.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * theta).cos()).sum();
        let s: f64 = self.sin.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * theta).sin()).sum();
        1.0 + c + s
    }

    pub fn is_trivial(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|v| *v == 0.0)
    }

    fn max_mode(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }
}

/// Serializable description of the noise operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Amplitudes `b_0..b_K`.
    pub mode_amps: Vec<f64>,
    #[serde(default)]
    pub gain: GainKind,
    #[serde(default)]
    pub gain_params: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mode_amps: (0..=20).map(|k| (-0.1 * (k * k) as f64).exp()).collect(),
            gain: GainKind::None,
            gain_params: Vec::new(),
            seed: 0,
            window: None,
        }
    }
}

impl NoiseSpec {
    pub fn isotropic(mode_amps: Vec<f64>) -> NoiseSpec {
        NoiseSpec { mode_amps, ..Default::default() }
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.mode_amps.is_empty() {
            return Err(Error::InvalidParameter("mode_amps must not be empty".into()));
        }
        if self.mode_amps.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("mode_amps must be finite".into()));
        }
        let k_max = self.mode_amps.len() - 1;
        if k_max + 1 > n_points / 2 {
            return Err(Error::InvalidParameter(format!(
                "noise mode {k_max} exceeds the resolvable limit {} for {n_points} points",
                n_points / 2 - 1
            )));
        }
        if let Some(w) = &self.window {
            if w.cos.iter().chain(&w.sin).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("window coefficients must be finite".into()));
            }
            if w.max_mode() + 1 > n_points / 2 {
                return Err(Error::InvalidParameter("window has unresolved modes".into()));
            }
        }
        let need = match self.gain {
            GainKind::None => 0,
            GainKind::Sigmoid => 3,
            GainKind::Affine => 2,
        };
        if self.gain_params.len() != need {
            return Err(Error::InvalidParameter(format!(
                "gain {:?} takes {need} parameters, got {}",
                self.gain,
                self.gain_params.len()
            )));
        }
        if self.gain_params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("gain_params must be finite".into()));
        }
        Ok(())
    }

    /// True when the law of the noise commutes with translations. A pointwise
    /// gain keeps this property; only a window breaks it.
    pub fn is_isotropic(&self) -> bool {
        self.window.as_ref().is_none_or(Window::is_trivial)
    }
}

/// Noise operator discretized on a grid.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    spec: NoiseSpec,
    grid: Arc<Grid>,
    /// Row `j` holds `b_j w(theta) e_j(theta)` sampled on the grid.
    rows: Vec<Vec<f64>>,
}

/// One increment `xi_j ~ N(0, dt)` per basis mode.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerIncrement {
    pub coeffs: Vec<f64>,
}

/// Words reserved per step in the counter-based stream.
const STEP_STRIDE: u128 = 1 << 14;

impl WienerIncrement {
    /// The increment for `(seed, trajectory, step)`; independent of call order.
    pub fn draw(seed: u64, trajectory: u64, step: u64, dt: f64, dim: usize) -> WienerIncrement {
        let mut out = vec![0.0; dim];
        Self::draw_into(seed, trajectory, step, dt, &mut out);
        WienerIncrement { coeffs: out }
    }

    pub fn draw_into(seed: u64, trajectory: u64, step: u64, dt: f64, out: &mut [f64]) {
        assert!(out.len() <= 1024, "increment dimension too large for the stream layout");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        rng.set_word_pos(step as u128 * STEP_STRIDE);
        let s = dt.sqrt();
        for x in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = s * z;
        }
    }

    pub fn zeros(dim: usize) -> WienerIncrement {
        WienerIncrement { coeffs: vec![0.0; dim] }
    }

    /// Increment whose field is the translate by `shift` of the original's,
    /// for translation-invariant spectra.
    pub fn rotated(&self, shift: f64) -> WienerIncrement {
        let mut c = self.coeffs.clone();
        let k_max = (c.len() - 1) / 2;
        for k in 1..=k_max {
            let (a, b) = (c[2 * k - 1], c[2 * k]);
            let (s, co) = (k as f64 * shift).sin_cos();
            c[2 * k - 1] = a * co - b * s;
            c[2 * k] = a * s + b * co;
        }
        WienerIncrement { coeffs: c }
    }
}

/// Value of basis function `j` at `theta`.
pub fn basis_function(j: usize, theta: f64) -> f64 {
    if j == 0 {
        return 1.0 / (2.0 * PI).sqrt();
    }
    let k = j.div_ceil(2) as f64;
    if j % 2 == 1 {
        (k * theta).cos() / PI.sqrt()
    } else {
        (k * theta).sin() / PI.sqrt()
    }
}

impl NoiseModel {
    pub fn new(spec: &NoiseSpec, grid: &Arc<Grid>) -> Result<NoiseModel> {
        spec.validate(grid.n_points())?;
        let window = spec.window.clone().unwrap_or_default();
        let win: Vec<f64> = grid.nodes().iter().map(|&t| window.eval(t)).collect();
        let dim = 2 * spec.mode_amps.len() - 1;
        let rows = (0..dim)
            .map(|j| {
                let b = spec.mode_amps[j.div_ceil(2)];
                grid.nodes().iter().zip(&win).map(|(&t, w)| b * w * basis_function(j, t)).collect()
            })
            .collect();
        Ok(NoiseModel { spec: spec.clone(), grid: grid.clone(), rows })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of basis modes `2K + 1`.
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn is_additive(&self) -> bool {
        self.spec.gain == GainKind::None
    }

    pub fn gain(&self, x: f64) -> f64 {
        let p = &self.spec.gain_params;
        match self.spec.gain {
            GainKind::None => 1.0,
            GainKind::Sigmoid => p[0] / (1.0 + (-p[1] * (x - p[2])).exp()),
            GainKind::Affine => p[0] + p[1] * x,
        }
    }

    fn gain_field(&self, u: &Field) -> Option<Vec<f64>> {
        match self.spec.gain {
            GainKind::None => None,
            _ => Some(u.values().iter().map(|&x| self.gain(x)).collect()),
        }
    }

    pub fn increment(&self, trajectory: u64, step: u64, dt: f64) -> WienerIncrement {
        WienerIncrement::draw(self.spec.seed, trajectory, step, dt, self.dim())
    }

    /// `B(u) z` for basis coordinates `z`.
    pub fn apply(&self, u: &Field, z: &[f64]) -> Field {
        let n = self.grid.n_points();
        let mut out = vec![0.0; n];
        for (row, &c) in self.rows.iter().zip(z) {
            if c == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o += c * r;
            }
        }
        if let Some(g) = self.gain_field(u) {
            for (o, gi) in out.iter_mut().zip(&g) {
                *o *= gi;
            }
        }
        Field::raw(&self.grid, out)
    }

    /// `B(u) e_j`.
    pub fn mode(&self, u: &Field, j: usize) -> Field {
        let mut vals = self.rows[j].clone();
        if let Some(g) = self.gain_field(u) {
            for (v, gi) in vals.iter_mut().zip(&g) {
                *v *= gi;
            }
        }
        Field::raw(&self.grid, vals)
    }

    /// Coordinates `<B(u) e_j, w>` for all `j`.
    pub fn adjoint_apply(&self, u: &Field, w: &Field) -> Vec<f64> {
        let h = self.grid.spacing();
        let weighted: Vec<f64> = match self.gain_field(u) {
            None => w.values().to_vec(),
            Some(g) => g.iter().zip(w.values()).map(|(a, b)| a * b).collect(),
        };
        self.rows
            .iter()
            .map(|row| h * row.iter().zip(&weighted).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Pointwise covariance `sum_j (B(u) e_j)(theta) (B(u) e_j)(theta')` as a dense matrix.
    pub fn covariance(&self, u: &Field) -> Vec<Vec<f64>> {
        let n = self.grid.n_points();
        let modes: Vec<Field> = (0..self.dim()).map(|j| self.mode(u, j)).collect();
        (0..n)
            .map(|a| (0..n).map(|b| modes.iter().map(|m| m.values()[a] * m.values()[b]).sum()).collect())
            .collect()
    }

    /// `sum_j ||B(u) e_j||^2`.
    pub fn trace(&self, u: &Field) -> f64 {
        (0..self.dim()).map(|j| self.mode(u, j).norm().powi(2)).sum()
    }
}

/// `B(u) xi`.
pub fn apply_b(noise: &NoiseModel, u: &Field, incr: &WienerIncrement) -> Field {
    noise.apply(u, &incr.coeffs)
}

/// `<B(u) e_j, w>` for `j = 0..2K`.
pub fn adjoint_apply(noise: &NoiseModel, u: &Field, w: &Field) -> Vec<f64> {
    noise.adjoint_apply(u, w)
}

/// `<B* w1, B* w2>`.
pub fn b_star_pairing(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<Grid> {
        Grid::new(32).unwrap()
    }

    #[test]
    fn zero_amplitudes_give_zero_field() {
        let g = grid();
        let m = NoiseModel::new(&NoiseSpec::isotropic(vec![0.0; 4]), &g).unwrap();
        let z = m.increment(0, 0, 0.1);
        assert_eq!(apply_b(&m, &Field::zeros(&g), &z).max_abs(), 0.0);
    }

    #[test]
    fn single_cos_mode() {
        let g = grid();
        let m = NoiseModel::new(&NoiseSpec::isotropic(vec![0.0, 0.7]), &g).unwrap();
        let mut z = WienerIncrement::zeros(m.dim());
        z.coeffs[1] = 1.0;
        let f = apply_b(&m, &Field::zeros(&g), &z);
        let expect = Field::from_fn(&g, |t| 0.7 * t.cos() / PI.sqrt());
        assert!(f.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn adjoint_of_basis_vector() {
        let g = grid();
        let amps = vec![0.3, 0.5, 0.9];
        let m = NoiseModel::new(&NoiseSpec::isotropic(amps.clone()), &g).unwrap();
        for j in 0..m.dim() {
            let e = Field::from_fn(&g, |t| basis_function(j, t));
            let c = adjoint_apply(&m, &Field::zeros(&g), &e);
            for (i, v) in c.iter().enumerate() {
                let expect = if i == j { amps[j.div_ceil(2)] } else { 0.0 };
                assert!((v - expect).abs() < 1e-13);
            }
        }
        assert!(adjoint_apply(&m, &Field::zeros(&g), &Field::zeros(&g)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = WienerIncrement::draw(7, 3, 11, 0.01, 9);
        let b = WienerIncrement::draw(7, 3, 11, 0.01, 9);
        let c = WienerIncrement::draw(7, 4, 11, 0.01, 9);
        let d = WienerIncrement::draw(7, 3, 12, 0.01, 9);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn isotropic_covariance_is_stationary() {
        let g = grid();
        let m = NoiseModel::new(&NoiseSpec::isotropic(vec![0.4, 1.0, 0.6, 0.2]), &g).unwrap();
        let c = m.covariance(&Field::zeros(&g));
        let n = g.n_points();
        for a in 0..n {
            for b in 0..n {
                let lag = (b + n - a) % n;
                assert!((c[a][b] - c[0][lag]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotated_increment_translates_field() {
        let g = grid();
        let m = NoiseModel::new(&NoiseSpec::isotropic(vec![0.4, 1.0, 0.6, 0.2]), &g).unwrap();
        let z = m.increment(1, 2, 1.0);
        let s = 0.37;
        let f = apply_b(&m, &Field::zeros(&g), &z);
        let r = apply_b(&m, &Field::zeros(&g), &z.rotated(s));
        assert!(crate::grid::translate(&f, s).sub(&r).max_abs() < 1e-13);
    }

    #[test]
    fn validation() {
        let g = grid();
        assert!(NoiseModel::new(&NoiseSpec::isotropic(vec![1.0; 17]), &g).is_err());
        assert!(NoiseModel::new(&NoiseSpec::isotropic(vec![1.0; 16]), &g).is_ok());
        let bad = NoiseSpec { gain: GainKind::Affine, gain_params: vec![1.0], ..NoiseSpec::isotropic(vec![1.0]) };
        assert!(NoiseModel::new(&bad, &g).is_err());
    }
}
