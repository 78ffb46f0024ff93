//! The neural-field ring model `du = [-u + J * F(u)] dt`, its bump solutions
//! and the manifold atlas built from them.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{differentiate, shift_spectrum, translate, Field, Grid};
use crate::manifold::{Dynamics, Frame, PhaseManifold};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingModelParams {
    /// Cosine-series coefficients `J_0..J_N` of the connectivity.
    pub j_coeffs: Vec<f64>,
    /// Sigmoid gain.
    pub gain: f64,
    /// Sigmoid threshold.
    pub threshold: f64,
    #[serde(default = "one")]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RingModelParams {
    fn default() -> Self {
        RingModelParams { j_coeffs: vec![-1.0, 2.5], gain: 2.0, threshold: 0.5, tau: 1.0 }
    }
}

impl RingModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.j_coeffs.is_empty() {
            return Err(Error::InvalidParameter("j_coeffs must not be empty".into()));
        }
        if self.j_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("j_coeffs must be finite".into()));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidParameter(format!("gain must be positive, got {}", self.gain)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if self.tau != 1.0 {
            return Err(Error::InvalidParameter("tau is fixed to 1".into()));
        }
        Ok(())
    }

    /// `J(theta) = sum_n J_n cos(n theta)`.
    pub fn kernel(&self, theta: f64) -> f64 {
        self.j_coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 * theta).cos()).sum()
    }

    pub fn sigmoid(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-self.gain * (x - self.threshold)).exp())
    }

    /// `F, F', F'', F'''` at `x`.
    pub fn sigmoid_derivs(&self, x: f64) -> [f64; 4] {
        let g = self.gain;
        let f = self.sigmoid(x);
        let q = f * (1.0 - f);
        [f, g * q, g * g * q * (1.0 - 2.0 * f), g * g * g * q * (1.0 - 6.0 * f + 6.0 * f * f)]
    }
}

/// The ring model discretized on a grid, with the convolution multiplier cached.
#[derive(Clone, Debug)]
pub struct RingModel {
    params: RingModelParams,
    grid: Arc<Grid>,
    kernel: Field,
    multiplier: Vec<Complex64>,
}

impl RingModel {
    pub fn new(params: &RingModelParams, grid: &Arc<Grid>) -> Result<RingModel> {
        params.validate()?;
        if params.j_coeffs.len() > grid.n_points() / 2 {
            return Err(Error::InvalidParameter(format!(
                "{} connectivity modes are not resolved on {} points",
                params.j_coeffs.len(),
                grid.n_points()
            )));
        }
        let kernel = Field::from_fn(grid, |t| params.kernel(t));
        let h = grid.spacing();
        let multiplier = kernel
            .spectrum()
            .into_iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 0 { c * h } else { -c * h })
            .collect();
        Ok(RingModel { params: params.clone(), grid: grid.clone(), kernel, multiplier })
    }

    pub fn params(&self) -> &RingModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &Field {
        &self.kernel
    }

    /// `J * f`.
    pub fn conv(&self, f: &Field) -> Field {
        let mut spec = f.spectrum();
        for (a, m) in spec.iter_mut().zip(&self.multiplier) {
            *a *= m;
        }
        Field::from_spectrum(&self.grid, spec)
    }

    /// `f(u) = J * F(u)`.
    pub fn nonlinear_part(&self, u: &Field) -> Field {
        self.conv(&self.firing_rate(u))
    }

    pub fn firing_rate(&self, u: &Field) -> Field {
        u.map(|x| self.params.sigmoid(x))
    }

    /// `F^{(order)}(u)` pointwise.
    pub fn sigmoid_deriv(&self, u: &Field, order: usize) -> Field {
        u.map(|x| self.params.sigmoid_derivs(x)[order])
    }

    /// `-u + J * F(u)`.
    pub fn drift(&self, u: &Field) -> Field {
        self.conv(&self.firing_rate(u)).sub(u)
    }

    /// `-w + J * (F'(u) w)`.
    pub fn linearize(&self, u: &Field, w: &Field) -> Field {
        self.conv(&self.sigmoid_deriv(u, 1).mul(w)).sub(w)
    }

    /// `-w + F'(u) (J * w)`, the adjoint of [`linearize`](Self::linearize).
    pub fn linearize_adjoint(&self, u: &Field, w: &Field) -> Field {
        self.sigmoid_deriv(u, 1).mul(&self.conv(w)).sub(w)
    }

    /// `D^2 f(u) w w = J * (F''(u) w^2)`.
    pub fn second_derivative(&self, u: &Field, w: &Field) -> Field {
        self.d2_nonlinear(u, w, w)
    }

    /// `D^3 f(u) w w w = J * (F'''(u) w^3)`.
    pub fn third_derivative(&self, u: &Field, w: &Field) -> Field {
        let d3 = self.sigmoid_deriv(u, 3);
        self.conv(&d3.zip(w, |a, b| a * b * b * b))
    }

    /// Dense matrix of `u -> J * u` on the grid.
    pub fn conv_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.n_points();
        let h = self.grid.spacing();
        DMatrix::from_fn(n, n, |j, k| h * self.params.kernel((j as f64 - k as f64) * h))
    }

    /// Eigenvalues of the linearization at `u`, descending.
    ///
    /// `J * (F'(u) .)` is similar to the symmetric `D^{1/2} C D^{1/2}` with
    /// `D = diag(F'(u))`, so the spectrum is real and a symmetric solver applies.
    pub fn linearization_spectrum(&self, u: &Field) -> Vec<f64> {
        let n = self.grid.n_points();
        let sq: Vec<f64> = self.sigmoid_deriv(u, 1).values().iter().map(|d| d.max(0.0).sqrt()).collect();
        let c = self.conv_matrix();
        let s = DMatrix::from_fn(n, n, |j, k| sq[j] * c[(j, k)] * sq[k]);
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().map(|l| l - 1.0).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Dense matrix of the linearization at `u`.
    pub fn linearization_matrix(&self, u: &Field) -> DMatrix<f64> {
        let n = self.grid.n_points();
        let d = self.sigmoid_deriv(u, 1);
        let mut m = self.conv_matrix();
        for k in 0..n {
            let s = d.values()[k];
            for j in 0..n {
                m[(j, k)] *= s;
            }
        }
        m - DMatrix::identity(n, n)
    }
}

impl Dynamics for RingModel {
    fn linear(&self, u: &Field) -> Field {
        u.scale(-1.0)
    }

    fn linear_adjoint(&self, w: &Field) -> Field {
        w.scale(-1.0)
    }

    fn nonlinear(&self, u: &Field) -> Field {
        self.conv(&self.firing_rate(u))
    }

    fn d_nonlinear(&self, u: &Field, w: &Field) -> Field {
        self.conv(&self.sigmoid_deriv(u, 1).mul(w))
    }

    fn d_nonlinear_adjoint(&self, u: &Field, w: &Field) -> Field {
        self.sigmoid_deriv(u, 1).mul(&self.conv(w))
    }

    fn d2_nonlinear(&self, u: &Field, w1: &Field, w2: &Field) -> Field {
        let d2 = self.sigmoid_deriv(u, 2);
        let prod: Vec<f64> =
            (0..w1.values().len()).map(|j| d2.values()[j] * w1.values()[j] * w2.values()[j]).collect();
        self.conv(&Field::raw(&self.grid, prod))
    }

    fn drift(&self, u: &Field) -> Field {
        RingModel::drift(self, u)
    }
}

/// `-u + J * F(u)`.
pub fn drift(params: &RingModelParams, u: &Field) -> Result<Field> {
    Ok(RingModel::new(params, u.grid())?.drift(u))
}

/// `-w + J * (F'(u) w)`.
pub fn linearize(params: &RingModelParams, u: &Field, w: &Field) -> Result<Field> {
    Ok(RingModel::new(params, u.grid())?.linearize(u, w))
}

const NEWTON_MAX_ITER: usize = 200;
const BUMP_TOL: f64 = 1e-13;

/// Newton iterations on `drift(u) = 0` with the gauge `<u, sin> = 0`,
/// bordered so the Jacobian stays nonsingular along the neutral direction.
fn newton_bump(model: &RingModel, mut u: Field, max_iter: usize) -> Result<(Field, usize)> {
    let grid = model.grid().clone();
    let n = grid.n_points();
    let h = grid.spacing();
    let sin = Field::from_fn(&grid, f64::sin);
    let mut res = model.drift(&u).norm();
    for it in 0..max_iter {
        let gauge = sin.dot(&u);
        if res < BUMP_TOL && gauge.abs() < BUMP_TOL {
            return Ok((u, it));
        }
        let l = model.linearization_matrix(&u);
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&l);
        for j in 0..n {
            a[(j, n)] = sin.values()[j];
            a[(n, j)] = h * sin.values()[j];
        }
        let r = model.drift(&u);
        let mut rhs = DVector::zeros(n + 1);
        for j in 0..n {
            rhs[j] = -r.values()[j];
        }
        rhs[n] = -gauge;
        let sol = a.lu().solve(&rhs).ok_or(Error::NoBump { iterations: it, residual: res })?;
        let du = Field::raw(&grid, sol.rows(0, n).iter().copied().collect());
        // Backtracking on the residual norm.
        let mut step = 1.0;
        loop {
            let trial = u.axpy(step, &du);
            let tres = model.drift(&trial).norm();
            if tres < res || step < 1e-4 {
                u = trial;
                res = tres;
                break;
            }
            step *= 0.5;
        }
        if !u.is_finite() {
            return Err(Error::NoBump { iterations: it, residual: f64::NAN });
        }
    }
    if res < 1e-10 {
        return Ok((u, max_iter));
    }
    Err(Error::NoBump { iterations: max_iter, residual: res })
}

/// Stationary bump `U` with its maximum at `theta = 0` and `U(theta) = U(-theta)`.
pub fn solve_bump(params: &RingModelParams, grid: &Arc<Grid>) -> Result<Field> {
    let model = RingModel::new(params, grid)?;
    let amp = params.j_coeffs.get(1).map_or(1.0, |c| c.abs().max(1.0));
    let mut u = Field::from_fn(grid, |t| params.threshold + amp * t.cos());
    // A few relaxation sweeps bring the guess near the attracting branch.
    for _ in 0..50 {
        u = u.scale(0.8).axpy(0.2, &model.nonlinear(&u));
    }
    let (u, _) = newton_bump(&model, u, NEWTON_MAX_ITER)?;
    let (lo, hi) = u.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    if hi - lo < 1e-8 * (1.0 + hi.abs()) {
        return Err(Error::TrivialState);
    }
    let cos = Field::from_fn(grid, f64::cos);
    let sin = Field::from_fn(grid, f64::sin);
    let centre = sin.dot(&u).atan2(cos.dot(&u));
    let u = translate(&u, -centre);
    let u = u.add(&u.reflect()).scale(0.5);
    let (u, _) = newton_bump(&model, u, 20)?;
    let u = u.add(&u.reflect()).scale(0.5);
    let res = model.drift(&u).norm();
    if res >= 1e-10 {
        return Err(Error::NoBump { iterations: NEWTON_MAX_ITER, residual: res });
    }
    Ok(u)
}

/// Bump manifold `phi_alpha = T_alpha U` with adjoint null vectors and gap constants.
#[derive(Clone, Debug)]
pub struct ManifoldAtlas {
    pub params: RingModelParams,
    /// `phi_0 = U`.
    pub profile: Field,
    /// `phi_{0,1} = -U'`.
    pub profile_deriv: Field,
    /// `phi_{0,11} = U''`.
    pub profile_deriv2: Field,
    /// `psi_0`, normalized so `<psi_0, phi_{0,1}> = 1`.
    pub adjoint: Field,
    /// `psi_{0,1} = -psi_0'`.
    pub adjoint_deriv: Field,
    /// `psi_{0,11} = psi_0''`.
    pub adjoint_deriv2: Field,
    pub gap_b: f64,
    pub gap_c: f64,
    /// Real parts of the spectrum of the linearization, sorted descending.
    pub spectrum: Vec<f64>,
    spectra: [Vec<Complex64>; 6],
}

impl ManifoldAtlas {
    pub fn grid(&self) -> &Arc<Grid> {
        self.profile.grid()
    }

    /// Spectra of `phi, phi_1, phi_11, psi, psi_1, psi_11` at `alpha = 0`.
    pub fn spectra(&self) -> &[Vec<Complex64>; 6] {
        &self.spectra
    }

    fn shifted(&self, idx: usize, alpha: f64) -> Field {
        if alpha == 0.0 {
            return [
                &self.profile,
                &self.profile_deriv,
                &self.profile_deriv2,
                &self.adjoint,
                &self.adjoint_deriv,
                &self.adjoint_deriv2,
            ][idx]
                .clone();
        }
        let mut s = self.spectra[idx].clone();
        shift_spectrum(self.grid(), &mut s, alpha);
        Field::from_spectrum(self.grid(), s)
    }

    /// `(phi_a, phi_{a,1}, phi_{a,11}, psi_a, psi_{a,1}, psi_{a,11})`.
    pub fn at(&self, alpha: f64) -> AtlasPoint {
        AtlasPoint {
            phi: self.shifted(0, alpha),
            phi_d: self.shifted(1, alpha),
            phi_dd: self.shifted(2, alpha),
            psi: self.shifted(3, alpha),
            psi_d: self.shifted(4, alpha),
            psi_dd: self.shifted(5, alpha),
        }
    }

    /// Radius `(2 m ||psi'||)^{-1}` inside which `M` stays invertible.
    pub fn kappa_bar(&self) -> f64 {
        1.0 / (2.0 * self.adjoint_deriv.norm())
    }

    pub fn model(&self) -> RingModel {
        RingModel::new(&self.params, self.grid()).expect("atlas parameters were validated")
    }
}

/// The six atlas fields translated to one phase.
#[derive(Clone, Debug)]
pub struct AtlasPoint {
    pub phi: Field,
    pub phi_d: Field,
    pub phi_dd: Field,
    pub psi: Field,
    pub psi_d: Field,
    pub psi_dd: Field,
}

impl From<AtlasPoint> for Frame {
    fn from(p: AtlasPoint) -> Frame {
        Frame {
            dim: 1,
            phi: p.phi,
            phi_d: vec![p.phi_d],
            phi_dd: vec![p.phi_dd],
            psi: vec![p.psi],
            psi_d: vec![p.psi_d],
            psi_dd: vec![p.psi_dd],
        }
    }
}

impl PhaseManifold for ManifoldAtlas {
    fn dim(&self) -> usize {
        1
    }

    fn frame(&self, alpha: &[f64]) -> Frame {
        self.at(alpha[0]).into()
    }

    fn point(&self, alpha: &[f64]) -> Field {
        self.shifted(0, alpha[0])
    }
}

/// All six atlas fields at phase `alpha`.
pub fn atlas_at(atlas: &ManifoldAtlas, alpha: f64) -> AtlasPoint {
    atlas.at(alpha)
}

const NULL_TOL: f64 = 1e-4;

/// Null vector of `L*` by inverse iteration, normalized against `phi_{0,1}`.
fn adjoint_null_vector(model: &RingModel, bump: &Field, tangent: &Field) -> Result<Field> {
    let grid = bump.grid();
    let lt = model.linearization_matrix(bump).transpose();
    let n = grid.n_points();
    let mut shift = 0.0;
    let lu = loop {
        let m = &lt - DMatrix::identity(n, n) * shift;
        let lu = m.lu();
        if lu.is_invertible() {
            break lu;
        }
        shift = if shift == 0.0 { 1e-12 } else { shift * 10.0 };
    };
    let mut w = DVector::from_column_slice(tangent.values());
    w /= w.norm();
    for _ in 0..50 {
        let next = lu.solve(&w).ok_or(Error::SpectralAssumption { near_zero: 0 })?;
        w = &next / next.norm();
        let resid = (&lt * &w).norm();
        if resid < 1e-12 {
            break;
        }
    }
    let psi = Field::raw(grid, w.iter().copied().collect());
    let pairing = psi.dot(tangent);
    Ok(psi.scale(1.0 / pairing))
}

/// Builds the atlas at the bump: tangents, adjoint null vector, gap constants.
pub fn build_atlas(params: &RingModelParams, bump: &Field) -> Result<ManifoldAtlas> {
    let model = RingModel::new(params, bump.grid())?;
    let profile = bump.clone();
    let profile_deriv = differentiate(&profile, 1).scale(-1.0);
    let profile_deriv2 = differentiate(&profile, 2);

    let spectrum = model.linearization_spectrum(bump);
    let near_zero = spectrum.iter().filter(|l| l.abs() < NULL_TOL).count();
    if near_zero != 1 {
        return Err(Error::SpectralAssumption { near_zero });
    }
    let gap_b = -spectrum[1];
    if gap_b <= 0.0 {
        return Err(Error::StabilityAssumption(format!("second eigenvalue {:.3e} >= 0", -gap_b)));
    }

    let adjoint = adjoint_null_vector(&model, bump, &profile_deriv)?;
    let adjoint_deriv = differentiate(&adjoint, 1).scale(-1.0);
    let adjoint_deriv2 = differentiate(&adjoint, 2);
    let spectra = [
        profile.spectrum(),
        profile_deriv.spectrum(),
        profile_deriv2.spectrum(),
        adjoint.spectrum(),
        adjoint_deriv.spectrum(),
        adjoint_deriv2.spectrum(),
    ];
    let mut atlas = ManifoldAtlas {
        params: params.clone(),
        profile,
        profile_deriv,
        profile_deriv2,
        adjoint,
        adjoint_deriv,
        adjoint_deriv2,
        gap_b,
        gap_c: 1.0,
        spectrum,
        spectra,
    };
    atlas.gap_c = semigroup_decay(&atlas, &model)?.c_est;
    Ok(atlas)
}

/// Measured decay of the projected linearized semigroup.
#[derive(Clone, Debug)]
pub struct SemigroupDecay {
    pub b_est: f64,
    pub c_est: f64,
    pub times: Vec<f64>,
    /// Operator norm of `V(t) = exp(tL) (I - P)` at each time.
    pub norms: Vec<f64>,
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub(crate) fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

const DECAY_STEP: f64 = 0.5;

fn semigroup_decay(atlas: &ManifoldAtlas, model: &RingModel) -> Result<SemigroupDecay> {
    let grid = atlas.grid();
    let n = grid.n_points();
    let h = grid.spacing();
    let lmat = model.linearization_matrix(&atlas.profile);
    let mut proj = DMatrix::identity(n, n);
    for j in 0..n {
        for k in 0..n {
            proj[(j, k)] -= atlas.profile_deriv.values()[j] * h * atlas.adjoint.values()[k];
        }
    }
    let step = expm(&(&lmat * DECAY_STEP));
    let mut v = proj;
    let sigma_max = |m: &DMatrix<f64>| SymmetricEigen::new(m.transpose() * m).eigenvalues.max().max(0.0).sqrt();
    let mut times = vec![0.0];
    let mut norms = vec![sigma_max(&v)];
    let mut t = 0.0;
    while t < 400.0 {
        v = &step * &v;
        t += DECAY_STEP;
        let s = sigma_max(&v);
        times.push(t);
        norms.push(s);
        if s < 1e-9 * norms[0] {
            break;
        }
    }
    let last = *norms.last().unwrap();
    if last > 0.5 * norms[0] {
        return Err(Error::StabilityAssumption(format!(
            "projected semigroup does not decay (||V(t)|| = {last:.3e} at t = {t})"
        )));
    }
    // Least-squares slope of log ||V(t)|| over the second half of the record.
    let start = times.len() / 2;
    let xs = &times[start..];
    let ys: Vec<f64> = norms[start..].iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b_est = -sxy / sxx;
    if b_est <= 0.0 {
        return Err(Error::StabilityAssumption(format!("fitted decay rate {b_est:.3e} <= 0")));
    }
    let c_est = times
        .iter()
        .zip(&norms)
        .map(|(t, s)| s * (b_est * t).exp())
        .fold(1.0f64, f64::max);
    Ok(SemigroupDecay { b_est, c_est, times, norms })
}

/// Fitted decay rate and prefactor of `||exp(tL)(I - P)|| <= c exp(-bt)`.
pub fn estimate_semigroup_bound(
    atlas: &ManifoldAtlas,
    params: &RingModelParams,
) -> Result<(f64, f64)> {
    let d = estimate_semigroup_decay(atlas, params)?;
    Ok((d.b_est, d.c_est))
}

pub fn estimate_semigroup_decay(
    atlas: &ManifoldAtlas,
    params: &RingModelParams,
) -> Result<SemigroupDecay> {
    let model = RingModel::new(params, atlas.grid())?;
    semigroup_decay(atlas, &model)
}

/// Fourier coefficients `a_k = <u, cos k.>/pi` of a field, used in diagnostics.
pub fn cosine_coefficient(u: &Field, k: usize) -> f64 {
    let c = Field::from_fn(u.grid(), |t| (k as f64 * t).cos());
    let norm = if k == 0 { 2.0 * PI } else { PI };
    u.dot(&c) / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (RingModelParams, ManifoldAtlas) {
        let p = RingModelParams::default();
        let g = Grid::new(n).unwrap();
        let u = solve_bump(&p, &g).unwrap();
        let a = build_atlas(&p, &u).unwrap();
        (p, a)
    }

    #[test]
    fn sigmoid_derivatives_match_finite_differences() {
        let p = RingModelParams::default();
        let h = 1e-5;
        for x in [-1.0, 0.2, 0.5, 1.7] {
            let d = p.sigmoid_derivs(x);
            let up = p.sigmoid_derivs(x + h);
            let dn = p.sigmoid_derivs(x - h);
            for k in 0..3 {
                let fd = (up[k] - dn[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-8, "order {k} at {x}");
            }
        }
    }

    #[test]
    fn saturated_sigmoid_drift_is_tiny() {
        let p = RingModelParams { threshold: 20.0, ..Default::default() };
        let g = Grid::new(32).unwrap();
        let d = drift(&p, &Field::zeros(&g)).unwrap();
        let j1: f64 = p.j_coeffs.iter().map(|c| c.abs()).sum::<f64>() * 2.0 * PI;
        assert!(d.norm() < j1 * 1e-8);
    }

    #[test]
    fn constant_kernel_gives_trivial_state() {
        let p = RingModelParams { j_coeffs: vec![1.5], ..Default::default() };
        let g = Grid::new(32).unwrap();
        assert_eq!(solve_bump(&p, &g), Err(Error::TrivialState));
    }

    #[test]
    fn bump_is_centred_even_and_stationary() {
        let (p, a) = setup(64);
        let u = &a.profile;
        let model = RingModel::new(&p, u.grid()).unwrap();
        assert!(model.drift(u).norm() < 1e-10);
        let imax = (0..64).max_by(|&i, &j| u.values()[i].total_cmp(&u.values()[j])).unwrap();
        assert_eq!(imax, 32);
        assert!(u.sub(&u.reflect()).max_abs() < 1e-14);
    }

    #[test]
    fn adjoint_is_odd_null_vector_normalized() {
        let (p, a) = setup(64);
        let model = RingModel::new(&p, a.grid()).unwrap();
        assert!((a.adjoint.dot(&a.profile_deriv) - 1.0).abs() < 1e-12);
        assert!(model.linearize_adjoint(&a.profile, &a.adjoint).norm() < 1e-8);
        assert!(a.adjoint.add(&a.adjoint.reflect()).max_abs() < 1e-8);
    }

    #[test]
    fn adjoint_matches_closed_form_direction() {
        // F'(U) U' spans the kernel of L* for an even convolution kernel.
        let (p, a) = setup(64);
        let model = RingModel::new(&p, a.grid()).unwrap();
        let w = model.sigmoid_deriv(&a.profile, 1).mul(&a.profile_deriv);
        let w = w.scale(1.0 / w.dot(&a.profile_deriv));
        assert!(w.sub(&a.adjoint).max_abs() < 1e-9);
    }

    #[test]
    fn atlas_translation_keeps_pairing() {
        let (_, a) = setup(64);
        let pt = a.at(1.3);
        assert!((pt.psi.dot(&pt.phi_d) - 1.0).abs() < 1e-12);
        let z = a.at(2.0 * PI);
        assert!(z.phi.sub(&a.profile).max_abs() < 1e-12);
        assert!(z.psi_dd.sub(&a.adjoint_deriv2).max_abs() < 1e-10);
    }

    #[test]
    fn expm_of_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 0.5, 1.0]));
        let e = expm(&d);
        for (i, l) in [-3.0f64, 0.5, 1.0].iter().enumerate() {
            assert!((e[(i, i)] - l.exp()).abs() < 1e-13 * l.exp().max(1.0));
        }
    }
}
