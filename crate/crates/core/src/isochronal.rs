//! Isochronal phase: the limit phase of the noise-free flow, its derivative
//! approximations on the manifold, and the effective phase-law coefficients.
//!
//! The semigroup integrals `int_0^T <psi, D^2 f(phi) (V(s) w)^2> ds` are
//! evaluated exactly in the eigenbasis of the linearization. For the ring
//! model `L = -I + C diag(F'(U))` is similar to the symmetric matrix
//! `-I + D^{1/2} C D^{1/2}`, so the propagator is available in closed form.
//! A time-stepping evaluation is kept for cross-checks and for models where
//! the similarity does not apply.

use std::f64::consts::PI;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Spectrum};
use crate::noise::NoiseModel;
use crate::ring::{AtlasPoint, ManifoldAtlas, RingModel, RingModelParams};
use crate::sim::{rk4_step, Control, Simulator, Trajectory};
use crate::variational::FastPhase;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsoOptions {
    pub iso_tol: f64,
    pub flow_dt: f64,
    /// Flow horizon; `None` means `40 / b`.
    pub t_max: Option<f64>,
    /// Advisory basin radius; `None` means `0.3 kappa_bar`.
    pub delta_basin: Option<f64>,
}

impl Default for IsoOptions {
    fn default() -> Self {
        IsoOptions { iso_tol: 1e-9, flow_dt: 1e-2, t_max: None, delta_basin: None }
    }
}

impl IsoOptions {
    pub fn t_max(&self, atlas: &ManifoldAtlas) -> f64 {
        self.t_max.unwrap_or(40.0 / atlas.gap_b)
    }

    pub fn delta_basin(&self, atlas: &ManifoldAtlas) -> f64 {
        self.delta_basin.unwrap_or(0.3 * atlas.kappa_bar())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsochronResult {
    pub gamma: f64,
    pub flow_time: f64,
    pub converged: bool,
}

/// Flow-based isochronal phase with default options.
pub fn isochronal_phase(u: &Field, atlas: &ManifoldAtlas, params: &RingModelParams) -> Result<IsochronResult> {
    Isochron::new(atlas, params)?.phase(u, None)
}

/// Reusable evaluator for `Theta`.
#[derive(Clone, Debug)]
pub struct Isochron {
    model: RingModel,
    fast: FastPhase,
    opts: IsoOptions,
    t_max: f64,
}

impl Isochron {
    pub fn new(atlas: &ManifoldAtlas, params: &RingModelParams) -> Result<Isochron> {
        Self::with_options(atlas, params, IsoOptions::default())
    }

    pub fn with_options(atlas: &ManifoldAtlas, params: &RingModelParams, opts: IsoOptions) -> Result<Isochron> {
        let t_max = opts.t_max(atlas);
        Ok(Isochron { model: RingModel::new(params, atlas.grid())?, fast: FastPhase::new(atlas), opts, t_max })
    }

    pub fn options(&self) -> &IsoOptions {
        &self.opts
    }

    /// Flows `u` with RK4 until it is within `iso_tol` of the manifold and
    /// returns the variational phase there, on the branch continuous with
    /// `guess` (or with the variational phase of `u`).
    pub fn phase(&self, u: &Field, guess: Option<f64>) -> Result<IsochronResult> {
        let mut beta = self.fast.newton(u, guess.unwrap_or(0.0))?;
        let mut u = u.clone();
        let mut t = 0.0;
        let dt = self.opts.flow_dt;
        loop {
            if self.fast.amplitude(&u, beta) < self.opts.iso_tol {
                return Ok(IsochronResult { gamma: beta, flow_time: t, converged: true });
            }
            if t >= self.t_max {
                return Err(Error::LeftBasin { t_max: self.t_max });
            }
            u = rk4_step(&self.model, &u, dt);
            t += dt;
            beta = self.fast.newton(&u, beta).map_err(|_| Error::LeftBasin { t_max: self.t_max })?;
        }
    }
}

/// `D Theta(phi_alpha) w ~ <psi_alpha, w>`.
pub fn dtheta_approx(alpha: f64, w: &Field, atlas: &ManifoldAtlas) -> f64 {
    atlas.at(alpha).psi.dot(w)
}

/// How semigroup integrals are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SemigroupMethod {
    /// Closed form in the eigenbasis of the linearization.
    Spectral,
    /// RK4 on `dv/ds = L v` with step `ds` and Simpson quadrature.
    TimeStepping { ds: f64 },
}

/// Propagated quadratic form `w -> int_0^T <psi, D^2 f(phi) (V(s) w)^2> ds`
/// at one manifold point.
pub struct QvIntegrator {
    point: AtlasPoint,
    model: RingModel,
    t_cut: f64,
    method: SemigroupMethod,
    spectral: Option<SpectralQv>,
}

struct SpectralQv {
    /// `Q^T D^{1/2}`.
    left: DMatrix<f64>,
    /// Kernel `K_ab` already multiplied by the time integral weights.
    weighted: DMatrix<f64>,
}

impl QvIntegrator {
    pub fn new(atlas: &ManifoldAtlas, alpha: f64, t_cut: f64, method: SemigroupMethod) -> Result<QvIntegrator> {
        let model = atlas.model();
        let point = atlas.at(alpha);
        let spectral = match method {
            SemigroupMethod::Spectral => Some(spectral_qv(&model, &point, t_cut)?),
            SemigroupMethod::TimeStepping { .. } => None,
        };
        Ok(QvIntegrator { point, model, t_cut, method, spectral })
    }

    pub fn point(&self) -> &AtlasPoint {
        &self.point
    }

    /// `(I - P_alpha) w`.
    pub fn project(&self, w: &Field) -> Field {
        w.axpy(-self.point.psi.dot(w), &self.point.phi_d)
    }

    pub fn integral(&self, w: &Field) -> f64 {
        let pw = self.project(w);
        match (&self.spectral, self.method) {
            (Some(s), _) => {
                let c = &s.left * DVector::from_column_slice(pw.values());
                c.dot(&(&s.weighted * &c))
            }
            (None, SemigroupMethod::TimeStepping { ds }) => self.integral_stepping(&pw, ds),
            _ => unreachable!(),
        }
    }

    fn integrand(&self, v: &Field) -> f64 {
        use crate::manifold::Dynamics;
        self.point.psi.dot(&self.model.d2_nonlinear(&self.point.phi, v, v))
    }

    fn integral_stepping(&self, v0: &Field, ds: f64) -> f64 {
        let steps = ((self.t_cut / ds).ceil() as usize).max(2) & !1;
        let ds = self.t_cut / steps as f64;
        let rhs = |v: &Field| self.project(&self.model.linearize(&self.point.phi, v));
        let mut v = v0.clone();
        let mut acc = self.integrand(&v);
        for k in 1..=steps {
            let k1 = rhs(&v);
            let k2 = rhs(&v.axpy(0.5 * ds, &k1));
            let k3 = rhs(&v.axpy(0.5 * ds, &k2));
            let k4 = rhs(&v.axpy(ds, &k3));
            v = v.axpy(ds / 6.0, &k1).axpy(ds / 3.0, &k2).axpy(ds / 3.0, &k3).axpy(ds / 6.0, &k4);
            let w = if k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.integrand(&v);
        }
        acc * ds / 3.0
    }
}

fn spectral_qv(model: &RingModel, point: &AtlasPoint, t_cut: f64) -> Result<SpectralQv> {
    let n = point.phi.values().len();
    let d = model.sigmoid_deriv(&point.phi, 1);
    if d.values().iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("F'(phi) must be positive for the spectral propagator".into()));
    }
    let sq: Vec<f64> = d.values().iter().map(|x| x.sqrt()).collect();
    let c = model.conv_matrix();
    let s = DMatrix::from_fn(n, n, |j, k| sq[j] * c[(j, k)] * sq[k]);
    let eig = SymmetricEigen::new(s);
    let mu: Vec<f64> = eig.eigenvalues.iter().map(|l| l - 1.0).collect();
    let q = eig.eigenvectors;
    // Right eigenvectors r_a = D^{-1/2} q_a of L.
    let r = DMatrix::from_fn(n, n, |j, a| q[(j, a)] / sq[j]);
    let left = DMatrix::from_fn(n, n, |a, j| q[(j, a)] * sq[j]);
    let h = point.phi.grid().spacing();
    let jpsi = model.conv(&point.psi);
    let f2 = model.sigmoid_deriv(&point.phi, 2);
    let kap: Vec<f64> = (0..n).map(|j| h * jpsi.values()[j] * f2.values()[j]).collect();
    let rk = DMatrix::from_fn(n, n, |j, a| kap[j] * r[(j, a)]);
    let kmat = r.transpose() * rk;
    let neutral = mu.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map(|x| x.0).unwrap();
    let weighted = DMatrix::from_fn(n, n, |a, b| {
        if a == neutral || b == neutral {
            return 0.0;
        }
        let m = mu[a] + mu[b];
        let w = if t_cut.is_finite() { ((m * t_cut).exp() - 1.0) / m } else { -1.0 / m };
        kmat[(a, b)] * w
    });
    Ok(SpectralQv { left, weighted })
}

/// Default truncation `20 / b`.
pub fn default_t_cut(atlas: &ManifoldAtlas) -> f64 {
    20.0 / atlas.gap_b
}

/// On-manifold second derivative `D^2 Theta(phi_alpha) w w`.
pub fn d2theta_approx(alpha: f64, w: &Field, atlas: &ManifoldAtlas, params: &RingModelParams) -> Result<f64> {
    let _ = RingModel::new(params, atlas.grid())?;
    let qv = QvIntegrator::new(atlas, alpha, default_t_cut(atlas), SemigroupMethod::Spectral)?;
    Ok(d2theta_with(&qv, w))
}

pub fn d2theta_with(qv: &QvIntegrator, w: &Field) -> f64 {
    let p = qv.point();
    let a = p.psi.dot(w);
    2.0 * a * p.psi_d.dot(w) - p.phi_d.dot(&p.psi_d) * a * a + qv.integral(w)
}

/// Drift, diffusion and quadratic-variation correction of the phase law,
/// sampled on a uniform phase grid.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseLawCoeffs {
    pub alpha: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub h: Vec<f64>,
    pub gamma_qv: Vec<f64>,
    /// Noise-basis coordinates `<B e_j, psi_alpha>` per node.
    pub y_tilde: Vec<Vec<f64>>,
}

impl PhaseLawCoeffs {
    /// Builds coefficients directly from sampled values (uniform nodes from `-pi`).
    pub fn from_samples(v_tilde: Vec<f64>, h: Vec<f64>) -> Result<PhaseLawCoeffs> {
        let n = v_tilde.len();
        if n == 0 || h.len() != n {
            return Err(Error::EmptyInput);
        }
        let alpha = (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
        let y_tilde = h.iter().map(|v: &f64| vec![v.max(0.0).sqrt()]).collect();
        let c = PhaseLawCoeffs { alpha, v_tilde, gamma_qv: vec![0.0; n], h, y_tilde };
        c.check()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    fn check(&self) -> Result<()> {
        for (a, h) in self.alpha.iter().zip(&self.h) {
            if !(*h > 0.0) {
                return Err(Error::DegenerateDiffusion { alpha: *a, value: *h });
            }
        }
        Ok(())
    }

    /// Trigonometric interpolants of `V_tilde`, `H` and the `Y_tilde` rows.
    pub fn interpolant(&self) -> PhaseLawInterp {
        let n = self.len();
        let ny = self.y_tilde.first().map_or(0, |r| r.len());
        let y_cols: Vec<Trig> = (0..ny).map(|j| Trig::new(&self.y_tilde.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
        debug_assert!(n > 0);
        PhaseLawInterp { v: Trig::new(&self.v_tilde), h: Trig::new(&self.h), y: y_cols }
    }
}

/// Real trigonometric interpolant through samples at `-pi + 2 pi k / n`.
#[derive(Clone, Debug)]
pub struct Trig {
    a0: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    nyq: f64,
}

impl Trig {
    pub fn new(samples: &[f64]) -> Trig {
        let n = samples.len();
        let m = n / 2;
        let nodes: Vec<f64> = (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
        let a0 = samples.iter().sum::<f64>() / n as f64;
        let mut cos = Vec::new();
        let mut sin = Vec::new();
        let top = if n % 2 == 0 { m.saturating_sub(1) } else { m };
        for k in 1..=top {
            let kf = k as f64;
            cos.push(2.0 / n as f64 * samples.iter().zip(&nodes).map(|(s, t)| s * (kf * t).cos()).sum::<f64>());
            sin.push(2.0 / n as f64 * samples.iter().zip(&nodes).map(|(s, t)| s * (kf * t).sin()).sum::<f64>());
        }
        let nyq = if n % 2 == 0 && n > 0 {
            samples.iter().zip(&nodes).map(|(s, t)| s * (m as f64 * t).cos()).sum::<f64>() / n as f64
        } else {
            0.0
        };
        Trig { a0, cos, sin, nyq }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.a0;
        let (s1, c1) = x.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        for (a, b) in self.cos.iter().zip(&self.sin) {
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
            acc += a * c + b * s;
        }
        if self.nyq != 0.0 {
            acc += self.nyq * ((self.cos.len() + 1) as f64 * x).cos();
        }
        acc
    }

    pub fn mean(&self) -> f64 {
        self.a0
    }
}

#[derive(Clone, Debug)]
pub struct PhaseLawInterp {
    pub v: Trig,
    pub h: Trig,
    pub y: Vec<Trig>,
}

/// Phase-law coefficients on `phase_grid_size` nodes.
pub fn phase_law_coeffs(
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    params: &RingModelParams,
    phase_grid_size: usize,
) -> Result<PhaseLawCoeffs> {
    phase_law_coeffs_with(atlas, noise, params, phase_grid_size, default_t_cut(atlas), SemigroupMethod::Spectral)
}

pub fn phase_law_coeffs_with(
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    params: &RingModelParams,
    phase_grid_size: usize,
    t_cut: f64,
    method: SemigroupMethod,
) -> Result<PhaseLawCoeffs> {
    if phase_grid_size == 0 {
        return Err(Error::InvalidParameter("phase grid must have at least one node".into()));
    }
    let _ = RingModel::new(params, atlas.grid())?;
    let alpha: Vec<f64> = (0..phase_grid_size).map(|k| -PI + 2.0 * PI * k as f64 / phase_grid_size as f64).collect();
    let rows: Vec<Result<(f64, f64, f64, Vec<f64>)>> = alpha
        .par_iter()
        .map(|&a| {
            let qv = QvIntegrator::new(atlas, a, t_cut, method)?;
            let p = qv.point();
            let bpsi = noise.adjoint_apply(&p.phi, &p.psi);
            let bpsi1 = noise.adjoint_apply(&p.phi, &p.psi_d);
            let h: f64 = bpsi.iter().map(|x| x * x).sum();
            let cross: f64 = bpsi.iter().zip(&bpsi1).map(|(x, y)| x * y).sum();
            let gqv = 0.5 * (0..noise.dim()).map(|j| qv.integral(&noise.mode(&p.phi, j))).sum::<f64>();
            let v = cross - 0.5 * p.phi_d.dot(&p.psi_d) * h + gqv;
            Ok((v, h, gqv, bpsi))
        })
        .collect();
    let mut c = PhaseLawCoeffs {
        alpha,
        v_tilde: Vec::with_capacity(phase_grid_size),
        h: Vec::with_capacity(phase_grid_size),
        gamma_qv: Vec::with_capacity(phase_grid_size),
        y_tilde: Vec::with_capacity(phase_grid_size),
    };
    for r in rows {
        let (v, h, g, y) = r?;
        c.v_tilde.push(v);
        c.h.push(h);
        c.gamma_qv.push(g);
        c.y_tilde.push(y);
    }
    c.check()?;
    Ok(c)
}

/// Isochronal phase along a replayed trajectory.
#[derive(Clone, Debug, Default, Serialize)]
pub struct IsoPath {
    pub t: Vec<f64>,
    pub gamma_sde: Vec<f64>,
    pub beta_newton: Vec<f64>,
    /// Times and values of the directly computed `Theta(u_t)`.
    pub check_t: Vec<f64>,
    pub gamma_direct: Vec<f64>,
    pub max_check_deviation: f64,
    pub exited_at: Option<f64>,
}

/// Options for [`integrate_isochronal_sde_with`].
#[derive(Clone, Debug)]
pub struct IsoSdeOptions {
    /// Directly recompute `Theta(u_t)` this often; `None` disables checks.
    pub check_every: Option<f64>,
    pub phase_grid_size: usize,
    pub iso: IsoOptions,
}

impl Default for IsoSdeOptions {
    fn default() -> Self {
        IsoSdeOptions { check_every: Some(1.0), phase_grid_size: 64, iso: IsoOptions::default() }
    }
}

/// Euler–Maruyama on `d gamma = eps^2 V_tilde(gamma) dt + eps <psi_gamma, B(u_t) dW>`.
///
/// The second-derivative term is evaluated on the manifold at `phi_gamma`,
/// which makes the drift exactly `eps^2 V_tilde(gamma)` sampled from the
/// phase-law table.
pub fn integrate_isochronal_sde(
    trajectory: &Trajectory,
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    epsilon: f64,
    params: &RingModelParams,
) -> Result<IsoPath> {
    let law = phase_law_coeffs(atlas, noise, params, 64)?;
    let mut cfg = trajectory.config.clone();
    cfg.epsilon = epsilon;
    cfg.exit_threshold = None;
    integrate_isochronal_sde_with(&cfg, &trajectory.states[0], atlas, noise, params, &law, &IsoSdeOptions::default())
}

pub fn integrate_isochronal_sde_with(
    config: &crate::sim::SimConfig,
    u0: &Field,
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    params: &RingModelParams,
    law: &PhaseLawCoeffs,
    opts: &IsoSdeOptions,
) -> Result<IsoPath> {
    let sim = Simulator::new(params, noise)?;
    let iso = Isochron::with_options(atlas, params, opts.iso.clone())?;
    let fast = FastPhase::new(atlas);
    let psi = Spectrum::of(&atlas.adjoint);
    let interp = law.interpolant();
    let eps = config.epsilon;
    let dt = config.dt;
    let g0 = iso.phase(u0, Some(config.initial_phase))?.gamma;
    let mut path = IsoPath::default();
    path.t.push(0.0);
    path.gamma_sde.push(g0);
    path.beta_newton.push(fast.newton(u0, g0)?);
    let mut gamma = g0;
    let mut beta = path.beta_newton[0];
    let check_stride = opts.check_every.map(|c| ((c / dt).round() as usize).max(1));
    sim.run_with(config, u0.clone(), |ev| {
        let t = (ev.step + 1) as f64 * dt;
        let diffusion = if eps > 0.0 { psi.pair_translated(&ev.noise_field.spectrum(), gamma)[0] } else { 0.0 };
        gamma += eps * eps * interp.v.eval(gamma) * dt + eps * diffusion;
        match fast.newton(ev.next, beta) {
            Ok(b) => beta = b,
            Err(_) => {
                path.exited_at = Some(t);
                return Control::Stop;
            }
        }
        if (ev.step + 1) % config.save_stride == 0 {
            path.t.push(t);
            path.gamma_sde.push(gamma);
            path.beta_newton.push(beta);
        }
        if let Some(s) = check_stride {
            if (ev.step + 1) % s == 0 {
                match iso.phase(ev.next, Some(gamma)) {
                    Ok(r) => {
                        path.check_t.push(t);
                        path.gamma_direct.push(r.gamma);
                        path.max_check_deviation = path.max_check_deviation.max((r.gamma - gamma).abs());
                    }
                    Err(_) => {
                        path.exited_at = Some(t);
                        return Control::Stop;
                    }
                }
            }
        }
        Control::Continue
    })?;
    Ok(path)
}
