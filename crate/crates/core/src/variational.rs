//! Variational phase: the phase `beta` solving `<u - phi_beta, psi_beta> = 0`,
//! the matrices `M` and `N = M^{-1}`, and the coefficients of the Itô SDE
//! that `beta_t` satisfies along a stochastic trajectory.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Spectrum};
use crate::manifold::{Dynamics, Frame, PhaseManifold};
use crate::noise::NoiseModel;
use crate::ring::{ManifoldAtlas, RingModelParams};
use crate::sim::{Control, Simulator, Trajectory};

/// `M` is treated as singular below this determinant.
pub const DET_FLOOR: f64 = 0.25;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 30;
/// Basin radius for Newton, as a fraction of `kappa_bar`.
pub const BASIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseState {
    /// Unwrapped phase.
    pub beta: Vec<f64>,
    pub det_m: f64,
    /// `||u - phi_beta||`.
    pub amp_norm: f64,
    pub stopped: bool,
}

#[derive(Clone, Debug)]
pub struct MassMatrix {
    pub m: DMatrix<f64>,
    pub det: f64,
    /// `N = M^{-1}`; `None` when `M` is singular.
    pub inverse: Option<DMatrix<f64>>,
    /// `|det M| < DET_FLOOR`.
    pub stopped: bool,
}

#[derive(Clone, Debug)]
pub struct PhaseSDECoeffs {
    /// Drift `V`.
    pub v: Vec<f64>,
    /// Row `i` holds the noise-basis coordinates of `Y_i`.
    pub y_rows: Vec<Vec<f64>>,
    /// `d beta_j d beta_k / dt`.
    pub quad_var: DMatrix<f64>,
}

/// `G_i(u, beta) = <u - phi_beta, psi^i_beta>`.
pub fn g_value<M: PhaseManifold + ?Sized>(u: &Field, beta: &[f64], manifold: &M) -> Vec<f64> {
    let f = manifold.frame(beta);
    let v = u.sub(&f.phi);
    f.psi.iter().map(|p| v.dot(p)).collect()
}

fn mass_from_frame(u: &Field, frame: &Frame) -> MassMatrix {
    let m = frame.dim;
    let v = u.sub(&frame.phi);
    let mat = DMatrix::from_fn(m, m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - v.dot(frame.psi_d(i, j))
    });
    let det = mat.determinant();
    let inverse = mat.clone().try_inverse();
    MassMatrix { m: mat, det, inverse, stopped: det.abs() < DET_FLOOR }
}

/// `M_ij = delta_ij - <u - phi_beta, psi^i_{beta,j}>` with its determinant and inverse.
pub fn mass_matrix<M: PhaseManifold + ?Sized>(u: &Field, beta: &[f64], manifold: &M) -> MassMatrix {
    mass_from_frame(u, &manifold.frame(beta))
}

/// Newton solve of `G(u, beta) = 0` starting at `guess`.
pub fn newton_phase_m<M: PhaseManifold + ?Sized>(
    u: &Field,
    guess: &[f64],
    manifold: &M,
) -> Result<Vec<f64>> {
    let mut beta = guess.to_vec();
    for _ in 0..NEWTON_MAX_ITER {
        let frame = manifold.frame(&beta);
        let v = u.sub(&frame.phi);
        let g: Vec<f64> = frame.psi.iter().map(|p| v.dot(p)).collect();
        if g.iter().all(|x| x.abs() < NEWTON_TOL) {
            return Ok(beta);
        }
        let mm = mass_from_frame(u, &frame);
        if mm.stopped {
            return Err(Error::PhaseUndefined(format!("det M = {:.3e} below floor", mm.det)));
        }
        let n = mm.inverse.expect("det above floor");
        for (i, b) in beta.iter_mut().enumerate() {
            *b += (0..g.len()).map(|j| n[(i, j)] * g[j]).sum::<f64>();
        }
    }
    let g = g_value(u, &beta, manifold);
    if g.iter().all(|x| x.abs() < 1e3 * NEWTON_TOL) {
        return Ok(beta);
    }
    Err(Error::PhaseUndefined(format!("Newton did not converge (|G| = {:.3e})", g[0].abs())))
}

/// Scalar Newton phase on the ring atlas.
pub fn newton_phase(u: &Field, beta_guess: f64, atlas: &ManifoldAtlas) -> Result<f64> {
    Ok(newton_phase_m(u, &[beta_guess], atlas)?[0])
}

/// Scalar phase computations in `O(n)` per iterate after one FFT of `u`,
/// using `<u, T_beta psi>` evaluated in Fourier space.
#[derive(Clone, Debug)]
pub struct FastPhase {
    psi: Spectrum,
    phi: Spectrum,
    /// `<phi_0, psi_0>`.
    c0: f64,
    /// `<phi_0, psi_{0,1}>`.
    c1: f64,
}

impl FastPhase {
    pub fn new(atlas: &ManifoldAtlas) -> FastPhase {
        FastPhase {
            psi: Spectrum::of(&atlas.adjoint),
            phi: Spectrum::of(&atlas.profile),
            c0: atlas.profile.dot(&atlas.adjoint),
            c1: atlas.profile.dot(&atlas.adjoint_deriv),
        }
    }

    /// `(G, M)` at `beta` for a field with spectrum `u_hat`.
    pub fn g_and_m(&self, u_hat: &[Complex64], beta: f64) -> (f64, f64) {
        let [p, dp, _] = self.psi.pair_translated(u_hat, beta);
        (p - self.c0, 1.0 - dp + self.c1)
    }

    pub fn newton_spectral(&self, u_hat: &[Complex64], guess: f64) -> Result<f64> {
        let mut beta = guess;
        for _ in 0..NEWTON_MAX_ITER {
            let (g, m) = self.g_and_m(u_hat, beta);
            if g.abs() < NEWTON_TOL {
                return Ok(beta);
            }
            if m.abs() < DET_FLOOR {
                return Err(Error::PhaseUndefined(format!("det M = {m:.3e} below floor")));
            }
            beta += g / m;
        }
        let (g, _) = self.g_and_m(u_hat, beta);
        if g.abs() < 1e3 * NEWTON_TOL {
            return Ok(beta);
        }
        Err(Error::PhaseUndefined(format!("Newton did not converge (|G| = {:.3e})", g.abs())))
    }

    pub fn newton(&self, u: &Field, guess: f64) -> Result<f64> {
        self.newton_spectral(&u.spectrum(), guess)
    }

    /// `||u - phi_beta||` from the spectrum of `u`, differenced coefficientwise.
    pub fn amplitude_spectral(&self, u_hat: &[Complex64], beta: f64) -> f64 {
        self.phi.distance_to_translate(u_hat, beta)
    }

    pub fn amplitude(&self, u: &Field, beta: f64) -> f64 {
        self.amplitude_spectral(&u.spectrum(), beta)
    }

    /// Full state at the converged phase.
    pub fn state(&self, u: &Field, guess: f64) -> Result<PhaseState> {
        let uh = u.spectrum();
        let beta = self.newton_spectral(&uh, guess)?;
        let (_, m) = self.g_and_m(&uh, beta);
        Ok(PhaseState {
            beta: vec![beta],
            det_m: m,
            amp_norm: self.amplitude_spectral(&uh, beta),
            stopped: m.abs() < DET_FLOOR,
        })
    }
}

/// Variational phase SDE coefficients at `(u, beta)`.
///
/// The Taylor-remainder form of the drift is used; it relies on
/// `<u - phi, L* psi> = 0`. [`sde_drift_uncancelled`] evaluates the form that
/// keeps `<u - phi, A* psi> + <f(u) - f(phi), psi>` for comparison.
pub fn sde_coeffs_m<M, D>(
    u: &Field,
    beta: &[f64],
    manifold: &M,
    dynamics: &D,
    noise: &NoiseModel,
    epsilon: f64,
) -> Result<PhaseSDECoeffs>
where
    M: PhaseManifold + ?Sized,
    D: Dynamics + ?Sized,
{
    let frame = manifold.frame(beta);
    let rem: Vec<f64> = {
        let v = u.sub(&frame.phi);
        let r = dynamics
            .nonlinear(u)
            .sub(&dynamics.nonlinear(&frame.phi))
            .sub(&dynamics.d_nonlinear(&frame.phi, &v));
        frame.psi.iter().map(|p| r.dot(p)).collect()
    };
    coeffs_with_remainder(u, &frame, noise, epsilon, &rem)
}

/// Drift computed from `<A(u - phi) + f(u) - f(phi), psi>` without using the
/// null-vector cancellation.
pub fn sde_drift_uncancelled<M, D>(
    u: &Field,
    beta: &[f64],
    manifold: &M,
    dynamics: &D,
    noise: &NoiseModel,
    epsilon: f64,
) -> Result<Vec<f64>>
where
    M: PhaseManifold + ?Sized,
    D: Dynamics + ?Sized,
{
    let frame = manifold.frame(beta);
    let v = u.sub(&frame.phi);
    let fd = dynamics.nonlinear(u).sub(&dynamics.nonlinear(&frame.phi));
    let rem: Vec<f64> =
        frame.psi.iter().map(|p| v.dot(&dynamics.linear_adjoint(p)) + fd.dot(p)).collect();
    Ok(coeffs_with_remainder(u, &frame, noise, epsilon, &rem)?.v)
}

fn coeffs_with_remainder(
    u: &Field,
    frame: &Frame,
    noise: &NoiseModel,
    epsilon: f64,
    rem: &[f64],
) -> Result<PhaseSDECoeffs> {
    let m = frame.dim;
    let mm = mass_from_frame(u, frame);
    if mm.stopped {
        return Err(Error::PhaseUndefined(format!("det M = {:.3e} below floor", mm.det)));
    }
    let n = mm.inverse.expect("det above floor");
    let a: Vec<Vec<f64>> = frame.psi.iter().map(|p| noise.adjoint_apply(u, p)).collect();
    let dim = noise.dim();
    let y_rows: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..dim).map(|k| (0..m).map(|j| n[(i, j)] * a[j][k]).sum()).collect())
        .collect();
    let q = DMatrix::from_fn(m, m, |p, r| crate::noise::b_star_pairing(&a[p], &a[r]));
    let nqn = &n * &q * n.transpose();
    let e2 = epsilon * epsilon;
    let quad_var = &nqn * e2;
    let inner: Vec<f64> = (0..m)
        .map(|i| {
            let mut corr = 0.0;
            for j in 0..m {
                let c = noise.adjoint_apply(u, frame.psi_d(i, j));
                for p in 0..m {
                    corr += n[(j, p)] * crate::noise::b_star_pairing(&a[p], &c);
                }
            }
            let mut ito = 0.0;
            for j in 0..m {
                for k in 0..m {
                    ito += u.dot(frame.psi_dd(i, j, k)) * nqn[(j, k)];
                }
            }
            e2 * corr + 0.5 * e2 * ito + rem[i]
        })
        .collect();
    let v = (0..m).map(|r| (0..m).map(|i| n[(r, i)] * inner[i]).sum()).collect();
    Ok(PhaseSDECoeffs { v, y_rows, quad_var })
}

/// Scalar-phase coefficients on the ring atlas.
pub fn sde_coeffs(
    u: &Field,
    beta: f64,
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    epsilon: f64,
    params: &RingModelParams,
) -> Result<PhaseSDECoeffs> {
    let model = crate::ring::RingModel::new(params, atlas.grid())?;
    sde_coeffs_m(u, &[beta], atlas, &model, noise, epsilon)
}

/// Newton phase and SDE-integrated phase along a replayed trajectory.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PhasePath {
    pub t: Vec<f64>,
    pub beta_newton: Vec<f64>,
    pub beta_sde: Vec<f64>,
    pub det_m: Vec<f64>,
    pub amp_norm: Vec<f64>,
    /// `|G(u_t, beta_newton)|` at each saved step.
    pub g_residual: Vec<f64>,
    /// Time at which the stopping time was reached, if it was.
    pub stopped_at: Option<f64>,
    /// `max |beta_sde - beta_newton|` over every step.
    pub max_deviation: f64,
}

/// Integrates `d beta = V dt + eps Y dW` with Euler–Maruyama, reusing the
/// trajectory's own increments, next to the Newton phase of each state.
pub fn integrate_phase_sde(
    trajectory: &Trajectory,
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    epsilon: f64,
    params: &RingModelParams,
) -> Result<PhasePath> {
    if noise.seed() != trajectory.noise_seed {
        return Err(Error::InvalidParameter("noise seed differs from the trajectory's".into()));
    }
    let mut config = trajectory.config.clone();
    config.epsilon = epsilon;
    config.exit_threshold = None;
    integrate_phase_sde_with(&config, &trajectory.states[0], atlas, noise, params, Some(trajectory))
}

/// As [`integrate_phase_sde`], driven directly by a configuration.
pub fn integrate_phase_sde_with(
    config: &crate::sim::SimConfig,
    u0: &Field,
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    params: &RingModelParams,
    check_against: Option<&Trajectory>,
) -> Result<PhasePath> {
    let sim = Simulator::new(params, noise)?;
    let fast = FastPhase::new(atlas);
    let model = sim.model().clone();
    let eps = config.epsilon;
    let dt = config.dt;
    let beta0 = fast.newton(u0, config.initial_phase)?;
    let mut path = PhasePath::default();
    let record = |path: &mut PhasePath, t: f64, u: &Field, bn: f64, bs: f64| {
        let st = mm_state(&fast, u, bn);
        path.t.push(t);
        path.beta_newton.push(bn);
        path.beta_sde.push(bs);
        path.det_m.push(st.0);
        path.amp_norm.push(st.1);
        path.g_residual.push(st.2.abs());
    };
    record(&mut path, 0.0, u0, beta0, beta0);
    let mut beta_n = beta0;
    let mut beta_s = beta0;
    let mut failure: Option<Error> = None;
    let mut replay_mismatch = false;
    let mut saved = 1usize;
    sim.run_with(config, u0.clone(), |ev| {
        let t_next = (ev.step + 1) as f64 * dt;
        // Euler–Maruyama step from the left endpoint.
        match sde_coeffs_m(ev.u, &[beta_s], atlas, &model, noise, eps) {
            Ok(c) => {
                let noise_term: f64 = c.y_rows[0].iter().zip(&ev.incr.coeffs).map(|(y, z)| y * z).sum();
                beta_s += c.v[0] * dt + if eps > 0.0 { eps * noise_term } else { 0.0 };
            }
            Err(_) => {
                path.stopped_at = Some(ev.t);
                return Control::Stop;
            }
        }
        match fast.newton(ev.next, beta_n) {
            Ok(b) => beta_n = b,
            Err(e) => {
                path.stopped_at = Some(t_next);
                failure = Some(e);
                return Control::Stop;
            }
        }
        if fast.state(ev.next, beta_n).map(|s| s.stopped).unwrap_or(true) {
            path.stopped_at = Some(t_next);
            return Control::Stop;
        }
        path.max_deviation = path.max_deviation.max((beta_s - beta_n).abs());
        if (ev.step + 1) % config.save_stride == 0 {
            if let Some(tr) = check_against {
                if tr.states.get(saved).is_some_and(|s| s != ev.next) {
                    replay_mismatch = true;
                }
            }
            saved += 1;
            record(&mut path, t_next, ev.next, beta_n, beta_s);
        }
        Control::Continue
    })?;
    if replay_mismatch {
        return Err(Error::InvalidParameter("replayed states differ from the stored trajectory".into()));
    }
    if let (Some(e), true) = (failure, path.t.len() == 1) {
        return Err(e);
    }
    Ok(path)
}

fn mm_state(fast: &FastPhase, u: &Field, beta: f64) -> (f64, f64, f64) {
    let uh = u.spectrum();
    let (g, m) = fast.g_and_m(&uh, beta);
    (m, fast.amplitude_spectral(&uh, beta), g)
}
