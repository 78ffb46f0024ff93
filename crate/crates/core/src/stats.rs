//! Long-time statistics of the phase: Fokker–Planck densities on the circle,
//! occupation histograms, mean drift and exit probabilities.

use std::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::isochronal::{PhaseLawCoeffs, PhaseLawInterp, Trig};
use crate::noise::NoiseModel;
use crate::ring::{expm, ManifoldAtlas, RingModelParams};
use crate::sim::{SimConfig, Simulator};

/// A probability density on uniform nodes over `[-pi, pi)`.
#[derive(Clone, Debug, Serialize)]
pub struct FPDensity {
    pub phase_nodes: Vec<f64>,
    pub density: Vec<f64>,
    /// Stationary probability flux (zero for transient densities).
    pub flux: f64,
}

impl FPDensity {
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.density.len() as f64
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.spacing()
    }

    /// `int g p`.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.phase_nodes.iter().zip(&self.density).map(|(a, p)| g(*a) * p).sum::<f64>() * self.spacing()
    }

    /// Mass in each of `n_bins` equal bins, using the trigonometric interpolant.
    pub fn bin_masses(&self, n_bins: usize) -> Vec<f64> {
        let trig = Trig::new(&self.density);
        let sub = 64;
        let w = 2.0 * PI / n_bins as f64;
        (0..n_bins)
            .map(|b| {
                let a = -PI + b as f64 * w;
                (0..sub).map(|k| trig.eval(a + (k as f64 + 0.5) * w / sub as f64)).sum::<f64>() * w / sub as f64
            })
            .collect()
    }
}

fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

/// Total variation between two densities on the same nodes.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let h = 2.0 * PI / p.len() as f64;
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * h
}

/// Total variation between two probability vectors.
pub fn total_variation_masses(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Solver resolution: coefficients are interpolated onto this many nodes.
fn solver_nodes(coeffs: &PhaseLawCoeffs) -> usize {
    let n = coeffs.len().max(16);
    let n = n + n % 2;
    (2 * n).max(128)
}

fn resampled(coeffs: &PhaseLawCoeffs, m: usize) -> (Vec<f64>, Vec<f64>, PhaseLawInterp) {
    let it = coeffs.interpolant();
    let xs = nodes(m);
    let v = xs.iter().map(|&a| it.v.eval(a)).collect();
    let h = xs.iter().map(|&a| it.h.eval(a)).collect();
    (v, h, it)
}

/// Pseudo-spectral Fokker–Planck operator `p -> -(V p)' + (H p)''/2` on `m` nodes.
///
/// Uses the periodic sinc differentiation matrices; the second-derivative
/// matrix keeps the Nyquist mode so the operator has a one-dimensional kernel.
fn fp_matrix(v: &[f64], h: &[f64]) -> DMatrix<f64> {
    let m = v.len();
    let step = 2.0 * PI / m as f64;
    let sign = |d: usize| if d % 2 == 0 { 1.0 } else { -1.0 };
    let d1 = DMatrix::from_fn(m, m, |j, k| {
        if j == k {
            return 0.0;
        }
        let d = (j + m - k) % m;
        0.5 * sign(d) / (0.5 * d as f64 * step).tan()
    });
    let d2 = DMatrix::from_fn(m, m, |j, k| {
        if j == k {
            return -PI * PI / (3.0 * step * step) - 1.0 / 6.0;
        }
        let d = (j + m - k) % m;
        -sign(d) / (2.0 * (0.5 * d as f64 * step).sin().powi(2))
    });
    DMatrix::from_fn(m, m, |j, k| -d1[(j, k)] * v[k] + 0.5 * d2[(j, k)] * h[k])
}

fn check_h(coeffs: &PhaseLawCoeffs) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (a, h) in coeffs.alpha.iter().zip(&coeffs.h) {
        if !(*h > 0.0) {
            return Err(Error::DegenerateDiffusion { alpha: *a, value: *h });
        }
    }
    Ok(())
}

/// Constant-flux construction
/// `p(a) ∝ D(a)^{-1} int_a^{a+2pi} exp(Phi(a) - Phi(s)) ds`, `Phi' = V/D`, `D = H/2`,
/// evaluated spectrally on `m` nodes. Returns `(density, flux)`.
pub fn stationary_closed_form(coeffs: &PhaseLawCoeffs, m: usize) -> Result<(Vec<f64>, f64)> {
    check_h(coeffs)?;
    let (v, h, _) = resampled(coeffs, m);
    let grid = Grid::new(m)?;
    let step = 2.0 * PI / m as f64;
    let ratio: Vec<f64> = v.iter().zip(&h).map(|(a, b)| 2.0 * a / b).collect();
    let mean = ratio.iter().sum::<f64>() / m as f64;
    // Periodic antiderivative of ratio - mean.
    let mut spec = Field::new(&grid, ratio.iter().map(|r| r - mean).collect())?.spectrum();
    for (k, c) in spec.iter_mut().enumerate() {
        let w = grid.frequency(k);
        if k == 0 || k == m / 2 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= Complex64::new(0.0, w);
        }
    }
    let periodic = Field::from_spectrum(&grid, spec);
    // exp(-P) as a Fourier series; exp(-Phi(s)) = exp(-mean (s + pi)) exp(-P(s)).
    let ep: Vec<f64> = periodic.values().iter().map(|p| (-p).exp()).collect();
    let ep_hat = grid.fft(&ep);
    let xs = nodes(m);
    let total = mean * 2.0 * PI;
    let q: Vec<f64> = xs
        .iter()
        .zip(periodic.values())
        .map(|(&a, &pa)| {
            // int_a^{a+2pi} exp(-mean (s - a) - P(s)) ds, termwise in the Fourier series of exp(-P).
            let mut acc = 0.0;
            for (k, c) in ep_hat.iter().enumerate() {
                if k == m / 2 {
                    continue;
                }
                let w = grid.frequency(k);
                let coef = c / m as f64 * Complex64::from_polar(1.0, w * PI);
                let z = Complex64::new(-mean, w);
                let base = Complex64::from_polar(1.0, w * a);
                let integral = if z.norm() < 1e-14 { base * 2.0 * PI } else { base * ((z * 2.0 * PI).exp() - 1.0) / z };
                acc += (coef * integral).re;
            }
            acc * pa.exp()
        })
        .collect();
    let p_raw: Vec<f64> = q.iter().zip(&h).map(|(qq, hh)| qq / (0.5 * hh)).collect();
    let z = p_raw.iter().sum::<f64>() * step;
    let density: Vec<f64> = p_raw.iter().map(|p| p / z).collect();
    let flux = (1.0 - (-total).exp()) / z;
    Ok((density, flux))
}

/// Null vector of the pseudo-spectral FP operator with unit mass.
pub fn stationary_spectral(coeffs: &PhaseLawCoeffs, m: usize) -> Result<Vec<f64>> {
    check_h(coeffs)?;
    let (v, h, _) = resampled(coeffs, m);
    let mut l = fp_matrix(&v, &h);
    let step = 2.0 * PI / m as f64;
    for k in 0..m {
        l[(0, k)] = step;
    }
    let mut rhs = DVector::zeros(m);
    rhs[0] = 1.0;
    let sol = l.lu().solve(&rhs).ok_or(Error::FpInconsistency { tv: f64::NAN })?;
    Ok(sol.iter().copied().collect())
}

/// Stationary density on the coefficient nodes, cross-checked by two solvers.
pub fn stationary_density(coeffs: &PhaseLawCoeffs) -> Result<FPDensity> {
    let m = solver_nodes(coeffs);
    let (closed, flux) = stationary_closed_form(coeffs, m)?;
    let spectral = stationary_spectral(coeffs, m)?;
    let tv = total_variation(&closed, &spectral);
    if !(tv <= 1e-6) {
        return Err(Error::FpInconsistency { tv });
    }
    Ok(downsample(coeffs.len(), &closed, flux))
}

fn downsample(n: usize, fine: &[f64], flux: f64) -> FPDensity {
    let trig = Trig::new(fine);
    let xs = nodes(n);
    let mut density: Vec<f64> = xs.iter().map(|&a| trig.eval(a).max(0.0)).collect();
    let z = density.iter().sum::<f64>() * 2.0 * PI / n as f64;
    density.iter_mut().for_each(|p| *p /= z);
    FPDensity { phase_nodes: xs, density, flux }
}

/// Wrapped Gaussian centred at `xi`, sampled on `m` nodes.
pub fn wrapped_gaussian(m: usize, xi: f64, sigma: f64) -> Vec<f64> {
    let xs = nodes(m);
    let mut p: Vec<f64> = xs
        .iter()
        .map(|&a| {
            (-6i32..=6)
                .map(|w| {
                    let d = a - xi + 2.0 * PI * w as f64;
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .sum()
        })
        .collect();
    let z = p.iter().sum::<f64>() * 2.0 * PI / m as f64;
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// `p_t(. | xi)` by exact exponentiation of the pseudo-spectral FP operator,
/// starting from a wrapped Gaussian of width two node spacings.
pub fn transition_density(coeffs: &PhaseLawCoeffs, xi: f64, t: f64) -> Result<FPDensity> {
    transition_densities(coeffs, xi, &[t]).map(|mut v| v.remove(0))
}

/// `p_t` at several increasing times.
pub fn transition_densities(coeffs: &PhaseLawCoeffs, xi: f64, times: &[f64]) -> Result<Vec<FPDensity>> {
    check_h(coeffs)?;
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("transition times must be positive".into()));
    }
    let m = solver_nodes(coeffs);
    let (v, h, _) = resampled(coeffs, m);
    let l = fp_matrix(&v, &h);
    let sigma = 2.0 * 2.0 * PI / coeffs.len() as f64;
    let mut p = DVector::from_vec(wrapped_gaussian(m, xi, sigma));
    let mut t0 = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let e = expm(&(&l * (t - t0)));
        p = e * p;
        t0 = t;
        let fine: Vec<f64> = p.iter().copied().collect();
        let trig = Trig::new(&fine);
        let xs = nodes(coeffs.len());
        out.push(FPDensity { phase_nodes: xs.clone(), density: xs.iter().map(|&a| trig.eval(a)).collect(), flux: 0.0 });
    }
    Ok(out)
}

/// Occupation histogram with batch-means standard errors over trajectories.
#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / self.centers.len() as f64
    }

    pub fn masses(&self) -> Vec<f64> {
        self.density.iter().map(|d| d * self.bin_width()).collect()
    }
}

/// Wraps to `[-pi, pi)`.
pub fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Pooled histogram of phases mod `2 pi`; each path is a uniformly-sampled series.
pub fn occupation_histogram(phase_paths: &[Vec<f64>], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 || phase_paths.iter().all(|p| p.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let w = 2.0 * PI / n_bins as f64;
    let per: Vec<Vec<f64>> = phase_paths
        .iter()
        .filter(|p| !p.is_empty())
        .map(|path| {
            let mut c = vec![0.0; n_bins];
            for &g in path {
                let b = (((wrap(g) + PI) / w) as usize).min(n_bins - 1);
                c[b] += 1.0;
            }
            let tot = path.len() as f64;
            c.iter().map(|x| x / (tot * w)).collect()
        })
        .collect();
    let weights: Vec<f64> = phase_paths.iter().filter(|p| !p.is_empty()).map(|p| p.len() as f64).collect();
    let wsum: f64 = weights.iter().sum();
    let k = per.len() as f64;
    let density: Vec<f64> =
        (0..n_bins).map(|b| per.iter().zip(&weights).map(|(h, wt)| h[b] * wt).sum::<f64>() / wsum).collect();
    let stderr = (0..n_bins)
        .map(|b| {
            if per.len() < 2 {
                return f64::NAN;
            }
            let mean = per.iter().map(|h| h[b]).sum::<f64>() / k;
            let var = per.iter().map(|h| (h[b] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    let centers = (0..n_bins).map(|b| -PI + (b as f64 + 0.5) * w).collect();
    Ok(Histogram { centers, density, stderr })
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl DriftEstimate {
    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

/// `eps^{-2} T^{-1} (gamma_T - gamma_0)` averaged over trajectories with a 95% CI.
pub fn mean_drift(phase_paths: &[Vec<f64>], t_end: f64, epsilon: f64) -> Result<DriftEstimate> {
    let rates: Vec<f64> = phase_paths
        .iter()
        .filter(|p| p.len() >= 2)
        .map(|p| (p[p.len() - 1] - p[0]) / (epsilon * epsilon * t_end))
        .collect();
    if rates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = if rates.len() > 1 { rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let stderr = (var / n).sqrt();
    Ok(DriftEstimate { mean, stderr, ci_low: mean - 1.96 * stderr, ci_high: mean + 1.96 * stderr, n: rates.len() })
}

/// `int V_tilde p_*`.
pub fn expected_drift(coeffs: &PhaseLawCoeffs, p: &FPDensity) -> f64 {
    let it = coeffs.interpolant();
    p.expect(|a| it.v.eval(a))
}

/// Wilson score interval at 95%.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitCell {
    pub epsilon: f64,
    pub kappa: f64,
    pub t_end: f64,
    pub n_trials: usize,
    pub n_exits: usize,
    pub p_hat: f64,
    pub wilson_ci: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_cells: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitStats {
    pub cells: Vec<ExitCell>,
    pub fit: Option<ExitFit>,
}

/// Ordinary least squares of `log p_hat` on `kappa^2 / eps^2` over cells with `0 < p_hat < 1`.
pub fn fit_exit_scaling(cells: &[ExitCell]) -> Option<ExitFit> {
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.p_hat > 0.0 && c.p_hat < 1.0)
        .map(|c| (c.kappa * c.kappa / (c.epsilon * c.epsilon), c.p_hat.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(ExitFit { slope, intercept: my - slope * mx, r_squared, n_cells: pts.len() })
}

/// Per-trial maximum amplitude is recorded once per trial and reused for all
/// `kappa` at the same `epsilon`, so the exit events are nested exactly.
pub fn exit_probability_experiment(
    grid: &[(f64, f64)],
    t_end: f64,
    n_trials: usize,
    dt: f64,
    atlas: &ManifoldAtlas,
    noise: &NoiseModel,
    params: &RingModelParams,
) -> Result<ExitStats> {
    let kbar = atlas.kappa_bar();
    if let Some(&(_, k)) = grid.iter().find(|(_, k)| *k > kbar) {
        return Err(Error::InvalidParameter(format!("kappa {k} exceeds kappa_bar {kbar:.4}")));
    }
    let mut eps: Vec<f64> = grid.iter().map(|c| c.0).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let sim = Simulator::new(params, noise)?;
    let mut cells = Vec::new();
    for (ei, &e) in eps.iter().enumerate() {
        let kappas: Vec<f64> = grid.iter().filter(|c| c.0 == e).map(|c| c.1).collect();
        let maxima: Vec<f64> = (0..n_trials)
            .into_par_iter()
            .map(|trial| {
                let cfg = SimConfig {
                    dt,
                    t_end,
                    epsilon: e,
                    save_stride: usize::MAX,
                    initial_phase: 0.0,
                    trajectory: (ei as u64) << 32 | trial as u64,
                    exit_threshold: None,
                };
                max_amplitude(&sim, atlas, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        for &k in &kappas {
            let n_exits = maxima.iter().filter(|&&m| m > k).count();
            cells.push(ExitCell {
                epsilon: e,
                kappa: k,
                t_end,
                n_trials,
                n_exits,
                p_hat: n_exits as f64 / n_trials as f64,
                wilson_ci: wilson_interval(n_exits, n_trials),
            });
        }
    }
    let fit = fit_exit_scaling(&cells);
    Ok(ExitStats { cells, fit })
}

/// `sup_t ||u_t - phi_{beta_t}||` over a run, stopping once it passes `kappa_bar`.
fn max_amplitude(sim: &Simulator, atlas: &ManifoldAtlas, cfg: &SimConfig) -> Result<f64> {
    let fast = crate::variational::FastPhase::new(atlas);
    let u0 = atlas.at(cfg.initial_phase).phi;
    let mut beta = cfg.initial_phase;
    let mut sup: f64 = 0.0;
    let kbar = atlas.kappa_bar();
    sim.run_with(cfg, u0, |ev| {
        let uh = ev.next.spectrum();
        match fast.newton_spectral(&uh, beta) {
            Ok(b) => {
                beta = b;
                sup = sup.max(fast.amplitude_spectral(&uh, b));
                if sup > kbar {
                    return crate::sim::Control::Stop;
                }
            }
            Err(_) => {
                sup = f64::INFINITY;
                return crate::sim::Control::Stop;
            }
        }
        crate::sim::Control::Continue
    })?;
    Ok(sup)
}

/// Auxiliary phase process `d upsilon = V_tilde dt + Y_tilde dW` in rescaled time.
pub fn auxiliary_paths(
    coeffs: &PhaseLawCoeffs,
    starts: &[f64],
    t_end: f64,
    dt: f64,
    sample_every: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_h(coeffs)?;
    let it = coeffs.interpolant();
    let dim = it.y.len();
    let steps = (t_end / dt).round() as usize;
    starts
        .par_iter()
        .enumerate()
        .map(|(i, &x0)| {
            let mut x = x0;
            let mut out = Vec::with_capacity(steps / sample_every.max(1) + 1);
            out.push(x);
            let mut z = vec![0.0; dim];
            for s in 0..steps {
                crate::noise::WienerIncrement::draw_into(seed, i as u64, s as u64, dt, &mut z);
                let dw: f64 = it.y.iter().zip(&z).map(|(y, zz)| y.eval(x) * zz).sum();
                x += it.v.eval(x) * dt + dw;
                if (s + 1) % sample_every.max(1) == 0 {
                    out.push(x);
                }
            }
            Ok(out)
        })
        .collect()
}

/// `n` uniform phases on `[-pi, pi)`.
pub fn phase_nodes(n: usize) -> Vec<f64> {
    nodes(n)
}

/// Ensemble of unwrapped Newton phase series, one per initial phase.
/// Trajectory `i` uses noise stream `first_trajectory + i`; the phase is
/// sampled every `sample_every` steps, including `t = 0`. A path ends early
/// if the Newton solve fails.
pub fn phase_ensemble(
    sim: &Simulator,
    atlas: &ManifoldAtlas,
    base: &SimConfig,
    initial_phases: &[f64],
    first_trajectory: u64,
    sample_every: usize,
) -> Result<Vec<Vec<f64>>> {
    base.validate()?;
    let every = sample_every.max(1);
    let fast = crate::variational::FastPhase::new(atlas);
    initial_phases
        .par_iter()
        .enumerate()
        .map(|(i, &a0)| {
            let cfg = SimConfig { initial_phase: a0, trajectory: first_trajectory + i as u64, ..base.clone() };
            let mut beta = a0;
            let mut out = Vec::with_capacity(cfg.n_steps() / every + 1);
            out.push(beta);
            sim.run_with(&cfg, atlas.at(a0).phi, |ev| {
                match fast.newton_spectral(&ev.next.spectrum(), beta) {
                    Ok(b) => beta = b,
                    Err(_) => return crate::sim::Control::Stop,
                }
                if (ev.step + 1) % every == 0 {
                    out.push(beta);
                }
                crate::sim::Control::Continue
            })?;
            Ok(out)
        })
        .collect()
}
