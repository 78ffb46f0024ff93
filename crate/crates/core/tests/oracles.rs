//! Cross-checks of the fast paths against independent slow computations.

mod common;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavephase::grid::{convolve, convolve_direct, differentiate, translate, Field};
use wavephase::isochronal::{
    dtheta_approx, phase_law_coeffs, Isochron, PhaseLawCoeffs, QvIntegrator, SemigroupMethod,
};
use wavephase::manifold::Dynamics;
use wavephase::noise::{NoiseModel, NoiseSpec, WienerIncrement};
use wavephase::ring::{estimate_semigroup_decay, RingModel};
use wavephase::stats::{
    stationary_closed_form, stationary_density, stationary_spectral, total_variation, transition_density,
    wilson_interval, wrapped_gaussian,
};
use wavephase::variational::{g_value, newton_phase, sde_coeffs, FastPhase};

use common::{noise, pinned_asymmetric, setup, small};

fn random_field(grid: &std::sync::Arc<wavephase::Grid>, seed: u64, scale: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<(f64, f64)> = (0..6).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    Field::from_fn(grid, |t| scale * a.iter().enumerate().map(|(k, (c, s))| c * (k as f64 * t).cos() + s * (k as f64 * t).sin()).sum::<f64>())
}

#[test]
fn fft_convolution_matches_direct_sum() {
    let grid = wavephase::Grid::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = Field::new(&grid, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let f = Field::new(&grid, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let a = convolve(&k, &f).unwrap();
    let b = convolve_direct(&k, &f).unwrap();
    assert!(a.sub(&b).max_abs() < 1e-10);
}

#[test]
fn bump_residual_by_direct_quadrature() {
    let s = setup();
    let u = &s.atlas.profile;
    let h = s.grid.spacing();
    let nodes = s.grid.nodes();
    let worst = (0..nodes.len())
        .map(|j| {
            let conv: f64 = (0..nodes.len())
                .map(|k| h * s.params.kernel(nodes[j] - nodes[k]) * s.params.sigmoid(u.values()[k]))
                .sum();
            (conv - u.values()[j]).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn linearization_matches_finite_differences() {
    let s = setup();
    let model = s.atlas.model();
    let u = s.atlas.profile.add(&random_field(&s.grid, 1, 0.1));
    let w = random_field(&s.grid, 2, 1.0);
    let h = 1e-5;
    let fd = model.drift(&u.axpy(h, &w)).sub(&model.drift(&u.axpy(-h, &w))).scale(0.5 / h);
    assert!(fd.sub(&model.linearize(&u, &w)).max_abs() < 1e-7);
    let fd2 = model
        .d_nonlinear(&u.axpy(h, &w), &w)
        .sub(&model.d_nonlinear(&u.axpy(-h, &w), &w))
        .scale(0.5 / h);
    assert!(fd2.sub(&model.d2_nonlinear(&u, &w, &w)).max_abs() < 1e-6);
}

#[test]
fn adjoint_null_vector_matches_dense_svd() {
    let s = setup();
    let model = RingModel::new(&s.params, &s.grid).unwrap();
    let lt = model.linearization_matrix(&s.atlas.profile).transpose();
    let svd = lt.clone().svd(true, true);
    let (idx, smin) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!(*smin < 1e-8, "{smin}");
    let v_t = svd.v_t.unwrap();
    let null: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let null = Field::new(&s.grid, null).unwrap();
    let psi = &s.atlas.adjoint;
    let scale = psi.dot(&null) / null.dot(&null);
    assert!(psi.sub(&null.scale(scale)).max_abs() < 1e-8 * psi.max_abs());
}

#[test]
fn spectrum_matches_dense_matrix_oracle() {
    // Characteristic residual of each reported eigenvalue against the raw matrix.
    let s = small();
    let model = RingModel::new(&s.params, &s.grid).unwrap();
    let l = model.linearization_matrix(&s.atlas.profile);
    let n = l.nrows();
    for &lam in &s.atlas.spectrum[..3] {
        let shifted = &l - DMatrix::identity(n, n) * lam;
        let smin = shifted.singular_values().min();
        assert!(smin < 1e-8, "lambda = {lam}: sigma_min = {smin}");
    }
}

#[test]
fn semigroup_decay_rate_matches_spectral_gap() {
    let s = setup();
    let d = estimate_semigroup_decay(&s.atlas, &s.params).unwrap();
    assert!((d.b_est - s.atlas.gap_b).abs() < 0.05 * s.atlas.gap_b, "{} vs {}", d.b_est, s.atlas.gap_b);
    assert!(d.c_est >= 1.0);
}

#[test]
fn newton_phase_matches_scan_and_bisection() {
    let s = setup();
    for seed in 0..4 {
        let u = s.atlas.at(0.3).phi.add(&random_field(&s.grid, 10 + seed, 0.01));
        let g = |b: f64| g_value(&u, &[b], &s.atlas)[0];
        // Dense scan around the guess for a sign change, then bisection.
        let steps = 2000;
        let (lo, hi) = (0.3 - 0.5, 0.3 + 0.5);
        let mut bracket = None;
        for k in 0..steps {
            let a = lo + (hi - lo) * k as f64 / steps as f64;
            let b = lo + (hi - lo) * (k + 1) as f64 / steps as f64;
            if g(a) * g(b) <= 0.0 {
                bracket = Some((a, b));
                break;
            }
        }
        let (mut a, mut b) = bracket.expect("sign change");
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(a) * g(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let beta = newton_phase(&u, 0.3, &s.atlas).unwrap();
        assert!((beta - 0.5 * (a + b)).abs() < 1e-8);
    }
}

#[test]
fn spectral_pairing_matches_quadrature() {
    let s = setup();
    let fast = FastPhase::new(&s.atlas);
    let u = s.atlas.at(0.1).phi.add(&random_field(&s.grid, 5, 0.05));
    let beta = 0.4321;
    let (g, m) = fast.g_and_m(&u.spectrum(), beta);
    let p = s.atlas.at(beta);
    let g_direct = u.sub(&p.phi).dot(&p.psi);
    let m_direct = 1.0 - u.sub(&p.phi).dot(&p.psi_d);
    assert!((g - g_direct).abs() < 1e-12);
    assert!((m - m_direct).abs() < 1e-12);
}

#[test]
fn mass_matrix_matches_finite_difference_of_g() {
    let s = setup();
    let u = s.atlas.at(0.0).phi.add(&random_field(&s.grid, 8, 0.02));
    let beta = 0.05;
    let mm = wavephase::variational::mass_matrix(&u, &[beta], &s.atlas);
    let h = 1e-6;
    let dg = (g_value(&u, &[beta + h], &s.atlas)[0] - g_value(&u, &[beta - h], &s.atlas)[0]) / (2.0 * h);
    assert!((mm.m[(0, 0)] + dg).abs() < 1e-7, "{} vs {}", mm.m[(0, 0)], -dg);
}

#[test]
fn drift_at_zero_noise_is_the_taylor_remainder() {
    let s = setup();
    let spec = NoiseSpec::default();
    let nm = noise(&spec, &s.grid);
    let p = s.atlas.at(0.0);
    let w = random_field(&s.grid, 9, 1.0);
    let w = w.axpy(-p.psi.dot(&w), &p.phi_d);
    let model = s.atlas.model();
    let predicted = 0.5 * model.d2_nonlinear(&p.phi, &w, &w).dot(&p.psi);
    let mut prev = f64::INFINITY;
    for &h in &[1e-2, 5e-3, 2.5e-3] {
        let u = p.phi.axpy(h, &w);
        let beta = newton_phase(&u, 0.0, &s.atlas).unwrap();
        let c = sde_coeffs(&u, beta, &s.atlas, &nm, 0.0, &s.params).unwrap();
        let defect = (c.v[0] - predicted * h * h).abs() / (h * h);
        assert!(defect < prev, "defect must shrink with h: {defect} vs {prev}");
        assert!(defect < 5.0 * h * predicted.abs().max(1.0));
        prev = defect;
    }
}

#[test]
fn quad_var_at_base_point_is_sum_of_squared_pairings() {
    let s = setup();
    let nm = noise(&NoiseSpec::default(), &s.grid);
    let p = s.atlas.at(0.7);
    let eps = 0.03;
    let c = sde_coeffs(&p.phi, 0.7, &s.atlas, &nm, eps, &s.params).unwrap();
    let h = s.grid.spacing();
    let direct: f64 = (0..nm.dim())
        .map(|j| {
            let e = nm.mode(&p.phi, j);
            let pair: f64 = e.values().iter().zip(p.psi.values()).map(|(a, b)| a * b * h).sum();
            pair * pair
        })
        .sum();
    assert!((c.quad_var[(0, 0)] - eps * eps * direct).abs() < 1e-12 * direct.max(1.0));
}

#[test]
fn noise_covariance_matches_monte_carlo() {
    let s = small();
    let spec = NoiseSpec { seed: 4, mode_amps: vec![1.0, 0.8, 0.5, 0.3], ..Default::default() };
    let nm = NoiseModel::new(&spec, &s.grid).unwrap();
    let u = s.atlas.profile.clone();
    let cov = nm.covariance(&u);
    let n_samples = 20000;
    let (a, b) = (3usize, 11usize);
    let mut acc = [0.0; 3];
    for k in 0..n_samples {
        let z = WienerIncrement::draw(spec.seed, 0, k, 1.0, nm.dim());
        let f = nm.apply(&u, &z.coeffs);
        acc[0] += f.values()[a] * f.values()[a];
        acc[1] += f.values()[a] * f.values()[b];
        acc[2] += f.values()[b] * f.values()[b];
    }
    let m = n_samples as f64;
    let est = [acc[0] / m, acc[1] / m, acc[2] / m];
    let exact = [cov[a][a], cov[a][b], cov[b][b]];
    let se = (2.0 * exact[0] * exact[2] / m).sqrt().max(1e-12);
    for (e, x) in est.iter().zip(&exact) {
        assert!((e - x).abs() < 4.0 * se.max(x.abs() * (2.0 / m).sqrt()), "{e} vs {x}");
    }
}

#[test]
fn isochron_derivative_matches_finite_differences() {
    let s = setup();
    let iso = Isochron::new(&s.atlas, &s.params).unwrap();
    let alpha = 0.2;
    let w = random_field(&s.grid, 12, 1.0);
    let approx = dtheta_approx(alpha, &w, &s.atlas);
    let base = s.atlas.at(alpha).phi;
    let mut defects = Vec::new();
    for &h in &[4e-3, 2e-3] {
        let plus = iso.phase(&base.axpy(h, &w), Some(alpha)).unwrap().gamma;
        let minus = iso.phase(&base.axpy(-h, &w), Some(alpha)).unwrap().gamma;
        defects.push(((plus - minus) / (2.0 * h) - approx).abs());
    }
    assert!(defects[0] < 1e-3, "{defects:?}");
    assert!(defects[1] < defects[0] || defects[1] < 1e-8, "{defects:?}");
}

#[test]
fn spectral_qv_matches_time_stepping() {
    let s = setup();
    let w = random_field(&s.grid, 13, 1.0);
    let t_cut = 20.0 / s.atlas.gap_b;
    let a = QvIntegrator::new(&s.atlas, 0.25, t_cut, SemigroupMethod::Spectral).unwrap().integral(&w);
    let b = QvIntegrator::new(&s.atlas, 0.25, t_cut, SemigroupMethod::TimeStepping { ds: 0.01 })
        .unwrap()
        .integral(&w);
    assert!((a - b).abs() < 1e-7 * a.abs().max(1e-3), "{a} vs {b}");
}

fn smooth_law() -> PhaseLawCoeffs {
    let n = 64;
    let x: Vec<f64> = (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
    let v = x.iter().map(|a| 0.2 + 0.3 * a.sin() - 0.1 * (2.0 * a).cos()).collect();
    let h = x.iter().map(|a| 1.0 + 0.4 * a.cos()).collect();
    PhaseLawCoeffs::from_samples(v, h).unwrap()
}

#[test]
fn fp_stationary_routes_agree() {
    let law = smooth_law();
    let (a, flux) = stationary_closed_form(&law, 128).unwrap();
    let b = stationary_spectral(&law, 128).unwrap();
    assert!(total_variation(&a, &b) < 1e-6);
    assert!(flux > 0.0);
    let p = stationary_density(&law).unwrap();
    assert!((p.mass() - 1.0).abs() < 1e-12);
    assert!(p.density.iter().all(|&x| x > 0.0));
}

/// Conservative finite-volume upwind-free scheme run to steady state.
fn fd_stationary(law: &PhaseLawCoeffs, m: usize) -> Vec<f64> {
    let it = law.interpolant();
    let dx = 2.0 * PI / m as f64;
    let x: Vec<f64> = (0..m).map(|k| -PI + k as f64 * dx).collect();
    // Fluxes at half nodes x_{k+1/2}: J = V p - (D p)', D = H / 2.
    let xh: Vec<f64> = x.iter().map(|a| a + 0.5 * dx).collect();
    let vh: Vec<f64> = xh.iter().map(|&a| it.v.eval(a)).collect();
    let d: Vec<f64> = x.iter().map(|&a| 0.5 * it.h.eval(a)).collect();
    let mut p = vec![1.0 / (2.0 * PI); m];
    let dt = 0.2 * dx * dx / d.iter().cloned().fold(0.0, f64::max);
    for _ in 0..(40.0 / dt) as usize {
        let flux: Vec<f64> = (0..m)
            .map(|k| {
                let k1 = (k + 1) % m;
                vh[k] * 0.5 * (p[k] + p[k1]) - (d[k1] * p[k1] - d[k] * p[k]) / dx
            })
            .collect();
        for k in 0..m {
            p[k] -= dt * (flux[k] - flux[(k + m - 1) % m]) / dx;
        }
    }
    p
}

#[test]
fn fp_stationary_matches_time_stepping_oracle() {
    let law = smooth_law();
    let m = 256;
    let fd = fd_stationary(&law, m);
    let (spec, _) = stationary_closed_form(&law, m).unwrap();
    assert!(total_variation(&fd, &spec) < 1e-3, "{}", total_variation(&fd, &spec));
}

#[test]
fn transition_density_relaxes_to_stationary() {
    let law = smooth_law();
    let p = stationary_density(&law).unwrap();
    let early = transition_density(&law, 0.5, 0.05).unwrap();
    let late = transition_density(&law, 0.5, 60.0).unwrap();
    assert!((early.mass() - 1.0).abs() < 1e-10);
    assert!(total_variation(&early.density, &p.density) > 0.3);
    assert!(total_variation(&late.density, &p.density) < 1e-6);
}

#[test]
fn wrapped_gaussian_has_unit_mass_and_given_mean() {
    let m = 128;
    let p = wrapped_gaussian(m, 1.0, 0.1);
    let h = 2.0 * PI / m as f64;
    let xs: Vec<f64> = (0..m).map(|k| -PI + k as f64 * h).collect();
    let mass: f64 = p.iter().sum::<f64>() * h;
    let mean: f64 = p.iter().zip(&xs).map(|(q, x)| q * x).sum::<f64>() * h;
    assert!((mass - 1.0).abs() < 1e-12);
    assert!((mean - 1.0).abs() < 1e-8);
}

#[test]
fn wilson_interval_reference_values() {
    // Reference values of the 95% Wilson score interval.
    let (lo, hi) = wilson_interval(0, 10);
    assert!(lo == 0.0 && (hi - 0.277_54).abs() < 1e-4);
    let (lo, hi) = wilson_interval(50, 100);
    assert!((lo - 0.403_83).abs() < 1e-4 && (hi - 0.596_17).abs() < 1e-4);
}

#[test]
fn phase_law_is_flat_for_isotropic_noise() {
    let s = setup();
    let nm = noise(&NoiseSpec::default(), &s.grid);
    let law = phase_law_coeffs(&s.atlas, &nm, &s.params, 16).unwrap();
    let h0 = law.h[0];
    assert!(law.h.iter().all(|h| (h - h0).abs() < 1e-10));
    assert!(law.v_tilde.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn pinned_noise_makes_phase_law_nonconstant() {
    let s = setup();
    let nm = noise(&pinned_asymmetric(0), &s.grid);
    let law = phase_law_coeffs(&s.atlas, &nm, &s.params, 32).unwrap();
    let (lo, hi) = law.h.iter().fold((f64::INFINITY, 0.0f64), |(a, b), h| (a.min(*h), b.max(*h)));
    assert!(hi > 1.5 * lo);
}

#[test]
fn translation_commutes_with_differentiation() {
    let s = setup();
    let u = random_field(&s.grid, 14, 1.0);
    let a = differentiate(&translate(&u, 0.37), 1);
    let b = translate(&differentiate(&u, 1), 0.37);
    assert!(a.sub(&b).max_abs() < 1e-12);
}
