//! Experiment dispatch. Each experiment produces named artifacts which are
//! then written by a single writer, followed by the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use wavephase::grid::Grid;
use wavephase::isochronal::{integrate_isochronal_sde_with, phase_law_coeffs, IsoSdeOptions, PhaseLawCoeffs};
use wavephase::noise::NoiseModel;
use wavephase::ring::{build_atlas, solve_bump, ManifoldAtlas};
use wavephase::sim::{SimConfig, Simulator};
use wavephase::stats::{
    exit_probability_experiment, expected_drift, mean_drift, occupation_histogram, phase_ensemble, phase_nodes,
    stationary_density, total_variation_masses, transition_densities, FPDensity,
};
use wavephase::variational::integrate_phase_sde_with;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::io::{write_atomic, Table};
use crate::plot::{render, Series};

/// A file produced by an experiment, relative to the output directory.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, s: String) -> Artifact {
        Artifact { name: name.into(), bytes: s.into_bytes() }
    }

    fn json<T: Serialize>(name: &str, v: &T) -> Artifact {
        let mut s = serde_json::to_string_pretty(v).expect("serializable result");
        s.push('\n');
        Artifact::text(name, s)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub kind: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
    pub elapsed_seconds: f64,
    pub config: ExperimentConfig,
}

/// SHA-256 of the canonical JSON encoding of the effective configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canon = serde_json::to_vec(cfg).expect("serializable config");
    Sha256::digest(canon).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the experiment and writes its artifacts and `manifest.json` into `out`.
/// The manifest is written even when the experiment fails.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let result = produce(cfg);
    let mut manifest = Manifest {
        tool: "wavephase",
        version: env!("CARGO_PKG_VERSION"),
        schema_version: cfg.schema_version,
        kind: cfg.kind.name(),
        config_sha256: config_hash(cfg),
        seed: cfg.noise_spec().seed,
        threads: rayon::current_num_threads(),
        status: "ok".into(),
        error: None,
        files: Vec::new(),
        elapsed_seconds: 0.0,
        config: cfg.clone(),
    };
    let outcome = result.and_then(|arts| {
        for a in &arts {
            write_atomic(&out.join(&a.name), &a.bytes)?;
            manifest.files.push(a.name.clone());
        }
        Ok(())
    });
    if let Err(e) = &outcome {
        manifest.status = "error".into();
        manifest.error = Some(e.to_string());
    }
    manifest.elapsed_seconds = start.elapsed().as_secs_f64();
    let mut json = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    json.push('\n');
    write_atomic(&out.join("manifest.json"), json.as_bytes())?;
    outcome.map(|_| manifest)
}

/// Output directory: CLI flag, then config, then `./out`.
pub fn output_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

struct Setup {
    atlas: ManifoldAtlas,
    noise: NoiseModel,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let grid = Grid::new(cfg.n_points)?;
    let bump = solve_bump(&cfg.model, &grid)?;
    let atlas = build_atlas(&cfg.model, &bump)?;
    let noise = NoiseModel::new(&cfg.noise_spec(), &grid)?;
    Ok(Setup { atlas, noise })
}

fn produce(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let s = setup(cfg)?;
    match cfg.kind {
        ExperimentKind::Atlas => Ok(atlas_artifacts(&s.atlas)),
        ExperimentKind::PhaseCompare => phase_compare(cfg, &s),
        ExperimentKind::ExitScan => exit_scan(cfg, &s),
        ExperimentKind::Occupation => ensemble(cfg, &s, false),
        ExperimentKind::Drift => ensemble(cfg, &s, true),
        ExperimentKind::FpSolve => fp_solve(cfg, &s),
    }
}

#[derive(Serialize)]
struct AtlasHeader<'a> {
    b_est: f64,
    c_est: f64,
    kappa_bar: f64,
    n_points: usize,
    params: &'a wavephase::ring::RingModelParams,
    spectrum: &'a [f64],
}

fn atlas_artifacts(atlas: &ManifoldAtlas) -> Vec<Artifact> {
    let theta = atlas.grid().nodes().to_vec();
    let cols: [&[f64]; 7] = [
        &theta,
        atlas.profile.values(),
        atlas.profile_deriv.values(),
        atlas.profile_deriv2.values(),
        atlas.adjoint.values(),
        atlas.adjoint_deriv.values(),
        atlas.adjoint_deriv2.values(),
    ];
    let table = Table::from_columns(&["theta", "phi", "phi_d", "phi_dd", "psi", "psi_d", "psi_dd"], &cols);
    let header = AtlasHeader {
        b_est: atlas.gap_b,
        c_est: atlas.gap_c,
        kappa_bar: atlas.kappa_bar(),
        n_points: theta.len(),
        params: &atlas.params,
        spectrum: &atlas.spectrum,
    };
    let svg = render(
        "Bump profile and adjoint null vector",
        "theta",
        "value",
        &[Series::line("phi", &theta, atlas.profile.values()), Series::line("psi", &theta, atlas.adjoint.values())],
    );
    vec![Artifact::text("atlas.csv", table.to_csv()), Artifact::json("atlas.json", &header), Artifact::text("atlas.svg", svg)]
}

fn phase_compare(cfg: &ExperimentConfig, s: &Setup) -> Result<Vec<Artifact>, CliError> {
    let sim = &cfg.sim;
    let u0 = s.atlas.at(sim.initial_phase).phi;
    let vp = integrate_phase_sde_with(sim, &u0, &s.atlas, &s.noise, &cfg.model, None)?;
    let law = phase_law_coeffs(&s.atlas, &s.noise, &cfg.model, cfg.phase_grid_size)?;
    let opts = IsoSdeOptions { phase_grid_size: cfg.phase_grid_size, ..Default::default() };
    let ip = integrate_isochronal_sde_with(sim, &u0, &s.atlas, &s.noise, &cfg.model, &law, &opts)?;
    let vt = Table::from_columns(
        &["t", "beta_newton", "beta_sde", "det_M", "amp_norm"],
        &[&vp.t, &vp.beta_newton, &vp.beta_sde, &vp.det_m, &vp.amp_norm],
    );
    let it = Table::from_columns(&["t", "gamma_sde", "beta_newton"], &[&ip.t, &ip.gamma_sde, &ip.beta_newton]);
    let checks = Table::from_columns(&["t", "gamma_direct"], &[&ip.check_t, &ip.gamma_direct]);
    let svg = render(
        "Phase along one trajectory",
        "t",
        "phase",
        &[
            Series::line("beta (Newton)", &vp.t, &vp.beta_newton),
            Series::line("beta (SDE)", &vp.t, &vp.beta_sde),
            Series::line("gamma (SDE)", &ip.t, &ip.gamma_sde),
            Series::points("gamma (flow)", &ip.check_t, &ip.gamma_direct),
        ],
    );
    #[derive(Serialize)]
    struct Summary {
        max_beta_deviation: f64,
        max_gamma_check_deviation: f64,
        stopped_at: Option<f64>,
        iso_exited_at: Option<f64>,
    }
    let summary = Summary {
        max_beta_deviation: vp.max_deviation,
        max_gamma_check_deviation: ip.max_check_deviation,
        stopped_at: vp.stopped_at,
        iso_exited_at: ip.exited_at,
    };
    Ok(vec![
        Artifact::text("phase_path.csv", vt.to_csv()),
        Artifact::text("iso_path.csv", it.to_csv()),
        Artifact::text("iso_checks.csv", checks.to_csv()),
        Artifact::json("phase_summary.json", &summary),
        Artifact::text("phase.svg", svg),
    ])
}

fn exit_scan(cfg: &ExperimentConfig, s: &Setup) -> Result<Vec<Artifact>, CliError> {
    let x = cfg.exit_scan.as_ref().ok_or_else(|| CliError::Validation("missing exit_scan section".into()))?;
    let grid: Vec<(f64, f64)> = x.grid.iter().map(|c| (c[0], c[1])).collect();
    let stats = exit_probability_experiment(&grid, x.t_end, x.n_trials, x.dt, &s.atlas, &s.noise, &cfg.model)?;
    let mut t = Table::new(["epsilon", "kappa", "t_end", "n_trials", "n_exits", "p_hat", "ci_low", "ci_high"]);
    for c in &stats.cells {
        t.push(vec![
            c.epsilon,
            c.kappa,
            c.t_end,
            c.n_trials as f64,
            c.n_exits as f64,
            c.p_hat,
            c.wilson_ci.0,
            c.wilson_ci.1,
        ]);
    }
    let xs: Vec<f64> = stats.cells.iter().map(|c| c.kappa * c.kappa / (c.epsilon * c.epsilon)).collect();
    let ys: Vec<f64> = stats.cells.iter().map(|c| if c.p_hat > 0.0 { c.p_hat.ln() } else { f64::NAN }).collect();
    let mut series = vec![Series::points("log p_hat", &xs, &ys)];
    if let Some(f) = &stats.fit {
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        series.push(Series::line("fit", &[lo, hi], &[f.intercept + f.slope * lo, f.intercept + f.slope * hi]));
    }
    let svg = render("Exit probability scaling", "kappa^2 / eps^2", "log p_hat", &series);
    Ok(vec![
        Artifact::text("exit_stats.csv", t.to_csv()),
        Artifact::json("exit_fit.json", &stats.fit),
        Artifact::text("exit.svg", svg),
    ])
}

fn coeffs_table(law: &PhaseLawCoeffs) -> Table {
    Table::from_columns(&["alpha", "V_tilde", "H", "gamma_qv"], &[&law.alpha, &law.v_tilde, &law.h, &law.gamma_qv])
}

fn density_table(p: &FPDensity) -> Table {
    Table::from_columns(&["alpha", "value"], &[&p.phase_nodes, &p.density])
}

fn ensemble(cfg: &ExperimentConfig, s: &Setup, drift: bool) -> Result<Vec<Artifact>, CliError> {
    let e = &cfg.ensemble;
    let law = phase_law_coeffs(&s.atlas, &s.noise, &cfg.model, cfg.phase_grid_size)?;
    let p_star = stationary_density(&law)?;
    let sim = Simulator::new(&cfg.model, &s.noise)?;
    let base = SimConfig { exit_threshold: None, ..cfg.sim.clone() };
    let starts = phase_nodes(e.n_trajectories);
    let paths = phase_ensemble(&sim, &s.atlas, &base, &starts, cfg.sim.trajectory, e.sample_every)?;
    let mut arts = vec![
        Artifact::text("phase_law.csv", coeffs_table(&law).to_csv()),
        Artifact::text("stationary_density.csv", density_table(&p_star).to_csv()),
    ];
    if drift {
        let est = mean_drift(&paths, base.n_steps() as f64 * base.dt, base.epsilon)?;
        let predicted = expected_drift(&law, &p_star);
        #[derive(Serialize)]
        struct DriftSummary {
            estimate: wavephase::stats::DriftEstimate,
            predicted: f64,
            relative_error: f64,
        }
        let rel = (est.mean - predicted).abs() / predicted.abs();
        arts.push(Artifact::json("drift.json", &DriftSummary { estimate: est, predicted, relative_error: rel }));
    } else {
        let h = occupation_histogram(&paths, e.n_bins)?;
        let tv = total_variation_masses(&h.masses(), &p_star.bin_masses(e.n_bins));
        let t = Table::from_columns(&["alpha", "value", "stderr"], &[&h.centers, &h.density, &h.stderr]);
        let svg = render(
            "Occupation histogram and stationary density",
            "alpha",
            "density",
            &[
                Series::points("histogram", &h.centers, &h.density),
                Series::line("p_*", &p_star.phase_nodes, &p_star.density),
            ],
        );
        #[derive(Serialize)]
        struct OccSummary {
            total_variation: f64,
            n_trajectories: usize,
        }
        arts.push(Artifact::text("histogram.csv", t.to_csv()));
        arts.push(Artifact::json("occupation.json", &OccSummary { total_variation: tv, n_trajectories: paths.len() }));
        arts.push(Artifact::text("occupation.svg", svg));
    }
    Ok(arts)
}

fn fp_solve(cfg: &ExperimentConfig, s: &Setup) -> Result<Vec<Artifact>, CliError> {
    let law = phase_law_coeffs(&s.atlas, &s.noise, &cfg.model, cfg.phase_grid_size)?;
    let p_star = stationary_density(&law)?;
    let mut times = cfg.fp.times.clone();
    times.sort_by(f64::total_cmp);
    let pts = transition_densities(&law, cfg.fp.xi, &times)?;
    let mut names = vec!["alpha".to_string(), "p_star".to_string()];
    names.extend(times.iter().map(|t| format!("t={t}")));
    let mut table = Table::new(names);
    for i in 0..p_star.density.len() {
        let mut row = vec![p_star.phase_nodes[i], p_star.density[i]];
        row.extend(pts.iter().map(|p| p.density[i]));
        table.push(row);
    }
    let mut series = vec![Series::line("p_*", &p_star.phase_nodes, &p_star.density)];
    for (t, p) in times.iter().zip(&pts) {
        series.push(Series::line(&format!("t = {t}"), &p.phase_nodes, &p.density));
    }
    let svg = render("Fokker-Planck densities", "alpha", "density", &series);
    #[derive(Serialize)]
    struct FpSummary {
        flux: f64,
    }
    Ok(vec![
        Artifact::text("phase_law.csv", coeffs_table(&law).to_csv()),
        Artifact::text("fp_densities.csv", table.to_csv()),
        Artifact::json("fp_summary.json", &FpSummary { flux: p_star.flux }),
        Artifact::text("fp.svg", svg),
    ])
}
