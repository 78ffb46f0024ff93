#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use wavephase::grid::Grid;
use wavephase::noise::{NoiseModel, NoiseSpec, Window};
use wavephase::ring::{build_atlas, solve_bump, ManifoldAtlas, RingModelParams};

pub struct Setup {
    pub params: RingModelParams,
    pub grid: Arc<Grid>,
    pub atlas: ManifoldAtlas,
}

fn build(n: usize) -> Setup {
    let params = RingModelParams::default();
    let grid = Grid::new(n).unwrap();
    let bump = solve_bump(&params, &grid).unwrap();
    let atlas = build_atlas(&params, &bump).unwrap();
    Setup { params, grid, atlas }
}

/// Default model on 128 points, built once per test binary.
pub fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| build(128))
}

/// Default model on 32 points.
pub fn small() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| build(32))
}

pub fn noise(spec: &NoiseSpec, grid: &Arc<Grid>) -> NoiseModel {
    NoiseModel::new(spec, grid).unwrap()
}

/// Noise on modes 1 and 2 with a reflection-symmetric window.
pub fn pinned_symmetric(seed: u64) -> NoiseSpec {
    NoiseSpec {
        mode_amps: vec![0.0, 3.0, 3.0],
        window: Some(Window { cos: vec![0.9], sin: vec![] }),
        seed,
        ..Default::default()
    }
}

/// Noise on modes 0..3 with a window that breaks reflection symmetry.
pub fn pinned_asymmetric(seed: u64) -> NoiseSpec {
    NoiseSpec {
        mode_amps: vec![0.0, 3.0, 3.0, 1.0],
        window: Some(Window { cos: vec![0.27, -0.43], sin: vec![-0.41, 0.33] }),
        seed,
        ..Default::default()
    }
}
