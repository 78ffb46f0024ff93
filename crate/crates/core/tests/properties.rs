mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use wavephase::grid::{convolve, translate, Field, Grid};
use wavephase::isochronal::Trig;
use wavephase::noise::WienerIncrement;
use wavephase::stats::{occupation_histogram, wilson_interval, wrap};
use wavephase::variational::FastPhase;

use common::setup;

fn field(n: usize, vals: &[f64]) -> Field {
    let grid = Grid::new(n).unwrap();
    Field::new(&grid, vals[..n].to_vec()).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_is_an_isometry(v in values(32), s in -7.0f64..7.0) {
        let f = field(32, &v);
        let g = translate(&f, s);
        prop_assert!((g.norm() - f.norm()).abs() < 1e-12 * f.norm().max(1.0));
    }

    #[test]
    fn translations_compose(v in values(32), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = field(32, &v);
        let lhs = translate(&translate(&f, a), b);
        let rhs = translate(&f, a + b);
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn full_turn_is_identity(v in values(32)) {
        let f = field(32, &v);
        prop_assert!(translate(&f, 2.0 * PI).sub(&f).max_abs() < 1e-12);
    }

    #[test]
    fn convolution_commutes_with_translation(k in values(32), v in values(32), s in -3.0f64..3.0) {
        let kf = field(32, &k);
        let f = field(32, &v);
        let a = convolve(&kf, &translate(&f, s)).unwrap();
        let b = translate(&convolve(&kf, &f).unwrap(), s);
        prop_assert!(a.sub(&b).max_abs() < 1e-11);
    }

    #[test]
    fn trig_interpolant_reproduces_samples(v in values(17)) {
        let t = Trig::new(&v);
        let n = v.len();
        for (k, y) in v.iter().enumerate() {
            let x = -PI + 2.0 * PI * k as f64 / n as f64;
            prop_assert!((t.eval(x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn wilson_interval_brackets_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-15 && p <= hi + 1e-15 && hi <= 1.0);
    }

    #[test]
    fn wrap_lands_in_fundamental_interval(a in -1e4f64..1e4) {
        let w = wrap(a);
        prop_assert!((-PI..PI).contains(&w));
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn histogram_has_unit_mass(
        paths in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 1..40), 1..6),
        bins in 1usize..40,
    ) {
        let h = occupation_histogram(&paths, bins).unwrap();
        let mass: f64 = h.masses().iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(h.density.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn wiener_draws_are_reproducible(seed in any::<u64>(), traj in any::<u32>(), step in any::<u32>()) {
        let a = WienerIncrement::draw(seed, traj as u64, step as u64, 0.01, 5);
        let b = WienerIncrement::draw(seed, traj as u64, step as u64, 0.01, 5);
        prop_assert_eq!(&a, &b);
        let c = WienerIncrement::draw(seed, traj as u64, step as u64 + 1, 0.01, 5);
        prop_assert_ne!(a, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn newton_phase_is_translation_equivariant(
        s in -3.0f64..3.0,
        coeffs in prop::collection::vec(-0.02f64..0.02, 6),
    ) {
        let st = setup();
        let fast = FastPhase::new(&st.atlas);
        let noise = Field::from_fn(&st.grid, |t| {
            coeffs.iter().enumerate().map(|(k, c)| c * ((k as f64 + 1.0) * t + k as f64).cos()).sum::<f64>()
        });
        let u = st.atlas.profile.add(&noise);
        let b0 = fast.newton(&u, 0.0).unwrap();
        let b1 = fast.newton(&translate(&u, s), s).unwrap();
        prop_assert!((b1 - b0 - s).abs() < 1e-8, "{} vs {}", b1 - b0, s);
    }

    #[test]
    fn newton_phase_zeroes_the_constraint(coeffs in prop::collection::vec(-0.05f64..0.05, 6), guess in -0.2f64..0.2) {
        let st = setup();
        let fast = FastPhase::new(&st.atlas);
        let noise = Field::from_fn(&st.grid, |t| {
            coeffs.iter().enumerate().map(|(k, c)| c * ((k as f64) * t).sin()).sum::<f64>()
        });
        let u = st.atlas.at(0.1).phi.add(&noise);
        let b = fast.newton(&u, 0.1 + guess).unwrap();
        let (g, m) = fast.g_and_m(&u.spectrum(), b);
        prop_assert!(g.abs() < 1e-10);
        prop_assert!(m > 0.5);
        prop_assert!((b - 0.1).abs() < 0.5);
    }
}
