use std::f64::consts::PI;
use std::sync::Arc;

use fujita_core::grid::RadialGrid;
use fujita_core::heat_kernel::{evolve, kernel_at_origin, HeatControls, RadialField};
use fujita_core::Manifold;
use proptest::prelude::*;

fn gaussian(n: usize, t: f64, r: f64) -> f64 {
    (4.0 * PI * t).powf(-(n as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
}

fn kernel_error(n: usize, cells: usize, t: f64) -> f64 {
    let m = Manifold::euclidean(n).unwrap();
    let c = HeatControls { cells, r_outer: Some(14.0), ..HeatControls::default() };
    let p = kernel_at_origin(&m, t, &c).unwrap();
    p.grid.nodes.iter().zip(&p.values).fold(0.0f64, |a, (&r, &v)| a.max((v - gaussian(n, t, r)).abs()))
}

#[test]
fn refinement_is_second_order() {
    for n in 1..=3 {
        let errs: Vec<f64> = [128, 256, 512].iter().map(|&c| kernel_error(n, c, 1.0)).collect();
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 3.5, "n = {n}: {errs:?}");
        }
    }
}

#[test]
fn on_diagonal_values() {
    for n in 1..=3 {
        let m = Manifold::euclidean(n).unwrap();
        for t in [0.25, 1.0, 4.0] {
            let p = kernel_at_origin(&m, t, &HeatControls::default()).unwrap();
            let exact = (4.0 * PI * t).powf(-(n as f64) / 2.0);
            assert!((p.values[0] / exact - 1.0).abs() < 0.02, "n = {n}, t = {t}");
            assert!(p.mass() <= 1.0 + 1e-6);
        }
    }
}

fn bump_field(grid: &Arc<RadialGrid<f64>>, amp: f64, center: f64, width: f64) -> RadialField<f64> {
    RadialField::from_fn(Arc::clone(grid), |r| amp * (-((r - center) / width).powi(2)).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positivity_mass_and_comparison(
        n in 1usize..4,
        amp in 0.1f64..10.0,
        center in 0.0f64..6.0,
        width in 0.3f64..3.0,
        extra in 0.0f64..5.0,
        span in 0.01f64..3.0,
    ) {
        let m = Manifold::euclidean(n).unwrap();
        let grid = Arc::new(RadialGrid::new(&m, 20.0, 256, 0.0).unwrap());
        let c = HeatControls::default();
        let u = bump_field(&grid, amp, center, width);
        let mut v = u.clone();
        for (x, &r) in v.values.iter_mut().zip(&grid.nodes) {
            *x += extra * (-r / 4.0).exp();
        }
        let eu = evolve(&u, span, &c).unwrap();
        let ev = evolve(&v, span, &c).unwrap();
        prop_assert!(eu.min() >= -1e-12);
        prop_assert!(eu.mass() <= u.mass() * (1.0 + 1e-12));
        for (a, b) in eu.values.iter().zip(&ev.values) {
            prop_assert!(*a <= *b + 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn mass_is_nonincreasing_in_time(t1 in 0.1f64..2.0, dt in 0.1f64..2.0) {
        let m = Manifold::euclidean(2).unwrap();
        let grid = Arc::new(RadialGrid::new(&m, 6.0, 256, 0.0).unwrap());
        let c = HeatControls::default();
        let a = evolve(&RadialField::delta(grid), t1, &c).unwrap();
        let b = evolve(&a, dt, &c).unwrap();
        prop_assert!(a.mass() <= 1.0 + 1e-12);
        prop_assert!(b.mass() <= a.mass() * (1.0 + 1e-12));
    }
}
