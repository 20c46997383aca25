use fujita_core::semilinear::{simulate, Frame, InitialData, OutcomeKind, SimControls};
use fujita_core::Manifold;
use proptest::prelude::*;

fn physical(horizon: f64, snapshots: Vec<f64>) -> SimControls<f64> {
    SimControls {
        frame: Frame::Physical,
        cells: 256,
        horizon: Some(horizon),
        r_outer: Some(24.0),
        dt_max: 0.01,
        snapshots,
        ..SimControls::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn larger_data_stays_above(n in 1usize..=3, p in 1.3f64..3.5, a in 0.01f64..0.3, ratio in 1.0f64..2.0, width in 0.5f64..2.0) {
        let m = Manifold::euclidean(n).unwrap();
        let c = physical(2.0, vec![0.5, 1.0, 2.0]);
        let lo = simulate(&m, p, &InitialData::gaussian(a, width), &c).unwrap();
        let hi = simulate(&m, p, &InitialData::gaussian(a * ratio, width), &c).unwrap();
        prop_assert_eq!(lo.snapshots.len(), hi.snapshots.len());
        for (u, v) in lo.snapshots.iter().zip(&hi.snapshots) {
            prop_assert!((u.t - v.t).abs() < 1e-12);
            for (x, y) in u.values.iter().zip(&v.values) {
                prop_assert!(*x <= *y + 1e-12 * y.abs().max(1.0));
            }
        }
    }
}

#[test]
fn blow_up_time_is_resolution_stable() {
    for (n, p, amp) in [(1usize, 2.0, 2.0), (2, 1.5, 1.0), (3, 1.4, 1.0)] {
        let m = Manifold::euclidean(n).unwrap();
        let u0 = InitialData::gaussian(amp, 1.0);
        let t_star = |cells: usize| {
            let c = SimControls { cells, ..SimControls::default() };
            match simulate(&m, p, &u0, &c).unwrap().kind {
                OutcomeKind::BlowUp { t_star } => t_star,
                other => panic!("n = {n}: expected blow-up, got {other:?}"),
            }
        };
        let (coarse, fine) = (t_star(512), t_star(1024));
        assert!((coarse - fine).abs() <= 0.1 * fine, "n = {n}: {coarse} vs {fine}");
    }
}

#[test]
fn global_curve_is_step_stable() {
    let m = Manifold::euclidean(2).unwrap();
    let u0 = InitialData::gaussian(0.5, 1.0);
    let run = |dtau: f64| {
        let c = SimControls { dtau_max: dtau, tau_max: 40.0, ..SimControls::default() };
        let o = simulate(&m, 3.0, &u0, &c).unwrap();
        assert!(o.kind.is_global(), "{:?}", o.kind);
        o.history
    };
    let (full, half) = (run(0.01), run(0.005));
    assert_eq!(full.len(), half.len());
    let scale = full.iter().fold(0.0f64, |a, s| a.max(s.sup_u));
    let worst = full
        .iter()
        .zip(&half)
        .map(|(a, b)| {
            assert!((a.clock - b.clock).abs() < 1e-9);
            (a.sup_u - b.sup_u).abs()
        })
        .fold(0.0f64, f64::max);
    assert!(worst <= 0.01 * scale, "sup difference {worst} vs scale {scale}");
}

#[test]
fn ladder_moves_toward_blow_up() {
    let m = Manifold::euclidean(1).unwrap();
    let c = SimControls { cells: 512, ..SimControls::default() };
    let mut seen_blow_up = false;
    for amp in [1e-2, 1e-1, 1.0, 10.0] {
        let o = simulate(&m, 3.5, &InitialData::gaussian(amp, 1.0), &c).unwrap();
        if seen_blow_up {
            assert!(o.kind.is_blow_up(), "amplitude {amp} fell back to {:?}", o.kind);
        }
        seen_blow_up |= o.kind.is_blow_up();
    }
    assert!(seen_blow_up);
}
