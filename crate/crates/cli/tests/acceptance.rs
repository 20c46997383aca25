//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness so the
//! lines always reach the terminal.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use fujita_core::certificate::{a_decay, build_certificate, verify_bounds, BoundSampling};
use fujita_core::criterion::classify;
use fujita_core::heat_kernel::{kernel_at_origin, semigroup_defect, verify_condition_h, HeatControls};
use fujita_core::manifold::builtin_families;
use fujita_core::picard::{
    apply_t, estimate_c4, iterate_to_fixed_point, sample_contraction, BallParams, PicardSetup, SpaceTimeField,
};
use fujita_core::semilinear::{simulate, sweep_exponent, Frame, InitialData, OutcomeKind, SimControls, SweepControls};
use fujita_core::{Manifold, VerdictKind};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| lo * (hi / lo).powf(j as f64 / (n - 1) as f64)).collect()
}

/// Sweeps bracket 1 + 2/n within ±0.15 for n = 1, 2.
fn fujita_threshold() -> Outcome {
    let controls = SweepControls {
        amplitudes: vec![0.01, 0.1, 1.0],
        width: 0.125,
        budget: 40,
        sim: SimControls { cells: 512, ..SimControls::default() },
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, lo, hi) in [(1usize, 2.0, 4.0), (2, 1.5, 3.0)] {
        let start = Instant::now();
        let m = Manifold::euclidean(n).unwrap();
        let r = sweep_exponent(&m, |a| InitialData::gaussian(a, 1.0), lo, hi, &controls)
            .map_err(|e| format!("n = {n}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        let (a, b) = r.bracket;
        let mid = 0.5 * (a + b);
        let target = 1.0 + 2.0 / n as f64;
        ok &= (mid - target).abs() <= 0.15 && r.calls <= 40 && secs <= 600.0;
        parts.push(format!("n = {n}: bracket [{a}, {b}], estimate {mid} vs {target}, {} calls, {secs:.0} s", r.calls));
    }
    check(ok, parts.join("; "))
}

/// Criterion verdicts against simulations on the six built-in families.
fn dichotomy_consistency() -> Outcome {
    let controls = SimControls { cells: 512, ..SimControls::default() };
    let mut contradictions = Vec::new();
    let mut runs = 0;
    let mut undetermined = 0;
    for b in builtin_families::<f64>() {
        let p_star = b.fujita_exponent();
        for (dp, amplitudes) in [(-0.25, &[0.01, 1.0][..]), (0.0, &[0.01, 1.0][..]), (0.25, &[0.01][..])] {
            let p = p_star + dp;
            let verdict = classify(&b.family, p).map_err(|e| format!("{}: {e}", b.name))?.kind;
            let expected = if p <= p_star { VerdictKind::Divergent } else { VerdictKind::Convergent };
            if verdict != expected {
                contradictions.push(format!("{} p = {p}: verdict {verdict:?}", b.name));
            }
            for &amp in amplitudes {
                let o =
                    simulate(&b.manifold, p, &InitialData::gaussian(amp, b.manifold.r_splice().max(1.0)), &controls)
                        .map_err(|e| format!("{} p = {p}: {e}", b.name))?;
                runs += 1;
                let near = (p - p_star).abs() <= 0.1;
                match (&verdict, &o.kind) {
                    (_, OutcomeKind::Undetermined(_)) if near => undetermined += 1,
                    (VerdictKind::Divergent, OutcomeKind::BlowUp { .. }) => {}
                    (VerdictKind::Convergent, OutcomeKind::GlobalEvidence { .. }) => {}
                    (VerdictKind::Convergent, OutcomeKind::BlowUp { .. }) if amp > 0.01 => {}
                    (v, k) => contradictions.push(format!("{} p = {p:.3}, A = {amp}: {v:?} but {}", b.name, k.label())),
                }
            }
        }
    }
    check(
        contradictions.is_empty(),
        format!("{runs} runs, {undetermined} undetermined at p*, contradictions: {contradictions:?}"),
    )
}

fn gaussian(n: usize, t: f64, r: f64) -> f64 {
    (4.0 * PI * t).powf(-(n as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
}

/// Discrete kernel against the Gaussian: values, mass, semigroup defect, refinement.
fn heat_kernel_oracle() -> Outcome {
    let mut worst_value = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut worst_defect = 0.0f64;
    let mut worst_ratio = f64::INFINITY;
    for n in 1..=3 {
        let m = Manifold::euclidean(n).unwrap();
        for t in [0.25, 1.0, 4.0] {
            let p = kernel_at_origin(&m, t, &HeatControls::default()).map_err(|e| e.to_string())?;
            worst_value = worst_value.max((p.values[0] / gaussian(n, t, 0.0) - 1.0).abs());
            worst_mass = worst_mass.max(p.mass());
        }
        let fine = HeatControls { cells: 4096, ..HeatControls::default() };
        worst_defect = worst_defect.max(semigroup_defect(&m, 1.0, 1.0, &fine).map_err(|e| e.to_string())?.relative());
        let errors: Vec<f64> = [256, 512, 1024]
            .iter()
            .map(|&cells| {
                let c = HeatControls { cells, r_outer: Some(14.0), ..HeatControls::default() };
                let p = kernel_at_origin(&m, 1.0, &c).unwrap();
                p.grid.nodes.iter().zip(&p.values).fold(0.0f64, |a, (&r, &v)| a.max((v - gaussian(n, 1.0, r)).abs()))
            })
            .collect();
        for w in errors.windows(2) {
            worst_ratio = worst_ratio.min(w[0] / w[1]);
        }
    }
    check(
        worst_value < 0.02 && worst_mass <= 1.0 + 1e-6 && worst_defect <= 1e-3 && worst_ratio >= 3.5,
        format!(
            "max value error {:.3}%, max mass {worst_mass:.9}, semigroup defect {worst_defect:.2e}, min refinement ratio {worst_ratio:.2}",
            100.0 * worst_value
        ),
    )
}

/// Condition (H) ratios flat over two decades; condition (G) constants.
fn conditions_h_and_g() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let times = logspace(0.1, 10.0, 9);
    for n in 1..=3 {
        let m = Manifold::euclidean(n).unwrap();
        let rep = verify_condition_h(&m, &times, &HeatControls::default()).map_err(|e| e.to_string())?;
        let lo = rep.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = rep.c1 / lo - 1.0;
        ok &= spread <= 0.10 && rep.bounded;
        parts.push(format!("H n = {n}: C1 {:.4}, spread {:.2}%", rep.c1, 100.0 * spread));
    }
    for n in 1..=6 {
        let g = Manifold::euclidean(n).unwrap().check_condition_g(0.1, 1e4);
        ok &= g.holds && g.c0 == Some((n - 1) as f64);
    }
    parts.push("G euclidean n = 1..6: C0 = n - 1".into());
    for b in builtin_families::<f64>()
        .into_iter()
        .filter(|b| b.name.starts_with("power") || b.name.starts_with("borderline"))
    {
        let m = &b.manifold;
        let g = m.check_condition_g(0.5 * m.r_splice(), m.r_max());
        let c0 = g.c0.unwrap_or(f64::INFINITY);
        ok &= g.holds && c0.is_finite() && b.family.exponents[0] >= 1.0;
        parts.push(format!("G {}: C0 {c0:.4}", b.name));
    }
    check(ok, parts.join("; "))
}

/// Envelope ball, contraction, fixed point against direct simulation, monotone iterates.
fn picard_construction() -> Outcome {
    let m = Manifold::euclidean(2).unwrap();
    let (p, delta) = (3.0, 2.0);
    let c4 = estimate_c4(&m, p, delta).map_err(|e| e.to_string())?.value;
    let c4_err = (c4 * 2.0 * PI * PI - 1.0).abs();

    let ball = BallParams::new(&m, p, delta, &PicardSetup::default()).map_err(|e| e.to_string())?;
    let factors = sample_contraction(&ball, 200, 7).map_err(|e| e.to_string())?;
    let worst = factors.iter().copied().fold(0.0, f64::max);

    let grid = ball.grid();
    let u0 = InitialData::Custom {
        radii: grid.nodes.clone(),
        values: ball.envelope.values[0].iter().map(|&e| 0.4 * e).collect(),
    };
    let mut u = SpaceTimeField::zeros(Arc::clone(grid), ball.times().to_vec());
    let mut monotone = true;
    for _ in 0..6 {
        let next = apply_t(&u0, &u, &ball).map_err(|e| e.to_string())?;
        monotone &=
            u.values.iter().flatten().zip(next.values.iter().flatten()).all(|(a, b)| *b >= *a - 1e-14 * a.abs());
        u = next;
    }

    let fp = iterate_to_fixed_point(&u0, &ball, 1e-12, 100).map_err(|e| e.to_string())?;
    let snapshots: Vec<f64> = ball.times().iter().copied().filter(|&t| t > 0.0 && t <= 10.0).collect();
    let sim = SimControls {
        frame: Frame::Physical,
        cells: 2048,
        r_outer: Some(grid.outer()),
        grading: 0.5,
        dt_max: 0.005,
        horizon: Some(10.0),
        snapshots: snapshots.clone(),
        ..SimControls::default()
    };
    let direct = simulate(&m, p, &u0, &sim).map_err(|e| e.to_string())?;
    let mut worst_gap = 0.0f64;
    for prof in &direct.snapshots {
        let j = ball.times().iter().position(|&t| (t - prof.t).abs() < 1e-9).ok_or("snapshot time mismatch")?;
        let row = &fp.solution.values[j];
        let scale = row.iter().copied().fold(0.0, f64::max);
        let gap = grid.nodes.iter().zip(row).fold(0.0f64, |a, (&r, &v)| a.max((v - prof.eval(r)).abs()));
        worst_gap = worst_gap.max(gap / scale);
    }
    let compared = direct.snapshots.len() == snapshots.len();
    check(
        c4_err <= 0.02 && worst <= ball.contraction_bound + 0.05 && worst_gap <= 0.05 && monotone && compared,
        format!(
            "C4 {c4:.6} ({:.3}% off 1/(2π²)), contraction max {worst:.4} vs bound {:.4}, fixed point vs simulate {:.2}% over {} times, iterates monotone: {monotone}",
            100.0 * c4_err,
            ball.contraction_bound,
            100.0 * worst_gap,
            direct.snapshots.len()
        ),
    )
}

/// Planar certificate: closed forms, continuity, bounded constants, decay table.
fn certificate() -> Outcome {
    let m = Manifold::euclidean(2).unwrap().with_r_max(1e18);
    let mut closed = 0.0f64;
    let mut jump = 0.0f64;
    for i in [2usize, 4, 8, 16] {
        let cert = build_certificate(&m, 2.0, 1.0, i).map_err(|e| e.to_string())?;
        closed = closed.max((cert.a - 4.0 * PI / i as f64).abs());
        for k in 1..=i {
            closed = closed.max((cert.offsets[k - 1] - (i - k) as f64 / i as f64).abs());
        }
        jump = jump.max(cert.interface_jump(32));
    }
    let mut constants = Vec::new();
    for i in [4usize, 8, 16] {
        let cert = build_certificate(&m, 2.0, 1.0, i).map_err(|e| e.to_string())?;
        let rep = verify_bounds(&cert, BoundSampling::default()).map_err(|e| e.to_string())?;
        constants.push((rep.laplacian, rep.time));
    }
    let spread = |f: fn(&(f64, f64)) -> f64| {
        let v: Vec<f64> = constants.iter().map(f).collect();
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (lap_spread, time_spread) = (spread(|c| c.0), spread(|c| c.1));

    let mut firsts = Vec::new();
    let mut products = Vec::new();
    for r0 in [1.0, 2.0, 4.0] {
        let table = a_decay(&m, 2.0, r0, &[2, 4, 8, 16, 32]).map_err(|e| e.to_string())?;
        firsts.push((r0, table.first_small));
        if r0 == 1.0 {
            products = table.rows.iter().map(|r| r.product).collect();
        }
    }
    let lo = products.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = products.iter().copied().fold(0.0, f64::max);
    let expected: Vec<(f64, Option<usize>)> =
        [1.0f64, 2.0, 4.0].iter().map(|&r0| (r0, Some((4.0 * PI * r0).ceil() as usize))).collect();
    check(
        closed <= 1e-10 && jump <= 1e-12 && lap_spread <= 1.5 && time_spread <= 1.5 && lo > 0.0 && hi / lo < 4.0 && firsts == expected,
        format!(
            "closed forms {closed:.1e}, interface jump {jump:.1e}, constants (Δ, t) = {constants:.3?} spread ({lap_spread:.3}, {time_spread:.3}), a·integral in [{lo:.3}, {hi:.3}], first i with a ≤ 1/r0: {firsts:?}"
        ),
    )
}

fn collect_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".csv") || name.ends_with(".json") {
            files.insert(name, std::fs::read(&path).unwrap());
        }
    }
    files
}

/// The CLI run twice on one config and seed yields identical CSV and JSON bytes.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "manifold": { "builtin": "euclidean", "dimension": 2, "R_max": 1e6 },
  "problem": { "p": 3.0, "p_range": [1.5, 3.0], "u0": { "kind": "gaussian", "amplitude": 0.5, "width": 1.0 } },
  "solver": { "cells": 256, "tau_max": 60.0 },
  "sweep": { "amplitudes": [0.01, 1.0], "width": 0.75, "budget": 8 },
  "heat_kernel": { "times": [0.5, 2.0], "controls": { "cells": 256 } },
  "picard": { "draws": 20, "envelope_fraction": 0.8, "setup": { "slices": 16, "cells": 256 } },
  "certificate": { "shells": 6, "decay_shells": [2, 4, 8], "decay_r0": [1.0], "phi_samples": 16 },
  "seed": 11,
  "threads": 2
}"#,
    )
    .map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_fujita-lab");
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for sub in ["classify", "simulate", "sweep", "heat-kernel", "picard", "certificate"] {
        let out = tmp.path().join(sub);
        let run = || {
            let status = Command::new(exe)
                .args([sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            Ok::<_, String>((status.status.code(), status.stdout, collect_outputs(&out)))
        };
        let first = run()?;
        let second = run()?;
        if !matches!(first.0, Some(0 | 1 | 4)) {
            return Err(format!("{sub} exited with {:?}", first.0));
        }
        if first != second {
            mismatches.push(sub);
        }
        compared += first.2.len();
    }
    check(
        mismatches.is_empty(),
        format!("{compared} files byte-identical across two runs; mismatched subcommands: {mismatches:?}"),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "fujita threshold (euclidean sweeps)", fujita_threshold),
        (2, "dichotomy consistency (six families)", dichotomy_consistency),
        (3, "heat kernel oracle", heat_kernel_oracle),
        (4, "condition (H)/(G) certification", conditions_h_and_g),
        (5, "picard construction", picard_construction),
        (6, "nonexistence certificate", certificate),
        (7, "determinism", determinism),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
