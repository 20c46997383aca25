use fujita_core::certificate::{a_decay, build_certificate, verify_bounds, DecayError};
use fujita_core::{Bounds, Certificate, DecayTable};
use serde::Serialize;
use serde_json::json;

use super::{cert_err, summary};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, Sink};

#[derive(Serialize)]
struct Decay {
    /// False when the manifold range ends before `a(i) ≤ 1/r0`.
    complete: bool,
    table: DecayTable,
}

#[derive(Serialize)]
struct Report<'a> {
    certificate: &'a Certificate,
    inner_value: f64,
    interface_jump: f64,
    bounds: Bounds,
    pairing_constant: f64,
    decay: Vec<Decay>,
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let geo = cfg.manifold.build()?;
    let p = cfg.problem.exponent()?;
    let spec = &cfg.certificate;
    let m = &geo.manifold;
    let cert = build_certificate(m, p, spec.r0, spec.shells).map_err(cert_err)?;
    let bounds = verify_bounds(&cert, spec.sampling.into()).map_err(cert_err)?;
    let mut decay = Vec::new();
    for &r0 in &spec.decay_r0 {
        decay.push(match a_decay(m, p, r0, &spec.decay_shells) {
            Ok(table) => Decay { complete: true, table },
            Err(DecayError::RangeExceeded { partial, .. }) => Decay { complete: false, table: partial },
            Err(DecayError::Invalid(e)) => return Err(cert_err(e)),
        });
    }
    let report = Report {
        certificate: &cert,
        inner_value: cert.inner_value(),
        interface_jump: cert.interface_jump(64),
        pairing_constant: bounds.pairing_constant(cert.q),
        bounds,
        decay,
    };
    sink.json("certificate.json", &report)?;

    let n = spec.phi_samples.max(2);
    let outer = 1.05 * cert.radii[cert.shells];
    let axis = |top: f64| (0..n).map(move |j| top * j as f64 / (n - 1) as f64);
    sink.csv(
        "phi.csv",
        &["r", "t", "phi"],
        axis(outer)
            .flat_map(|r| axis(outer * outer).map(move |t| (r, t)))
            .map(|(r, t)| vec![num(r), num(t), num(cert.phi(r, t))]),
    )?;
    sink.csv(
        "decay.csv",
        &["r0", "shells", "a", "integral", "product"],
        report.decay.iter().flat_map(|d| {
            d.table.rows.iter().map(|row| {
                vec![num(d.table.r0), row.shells.to_string(), num(row.a), num(row.integral), num(row.product)]
            })
        }),
    )?;
    let first_small: Vec<_> =
        report.decay.iter().map(|d| json!({ "r0": d.table.r0, "first_small": d.table.first_small })).collect();
    summary(json!({
        "a": cert.a,
        "laplacian": report.bounds.laplacian,
        "time": report.bounds.time,
        "monotone": report.bounds.monotone,
        "first_small": first_small,
    }));
    if report.bounds.monotone {
        Ok(0)
    } else {
        Err(CliError::numerical("sampled φ is not monotone"))
    }
}
