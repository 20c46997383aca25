use fujita_core::semilinear::{simulate, EnvelopeCheck, FrameUsed, OutcomeKind};
use serde::Serialize;
use serde_json::json;

use super::{sim_err, summary};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, Sink};

#[derive(Serialize)]
struct Report<'a> {
    p: f64,
    outcome: &'a OutcomeKind<f64>,
    frame: FrameUsed,
    steps: usize,
    samples: usize,
    peak_cells: Option<usize>,
    envelope: &'a Option<EnvelopeCheck<f64>>,
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let geo = cfg.manifold.build()?;
    let p = cfg.problem.exponent()?;
    let o = simulate(&geo.manifold, p, &cfg.problem.u0, &cfg.solver).map_err(sim_err)?;
    let report = Report {
        p,
        outcome: &o.kind,
        frame: o.frame,
        steps: o.steps,
        samples: o.history.len(),
        peak_cells: o.peak_cells,
        envelope: &o.envelope,
    };
    sink.json("outcome.json", &report)?;
    sink.csv(
        "history.csv",
        &["t", "clock", "sup_u", "sup_frame", "mass", "dt"],
        o.history.iter().map(|s| vec![num(s.t), num(s.clock), num(s.sup_u), num(s.sup_frame), num(s.mass), num(s.dt)]),
    )?;
    sink.csv(
        "profile.csv",
        &["t", "r", "u"],
        o.snapshots
            .iter()
            .chain(std::iter::once(&o.final_profile))
            .flat_map(|pr| pr.radii.iter().zip(&pr.values).map(move |(&r, &u)| vec![num(pr.t), num(r), num(u)])),
    )?;
    summary(json!({ "outcome": o.kind, "p": p }));
    Ok(match o.kind {
        OutcomeKind::Undetermined(_) => 4,
        _ => 0,
    })
}
