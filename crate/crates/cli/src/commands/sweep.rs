use fujita_core::criterion::fujita_exponent;
use fujita_core::semilinear::{sweep_exponent, SweepControls, SweepError, SweepResult};
use serde::Serialize;
use serde_json::json;

use super::{opt, sim_err, summary};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, Sink};

#[derive(Serialize)]
struct Report<'a> {
    status: &'static str,
    p_range: (f64, f64),
    /// Midpoint of the final bracket.
    estimate: f64,
    /// Leading volume exponent of the manifold, when known.
    alpha: Option<f64>,
    predicted: Option<f64>,
    result: &'a SweepResult<f64>,
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let geo = cfg.manifold.build()?;
    let (lo, hi) =
        cfg.problem.p_range.ok_or_else(|| CliError::validation("problem: `p_range` is required for sweep"))?;
    let controls = SweepControls {
        amplitudes: cfg.sweep.amplitudes.clone(),
        width: cfg.sweep.width,
        budget: cfg.sweep.budget,
        sim: cfg.solver.clone(),
    };
    let u0 = &cfg.problem.u0;
    let (status, result, failure) = match sweep_exponent(&geo.manifold, |a| u0.with_amplitude(a), lo, hi, &controls) {
        Ok(r) => ("bracketed", r, None),
        Err(SweepError::BudgetExhausted { partial }) => {
            ("budget_exhausted", partial, Some("simulation budget exhausted"))
        }
        Err(SweepError::NotBracketed { partial }) => ("not_bracketed", partial, Some("no transition inside p_range")),
        Err(SweepError::Invalid(msg)) => return Err(CliError::validation(msg)),
        Err(SweepError::Sim(e)) => return Err(sim_err(e)),
    };
    let alpha = geo.family.as_ref().map(|f| f.leading_exponent());
    let predicted = geo.family.as_ref().map(fujita_exponent);
    let (a, b) = result.bracket;
    let report = Report { status, p_range: (lo, hi), estimate: 0.5 * (a + b), alpha, predicted, result: &result };
    sink.json("sweep.json", &report)?;
    sink.csv(
        "sweep.csv",
        &["p", "amplitude", "outcome", "t_star", "alpha", "predicted_p_star"],
        result.table.iter().map(|row| {
            vec![num(row.p), num(row.amplitude), row.outcome.to_owned(), opt(row.t_star), opt(alpha), opt(predicted)]
        }),
    )?;
    summary(json!({ "status": status, "bracket": result.bracket, "estimate": report.estimate, "calls": result.calls }));
    match failure {
        None => Ok(0),
        Some(msg) => Err(CliError::inconclusive(msg).with_details(json!({ "bracket": result.bracket }))),
    }
}
