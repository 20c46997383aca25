use fujita_core::criterion::{classify, classify_numeric, fujita_exponent, CriterionVerdict};
use fujita_core::{CriterionError, VerdictKind};
use serde::Serialize;
use serde_json::json;

use super::{criterion_err, summary};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::Sink;

#[derive(Serialize)]
struct Report {
    p: f64,
    verdict: VerdictKind,
    /// Threshold of the asymptotic family, when there is one.
    fujita_exponent: Option<f64>,
    symbolic: Option<CriterionVerdict<f64>>,
    numeric: Option<CriterionVerdict<f64>>,
    numeric_error: Option<String>,
    /// Symbolic and numeric verdicts coincide; `None` when one is missing.
    agree: Option<bool>,
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let geo = cfg.manifold.build()?;
    let p = cfg.problem.exponent()?;
    let symbolic = geo.family.as_ref().map(|f| classify(f, p)).transpose().map_err(criterion_err)?;
    let (numeric, numeric_error) = match classify_numeric(&geo.manifold, p, geo.r0) {
        Ok(v) => (Some(v), None),
        Err(e @ CriterionError::InvalidExponent(_)) => return Err(criterion_err(e)),
        Err(e) => (None, Some(e.to_string())),
    };
    let verdict = match (&symbolic, &numeric) {
        (Some(s), _) => s.kind,
        (None, Some(n)) => n.kind,
        (None, None) => return Err(CliError::validation(numeric_error.unwrap_or_default())),
    };
    let agree = symbolic.as_ref().zip(numeric.as_ref()).map(|(s, n)| s.kind == n.kind);
    let report = Report {
        p,
        verdict,
        fujita_exponent: geo.family.as_ref().map(fujita_exponent),
        symbolic,
        numeric,
        numeric_error,
        agree,
    };
    sink.json("verdict.json", &report)?;
    summary(json!({ "verdict": verdict, "p": p, "fujita_exponent": report.fujita_exponent }));
    Ok(match verdict {
        VerdictKind::Divergent => 0,
        VerdictKind::Convergent => 1,
        VerdictKind::Inconclusive => 4,
    })
}
