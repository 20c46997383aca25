use fujita_core::picard::{iterate_to_fixed_point, sample_contraction, BallParams, C4Estimate};
use fujita_core::semilinear::InitialData;
use serde::Serialize;
use serde_json::json;

use super::{picard_err, summary};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, Sink};

#[derive(Serialize)]
struct Sampled {
    draws: usize,
    seed: u64,
    max: f64,
    mean: f64,
    factors: Vec<f64>,
}

#[derive(Serialize)]
struct Report<'a> {
    p: f64,
    delta: f64,
    lambda: f64,
    c1: f64,
    c4: C4Estimate<f64>,
    contraction_bound: f64,
    iterations: usize,
    residual: f64,
    contraction_history: &'a [f64],
    distances: &'a [f64],
    sampled: Option<Sampled>,
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let geo = cfg.manifold.build()?;
    let p = cfg.problem.exponent()?;
    let spec = &cfg.picard;
    let ball = BallParams::new(&geo.manifold, p, spec.delta, &spec.setup).map_err(picard_err)?;
    let u0 = match spec.envelope_fraction {
        Some(theta) if (0.0..=1.0).contains(&theta) => InitialData::Custom {
            radii: ball.grid().nodes.clone(),
            values: ball.envelope.values[0].iter().map(|&e| 0.5 * theta * e).collect(),
        },
        Some(theta) => {
            return Err(CliError::validation(format!("picard: envelope_fraction {theta} must lie in [0, 1]")))
        }
        None => cfg.problem.u0.clone(),
    };
    let fp = iterate_to_fixed_point(&u0, &ball, spec.tol, spec.max_iter).map_err(picard_err)?;
    let sampled = if spec.draws > 0 {
        let factors = sample_contraction(&ball, spec.draws, cfg.seed).map_err(picard_err)?;
        let max = factors.iter().copied().fold(0.0, f64::max);
        let mean = factors.iter().sum::<f64>() / factors.len() as f64;
        Some(Sampled { draws: spec.draws, seed: cfg.seed, max, mean, factors })
    } else {
        None
    };
    let report = Report {
        p,
        delta: ball.delta,
        lambda: ball.lambda,
        c1: ball.c1,
        c4: ball.c4,
        contraction_bound: ball.contraction_bound,
        iterations: fp.iterations,
        residual: fp.residual,
        contraction_history: &fp.contraction_history,
        distances: &fp.distances,
        sampled,
    };
    sink.json("picard.json", &report)?;
    let u = &fp.solution;
    sink.csv(
        "fixed_point.csv",
        &["t", "r", "u"],
        u.times
            .iter()
            .zip(&u.values)
            .flat_map(|(&t, row)| u.grid.nodes.iter().zip(row).map(move |(&r, &v)| vec![num(t), num(r), num(v)])),
    )?;
    let worst = report.sampled.as_ref().map(|s| s.max);
    summary(json!({
        "lambda": ball.lambda,
        "c4": ball.c4.value,
        "contraction_bound": ball.contraction_bound,
        "sampled_max": worst,
        "iterations": fp.iterations,
        "residual": fp.residual,
    }));
    match worst {
        Some(w) if w >= 1.0 => Err(CliError::numerical(format!("sampled contraction factor {w} is not below 1"))),
        _ => Ok(0),
    }
}
