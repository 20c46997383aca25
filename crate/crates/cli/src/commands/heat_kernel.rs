use fujita_core::heat_kernel::{kernel_at_origin, verify_condition_h};
use fujita_core::manifold::ConditionG;
use fujita_core::KernelReport;
use serde::Serialize;
use serde_json::json;

use super::{heat_err, summary};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, Sink};

#[derive(Serialize)]
struct Report {
    condition_h: KernelReport,
    condition_g: ConditionG<f64>,
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let geo = cfg.manifold.build()?;
    let spec = &cfg.heat_kernel;
    if spec.times.is_empty() {
        return Err(CliError::validation("heat_kernel: `times` is empty"));
    }
    if let Some(&t) = spec.times.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(CliError::validation(format!("heat_kernel: time {t} must be positive")));
    }
    let m = &geo.manifold;
    let condition_h = verify_condition_h(m, &spec.times, &spec.controls).map_err(heat_err)?;
    let (lo, hi) = spec.condition_g_range.unwrap_or((1.0f64.min(0.5 * m.r_max()), m.r_max()));
    if !(0.0 < lo && lo < hi && hi <= m.r_max()) {
        return Err(CliError::validation(format!(
            "heat_kernel: condition_g_range ({lo}, {hi}) must lie in (0, R_max]"
        )));
    }
    let condition_g = m.check_condition_g(lo, hi);

    if sink.wants(crate::config::Format::Csv) {
        let mut rows = Vec::new();
        for &t in &spec.times {
            let k = kernel_at_origin(m, t, &spec.controls).map_err(heat_err)?;
            rows.extend(k.grid.nodes.iter().zip(&k.values).map(|(&r, &v)| vec![num(t), num(r), num(v)]));
        }
        sink.csv("kernel.csv", &["t", "r", "P"], rows)?;
    }
    let report = Report { condition_h, condition_g };
    sink.json("heat_kernel.json", &report)?;
    let (h, g) = (&report.condition_h, &report.condition_g);
    summary(json!({ "c1": h.c1, "bounded": h.bounded, "condition_g": g.holds, "c0": g.c0 }));
    if h.bounded && g.holds {
        Ok(0)
    } else {
        Err(CliError::numerical("conditions (H) and (G) could not both be certified on the sampled range")
            .with_details(json!({ "condition_h_bounded": h.bounded, "condition_g_holds": g.holds })))
    }
}
