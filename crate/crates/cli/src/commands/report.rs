//! Phase diagram from sweep CSVs: exponent `p` against the volume exponent `α`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::summary;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::Sink;

#[derive(Deserialize)]
struct Row {
    p: f64,
    outcome: String,
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Phase {
    BlowUp,
    Global,
    Undetermined,
}

impl Phase {
    fn color(self) -> &'static str {
        match self {
            Self::BlowUp => "#c0392b",
            Self::Global => "#2471a3",
            Self::Undetermined => "#909497",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::BlowUp => "every amplitude blew up",
            Self::Global => "small data global",
            Self::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Point {
    alpha: f64,
    p: f64,
    phase: Phase,
    runs: usize,
}

fn read_rows(path: &Path, bytes: &[u8]) -> Result<Vec<Row>, CliError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<Vec<Row>, _>>()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Collapses amplitude ladders: a level is global when any amplitude persisted.
fn aggregate(rows: Vec<Row>) -> (Vec<Point>, usize) {
    let mut keyed: Vec<(f64, f64, String)> = Vec::new();
    let mut skipped = 0;
    for r in rows {
        match r.alpha {
            Some(a) if a.is_finite() => keyed.push((a, r.p, r.outcome)),
            _ => skipped += 1,
        }
    }
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut points: Vec<Point> = Vec::new();
    for (alpha, p, outcome) in keyed {
        let phase = match outcome.as_str() {
            "global_evidence" => Phase::Global,
            "blow_up" => Phase::BlowUp,
            _ => Phase::Undetermined,
        };
        match points.last_mut() {
            Some(last) if last.alpha == alpha && last.p == p => {
                last.runs += 1;
                last.phase = match (last.phase, phase) {
                    (Phase::Global, _) | (_, Phase::Global) => Phase::Global,
                    (Phase::BlowUp, Phase::BlowUp) => Phase::BlowUp,
                    _ => Phase::Undetermined,
                };
            }
            _ => points.push(Point { alpha, p, phase, runs: 1 }),
        }
    }
    (points, skipped)
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.08 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn render(points: &[Point]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 190.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    let (x0, x1) = padded(
        points.iter().map(|q| q.p).fold(f64::INFINITY, f64::min),
        points.iter().map(|q| q.p).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded(
        points.iter().map(|q| q.alpha).fold(f64::INFINITY, f64::min),
        points.iter().map(|q| q.alpha).fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |p: f64| L + (p - x0) / (x1 - x0) * (W - L - R);
    let sy = |a: f64| H - B - (a - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">Blow-up vs. global existence</text>"#,
        (L + W - R) / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - L - R,
        H - T - B
    );
    for j in 0..=4 {
        let f = j as f64 / 4.0;
        let (xp, ya) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xp:.2}</text>"#, sx(xp), H - B + 18.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ya:.2}</text>"#, L - 6.0, sy(ya) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">p</text>"#, (L + W - R) / 2.0, H - 18.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">volume exponent α</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );

    // p* = 1 + 2/α, clipped to the frame
    let curve: Vec<String> = (0..=200)
        .map(|j| y0 + (y1 - y0) * j as f64 / 200.0)
        .filter(|&a| a > 0.0)
        .map(|a| (1.0 + 2.0 / a, a))
        .filter(|&(p, _)| (x0..=x1).contains(&p))
        .map(|(p, a)| format!("{:.2},{:.2}", sx(p), sy(a)))
        .collect();
    if curve.len() > 1 {
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="5,4"/>"#,
            curve.join(" ")
        );
    }
    for q in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}"><title>p = {}, α = {}: {} ({} runs)</title></circle>"#,
            sx(q.p),
            sy(q.alpha),
            q.phase.color(),
            q.p,
            q.alpha,
            q.phase.label(),
            q.runs
        );
    }
    let lx = W - R + 16.0;
    for (j, phase) in [Phase::BlowUp, Phase::Global, Phase::Undetermined].into_iter().enumerate() {
        let y = T + 12.0 + 20.0 * j as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{lx}" cy="{y}" r="5" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            phase.color(),
            lx + 10.0,
            y + 4.0,
            phase.label()
        );
    }
    let y = T + 72.0;
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-dasharray="5,4"/><text x="{}" y="{}">p = 1 + 2/α</text>"#,
        lx - 6.0,
        lx + 6.0,
        lx + 10.0,
        y + 4.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<i32, CliError> {
    let inputs =
        if cfg.report.inputs.is_empty() { vec![sink.dir().join("sweep.csv")] } else { cfg.report.inputs.clone() };
    let mut rows = Vec::new();
    for path in &inputs {
        let bytes = sink.read_input(path)?;
        rows.extend(read_rows(path, &bytes)?);
    }
    let (points, skipped) = aggregate(rows);
    if points.is_empty() {
        return Err(CliError::validation("report: no sweep rows with a volume exponent"));
    }
    if skipped > 0 {
        log::warn!("{skipped} rows without a volume exponent left out of the diagram");
    }
    sink.json("phase.json", &json!({ "points": points, "skipped": skipped }))?;
    sink.svg("phase.svg", &render(&points))?;
    summary(json!({ "points": points.len(), "skipped": skipped, "inputs": inputs.len() }));
    Ok(0)
}
