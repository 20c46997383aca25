//! Experiment configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use fujita_core::certificate::BoundSampling;
use fujita_core::heat_kernel::HeatControls;
use fujita_core::manifold::{builtin_families, unit_sphere_area};
use fujita_core::picard::PicardSetup;
use fujita_core::semilinear::{InitialData, SimControls};
use fujita_core::{Family, Manifold};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub manifold: ManifoldSpec,
    pub problem: ProblemSpec,
    pub solver: SimControls<f64>,
    pub sweep: SweepSpec,
    pub heat_kernel: HeatKernelSpec,
    pub picard: PicardSpec,
    pub certificate: CertificateSpec,
    pub report: ReportSpec,
    pub output: OutputSpec,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}


/// Either `{"builtin": name, "dimension": n}` or an explicit family spliced onto a
/// Euclidean cap.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldSpec {
    /// `euclidean`, `hyperbolic`, or a catalog name such as `power-3`.
    pub builtin: Option<String>,
    pub dimension: Option<usize>,
    pub family: Option<FamilySpec>,
    pub r_splice: Option<f64>,
    #[serde(rename = "R_max")]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(rename = "C")]
    pub constant: f64,
    pub exponents: Vec<f64>,
    pub r_base: f64,
}

/// A manifold plus the volume family the symbolic criterion reads, when there is one.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub manifold: Manifold,
    pub family: Option<Family>,
    /// Base radius for numeric tests: twice the splice radius, or 1.
    pub r0: f64,
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<Geometry, CliError> {
        let mut geo = match (&self.builtin, &self.family) {
            (Some(_), Some(_)) => {
                return Err(CliError::validation("manifold: give either `builtin` or `family`, not both"))
            }
            (None, None) => return Err(CliError::validation("manifold: missing `builtin` or `family`")),
            (Some(name), None) => self.builtin(name)?,
            (None, Some(f)) => {
                let n = self
                    .dimension
                    .ok_or_else(|| CliError::validation("manifold: `dimension` is required with `family`"))?;
                let family = Family::new(f.constant, f.exponents.clone(), f.r_base).map_err(CliError::validation)?;
                let rs = self.r_splice.unwrap_or(f.r_base);
                let manifold = Manifold::power_log(n, family.clone(), rs).map_err(CliError::validation)?;
                Geometry { manifold, family: Some(family), r0: 2.0 * rs }
            }
        };
        if let Some(r) = self.r_max {
            if !(r > geo.manifold.r_splice() && r.is_finite()) {
                return Err(CliError::validation(format!("manifold: R_max {r} must exceed the splice radius")));
            }
            geo.manifold = geo.manifold.with_r_max(r);
        }
        Ok(geo)
    }

    fn builtin(&self, name: &str) -> Result<Geometry, CliError> {
        if self.r_splice.is_some() {
            return Err(CliError::validation("manifold: `r_splice` only applies to explicit families"));
        }
        let dim = || {
            self.dimension.ok_or_else(|| CliError::validation(format!("manifold: builtin `{name}` needs `dimension`")))
        };
        match name {
            "euclidean" => {
                let n = dim()?;
                let manifold = Manifold::euclidean(n).map_err(CliError::validation)?;
                let omega: f64 = unit_sphere_area(n - 1);
                let family = Family::power(omega / n as f64, n as f64).map_err(CliError::validation)?;
                Ok(Geometry { manifold, family: Some(family), r0: 1.0 })
            }
            "hyperbolic" => {
                let manifold = Manifold::hyperbolic(dim()?).map_err(CliError::validation)?;
                Ok(Geometry { manifold, family: None, r0: 1.0 })
            }
            _ => {
                let b = builtin_families::<f64>()
                    .into_iter()
                    .find(|b| b.name == name)
                    .ok_or_else(|| CliError::validation(format!("manifold: unknown builtin `{name}`")))?;
                if let Some(n) = self.dimension {
                    if n != b.manifold.dimension() {
                        return Err(CliError::validation(format!(
                            "manifold: `{name}` has dimension {}",
                            b.manifold.dimension()
                        )));
                    }
                }
                let r0 = 2.0 * b.manifold.r_splice();
                Ok(Geometry { manifold: b.manifold, family: Some(b.family), r0 })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub p: Option<f64>,
    pub u0: InitialData<f64>,
    /// Exponent range searched by `sweep`.
    pub p_range: Option<(f64, f64)>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self { p: None, u0: InitialData::gaussian(0.1, 1.0), p_range: None }
    }
}

impl ProblemSpec {
    pub fn exponent(&self) -> Result<f64, CliError> {
        self.p.ok_or_else(|| CliError::validation("problem: `p` is required"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub amplitudes: Vec<f64>,
    pub width: f64,
    pub budget: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { amplitudes: vec![1e-4, 1e-2, 1.0], width: 0.125, budget: 40 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatKernelSpec {
    pub times: Vec<f64>,
    pub controls: HeatControls<f64>,
    /// Radii checked for condition (G); defaults to `[1, R_max]`.
    pub condition_g_range: Option<(f64, f64)>,
}

impl Default for HeatKernelSpec {
    fn default() -> Self {
        Self { times: vec![0.25, 1.0, 4.0], controls: HeatControls::default(), condition_g_range: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardSpec {
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seeded random pairs used to measure the contraction factor.
    pub draws: usize,
    /// When set, replaces `problem.u0` by this fraction of the largest admissible datum
    /// `(λ/2) P_δ`.
    pub envelope_fraction: Option<f64>,
    pub setup: PicardSetup<f64>,
}

impl Default for PicardSpec {
    fn default() -> Self {
        Self {
            delta: 2.0,
            tol: 1e-10,
            max_iter: 100,
            draws: 200,
            envelope_fraction: None,
            setup: PicardSetup::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSpec {
    pub r0: f64,
    #[serde(alias = "i")]
    pub shells: usize,
    /// Shell counts tabulated by the `a(i)` decay table.
    pub decay_shells: Vec<usize>,
    /// Base radii for which the decay table and the first `i` with `a ≤ 1/r0` are reported.
    pub decay_r0: Vec<f64>,
    pub sampling: SamplingSpec,
    /// Samples per axis in the φ CSV.
    pub phi_samples: usize,
}

impl Default for CertificateSpec {
    fn default() -> Self {
        Self {
            r0: 1.0,
            shells: 8,
            decay_shells: vec![2, 4, 8, 16, 32],
            decay_r0: vec![1.0, 2.0, 4.0],
            sampling: SamplingSpec::default(),
            phi_samples: 48,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub radii: usize,
    pub times: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        let d = BoundSampling::default();
        Self { radii: d.radii, times: d.times }
    }
}

impl From<SamplingSpec> for BoundSampling {
    fn from(s: SamplingSpec) -> Self {
        Self { radii: s.radii, times: s.times }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSpec {
    /// Sweep CSVs merged into the phase diagram, relative to the config file.
    /// Empty means `<output>/sweep.csv`.
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json, Format::Svg] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Reads and validates a config; relative output and report paths resolve against the
/// config's directory.
pub fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_slice(&bytes).map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    if cfg.output.directory.is_relative() {
        cfg.output.directory = base.join(&cfg.output.directory);
    }
    for input in cfg.report.inputs.iter_mut() {
        if input.is_relative() {
            *input = base.join(&*input);
        }
    }
    Ok((cfg, bytes))
}
