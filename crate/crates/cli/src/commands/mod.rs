//! One module per subcommand. Each returns the process exit code on success.

pub mod certificate;
pub mod classify;
pub mod heat_kernel;
pub mod picard;
pub mod report;
pub mod simulate;
pub mod sweep;

use fujita_core::heat_kernel::HeatError;
use fujita_core::picard::PicardError;
use fujita_core::{CertError, CriterionError, SimError};

use crate::error::CliError;
use crate::output::num;

pub(crate) fn criterion_err(e: CriterionError) -> CliError {
    CliError::validation(e)
}

pub(crate) fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::Heat(h) => heat_err(h),
        other => CliError::validation(other),
    }
}

pub(crate) fn heat_err(e: HeatError) -> CliError {
    match e {
        HeatError::BadTime(_) | HeatError::Grid(_) => CliError::validation(e),
        other => CliError::numerical(other),
    }
}

pub(crate) fn picard_err(e: PicardError) -> CliError {
    match e {
        PicardError::Exponent(_) | PicardError::DivergentIntegral { .. } | PicardError::InitialDataTooLarge { .. } => {
            CliError::validation(e)
        }
        PicardError::Grid(_) => CliError::validation(e),
        other => CliError::numerical(other),
    }
}

pub(crate) fn cert_err(e: CertError) -> CliError {
    match e {
        CertError::ConditionGViolation { .. } => CliError::numerical(e),
        other => CliError::validation(other),
    }
}

pub(crate) fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Prints a one-line JSON summary on stdout.
pub(crate) fn summary(value: serde_json::Value) {
    println!("{value}");
}
