//! Numerical laboratory for the semilinear heat equation `∂_t u = Δu + u^p` on
//! rotationally symmetric model manifolds.
//!
//! Everything numerical is generic over [`Real`]; the aliases below fix `f64`.

// `!(x > 0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod criterion;
pub mod grid;
pub mod heat_kernel;
pub mod manifold;
pub mod picard;
pub mod quadrature;
pub mod scalar;
pub mod semilinear;
pub mod tridiag;

pub use certificate::CertError;
pub use criterion::{CriterionError, VerdictKind};
pub use heat_kernel::HeatError;
pub use manifold::{ManifoldError, ModelManifold, VolumeFamily, Warp};
pub use picard::PicardError;
pub use scalar::Real;
pub use semilinear::{Frame, SimError};

pub type Manifold = ModelManifold<f64>;
pub type Family = VolumeFamily<f64>;
pub type Verdict = criterion::CriterionVerdict<f64>;
pub type Grid = grid::RadialGrid<f64>;
pub type Field = heat_kernel::RadialField<f64>;
pub type KernelControls = heat_kernel::HeatControls<f64>;
pub type KernelReport = heat_kernel::KernelReport<f64>;
pub type Data = semilinear::InitialData<f64>;
pub type Controls = semilinear::SimControls<f64>;
pub type Outcome = semilinear::Outcome<f64>;
pub type Sweep = semilinear::SweepResult<f64>;
pub type SweepControls = semilinear::SweepControls<f64>;
pub type Ball = picard::BallParams<f64>;
pub type SpaceTime = picard::SpaceTimeField<f64>;
pub type Certificate = certificate::Certificate<f64>;
pub type Bounds = certificate::BoundsReport<f64>;
pub type DecayTable = certificate::DecayTable<f64>;
