//! Direct time stepping of `∂_t u = Δu + u^p` for radial data, with blow-up detection,
//! global-existence evidence and a sweep that brackets the critical exponent.
//!
//! By default the solver works in self-similar variables
//! `τ = ln(1+t)`, `ξ = r/√(1+t)`, `w = (1+t)^{1/(p-1)} u`, where
//!
//! ```text
//! w_τ = Â⁻¹(Â w_ξ)_ξ + (ξ/2) w_ξ + w/(p-1) + w^p,   Â(ξ) = A(ξ e^{τ/2}) / A(e^{τ/2}),
//! ```
//!
//! so that decay or growth relative to the critical rate shows up as an exponential in
//! `τ` and horizons of `t ~ e^{300}` cost a few thousand steps. Each step is an implicit
//! finite-volume solve for the linear transport part followed by the exact solution of
//! `w' = w/(p-1) + w^p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{validate_p, CriterionError};
use crate::grid::{GridError, RadialGrid};
use crate::heat_kernel::{kernel_at_origin, kernel_radius, HeatControls, HeatError};
use crate::manifold::ModelManifold;
use crate::quadrature::integrate;
use crate::scalar::Real;
use crate::tridiag::{Factored, Tridiagonal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Exponent(#[from] CriterionError),
    #[error("invalid initial data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error("invalid controls: {0}")]
    InvalidControls(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData<T> {
    /// `A exp(-r²/(2σ²))`.
    Gaussian { amplitude: T, width: T },
    /// `A (1 - (r/R)²)²` on `r < R`.
    Bump { amplitude: T, radius: T },
    /// Piecewise-linear table, zero past the last radius.
    Custom { radii: Vec<T>, values: Vec<T> },
}

impl<T: Real> InitialData<T> {
    pub fn gaussian(amplitude: T, width: T) -> Self {
        Self::Gaussian { amplitude, width }
    }

    pub fn bump(amplitude: T, radius: T) -> Self {
        Self::Bump { amplitude, radius }
    }

    pub fn eval(&self, r: T) -> T {
        match self {
            Self::Gaussian { amplitude, width } => *amplitude * (-(r * r) / (T::lit(2.0) * *width * *width)).exp(),
            Self::Bump { amplitude, radius } => {
                if r >= *radius {
                    T::zero()
                } else {
                    let x = r / *radius;
                    let y = T::one() - x * x;
                    *amplitude * y * y
                }
            }
            Self::Custom { radii, values } => {
                let last = radii.len() - 1;
                if r >= radii[last] {
                    return if r == radii[last] { values[last] } else { T::zero() };
                }
                if r <= radii[0] {
                    return values[0];
                }
                let j = radii.partition_point(|&x| x <= r);
                let s = (r - radii[j - 1]) / (radii[j] - radii[j - 1]);
                values[j - 1] + (values[j] - values[j - 1]) * s
            }
        }
    }

    /// Scale of the data, used for the default physical horizon.
    pub fn length_scale(&self) -> T {
        match self {
            Self::Gaussian { width, .. } => *width,
            Self::Bump { radius, .. } => *radius,
            Self::Custom { radii, .. } => *radii.last().unwrap(),
        }
    }

    /// Radius beyond which the data vanish or are negligible.
    pub fn support(&self) -> T {
        match self {
            Self::Gaussian { width, .. } => *width * T::lit(40.0).sqrt() * T::lit(1.5),
            _ => self.length_scale(),
        }
    }

    pub fn amplitude(&self) -> T {
        match self {
            Self::Gaussian { amplitude, .. } | Self::Bump { amplitude, .. } => *amplitude,
            Self::Custom { values, .. } => values.iter().fold(T::zero(), |a, &v| a.max(v)),
        }
    }

    /// Same shape, rescaled so that the amplitude becomes `a`.
    pub fn with_amplitude(&self, a: T) -> Self {
        match self {
            Self::Gaussian { width, .. } => Self::Gaussian { amplitude: a, width: *width },
            Self::Bump { radius, .. } => Self::Bump { amplitude: a, radius: *radius },
            Self::Custom { radii, values } => {
                let top = self.amplitude();
                let f = if top > T::zero() { a / top } else { T::zero() };
                Self::Custom { radii: radii.clone(), values: values.iter().map(|&v| v * f).collect() }
            }
        }
    }

    pub fn validate(&self, m: &ModelManifold<T>) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidData(msg.to_string()));
        match self {
            Self::Gaussian { amplitude, width } => {
                if !(*amplitude >= T::zero() && amplitude.is_finite()) {
                    return bad("amplitude must be finite and nonnegative");
                }
                if !(*width > T::zero() && width.is_finite()) {
                    return bad("width must be positive");
                }
            }
            Self::Bump { amplitude, radius } => {
                if !(*amplitude >= T::zero() && amplitude.is_finite()) {
                    return bad("amplitude must be finite and nonnegative");
                }
                if !(*radius > T::zero() && radius.is_finite()) {
                    return bad("radius must be positive");
                }
            }
            Self::Custom { radii, values } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return bad("custom table needs at least two (radius, value) pairs");
                }
                if radii[0] < T::zero() || radii.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("custom radii must be nonnegative and strictly increasing");
                }
                if values.iter().any(|v| !(*v >= T::zero() && v.is_finite())) {
                    return bad("custom values must be finite and nonnegative");
                }
            }
        }
        let r_max = m.r_max();
        let half = r_max * T::lit(0.5);
        if self.support() > half {
            let far = integrate(|r| self.eval(r) * m.area(r), half, r_max, T::lit(1e-14), T::lit(1e-8)).value;
            if far > T::lit(1e-10) {
                return bad("data are not concentrated inside R_max/2");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Self-similar variables; hyperbolic manifolds fall back to physical variables.
    Auto,
    SelfSimilar,
    Physical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SimControls<T> {
    pub frame: Frame,
    pub cells: usize,
    /// Outer radius of the self-similar grid in `ξ`.
    pub xi_max: T,
    /// Self-similar step cap and horizon, in `τ`.
    pub dtau_max: T,
    pub tau_max: T,
    /// Physical grid radius, grading rate, step cap and horizon.
    pub r_outer: Option<T>,
    pub grading: T,
    pub dt_max: T,
    pub horizon: Option<T>,
    pub u_max: T,
    pub dt_min: T,
    /// Interval in `τ` between geometry refreshes on non-scale-invariant manifolds.
    pub refresh: T,
    /// Recording cadence in the solver clock (`τ` or `t`).
    pub record_every: T,
    /// Physical times at which full profiles are kept.
    pub snapshots: Vec<T>,
    /// Enables the envelope comparison against `λ P_{t+δ}`.
    pub envelope_delta: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for SimControls<T> {
    fn default() -> Self {
        Self {
            frame: Frame::Auto,
            cells: 1024,
            xi_max: T::lit(16.0),
            dtau_max: T::lit(0.01),
            tau_max: T::lit(300.0),
            r_outer: None,
            grading: T::zero(),
            dt_max: T::lit(0.01),
            horizon: None,
            u_max: T::lit(1e8),
            dt_min: T::lit(1e-12),
            refresh: T::lit(0.05),
            record_every: T::lit(0.1),
            snapshots: Vec::new(),
            envelope_delta: None,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameUsed {
    SelfSimilar,
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum UndeterminedReason<T> {
    /// Horizon reached without decay faster than the critical rate.
    NoDecay {
        decay_rate: T,
        final_sup: T,
    },
    /// The peak spans fewer than 8 cells when the reaction takes over.
    GridTooCoarse {
        cells: usize,
    },
    StepLimit {
        steps: usize,
    },
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum OutcomeKind<T> {
    BlowUp {
        t_star: T,
    },
    GlobalEvidence {
        horizon: T,
        /// Self-similar frame: exponential rate of `sup w` in `τ`. Physical frame: power of
        /// `sup u` in `t`.
        decay_rate: T,
        degenerate: bool,
    },
    Undetermined(UndeterminedReason<T>),
}

impl<T> OutcomeKind<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Self::BlowUp { .. } => "blow_up",
            Self::GlobalEvidence { .. } => "global_evidence",
            Self::Undetermined(_) => "undetermined",
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, Self::BlowUp { .. })
    }

    pub fn is_global(&self) -> bool {
        matches!(self, Self::GlobalEvidence { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample<T> {
    /// Physical time.
    pub t: T,
    /// Solver clock: `τ` in the self-similar frame, `t` otherwise.
    pub clock: T,
    pub sup_u: T,
    /// `sup w` in the self-similar frame, `sup u` otherwise.
    pub sup_frame: T,
    pub mass: T,
    pub dt: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile<T> {
    pub t: T,
    pub radii: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> Profile<T> {
    /// Linear interpolation in `r`, zero beyond the last radius.
    pub fn eval(&self, r: T) -> T {
        InitialData::Custom { radii: self.radii.clone(), values: self.values.clone() }.eval(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck<T> {
    pub delta: T,
    pub lambda: T,
    /// Largest `u / (λ P_{t+δ})` seen on the run, over nodes where the envelope is resolved.
    pub max_ratio: T,
    pub final_ratio: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome<T> {
    pub kind: OutcomeKind<T>,
    pub p: T,
    pub frame: FrameUsed,
    pub steps: usize,
    pub history: Vec<Sample<T>>,
    pub snapshots: Vec<Profile<T>>,
    #[serde(skip)]
    pub final_profile: Profile<T>,
    /// Cells with `u ≥ sup/2` when the reaction began to dominate.
    pub peak_cells: Option<usize>,
    pub envelope: Option<EnvelopeCheck<T>>,
}

/// Linear transport operator: diffusion conductances plus optional advection `(ξ/2)∂_ξ`.
struct Transport<T> {
    k_inner: Vec<T>,
    k_outer: T,
    // advection contributions to (lower, diag, upper), already multiplied by the cell weight
    adv: Vec<(T, T, T)>,
    weights: Vec<T>,
    main: Option<(T, Factored<T>)>,
    last: Option<(T, Factored<T>)>,
}

impl<T: Real> Transport<T> {
    fn new(grid: &RadialGrid<T>, advect: bool) -> Self {
        let n = grid.len();
        let x = &grid.nodes;
        let k_inner: Vec<T> = (0..n - 1).map(|i| grid.face_areas[i + 1] / (x[i + 1] - x[i])).collect();
        let outer = grid.outer();
        let k_outer = grid.face_areas[n] / (outer - x[n - 1]);
        let zero = T::zero();
        let mut adv = vec![(zero, zero, zero); n];
        if advect {
            let half = T::lit(0.5);
            for i in 0..n {
                let ma = grid.weights[i] * half * x[i];
                let right = if i + 1 < n { x[i + 1] } else { outer };
                let left_k = if i > 0 { k_inner[i - 1] } else { zero };
                if i > 0 {
                    let span = right - x[i - 1];
                    // central differences while the off-diagonal stays nonpositive
                    if left_k >= ma / span {
                        adv[i] = (-ma / span, zero, ma / span);
                        continue;
                    }
                }
                let gap = right - x[i];
                adv[i] = (zero, -ma / gap, ma / gap);
            }
        }
        Self { k_inner, k_outer, adv, weights: grid.weights.clone(), main: None, last: None }
    }

    fn factor(&self, dt: T) -> Option<Factored<T>> {
        let n = self.weights.len();
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            let kl = if i > 0 { self.k_inner[i - 1] } else { T::zero() };
            let kr = if i + 1 < n { self.k_inner[i] } else { self.k_outer };
            let (al, ad, au) = self.adv[i];
            a.diag[i] = self.weights[i] / dt + kl + kr - ad;
            if i > 0 {
                a.lower[i] = -kl - al;
            }
            if i + 1 < n {
                a.upper[i] = -kr - au;
            }
        }
        a.factor()
    }

    fn step(&mut self, u: &mut [T], dt: T, main_dt: T) -> Result<(), SimError> {
        let slot_is_main = dt == main_dt;
        let cached = if slot_is_main { &self.main } else { &self.last };
        if cached.as_ref().map(|(d, _)| *d != dt).unwrap_or(true) {
            let f = self.factor(dt).ok_or(HeatError::StabilityFailure { dt: dt.as_f64() })?;
            let slot = if slot_is_main { &mut self.main } else { &mut self.last };
            *slot = Some((dt, f));
        }
        let (_, f) = if slot_is_main { self.main.as_ref() } else { self.last.as_ref() }.unwrap();
        for (v, &w) in u.iter_mut().zip(&self.weights) {
            *v *= w / dt;
        }
        f.solve_in_place(u);
        for v in u.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        Ok(())
    }
}

/// Exact flow of `w' = c w + w^p` over `dt`; `None` if it blows up within the step.
fn reaction<T: Real>(w: T, p: T, c: T, dt: T) -> Option<T> {
    if w <= T::zero() {
        return Some(T::zero());
    }
    let q = p - T::one();
    let z0 = w.powf(-q);
    if !z0.is_finite() {
        // w^p is far below underflow: linear growth only
        return Some(w * (c * dt).exp());
    }
    let z = if c > T::zero() {
        let a = -q * c * dt;
        z0 * a.exp() + a.exp_m1() / c
    } else {
        z0 - q * dt
    };
    if z <= T::zero() {
        return None;
    }
    Some(z.powf(-q.recip()))
}

/// Least squares for `y ≈ Σ_k c_k φ_k(x)` with at most three basis functions.
fn lsq(rows: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let k = rows.first()?.0.len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (phi, y) in rows {
        for i in 0..k {
            b[i] += phi[i] * y;
            for j in 0..k {
                a[i][j] += phi[i] * phi[j];
            }
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for j in col..k {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|j| a[row][j] * x[j]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct BlowUpTrack {
    mark_t: f64,
    since: f64,
    points: Vec<(f64, f64)>,
}

const PEAK_CELLS_MIN: usize = 8;
const FIT_POINTS: usize = 24;

/// Runs one simulation.
pub fn simulate<T: Real>(
    m: &ModelManifold<T>,
    p: T,
    u0: &InitialData<T>,
    controls: &SimControls<T>,
) -> Result<Outcome<T>, SimError> {
    validate_p(p)?;
    u0.validate(m)?;
    if controls.cells < 16 {
        return Err(SimError::InvalidControls("need at least 16 cells".into()));
    }
    let self_similar = match controls.frame {
        Frame::SelfSimilar => true,
        Frame::Physical => false,
        Frame::Auto => !matches!(m.warp_kind(), crate::manifold::Warp::Hyperbolic),
    };
    let q = p - T::one();
    let c = if self_similar { q.recip() } else { T::zero() };
    let horizon_t = controls.horizon.unwrap_or_else(|| {
        let s = u0.length_scale();
        T::lit(100.0).max(T::lit(50.0) * s * s)
    });
    let clock_end = if self_similar { controls.tau_max } else { horizon_t };
    let clock_cap = if self_similar { controls.dtau_max } else { controls.dt_max };
    if !(clock_end > T::zero() && clock_cap > T::zero()) {
        return Err(SimError::InvalidControls("horizon and step cap must be positive".into()));
    }

    // geometry
    let log_area_ratio = |xi: T, s: T| -> T {
        if xi <= T::zero() {
            return if m.dimension() == 1 { T::one() } else { T::zero() };
        }
        (m.log_area(xi * s) - m.log_area(s)).exp()
    };
    let mut grid = if self_similar {
        RadialGrid::from_area(controls.xi_max, controls.cells, T::zero(), |xi| log_area_ratio(xi, T::one()))?
    } else {
        let r = controls.r_outer.unwrap_or_else(|| kernel_radius(m, horizon_t).max(T::lit(4.0) * u0.support()));
        RadialGrid::new(m, r, controls.cells, controls.grading)?
    };
    let mut transport = Transport::new(&grid, self_similar);
    let refresh_geometry = self_similar && !m.is_scale_invariant();
    let mut last_refresh = T::zero();

    let mut w: Vec<T> = grid.nodes.iter().map(|&r| u0.eval(r)).collect();

    // conversions between solver clock and physical quantities
    let phys_t = |clock: T| if self_similar { clock.exp_m1() } else { clock };
    let ln_u_of = |ln_w: T, clock: T| if self_similar { ln_w - c * clock } else { ln_w };
    let ln_dt_of = |dclock: T, clock: T| if self_similar { clock + dclock.ln() } else { dclock.ln() };
    let radius_scale = |clock: T| if self_similar { (clock * T::lit(0.5)).exp() } else { T::one() };
    let mass_of = |w: &[T], grid: &RadialGrid<T>, clock: T| -> T {
        let sum = grid.integrate(w);
        if !self_similar {
            return sum;
        }
        // dV = A(s) Â(ξ) s dξ and u = e^{-cτ} w
        let s = radius_scale(clock);
        (m.log_area(s) + s.ln() - c * clock).exp() * sum
    };
    let profile_of = |w: &[T], grid: &RadialGrid<T>, clock: T| -> Profile<T> {
        let s = radius_scale(clock);
        let damp = if self_similar { (-c * clock).exp() } else { T::one() };
        Profile {
            t: phys_t(clock),
            radii: grid.nodes.iter().map(|&x| x * s).collect(),
            values: w.iter().map(|&v| v * damp).collect(),
        }
    };

    let frame_used = if self_similar { FrameUsed::SelfSimilar } else { FrameUsed::Physical };
    let mut history = Vec::new();
    let mut snapshots = Vec::new();

    let sup0 = w.iter().fold(T::zero(), |a, &v| a.max(v));
    if sup0 == T::zero() {
        history.push(Sample {
            t: T::zero(),
            clock: T::zero(),
            sup_u: T::zero(),
            sup_frame: T::zero(),
            mass: T::zero(),
            dt: T::zero(),
        });
        return Ok(Outcome {
            kind: OutcomeKind::GlobalEvidence {
                horizon: horizon_t.max(phys_t(clock_end)),
                decay_rate: T::zero(),
                degenerate: true,
            },
            p,
            frame: frame_used,
            steps: 0,
            history,
            snapshots: controls
                .snapshots
                .iter()
                .map(|&t| Profile { t, radii: grid.nodes.clone(), values: vec![T::zero(); grid.len()] })
                .collect(),
            final_profile: profile_of(&w, &grid, T::zero()),
            peak_cells: None,
            envelope: None,
        });
    }

    // envelope λ P_{t+δ}, carried through the same linear flow
    let mut envelope = None;
    if let Some(delta) = controls.envelope_delta {
        let hc = HeatControls { cells: 2048, ..HeatControls::default() };
        let k = kernel_at_origin(m, delta, &hc)?;
        let e0: Vec<T> = grid.nodes.iter().map(|&r| k.grid.interpolate(&k.values, r)).collect();
        let tiny = T::lit(1e-200);
        let mut lambda = T::zero();
        for (&u, &e) in w.iter().zip(&e0) {
            if u > tiny {
                lambda = lambda.max(if e > T::zero() { u / e } else { T::infinity() });
            }
        }
        let env: Vec<T> = e0.iter().map(|&e| e * lambda).collect();
        envelope = Some((delta, lambda, env, T::one(), T::one()));
    }
    let envelope_ratio = |w: &[T], env: &[T]| -> T {
        let top = env.iter().fold(T::zero(), |a, &v| a.max(v));
        let floor = top * T::lit(1e-12);
        w.iter().zip(env).filter(|(_, &e)| e > floor).fold(T::zero(), |a, (&u, &e)| a.max(u / e))
    };
    if let Some((_, _, env, max_r, fin)) = envelope.as_mut() {
        *fin = envelope_ratio(&w, env);
        *max_r = *fin;
    }

    // marks: recording cadence plus snapshot times, in the solver clock
    let mut snap_clocks: Vec<T> = controls
        .snapshots
        .iter()
        .map(|&t| if self_similar { t.ln_1p() } else { t })
        .filter(|&s| s <= clock_end)
        .collect();
    snap_clocks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut snap_idx = 0;
    while snap_idx < snap_clocks.len() && snap_clocks[snap_idx] <= T::zero() {
        snapshots.push(profile_of(&w, &grid, T::zero()));
        snap_idx += 1;
    }
    let record = controls.record_every;
    let mut next_record = record;

    let ln_umax = controls.u_max.ln();
    let ln_dtmin = controls.dt_min.ln();
    let onset_rate = T::lit(10.0) * c.max(T::one());
    let mut peak_cells = None;
    let mut track: Option<BlowUpTrack> = None;

    let mut clock = T::zero();
    let mut steps = 0usize;
    let sup_of = |w: &[T]| w.iter().fold(T::zero(), |a, &v| a.max(v));
    history.push(Sample {
        t: T::zero(),
        clock,
        sup_u: sup0,
        sup_frame: sup0,
        mass: mass_of(&w, &grid, clock),
        dt: T::zero(),
    });

    let kind = loop {
        let sup = sup_of(&w);
        if !sup.is_finite() {
            break OutcomeKind::Undetermined(UndeterminedReason::NonFinite);
        }
        let ln_sup = sup.ln();

        if peak_cells.is_none() && sup >= T::one() && sup.powf(q) >= onset_rate {
            let half = sup * T::lit(0.5);
            peak_cells = Some(w.iter().filter(|&&v| v >= half).count());
        }

        let remaining = clock_end - clock;
        if remaining <= clock_end * T::lit(1e-12) {
            break finish_global(&history, self_similar, q, horizon_t.max(phys_t(clock_end)));
        }
        if steps >= controls.max_steps {
            break OutcomeKind::Undetermined(UndeterminedReason::StepLimit { steps });
        }
        let clock_dt = T::lit(0.1) / (p * sup.powf(q));
        let mut next_mark = next_record;
        if snap_idx < snap_clocks.len() {
            next_mark = next_mark.min(snap_clocks[snap_idx]);
        }
        let mut dclock = clock_cap.min(clock_dt).min(remaining);
        let to_mark = next_mark - clock;
        if to_mark > T::zero() && to_mark < dclock * T::lit(1.000001) {
            dclock = to_mark;
        }

        let ln_dt = ln_dt_of(dclock, clock);
        // blow-up is confirmed in the working frame: late in the self-similar clock the
        // physical sup is tiny while the frame profile is already singular
        if ln_sup >= ln_umax && dclock.ln() <= ln_dtmin {
            let clock_star = match track.as_ref() {
                Some(tr) => extrapolate_t_star(tr, q.as_f64()),
                None => clock.as_f64() + ((T::one() - p) * ln_sup).exp().as_f64() / q.as_f64(),
            };
            let t_star = if self_similar { clock_star.exp_m1() } else { clock_star };
            if peak_cells.map(|k| k < PEAK_CELLS_MIN).unwrap_or(false) {
                break OutcomeKind::Undetermined(UndeterminedReason::GridTooCoarse { cells: peak_cells.unwrap() });
            }
            break OutcomeKind::BlowUp { t_star: T::lit(t_star) };
        }

        if refresh_geometry && clock - last_refresh >= controls.refresh {
            let s = radius_scale(clock);
            grid.set_area(|xi| log_area_ratio(xi, s));
            transport = Transport::new(&grid, true);
            last_refresh = clock;
        }

        transport.step(&mut w, dclock, clock_cap)?;
        let mut blew = false;
        for v in w.iter_mut() {
            match reaction(*v, p, c, dclock) {
                Some(x) => *v = x,
                None => {
                    blew = true;
                    *v = T::infinity();
                }
            }
        }
        if blew {
            break OutcomeKind::Undetermined(UndeterminedReason::NonFinite);
        }
        if let Some((_, _, env, max_r, fin)) = envelope.as_mut() {
            transport.step(env, dclock, clock_cap)?;
            let g = (c * dclock).exp();
            for v in env.iter_mut() {
                *v *= g;
            }
            *fin = envelope_ratio(&w, env);
            *max_r = max_r.max(*fin);
        }
        clock += dclock;
        steps += 1;

        let new_sup = sup_of(&w);
        let new_ln_u = ln_u_of(new_sup.ln(), clock);
        let dt_phys = ln_dt.exp();
        // blow-up tail: clock offsets from a mark keep full precision
        if new_sup.ln() >= ln_umax - T::lit(6.0 * std::f64::consts::LN_10) {
            let tr = track.get_or_insert_with(|| BlowUpTrack {
                mark_t: (clock - dclock).as_f64(),
                since: 0.0,
                points: Vec::new(),
            });
            tr.since += dclock.as_f64();
            let z = new_sup.powf(-q).as_f64();
            tr.points.push((tr.since, z));
            if tr.points.len() > FIT_POINTS {
                tr.points.remove(0);
            }
        }

        let at_snapshot = snap_idx < snap_clocks.len() && clock >= snap_clocks[snap_idx] * (T::one() - T::lit(1e-12));
        if at_snapshot {
            while snap_idx < snap_clocks.len() && clock >= snap_clocks[snap_idx] * (T::one() - T::lit(1e-12)) {
                snapshots.push(profile_of(&w, &grid, clock));
                snap_idx += 1;
            }
        }
        let in_tail = track.is_some();
        if clock >= next_record * (T::one() - T::lit(1e-12)) || in_tail {
            history.push(Sample {
                t: phys_t(clock),
                clock,
                sup_u: new_ln_u.exp(),
                sup_frame: new_sup,
                mass: mass_of(&w, &grid, clock),
                dt: dt_phys,
            });
            while next_record <= clock * (T::one() + T::lit(1e-12)) {
                next_record += record;
            }
        }
    };

    let envelope = envelope.map(|(delta, lambda, _, max_ratio, final_ratio)| EnvelopeCheck {
        delta,
        lambda,
        max_ratio,
        final_ratio,
    });
    Ok(Outcome {
        kind,
        p,
        frame: frame_used,
        steps,
        final_profile: profile_of(&w, &grid, clock),
        history,
        snapshots,
        peak_cells,
        envelope,
    })
}

fn extrapolate_t_star(tr: &BlowUpTrack, q: f64) -> f64 {
    let pts = &tr.points;
    let last = pts.last().copied().unwrap_or((0.0, 0.0));
    let fitted =
        if pts.len() >= 3 { lsq(&pts.iter().map(|&(t, z)| (vec![1.0, t], z)).collect::<Vec<_>>()) } else { None };
    let remaining = match fitted {
        Some(c) if c[1] < 0.0 => (-c[0] / c[1] - last.0).max(0.0),
        // exact ODE rate: z' = -(p-1)
        _ => last.1 / q,
    };
    tr.mark_t + last.0 + remaining
}

/// Classifies a run that reached its horizon.
fn finish_global<T: Real>(history: &[Sample<T>], self_similar: bool, q: T, horizon: T) -> OutcomeKind<T> {
    let n = history.len();
    let half = n / 2;
    let final_sup = history[n - 1].sup_frame;
    if n < 8 {
        return OutcomeKind::Undetermined(UndeterminedReason::NoDecay { decay_rate: T::nan(), final_sup });
    }
    let first_max = history[..half].iter().fold(T::zero(), |a, s| a.max(s.sup_u));
    let second_max = history[half..].iter().fold(T::zero(), |a, s| a.max(s.sup_u));
    let below_running_max = second_max < first_max;

    let (rate, reaction_small) = if self_similar {
        // ln W = a + s τ − β ln τ separates exponential from logarithmic decay
        let rows: Vec<(Vec<f64>, f64)> = history[half..]
            .iter()
            .filter(|s| s.clock > T::one())
            .map(|s| (vec![1.0, s.clock.as_f64(), s.clock.as_f64().ln()], s.sup_frame.ln().as_f64()))
            .collect();
        let rate = lsq(&rows).map(|c| c[1]).unwrap_or(f64::NAN);
        let w_end = final_sup.powf(q).as_f64();
        (rate, rate < -1e-3 && w_end < rate.abs() / 2.0)
    } else {
        let rows: Vec<(Vec<f64>, f64)> = history[half..]
            .iter()
            .filter(|s| s.t > T::zero())
            .map(|s| (vec![1.0, s.t.as_f64().ln()], s.sup_u.ln().as_f64()))
            .collect();
        let rate = lsq(&rows).map(|c| c[1]).unwrap_or(f64::NAN);
        let last = &history[n - 1];
        // reaction integrated over the remaining decay is small against the decay itself
        let load = (last.sup_u.powf(q) * last.t).as_f64();
        (rate, rate < -1e-3 && load < (rate.abs() / 2.0).min(0.5))
    };
    if below_running_max && reaction_small {
        OutcomeKind::GlobalEvidence { horizon, decay_rate: T::lit(rate), degenerate: false }
    } else {
        OutcomeKind::Undetermined(UndeterminedReason::NoDecay { decay_rate: T::lit(rate), final_sup })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SweepControls<T> {
    /// Amplitude ladder tried at each `p`.
    pub amplitudes: Vec<T>,
    /// Target bracket width.
    pub width: T,
    /// Maximum number of simulate calls.
    pub budget: usize,
    pub sim: SimControls<T>,
}

impl<T: Real> Default for SweepControls<T> {
    fn default() -> Self {
        Self {
            amplitudes: vec![T::lit(1e-4), T::lit(1e-2), T::one()],
            width: T::lit(0.125),
            budget: 40,
            sim: SimControls::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow<T> {
    pub p: T,
    pub amplitude: T,
    pub outcome: &'static str,
    pub t_star: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLevel<T> {
    pub p: T,
    /// Largest tested amplitude that still gave global evidence.
    pub largest_global_amplitude: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult<T> {
    /// `p_a` where every amplitude failed to persist, `p_b` where small data persisted.
    pub bracket: (T, T),
    pub levels: Vec<SweepLevel<T>>,
    pub table: Vec<SweepRow<T>>,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError<T: std::fmt::Debug> {
    #[error("simulation budget exhausted with bracket {:?}", partial.bracket)]
    BudgetExhausted { partial: SweepResult<T> },
    #[error("no transition inside the initial range; see the amplitude table")]
    NotBracketed { partial: SweepResult<T> },
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Brackets the exponent where small data stop blowing up.
pub fn sweep_exponent<T: Real, F: Fn(T) -> InitialData<T> + Sync>(
    m: &ModelManifold<T>,
    family: F,
    p_lo: T,
    p_hi: T,
    controls: &SweepControls<T>,
) -> Result<SweepResult<T>, SweepError<T>> {
    if !(p_lo < p_hi) {
        return Err(SweepError::Invalid("need p_lo < p_hi".into()));
    }
    if controls.budget < 8 {
        return Err(SweepError::Invalid("budget must allow at least 8 simulate calls".into()));
    }
    if controls.amplitudes.is_empty() {
        return Err(SweepError::Invalid("empty amplitude ladder".into()));
    }
    let mut ladder = controls.amplitudes.clone();
    ladder.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut state = SweepResult { bracket: (p_lo, p_hi), levels: Vec::new(), table: Vec::new(), calls: 0 };

    let eval = |p: T, state: &mut SweepResult<T>| -> Result<Option<bool>, SweepError<T>> {
        if state.calls + ladder.len() > controls.budget {
            return Ok(None);
        }
        let outcomes: Vec<Result<Outcome<T>, SimError>> =
            ladder.par_iter().map(|&a| simulate(m, p, &family(a), &controls.sim)).collect();
        state.calls += ladder.len();
        let mut largest = None;
        for (&a, o) in ladder.iter().zip(outcomes) {
            let o = o?;
            let t_star = match o.kind {
                OutcomeKind::BlowUp { t_star } => Some(t_star),
                _ => None,
            };
            if o.kind.is_global() {
                largest = Some(a);
            }
            log::info!("p = {p}, amplitude = {a}: {}", o.kind.label());
            state.table.push(SweepRow { p, amplitude: a, outcome: o.kind.label(), t_star });
        }
        state.levels.push(SweepLevel { p, largest_global_amplitude: largest });
        Ok(Some(largest.is_some()))
    };

    let lo = eval(p_lo, &mut state)?.expect("budget checked");
    let hi = match eval(p_hi, &mut state)? {
        Some(h) => h,
        None => return Err(SweepError::BudgetExhausted { partial: state }),
    };
    if lo || !hi {
        return Err(SweepError::NotBracketed { partial: state });
    }
    let (mut a, mut b) = (p_lo, p_hi);
    while b - a > controls.width {
        let mid = (a + b) * T::lit(0.5);
        match eval(mid, &mut state)? {
            Some(true) => b = mid,
            Some(false) => a = mid,
            None => {
                state.bracket = (a, b);
                return Err(SweepError::BudgetExhausted { partial: state });
            }
        }
        state.bracket = (a, b);
    }
    state.bracket = (a, b);
    Ok(state)
}

/// Runs `simulate` for each amplitude in parallel; order of results matches the input.
pub fn simulate_ladder<T: Real>(
    m: &ModelManifold<T>,
    p: T,
    data: &[InitialData<T>],
    controls: &SimControls<T>,
) -> Vec<Result<Outcome<T>, SimError>> {
    data.par_iter().map(|u0| simulate(m, p, u0, controls)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reaction_flow_is_exact() {
        // w' = w²: w(t) = w0 / (1 - w0 t)
        let w = reaction(2.0f64, 2.0, 0.0, 0.1).unwrap();
        assert!((w - 2.0 / 0.8).abs() < 1e-13);
        assert!(reaction(2.0f64, 2.0, 0.0, 0.5).is_none());
        // w' = w + w²: 1/w = (1/w0 + 1) e^{-t} - 1
        let w = reaction(0.5f64, 2.0, 1.0, 0.2).unwrap();
        let z = (2.0 + 1.0) * (-0.2f64).exp() - 1.0;
        assert!((w - 1.0 / z).abs() < 1e-13);
        assert_eq!(reaction(0.0f64, 3.0, 0.5, 1.0), Some(0.0));
    }

    #[test]
    fn initial_data_shapes() {
        let g = InitialData::gaussian(2.0f64, 1.0);
        assert!((g.eval(1.0) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        let b = InitialData::bump(0.1f64, 1.0);
        assert_eq!(b.eval(1.5), 0.0);
        assert!((b.eval(0.5) - 0.1 * 0.5625).abs() < 1e-15);
        let c = InitialData::<f64>::Custom { radii: vec![0.0, 1.0, 2.0], values: vec![1.0, 0.5, 0.0] };
        assert!((c.eval(1.5) - 0.25).abs() < 1e-15);
        assert_eq!(c.with_amplitude(2.0).eval(0.0), 2.0);
        let m = ModelManifold::<f64>::euclidean(2).unwrap();
        assert!(InitialData::gaussian(-1.0, 1.0).validate(&m).is_err());
        assert!(InitialData::gaussian(1.0, 2000.0).validate(&m).is_err());
    }

    #[test]
    fn zero_data_is_degenerate_global() {
        let m = ModelManifold::<f64>::euclidean(2).unwrap();
        let o = simulate(&m, 2.0, &InitialData::gaussian(0.0, 1.0), &SimControls::default()).unwrap();
        assert!(matches!(o.kind, OutcomeKind::GlobalEvidence { degenerate: true, .. }));
    }

    #[test]
    fn subcritical_bump_blows_up() {
        let m = ModelManifold::<f64>::euclidean(1).unwrap();
        let o = simulate(&m, 2.0, &InitialData::bump(0.1, 1.0), &SimControls::default()).unwrap();
        match o.kind {
            OutcomeKind::BlowUp { t_star } => assert!(t_star > 1.0 && t_star < 1e4, "{t_star}"),
            k => panic!("{k:?}"),
        }
        assert!(o.peak_cells.unwrap() >= PEAK_CELLS_MIN);
    }

    #[test]
    fn supercritical_small_gaussian_persists() {
        let m = ModelManifold::<f64>::euclidean(1).unwrap();
        let o = simulate(&m, 4.0, &InitialData::gaussian(0.01, 1.0), &SimControls::default()).unwrap();
        match o.kind {
            // linear rate 1/(p-1) - n/2 = -1/6
            OutcomeKind::GlobalEvidence { decay_rate, .. } => {
                assert!((decay_rate + 1.0 / 6.0).abs() < 2e-3, "{decay_rate}")
            }
            k => panic!("{k:?}"),
        }
        let sups: Vec<f64> = o.history.iter().map(|s| s.sup_u).collect();
        assert!(sups.last().unwrap() < &sups[0]);
    }

    #[test]
    fn physical_frame_agrees_on_short_horizon() {
        let m = ModelManifold::<f64>::euclidean(2).unwrap();
        let u0 = InitialData::gaussian(0.5, 1.0);
        let base = SimControls::<f64> { tau_max: 2.0f64.ln_1p(), snapshots: vec![2.0], ..SimControls::default() };
        let a = simulate(&m, 3.0, &u0, &SimControls { frame: Frame::SelfSimilar, ..base.clone() }).unwrap();
        let b = simulate(
            &m,
            3.0,
            &u0,
            &SimControls { frame: Frame::Physical, horizon: Some(2.0), dt_max: 1e-3, cells: 2048, ..base },
        )
        .unwrap();
        let (pa, pb) = (&a.snapshots[0], &b.snapshots[0]);
        let top = pa.values[0];
        for r in [0.0, 0.5, 1.0, 2.0, 3.0] {
            assert!((pa.eval(r) - pb.eval(r)).abs() < 0.01 * top, "r = {r}: {} vs {}", pa.eval(r), pb.eval(r));
        }
    }
}
