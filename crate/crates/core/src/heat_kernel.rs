//! Linear radial heat flow `∂_t u = u_rr + (A'/A) u_r` by conservative finite volumes and
//! backward Euler, with a reflective origin and an absorbing outer face.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, RadialGrid};
use crate::manifold::ModelManifold;
use crate::scalar::Real;
use crate::tridiag::{Factored, Tridiagonal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeatError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("singular implicit system at dt = {dt}")]
    StabilityFailure { dt: f64 },
    #[error("mass {mass:e} within 10% of the outer radius at t = {t}; enlarge the domain")]
    BoundaryContamination { t: f64, mass: f64 },
    #[error("t = {t} is outside the resolvable range [{t_min}, {t_max}]")]
    Unresolved { t: f64, t_min: f64, t_max: f64 },
    #[error("time span must be positive and finite, got {0}")]
    BadTime(f64),
}

/// Knobs shared by every heat-flow entry point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct HeatControls<T> {
    pub cells: usize,
    /// Outer radius; `None` sizes the domain from the target time.
    pub r_outer: Option<T>,
    /// Stretching rate of the grid, `0` for uniform cells.
    pub grading: T,
    /// Cap on the time step; `None` means `0.25 h_min²`.
    pub dt_max: Option<T>,
    /// Minimum number of implicit steps per call.
    pub min_steps: usize,
}

impl<T: Real> Default for HeatControls<T> {
    fn default() -> Self {
        Self { cells: 1024, r_outer: None, grading: T::zero(), dt_max: None, min_steps: 64 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialField<T> {
    #[serde(skip)]
    pub grid: Arc<RadialGrid<T>>,
    pub values: Vec<T>,
    pub time: T,
}

impl<T: Real> RadialField<T> {
    pub fn zeros(grid: Arc<RadialGrid<T>>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![T::zero(); n], time: T::zero() }
    }

    pub fn from_fn(grid: Arc<RadialGrid<T>>, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Self { grid, values, time: T::zero() }
    }

    /// Unit discrete mass in the first cell.
    pub fn delta(grid: Arc<RadialGrid<T>>) -> Self {
        let mut f = Self::zeros(grid);
        f.values[0] = f.grid.weights[0].recip();
        f
    }

    pub fn mass(&self) -> T {
        self.grid.integrate(&self.values)
    }

    pub fn sup(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, &v| a.min(v))
    }

    /// Mass carried by cells centered beyond `fraction · R`.
    pub fn outer_mass(&self, fraction: T) -> T {
        let cut = self.grid.outer() * fraction;
        self.grid
            .nodes
            .iter()
            .zip(&self.grid.weights)
            .zip(&self.values)
            .filter(|((&r, _), _)| r >= cut)
            .map(|((_, &w), &u)| w * u.abs())
            .sum()
    }
}

/// Stiffness of `-(A u_r)_r` on a grid: conductances between neighbours and to the
/// absorbing outer face.
#[derive(Debug, Clone)]
pub struct Stiffness<T> {
    /// `A_{i+1/2} / (r_{i+1} - r_i)` for `i < N-1`.
    pub inner: Vec<T>,
    /// `A_R / (R - r_N)`.
    pub outer: T,
}

impl<T: Real> Stiffness<T> {
    pub fn new(grid: &RadialGrid<T>) -> Self {
        let n = grid.len();
        let inner = (0..n - 1).map(|i| grid.face_areas[i + 1] / (grid.nodes[i + 1] - grid.nodes[i])).collect();
        let outer = grid.face_areas[n] / (grid.outer() - grid.nodes[n - 1]);
        Self { inner, outer }
    }

    /// `w/dt + L` as a tridiagonal matrix.
    pub fn implicit_matrix(&self, weights: &[T], dt: T) -> Tridiagonal<T> {
        let n = weights.len();
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            let left = if i > 0 { self.inner[i - 1] } else { T::zero() };
            let right = if i + 1 < n { self.inner[i] } else { self.outer };
            a.diag[i] = weights[i] / dt + left + right;
            if i > 0 {
                a.lower[i] = -left;
            }
            if i + 1 < n {
                a.upper[i] = -self.inner[i];
            }
        }
        a
    }
}

/// Backward-Euler propagator with a fixed step, factored once.
#[derive(Debug, Clone)]
pub struct HeatStep<T> {
    pub dt: T,
    weights_over_dt: Vec<T>,
    factored: Factored<T>,
}

impl<T: Real> HeatStep<T> {
    pub fn new(grid: &RadialGrid<T>, dt: T) -> Result<Self, HeatError> {
        let k = Stiffness::new(grid);
        let a = k.implicit_matrix(&grid.weights, dt);
        let factored = a.factor().ok_or(HeatError::StabilityFailure { dt: dt.as_f64() })?;
        let weights_over_dt = grid.weights.iter().map(|&w| w / dt).collect();
        Ok(Self { dt, weights_over_dt, factored })
    }

    /// One implicit step in place.
    pub fn apply(&self, u: &mut [T]) {
        for (v, &c) in u.iter_mut().zip(&self.weights_over_dt) {
            *v *= c;
        }
        self.factored.solve_in_place(u);
    }
}

/// Step size and count for a span of length `span`.
pub fn step_plan<T: Real>(grid: &RadialGrid<T>, span: T, controls: &HeatControls<T>) -> (T, usize) {
    let h = grid.min_width();
    let cap = controls.dt_max.unwrap_or(T::lit(0.25) * h * h);
    let dt = cap.min(span / T::from_usize_lossy(controls.min_steps.max(1)));
    let steps = (span / dt).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    (span / T::from_usize_lossy(steps), steps)
}

/// Advances `u` by `dt_total`.
pub fn evolve<T: Real>(
    u: &RadialField<T>,
    dt_total: T,
    controls: &HeatControls<T>,
) -> Result<RadialField<T>, HeatError> {
    if !(dt_total > T::zero() && dt_total.is_finite()) {
        return Err(HeatError::BadTime(dt_total.as_f64()));
    }
    let (dt, steps) = step_plan(&u.grid, dt_total, controls);
    let stepper = HeatStep::new(&u.grid, dt)?;
    let mut values = u.values.clone();
    for _ in 0..steps {
        stepper.apply(&mut values);
    }
    clamp_roundoff(&mut values, &u.values);
    Ok(RadialField { grid: Arc::clone(&u.grid), values, time: u.time + dt_total })
}

// Backward Euler is an M-matrix scheme, so negatives from nonnegative data are roundoff.
fn clamp_roundoff<T: Real>(values: &mut [T], input: &[T]) {
    if input.iter().all(|&v| v >= T::zero()) {
        let mut clamped = 0usize;
        for v in values.iter_mut() {
            if *v < T::zero() {
                debug_assert!(*v >= T::lit(-1e-12), "positivity lost: {v}");
                *v = T::zero();
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::debug!("clamped {clamped} roundoff negatives");
        }
    }
}

/// Default outer radius for a kernel run to time `t`: Gaussian spread plus drift transport.
pub fn kernel_radius<T: Real>(m: &ModelManifold<T>, t: T) -> T {
    let spread = T::lit(12.0) * t.sqrt();
    let base = T::lit(8.0).max(spread);
    let drift = m.drift_unchecked(base.max(T::one())).max(T::zero());
    base + drift * t
}

/// Grid used by the kernel routines for times up to `t`.
pub fn kernel_grid<T: Real>(
    m: &ModelManifold<T>,
    t: T,
    controls: &HeatControls<T>,
) -> Result<RadialGrid<T>, HeatError> {
    let r = controls.r_outer.unwrap_or_else(|| kernel_radius(m, t));
    Ok(RadialGrid::new(m, r, controls.cells, controls.grading)?)
}

fn check_resolvable<T: Real>(m: &ModelManifold<T>, grid: &RadialGrid<T>, t: T) -> Result<(), HeatError> {
    let h = grid.min_width();
    let t_min = T::lit(16.0) * h * h;
    let r6 = m.r_max() / T::lit(6.0);
    let t_max = r6 * r6;
    if !(t >= t_min && t <= t_max) {
        return Err(HeatError::Unresolved { t: t.as_f64(), t_min: t_min.as_f64(), t_max: t_max.as_f64() });
    }
    Ok(())
}

fn check_boundary<T: Real>(f: &RadialField<T>) -> Result<(), HeatError> {
    let mass = f.outer_mass(T::lit(0.9));
    if mass > T::lit(1e-8) {
        return Err(HeatError::BoundaryContamination { t: f.time.as_f64(), mass: mass.as_f64() });
    }
    Ok(())
}

/// Discrete minimal heat kernel `P_t(o, ·)` centered at the origin.
pub fn kernel_at_origin<T: Real>(
    m: &ModelManifold<T>,
    t: T,
    controls: &HeatControls<T>,
) -> Result<RadialField<T>, HeatError> {
    let grid = Arc::new(kernel_grid(m, t, controls)?);
    kernel_on_grid(m, grid, t, controls)
}

pub fn kernel_on_grid<T: Real>(
    m: &ModelManifold<T>,
    grid: Arc<RadialGrid<T>>,
    t: T,
    controls: &HeatControls<T>,
) -> Result<RadialField<T>, HeatError> {
    check_resolvable(m, &grid, t)?;
    let p = evolve(&RadialField::delta(grid), t, controls)?;
    check_boundary(&p)?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SemigroupDefect<T> {
    pub t: T,
    pub s: T,
    /// `sup |P_{t+s} - S(s) P_t|`.
    pub defect: T,
    /// `sup P_{t+s}`.
    pub scale: T,
}

impl<T: Real> SemigroupDefect<T> {
    pub fn relative(&self) -> T {
        self.defect / self.scale
    }
}

/// Compares the kernel at `t + s` with the kernel at `t` evolved by `s`, on one grid.
pub fn semigroup_defect<T: Real>(
    m: &ModelManifold<T>,
    t: T,
    s: T,
    controls: &HeatControls<T>,
) -> Result<SemigroupDefect<T>, HeatError> {
    let grid = Arc::new(kernel_grid(m, t + s, controls)?);
    let direct = kernel_on_grid(m, Arc::clone(&grid), t + s, controls)?;
    let first = kernel_on_grid(m, grid, t, controls)?;
    let composed = evolve(&first, s, controls)?;
    let defect = direct.values.iter().zip(&composed.values).fold(T::zero(), |a, (&x, &y)| a.max((x - y).abs()));
    Ok(SemigroupDefect { t, s, defect, scale: direct.sup() })
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport<T> {
    pub times: Vec<T>,
    /// `sup_y P_t(o, y)` per time.
    pub sup_values: Vec<T>,
    /// `sup_y P_t(o, y) · V(√t)` per time.
    pub ratios: Vec<T>,
    /// Largest sampled ratio: the certified constant on the sampled range.
    pub c1: T,
    pub masses: Vec<T>,
    /// `(t/2, t/2)` semigroup checks per time.
    pub semigroup_defects: Vec<SemigroupDefect<T>>,
    /// False when the ratios keep growing at the end of the sampled range.
    pub bounded: bool,
    /// The bound is certified at the origin and only on this interval of times.
    pub sampled_range: (T, T),
}

/// Samples `sup P_t · V(√t)` over `times`.
pub fn verify_condition_h<T: Real>(
    m: &ModelManifold<T>,
    times: &[T],
    controls: &HeatControls<T>,
) -> Result<KernelReport<T>, HeatError> {
    assert!(!times.is_empty(), "need at least one time");
    let rows: Vec<Result<(T, T, SemigroupDefect<T>), HeatError>> = times
        .par_iter()
        .map(|&t| {
            let half = t * T::lit(0.5);
            let grid = Arc::new(kernel_grid(m, t, controls)?);
            let p = kernel_on_grid(m, Arc::clone(&grid), t, controls)?;
            let first = kernel_on_grid(m, grid, half, controls)?;
            let composed = evolve(&first, half, controls)?;
            let defect = p.values.iter().zip(&composed.values).fold(T::zero(), |a, (&x, &y)| a.max((x - y).abs()));
            Ok((p.sup(), p.mass(), SemigroupDefect { t: half, s: half, defect, scale: p.sup() }))
        })
        .collect();
    let mut sup_values = Vec::new();
    let mut masses = Vec::new();
    let mut defects = Vec::new();
    for row in rows {
        let (s, mass, d) = row?;
        sup_values.push(s);
        masses.push(mass);
        defects.push(d);
    }
    let ratios: Vec<T> = times.iter().zip(&sup_values).map(|(&t, &s)| s * m.volume_unchecked(t.sqrt())).collect();
    let c1 = ratios.iter().fold(T::zero(), |a, &r| a.max(r));
    let bounded = ratios_bounded(&ratios);
    let lo = times.iter().fold(T::infinity(), |a, &t| a.min(t));
    let hi = times.iter().fold(T::zero(), |a, &t| a.max(t));
    Ok(KernelReport {
        times: times.to_vec(),
        sup_values,
        ratios,
        c1,
        masses,
        semigroup_defects: defects,
        bounded,
        sampled_range: (lo, hi),
    })
}

// Unbounded when the last three ratios rise strictly and end at least twice the
// smallest sampled ratio.
fn ratios_bounded<T: Real>(ratios: &[T]) -> bool {
    if ratios.iter().any(|r| !r.is_finite()) {
        return false;
    }
    let n = ratios.len();
    if n < 3 {
        return true;
    }
    let tail = &ratios[n - 3..];
    let rising = tail.windows(2).all(|w| w[1] > w[0]);
    let min = ratios.iter().fold(T::infinity(), |a, &r| a.min(r));
    !(rising && tail[2] >= T::lit(2.0) * min)
}
