//! Duhamel fixed-point construction of small global solutions inside the ball
//! `0 ≤ u ≤ λ P_{t+δ}(o, ·)`.
//!
//! Time is sampled on geometric slices `t_j = δ(2^{j/4} - 1)`. The operator
//! `Tu(t) = S(t)u0 + ∫_0^t S(t-s) u(s)^p ds` is realized recursively,
//! `D_j = S(Δ_j)(D_{j-1} + Δ_j/2 · g_{j-1}) + Δ_j/2 · g_j` with `g = u^p`, which is the
//! trapezoid rule in `s` written through the discrete semigroup. The envelope
//! `λ P_{t_j+δ}` is carried through the same propagators, so the ball is exactly the
//! discrete analogue of the continuous one.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{classify, classify_numeric, validate_p, CriterionError, VerdictKind};
use crate::grid::{GridError, RadialGrid};
use crate::heat_kernel::{kernel_radius, HeatError, HeatStep, RadialField};
use crate::manifold::{ModelManifold, VolumeFamily, Warp};
use crate::quadrature::integrate_dyadic;
use crate::scalar::Real;
use crate::semilinear::InitialData;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PicardError {
    #[error(transparent)]
    Exponent(#[from] CriterionError),
    #[error("the volume integral diverges for p = {p}; small global solutions are not expected")]
    DivergentIntegral { p: f64 },
    #[error("result leaves the envelope at r = {r}, t = {t}: {value:e} > {bound:e}")]
    EnvelopeViolation { r: f64, t: f64, value: f64, bound: f64 },
    #[error("initial data exceed (λ/2) P_δ at r = {r}")]
    InitialDataTooLarge { r: f64 },
    #[error("no contraction: factors {factors:?}")]
    NoContraction { factors: Vec<f64> },
    #[error("the two fields coincide")]
    ZeroDistance,
    #[error("tail of the C4 integral did not settle below 1% by r = {r}")]
    TailUnresolved { r: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Heat(#[from] HeatError),
}

/// Values `u(r_i, t_j)` on a radial grid and a list of times.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceTimeField<T> {
    #[serde(skip)]
    pub grid: Arc<RadialGrid<T>>,
    pub times: Vec<T>,
    /// `values[j][i] = u(r_i, t_j)`.
    pub values: Vec<Vec<T>>,
}

impl<T: Real> SpaceTimeField<T> {
    pub fn zeros(grid: Arc<RadialGrid<T>>, times: Vec<T>) -> Self {
        let values = vec![vec![T::zero(); grid.len()]; times.len()];
        Self { grid, times, values }
    }

    pub fn sup(&self) -> T {
        self.values.iter().flatten().fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    /// `sup |self - other|`.
    pub fn distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(T::zero(), |a, (&x, &y)| a.max((x - y).abs()))
    }

    pub fn scaled(&self, f: T) -> Self {
        let values = self.values.iter().map(|row| row.iter().map(|&v| v * f).collect()).collect();
        Self { grid: Arc::clone(&self.grid), times: self.times.clone(), values }
    }

    /// Slice `j` as a heat-flow field.
    pub fn slice(&self, j: usize) -> RadialField<T> {
        RadialField { grid: Arc::clone(&self.grid), values: self.values[j].clone(), time: self.times[j] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct PicardSetup<T> {
    /// Number of slices after `t_0 = 0`.
    pub slices: usize,
    pub cells: usize,
    pub grading: T,
    pub r_outer: Option<T>,
    /// Implicit steps per slice.
    pub steps_per_slice: usize,
    /// Factor applied to the largest admissible `λ`.
    pub safety: T,
}

impl<T: Real> Default for PicardSetup<T> {
    fn default() -> Self {
        Self { slices: 40, cells: 1024, grading: T::lit(0.5), r_outer: None, steps_per_slice: 32, safety: T::lit(0.9) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C4Estimate<T> {
    /// `∫_0^∞ V(√(s+δ))^{-(p-1)} ds`, tail included.
    pub value: T,
    /// Analytic tail beyond `cutoff`.
    pub tail: T,
    pub cutoff: T,
}

/// Asymptotic family of the volume, when there is one.
fn asymptotic_family<T: Real>(m: &ModelManifold<T>) -> Option<VolumeFamily<T>> {
    match m.warp_kind() {
        Warp::PowerLog(f) => Some(f.clone()),
        Warp::Euclidean => {
            let n = T::from_usize_lossy(m.dimension());
            VolumeFamily::power(m.omega() / n, n).ok()
        }
        Warp::Hyperbolic => None,
    }
}

/// Verdict of the volume criterion for `m`, symbolic when a family is available.
pub fn criterion_verdict<T: Real>(m: &ModelManifold<T>, p: T) -> Result<VerdictKind, CriterionError> {
    match asymptotic_family(m) {
        Some(f) => Ok(classify(&f, p)?.kind),
        None => Ok(classify_numeric(m, p, T::one())?.kind),
    }
}

/// `C4 = ∫_0^∞ V(√(s+δ))^{-(p-1)} ds = ∫_{√δ}^∞ 2r V(r)^{-(p-1)} dr`.
///
/// The integral is computed by quadrature up to a cutoff that doubles until the tail bound
/// `R f(R)/ε(R)` is below 1% of the total, where `f = 2r V^{-(p-1)}` and `-1-ε` is the
/// local log-slope of `f`. The bound is exact for pure powers and an upper bound when the
/// local slope steepens outward, as it does for every family with positive log exponents.
pub fn estimate_c4<T: Real>(m: &ModelManifold<T>, p: T, delta: T) -> Result<C4Estimate<T>, PicardError> {
    validate_p(p)?;
    if criterion_verdict(m, p)? != VerdictKind::Convergent {
        return Err(PicardError::DivergentIntegral { p: p.as_f64() });
    }
    let q = p - T::one();
    let two = T::lit(2.0);
    let f = |r: T| two * r * (-q * m.volume_unchecked(r).ln()).exp();
    let start = delta.sqrt();
    let mut cutoff = (start * two).max(m.asymptotic_radius() * two).max(T::lit(16.0));
    let mut body = integrate_dyadic(f, start, cutoff, T::lit(1e-12)).value;
    for _ in 0..200 {
        // local log-slope of V from the drift: d ln V / d ln r = r V'/V
        let slope_v = cutoff * m.area(cutoff) / m.volume_unchecked(cutoff);
        let eps = q * slope_v - two;
        if eps > T::zero() {
            let tail = cutoff * f(cutoff) / eps;
            if tail <= T::lit(0.01) * (body + tail) {
                return Ok(C4Estimate { value: body + tail, tail, cutoff });
            }
        }
        let next = cutoff * T::lit(16.0);
        body += integrate_dyadic(f, cutoff, next, T::lit(1e-12)).value;
        cutoff = next;
    }
    Err(PicardError::TailUnresolved { r: cutoff.as_f64() })
}

/// Ball data: `λ`, `δ`, the measured `C1`, `C4` and the discrete envelope `λ P_{t_j+δ}`.
#[derive(Debug, Clone, Serialize)]
pub struct BallParams<T> {
    pub p: T,
    pub lambda: T,
    pub delta: T,
    /// `max_j sup P_{t_j+δ} · V(√(t_j+δ))` of the discrete kernel.
    pub c1: T,
    pub c4: C4Estimate<T>,
    /// `p λ^{p-1} C1^{p-1} C4`.
    pub contraction_bound: T,
    pub envelope: SpaceTimeField<T>,
    #[serde(skip)]
    steps: Vec<HeatStep<T>>,
    #[serde(skip)]
    steps_per_slice: usize,
}

/// `t_j = δ(2^{j/4} - 1)` for `j = 0..=J`.
pub fn slice_times<T: Real>(delta: T, slices: usize) -> Vec<T> {
    (0..=slices).map(|j| delta * (T::lit(j as f64 / 4.0) * T::LN_2()).exp_m1()).collect()
}

impl<T: Real> BallParams<T> {
    /// Builds the ball with the largest admissible `λ` times the safety factor.
    pub fn new(m: &ModelManifold<T>, p: T, delta: T, setup: &PicardSetup<T>) -> Result<Self, PicardError> {
        let c4 = estimate_c4(m, p, delta)?;
        let q = p - T::one();
        let mut ball = Self::with_lambda(m, p, delta, T::one(), c4, setup)?;
        let base = (ball.c1.powf(q) * c4.value).recip();
        let from_ball = (base / T::lit(2.0)).powf(q.recip());
        let from_contraction = (base / p).powf(q.recip());
        let lambda = setup.safety * from_ball.min(from_contraction);
        ball.rescale(lambda);
        Ok(ball)
    }

    /// Ball with a prescribed `λ`; `C4` as given.
    pub fn with_lambda(
        m: &ModelManifold<T>,
        p: T,
        delta: T,
        lambda: T,
        c4: C4Estimate<T>,
        setup: &PicardSetup<T>,
    ) -> Result<Self, PicardError> {
        validate_p(p)?;
        assert!(delta > T::one(), "δ must exceed 1");
        let times = slice_times(delta, setup.slices);
        let t_end = *times.last().unwrap() + delta;
        let r = setup.r_outer.unwrap_or_else(|| kernel_radius(m, t_end));
        let grid = Arc::new(RadialGrid::new(m, r, setup.cells, setup.grading)?);
        let per = setup.steps_per_slice.max(1);
        let steps = times
            .windows(2)
            .map(|w| HeatStep::new(&grid, (w[1] - w[0]) / T::from_usize_lossy(per)))
            .collect::<Result<Vec<_>, _>>()?;

        // P_δ itself, from the discrete delta, on the same grid
        let first = HeatStep::new(&grid, delta / T::from_usize_lossy(8 * per))?;
        let mut kernel = RadialField::delta(Arc::clone(&grid)).values;
        for _ in 0..8 * per {
            first.apply(&mut kernel);
        }
        let mut envelope = SpaceTimeField::zeros(Arc::clone(&grid), times.clone());
        envelope.values[0] = kernel.clone();
        for j in 1..times.len() {
            for _ in 0..per {
                steps[j - 1].apply(&mut kernel);
            }
            envelope.values[j] = kernel.clone();
        }
        let c1 = times
            .iter()
            .zip(&envelope.values)
            .map(|(&t, row)| row.iter().fold(T::zero(), |a, &v| a.max(v)) * m.volume_unchecked((t + delta).sqrt()))
            .fold(T::zero(), |a, v| a.max(v));
        let q = p - T::one();
        let mut ball = Self {
            p,
            lambda: T::one(),
            delta,
            c1,
            c4,
            contraction_bound: p * c1.powf(q) * c4.value,
            envelope,
            steps,
            steps_per_slice: per,
        };
        ball.rescale(lambda);
        Ok(ball)
    }

    /// Changes `λ`, rescaling the envelope and the contraction bound.
    pub fn rescale(&mut self, lambda: T) {
        let f = lambda / self.lambda;
        self.envelope = self.envelope.scaled(f);
        self.contraction_bound *= f.powf(self.p - T::one());
        self.lambda = lambda;
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.envelope.grid
    }

    pub fn times(&self) -> &[T] {
        &self.envelope.times
    }

    /// `S(Δ_j)` in place.
    pub fn propagate(&self, j: usize, u: &mut [T]) {
        for _ in 0..self.steps_per_slice {
            self.steps[j - 1].apply(u);
        }
    }

    /// Initial data on the grid, checked against `(λ/2) P_δ`.
    pub fn initial_values(&self, u0: &InitialData<T>) -> Result<Vec<T>, PicardError> {
        let half = T::lit(0.5);
        let vals: Vec<T> = self.grid().nodes.iter().map(|&r| u0.eval(r)).collect();
        for ((&v, &e), &r) in vals.iter().zip(&self.envelope.values[0]).zip(&self.grid().nodes) {
            if v > half * e * (T::one() + T::lit(1e-9)) {
                return Err(PicardError::InitialDataTooLarge { r: r.as_f64() });
            }
        }
        Ok(vals)
    }
}

/// Relative slack allowed above the envelope.
const ENVELOPE_SLACK: f64 = 1e-6;

fn duhamel<T: Real>(params: &BallParams<T>, start: &[T], u: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    let p = params.p;
    let half = T::lit(0.5);
    let times = params.times();
    let mut out = SpaceTimeField::zeros(Arc::clone(params.grid()), times.to_vec());
    out.values[0] = start.to_vec();
    let mut cur = start.to_vec();
    for j in 1..times.len() {
        let dt = times[j] - times[j - 1];
        for (c, &v) in cur.iter_mut().zip(&u.values[j - 1]) {
            *c += half * dt * v.max(T::zero()).powf(p);
        }
        params.propagate(j, &mut cur);
        for (c, &v) in cur.iter_mut().zip(&u.values[j]) {
            *c += half * dt * v.max(T::zero()).powf(p);
        }
        out.values[j] = cur.clone();
    }
    out
}

/// `Tu`, checked against the envelope.
pub fn apply_t<T: Real>(
    u0: &InitialData<T>,
    u: &SpaceTimeField<T>,
    params: &BallParams<T>,
) -> Result<SpaceTimeField<T>, PicardError> {
    let start = params.initial_values(u0)?;
    let out = duhamel(params, &start, u);
    check_envelope(&out, params)?;
    Ok(out)
}

fn check_envelope<T: Real>(f: &SpaceTimeField<T>, params: &BallParams<T>) -> Result<(), PicardError> {
    let slack = T::one() + T::lit(ENVELOPE_SLACK);
    for (j, (row, env)) in f.values.iter().zip(&params.envelope.values).enumerate() {
        for (i, (&v, &e)) in row.iter().zip(env).enumerate() {
            if v > e * slack + T::min_positive_value() {
                return Err(PicardError::EnvelopeViolation {
                    r: f.grid.nodes[i].as_f64(),
                    t: f.times[j].as_f64(),
                    value: v.as_f64(),
                    bound: e.as_f64(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPoint<T> {
    pub solution: SpaceTimeField<T>,
    /// `‖u_{k+1} - u_k‖ / ‖u_k - u_{k-1}‖` per iteration.
    pub contraction_history: Vec<T>,
    pub distances: Vec<T>,
    pub iterations: usize,
    /// `‖T u - u‖` of the returned field.
    pub residual: T,
}

/// Iterates `u_{k+1} = T u_k` from `u = 0` until successive iterates are within `tol`.
pub fn iterate_to_fixed_point<T: Real>(
    u0: &InitialData<T>,
    params: &BallParams<T>,
    tol: T,
    max_iter: usize,
) -> Result<FixedPoint<T>, PicardError> {
    let mut u = SpaceTimeField::zeros(Arc::clone(params.grid()), params.times().to_vec());
    let mut factors = Vec::new();
    let mut distances: Vec<T> = Vec::new();
    let mut rising = 0;
    for k in 0..max_iter {
        let next = apply_t(u0, &u, params)?;
        let d = next.distance(&u);
        if let Some(&prev) = distances.last() {
            let f = if prev > T::zero() { d / prev } else { T::zero() };
            factors.push(f);
            rising = if f > T::one() { rising + 1 } else { 0 };
            if rising >= 3 {
                return Err(PicardError::NoContraction { factors: factors.iter().map(|f| f.as_f64()).collect() });
            }
        }
        distances.push(d);
        u = next;
        if d <= tol {
            let residual = apply_t(u0, &u, params)?.distance(&u);
            return Ok(FixedPoint {
                solution: u,
                contraction_history: factors,
                distances,
                iterations: k + 1,
                residual,
            });
        }
    }
    Err(PicardError::NoContraction { factors: factors.iter().map(|f| f.as_f64()).collect() })
}

/// `‖Tu1 - Tu2‖ / ‖u1 - u2‖` in the sup norm over grid and slices.
pub fn contraction_factor<T: Real>(
    u1: &SpaceTimeField<T>,
    u2: &SpaceTimeField<T>,
    params: &BallParams<T>,
) -> Result<T, PicardError> {
    let d = u1.distance(u2);
    if d == T::zero() {
        return Err(PicardError::ZeroDistance);
    }
    let p = params.p;
    let q = p - T::one();
    // the mean-value bound |u1^p - u2^p| ≤ p max(u1,u2)^{p-1} |u1 - u2|
    for (a, b) in u1.values.iter().flatten().zip(u2.values.iter().flatten()) {
        let (a, b) = (a.max(T::zero()), b.max(T::zero()));
        let lhs = (a.powf(p) - b.powf(p)).abs();
        let rhs = p * a.max(b).powf(q) * (a - b).abs();
        debug_assert!(lhs <= rhs * (T::one() + T::lit(1e-9)) + T::min_positive_value());
    }
    let zero = vec![T::zero(); params.grid().len()];
    let t1 = duhamel(params, &zero, u1);
    let t2 = duhamel(params, &zero, u2);
    Ok(t1.distance(&t2) / d)
}

/// Pair of fields `θ_k · λ P_{t+δ}` with nodewise uniform `θ_k ∈ [0, 1]`.
pub fn random_pair<T: Real>(params: &BallParams<T>, rng: &mut ChaCha8Rng) -> (SpaceTimeField<T>, SpaceTimeField<T>) {
    let mut draw = || {
        let values = params
            .envelope
            .values
            .iter()
            .map(|row| row.iter().map(|&e| e * T::lit(rng.gen::<f64>())).collect())
            .collect();
        SpaceTimeField { grid: Arc::clone(params.grid()), times: params.times().to_vec(), values }
    };
    let a = draw();
    let b = draw();
    (a, b)
}

/// Empirical contraction factors over `draws` seeded random pairs.
pub fn sample_contraction<T: Real>(params: &BallParams<T>, draws: usize, seed: u64) -> Result<Vec<T>, PicardError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| {
            let (a, b) = random_pair(params, &mut rng);
            contraction_factor(&a, &b, params)
        })
        .collect()
}
