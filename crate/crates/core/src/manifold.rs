//! Rotationally symmetric model manifolds `dr² + ψ(r)² dθ²` with prescribed volume growth.
//!
//! Everything downstream only needs the radial profile: the geodesic-ball volume
//! `V(r)`, its derivative `V'(r) = ω_{n-1} ψ(r)^{n-1}` (the area of the sphere of
//! radius `r`) and the radial drift `(n-1)ψ'/ψ = V''/V'` that appears in the radial
//! Laplacian `Δu = u_rr + (n-1)(ψ'/ψ) u_r`.
//!
//! Power-log families `V(r) = C r^{α1} (ln r)^{α2} (ln ln r)^{α3} ⋯` are realized by
//! splicing: the manifold is exactly Euclidean for `r ≤ r_splice`, exactly the target
//! family for `r ≥ 2 r_splice`, and the two volume functions are blended in between
//! with a quintic smoothstep. Blending volumes (rather than warps) keeps `V` in closed
//! form everywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::integrate;
use crate::scalar::{logspace, smoothstep5, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("radius {r} outside [0, {r_max}]")]
    OutOfRange { r: f64, r_max: f64 },
    #[error("radial drift is singular at the origin")]
    OriginSingularity,
    #[error("volume is not increasing near r = {r} (V'(r) = {area})")]
    NonmonotoneVolume { r: f64, area: f64 },
    #[error("warp derivative jumps across the splice at r = {r} (relative mismatch {mismatch:e})")]
    SpliceMismatch { r: f64, mismatch: f64 },
    #[error("invalid volume family: {0}")]
    InvalidFamily(String),
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
}

/// Growth law `V(r) = C r^{α1} (ln r)^{α2} (ln ln r)^{α3} ⋯` valid for `r ≥ r_base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeFamily<T> {
    pub exponents: Vec<T>,
    pub constant: T,
    pub r_base: T,
}

/// Iterated logarithm `L_j(r)` with its first two derivatives.
#[derive(Debug, Clone, Copy)]
struct IteratedLog<T> {
    value: T,
    d1: T,
    d2: T,
}

impl<T: Real> VolumeFamily<T> {
    pub fn new(constant: T, exponents: Vec<T>, r_base: T) -> Result<Self, ManifoldError> {
        let family = Self { exponents, constant, r_base };
        family.validate()?;
        Ok(family)
    }

    /// Pure power growth `C r^α`.
    pub fn power(constant: T, alpha: T) -> Result<Self, ManifoldError> {
        Self::new(constant, vec![alpha], T::one())
    }

    /// The borderline family `C r^{2/(p-1)} (ln r)^{1/(p-1)}`.
    pub fn borderline_log(constant: T, p: T) -> Result<Self, ManifoldError> {
        let q = p - T::one();
        if !(q > T::zero()) {
            return Err(ManifoldError::InvalidFamily(format!("exponent p = {p} must exceed 1")));
        }
        Self::new(constant, vec![T::lit(2.0) / q, T::one() / q], T::E())
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        let bad = |m: String| Err(ManifoldError::InvalidFamily(m));
        if self.exponents.is_empty() {
            return bad("no exponents".into());
        }
        if self.exponents.iter().any(|a| !a.is_finite()) {
            return bad("non-finite exponent".into());
        }
        if !(self.exponents[0] > T::zero()) {
            return bad(format!("leading exponent {} must be positive", self.exponents[0]));
        }
        if !(self.constant > T::zero() && self.constant.is_finite()) {
            return bad(format!("constant {} must be positive", self.constant));
        }
        if !(self.r_base > T::zero()) {
            return bad(format!("r_base {} must be positive", self.r_base));
        }
        if self.depth() > 1 {
            // every iterated logarithm must be at least 1 from r_base on
            let mut l = self.r_base;
            for j in 1..self.depth() {
                l = l.ln();
                if l < T::one() - T::lit(1e-12) {
                    return bad(format!("r_base {} too small: iterated log #{j} is {l} < 1", self.r_base));
                }
            }
        }
        Ok(())
    }

    /// Number of factors `k`.
    pub fn depth(&self) -> usize {
        self.exponents.len()
    }

    pub fn leading_exponent(&self) -> T {
        self.exponents[0]
    }

    fn iterated_logs(&self, r: T) -> Vec<IteratedLog<T>> {
        let mut out = Vec::with_capacity(self.depth().saturating_sub(1));
        let mut prev = IteratedLog { value: r, d1: T::one(), d2: T::zero() };
        for _ in 1..self.depth() {
            let l = prev.value.ln();
            let d1 = prev.d1 / prev.value;
            let d2 = (prev.d2 * prev.value - prev.d1 * prev.d1) / (prev.value * prev.value);
            prev = IteratedLog { value: l, d1, d2 };
            out.push(prev);
        }
        out
    }

    /// `ln V(r)`.
    pub fn log_volume(&self, r: T) -> T {
        let logs = self.iterated_logs(r);
        let mut acc = self.constant.ln() + self.exponents[0] * r.ln();
        for (a, l) in self.exponents[1..].iter().zip(&logs) {
            acc += *a * l.value.ln();
        }
        acc
    }

    /// `V(r)`.
    pub fn volume(&self, r: T) -> T {
        self.log_volume(r).exp()
    }

    /// `(d/dr ln V, d²/dr² ln V)`.
    pub fn log_derivatives(&self, r: T) -> (T, T) {
        let logs = self.iterated_logs(r);
        let a1 = self.exponents[0];
        let mut d = a1 / r;
        let mut dd = -a1 / (r * r);
        for (a, l) in self.exponents[1..].iter().zip(&logs) {
            d += *a * l.d1 / l.value;
            dd += *a * (l.d2 * l.value - l.d1 * l.d1) / (l.value * l.value);
        }
        (d, dd)
    }

    /// `(V, V', V'')`.
    pub fn derivatives(&self, r: T) -> (T, T, T) {
        let v = self.volume(r);
        let (d, dd) = self.log_derivatives(r);
        (v, v * d, v * (d * d + dd))
    }

    /// `ln V'(r)`, stable for very large radii.
    pub fn log_area(&self, r: T) -> T {
        let (d, _) = self.log_derivatives(r);
        self.log_volume(r) + d.ln()
    }
}

/// Radial profile of a model manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Warp<T> {
    /// `ψ(r) = r`.
    Euclidean,
    /// `ψ(r) = sinh r`, exponential volume growth.
    Hyperbolic,
    /// Euclidean cap spliced onto a prescribed power-log volume.
    PowerLog(VolumeFamily<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelManifold<T> {
    dim: usize,
    warp: Warp<T>,
    omega: T,
    r_splice: T,
    r_max: T,
}

/// Outcome of [`ModelManifold::check_condition_g`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionG<T> {
    pub holds: bool,
    /// `sup r·∂_r log g^{1/2}` over the sample, when bounded.
    pub c0: Option<T>,
    /// Largest sampled value of `r·∂_r log g^{1/2}`.
    pub sup_sampled: T,
    /// Radius where the product was largest, reported when it diverges.
    pub witness: Option<T>,
    pub r_lo: T,
    pub r_hi: T,
}

/// Area `ω_{m}` of the unit `m`-sphere.
pub fn unit_sphere_area<T: Real>(m: usize) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    let mut area = if m.is_multiple_of(2) { T::lit(2.0) } else { two_pi };
    let mut k = if m.is_multiple_of(2) { 0 } else { 1 };
    while k < m {
        k += 2;
        area = area * two_pi / T::from_usize_lossy(k - 1);
    }
    area
}

const DEFAULT_R_MAX_FACTOR: f64 = 4096.0;

impl<T: Real> ModelManifold<T> {
    pub fn euclidean(dim: usize) -> Result<Self, ManifoldError> {
        if dim == 0 {
            return Err(ManifoldError::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            warp: Warp::Euclidean,
            omega: unit_sphere_area(dim - 1),
            r_splice: T::one(),
            r_max: T::lit(DEFAULT_R_MAX_FACTOR),
        })
    }

    /// Constant curvature −1: `ψ(r) = sinh r`. There is no Euclidean cap (`r_splice = 0`).
    pub fn hyperbolic(dim: usize) -> Result<Self, ManifoldError> {
        if dim < 2 {
            return Err(ManifoldError::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            warp: Warp::Hyperbolic,
            omega: unit_sphere_area(dim - 1),
            r_splice: T::zero(),
            r_max: T::lit(64.0),
        })
    }

    /// Builds a manifold whose volume is Euclidean below `r_splice` and equals the
    /// family exactly from `2·r_splice` on.
    pub fn power_log(dim: usize, family: VolumeFamily<T>, r_splice: T) -> Result<Self, ManifoldError> {
        family.validate()?;
        if dim < 2 {
            return Err(ManifoldError::InvalidFamily("dimension 1 only admits the Euclidean profile".into()));
        }
        if !(r_splice > T::zero()) || r_splice < family.r_base {
            return Err(ManifoldError::InvalidFamily(format!(
                "r_splice {} must be positive and at least r_base {}",
                r_splice, family.r_base
            )));
        }
        let m = Self {
            dim,
            warp: Warp::PowerLog(family),
            omega: unit_sphere_area(dim - 1),
            r_splice,
            r_max: r_splice * T::lit(DEFAULT_R_MAX_FACTOR),
        };
        m.check_monotone()?;
        m.check_splice()?;
        Ok(m)
    }

    pub fn with_r_max(mut self, r_max: T) -> Self {
        assert!(r_max > self.r_splice, "R_max must exceed the splice radius");
        self.r_max = r_max;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn warp_kind(&self) -> &Warp<T> {
        &self.warp
    }

    pub fn family(&self) -> Option<&VolumeFamily<T>> {
        match &self.warp {
            Warp::PowerLog(f) => Some(f),
            _ => None,
        }
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn r_splice(&self) -> T {
        self.r_splice
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    /// True when `V(λr) = λ^n V(r)` exactly, so rescaled coefficients never change.
    pub fn is_scale_invariant(&self) -> bool {
        matches!(self.warp, Warp::Euclidean)
    }

    /// Radius from which the volume follows its asymptotic law exactly.
    pub fn asymptotic_radius(&self) -> T {
        match self.warp {
            Warp::PowerLog(_) => self.r_splice * T::lit(2.0),
            _ => T::zero(),
        }
    }

    fn n(&self) -> T {
        T::from_usize_lossy(self.dim)
    }

    fn euclid(&self, r: T) -> (T, T, T) {
        let n = self.n();
        let w = self.omega;
        match self.dim {
            1 => (w * r, w, T::zero()),
            2 => (w * r * r / n, w * r, w),
            _ => {
                let rn2 = r.powi(self.dim as i32 - 2);
                (w * rn2 * r * r / n, w * rn2 * r, w * (n - T::one()) * rn2)
            }
        }
    }

    /// Blend weight and its derivatives in `r`.
    fn blend(&self, r: T) -> (T, T, T) {
        let rs = self.r_splice;
        let (s, ds, dds) = smoothstep5((r - rs) / rs);
        (s, ds / rs, dds / (rs * rs))
    }

    /// `(V, V', V'')` without range checks.
    fn profile(&self, r: T) -> (T, T, T) {
        match &self.warp {
            Warp::Euclidean => self.euclid(r),
            Warp::Hyperbolic => {
                let m = self.dim - 1;
                let sh = r.sinh();
                let area = self.omega * sh.powi(m as i32);
                let d_area = self.omega * T::from_usize_lossy(m) * sh.powi(m as i32 - 1) * r.cosh();
                (self.hyperbolic_volume(r), area, d_area)
            }
            Warp::PowerLog(f) => {
                if r <= self.r_splice {
                    return self.euclid(r);
                }
                if r >= self.r_splice * T::lit(2.0) {
                    return f.derivatives(r);
                }
                self.blended(f, r)
            }
        }
    }

    /// The blend formula on `[r_s, 2 r_s]`, evaluated without range checks.
    fn blended(&self, f: &VolumeFamily<T>, r: T) -> (T, T, T) {
        let (ve, ve1, ve2) = self.euclid(r);
        let (vt, vt1, vt2) = f.derivatives(r);
        let (s, s1, s2) = self.blend(r);
        let one = T::one();
        let two = T::lit(2.0);
        let v = (one - s) * ve + s * vt;
        let v1 = (one - s) * ve1 + s * vt1 + s1 * (vt - ve);
        let v2 = (one - s) * ve2 + s * vt2 + two * s1 * (vt1 - ve1) + s2 * (vt - ve);
        (v, v1, v2)
    }

    fn hyperbolic_volume(&self, r: T) -> T {
        match self.dim {
            2 => self.omega * (r.cosh() - T::one()),
            3 => self.omega * ((T::lit(2.0) * r).sinh() / T::lit(4.0) - r / T::lit(2.0)),
            _ => {
                let m = self.dim as i32 - 1;
                let w = self.omega;
                integrate(|s: T| w * s.sinh().powi(m), T::zero(), r, T::zero(), T::lit(1e-13)).value
            }
        }
    }

    fn check_range(&self, r: T) -> Result<(), ManifoldError> {
        if r < T::zero() || r > self.r_max || r.is_nan() {
            return Err(ManifoldError::OutOfRange { r: r.as_f64(), r_max: self.r_max.as_f64() });
        }
        Ok(())
    }

    /// Geodesic ball volume `V(r)`.
    pub fn volume(&self, r: T) -> Result<T, ManifoldError> {
        self.check_range(r)?;
        Ok(self.volume_unchecked(r))
    }

    /// `V(r)` with the analytic profile continued past `R_max`.
    pub fn volume_unchecked(&self, r: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        self.profile(r).0
    }

    /// `ω_{n-1} ∫_a^b ψ^{n-1}` by adaptive quadrature, independent of the closed forms.
    pub fn volume_by_quadrature(&self, a: T, b: T) -> T {
        integrate(|s| self.area(s), a, b, T::zero(), T::lit(1e-13)).value
    }

    /// Sphere area `V'(r) = ω_{n-1} ψ(r)^{n-1}`, i.e. the volume density integrated over angles.
    pub fn area(&self, r: T) -> T {
        if self.dim == 1 {
            return self.omega;
        }
        if r <= T::zero() {
            return T::zero();
        }
        self.profile(r).1
    }

    /// `ln V'(r)`; finite for radii far beyond the range where `V'` itself overflows.
    pub fn log_area(&self, r: T) -> T {
        let n1 = T::from_usize_lossy(self.dim - 1);
        match &self.warp {
            Warp::Euclidean => self.omega.ln() + n1 * r.ln(),
            Warp::Hyperbolic => {
                let ln_sinh =
                    if r > T::lit(20.0) { r - T::LN_2() + (-(-T::lit(2.0) * r).exp()).ln_1p() } else { r.sinh().ln() };
                self.omega.ln() + n1 * ln_sinh
            }
            Warp::PowerLog(f) => {
                if r >= self.r_splice * T::lit(2.0) {
                    f.log_area(r)
                } else {
                    self.area(r).ln()
                }
            }
        }
    }

    /// Warp `ψ(r)`.
    pub fn warp(&self, r: T) -> T {
        match (&self.warp, self.dim) {
            (Warp::Euclidean, _) | (_, 1) => r,
            (Warp::Hyperbolic, _) => r.sinh(),
            _ if r <= self.r_splice => r,
            _ => (self.area(r) / self.omega).powf(T::one() / T::from_usize_lossy(self.dim - 1)),
        }
    }

    /// The full drift coefficient `(n-1)ψ'(r)/ψ(r) = ∂_r log V'(r)`.
    pub fn radial_drift(&self, r: T) -> Result<T, ManifoldError> {
        if !(r > T::zero()) {
            return Err(ManifoldError::OriginSingularity);
        }
        Ok(self.drift_unchecked(r))
    }

    pub(crate) fn drift_unchecked(&self, r: T) -> T {
        self.scaled_drift(r) / r
    }

    /// `r·(n-1)ψ'/ψ`; exactly `n - 1` on the Euclidean cap.
    pub fn scaled_drift(&self, r: T) -> T {
        let n1 = T::from_usize_lossy(self.dim - 1);
        match &self.warp {
            Warp::Euclidean => n1,
            Warp::Hyperbolic => n1 * r / r.tanh(),
            Warp::PowerLog(f) => {
                if r <= self.r_splice {
                    n1
                } else if r >= self.r_splice * T::lit(2.0) {
                    // ∂ ln V' = ∂ ln V + ∂ ln(∂ ln V)
                    let (d, dd) = f.log_derivatives(r);
                    r * (d + dd / d)
                } else {
                    let (_, a, da) = self.profile(r);
                    r * da / a
                }
            }
        }
    }

    /// Samples `r·∂_r log g^{1/2}` on `[r_lo, r_hi]` and reports its supremum.
    ///
    /// The product is declared divergent when the maxima over the last four of eight
    /// log-spaced bins keep increasing and the final one at least doubles the fourth.
    pub fn check_condition_g(&self, r_lo: T, r_hi: T) -> ConditionG<T> {
        assert!(r_lo > T::zero() && r_hi > r_lo, "need 0 < r_lo < r_hi");
        const BINS: usize = 8;
        const PER_BIN: usize = 32;
        let radii = logspace(r_lo, r_hi, BINS * PER_BIN);
        let values: Vec<T> = radii.iter().map(|&r| self.scaled_drift(r)).collect();
        let (mut sup, mut arg) = (T::neg_infinity(), r_lo);
        let mut bin_max = [T::neg_infinity(); BINS];
        for (k, (&r, &v)) in radii.iter().zip(&values).enumerate() {
            if v > sup {
                sup = v;
                arg = r;
            }
            let b = k / PER_BIN;
            bin_max[b] = bin_max[b].max(v);
        }
        let rising = bin_max[BINS - 4..].windows(2).all(|w| w[1] > w[0]);
        let diverging =
            !sup.is_finite() || (rising && bin_max[BINS - 1] >= T::lit(2.0) * bin_max[BINS - 4].max(T::lit(1e-300)));
        ConditionG {
            holds: !diverging,
            c0: if diverging { None } else { Some(sup) },
            sup_sampled: sup,
            witness: if diverging { Some(arg) } else { None },
            r_lo,
            r_hi,
        }
    }

    fn check_monotone(&self) -> Result<(), ManifoldError> {
        let rs = self.r_splice;
        let mut radii: Vec<T> = (0..=512).map(|k| rs * (T::one() + T::from_usize_lossy(k) / T::lit(512.0))).collect();
        radii.extend(logspace(rs * T::lit(2.0), self.r_max.max(rs * T::lit(4.0)), 1024));
        for r in radii {
            let a = self.area(r);
            if !(a > T::zero()) || !a.is_finite() {
                return Err(ManifoldError::NonmonotoneVolume { r: r.as_f64(), area: a.as_f64() });
            }
        }
        Ok(())
    }

    /// Compares one-sided derivatives of `ψ` at both splice knots.
    /// Compares `(V, V', V'')` of the adjacent pieces at both splice knots, so `ψ` and
    /// `ψ'` are continuous.
    fn check_splice(&self) -> Result<(), ManifoldError> {
        let Warp::PowerLog(f) = &self.warp else {
            return Ok(());
        };
        let inner = self.r_splice;
        let outer = inner * T::lit(2.0);
        for (knot, left, right) in
            [(inner, self.euclid(inner), self.blended(f, inner)), (outer, self.blended(f, outer), f.derivatives(outer))]
        {
            let mut mismatch = T::zero();
            for (a, b) in [(left.0, right.0), (left.1, right.1), (left.2, right.2)] {
                let scale = a.abs().max(b.abs()).max(T::min_positive_value());
                mismatch = mismatch.max((a - b).abs() / scale);
            }
            if mismatch > T::lit(1e-9) {
                return Err(ManifoldError::SpliceMismatch { r: knot.as_f64(), mismatch: mismatch.as_f64() });
            }
        }
        Ok(())
    }
}

/// A named manifold together with the volume family the criterion reads.
#[derive(Debug, Clone, Serialize)]
pub struct Builtin<T> {
    pub name: &'static str,
    pub manifold: ModelManifold<T>,
    pub family: VolumeFamily<T>,
}

impl<T: Real> Builtin<T> {
    /// `1 + 2/α1`.
    pub fn fujita_exponent(&self) -> T {
        T::one() + T::lit(2.0) / self.family.leading_exponent()
    }
}

/// The reference families: flat space in dimensions 1 to 3, pure power growth `r³` and
/// `r⁴`, and the borderline `π r² ln r` whose threshold is `p = 2`.
pub fn builtin_families<T: Real>() -> Vec<Builtin<T>> {
    let l = T::lit;
    let euclid = |n: usize, name: &'static str| {
        let omega: T = unit_sphere_area(n - 1);
        Builtin {
            name,
            manifold: ModelManifold::euclidean(n).expect("valid dimension"),
            family: VolumeFamily::power(omega / T::from_usize_lossy(n), T::from_usize_lossy(n)).expect("valid family"),
        }
    };
    let spliced = |name: &'static str, family: VolumeFamily<T>, rs: T| Builtin {
        name,
        manifold: ModelManifold::power_log(2, family.clone(), rs).expect("valid splice"),
        family,
    };
    let e = T::E();
    vec![
        euclid(1, "euclidean-1"),
        euclid(2, "euclidean-2"),
        euclid(3, "euclidean-3"),
        spliced("power-3", VolumeFamily::power(l(1.0), l(3.0)).expect("valid family"), l(4.0)),
        spliced("power-4", VolumeFamily::power(l(1.0), l(4.0)).expect("valid family"), l(2.0)),
        spliced("borderline-log", VolumeFamily::new(T::PI(), vec![l(2.0), l(1.0)], e).expect("valid family"), e),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(unit_sphere_area::<f64>(0), 2.0);
        assert!(rel(unit_sphere_area::<f64>(1), 2.0 * PI) < 1e-15);
        assert!(rel(unit_sphere_area::<f64>(2), 4.0 * PI) < 1e-15);
        assert!(rel(unit_sphere_area::<f64>(3), 2.0 * PI * PI) < 1e-15);
        assert!(rel(unit_sphere_area::<f64>(4), 8.0 * PI * PI / 3.0) < 1e-15);
    }

    #[test]
    fn euclidean_volumes() {
        let m2 = ModelManifold::<f64>::euclidean(2).unwrap();
        assert!(rel(m2.volume(1.0).unwrap(), PI) < 1e-15);
        let m3 = ModelManifold::<f64>::euclidean(3).unwrap();
        assert!(rel(m3.volume(2.0).unwrap(), 32.0 * PI / 3.0) < 1e-15);
        let m1 = ModelManifold::<f64>::euclidean(1).unwrap();
        assert_eq!(m1.volume(1.5).unwrap(), 3.0);
        assert_eq!(m1.volume(0.0).unwrap(), 0.0);
        assert!(matches!(m2.volume(1e9), Err(ManifoldError::OutOfRange { .. })));
    }

    #[test]
    fn euclidean_drift() {
        let m3 = ModelManifold::<f64>::euclidean(3).unwrap();
        assert_eq!(m3.radial_drift(0.5).unwrap(), 4.0);
        assert_eq!(m3.radial_drift(0.0), Err(ManifoldError::OriginSingularity));
        let m1 = ModelManifold::<f64>::euclidean(1).unwrap();
        for r in [0.1, 1.0, 100.0] {
            assert_eq!(m1.radial_drift(r).unwrap(), 0.0);
        }
    }

    #[test]
    fn euclidean_family_reproduces_flat_space() {
        let c = 4.0 * PI / 3.0;
        let fam = VolumeFamily::power(c, 3.0).unwrap();
        let m = ModelManifold::power_log(3, fam, 1.0).unwrap();
        for r in [0.3, 1.0, 1.4, 1.9, 2.0, 5.0, 100.0] {
            assert!(rel(m.warp(r), r) < 1e-12, "ψ({r}) = {}", m.warp(r));
            assert!(rel(m.volume(r).unwrap(), c * r * r * r) < 1e-12);
        }
    }

    #[test]
    fn quartic_growth_drift_and_volume() {
        // V = r⁴ in dimension 2: ψ = V'/ω₁ = 4r³/(2π), drift = V''/V' = 3/r.
        let fam = VolumeFamily::power(1.0, 4.0).unwrap();
        let m = ModelManifold::power_log(2, fam, 2.0).unwrap();
        for r in [4.0, 10.0, 1000.0] {
            assert!(rel(m.radial_drift(r).unwrap(), 3.0 / r) < 1e-12);
            assert!(rel(m.warp(r), 4.0 * r * r * r / (2.0 * PI)) < 1e-12);
        }
        assert!(rel(m.volume(8.0).unwrap(), 4096.0) < 0.01);
    }

    #[test]
    fn log_growth_drift_matches_symbolic_derivative() {
        // V = π r² ln r, n = 2: ∂ log V' = (2 ln r + 3) / (r (2 ln r + 1)).
        let fam = VolumeFamily::new(PI, vec![2.0, 1.0], std::f64::consts::E).unwrap();
        let m = ModelManifold::power_log(2, fam, std::f64::consts::E).unwrap();
        for r in [6.0, 30.0, 500.0] {
            let l = f64::ln(r);
            let exact = (2.0 * l + 3.0) / (r * (2.0 * l + 1.0));
            assert!(rel(m.radial_drift(r).unwrap(), exact) < 1e-12);
            assert!(m.radial_drift(r).unwrap() <= 2.0 / r);
        }
    }

    #[test]
    fn drift_equals_log_derivative_of_area() {
        let fam = VolumeFamily::new(30.0, vec![2.5, 0.7, -0.3], 20.0).unwrap();
        let m = ModelManifold::power_log(3, fam, 20.0).unwrap();
        for r in [21.0f64, 25.0, 33.0, 39.5, 45.0, 400.0] {
            let h = r * 1e-5;
            let fd = (m.area(r + h).ln() - m.area(r - h).ln()) / (2.0 * h);
            assert!(rel(m.radial_drift(r).unwrap(), fd) < 1e-7, "r = {r}");
            assert!(rel(m.log_area(r), m.area(r).ln()) < 1e-12);
        }
    }

    #[test]
    fn volume_differences_match_quadrature() {
        let fam = VolumeFamily::power(1.0, 4.0).unwrap();
        let spliced = ModelManifold::power_log(2, fam, 2.0).unwrap();
        let hyp = ModelManifold::<f64>::hyperbolic(4).unwrap();
        for m in [&spliced, &hyp] {
            for (a, b) in [(0.0, 1.0), (0.5, 2.5), (1.9, 4.1), (3.0, 17.0)] {
                let closed = m.volume(b).unwrap() - m.volume(a).unwrap();
                let quad = m.volume_by_quadrature(a, b);
                assert!(rel(closed, quad) < 1e-8, "[{a}, {b}]: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn nonmonotone_blend_is_rejected() {
        // target far below the Euclidean cap: the blend would need to shrink volume
        let fam = VolumeFamily::power(0.01, 1.5).unwrap();
        let err = ModelManifold::power_log(3, fam, 1.0).unwrap_err();
        assert!(matches!(err, ManifoldError::NonmonotoneVolume { .. }), "{err:?}");
    }

    #[test]
    fn invalid_families() {
        assert!(VolumeFamily::<f64>::power(1.0, 0.0).is_err());
        assert!(VolumeFamily::<f64>::power(-1.0, 2.0).is_err());
        assert!(VolumeFamily::<f64>::new(1.0, vec![2.0, 1.0], 2.0).is_err());
        assert!(VolumeFamily::<f64>::new(1.0, vec![2.0, 1.0, 1.0], 16.0).is_ok());
        let fam = VolumeFamily::power(1.0, 4.0).unwrap();
        assert!(ModelManifold::power_log(1, fam.clone(), 2.0).is_err());
        let fam2 = VolumeFamily::new(1.0, vec![2.0, 1.0], 3.0).unwrap();
        assert!(ModelManifold::power_log(2, fam2, 2.0).is_err());
    }

    #[test]
    fn condition_g_examples() {
        let m3 = ModelManifold::<f64>::euclidean(3).unwrap();
        let g = m3.check_condition_g(0.01, 1000.0);
        assert!(g.holds);
        assert_eq!(g.c0, Some(2.0));

        let e = std::f64::consts::E;
        let fam = VolumeFamily::new(PI, vec![2.0, 1.0], e).unwrap();
        let m = ModelManifold::power_log(2, fam, e).unwrap().with_r_max(2000.0);
        let g = m.check_condition_g(2.0 * e, 1000.0);
        assert!(g.holds);
        assert!(g.c0.unwrap() <= 2.0, "{g:?}");

        let h = ModelManifold::<f64>::hyperbolic(2).unwrap();
        let g = h.check_condition_g(0.5, 60.0);
        assert!(!g.holds);
        assert!(g.witness.unwrap() > 30.0);
    }

    #[test]
    fn nonincreasing_relative_density_bounds_c0() {
        // whenever ∂_r log(g^{1/2}/r^{n-1}) ≤ 0 on the sample, C0 cannot exceed n - 1
        let candidates = vec![
            ModelManifold::<f64>::euclidean(3).unwrap(),
            ModelManifold::power_log(3, VolumeFamily::power(4.0 * PI / 3.0, 3.0).unwrap(), 1.0).unwrap(),
            ModelManifold::power_log(3, VolumeFamily::power(10.0, 2.0).unwrap(), 1.0).unwrap(),
            ModelManifold::power_log(2, VolumeFamily::power(1.0, 4.0).unwrap(), 2.0).unwrap(),
        ];
        let mut checked = 0;
        for m in &candidates {
            let n1 = (m.dimension() - 1) as f64;
            let premise = logspace(0.1, 2000.0, 256).iter().all(|&r| m.scaled_drift(r) <= n1 + 1e-12);
            let g = m.check_condition_g(0.1, 2000.0);
            assert!(g.holds);
            if premise {
                checked += 1;
                assert!(g.c0.unwrap() <= n1 + 1e-12, "{g:?}");
            }
        }
        assert!(checked >= 2);
    }

    #[test]
    fn single_precision_profile() {
        let m = ModelManifold::<f32>::euclidean(2).unwrap();
        assert!((m.volume(1.0).unwrap() - std::f32::consts::PI).abs() < 1e-6);
        let fam = VolumeFamily::<f32>::power(1.0, 4.0).unwrap();
        let m = ModelManifold::power_log(2, fam, 2.0).unwrap();
        assert!((m.radial_drift(10.0).unwrap() - 0.3).abs() < 1e-5);
    }
}
