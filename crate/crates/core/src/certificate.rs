//! The space-time test function behind the nonexistence half of the dichotomy.
//!
//! On dyadic radii `r_k = 2^k r0` the function is `1` on `Q_0`, zero outside `Q_i`, and on
//! the shell `Q_k \ Q_{k-1}` (with `Q_k = B(r_k) × [0, r_k²)`) equals
//! `a s_k h(r/r_{k-1}) h(t/r_{k-1}²) + T_k`, where `s_k = (r_k − r_{k-1})²/V(r_k)^{p-1}`.
//! Pairing it against a solution gives `(∬ u^p φ^q)^{(p-1)/p} ≤ C a^{(q-1)/q}`, so a
//! divergent volume integral (`a → 0`) forces `u ≡ 0`.

use serde::Serialize;
use thiserror::Error;

use crate::criterion::{integral_tail, validate_p, CriterionError};
use crate::manifold::{ConditionG, ModelManifold};
use crate::picard::SpaceTimeField;
use crate::scalar::{logspace, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error(transparent)]
    Exponent(#[from] CriterionError),
    #[error("need at least 2 shells, got {0}")]
    TooFewShells(usize),
    #[error("base radius {0} must be positive and finite")]
    BadRadius(f64),
    #[error("outer radius {radius} exceeds the manifold range {r_max}")]
    RangeExceeded { radius: f64, r_max: f64 },
    #[error("condition (G) fails on [{r_lo}, {r_hi}]: r·∂_r log g^(1/2) grows near r = {witness}")]
    ConditionGViolation { r_lo: f64, r_hi: f64, witness: f64 },
    #[error("field does not fit the certificate: {0}")]
    DomainMismatch(String),
}

/// Polynomial `h(r) = Σ_j c_j (r − lo)^j` on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffPiece<T> {
    pub lo: T,
    /// `None` for the unbounded last piece.
    pub hi: Option<T>,
    pub coeffs: Vec<T>,
    /// The same polynomial expanded about `hi`, used on the upper half of the piece.
    pub coeffs_hi: Vec<T>,
}

impl<T: Real> CutoffPiece<T> {
    fn eval(&self, r: T) -> (T, T, T) {
        match self.hi {
            Some(hi) if !self.coeffs_hi.is_empty() && r - self.lo > hi - r => horner(&self.coeffs_hi, r - hi),
            _ => horner(&self.coeffs, r - self.lo),
        }
    }
}

/// Value, first and second derivative of `Σ_j c_j x^j`.
fn horner<T: Real>(coeffs: &[T], x: T) -> (T, T, T) {
    let (mut h, mut d1, mut d2) = (T::zero(), T::zero(), T::zero());
    for (j, &c) in coeffs.iter().enumerate().rev() {
        let jf = T::from_usize_lossy(j);
        h = h * x + c;
        if j >= 1 {
            d1 = d1 * x + c * jf;
        }
        if j >= 2 {
            d2 = d2 * x + c * jf * (jf - T::one());
        }
    }
    (h, d1, d2)
}

/// Radial cutoff `h`: `1` on `[0,1]`, `0` on `[2,∞)`, quintic smoothstep in between.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cutoff<T> {
    pub pieces: Vec<CutoffPiece<T>>,
    /// `max |h'|` on `(1,2)`.
    pub max_slope: T,
    /// `max |h''|` on `(1,2)`.
    pub max_curvature: T,
    /// `C1_h` with `-C1_h ≤ h' ≤ 0` and `|h''| ≤ C1_h`.
    pub c1_h: T,
}

impl<T: Real> Cutoff<T> {
    /// `(h, h', h'')` at `r ≥ 0`.
    pub fn eval(&self, r: T) -> (T, T, T) {
        let piece = self
            .pieces
            .iter()
            .find(|pc| pc.hi.is_none_or(|hi| r < hi))
            .unwrap_or_else(|| self.pieces.last().unwrap());
        piece.eval(r)
    }
}

pub fn build_cutoff<T: Real>() -> Cutoff<T> {
    let l = T::lit;
    let pieces = vec![
        CutoffPiece { lo: l(0.0), hi: Some(l(1.0)), coeffs: vec![l(1.0)], coeffs_hi: vec![] },
        // 1 − (10x³ − 15x⁴ + 6x⁵) with x = r − 1, equivalently −10z³ − 15z⁴ − 6z⁵ with z = r − 2
        CutoffPiece {
            lo: l(1.0),
            hi: Some(l(2.0)),
            coeffs: vec![l(1.0), l(0.0), l(0.0), l(-10.0), l(15.0), l(-6.0)],
            coeffs_hi: vec![l(0.0), l(0.0), l(0.0), l(-10.0), l(-15.0), l(-6.0)],
        },
        CutoffPiece { lo: l(2.0), hi: None, coeffs: vec![l(0.0)], coeffs_hi: vec![] },
    ];
    let mid = &pieces[1];
    // h'' vanishes at x = 1/2; h''' at x = (3 ± √3)/6
    let max_slope = mid.eval(l(1.5)).1.abs();
    let s3 = l(3.0).sqrt();
    let max_curvature = [l(1.0) + (l(3.0) - s3) / l(6.0), l(1.0) + (l(3.0) + s3) / l(6.0)]
        .iter()
        .map(|&r| mid.eval(r).2.abs())
        .fold(T::zero(), T::max);
    Cutoff { c1_h: max_slope.max(max_curvature), pieces, max_slope, max_curvature }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate<T> {
    pub r0: T,
    pub shells: usize,
    /// `r_0, …, r_i`.
    pub radii: Vec<T>,
    /// `s_k = (r_k − r_{k-1})²/V(r_k)^{p-1}` for `k = 1..i` (index `k − 1`).
    pub shell_terms: Vec<T>,
    pub a: T,
    /// `T_1, …, T_i` (index `k − 1`), with `T_i = 0`.
    pub offsets: Vec<T>,
    pub p: T,
    /// Conjugate exponent `p/(p−1)`.
    pub q: T,
    pub cutoff: Cutoff<T>,
    #[serde(skip)]
    manifold: ModelManifold<T>,
}

/// Values and derivatives of `φ` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiJet<T> {
    /// Shell index: `0` inside `Q_0`, `i + 1` outside `Q_i`.
    pub shell: usize,
    pub value: T,
    pub dr: T,
    pub drr: T,
    pub dt: T,
    pub laplacian: T,
}

pub fn build_certificate<T: Real>(
    m: &ModelManifold<T>,
    p: T,
    r0: T,
    shells: usize,
) -> Result<Certificate<T>, CertError> {
    validate_p(p)?;
    if shells < 2 {
        return Err(CertError::TooFewShells(shells));
    }
    if !(r0 > T::zero() && r0.is_finite()) {
        return Err(CertError::BadRadius(r0.as_f64()));
    }
    let two = T::lit(2.0);
    let radii: Vec<T> = (0..=shells).map(|k| r0 * two.powi(k as i32)).collect();
    let outer = radii[shells];
    if !(outer <= m.r_max()) {
        return Err(CertError::RangeExceeded { radius: outer.as_f64(), r_max: m.r_max().as_f64() });
    }
    let q1 = p - T::one();
    let shell_terms: Vec<T> =
        radii.windows(2).map(|w| (two * (w[1] - w[0]).ln() - q1 * m.volume_unchecked(w[1]).ln()).exp()).collect();
    let a = shell_terms.iter().copied().sum::<T>().recip();
    let mut offsets = vec![T::zero(); shells];
    let mut tail = T::zero();
    for k in (0..shells - 1).rev() {
        tail += shell_terms[k + 1];
        offsets[k] = a * tail;
    }
    Ok(Certificate {
        r0,
        shells,
        radii,
        shell_terms,
        a,
        offsets,
        p,
        q: p / q1,
        cutoff: build_cutoff(),
        manifold: m.clone(),
    })
}

impl<T: Real> Certificate<T> {
    pub fn manifold(&self) -> &ModelManifold<T> {
        &self.manifold
    }

    /// Smallest `k` with `(r, t) ∈ Q_k`, or `i + 1` outside `Q_i`.
    pub fn shell_of(&self, r: T, t: T) -> usize {
        self.radii.iter().position(|&rk| r < rk && t < rk * rk).unwrap_or(self.shells + 1)
    }

    /// The shell-`k` formula evaluated at `(r, t)` regardless of which shell contains it.
    pub fn shell_formula(&self, k: usize, r: T, t: T) -> PhiJet<T> {
        let zero = T::zero();
        let constant = |v: T| PhiJet { shell: k, value: v, dr: zero, drr: zero, dt: zero, laplacian: zero };
        if k == 0 {
            return constant(T::one());
        }
        if k > self.shells {
            return constant(zero);
        }
        let rp = self.radii[k - 1];
        let amp = self.a * self.shell_terms[k - 1];
        let (hr, dhr, ddhr) = self.cutoff.eval(r / rp);
        let (ht, dht, _) = self.cutoff.eval(t / (rp * rp));
        let dr = amp * dhr * ht / rp;
        let drr = amp * ddhr * ht / (rp * rp);
        let drift = if dr != zero { self.manifold.radial_drift(r).unwrap_or(zero) } else { zero };
        PhiJet {
            shell: k,
            value: amp * hr * ht + self.offsets[k - 1],
            dr,
            drr,
            dt: amp * hr * dht / (rp * rp),
            laplacian: drr + drift * dr,
        }
    }

    pub fn jet(&self, r: T, t: T) -> PhiJet<T> {
        self.shell_formula(self.shell_of(r, t), r, t)
    }

    pub fn phi(&self, r: T, t: T) -> T {
        self.jet(r, t).value
    }

    /// `φ` at the inner edge of shell 1, which telescopes to `a Σ s_k = 1`.
    pub fn inner_value(&self) -> T {
        self.shell_formula(1, self.r0, T::zero()).value
    }

    /// Largest relative jump between one-sided shell formulas across every interface
    /// `r = r_k` (for `t < r_k²`) and `t = r_k²` (for `r < r_k`).
    pub fn interface_jump(&self, samples: usize) -> T {
        let mut worst = T::zero();
        for k in 0..=self.shells {
            let rk = self.radii[k];
            let t_edge = rk * rk;
            for j in 0..samples {
                let f = T::from_usize_lossy(j) / T::from_usize_lossy(samples);
                for (r, t) in [(rk, f * t_edge), (f * rk, t_edge)] {
                    let inner = self.shell_formula(k, r, t).value;
                    let outer = self.shell_formula(k + 1, r, t).value;
                    let scale = inner.abs().max(outer.abs()).max(T::min_positive_value());
                    worst = worst.max((inner - outer).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Sampling density for [`verify_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSampling {
    pub radii: usize,
    pub times: usize,
}

impl Default for BoundSampling {
    fn default() -> Self {
        Self { radii: 64, times: 16 }
    }
}

/// Smallest constants making each shell bound hold on the sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellConstants<T> {
    pub k: usize,
    /// `max(-∂_r φ) · V(r_k)^{p-1} / (a (r_k − r_{k-1}))`.
    pub derivative: T,
    /// `max |∂_r² φ| · V(r_k)^{p-1} / a`.
    pub curvature: T,
    /// `max(-Δφ)⁺ · V(r_k)^{p-1} / a`.
    pub laplacian: T,
    /// `max(-∂_t φ)⁺ · V(r_k)^{p-1} / a`.
    pub time: T,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport<T> {
    pub shells: Vec<ShellConstants<T>>,
    pub derivative: T,
    pub curvature: T,
    pub laplacian: T,
    pub time: T,
    /// `∂_r φ ≤ 0` and `∂_t φ ≤ 0` at every sample, and `0 ≤ φ ≤ 1`.
    pub monotone: bool,
    pub condition_g: ConditionG<T>,
}

impl<T: Real> BoundsReport<T> {
    /// Constant `C` of the Hölder bound `(∬ u^p φ^q)^{1/q'} ≤ C a^{(q-1)/q}`:
    /// `q (C_Δ + C_t) 4^{1/q}`, the factor 4 from `r_k² = 4 (r_k − r_{k-1})²`.
    pub fn pairing_constant(&self, q: T) -> T {
        q * (self.laplacian + self.time) * T::lit(4.0).powf(q.recip())
    }
}

pub fn verify_bounds<T: Real>(cert: &Certificate<T>, sampling: BoundSampling) -> Result<BoundsReport<T>, CertError> {
    let m = cert.manifold();
    let outer = cert.radii[cert.shells];
    let g = m.check_condition_g(cert.r0, outer);
    if !g.holds {
        return Err(CertError::ConditionGViolation {
            r_lo: cert.r0.as_f64(),
            r_hi: outer.as_f64(),
            witness: g.witness.map_or(f64::NAN, |w| w.as_f64()),
        });
    }
    let almost = T::one() - T::lit(1e-12);
    let q1 = cert.p - T::one();
    let mut monotone = true;
    let mut shells = Vec::with_capacity(cert.shells);
    for k in 1..=cert.shells {
        let (rp, rk) = (cert.radii[k - 1], cert.radii[k]);
        let scale = (q1 * m.volume_unchecked(rk).ln()).exp() / cert.a;
        let radii = logspace(rp / T::lit(4.0), rk * almost, sampling.radii.max(2));
        let times = logspace(rp * rp / T::lit(16.0), rk * rk * almost, sampling.times.max(2));
        let mut c = ShellConstants {
            k,
            derivative: T::zero(),
            curvature: T::zero(),
            laplacian: T::zero(),
            time: T::zero(),
            samples: 0,
        };
        for &r in &radii {
            for &t in &times {
                if cert.shell_of(r, t) != k {
                    continue;
                }
                let jet = cert.shell_formula(k, r, t);
                c.samples += 1;
                monotone &=
                    jet.dr <= T::zero() && jet.dt <= T::zero() && jet.value >= T::zero() && jet.value <= T::one();
                c.derivative = c.derivative.max(-jet.dr * scale / (rk - rp));
                c.curvature = c.curvature.max(jet.drr.abs() * scale);
                c.laplacian = c.laplacian.max(-jet.laplacian * scale);
                c.time = c.time.max(-jet.dt * scale);
            }
        }
        shells.push(c);
    }
    let max_of = |f: fn(&ShellConstants<T>) -> T| shells.iter().map(f).fold(T::zero(), T::max);
    Ok(BoundsReport {
        derivative: max_of(|c| c.derivative),
        curvature: max_of(|c| c.curvature),
        laplacian: max_of(|c| c.laplacian),
        time: max_of(|c| c.time),
        shells,
        monotone,
        condition_g: g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow<T> {
    pub shells: usize,
    pub a: T,
    /// `∫_{2 r0}^{r_i} r / V(r)^{p-1} dr`.
    pub integral: T,
    /// `a · integral`, bounded above and below across `i`.
    pub product: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTable<T> {
    pub p: T,
    pub r0: T,
    pub rows: Vec<DecayRow<T>>,
    /// First `i` with `a(i) ≤ 1/r0`.
    pub first_small: Option<usize>,
    /// Largest `i` whose outer radius fits in the manifold range.
    pub max_shells: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecayError<T: std::fmt::Debug> {
    #[error(transparent)]
    Invalid(#[from] CertError),
    #[error("range exhausted at {max_shells} shells before a(i) ≤ 1/r0")]
    RangeExceeded { max_shells: usize, partial: DecayTable<T> },
}

/// Tabulates `a(i)` against the partial volume integral and finds the first `i` with
/// `a(i) ≤ 1/r0`.
pub fn a_decay<T: Real>(m: &ModelManifold<T>, p: T, r0: T, shells: &[usize]) -> Result<DecayTable<T>, DecayError<T>> {
    validate_p(p).map_err(CertError::from)?;
    if !(r0 > T::zero() && r0.is_finite()) {
        return Err(CertError::BadRadius(r0.as_f64()).into());
    }
    let two = T::lit(2.0);
    let q1 = p - T::one();
    let max_shells = (1..=1000usize).take_while(|&k| r0 * two.powi(k as i32) <= m.r_max()).last().unwrap_or(0);
    // cumulative a^{-1}
    let mut inv = Vec::with_capacity(max_shells + 1);
    inv.push(T::zero());
    for k in 1..=max_shells {
        let (rp, rk) = (r0 * two.powi(k as i32 - 1), r0 * two.powi(k as i32));
        let term = (two * (rk - rp).ln() - q1 * m.volume_unchecked(rk).ln()).exp();
        inv.push(inv[k - 1] + term);
    }
    let first_small = (2..=max_shells).find(|&i| inv[i].recip() <= r0.recip());
    let mut rows = Vec::new();
    for &i in shells {
        if i < 2 || i > max_shells {
            continue;
        }
        let a = inv[i].recip();
        let ri = r0 * two.powi(i as i32);
        let integral = integral_tail(|r| m.volume_unchecked(r), p, two * r0, ri).map_err(CertError::from)?;
        rows.push(DecayRow { shells: i, a, integral, product: a * integral });
    }
    let table = DecayTable { p, r0, rows, first_small, max_shells };
    if first_small.is_none() {
        return Err(DecayError::RangeExceeded { max_shells, partial: table });
    }
    Ok(table)
}

/// Both sides of the Hölder bound for one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pairing<T> {
    /// `(∬ u^p φ^q dμ dt)^{(p-1)/p}`.
    pub lhs: T,
    /// `C a^{(q-1)/q}`.
    pub rhs: T,
    pub constant: T,
    pub holds: bool,
    pub warnings: Vec<String>,
}

pub fn pairing<T: Real>(
    cert: &Certificate<T>,
    bounds: &BoundsReport<T>,
    u: &SpaceTimeField<T>,
) -> Result<Pairing<T>, CertError> {
    let grid = &u.grid;
    if u.times.is_empty() || u.values.len() != u.times.len() {
        return Err(CertError::DomainMismatch("times and values disagree".into()));
    }
    if u.values.iter().any(|row| row.len() != grid.len()) {
        return Err(CertError::DomainMismatch("value rows do not match the grid".into()));
    }
    if u.values.iter().flatten().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
        return Err(CertError::DomainMismatch("field must be finite and nonnegative".into()));
    }
    if u.times.windows(2).any(|w| w[1] <= w[0]) || u.times[0] < T::zero() {
        return Err(CertError::DomainMismatch("times must increase from t ≥ 0".into()));
    }
    let outer = cert.radii[cert.shells];
    let t_end = outer * outer;
    let mut warnings = Vec::new();
    if grid.outer() < outer {
        warnings.push(format!("field radius {} is below r_i = {}; spatial integral clipped", grid.outer(), outer));
    }
    if *u.times.last().unwrap() < t_end {
        warnings.push(format!(
            "field ends at t = {} before r_i² = {}; time integral clipped",
            u.times.last().unwrap(),
            t_end
        ));
    }
    let p = cert.p;
    let q = cert.q;
    let slice: Vec<T> = u
        .times
        .iter()
        .zip(&u.values)
        .map(|(&t, row)| {
            grid.nodes
                .iter()
                .zip(&grid.weights)
                .zip(row)
                .map(|((&r, &w), &v)| {
                    let phi = cert.phi(r, t);
                    if phi > T::zero() && v > T::zero() {
                        w * v.powf(p) * phi.powf(q)
                    } else {
                        T::zero()
                    }
                })
                .sum()
        })
        .collect();
    let half = T::lit(0.5);
    let integral: T = u
        .times
        .windows(2)
        .zip(slice.windows(2))
        .filter(|(t, _)| t[0] < t_end)
        .map(|(t, f)| (t[1] - t[0]) * half * (f[0] + f[1]))
        .sum();
    let lhs = integral.powf((p - T::one()) / p);
    let constant = bounds.pairing_constant(q);
    let rhs = constant * cert.a.powf((q - T::one()) / q);
    Ok(Pairing { lhs, rhs, constant, holds: lhs <= rhs, warnings })
}
