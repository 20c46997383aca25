//! Convergence of `∫^∞ t / V(t)^{p-1} dt`, symbolically for power-log families and
//! numerically for arbitrary volume profiles.

use std::cell::Cell;

use serde::Serialize;
use thiserror::Error;

use crate::manifold::{ModelManifold, VolumeFamily};
use crate::quadrature::integrate_dyadic;
use crate::scalar::{logspace, Real};

/// Smallest admissible `p - 1`.
pub const MIN_P_EXCESS: f64 = 1e-9;

/// Exponent comparisons closer than this (relative) count as equal.
const EXPONENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriterionError {
    #[error("exponent p = {0} must exceed 1 + 1e-9")]
    InvalidExponent(f64),
    #[error("volume vanishes or is not finite at t = {t}")]
    DomainError { t: f64 },
    #[error("R_max = {r_max} is below 2^6 · r0 = {needed}")]
    InsufficientRange { r_max: f64, needed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    Divergent,
    Convergent,
    Inconclusive,
}

/// Lexicographic comparison of `(α_i (p-1))_i` against the borderline `(2, 1, 1, …)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolicWitness<T> {
    pub scaled_exponents: Vec<T>,
    pub borderline: Vec<T>,
    /// First index where the sequences differ; `None` when the whole chain is borderline.
    pub deciding_index: Option<usize>,
    pub comparison: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericEvidence<T> {
    pub r0: T,
    /// Doubling radii `R_j = 2^j r0`.
    pub radii: Vec<T>,
    /// `I(R_j) = ∫_{r0}^{R_j} t / V(t)^{p-1} dt`.
    pub partial_integrals: Vec<T>,
    /// `σ` in the tail fit `t²/V^{p-1} ≈ c · t^σ · (ln t)^{-β}`.
    pub fitted_power: T,
    pub fitted_log_power: T,
    /// Tail interval used for the fit.
    pub fit_range: (T, T),
    pub rule: &'static str,
    /// Set when the decision rests on the doubly-borderline case `σ ≈ 0, β ≈ 1`.
    pub borderline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionVerdict<T> {
    pub kind: VerdictKind,
    pub p: T,
    pub evidence: Option<NumericEvidence<T>>,
    pub witness: Option<SymbolicWitness<T>>,
}

pub fn validate_p<T: Real>(p: T) -> Result<(), CriterionError> {
    if !(p.is_finite() && p > T::one() + T::lit(MIN_P_EXCESS)) {
        return Err(CriterionError::InvalidExponent(p.as_f64()));
    }
    Ok(())
}

/// `∫_{r0}^{R} t / V(t)^{p-1} dt`.
pub fn integral_tail<T: Real, V: Fn(T) -> T>(volume: V, p: T, r0: T, r: T) -> Result<T, CriterionError> {
    validate_p(p)?;
    assert!(r0 > T::zero() && r > r0, "need 0 < r0 < R");
    let q = p - T::one();
    let bad = Cell::new(None::<f64>);
    let integrand = |t: T| {
        let v = volume(t);
        if !(v > T::zero() && v.is_finite()) {
            bad.set(Some(t.as_f64()));
            return T::zero();
        }
        t / v.powf(q)
    };
    for t in [r0, r] {
        integrand(t);
    }
    let value = integrate_dyadic(integrand, r0, r, T::lit(1e-12)).value;
    match bad.get() {
        Some(t) => Err(CriterionError::DomainError { t }),
        None => Ok(value),
    }
}

/// Symbolic iterated-log integral test.
///
/// The integrand is `t^{1-α1(p-1)} (ln t)^{-α2(p-1)} ⋯`; it diverges exactly when
/// `(α1(p-1), α2(p-1), …)` is lexicographically at most `(2, 1, 1, …)`, a chain that
/// agrees with the borderline all the way down counting as divergent.
pub fn classify<T: Real>(family: &VolumeFamily<T>, p: T) -> Result<CriterionVerdict<T>, CriterionError> {
    validate_p(p)?;
    let q = p - T::one();
    let scaled: Vec<T> = family.exponents.iter().map(|&a| a * q).collect();
    let borderline: Vec<T> = (0..scaled.len()).map(|i| if i == 0 { T::lit(2.0) } else { T::one() }).collect();
    let mut deciding = None;
    let mut kind = VerdictKind::Divergent;
    let mut comparison = "=";
    for (i, (&e, &b)) in scaled.iter().zip(&borderline).enumerate() {
        let tol = T::lit(EXPONENT_TOL) * b.abs().max(T::one());
        if (e - b).abs() > tol {
            deciding = Some(i);
            if e < b {
                comparison = "<";
                kind = VerdictKind::Divergent;
            } else {
                comparison = ">";
                kind = VerdictKind::Convergent;
            }
            break;
        }
    }
    Ok(CriterionVerdict {
        kind,
        p,
        evidence: None,
        witness: Some(SymbolicWitness { scaled_exponents: scaled, borderline, deciding_index: deciding, comparison }),
    })
}

/// Critical exponent `1 + 2/α1` where `α1(p-1) = 2`.
pub fn fujita_exponent<T: Real>(family: &VolumeFamily<T>) -> T {
    T::one() + T::lit(2.0) / family.leading_exponent()
}

// Dead bands of the numeric rule.
const SIGMA_FLAT: f64 = 0.02;
const SIGMA_DECIDED: f64 = 0.08;
const BETA_BORDER: f64 = 0.1;
const BETA_DECIDED: f64 = 0.3;

/// Numeric classification from the manifold's volume profile on `[r0, R_max]`.
///
/// Partial integrals over doublings are recorded as evidence. Two fast rules come first:
/// ten-fold growth over the last three doublings means divergence, increments shrinking
/// four-fold per doubling means convergence. Otherwise the integrand's tail is fitted to
/// `t^σ (ln t)^{-β}` and the exponents are compared with the borderline `(0, 1)`.
pub fn classify_numeric<T: Real>(m: &ModelManifold<T>, p: T, r0: T) -> Result<CriterionVerdict<T>, CriterionError> {
    validate_p(p)?;
    assert!(r0 > T::zero(), "r0 must be positive");
    let r_max = m.r_max();
    let needed = r0 * T::lit(64.0);
    if r_max < needed {
        return Err(CriterionError::InsufficientRange { r_max: r_max.as_f64(), needed: needed.as_f64() });
    }
    let q = p - T::one();
    let two = T::lit(2.0);

    let mut radii = vec![r0];
    while radii.last().copied().unwrap() * two <= r_max {
        let next = radii.last().copied().unwrap() * two;
        radii.push(next);
    }
    let mut partial = vec![T::zero()];
    for w in radii.windows(2) {
        let inc = integral_tail(|t| m.volume_unchecked(t), p, w[0], w[1])?;
        partial.push(*partial.last().unwrap() + inc);
    }
    let j = partial.len() - 1;
    let inc: Vec<T> = partial.windows(2).map(|w| w[1] - w[0]).collect();

    // tail fit of ln(t²/V^{p-1}) against (ln t, ln ln t)
    let t_lo = (r0 * r_max).sqrt().max(m.asymptotic_radius() * two).max(T::lit(1.5).exp()).min(r_max / T::lit(4.0));
    let rows: Vec<(f64, f64, f64)> = logspace(t_lo, r_max, 64)
        .into_iter()
        .map(|t| {
            let y = two * t.ln() - q * m.volume_unchecked(t).ln();
            (t.ln().as_f64(), t.ln().ln().as_f64(), y.as_f64())
        })
        .collect();
    let (sigma, beta) = match fit_power_log(&rows) {
        Some((_, s, b)) => (s, b),
        None => (f64::NAN, f64::NAN),
    };

    let grew = j >= 3 && partial[j] > T::lit(10.0) * partial[j - 3];
    let shrank =
        inc.len() >= 4 && inc[inc.len() - 3..].iter().zip(&inc[inc.len() - 4..]).all(|(a, b)| *a * T::lit(4.0) <= *b);

    let mut borderline = false;
    let (kind, rule) = if grew {
        (VerdictKind::Divergent, "partial integrals grew tenfold over the last three doublings")
    } else if shrank {
        (VerdictKind::Convergent, "increments fell fourfold per doubling")
    } else if !sigma.is_finite() {
        (VerdictKind::Inconclusive, "tail fit failed")
    } else if sigma >= SIGMA_DECIDED {
        (VerdictKind::Divergent, "tail power above borderline")
    } else if sigma <= -SIGMA_DECIDED {
        (VerdictKind::Convergent, "tail power below borderline")
    } else if sigma.abs() > SIGMA_FLAT {
        (VerdictKind::Inconclusive, "tail power inside dead band")
    } else if beta < 1.0 - BETA_BORDER {
        (VerdictKind::Divergent, "flat tail with log power below 1")
    } else if beta <= 1.0 + BETA_BORDER {
        borderline = true;
        (VerdictKind::Divergent, "borderline chain t^-1 (ln t)^-1; deeper factors taken as borderline")
    } else if beta >= 1.0 + BETA_DECIDED {
        (VerdictKind::Convergent, "flat tail with log power above 1")
    } else {
        (VerdictKind::Inconclusive, "log power inside dead band")
    };

    Ok(CriterionVerdict {
        kind,
        p,
        evidence: Some(NumericEvidence {
            r0,
            radii,
            partial_integrals: partial,
            fitted_power: T::lit(sigma),
            fitted_log_power: T::lit(beta),
            fit_range: (t_lo, r_max),
            rule,
            borderline,
        }),
        witness: None,
    })
}

/// Least squares `y ≈ a + σ x1 − β x2`; returns `(a, σ, β)`.
fn fit_power_log(rows: &[(f64, f64, f64)]) -> Option<(f64, f64, f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for &(x1, x2, y) in rows {
        let r = [1.0, x1, x2];
        for i in 0..3 {
            aty[i] += r[i] * y;
            for k in 0..3 {
                ata[i][k] += r[i] * r[k];
            }
        }
    }
    let c = solve3(ata, aty)?;
    Some((c[0], c[1], -c[2]))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
