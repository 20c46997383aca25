//! Tridiagonal systems, factored once and solved many times.

use crate::scalar::Real;

/// `lower[i]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1] = rhs[i]`.
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

/// Thomas factorization of a [`Tridiagonal`] matrix.
#[derive(Debug, Clone)]
pub struct Factored<T> {
    lower: Vec<T>,
    // reciprocal pivots
    inv_pivot: Vec<T>,
    // upper[i] / pivot[i]
    gamma: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![T::zero(); n], diag: vec![T::zero(); n], upper: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Factors without pivoting. Returns `None` on a zero or non-finite pivot.
    pub fn factor(&self) -> Option<Factored<T>> {
        let n = self.len();
        let mut inv_pivot = vec![T::zero(); n];
        let mut gamma = vec![T::zero(); n];
        let mut prev_gamma = T::zero();
        for i in 0..n {
            let l = if i == 0 { T::zero() } else { self.lower[i] };
            let pivot = self.diag[i] - l * prev_gamma;
            if pivot == T::zero() || !pivot.is_finite() {
                return None;
            }
            let inv = pivot.recip();
            inv_pivot[i] = inv;
            prev_gamma = if i + 1 < n { self.upper[i] * inv } else { T::zero() };
            gamma[i] = prev_gamma;
        }
        Some(Factored { lower: self.lower.clone(), inv_pivot, gamma })
    }

    /// `y = A·x`.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            y[i] = v;
        }
    }
}

impl<T: Real> Factored<T> {
    /// Solves in place: `x` holds the right-hand side on entry.
    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = x.len();
        if n == 0 {
            return;
        }
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= self.gamma[i] * next;
        }
    }
}
