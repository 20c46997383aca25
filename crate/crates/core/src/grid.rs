//! Cell-centered radial grids: uniform on `[0, 1]`, geometrically graded beyond.
//!
//! Cells are uniform in a stretched coordinate `ξ` with `r(ξ) = ξ` for `ξ ≤ 1` and
//! `r(ξ) = 1 + (e^{κ(ξ-1)} - 1)/κ` past it, so neighbouring cells grow by `ρ = e^{κh}`.

use serde::Serialize;
use thiserror::Error;

use crate::manifold::ModelManifold;
use crate::quadrature::gauss_legendre3;
use crate::scalar::Real;

/// Largest admissible ratio between neighbouring cell widths.
pub const MAX_GRADING_RATIO: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs at least 4 cells, got {0}")]
    TooFewCells(usize),
    #[error("outer radius {0} must be positive and finite")]
    BadRadius(f64),
    #[error("grading ratio {ratio} exceeds {max}; use more cells or less stretching")]
    TooStretched { ratio: f64, max: f64 },
    #[error("grading rate {0} must be finite and nonnegative")]
    BadGrading(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialGrid<T> {
    /// Cell centers `r_1 < … < r_N`.
    pub nodes: Vec<T>,
    /// Cell faces, `faces[0] = 0` and `faces[N] = R`.
    pub faces: Vec<T>,
    /// Cell volumes `V(faces[i+1]) - V(faces[i])`.
    pub weights: Vec<T>,
    /// Sphere areas at the faces.
    pub face_areas: Vec<T>,
    kappa: T,
    step: T,
}

fn map_xi<T: Real>(xi: T, kappa: T) -> T {
    if xi <= T::one() || kappa == T::zero() {
        xi
    } else {
        T::one() + (kappa * (xi - T::one())).exp_m1() / kappa
    }
}

impl<T: Real> RadialGrid<T> {
    /// `cells` cells on `[0, r_outer]` with stretching rate `kappa` (`0` is uniform).
    pub fn new(m: &ModelManifold<T>, r_outer: T, cells: usize, kappa: T) -> Result<Self, GridError> {
        let mut g = Self::layout(r_outer, cells, kappa)?;
        let vols: Vec<T> = g.faces.iter().map(|&r| m.volume_unchecked(r)).collect();
        g.weights = vols.windows(2).map(|w| w[1] - w[0]).collect();
        g.face_areas = g.faces.iter().map(|&r| if r > T::zero() { m.area(r) } else { T::zero() }).collect();
        Ok(g)
    }

    /// Grid for an arbitrary sphere-area profile; cell volumes by 3-point Gauss–Legendre.
    pub fn from_area(r_outer: T, cells: usize, kappa: T, area: impl Fn(T) -> T) -> Result<Self, GridError> {
        let mut g = Self::layout(r_outer, cells, kappa)?;
        g.set_area(area);
        Ok(g)
    }

    /// Recomputes weights and face areas for a new area profile on the same cells.
    pub fn set_area(&mut self, area: impl Fn(T) -> T) {
        let faces = &self.faces;
        self.weights = faces.windows(2).map(|w| gauss_legendre3(&area, w[0], w[1])).collect();
        self.face_areas = faces.iter().map(|&r| if r > T::zero() { area(r) } else { T::zero() }).collect();
    }

    fn layout(r_outer: T, cells: usize, kappa: T) -> Result<Self, GridError> {
        if cells < 4 {
            return Err(GridError::TooFewCells(cells));
        }
        if !(r_outer > T::zero() && r_outer.is_finite()) {
            return Err(GridError::BadRadius(r_outer.as_f64()));
        }
        if !(kappa >= T::zero() && kappa.is_finite()) {
            return Err(GridError::BadGrading(kappa.as_f64()));
        }
        let n = T::from_usize_lossy(cells);
        let (kappa, step) = if kappa == T::zero() || r_outer <= T::one() {
            (T::zero(), r_outer / n)
        } else {
            let extent = T::one() + (kappa * (r_outer - T::one())).ln_1p() / kappa;
            (kappa, extent / n)
        };
        let ratio = (kappa * step).exp();
        if ratio.as_f64() > MAX_GRADING_RATIO {
            return Err(GridError::TooStretched { ratio: ratio.as_f64(), max: MAX_GRADING_RATIO });
        }
        let half = T::lit(0.5);
        let mut faces: Vec<T> = (0..=cells).map(|k| map_xi(step * T::from_usize_lossy(k), kappa)).collect();
        faces[cells] = r_outer;
        let nodes: Vec<T> = (0..cells).map(|k| map_xi(step * (T::from_usize_lossy(k) + half), kappa)).collect();
        Ok(Self { nodes, faces, weights: Vec::new(), face_areas: Vec::new(), kappa, step })
    }

    /// Same outer radius and stretching with twice the cells.
    pub fn refined(&self, m: &ModelManifold<T>) -> Result<Self, GridError> {
        Self::new(m, self.outer(), 2 * self.len(), self.kappa)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn outer(&self) -> T {
        *self.faces.last().unwrap()
    }

    pub fn grading_rate(&self) -> T {
        self.kappa
    }

    /// Neighbouring-cell width ratio in the graded zone.
    pub fn grading_ratio(&self) -> T {
        (self.kappa * self.step).exp()
    }

    /// Width of the innermost cell.
    pub fn min_width(&self) -> T {
        self.faces[1] - self.faces[0]
    }

    /// `Σ w_i u_i`.
    pub fn integrate(&self, values: &[T]) -> T {
        self.weights.iter().zip(values).map(|(&w, &u)| w * u).sum()
    }

    /// Index of the cell containing `r` (clamped to the grid).
    pub fn locate(&self, r: T) -> usize {
        self.faces[1..].partition_point(|&f| f <= r).min(self.len() - 1)
    }

    /// Piecewise-linear interpolation between cell centers; constant inside the first
    /// half-cell and zero beyond the outer face.
    pub fn interpolate(&self, values: &[T], r: T) -> T {
        if r >= self.outer() {
            return T::zero();
        }
        if r <= self.nodes[0] {
            return values[0];
        }
        let j = self.nodes.partition_point(|&x| x <= r);
        if j >= self.len() {
            // between the last node and the absorbing face
            let last = self.len() - 1;
            let s = (self.outer() - r) / (self.outer() - self.nodes[last]);
            return values[last] * s;
        }
        let (a, b) = (self.nodes[j - 1], self.nodes[j]);
        let s = (r - a) / (b - a);
        values[j - 1] + (values[j] - values[j - 1]) * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid() {
        let m = ModelManifold::<f64>::euclidean(3).unwrap();
        let g = RadialGrid::new(&m, 8.0, 64, 0.0).unwrap();
        assert_eq!(g.len(), 64);
        assert!((g.nodes[0] - 0.0625).abs() < 1e-15);
        assert!((g.min_width() - 0.125).abs() < 1e-15);
        let total = g.weights.iter().sum::<f64>();
        assert!((total / m.volume(8.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn graded_grid_geometry() {
        let m = ModelManifold::<f64>::euclidean(2).unwrap();
        let g = RadialGrid::new(&m, 1000.0, 2048, 2.0).unwrap();
        assert!(g.grading_ratio() > 1.0 && g.grading_ratio() <= 1.05);
        assert!((g.outer() - 1000.0).abs() < 1e-9);
        for w in g.nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
        // uniform inside r ≤ 1
        let h = g.min_width();
        let k = (1.0 / h).floor() as usize;
        for i in 1..k {
            assert!((g.faces[i + 1] - g.faces[i] - h).abs() < 1e-12);
        }
        let r = g.refined(&m).unwrap();
        assert_eq!(r.len(), 4096);
        assert!((r.grading_ratio() - g.grading_ratio().sqrt()).abs() < 1e-12);
        assert!(matches!(RadialGrid::new(&m, 1e6, 64, 5.0), Err(GridError::TooStretched { .. })));
    }

    #[test]
    fn area_profile_grid_matches_volume_grid() {
        let m = ModelManifold::<f64>::euclidean(3).unwrap();
        let a = RadialGrid::new(&m, 10.0, 100, 0.0).unwrap();
        let b = RadialGrid::from_area(10.0, 100, 0.0, |r| m.area(r)).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12 * x.max(1.0));
        }
        assert_eq!(a.face_areas, b.face_areas);
    }

    #[test]
    fn interpolation_and_location() {
        let m = ModelManifold::<f64>::euclidean(1).unwrap();
        let g = RadialGrid::new(&m, 4.0, 8, 0.0).unwrap();
        let vals: Vec<f64> = g.nodes.iter().map(|r| 2.0 * r + 1.0).collect();
        assert!((g.interpolate(&vals, 1.3) - 3.6).abs() < 1e-12);
        assert_eq!(g.interpolate(&vals, 5.0), 0.0);
        assert_eq!(g.locate(1.3), 2);
        assert_eq!(g.locate(100.0), 7);
    }
}
