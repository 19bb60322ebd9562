use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform space-time lattice.
///
/// Space: `n_points + 1` nodes `x_i = -L + i dx`, `dx = 2L / n_points`, so the
/// origin is node `n_points / 2`. Time: `n_steps + 1` stored levels equally
/// spaced on `[t0, t_end]`. The integration step is chosen separately by the
/// CFL rule and always divides the level spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub n_points: usize,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl Grid {
    pub fn new(half_width: f64, n_points: usize, t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        let g = Self {
            half_width,
            n_points,
            t0,
            t_end,
            n_steps,
        };
        g.validate()?;
        Ok(g)
    }

    /// Purely spatial grid with a single stored level at `t`.
    pub fn spatial(half_width: f64, n_points: usize, t: f64) -> Result<Self> {
        Self::new(half_width, n_points, t, t, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 8 || self.n_points % 2 != 0 {
            return domain(format!(
                "n_points must be even and at least 8, got {}",
                self.n_points
            ));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return domain(format!("half width must be positive, got {}", self.half_width));
        }
        if !(self.t_end >= self.t0) || !self.t0.is_finite() || !self.t_end.is_finite() {
            return domain(format!("invalid time interval [{}, {}]", self.t0, self.t_end));
        }
        if self.n_steps == 0 && self.t_end > self.t0 {
            return domain("a nondegenerate time interval needs at least one level step");
        }
        Ok(())
    }

    /// Check that the unit ball sits strictly inside the grid.
    pub fn require_contains_unit_ball(&self) -> Result<()> {
        if self.half_width <= 1.0 {
            return domain(format!(
                "grid half width must exceed 1 for problems posed in B_1, got {}",
                self.half_width
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_points + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.lattice_point(i as isize)
    }

    /// Position of lattice index `k`, which may lie outside `0..=n_points`.
    #[inline]
    pub fn lattice_point(&self, k: isize) -> f64 {
        let c = (self.n_points / 2) as isize;
        (k - c) as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn center_index(&self) -> usize {
        self.n_points / 2
    }

    /// Nearest lattice index (unclamped).
    pub fn nearest_lattice(&self, x: f64) -> isize {
        (x / self.dx()).round() as isize + (self.n_points / 2) as isize
    }

    /// Index of the node at `x`, if `x` is a node up to a relative tolerance.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = self.nearest_lattice(x);
        if k < 0 || k as usize > self.n_points {
            return None;
        }
        let err = (self.lattice_point(k) - x).abs();
        (err <= 1e-9 * self.dx()).then_some(k as usize)
    }

    pub fn n_levels(&self) -> usize {
        self.n_steps + 1
    }

    pub fn level_dt(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            (self.t_end - self.t0) / self.n_steps as f64
        }
    }

    pub fn time(&self, m: usize) -> f64 {
        if m == self.n_steps {
            self.t_end
        } else {
            self.t0 + m as f64 * self.level_dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_levels()).map(|m| self.time(m)).collect()
    }

    pub fn nearest_level(&self, t: f64) -> isize {
        if self.n_steps == 0 {
            return 0;
        }
        ((t - self.t0) / self.level_dt()).round() as isize
    }

    pub fn level_of(&self, t: f64) -> Option<usize> {
        let m = self.nearest_level(t);
        if m < 0 || m as usize > self.n_steps {
            return None;
        }
        let tol = 1e-9 * self.level_dt().max(1e-300);
        ((self.time(m as usize) - t).abs() <= tol).then_some(m as usize)
    }

    /// Same lattice shape with space scaled by `1/rho` and time by `1/rho^sigma`.
    pub fn rescaled(&self, rho: f64, sigma: f64) -> Self {
        let ts = rho.powf(sigma);
        Self {
            half_width: self.half_width / rho,
            n_points: self.n_points,
            t0: self.t0 / ts,
            t_end: self.t_end / ts,
            n_steps: self.n_steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_a_node() {
        let g = Grid::new(2.0, 16, -1.0, 0.0, 4).unwrap();
        assert_eq!(g.node(8), 0.0);
        assert_eq!(g.node(0), -2.0);
        assert_eq!(g.node(16), 2.0);
        assert_eq!(g.index_of(0.25), Some(9));
        assert_eq!(g.index_of(0.3), None);
        assert_eq!(g.time(4), 0.0);
        assert_eq!(g.level_of(-0.5), Some(2));
    }

    #[test]
    fn rejects_small_or_odd_grids() {
        assert!(Grid::new(2.0, 6, 0.0, 1.0, 1).is_err());
        assert!(Grid::new(2.0, 9, 0.0, 1.0, 1).is_err());
        assert!(Grid::new(0.0, 8, 0.0, 1.0, 1).is_err());
        assert!(Grid::new(2.0, 8, 1.0, 0.0, 1).is_err());
        let g = Grid::new(1.0, 8, 0.0, 1.0, 1).unwrap();
        assert!(g.require_contains_unit_ball().is_err());
    }
}
