use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{domain, Error, Result};

/// Parabolic cylinder `{ |x - z'| <= r, t0 - r^sigma < t <= t0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Vec<f64>,
    pub t0: f64,
    pub radius: f64,
    pub sigma: f64,
}

pub fn cylinder(center: &[f64], t0: f64, r: f64, sigma: f64) -> Result<Cylinder> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("cylinder radius must be positive, got {r}"));
    }
    if !(sigma > 0.0 && sigma <= 2.0) {
        return domain(format!("cylinder order must lie in (0, 2], got {sigma}"));
    }
    if center.is_empty() || center.iter().any(|c| !c.is_finite()) || !t0.is_finite() {
        return domain("cylinder center must be a finite point");
    }
    Ok(Cylinder {
        center: center.to_vec(),
        t0,
        radius: r,
        sigma,
    })
}

impl Cylinder {
    pub fn depth(&self) -> f64 {
        self.radius.powf(self.sigma)
    }

    pub fn t_bottom(&self) -> f64 {
        self.t0 - self.depth()
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        let d2: f64 = x
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2.sqrt() <= self.radius && t > self.t_bottom() && t <= self.t0
    }

    /// Snap to the nearest lattice nodes and levels of `grid`.
    ///
    /// The center moves to the nearest node and level, the radius to the
    /// nearest whole number of cells and the depth to the nearest whole number
    /// of level steps. The snapped set is `[ic - k, ic + k]` in space and the
    /// `d` levels ending at the center level in time.
    pub fn snap(&self, grid: &Grid) -> Result<SnappedCylinder> {
        if self.center.len() != 1 {
            return Err(Error::Unsupported(
                "cylinder snapping is implemented for n = 1".into(),
            ));
        }
        let dx = grid.dx();
        let k = (self.radius / dx).round() as isize;
        let ic = grid.nearest_lattice(self.center[0]);
        if k < 2 {
            return Err(Error::Resolution(format!(
                "cylinder radius {} spans fewer than 4 nodes at dx = {dx}",
                self.radius
            )));
        }
        if ic - k < 0 || (ic + k) as usize > grid.n_points {
            return Err(Error::Resolution(format!(
                "cylinder |x - {}| <= {} leaves the grid [-{}, {}]",
                self.center[0], self.radius, grid.half_width, grid.half_width
            )));
        }
        let mc = grid.nearest_level(self.t0);
        if mc < 0 || mc as usize > grid.n_steps {
            return Err(Error::Resolution(format!(
                "cylinder top t = {} is outside the stored levels",
                self.t0
            )));
        }
        let d = if grid.n_steps == 0 {
            1
        } else {
            (self.depth() / grid.level_dt()).round() as isize
        };
        if grid.n_steps > 0 && d < 4 {
            return Err(Error::Resolution(format!(
                "cylinder depth {} spans fewer than 4 stored levels",
                self.depth()
            )));
        }
        if mc + 1 < d {
            return Err(Error::Resolution(format!(
                "cylinder bottom t = {} is before the first stored level",
                self.t_bottom()
            )));
        }
        Ok(SnappedCylinder {
            center_index: ic as usize,
            half_nodes: k as usize,
            top_level: mc as usize,
            n_levels: d as usize,
            radius: k as f64 * dx,
            depth: d as f64 * grid.level_dt(),
            center_x: grid.lattice_point(ic),
            t_top: grid.time(mc as usize),
        })
    }
}

/// A cylinder resolved onto grid nodes, recording what the snap did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnappedCylinder {
    pub center_index: usize,
    pub half_nodes: usize,
    pub top_level: usize,
    pub n_levels: usize,
    pub radius: f64,
    pub depth: f64,
    pub center_x: f64,
    pub t_top: f64,
}

impl SnappedCylinder {
    pub fn x_range(&self) -> std::ops::RangeInclusive<usize> {
        self.center_index - self.half_nodes..=self.center_index + self.half_nodes
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.top_level + 1 - self.n_levels..=self.top_level
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_cylinder_at_origin() {
        let q = cylinder(&[0.0], 0.0, 1.0, 1.5).unwrap();
        assert_eq!(q.depth(), 1.0);
        assert!(q.contains(&[1.0], 0.0));
        assert!(q.contains(&[-0.5], -0.999));
        assert!(!q.contains(&[0.0], -1.0));
        assert!(!q.contains(&[0.0], 0.01));
        assert!(!q.contains(&[1.01], -0.5));
    }

    #[test]
    fn second_order_depth() {
        let q = cylinder(&[0.0], 0.0, 2.0, 2.0).unwrap();
        assert_eq!(q.depth(), 4.0);
        assert!(q.contains(&[2.0], -3.99));
        assert!(!q.contains(&[0.0], -4.0));
    }

    #[test]
    fn translated_cylinder() {
        let q = cylinder(&[0.3], -0.1, 0.5, 1.0).unwrap();
        assert!((q.t_bottom() + 0.6).abs() < 1e-15);
        assert!(q.contains(&[0.8], -0.1));
        assert!(q.contains(&[-0.2], -0.59));
        assert!(!q.contains(&[0.3], -0.6));
        assert!(!q.contains(&[0.81], -0.3));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(cylinder(&[0.0], 0.0, 0.0, 1.0).is_err());
        assert!(cylinder(&[0.0], 0.0, -1.0, 1.0).is_err());
        assert!(cylinder(&[0.0], 0.0, 1.0, 0.0).is_err());
        assert!(cylinder(&[0.0], 0.0, 1.0, 2.1).is_err());
    }

    #[test]
    fn snapping_records_the_resolved_set() {
        let g = Grid::new(2.0, 64, -1.0, 0.0, 64).unwrap();
        let q = cylinder(&[0.26], -0.02, 0.5, 1.0).unwrap();
        let s = q.snap(&g).unwrap();
        assert_eq!(s.center_x, 0.25);
        assert_eq!(s.half_nodes, 8);
        assert_eq!(s.n_levels, 32);
        assert_eq!(s.t_top, -1.0 + 63.0 / 64.0);
        let tiny = cylinder(&[0.0], 0.0, 0.05, 1.0).unwrap();
        assert!(matches!(tiny.snap(&g), Err(Error::Resolution(_))));
        let overflow = cylinder(&[1.8], 0.0, 0.5, 1.0).unwrap();
        assert!(matches!(overflow.snap(&g), Err(Error::Resolution(_))));
        let too_deep = cylinder(&[0.0], -0.9, 0.5, 1.0).unwrap();
        assert!(matches!(too_deep.snap(&g), Err(Error::Resolution(_))));
    }

    proptest! {
        #[test]
        fn nested_radii_give_nested_cylinders(
            r1 in 0.01f64..2.0, dr in 0.0f64..2.0, sigma in 0.1f64..2.0,
            x in -5.0f64..5.0, t in -10.0f64..0.5, z in -1.0f64..1.0,
        ) {
            let small = cylinder(&[z], 0.0, r1, sigma).unwrap();
            let big = cylinder(&[z], 0.0, r1 + dr, sigma).unwrap();
            if small.contains(&[x], t) {
                prop_assert!(big.contains(&[x], t));
            }
        }
    }
}
