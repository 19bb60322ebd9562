use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{domain, Error, Result};

pub type DataFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Declared size control of exterior data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum BoundClass {
    /// `|u(x, t)| <= bound`.
    Bounded { bound: f64 },
    /// `|u(x, t)| <= c (1 + |x|)^beta`.
    Growth { c: f64, beta: f64 },
}

impl BoundClass {
    pub fn at(&self, x: f64) -> f64 {
        match *self {
            BoundClass::Bounded { bound } => bound,
            BoundClass::Growth { c, beta } => c * (1.0 + x.abs()).powf(beta),
        }
    }

    pub fn growth_exponent(&self) -> f64 {
        match *self {
            BoundClass::Bounded { .. } => 0.0,
            BoundClass::Growth { beta, .. } => beta,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, BoundClass::Bounded { .. })
    }

    /// Bound on `2 * int_R^inf |u(y)| * (2 - s) y^(-1-s) dy`, used to size
    /// far-field quadratures against order-`s` power weights.
    /// The constant in front of the bound: `B` or `C`.
    pub fn magnitude(&self) -> f64 {
        match *self {
            BoundClass::Bounded { bound } => bound,
            BoundClass::Growth { c, .. } => c,
        }
    }

    pub fn power_tail(&self, r: f64, s: f64) -> Result<f64> {
        let norm = 2.0 - s;
        match *self {
            BoundClass::Bounded { bound } => Ok(2.0 * bound * norm * r.powf(-s) / s),
            BoundClass::Growth { c, beta } => {
                if beta >= s {
                    return Err(Error::Divergence(format!(
                        "growth exponent {beta} is not below the weight order {s}"
                    )));
                }
                // (1 + y)^beta <= (2y)^beta for y >= 1
                let rr = r.max(1.0);
                Ok(2.0 * c * 2f64.powf(beta) * norm * rr.powf(beta - s) / (s - beta))
            }
        }
    }

    /// Smallest radius `R >= r0` with `power_tail(R, s) <= tol`.
    pub fn tail_radius(&self, r0: f64, s: f64, tol: f64) -> Result<f64> {
        let at_r0 = self.power_tail(r0, s)?;
        if at_r0 <= tol {
            return Ok(r0);
        }
        let decay = s - self.growth_exponent();
        // power_tail scales like R^(-decay) beyond max(r0, 1)
        let base = r0.max(1.0);
        let at_base = self.power_tail(base, s)?;
        let r = base * (at_base / tol).powf(1.0 / decay);
        Ok(r.max(r0) * (1.0 + 1e-12))
    }
}

/// Data prescribed for `|x|` beyond a grid: a callable plus its declared bound.
#[derive(Clone)]
pub struct Exterior {
    f: DataFn,
    bound: BoundClass,
    time_independent: bool,
    label: String,
}

impl fmt::Debug for Exterior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Exterior")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .field("time_independent", &self.time_independent)
            .finish()
    }
}

impl Exterior {
    pub fn new(f: DataFn, bound: BoundClass) -> Self {
        Self {
            f,
            bound,
            time_independent: false,
            label: "callable".into(),
        }
    }

    /// Callable that ignores time; operators cache its far-field samples.
    pub fn stationary<F>(f: F, bound: BoundClass) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(move |x, _t| f(x)),
            bound,
            time_independent: true,
            label: "stationary".into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::stationary(move |_| c, BoundClass::Bounded { bound: c.abs() }).labelled("constant")
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `a x + b`.
    pub fn affine(a: f64, b: f64) -> Self {
        Self::stationary(
            move |x| a * x + b,
            BoundClass::Growth {
                c: a.abs().max(b.abs()),
                beta: 1.0,
            },
        )
        .labelled("affine")
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.f)(x, t)
    }

    pub fn bound(&self) -> BoundClass {
        self.bound
    }

    /// Declare that the callable ignores `t`, so its samples can be cached.
    pub fn assume_time_independent(mut self) -> Self {
        self.time_independent = true;
        self
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn callable(&self) -> DataFn {
        self.f.clone()
    }

    /// Spot-check the declared bound on log-spaced probes `|x| in [r0, 1e6]`
    /// at the given times.
    pub fn spot_check(&self, r0: f64, n_probes: usize, times: &[f64]) -> Result<()> {
        let n = n_probes.max(2);
        let (lo, hi) = (r0.max(1e-12).ln(), 1e6f64.max(r0 * 2.0).ln());
        for k in 0..n {
            let r = (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp();
            for &x in &[r, -r] {
                for &t in times {
                    let v = self.eval(x, t);
                    if !v.is_finite() || v.abs() > self.bound.at(x) * (1.0 + 1e-12) + 1e-300 {
                        return domain(format!(
                            "exterior value {v} at (x = {x}, t = {t}) violates declared bound {:?}",
                            self.bound
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Samples of `u(x_i, t_m)` on a [`Grid`] together with the exterior data.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    grid: Grid,
    values: Arc<Vec<f64>>,
    exterior: Exterior,
}

impl SpaceTimeField {
    /// `values` is level-major: `values[m * grid.len() + i] = u(x_i, t_m)`.
    pub fn new(grid: Grid, values: Vec<f64>, exterior: Exterior) -> Result<Self> {
        grid.validate()?;
        let expected = grid.len() * grid.n_levels();
        if values.len() != expected {
            return domain(format!(
                "field has {} values, grid expects {expected}",
                values.len()
            ));
        }
        let n = grid.len();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                x: grid.node(k % n),
                t: grid.time(k / n),
            });
        }
        Ok(Self {
            grid,
            values: Arc::new(values),
            exterior,
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid, f: F, exterior: Exterior) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * grid.n_levels());
        for m in 0..grid.n_levels() {
            let t = grid.time(m);
            values.extend((0..grid.len()).map(|i| f(grid.node(i), t)));
        }
        Self::new(grid, values, exterior)
    }

    /// Field given by one callable everywhere, used both on the grid and outside it.
    pub fn from_callable(grid: Grid, f: DataFn, bound: BoundClass) -> Result<Self> {
        let ext = Exterior::new(f.clone(), bound);
        Self::from_fn(grid, |x, t| f(x, t), ext)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn exterior(&self) -> &Exterior {
        &self.exterior
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_levels(&self) -> usize {
        self.grid.n_levels()
    }

    pub fn level(&self, m: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[m * n..(m + 1) * n]
    }

    #[inline]
    pub fn value(&self, i: usize, m: usize) -> f64 {
        self.values[m * self.grid.len() + i]
    }

    pub fn snapshot(&self, m: usize) -> Snapshot<'_> {
        Snapshot {
            grid: &self.grid,
            values: self.level(m),
            exterior: &self.exterior,
            t: self.grid.time(m),
        }
    }

    /// Value at lattice index `k` (possibly outside the grid) and level `m`.
    pub fn lattice(&self, k: isize, m: usize) -> f64 {
        if k >= 0 && (k as usize) < self.grid.len() {
            self.value(k as usize, m)
        } else {
            self.exterior.eval(self.grid.lattice_point(k), self.grid.time(m))
        }
    }

    /// Off-lattice evaluation: cubic Lagrange interpolation in `x` and `t`
    /// inside the grid, the exterior callable outside it.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let l = self.grid.half_width;
        if x.abs() > l * (1.0 + 1e-14) {
            return self.exterior.eval(x, t);
        }
        let nl = self.grid.n_levels();
        if nl == 1 {
            return interp_cubic_x(&self.grid, self.level(0), x);
        }
        let s = ((t - self.grid.t0) / self.grid.level_dt()).clamp(0.0, self.grid.n_steps as f64);
        let (idx, w) = cubic_stencil(s, nl);
        idx.iter()
            .zip(w.iter())
            .map(|(&m, &wm)| wm * interp_cubic_x(&self.grid, self.level(m), x))
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Same grid and exterior, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, values, self.exterior.clone())
    }

    pub fn with_exterior(&self, exterior: Exterior) -> Self {
        Self {
            grid: self.grid,
            values: self.values.clone(),
            exterior,
        }
    }
}

/// One time level of a field, borrowed.
#[derive(Clone, Copy, Debug)]
pub struct Snapshot<'a> {
    pub grid: &'a Grid,
    pub values: &'a [f64],
    pub exterior: &'a Exterior,
    pub t: f64,
}

impl<'a> Snapshot<'a> {
    pub fn new(grid: &'a Grid, values: &'a [f64], exterior: &'a Exterior, t: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!(
                "snapshot has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            ));
        }
        Ok(Self {
            grid,
            values,
            exterior,
            t,
        })
    }

    #[inline]
    pub fn lattice(&self, k: isize) -> f64 {
        if k >= 0 && (k as usize) < self.values.len() {
            self.values[k as usize]
        } else {
            self.exterior.eval(self.grid.lattice_point(k), self.t)
        }
    }

    pub fn value_at(&self, x: f64) -> f64 {
        if x.abs() > self.grid.half_width * (1.0 + 1e-14) {
            self.exterior.eval(x, self.t)
        } else {
            interp_cubic_x(self.grid, self.values, x)
        }
    }
}

/// Four-point Lagrange stencil around fractional index `s` in `0..n`.
fn cubic_stencil(s: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    if n < 4 {
        // linear fallback
        let i0 = (s.floor() as usize).min(n.saturating_sub(2));
        let f = s - i0 as f64;
        let i1 = (i0 + 1).min(n - 1);
        return ([i0, i1, i1, i1], [1.0 - f, f, 0.0, 0.0]);
    }
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut w = [0.0; 4];
    for (j, wj) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for k in 0..4 {
            if k != j {
                p *= (s - (base + k) as f64) / (j as f64 - k as f64);
            }
        }
        *wj = p;
    }
    ([base, base + 1, base + 2, base + 3], w)
}

fn interp_cubic_x(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let s = ((x + grid.half_width) / grid.dx()).clamp(0.0, grid.n_points as f64);
    let r = s.round();
    if (s - r).abs() < 1e-12 {
        return values[r as usize];
    }
    let (idx, w) = cubic_stencil(s, values.len());
    idx.iter().zip(w.iter()).map(|(&i, &wi)| wi * values[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let g = Grid::new(2.0, 16, 0.0, 1.0, 8).unwrap();
        let f = |x: f64, t: f64| x * x * x - x + 2.0 * t * t * t + t;
        let u = SpaceTimeField::from_fn(g, f, Exterior::zero()).unwrap();
        for &(x, t) in &[(0.1, 0.33), (-1.93, 0.01), (1.99, 0.97)] {
            assert!((u.eval(x, t) - f(x, t)).abs() < 1e-12);
        }
        // outside the grid the exterior wins
        assert_eq!(u.eval(2.5, 0.5), 0.0);
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = Grid::spatial(2.0, 8, 0.0).unwrap();
        let mut v = vec![0.0; 9];
        v[3] = f64::NAN;
        let err = SpaceTimeField::new(g, v, Exterior::zero()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn spot_check_catches_bound_violations() {
        let ok = Exterior::stationary(|x| x.sin(), BoundClass::Bounded { bound: 1.0 });
        assert!(ok.spot_check(2.0, 64, &[0.0]).is_ok());
        let bad = Exterior::stationary(|x| x, BoundClass::Bounded { bound: 1.0 });
        assert!(bad.spot_check(2.0, 64, &[0.0]).is_err());
        let growth = Exterior::affine(2.0, 1.0);
        assert!(growth.spot_check(2.0, 64, &[0.0]).is_ok());
    }

    #[test]
    fn tail_radius_meets_tolerance() {
        let b = BoundClass::Bounded { bound: 3.0 };
        let r = b.tail_radius(2.0, 0.75, 1e-8).unwrap();
        assert!(b.power_tail(r, 0.75).unwrap() <= 1e-8 * (1.0 + 1e-9));
        let g = BoundClass::Growth { c: 1.0, beta: 0.5 };
        let r = g.tail_radius(2.0, 1.5, 1e-8).unwrap();
        assert!(g.power_tail(r, 1.5).unwrap() <= 1e-8 * (1.0 + 1e-9));
        let bad = BoundClass::Growth { c: 1.0, beta: 1.0 };
        assert!(matches!(bad.tail_radius(2.0, 1.0, 1e-8), Err(Error::Divergence(_))));
    }
}
