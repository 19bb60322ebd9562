use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::OperatorHandle;
use crate::domain::{BoundClass, Exterior, Grid, SpaceTimeField};
use crate::error::{domain, Result};

/// `l(x) = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// `v(x, t) = (u(x + h, t) - u(x, t)) / |h|^alpha`, with `h` a nonzero
/// multiple of the grid spacing. Exterior values use the field itself
/// (grid interpolation or exterior data) at the shifted point.
pub fn increment_quotient(u: &SpaceTimeField, h: f64, alpha: f64) -> Result<SpaceTimeField> {
    if h == 0.0 || !h.is_finite() {
        return domain("increment must be a nonzero lattice multiple");
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("increment exponent must lie in (0, 1], got {alpha}"));
    }
    let grid = *u.grid();
    let steps = h / grid.dx();
    let k = steps.round();
    if (steps - k).abs() > 1e-9 * steps.abs().max(1.0) {
        return domain(format!("increment {h} is not a multiple of dx = {}", grid.dx()));
    }
    let k = k as isize;
    let denom = h.abs().powf(alpha);
    let n = grid.len();
    let mut values = Vec::with_capacity(u.values().len());
    for m in 0..grid.n_levels() {
        for i in 0..n {
            let shifted = u.lattice(i as isize + k, m);
            values.push((shifted - u.value(i, m)) / denom);
        }
    }
    let bound = match u.exterior().bound() {
        BoundClass::Bounded { bound } => BoundClass::Bounded {
            bound: 2.0 * bound / denom,
        },
        BoundClass::Growth { c, beta } => BoundClass::Growth {
            // (1 + |x| + |h|)^beta <= (1 + |h|)^beta (1 + |x|)^beta
            c: c * (1.0 + (1.0 + h.abs()).powf(beta)) / denom,
            beta,
        },
    };
    let src = u.clone();
    let f = move |x: f64, t: f64| (src.eval(x + h, t) - src.eval(x, t)) / denom;
    let mut ext = Exterior::new(Arc::new(f), bound).labelled("increment-quotient");
    if u.exterior().is_time_independent() && grid.n_levels() == 1 {
        ext = ext.assume_time_independent();
    }
    SpaceTimeField::new(grid, values, ext)
}

fn check_rescale(rho: f64, sigma: f64) -> Result<()> {
    if !(rho >= 1.0 && rho.is_finite()) {
        return domain(format!("rescaling factor must be at least 1, got {rho}"));
    }
    if !(sigma > 0.0 && sigma <= 2.0) {
        return domain(format!("order must lie in (0, 2], got {sigma}"));
    }
    Ok(())
}

fn rescaled_exterior(u: &SpaceTimeField, rho: f64, beta: f64, sigma: f64) -> Exterior {
    let factor = rho.powf(-beta);
    let tscale = rho.powf(sigma);
    let bound = match u.exterior().bound() {
        BoundClass::Bounded { bound } => BoundClass::Bounded {
            bound: bound * factor,
        },
        // rho^-beta C (1 + rho |x|)^beta <= C (1 + |x|)^beta for rho >= 1
        g @ BoundClass::Growth { .. } => g,
    };
    let src = u.clone();
    let f = move |x: f64, t: f64| factor * src.eval(rho * x, tscale * t);
    Exterior::new(Arc::new(f), bound).labelled("parabolic-rescale")
}

/// `v(x, t) = rho^-beta u(rho x, rho^sigma t)` on the grid scaled down by
/// `rho` in space and `rho^sigma` in time, so every node of `v` maps onto a
/// node of `u`.
pub fn parabolic_rescale(u: &SpaceTimeField, rho: f64, beta: f64, sigma: f64) -> Result<SpaceTimeField> {
    check_rescale(rho, sigma)?;
    let g = u.grid();
    let target = g.rescaled(rho, sigma);
    let factor = rho.powf(-beta);
    if rho == 1.0 {
        return Ok(u.clone());
    }
    let values = u.values().iter().map(|v| factor * v).collect();
    SpaceTimeField::new(target, values, rescaled_exterior(u, rho, beta, sigma))
}

/// As [`parabolic_rescale`] but sampled on an arbitrary grid, with cubic
/// interpolation for off-lattice reads.
pub fn parabolic_rescale_onto(
    u: &SpaceTimeField,
    rho: f64,
    beta: f64,
    sigma: f64,
    target: Grid,
) -> Result<SpaceTimeField> {
    check_rescale(rho, sigma)?;
    let factor = rho.powf(-beta);
    let tscale = rho.powf(sigma);
    SpaceTimeField::from_fn(
        target,
        |x, t| factor * u.eval(rho * x, tscale * t),
        rescaled_exterior(u, rho, beta, sigma),
    )
}

/// The operator `I~` with `I~((w(x0 + r .) - l(x0 + r .)) / c) = (r^sigma / c) (I w)(x0 + r .)`.
///
/// Kernels take the profile `a(r y)`, Isaacs constants are multiplied by
/// `r^sigma / c`, extremal operators are unchanged up to the scale at which
/// their discretization matches moments.
pub fn rescale_operator(op: &OperatorHandle, x0: &[f64], r: f64, c: f64, l: Affine) -> Result<OperatorHandle> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("rescaling radius must be positive, got {r}"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return domain(format!("rescaling divisor must be positive, got {c}"));
    }
    if x0.iter().any(|v| !v.is_finite()) || !l.slope.is_finite() || !l.intercept.is_finite() {
        return domain("rescaling center and affine part must be finite");
    }
    let sigma = op.params().sigma;
    Ok(match op {
        OperatorHandle::Linear(k) => OperatorHandle::Linear(k.rescaled(r)?),
        OperatorHandle::PucciPlus { params, scale } => OperatorHandle::PucciPlus {
            params: params.clone(),
            scale: scale * r,
        },
        OperatorHandle::PucciMinus { params, scale } => OperatorHandle::PucciMinus {
            params: params.clone(),
            scale: scale * r,
        },
        OperatorHandle::Isaacs(f) => OperatorHandle::Isaacs(f.rescaled(r, r.powf(sigma) / c)?),
    })
}
