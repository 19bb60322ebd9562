use super::field::SpaceTimeField;
use crate::error::{domain, Error, Result};
use crate::quadrature::{gl4, simpson_weights};

/// `(2 - sigma0) / (1 + |x|^(n + sigma0))` with `n = x.len()`.
pub fn weight_omega(x: &[f64], sigma0: f64) -> f64 {
    let n = x.len() as f64;
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    (2.0 - sigma0) / (1.0 + r.powf(n + sigma0))
}

/// Geometric ratio of the far-field panels.
pub const TAIL_RATIO: f64 = 1.25;
/// Far-field truncation tolerance, relative to the magnitude of the
/// declared exterior bound.
pub const TAIL_TOL: f64 = 1e-8;

/// `int |u(x, t)| omega_sigma0(x) dx` at a stored level `t`.
///
/// Composite Simpson on the grid plus a graded geometric mesh for the
/// exterior data, truncated where the declared bound times the remaining
/// weight mass drops below [`TAIL_TOL`] times the bound's constant. The cut
/// is therefore scale free and the norm is homogeneous to rounding.
pub fn weighted_l1_norm(u: &SpaceTimeField, t: f64, sigma0: f64) -> Result<f64> {
    if !(sigma0 > 0.0 && sigma0 < 2.0) {
        return domain(format!("sigma0 must lie in (0, 2), got {sigma0}"));
    }
    let grid = u.grid();
    let m = grid
        .level_of(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not a stored level")))?;
    let omega = |x: f64| (2.0 - sigma0) / (1.0 + x.abs().powf(1.0 + sigma0));
    let w = simpson_weights(grid.len(), grid.dx());
    let level = u.level(m);
    let inner: f64 = (0..grid.len())
        .map(|i| w[i] * level[i].abs() * omega(grid.node(i)))
        .sum();

    let ext = u.exterior();
    let l = grid.half_width;
    // omega(x) <= (2 - sigma0) |x|^(-1 - sigma0); power_tail bounds both sides
    let bound = ext.bound();
    let r_end = bound.tail_radius(l, sigma0, TAIL_TOL * bound.magnitude()).map_err(|e| match e {
        Error::Divergence(msg) => Error::Divergence(format!("weighted L1 norm: {msg}")),
        other => other,
    })?;
    let f = |x: f64| (ext.eval(x, t).abs() + ext.eval(-x, t).abs()) * omega(x);
    let mut tail = 0.0;
    let mut a = l;
    while a < r_end {
        let b = (a * TAIL_RATIO).min(r_end);
        let panels = ((b - a).ceil() as usize).clamp(1, 64);
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * step;
            tail += gl4(&f, lo, lo + step);
        }
        a = b;
    }
    Ok(inner + tail)
}
