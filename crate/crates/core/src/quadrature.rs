//! Small quadrature toolkit: fixed Gauss-Legendre panels and an adaptive
//! driver built on them.

use crate::error::{Error, Result};

/// 4-point Gauss-Legendre nodes on [-1, 1].
pub const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
pub const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// 4-point Gauss-Legendre on [a, b].
pub fn gl4<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL4_NODES
        .iter()
        .zip(GL4_WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Bisection steps allowed per adaptive integral.
pub const MAX_SUBDIVISIONS: usize = 200_000;

/// Adaptive bisection on 4-point panels until the refined and coarse
/// estimates agree to `tol` (absolute, split across subintervals).
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        global_tol: f64,
        depth: u32,
        budget: &mut usize,
    ) -> Result<f64> {
        if *budget == 0 {
            return Err(Error::Quadrature(format!(
                "evaluation budget exhausted near [{a:e}, {b:e}]"
            )));
        }
        *budget -= 1;
        let m = 0.5 * (a + b);
        let left = gl4(f, a, m);
        let right = gl4(f, m, b);
        let refined = left + right;
        if !refined.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{a:e}, {b:e}]"
            )));
        }
        if (refined - whole).abs() <= tol || depth == 0 {
            if depth == 0 && (refined - whole).abs() > global_tol {
                return Err(Error::Quadrature(format!(
                    "no convergence on [{a:e}, {b:e}] (error estimate {:e})",
                    (refined - whole).abs()
                )));
            }
            return Ok(refined);
        }
        Ok(recurse(f, a, m, left, 0.5 * tol, global_tol, depth - 1, budget)?
            + recurse(f, m, b, right, 0.5 * tol, global_tol, depth - 1, budget)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let whole = gl4(f, a, b);
    if !whole.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite integrand on [{a:e}, {b:e}]"
        )));
    }
    let mut budget = MAX_SUBDIVISIONS;
    recurse(f, a, b, whole, tol, tol, 40, &mut budget)
}

/// Composite Simpson weights for `2k + 1` equally spaced nodes with spacing `h`.
pub fn simpson_weights(n_nodes: usize, h: f64) -> Vec<f64> {
    debug_assert!(n_nodes >= 3 && n_nodes % 2 == 1);
    let mut w = vec![0.0; n_nodes];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == n_nodes - 1 {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl4_is_exact_for_cubics_and_septics() {
        let v = gl4(&|x: f64| x.powi(7) - 2.0 * x.powi(3) + 1.0, 0.0, 2.0);
        let exact = 2f64.powi(8) / 8.0 - 2.0 * 2f64.powi(4) / 4.0 + 2.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = adaptive(&|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-12).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_gives_up_on_wild_oscillation() {
        let e = adaptive(&|x: f64| (x * 1e6).sin(), 0.0, 1e6, 1e-14);
        assert!(matches!(e, Err(Error::Quadrature(_))));
    }

    #[test]
    fn adaptive_reports_non_finite() {
        let e = adaptive(&|x: f64| 1.0 / x, 0.0, 1.0, 1e-10);
        assert!(e.is_err());
    }

    #[test]
    fn simpson_integrates_cubics() {
        let h = 0.25;
        let w = simpson_weights(9, h);
        let s: f64 = w
            .iter()
            .enumerate()
            .map(|(i, wi)| {
                let x = -1.0 + i as f64 * h;
                wi * (x * x * x + x * x)
            })
            .sum();
        assert!((s - 2.0 / 3.0).abs() < 1e-14);
    }
}
