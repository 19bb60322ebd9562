//! Kernels `K(y) = a(y) (2 - sigma) |y|^(-1 - sigma)` with measurable profiles
//! `lambda <= a <= Lambda`, and their lattice discretization.

mod discrete;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::EllipticityParams;
use crate::error::{domain, Result};
use crate::quadrature::adaptive;
use crate::rng::SplitMix64;

pub use discrete::{
    discretize_kernel, discretize_kernel_with, unit_cell_integral, DiscreteKernel, TailGeometry,
    TailQuadrature, UnitStencil,
};

/// Lowest and highest dyadic band index of the rough profile.
pub const DYADIC_K_MIN: i64 = -20;
pub const DYADIC_K_MAX: i64 = 40;

pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    PowerLawConstant,
    DyadicRough,
    UserCallable,
}

#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// Level `levels[k - DYADIC_K_MIN]` on `2^k <= |y| < 2^(k+1)`, `floor`
    /// outside the band.
    Dyadic {
        seed: u64,
        levels: Arc<Vec<f64>>,
        floor: f64,
    },
    User(ProfileFn),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Dyadic { seed, floor, .. } => {
                write!(f, "Dyadic {{ seed: {seed}, floor: {floor} }}")
            }
            Profile::User(_) => write!(f, "User(<fn>)"),
        }
    }
}

/// `floor(log2 t)` for positive finite `t`, exact at powers of two.
fn dyadic_index(t: f64) -> i64 {
    let bits = t.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64;
    if e == 0 {
        // subnormal
        return -1075;
    }
    e - 1023
}

impl Profile {
    /// Profile value at `t` in unscaled units.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Dyadic { levels, floor, .. } => {
                let r = t.abs();
                if r == 0.0 || !r.is_finite() {
                    return *floor;
                }
                let k = dyadic_index(r);
                if (DYADIC_K_MIN..=DYADIC_K_MAX).contains(&k) {
                    levels[(k - DYADIC_K_MIN) as usize]
                } else {
                    *floor
                }
            }
            Profile::User(f) => f(t),
        }
    }

    /// Symmetrized value `(a(t) + a(-t)) / 2`.
    fn symmetric(&self, t: f64) -> f64 {
        match self {
            Profile::User(f) => 0.5 * (f(t) + f(-t)),
            _ => self.value(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Kernel {
    params: EllipticityParams,
    profile: Profile,
    /// The kernel's profile is `a(scale * y)`.
    scale: f64,
}

/// Constant profile `a = c`.
pub fn make_power_kernel(params: &EllipticityParams, c: f64) -> Result<Kernel> {
    let params = params.clone().validated()?;
    if !(c >= params.lambda && c <= params.lambda_upper) {
        return domain(format!(
            "profile constant {c} is outside [{}, {}]",
            params.lambda, params.lambda_upper
        ));
    }
    Ok(Kernel {
        params,
        profile: Profile::Constant(c),
        scale: 1.0,
    })
}

/// Piecewise constant profile on dyadic annuli with levels drawn uniformly
/// from `[lambda, Lambda]`, keyed by `(seed, k)`.
pub fn make_dyadic_rough_kernel(params: &EllipticityParams, seed: u64) -> Result<Kernel> {
    let params = params.clone().validated()?;
    let (lo, hi) = (params.lambda, params.lambda_upper);
    let levels = (DYADIC_K_MIN..=DYADIC_K_MAX)
        .map(|k| {
            let v = SplitMix64::keyed(seed, k).uniform(lo, hi);
            v.clamp(lo, hi)
        })
        .collect();
    Ok(Kernel {
        params,
        profile: Profile::Dyadic {
            seed,
            levels: Arc::new(levels),
            floor: lo,
        },
        scale: 1.0,
    })
}

/// Kernel from a caller supplied profile. The bounds are not checked here;
/// use [`kernel_bounds_check`].
pub fn make_user_kernel<F>(params: &EllipticityParams, profile: F) -> Result<Kernel>
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Ok(Kernel {
        params: params.clone().validated()?,
        profile: Profile::User(Arc::new(profile)),
        scale: 1.0,
    })
}

impl Kernel {
    pub fn params(&self) -> &EllipticityParams {
        &self.params
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    pub fn representation(&self) -> Representation {
        match self.profile {
            Profile::Constant(_) => Representation::PowerLawConstant,
            Profile::Dyadic { .. } => Representation::DyadicRough,
            Profile::User(_) => Representation::UserCallable,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.profile {
            Profile::Dyadic { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// `a(y)`.
    pub fn a(&self, y: f64) -> f64 {
        self.profile.value(self.scale * y)
    }

    pub(crate) fn a_sym(&self, y: f64) -> f64 {
        self.profile.symmetric(self.scale * y)
    }

    /// `K(y)`; zero away from the origin at `sigma = 2`.
    pub fn eval(&self, y: f64) -> f64 {
        self.a(y) * unit_density(self.params.sigma, y)
    }

    /// The kernel `y -> K(r y) r^(1 + sigma)`, i.e. profile `a(r y)`.
    pub fn rescaled(&self, r: f64) -> Result<Kernel> {
        if !(r > 0.0 && r.is_finite()) {
            return domain(format!("rescaling factor must be positive, got {r}"));
        }
        let mut k = self.clone();
        k.scale *= r;
        Ok(k)
    }

    /// The same profile at another order.
    pub fn with_params(&self, params: &EllipticityParams) -> Result<Kernel> {
        let mut k = self.clone();
        k.params = params.clone().validated()?;
        Ok(k)
    }

    pub fn spec(&self) -> Option<KernelSpec> {
        let p = &self.params;
        match self.profile {
            Profile::Constant(c) if self.scale == 1.0 => Some(KernelSpec::Power {
                sigma: p.sigma,
                lambda: p.lambda,
                lambda_upper: p.lambda_upper,
                c,
            }),
            Profile::Dyadic { seed, .. } if self.scale == 1.0 => Some(KernelSpec::Dyadic {
                sigma: p.sigma,
                lambda: p.lambda,
                lambda_upper: p.lambda_upper,
                seed,
            }),
            _ => None,
        }
    }

    /// `int_lo^hi a(y) (2 - sigma) y^(-1 - sigma) dy` for `0 < lo < hi`.
    pub fn cell_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        let s = self.params.sigma;
        match &self.profile {
            Profile::Constant(c) => Ok(c * unit_cell_integral(s, lo, hi)),
            Profile::Dyadic { .. } => Ok(self
                .dyadic_pieces(lo, hi)
                .map(|(a, b, v)| v * unit_cell_integral(s, a, b))
                .sum()),
            Profile::User(_) => {
                let mass = unit_cell_integral(s, lo, hi);
                if mass == 0.0 {
                    return Ok(0.0);
                }
                let f = |y: f64| self.a_sym(y) * unit_density(s, y);
                adaptive(&f, lo, hi, 1e-13 * mass)
            }
        }
    }

    /// Profile average over `|y| < hh` against the second moment measure,
    /// `int_0^1 a(hh s^(1 / (2 - sigma))) ds`. At `sigma = 2` this is `a(0+)`.
    pub fn inner_average(&self, hh: f64) -> Result<f64> {
        let p = 2.0 - self.params.sigma;
        match &self.profile {
            Profile::Constant(c) => Ok(*c),
            Profile::Dyadic { floor, .. } => {
                if p == 0.0 {
                    return Ok(*floor);
                }
                Ok(self
                    .dyadic_pieces(0.0, hh)
                    .map(|(a, b, v)| v * ((b / hh).powf(p) - (a / hh).powf(p)))
                    .sum())
            }
            Profile::User(_) => {
                if p == 0.0 {
                    return Ok(self.a_sym(f64::MIN_POSITIVE));
                }
                let f = |s: f64| self.a_sym(hh * s.powf(1.0 / p));
                adaptive(&f, 0.0, 1.0, 1e-13)
            }
        }
    }

    /// Pieces `(lo, hi, level)` of `[a, b]` on which a dyadic profile is constant.
    fn dyadic_pieces(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let scale = self.scale;
        let bottom = (DYADIC_K_MIN as f64).exp2() / scale;
        let top = ((DYADIC_K_MAX + 1) as f64).exp2() / scale;
        let mut cuts = vec![a];
        if a < bottom && bottom < b {
            cuts.push(bottom);
        }
        let k_lo = if a * scale > 0.0 {
            dyadic_index(a * scale).max(DYADIC_K_MIN)
        } else {
            DYADIC_K_MIN
        };
        let k_hi = dyadic_index((b * scale).min(f64::MAX)).min(DYADIC_K_MAX + 1);
        for k in (k_lo + 1)..=k_hi {
            let y = (k as f64).exp2() / scale;
            if y > a && y < b && y > bottom && y <= top {
                cuts.push(y);
            }
        }
        if a < top && top < b && cuts.last() != Some(&top) {
            cuts.push(top);
        }
        cuts.push(b);
        cuts.dedup();
        let pieces: Vec<(f64, f64, f64)> = cuts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1], self.a(0.5 * (w[0] + w[1]))))
            .collect();
        pieces.into_iter()
    }
}

/// `(2 - sigma) |y|^(-1 - sigma)` for `y != 0`.
pub fn unit_density(sigma: f64, y: f64) -> f64 {
    if sigma >= 2.0 {
        return 0.0;
    }
    (2.0 - sigma) * y.abs().powf(-1.0 - sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    BelowLower,
    AboveUpper,
    Asymmetric,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsViolation {
    pub probe: usize,
    pub y: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub passed: bool,
    pub n_probes: usize,
    pub first_violation: Option<BoundsViolation>,
}

/// Check `lambda (2 - sigma) |y|^(-1 - sigma) <= K(y) <= Lambda (...)` and
/// `K(y) = K(-y)` at log-spaced `|y|` in `[1e-6, 1e6]`. At `sigma = 2` the
/// bounds degenerate and the profile itself is checked against
/// `[lambda, Lambda]`.
pub fn kernel_bounds_check(k: &Kernel, n_probes: usize) -> Result<BoundsReport> {
    if n_probes == 0 {
        return domain("kernel_bounds_check needs at least one probe");
    }
    let p = &k.params;
    let second_order = p.is_second_order();
    let span = 12.0 * std::f64::consts::LN_10;
    for i in 0..n_probes {
        let frac = if n_probes == 1 {
            0.0
        } else {
            i as f64 / (n_probes - 1) as f64
        };
        let r = (-6.0 * std::f64::consts::LN_10 + span * frac).exp();
        let base = if second_order { 1.0 } else { unit_density(p.sigma, r) };
        let (lower, upper) = (p.lambda * base, p.lambda_upper * base);
        let plus = if second_order { k.a(r) } else { k.eval(r) };
        let minus = if second_order { k.a(-r) } else { k.eval(-r) };
        let bad = |value: f64, y: f64, kind| {
            Ok(BoundsReport {
                passed: false,
                n_probes,
                first_violation: Some(BoundsViolation {
                    probe: i,
                    y,
                    value,
                    lower,
                    upper,
                    kind,
                }),
            })
        };
        for (value, y) in [(plus, r), (minus, -r)] {
            if !value.is_finite() {
                return bad(value, y, ViolationKind::NonFinite);
            }
            if !(lower > 0.0 || second_order && lower == 0.0) || value < lower {
                return bad(value, y, ViolationKind::BelowLower);
            }
            if value > upper {
                return bad(value, y, ViolationKind::AboveUpper);
            }
        }
        if plus != minus {
            return bad(minus, -r, ViolationKind::Asymmetric);
        }
    }
    Ok(BoundsReport {
        passed: true,
        n_probes,
        first_violation: None,
    })
}

/// Serializable description of a generated kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelSpec {
    Power {
        sigma: f64,
        lambda: f64,
        lambda_upper: f64,
        c: f64,
    },
    Dyadic {
        sigma: f64,
        lambda: f64,
        lambda_upper: f64,
        seed: u64,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        match *self {
            KernelSpec::Power {
                sigma,
                lambda,
                lambda_upper,
                c,
            } => make_power_kernel(&EllipticityParams::one_d(sigma, lambda, lambda_upper)?, c),
            KernelSpec::Dyadic {
                sigma,
                lambda,
                lambda_upper,
                seed,
            } => make_dyadic_rough_kernel(
                &EllipticityParams::one_d(sigma, lambda, lambda_upper)?,
                seed,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn params(sigma: f64, lo: f64, hi: f64) -> EllipticityParams {
        EllipticityParams::one_d(sigma, lo, hi).unwrap()
    }

    #[test]
    fn unit_power_kernel_has_unit_profile() {
        let k = make_power_kernel(&params(1.2, 1.0, 1.0), 1.0).unwrap();
        for &y in &[1e-6, 0.3, -2.0, 1e5] {
            assert_eq!(k.a(y), 1.0);
        }
        assert_eq!(k.representation(), Representation::PowerLawConstant);
    }

    #[test]
    fn power_kernel_bounds() {
        let p = params(1.0, 1.0, 2.0);
        let k = make_power_kernel(&p, 2.0).unwrap();
        assert!(kernel_bounds_check(&k, 100).unwrap().passed);
        assert!(matches!(make_power_kernel(&p, 3.0), Err(Error::Domain(_))));
        assert!(make_power_kernel(&p, 0.5).is_err());
    }

    #[test]
    fn dyadic_kernel_is_deterministic_and_bounded() {
        let p = params(0.8, 0.5, 3.0);
        let a = make_dyadic_rough_kernel(&p, 42).unwrap();
        let b = make_dyadic_rough_kernel(&p, 42).unwrap();
        let c = make_dyadic_rough_kernel(&p, 43).unwrap();
        let mut differs = false;
        for i in 0..2000 {
            let y = (-25.0 + 70.0 * i as f64 / 2000.0f64).exp2();
            assert_eq!(a.a(y).to_bits(), b.a(y).to_bits());
            assert!(a.a(y) >= 0.5 && a.a(y) <= 3.0);
            differs |= a.a(y) != c.a(y);
        }
        assert!(differs);
        assert_eq!(a.seed(), Some(42));
    }

    #[test]
    fn dyadic_kernel_is_piecewise_constant_on_annuli() {
        let k = make_dyadic_rough_kernel(&params(1.5, 1.0, 2.0), 7).unwrap();
        for kk in [-20i64, -3, 0, 5, 40] {
            let lo = (kk as f64).exp2();
            let v = k.a(lo);
            assert_eq!(k.a(lo * 1.999), v);
            assert_eq!(k.a(-lo * 1.5), v);
        }
        assert_eq!(k.a(2f64.powi(-21)), 1.0);
        assert_eq!(k.a(2f64.powi(42)), 1.0);
    }

    #[test]
    fn dyadic_collapses_when_lambda_equals_lambda_upper() {
        let k = make_dyadic_rough_kernel(&params(1.0, 1.7, 1.7), 9).unwrap();
        for i in 0..500 {
            let y = (-30.0 + 80.0 * i as f64 / 500.0f64).exp2();
            assert_eq!(k.a(y), 1.7);
        }
    }

    #[test]
    fn dyadic_check_with_many_probes() {
        for seed in 0..5 {
            let k = make_dyadic_rough_kernel(&params(1.3, 0.7, 2.2), seed).unwrap();
            let r = kernel_bounds_check(&k, 10_000).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn injected_violation_fails_at_first_probe() {
        let p = params(1.0, 1.0, 2.0);
        let k = make_user_kernel(&p, |_| 2.1).unwrap();
        let r = kernel_bounds_check(&k, 50).unwrap();
        assert!(!r.passed);
        let v = r.first_violation.unwrap();
        assert_eq!(v.probe, 0);
        assert_eq!(v.kind, ViolationKind::AboveUpper);
    }

    #[test]
    fn asymmetric_profile_is_reported() {
        let p = params(1.0, 1.0, 2.0);
        let k = make_user_kernel(&p, |y| if y > 0.0 { 1.0 } else { 1.5 }).unwrap();
        let r = kernel_bounds_check(&k, 10).unwrap();
        assert_eq!(r.first_violation.unwrap().kind, ViolationKind::Asymmetric);
    }

    #[test]
    fn second_order_check_uses_the_profile() {
        let p = params(2.0, 1.0, 2.0);
        assert!(kernel_bounds_check(&make_power_kernel(&p, 1.5).unwrap(), 20).unwrap().passed);
        let bad = make_user_kernel(&p, |_| 0.5).unwrap();
        assert!(!kernel_bounds_check(&bad, 20).unwrap().passed);
        assert!(kernel_bounds_check(&bad, 0).is_err());
    }

    #[test]
    fn cell_integrals_match_closed_form() {
        let k = make_power_kernel(&params(0.6, 1.0, 3.0), 2.5).unwrap();
        let v = k.cell_integral(0.5, 1.5).unwrap();
        let exact = 2.5 * (1.4 / 0.6) * (0.5f64.powf(-0.6) - 1.5f64.powf(-0.6));
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn dyadic_cell_integral_matches_adaptive_oracle() {
        let k = make_dyadic_rough_kernel(&params(1.4, 0.5, 2.0), 3).unwrap();
        let k = k.rescaled(3.0).unwrap();
        let f = |y: f64| k.eval(y);
        for &(lo, hi) in &[(0.01, 0.9), (0.3, 0.31), (1.0, 1000.0), (1e-9, 1e-3)] {
            // oracle: adaptive quadrature split at every breakpoint
            let mut cuts = vec![lo, hi];
            for kk in -60..60 {
                let y = (kk as f64).exp2() / 3.0;
                if y > lo && y < hi {
                    cuts.push(y);
                }
            }
            cuts.sort_by(f64::total_cmp);
            let oracle: f64 = cuts
                .windows(2)
                .map(|w| {
                    let scale = crate::quadrature::gl4(&f, w[0], w[1]).abs();
                    adaptive(&f, w[0], w[1], 1e-14 * scale).unwrap()
                })
                .sum();
            let v = k.cell_integral(lo, hi).unwrap();
            assert!((v - oracle).abs() <= 1e-11 * oracle, "{v} vs {oracle}");
        }
    }

    #[test]
    fn inner_average_is_a_profile_mean() {
        let k = make_dyadic_rough_kernel(&params(1.2, 1.0, 2.0), 11).unwrap();
        let hh = 0.013;
        let v = k.inner_average(hh).unwrap();
        // oracle: int_0^hh a y^(1-s) dy / int_0^hh y^(1-s) dy by direct quadrature
        let num = |y: f64| k.a(y) * y.powf(-0.2);
        let mut cuts = vec![0.0, hh];
        for kk in -30..0 {
            let y = (kk as f64).exp2();
            if y < hh {
                cuts.push(y);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let top: f64 = cuts.windows(2).map(|w| adaptive(&num, w[0], w[1], 1e-16).unwrap()).sum();
        let oracle = top / (hh.powf(0.8) / 0.8);
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        assert!((1.0..=2.0).contains(&v));
        let k2 = make_dyadic_rough_kernel(&params(2.0, 1.0, 2.0), 11).unwrap();
        assert_eq!(k2.inner_average(hh).unwrap(), 1.0);
    }

    #[test]
    fn rescaling_moves_breakpoints() {
        let k = make_dyadic_rough_kernel(&params(1.0, 1.0, 2.0), 5).unwrap();
        let r = k.rescaled(4.0).unwrap();
        for &y in &[0.01, 0.2, 3.0, 77.0] {
            assert_eq!(r.a(y), k.a(4.0 * y));
        }
        assert!(k.rescaled(0.0).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let k = make_dyadic_rough_kernel(&params(1.5, 1.0, 2.0), 77).unwrap();
        let spec = k.spec().unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let k2 = back.build().unwrap();
        assert_eq!(k2.a(0.37), k.a(0.37));
        assert!(json.contains("\"type\":\"dyadic\""));
    }
}
