//! Least-squares fitting planes on parabolic cylinders, deviation profiles,
//! fitted Hölder exponents and discrete seminorms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{cylinder, Cylinder, SnappedCylinder, SpaceTimeField};
use crate::error::{domain, Error, Result};
use crate::quadrature::simpson_weights;

/// Exponent reported when every deviation is below the noise threshold.
pub const SENTINEL_CAP: f64 = 3.0;
/// Slopes of the two half windows differing by more than this mark a bend.
pub const BEND_TOL: f64 = 0.15;
/// Relative tolerance of the residual moment conditions.
pub const MOMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// `a = 0`, `b = u(z)`.
    ConstantFit,
    /// Least squares over affine-in-x, constant-in-t functions.
    AffineFit,
}

impl FitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::ConstantFit => "constant-fit",
            FitMode::AffineFit => "affine-fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: f64,
    pub mode: FitMode,
    pub cylinder: Cylinder,
    pub snapped: SnappedCylinder,
    /// `sup |u - a (x - z') - b|` over the cylinder nodes.
    pub residual_sup: f64,
}

impl AffineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (x - self.snapped.center_x) + self.b
    }
}

/// Quadrature weights of the snapped cylinder: Simpson in `x`, uniform in `t`.
fn x_weights(s: &SnappedCylinder, dx: f64) -> Vec<f64> {
    simpson_weights(2 * s.half_nodes + 1, dx)
}

fn fit_snapped(u: &SpaceTimeField, q: &Cylinder, s: SnappedCylinder, mode: FitMode) -> AffineFit {
    let g = u.grid();
    let dx = g.dx();
    let (a, b) = match mode {
        FitMode::ConstantFit => (0.0, u.value(s.center_index, s.top_level)),
        FitMode::AffineFit => {
            let w = x_weights(&s, dx);
            let (mut m0, mut m1, mut wsum, mut w2) = (0.0, 0.0, 0.0, 0.0);
            for m in s.levels() {
                for (q, i) in s.x_range().enumerate() {
                    let y = g.node(i) - s.center_x;
                    let v = u.value(i, m);
                    m0 += w[q] * v;
                    m1 += w[q] * v * y;
                    wsum += w[q];
                    w2 += w[q] * y * y;
                }
            }
            (m1 / w2, m0 / wsum)
        }
    };
    let mut sup = 0.0f64;
    for m in s.levels() {
        for i in s.x_range() {
            let r = u.value(i, m) - (a * (g.node(i) - s.center_x) + b);
            sup = sup.max(r.abs());
        }
    }
    AffineFit {
        a,
        b,
        mode,
        cylinder: q.clone(),
        snapped: s,
        residual_sup: sup,
    }
}

/// Fitting plane of `u` on the cylinder `q`, evaluated on the grid nodes the
/// cylinder snaps to.
pub fn fit_plane(u: &SpaceTimeField, q: &Cylinder, mode: FitMode) -> Result<AffineFit> {
    let s = q.snap(u.grid())?;
    Ok(fit_snapped(u, q, s, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub passed: bool,
    /// Weighted mean of the residual, relative to `sup |u|` on the cylinder.
    pub mean: f64,
    /// Weighted first moment of the residual, relative to `sup |u|` times the mean of `|x - z'|`.
    pub first_moment: f64,
    /// Whether the conditions were asserted (affine mode only).
    pub asserted: bool,
}

/// The least-squares optimality conditions: residual mean and first
/// `x`-moment vanish.
pub fn residual_moments_check(fit: &AffineFit, u: &SpaceTimeField) -> MomentCheck {
    let g = u.grid();
    let s = &fit.snapped;
    let w = x_weights(s, g.dx());
    let (mut r0, mut r1, mut wsum, mut wabs, mut usup) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for m in s.levels() {
        for (q, i) in s.x_range().enumerate() {
            let y = g.node(i) - s.center_x;
            let v = u.value(i, m);
            let r = v - (fit.a * y + fit.b);
            r0 += w[q] * r;
            r1 += w[q] * r * y;
            wsum += w[q];
            wabs += w[q] * y.abs();
            usup = usup.max(v.abs());
        }
    }
    let scale = usup.max(f64::MIN_POSITIVE);
    let mean = (r0 / wsum) / scale;
    let first_moment = (r1 / wabs) / scale;
    let asserted = fit.mode == FitMode::AffineFit;
    MomentCheck {
        passed: !asserted || (mean.abs() <= MOMENT_TOL && first_moment.abs() <= MOMENT_TOL),
        mean,
        first_moment,
        asserted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationProfile {
    pub mode: FitMode,
    pub sigma: f64,
    /// Requested radii, decreasing.
    pub radii: Vec<f64>,
    /// Radii after snapping to whole cells.
    pub snapped_radii: Vec<f64>,
    /// Centers `(x, t)`.
    pub centers: Vec<(f64, f64)>,
    /// `deviations[c][k] = D(radii[k], centers[c])`.
    pub deviations: Vec<Vec<f64>>,
    /// Sup over centers.
    pub aggregate: Vec<f64>,
    /// `sup_{r' >= r}` of the aggregate.
    pub theta: Vec<f64>,
    /// `sup |u|` over the stored field, used for the noise threshold.
    pub field_sup: f64,
}

impl DeviationProfile {
    /// True when the running sup is nonincreasing in `r`.
    pub fn theta_is_monotone(&self) -> bool {
        // radii are decreasing, so theta must be nondecreasing along the list
        self.theta.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,z_x,z_t,D,mode")?;
        for (c, z) in self.centers.iter().enumerate() {
            for (k, r) in self.radii.iter().enumerate() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    r,
                    z.0,
                    z.1,
                    self.deviations[c][k],
                    self.mode.as_str()
                )?;
            }
        }
        Ok(())
    }
}

/// `radii[0] > radii[1] > ...` halving from `r_max` while at least `r_min`.
pub fn dyadic_radii(r_max: f64, r_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= r_min * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

/// `D(r, z)` for every radius and center, with the sup over centers and the
/// running sup over larger radii.
pub fn deviation_profile(
    u: &SpaceTimeField,
    centers: &[(f64, f64)],
    radii: &[f64],
    mode: FitMode,
    sigma: f64,
) -> Result<DeviationProfile> {
    if centers.is_empty() || radii.is_empty() {
        return domain("deviation profile needs at least one center and one radius");
    }
    let g = u.grid();
    let dx = g.dx();
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    if let Some(&r) = sorted.last() {
        if r < 4.0 * dx * (1.0 - 1e-9) {
            return Err(Error::Resolution(format!(
                "radius {r} is below 4 dx = {}",
                4.0 * dx
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..centers.len())
        .flat_map(|c| (0..sorted.len()).map(move |k| (c, k)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, k)| -> Result<(f64, f64)> {
            let (x, t) = centers[c];
            let q = cylinder(&[x], t, sorted[k], sigma)?;
            let s = q.snap(g)?;
            Ok((fit_snapped(u, &q, s, mode).residual_sup, s.radius))
        })
        .collect::<Result<Vec<_>>>()?;
    let nr = sorted.len();
    let mut deviations = vec![vec![0.0; nr]; centers.len()];
    let mut snapped_radii = vec![0.0; nr];
    for (&(c, k), &(d, sr)) in jobs.iter().zip(&results) {
        deviations[c][k] = d;
        snapped_radii[k] = sr;
    }
    let aggregate: Vec<f64> = (0..nr)
        .map(|k| deviations.iter().map(|row| row[k]).fold(0.0, f64::max))
        .collect();
    let mut theta = aggregate.clone();
    for k in 1..nr {
        theta[k] = theta[k].max(theta[k - 1]);
    }
    Ok(DeviationProfile {
        mode,
        sigma,
        radii: sorted,
        snapped_radii,
        centers: centers.to_vec(),
        deviations,
        aggregate,
        theta,
        field_sup: u.sup_norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    /// Fitted exponent, or [`SENTINEL_CAP`] when the profile vanishes.
    pub exponent: f64,
    /// Smallest constant with `D(r) <= C r^exponent` over the window.
    pub constant: f64,
    pub std_error: f64,
    pub band: (f64, f64),
    /// `[r_min, r_max]` of the radii used.
    pub window: (f64, f64),
    pub n_used: usize,
    /// Set when the profile is at noise level everywhere.
    pub sentinel: bool,
    /// Slopes of the small-radius and large-radius halves.
    pub half_slopes: Option<(f64, f64)>,
    pub used_lower_half: bool,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let se = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - icept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, icept, se)
}

/// Log-log least squares of `d` against `r`, discarding values at noise
/// level `10 eps * scale`. When the two halves of the window bend by more
/// than [`BEND_TOL`] the small-radius half is used.
pub fn fit_exponent(r: &[f64], d: &[f64], scale: f64) -> Result<ExponentEstimate> {
    if r.len() != d.len() {
        return domain("radii and deviations differ in length");
    }
    let threshold = 10.0 * f64::EPSILON * scale;
    let mut pts: Vec<(f64, f64)> = r
        .iter()
        .zip(d)
        .filter(|(ri, di)| **ri > 0.0 && **di > threshold)
        .map(|(ri, di)| (*ri, *di))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.is_empty() {
        let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        return Ok(ExponentEstimate {
            exponent: SENTINEL_CAP,
            constant: 0.0,
            std_error: 0.0,
            band: (SENTINEL_CAP, f64::INFINITY),
            window: (lo, hi),
            n_used: 0,
            sentinel: true,
            half_slopes: None,
            used_lower_half: false,
        });
    }
    if pts.len() < 2 {
        return Err(Error::Estimation(format!(
            "only {} radius above the noise threshold",
            pts.len()
        )));
    }
    let slope_of = |p: &[(f64, f64)]| {
        let xs: Vec<f64> = p.iter().map(|q| q.0.ln()).collect();
        let ys: Vec<f64> = p.iter().map(|q| q.1.ln()).collect();
        ols(&xs, &ys)
    };
    let mut used = &pts[..];
    let mut half_slopes = None;
    let mut used_lower = false;
    if pts.len() >= 4 {
        let h = pts.len() / 2;
        let lower = &pts[..pts.len() - h];
        let upper = &pts[h..];
        let (sl, _, _) = slope_of(lower);
        let (su, _, _) = slope_of(upper);
        half_slopes = Some((sl, su));
        if (sl - su).abs() > BEND_TOL {
            used = lower;
            used_lower = true;
        }
    }
    let (slope, _, se) = slope_of(used);
    let constant = used
        .iter()
        .map(|(ri, di)| di * ri.powf(-slope))
        .fold(0.0, f64::max);
    Ok(ExponentEstimate {
        exponent: slope,
        constant,
        std_error: se,
        band: (slope - 2.0 * se, slope + 2.0 * se),
        window: (used[0].0, used[used.len() - 1].0),
        n_used: used.len(),
        sentinel: false,
        half_slopes,
        used_lower_half: used_lower,
    })
}

/// Fitted exponent of the aggregate profile.
pub fn estimate_space_exponent(p: &DeviationProfile) -> Result<ExponentEstimate> {
    fit_exponent(&p.snapped_radii, &p.aggregate, p.field_sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    /// Snapped lags, decreasing.
    pub taus: Vec<f64>,
    pub centers: Vec<(f64, f64)>,
    /// `sup_c max_{t0 - tau <= t <= t0} |u(x_c, t) - u(x_c, t0)|`.
    pub aggregate: Vec<f64>,
    pub field_sup: f64,
}

/// Oscillation in time at the center nodes over lags `taus`.
pub fn time_deviation_profile(u: &SpaceTimeField, centers: &[(f64, f64)], taus: &[f64]) -> Result<TimeProfile> {
    let g = u.grid();
    if g.n_steps == 0 {
        return domain("time profile needs more than one level");
    }
    let dt = g.level_dt();
    let mut sorted = taus.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let mut snapped = Vec::with_capacity(sorted.len());
    let mut aggregate = Vec::with_capacity(sorted.len());
    for &tau in &sorted {
        let d = (tau / dt).round() as usize;
        if d < 4 {
            return Err(Error::Resolution(format!(
                "lag {tau} spans fewer than 4 level steps"
            )));
        }
        let mut worst = 0.0f64;
        for &(x, t) in centers {
            let i = g.nearest_lattice(x);
            let mc = g.nearest_level(t);
            if i < 0 || i as usize > g.n_points || mc < d as isize || mc as usize > g.n_steps {
                return Err(Error::Resolution(format!(
                    "lag {tau} at center ({x}, {t}) leaves the stored levels"
                )));
            }
            let (i, mc) = (i as usize, mc as usize);
            let top = u.value(i, mc);
            for m in mc - d..mc {
                worst = worst.max((u.value(i, m) - top).abs());
            }
        }
        snapped.push(d as f64 * dt);
        aggregate.push(worst);
    }
    Ok(TimeProfile {
        taus: snapped,
        centers: centers.to_vec(),
        aggregate,
        field_sup: u.sup_norm(),
    })
}

pub fn estimate_time_exponent(p: &TimeProfile) -> Result<ExponentEstimate> {
    fit_exponent(&p.taus, &p.aggregate, p.field_sup)
}

/// Spatial seminorm of `u(., t)` on `|x| <= radius`: first differences for
/// `beta <= 1`, `sup_{z, r} r^-beta D(r, z)` of single-level plane fits for
/// `beta > 1`.
pub fn holder_seminorm_space(u: &SpaceTimeField, t: f64, radius: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return domain(format!("spatial exponent must lie in (0, 2), got {beta}"));
    }
    let g = u.grid();
    let m = g
        .level_of(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not a stored level")))?;
    let nodes: Vec<usize> = (0..g.len())
        .filter(|&i| g.node(i).abs() <= radius * (1.0 + 1e-12))
        .collect();
    if nodes.len() < 2 {
        return Err(Error::Resolution(format!("ball of radius {radius} holds fewer than 2 nodes")));
    }
    let level = u.level(m);
    if beta <= 1.0 {
        let best = nodes
            .par_iter()
            .map(|&i| {
                let mut b = 0.0f64;
                for &j in nodes.iter().filter(|&&j| j > i) {
                    let q = (level[i] - level[j]).abs() / (g.node(j) - g.node(i)).powf(beta);
                    b = b.max(q);
                }
                b
            })
            .reduce(|| 0.0, f64::max);
        return Ok(best);
    }
    let dx = g.dx();
    let (i0, i1) = (nodes[0], nodes[nodes.len() - 1]);
    let best = nodes
        .par_iter()
        .map(|&c| {
            let mut b = 0.0f64;
            let kmax = (c - i0).min(i1 - c);
            let mut k = 4usize;
            while k <= kmax {
                let fit = fit_level(level, c, k, dx);
                b = b.max(fit / (k as f64 * dx).powf(beta));
                k *= 2;
            }
            b
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// `sup |u - l|` of the Simpson least-squares line on `[c - k, c + k]` of one level.
fn fit_level(level: &[f64], c: usize, k: usize, dx: f64) -> f64 {
    let w = simpson_weights(2 * k + 1, dx);
    let (mut m0, mut m1, mut ws, mut w2) = (0.0, 0.0, 0.0, 0.0);
    for (q, i) in (c - k..=c + k).enumerate() {
        let y = (i as f64 - c as f64) * dx;
        m0 += w[q] * level[i];
        m1 += w[q] * level[i] * y;
        ws += w[q];
        w2 += w[q] * y * y;
    }
    let (a, b) = (m1 / w2, m0 / ws);
    (c - k..=c + k)
        .map(|i| (level[i] - a * (i as f64 - c as f64) * dx - b).abs())
        .fold(0.0, f64::max)
}

/// `sup |u(x, t) - u(x, s)| / |t - s|^gamma` over stored levels in `[ta, tb]`.
pub fn holder_seminorm_time(u: &SpaceTimeField, x: f64, interval: (f64, f64), gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return domain(format!("time exponent must lie in (0, 1], got {gamma}"));
    }
    let g = u.grid();
    let i = g
        .index_of(x)
        .ok_or_else(|| Error::Domain(format!("x = {x} is not a grid node")))?;
    let levels: Vec<usize> = (0..g.n_levels())
        .filter(|&m| {
            let t = g.time(m);
            t >= interval.0 - 1e-12 && t <= interval.1 + 1e-12
        })
        .collect();
    if levels.len() < 2 {
        return Err(Error::Resolution("interval holds fewer than 2 stored levels".into()));
    }
    let mut best = 0.0f64;
    for (p, &a) in levels.iter().enumerate() {
        for &b in &levels[p + 1..] {
            let q = (u.value(i, a) - u.value(i, b)).abs() / (g.time(b) - g.time(a)).powf(gamma);
            best = best.max(q);
        }
    }
    Ok(best)
}

/// Inputs of [`regularity_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSpec {
    pub sigma: f64,
    pub mode: FitMode,
    pub centers: Vec<(f64, f64)>,
    pub radii: Vec<f64>,
    /// Ball radius and time window of the seminorms.
    pub seminorm_radius: f64,
    pub seminorm_interval: (f64, f64),
    /// Exponent used in the seminorms; the fitted exponent minus this margin
    /// when `None`.
    pub seminorm_exponent: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub sigma: f64,
    pub mode: FitMode,
    pub space: ExponentEstimate,
    pub time: ExponentEstimate,
    /// `gamma_hat * sigma / beta_hat`.
    pub ratio: f64,
    pub seminorm_exponent: f64,
    pub seminorm_space: f64,
    pub seminorm_time: f64,
    pub theta_monotone: bool,
    pub profile: DeviationProfile,
    pub time_profile: TimeProfile,
}

/// Space profile, time profile, fitted exponents and seminorms in one pass.
pub fn regularity_report(u: &SpaceTimeField, spec: &ReportSpec) -> Result<RegularityReport> {
    let profile = deviation_profile(u, &spec.centers, &spec.radii, spec.mode, spec.sigma)?;
    let space = estimate_space_exponent(&profile)?;
    let taus: Vec<f64> = profile.snapped_radii.iter().map(|r| r.powf(spec.sigma)).collect();
    let time_profile = time_deviation_profile(u, &spec.centers, &taus)?;
    let time = estimate_time_exponent(&time_profile)?;
    let beta = spec
        .seminorm_exponent
        .unwrap_or((space.exponent.min(1.99) - spec.epsilon).max(0.01));
    let gamma = (beta / spec.sigma).min(1.0);
    let g = u.grid();
    let t_last = g.time(g.n_steps);
    let seminorm_space = holder_seminorm_space(u, t_last, spec.seminorm_radius, beta)?;
    let mut seminorm_time = 0.0f64;
    for i in 0..g.len() {
        let x = g.node(i);
        if x.abs() <= spec.seminorm_radius * (1.0 + 1e-12) && i % 8 == g.center_index() % 8 {
            seminorm_time = seminorm_time.max(holder_seminorm_time(u, x, spec.seminorm_interval, gamma)?);
        }
    }
    Ok(RegularityReport {
        sigma: spec.sigma,
        mode: spec.mode,
        ratio: time.exponent * spec.sigma / space.exponent,
        space,
        time,
        seminorm_exponent: beta,
        seminorm_space,
        seminorm_time,
        theta_monotone: profile.theta_is_monotone(),
        profile,
        time_profile,
    })
}
