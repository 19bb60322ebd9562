//! Experiment drivers: evolution plus regularity analysis, the Liouville
//! flattening diagnostic, the second-order limit and the rescaling check.

use std::path::Path;
use std::sync::Arc;

use nonlocal_lab::domain::{weighted_l1_norm, BoundClass, DataFn, Exterior, Grid, SpaceTimeField};
use nonlocal_lab::evolution::{evolve, ParabolicProblem, Trajectory};
use nonlocal_lab::kernels::{make_dyadic_rough_kernel, make_power_kernel, TailQuadrature};
use nonlocal_lab::operators::{parabolic_rescale, LatticeState, rescale_operator, Affine, IsaacsFamily, OperatorHandle};
use nonlocal_lab::regularity::{
    deviation_profile, dyadic_radii, estimate_space_exponent, regularity_report, residual_moments_check,
    fit_plane, FitMode, ReportSpec,
};
use nonlocal_lab::rng::SplitMix64;
use nonlocal_lab::{Error, Result};
use serde_json::json;

use crate::config::{KernelChoice, OperatorChoice, ScenarioConfig, ScenarioKind};
use crate::generators::DataSpec;
use crate::report::{write_table, Check, Report};

pub fn build_operator(cfg: &ScenarioConfig) -> Result<OperatorHandle> {
    let p = cfg.params.build()?;
    let op = &cfg.operator;
    Ok(match op.kind {
        OperatorChoice::Linear => OperatorHandle::linear(match op.kernel {
            KernelChoice::Power => make_power_kernel(&p, op.c)?,
            KernelChoice::Dyadic => make_dyadic_rough_kernel(&p, op.kernel_seed)?,
        }),
        OperatorChoice::PucciPlus => OperatorHandle::pucci_plus(&p),
        OperatorChoice::PucciMinus => OperatorHandle::pucci_minus(&p),
        OperatorChoice::Isaacs => {
            OperatorHandle::isaacs(IsaacsFamily::random(&p, op.n_alpha, op.n_beta, op.family_seed)?)
        }
    })
}

fn data_fn(spec: &DataSpec) -> DataFn {
    spec.build().callable()
}

pub fn build_problem(cfg: &ScenarioConfig) -> Result<ParabolicProblem> {
    let grid = cfg.grid.build()?;
    let mut pb = ParabolicProblem::new(build_operator(cfg)?, grid, cfg.exterior.build())
        .with_active_radius(cfg.evolution.active_radius)
        .with_safety(cfg.evolution.safety);
    if let Some(init) = &cfg.initial {
        pb = pb.with_initial(data_fn(init));
    }
    let f = cfg.evolution.rhs;
    if f != 0.0 {
        pb = pb.with_rhs(Arc::new(move |_, _| f), f.abs());
    }
    Ok(pb)
}

/// Result of a scenario run: the report and the files written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<std::path::PathBuf>,
}

fn out_path(cfg: &ScenarioConfig, dir: &Path, suffix: &str) -> std::path::PathBuf {
    dir.join(format!("{}.{suffix}", cfg.output.stem))
}

fn finish(cfg: &ScenarioConfig, dir: &Path, report: Report, mut files: Vec<std::path::PathBuf>) -> Result<Outcome> {
    report.write(dir, &cfg.output.stem)?;
    files.push(out_path(cfg, dir, "report.json"));
    Ok(Outcome { report, files })
}

/// `simulate`: evolve, export the trajectory, then analyze it.
pub fn simulate(cfg: &ScenarioConfig, dir: &Path) -> Result<Outcome> {
    match cfg.scenario {
        ScenarioKind::CalphaCheck | ScenarioKind::MainEstimate => {}
        ScenarioKind::Liouville => return run_liouville(cfg, dir),
        ScenarioKind::Sigma2Limit => return run_sigma2_limit(cfg, dir),
        ScenarioKind::ScalingCheck => return run_scaling_check(cfg, dir),
    }
    let traj = evolve(&build_problem(cfg)?)?;
    let stem = format!("{}.trajectory", cfg.output.stem);
    traj.export(dir, &stem, cfg.output.level_stride, cfg.output.node_stride)?;
    let mut files = vec![dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json"))];
    let (report, more) = analyze_field(cfg, &traj.field, Some(&traj), dir)?;
    files.extend(more);
    finish(cfg, dir, report, files)
}

/// `analyze`: rebuild the field from a trajectory CSV and analyze it.
pub fn analyze(cfg: &ScenarioConfig, trajectory: &Path, dir: &Path) -> Result<Outcome> {
    if !matches!(cfg.scenario, ScenarioKind::CalphaCheck | ScenarioKind::MainEstimate) {
        return Err(Error::Config(format!(
            "analyze applies to calpha_check and main_estimate, not {}",
            cfg.scenario.as_str()
        )));
    }
    let field = read_trajectory(trajectory, cfg.exterior.build())?;
    let (report, files) = analyze_field(cfg, &field, None, dir)?;
    finish(cfg, dir, report, files)
}

/// Parse a `t,x,u` CSV written by [`Trajectory::write_csv`].
pub fn read_trajectory(path: &Path, exterior: Exterior) -> Result<SpaceTimeField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,x,u") {
        return Err(Error::Config(format!("{}: expected header `t,x,u`", path.display())));
    }
    let mut rows = Vec::new();
    for (n, l) in lines.enumerate() {
        let parts: Vec<&str> = l.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: line {}: bad number `{s}`", path.display(), n + 2)))
        };
        if parts.len() != 3 {
            return Err(Error::Config(format!("{}: line {}: expected 3 columns", path.display(), n + 2)));
        }
        rows.push((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
    }
    let t0 = rows.first().map(|r| r.0).ok_or_else(|| Error::Config("empty trajectory".into()))?;
    let nx = rows.iter().take_while(|r| r.0 == t0).count();
    if nx < 3 || rows.len() % nx != 0 {
        return Err(Error::Config("trajectory rows do not form a grid".into()));
    }
    let nt = rows.len() / nx;
    let (x0, x1) = (rows[0].1, rows[nx - 1].1);
    let (ta, tb) = (rows[0].0, rows[rows.len() - 1].0);
    let grid = Grid::new(-x0, nx - 1, ta, tb, nt - 1)
        .map_err(|e| Error::Config(format!("trajectory grid: {e}")))?;
    let tol = 1e-9 * (1.0 + grid.half_width);
    for (q, r) in rows.iter().enumerate() {
        let (m, i) = (q / nx, q % nx);
        if (r.1 - grid.node(i)).abs() > tol || (r.0 - grid.time(m)).abs() > 1e-9 * (1.0 + tb.abs()) {
            return Err(Error::Config(format!("trajectory row {} is off the uniform grid", q + 2)));
        }
    }
    if (x1 + x0).abs() > tol {
        return Err(Error::Config("trajectory grid is not symmetric".into()));
    }
    SpaceTimeField::new(grid, rows.iter().map(|r| r.2).collect(), exterior)
}

fn centers(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &t in &cfg.analysis.centers_t {
        for &x in &cfg.analysis.centers_x {
            out.push((x, t));
        }
    }
    out
}

/// Trusted window `[4 dx, min_z (L - |z'|) / 2]`, further capped by the
/// configured `r_max` and by the stored history below each center.
pub fn radius_window(cfg: &ScenarioConfig, grid: &Grid, zs: &[(f64, f64)]) -> (f64, f64) {
    let sigma = cfg.params.sigma;
    let r_min = cfg.analysis.r_min.unwrap_or(4.0 * grid.dx()).max(4.0 * grid.dx());
    let mut r_max = cfg.analysis.r_max;
    for &(x, t) in zs {
        r_max = r_max.min((grid.half_width - x.abs()) / 2.0);
        if t > grid.t0 {
            r_max = r_max.min((t - grid.t0).powf(1.0 / sigma));
        }
    }
    (r_min, r_max)
}

/// `max_r D(r) / r^p` over the profile.
fn envelope(radii: &[f64], d: &[f64], p: f64) -> f64 {
    radii.iter().zip(d).map(|(r, d)| d / r.powf(p)).fold(0.0, f64::max)
}

fn analyze_field(
    cfg: &ScenarioConfig,
    u: &SpaceTimeField,
    traj: Option<&Trajectory>,
    dir: &Path,
) -> Result<(Report, Vec<std::path::PathBuf>)> {
    let g = *u.grid();
    let sigma = cfg.params.sigma;
    let p = cfg.params.build()?;
    let zs = centers(cfg);
    let (r_min, r_max) = radius_window(cfg, &g, &zs);
    let radii = dyadic_radii(r_max, r_min);
    if radii.len() < 2 {
        return Err(Error::Resolution(format!(
            "trusted window [{r_min}, {r_max}] holds fewer than 2 dyadic radii"
        )));
    }
    let c0 = u.sup_norm() + cfg.evolution.rhs.abs();
    let mut checks = Vec::new();
    let mut files = Vec::new();

    // constant-fit profile: the C^alpha measurement
    let cprof = deviation_profile(u, &zs, &radii, FitMode::ConstantFit, sigma)?;
    let alpha = estimate_space_exponent(&cprof)?;
    checks.push(Check::holds("theta_monotone_constant_fit", cprof.theta_is_monotone()));

    let results = match cfg.scenario {
        ScenarioKind::CalphaCheck => {
            let mut wl1 = 0.0f64;
            for m in 0..g.n_levels() {
                wl1 = wl1.max(weighted_l1_norm(u, g.time(m), p.sigma0)?);
            }
            let aggregate = u.sup_norm() + wl1 + cfg.evolution.rhs.abs();
            let sem_alpha = alpha.exponent.min(1.0) - cfg.analysis.epsilon;
            let seminorm = if sem_alpha > 0.0 && !alpha.sentinel {
                let mut s = 0.0f64;
                for m in 0..g.n_levels() {
                    let t = g.time(m);
                    if t >= cfg.analysis.seminorm_interval.0 - 1e-12 && t <= cfg.analysis.seminorm_interval.1 + 1e-12 {
                        s = s.max(nonlocal_lab::regularity::holder_seminorm_space(
                            u,
                            t,
                            cfg.analysis.seminorm_radius,
                            sem_alpha,
                        )?);
                    }
                }
                Some(s)
            } else {
                None
            };
            if let Some(&m) = cfg.asserts.get("alpha_min") {
                checks.push(Check::at_least("alpha_min", alpha.exponent, m));
            }
            if let Some(&m) = cfg.asserts.get("constant_max") {
                checks.push(Check::at_most("constant_max", alpha.constant, m));
            }
            cprof.write_csv(std::io::BufWriter::new(std::fs::File::create({
                std::fs::create_dir_all(dir)?;
                let p = out_path(cfg, dir, "deviation.csv");
                files.push(p.clone());
                p
            })?))?;
            json!({
                "alpha_hat": alpha,
                "window": [r_min, r_max],
                "seminorm_exponent": sem_alpha,
                "seminorm": seminorm,
                "rhs_aggregate": {
                    "sup_norm": u.sup_norm(),
                    "weighted_l1": wl1,
                    "c0": cfg.evolution.rhs.abs(),
                    "total": aggregate,
                },
                "profile": cprof,
                "trajectory": traj.map(|t| t.metadata_json()).transpose()?,
            })
        }
        ScenarioKind::MainEstimate => {
            let target = cfg.analysis.beta_target.unwrap_or(sigma);
            let mode = cfg.analysis.mode.resolve(target);
            let spec = ReportSpec {
                sigma,
                mode,
                centers: zs.clone(),
                radii: radii.clone(),
                seminorm_radius: cfg.analysis.seminorm_radius,
                seminorm_interval: cfg.analysis.seminorm_interval,
                seminorm_exponent: None,
                epsilon: cfg.analysis.epsilon,
            };
            let rep = regularity_report(u, &spec)?;
            let a_hat = alpha.exponent.min(1.0);
            let floor = sigma.min(1.0 + a_hat) - cfg.analysis.epsilon;
            let env = envelope(&rep.profile.snapped_radii, &rep.profile.aggregate, cfg.analysis.envelope_exponent);
            checks.push(Check::holds("theta_monotone", rep.theta_monotone));
            checks.push(Check::holds("envelope_finite", env.is_finite()));
            if mode == FitMode::AffineFit {
                // least-squares optimality on every fitted cylinder of the smallest radius
                let mut worst = 0.0f64;
                for &(x, t) in &zs {
                    let q = nonlocal_lab::domain::cylinder(&[x], t, radii[radii.len() - 1], sigma)?;
                    let f = fit_plane(u, &q, FitMode::AffineFit)?;
                    let mc = residual_moments_check(&f, u);
                    worst = worst.max(mc.mean.abs()).max(mc.first_moment.abs());
                }
                checks.push(Check::at_most("moment_conditions", worst, nonlocal_lab::regularity::MOMENT_TOL));
            }
            let beta = rep.space.exponent;
            let gamma = rep.time.exponent;
            if let Some(&m) = cfg.asserts.get("beta_min") {
                checks.push(Check::at_least("beta_min", beta, m));
            }
            if let Some(&f) = cfg.asserts.get("beta_min_sigma_factor") {
                checks.push(Check::at_least("beta_min_sigma_factor", beta, f * sigma));
            }
            if let Some(&tol) = cfg.asserts.get("ratio_tol") {
                checks.push(Check::at_most("time_space_consistency", (gamma * sigma - beta).abs(), tol * beta));
            }
            if let Some(&m) = cfg.asserts.get("envelope_max") {
                checks.push(Check::at_most("envelope_max", env, m));
            }
            std::fs::create_dir_all(dir)?;
            let path = out_path(cfg, dir, "deviation.csv");
            rep.profile.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            files.push(path);
            json!({
                "regularity": rep,
                "alpha_hat": alpha,
                "target_floor": floor,
                "time_target": beta / sigma,
                "window": [r_min, r_max],
                "envelope_exponent": cfg.analysis.envelope_exponent,
                "envelope_constant": env,
                "c0": c0,
                "trajectory": traj.map(|t| t.metadata_json()).transpose()?,
            })
        }
        _ => unreachable!("analysis is only run for calpha_check and main_estimate"),
    };
    Ok((Report::new(cfg.scenario.as_str(), Some(cfg), checks, results), files))
}

/// Oscillation of `v` over `Q_1` anchored at `anchor`: nodes `|x| <= 1` and
/// levels with `anchor - 1 < t <= anchor`.
pub fn oscillation_q1(v: &SpaceTimeField, anchor: f64) -> Result<f64> {
    let g = v.grid();
    let tol = 1e-9 * g.level_dt().max(1e-300);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut n = 0usize;
    for m in 0..g.n_levels() {
        let t = g.time(m);
        if t > anchor - 1.0 + tol && t <= anchor + tol {
            for i in 0..g.len() {
                if g.node(i).abs() <= 1.0 + 1e-12 {
                    let x = v.value(i, m);
                    lo = lo.min(x);
                    hi = hi.max(x);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::Resolution(format!("no stored node lies in Q_1 anchored at {anchor}")));
    }
    Ok(hi - lo)
}

pub fn run_liouville(cfg: &ScenarioConfig, dir: &Path) -> Result<Outcome> {
    let lv = &cfg.liouville;
    let grid = cfg.grid.build()?;
    let sigma = cfg.params.sigma;
    let p = cfg.params.build()?;
    if grid.t0 != 0.0 {
        return Err(Error::Config("liouville runs start at grid.t0 = 0".into()));
    }
    if lv.anchor < 1.0 {
        return Err(Error::Config("liouville.anchor must be at least 1".into()));
    }
    let rho_max = lv.rhos.iter().copied().fold(1.0, f64::max);
    if grid.t_end < lv.anchor * rho_max.powf(sigma) * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "grid.t_end must reach anchor * rho_max^sigma = {}",
            lv.anchor * rho_max.powf(sigma)
        )));
    }
    let ext = cfg.exterior.build();
    let growth = ext.bound().growth_exponent();
    if growth >= p.sigma0 {
        return Err(Error::Divergence(format!(
            "exterior growth {growth} is not below sigma0 = {}",
            p.sigma0
        )));
    }
    let init = cfg.initial.as_ref().unwrap_or(&cfg.exterior);
    let pb = ParabolicProblem::new(build_operator(cfg)?, grid, ext)
        .with_initial(data_fn(init))
        .with_active_radius(grid.half_width)
        .with_safety(cfg.evolution.safety);
    let traj = evolve(&pb)?;
    let mut rows = Vec::new();
    let mut osc = Vec::new();
    for &rho in &lv.rhos {
        let v = parabolic_rescale(&traj.field, rho, lv.beta, sigma)?;
        let o = oscillation_q1(&v, lv.anchor)?;
        rows.push(vec![rho, lv.anchor * rho.powf(sigma), o]);
        osc.push(o);
    }
    let first = osc[0];
    let last = osc[osc.len() - 1];
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    let spread = osc.iter().map(|o| (o - first).abs()).fold(0.0, f64::max);
    let decreasing = osc.windows(2).all(|w| w[1] <= w[0]);
    let mut checks = vec![];
    if let Some(&m) = cfg.asserts.get("osc_ratio_max") {
        checks.push(Check::at_most("osc_ratio", ratio, m));
    }
    if let Some(&m) = cfg.asserts.get("osc_spread_max") {
        checks.push(Check::at_most("osc_spread", spread, m));
    }
    if cfg.asserts.get("decreasing").is_some_and(|&v| v > 0.0) {
        checks.push(Check::holds("osc_decreasing", decreasing));
    }
    let csv = out_path(cfg, dir, "oscillation.csv");
    write_table(&csv, &["rho", "t_anchor", "osc"], &rows)?;
    let results = json!({
        "beta": lv.beta,
        "anchor": lv.anchor,
        "rhos": lv.rhos,
        "oscillation": osc,
        "ratio_last_first": ratio,
        "spread": spread,
        "decreasing": decreasing,
        "trajectory": traj.metadata_json()?,
    });
    let report = Report::new(cfg.scenario.as_str(), Some(cfg), checks, results);
    finish(cfg, dir, report, vec![csv])
}

pub fn run_sigma2_limit(cfg: &ScenarioConfig, dir: &Path) -> Result<Outcome> {
    let grid = Grid::spatial(cfg.grid.half_width, cfg.grid.n_points, 0.0)?;
    let data = &cfg.exterior;
    if data.second_derivative(0.0).is_none() {
        return Err(Error::Config("sigma2_limit needs smooth exterior data".into()));
    }
    let ext = data.build();
    let u = SpaceTimeField::from_fn(grid, |x, t| ext.eval(x, t), ext.clone())?;
    let w = cfg.limit2.window;
    let nodes: Vec<usize> = (1..grid.n_points).filter(|&i| grid.node(i).abs() <= w + 1e-12).collect();
    if nodes.is_empty() {
        return Err(Error::Config("limit2.window holds no interior node".into()));
    }
    let range = nodes[0]..nodes[nodes.len() - 1] + 1;
    let mut errors = Vec::new();
    for &s in &cfg.limit2.sigmas {
        let p = nonlocal_lab::domain::EllipticityParams::one_d(s, 1.0, 1.0)?;
        let op = OperatorHandle::linear(make_power_kernel(&p, 1.0)?)
            .discretize(&grid, ext.bound(), TailQuadrature::default())?;
        let out = op.apply_snapshot(&u.snapshot(0), range.clone())?;
        let err = range
            .clone()
            .zip(&out)
            .map(|(i, v)| (v - p.c_n * data.second_derivative(grid.node(i)).unwrap_or(f64::NAN)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let decreasing = errors.windows(2).all(|e| e[1] < e[0]);
    let mut checks = Vec::new();
    if let Some(&m) = cfg.asserts.get("limit_max_error") {
        checks.push(Check::at_most("limit_error_last", errors[errors.len() - 1], m));
    }
    if let Some(&m) = cfg.asserts.get("max_error") {
        checks.push(Check::at_most("limit_error_all", errors.iter().copied().fold(0.0, f64::max), m));
    }
    if cfg.asserts.get("decreasing").is_some_and(|&v| v > 0.0) {
        checks.push(Check::holds("error_decreasing", decreasing));
    }
    let csv = out_path(cfg, dir, "limit2.csv");
    let rows: Vec<Vec<f64>> = cfg.limit2.sigmas.iter().zip(&errors).map(|(s, e)| vec![*s, *e]).collect();
    write_table(&csv, &["sigma", "max_error"], &rows)?;
    let results = json!({ "sigmas": cfg.limit2.sigmas, "errors": errors, "decreasing": decreasing, "window": w });
    finish(cfg, dir, Report::new(cfg.scenario.as_str(), Some(cfg), checks, results), vec![csv])
}

/// Six-mode seeded trigonometric field with its sup bound.
pub fn seeded_trig(seed: u64) -> (impl Fn(f64) -> f64 + Clone + Send + Sync + 'static, f64) {
    let mut rng = SplitMix64::stream(seed, "seeded-field");
    let modes: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (rng.uniform(-1.0, 1.0), rng.uniform(0.2, 4.0), rng.uniform(0.0, std::f64::consts::TAU)))
        .collect();
    let bound: f64 = modes.iter().map(|m| m.0.abs()).sum();
    (move |x: f64| modes.iter().map(|(a, k, p)| a * (k * x + p).cos()).sum::<f64>(), bound)
}

fn trig_field(g: Grid, seed: u64) -> Result<SpaceTimeField> {
    let (f, b) = seeded_trig(seed);
    let f2 = f.clone();
    SpaceTimeField::from_fn(g, move |x, _| f(x), Exterior::stationary(f2, BoundClass::Bounded { bound: b }))
}

/// Worst violation of `M-(u - v) <= I u - I v <= M+(u - v)`, reported as the
/// smallest slack (negative means violated).
pub fn sandwich_slack(
    params: &nonlocal_lab::domain::EllipticityParams,
    grid: Grid,
    families: usize,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let bound = BoundClass::Bounded { bound: 12.0 };
    let q = TailQuadrature::default();
    let plus = OperatorHandle::pucci_plus(params).discretize(&grid, bound, q)?;
    let minus = OperatorHandle::pucci_minus(params).discretize(&grid, bound, q)?;
    let nodes = 1..grid.n_points;
    let mut slack = f64::INFINITY;
    let mut fam_rng = SplitMix64::stream(seed, "sandwich-families");
    let ops: Vec<_> = (0..families)
        .map(|_| {
            let fam = IsaacsFamily::random(params, 2, 3, fam_rng.next_u64())?;
            OperatorHandle::isaacs(fam).discretize(&grid, bound, q)
        })
        .collect::<Result<_>>()?;
    let mut pair_rng = SplitMix64::stream(seed, "sandwich-pairs");
    for _ in 0..pairs {
        let (su, sv) = (pair_rng.next_u64(), pair_rng.next_u64());
        let u = trig_field(grid, su)?;
        let v = trig_field(grid, sv)?;
        let (fu, bu) = seeded_trig(su);
        let (fv, bv) = seeded_trig(sv);
        let diff = SpaceTimeField::from_fn(
            grid,
            |x, t| u.eval(x, t) - v.eval(x, t),
            Exterior::stationary(move |x| fu(x) - fv(x), BoundClass::Bounded { bound: bu + bv }),
        )?;
        // one far-field table per field, shared by every operator
        let geo = plus.tail();
        let sd = LatticeState::from_snapshot(geo, &diff.snapshot(0), nodes.clone())?;
        let su = LatticeState::from_snapshot(geo, &u.snapshot(0), nodes.clone())?;
        let sv = LatticeState::from_snapshot(geo, &v.snapshot(0), nodes.clone())?;
        let mp = plus.apply(&sd);
        let mm = minus.apply(&sd);
        for op in &ops {
            let iu = op.apply(&su);
            let iv = op.apply(&sv);
            for k in 0..iu.len() {
                let d = iu[k] - iv[k];
                slack = slack.min(d - mm[k]).min(mp[k] - d);
            }
        }
    }
    Ok(slack)
}

/// Max over checked nodes of `|I~ v(x') - (r^sigma / c) I w(x0 + r x')|` with
/// `v = (w(x0 + r .) - l(x0 + r .)) / c`, on nested grids.
pub fn rescale_relation_error(
    op: &OperatorHandle,
    w: &DataSpec,
    grid: Grid,
    x0: f64,
    r: f64,
    c: f64,
    l: Affine,
) -> Result<f64> {
    let sigma = op.params().sigma;
    let h = grid.dx();
    if (x0 / h - (x0 / h).round()).abs() > 1e-9 {
        return Err(Error::Config(format!("scaling.x0 = {x0} is not a lattice point")));
    }
    let nr = r.round();
    if !(nr >= 1.0 && (r - nr).abs() < 1e-12 && (nr as u64).is_power_of_two()) {
        return Err(Error::Config(format!("scaling.r = {r} must be a power of 2")));
    }
    let ls = grid.half_width / (2.0 * r);
    let ns = (2.0 * ls / (h / r)).round() as usize;
    if x0.abs() + r * ls > grid.half_width + 1e-12 {
        return Err(Error::Config("scaling.x0 too far out for the nested grid".into()));
    }
    let fine = Grid::spatial(ls, ns, 0.0)?;
    let wext = w.build();
    let wb = wext.bound();
    if !wb.is_bounded() {
        return Err(Error::Config("scaling check needs bounded base data".into()));
    }
    let wf = SpaceTimeField::from_fn(grid, |x, t| wext.eval(x, t), wext.clone())?;
    let coarse_op = op.discretize(&grid, wb, TailQuadrature::default())?;
    let wc = wext.clone();
    let v = move |x: f64| (wc.eval(x0 + r * x, 0.0) - l.eval(x0 + r * x)) / c;
    let m = ((wb.magnitude() + l.intercept.abs() + l.slope.abs() * x0.abs()).max(l.slope.abs() * r)) / c;
    let vext = Exterior::stationary(v.clone(), BoundClass::Growth { c: m, beta: 1.0 });
    let vf = SpaceTimeField::from_fn(fine, |x, _| v(x), vext.clone())?;
    let tilde = rescale_operator(op, &[x0], r, c, l)?;
    let top = tilde.discretize(&fine, vext.bound(), TailQuadrature::default())?;
    let lo = fine.index_of(-ls / 2.0).ok_or_else(|| Error::Resolution("fine grid misaligned".into()))?;
    let hi = fine.index_of(ls / 2.0).ok_or_else(|| Error::Resolution("fine grid misaligned".into()))?;
    let lhs = top.apply_snapshot(&vf.snapshot(0), lo..hi + 1)?;
    let factor = r.powf(sigma) / c;
    let mut worst = 0.0f64;
    for (q, i) in (lo..=hi).enumerate() {
        let j = grid
            .index_of(x0 + r * fine.node(i))
            .ok_or_else(|| Error::Resolution("grids are not nested".into()))?;
        let rhs = factor * coarse_op.apply_at(&wf.snapshot(0), j)?;
        worst = worst.max((lhs[q] - rhs).abs());
    }
    Ok(worst)
}

pub fn run_scaling_check(cfg: &ScenarioConfig, dir: &Path) -> Result<Outcome> {
    let sc = &cfg.scaling;
    let p = cfg.params.build()?;
    let grid = Grid::spatial(cfg.grid.half_width, cfg.grid.n_points, 0.0)?;
    let l = Affine::new(sc.slope, sc.intercept);
    let base = match &cfg.exterior {
        DataSpec::Zero => DataSpec::Gaussian { amplitude: 1.0, width: 1.0 },
        d => d.clone(),
    };
    let kernel = match cfg.operator.kernel {
        KernelChoice::Power => make_power_kernel(&p, cfg.operator.c)?,
        KernelChoice::Dyadic => make_dyadic_rough_kernel(&p, cfg.operator.kernel_seed)?,
    };
    let variants: Vec<(&str, OperatorHandle)> = vec![
        ("linear", OperatorHandle::linear(kernel)),
        ("pucci_plus", OperatorHandle::pucci_plus(&p)),
        ("pucci_minus", OperatorHandle::pucci_minus(&p)),
        (
            "isaacs",
            OperatorHandle::isaacs(IsaacsFamily::random(&p, cfg.operator.n_alpha, cfg.operator.n_beta, cfg.operator.family_seed)?),
        ),
    ];
    let mut errors = Vec::new();
    for (_, op) in &variants {
        errors.push(rescale_relation_error(op, &base, grid, sc.x0, sc.r, sc.c, l)?);
    }
    let sandwich_grid = Grid::spatial(2.0, 64, 0.0)?;
    let slack = if sc.pairs > 0 && sc.families > 0 {
        Some(sandwich_slack(&p, sandwich_grid, sc.families, sc.pairs, sc.field_seed)?)
    } else {
        None
    };
    let mut checks = Vec::new();
    if let Some(&tol) = cfg.asserts.get("relation_tol") {
        for ((name, _), e) in variants.iter().zip(&errors) {
            checks.push(Check::at_most(format!("relation_{name}"), *e, tol));
        }
    }
    if let (Some(&tol), Some(s)) = (cfg.asserts.get("sandwich_tol"), slack) {
        checks.push(Check::at_least("sandwich_slack", s, -tol));
    }
    let csv = out_path(cfg, dir, "scaling.csv");
    let rows: Vec<Vec<f64>> = errors.iter().enumerate().map(|(k, e)| vec![k as f64, *e]).collect();
    write_table(&csv, &["variant", "max_error"], &rows)?;
    let names: Vec<&str> = variants.iter().map(|v| v.0).collect();
    let results = json!({
        "variants": names,
        "relation_errors": errors,
        "sandwich_slack": slack,
        "sandwich_grid": sandwich_grid,
    });
    finish(cfg, dir, Report::new(cfg.scenario.as_str(), Some(cfg), checks, results), vec![csv])
}

