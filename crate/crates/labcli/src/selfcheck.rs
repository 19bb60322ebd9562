//! Small invariant suites run by `labcli selfcheck`.

use nonlocal_lab::domain::{cylinder, BoundClass, EllipticityParams, Exterior, Grid, SpaceTimeField};
use nonlocal_lab::evolution::{cfl_timestep, evolve, step, ParabolicProblem, StepState};
use nonlocal_lab::kernels::{make_dyadic_rough_kernel, TailQuadrature};
use nonlocal_lab::operators::{IsaacsFamily, OperatorHandle};
use nonlocal_lab::regularity::{deviation_profile, dyadic_radii, fit_plane, residual_moments_check, FitMode};
use nonlocal_lab::rng::SplitMix64;
use nonlocal_lab::{Error, Result};
use serde_json::json;

use crate::report::{Check, Report};
use crate::scenarios::{sandwich_slack, seeded_trig};

fn trig(g: Grid, seed: u64, sign: f64) -> Result<SpaceTimeField> {
    let (f, b) = seeded_trig(seed);
    let f2 = f.clone();
    SpaceTimeField::from_fn(
        g,
        move |x, _| sign * f(x),
        Exterior::stationary(move |x| sign * f2(x), BoundClass::Bounded { bound: b }),
    )
}

/// Duality, affine annihilation, the ellipticity sandwich, least-squares
/// optimality, profile monotonicity, the discrete maximum principle and CFL
/// refusal, on small grids.
pub fn selfcheck(seed: u64) -> Result<Report> {
    let mut rng = SplitMix64::stream(seed, "selfcheck");
    let g = Grid::spatial(2.0, 64, 0.0)?;
    let p = EllipticityParams::one_d(1.5, 0.5, 2.0)?;
    let q = TailQuadrature::default();
    let bound = BoundClass::Bounded { bound: 12.0 };
    let plus = OperatorHandle::pucci_plus(&p).discretize(&g, bound, q)?;
    let minus = OperatorHandle::pucci_minus(&p).discretize(&g, bound, q)?;
    let mut checks = Vec::new();

    let mut dual = 0.0f64;
    for _ in 0..10 {
        let s = rng.next_u64();
        let u = trig(g, s, 1.0)?;
        let nu = trig(g, s, -1.0)?;
        let a = plus.apply_snapshot(&nu.snapshot(0), 1..64)?;
        let b = minus.apply_snapshot(&u.snapshot(0), 1..64)?;
        dual = a.iter().zip(&b).map(|(x, y)| (x + y).abs()).fold(dual, f64::max);
    }
    checks.push(Check::at_most("duality", dual, 1e-12));

    let mut affine = 0.0f64;
    for _ in 0..5 {
        let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
        let ext = Exterior::affine(a, b);
        let u = SpaceTimeField::from_fn(g, |x, _| a * x + b, ext.clone())?;
        for h in [OperatorHandle::pucci_plus(&p), OperatorHandle::pucci_minus(&p)] {
            let op = h.discretize(&g, ext.bound(), q)?;
            let out = op.apply_snapshot(&u.snapshot(0), 1..64)?;
            affine = out.iter().fold(affine, |m, v| m.max(v.abs()));
        }
    }
    checks.push(Check::at_most("affine_annihilation", affine, 1e-10));

    let slack = sandwich_slack(&p, g, 2, 5, rng.next_u64())?;
    checks.push(Check::at_least("sandwich_slack", slack, -1e-9));

    let gt = Grid::new(2.0, 128, -1.0, 0.0, 512)?;
    let mut moments = 0.0f64;
    let mut monotone = true;
    for _ in 0..5 {
        let s = rng.next_u64();
        let (f, b) = seeded_trig(s);
        let f2 = f.clone();
        let u = SpaceTimeField::from_fn(
            gt,
            move |x, t| f(x) * (1.0 + 0.3 * t),
            Exterior::stationary(f2, BoundClass::Bounded { bound: b }),
        )?;
        let cyl = cylinder(&[rng.uniform(-0.5, 0.5)], -0.2, 0.25, 1.5)?;
        let fit = fit_plane(&u, &cyl, FitMode::AffineFit)?;
        let mc = residual_moments_check(&fit, &u);
        moments = moments.max(mc.mean.abs()).max(mc.first_moment.abs());
        let prof = deviation_profile(&u, &[(0.0, 0.0), (0.25, -0.25)], &dyadic_radii(0.5, 4.0 * gt.dx()), FitMode::AffineFit, 1.5)?;
        monotone &= prof.theta_is_monotone();
    }
    checks.push(Check::at_most("moment_conditions", moments, 1e-9));
    checks.push(Check::holds("theta_monotone", monotone));

    let ge = Grid::new(2.0, 64, -1.0, 0.0, 8)?;
    let mut violations = 0usize;
    for _ in 0..3 {
        let (s_data, s_fam) = (rng.next_u64(), rng.next_u64());
        let (f, b) = seeded_trig(s_data);
        let data = Exterior::stationary(f, BoundClass::Bounded { bound: b });
        let fam = IsaacsFamily::random(&p, 2, 2, s_fam)?;
        let traj = evolve(&ParabolicProblem::new(OperatorHandle::isaacs(fam), ge, data.clone()))?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..ge.len() {
            let v = data.eval(ge.node(i), -1.0);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for &v in traj.field.values() {
            if v > hi || v < lo {
                violations += 1;
            }
        }
    }
    checks.push(Check::at_most("max_principle_violations", violations as f64, 0.0));

    let k = make_dyadic_rough_kernel(&p, rng.next_u64())?;
    let pb = ParabolicProblem::new(OperatorHandle::linear(k), ge, Exterior::zero());
    let op = pb.discretize()?;
    let dt = cfl_timestep(&op, 1.0)?;
    let mut st = StepState::new(&pb, &op, vec![0.0; ge.len()], -1.0)?;
    let refused = matches!(step(&mut st, &pb, &op, 1.5 * dt), Err(Error::Cfl { .. }));
    checks.push(Check::holds("cfl_refusal", refused));

    Ok(Report::new("selfcheck", None, checks, json!({ "seed": seed })))
}
