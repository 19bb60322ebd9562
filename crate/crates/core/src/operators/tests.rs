use super::*;
use crate::domain::{Exterior, SpaceTimeField};
use crate::kernels::{discretize_kernel_with, make_dyadic_rough_kernel, make_power_kernel};
use crate::quadrature::adaptive;

/// `C(sigma) = int (1 - cos y) (2 - sigma) |y|^(-1 - sigma) dy`: power series
/// on `[0, 1]`, adaptive quadrature over `[1, A]`, an asymptotic series beyond.
fn c_sigma(sigma: f64) -> f64 {
    // int_0^1 (1 - cos y) y^(-1-s) dy = sum_k (-1)^(k+1) / ((2k)! (2k - s))
    let mut s = 0.0;
    let mut fact = 1.0;
    for k in 1..20 {
        fact *= (2 * k - 1) as f64 * (2 * k) as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        s += sign / (fact * (2.0 * k as f64 - sigma));
    }
    let f = |y: f64| 2.0 * (0.5 * y).sin().powi(2) * y.powf(-1.0 - sigma);
    let periods = 200;
    let big_a = periods as f64 * std::f64::consts::TAU;
    let mut a = 1.0;
    for k in 1..=periods {
        let b = k as f64 * std::f64::consts::TAU;
        let scale = crate::quadrature::gl4(&f, a, b).abs();
        s += adaptive(&f, a, b, 1e-13 * scale).unwrap();
        a = b;
    }
    let p = 1.0 + sigma;
    // int_A^inf cos(y) y^-p dy with sin A = 0, cos A = 1
    let mut cos_tail = 0.0;
    let mut coef = p;
    let mut pow = p + 1.0;
    for _ in 0..6 {
        cos_tail += coef * big_a.powf(-pow);
        coef *= -pow * (pow + 1.0);
        pow += 2.0;
    }
    s += big_a.powf(1.0 - p) / (p - 1.0) - cos_tail;
    2.0 * (2.0 - sigma) * s
}

fn unit_kernel(sigma: f64) -> Kernel {
    make_power_kernel(&EllipticityParams::one_d(sigma, 1.0, 1.0).unwrap(), 1.0).unwrap()
}

fn cos_field(g: Grid) -> SpaceTimeField {
    SpaceTimeField::from_fn(
        g,
        |x, _| x.cos(),
        Exterior::stationary(f64::cos, BoundClass::Bounded { bound: 1.0 }),
    )
    .unwrap()
}

fn seeded_field(g: Grid, seed: u64) -> SpaceTimeField {
    let mut rng = SplitMix64::stream(seed, "test-field");
    let amps: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (rng.uniform(-1.0, 1.0), rng.uniform(0.2, 4.0), rng.uniform(0.0, 6.3)))
        .collect();
    let total: f64 = amps.iter().map(|a| a.0.abs()).sum();
    let f = move |x: f64| amps.iter().map(|(a, k, p)| a * (k * x + p).cos()).sum::<f64>();
    let f2 = f.clone();
    SpaceTimeField::from_fn(
        g,
        move |x, _| f(x),
        Exterior::stationary(f2, BoundClass::Bounded { bound: total }),
    )
    .unwrap()
}

#[test]
fn oracle_matches_known_value_at_one() {
    assert!((c_sigma(1.0) - std::f64::consts::PI).abs() < 1e-9, "{}", c_sigma(1.0));
}

#[test]
fn second_difference_examples() {
    let g = Grid::spatial(4.0, 64, 0.0).unwrap();
    let sq = SpaceTimeField::from_fn(g, |x, _| x * x, Exterior::stationary(|x| x * x, BoundClass::Growth { c: 1.0, beta: 2.0 })).unwrap();
    let s = sq.snapshot(0);
    assert!((second_difference(&s, 0.5, 0.75) - 0.5625).abs() < 1e-12);
    assert!((second_difference(&s, 3.5, 1.5) - 2.25).abs() < 1e-12);
    let af = SpaceTimeField::from_fn(g, |x, _| 2.0 * x - 1.0, Exterior::affine(2.0, -1.0)).unwrap();
    assert!(second_difference(&af.snapshot(0), 1.0, 0.3).abs() < 1e-14);
    let ab = SpaceTimeField::from_fn(g, |x, _| x.abs(), Exterior::stationary(f64::abs, BoundClass::Growth { c: 1.0, beta: 1.0 })).unwrap();
    assert!((second_difference(&ab.snapshot(0), 0.0, 0.625) - 0.625).abs() < 1e-14);
}

#[test]
fn constants_are_annihilated() {
    let g = Grid::spatial(2.0, 128, 0.0).unwrap();
    let u = SpaceTimeField::from_fn(g, |_, _| 3.7, Exterior::constant(3.7)).unwrap();
    let k = make_dyadic_rough_kernel(&EllipticityParams::one_d(0.7, 0.5, 2.0).unwrap(), 3).unwrap();
    let dk = discretize_kernel_with(&k, &g, BoundClass::Bounded { bound: 3.7 }, TailQuadrature::default()).unwrap();
    for i in [1, 40, 64, 127] {
        assert!(apply_linear(&dk, &u.snapshot(0), i).unwrap().abs() < 1e-12);
    }
    assert!(apply_linear(&dk, &u.snapshot(0), 0).is_err());
    assert!(apply_linear(&dk, &u.snapshot(0), 128).is_err());
}

#[test]
fn cosine_at_order_one() {
    let g = Grid::spatial(8.0, 1024, 0.0).unwrap();
    let u = cos_field(g);
    let k = unit_kernel(1.0);
    let dk = discretize_kernel_with(&k, &g, BoundClass::Bounded { bound: 1.0 }, TailQuadrature::fine()).unwrap();
    let v = apply_linear(&dk, &u.snapshot(0), 512).unwrap();
    assert!((v + std::f64::consts::PI).abs() < 1e-3, "{v}");
}

#[test]
fn cosine_converges_with_order_at_least_one() {
    for &sigma in &[0.5, 1.0, 1.5] {
        let oracle = -c_sigma(sigma);
        let mut errs = Vec::new();
        for &n in &[128usize, 256, 512] {
            let g = Grid::spatial(4.0, n, 0.0).unwrap();
            let dk = discretize_kernel_with(&unit_kernel(sigma), &g, BoundClass::Bounded { bound: 1.0 }, TailQuadrature::fine()).unwrap();
            let v = apply_linear(&dk, &cos_field(g).snapshot(0), n / 2).unwrap();
            errs.push((v - oracle).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.0 || w[1] < 1e-8, "sigma {sigma}: {errs:?}");
        }
    }
}

#[test]
fn affine_data_is_annihilated() {
    let g = Grid::spatial(2.0, 256, 0.0).unwrap();
    let p = EllipticityParams::one_d(1.5, 0.5, 2.0).unwrap();
    let u = SpaceTimeField::from_fn(g, |x, _| -1.3 * x + 0.4, Exterior::affine(-1.3, 0.4)).unwrap();
    let bound = u.exterior().bound();
    for h in [
        OperatorHandle::linear(make_dyadic_rough_kernel(&p, 8).unwrap()),
        OperatorHandle::pucci_plus(&p),
        OperatorHandle::pucci_minus(&p),
    ] {
        let op = h.discretize(&g, bound, TailQuadrature::default()).unwrap();
        let out = op.apply_snapshot(&u.snapshot(0), 1..256).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-10), "{:?}", h.kind());
    }
}

#[test]
fn extremal_value_on_cosine() {
    let g = Grid::spatial(8.0, 1024, 0.0).unwrap();
    let p = EllipticityParams::one_d(1.0, 1.0, 2.0).unwrap();
    let op = OperatorHandle::pucci_plus(&p)
        .discretize(&g, BoundClass::Bounded { bound: 1.0 }, TailQuadrature::fine())
        .unwrap();
    let v = op.apply_at(&cos_field(g).snapshot(0), 512).unwrap();
    assert!((v + std::f64::consts::PI).abs() < 1e-3, "{v}");
}

#[test]
fn duality_and_homogeneity_are_exact() {
    let g = Grid::spatial(2.0, 128, 0.0).unwrap();
    let p = EllipticityParams::one_d(1.2, 0.4, 1.9).unwrap();
    let bound = BoundClass::Bounded { bound: 12.0 };
    let plus = OperatorHandle::pucci_plus(&p).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let minus = OperatorHandle::pucci_minus(&p).discretize(&g, bound, TailQuadrature::default()).unwrap();
    for seed in 0..5 {
        let u = seeded_field(g, seed);
        let neg = SpaceTimeField::from_fn(g, |x, t| -u.eval(x, t), {
            let u2 = u.clone();
            Exterior::stationary(move |x| -u2.eval(x, 0.0), u.exterior().bound())
        })
        .unwrap();
        let a = plus.apply_snapshot(&neg.snapshot(0), 1..128).unwrap();
        let b = minus.apply_snapshot(&u.snapshot(0), 1..128).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
        let twice = SpaceTimeField::from_fn(g, |x, t| 2.0 * u.eval(x, t), {
            let u2 = u.clone();
            Exterior::stationary(move |x| 2.0 * u2.eval(x, 0.0), u.exterior().bound())
        })
        .unwrap();
        let c = plus.apply_snapshot(&twice.snapshot(0), 1..128).unwrap();
        let d = plus.apply_snapshot(&u.snapshot(0), 1..128).unwrap();
        for (x, y) in c.iter().zip(&d) {
            assert_eq!(*x, 2.0 * *y);
        }
    }
}

#[test]
fn equal_ellipticity_collapses_to_linear() {
    let g = Grid::spatial(2.0, 128, 0.0).unwrap();
    let p = EllipticityParams::one_d(0.9, 1.4, 1.4).unwrap();
    let bound = BoundClass::Bounded { bound: 12.0 };
    let lin = OperatorHandle::linear(make_power_kernel(&p, 1.4).unwrap())
        .discretize(&g, bound, TailQuadrature::default())
        .unwrap();
    let plus = OperatorHandle::pucci_plus(&p).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let minus = OperatorHandle::pucci_minus(&p).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let u = seeded_field(g, 11);
    let l = lin.apply_snapshot(&u.snapshot(0), 1..128).unwrap();
    let a = plus.apply_snapshot(&u.snapshot(0), 1..128).unwrap();
    let b = minus.apply_snapshot(&u.snapshot(0), 1..128).unwrap();
    for i in 0..l.len() {
        assert!((l[i] - a[i]).abs() <= 1e-12 * l[i].abs().max(1.0));
        assert!((l[i] - b[i]).abs() <= 1e-12 * l[i].abs().max(1.0));
    }
}

#[test]
fn isaacs_family_basics() {
    let g = Grid::spatial(2.0, 64, 0.0).unwrap();
    let p = EllipticityParams::one_d(1.5, 0.5, 2.0).unwrap();
    let bound = BoundClass::Bounded { bound: 12.0 };
    let k = make_dyadic_rough_kernel(&p, 5).unwrap();
    let single = OperatorHandle::isaacs(IsaacsFamily::single(k.clone()))
        .discretize(&g, bound, TailQuadrature::default())
        .unwrap();
    let lin = OperatorHandle::linear(k).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let u = seeded_field(g, 2);
    assert_eq!(
        single.apply_snapshot(&u.snapshot(0), 1..64).unwrap(),
        lin.apply_snapshot(&u.snapshot(0), 1..64).unwrap()
    );
    let fam = IsaacsFamily::random(&p, 3, 2, 99).unwrap();
    assert_eq!(fam.inf_sup_constants(), 0.0);
    let op = OperatorHandle::isaacs(fam).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let zero = SpaceTimeField::from_fn(g, |_, _| 0.0, Exterior::zero()).unwrap();
    let z = op.apply_snapshot(&zero.snapshot(0), 1..64).unwrap();
    assert!(z.iter().all(|&v| v == 0.0));
    assert!(IsaacsFamily::new(vec![vec![]], vec![vec![]]).is_err());
}

#[test]
fn ellipticity_sandwich_on_random_pairs() {
    let g = Grid::spatial(2.0, 64, 0.0).unwrap();
    let p = EllipticityParams::one_d(1.1, 0.5, 2.0).unwrap();
    let bound = BoundClass::Bounded { bound: 12.0 };
    let fam = IsaacsFamily::random(&p, 2, 3, 4).unwrap();
    let i_op = OperatorHandle::isaacs(fam).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let plus = OperatorHandle::pucci_plus(&p).discretize(&g, bound, TailQuadrature::default()).unwrap();
    let minus = OperatorHandle::pucci_minus(&p).discretize(&g, bound, TailQuadrature::default()).unwrap();
    for seed in 0..6 {
        let u = seeded_field(g, 2 * seed);
        let v = seeded_field(g, 2 * seed + 1);
        let (u2, v2) = (u.clone(), v.clone());
        let diff = SpaceTimeField::from_fn(g, |x, t| u.eval(x, t) - v.eval(x, t), Exterior::stationary(move |x| u2.eval(x, 0.0) - v2.eval(x, 0.0), BoundClass::Bounded { bound: 12.0 })).unwrap();
        let iu = i_op.apply_snapshot(&u.snapshot(0), 1..64).unwrap();
        let iv = i_op.apply_snapshot(&v.snapshot(0), 1..64).unwrap();
        let mp = plus.apply_snapshot(&diff.snapshot(0), 1..64).unwrap();
        let mm = minus.apply_snapshot(&diff.snapshot(0), 1..64).unwrap();
        for i in 0..iu.len() {
            let d = iu[i] - iv[i];
            assert!(mm[i] - d <= 1e-9 && d - mp[i] <= 1e-9);
        }
    }
}

#[test]
fn monotone_dominance_at_a_touching_point() {
    let g = Grid::spatial(2.0, 64, 0.0).unwrap();
    let p = EllipticityParams::one_d(0.8, 0.5, 2.0).unwrap();
    let bound = BoundClass::Bounded { bound: 12.0 };
    let u = seeded_field(g, 21);
    let bump = |x: f64| 0.3 * (x - 0.25).powi(2) / (1.0 + x * x);
    let (u2, u3) = (u.clone(), u.clone());
    let v = SpaceTimeField::from_fn(g, move |x, t| u2.eval(x, t) + bump(x), Exterior::stationary(move |x| u3.eval(x, 0.0) + bump(x), BoundClass::Bounded { bound: 12.0 })).unwrap();
    let i = g.index_of(0.25).unwrap();
    for h in [
        OperatorHandle::linear(make_dyadic_rough_kernel(&p, 1).unwrap()),
        OperatorHandle::pucci_plus(&p),
        OperatorHandle::pucci_minus(&p),
        OperatorHandle::isaacs(IsaacsFamily::random(&p, 2, 2, 3).unwrap()),
    ] {
        let op = h.discretize(&g, bound, TailQuadrature::default()).unwrap();
        assert!(op.apply_at(&u.snapshot(0), i).unwrap() <= op.apply_at(&v.snapshot(0), i).unwrap());
    }
}

#[test]
fn lattice_shift_commutes() {
    let g = Grid::spatial(2.0, 128, 0.0).unwrap();
    let p = EllipticityParams::one_d(1.3, 0.5, 2.0).unwrap();
    let h = g.dx();
    let f = |x: f64| (1.3 * x).sin() + 0.5 * (0.4 * x).cos();
    let a = SpaceTimeField::from_fn(g, |x, _| f(x), Exterior::stationary(f, BoundClass::Bounded { bound: 1.5 })).unwrap();
    let b = SpaceTimeField::from_fn(g, |x, _| f(x + h), Exterior::stationary(move |x| f(x + h), BoundClass::Bounded { bound: 1.5 })).unwrap();
    let op = OperatorHandle::pucci_plus(&p).discretize(&g, BoundClass::Bounded { bound: 1.5 }, TailQuadrature::default()).unwrap();
    for i in [10, 64, 100] {
        let va = op.apply_at(&a.snapshot(0), i + 1).unwrap();
        let vb = op.apply_at(&b.snapshot(0), i).unwrap();
        assert!((va - vb).abs() < 1e-12, "{va} {vb}");
    }
}

#[test]
fn second_order_limit_on_gaussian() {
    let g = Grid::spatial(4.0, 1024, 0.0).unwrap();
    let gauss = |x: f64| (-x * x).exp();
    let u = SpaceTimeField::from_fn(g, |x, _| gauss(x), Exterior::stationary(gauss, BoundClass::Bounded { bound: 1.0 })).unwrap();
    let mut prev = f64::INFINITY;
    let ia = g.index_of(-1.0).unwrap();
    let ib = g.index_of(1.0).unwrap();
    for &s in &[1.9, 1.99, 1.999] {
        let dk = discretize_kernel_with(&unit_kernel(s), &g, BoundClass::Bounded { bound: 1.0 }, TailQuadrature::default()).unwrap();
        let op = DiscreteOperator::on_stencil(&OperatorHandle::linear(unit_kernel(s)), &g, dk.stencil.clone()).unwrap();
        let out = op.apply_snapshot(&u.snapshot(0), ia..ib + 1).unwrap();
        let err = (ia..=ib)
            .map(|i| {
                let x = g.node(i);
                (out[i - ia] - (4.0 * x * x - 2.0) * gauss(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < prev, "{s}: {err} vs {prev}");
        prev = err;
    }
    assert!(prev < 1e-2, "{prev}");
}

#[test]
fn rescaled_linear_operator_relation() {
    // nested grids: x0 + r x' lands on the coarse-scale lattice
    let (r, c) = (2.0, 3.0);
    let l = Affine::new(0.3, 0.7);
    let x0 = 0.5;
    let p = EllipticityParams::one_d(1.5, 1.0, 1.0).unwrap();
    let k = make_power_kernel(&p, 1.0).unwrap();
    let w = |x: f64| (-x * x).exp();
    let g = Grid::spatial(4.0, 1024, 0.0).unwrap();
    let wf = SpaceTimeField::from_fn(g, |x, _| w(x), Exterior::stationary(w, BoundClass::Bounded { bound: 1.0 })).unwrap();
    let op = OperatorHandle::linear(k.clone()).discretize(&g, BoundClass::Bounded { bound: 1.0 }, TailQuadrature::default()).unwrap();
    let gs = Grid::spatial(1.0, 512, 0.0).unwrap();
    let v = move |x: f64| (w(x0 + r * x) - l.eval(x0 + r * x)) / c;
    let vf = SpaceTimeField::from_fn(gs, |x, _| v(x), Exterior::stationary(v, BoundClass::Growth { c: 1.0, beta: 1.0 })).unwrap();
    let tilde = rescale_operator(&OperatorHandle::linear(k), &[x0], r, c, l).unwrap();
    let top = tilde.discretize(&gs, vf.exterior().bound(), TailQuadrature::default()).unwrap();
    let lhs = top.apply_snapshot(&vf.snapshot(0), 128..385).unwrap();
    let mut worst = 0.0f64;
    for (q, i) in (128..385).enumerate() {
        let x = x0 + r * gs.node(i);
        let j = g.index_of(x).unwrap();
        let rhs = r.powf(1.5) / c * op.apply_at(&wf.snapshot(0), j).unwrap();
        worst = worst.max((lhs[q] - rhs).abs());
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn rescale_identity_and_zero() {
    let p = EllipticityParams::one_d(1.5, 0.5, 2.0).unwrap();
    let fam = IsaacsFamily::random(&p, 2, 2, 1).unwrap();
    let h = OperatorHandle::isaacs(fam);
    let same = rescale_operator(&h, &[0.0], 1.0, 1.0, Affine::default()).unwrap();
    let g = Grid::spatial(2.0, 64, 0.0).unwrap();
    let b = BoundClass::Bounded { bound: 12.0 };
    let u = seeded_field(g, 5);
    let a1 = h.discretize(&g, b, TailQuadrature::default()).unwrap().apply_snapshot(&u.snapshot(0), 1..64).unwrap();
    let a2 = same.discretize(&g, b, TailQuadrature::default()).unwrap().apply_snapshot(&u.snapshot(0), 1..64).unwrap();
    assert_eq!(a1, a2);
    let t = rescale_operator(&h, &[0.2], 2.0, 3.0, Affine::new(1.0, 1.0)).unwrap();
    let zero = SpaceTimeField::from_fn(g, |_, _| 0.0, Exterior::zero()).unwrap();
    let z = t.discretize(&g, b, TailQuadrature::default()).unwrap().apply_snapshot(&zero.snapshot(0), 1..64).unwrap();
    assert!(z.iter().all(|&v| v == 0.0));
    assert!(rescale_operator(&h, &[0.0], 0.0, 1.0, Affine::default()).is_err());
    assert!(rescale_operator(&h, &[0.0], 1.0, -1.0, Affine::default()).is_err());
}

#[test]
fn increment_quotient_examples() {
    let g = Grid::spatial(2.0, 64, 0.0).unwrap();
    let h = 4.0 * g.dx();
    let af = SpaceTimeField::from_fn(g, |x, _| 1.7 * x + 0.2, Exterior::affine(1.7, 0.2)).unwrap();
    let q = increment_quotient(&af, -h, 1.0).unwrap();
    assert!(q.values().iter().all(|v| (v + 1.7).abs() < 1e-12));
    assert!((q.eval(5.0, 0.0) + 1.7).abs() < 1e-12);
    let sq = SpaceTimeField::from_fn(g, |x, _| x * x, Exterior::stationary(|x| x * x, BoundClass::Growth { c: 1.0, beta: 2.0 })).unwrap();
    let q2 = increment_quotient(&sq, h, 1.0).unwrap();
    for i in 0..g.len() {
        let x = g.node(i);
        assert!((q2.value(i, 0) - (2.0 * x * h + h * h) / h).abs() < 1e-12);
    }
    let c = SpaceTimeField::from_fn(g, |_, _| 2.0, Exterior::constant(2.0)).unwrap();
    assert!(increment_quotient(&c, h, 0.3).unwrap().values().iter().all(|&v| v == 0.0));
    assert!(increment_quotient(&c, 0.0, 1.0).is_err());
    assert!(increment_quotient(&c, 0.3 * g.dx(), 1.0).is_err());
}

#[test]
fn parabolic_rescale_examples() {
    let g = Grid::new(4.0, 64, -4.0, 0.0, 16).unwrap();
    let lin = SpaceTimeField::from_fn(g, |x, _| x, Exterior::new(std::sync::Arc::new(|x, _| x), BoundClass::Growth { c: 1.0, beta: 1.0 })).unwrap();
    let same = parabolic_rescale(&lin, 1.0, 1.0, 1.5).unwrap();
    assert_eq!(same.values(), lin.values());
    let v = parabolic_rescale(&lin, 2.0, 1.0, 1.5).unwrap();
    for m in 0..v.n_levels() {
        for i in 0..v.grid().len() {
            assert!((v.value(i, m) - v.grid().node(i)).abs() < 1e-14);
        }
    }
    assert!((v.eval(3.0, -0.1) - 3.0).abs() < 1e-12);
    assert!(parabolic_rescale(&lin, 0.5, 1.0, 1.5).is_err());
    // bounded data keeps its growth control after rescaling
    let b = SpaceTimeField::from_fn(g, |x, t| (3.0 * x + t).sin(), Exterior::new(std::sync::Arc::new(|x: f64, t: f64| (3.0 * x + t).sin()), BoundClass::Bounded { bound: 1.0 })).unwrap();
    let vb = parabolic_rescale_onto(&b, 2.0, 0.5, 1.0, Grid::new(2.0, 64, -2.0, 0.0, 8).unwrap()).unwrap();
    let sup = vb.sup_norm();
    assert!(sup <= 2f64.powf(0.5) * 1.0 + 1e-12, "{sup}");
}
