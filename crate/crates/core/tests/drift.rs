mod common;

use std::f64::consts::PI;

use common::{circle, fd_closed_form_sh, o2, sphere, torus};
use frame_langevin::drift::{
    component_value, h_directional_derivative, h_directional_derivative_fd, ito_generator_apply, k_f_coefficients,
    limiting_coefficients, noise_induced_drift, AmbientFn, Component, Observable, PointCoeffs,
};
use frame_langevin::engine::{step_limit_system, IntegratorConfig, Scheme};
use frame_langevin::fields::Model;
use frame_langevin::geometry::{horizontal_field, ChartPoint, FramePoint, FrameTangent, Local, Sphere2};
use frame_langevin::linalg::{Mat, Vecn};
use frame_langevin::Error;
use nalgebra::SVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn sphere_points() -> Vec<FramePoint<2>> {
    vec![
        FramePoint::new(0, Vecn::<2>::new(0.3, -0.4), o2(0.2, false)),
        FramePoint::new(0, Vecn::<2>::new(-0.9, 0.5), o2(1.3, true)),
        FramePoint::new(1, Vecn::<2>::new(0.6, 0.7), o2(-0.8, false)),
        FramePoint::new(1, Vecn::<2>::new(-1.2, -0.3), o2(2.6, true)),
        FramePoint::new(0, Vecn::<2>::new(0.1, 1.1), o2(0.0, false)),
    ]
}

fn torus_points() -> Vec<FramePoint<2>> {
    vec![
        FramePoint::new(0, Vecn::<2>::new(1.0, 2.0), o2(0.2, false)),
        FramePoint::new(0, Vecn::<2>::new(2.5, 4.0), o2(1.3, true)),
        FramePoint::new(0, Vecn::<2>::new(4.0, 1.0), o2(-0.8, false)),
        FramePoint::new(0, Vecn::<2>::new(5.0, 3.0), o2(2.6, true)),
        FramePoint::new(0, Vecn::<2>::new(3.0, 5.5), o2(0.0, false)),
    ]
}

fn circle_points() -> Vec<FramePoint<1>> {
    [0.4, 1.5, 2.7, 3.9, 5.2]
        .iter()
        .enumerate()
        .map(|(i, x)| FramePoint::new(0, Vecn::<1>::new(*x), Mat::<1>::new(if i % 2 == 0 { 1.0 } else { -1.0 })))
        .collect()
}

#[test]
fn h_derivative_examples() {
    let bm = sphere("bm", &[]);
    for u in sphere_points() {
        for eta in 0..2 {
            for (r, c) in [(0, 0), (0, 1), (1, 1)] {
                assert_eq!(h_directional_derivative(&bm, Component::Sigma(r, c), &u, eta).unwrap(), 0.0);
            }
        }
    }
    let m = torus("scalar_drag_noise", &[("sigma0", 2.0), ("sigma_amp", 1.0)]);
    for x1 in [0.3, 1.7, 4.4] {
        let u = FramePoint::new(0, Vecn::<2>::new(x1, 0.9), Mat::<2>::identity());
        let d = h_directional_derivative(&m, Component::Sigma(0, 0), &u, 0).unwrap();
        assert!((d - x1.cos()).abs() < 1e-14);
    }
    assert!(matches!(h_directional_derivative(&m, Component::Sigma(2, 0), &torus_points()[0], 0), Err(Error::Unregistered(_))));
    assert!(matches!(h_directional_derivative(&m, Component::Force(0), &torus_points()[0], 5), Err(Error::Unregistered(_))));
}

#[test]
fn h_derivative_matches_finite_differences() {
    let models = [
        sphere("anisotropic_drag", &[("force_amp", 0.6)]),
        sphere("fd_particle", &[("force_amp", -0.4)]),
        sphere("scalar_drag_noise", &[("gamma_amp", 0.5), ("force_amp", 0.3)]),
    ];
    let mut comps = vec![Component::Force(0), Component::Force(1)];
    for r in 0..2 {
        for c in 0..2 {
            comps.push(Component::GammaInv(r, c));
            comps.push(Component::Gamma(r, c));
            comps.push(Component::Sigma(r, c));
            comps.push(Component::Observable(Observable::FrameEntry(r, c)));
        }
        comps.push(Component::Observable(Observable::Coord(r)));
        comps.push(Component::Observable(Observable::Ambient(AmbientFn::Stereo(r))));
    }
    comps.push(Component::Observable(Observable::Ambient(AmbientFn::Polar)));
    for m in &models {
        for u in sphere_points() {
            for &c in &comps {
                for eta in 0..2 {
                    let a = h_directional_derivative(m, c, &u, eta).unwrap();
                    let f = h_directional_derivative_fd(m, c, &u, eta, 1e-5).unwrap();
                    assert!((a - f).abs() < 1e-6, "{c:?} eta {eta} at {u:?}: {a} vs {f}");
                }
            }
        }
    }
}

/// H_mu[f] by a central difference along the straight line u + s H_mu(u).
fn h_fd<const N: usize, const K: usize>(m: &Model<N, K>, f: Observable, u: &FramePoint<N>, mu: usize, e: f64) -> f64 {
    let t = Local::new_unchecked(m.manifold.as_ref(), u).field_e(mu);
    let at = |s: f64| {
        let p = FramePoint { x: ChartPoint { chart: u.x.chart, coords: u.x.coords + t.dx * s }, h: u.h + t.dh * s };
        component_value(m, Component::Observable(f), &p).unwrap()
    };
    (at(e) - at(-e)) / (2.0 * e)
}

#[test]
fn k_f_matches_nested_finite_differences() {
    let m = sphere("anisotropic_drag", &[]);
    for f in [Observable::Coord(0), Observable::Coord(1), Observable::Ambient(AmbientFn::Polar)] {
        for u in sphere_points() {
            let k = k_f_coefficients(&m, &f, &u).unwrap();
            let e = 1e-4;
            for xi in 0..2 {
                let t = Local::new(m.manifold.as_ref(), &u).unwrap().field_e(xi);
                let g = |s: f64, nu: usize| {
                    let p = FramePoint { x: ChartPoint { chart: u.x.chart, coords: u.x.coords + t.dx * s }, h: u.h + t.dh * s };
                    (0..2)
                        .map(|mu| component_value(&m, Component::GammaInv(mu, nu), &p).unwrap() * h_fd(&m, f, &p, mu, e))
                        .sum::<f64>()
                };
                for nu in 0..2 {
                    let want = (g(e, nu) - g(-e, nu)) / (2.0 * e);
                    assert!((k[(nu, xi)] - want).abs() < 1e-5, "{f:?} K[{nu}{xi}] {} vs {want}", k[(nu, xi)]);
                }
            }
        }
    }
}

#[test]
fn k_f_examples() {
    let m = torus("bm", &[("gamma0", 2.5)]);
    for u in torus_points() {
        assert_eq!(k_f_coefficients(&m, &Observable::Coord(0), &u).unwrap(), Mat::<2>::zeros());
    }
    let c = 2.5;
    let m = sphere("bm", &[("gamma0", c)]);
    for u in sphere_points() {
        for f in [Observable::Coord(1), Observable::Ambient(AmbientFn::Polar)] {
            let k = k_f_coefficients(&m, &f, &u).unwrap();
            let l = Local::new(m.manifold.as_ref(), &u).unwrap();
            let hh = f.h2(&l);
            // K_{nu xi} = c^{-1} H_xi[H_nu[f]]
            assert!((k - hh.transpose() / c).norm() < 1e-12);
        }
    }
}

#[test]
fn bracket_examples() {
    let t = frame_langevin::geometry::Torus2::default();
    let l = Local::new(&t, &torus_points()[1]).unwrap();
    assert_eq!(l.bracket(0, 1).norm(), 0.0);
    let s = Sphere2::default();
    for u in sphere_points() {
        let l = Local::new(&s, &u).unwrap();
        let b = l.bracket(0, 1);
        assert!(b.dx.norm() <= 1e-8);
        // vertical part u xi with xi in o(2); |xi_12| is the Gauss curvature
        let xi = u.h.transpose() * b.dh;
        assert!((xi + xi.transpose()).norm() < 1e-10);
        assert!((xi[(0, 1)].abs() - 1.0).abs() < 1e-10, "{xi}");
        let r = l.bracket(1, 0);
        assert!((r + b).norm() < 1e-14);
    }
}

fn rk4_flow(s: &Sphere2, u: FramePoint<2>, v: Vecn<2>, t: f64) -> FramePoint<2> {
    let n = 20;
    let dt = t / n as f64;
    let f = |p: &FramePoint<2>| horizontal_field(s, p, &v).unwrap();
    let add = |p: &FramePoint<2>, k: &FrameTangent<2>, a: f64| FramePoint {
        x: ChartPoint { chart: p.x.chart, coords: p.x.coords + k.dx * a },
        h: p.h + k.dh * a,
    };
    let mut p = u;
    for _ in 0..n {
        let k1 = f(&p);
        let k2 = f(&add(&p, &k1, dt / 2.0));
        let k3 = f(&add(&p, &k2, dt / 2.0));
        let k4 = f(&add(&p, &k3, dt));
        p = add(&p, &(k1 + k2 * 2.0 + k3 * 2.0 + k4), dt / 6.0);
    }
    p
}

#[test]
fn bracket_matches_flow_commutator() {
    let s = Sphere2::default();
    let e1 = Vecn::<2>::new(1.0, 0.0);
    let e2 = Vecn::<2>::new(0.0, 1.0);
    for u in sphere_points() {
        let b = Local::new(&s, &u).unwrap().bracket(0, 1);
        let comm = |t: f64| {
            let p = rk4_flow(&s, u, e1, t);
            let p = rk4_flow(&s, p, e2, t);
            let p = rk4_flow(&s, p, e1, -t);
            let p = rk4_flow(&s, p, e2, -t);
            FrameTangent { dx: (p.x.coords - u.x.coords) / (t * t), dh: (p.h - u.h) / (t * t) }
        };
        // second order Richardson on the O(t) error
        let (a, c) = (comm(2e-3), comm(1e-3));
        let est = c * 2.0 - a;
        assert!((est - b).norm() < 1e-4, "{est:?} vs {b:?}");
    }
}

#[test]
fn noise_induced_drift_vanishes_for_constant_scalar_coefficients() {
    let m = sphere("bm", &[("gamma0", 1.7), ("sigma0", 0.6)]);
    for u in sphere_points() {
        let r = noise_induced_drift(&m, &u).unwrap();
        assert!(r.sh.norm() <= 1e-14 && r.sv.norm() <= 1e-14);
        let full = limiting_coefficients(&m, &u).unwrap();
        assert_eq!(full.lift.norm(), 0.0);
        let l = Local::new(m.manifold.as_ref(), &u).unwrap();
        for a in 0..2 {
            assert!((full.diffusion[a] - l.field_e(a) * (0.6 / 1.7)).norm() < 1e-14);
        }
    }
    let bm = sphere("bm", &[]);
    for u in sphere_points() {
        let full = limiting_coefficients(&bm, &u).unwrap();
        let l = Local::new(bm.manifold.as_ref(), &u).unwrap();
        for a in 0..2 {
            assert!((full.diffusion[a] - l.field_e(a)).norm() < 1e-15);
        }
    }
}

#[test]
fn lift_with_scalar_drag() {
    let m = sphere("scalar_drag_noise", &[("gamma0", 2.0), ("force_amp", 0.8)]);
    for u in sphere_points() {
        let r = limiting_coefficients(&m, &u).unwrap();
        let f = frame_langevin::fields::force_frame_components(&m, &u).unwrap();
        let want = horizontal_field(m.manifold.as_ref(), &u, &(f / 2.0)).unwrap();
        assert!((r.lift - want).norm() < 1e-14);
    }
}

#[test]
fn circle_scalar_closed_form_value() {
    let m = circle("scalar_drag_noise", &[("gamma0", 1.0), ("sigma0", 1.0), ("sigma_amp", 0.5)]);
    let u = FramePoint::new(0, Vecn::<1>::new(0.0), Mat::<1>::new(1.0));
    let r = noise_induced_drift(&m, &u).unwrap();
    assert!((r.sh.dx[0] + 0.25).abs() < 1e-14);
}

#[test]
fn scalar_drag_closed_form_on_grids() {
    // S^h = -1/2 sigma grad(sigma) / gamma^2 in chart coordinates, sigma = s0 + a sin x1, gamma = g0 + b sin x1
    let (s0, a, g0, b) = (1.0, 0.5, 1.3, 0.4);
    let p = [("sigma0", s0), ("sigma_amp", a), ("gamma0", g0), ("gamma_amp", b)];
    let cm = circle("scalar_drag_noise", &p);
    let tm = torus("scalar_drag_noise", &p);
    for i in 0..100 {
        let x1 = 2.0 * PI * (i as f64 + 0.5) / 100.0;
        let (sig, gam) = (s0 + a * x1.sin(), g0 + b * x1.sin());
        let want = -0.5 * sig * a * x1.cos() / (gam * gam);
        let h1 = Mat::<1>::new(if i % 2 == 0 { 1.0 } else { -1.0 });
        let r = noise_induced_drift(&cm, &FramePoint::new(0, Vecn::<1>::new(x1), h1)).unwrap();
        assert!((r.sh.dx[0] - want).abs() <= 1e-8);
        assert!(r.sv.norm() <= 1e-12);
        let x2 = 2.0 * PI * ((i * 37) % 100) as f64 / 100.0;
        let u = FramePoint::new(0, Vecn::<2>::new(x1, x2), o2(0.1 * i as f64, i % 3 == 0));
        let r = noise_induced_drift(&tm, &u).unwrap();
        assert!((r.sh.dx - Vecn::<2>::new(want, 0.0)).norm() <= 1e-8);
        assert!(r.sh.dh.norm() <= 1e-12);
        assert!(r.sv.norm() <= 1e-12);
    }
}

#[test]
fn scalar_drag_second_term_and_vertical_vanish() {
    let m = sphere("scalar_drag_noise", &[("gamma_amp", 0.6), ("sigma_amp", 0.4)]);
    for u in sphere_points() {
        let pc = PointCoeffs::new(&m, &u).unwrap();
        let (_, c2) = pc.sh_components();
        assert!(c2.norm() <= 1e-12);
        assert!(pc.sv().norm() <= 1e-12);
    }
}

#[test]
fn fluctuation_dissipation_closed_form_on_sphere() {
    let m = sphere("fd_particle", &[]);
    for u0 in sphere_points() {
        let u = FramePoint { x: u0.x, h: Mat::<2>::identity() };
        let r = noise_induced_drift(&m, &u).unwrap();
        let want = fd_closed_form_sh(&m, &u);
        assert!((r.sh - want).norm() < 1e-6, "{:?} vs {:?}", r.sh, want);
        assert!(r.sv.norm() <= 1e-12);
    }
}

#[test]
fn ito_examples() {
    let tb = torus("bm", &[]);
    for u in torus_points() {
        assert!(ito_generator_apply(&tb, &Observable::Coord(0), &u).unwrap().abs() < 1e-15);
    }
    let sb = sphere("bm", &[]);
    for u in sphere_points() {
        let p = sb.manifold.embed(u.x.chart, &u.x.coords);
        let theta = p[2].clamp(-1.0, 1.0).acos();
        let d = ito_generator_apply(&sb, &Observable::Ambient(AmbientFn::Polar), &u).unwrap();
        assert!((d - 0.5 / theta.tan()).abs() < 1e-10, "{d} vs {}", 0.5 / theta.tan());
        // stereographic coordinates of the chart at the north pole carry no drift
        if u.x.chart == 0 {
            for i in 0..2 {
                assert!(ito_generator_apply(&sb, &Observable::Coord(i), &u).unwrap().abs() < 1e-12);
            }
        }
    }
    // circle: Ito drift of x is F/gamma - sigma^2 gamma'/(2 gamma^3); the Stratonovich drift is F/gamma - sigma sigma'/(2 gamma^2)
    let (s0, a, g0, b, fa) = (1.0, 0.5, 1.4, 0.3, 0.7);
    let m = circle("scalar_drag_noise", &[("sigma0", s0), ("sigma_amp", a), ("gamma0", g0), ("gamma_amp", b), ("force_amp", fa)]);
    for u in circle_points() {
        let x = u.x.coords[0];
        let (sig, gam, f) = (s0 + a * x.sin(), g0 + b * x.sin(), fa * x.cos());
        let ito = f / gam - sig * sig * b * x.cos() / (2.0 * gam.powi(3));
        let d = ito_generator_apply(&m, &Observable::Coord(0), &u).unwrap();
        assert!((d - ito).abs() < 1e-12, "{d} vs {ito}");
        let r = limiting_coefficients(&m, &u).unwrap();
        let strat = f / gam - sig * a * x.cos() / (2.0 * gam * gam);
        assert!(((r.lift + r.sh).dx[0] - strat).abs() < 1e-12);
    }
}

fn strat_ito_check<const N: usize, const K: usize>(m: &Model<N, K>, pts: &[FramePoint<N>], obs: &[Observable], seed: u64) {
    let dt = 1e-4;
    let n = 40_000;
    let cfg = IntegratorConfig::new(Scheme::Heun, dt, 1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for u in pts {
        let rep = limiting_coefficients(m, u).unwrap();
        let l = Local::new(m.manifold.as_ref(), u).unwrap();
        let mut ys: Vec<Vec<f64>> = vec![Vec::with_capacity(n); obs.len()];
        for _ in 0..n {
            let dw = SVector::<f64, K>::from_fn(|_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * dt.sqrt()
            });
            let u1 = step_limit_system(m, u, &dw, &cfg).unwrap();
            assert_eq!(u1.x.chart, u.x.chart);
            let l1 = Local::new(m.manifold.as_ref(), &u1).unwrap();
            for (k, f) in obs.iter().enumerate() {
                let mut y = f.value(&l1) - f.value(&l);
                for a in 0..K {
                    y -= f.diff(&l, &rep.diffusion[a]) * dw[a];
                }
                ys[k].push(y / dt);
            }
        }
        for (k, f) in obs.iter().enumerate() {
            let (mean, se) = frame_langevin::harness::mean_se(&ys[k]);
            let want = ito_generator_apply(m, f, u).unwrap();
            assert!((mean - want).abs() <= 3.0 * se + 1e-3, "{f:?} at {u:?}: {mean} +- {se} vs {want}");
        }
    }
}

#[test]
fn stratonovich_ito_consistency() {
    let obs2 = [
        Observable::Coord(0),
        Observable::Coord(1),
        Observable::FrameEntry(0, 0),
        Observable::FrameEntry(1, 0),
        Observable::FrameEntry(0, 1),
    ];
    strat_ito_check(&sphere("anisotropic_drag", &[("force_amp", 0.5)]), &sphere_points(), &obs2, 1);
    strat_ito_check(&torus("scalar_drag_noise", &[("gamma_amp", 0.4), ("force_amp", 0.3)]), &torus_points(), &obs2, 2);
    strat_ito_check(
        &circle("scalar_drag_noise", &[("gamma_amp", 0.3), ("force_amp", 0.5)]),
        &circle_points(),
        &[Observable::Coord(0), Observable::FrameEntry(0, 0)],
        3,
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn report_equivariance(c in 0usize..2, r in 0.0f64..2.5, a in 0.0f64..std::f64::consts::TAU, t in 0.0f64..std::f64::consts::TAU, refl in any::<bool>(), gt in 0.0f64..std::f64::consts::TAU, grefl in any::<bool>()) {
        let u = FramePoint::new(c, Vecn::<2>::new(r * a.cos(), r * a.sin()), o2(t, refl));
        let g = o2(gt, grefl);
        for m in [sphere("anisotropic_drag", &[("force_amp", 0.5)]), sphere("fd_particle", &[("force_amp", 0.2)])] {
            let base = limiting_coefficients(&m, &u).unwrap();
            let moved = limiting_coefficients(&m, &u.right_mul(&g)).unwrap();
            prop_assert!((moved.lift - base.lift.right_mul(&g)).norm() <= 1e-10);
            prop_assert!((moved.sh - base.sh.right_mul(&g)).norm() <= 1e-10);
            prop_assert!((moved.sv - base.sv.right_mul(&g)).norm() <= 1e-10);
            for al in 0..2 {
                let want = base.diffusion[0].right_mul(&g) * g[(0, al)] + base.diffusion[1].right_mul(&g) * g[(1, al)];
                prop_assert!((moved.diffusion[al] - want).norm() <= 1e-10);
            }
            prop_assert!(base.sv.dx.norm() <= 1e-10);
        }
    }
}
