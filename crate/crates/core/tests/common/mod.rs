#![allow(dead_code)]

use std::collections::BTreeMap;

use std::f64::consts::PI;

use frame_langevin::fields::{preset, AnyModel, Model};
use frame_langevin::geometry::{frame_embedding, horizontal_field, transport, Amb, FramePoint, FrameTangent, Local, Manifold, Sphere2};
use frame_langevin::linalg::{Mat, Vecn};
use nalgebra::{DMatrix, Vector3};

/// Adaptive Simpson on a vector-valued integrand (max-norm error control).
pub fn simpson_vec(f: &dyn Fn(f64) -> Vec<f64>, a: f64, b: f64, tol: f64) -> Vec<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson_rule(a, b, &fa, &fm, &fb);
    recurse(f, a, b, &fa, &fm, &fb, &whole, tol, 50)
}

fn simpson_rule(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    (0..fa.len()).map(|i| (b - a) / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i])).collect()
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> Vec<f64>,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: u32,
) -> Vec<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_rule(a, m, fa, &flm, fm);
    let right = simpson_rule(m, b, fm, &frm, fb);
    let err = (0..fa.len()).map(|i| (left[i] + right[i] - whole[i]).abs()).fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol {
        return (0..fa.len()).map(|i| left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0).collect();
    }
    let l = recurse(f, a, m, fa, &flm, fm, &left, tol / 2.0, depth - 1);
    let r = recurse(f, m, b, fm, &frm, fb, &right, tol / 2.0, depth - 1);
    l.iter().zip(&r).map(|(x, y)| x + y).collect()
}

/// exp(A) from nalgebra's own implementation, as an independent oracle.
pub fn expm_oracle<const N: usize>(a: &Mat<N>) -> Mat<N> {
    let d = DMatrix::from_iterator(N, N, a.iter().cloned()).exp();
    Mat::<N>::from_iterator(d.iter().cloned())
}

/// int_0^Y e^{-y gamma} Sigma e^{-y gamma^T} dy with Y = 40 / gamma1.
pub fn lyapunov_quadrature<const N: usize>(gamma: &Mat<N>, sigma: &Mat<N>, gamma1: f64) -> Mat<N> {
    let f = |y: f64| {
        let e = expm_oracle(&(-gamma * y));
        (e * sigma * e.transpose()).iter().cloned().collect::<Vec<f64>>()
    };
    let v = simpson_vec(&f, 0.0, 40.0 / gamma1, 1e-9);
    Mat::<N>::from_iterator(v)
}

pub fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn model(manifold: &str, name: &str, kv: &[(&str, f64)]) -> AnyModel {
    preset(manifold, name, &params(kv)).unwrap()
}

pub fn sphere(name: &str, kv: &[(&str, f64)]) -> frame_langevin::fields::Model<2, 2> {
    match model("sphere2", name, kv) {
        AnyModel::Sphere(m) => m,
        _ => unreachable!(),
    }
}

pub fn torus(name: &str, kv: &[(&str, f64)]) -> frame_langevin::fields::Model<2, 2> {
    match model("torus2", name, kv) {
        AnyModel::Torus(m) => m,
        _ => unreachable!(),
    }
}

pub fn circle(name: &str, kv: &[(&str, f64)]) -> frame_langevin::fields::Model<1, 1> {
    match model("circle", name, kv) {
        AnyModel::Circle(m) => m,
        _ => unreachable!(),
    }
}

pub fn rot2(t: f64) -> Mat<2> {
    Mat::<2>::new(t.cos(), -t.sin(), t.sin(), t.cos())
}

/// Orthogonal 2x2 from an angle and a reflection flag.
pub fn o2(t: f64, reflect: bool) -> Mat<2> {
    let r = rot2(t);
    if reflect {
        r * Mat::<2>::new(1.0, 0.0, 0.0, -1.0)
    } else {
        r
    }
}

/// Parallel transport of h around the latitude at polar angle theta, RK4 on
/// dh/dt = -A_w h with w = Lambda xdot.
pub fn latitude_holonomy(theta: f64, steps: usize) -> Mat<2> {
    let s = Sphere2::default();
    let r = (theta / 2.0).tan();
    let rhs = |t: f64, h: &Mat<2>| {
        let x = Vecn::<2>::new(r * t.cos(), r * t.sin());
        let xd = Vecn::<2>::new(-r * t.sin(), r * t.cos());
        let w = s.frame(0, &x) * xd;
        let l = Local::new(&s, &FramePoint::new(0, x, *h)).unwrap();
        -l.a_w(&w) * h
    };
    let dt = 2.0 * PI / steps as f64;
    let mut h = Mat::<2>::identity();
    for i in 0..steps {
        let t = i as f64 * dt;
        let k1 = rhs(t, &h);
        let k2 = rhs(t + dt / 2.0, &(h + k1 * (dt / 2.0)));
        let k3 = rhs(t + dt / 2.0, &(h + k2 * (dt / 2.0)));
        let k4 = rhs(t + dt, &(h + k3 * dt));
        h += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    h
}

pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Transports a frame along the great circle with v = (2.5, 1) for `steps` steps
/// of `dt`; returns the worst embedded deviation from the exact arc and whether
/// the path changed chart. Speed and sphere membership are asserted on the way.
pub fn great_circle_deviation(dt: f64, steps: usize) -> (f64, bool) {
    let s = Sphere2::default();
    let x0 = Vecn::<2>::new(0.4, -0.2);
    let h0 = o2(0.3, false);
    let v = Vecn::<2>::new(2.5, 1.0);
    let mut u = FramePoint::new(0, x0, h0);
    let (p0, f0) = frame_embedding(&s, &u);
    let speed = v.norm();
    let e = f0 * v / speed;
    let mut worst: f64 = 0.0;
    let mut switched = false;
    for i in 1..=steps {
        u = transport(&s, &u, &(v * dt), 2.0, true).unwrap();
        switched |= u.x.chart == 1;
        let t = i as f64 * dt;
        let want: Amb = p0 * (speed * t).cos() + e * (speed * t).sin();
        let (p, f) = frame_embedding(&s, &u);
        worst = worst.max((p - want).norm());
        assert!(((f * v).norm() - speed).abs() <= 1e-8);
        let pt = Vector3::new(p[0], p[1], p[2]);
        assert!((pt.norm() - 1.0).abs() < 1e-12);
    }
    (worst, switched)
}

/// Fluctuation-dissipation closed form of S^h at a point with h = I:
/// -kT sum sigma^{-1}[rho, b] gamma^{-1}[chi, del] (nabla_b sigma)[del, rho],
/// with the covariant derivative taken by central differences.
pub fn fd_closed_form_sh(m: &Model<2, 2>, u: &FramePoint<2>) -> FrameTangent<2> {
    let man = Sphere2::default();
    let kt = m.kt.unwrap();
    let (c, x) = (u.x.chart, u.x.coords);
    let sigma_e = |y: &Vecn<2>| {
        let l = Local::new(&man, &FramePoint::new(c, *y, Mat::<2>::identity())).unwrap();
        let s = m.noise.value(&man, &l).unwrap();
        Mat::<2>::from_fn(|r, q| s[(r, q)])
    };
    let gamma = m.drag.value(&man, &Local::new(&man, u).unwrap()).unwrap();
    let s = sigma_e(&x);
    let si = s.try_inverse().unwrap();
    let gi = gamma.try_inverse().unwrap();
    let li = man.frame_inv(c, &x);
    let a = man.connection(c, &x);
    let e = 1e-5;
    let nabla: Vec<Mat<2>> = (0..2)
        .map(|b| {
            let d = li.column(b).into_owned();
            let ds = (sigma_e(&(x + d * e)) - sigma_e(&(x - d * e))) / (2.0 * e);
            ds + a[b] * s - s * a[b]
        })
        .collect();
    let y = Vecn::<2>::from_fn(|chi, _| {
        let mut t = 0.0;
        for b in 0..2 {
            for rho in 0..2 {
                for del in 0..2 {
                    t += si[(rho, b)] * gi[(chi, del)] * nabla[b][(del, rho)];
                }
            }
        }
        -kt * t
    });
    horizontal_field(&man, u, &y).unwrap()
}
