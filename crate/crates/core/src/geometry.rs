//! Manifold catalogue, charts, orthonormal frames, connection coefficients and
//! the horizontal vector fields on the orthonormal frame bundle.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::linalg::{polar, Mat, Vecn};

/// Points of the ambient space. Every catalogue manifold embeds isometrically in R^4
/// (unused coordinates stay zero).
pub type Amb = SVector<f64, 4>;
pub type AmbFrame<const N: usize> = SMatrix<f64, 4, N>;
/// `conn[beta][(alpha, eta)] = A^alpha_{beta eta}`.
pub type Conn<const N: usize> = [Mat<N>; N];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint<const N: usize> {
    pub chart: usize,
    pub coords: Vecn<N>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePoint<const N: usize> {
    pub x: ChartPoint<N>,
    pub h: Mat<N>,
}

impl<const N: usize> FramePoint<N> {
    pub fn new(chart: usize, coords: Vecn<N>, h: Mat<N>) -> Self {
        FramePoint { x: ChartPoint { chart, coords }, h }
    }

    /// Right action u -> u g.
    pub fn right_mul(&self, g: &Mat<N>) -> Self {
        FramePoint { x: self.x, h: self.h * g }
    }
}

/// Tangent vector to the frame bundle in chart coordinates (x, h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTangent<const N: usize> {
    pub dx: Vecn<N>,
    pub dh: Mat<N>,
}

impl<const N: usize> FrameTangent<N> {
    pub fn zero() -> Self {
        FrameTangent { dx: Vecn::<N>::zeros(), dh: Mat::<N>::zeros() }
    }

    pub fn norm(&self) -> f64 {
        (self.dx.norm_squared() + self.dh.norm_squared()).sqrt()
    }

    /// Pushforward under the right action of g.
    pub fn right_mul(&self, g: &Mat<N>) -> Self {
        FrameTangent { dx: self.dx, dh: self.dh * g }
    }
}

impl<const N: usize> Add for FrameTangent<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        FrameTangent { dx: self.dx + o.dx, dh: self.dh + o.dh }
    }
}

impl<const N: usize> Sub for FrameTangent<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        FrameTangent { dx: self.dx - o.dx, dh: self.dh - o.dh }
    }
}

impl<const N: usize> Mul<f64> for FrameTangent<N> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        FrameTangent { dx: self.dx * s, dh: self.dh * s }
    }
}

pub trait Manifold<const N: usize>: Send + Sync + std::fmt::Debug {
    fn id(&self) -> &'static str;
    fn charts(&self) -> usize;
    fn in_domain(&self, chart: usize, x: &Vecn<N>) -> bool;
    /// Whether `x` (in `chart`) also lies in the domain of `target`.
    fn in_overlap(&self, chart: usize, x: &Vecn<N>, target: usize) -> bool;
    fn metric(&self, chart: usize, x: &Vecn<N>) -> Mat<N>;
    /// Lambda with d_i = Lambda^alpha_i E_alpha (row alpha, column i).
    fn frame(&self, chart: usize, x: &Vecn<N>) -> Mat<N>;
    fn frame_inv(&self, chart: usize, x: &Vecn<N>) -> Mat<N>;
    /// d_i of Lambda^{-1}, indexed by i.
    fn frame_inv_deriv(&self, chart: usize, x: &Vecn<N>) -> [Mat<N>; N];
    fn connection(&self, chart: usize, x: &Vecn<N>) -> Conn<N>;
    /// d_i A, indexed by [i][beta].
    fn connection_deriv(&self, chart: usize, x: &Vecn<N>) -> [Conn<N>; N];
    /// +1 or -1 depending on whether the chart frame is positively oriented.
    fn orientation(&self, chart: usize) -> f64;
    fn embed(&self, chart: usize, x: &Vecn<N>) -> Amb;
    fn embed_jacobian(&self, chart: usize, x: &Vecn<N>) -> AmbFrame<N>;
    /// d_i of the embedding jacobian, indexed by i.
    fn embed_hessian(&self, chart: usize, x: &Vecn<N>) -> [AmbFrame<N>; N];
    /// Coordinates in `to` and the frame-change matrix P with h_to = P h_from.
    fn transition_map(&self, from: usize, x: &Vecn<N>, to: usize) -> Result<(Vecn<N>, Mat<N>)>;
    /// Wraps periodic coordinates and switches charts when the coordinate norm exceeds `threshold`.
    fn canonical(&self, p: &FramePoint<N>, threshold: f64) -> Result<FramePoint<N>>;
    /// Chart point for an ambient point on the manifold.
    fn chart_from_embedding(&self, p: &Amb) -> ChartPoint<N>;
    fn geodesic_distance(&self, a: &ChartPoint<N>, b: &ChartPoint<N>) -> Result<f64>;
    fn default_switch_threshold(&self) -> f64 {
        f64::INFINITY
    }
}

fn check_domain<const N: usize>(m: &dyn Manifold<N>, x: &ChartPoint<N>) -> Result<()> {
    if x.chart >= m.charts() || !m.in_domain(x.chart, &x.coords) {
        return Err(Error::Domain(format!(
            "{}: chart {} coords {:?}",
            m.id(),
            x.chart,
            x.coords.as_slice()
        )));
    }
    Ok(())
}

/// Christoffel symbols `gam[i][(j, k)] = Gamma^i_{jk}` from the frame and connection data.
pub fn christoffel<const N: usize>(m: &dyn Manifold<N>, chart: usize, x: &Vecn<N>) -> [Mat<N>; N] {
    let lam = m.frame(chart, x);
    let li = m.frame_inv(chart, x);
    let dli = m.frame_inv_deriv(chart, x);
    let a = m.connection(chart, x);
    let dlam: [Mat<N>; N] = std::array::from_fn(|j| -lam * dli[j] * lam);
    std::array::from_fn(|i| {
        Mat::<N>::from_fn(|j, k| {
            let mut s = 0.0;
            for al in 0..N {
                let mut inner = dlam[j][(al, k)];
                for eta in 0..N {
                    for be in 0..N {
                        inner += lam[(eta, k)] * lam[(be, j)] * a[be][(al, eta)];
                    }
                }
                s += li[(i, al)] * inner;
            }
            s
        })
    })
}

/// Central finite-difference derivative of the connection coefficients,
/// step 1e-5 (1 + |x|); `out[i]` is the derivative along x^i.
pub fn connection_deriv_fd<const N: usize>(m: &dyn Manifold<N>, chart: usize, x: &Vecn<N>) -> [Conn<N>; N] {
    let eps = 1e-5 * (1.0 + x.norm());
    std::array::from_fn(|i| {
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += eps;
        xm[i] -= eps;
        let (ap, am) = (m.connection(chart, &xp), m.connection(chart, &xm));
        std::array::from_fn(|b| (ap[b] - am[b]) / (2.0 * eps))
    })
}

/// Central finite-difference derivative of the inverse frame matrix.
pub fn frame_inv_deriv_fd<const N: usize>(m: &dyn Manifold<N>, chart: usize, x: &Vecn<N>) -> [Mat<N>; N] {
    let eps = 1e-5 * (1.0 + x.norm());
    std::array::from_fn(|i| {
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += eps;
        xm[i] -= eps;
        (m.frame_inv(chart, &xp) - m.frame_inv(chart, &xm)) / (2.0 * eps)
    })
}

/// Geometry cached at one frame-bundle point.
#[derive(Debug, Clone)]
pub struct Local<const N: usize> {
    pub chart: usize,
    pub x: Vecn<N>,
    pub h: Mat<N>,
    pub lam_inv: Mat<N>,
    pub dlam_inv: [Mat<N>; N],
    pub conn: Conn<N>,
    pub dconn: [Conn<N>; N],
    pub p: Amb,
    pub jac: AmbFrame<N>,
    pub djac: [AmbFrame<N>; N],
    /// Embedded chart frame vectors E_alpha as columns.
    pub eamb: AmbFrame<N>,
    pub deamb: [AmbFrame<N>; N],
}

impl<const N: usize> Local<N> {
    pub fn new(m: &dyn Manifold<N>, u: &FramePoint<N>) -> Result<Self> {
        check_domain(m, &u.x)?;
        Ok(Self::new_unchecked(m, u))
    }

    pub fn new_unchecked(m: &dyn Manifold<N>, u: &FramePoint<N>) -> Self {
        let (c, x) = (u.x.chart, &u.x.coords);
        let lam_inv = m.frame_inv(c, x);
        let dlam_inv = m.frame_inv_deriv(c, x);
        let jac = m.embed_jacobian(c, x);
        let djac = m.embed_hessian(c, x);
        let eamb = jac * lam_inv;
        let deamb = std::array::from_fn(|i| djac[i] * lam_inv + jac * dlam_inv[i]);
        Local {
            chart: c,
            x: *x,
            h: u.h,
            lam_inv,
            dlam_inv,
            conn: m.connection(c, x),
            dconn: m.connection_deriv(c, x),
            p: m.embed(c, x),
            jac,
            djac,
            eamb,
            deamb,
        }
    }

    /// A_w with (A_w)_{delta kappa} = sum_beta A^delta_{beta kappa} w^beta.
    pub fn a_w(&self, w: &Vecn<N>) -> Mat<N> {
        let mut r = Mat::<N>::zeros();
        for b in 0..N {
            r += self.conn[b] * w[b];
        }
        r
    }

    fn da_w(&self, dx: &Vecn<N>, w: &Vecn<N>) -> Mat<N> {
        let mut r = Mat::<N>::zeros();
        for i in 0..N {
            if dx[i] == 0.0 {
                continue;
            }
            for b in 0..N {
                r += self.dconn[i][b] * (w[b] * dx[i]);
            }
        }
        r
    }

    fn dlam_inv_along(&self, dx: &Vecn<N>) -> Mat<N> {
        let mut r = Mat::<N>::zeros();
        for i in 0..N {
            r += self.dlam_inv[i] * dx[i];
        }
        r
    }

    pub fn deamb_along(&self, dx: &Vecn<N>) -> AmbFrame<N> {
        let mut r = AmbFrame::<N>::zeros();
        for i in 0..N {
            r += self.deamb[i] * dx[i];
        }
        r
    }

    pub fn djac_along(&self, dx: &Vecn<N>) -> AmbFrame<N> {
        let mut r = AmbFrame::<N>::zeros();
        for i in 0..N {
            r += self.djac[i] * dx[i];
        }
        r
    }

    /// H_v(u): dx = Lambda^{-1} h v, dh = -A_{h v} h.
    pub fn field(&self, v: &Vecn<N>) -> FrameTangent<N> {
        let w = self.h * v;
        FrameTangent { dx: self.lam_inv * w, dh: -self.a_w(&w) * self.h }
    }

    pub fn field_e(&self, eta: usize) -> FrameTangent<N> {
        let mut e = Vecn::<N>::zeros();
        e[eta] = 1.0;
        self.field(&e)
    }

    /// Derivative of the coordinate expression of H_v (v held fixed) along `t`.
    pub fn field_deriv(&self, t: &FrameTangent<N>, v: &Vecn<N>) -> FrameTangent<N> {
        let w = self.h * v;
        let dw = t.dh * v;
        let dx = self.dlam_inv_along(&t.dx) * w + self.lam_inv * dw;
        let dh = -(self.da_w(&t.dx, &w) * self.h + self.a_w(&dw) * self.h + self.a_w(&w) * t.dh);
        FrameTangent { dx, dh }
    }

    /// [H_eta, H_xi] at this point.
    pub fn bracket(&self, eta: usize, xi: usize) -> FrameTangent<N> {
        let mut ee = Vecn::<N>::zeros();
        ee[eta] = 1.0;
        let mut ex = Vecn::<N>::zeros();
        ex[xi] = 1.0;
        let he = self.field(&ee);
        let hx = self.field(&ex);
        self.field_deriv(&he, &ex) - self.field_deriv(&hx, &ee)
    }

    /// Embedded frame vectors u(e_alpha) as columns.
    pub fn ambient_frame(&self) -> AmbFrame<N> {
        self.eamb * self.h
    }

    pub fn ambient_frame_along(&self, t: &FrameTangent<N>) -> AmbFrame<N> {
        self.deamb_along(&t.dx) * self.h + self.eamb * t.dh
    }
}

pub fn horizontal_field<const N: usize>(
    m: &dyn Manifold<N>,
    u: &FramePoint<N>,
    v: &Vecn<N>,
) -> Result<FrameTangent<N>> {
    Ok(Local::new(m, u)?.field(v))
}

pub fn chart_transition<const N: usize>(
    m: &dyn Manifold<N>,
    u: &FramePoint<N>,
    target: usize,
) -> Result<FramePoint<N>> {
    check_domain(m, &u.x)?;
    if target == u.x.chart {
        return Ok(*u);
    }
    if target >= m.charts() || !m.in_overlap(u.x.chart, &u.x.coords, target) {
        return Err(Error::Domain(format!(
            "{}: point {:?} of chart {} is not in chart {}",
            m.id(),
            u.x.coords.as_slice(),
            u.x.chart,
            target
        )));
    }
    let (y, p) = m.transition_map(u.x.chart, &u.x.coords, target)?;
    Ok(FramePoint::new(target, y, p * u.h))
}

pub fn orthonormalize<const N: usize>(h: &Mat<N>) -> Result<Mat<N>> {
    polar(h)
}

pub fn geodesic_distance<const N: usize>(
    m: &dyn Manifold<N>,
    a: &ChartPoint<N>,
    b: &ChartPoint<N>,
) -> Result<f64> {
    check_domain(m, a)?;
    check_domain(m, b)?;
    m.geodesic_distance(a, b)
}

/// Chordal distance of the embedding u -> (embed(x), u(e_1), ..., u(e_n)).
pub fn frame_distance<const N: usize>(m: &dyn Manifold<N>, u1: &FramePoint<N>, u2: &FramePoint<N>) -> f64 {
    let e1 = frame_embedding(m, u1);
    let e2 = frame_embedding(m, u2);
    ((e1.0 - e2.0).norm_squared() + (e1.1 - e2.1).norm_squared()).sqrt()
}

pub fn frame_embedding<const N: usize>(m: &dyn Manifold<N>, u: &FramePoint<N>) -> (Amb, AmbFrame<N>) {
    let (c, x) = (u.x.chart, &u.x.coords);
    let e = m.embed_jacobian(c, x) * m.frame_inv(c, x) * u.h;
    (m.embed(c, x), e)
}

/// Moves u along the flow of H_w for unit time with one midpoint step, then
/// restores orthogonality and canonical chart form.
pub fn transport<const N: usize>(
    m: &dyn Manifold<N>,
    u: &FramePoint<N>,
    w: &Vecn<N>,
    threshold: f64,
    reortho: bool,
) -> Result<FramePoint<N>> {
    let l0 = Local::new(m, u)?;
    let k1 = l0.field(w);
    let mid = FramePoint { x: ChartPoint { chart: u.x.chart, coords: u.x.coords + k1.dx * 0.5 }, h: u.h + k1.dh * 0.5 };
    let k2 = Local::new(m, &mid)?.field(w);
    let mut h = u.h + k2.dh;
    if reortho {
        h = polar(&h)?;
    }
    let out = FramePoint { x: ChartPoint { chart: u.x.chart, coords: u.x.coords + k2.dx }, h };
    m.canonical(&out, threshold)
}

fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Flat torus (R/2piZ)^N with the Clifford embedding (cos x_i, sin x_i).
/// N = 1 is the circle, N = 2 the flat 2-torus.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatTorus<const N: usize>;

pub type Circle = FlatTorus<1>;
pub type Torus2 = FlatTorus<2>;

impl<const N: usize> Manifold<N> for FlatTorus<N> {
    fn id(&self) -> &'static str {
        match N {
            1 => "circle",
            2 => "torus2",
            _ => "torus",
        }
    }
    fn charts(&self) -> usize {
        1
    }
    fn in_domain(&self, chart: usize, x: &Vecn<N>) -> bool {
        chart == 0 && x.iter().all(|v| v.is_finite())
    }
    fn in_overlap(&self, chart: usize, x: &Vecn<N>, target: usize) -> bool {
        target == 0 && self.in_domain(chart, x)
    }
    fn metric(&self, _: usize, _: &Vecn<N>) -> Mat<N> {
        Mat::<N>::identity()
    }
    fn frame(&self, _: usize, _: &Vecn<N>) -> Mat<N> {
        Mat::<N>::identity()
    }
    fn frame_inv(&self, _: usize, _: &Vecn<N>) -> Mat<N> {
        Mat::<N>::identity()
    }
    fn frame_inv_deriv(&self, _: usize, _: &Vecn<N>) -> [Mat<N>; N] {
        [Mat::<N>::zeros(); N]
    }
    fn connection(&self, _: usize, _: &Vecn<N>) -> Conn<N> {
        [Mat::<N>::zeros(); N]
    }
    fn connection_deriv(&self, _: usize, _: &Vecn<N>) -> [Conn<N>; N] {
        [[Mat::<N>::zeros(); N]; N]
    }
    fn orientation(&self, _: usize) -> f64 {
        1.0
    }
    fn embed(&self, _: usize, x: &Vecn<N>) -> Amb {
        let mut p = Amb::zeros();
        for i in 0..N {
            p[2 * i] = x[i].cos();
            p[2 * i + 1] = x[i].sin();
        }
        p
    }
    fn embed_jacobian(&self, _: usize, x: &Vecn<N>) -> AmbFrame<N> {
        let mut j = AmbFrame::<N>::zeros();
        for i in 0..N {
            j[(2 * i, i)] = -x[i].sin();
            j[(2 * i + 1, i)] = x[i].cos();
        }
        j
    }
    fn embed_hessian(&self, _: usize, x: &Vecn<N>) -> [AmbFrame<N>; N] {
        std::array::from_fn(|i| {
            let mut j = AmbFrame::<N>::zeros();
            j[(2 * i, i)] = -x[i].cos();
            j[(2 * i + 1, i)] = -x[i].sin();
            j
        })
    }
    fn transition_map(&self, from: usize, x: &Vecn<N>, to: usize) -> Result<(Vecn<N>, Mat<N>)> {
        if from != 0 || to != 0 {
            return Err(Error::Domain(format!("{} has a single chart", self.id())));
        }
        Ok((*x, Mat::<N>::identity()))
    }
    fn canonical(&self, p: &FramePoint<N>, _: f64) -> Result<FramePoint<N>> {
        check_domain(self, &p.x)?;
        Ok(FramePoint::new(0, p.x.coords.map(wrap_angle), p.h))
    }
    fn chart_from_embedding(&self, p: &Amb) -> ChartPoint<N> {
        ChartPoint { chart: 0, coords: Vecn::<N>::from_fn(|i, _| wrap_angle(p[2 * i + 1].atan2(p[2 * i]))) }
    }
    fn geodesic_distance(&self, a: &ChartPoint<N>, b: &ChartPoint<N>) -> Result<f64> {
        Ok((0..N).map(|i| angle_gap(a.coords[i], b.coords[i]).powi(2)).sum::<f64>().sqrt())
    }
}

/// Unit 2-sphere with two stereographic charts.
/// Chart 0 projects from the south pole, z = (X, Y)/(1 + Z); chart 1 from the
/// north pole, w = (X, Y)/(1 - Z). Both have metric 4 delta/(1 + |z|^2)^2 and
/// domain |z| < 3; on the overlap w = z/|z|^2.
#[derive(Debug, Clone, Copy)]
pub struct Sphere2 {
    pub switch_threshold: f64,
}

impl Default for Sphere2 {
    fn default() -> Self {
        Sphere2 { switch_threshold: 2.0 }
    }
}

pub const SPHERE_DOMAIN_RADIUS: f64 = 3.0;

impl Sphere2 {
    fn zsign(chart: usize) -> f64 {
        if chart == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl Manifold<2> for Sphere2 {
    fn id(&self) -> &'static str {
        "sphere2"
    }
    fn charts(&self) -> usize {
        2
    }
    fn in_domain(&self, chart: usize, x: &Vecn<2>) -> bool {
        chart < 2 && x.iter().all(|v| v.is_finite()) && x.norm() < SPHERE_DOMAIN_RADIUS
    }
    fn in_overlap(&self, chart: usize, x: &Vecn<2>, target: usize) -> bool {
        if !self.in_domain(chart, x) || target > 1 {
            return false;
        }
        target == chart || x.norm() > 1.0 / SPHERE_DOMAIN_RADIUS
    }
    fn metric(&self, _: usize, x: &Vecn<2>) -> Mat<2> {
        let q = 1.0 + x.norm_squared();
        Mat::<2>::identity() * (4.0 / (q * q))
    }
    fn frame(&self, _: usize, x: &Vecn<2>) -> Mat<2> {
        Mat::<2>::identity() * (2.0 / (1.0 + x.norm_squared()))
    }
    fn frame_inv(&self, _: usize, x: &Vecn<2>) -> Mat<2> {
        Mat::<2>::identity() * (0.5 * (1.0 + x.norm_squared()))
    }
    fn frame_inv_deriv(&self, _: usize, x: &Vecn<2>) -> [Mat<2>; 2] {
        [Mat::<2>::identity() * x[0], Mat::<2>::identity() * x[1]]
    }
    fn connection(&self, _: usize, x: &Vecn<2>) -> Conn<2> {
        std::array::from_fn(|b| {
            Mat::<2>::from_fn(|al, eta| {
                let mut v = 0.0;
                if b == eta {
                    v += x[al];
                }
                if al == b {
                    v -= x[eta];
                }
                v
            })
        })
    }
    fn connection_deriv(&self, _: usize, _: &Vecn<2>) -> [Conn<2>; 2] {
        std::array::from_fn(|i| {
            std::array::from_fn(|b| {
                Mat::<2>::from_fn(|al, eta| {
                    let mut v = 0.0;
                    if b == eta && i == al {
                        v += 1.0;
                    }
                    if al == b && i == eta {
                        v -= 1.0;
                    }
                    v
                })
            })
        })
    }
    fn orientation(&self, chart: usize) -> f64 {
        Self::zsign(chart)
    }
    fn embed(&self, chart: usize, x: &Vecn<2>) -> Amb {
        let r2 = x.norm_squared();
        let q = 1.0 + r2;
        Amb::new(2.0 * x[0] / q, 2.0 * x[1] / q, Self::zsign(chart) * (1.0 - r2) / q, 0.0)
    }
    fn embed_jacobian(&self, chart: usize, x: &Vecn<2>) -> AmbFrame<2> {
        let q = 1.0 + x.norm_squared();
        let s = Self::zsign(chart);
        AmbFrame::<2>::from_fn(|r, i| match r {
            0 | 1 => {
                let d = if r == i { 2.0 / q } else { 0.0 };
                d - 4.0 * x[r] * x[i] / (q * q)
            }
            2 => -4.0 * s * x[i] / (q * q),
            _ => 0.0,
        })
    }
    fn embed_hessian(&self, chart: usize, x: &Vecn<2>) -> [AmbFrame<2>; 2] {
        let q = 1.0 + x.norm_squared();
        let s = Self::zsign(chart);
        let q2 = q * q;
        let q3 = q2 * q;
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        std::array::from_fn(|j| {
            AmbFrame::<2>::from_fn(|r, i| match r {
                0 | 1 => {
                    let k = r;
                    -4.0 * (d(i, k) * x[j] + d(j, k) * x[i] + d(i, j) * x[k]) / q2 + 16.0 * x[k] * x[i] * x[j] / q3
                }
                2 => s * (-4.0 * d(i, j) / q2 + 16.0 * x[i] * x[j] / q3),
                _ => 0.0,
            })
        })
    }
    fn transition_map(&self, from: usize, x: &Vecn<2>, to: usize) -> Result<(Vecn<2>, Mat<2>)> {
        if from > 1 || to > 1 {
            return Err(Error::Domain("sphere2 has charts 0 and 1".into()));
        }
        if from == to {
            return Ok((*x, Mat::<2>::identity()));
        }
        let r2 = x.norm_squared();
        if !(r2 > 0.0) {
            return Err(Error::Domain("pole is not in the chart overlap".into()));
        }
        let p = Mat::<2>::identity() - x * x.transpose() * (2.0 / r2);
        Ok((x / r2, p))
    }
    fn canonical(&self, p: &FramePoint<2>, threshold: f64) -> Result<FramePoint<2>> {
        check_domain(self, &p.x)?;
        if p.x.coords.norm() > threshold {
            chart_transition(self, p, 1 - p.x.chart)
        } else {
            Ok(*p)
        }
    }
    fn chart_from_embedding(&self, p: &Amb) -> ChartPoint<2> {
        if p[2] >= 0.0 {
            ChartPoint { chart: 0, coords: Vecn::<2>::new(p[0], p[1]) / (1.0 + p[2]) }
        } else {
            ChartPoint { chart: 1, coords: Vecn::<2>::new(p[0], p[1]) / (1.0 - p[2]) }
        }
    }
    fn geodesic_distance(&self, a: &ChartPoint<2>, b: &ChartPoint<2>) -> Result<f64> {
        let pa = self.embed(a.chart, &a.coords).fixed_rows::<3>(0).into_owned();
        let pb = self.embed(b.chart, &b.coords).fixed_rows::<3>(0).into_owned();
        Ok(pa.cross(&pb).norm().atan2(pa.dot(&pb)))
    }
    fn default_switch_threshold(&self) -> f64 {
        self.switch_threshold
    }
}

/// Rotation by angle t (n = 2).
pub fn rot2(t: f64) -> Mat<2> {
    Mat::<2>::new(t.cos(), -t.sin(), t.sin(), t.cos())
}
