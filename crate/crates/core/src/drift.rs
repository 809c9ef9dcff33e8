//! Coefficient fields of the zero-mass limiting equation: the lift of
//! gamma^{-1} F, the diffusion fields, the noise-induced drift S^h, the
//! vertical drift S^v, the K^f coefficients and the Ito generator.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::fields::{noise_at, Model};
use crate::geometry::{Amb, FramePoint, FrameTangent, Local};
use crate::linalg::{lyapunov_solve, min_sym_eig, Mat, Vecn};

/// Frame-component data of a model at one frame-bundle point, including the
/// derivatives along the standard horizontal fields H_eta.
#[derive(Debug, Clone)]
pub struct PointCoeffs<const N: usize, const K: usize> {
    pub local: Local<N>,
    pub force: Vecn<N>,
    pub gamma: Mat<N>,
    pub ginv: Mat<N>,
    pub sigma: SMatrix<f64, N, K>,
    /// H_eta[gamma(u)] indexed by eta.
    pub dgamma: [Mat<N>; N],
    pub dginv: [Mat<N>; N],
    pub dsigma: [SMatrix<f64, N, K>; N],
    /// Solution of gamma J + J gamma^T = sigma sigma^T.
    pub j: Mat<N>,
}

impl<const N: usize, const K: usize> PointCoeffs<N, K> {
    pub fn new(model: &Model<N, K>, u: &FramePoint<N>) -> Result<Self> {
        let local = Local::new(model.manifold.as_ref(), u)?;
        Self::from_local(model, local)
    }

    pub fn from_local(model: &Model<N, K>, local: Local<N>) -> Result<Self> {
        let jet = model.jet(&local)?;
        let h = local.h;
        let ht = h.transpose();
        let tensor = model.noise.is_tensor();
        let force = ht * jet.force.val;
        let gamma = ht * jet.drag.val * h;
        if !(min_sym_eig(&gamma) > 0.0) {
            return Err(Error::ModelValidation(format!(
                "drag not elliptic at chart {} {:?}",
                local.chart,
                local.x.as_slice()
            )));
        }
        let ginv = gamma.try_inverse().ok_or_else(|| Error::Singular("drag".into()))?;
        let sigma = noise_at(&jet.noise.val, &h, tensor);
        let mut dgamma = [Mat::<N>::zeros(); N];
        let mut dginv = [Mat::<N>::zeros(); N];
        let mut dsigma = [SMatrix::<f64, N, K>::zeros(); N];
        for eta in 0..N {
            let w = h.column(eta).into_owned();
            let dx = local.lam_inv * w;
            let aw = local.a_w(&w);
            let mut dg = aw * jet.drag.val - jet.drag.val * aw;
            let mut ds = aw * jet.noise.val;
            for i in 0..N {
                dg += jet.drag.d[i] * dx[i];
                ds += jet.noise.d[i] * dx[i];
            }
            dgamma[eta] = ht * dg * h;
            dginv[eta] = -ginv * dgamma[eta] * ginv;
            dsigma[eta] = if tensor {
                let sq = Mat::<N>::from_fn(|r, c| jet.noise.val[(r, c)]);
                let corr = ds - SMatrix::<f64, N, K>::from_fn(|r, c| (sq * aw)[(r, c)]);
                noise_at(&corr, &h, true)
            } else {
                ht * ds
            };
        }
        let big_sigma = sigma * sigma.transpose();
        let j = lyapunov_solve(&gamma, &big_sigma)?;
        Ok(PointCoeffs { local, force, gamma, ginv, sigma, dgamma, dginv, dsigma, j })
    }

    /// gamma^{-1} sigma
    pub fn diffusion_frame(&self) -> SMatrix<f64, N, K> {
        self.ginv * self.sigma
    }

    /// Frame components of S^h, split into the sigma-derivative part and the
    /// drag-derivative part.
    pub fn sh_components(&self) -> (Vecn<N>, Vecn<N>) {
        let gs = self.ginv * self.sigma;
        let mut c1 = Vecn::<N>::zeros();
        for eta in 0..N {
            let gd = self.ginv * self.dsigma[eta];
            for xi in 0..N {
                let mut s = 0.0;
                for a in 0..K {
                    s += gd[(xi, a)] * gs[(eta, a)];
                }
                c1[xi] -= 0.5 * s;
            }
        }
        let mm = self.ginv * self.j * self.gamma.transpose() - self.j;
        let mut c2 = Vecn::<N>::zeros();
        for eta in 0..N {
            for nu in 0..N {
                let w = mm[(eta, nu)];
                if w == 0.0 {
                    continue;
                }
                for xi in 0..N {
                    c2[xi] -= 0.5 * w * self.dginv[eta][(xi, nu)];
                }
            }
        }
        (c1, c2)
    }

    /// S^v = -1/2 sum (gamma^{-1} J)_{eta xi} [H_eta, H_xi], summed over eta < xi
    /// using the antisymmetry of the bracket.
    pub fn sv(&self) -> FrameTangent<N> {
        let gj = self.ginv * self.j;
        let mut out = FrameTangent::<N>::zero();
        for eta in 0..N {
            for xi in (eta + 1)..N {
                let w = gj[(eta, xi)] - gj[(xi, eta)];
                if w != 0.0 {
                    out = out + self.local.bracket(eta, xi) * (-0.5 * w);
                }
            }
        }
        out
    }
}

/// Coefficient fields of the limiting equation at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport<const N: usize, const K: usize> {
    /// (gamma^{-1} F)^h
    pub lift: FrameTangent<N>,
    pub sh: FrameTangent<N>,
    pub sv: FrameTangent<N>,
    /// H_{(gamma^{-1} sigma) e_alpha}
    pub diffusion: [FrameTangent<N>; K],
}

impl<const N: usize, const K: usize> DriftReport<N, K> {
    pub fn drift(&self) -> FrameTangent<N> {
        self.lift + self.sh + self.sv
    }
}

/// Noise-induced drift only; `lift` and `diffusion` are left zero.
pub fn noise_induced_drift<const N: usize, const K: usize>(model: &Model<N, K>, u: &FramePoint<N>) -> Result<DriftReport<N, K>> {
    let pc = PointCoeffs::new(model, u)?;
    let (c1, c2) = pc.sh_components();
    Ok(DriftReport {
        lift: FrameTangent::zero(),
        sh: pc.local.field(&(c1 + c2)),
        sv: pc.sv(),
        diffusion: [FrameTangent::zero(); K],
    })
}

pub fn limiting_coefficients<const N: usize, const K: usize>(model: &Model<N, K>, u: &FramePoint<N>) -> Result<DriftReport<N, K>> {
    let pc = PointCoeffs::new(model, u)?;
    Ok(report_from(&pc))
}

pub(crate) fn report_from<const N: usize, const K: usize>(pc: &PointCoeffs<N, K>) -> DriftReport<N, K> {
    let (c1, c2) = pc.sh_components();
    let gs = pc.diffusion_frame();
    DriftReport {
        lift: pc.local.field(&(pc.ginv * pc.force)),
        sh: pc.local.field(&(c1 + c2)),
        sv: pc.sv(),
        diffusion: std::array::from_fn(|a| pc.local.field(&gs.column(a).into_owned())),
    }
}

/// Scalar functions on the ambient space, composed with the embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmbientFn {
    /// a . p
    Linear(Amb),
    /// Polar angle acos(Z) on the sphere.
    Polar,
    /// Stereographic coordinate p_i/(1 + Z) of the south-pole projection.
    Stereo(usize),
}

impl AmbientFn {
    /// Value, gradient and Hessian in R^4.
    pub fn eval(&self, p: &Amb) -> (f64, Amb, SMatrix<f64, 4, 4>) {
        let mut hess = SMatrix::<f64, 4, 4>::zeros();
        match *self {
            AmbientFn::Linear(a) => (a.dot(p), a, hess),
            AmbientFn::Polar => {
                let z = p[2].clamp(-1.0, 1.0);
                let s2 = (1.0 - z * z).max(1e-300);
                let mut g = Amb::zeros();
                g[2] = -1.0 / s2.sqrt();
                hess[(2, 2)] = -z / (s2 * s2.sqrt());
                (z.acos(), g, hess)
            }
            AmbientFn::Stereo(i) => {
                let q = 1.0 + p[2];
                let mut g = Amb::zeros();
                g[i] = 1.0 / q;
                g[2] = -p[i] / (q * q);
                hess[(i, 2)] = -1.0 / (q * q);
                hess[(2, i)] = -1.0 / (q * q);
                hess[(2, 2)] = 2.0 * p[i] / (q * q * q);
                (p[i] / q, g, hess)
            }
        }
    }
}

/// Registered functions on the frame bundle with analytic first and second
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Chart coordinate x^i.
    Coord(usize),
    /// Frame entry h^alpha_beta.
    FrameEntry(usize, usize),
    /// Function of the embedded base point.
    Ambient(AmbientFn),
}

impl Observable {
    pub fn check<const N: usize>(&self) -> Result<()> {
        let ok = match *self {
            Observable::Coord(i) => i < N,
            Observable::FrameEntry(a, b) => a < N && b < N,
            Observable::Ambient(AmbientFn::Stereo(i)) => i < 2,
            Observable::Ambient(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unregistered(format!("{self:?} for dimension {N}")))
        }
    }

    pub fn value<const N: usize>(&self, l: &Local<N>) -> f64 {
        match *self {
            Observable::Coord(i) => l.x[i],
            Observable::FrameEntry(a, b) => l.h[(a, b)],
            Observable::Ambient(f) => f.eval(&l.p).0,
        }
    }

    /// df(t)
    pub fn diff<const N: usize>(&self, l: &Local<N>, t: &FrameTangent<N>) -> f64 {
        match *self {
            Observable::Coord(i) => t.dx[i],
            Observable::FrameEntry(a, b) => t.dh[(a, b)],
            Observable::Ambient(f) => f.eval(&l.p).1.dot(&(l.jac * t.dx)),
        }
    }

    /// Second coordinate derivative D^2 f(t1, t2).
    pub fn hess<const N: usize>(&self, l: &Local<N>, t1: &FrameTangent<N>, t2: &FrameTangent<N>) -> f64 {
        match *self {
            Observable::Coord(_) | Observable::FrameEntry(_, _) => 0.0,
            Observable::Ambient(f) => {
                let (_, g, hs) = f.eval(&l.p);
                let a = l.jac * t1.dx;
                let b = l.jac * t2.dx;
                a.dot(&(hs * b)) + g.dot(&(l.djac_along(&t1.dx) * t2.dx))
            }
        }
    }

    /// H_mu[f] for each mu.
    pub fn h1<const N: usize>(&self, l: &Local<N>) -> Vecn<N> {
        Vecn::<N>::from_fn(|mu, _| self.diff(l, &l.field_e(mu)))
    }

    /// Entry (xi, mu) is H_xi[H_mu[f]].
    pub fn h2<const N: usize>(&self, l: &Local<N>) -> Mat<N> {
        let fields: [FrameTangent<N>; N] = std::array::from_fn(|e| l.field_e(e));
        Mat::<N>::from_fn(|xi, mu| {
            let mut e = Vecn::<N>::zeros();
            e[mu] = 1.0;
            self.hess(l, &fields[xi], &fields[mu]) + self.diff(l, &l.field_deriv(&fields[xi], &e))
        })
    }
}

/// Frame-component functions accepted by [`h_directional_derivative`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    GammaInv(usize, usize),
    Gamma(usize, usize),
    Sigma(usize, usize),
    Force(usize),
    Observable(Observable),
}

/// H_{e_eta}[f](u) for a registered component function f.
pub fn h_directional_derivative<const N: usize, const K: usize>(
    model: &Model<N, K>,
    comp: Component,
    u: &FramePoint<N>,
    eta: usize,
) -> Result<f64> {
    if eta >= N {
        return Err(Error::Unregistered(format!("direction {eta} for dimension {N}")));
    }
    let pc = PointCoeffs::new(model, u)?;
    let bad = || Error::Unregistered(format!("{comp:?} for n = {N}, k = {K}"));
    match comp {
        Component::GammaInv(r, c) if r < N && c < N => Ok(pc.dginv[eta][(r, c)]),
        Component::Gamma(r, c) if r < N && c < N => Ok(pc.dgamma[eta][(r, c)]),
        Component::Sigma(r, c) if r < N && c < K => Ok(pc.dsigma[eta][(r, c)]),
        Component::Force(i) if i < N => {
            let jet = model.jet(&pc.local)?;
            let w = u.h.column(eta).into_owned();
            let dx = pc.local.lam_inv * w;
            let mut d = pc.local.a_w(&w) * jet.force.val;
            for k in 0..N {
                d += jet.force.d[k] * dx[k];
            }
            Ok((u.h.transpose() * d)[i])
        }
        Component::Observable(o) => {
            o.check::<N>()?;
            Ok(o.diff(&pc.local, &pc.local.field_e(eta)))
        }
        _ => Err(bad()),
    }
}

/// Value of a registered component function at u.
pub fn component_value<const N: usize, const K: usize>(model: &Model<N, K>, comp: Component, u: &FramePoint<N>) -> Result<f64> {
    let pc = PointCoeffs::new(model, u)?;
    let bad = || Error::Unregistered(format!("{comp:?} for n = {N}, k = {K}"));
    match comp {
        Component::GammaInv(r, c) if r < N && c < N => Ok(pc.ginv[(r, c)]),
        Component::Gamma(r, c) if r < N && c < N => Ok(pc.gamma[(r, c)]),
        Component::Sigma(r, c) if r < N && c < K => Ok(pc.sigma[(r, c)]),
        Component::Force(i) if i < N => Ok(pc.force[i]),
        Component::Observable(o) => {
            o.check::<N>()?;
            Ok(o.value(&pc.local))
        }
        _ => Err(bad()),
    }
}

/// Central finite difference of a component along H_{e_eta}, step `eps`.
pub fn h_directional_derivative_fd<const N: usize, const K: usize>(
    model: &Model<N, K>,
    comp: Component,
    u: &FramePoint<N>,
    eta: usize,
    eps: f64,
) -> Result<f64> {
    if eta >= N {
        return Err(Error::Unregistered(format!("direction {eta} for dimension {N}")));
    }
    let t = Local::new(model.manifold.as_ref(), u)?.field_e(eta);
    let shift = |s: f64| FramePoint { x: crate::geometry::ChartPoint { chart: u.x.chart, coords: u.x.coords + t.dx * s }, h: u.h + t.dh * s };
    Ok((component_value(model, comp, &shift(eps))? - component_value(model, comp, &shift(-eps))?) / (2.0 * eps))
}

fn kf_from<const N: usize, const K: usize>(pc: &PointCoeffs<N, K>, f: &Observable) -> Mat<N> {
    let hf = f.h1(&pc.local);
    let hhf = f.h2(&pc.local);
    Mat::<N>::from_fn(|nu, xi| {
        let mut s = 0.0;
        for mu in 0..N {
            s += pc.dginv[xi][(mu, nu)] * hf[mu] + pc.ginv[(mu, nu)] * hhf[(xi, mu)];
        }
        s
    })
}

/// K^f_{nu xi} = H_xi[(gamma^{-1})^mu_nu] H_mu[f] + (gamma^{-1})^mu_nu H_xi[H_mu[f]].
pub fn k_f_coefficients<const N: usize, const K: usize>(model: &Model<N, K>, f: &Observable, u: &FramePoint<N>) -> Result<Mat<N>> {
    f.check::<N>()?;
    let pc = PointCoeffs::new(model, u)?;
    Ok(kf_from(&pc, f))
}

/// Ito drift of f under the limiting equation: H_{gamma^{-1} F}[f] + J^{beta alpha} K^f_{beta alpha}.
pub fn ito_generator_apply<const N: usize, const K: usize>(model: &Model<N, K>, f: &Observable, u: &FramePoint<N>) -> Result<f64> {
    f.check::<N>()?;
    let pc = PointCoeffs::new(model, u)?;
    let kf = kf_from(&pc, f);
    let lift = pc.local.field(&(pc.ginv * pc.force));
    Ok(f.diff(&pc.local, &lift) + pc.j.component_mul(&kf).sum())
}
