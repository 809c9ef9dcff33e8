//! Force, drag and noise fields and their frame components.
//!
//! Fields are built from ambient data (functions on the R^4 embedding) so
//! their chart-frame components agree across chart overlaps automatically.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{Amb, Circle, FramePoint, Local, Manifold, Sphere2, Torus2};
use crate::linalg::{min_sym_eig, sylvester_sym, sym_sqrt_psd, Mat, Vecn};

/// Scalar s(p) = c + a . p on the ambient space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub c: f64,
    pub a: Amb,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { c, a: Amb::zeros() }
    }

    pub fn new(c: f64, a: Amb) -> Self {
        Affine { c, a }
    }

    pub fn eval(&self, p: &Amb) -> f64 {
        self.c + self.a.dot(p)
    }

    pub fn is_constant(&self) -> bool {
        self.a == Amb::zeros()
    }
}

/// Ambient vector field b(p) = c + B p; only its tangential projection matters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientVec {
    pub c: Amb,
    pub b: SMatrix<f64, 4, 4>,
}

impl AmbientVec {
    pub fn zero() -> Self {
        AmbientVec { c: Amb::zeros(), b: SMatrix::<f64, 4, 4>::zeros() }
    }

    pub fn constant(c: Amb) -> Self {
        AmbientVec { c, b: SMatrix::<f64, 4, 4>::zeros() }
    }

    pub fn eval(&self, p: &Amb) -> Amb {
        self.c + self.b * p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorKind<const N: usize> {
    Identity,
    /// Quarter-turn rotation of the tangent plane (zero when n = 1).
    Rotation,
    /// t t^T with t the tangential projection of an ambient field.
    Dyad(AmbientVec),
    /// Fixed matrix in the chart frame; only allowed on single-chart manifolds.
    Frame(Mat<N>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTerm<const N: usize> {
    pub coef: Affine,
    pub kind: TensorKind<N>,
}

/// A (1,1)-tensor field.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorField<const N: usize> {
    Terms(Vec<TensorTerm<N>>),
    /// Symmetric square root of `scale` times a symmetric positive field.
    Sqrt { inner: Box<TensorField<N>>, scale: f64 },
}

impl<const N: usize> TensorField<N> {
    pub fn scalar(s: Affine) -> Self {
        TensorField::Terms(vec![TensorTerm { coef: s, kind: TensorKind::Identity }])
    }

    pub fn constant(c: f64) -> Self {
        Self::scalar(Affine::constant(c))
    }

    /// Whether the field is a multiple of the identity.
    pub fn is_scalar(&self) -> bool {
        match self {
            TensorField::Terms(t) => t.iter().all(|t| {
                matches!(t.kind, TensorKind::Identity)
                    || (matches!(t.kind, TensorKind::Rotation) && N == 1)
                    || (t.coef == Affine::constant(0.0))
            }),
            TensorField::Sqrt { inner, .. } => inner.is_scalar(),
        }
    }

    /// Chart-frame components only.
    pub fn value(&self, m: &dyn Manifold<N>, l: &Local<N>) -> Result<Mat<N>> {
        match self {
            TensorField::Terms(_) => Ok(self.jet(m, l)?.val),
            TensorField::Sqrt { inner, scale } => Ok(sym_sqrt_psd(&(inner.value(m, l)? * *scale))),
        }
    }

    fn uses_frame_terms(&self) -> bool {
        match self {
            TensorField::Terms(t) => t.iter().any(|t| matches!(t.kind, TensorKind::Frame(_))),
            TensorField::Sqrt { inner, .. } => inner.uses_frame_terms(),
        }
    }

    /// Chart-frame components and their coordinate derivatives.
    pub fn jet(&self, m: &dyn Manifold<N>, l: &Local<N>) -> Result<Jet<Mat<N>, N>> {
        match self {
            TensorField::Terms(terms) => {
                let mut out = Jet { val: Mat::<N>::zeros(), d: [Mat::<N>::zeros(); N] };
                for t in terms {
                    let s = scalar_jet(&t.coef, l);
                    let k = kind_jet(&t.kind, m, l);
                    out.val += k.val * s.val;
                    for i in 0..N {
                        out.d[i] += k.d[i] * s.val + k.val * s.d[i];
                    }
                }
                Ok(out)
            }
            TensorField::Sqrt { inner, scale } => {
                let j = inner.jet(m, l)?;
                let s = sym_sqrt_psd(&(j.val * *scale));
                let mut d = [Mat::<N>::zeros(); N];
                for i in 0..N {
                    d[i] = sylvester_sym(&s, &(j.d[i] * *scale))?;
                }
                Ok(Jet { val: s, d })
            }
        }
    }
}

fn quarter_turn<const N: usize>() -> Mat<N> {
    let mut r = Mat::<N>::zeros();
    if N == 2 {
        r[(0, 1)] = -1.0;
        r[(1, 0)] = 1.0;
    }
    r
}

fn kind_jet<const N: usize>(k: &TensorKind<N>, m: &dyn Manifold<N>, l: &Local<N>) -> Jet<Mat<N>, N> {
    match k {
        TensorKind::Identity => Jet { val: Mat::<N>::identity(), d: [Mat::<N>::zeros(); N] },
        TensorKind::Rotation => Jet { val: quarter_turn::<N>() * m.orientation(l.chart), d: [Mat::<N>::zeros(); N] },
        TensorKind::Frame(a) => Jet { val: *a, d: [Mat::<N>::zeros(); N] },
        TensorKind::Dyad(b) => {
            let t = vector_jet(b, l);
            let val = t.val * t.val.transpose();
            let d = std::array::from_fn(|i| t.d[i] * t.val.transpose() + t.val * t.d[i].transpose());
            Jet { val, d }
        }
    }
}

/// Value and coordinate derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<T, const N: usize> {
    pub val: T,
    pub d: [T; N],
}

pub fn scalar_jet<const N: usize>(s: &Affine, l: &Local<N>) -> Jet<f64, N> {
    Jet { val: s.eval(&l.p), d: std::array::from_fn(|i| s.a.dot(&l.jac.column(i))) }
}

/// Chart-frame components E^T b of the tangential part of an ambient field.
pub fn vector_jet<const N: usize>(b: &AmbientVec, l: &Local<N>) -> Jet<Vecn<N>, N> {
    let bv = b.eval(&l.p);
    let val = l.eamb.transpose() * bv;
    let d = std::array::from_fn(|i| l.deamb[i].transpose() * bv + l.eamb.transpose() * (b.b * l.jac.column(i)));
    Jet { val, d }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseField<const N: usize, const K: usize> {
    /// sigma(u) = h^T sigma_E h; requires K = N.
    Tensor(TensorField<N>),
    /// k ambient vector fields; sigma(u) e_alpha = h^T (frame components of field alpha).
    Vectors([AmbientVec; K]),
}

impl<const N: usize, const K: usize> NoiseField<N, K> {
    pub fn is_tensor(&self) -> bool {
        matches!(self, NoiseField::Tensor(_))
    }

    pub fn value(&self, m: &dyn Manifold<N>, l: &Local<N>) -> Result<SMatrix<f64, N, K>> {
        match self {
            NoiseField::Tensor(t) => {
                let v = t.value(m, l)?;
                Ok(SMatrix::<f64, N, K>::from_fn(|r, c| v[(r, c)]))
            }
            NoiseField::Vectors(_) => Ok(self.jet(m, l)?.val),
        }
    }

    pub fn jet(&self, m: &dyn Manifold<N>, l: &Local<N>) -> Result<Jet<SMatrix<f64, N, K>, N>> {
        match self {
            NoiseField::Tensor(t) => {
                let j = t.jet(m, l)?;
                Ok(Jet {
                    val: SMatrix::<f64, N, K>::from_fn(|r, c| j.val[(r, c)]),
                    d: std::array::from_fn(|i| SMatrix::<f64, N, K>::from_fn(|r, c| j.d[i][(r, c)])),
                })
            }
            NoiseField::Vectors(vs) => {
                let mut val = SMatrix::<f64, N, K>::zeros();
                let mut d = [SMatrix::<f64, N, K>::zeros(); N];
                for (a, v) in vs.iter().enumerate() {
                    let j = vector_jet(v, l);
                    val.set_column(a, &j.val);
                    for i in 0..N {
                        d[i].set_column(a, &j.d[i]);
                    }
                }
                Ok(Jet { val, d })
            }
        }
    }
}

/// Chart-frame data of all model fields at one point.
#[derive(Debug, Clone)]
pub struct ModelJet<const N: usize, const K: usize> {
    pub force: Jet<Vecn<N>, N>,
    pub drag: Jet<Mat<N>, N>,
    pub noise: Jet<SMatrix<f64, N, K>, N>,
}

#[derive(Debug, Clone)]
pub struct Model<const N: usize, const K: usize> {
    pub name: String,
    pub manifold: Arc<dyn Manifold<N>>,
    pub force: AmbientVec,
    pub drag: TensorField<N>,
    pub noise: NoiseField<N, K>,
    pub mass: f64,
    pub kt: Option<f64>,
    /// Certified lower bound on the symmetric part of the drag.
    pub gamma1: f64,
}

pub const DEFAULT_VALIDATION_SAMPLES: usize = 1000;

impl<const N: usize, const K: usize> Model<N, K> {
    /// Builds a model and certifies the drag bound on quasi-random samples.
    pub fn new(
        name: &str,
        manifold: Arc<dyn Manifold<N>>,
        force: AmbientVec,
        drag: TensorField<N>,
        noise: NoiseField<N, K>,
        mass: f64,
        kt: Option<f64>,
    ) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::ModelValidation(format!("mass must be positive, got {mass}")));
        }
        if noise.is_tensor() && K != N {
            return Err(Error::ModelValidation(format!("tensor noise needs k = n, got k = {K}, n = {N}")));
        }
        let frame_terms = drag.uses_frame_terms() || matches!(&noise, NoiseField::Tensor(t) if t.uses_frame_terms());
        if frame_terms && manifold.charts() > 1 {
            return Err(Error::ModelValidation(format!(
                "fixed chart-frame tensors are not chart independent on {}",
                manifold.id()
            )));
        }
        let mut model = Model { name: name.to_string(), manifold, force, drag, noise, mass, kt, gamma1: 0.0 };
        model.gamma1 = validate_drag_bound(&model, DEFAULT_VALIDATION_SAMPLES)?;
        Ok(model)
    }

    /// Fluctuation-dissipation model: sigma is the symmetric square root of 2 kT gamma.
    pub fn fluctuation_dissipation(
        name: &str,
        manifold: Arc<dyn Manifold<N>>,
        force: AmbientVec,
        drag: TensorField<N>,
        kt: f64,
        mass: f64,
    ) -> Result<Self> {
        if K != N {
            return Err(Error::ModelValidation("fluctuation-dissipation needs tensor noise".into()));
        }
        if !(kt > 0.0) {
            return Err(Error::ModelValidation(format!("kT must be positive, got {kt}")));
        }
        for cp in sample_points(manifold.as_ref(), 200) {
            let l = Local::new(manifold.as_ref(), &FramePoint { x: cp, h: Mat::<N>::identity() })?;
            let g = drag.jet(manifold.as_ref(), &l)?.val;
            if (g - g.transpose()).norm() > 1e-12 * (1.0 + g.norm()) {
                return Err(Error::ModelValidation(
                    "fluctuation-dissipation requires a symmetric drag tensor".into(),
                ));
            }
        }
        let noise = NoiseField::Tensor(TensorField::Sqrt { inner: Box::new(drag.clone()), scale: 2.0 * kt });
        Self::new(name, manifold, force, drag, noise, mass, Some(kt))
    }

    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::ModelValidation(format!("mass must be positive, got {mass}")));
        }
        let mut m = self.clone();
        m.mass = mass;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        N
    }

    pub fn noise_dim(&self) -> usize {
        K
    }

    /// Frame components (F(u), gamma(u), sigma(u)) at the frame of `l`.
    pub fn frame_values(&self, l: &Local<N>) -> Result<(Vecn<N>, Mat<N>, SMatrix<f64, N, K>)> {
        let m = self.manifold.as_ref();
        let ht = l.h.transpose();
        let f = ht * (l.eamb.transpose() * self.force.eval(&l.p));
        let g = ht * self.drag.value(m, l)? * l.h;
        let s = noise_at(&self.noise.value(m, l)?, &l.h, self.noise.is_tensor());
        Ok((f, g, s))
    }

    pub fn jet(&self, l: &Local<N>) -> Result<ModelJet<N, K>> {
        let m = self.manifold.as_ref();
        Ok(ModelJet { force: vector_jet(&self.force, l), drag: self.drag.jet(m, l)?, noise: self.noise.jet(m, l)? })
    }
}

/// F(u) = h^{-1} F_E(x).
pub fn force_frame_components<const N: usize, const K: usize>(model: &Model<N, K>, u: &FramePoint<N>) -> Result<Vecn<N>> {
    let l = Local::new(model.manifold.as_ref(), u)?;
    Ok(u.h.transpose() * vector_jet(&model.force, &l).val)
}

/// gamma(u) = h^{-1} gamma_E(x) h.
pub fn drag_frame_components<const N: usize, const K: usize>(model: &Model<N, K>, u: &FramePoint<N>) -> Result<Mat<N>> {
    let l = Local::new(model.manifold.as_ref(), u)?;
    let g = model.drag.jet(model.manifold.as_ref(), &l)?.val;
    let lo = min_sym_eig(&g);
    if !(lo > 0.0) {
        return Err(Error::ModelValidation(format!("drag not elliptic at {:?}: eigenvalue {lo:e}", u.x.coords.as_slice())));
    }
    Ok(u.h.transpose() * g * u.h)
}

/// sigma(u): h^{-1} sigma_E h for tensor noise, columns h^{-1} sigma_alpha otherwise.
pub fn noise_frame_components<const N: usize, const K: usize>(
    model: &Model<N, K>,
    u: &FramePoint<N>,
) -> Result<SMatrix<f64, N, K>> {
    let l = Local::new(model.manifold.as_ref(), u)?;
    let s = model.noise.jet(model.manifold.as_ref(), &l)?.val;
    Ok(noise_at(&s, &u.h, model.noise.is_tensor()))
}

pub(crate) fn noise_at<const N: usize, const K: usize>(s: &SMatrix<f64, N, K>, h: &Mat<N>, tensor: bool) -> SMatrix<f64, N, K> {
    if tensor {
        let sq = Mat::<N>::from_fn(|r, c| s[(r, c)]);
        let v = h.transpose() * sq * h;
        SMatrix::<f64, N, K>::from_fn(|r, c| v[(r, c)])
    } else {
        h.transpose() * s
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton points mapped onto the manifold. Points in a chart overlap are
/// returned in both charts.
pub fn sample_points<const N: usize>(m: &dyn Manifold<N>, n: usize) -> Vec<crate::geometry::ChartPoint<N>> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let q1 = radical_inverse(i, 2);
        let q2 = radical_inverse(i, 3);
        let p = match m.id() {
            "sphere2" => {
                let z = 2.0 * q1 - 1.0;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * std::f64::consts::PI * q2;
                Amb::new(r * phi.cos(), r * phi.sin(), z, 0.0)
            }
            _ => {
                let t1 = 2.0 * std::f64::consts::PI * q1;
                let t2 = 2.0 * std::f64::consts::PI * q2;
                Amb::new(t1.cos(), t1.sin(), t2.cos(), t2.sin())
            }
        };
        let cp = m.chart_from_embedding(&p);
        out.push(cp);
        for target in 0..m.charts() {
            if target != cp.chart && m.in_overlap(cp.chart, &cp.coords, target) {
                if let Ok((y, _)) = m.transition_map(cp.chart, &cp.coords, target) {
                    out.push(crate::geometry::ChartPoint { chart: target, coords: y });
                }
            }
        }
    }
    out
}

/// Minimum over quasi-random points of the smallest eigenvalue of the symmetric
/// part of the drag; an error if it is not positive.
pub fn validate_drag_bound<const N: usize, const K: usize>(model: &Model<N, K>, n_samples: usize) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let m = model.manifold.as_ref();
    let mut lo = f64::INFINITY;
    for cp in sample_points(m, n_samples) {
        let l = Local::new(m, &FramePoint { x: cp, h: Mat::<N>::identity() })?;
        let g = model.drag.jet(m, &l)?.val;
        lo = lo.min(min_sym_eig(&g));
    }
    if !(lo > 0.0) {
        return Err(Error::ModelValidation(format!("drag is not uniformly elliptic: min eigenvalue {lo:.6e}")));
    }
    Ok(lo)
}

pub const PRESETS: [&str; 4] = ["bm", "scalar_drag_noise", "fd_particle", "anisotropic_drag"];
pub const MANIFOLDS: [&str; 3] = ["circle", "torus2", "sphere2"];

/// A model on one of the catalogue manifolds.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Circle(Model<1, 1>),
    Torus(Model<2, 2>),
    Sphere(Model<2, 2>),
}

/// Runs `$body` with `$m` bound to the concrete model inside an [`AnyModel`].
#[macro_export]
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            $crate::fields::AnyModel::Circle($m) => $body,
            $crate::fields::AnyModel::Torus($m) => $body,
            $crate::fields::AnyModel::Sphere($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn manifold_id(&self) -> &'static str {
        with_model!(self, m => m.manifold.id())
    }
    pub fn name(&self) -> &str {
        with_model!(self, m => m.name.as_str())
    }
    pub fn dim(&self) -> usize {
        with_model!(self, m => m.dim())
    }
    pub fn mass(&self) -> f64 {
        with_model!(self, m => m.mass)
    }
    pub fn gamma1(&self) -> f64 {
        with_model!(self, m => m.gamma1)
    }
    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        Ok(match self {
            AnyModel::Circle(m) => AnyModel::Circle(m.with_mass(mass)?),
            AnyModel::Torus(m) => AnyModel::Torus(m.with_mass(mass)?),
            AnyModel::Sphere(m) => AnyModel::Sphere(m.with_mass(mass)?),
        })
    }
}

/// Parameter names accepted by each preset, with defaults.
pub fn preset_defaults(preset: &str) -> Result<Vec<(&'static str, f64)>> {
    Ok(match preset {
        "bm" => vec![("mass", 0.01), ("gamma0", 1.0), ("sigma0", 1.0)],
        "scalar_drag_noise" => vec![
            ("mass", 0.01),
            ("gamma0", 1.0),
            ("gamma_amp", 0.0),
            ("sigma0", 1.0),
            ("sigma_amp", 0.5),
            ("force_amp", 0.0),
        ],
        "fd_particle" => vec![
            ("mass", 0.01),
            ("kt", 0.5),
            ("gamma0", 2.0),
            ("gamma_amp", 0.5),
            ("gamma_aniso", 0.5),
            ("force_amp", 0.0),
        ],
        "anisotropic_drag" => vec![
            ("mass", 0.01),
            ("gamma0", 1.5),
            ("gamma_rot", 0.7),
            ("gamma_aniso", 0.5),
            ("sigma0", 1.0),
            ("sigma_amp", 0.3),
            ("force_amp", 0.0),
        ],
        other => {
            return Err(Error::Config(format!("unknown model preset {other:?}; valid presets: {}", PRESETS.join(", "))))
        }
    })
}

/// The ambient direction whose tangential part drives state dependence:
/// sin x_1 on the circle and torus, the height Z on the sphere.
fn profile(manifold: &str) -> Amb {
    match manifold {
        "sphere2" => Amb::new(0.0, 0.0, 1.0, 0.0),
        _ => Amb::new(0.0, 1.0, 0.0, 0.0),
    }
}

fn build<const N: usize>(
    preset: &str,
    manifold: Arc<dyn Manifold<N>>,
    p: &BTreeMap<&str, f64>,
) -> Result<Model<N, N>> {
    let prof = profile(manifold.id());
    let g = |k: &str| p[k];
    let force = AmbientVec::constant(prof * p.get("force_amp").copied().unwrap_or(0.0));
    let aniso_dir = AmbientVec::constant(Amb::new(1.0, 0.0, 0.0, 0.0));
    match preset {
        "bm" => Model::new(
            preset,
            manifold,
            force,
            TensorField::constant(g("gamma0")),
            NoiseField::Tensor(TensorField::constant(g("sigma0"))),
            g("mass"),
            None,
        ),
        "scalar_drag_noise" => Model::new(
            preset,
            manifold,
            force,
            TensorField::scalar(Affine::new(g("gamma0"), prof * g("gamma_amp"))),
            NoiseField::Tensor(TensorField::scalar(Affine::new(g("sigma0"), prof * g("sigma_amp")))),
            g("mass"),
            None,
        ),
        "fd_particle" => {
            let drag = TensorField::Terms(vec![
                TensorTerm { coef: Affine::new(g("gamma0"), prof * g("gamma_amp")), kind: TensorKind::Identity },
                TensorTerm { coef: Affine::constant(g("gamma_aniso")), kind: TensorKind::Dyad(aniso_dir) },
            ]);
            Model::fluctuation_dissipation(preset, manifold, force, drag, g("kt"), g("mass"))
        }
        "anisotropic_drag" => {
            let drag = TensorField::Terms(vec![
                TensorTerm { coef: Affine::constant(g("gamma0")), kind: TensorKind::Identity },
                TensorTerm { coef: Affine::constant(g("gamma_rot")), kind: TensorKind::Rotation },
                TensorTerm { coef: Affine::constant(g("gamma_aniso")), kind: TensorKind::Dyad(aniso_dir) },
            ]);
            Model::new(
                preset,
                manifold,
                force,
                drag,
                NoiseField::Tensor(TensorField::scalar(Affine::new(g("sigma0"), prof * g("sigma_amp")))),
                g("mass"),
                None,
            )
        }
        other => Err(Error::Config(format!("unknown model preset {other:?}"))),
    }
}

/// Builds a named preset on a named manifold; `params` override the defaults.
pub fn preset(manifold: &str, preset: &str, params: &BTreeMap<String, f64>) -> Result<AnyModel> {
    let defaults = preset_defaults(preset)?;
    let mut p: BTreeMap<&str, f64> = defaults.iter().cloned().collect();
    for (k, v) in params {
        match defaults.iter().find(|(d, _)| d == k) {
            Some((d, _)) => {
                p.insert(d, *v);
            }
            None => {
                let valid: Vec<&str> = defaults.iter().map(|(d, _)| *d).collect();
                return Err(Error::Config(format!(
                    "unknown parameter {k:?} for preset {preset}; valid keys: {}",
                    valid.join(", ")
                )));
            }
        }
    }
    Ok(match manifold {
        "circle" => AnyModel::Circle(build(preset, Arc::new(Circle::default()), &p)?),
        "torus2" => AnyModel::Torus(build(preset, Arc::new(Torus2::default()), &p)?),
        "sphere2" => AnyModel::Sphere(build(preset, Arc::new(Sphere2::default()), &p)?),
        other => {
            return Err(Error::Config(format!("unknown manifold {other:?}; valid manifolds: {}", MANIFOLDS.join(", "))))
        }
    })
}

/// Convenience for tests and examples: frame components of the force from a
/// constant ambient vector.
pub fn constant_force(c: [f64; 4]) -> AmbientVec {
    AmbientVec::constant(SVector::<f64, 4>::from_column_slice(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot2;

    fn torus() -> Arc<dyn Manifold<2>> {
        Arc::new(Torus2::default())
    }

    #[test]
    fn constant_force_on_torus() {
        // (0, 0, 0, 1) projects onto E_2 at x_2 = 0; use x_1 = pi/2 for E_1 with (-1,0,0,0)
        let f = constant_force([-1.0, 0.0, 0.0, 0.0]);
        let model = Model::<2, 2>::new(
            "t",
            torus(),
            f,
            TensorField::constant(1.0),
            NoiseField::Tensor(TensorField::constant(1.0)),
            1.0,
            None,
        )
        .unwrap();
        let u = FramePoint::new(0, Vecn::<2>::new(std::f64::consts::FRAC_PI_2, 0.0), Mat::<2>::identity());
        let fu = force_frame_components(&model, &u).unwrap();
        assert!((fu - Vecn::<2>::new(1.0, 0.0)).norm() < 1e-15);
        let ur = u.right_mul(&rot2(std::f64::consts::FRAC_PI_2));
        let fr = force_frame_components(&model, &ur).unwrap();
        assert!((fr - Vecn::<2>::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn scalar_drag_is_multiple_of_identity() {
        let model = Model::<2, 2>::new(
            "t",
            torus(),
            AmbientVec::zero(),
            TensorField::constant(2.5),
            NoiseField::Tensor(TensorField::constant(1.0)),
            1.0,
            None,
        )
        .unwrap();
        let u = FramePoint::new(0, Vecn::<2>::new(0.3, 0.1), rot2(0.77));
        let g = drag_frame_components(&model, &u).unwrap();
        assert!((g - Mat::<2>::identity() * 2.5).norm() < 1e-14);
        assert_eq!(model.gamma1, 2.5);
    }

    #[test]
    fn nonsymmetric_constant_drag_bound() {
        let drag = TensorField::Terms(vec![TensorTerm {
            coef: Affine::constant(1.0),
            kind: TensorKind::Frame(Mat::<2>::new(2.0, 1.0, 0.0, 2.0)),
        }]);
        let model = Model::<2, 2>::new(
            "t",
            torus(),
            AmbientVec::zero(),
            drag,
            NoiseField::Tensor(TensorField::constant(1.0)),
            1.0,
            None,
        )
        .unwrap();
        assert!((validate_drag_bound(&model, 10).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn frame_terms_rejected_on_sphere() {
        let drag = TensorField::Terms(vec![TensorTerm {
            coef: Affine::constant(1.0),
            kind: TensorKind::Frame(Mat::<2>::identity()),
        }]);
        let r = Model::<2, 2>::new(
            "s",
            Arc::new(Sphere2::default()),
            AmbientVec::zero(),
            drag,
            NoiseField::Tensor(TensorField::constant(1.0)),
            1.0,
            None,
        );
        assert!(matches!(r, Err(Error::ModelValidation(_))));
    }

    #[test]
    fn negative_drag_rejected() {
        let mut p = BTreeMap::new();
        p.insert("gamma_amp".to_string(), 1.5);
        let r = preset("torus2", "scalar_drag_noise", &p);
        assert!(matches!(r, Err(Error::ModelValidation(_))));
    }

    #[test]
    fn unknown_preset_parameter_lists_valid_keys() {
        let mut p = BTreeMap::new();
        p.insert("bogus".to_string(), 1.0);
        match preset("torus2", "bm", &p) {
            Err(Error::Config(msg)) => assert!(msg.contains("gamma0") && msg.contains("sigma0")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vector_list_identity_on_torus() {
        // At x = (pi/2, 0): E_1 = (-1, 0, 0, 0), E_2 = (0, 0, 0, 1).
        let noise = NoiseField::<2, 2>::Vectors([constant_force([-1.0, 0.0, 0.0, 0.0]), constant_force([0.0, 0.0, 0.0, 1.0])]);
        let model = Model::<2, 2>::new("t", torus(), AmbientVec::zero(), TensorField::constant(1.0), noise, 1.0, None).unwrap();
        let u = FramePoint::new(0, Vecn::<2>::new(std::f64::consts::FRAC_PI_2, 0.0), Mat::<2>::identity());
        let s = noise_frame_components(&model, &u).unwrap();
        assert!((s - Mat::<2>::identity()).norm() < 1e-15);
    }
}
