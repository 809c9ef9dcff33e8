//! Monte Carlo experiments on ensembles of coupled paths: momentum decay,
//! quadratic integrals, pathwise small-mass convergence, Brownian drift,
//! vertical-drift law invariance and the kinetic identity.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::SVector;
use rayon::prelude::*;

use crate::engine::{
    plan_dt, run_limit_path, run_mass_path, DriftScales, IntegratorConfig, MassState, Scheme, WienerGrid,
};
use crate::error::{Error, Result};
use crate::fields::{preset, AnyModel, Model};
use crate::geometry::{frame_distance, frame_embedding, ChartPoint, FramePoint};
use crate::linalg::{lyapunov_solve, Mat, Vecn};
use crate::with_model;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub manifold: String,
    pub preset: String,
    pub params: BTreeMap<String, f64>,
    pub masses: Vec<f64>,
    pub t_end: f64,
    /// Mass-system step (and largest step of the coupled family).
    pub dt: f64,
    /// Limit-system step where the limit runs on its own grid.
    pub limit_dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Moment order p or q.
    pub order: f64,
    pub thin: usize,
    pub scheme: Scheme,
    pub v0: Vec<f64>,
    /// Initial polar angle on the sphere.
    pub theta0: f64,
    /// Mass-system steps are at most this fraction of the mass in coupled runs.
    pub dt_fraction: f64,
    pub reortho_every: usize,
    pub chart_switch: f64,
    /// Momentum components alpha, beta of the quadratic integral.
    pub alpha: usize,
    pub beta: usize,
    pub quad_fn: String,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            manifold: "torus2".into(),
            preset: "bm".into(),
            params: BTreeMap::new(),
            masses: log_spaced(1e-1, 1e-3, 5),
            t_end: 1.0,
            dt: 1e-3,
            limit_dt: 1e-3,
            n_paths: 2000,
            master_seed: 0,
            order: 2.0,
            thin: 1,
            scheme: Scheme::ExpOu,
            v0: vec![],
            theta0: PI / 4.0,
            dt_fraction: 0.25,
            reortho_every: 1,
            chart_switch: 2.0,
            alpha: 0,
            beta: 0,
            quad_fn: "sin_x1".into(),
        }
    }
}

/// n values log-spaced from `hi` down to `lo`.
pub fn log_spaced(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.log10(), lo.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Config(format!("n_paths must be >= 2, got {}", self.n_paths)));
        }
        if self.masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Config("masses must be positive".into()));
        }
        for (i, a) in self.masses.iter().enumerate() {
            if self.masses[..i].contains(a) {
                return Err(Error::Config(format!("duplicate mass {a}")));
            }
        }
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.limit_dt > 0.0) {
            return Err(Error::Config("T and dt must be positive".into()));
        }
        if !(self.order > 0.0) {
            return Err(Error::Config("moment order must be positive".into()));
        }
        Ok(())
    }

    pub fn model(&self, mass: f64) -> Result<AnyModel> {
        let mut p = self.params.clone();
        p.insert("mass".into(), mass);
        preset(&self.manifold, &self.preset, &p)
    }

    fn steps(&self, dt: f64) -> Result<usize> {
        let n = (self.t_end / dt).round();
        if (n * dt - self.t_end).abs() > 1e-9 * self.t_end || n < 1.0 {
            return Err(Error::Config(format!("T = {} is not a positive multiple of dt = {dt}", self.t_end)));
        }
        if n > crate::engine::MAX_STEPS as f64 {
            return Err(Error::DtBudget { required_steps: n as u64, limit: crate::engine::MAX_STEPS });
        }
        Ok(n as usize)
    }

    fn cfg(&self, scheme: Scheme, dt: f64) -> Result<IntegratorConfig> {
        Ok(IntegratorConfig {
            scheme,
            dt,
            n_steps: self.steps(dt)?,
            reortho_every: self.reortho_every,
            chart_switch_threshold: self.chart_switch,
            thin: self.thin.max(1),
        })
    }
}

/// Starting frame: identity frame at the origin of chart 0, or at polar
/// angle theta0 along the first axis on the sphere.
pub fn initial_point<const N: usize>(manifold: &str, theta0: f64) -> FramePoint<N> {
    let mut x = Vecn::<N>::zeros();
    if manifold == "sphere2" {
        x[0] = (theta0 / 2.0).tan();
    }
    FramePoint { x: ChartPoint { chart: 0, coords: x }, h: Mat::<N>::identity() }
}

fn initial_velocity<const N: usize>(v0: &[f64]) -> Result<Vecn<N>> {
    match v0.len() {
        0 => Ok(Vecn::<N>::zeros()),
        l if l == N => Ok(Vecn::<N>::from_column_slice(v0)),
        l => Err(Error::Config(format!("v0 has {l} components, model dimension is {N}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPoint {
    pub m: f64,
    pub estimate: f64,
    pub se: f64,
    pub n_paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentCurve {
    pub points: Vec<MomentPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the log-log fit.
    pub residual: f64,
    pub slope_se: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Ordinary least squares of log(estimate) on log(m). Non-positive estimates
/// are excluded and counted.
pub fn fit_loglog_slope(curve: &MomentCurve) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.estimate > 0.0 && p.m > 0.0)
        .map(|p| (p.m.ln(), p.estimate.ln()))
        .collect();
    let excluded = curve.points.len() - pts.len();
    if curve.points.len() < 3 {
        return Err(Error::Config(format!("rate fit needs at least 3 masses, got {}", curve.points.len())));
    }
    if pts.len() < 3 {
        return Err(Error::Config(format!("rate fit needs 3 positive estimates, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Config("rate fit needs distinct masses".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        slope_se: (ss / (n - 2.0) / sxx).sqrt(),
        n_used: pts.len(),
        n_excluded: excluded,
    })
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f` over path indices offset..offset+n in parallel; results come back
/// in index order and the first error by index wins.
pub fn par_paths<T: Send>(n: usize, offset: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let out: Vec<Result<T>> = (0..n).into_par_iter().map(|i| f(offset + i as u64)).collect();
    out.into_iter().collect()
}

fn mass_grid(seed: u64, idx: u64, cfg: &IntegratorConfig, k: usize, n: usize) -> Result<WienerGrid> {
    let aux = if cfg.scheme == Scheme::ExpOu { n } else { 0 };
    WienerGrid::sample(seed, idx, cfg.dt, cfg.n_steps, k, aux)
}

/// |p_t|^order at every recorded step of one mass path.
fn momentum_series<const N: usize, const K: usize>(
    model: &Model<N, K>,
    spec: &EnsembleSpec,
    cfg: &IntegratorConfig,
    idx: u64,
) -> Result<Vec<f64>> {
    let init = MassState {
        u: initial_point::<N>(&spec.manifold, spec.theta0),
        v: initial_velocity::<N>(&spec.v0)?,
    };
    let grid = mass_grid(spec.master_seed, idx, cfg, K, N)?;
    let mut out = Vec::with_capacity(cfg.n_steps / cfg.thin + 2);
    run_mass_path(model, &init, &grid, cfg, |i, _, s| {
        if i % cfg.thin == 0 || i == cfg.n_steps {
            out.push(s.momentum(model.mass).norm().powf(spec.order));
        }
    })?;
    Ok(out)
}

fn mass_cfg(spec: &EnsembleSpec, model: &AnyModel) -> Result<IntegratorConfig> {
    let dt = match spec.scheme {
        Scheme::Em => spec.dt.min(0.05 * model.mass() / model.gamma1()),
        _ => spec.dt,
    };
    let dt = spec.t_end / (spec.t_end / dt).ceil();
    spec.cfg(spec.scheme, dt)
}

/// E[sup_t |p_t|^p] per mass, with a log-log rate fit.
pub fn momentum_sup_moment(spec: &EnsembleSpec) -> Result<(MomentCurve, RateFit)> {
    let curve = momentum_curve(spec, |series| series.iter().cloned().fold(0.0, f64::max), true)?;
    let fit = fit_loglog_slope(&curve)?;
    Ok((curve, fit))
}

/// sup_t E[|p_t|^q] over the recorded times, per mass, with a log-log rate fit.
pub fn momentum_pointwise_moment(spec: &EnsembleSpec) -> Result<(MomentCurve, RateFit)> {
    let curve = momentum_curve(spec, |_| 0.0, false)?;
    let fit = fit_loglog_slope(&curve)?;
    Ok((curve, fit))
}

fn momentum_curve(spec: &EnsembleSpec, per_path: impl Fn(&[f64]) -> f64 + Sync, sup_inside: bool) -> Result<MomentCurve> {
    spec.validate()?;
    let mut curve = MomentCurve::default();
    for &m in &spec.masses {
        let model = spec.model(m)?;
        let cfg = mass_cfg(spec, &model)?;
        let series: Vec<Vec<f64>> = with_model!(&model, md => {
            par_paths(spec.n_paths, 0, |i| momentum_series(md, spec, &cfg, i))?
        });
        let (estimate, se) = if sup_inside {
            let v: Vec<f64> = series.iter().map(|s| per_path(s)).collect();
            mean_se(&v)
        } else {
            pointwise_sup(&series)
        };
        curve.points.push(MomentPoint { m, estimate, se, n_paths: spec.n_paths, dt: cfg.dt });
    }
    Ok(curve)
}

/// max over t of the ensemble mean, with the standard error at the maximising time.
fn pointwise_sup(series: &[Vec<f64>]) -> (f64, f64) {
    let len = series[0].len();
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    let mut col = vec![0.0; series.len()];
    for t in 0..len {
        for (c, s) in col.iter_mut().zip(series) {
            *c = s[t];
        }
        let (m, se) = mean_se(&col);
        if m > best.0 {
            best = (m, se);
        }
    }
    best
}

/// Integrands registered for [`quad_integral_check`], evaluated on the
/// embedded base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadFn {
    Zero,
    One,
    /// Ambient coordinate 1: sin x_1 on the circle and torus, Y on the sphere.
    SinX1,
}

impl QuadFn {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(QuadFn::Zero),
            "one" => Ok(QuadFn::One),
            "sin_x1" => Ok(QuadFn::SinX1),
            o => Err(Error::Unregistered(format!("integrand {o:?}; registered: zero, one, sin_x1"))),
        }
    }

    fn eval(&self, p: &crate::geometry::Amb) -> f64 {
        match self {
            QuadFn::Zero => 0.0,
            QuadFn::One => 1.0,
            QuadFn::SinX1 => p[1],
        }
    }
}

/// sup_t |int_0^t f(x_s) d(p^a p^b)_s| along one mass path (left-point sums).
pub fn quad_integral_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    spec: &EnsembleSpec,
    cfg: &IntegratorConfig,
    f: QuadFn,
    idx: u64,
) -> Result<(f64, f64)> {
    let (a, b) = (spec.alpha, spec.beta);
    if a >= N || b >= N {
        return Err(Error::Config(format!("momentum components ({a}, {b}) out of range for dimension {N}")));
    }
    let init = MassState {
        u: initial_point::<N>(&spec.manifold, spec.theta0),
        v: initial_velocity::<N>(&spec.v0)?,
    };
    let grid = mass_grid(spec.master_seed, idx, cfg, K, N)?;
    let man = model.manifold.as_ref();
    let m = model.mass;
    let mut prev: Option<(f64, f64)> = None;
    let (mut integral, mut sup) = (0.0_f64, 0.0_f64);
    run_mass_path(model, &init, &grid, cfg, |_, _, s| {
        let pp = m * s.v[a] * m * s.v[b];
        if let Some((fv, last)) = prev {
            integral += fv * (pp - last);
            sup = sup.max(integral.abs());
        }
        let fx = f.eval(&man.embed(s.u.x.chart, &s.u.x.coords));
        prev = Some((fx, pp));
    })?;
    Ok((sup, integral))
}

/// E[sup_t |int f d(p^a p^b)|^p] per mass, with a log-log rate fit.
pub fn quad_integral_check(spec: &EnsembleSpec, f: QuadFn) -> Result<(MomentCurve, RateFit)> {
    spec.validate()?;
    let mut curve = MomentCurve::default();
    for &m in &spec.masses {
        let model = spec.model(m)?;
        let cfg = mass_cfg(spec, &model)?;
        let sups: Vec<f64> = with_model!(&model, md => {
            par_paths(spec.n_paths, 0, |i| quad_integral_path(md, spec, &cfg, f, i).map(|r| r.0.powf(spec.order)))?
        });
        let (estimate, se) = mean_se(&sups);
        curve.points.push(MomentPoint { m, estimate, se, n_paths: spec.n_paths, dt: cfg.dt });
    }
    let fit = fit_loglog_slope(&curve)?;
    Ok((curve, fit))
}

/// sup_t frame_distance(u^m_t, u_t) for each mass along one coupled path
/// family; the limit path runs on the fine grid of `plan`. Duplicated masses
/// are allowed.
pub fn coupled_sup_distances<const N: usize, const K: usize>(
    model: &Model<N, K>,
    masses: &[f64],
    plan: &crate::engine::DtPlan,
    spec: &EnsembleSpec,
    idx: u64,
) -> Result<Vec<f64>> {
    let man = model.manifold.as_ref();
    let grid = WienerGrid::sample(spec.master_seed, idx, plan.fine_dt, plan.n_fine, K, N)?;
    let u0 = initial_point::<N>(&spec.manifold, spec.theta0);
    let base = IntegratorConfig {
        scheme: Scheme::Heun,
        dt: plan.fine_dt,
        n_steps: plan.n_fine,
        reortho_every: spec.reortho_every,
        chart_switch_threshold: spec.chart_switch,
        thin: 1,
    };
    let mut limit = Vec::with_capacity(plan.n_fine + 1);
    run_limit_path(model, &u0, &grid, &base, DriftScales::default(), |_, _, u| limit.push(*u))?;
    let init = MassState { u: u0, v: initial_velocity::<N>(&spec.v0)? };
    let mut out = Vec::with_capacity(masses.len());
    for (m, &r) in masses.iter().zip(&plan.ratios) {
        let mm = model.with_mass(*m)?;
        let g = grid.coarsen(r)?;
        let cfg = IntegratorConfig { scheme: spec.scheme, dt: g.dt, n_steps: g.n_steps, ..base };
        let mut sup = 0.0_f64;
        run_mass_path(&mm, &init, &g, &cfg, |i, _, s| {
            sup = sup.max(frame_distance(man, &s.u, &limit[i * r]));
        })?;
        out.push(sup);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub curve: MomentCurve,
    pub fit: RateFit,
    /// Same experiment with every step halved.
    pub halved: Option<MomentCurve>,
    /// Largest relative change of a point under dt halving.
    pub max_rel_change: Option<f64>,
    /// Fraction of (path, mass pair) with sup distance not increasing when m drops 10x.
    pub monotone_fraction: Option<f64>,
    pub fine_dt: f64,
}

/// E[sup_t d(u^m_t, u_t)^q] per mass along coupled paths, optionally with the
/// dt-halving control.
pub fn pathwise_convergence(spec: &EnsembleSpec, halving_control: bool) -> Result<ConvergenceReport> {
    spec.validate()?;
    let model = spec.model(spec.masses[0])?;
    let run = |dt_max: f64| -> Result<(MomentCurve, Vec<Vec<f64>>, f64)> {
        let plan = plan_dt(&spec.masses, spec.t_end, dt_max, spec.dt_fraction)?;
        let sups: Vec<Vec<f64>> = with_model!(&model, md => {
            par_paths(spec.n_paths, 0, |i| coupled_sup_distances(md, &spec.masses, &plan, spec, i))?
        });
        let mut curve = MomentCurve::default();
        for (j, &m) in spec.masses.iter().enumerate() {
            let v: Vec<f64> = sups.iter().map(|s| s[j].powf(spec.order)).collect();
            let (estimate, se) = mean_se(&v);
            curve.points.push(MomentPoint {
                m,
                estimate,
                se,
                n_paths: spec.n_paths,
                dt: plan.fine_dt * plan.ratios[j] as f64,
            });
        }
        Ok((curve, sups, plan.fine_dt))
    };
    let (curve, sups, fine_dt) = run(spec.dt)?;
    let fit = fit_loglog_slope(&curve)?;
    let monotone_fraction = monotone_fraction(&spec.masses, &sups);
    let (halved, max_rel_change) = if halving_control {
        let (h, _, _) = run(spec.dt / 2.0)?;
        let change = curve
            .points
            .iter()
            .zip(&h.points)
            .map(|(a, b)| ((a.estimate - b.estimate) / b.estimate).abs())
            .fold(0.0, f64::max);
        (Some(h), Some(change))
    } else {
        (None, None)
    };
    Ok(ConvergenceReport { curve, fit, halved, max_rel_change, monotone_fraction, fine_dt })
}

fn monotone_fraction(masses: &[f64], sups: &[Vec<f64>]) -> Option<f64> {
    let mut pairs = vec![];
    for (i, a) in masses.iter().enumerate() {
        for (j, b) in masses.iter().enumerate() {
            if (a / b / 10.0 - 1.0).abs() < 0.05 {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return None;
    }
    let mut ok = 0usize;
    for s in sups {
        ok += pairs.iter().filter(|(i, j)| s[*j] <= s[*i]).count();
    }
    Some(ok as f64 / (pairs.len() * sups.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftEstimate {
    pub system: String,
    pub functional: String,
    pub target: f64,
    pub estimate: f64,
    pub se: f64,
    pub n_paths: usize,
    pub dt: f64,
}

impl DriftEstimate {
    pub fn within(&self, k_se: f64) -> bool {
        (self.estimate - self.target).abs() <= k_se * self.se
    }
}

/// Scalar functionals of the embedded base point tracked by the drift check.
#[derive(Debug, Clone, Copy, PartialEq)]
enum DriftFn {
    Angle(usize),
    Polar,
    Stereo(usize),
}

impl DriftFn {
    fn name(&self) -> String {
        match self {
            DriftFn::Angle(i) => format!("x{}", i + 1),
            DriftFn::Polar => "theta".into(),
            DriftFn::Stereo(i) => format!("z{}", i + 1),
        }
    }

    fn eval(&self, p: &crate::geometry::Amb) -> f64 {
        match *self {
            DriftFn::Angle(i) => p[2 * i + 1].atan2(p[2 * i]),
            DriftFn::Polar => p[2].clamp(-1.0, 1.0).acos(),
            DriftFn::Stereo(i) => p[i] / (1.0 + p[2]),
        }
    }

    /// Increment from the start value; angles are wrapped to (-pi, pi].
    fn delta(&self, p: &crate::geometry::Amb, start: f64) -> f64 {
        let d = self.eval(p) - start;
        match self {
            DriftFn::Angle(_) => {
                let w = (d + PI).rem_euclid(2.0 * PI) - PI;
                if w == -PI {
                    PI
                } else {
                    w
                }
            }
            _ => d,
        }
    }
}

/// Slope b of the least-squares fit y = b t + c t^2.
fn quad_fit_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let (mut s2, mut s3, mut s4, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        s2 += t * t;
        s3 += t * t * t;
        s4 += t * t * t * t;
        y1 += t * y;
        y2 += t * t * y;
    }
    (y1 * s4 - y2 * s3) / (s2 * s4 - s3 * s3)
}

const DRIFT_SAMPLES: usize = 20;

fn drift_fns(manifold: &str) -> Vec<(DriftFn, f64)> {
    match manifold {
        "sphere2" => vec![(DriftFn::Polar, f64::NAN), (DriftFn::Stereo(0), 0.0), (DriftFn::Stereo(1), 0.0)],
        "torus2" => vec![(DriftFn::Angle(0), 0.0), (DriftFn::Angle(1), 0.0)],
        _ => vec![(DriftFn::Angle(0), 0.0)],
    }
}

/// Short-time drift of chart functionals for the limit system and for the
/// mass system at mass `mass_check`, against -1/2 g^{jk} Gamma^i_{jk}.
pub fn bm_drift_check(spec: &EnsembleSpec, mass_check: f64, mass_dt: f64) -> Result<Vec<DriftEstimate>> {
    if spec.preset != "bm" {
        return Err(Error::Config(format!("bm-check needs the bm preset, got {:?}", spec.preset)));
    }
    if spec.n_paths < 2 {
        return Err(Error::Config("n_paths must be >= 2".into()));
    }
    let fns: Vec<(DriftFn, f64)> = drift_fns(&spec.manifold)
        .into_iter()
        .map(|(f, t)| (f, if f == DriftFn::Polar { 0.5 / spec.theta0.tan() } else { t }))
        .collect();
    let model = spec.model(mass_check)?;
    let mut out = vec![];
    for system in ["limit", "mass"] {
        let (scheme, dt) = if system == "limit" { (Scheme::Heun, spec.limit_dt) } else { (Scheme::ExpOu, mass_dt) };
        let cfg = spec.cfg(scheme, dt)?;
        if cfg.n_steps % DRIFT_SAMPLES != 0 {
            return Err(Error::Config(format!("T/dt = {} must be a multiple of {DRIFT_SAMPLES}", cfg.n_steps)));
        }
        let every = cfg.n_steps / DRIFT_SAMPLES;
        let ts: Vec<f64> = (1..=DRIFT_SAMPLES).map(|j| (j * every) as f64 * dt).collect();
        let slopes: Vec<Vec<f64>> = with_model!(&model, md => {
            par_paths(spec.n_paths, 0, |idx| drift_path(md, spec, &cfg, &fns, every, &ts, idx))?
        });
        for (k, (f, target)) in fns.iter().enumerate() {
            let b: Vec<f64> = slopes.iter().map(|s| s[k]).collect();
            let (estimate, se) = mean_se(&b);
            out.push(DriftEstimate {
                system: system.into(),
                functional: f.name(),
                target: *target,
                estimate,
                se,
                n_paths: spec.n_paths,
                dt,
            });
        }
    }
    Ok(out)
}

fn drift_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    spec: &EnsembleSpec,
    cfg: &IntegratorConfig,
    fns: &[(DriftFn, f64)],
    every: usize,
    ts: &[f64],
    idx: u64,
) -> Result<Vec<f64>> {
    let man = model.manifold.as_ref();
    let u0 = initial_point::<N>(&spec.manifold, spec.theta0);
    let p0 = man.embed(0, &u0.x.coords);
    let starts: Vec<f64> = fns.iter().map(|(f, _)| f.eval(&p0)).collect();
    let mut ys: Vec<Vec<f64>> = vec![Vec::with_capacity(ts.len()); fns.len()];
    let mut record = |i: usize, u: &FramePoint<N>| {
        if i > 0 && i.is_multiple_of(every) {
            let p = man.embed(u.x.chart, &u.x.coords);
            for (k, (f, _)) in fns.iter().enumerate() {
                ys[k].push(f.delta(&p, starts[k]));
            }
        }
    };
    if cfg.scheme == Scheme::Heun {
        let grid = WienerGrid::sample(spec.master_seed, idx, cfg.dt, cfg.n_steps, K, 0)?;
        run_limit_path(model, &u0, &grid, cfg, DriftScales::default(), |i, _, u| record(i, u))?;
    } else {
        let grid = WienerGrid::sample(spec.master_seed, idx, cfg.dt, cfg.n_steps, K, N)?;
        let init = MassState { u: u0, v: Vecn::<N>::zeros() };
        run_mass_path(model, &init, &grid, cfg, |i, _, s| record(i, &s.u))?;
    }
    Ok(ys.iter().map(|y| quad_fit_slope(ts, y)).collect())
}

/// Two-sample Kolmogorov-Smirnov statistic D and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, ks_q((en + 0.12 + 0.11 / en) * d))
}

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
pub fn ks_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsResult {
    pub functional: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalReport {
    /// With S^v against without S^v.
    pub main: Vec<KsResult>,
    /// With S^v against S^v scaled by 10.
    pub sv_control: Vec<KsResult>,
    /// With S^v against S^h scaled by 10.
    pub sh_control: Vec<KsResult>,
    pub n_paths: usize,
}

impl VerticalReport {
    pub fn main_passes(&self, alpha: f64) -> bool {
        self.main.iter().all(|r| r.p_value > alpha / self.main.len() as f64)
    }

    pub fn control_detected(c: &[KsResult], threshold: f64) -> bool {
        c.iter().any(|r| r.p_value < threshold)
    }
}

/// Position at T (embedded X, Y, Z) of the limit system with scaled noise-induced drift.
fn vertical_arm<const N: usize, const K: usize>(
    model: &Model<N, K>,
    spec: &EnsembleSpec,
    cfg: &IntegratorConfig,
    scales: DriftScales,
    offset: u64,
) -> Result<Vec<[f64; 3]>> {
    let u0 = initial_point::<N>(&spec.manifold, spec.theta0);
    let man = model.manifold.as_ref();
    par_paths(spec.n_paths, offset, |idx| {
        let grid = WienerGrid::sample(spec.master_seed, idx, cfg.dt, cfg.n_steps, K, 0)?;
        let u = run_limit_path(model, &u0, &grid, cfg, scales, |_, _, _| {})?;
        let p = man.embed(u.x.chart, &u.x.coords);
        Ok([p[0], p[1], p[2]])
    })
}

/// Two-sample KS tests on the position law at T with and without the vertical
/// drift, plus the x10 controls. Each arm draws fresh path indices.
pub fn vertical_drift_position_test(spec: &EnsembleSpec) -> Result<VerticalReport> {
    if spec.n_paths < 2 {
        return Err(Error::Config("n_paths must be >= 2".into()));
    }
    let model = spec.model(spec.masses.first().copied().unwrap_or(0.01))?;
    let cfg = spec.cfg(Scheme::Heun, spec.limit_dt)?;
    let arms = [
        DriftScales { sh: 1.0, sv: 1.0 },
        DriftScales { sh: 1.0, sv: 0.0 },
        DriftScales { sh: 1.0, sv: 10.0 },
        DriftScales { sh: 10.0, sv: 1.0 },
    ];
    let mut samples = vec![];
    for (a, s) in arms.iter().enumerate() {
        let off = (a * spec.n_paths) as u64;
        samples.push(with_model!(&model, md => vertical_arm(md, spec, &cfg, *s, off)?));
    }
    let names = ["X", "Y", "Z"];
    let compare = |o: usize| -> Vec<KsResult> {
        (0..3)
            .map(|k| {
                let a: Vec<f64> = samples[0].iter().map(|p| p[k]).collect();
                let b: Vec<f64> = samples[o].iter().map(|p| p[k]).collect();
                let (statistic, p_value) = ks_two_sample(&a, &b);
                KsResult { functional: names[k].into(), statistic, p_value }
            })
            .collect()
    };
    Ok(VerticalReport { main: compare(1), sv_control: compare(2), sh_control: compare(3), n_paths: spec.n_paths })
}

/// Direct Riemann sum of int m v v^T ds and the reconstruction from
/// G-contracted momentum increments, for one em path.
pub fn kinetic_identity_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    u0: &FramePoint<N>,
    cfg: &IntegratorConfig,
    seed: u64,
    idx: u64,
) -> Result<(Mat<N>, Mat<N>)> {
    if cfg.scheme != Scheme::Em {
        return Err(Error::Config("kinetic identity uses the em scheme".into()));
    }
    let grid = WienerGrid::sample(seed, idx, cfg.dt, cfg.n_steps, K, 0)?;
    let man = model.manifold.as_ref();
    let m = model.mass;
    let dt = cfg.dt;
    let mut direct = Mat::<N>::zeros();
    let mut recon = Mat::<N>::zeros();
    let mut st = MassState { u: *u0, v: Vecn::<N>::zeros() };
    let mut failure = None;
    run_mass_path(model, &st.clone(), &grid, cfg, |i, _, s| {
        if i > 0 && failure.is_none() {
            let r = (|| -> Result<Mat<N>> {
                let l = crate::geometry::Local::new(man, &st.u)?;
                let (f, g, sg) = model.frame_values(&l)?;
                let p = st.v * m;
                let p1 = s.v * m;
                let sdw = sg * SVector::<f64, K>::from_column_slice(grid.dw(i - 1));
                let x = -(p1 * p1.transpose() - p * p.transpose())
                    + (p * f.transpose() + f * p.transpose()) * dt
                    + (p * sdw.transpose() + sdw * p.transpose())
                    + sg * sg.transpose() * dt;
                lyapunov_solve(&g, &x)
            })();
            match r {
                Ok(y) => {
                    recon += y;
                    direct += st.v * st.v.transpose() * (m * dt);
                }
                Err(e) => failure = Some(e),
            }
        }
        st = *s;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((direct, recon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticReport {
    pub mean_rel_error: f64,
    pub se: f64,
    pub n_paths: usize,
    pub dt: f64,
}

/// Per-path relative Frobenius error between reconstruction and direct sum.
pub fn kinetic_identity_check(spec: &EnsembleSpec, mass: f64) -> Result<KineticReport> {
    if spec.n_paths < 2 {
        return Err(Error::Config("n_paths must be >= 2".into()));
    }
    let model = spec.model(mass)?;
    let cfg = spec.cfg(Scheme::Em, spec.dt)?;
    let errs: Vec<f64> = with_model!(&model, md => {
        let u0 = initial_point(&spec.manifold, spec.theta0);
        par_paths(spec.n_paths, 0, |i| {
            let (d, r) = kinetic_identity_path(md, &u0, &cfg, spec.master_seed, i)?;
            Ok((r - d).norm() / d.norm())
        })?
    });
    let (mean_rel_error, se) = mean_se(&errs);
    Ok(KineticReport { mean_rel_error, se, n_paths: spec.n_paths, dt: cfg.dt })
}

/// Largest per-step deviation between the run from (u0 g, g^{-1} v0, g^{-1} W)
/// and the right translate of the base run; mass system when `mass` is set,
/// limit system otherwise.
pub fn equivariance_deviation<const N: usize, const K: usize>(
    model: &Model<N, K>,
    u0: &FramePoint<N>,
    v0: &Vecn<N>,
    g: &Mat<N>,
    grid: &WienerGrid,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if K != N {
        return Err(Error::Config("equivariance needs tensor noise (k = n)".into()));
    }
    let gt = g.transpose();
    let rot = |s: &[f64]| -> Vec<f64> {
        let w = gt * Vecn::<N>::from_column_slice(&s[..N]);
        let mut o = w.as_slice().to_vec();
        o.extend_from_slice(&s[N..]);
        o
    };
    let tgrid = grid.map(rot, rot);
    let man = model.manifold.as_ref();
    let mut base_u = vec![];
    let mut base_v = vec![];
    let mut dev = 0.0_f64;
    if cfg.scheme == Scheme::Heun {
        run_limit_path(model, u0, grid, cfg, DriftScales::default(), |_, _, u| base_u.push(*u))?;
        run_limit_path(model, &u0.right_mul(g), &tgrid, cfg, DriftScales::default(), |i, _, u| {
            dev = dev.max(frame_distance(man, u, &base_u[i].right_mul(g)));
        })?;
    } else {
        let init = MassState { u: *u0, v: *v0 };
        run_mass_path(model, &init, grid, cfg, |_, _, s| {
            base_u.push(s.u);
            base_v.push(s.v);
        })?;
        let tinit = MassState { u: u0.right_mul(g), v: gt * v0 };
        run_mass_path(model, &tinit, &tgrid, cfg, |i, _, s| {
            let d = frame_distance(man, &s.u, &base_u[i].right_mul(g)) + (s.v - gt * base_v[i]).norm();
            dev = dev.max(d);
        })?;
    }
    Ok(dev)
}

/// Embedded image (point and frame vectors) of a path, flattened per step.
pub fn embedded_path<const N: usize>(m: &dyn crate::geometry::Manifold<N>, pts: &[FramePoint<N>]) -> Vec<Vec<f64>> {
    pts.iter()
        .map(|u| {
            let (p, e) = frame_embedding(m, u);
            p.iter().chain(e.iter()).cloned().collect()
        })
        .collect()
}
