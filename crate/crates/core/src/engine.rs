//! Time integration of the mass-m system and of the limiting equation, driven
//! by seeded Wiener grids that can be shared across coupled runs.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::drift::{report_from, PointCoeffs};
use crate::error::{Error, Result};
use crate::fields::Model;
use crate::geometry::{transport, ChartPoint, FramePoint, FrameTangent, Local};
use crate::linalg::{lyapunov_solve, matrix_exp, ortho_defect, polar, sym_sqrt_psd, Mat, Vecn};

/// Largest number of fine steps a single path may take.
pub const MAX_STEPS: u64 = 100_000_000;

/// Frames are projected back onto O(n) early once ||h^T h - I|| exceeds this,
/// whatever `reortho_every` says.
pub const ORTHO_TOL: f64 = 1e-9;

/// Brownian increments on a uniform grid, reproducible from (master_seed, path_index).
/// Each step also carries `aux_dim` independent standard normals used by the
/// exponential integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub k: usize,
    pub aux_dim: usize,
    pub master_seed: u64,
    pub path_index: u64,
    pub increments: Vec<f64>,
    pub aux: Vec<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn sample_wiener(master_seed: u64, path_index: u64, dt: f64, n_steps: usize, k: usize) -> Result<WienerGrid> {
    WienerGrid::sample(master_seed, path_index, dt, n_steps, k, k)
}

impl WienerGrid {
    pub fn sample(master_seed: u64, path_index: u64, dt: f64, n_steps: usize, k: usize, aux_dim: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if n_steps as u64 > MAX_STEPS {
            return Err(Error::DtBudget { required_steps: n_steps as u64, limit: MAX_STEPS });
        }
        let sd = dt.sqrt();
        let mut r = stream_rng(master_seed, 2 * path_index);
        let increments = (0..n_steps * k).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect();
        let mut r = stream_rng(master_seed, 2 * path_index + 1);
        let aux = (0..n_steps * aux_dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        Ok(WienerGrid { dt, n_steps, k, aux_dim, master_seed, path_index, increments, aux })
    }

    pub fn dw(&self, step: usize) -> &[f64] {
        &self.increments[step * self.k..(step + 1) * self.k]
    }

    pub fn aux_at(&self, step: usize) -> &[f64] {
        &self.aux[step * self.aux_dim..(step + 1) * self.aux_dim]
    }

    /// Grid with step r*dt: increments are summed, auxiliary normals combined as sum/sqrt(r).
    pub fn coarsen(&self, r: usize) -> Result<Self> {
        if r == 0 || !self.n_steps.is_multiple_of(r) {
            return Err(Error::Config(format!("cannot coarsen {} steps by {r}", self.n_steps)));
        }
        if r == 1 {
            return Ok(self.clone());
        }
        let n = self.n_steps / r;
        let mut inc = vec![0.0; n * self.k];
        let mut aux = vec![0.0; n * self.aux_dim];
        let s = 1.0 / (r as f64).sqrt();
        for i in 0..n {
            for j in 0..r {
                let st = i * r + j;
                for a in 0..self.k {
                    inc[i * self.k + a] += self.dw(st)[a];
                }
                for a in 0..self.aux_dim {
                    aux[i * self.aux_dim + a] += self.aux_at(st)[a] * s;
                }
            }
        }
        Ok(WienerGrid { dt: self.dt * r as f64, n_steps: n, increments: inc, aux, ..self.clone() })
    }

    /// Applies a linear map to every increment and (separately) every auxiliary vector.
    pub fn map(&self, f_inc: impl Fn(&[f64]) -> Vec<f64>, f_aux: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_steps {
            out.increments[i * self.k..(i + 1) * self.k].copy_from_slice(&f_inc(self.dw(i)));
            out.aux[i * self.aux_dim..(i + 1) * self.aux_dim].copy_from_slice(&f_aux(self.aux_at(i)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Euler-Maruyama in v with midpoint transport; needs dt <= 0.05 m / gamma1.
    Em,
    /// Frozen-coefficient exact Ornstein-Uhlenbeck step with exact displacement.
    ExpOu,
    /// Stratonovich Heun for the limiting equation.
    Heun,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(Scheme::Em),
            "exp_ou" => Ok(Scheme::ExpOu),
            "heun" => Ok(Scheme::Heun),
            o => Err(Error::Config(format!("unknown scheme {o:?}; valid: em, exp_ou, heun"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Em => "em",
            Scheme::ExpOu => "exp_ou",
            Scheme::Heun => "heun",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: usize,
    pub reortho_every: usize,
    pub chart_switch_threshold: f64,
    /// Record every `thin`-th step in trajectories.
    pub thin: usize,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, n_steps: usize) -> Self {
        IntegratorConfig { scheme, dt, n_steps, reortho_every: 1, chart_switch_threshold: 2.0, thin: 1 }
    }

    fn reortho_at(&self, step: usize) -> bool {
        self.reortho_every <= 1 || (step + 1).is_multiple_of(self.reortho_every)
    }
}

/// Multipliers on the noise-induced drift parts of the limiting equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftScales {
    pub sh: f64,
    pub sv: f64,
}

impl Default for DriftScales {
    fn default() -> Self {
        DriftScales { sh: 1.0, sv: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassState<const N: usize> {
    pub u: FramePoint<N>,
    pub v: Vecn<N>,
}

impl<const N: usize> MassState<N> {
    pub fn momentum(&self, mass: f64) -> Vecn<N> {
        self.v * mass
    }
}

fn to_svec<const K: usize>(s: &[f64]) -> SVector<f64, K> {
    SVector::<f64, K>::from_column_slice(s)
}

/// One step of the mass-m system.
pub fn step_mass_system<const N: usize, const K: usize>(
    model: &Model<N, K>,
    state: &MassState<N>,
    dw: &SVector<f64, K>,
    aux: &Vecn<N>,
    cfg: &IntegratorConfig,
) -> Result<MassState<N>> {
    mass_step(model, state, dw, aux, cfg, true)
}

fn check_em<const N: usize, const K: usize>(model: &Model<N, K>, dt: f64) -> Result<()> {
    let lim = 0.05 * model.mass / model.gamma1;
    if dt > lim * (1.0 + 1e-12) {
        return Err(Error::Config(format!("em needs dt <= 0.05 m / gamma1 = {lim:e}, got {dt:e}")));
    }
    Ok(())
}

fn mass_step<const N: usize, const K: usize>(
    model: &Model<N, K>,
    state: &MassState<N>,
    dw: &SVector<f64, K>,
    aux: &Vecn<N>,
    cfg: &IntegratorConfig,
    reortho: bool,
) -> Result<MassState<N>> {
    let man = model.manifold.as_ref();
    let l = Local::new(man, &state.u)?;
    let (f, g, s) = model.frame_values(&l)?;
    let m = model.mass;
    let dt = cfg.dt;
    let v = state.v;
    let (v1, disp) = match cfg.scheme {
        Scheme::Em => {
            check_em(model, dt)?;
            let v1 = v + (f - g * v) * (dt / m) + s * dw / m;
            (v1, (v + v1) * (0.5 * dt))
        }
        Scheme::ExpOu => {
            let ginv = g.try_inverse().ok_or_else(|| Error::Singular("drag".into()))?;
            let e = matrix_exp(&(g * (-dt / m)))?;
            let id = Mat::<N>::identity();
            let x = lyapunov_solve(&g, &(s * s.transpose()))? / m;
            let q = x - e * x * e.transpose();
            let c: SMatrix<f64, N, K> = ginv * (id - e) * s;
            let resid = q - c * c.transpose() / dt;
            let xi = c * dw / dt + sym_sqrt_psd(&resid) * aux;
            let v1 = e * v + (id - e) * ginv * f + xi;
            let disp = ginv * (f * dt + s * dw - (v1 - v) * m);
            (v1, disp)
        }
        Scheme::Heun => return Err(Error::Config("heun integrates the limiting equation only".into())),
    };
    let mut u1 = transport(man, &state.u, &disp, cfg.chart_switch_threshold, reortho)?;
    if !reortho && ortho_defect(&u1.h) > ORTHO_TOL {
        u1.h = polar(&u1.h)?;
    }
    Ok(MassState { u: u1, v: v1 })
}

/// Increment drift*dt + sum_alpha V_alpha dW^alpha of the limiting equation at `pc`.
fn limit_increment<const N: usize, const K: usize>(
    pc: &PointCoeffs<N, K>,
    dw: &SVector<f64, K>,
    dt: f64,
    scales: DriftScales,
) -> FrameTangent<N> {
    let rep = report_from(pc);
    let mut inc = (rep.lift + rep.sh * scales.sh + rep.sv * scales.sv) * dt;
    for a in 0..K {
        inc = inc + rep.diffusion[a] * dw[a];
    }
    inc
}

/// One Stratonovich Heun step of the limiting equation.
pub fn step_limit_system<const N: usize, const K: usize>(
    model: &Model<N, K>,
    u: &FramePoint<N>,
    dw: &SVector<f64, K>,
    cfg: &IntegratorConfig,
) -> Result<FramePoint<N>> {
    limit_step(model, u, dw, cfg, DriftScales::default(), true)
}

pub fn step_limit_system_scaled<const N: usize, const K: usize>(
    model: &Model<N, K>,
    u: &FramePoint<N>,
    dw: &SVector<f64, K>,
    cfg: &IntegratorConfig,
    scales: DriftScales,
) -> Result<FramePoint<N>> {
    limit_step(model, u, dw, cfg, scales, true)
}

fn limit_step<const N: usize, const K: usize>(
    model: &Model<N, K>,
    u: &FramePoint<N>,
    dw: &SVector<f64, K>,
    cfg: &IntegratorConfig,
    scales: DriftScales,
    reortho: bool,
) -> Result<FramePoint<N>> {
    if cfg.scheme != Scheme::Heun {
        return Err(Error::Config(format!("limiting equation uses heun, got {}", cfg.scheme.name())));
    }
    let man = model.manifold.as_ref();
    let pc0 = PointCoeffs::new(model, u)?;
    let inc0 = limit_increment(&pc0, dw, cfg.dt, scales);
    let pred = FramePoint {
        x: ChartPoint { chart: u.x.chart, coords: u.x.coords + inc0.dx },
        h: polar(&(u.h + inc0.dh))?,
    };
    let pc1 = PointCoeffs::new(model, &pred)?;
    let inc1 = limit_increment(&pc1, dw, cfg.dt, scales);
    let mut h = u.h + (inc0.dh + inc1.dh) * 0.5;
    if reortho || ortho_defect(&h) > ORTHO_TOL {
        h = polar(&h)?;
    }
    let out = FramePoint { x: ChartPoint { chart: u.x.chart, coords: u.x.coords + (inc0.dx + inc1.dx) * 0.5 }, h };
    man.canonical(&out, cfg.chart_switch_threshold)
}

fn check_grid(cfg: &IntegratorConfig, w: &WienerGrid, k: usize, aux: usize) -> Result<()> {
    if (cfg.dt - w.dt).abs() > 1e-12 * w.dt {
        return Err(Error::Config(format!("integrator dt {} differs from grid dt {}", cfg.dt, w.dt)));
    }
    if w.k != k || w.aux_dim < aux {
        return Err(Error::Config(format!("grid has k = {}, aux = {}; need k = {k}, aux = {aux}", w.k, w.aux_dim)));
    }
    if cfg.n_steps > w.n_steps {
        return Err(Error::Config(format!("{} steps requested, grid has {}", cfg.n_steps, w.n_steps)));
    }
    Ok(())
}

/// Integrates the mass system over `cfg.n_steps` grid steps, calling `visit`
/// after the initial state and after every step.
pub fn run_mass_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    init: &MassState<N>,
    wiener: &WienerGrid,
    cfg: &IntegratorConfig,
    mut visit: impl FnMut(usize, f64, &MassState<N>),
) -> Result<MassState<N>> {
    let aux_need = if cfg.scheme == Scheme::ExpOu { N } else { 0 };
    check_grid(cfg, wiener, K, aux_need)?;
    let mut st = *init;
    visit(0, 0.0, &st);
    let zero = Vecn::<N>::zeros();
    for i in 0..cfg.n_steps {
        let dw = to_svec::<K>(wiener.dw(i));
        let aux = if aux_need > 0 { Vecn::<N>::from_column_slice(&wiener.aux_at(i)[..N]) } else { zero };
        st = mass_step(model, &st, &dw, &aux, cfg, cfg.reortho_at(i))?;
        visit(i + 1, (i + 1) as f64 * cfg.dt, &st);
    }
    Ok(st)
}

pub fn run_limit_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    init: &FramePoint<N>,
    wiener: &WienerGrid,
    cfg: &IntegratorConfig,
    scales: DriftScales,
    mut visit: impl FnMut(usize, f64, &FramePoint<N>),
) -> Result<FramePoint<N>> {
    check_grid(cfg, wiener, K, 0)?;
    let mut u = *init;
    visit(0, 0.0, &u);
    for i in 0..cfg.n_steps {
        let dw = to_svec::<K>(wiener.dw(i));
        u = limit_step(model, &u, &dw, cfg, scales, cfg.reortho_at(i))?;
        visit(i + 1, (i + 1) as f64 * cfg.dt, &u);
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub points: Vec<FramePoint<N>>,
    pub velocities: Option<Vec<Vecn<N>>>,
    pub stride: usize,
}

fn keep(step: usize, n: usize, thin: usize) -> bool {
    step.is_multiple_of(thin.max(1)) || step == n
}

pub fn simulate_mass_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    init: &MassState<N>,
    wiener: &WienerGrid,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<N>> {
    let mut tr = Trajectory { times: vec![], points: vec![], velocities: Some(vec![]), stride: cfg.thin.max(1) };
    run_mass_path(model, init, wiener, cfg, |i, t, s| {
        if keep(i, cfg.n_steps, cfg.thin) {
            tr.times.push(t);
            tr.points.push(s.u);
            tr.velocities.as_mut().unwrap().push(s.v);
        }
    })?;
    Ok(tr)
}

pub fn simulate_limit_path<const N: usize, const K: usize>(
    model: &Model<N, K>,
    init: &FramePoint<N>,
    wiener: &WienerGrid,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<N>> {
    let mut tr = Trajectory { times: vec![], points: vec![], velocities: None, stride: cfg.thin.max(1) };
    run_limit_path(model, init, wiener, cfg, DriftScales::default(), |i, t, u| {
        if keep(i, cfg.n_steps, cfg.thin) {
            tr.times.push(t);
            tr.points.push(*u);
        }
    })?;
    Ok(tr)
}

/// Step sizes for a family of masses sharing one fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DtPlan {
    pub fine_dt: f64,
    pub n_fine: usize,
    /// Fine steps per mass-system step, one entry per mass.
    pub ratios: Vec<usize>,
}

/// Mass system step min(dt_max, fraction * m), snapped to a power-of-two
/// multiple of the fine step; the fine step is dt_max / 2^j, the largest such
/// value not exceeding fraction * min(m).
pub fn plan_dt(masses: &[f64], t_end: f64, dt_max: f64, fraction: f64) -> Result<DtPlan> {
    if masses.is_empty() || masses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Config("masses must be positive".into()));
    }
    if !(dt_max > 0.0 && t_end > 0.0 && fraction > 0.0) {
        return Err(Error::Config("dt, T and the mass fraction must be positive".into()));
    }
    let mmin = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let target = (fraction * mmin).min(dt_max);
    let j = (dt_max / target).log2().max(0.0).ceil();
    let base = (t_end / dt_max).round();
    let required = base * 2f64.powf(j);
    if !(required.is_finite()) || required > MAX_STEPS as f64 || j > 62.0 {
        return Err(Error::DtBudget { required_steps: required.min(u64::MAX as f64) as u64, limit: MAX_STEPS });
    }
    if (base * dt_max - t_end).abs() > 1e-9 * t_end {
        return Err(Error::Config(format!("T = {t_end} is not a multiple of dt = {dt_max}")));
    }
    let pow = 1usize << (j as u32);
    let fine_dt = dt_max / pow as f64;
    let n_fine = base as usize * pow;
    let ratios = masses
        .iter()
        .map(|m| {
            let want = ((fraction * m).min(dt_max) / fine_dt * (1.0 + 1e-12)).floor().max(1.0) as usize;
            let mut r = 1usize;
            while r * 2 <= want && n_fine.is_multiple_of(r * 2) {
                r *= 2;
            }
            r
        })
        .collect();
    Ok(DtPlan { fine_dt, n_fine, ratios })
}

/// Mass paths for each mass and the limit path, all driven by `wiener`
/// (the finest grid). `ratios[i]` fine steps make one step of mass i; the
/// limit path runs on the fine grid.
pub fn coupled_family<const N: usize, const K: usize>(
    model_base: &Model<N, K>,
    masses: &[f64],
    init: &MassState<N>,
    wiener: &WienerGrid,
    cfg: &IntegratorConfig,
    ratios: &[usize],
) -> Result<(Vec<Trajectory<N>>, Trajectory<N>)> {
    if ratios.len() != masses.len() {
        return Err(Error::Config("one ratio per mass required".into()));
    }
    let mut out = Vec::with_capacity(masses.len());
    for (m, r) in masses.iter().zip(ratios) {
        let model = model_base.with_mass(*m)?;
        let grid = wiener.coarsen(*r)?;
        let c = IntegratorConfig { dt: grid.dt, n_steps: grid.n_steps, ..*cfg };
        out.push(simulate_mass_path(&model, init, &grid, &c)?);
    }
    let lc = IntegratorConfig { scheme: Scheme::Heun, dt: wiener.dt, n_steps: wiener.n_steps, ..*cfg };
    let limit = simulate_limit_path(model_base, &init.u, wiener, &lc)?;
    Ok((out, limit))
}
