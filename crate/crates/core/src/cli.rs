//! Experiment dispatch, output files and exit codes for the command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{thread_count, RunConfig, System};
use crate::drift::noise_induced_drift;
use crate::engine::{simulate_limit_path, simulate_mass_path, IntegratorConfig, MassState, Scheme, Trajectory, WienerGrid};
use crate::error::{Error, Result};
use crate::fields::{preset, sample_points, Model};
use crate::geometry::FramePoint;
use crate::harness::{
    bm_drift_check, initial_point, momentum_pointwise_moment, momentum_sup_moment, pathwise_convergence,
    quad_integral_check, vertical_drift_position_test, MomentCurve, QuadFn, RateFit,
};
use crate::linalg::{Mat, Vecn};
use crate::with_model;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_MODEL: i32 = 2;
pub const EXIT_DT_BUDGET: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ModelValidation(_) => EXIT_MODEL,
        Error::DtBudget { .. } => EXIT_DT_BUDGET,
        _ => EXIT_OTHER,
    }
}

/// Runs the configured experiment on a pool of the requested size, prints the
/// summary line and returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let res = thread_count(cfg).and_then(|n| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| execute(cfg))
    });
    match res {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Writes the experiment outputs into `cfg.out_dir` and returns the summary line.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    fs::create_dir_all(&cfg.out_dir)?;
    let spec = &cfg.spec;
    let exp = cfg.experiment.as_str();
    match exp {
        "simulate" => {
            let model = preset(&spec.manifold, &spec.preset, &spec.params)?;
            let csv = with_model!(&model, m => trajectory_csv(m, cfg)?);
            fs::write(cfg.out_dir.join("trajectory.csv"), csv)?;
            Ok(format!(
                "simulate: {} path, {} steps of {:e}, written to {}",
                if cfg.system == System::Mass { "mass" } else { "limit" },
                (spec.t_end / spec.dt).round(),
                spec.dt,
                cfg.out_dir.join("trajectory.csv").display()
            ))
        }
        "momentum" | "momentum-pointwise" | "quad-check" => {
            let q = spec.order / 2.0;
            let (curve, fit, band) = match exp {
                "momentum" => {
                    let (c, f) = momentum_sup_moment(spec)?;
                    (c, f, (0.85 * q, Some(1.15 * q)))
                }
                "momentum-pointwise" => {
                    let (c, f) = momentum_pointwise_moment(spec)?;
                    (c, f, (0.9 * q, Some(1.1 * q)))
                }
                _ => {
                    let (c, f) = quad_integral_check(spec, QuadFn::parse(&spec.quad_fn)?)?;
                    (c, f, (q - 0.2, None))
                }
            };
            write_curve(cfg, &curve, &fit, band, vec![])
        }
        "converge" => {
            let r = pathwise_convergence(spec, cfg.dt_halving)?;
            let q = spec.order / 2.0;
            let mut extra = vec![json!({
                "record": "control",
                "experiment": exp,
                "fine_dt": r.fine_dt,
                "max_rel_change_dt_halving": r.max_rel_change,
                "monotone_fraction": r.monotone_fraction,
                "strictly_decreasing": strictly_decreasing(&r.curve),
            })];
            if let Some(h) = &r.halved {
                extra.extend(h.points.iter().map(|p| point_record(cfg, "converge-dt-halved", p)));
            }
            let mut s = write_curve(cfg, &r.curve, &r.fit, (0.6 * q, Some(1.4 * q)), extra)?;
            if let Some(c) = r.max_rel_change {
                write!(s, "; dt-halving change {c:.3}").unwrap();
            }
            Ok(s)
        }
        "drift" => {
            let model = preset(&spec.manifold, &spec.preset, &spec.params)?;
            let csv = with_model!(&model, m => drift_csv(m, cfg)?);
            fs::write(cfg.out_dir.join("drift.csv"), csv)?;
            Ok(format!("drift: {} points written to {}", cfg.drift_points, cfg.out_dir.join("drift.csv").display()))
        }
        "bm-check" => {
            let est = bm_drift_check(spec, cfg.mass_check, cfg.mass_dt)?;
            let mut lines = vec![header_record(cfg)];
            for e in &est {
                lines.push(json!({
                    "record": "drift",
                    "experiment": exp,
                    "model": model_label(cfg),
                    "system": e.system,
                    "functional": e.functional,
                    "target": e.target,
                    "estimate": e.estimate,
                    "se": e.se,
                    "n_paths": e.n_paths,
                    "dt": e.dt,
                    "seed": spec.master_seed,
                    "within_3se": e.within(3.0),
                }));
            }
            write_jsonl(&cfg.out_dir, &lines)?;
            let ok = est.iter().filter(|e| e.within(3.0)).count();
            Ok(format!("bm-check: {ok}/{} drift estimates within 3 SE: {}", est.len(), verdict(ok == est.len())))
        }
        "vertical-check" => {
            let r = vertical_drift_position_test(spec)?;
            let mut lines = vec![header_record(cfg)];
            for (arm, res) in [("without_sv", &r.main), ("sv_x10", &r.sv_control), ("sh_x10", &r.sh_control)] {
                for k in res {
                    lines.push(json!({
                        "record": "ks",
                        "experiment": exp,
                        "model": model_label(cfg),
                        "comparison": arm,
                        "functional": k.functional,
                        "statistic": k.statistic,
                        "p_value": k.p_value,
                        "n_paths": r.n_paths,
                        "dt": spec.limit_dt,
                        "seed": spec.master_seed,
                    }));
                }
            }
            write_jsonl(&cfg.out_dir, &lines)?;
            let minp = r.main.iter().map(|k| k.p_value).fold(1.0, f64::min);
            Ok(format!(
                "vertical-check: min p-value without S^v {minp:.4} (threshold {:.4}): {}; x10 S^v control detected: {}; x10 S^h control detected: {}",
                0.01 / 3.0,
                verdict(r.main_passes(0.01)),
                crate::harness::VerticalReport::control_detected(&r.sv_control, 1e-3),
                crate::harness::VerticalReport::control_detected(&r.sh_control, 1e-3),
            ))
        }
        "validate" => {
            let model = preset(&spec.manifold, &spec.preset, &spec.params)?;
            let lines = vec![
                header_record(cfg),
                json!({"record": "validate", "experiment": exp, "model": model_label(cfg), "gamma1": model.gamma1()}),
            ];
            write_jsonl(&cfg.out_dir, &lines)?;
            Ok(format!("validate: {} is valid, gamma1 = {:.6e}", model_label(cfg), model.gamma1()))
        }
        other => Err(Error::Config(format!("unknown experiment {other:?}"))),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn model_label(cfg: &RunConfig) -> String {
    format!("{}/{}", cfg.spec.preset, cfg.spec.manifold)
}

fn strictly_decreasing(c: &MomentCurve) -> bool {
    let mut pts = c.points.clone();
    pts.sort_by(|a, b| b.m.total_cmp(&a.m));
    pts.windows(2).all(|w| w[1].estimate < w[0].estimate)
}

fn header_record(cfg: &RunConfig) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("record".into(), json!("config"));
    for (k, v) in &cfg.resolved {
        m.insert(k.clone(), toml_to_json(v));
    }
    Value::Object(m)
}

fn toml_to_json(v: &toml::Value) -> Value {
    match v {
        toml::Value::String(s) => json!(s),
        toml::Value::Integer(i) => json!(i),
        toml::Value::Float(f) => json!(f),
        toml::Value::Boolean(b) => json!(b),
        toml::Value::Array(a) => Value::Array(a.iter().map(toml_to_json).collect()),
        other => json!(other.to_string()),
    }
}

fn point_record(cfg: &RunConfig, experiment: &str, p: &crate::harness::MomentPoint) -> Value {
    json!({
        "experiment": experiment,
        "model": model_label(cfg),
        "m": p.m,
        "estimate": p.estimate,
        "se": p.se,
        "n_paths": p.n_paths,
        "dt": p.dt,
        "seed": cfg.spec.master_seed,
    })
}

fn write_jsonl(dir: &Path, lines: &[Value]) -> Result<()> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    fs::write(dir.join("results.jsonl"), s)?;
    Ok(())
}

fn write_curve(cfg: &RunConfig, curve: &MomentCurve, fit: &RateFit, band: (f64, Option<f64>), extra: Vec<Value>) -> Result<String> {
    let exp = cfg.experiment.as_str();
    let mut lines = vec![header_record(cfg)];
    lines.extend(curve.points.iter().map(|p| point_record(cfg, exp, p)));
    lines.extend(extra);
    let inside = fit.slope >= band.0 && band.1.is_none_or(|hi| fit.slope <= hi);
    lines.push(json!({
        "record": "fit",
        "experiment": exp,
        "slope": fit.slope,
        "slope_se": fit.slope_se,
        "intercept": fit.intercept,
        "residual": fit.residual,
        "band": [band.0, band.1],
        "in_band": inside,
    }));
    write_jsonl(&cfg.out_dir, &lines)?;
    let hi = band.1.map(|h| format!("{h:.3}")).unwrap_or_else(|| "inf".into());
    Ok(format!(
        "{exp}: slope {:.4} +/- {:.4}, band [{:.3}, {hi}]: {}",
        fit.slope,
        fit.slope_se,
        band.0,
        verdict(inside)
    ))
}

fn config_comments(cfg: &RunConfig) -> String {
    cfg.resolved.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
}

/// Trajectory CSV: `t,chart,x1..xn,h11..hnn[,v1..vn]` with a commented config header.
pub fn format_trajectory<const N: usize>(header: &str, tr: &Trajectory<N>) -> String {
    let mut s = String::from(header);
    let mut cols = vec!["t".to_string(), "chart".to_string()];
    cols.extend((1..=N).map(|i| format!("x{i}")));
    for a in 1..=N {
        cols.extend((1..=N).map(|b| format!("h{a}{b}")));
    }
    if tr.velocities.is_some() {
        cols.extend((1..=N).map(|i| format!("v{i}")));
    }
    s.push_str(&cols.join(","));
    s.push('\n');
    for (k, (t, u)) in tr.times.iter().zip(&tr.points).enumerate() {
        write!(s, "{t:?},{}", u.x.chart).unwrap();
        for x in u.x.coords.iter() {
            write!(s, ",{x:?}").unwrap();
        }
        for a in 0..N {
            for b in 0..N {
                write!(s, ",{:?}", u.h[(a, b)]).unwrap();
            }
        }
        if let Some(v) = &tr.velocities {
            for x in v[k].iter() {
                write!(s, ",{x:?}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

fn trajectory_csv<const N: usize, const K: usize>(model: &Model<N, K>, cfg: &RunConfig) -> Result<String> {
    let spec = &cfg.spec;
    let n = (spec.t_end / spec.dt).round();
    if (n * spec.dt - spec.t_end).abs() > 1e-9 * spec.t_end {
        return Err(Error::Config(format!("T = {} is not a multiple of dt = {}", spec.t_end, spec.dt)));
    }
    if n > crate::engine::MAX_STEPS as f64 {
        return Err(Error::DtBudget { required_steps: n as u64, limit: crate::engine::MAX_STEPS });
    }
    let u0: FramePoint<N> = initial_point(&spec.manifold, spec.theta0);
    let scheme = match cfg.system {
        System::Limit => Scheme::Heun,
        System::Mass if spec.scheme == Scheme::Heun => {
            return Err(Error::Config("sim.scheme = heun applies to the limit system only".into()))
        }
        System::Mass => spec.scheme,
    };
    let ic = IntegratorConfig {
        scheme,
        dt: spec.dt,
        n_steps: n as usize,
        reortho_every: spec.reortho_every,
        chart_switch_threshold: spec.chart_switch,
        thin: spec.thin,
    };
    let grid = WienerGrid::sample(spec.master_seed, cfg.path_index, spec.dt, ic.n_steps, K, N)?;
    let tr = match cfg.system {
        System::Limit => simulate_limit_path(model, &u0, &grid, &ic)?,
        System::Mass => {
            let v = match spec.v0.len() {
                0 => Vecn::<N>::zeros(),
                l if l == N => Vecn::<N>::from_column_slice(&spec.v0),
                l => return Err(Error::Config(format!("v0 has {l} components, model dimension is {N}"))),
            };
            simulate_mass_path(model, &MassState { u: u0, v }, &grid, &ic)?
        }
    };
    Ok(format_trajectory(&config_comments(cfg), &tr))
}

fn drift_csv<const N: usize, const K: usize>(model: &Model<N, K>, cfg: &RunConfig) -> Result<String> {
    let mut s = config_comments(cfg);
    let mut cols = vec!["chart".to_string()];
    cols.extend((1..=N).map(|i| format!("x{i}")));
    cols.extend((1..=N).map(|i| format!("sh_x{i}")));
    for a in 1..=N {
        cols.extend((1..=N).map(|b| format!("sh_h{a}{b}")));
    }
    for a in 1..=N {
        cols.extend((1..=N).map(|b| format!("sv_h{a}{b}")));
    }
    s.push_str(&cols.join(","));
    s.push('\n');
    for cp in sample_points(model.manifold.as_ref(), cfg.drift_points) {
        let r = noise_induced_drift(model, &FramePoint { x: cp, h: Mat::<N>::identity() })?;
        write!(s, "{}", cp.chart).unwrap();
        for x in cp.coords.iter().chain(r.sh.dx.iter()) {
            write!(s, ",{x:?}").unwrap();
        }
        for m in [&r.sh.dh, &r.sv.dh] {
            for a in 0..N {
                for b in 0..N {
                    write!(s, ",{:?}", m[(a, b)]).unwrap();
                }
            }
        }
        s.push('\n');
    }
    Ok(s)
}
