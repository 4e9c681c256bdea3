//! Command implementations. Each command loads the shared run
//! configuration, produces its artifact set in the output directory and
//! reports failures through the two-tier exit code scheme (2 config, 3
//! numerical).

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use delaywave_core::assembly::{AssemblyError, SeriesSolution};
use delaywave_core::field::{Quantity, Region};
use delaywave_core::kernels::{build_stepwise, KernelError, KernelKind, KernelParams, Side};
use delaywave_core::numeric::linspace;
use delaywave_core::oracle_fd::{compare, extract_grid, solve_fd, FdError};
use delaywave_core::reduction::{reduce, ReducedProblem, ReductionError};

use crate::config::{Format, RunConfig};
use crate::output::{write_field_csv, write_json, write_kernel_csv, KernelTable};
use crate::AppError;

fn from_reduction(e: ReductionError) -> AppError {
    match e {
        ReductionError::IncompatibleCoefficients { .. }
        | ReductionError::BadParameter { .. }
        | ReductionError::HorizonNotMultipleOfDelay { .. } => AppError::Config(e.to_string()),
        _ => AppError::Numerical(e.to_string()),
    }
}

fn from_assembly(e: AssemblyError) -> AppError {
    match e {
        AssemblyError::Reduction(inner) => from_reduction(inner),
        _ => AppError::Numerical(e.to_string()),
    }
}

fn from_fd(e: FdError) -> AppError {
    match e {
        FdError::BadConfig { .. } | FdError::CflViolation { .. } | FdError::MisalignedHorizon { .. } => {
            AppError::Config(e.to_string())
        }
        _ => AppError::Numerical(e.to_string()),
    }
}

fn reduced(cfg: &RunConfig) -> Result<ReducedProblem, AppError> {
    let spec = cfg.problem_spec()?;
    let red = reduce(&spec).map_err(from_reduction)?;
    for w in &red.corner_warnings {
        eprintln!("warning: {w}");
    }
    Ok(red)
}

fn build_solution(cfg: &RunConfig) -> Result<SeriesSolution, AppError> {
    let red = reduced(cfg)?;
    SeriesSolution::build(red, cfg.solver_options()).map_err(from_assembly)
}

fn output_grids(red: &ReducedProblem, cfg: &RunConfig) -> (Vec<f64>, Vec<f64>) {
    let ts = linspace(-red.tau, red.t_end, cfg.output.t_points);
    let xs = linspace(0.0, red.length, cfg.output.x_points);
    (ts, xs)
}

/// Output grid snapped onto the finite-difference lattice, so the oracle
/// field can be restricted exactly and both methods are sampled at literally
/// identical coordinates.
fn snapped_grids(red: &ReducedProblem, cfg: &RunConfig) -> (Vec<f64>, Vec<f64>) {
    let (ts, xs) = output_grids(red, cfg);
    let m = cfg.oracle.m_per_tau as f64;
    let dt = red.tau / m;
    let nx = cfg.oracle.nx as f64;
    let rows = cfg.oracle.m_per_tau * ((red.t_end / red.tau).round() as usize + 1);
    let mut ts: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let j = (t / dt + m).round().clamp(0.0, rows as f64);
            (j - m) * dt
        })
        .collect();
    ts.dedup();
    let mut xs: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let i = (x / red.length * nx).round().clamp(0.0, nx);
            i / nx * red.length
        })
        .collect();
    xs.dedup();
    (ts, xs)
}

fn ensure_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::Config(format!("cannot create {}: {e}", dir.display())))
}

pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let start = Instant::now();
    let sol = build_solution(cfg)?;
    let (ts, xs) = output_grids(sol.reduced(), cfg);
    let u = sol.evaluate_grid(Quantity::U, &ts, &xs).map_err(from_assembly)?;
    let v = sol.evaluate_grid(Quantity::V, &ts, &xs).map_err(from_assembly)?;

    ensure_dir(out_dir)?;
    if cfg.wants(Format::Csv) {
        write_field_csv(&out_dir.join("u.csv"), &u)?;
        write_field_csv(&out_dir.join("v.csv"), &v)?;
    }
    if cfg.wants(Format::Json) {
        let red = sol.reduced();
        let modes: Vec<_> = sol
            .modal_systems()
            .iter()
            .map(|m| {
                json!({
                    "n": m.n,
                    "lambda": m.lambda,
                    "omega_sq": m.omega_sq,
                    "upsilon_sq": m.upsilon_sq,
                })
            })
            .collect();
        let meta = json!({
            "schema": "delaywave-meta/1",
            "alpha": red.alpha,
            "d1": red.d1,
            "d2": red.d2,
            "truncation": { "n_modes": sol.n_modes(), "k_steps": sol.k_steps() },
            "modes": modes,
            "tolerances": {
                "quad_tol": cfg.solver.quad_tol,
                "kernel_tol": cfg.solver.kernel_tol,
            },
            "wall_time_ms": start.elapsed().as_millis() as u64,
            "config": serde_json::to_value(cfg)
                .map_err(|e| AppError::Numerical(e.to_string()))?,
        });
        write_json(&out_dir.join("meta.json"), &meta)?;
    }
    Ok(())
}

pub fn cmd_oracle(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let red = reduced(cfg)?;
    let field = solve_fd(&red, &cfg.oracle).map_err(from_fd)?;
    let (ts, xs) = snapped_grids(&red, cfg);
    let sub = extract_grid(&field, &ts, &xs).map_err(from_fd)?;
    ensure_dir(out_dir)?;
    write_field_csv(&out_dir.join("v_fd.csv"), &sub)
}

pub fn cmd_compare(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let sol = build_solution(cfg)?;
    let red = sol.reduced();
    let fd = solve_fd(red, &cfg.oracle).map_err(from_fd)?;
    let (ts, xs) = snapped_grids(red, cfg);
    let fd_sub = extract_grid(&fd, &ts, &xs).map_err(from_fd)?;
    let spectral = sol.evaluate_grid(Quantity::V, &ts, &xs).map_err(from_assembly)?;
    let report = compare(&fd_sub, &spectral, Region::Interior(0.1)).map_err(from_fd)?;

    ensure_dir(out_dir)?;
    let doc = json!({
        "schema": "delaywave-compare/1",
        "sup_err": report.sup_err,
        "l2_err": report.l2_err,
        "worst_point": report.worst_point,
        "region": report.region,
        "n_modes": sol.n_modes(),
        "oracle": { "nx": cfg.oracle.nx, "m_per_tau": cfg.oracle.m_per_tau },
    });
    write_json(&out_dir.join("compare.json"), &doc)
}

pub fn cmd_diagnose(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let sol = build_solution(cfg)?;
    let report = sol.decay_diagnostics().map_err(from_assembly)?;
    ensure_dir(out_dir)?;
    let doc = json!({
        "schema": "delaywave-decay/1",
        "exponents": {
            "history_value": report.history_value.exponent,
            "history_sup": report.history_sup.exponent,
            "forcing_sup": report.forcing_sup.exponent,
        },
        "thresholds": {
            "history": report.history_value.threshold,
            "forcing": report.forcing_sup.threshold,
        },
        "pass_flags": {
            "history_value": report.history_value.pass,
            "history_sup": report.history_sup.pass,
            "forcing_sup": report.forcing_sup.pass,
        },
        "K": report.k_steps,
        "alpha": report.margin,
        "tail_mode_sup": report.tail_mode_sup,
    });
    write_json(&out_dir.join("decay.json"), &doc)
}

pub struct KernelArgs {
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    pub t_max: f64,
    pub dt: f64,
}

pub fn cmd_kernels(args: &KernelArgs, out_dir: &Path) -> Result<(), AppError> {
    if !(args.dt > 0.0) {
        return Err(AppError::Config(format!("dt must be positive, got {}", args.dt)));
    }
    if !(args.t_max >= 0.0) {
        return Err(AppError::Config(format!("t_max must be nonnegative, got {}", args.t_max)));
    }
    let params = KernelParams::new(args.a, args.b, args.tau)
        .map_err(|e| AppError::Config(e.to_string()))?;
    let steps = (args.t_max / args.tau).ceil().max(1.0) as usize + 1;
    let kc = build_stepwise(params, KernelKind::Cosine, steps)
        .map_err(|e| AppError::Numerical(e.to_string()))?;
    let ks = build_stepwise(params, KernelKind::Sine, steps)
        .map_err(|e| AppError::Numerical(e.to_string()))?;

    let eval = |kernel: &delaywave_core::kernels::StepwiseKernel,
                t: f64,
                deriv: usize,
                side: Side|
     -> Result<f64, AppError> {
        match kernel.eval(t, deriv, side) {
            Ok(v) => Ok(v),
            // the left limit does not exist at the origin; the table
            // repeats the right limit there
            Err(KernelError::LeftLimitAtOrigin) => {
                kernel.eval(t, deriv, Side::Right).map_err(|e| AppError::Numerical(e.to_string()))
            }
            Err(e) => Err(AppError::Numerical(e.to_string())),
        }
    };

    let mut table = KernelTable { t: Vec::new(), rows: Vec::new() };
    let mut i = 0usize;
    loop {
        let t = i as f64 * args.dt;
        if t > args.t_max + 1e-9 * args.dt {
            break;
        }
        table.t.push(t);
        table.rows.push([
            eval(&kc, t, 0, Side::Right)?,
            eval(&kc, t, 1, Side::Right)?,
            eval(&kc, t, 2, Side::Left)?,
            eval(&kc, t, 2, Side::Right)?,
            eval(&ks, t, 0, Side::Right)?,
            eval(&ks, t, 1, Side::Right)?,
            eval(&ks, t, 2, Side::Left)?,
            eval(&ks, t, 2, Side::Right)?,
        ]);
        i += 1;
    }
    ensure_dir(out_dir)?;
    write_kernel_csv(&out_dir.join("kernels.csv"), &table)
}
