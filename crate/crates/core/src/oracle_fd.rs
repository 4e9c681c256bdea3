//! Finite-difference cross-check for the reduced problem: an explicit
//! central-time, central-space scheme marching by steps of the delay, fully
//! independent of the kernel representation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{CompareReport, GridField, Quantity, Region};
use crate::reduction::ReducedProblem;

#[derive(Debug, Error)]
pub enum FdError {
    #[error("bad finite-difference parameter {name}: {value}")]
    BadConfig { name: &'static str, value: f64 },
    #[error("CFL number {cfl:.4} exceeds the guard {guard}")]
    CflViolation { cfl: f64, guard: f64 },
    #[error("solution blew up at forward step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },
    #[error("horizon {t_end} is not an integer number of delays {tau}")]
    MisalignedHorizon { t_end: f64, tau: f64 },
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("requested point {0} is not on the grid")]
    OffGrid(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FdConfig {
    /// Spatial cells; the grid carries nx + 1 columns.
    pub nx: usize,
    /// Time steps per delay interval. The delayed term is then always read
    /// at an exact grid index, never interpolated.
    pub m_per_tau: usize,
    /// Fraction of the explicit stability limit the scheme may use.
    pub cfl_guard: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { nx: 400, m_per_tau: 4000, cfl_guard: 0.9 }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<(), FdError> {
        if self.nx < 16 {
            return Err(FdError::BadConfig { name: "nx", value: self.nx as f64 });
        }
        if self.m_per_tau < 100 {
            return Err(FdError::BadConfig { name: "m_per_tau", value: self.m_per_tau as f64 });
        }
        if !(self.cfl_guard > 0.0 && self.cfl_guard <= 1.0) {
            return Err(FdError::BadConfig { name: "cfl_guard", value: self.cfl_guard });
        }
        Ok(())
    }
}

/// Marches the reduced problem with a leapfrog scheme:
///
/// ```text
/// v[j+1][i] = 2 v[j][i] - v[j-1][i]
///           + dt^2 (a1^2 D2 v[j] + a2^2 D2 v[j-M] + d1 v[j] + d2 v[j-M] + F)[i]
/// ```
///
/// Rows j <= M come from the history, the first forward step is a Taylor
/// step using the history slope and the equation at t = 0, and the boundary
/// columns are pinned to the data traces. The delayed stiffness counts
/// toward the CFL speed in full: no sharper stability bound is available
/// for the delayed explicit scheme, so the guard stays conservative.
pub fn solve_fd(red: &ReducedProblem, cfg: &FdConfig) -> Result<GridField, FdError> {
    cfg.validate()?;
    let tau = red.tau;
    let l = red.length;
    let k_f = (red.t_end / tau).round();
    if k_f < 1.0 || (red.t_end - k_f * tau).abs() > 1e-9 * red.t_end.abs() {
        return Err(FdError::MisalignedHorizon { t_end: red.t_end, tau });
    }
    let k_steps = k_f as usize;
    let m = cfg.m_per_tau;
    let nx = cfg.nx;
    let dt = tau / m as f64;
    let dx = l / nx as f64;
    let cfl = (red.a1.abs() + red.a2.abs()) * dt / dx;
    if cfl > cfg.cfl_guard {
        return Err(FdError::CflViolation { cfl, guard: cfg.cfl_guard });
    }

    let rows_total = m * (k_steps + 1) + 1;
    let xs: Vec<f64> = (0..=nx).map(|i| i as f64 / nx as f64 * l).collect();
    let ts: Vec<f64> = (0..rows_total).map(|j| (j as f64 - m as f64) * dt).collect();

    let mut v: Vec<Vec<f64>> = Vec::with_capacity(rows_total);
    for j in 0..=m {
        let row: Vec<f64> = xs.iter().map(|&x| (red.phi)(ts[j], x)).collect();
        if !row.iter().all(|y| y.is_finite()) {
            return Err(FdError::BlowUp { step: 0, t: ts[j] });
        }
        v.push(row);
    }

    let a1s = red.a1 * red.a1;
    let a2s = red.a2 * red.a2;
    let dt2 = dt * dt;
    let interior = |now: &[f64], del: &[f64], t: f64| -> Vec<f64> {
        (1..nx)
            .into_par_iter()
            .map(|i| {
                let d2 = (now[i + 1] - 2.0 * now[i] + now[i - 1]) / (dx * dx);
                let d2d = (del[i + 1] - 2.0 * del[i] + del[i - 1]) / (dx * dx);
                a1s * d2 + a2s * d2d + red.d1 * now[i] + red.d2 * del[i]
                    + red.source_unchecked(t, xs[i])
            })
            .collect()
    };

    // Taylor start across t = 0, where the leapfrog has no forward row yet
    {
        let rhs = interior(&v[m], &v[0], 0.0);
        let mut row = vec![0.0; nx + 1];
        row[0] = (red.mu1)(dt);
        row[nx] = (red.mu2)(dt);
        for i in 1..nx {
            row[i] = v[m][i] + dt * (red.phi_t)(0.0, xs[i]) + 0.5 * dt2 * rhs[i - 1];
        }
        if !row.iter().all(|y| y.is_finite()) {
            return Err(FdError::BlowUp { step: 1, t: ts[m + 1] });
        }
        v.push(row);
    }

    for j in m + 1..rows_total - 1 {
        let t_next = ts[j + 1];
        let rhs = interior(&v[j], &v[j - m], ts[j]);
        let mut row = vec![0.0; nx + 1];
        row[0] = (red.mu1)(t_next);
        row[nx] = (red.mu2)(t_next);
        for i in 1..nx {
            row[i] = 2.0 * v[j][i] - v[j - 1][i] + dt2 * rhs[i - 1];
        }
        if !row.iter().all(|y| y.is_finite()) {
            return Err(FdError::BlowUp { step: j + 1 - m, t: t_next });
        }
        v.push(row);
    }

    let knot_times = (1..=k_steps).map(|k| ts[m * (k + 1)]).collect();
    Ok(GridField {
        quantity: Quantity::V,
        t_values: ts,
        x_values: xs,
        values: v,
        knot_times,
        tt_sides: vec![None; rows_total],
    })
}

fn find_index(axis: &[f64], value: f64) -> Result<usize, FdError> {
    // uniform axes only; derive the index and verify
    let step = if axis.len() > 1 { axis[1] - axis[0] } else { 1.0 };
    let idx = ((value - axis[0]) / step).round();
    let i = idx.clamp(0.0, axis.len() as f64 - 1.0) as usize;
    if (axis[i] - value).abs() <= 1e-9 * (1.0 + value.abs()) {
        Ok(i)
    } else {
        Err(FdError::OffGrid(value))
    }
}

/// Restriction of a field to a sub-grid whose points must already lie on
/// the field's (uniform) axes.
pub fn extract_grid(
    field: &GridField,
    t_values: &[f64],
    x_values: &[f64],
) -> Result<GridField, FdError> {
    let t_idx = t_values.iter().map(|&t| find_index(&field.t_values, t)).collect::<Result<
        Vec<_>,
        _,
    >>()?;
    let x_idx = x_values.iter().map(|&x| find_index(&field.x_values, x)).collect::<Result<
        Vec<_>,
        _,
    >>()?;
    let values = t_idx
        .iter()
        .map(|&j| x_idx.iter().map(|&i| field.values[j][i]).collect())
        .collect();
    let knot_times = field
        .knot_times
        .iter()
        .copied()
        .filter(|&k| t_idx.iter().any(|&j| field.t_values[j] == k))
        .collect();
    Ok(GridField {
        quantity: field.quantity,
        t_values: t_idx.iter().map(|&j| field.t_values[j]).collect(),
        x_values: x_idx.iter().map(|&i| field.x_values[i]).collect(),
        values,
        knot_times,
        tt_sides: vec![None; t_idx.len()],
    })
}

fn grids_match(a: &GridField, b: &GridField) -> Result<(), FdError> {
    if a.t_values.len() != b.t_values.len() || a.x_values.len() != b.x_values.len() {
        return Err(FdError::GridMismatch(format!(
            "{}x{} vs {}x{}",
            a.t_values.len(),
            a.x_values.len(),
            b.t_values.len(),
            b.x_values.len()
        )));
    }
    let close = |p: f64, q: f64| (p - q).abs() <= 1e-9 * (1.0 + p.abs());
    for (p, q) in a.t_values.iter().zip(&b.t_values) {
        if !close(*p, *q) {
            return Err(FdError::GridMismatch(format!("time {p} vs {q}")));
        }
    }
    for (p, q) in a.x_values.iter().zip(&b.x_values) {
        if !close(*p, *q) {
            return Err(FdError::GridMismatch(format!("position {p} vs {q}")));
        }
    }
    Ok(())
}

/// Pointwise comparison of two fields on the same grid. sup_err is
/// absolute; l2_err is the discrete L2 norm of the difference relative to
/// the larger of the two field norms. Interior(fraction) drops x within
/// fraction * L of either boundary and t within one grid spacing of a delay
/// knot, where the spectral field's Gibbs layer and the knot regularity
/// breaks would dominate the comparison.
pub fn compare(a: &GridField, b: &GridField, region: Region) -> Result<CompareReport, FdError> {
    grids_match(a, b)?;
    let l = *a.x_values.last().unwrap_or(&0.0);
    let dt_grid = a
        .t_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut knots = a.knot_times.clone();
    for &k in &b.knot_times {
        if !knots.contains(&k) {
            knots.push(k);
        }
    }

    let included = |t: f64, x: f64| match region {
        Region::Full => true,
        Region::Interior(frac) => {
            x >= frac * l
                && x <= l - frac * l
                && knots.iter().all(|&k| (t - k).abs() >= dt_grid * (1.0 - 1e-9))
        }
    };

    let mut sup = 0.0f64;
    let mut worst = (f64::NAN, f64::NAN);
    let mut dd = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    let mut cells = 0usize;
    for (j, &t) in a.t_values.iter().enumerate() {
        for (i, &x) in a.x_values.iter().enumerate() {
            if !included(t, x) {
                continue;
            }
            cells += 1;
            let (va, vb) = (a.values[j][i], b.values[j][i]);
            let d = (va - vb).abs();
            if d > sup {
                sup = d;
                worst = (t, x);
            }
            dd += (va - vb) * (va - vb);
            na += va * va;
            nb += vb * vb;
        }
    }
    if cells == 0 {
        return Err(FdError::GridMismatch("comparison region is empty".into()));
    }
    let denom = na.max(nb).sqrt();
    let l2 = if denom > 0.0 { dd.sqrt() / denom } else { dd.sqrt() };
    Ok(CompareReport { sup_err: sup, l2_err: l2, worst_point: worst, region })
}
