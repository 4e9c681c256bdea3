//! Scalar delay equation y''(t) = a y(t) + b y(t - tau) + f(t) with C^1
//! history on [-tau, 0]: closed-form solutions through the kernel
//! representation, plus an independent method-of-steps numerical oracle used
//! to validate that representation.

use crate::kernels::{KernelError, KernelParams, Side, StepwiseKernel};
use crate::numeric::derivative_5pt;
use crate::quad::{integrate_split, QuadError, QuadOptions};
use std::sync::Arc;
use thiserror::Error;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum ScalarError {
    #[error("history derivative mismatch at t = {t}: finite difference {fd} vs supplied {given}")]
    HistoryMismatch { t: f64, fd: f64, given: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("grid step {h} does not divide the delay {tau}")]
    MisalignedGrid { tau: f64, h: f64 },
    #[error("t = {t} is not an oracle grid point")]
    OffGrid { t: f64 },
}

/// History data on [-tau, 0]: the function and its derivative, supplied
/// separately. The constructor spot-checks that `phi_dot` actually
/// differentiates `phi`; silent disagreement would corrupt every downstream
/// formula through the phi_dot(0) term.
#[derive(Clone)]
pub struct HistorySpec {
    phi: TimeFn,
    phi_dot: TimeFn,
}

impl HistorySpec {
    pub fn new(phi: TimeFn, phi_dot: TimeFn, tau: f64) -> Result<Self, ScalarError> {
        assert!(tau > 0.0);
        let h = 1e-4 * tau;
        for i in 1..=9 {
            let t = -tau + i as f64 * tau / 10.0;
            let fd = ((phi)(t + h) - (phi)(t - h)) / (2.0 * h);
            let given = (phi_dot)(t);
            if (fd - given).abs() > 1e-6 * (1.0 + given.abs()) {
                return Err(ScalarError::HistoryMismatch { t, fd, given });
            }
        }
        Ok(HistorySpec { phi, phi_dot })
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.phi)(t)
    }

    pub fn phi_dot(&self, t: f64) -> f64 {
        (self.phi_dot)(t)
    }
}

/// Forcing on [0, T]. `breakpoints` lists times where f is only piecewise
/// smooth so quadrature panels and the oracle can avoid differentiating
/// across them.
#[derive(Clone)]
pub struct ForcingSpec {
    f: TimeFn,
    breakpoints: Vec<f64>,
}

impl ForcingSpec {
    pub fn new(f: TimeFn, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.sort_by(|a, b| a.total_cmp(b));
        ForcingSpec { f, breakpoints }
    }

    pub fn zero() -> Self {
        ForcingSpec { f: Arc::new(|_| 0.0), breakpoints: Vec::new() }
    }

    pub fn f(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    // smooth panel around t, for one-sided differentiation stencils
    fn panel(&self, t: f64) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for &b in &self.breakpoints {
            if b <= t {
                lo = b;
            } else {
                hi = b;
                break;
            }
        }
        (lo, hi)
    }
}

/// Integral of K^(deriv)(offset - s) * f(s) over [lo, hi], with quadrature
/// panels split at the kernel knots offset - k tau and at the caller's
/// breakpoints. The kernel factor is only piecewise smooth at those points;
/// integrating across them unsplit would void the quadrature error control.
#[allow(clippy::too_many_arguments)]
pub fn convolve_kernel(
    kernel: &StepwiseKernel,
    deriv: usize,
    offset: f64,
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<f64, ScalarError> {
    if hi <= lo {
        return Ok(0.0);
    }
    let tau = kernel.params.tau;
    let max_arg = offset - lo;
    if max_arg > kernel.t_max() + 1e-9 * tau {
        return Err(KernelError::OutOfRange { t: max_arg, max: kernel.t_max() }.into());
    }
    let mut cuts: Vec<f64> = breakpoints.to_vec();
    let mut k = 0.0;
    loop {
        let s = offset - k * tau;
        if s < lo {
            break;
        }
        cuts.push(s);
        k += 1.0;
    }
    let integrand =
        |s: f64| kernel.eval(offset - s, deriv, Side::Right).map_or(f64::NAN, |v| v) * f(s);
    integrate_split(&integrand, lo, hi, &cuts, opts).map_err(Into::into)
}

/// Solution of the homogeneous problem (f = 0) at time t:
///
/// ```text
/// y(t) = C(t) phi(0) + S(t) phi_dot(0) + b * int_{-tau}^{min(0, t-tau)} S(t - tau - s) phi(s) ds
/// ```
///
/// The integral's upper limit keeps the kernel argument nonnegative; for
/// t < tau part of the history has not yet entered and for t <= 0 none of it
/// has.
pub fn homogeneous_solution(
    params: KernelParams,
    hist: &HistorySpec,
    kernel_c: &StepwiseKernel,
    kernel_s: &StepwiseKernel,
    t: f64,
    opts: &QuadOptions,
) -> Result<f64, ScalarError> {
    let c = kernel_c.eval(t, 0, Side::Right)?;
    let s = kernel_s.eval(t, 0, Side::Right)?;
    let upper = (t - params.tau).min(0.0);
    let shifted = convolve_kernel(
        kernel_s,
        0,
        t - params.tau,
        &|u| hist.phi(u),
        -params.tau,
        upper,
        &[],
        opts,
    )?;
    Ok(c * hist.phi(0.0) + s * hist.phi_dot(0.0) + params.b * shifted)
}

/// Solution with zero history: int_0^t S(t - s) f(s) ds.
pub fn particular_solution(
    params: KernelParams,
    forcing: &ForcingSpec,
    kernel_s: &StepwiseKernel,
    t: f64,
    opts: &QuadOptions,
) -> Result<f64, ScalarError> {
    let _ = params;
    convolve_kernel(
        kernel_s,
        0,
        t,
        &|s| forcing.f(s),
        0.0,
        t,
        forcing.breakpoints(),
        opts,
    )
}

/// Full solution: history value for t in [-tau, 0), superposition of the
/// homogeneous and particular parts for t >= 0.
pub fn solve(
    params: KernelParams,
    hist: &HistorySpec,
    forcing: &ForcingSpec,
    kernel_c: &StepwiseKernel,
    kernel_s: &StepwiseKernel,
    t: f64,
    opts: &QuadOptions,
) -> Result<f64, ScalarError> {
    if t < 0.0 {
        return Ok(hist.phi(t));
    }
    let hom = homogeneous_solution(params, hist, kernel_c, kernel_s, t, opts)?;
    let part = particular_solution(params, forcing, kernel_s, t, opts)?;
    Ok(hom + part)
}

/// Method-of-steps run on a uniform grid from -tau to (at least) t_end.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub h: f64,
    /// Grid steps per delay; the delayed read is y[i - m], always exact.
    pub m: usize,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub y_dot: Vec<f64>,
}

impl OracleRun {
    /// Value and derivative at a grid point; t must sit on the grid.
    pub fn lookup(&self, t: f64) -> Result<(f64, f64), ScalarError> {
        let pos = t / self.h + self.m as f64;
        let i = pos.round();
        if (pos - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.t.len() {
            return Err(ScalarError::OffGrid { t });
        }
        let i = i as usize;
        Ok((self.y[i], self.y_dot[i]))
    }
}

/// Integrate the delay equation numerically: exact free propagation over
/// each step combined with a derivative-corrected trapezoid for the forced
/// part (4th order overall). The step h must divide tau, so the delayed
/// value is read at an exact grid index and no interpolation error enters.
/// f is sampled up to one step past t_end.
pub fn method_of_steps_oracle(
    params: KernelParams,
    hist: &HistorySpec,
    forcing: &ForcingSpec,
    t_end: f64,
    h: f64,
) -> Result<OracleRun, ScalarError> {
    assert!(t_end > 0.0 && h > 0.0);
    let KernelParams { a, b, tau } = params;
    let ratio = tau / h;
    let m_f = ratio.round();
    if m_f < 1.0 || (ratio - m_f).abs() > 1e-9 * ratio.max(1.0) {
        return Err(ScalarError::MisalignedGrid { tau, h });
    }
    let m = m_f as usize;
    let n_fwd = ((t_end / h) - 1e-9).ceil() as usize;
    let len = m + n_fwd + 1;

    let grid_t = |i: usize| (i as f64 - m as f64) * h;
    let mut t = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    let mut yd = Vec::with_capacity(len);
    for i in 0..=m {
        let ti = grid_t(i);
        t.push(ti);
        y.push(hist.phi(ti));
        yd.push(hist.phi_dot(ti));
    }

    // free propagator over one step for y'' = a y
    let (ch, sh) = if a == 0.0 {
        (1.0, h)
    } else if a < 0.0 {
        let w = (-a).sqrt();
        ((w * h).cos(), (w * h).sin() / w)
    } else {
        let w = a.sqrt();
        ((w * h).cosh(), (w * h).sinh() / w)
    };

    let fd_h = 1e-4 * h.max(1.0).min(tau);
    let f_slope = |ti: f64| {
        let (plo, phi_) = forcing.panel(ti);
        derivative_5pt(&|s| forcing.f(s), ti, fd_h, 1, plo.max(0.0), phi_)
    };
    // source g(t) = b y(t - tau) + f(t) and its slope, at grid index i >= m
    let mut g = vec![0.0; len];
    let mut gp = vec![0.0; len];
    let fill_g = |g: &mut Vec<f64>, gp: &mut Vec<f64>, y: &[f64], yd: &[f64], i: usize| {
        let ti = grid_t(i);
        g[i] = b * y[i - m] + forcing.f(ti);
        gp[i] = b * yd[i - m] + f_slope(ti);
    };
    fill_g(&mut g, &mut gp, &y, &yd, m);

    for j in m..len - 1 {
        fill_g(&mut g, &mut gp, &y, &yd, j + 1);
        let iy = h / 2.0 * sh * g[j] + h * h / 12.0 * (-ch * g[j] + sh * gp[j] + g[j + 1]);
        let id = h / 2.0 * (ch * g[j] + g[j + 1])
            + h * h / 12.0 * (-a * sh * g[j] + ch * gp[j] - gp[j + 1]);
        let yn = ch * y[j] + sh * yd[j] + iy;
        let dn = a * sh * y[j] + ch * yd[j] + id;
        t.push(grid_t(j + 1));
        y.push(yn);
        yd.push(dn);
    }
    Ok(OracleRun { h, m, t, y, y_dot: yd })
}
