//! Delayed oscillation kernels C(t) and S(t): the pair of solutions of
//!
//! ```text
//! y''(t) = a y(t) + b y(t - tau),    y == 0 on t < 0,
//! ```
//!
//! with C(0)=1, C'(0)=0 and S(0)=0, S'(0)=1. Both vanish identically for
//! negative arguments; C jumps from 0 to 1 at t=0 and the second derivative
//! jumps by b at t=tau.
//!
//! Two evaluators:
//! * `eval_series` sums the defining double series directly. It loses all
//!   precision to cancellation once |a| t^2 is large, so it reports a
//!   cancellation flag and serves as a desk-scale cross-check only.
//! * `build_stepwise` constructs exact closed forms step by step: on
//!   [n tau, (n+1) tau] the kernel is P_n(s) cos(w s) + Q_n(s) sin(w s)
//!   (w = sqrt(-a), a < 0; hyperbolic for a > 0; a single polynomial when
//!   |a| tau^2 is small), with s = t - n tau the step-local coordinate.
//!   Both the polynomials and the phase are local to the step, which keeps
//!   every intermediate at the scale of the kernel itself; a global-in-t
//!   form would need cancelling O(t^n) terms. This is the production path.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Below this value of |a| tau^2 the trigonometric basis is ill-conditioned
/// (denominators carry w = sqrt(|a|)) and a plain power series in the step
/// variable converges fast; the build switches to the polynomial basis.
pub const POLY_BASIS_THRESHOLD: f64 = 0.25;

/// Highest polynomial degree kept per step in the polynomial basis. With
/// |a| tau^2 < 0.25 the dropped tail is far below f64 resolution.
const POLY_DEGREE_CAP: usize = 80;

/// |a| below this is treated as exactly zero for basis selection.
const SMALL_A: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("delay must be positive and finite, got tau = {0}")]
    BadTau(f64),
    #[error("coefficients must be finite, got a = {a}, b = {b}")]
    NonFiniteCoefficients { a: f64, b: f64 },
    #[error("t = {t} is outside the built range [0, {max}]")]
    OutOfRange { t: f64, max: f64 },
    #[error("t = {t} lies more than one delay before the support of the kernel")]
    BeforeSupport { t: f64 },
    #[error("series did not converge within {max_terms} terms at t = {t}")]
    SeriesNonConvergence { t: f64, max_terms: usize },
    #[error("|a| = {a_abs} is below {SMALL_A} and the polynomial basis is disabled")]
    UnsupportedCase { a_abs: f64 },
    #[error("left limit at t = 0 is outside the kernel domain")]
    LeftLimitAtOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub a: f64,
    pub b: f64,
    pub tau: f64,
}

impl KernelParams {
    pub fn new(a: f64, b: f64, tau: f64) -> Result<Self, KernelError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(KernelError::BadTau(tau));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(KernelError::NonFiniteCoefficients { a, b });
        }
        Ok(KernelParams { a, b, tau })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// C: value 1, slope 0 at t = 0.
    Cosine,
    /// S: value 0, slope 1 at t = 0.
    Sine,
}

/// Which one-sided limit to take for the second derivative at a knot t = k tau.
/// Ignored everywhere the kernel is twice differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    #[default]
    Right,
}

/// Result of the direct series evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SeriesEval {
    pub value: f64,
    /// Largest intermediate term exceeded 1e12 x |value|: the sum has lost
    /// at least 12 digits to cancellation and must not be trusted.
    pub cancellation: bool,
    pub terms: usize,
}

/// Sum the defining series at a single point.
///
/// The outer sum over delay shifts is finite (k <= floor(t/tau)); each inner
/// series is truncated once three consecutive terms fall below
/// tol * (1 + |partial sum|). Accumulation is compensated.
///
/// Returns 0 for t in [-tau, 0); arguments below -tau are an error.
pub fn eval_series(
    params: KernelParams,
    kind: KernelKind,
    t: f64,
    tol: f64,
    max_terms: usize,
) -> Result<SeriesEval, KernelError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let KernelParams { a, b, tau } = params;
    if t < -tau {
        return Err(KernelError::BeforeSupport { t });
    }
    if t < 0.0 {
        return Ok(SeriesEval { value: 0.0, cancellation: false, terms: 0 });
    }

    let mut acc = crate::numeric::KahanSum::new();
    let mut max_term = 0.0f64;
    let mut terms = 0usize;
    let k_max = (t / tau).floor() as usize;
    for k in 0..=k_max {
        let s = t - k as f64 * tau;
        // leading term of the k-th inner series, built as a product to keep
        // intermediates scaled: b^k s^(2k) / (2k)!
        let mut lead = 1.0f64;
        for j in 1..=k {
            lead *= b * s * s / ((2 * j - 1) as f64 * (2 * j) as f64);
        }
        let mut term = match kind {
            KernelKind::Cosine => lead,
            KernelKind::Sine => lead * s / (2 * k + 1) as f64,
        };
        let mut small_run = 0;
        let mut m = k;
        loop {
            if terms >= max_terms {
                return Err(KernelError::SeriesNonConvergence { t, max_terms });
            }
            acc.add(term);
            terms += 1;
            max_term = max_term.max(term.abs());
            if term.abs() <= tol * (1.0 + acc.value().abs()) {
                small_run += 1;
                if small_run >= 3 {
                    break;
                }
            } else {
                small_run = 0;
            }
            // ratio of consecutive terms: binomial factor times a s^2 over
            // the next two factorial entries
            let binom = (m + 1) as f64 / (m + 1 - k) as f64;
            let fact = match kind {
                KernelKind::Cosine => (2 * m + 1) as f64 * (2 * m + 2) as f64,
                KernelKind::Sine => (2 * m + 2) as f64 * (2 * m + 3) as f64,
            };
            term *= binom * a * s * s / fact;
            m += 1;
        }
    }
    let value = acc.value();
    let cancellation = max_term > 0.0 && max_term > 1e12 * value.abs();
    Ok(SeriesEval { value, cancellation, terms })
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Allow the polynomial basis for small |a| tau^2. Disabling it forces
    /// the trig/hyperbolic basis and makes a = 0 an unsupported case.
    pub polynomial_branch: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { polynomial_branch: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    /// P(s) cos(w s) + Q(s) sin(w s), w = sqrt(-a), s the step-local time.
    Trig { omega: f64 },
    /// P(s) cosh(w s) + Q(s) sinh(w s), w = sqrt(a).
    Hyperbolic { omega: f64 },
    /// Single polynomial in the step variable s; Q is unused.
    Polynomial,
}

/// One step [n tau, (n+1) tau]. Coefficient vectors are in the step-local
/// variable s = t - n tau, ascending powers.
#[derive(Debug, Clone)]
pub struct Step {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepwiseKernel {
    pub params: KernelParams,
    pub kind: KernelKind,
    pub basis: Basis,
    steps: Vec<Step>,
}

pub fn build_stepwise(
    params: KernelParams,
    kind: KernelKind,
    num_steps: usize,
) -> Result<StepwiseKernel, KernelError> {
    build_stepwise_with(params, kind, num_steps, BuildOptions::default())
}

pub fn build_stepwise_with(
    params: KernelParams,
    kind: KernelKind,
    num_steps: usize,
    opts: BuildOptions,
) -> Result<StepwiseKernel, KernelError> {
    assert!(num_steps >= 1, "need at least one step");
    KernelParams::new(params.a, params.b, params.tau)?;
    let scale = params.a.abs() * params.tau * params.tau;
    let basis = if opts.polynomial_branch && scale < POLY_BASIS_THRESHOLD {
        Basis::Polynomial
    } else if params.a.abs() < SMALL_A {
        return Err(KernelError::UnsupportedCase { a_abs: params.a.abs() });
    } else if params.a < 0.0 {
        Basis::Trig { omega: (-params.a).sqrt() }
    } else {
        Basis::Hyperbolic { omega: params.a.sqrt() }
    };
    let steps = match basis {
        Basis::Trig { omega } => build_trig(params, kind, num_steps, omega),
        Basis::Hyperbolic { omega } => build_hyper(params, kind, num_steps, omega),
        Basis::Polynomial => build_poly(params, kind, num_steps),
    };
    Ok(StepwiseKernel { params, kind, basis, steps })
}

// Evaluate value, first and second derivative of a polynomial at x in one
// Horner pass.
fn horner3(coeffs: &[f64], x: f64) -> (f64, f64, f64) {
    let mut b2 = 0.0;
    let mut b1 = 0.0;
    let mut b0 = 0.0;
    for &c in coeffs.iter().rev() {
        b2 = b2 * x + b1;
        b1 = b1 * x + b0;
        b0 = b0 * x + c;
    }
    (b0, b1, 2.0 * b2)
}

fn coeff(v: &[f64], j: usize) -> f64 {
    v.get(j).copied().unwrap_or(0.0)
}

// a < 0 branch, basis cos(w s), sin(w s) in the step-local variable
// s = t - n tau. The delayed source b y(t - tau) lands at the same local
// coordinate in step n-1 and therefore at the same phase, so
//   b y(t - tau) = b P_{n-1}(s) cos(w s) + b Q_{n-1}(s) sin(w s)
// with no angle addition. Substituting the ansatz kills the a y term:
//   P'' + 2w Q' = b P_{n-1},  Q'' - 2w P' = b Q_{n-1},
// solved coefficient-by-coefficient from the top degree down. The two free
// constants are fixed by continuity at the knot, where the local phase is
// zero: p_0 = value, q_0 = (slope - p_1)/w. Everything stays at the scale of
// the kernel itself; a global-phase basis would need ch^2 - sh^2 style
// cancellations here.
fn build_trig(params: KernelParams, kind: KernelKind, num_steps: usize, omega: f64) -> Vec<Step> {
    let KernelParams { b, tau, .. } = params;
    let (cwt, swt) = ((omega * tau).cos(), (omega * tau).sin());
    let mut steps: Vec<Step> = Vec::with_capacity(num_steps);
    steps.push(match kind {
        KernelKind::Cosine => Step { p: vec![1.0], q: vec![0.0] },
        KernelKind::Sine => Step { p: vec![0.0], q: vec![1.0 / omega] },
    });
    for n in 1..num_steps {
        let prev = &steps[n - 1];
        let d = prev.p.len().max(prev.q.len()) - 1;
        let mut p = vec![0.0; d + 2];
        let mut q = vec![0.0; d + 2];
        for j in (0..=d).rev() {
            let jf = j as f64;
            let c2 = (jf + 2.0) * (jf + 1.0);
            let den = 2.0 * omega * (jf + 1.0);
            q[j + 1] = (b * coeff(&prev.p, j) - c2 * coeff(&p, j + 2)) / den;
            p[j + 1] = (c2 * coeff(&q, j + 2) - b * coeff(&prev.q, j)) / den;
        }
        let (pv, pd, _) = horner3(&prev.p, tau);
        let (qv, qd, _) = horner3(&prev.q, tau);
        let value = pv * cwt + qv * swt;
        let slope = (pd + omega * qv) * cwt + (qd - omega * pv) * swt;
        p[0] = value;
        q[0] = (slope - p[1]) / omega;
        steps.push(Step { p, q });
    }
    steps
}

// a > 0 branch, same construction in the local cosh(w s), sinh(w s) basis:
//   P'' + 2w Q' = b P_{n-1},  Q'' + 2w P' = b Q_{n-1}.
fn build_hyper(params: KernelParams, kind: KernelKind, num_steps: usize, omega: f64) -> Vec<Step> {
    let KernelParams { b, tau, .. } = params;
    let (cwt, swt) = ((omega * tau).cosh(), (omega * tau).sinh());
    let mut steps: Vec<Step> = Vec::with_capacity(num_steps);
    steps.push(match kind {
        KernelKind::Cosine => Step { p: vec![1.0], q: vec![0.0] },
        KernelKind::Sine => Step { p: vec![0.0], q: vec![1.0 / omega] },
    });
    for n in 1..num_steps {
        let prev = &steps[n - 1];
        let d = prev.p.len().max(prev.q.len()) - 1;
        let mut p = vec![0.0; d + 2];
        let mut q = vec![0.0; d + 2];
        for j in (0..=d).rev() {
            let jf = j as f64;
            let c2 = (jf + 2.0) * (jf + 1.0);
            let den = 2.0 * omega * (jf + 1.0);
            q[j + 1] = (b * coeff(&prev.p, j) - c2 * coeff(&p, j + 2)) / den;
            p[j + 1] = (b * coeff(&prev.q, j) - c2 * coeff(&q, j + 2)) / den;
        }
        let (pv, pd, _) = horner3(&prev.p, tau);
        let (qv, qd, _) = horner3(&prev.q, tau);
        let value = pv * cwt + qv * swt;
        let slope = (pd + omega * qv) * cwt + (qd + omega * pv) * swt;
        p[0] = value;
        q[0] = (slope - p[1]) / omega;
        steps.push(Step { p, q });
    }
    steps
}

// |a| tau^2 small: the kernel on each step is a single fast-converging power
// series in s, generated by y_{j+2} = (a y_j + b prev_j) / ((j+2)(j+1)).
// The delayed source again lands at the same local coordinate.
fn build_poly(params: KernelParams, kind: KernelKind, num_steps: usize) -> Vec<Step> {
    let KernelParams { a, b, tau } = params;
    let mut steps: Vec<Step> = Vec::with_capacity(num_steps);
    for n in 0..num_steps {
        let prev: Vec<f64> = if n == 0 { Vec::new() } else { steps[n - 1].p.clone() };
        let (v, dv) = if n == 0 {
            match kind {
                KernelKind::Cosine => (1.0, 0.0),
                KernelKind::Sine => (0.0, 1.0),
            }
        } else {
            let (v, dv, _) = horner3(&prev, tau);
            (v, dv)
        };
        let mut y = vec![0.0; POLY_DEGREE_CAP + 1];
        y[0] = v;
        y[1] = dv;
        for j in 0..=POLY_DEGREE_CAP - 2 {
            y[j + 2] = (a * y[j] + b * coeff(&prev, j)) / ((j + 2) as f64 * (j + 1) as f64);
        }
        while y.len() > 1 && y.last() == Some(&0.0) {
            y.pop();
        }
        steps.push(Step { p: y, q: Vec::new() });
    }
    steps
}

impl StepwiseKernel {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Upper end of the built range.
    pub fn t_max(&self) -> f64 {
        self.steps.len() as f64 * self.params.tau
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Evaluate the kernel or one of its first two derivatives.
    ///
    /// Arguments more than a knot tolerance below 0 return 0 (the kernel
    /// vanishes on negative time). At knots t = k tau the value and slope are
    /// continuous; the second derivative takes `side` (right limit by
    /// default). The left limit of the second derivative at t = 0 does not
    /// exist inside the step table and is an error.
    pub fn eval(&self, t: f64, deriv: usize, side: Side) -> Result<f64, KernelError> {
        assert!(deriv <= 2, "deriv must be 0, 1, or 2");
        let tau = self.params.tau;
        let knot_tol = 1e-9 * tau;
        let t_max = self.t_max();
        if t > t_max + knot_tol {
            return Err(KernelError::OutOfRange { t, max: t_max });
        }
        if t < -knot_tol {
            return Ok(0.0);
        }
        let k_near = (t / tau).round().max(0.0);
        let on_knot = (t - k_near * tau).abs() <= knot_tol;
        let (idx, t_eff) = if on_knot {
            let k = k_near as usize;
            let tk = k_near * tau;
            if deriv == 2 && side == Side::Left {
                if k == 0 {
                    return Err(KernelError::LeftLimitAtOrigin);
                }
                (k - 1, tk)
            } else if k >= self.steps.len() {
                (self.steps.len() - 1, tk)
            } else {
                (k, tk)
            }
        } else {
            ((t / tau).floor() as usize, t)
        };
        Ok(self.eval_in_step(idx, t_eff, deriv))
    }

    // Evaluate inside a specific step at global time t (local s = t - idx tau).
    fn eval_in_step(&self, idx: usize, t: f64, deriv: usize) -> f64 {
        let step = &self.steps[idx];
        let sigma = t - idx as f64 * self.params.tau;
        match self.basis {
            Basis::Polynomial => {
                let (v, d1, d2) = horner3(&step.p, sigma);
                match deriv {
                    0 => v,
                    1 => d1,
                    _ => d2,
                }
            }
            Basis::Trig { omega } => {
                let (c, s) = ((omega * sigma).cos(), (omega * sigma).sin());
                let (pv, pd, pdd) = horner3(&step.p, sigma);
                let (qv, qd, qdd) = horner3(&step.q, sigma);
                let w2 = omega * omega;
                match deriv {
                    0 => pv * c + qv * s,
                    1 => (pd + omega * qv) * c + (qd - omega * pv) * s,
                    _ => (pdd + 2.0 * omega * qd - w2 * pv) * c + (qdd - 2.0 * omega * pd - w2 * qv) * s,
                }
            }
            Basis::Hyperbolic { omega } => {
                let (c, s) = ((omega * sigma).cosh(), (omega * sigma).sinh());
                let (pv, pd, pdd) = horner3(&step.p, sigma);
                let (qv, qd, qdd) = horner3(&step.q, sigma);
                let w2 = omega * omega;
                match deriv {
                    0 => pv * c + qv * s,
                    1 => (pd + omega * qv) * c + (qd + omega * pv) * s,
                    _ => (pdd + 2.0 * omega * qd + w2 * pv) * c + (qdd + 2.0 * omega * pd + w2 * qv) * s,
                }
            }
        }
    }

    /// Coefficient tables for debugging.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "a": self.params.a,
            "b": self.params.b,
            "tau": self.params.tau,
            "kind": match self.kind { KernelKind::Cosine => "C", KernelKind::Sine => "S" },
            "steps": self.steps.iter().enumerate().map(|(n, s)| json!({
                "n": n,
                "P": s.p,
                "Q": s.q,
            })).collect::<Vec<_>>(),
        })
    }
}
