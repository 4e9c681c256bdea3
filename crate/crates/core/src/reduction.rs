//! Transformation of the delayed wave problem on [0, L] with first-order
//! space terms and inhomogeneous Dirichlet data into the homogeneous-boundary
//! form the modal solver consumes: exponential substitution u = e^{-alpha x} v,
//! affine boundary lift G, lifted history Phi, reduced source F, and the
//! Fourier sine coefficients of both.

use crate::dsl::Expr;
use crate::numeric::{derivative_5pt, sin_pi};
use crate::quad::{composite, QuadError};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("first-order coefficients incompatible with a single exponential transform: b1*a2^2 = {lhs} vs b2*a1^2 = {rhs}")]
    IncompatibleCoefficients { lhs: f64, rhs: f64 },
    #[error("{name} = {value} is outside its admissible range")]
    BadParameter { name: &'static str, value: f64 },
    #[error("horizon {t_end} is not a positive integer multiple of the delay {tau}")]
    HorizonNotMultipleOfDelay { t_end: f64, tau: f64 },
    #[error("mode {n}: undelayed modal stiffness {omega_sq} is not positive; only oscillatory modes are supported")]
    NonpositiveOmega { n: usize, omega_sq: f64 },
    #[error("({t}, {x}) is outside the problem domain")]
    OutsideDomain { t: f64, x: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Original problem data. Expressions use variables t and x; the boundary
/// traces theta1, theta2 may only use t. Optional analytic second derivatives
/// of the traces avoid finite differencing in the source term.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
    pub t_end: f64,
    pub length: f64,
    pub g: Expr,
    pub psi: Expr,
    pub theta1: Expr,
    pub theta2: Expr,
    pub theta1_dd: Option<Expr>,
    pub theta2_dd: Option<Expr>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ReductionError> {
        let finite = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ReductionError::BadParameter { name, value: v });
            }
        }
        if self.a1 == 0.0 {
            return Err(ReductionError::BadParameter { name: "a1", value: 0.0 });
        }
        if self.a2 == 0.0 {
            return Err(ReductionError::BadParameter { name: "a2", value: 0.0 });
        }
        if !(self.tau > 0.0) {
            return Err(ReductionError::BadParameter { name: "tau", value: self.tau });
        }
        if !(self.length > 0.0) {
            return Err(ReductionError::BadParameter { name: "length", value: self.length });
        }
        let ratio = self.t_end / self.tau;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ReductionError::HorizonNotMultipleOfDelay {
                t_end: self.t_end,
                tau: self.tau,
            });
        }
        Ok(())
    }
}

/// The transform removes both first-order terms at once only when
/// b1/a1^2 = b2/a2^2; returns the shared exponent alpha = b1/(2 a1^2).
pub fn check_compatibility(spec: &ProblemSpec) -> Result<f64, ReductionError> {
    if spec.b1 == 0.0 && spec.b2 == 0.0 {
        return Ok(0.0);
    }
    let lhs = spec.b1 * spec.a2 * spec.a2;
    let rhs = spec.b2 * spec.a1 * spec.a1;
    let scale = lhs.abs().max(rhs.abs());
    if (lhs - rhs).abs() > 1e-10 * scale {
        return Err(ReductionError::IncompatibleCoefficients { lhs, rhs });
    }
    Ok(spec.b1 / (2.0 * spec.a1 * spec.a1))
}

/// Problem in the reduced frame: v_tt = a1^2 v_xx + a2^2 v_xx(t-tau) + d1 v
/// + d2 v(t-tau) + f with boundary values mu1, mu2 and history phi. All
/// callables map expression domain errors to NaN; quadrature and the grid
/// checks surface those downstream.
#[derive(Clone)]
pub struct ReducedProblem {
    pub alpha: f64,
    pub d1: f64,
    pub d2: f64,
    pub a1: f64,
    pub a2: f64,
    pub tau: f64,
    pub t_end: f64,
    pub length: f64,
    pub f: SpaceTimeFn,
    pub mu1: TimeFn,
    pub mu2: TimeFn,
    pub mu1_dd: TimeFn,
    pub mu2_dd: TimeFn,
    pub(crate) mu1_dot: TimeFn,
    pub(crate) mu2_dot: TimeFn,
    pub phi: SpaceTimeFn,
    pub phi_t: SpaceTimeFn,
    /// Corner mismatches psi(t,0) vs theta1 or psi(t,L) vs theta2; non-empty
    /// means Gibbs oscillation near that boundary is expected, not a bug.
    pub corner_warnings: Vec<String>,
}

fn expr_fn_t(e: Expr) -> TimeFn {
    Arc::new(move |t| e.eval(t, 0.0).unwrap_or(f64::NAN))
}

/// Second derivative of a boundary trace: analytic expression when supplied,
/// otherwise a 5-point stencil kept inside [lo, hi].
fn trace_dd(e: Option<Expr>, base: TimeFn, scale: f64, lo: f64, hi: f64) -> TimeFn {
    match e {
        Some(dd) => Arc::new(move |t| scale * dd.eval(t, 0.0).unwrap_or(f64::NAN)),
        None => Arc::new(move |t| {
            let h = (1e-4 * t.abs().max(1.0)).min((hi - lo) / 8.0);
            derivative_5pt(&|s| base(s), t, h, 2, lo, hi)
        }),
    }
}

fn trace_dot(base: TimeFn, lo: f64, hi: f64) -> TimeFn {
    Arc::new(move |t| {
        let h = (1e-4 * t.abs().max(1.0)).min((hi - lo) / 8.0);
        derivative_5pt(&|s| base(s), t, h, 1, lo, hi)
    })
}

pub fn reduce(spec: &ProblemSpec) -> Result<ReducedProblem, ReductionError> {
    spec.validate()?;
    let alpha = check_compatibility(spec)?;
    let d1 = spec.c1 - spec.b1 * spec.b1 / (4.0 * spec.a1 * spec.a1);
    let d2 = spec.c2 - spec.b2 * spec.b2 / (4.0 * spec.a2 * spec.a2);
    let (tau, t_end, length) = (spec.tau, spec.t_end, spec.length);

    let g = spec.g.clone();
    let f: SpaceTimeFn =
        Arc::new(move |t, x| (alpha * x).exp() * g.eval(t, x).unwrap_or(f64::NAN));

    let mu1 = expr_fn_t(spec.theta1.clone());
    let theta2 = expr_fn_t(spec.theta2.clone());
    let end_scale = (alpha * length).exp();
    let mu2: TimeFn = {
        let theta2 = theta2.clone();
        Arc::new(move |t| end_scale * theta2(t))
    };
    let mu1_dd = trace_dd(spec.theta1_dd.clone(), mu1.clone(), 1.0, -tau, t_end);
    let mu2_dd = trace_dd(spec.theta2_dd.clone(), mu2.clone(), end_scale, -tau, t_end);
    let mu1_dot = trace_dot(mu1.clone(), -tau, t_end);
    let mu2_dot = trace_dot(mu2.clone(), -tau, t_end);

    let psi = spec.psi.clone();
    let phi: SpaceTimeFn =
        Arc::new(move |t, x| (alpha * x).exp() * psi.eval(t, x).unwrap_or(f64::NAN));
    let phi_t: SpaceTimeFn = {
        let phi = phi.clone();
        Arc::new(move |t, x| {
            let h = (1e-4 * t.abs().max(1.0)).min(tau / 8.0);
            derivative_5pt(&|s| phi(s, x), t, h, 1, -tau, 0.0)
        })
    };

    let mut corner_warnings = Vec::new();
    for (x, trace, label) in [(0.0, &spec.theta1, "x=0"), (length, &spec.theta2, "x=L")] {
        for i in 0..=8 {
            let t = -tau + i as f64 * tau / 8.0;
            let hist = spec.psi.eval(t, x).unwrap_or(f64::NAN);
            let bc = trace.eval(t, 0.0).unwrap_or(f64::NAN);
            if !((hist - bc).abs() <= 1e-9 * (1.0 + bc.abs())) {
                corner_warnings.push(format!(
                    "history disagrees with the {label} boundary trace at t = {t}: psi = {hist} vs {bc}"
                ));
                break;
            }
        }
    }

    Ok(ReducedProblem {
        alpha,
        d1,
        d2,
        a1: spec.a1,
        a2: spec.a2,
        tau,
        t_end,
        length,
        f,
        mu1,
        mu2,
        mu1_dd,
        mu2_dd,
        mu1_dot,
        mu2_dot,
        phi,
        phi_t,
        corner_warnings,
    })
}

impl ReducedProblem {
    fn check_domain(&self, t: f64, t_lo: f64, x: f64) -> Result<(), ReductionError> {
        let pad_t = 1e-9 * self.tau;
        let pad_x = 1e-12 * self.length;
        if t < t_lo - pad_t || t > self.t_end + pad_t || x < -pad_x || x > self.length + pad_x {
            return Err(ReductionError::OutsideDomain { t, x });
        }
        Ok(())
    }

    /// Affine interpolant between the boundary traces: exactly mu1 at x = 0
    /// and mu2 at x = L, with zero second space derivative.
    pub fn lift(&self, t: f64, x: f64) -> Result<f64, ReductionError> {
        self.check_domain(t, -self.tau, x)?;
        Ok(self.lift_unchecked(t, x))
    }

    // weighted form rather than mu1 + w (mu2 - mu1): exact at both endpoints
    pub(crate) fn lift_unchecked(&self, t: f64, x: f64) -> f64 {
        let w = x / self.length;
        (self.mu1)(t) * (1.0 - w) + (self.mu2)(t) * w
    }

    pub(crate) fn lift_dd(&self, t: f64, x: f64) -> f64 {
        let w = x / self.length;
        (self.mu1_dd)(t) * (1.0 - w) + (self.mu2_dd)(t) * w
    }

    pub(crate) fn lift_dot(&self, t: f64, x: f64) -> f64 {
        let w = x / self.length;
        (self.mu1_dot)(t) * (1.0 - w) + (self.mu2_dot)(t) * w
    }

    // space derivatives of the lift and its time derivative
    pub(crate) fn lift_x(&self, t: f64) -> f64 {
        ((self.mu2)(t) - (self.mu1)(t)) / self.length
    }

    pub(crate) fn lift_dot_x(&self, t: f64) -> f64 {
        ((self.mu2_dot)(t) - (self.mu1_dot)(t)) / self.length
    }

    /// Source of the lifted problem: f + d1 G(t) + d2 G(t - tau) - G_tt(t).
    pub fn source(&self, t: f64, x: f64) -> Result<f64, ReductionError> {
        self.check_domain(t, 0.0, x)?;
        Ok(self.source_unchecked(t, x))
    }

    pub(crate) fn source_unchecked(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x) + self.d1 * self.lift_unchecked(t, x)
            + self.d2 * self.lift_unchecked(t - self.tau, x)
            - self.lift_dd(t, x)
    }

    /// Spatial eigenvalue of mode n. Grouped as n * (pi / L) so that L = pi
    /// yields integer eigenvalues exactly.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        assert!(n >= 1);
        n as f64 * (PI / self.length)
    }

    /// Per-mode stiffnesses: omega_sq from the undelayed operator must be
    /// positive (the kernel runs its oscillatory branch on -omega_sq);
    /// upsilon_sq from the delayed operator may have either sign.
    pub fn modal_frequencies(&self, n: usize) -> Result<(f64, f64), ReductionError> {
        let lam = self.eigenvalue(n);
        let omega_sq = (self.a1 * lam) * (self.a1 * lam) - self.d1;
        let upsilon_sq = (self.a2 * lam) * (self.a2 * lam) - self.d2;
        if omega_sq <= 0.0 {
            return Err(ReductionError::NonpositiveOmega { n, omega_sq });
        }
        Ok((omega_sq, upsilon_sq))
    }

    /// Sine-basis projection (2/L) int_0^L h(s) sin(n pi s / L) ds on a
    /// fixed composite grid fine enough for the mode's oscillation, accepted
    /// only if doubling the panel count moves the value by at most quad_tol.
    fn sine_coefficient(
        &self,
        n: usize,
        h: &dyn Fn(f64) -> f64,
        quad_tol: f64,
    ) -> Result<f64, ReductionError> {
        let l = self.length;
        let nf = n as f64;
        let integrand = move |s: f64| h(s) * sin_pi(nf * s / l);
        let panels = 16.max(4 * n);
        let coarse = composite(&integrand, 0.0, l, panels)?;
        let fine = composite(&integrand, 0.0, l, 2 * panels)?;
        let err = (coarse - fine).abs();
        if err > quad_tol * (1.0 + fine.abs()) {
            return Err(QuadError::NonConvergence { lo: 0.0, hi: l, err, tol: quad_tol }.into());
        }
        Ok(2.0 / l * fine)
    }

    /// Mode-n projection of the lifted history and its time derivative at
    /// t in [-tau, 0].
    pub fn history_coefficient(
        &self,
        n: usize,
        t: f64,
        quad_tol: f64,
    ) -> Result<(f64, f64), ReductionError> {
        let pad = 1e-9 * self.tau;
        if !(-self.tau - pad..=pad).contains(&t) {
            return Err(ReductionError::OutsideDomain { t, x: f64::NAN });
        }
        let value =
            self.sine_coefficient(n, &|s| (self.phi)(t, s) - self.lift_unchecked(t, s), quad_tol)?;
        let slope =
            self.sine_coefficient(n, &|s| (self.phi_t)(t, s) - self.lift_dot(t, s), quad_tol)?;
        Ok((value, slope))
    }

    /// Mode-n projection of the reduced source at t in [0, T].
    pub fn forcing_coefficient(
        &self,
        n: usize,
        t: f64,
        quad_tol: f64,
    ) -> Result<f64, ReductionError> {
        self.check_domain(t, 0.0, 0.0)?;
        self.sine_coefficient(n, &|s| self.source_unchecked(t, s), quad_tol)
    }
}

/// Static data of one Fourier mode.
#[derive(Debug, Clone, Copy)]
pub struct ModalSystem {
    pub n: usize,
    pub lambda: f64,
    pub omega_sq: f64,
    pub upsilon_sq: f64,
}

impl ModalSystem {
    pub fn new(red: &ReducedProblem, n: usize) -> Result<Self, ReductionError> {
        let (omega_sq, upsilon_sq) = red.modal_frequencies(n)?;
        Ok(ModalSystem { n, lambda: red.eigenvalue(n), omega_sq, upsilon_sq })
    }
}
