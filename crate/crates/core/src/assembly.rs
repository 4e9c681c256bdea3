//! Assembles the truncated sine-series solution of the reduced problem from
//! per-mode delay kernels and projected data, and evaluates it (with
//! derivatives) on points and grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cheb::Chebyshev;
use crate::field::{GridField, Quantity};
use crate::kernels::{
    build_stepwise, KernelError, KernelKind, KernelParams, Side, StepwiseKernel,
};
use crate::numeric::{cos_pi, linspace, pairwise_sum, sin_pi};
use crate::quad::QuadOptions;
use crate::reduction::{ModalSystem, ReducedProblem, ReductionError};
use crate::scalar_dde::{convolve_kernel, ScalarError};

/// Chebyshev degree of the per-mode history proxies on [-tau, 0]. Each proxy
/// sample costs a full sine transform, so this is a real knob: 48 holds
/// projection coefficients of smooth data to roundoff while keeping the
/// build under a second per few modes.
pub const PROXY_DEGREE: usize = 48;

/// Degree of the per-step forcing proxies. The source is smooth inside each
/// step interval; 32 nodes per interval is already overkill for anything the
/// expression language can produce.
const FORCING_PROXY_DEGREE: usize = 32;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("mode {n} produced a non-finite data projection")]
    BadProxy { n: usize },
    #[error("second time derivative is not defined inside the history interval (t = {t})")]
    HistoryCurvature { t: f64 },
    #[error("point (t, x) = ({t}, {x}) lies outside the solution domain")]
    OutsideDomain { t: f64, x: f64 },
    #[error("operation needs {need} modes, solution holds {have}")]
    TooFewModes { need: usize, have: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    pub n_modes: usize,
    /// Tolerance of the data projections and of the representation-formula
    /// convolutions.
    pub quad_tol: f64,
    /// Tolerance handed to the direct series evaluator when it is used for
    /// cross-checks; the stepwise construction itself is closed-form.
    pub kernel_tol: f64,
    /// Additive safety margin on the decay-exponent thresholds.
    pub decay_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { n_modes: 64, quad_tol: 1e-10, kernel_tol: 1e-12, decay_margin: 0.1 }
    }
}

/// One Fourier mode: its delay kernels and Chebyshev proxies of the
/// projected history and source. Proxies make the convolution integrands
/// cheap; the projections themselves are quadratures over x and would
/// otherwise sit inside a nested quadrature over s.
struct Mode {
    sys: ModalSystem,
    params: KernelParams,
    kc: StepwiseKernel,
    ks: StepwiseKernel,
    phi: Chebyshev,
    phi_dot: Chebyshev,
    /// One proxy per step interval [p tau, (p+1) tau].
    forcing: Vec<Chebyshev>,
    phi0: f64,
    phi_dot0: f64,
}

impl Mode {
    fn build(
        red: &ReducedProblem,
        n: usize,
        k_steps: usize,
        opts: &SolverOptions,
    ) -> Result<Mode, AssemblyError> {
        let sys = ModalSystem::new(red, n)?;
        let params = KernelParams::new(-sys.omega_sq, -sys.upsilon_sq, red.tau)?;
        // one step beyond the horizon: convolution arguments reach t_end
        let kc = build_stepwise(params, KernelKind::Cosine, k_steps + 1)?;
        let ks = build_stepwise(params, KernelKind::Sine, k_steps + 1)?;

        let tau = red.tau;
        let nodes = Chebyshev::nodes(-tau, 0.0, PROXY_DEGREE);
        let mut vals = Vec::with_capacity(nodes.len());
        let mut slopes = Vec::with_capacity(nodes.len());
        for &t in &nodes {
            let (v, s) = red.history_coefficient(n, t.clamp(-tau, 0.0), opts.quad_tol)?;
            vals.push(v);
            slopes.push(s);
        }
        if !vals.iter().chain(&slopes).all(|v| v.is_finite()) {
            return Err(AssemblyError::BadProxy { n });
        }
        let phi = Chebyshev::fit_samples(-tau, 0.0, &vals);
        let phi_dot = Chebyshev::fit_samples(-tau, 0.0, &slopes);
        let (phi0, phi_dot0) = red.history_coefficient(n, 0.0, opts.quad_tol)?;

        let mut forcing = Vec::with_capacity(k_steps);
        for p in 0..k_steps {
            let lo = p as f64 * tau;
            let hi = (p as f64 + 1.0) * tau;
            let fnodes = Chebyshev::nodes(lo, hi, FORCING_PROXY_DEGREE);
            let samples = fnodes
                .iter()
                .map(|&t| red.forcing_coefficient(n, t.clamp(0.0, red.t_end), opts.quad_tol))
                .collect::<Result<Vec<_>, _>>()?;
            if !samples.iter().all(|v| v.is_finite()) {
                return Err(AssemblyError::BadProxy { n });
            }
            forcing.push(Chebyshev::fit_samples(lo, hi, &samples));
        }

        Ok(Mode { sys, params, kc, ks, phi, phi_dot, forcing, phi0, phi_dot0 })
    }
}

/// Least-squares decay exponent p of coeff ~ n^(-p) on a log-log scale.
/// Entries at or below `floor` are treated as exact zeros and dropped (a
/// coefficient that is zero decays faster than any power). Fewer than two
/// surviving points leave the exponent undetermined.
pub fn fit_decay_exponent(ns: &[usize], coeffs: &[f64], floor: f64) -> Option<f64> {
    assert_eq!(ns.len(), coeffs.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&n, &c) in ns.iter().zip(coeffs) {
        if c.is_finite() && c > floor {
            xs.push((n as f64).ln());
            ys.push(c.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    Some(-(num / den))
}

/// Verdict on one coefficient family. An undetermined exponent passes: it
/// means the tail already sits at the zero floor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

pub fn classify_decay(ns: &[usize], coeffs: &[f64], floor: f64, threshold: f64) -> DecayFit {
    let exponent = fit_decay_exponent(ns, coeffs, floor);
    DecayFit { exponent, threshold, pass: exponent.map_or(true, |p| p > threshold) }
}

/// Decay diagnostics over the top half of the computed modes. The
/// thresholds come from the error analysis of the truncated series: each
/// step interval differentiates the data once more, so K steps need K+3
/// powers from the history and K+2 from the source for a uniformly
/// convergent second derivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub k_steps: usize,
    pub margin: f64,
    /// |Phi_n(0)| + |Phi_dot_n(0)| against n^-(K+3+margin).
    pub history_value: DecayFit,
    /// sup over [-tau, 0] of |Phi_n| against n^-(K+3+margin).
    pub history_sup: DecayFit,
    /// sup over [0, T] of |F_n| against n^-(K+2+margin).
    pub forcing_sup: DecayFit,
    /// max over sampled t of |T_N| for the last computed mode; a direct
    /// handle on the size of the first dropped terms.
    pub tail_mode_sup: f64,
}

/// Truncated series solution v(t, x) = sum_n T_n(t) sin(n pi x / L) + G(t, x)
/// of the reduced problem, with T_n given by the representation formula
/// through the mode's delay kernels.
pub struct SeriesSolution {
    reduced: ReducedProblem,
    modes: Vec<Mode>,
    k_steps: usize,
    opts: SolverOptions,
}

impl SeriesSolution {
    pub fn build(reduced: ReducedProblem, opts: SolverOptions) -> Result<Self, AssemblyError> {
        if opts.n_modes == 0 {
            return Err(AssemblyError::TooFewModes { need: 1, have: 0 });
        }
        let k_steps = (reduced.t_end / reduced.tau).round() as usize;
        let modes = (1..=opts.n_modes)
            .into_par_iter()
            .map(|n| Mode::build(&reduced, n, k_steps, &opts))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SeriesSolution { reduced, modes, k_steps, opts })
    }

    pub fn reduced(&self) -> &ReducedProblem {
        &self.reduced
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Number of step intervals covering [0, t_end].
    pub fn k_steps(&self) -> usize {
        self.k_steps
    }

    pub fn modal_systems(&self) -> Vec<ModalSystem> {
        self.modes.iter().map(|m| m.sys).collect()
    }

    fn qopts(&self) -> QuadOptions {
        QuadOptions {
            abs_tol: self.opts.quad_tol,
            rel_tol: self.opts.quad_tol,
            ..QuadOptions::default()
        }
    }

    fn mode(&self, n: usize) -> Result<&Mode, AssemblyError> {
        if n == 0 || n > self.modes.len() {
            return Err(AssemblyError::TooFewModes { need: n, have: self.modes.len() });
        }
        Ok(&self.modes[n - 1])
    }

    /// Index of the delay knot at t, if t sits on one (relative slack 1e-9).
    pub fn knot_index(&self, t: f64) -> Option<usize> {
        let tau = self.reduced.tau;
        let k = (t / tau).round();
        if k >= 0.0 && (t - k * tau).abs() <= 1e-9 * tau {
            Some(k as usize)
        } else {
            None
        }
    }

    fn check_domain(&self, t: f64, x: f64) -> Result<(), AssemblyError> {
        let r = &self.reduced;
        let pt = 1e-9 * r.tau;
        let px = 1e-12 * r.length;
        if !(-r.tau - pt..=r.t_end + pt).contains(&t) || !(-px..=r.length + px).contains(&x) {
            return Err(AssemblyError::OutsideDomain { t, x });
        }
        Ok(())
    }

    /// Source proxy at time s, routed to the step interval containing s.
    fn forcing_eval(&self, mode: &Mode, s: f64) -> f64 {
        let idx = ((s / self.reduced.tau).floor() as isize).clamp(0, self.k_steps as isize - 1);
        mode.forcing[idx as usize].eval(s)
    }

    /// Source proxy at t with one-sided routing at knots, where adjacent
    /// step proxies may disagree by their fitting error.
    fn forcing_at(&self, mode: &Mode, t: f64, side: Side) -> f64 {
        let idx = match self.knot_index(t) {
            Some(k) if k >= 1 => match side {
                Side::Left => k - 1,
                Side::Right => k.min(self.k_steps - 1),
            },
            _ => ((t / self.reduced.tau).floor() as isize).clamp(0, self.k_steps as isize - 1)
                as usize,
        };
        mode.forcing[idx].eval(t)
    }

    /// Knots strictly inside (0, t); the source proxies change there.
    fn interior_knots(&self, t: f64) -> Vec<f64> {
        let tau = self.reduced.tau;
        let mut cuts = Vec::new();
        let mut k = 1.0;
        while k * tau < t {
            cuts.push(k * tau);
            k += 1.0;
        }
        cuts
    }

    /// T_n and its first two time derivatives.
    ///
    /// ```text
    /// T_n(t) = C(t) Phi_n(0) + S(t) Phi_dot_n(0)
    ///        + b int_{-tau}^0 S(t - tau - s) Phi_n(s) ds
    ///        + int_0^t S(t - s) F_n(s) ds            (t >= 0, b = -upsilon^2)
    /// T_n(t) = Phi_n(t)                              (t < 0)
    /// ```
    ///
    /// Derivatives differentiate each term. S(0) = 0 kills the Leibniz
    /// boundary term at first order; at second order S_dot(0) = 1 contributes
    /// F_n(t), and on the first step interval the history convolution's
    /// moving kink contributes b Phi_n(t - tau). At an exact knot the
    /// one-sided second derivatives are reported through the kernel side
    /// flags alone, which keeps the jump of C'' at tau visible instead of
    /// cancelling it against the history term's disappearance.
    fn modal_term(&self, mode: &Mode, t: f64, deriv: usize, side: Side) -> Result<f64, AssemblyError> {
        let tau = self.reduced.tau;
        let t = if t.abs() <= 1e-9 * tau { 0.0 } else { t };
        if t < 0.0 {
            return match deriv {
                0 => Ok(mode.phi.eval(t)),
                1 => Ok(mode.phi_dot.eval(t)),
                _ => Err(AssemblyError::HistoryCurvature { t }),
            };
        }
        let qopts = self.qopts();
        let c = mode.kc.eval(t, deriv, side)?;
        let s = mode.ks.eval(t, deriv, side)?;
        let hist = convolve_kernel(
            &mode.ks,
            deriv,
            t - tau,
            &|u| mode.phi.eval(u),
            -tau,
            0.0,
            &[],
            &qopts,
        )?;
        let force = if t > 0.0 {
            convolve_kernel(
                &mode.ks,
                deriv,
                t,
                &|u| self.forcing_eval(mode, u),
                0.0,
                t,
                &self.interior_knots(t),
                &qopts,
            )?
        } else {
            0.0
        };
        let mut out = c * mode.phi0 + s * mode.phi_dot0 + mode.params.b * hist + force;
        if deriv == 2 {
            out += self.forcing_at(mode, t, side);
            if t < tau * (1.0 - 1e-9) {
                out += mode.params.b * mode.phi.eval(t - tau);
            }
        }
        Ok(out)
    }

    pub fn modal_solution(&self, n: usize, t: f64) -> Result<f64, AssemblyError> {
        self.modal_term(self.mode(n)?, t, 0, Side::Right)
    }

    pub fn modal_derivative(
        &self,
        n: usize,
        t: f64,
        deriv: usize,
        side: Side,
    ) -> Result<f64, AssemblyError> {
        assert!(deriv <= 2, "only value, slope and curvature are defined");
        self.modal_term(self.mode(n)?, t, deriv, side)
    }

    fn time_deriv(q: Quantity) -> usize {
        match q {
            Quantity::U | Quantity::V | Quantity::Vx | Quantity::Vxx => 0,
            Quantity::Vt | Quantity::Vtx => 1,
            Quantity::Vtt => 2,
        }
    }

    /// sin / cos factor of mode m at x, including eigenvalue powers. The
    /// argument is formed as n * (x / L) so that x = L gives an exact
    /// integer and the Dirichlet rows come out exactly.
    fn spatial_factor(&self, m: &Mode, x: f64, q: Quantity) -> f64 {
        let l = self.reduced.length;
        let n = m.sys.n as f64;
        match q {
            Quantity::U | Quantity::V | Quantity::Vt | Quantity::Vtt => sin_pi(n * (x / l)),
            Quantity::Vx | Quantity::Vtx => m.sys.lambda * cos_pi(n * (x / l)),
            Quantity::Vxx => -m.sys.lambda * m.sys.lambda * sin_pi(n * (x / l)),
        }
    }

    /// Boundary-lift contribution to the quantity. G is linear in x, so all
    /// second x-derivatives vanish.
    fn lift_part(&self, t: f64, x: f64, q: Quantity) -> f64 {
        let r = &self.reduced;
        match q {
            Quantity::U | Quantity::V => r.lift_unchecked(t, x),
            Quantity::Vx => r.lift_x(t),
            Quantity::Vxx => 0.0,
            Quantity::Vt => r.lift_dot(t, x),
            Quantity::Vtx => r.lift_dot_x(t),
            Quantity::Vtt => r.lift_dd(t, x),
        }
    }

    fn combine(&self, t: f64, x: f64, q: Quantity, side: Side) -> Result<f64, AssemblyError> {
        self.check_domain(t, x)?;
        let deriv = Self::time_deriv(q);
        let mut terms = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            terms.push(self.modal_term(m, t, deriv, side)? * self.spatial_factor(m, x, q));
        }
        let mut val = pairwise_sum(&terms) + self.lift_part(t, x, q);
        if q == Quantity::U {
            val *= (-self.reduced.alpha * x).exp();
        }
        Ok(val)
    }

    pub fn evaluate_v(&self, t: f64, x: f64) -> Result<f64, AssemblyError> {
        self.combine(t, x, Quantity::V, Side::Right)
    }

    /// Solution of the original problem, u = exp(-alpha x) v.
    pub fn evaluate_u(&self, t: f64, x: f64) -> Result<f64, AssemblyError> {
        self.combine(t, x, Quantity::U, Side::Right)
    }

    pub fn evaluate_derivative(
        &self,
        t: f64,
        x: f64,
        q: Quantity,
        side: Side,
    ) -> Result<f64, AssemblyError> {
        self.combine(t, x, q, side)
    }

    /// Samples the quantity on the tensor grid. Rows follow t_values except
    /// for Vtt, where a row at a positive knot is emitted twice (left then
    /// right limit) and a row at t = 0 carries the right limit only;
    /// tt_sides records the routing. Row evaluation is parallel over time
    /// but each row combines modes in a fixed order, so results do not
    /// depend on the thread count.
    pub fn evaluate_grid(
        &self,
        q: Quantity,
        t_values: &[f64],
        x_values: &[f64],
    ) -> Result<GridField, AssemblyError> {
        let tau = self.reduced.tau;
        let mut rows: Vec<(f64, Option<Side>)> = Vec::new();
        let mut knot_times = Vec::new();
        for &t in t_values {
            let knot = self.knot_index(t);
            if let Some(k) = knot {
                if k >= 1 && !knot_times.contains(&t) {
                    knot_times.push(t);
                }
            }
            if q == Quantity::Vtt {
                if t < -1e-9 * tau {
                    return Err(AssemblyError::HistoryCurvature { t });
                }
                match knot {
                    Some(0) => rows.push((t, Some(Side::Right))),
                    Some(_) => {
                        rows.push((t, Some(Side::Left)));
                        rows.push((t, Some(Side::Right)));
                    }
                    None => rows.push((t, None)),
                }
            } else {
                rows.push((t, None));
            }
        }

        let deriv = Self::time_deriv(q);
        let spatial: Vec<Vec<f64>> = self
            .modes
            .iter()
            .map(|m| x_values.iter().map(|&x| self.spatial_factor(m, x, q)).collect())
            .collect();
        let values = rows
            .par_iter()
            .map(|&(t, side)| -> Result<Vec<f64>, AssemblyError> {
                let s = side.unwrap_or(Side::Right);
                for &x in x_values {
                    self.check_domain(t, x)?;
                }
                let modal = self
                    .modes
                    .iter()
                    .map(|m| self.modal_term(m, t, deriv, s))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut row = Vec::with_capacity(x_values.len());
                let mut terms = vec![0.0; modal.len()];
                for (j, &x) in x_values.iter().enumerate() {
                    for (i, tm) in modal.iter().enumerate() {
                        terms[i] = tm * spatial[i][j];
                    }
                    let mut val = pairwise_sum(&terms) + self.lift_part(t, x, q);
                    if q == Quantity::U {
                        val *= (-self.reduced.alpha * x).exp();
                    }
                    row.push(val);
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let field = GridField {
            quantity: q,
            t_values: rows.iter().map(|r| r.0).collect(),
            x_values: x_values.to_vec(),
            values,
            knot_times,
            tt_sides: rows.iter().map(|r| r.1).collect(),
        };
        debug_assert!(field.check().is_ok(), "{:?}", field.check());
        Ok(field)
    }

    /// Fits decay exponents of the projected data over the top half of the
    /// modes and compares them against the uniform-convergence thresholds.
    pub fn decay_diagnostics(&self) -> Result<DecayReport, AssemblyError> {
        let n_modes = self.modes.len();
        if n_modes < 16 {
            return Err(AssemblyError::TooFewModes { need: 16, have: n_modes });
        }
        let ns: Vec<usize> = (n_modes / 2 + 1..=n_modes).collect();
        let tau = self.reduced.tau;

        let a_all: Vec<f64> =
            self.modes.iter().map(|m| m.phi0.abs() + m.phi_dot0.abs()).collect();
        let hist_grid = linspace(-tau, 0.0, 129);
        let b_all: Vec<f64> = self
            .modes
            .iter()
            .map(|m| hist_grid.iter().map(|&s| m.phi.eval(s).abs()).fold(0.0, f64::max))
            .collect();
        let c_all: Vec<f64> = self
            .modes
            .iter()
            .map(|m| {
                let mut sup = 0.0f64;
                for (p, proxy) in m.forcing.iter().enumerate() {
                    let lo = p as f64 * tau;
                    for s in linspace(lo, lo + tau, 33) {
                        sup = sup.max(proxy.eval(s).abs());
                    }
                }
                sup
            })
            .collect();

        let hist_th = self.k_steps as f64 + 3.0 + self.opts.decay_margin;
        let force_th = self.k_steps as f64 + 2.0 + self.opts.decay_margin;
        let classify = |all: &[f64], th: f64| {
            let floor = 1e-12 * all.iter().cloned().fold(0.0, f64::max);
            let coeffs: Vec<f64> = ns.iter().map(|&n| all[n - 1]).collect();
            classify_decay(&ns, &coeffs, floor, th)
        };

        let last = self.modes.last().expect("n_modes >= 16");
        let mut tail = 0.0f64;
        for t in linspace(0.0, self.reduced.t_end, 17) {
            tail = tail.max(self.modal_term(last, t, 0, Side::Right)?.abs());
        }

        Ok(DecayReport {
            k_steps: self.k_steps,
            margin: self.opts.decay_margin,
            history_value: classify(&a_all, hist_th),
            history_sup: classify(&b_all, hist_th),
            forcing_sup: classify(&c_all, force_th),
            tail_mode_sup: tail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::reduction::{reduce, ProblemSpec};
    use crate::scalar_dde::{method_of_steps_oracle, ForcingSpec, HistorySpec};
    use std::f64::consts::PI;
    use std::sync::{Arc, OnceLock};

    /// x-independent boundary data, constant unit history, linear-in-t
    /// driving. Reduces to alpha = 1/2, d1 = -1, d2 = 26, F with a strong
    /// lift component; modal data Phi_n = 2 (-1)^(n+1) / (pi n).
    fn demo_spec() -> ProblemSpec {
        ProblemSpec {
            a1: 1.0,
            a2: 2.0,
            b1: 1.0,
            b2: 4.0,
            c1: -0.75,
            c2: 27.0,
            tau: 2.0,
            t_end: 10.0,
            length: PI,
            g: parse("exp(-x/2)*t").unwrap(),
            psi: parse("exp(-x/2)").unwrap(),
            theta1: parse("1").unwrap(),
            theta2: parse("0").unwrap(),
            theta1_dd: Some(parse("0").unwrap()),
            theta2_dd: Some(parse("0").unwrap()),
        }
    }

    fn demo_solution() -> &'static SeriesSolution {
        static CELL: OnceLock<SeriesSolution> = OnceLock::new();
        CELL.get_or_init(|| {
            let red = reduce(&demo_spec()).unwrap();
            SeriesSolution::build(red, SolverOptions::default()).unwrap()
        })
    }

    /// No lift, no zeroth-order terms, polynomial history: everything smooth
    /// and small, with the delayed term still active through a2.
    fn smooth_spec() -> ProblemSpec {
        ProblemSpec {
            a1: 1.0,
            a2: 0.5,
            b1: 0.0,
            b2: 0.0,
            c1: 0.0,
            c2: 0.0,
            tau: 1.0,
            t_end: 2.0,
            length: PI,
            g: parse("sin(x)*t").unwrap(),
            psi: parse("x*(pi-x)*(1+t/2)").unwrap(),
            theta1: parse("0").unwrap(),
            theta2: parse("0").unwrap(),
            theta1_dd: Some(parse("0").unwrap()),
            theta2_dd: Some(parse("0").unwrap()),
        }
    }

    fn smooth_solution(n_modes: usize) -> SeriesSolution {
        let red = reduce(&smooth_spec()).unwrap();
        let opts = SolverOptions { n_modes, ..SolverOptions::default() };
        SeriesSolution::build(red, opts).unwrap()
    }

    #[test]
    fn demo_mode_one_matches_scalar_oracle() {
        let red = reduce(&demo_spec()).unwrap();
        let opts = SolverOptions { n_modes: 1, ..SolverOptions::default() };
        let sol = SeriesSolution::build(red, opts).unwrap();

        let params = KernelParams::new(-2.0, 22.0, 2.0).unwrap();
        let hist = HistorySpec::new(
            Arc::new(|_| 2.0 / PI),
            Arc::new(|_| 0.0),
            2.0,
        )
        .unwrap();
        let forcing = ForcingSpec::new(Arc::new(|s: f64| (4.0 * s + 50.0) / PI), vec![]);
        let run = method_of_steps_oracle(params, &hist, &forcing, 10.0, 1e-3).unwrap();

        for t in linspace(0.0, 10.0, 26) {
            let (y, _) = run.lookup(t).unwrap();
            let got = sol.modal_solution(1, t).unwrap();
            assert!(
                (got - y).abs() <= 1e-6 * (1.0 + y.abs()),
                "t = {t}: modal {got} vs oracle {y}"
            );
        }
    }

    #[test]
    fn dirichlet_rows_are_exact() {
        let red = reduce(&demo_spec()).unwrap();
        let opts = SolverOptions { n_modes: 8, ..SolverOptions::default() };
        let sol = SeriesSolution::build(red, opts).unwrap();
        for t in linspace(-2.0, 10.0, 25) {
            let left = sol.evaluate_u(t, 0.0).unwrap();
            let right = sol.evaluate_u(t, PI).unwrap();
            assert!((left - 1.0).abs() <= 1e-12, "u(t, 0) = {left} at t = {t}");
            assert!(right.abs() <= 1e-12, "u(t, L) = {right} at t = {t}");
        }
    }

    #[test]
    fn demo_history_is_reproduced() {
        let sol = demo_solution();
        // v on the history interval should recover phi = 1; the truncated
        // sine series of the sawtooth x/L converges like 2/(pi N) there
        let v = sol.evaluate_v(-1.0, PI / 2.0).unwrap();
        assert!((v - 1.0).abs() <= 2e-2, "v(-1, L/2) = {v}");
        let u = sol.evaluate_u(-0.5, 1.0).unwrap();
        assert!((u - (-0.5f64).exp()).abs() <= 2e-2, "u(-0.5, 1) = {u}");
    }

    #[test]
    fn modal_value_at_zero_is_projection() {
        let sol = demo_solution();
        for n in [1usize, 2, 7, 33] {
            let t0 = sol.modal_solution(n, 0.0).unwrap();
            let exact = 2.0 * if n % 2 == 1 { 1.0 } else { -1.0 } / (PI * n as f64);
            assert!((t0 - exact).abs() <= 1e-9, "mode {n}: {t0} vs {exact}");
        }
    }

    #[test]
    fn partial_energy_is_monotone_and_bounded() {
        let sol = demo_solution();
        // Parseval for phi - G = x/L: (2/L) int (x/L)^2 = 2/3
        let energy = |n_max: usize| -> f64 {
            (1..=n_max)
                .map(|n| sol.modes[n - 1].phi.eval(-0.5).powi(2))
                .sum::<f64>()
        };
        let s32 = energy(32);
        let s64 = energy(64);
        assert!(s64 <= 2.0 / 3.0 + 1e-9, "partial energy {s64} above the Parseval bound");
        assert!(s64 > s32, "partial sums of squares must grow");
        assert!(2.0 / 3.0 - s64 < 2.0 / 3.0 - s32);
    }

    #[test]
    fn curvature_jump_detected_at_first_knot() {
        let sol = demo_solution();
        let left = sol.evaluate_derivative(2.0, 1.3, Quantity::Vtt, Side::Left).unwrap();
        let right = sol.evaluate_derivative(2.0, 1.3, Quantity::Vtt, Side::Right).unwrap();
        assert!(
            (left - right).abs() > 1e-3,
            "expected a curvature jump at the first knot, got {left} vs {right}"
        );
    }

    #[test]
    fn value_and_slope_continuous_at_knots() {
        let sol = demo_solution();
        let x = 1.3;
        for q in [Quantity::V, Quantity::Vt] {
            for t in [2.0, 4.0] {
                // two-sided differences at shrinking eps, extrapolated to
                // eps -> 0 to remove the smooth drift
                let d = |eps: f64| {
                    let hi = sol.evaluate_derivative(t + eps, x, q, Side::Right).unwrap();
                    let lo = sol.evaluate_derivative(t - eps, x, q, Side::Right).unwrap();
                    (hi - lo, hi.abs().max(lo.abs()))
                };
                let (d4, s4) = d(1e-4);
                let (d5, s5) = d(1e-5);
                let jump = (10.0 * d5 - d4) / 9.0;
                let scale = 1.0 + s4.max(s5);
                assert!(
                    jump.abs() <= 1e-3 * scale,
                    "{} at t = {t}: extrapolated jump {jump}, scale {scale}",
                    q.label()
                );
            }
        }
    }

    #[test]
    fn slope_differences_shrink_with_eps() {
        let sol = smooth_solution(8);
        let x = 1.1;
        for q in [Quantity::V, Quantity::Vt] {
            let d = |eps: f64| {
                sol.evaluate_derivative(1.0 + eps, x, q, Side::Right).unwrap()
                    - sol.evaluate_derivative(1.0 - eps, x, q, Side::Right).unwrap()
            };
            let d4 = d(1e-4).abs();
            let d5 = d(1e-5).abs();
            assert!(
                d5 <= 0.15 * d4 + 1e-12,
                "{}: |d(1e-5)| = {d5} does not shrink against |d(1e-4)| = {d4}",
                q.label()
            );
        }
    }

    #[test]
    fn interior_residual_vanishes_on_smooth_data() {
        let sol = smooth_solution(16);
        let red = sol.reduced();
        let (a1s, a2s) = (red.a1 * red.a1, red.a2 * red.a2);
        // one point inside the first step interval (exercises the history
        // branch of the delayed terms), one beyond it
        for (t, x) in [(0.6, 1.1), (1.4, 2.0)] {
            let vtt = sol.evaluate_derivative(t, x, Quantity::Vtt, Side::Right).unwrap();
            let vxx = sol.evaluate_derivative(t, x, Quantity::Vxx, Side::Right).unwrap();
            let vxx_del =
                sol.evaluate_derivative(t - red.tau, x, Quantity::Vxx, Side::Right).unwrap();
            let v = sol.evaluate_v(t, x).unwrap();
            let v_del = sol.evaluate_v(t - red.tau, x).unwrap();
            let f = red.source(t, x).unwrap();
            let res = vtt - a1s * vxx - a2s * vxx_del - red.d1 * v - red.d2 * v_del - f;
            assert!(res.abs() <= 1e-6, "residual {res} at (t, x) = ({t}, {x})");
        }
    }

    #[test]
    fn spatial_slope_matches_finite_differences() {
        let sol = smooth_solution(16);
        let (t, x, h) = (1.3, 1.7, 1e-4);
        let vx = sol.evaluate_derivative(t, x, Quantity::Vx, Side::Right).unwrap();
        let fd = (sol.evaluate_v(t, x + h).unwrap() - sol.evaluate_v(t, x - h).unwrap())
            / (2.0 * h);
        assert!((vx - fd).abs() <= 1e-5, "v_x {vx} vs central difference {fd}");

        let vt = sol.evaluate_derivative(t, x, Quantity::Vt, Side::Right).unwrap();
        let fd_t = (sol.evaluate_v(t + h, x).unwrap() - sol.evaluate_v(t - h, x).unwrap())
            / (2.0 * h);
        assert!((vt - fd_t).abs() <= 1e-5, "v_t {vt} vs central difference {fd_t}");
    }

    #[test]
    fn truncation_error_shrinks_with_mode_count() {
        let sols: Vec<SeriesSolution> = [4, 8, 16, 32].iter().map(|&n| smooth_solution(n)).collect();
        let ts = [0.4, 1.3, 1.9];
        let xs = [0.7, 1.6, 2.5];
        let gap = |a: &SeriesSolution, b: &SeriesSolution| {
            let mut sup = 0.0f64;
            for &t in &ts {
                for &x in &xs {
                    sup = sup.max((a.evaluate_v(t, x).unwrap() - b.evaluate_v(t, x).unwrap()).abs());
                }
            }
            sup
        };
        let d4 = gap(&sols[0], &sols[1]);
        let d8 = gap(&sols[1], &sols[2]);
        let d16 = gap(&sols[2], &sols[3]);
        assert!(d8 < d4, "doubling 4 -> 8 must tighten: {d4} vs {d8}");
        assert!(d16 < d8, "doubling 8 -> 16 must tighten: {d8} vs {d16}");
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mut spec = smooth_spec();
        spec.g = parse("0").unwrap();
        spec.psi = parse("0").unwrap();
        let red = reduce(&spec).unwrap();
        let sol =
            SeriesSolution::build(red, SolverOptions { n_modes: 4, ..SolverOptions::default() })
                .unwrap();
        assert_eq!(sol.evaluate_v(1.3, 0.7).unwrap(), 0.0);
        assert_eq!(sol.evaluate_u(0.4, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn curvature_rows_duplicate_knots() {
        let sol = smooth_solution(4);
        let field = sol
            .evaluate_grid(Quantity::Vtt, &[0.0, 0.5, 1.0, 2.0], &[0.3, 1.0])
            .unwrap();
        assert_eq!(field.t_values, vec![0.0, 0.5, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(
            field.tt_sides,
            vec![
                Some(Side::Right),
                None,
                Some(Side::Left),
                Some(Side::Right),
                Some(Side::Left),
                Some(Side::Right),
            ]
        );
        assert_eq!(field.knot_times, vec![1.0, 2.0]);
        field.check().unwrap();

        let plain = sol.evaluate_grid(Quantity::V, &[0.0, 0.5, 1.0], &[0.3]).unwrap();
        assert_eq!(plain.t_values, vec![0.0, 0.5, 1.0]);
        assert!(plain.tt_sides.iter().all(|s| s.is_none()));
        // grid values agree with pointwise evaluation
        let pt = sol.evaluate_v(0.5, 0.3).unwrap();
        assert_eq!(plain.values[1][0], pt);
    }

    #[test]
    fn curvature_grid_rejects_history_times() {
        let sol = smooth_solution(4);
        let err = sol.evaluate_grid(Quantity::Vtt, &[-0.5, 1.0], &[0.3]).unwrap_err();
        assert!(matches!(err, AssemblyError::HistoryCurvature { .. }));
    }

    #[test]
    fn demo_decay_diagnostics_fail_as_expected() {
        let report = demo_solution().decay_diagnostics().unwrap();
        assert_eq!(report.k_steps, 5);
        let p = report.history_value.exponent.expect("history coefficients are nonzero");
        assert!((0.9..=1.1).contains(&p), "sawtooth history must fit p ~ 1, got {p}");
        assert!(!report.history_value.pass);
        assert!(!report.history_sup.pass);
        let pf = report.forcing_sup.exponent.expect("forcing coefficients are nonzero");
        assert!((0.8..=1.2).contains(&pf), "forcing exponent {pf}");
        assert!(!report.forcing_sup.pass);
        assert_eq!(report.history_value.threshold, 8.1);
        assert_eq!(report.forcing_sup.threshold, 7.1);
        assert!(report.tail_mode_sup > 1e3, "demo tail mode stays large");
    }

    #[test]
    fn single_mode_data_passes_decay_check() {
        let mut spec = smooth_spec();
        spec.psi = parse("sin(x)*(2+t)").unwrap();
        spec.g = parse("0").unwrap();
        let red = reduce(&spec).unwrap();
        let sol =
            SeriesSolution::build(red, SolverOptions { n_modes: 16, ..SolverOptions::default() })
                .unwrap();
        let report = sol.decay_diagnostics().unwrap();
        assert!(report.history_value.pass);
        assert!(report.history_value.exponent.is_none(), "tail is at the zero floor");
        assert!(report.history_sup.pass);
        assert!(report.forcing_sup.pass);
    }

    #[test]
    fn decay_exponent_fit_is_exact_on_power_laws() {
        let ns: Vec<usize> = (33..=64).collect();
        for p in [1.0f64, 5.0, 9.0] {
            let coeffs: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-p)).collect();
            let fit = fit_decay_exponent(&ns, &coeffs, 0.0).unwrap();
            assert!((fit - p).abs() <= 1e-10, "p = {p}: fitted {fit}");
            let verdict = classify_decay(&ns, &coeffs, 0.0, 8.1);
            assert_eq!(verdict.pass, p > 8.1);
        }
        assert!(fit_decay_exponent(&[40, 50], &[0.0, 0.0], 0.0).is_none());
    }

    #[test]
    fn points_outside_domain_are_rejected() {
        let sol = smooth_solution(4);
        assert!(matches!(
            sol.evaluate_v(5.0, 1.0),
            Err(AssemblyError::OutsideDomain { .. })
        ));
        assert!(matches!(
            sol.evaluate_v(1.0, -0.5),
            Err(AssemblyError::OutsideDomain { .. })
        ));
        assert!(matches!(
            sol.evaluate_derivative(-0.5, 1.0, Quantity::Vtt, Side::Right),
            Err(AssemblyError::HistoryCurvature { .. })
        ));
    }
}
