//! Chebyshev interpolation on an interval. Used to freeze sampled modal
//! coefficient functions into cheap polynomial proxies: the fit samples the
//! function once at Lobatto nodes, after which evaluation is a Clenshaw
//! recurrence with no further calls into quadrature or expression code.
//!
//! Nodes include both endpoints, so a fit reproduces the function values at
//! the interval ends to rounding. That matters downstream: formulas that
//! read a coefficient exactly at an interval endpoint see the sampled value,
//! not an interpolation residual.

/// Interpolant p(x) = sum_j c_j T_j(u), u the affine map of [lo, hi] onto
/// [-1, 1]. Coefficients are stored so the sum is plain (no halved terms).
#[derive(Debug, Clone)]
pub struct Chebyshev {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// The `degree + 1` Lobatto nodes of [lo, hi], ordered hi to lo, in the
    /// layout `fit_samples` expects.
    pub fn nodes(lo: f64, hi: f64, degree: usize) -> Vec<f64> {
        assert!(degree >= 1, "degree must be at least 1");
        assert!(hi > lo, "empty interval [{lo}, {hi}]");
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        (0..=degree)
            .map(|k| {
                let u = (std::f64::consts::PI * k as f64 / degree as f64).cos();
                mid + half * u
            })
            .collect()
    }

    /// Interpolate `f` at the `degree + 1` Lobatto nodes of [lo, hi].
    pub fn fit(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, degree: usize) -> Chebyshev {
        let samples: Vec<f64> = Self::nodes(lo, hi, degree).into_iter().map(f).collect();
        Self::fit_samples(lo, hi, &samples)
    }

    /// Build the interpolant from values already sampled at `nodes(lo, hi,
    /// samples.len() - 1)`, for callers whose sampling is expensive or
    /// produces several coefficient functions per call.
    pub fn fit_samples(lo: f64, hi: f64, samples: &[f64]) -> Chebyshev {
        assert!(samples.len() >= 2, "need at least two samples");
        assert!(hi > lo, "empty interval [{lo}, {hi}]");
        let n = samples.len() - 1;
        let mut coeffs = vec![0.0; n + 1];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut acc = crate::numeric::KahanSum::new();
            for (k, &fk) in samples.iter().enumerate() {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                acc.add(w * fk * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos());
            }
            *c = 2.0 / n as f64 * acc.value();
        }
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        Chebyshev { lo, hi, coeffs }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Clenshaw evaluation. `x` may sit a hair outside [lo, hi] (roundoff at
    /// panel seams); the recurrence extrapolates smoothly there.
    pub fn eval(&self, x: f64) -> f64 {
        let u = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs[1..].iter().rev() {
            let next = c + 2.0 * u * b1 - b2;
            b2 = b1;
            b1 = next;
        }
        self.coeffs[0] + u * b1 - b2
    }

    /// Largest |c_j| over the top quarter of coefficients; a cheap proxy for
    /// the interpolation error of an analytic function.
    pub fn tail_estimate(&self) -> f64 {
        let n = self.coeffs.len();
        let start = n - (n / 4).max(1);
        self.coeffs[start..].iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}
