//! Small numeric helpers shared across the crate: compensated and pairwise
//! summation, phase-exact sine/cosine of pi-multiples, and Fornberg
//! finite-difference weights for arbitrary stencils.

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Pairwise tree reduction. Order is fixed by the slice order, so results are
/// reproducible regardless of thread count or chunking upstream.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        let mut acc = 0.0;
        for &x in v {
            acc += x;
        }
        return acc;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// sin(pi * u) with exact zeros at integer u. Argument reduction happens in
/// u-space, so large multiples keep full relative phase accuracy.
pub fn sin_pi(u: f64) -> f64 {
    let r = u.rem_euclid(2.0); // [0, 2)
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r < 0.5 {
        (std::f64::consts::PI * r).sin()
    } else if r <= 1.5 {
        (std::f64::consts::PI * (1.0 - r)).sin()
    } else {
        -(std::f64::consts::PI * (2.0 - r)).sin()
    }
}

/// cos(pi * u) with exact zeros at half-integer u.
pub fn cos_pi(u: f64) -> f64 {
    sin_pi(u + 0.5)
}

/// Uniform grid with both endpoints included. `n >= 2`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let h = (b - a) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    v[n - 1] = b; // endpoint exact
    v
}

/// Fornberg weights: given stencil nodes `xs` and expansion point `x0`,
/// returns weights so that sum(w[i] * f(xs[i])) approximates the `m`-th
/// derivative of f at x0 (Fornberg 1988, one derivative order at a time).
pub fn fd_weights(xs: &[f64], x0: f64, m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(m < n, "stencil too short for requested derivative");
    // c[j][k] = weight of node j for derivative order k
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// m-th derivative (m = 1 or 2) of `f` at `t` by a 5-point stencil of spacing
/// `h`. The window is shifted to stay inside [lo, hi]; weights come from
/// `fd_weights`, so shifted windows keep their full order.
pub fn derivative_5pt(f: &dyn Fn(f64) -> f64, t: f64, h: f64, m: usize, lo: f64, hi: f64) -> f64 {
    debug_assert!(m == 1 || m == 2);
    let mut start = t - 2.0 * h;
    if start < lo {
        start = lo;
    }
    if start + 4.0 * h > hi {
        start = hi - 4.0 * h;
    }
    let xs: Vec<f64> = (0..5).map(|i| start + h * i as f64).collect();
    let w = fd_weights(&xs, t, m);
    // For m >= 1 the weights sum to zero analytically, so the center value
    // can be subtracted from every sample. Constants then differentiate to
    // exactly zero instead of (rounding in sum w_i) / h^m.
    let f0 = f(t);
    let mut acc = KahanSum::new();
    for (xi, wi) in xs.iter().zip(&w) {
        acc.add(wi * (f(*xi) - f0));
    }
    acc.value()
}
