//! Shared numerical kernels: Chebyshev interpolants, adaptive and tanh-sinh
//! quadrature, and least-squares power-law fits.

/// Chebyshev interpolant on `[lo, hi]`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Cheb {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients c_k of sum_k c_k T_k(x), x mapped to [-1, 1].
    pub c: Vec<f64>,
}

impl Cheb {
    /// Interpolate `f` at `n` Chebyshev-Gauss nodes on `[lo, hi]`.
    pub fn fit(lo: f64, hi: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> Self {
        assert!(n >= 2 && hi > lo);
        let nf = n as f64;
        let vals: Vec<f64> = (0..n)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / nf;
                let x = theta.cos();
                f(0.5 * (lo + hi) + 0.5 * (hi - lo) * x)
            })
            .collect();
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, v) in vals.iter().enumerate() {
                s += v * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / nf).cos();
            }
            *ck = s * 2.0 / nf;
        }
        c[0] *= 0.5;
        Cheb { lo, hi, c }
    }

    /// Evaluate by Clenshaw recurrence. Arguments slightly outside `[lo, hi]`
    /// are clamped; the interpolant owns its zone boundaries.
    pub fn eval(&self, x: f64) -> f64 {
        let t = ((2.0 * x - self.lo - self.hi) / (self.hi - self.lo)).clamp(-1.0, 1.0);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in self.c.iter().rev() {
            let b0 = 2.0 * t * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        b1 - t * b2
    }

    /// Derivative interpolant (exact coefficient recurrence).
    pub fn deriv(&self) -> Cheb {
        let n = self.c.len();
        let mut d = vec![0.0; n];
        if n >= 2 {
            d[n - 2] = 2.0 * (n as f64 - 1.0) * self.c[n - 1];
            for k in (0..n.saturating_sub(2)).rev() {
                d[k] = d.get(k + 2).copied().unwrap_or(0.0) + 2.0 * (k as f64 + 1.0) * self.c[k + 1];
            }
            d[0] *= 0.5;
        }
        let scale = 2.0 / (self.hi - self.lo);
        Cheb {
            lo: self.lo,
            hi: self.hi,
            c: d.into_iter().map(|v| v * scale).collect(),
        }
    }

    /// Magnitude of the trailing coefficient pair, a cheap convergence gauge.
    pub fn tail(&self) -> f64 {
        let n = self.c.len();
        self.c[n.saturating_sub(2)..]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Adaptive Gauss-Kronrod (G7, K15) quadrature of `f` on `[a, b]`.
///
/// Bisects until the embedded error estimate of each panel is below the
/// proportional share of `tol`. Returns `(integral, error_estimate)`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        // K15 nodes (positive half) and weights; G7 weights on the shared nodes.
        const XK: [f64; 8] = [
            0.0,
            0.207_784_955_007_898_5,
            0.405_845_151_377_397_2,
            0.586_087_235_467_691_1,
            0.741_531_185_599_394_4,
            0.864_864_423_359_769_1,
            0.949_107_912_342_758_5,
            0.991_455_371_120_813_0,
        ];
        const WK: [f64; 8] = [
            0.209_482_141_084_727_8,
            0.204_432_940_075_298_9,
            0.190_350_578_064_785_4,
            0.169_004_726_639_267_9,
            0.140_653_259_715_525_9,
            0.104_790_010_322_250_2,
            0.063_092_092_629_978_55,
            0.022_935_322_010_529_22,
        ];
        const WG: [f64; 4] = [
            0.417_959_183_673_469_4,
            0.381_830_050_505_118_9,
            0.279_705_391_489_276_7,
            0.129_484_966_168_869_7,
        ];
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let f0 = f(c);
        let mut k = WK[0] * f0;
        let mut g = WG[0] * f0;
        for i in 1..8 {
            let fp = f(c + h * XK[i]);
            let fm = f(c - h * XK[i]);
            k += WK[i] * (fp + fm);
            if i % 2 == 0 {
                g += WG[i / 2] * (fp + fm);
            }
        }
        (k * h, (k - g).abs() * h)
    }

    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut stack = vec![(a, b, tol.max(1e-300))];
    let mut budget = 4000usize;
    while let Some((a, b, t)) = stack.pop() {
        let (v, e) = panel(f, a, b);
        budget = budget.saturating_sub(1);
        if e <= t || (b - a).abs() < 1e-14 * (a.abs() + b.abs() + 1.0) || budget == 0 {
            total += v;
            err_total += e;
        } else {
            let m = 0.5 * (a + b);
            stack.push((a, m, t * 0.5));
            stack.push((m, b, t * 0.5));
        }
    }
    (total, err_total)
}

/// Tanh-sinh (double-exponential) quadrature on `(a, b)`, robust to integrable
/// endpoint singularities like (b-x)^gamma with gamma > -1.
pub fn integrate_tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    use std::f64::consts::FRAC_PI_2;
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    // Contribution of the node pair at +t and -t. Endpoint distances are
    // computed from exp(-2w) directly so that integrands singular at a or b
    // see an accurate distance instead of cancellation noise. Node pairs whose
    // abscissa rounds onto an endpoint are dropped, which caps the absolute
    // accuracy near 1e-8 for inverse-square-root endpoint singularities.
    let node = |t: f64| -> f64 {
        let w = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * w).exp();
        let one_minus_u = 2.0 * e / (1.0 + e);
        let dx = d * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        if !dx.is_finite() || dx == 0.0 {
            return 0.0;
        }
        if t == 0.0 {
            return f(c) * dx;
        }
        let xr = b - d * one_minus_u;
        let xl = a + d * one_minus_u;
        let mut s = 0.0;
        if xr < b {
            let v = f(xr) * dx;
            if v.is_finite() {
                s += v;
            }
        }
        if xl > a {
            let v = f(xl) * dx;
            if v.is_finite() {
                s += v;
            }
        }
        s
    };
    let tmax = 4.5;
    let mut h = 1.0;
    let mut sum = node(0.0);
    let mut t0 = h;
    while t0 <= tmax {
        sum += node(t0);
        t0 += h;
    }
    let mut level = 0usize;
    loop {
        let mut new = 0.0;
        let half = h * 0.5;
        let mut t = half;
        while t <= tmax {
            new += node(t);
            t += h;
        }
        let prev = sum * h;
        sum += new;
        h = half;
        level += 1;
        let cur = sum * h;
        if (level >= 3 && (cur - prev).abs() <= tol * (1.0 + cur.abs())) || level > 12 {
            return (cur, (cur - prev).abs());
        }
    }
}

/// Adaptive Runge-Kutta (Dormand-Prince 4(5)) integration of y' = f(x, y)
/// from `x0` to `x1`, with dense output at the caller's request points.
///
/// `f` writes the derivative into its third argument. Returns the state at
/// every point of `xs` (which must be monotone from `x0` towards `x1`).
pub fn rk45(
    f: &dyn Fn(f64, &[f64], &mut [f64]),
    x0: f64,
    y0: &[f64],
    xs: &[f64],
    tol: f64,
) -> Vec<Vec<f64>> {
    let dim = y0.len();
    let dir = if xs.last().copied().unwrap_or(x0) >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut h = dir * 1e-4 * (1.0 + x0.abs());
    let mut out = Vec::with_capacity(xs.len());

    // Butcher tableau (Dormand-Prince 5(4)).
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

    let step = |x: f64, y: &[f64], h: f64| -> (Vec<f64>, f64) {
        let mut k = vec![vec![0.0; dim]; 7];
        f(x, y, &mut k[0]);
        for s in 0..6 {
            let mut ys = y.to_vec();
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                if A[s][j] != 0.0 {
                    for d in 0..dim {
                        ys[d] += h * A[s][j] * kj[d];
                    }
                }
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            f(x + C[s] * h, &ys, &mut tail[0]);
        }
        let mut y5 = y.to_vec();
        let mut err = 0.0f64;
        for d in 0..dim {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                d5 += B5[j] * kj[d];
                d4 += B4[j] * kj[d];
            }
            y5[d] += h * d5;
            err = err.max((h * (d5 - d4)).abs() / (1.0 + y[d].abs()));
        }
        (y5, err)
    };

    for &xt in xs {
        while (xt - x) * dir > 1e-300 {
            let mut hh = h;
            if (x + hh - xt) * dir > 0.0 {
                hh = xt - x;
            }
            let (ynew, err) = step(x, &y, hh);
            if err <= tol || hh.abs() < 1e-13 * (1.0 + x.abs()) {
                x += hh;
                y = ynew;
                let grow = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 2.0 };
                h = hh * grow.clamp(0.2, 5.0);
            } else {
                h = hh * 0.9 * (tol / err).powf(0.25).clamp(0.1, 1.0);
            }
        }
        out.push(y.clone());
    }
    out
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Monotone-safe power-law fit: regress log(y) on log(x).
/// Returns `(exponent, log_intercept, r_squared)`. All values must be positive.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Geometric grid of `n` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cheb_reproduces_smooth_function() {
        let c = Cheb::fit(0.0, 2.0, 32, |x| (x * x).sin() + x);
        for i in 0..40 {
            let x = 0.05 * i as f64;
            assert_relative_eq!(c.eval(x), (x * x).sin() + x, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn cheb_derivative_matches_analytic() {
        let c = Cheb::fit(0.5, 3.0, 48, |x| x.ln() * x);
        let d = c.deriv();
        for i in 1..25 {
            let x = 0.5 + 0.1 * i as f64;
            assert_relative_eq!(d.eval(x), x.ln() + 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gauss_kronrod_exact_on_polynomial() {
        let (v, _) = integrate(&|x| x.powi(7) - 3.0 * x.powi(2), 0.0, 2.0, 1e-12);
        assert_relative_eq!(v, 256.0 / 8.0 - 8.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_kronrod_oscillatory() {
        let (v, _) = integrate(&|x| (40.0 * x).sin(), 0.0, 1.0, 1e-12);
        assert_relative_eq!(v, (1.0 - (40.0f64).cos()) / 40.0, epsilon = 1e-10);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // int_0^1 (1-x)^(-1/2) dx = 2
        let (v, _) = integrate_tanh_sinh(&|x| (1.0 - x).powf(-0.5), 0.0, 1.0, 1e-12);
        assert_relative_eq!(v, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn rk45_integrates_harmonic_oscillator() {
        let f = |_x: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let xs: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
        let sol = rk45(&f, 0.0, &[0.0, 1.0], &xs, 1e-11);
        for (x, y) in xs.iter().zip(&sol) {
            assert_relative_eq!(y[0], x.sin(), epsilon = 1e-8);
            assert_relative_eq!(y[1], x.cos(), epsilon = 1e-8);
        }
    }

    #[test]
    fn rk45_integrates_backwards() {
        let f = |x: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = 2.0 * x * y[0];
        };
        let sol = rk45(&f, 2.0, &[(4.0f64).exp()], &[1.0, 0.5], 1e-11);
        assert_relative_eq!(sol[0][0], (1.0f64).exp(), max_relative = 1e-8);
        assert_relative_eq!(sol[1][0], (0.25f64).exp(), max_relative = 1e-8);
    }

    #[test]
    fn loglog_fit_recovers_exponent() {
        let x = log_grid(1e-3, 1e-1, 20);
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t.powf(2.0)).collect();
        let (p, _, r2) = loglog_fit(&x, &y);
        assert_relative_eq!(p, 2.0, epsilon = 1e-9);
        assert!(r2 > 0.999999);
    }
}
