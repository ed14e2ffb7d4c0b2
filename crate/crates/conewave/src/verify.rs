//! Independent finite-difference and quadrature oracles: radial quintic-wave
//! residuals on cone grids, cone energy integrals with endpoint-aware
//! quadrature, and log-log decay-exponent fits.
//!
//! These routines share no code with the series/ODE construction they audit:
//! residuals come from centered stencils with Richardson extrapolation, and
//! energies from tanh-sinh quadrature that tolerates the (1-a)^{beta}-type
//! behavior at the light cone.

use crate::util::{integrate_tanh_sinh, log_grid, loglog_fit};
use crate::{Error, Result};

/// Sample layout for residual checks: log-spaced time slices, radial samples
/// kept a fixed margin inside the light cone so that every finite-difference
/// stencil stays in the domain of smoothness.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConeGrid {
    pub t_samples: Vec<f64>,
    pub n_r: usize,
    /// Radii run up to (1 - margin) t.
    pub margin: f64,
    /// Stencil width as a fraction of the distance to the boundary/axis.
    pub h_frac: f64,
    /// Absolute cap on the stencil width as a fraction of t (keeps the
    /// truncation error of the widest stencils in check).
    pub h_cap: f64,
}

impl ConeGrid {
    pub fn new(t_lo: f64, t_hi: f64, n_t: usize, n_r: usize) -> ConeGrid {
        ConeGrid {
            t_samples: log_grid(t_lo, t_hi, n_t),
            n_r,
            margin: 0.05,
            h_frac: 0.05,
            h_cap: 0.01,
        }
    }

    /// Radial samples of the slice at time t: uniform on (0, (1 - margin) t].
    pub fn radii(&self, t: f64) -> Vec<f64> {
        let r_hi = (1.0 - self.margin) * t;
        (1..=self.n_r).map(|i| r_hi * i as f64 / self.n_r as f64).collect()
    }

    /// Stencil width at (t, r), respecting the axis and the cone boundary.
    pub fn stencil_h(&self, t: f64, r: f64) -> f64 {
        (self.h_frac * r.min(t - r)).min(self.h_cap * t)
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualSample {
    pub t: f64,
    pub r: f64,
    pub residual: f64,
}

/// Centered O(h^2) residual of u_tt - u_rr - (2/r) u_r - u^5 at (t, r).
pub fn residual_at(
    u: &dyn Fn(f64, f64) -> Result<f64>,
    t: f64,
    r: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || r - h <= 0.0 || r + h > t - h {
        return Err(Error::OutOfCone { r, t });
    }
    let c = u(t, r)?;
    let utt = (u(t + h, r)? - 2.0 * c + u(t - h, r)?) / (h * h);
    let urr = (u(t, r + h)? - 2.0 * c + u(t, r - h)?) / (h * h);
    let ur = (u(t, r + h)? - u(t, r - h)?) / (2.0 * h);
    Ok(utt - urr - 2.0 / r * ur - c.powi(5))
}

/// Richardson-extrapolated residual: combines the h and h/2 stencils into an
/// O(h^4) evaluation.
pub fn residual_richardson(
    u: &dyn Fn(f64, f64) -> Result<f64>,
    t: f64,
    r: f64,
    h: f64,
) -> Result<f64> {
    let r1 = residual_at(u, t, r, h)?;
    let r2 = residual_at(u, t, r, 0.5 * h)?;
    Ok((4.0 * r2 - r1) / 3.0)
}

/// Residual field of the radial quintic wave operator over a cone grid.
pub fn residual_quintic(
    u: &dyn Fn(f64, f64) -> Result<f64>,
    grid: &ConeGrid,
) -> Result<Vec<ResidualSample>> {
    let mut out = Vec::new();
    for &t in &grid.t_samples {
        for r in grid.radii(t) {
            let h = grid.stencil_h(t, r);
            out.push(ResidualSample { t, r, residual: residual_richardson(u, t, r, h)? });
        }
    }
    Ok(out)
}

/// Cone energy of an error slice: int_0^t e(r)^2 r^2 dr by tanh-sinh
/// quadrature (robust against the integrable endpoint behavior at r = t).
pub fn cone_energy_error(e: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
    let f = |r: f64| {
        let v = e(r);
        v * v * r * r
    };
    // scale estimate for the absolute tolerance
    let mut scale = 0.0f64;
    for k in 1..=8 {
        let r = t * k as f64 / 9.0;
        scale = scale.max(f(r));
    }
    let tol = 1e-12 * (scale * t).max(1e-300);
    let (val, err) = integrate_tanh_sinh(&f, 0.0, t, tol);
    if !val.is_finite() || err > 1e-8 * val.abs().max(scale * t).max(1e-300) {
        return Err(Error::QuadratureFailure { location: format!("cone energy at t = {t}"), err });
    }
    Ok(val)
}

/// A log-log decay fit over a window, reported only when the regression is
/// tight (R^2 >= 0.98).
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Least-squares exponent of a positive series on a window of the abscissa.
pub fn decay_fit(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (mut wx, mut wy) = (Vec::new(), Vec::new());
    for (&x, &y) in xs.iter().zip(ys) {
        if x >= window.0 && x <= window.1 {
            if !(y > 0.0) {
                return Err(Error::InputClass(format!(
                    "decay fit requires positive values, got {y} at {x}"
                )));
            }
            wx.push(x);
            wy.push(y);
        }
    }
    if wx.len() < 8 {
        return Err(Error::Config(format!(
            "decay fit needs at least 8 points in the window, got {}",
            wx.len()
        )));
    }
    let (exponent, intercept, r2) = loglog_fit(&wx, &wy);
    if r2 < 0.98 {
        return Err(Error::FitQuality { r2 });
    }
    Ok(DecayFit { exponent, intercept, r2, window, n_points: wx.len() })
}

/// Error slice of an assembled approximate solution:
/// e_k(t, r) = lambda^{1/2} t^{-2} * (stripped error)(R, a, b).
pub fn build_error_slice(
    sol: &crate::bulk::ApproximateSolution,
    t: f64,
) -> impl Fn(f64) -> f64 + '_ {
    let lam = sol.params.lambda(t);
    let b = sol.params.small_b(t);
    let pref = lam.sqrt() / (t * t);
    move |r: f64| {
        let a = (r / t).min(1.0 - 1e-14);
        pref * sol.error.evaluate(lam * r, a, b, 1e-9).unwrap_or(f64::NAN)
    }
}

/// Cone energy series of a build's error over the grid's time slices.
pub fn build_error_energy_series(
    sol: &crate::bulk::ApproximateSolution,
    ts: &[f64],
) -> Result<Vec<f64>> {
    ts.iter()
        .map(|&t| cone_energy_error(&build_error_slice(sol, t), t))
        .collect()
}
