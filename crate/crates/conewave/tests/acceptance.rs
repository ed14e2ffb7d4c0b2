//! Acceptance gates for the blow-up construction pipeline.
//!
//! Twelve independent pass/fail criteria covering the series algebra, the
//! ODE solvers, the bulk profile build, the spectral data, the Fourier-side
//! parametrix, and the finite-difference verifier. Each test prints exactly
//! one `PASS`/`FAIL` line with the observed value and the pinned target.
//! Heavy artifacts (profile builds, spectral tables, source tables) are
//! computed once and shared across the criteria.

use conewave::bulk::{
    build, compute_e0, evaluate_u, odd_correction, split_error, ApproximateSolution,
    RadialAtoms, StepParity,
};
use conewave::ode::{
    lbeta_frobenius_basis, lbeta_green_solve, lbeta_power_solve, lbeta_taylor,
    lbeta_taylor_exact, taylor_rational_defect, L0FundamentalSystem as Fs,
};
use conewave::parametrix::{
    basicpara_battery, fd_order_battery, first_iterate, picard_iteration, FirstIterateOptions,
    ModifiedSource, ModifiedSourceOptions, Parametrix, ParametrixOptions, PicardOptions,
    RhoModel, SourceShape, ZeroHook,
};
use conewave::scaling::ScalingParams;
use conewave::series::{BetaExponent, ConeExpansion, MixedExpansion, TruncationConfig};
use conewave::spectral::{l2_on, sturm_negative_count, SpectralData, SpectralOptions};
use conewave::util::{linear_fit, log_grid, loglog_fit};
use conewave::verify::{build_error_energy_series, decay_fit, residual_quintic, ConeGrid};
use num_complex::Complex64;
use num_rational::BigRational;
use once_cell::sync::Lazy;

const NU: f64 = 0.3;
const N_POW: f64 = 8.0;
const SEED: u64 = 7;

fn params() -> ScalingParams {
    ScalingParams::new(NU, 10.0).unwrap()
}

fn cfg() -> TruncationConfig {
    TruncationConfig::default()
}

/// Build configuration for the pointwise finite-difference oracles: keep
/// enough powers of b that the assembled error is exact to solver noise.
fn build_cfg() -> TruncationConfig {
    TruncationConfig { b_degree: 16, ..TruncationConfig::default() }
}

static BUILD1: Lazy<ApproximateSolution> =
    Lazy::new(|| build(&params(), 1, &build_cfg()).unwrap());
static BUILD3: Lazy<ApproximateSolution> =
    Lazy::new(|| build(&params(), 3, &build_cfg()).unwrap());
static SPECTRAL: Lazy<SpectralData> =
    Lazy::new(|| SpectralData::compute(&SpectralOptions::default()).unwrap());
static SOURCE: Lazy<ModifiedSource> = Lazy::new(|| {
    let opts = ModifiedSourceOptions::new(SourceShape::new(N_POW, 0), 10.0, 100.0, 1e4);
    ModifiedSource::build(&SPECTRAL, params(), &opts).unwrap()
});

fn parametrix() -> Parametrix {
    Parametrix::new(params(), RhoModel::from_spectral(&SPECTRAL))
}

/// Print the single acceptance line for a criterion and enforce it.
fn gate(name: &str, pass: bool, observed: &str, target: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} {name}: {observed} (target: {target})");
    assert!(pass, "{name}: {observed} (target: {target})");
}

/// Richardson-extrapolated residual of the radial quintic wave operator,
/// u_tt - u_rr - (2/r) u_r - u^5, for a closure without error handling.
fn box_residual(u: &dyn Fn(f64, f64) -> f64, t: f64, r: f64, h: f64) -> f64 {
    let one = |h: f64| {
        let utt = (u(t + h, r) - 2.0 * u(t, r) + u(t - h, r)) / (h * h);
        let urr = (u(t, r + h) - 2.0 * u(t, r) + u(t, r - h)) / (h * h);
        let ur = (u(t, r + h) - u(t, r - h)) / (2.0 * h);
        utt - urr - 2.0 * ur / r
    };
    (4.0 * one(h / 2.0) - one(h)) / 3.0 - u(t, r).powi(5)
}

// ---------------------------------------------------------------------------
// 1. Wronskian identities of the fundamental systems
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_wronskian_identities() {
    // normalized inner fundamental system: W = 1 on 10^3 log-spaced points
    let mut worst_inner = 0.0f64;
    for &r in &log_grid(1e-3, 1e3, 1000) {
        let w = Fs::dtphi1(r) * Fs::tphi2(r) - Fs::tphi1(r) * Fs::dtphi2(r);
        worst_inner = worst_inner.max((w - 1.0).abs());
    }

    // cone-operator bases at every exponent used by the k = 3 build
    let betas = [
        BetaExponent::first(1).value(NU),
        BetaExponent::second(1).value(NU),
        BetaExponent::first(2).value(NU),
        BetaExponent::second(2).value(NU),
    ];
    // the Frobenius u-series has radius 1; reaching a = 0.1 (u = 0.9) at
    // full accuracy needs the long tail
    let mut worst_cone = 0.0f64;
    for &beta in &betas {
        let basis = lbeta_frobenius_basis(beta, 512).unwrap();
        for i in 0..=89 {
            let a = 0.1 + 0.01 * i as f64;
            let model = basis.k * (1.0 - a * a).powf(beta) / (a * a);
            let rel = (basis.wronskian(a) - model).abs() / model.abs();
            worst_cone = worst_cone.max(rel);
        }
    }

    gate(
        "wronskian_identities",
        worst_inner < 1e-12 && worst_cone < 1e-8,
        &format!("inner defect {worst_inner:.2e}, cone defect {worst_cone:.2e}"),
        "inner < 1e-12 on 10^3 points; cone < 1e-8 on a in [0.1, 0.99]",
    );
}

// ---------------------------------------------------------------------------
// 2. Stationary residual of the ground state
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_stationary_residual() {
    let grid = ConeGrid::new(0.5, 1.0, 4, 12);
    let samples = residual_quintic(&|_t, r| Ok((1.0 + r * r / 3.0).powf(-0.5)), &grid).unwrap();
    let worst = samples.iter().map(|s| s.residual.abs()).fold(0.0f64, f64::max);
    gate(
        "stationary_residual",
        worst < 1e-8,
        &format!("max |residual| {worst:.2e} on {} stencils", samples.len()),
        "Richardson-extrapolated quintic residual of the ground state < 1e-8",
    );
}

// ---------------------------------------------------------------------------
// 3. Zeroth error oracle: closed form vs finite differences of u0
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_zeroth_error_oracle() {
    let p = params();
    let c = cfg();
    let e0 = compute_e0(&p, &c);
    let u0 = |t: f64, r: f64| {
        let rr = r * p.lambda(t);
        p.lambda(t).sqrt() * (1.0 + rr * rr / 3.0).powf(-0.5)
    };
    let direct = |e0: &MixedExpansion, t: f64, r: f64| {
        p.lambda(t).sqrt() / (t * t)
            * e0.evaluate(r * p.lambda(t), r / t, p.small_b(t), 1e-9).unwrap()
    };
    // relative to the slice scale: e0 has a zero crossing inside the cone,
    // so pointwise ratios are normalized by the sup of the slice
    let mut worst = 0.0f64;
    for i in 0..20 {
        let t = 0.2 + 0.2 * i as f64 / 19.0;
        let mut diffs = Vec::new();
        let mut scale = 0.0f64;
        for j in 0..20 {
            let a = 0.05 + 0.85 * j as f64 / 19.0;
            let r = a * t;
            let fd = box_residual(&u0, t, r, 2e-4 * t);
            let d = direct(&e0, t, r);
            diffs.push((fd - d).abs());
            scale = scale.max(d.abs());
        }
        for diff in diffs {
            worst = worst.max(diff / scale);
        }
    }

    // value at the center: ((1+nu)^2/4 + (1+nu)/2) * lambda^{1/2} t^{-2}
    let center = (1.0 + NU) * (1.0 + NU) / 4.0 + (1.0 + NU) / 2.0;
    let at_zero = e0.evaluate(1e-10, 1e-12, params().small_b(0.3), 1e-9).unwrap();
    let center_rel = (at_zero - center).abs() / center;

    gate(
        "zeroth_error_oracle",
        worst < 1e-6 && center_rel < 1e-9,
        &format!("max FD mismatch {worst:.2e} on 20x20 grid, center defect {center_rel:.2e}"),
        "closed form vs FD residual of u0 rel < 1e-6; center value ((1+nu)^2/4 + (1+nu)/2)",
    );
}

// ---------------------------------------------------------------------------
// 4. First correction: defining equation and large-R structure
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_first_correction() {
    let p = params();
    let c = cfg();
    let atoms = RadialAtoms::new(&c);
    let e0 = compute_e0(&p, &c);
    let (e0p, _) = split_error(&e0, StepParity::Odd, 1, &atoms, &c).unwrap();
    let (v1, _) = odd_correction(&e0p, &atoms, &c).unwrap();

    // residual of the defining inner equation on the matching window,
    // differentiating through a dedicated window interpolant
    let f = &e0p.terms[0].radial;
    let h = &v1.terms[0].radial;
    let wfit = conewave::util::Cheb::fit(0.7, 4.6, 36, |r| h.eval(r));
    let d1 = wfit.deriv();
    let d2 = d1.deriv();
    let scale = f.eval(0.0).abs();
    let mut worst_res = 0.0f64;
    for &rr in &[1.0, 1.7, 2.4, 3.1, 4.0] {
        let l0h = d2.eval(rr) + 2.0 * d1.eval(rr) / rr + 5.0 * atoms.w4.eval(rr) * h.eval(rr);
        worst_res = worst_res.max((l0h - f.eval(rr)).abs() / scale);
    }

    // large-R regression against b1 R + b2 + b3 log(R)/R
    let rs = log_grid(1e2, 1e4, 80);
    let ys: Vec<f64> = rs.iter().map(|&r| h.eval(r)).collect();
    let phi = |r: f64| [r, 1.0, r.ln() / r];
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (&r, &y) in rs.iter().zip(&ys) {
        let b = phi(r);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += b[i] * b[j];
            }
            rhs[i] += b[i] * y;
        }
    }
    // solve the 3x3 normal equations by Gaussian elimination
    let mut a = m;
    let mut v = rhs;
    for i in 0..3 {
        let piv = (i..3).max_by(|&p, &q| a[p][i].abs().total_cmp(&a[q][i].abs())).unwrap();
        a.swap(i, piv);
        v.swap(i, piv);
        for k in i + 1..3 {
            let fct = a[k][i] / a[i][i];
            for j in i..3 {
                a[k][j] -= fct * a[i][j];
            }
            v[k] -= fct * v[i];
        }
    }
    let mut coef = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut s = v[i];
        for j in i + 1..3 {
            s -= a[i][j] * coef[j];
        }
        coef[i] = s / a[i][i];
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0f64, 0.0f64);
    for (&r, &y) in rs.iter().zip(&ys) {
        let b = phi(r);
        let fit = coef[0] * b[0] + coef[1] * b[1] + coef[2] * b[2];
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean) * (y - mean);
    }
    let r2 = 1.0 - ss_res / ss_tot;

    gate(
        "first_correction",
        worst_res < 1e-8 && r2 >= 0.99,
        &format!("equation residual {worst_res:.2e}, asymptotic-fit R^2 = {r2:.6}"),
        "inner-equation residual < 1e-8; b1 R + b2 + b3 log(R)/R fit R^2 >= 0.99 on [1e2, 1e4]",
    );
}

// ---------------------------------------------------------------------------
// 5. Cone-series cross-validation: Taylor recursion vs Green quadrature
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_cone_series_cross_validation() {
    let c = cfg();
    let beta2 = (3.0 * NU - 1.0) / 2.0;
    let beta1 = (NU - 1.0) / 2.0;

    // power series vs Green-kernel quadrature on a in [0, 0.5]
    let mut worst_diff = 0.0f64;
    for &beta in &[beta1, beta2] {
        let power = lbeta_power_solve(beta, &[1.0], &c).unwrap();
        let rhs = ConeExpansion::constant(1.0, &c);
        let green = lbeta_green_solve(beta, &BetaExponent::empty(), &rhs, &c).unwrap();
        for i in 0..=25 {
            let a = 0.02 * i as f64;
            worst_diff = worst_diff.max((green.eval(a) - power.eval(a)).abs());
        }
    }

    // exact-rational leading coefficients at nu = 3/10
    let big = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let q2 = lbeta_taylor_exact(&big(-1, 20), &[big(1, 1)], 6);
    let q1 = lbeta_taylor_exact(&big(-7, 20), &[big(0, 1), big(1, 1)], 6);
    let exact_ok = q2[2] == big(1, 6) && q1[3] == big(1, 12);
    // and the scaled float identities q2[2] = c2/6, q1[3] = c1/12
    let c2 = 1.7;
    let c1 = -0.4;
    let q2f = lbeta_taylor(beta2, &[c2], 10).unwrap();
    let q1f = lbeta_taylor(beta1, &[0.0, c1], 10).unwrap();
    let float_ok = (q2f[2] - c2 / 6.0).abs() < 1e-14 && (q1f[3] - c1 / 12.0).abs() < 1e-14;
    let defect = taylor_rational_defect(3, 10, 40).unwrap();

    // fitted singular exponent at the cone boundary equals beta + 1
    let mut worst_expo = 0.0f64;
    for &beta in &[beta1, beta2] {
        let rhs = ConeExpansion::constant(1.0, &c);
        let green = lbeta_green_solve(beta, &BetaExponent::empty(), &rhs, &c).unwrap();
        let horner = |cs: &[f64], u: f64| cs.iter().rev().fold(0.0, |p, &v| p * u + v);
        let xs: Vec<f64> = (0..12).map(|i| 1e-3 * 1.35f64.powi(i)).collect();
        let lx: Vec<f64> = xs.iter().map(|u| u.ln()).collect();
        let ly: Vec<f64> = xs
            .iter()
            .map(|&u| (green.eval(1.0 - u) - horner(&green.reg1, u)).abs().ln())
            .collect();
        let (slope, _, _) = linear_fit(&lx, &ly);
        worst_expo = worst_expo.max((slope - (beta + 1.0)).abs() / (beta + 1.0).abs());
    }

    gate(
        "cone_series_cross_validation",
        worst_diff < 1e-8 && exact_ok && float_ok && defect < 1e-12 && worst_expo < 0.02,
        &format!(
            "series-vs-Green {worst_diff:.2e}, rational defect {defect:.2e}, \
             exponent deviation {worst_expo:.2e}"
        ),
        "agreement < 1e-8 on [0, 0.5]; q2[2] = c2/6, q1[3] = c1/12 exact; \
         singular exponent beta + 1 within 2%",
    );
}

// ---------------------------------------------------------------------------
// 6. Induction memberships and the assembled-error oracle at k = 3
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_induction_memberships() {
    let sol = &*BUILD3;
    let failed = sol.manifest.memberships.iter().filter(|m| !m.pass).count();

    // pointwise oracle away from the cone boundary: the assembled error must
    // match the finite-difference residual of the assembled profile
    let p = sol.params;
    let u = |t: f64, r: f64| evaluate_u(sol, t, r).unwrap();
    let mut worst = 0.0f64;
    for &t in &[0.12, 0.15, 0.18] {
        let lam = p.lambda(t);
        let h = 0.035 / lam;
        for &a in &[0.15, 0.3, 0.45] {
            let r = a * t;
            let fd = box_residual(&u, t, r, h);
            let direct = lam.sqrt() / (t * t)
                * sol.error.evaluate(lam * r, a, p.small_b(t), 1e-9).unwrap();
            worst = worst.max((fd - direct).abs() / direct.abs());
        }
    }

    gate(
        "induction_memberships",
        failed == 0 && worst < 1e-4,
        &format!(
            "{} of {} memberships certified, error-oracle mismatch {worst:.2e}",
            sol.manifest.memberships.len() - failed,
            sol.manifest.memberships.len()
        ),
        "every display certifies at k = 3; assembled e_k matches the FD residual rel 1e-4",
    );
}

// ---------------------------------------------------------------------------
// 7. Error-decay gain per correction pair
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_error_decay_gain() {
    let ts = log_grid(1e-3, 1e-1, 10);
    let e1 = build_error_energy_series(&BUILD1, &ts).unwrap();
    let e3 = build_error_energy_series(&BUILD3, &ts).unwrap();
    let fit1 = decay_fit(&ts, &e1, (1e-3, 1e-1)).unwrap();
    let fit3 = decay_fit(&ts, &e3, (1e-3, 1e-1)).unwrap();
    let gain = fit3.exponent - fit1.exponent;
    let target = 4.0 * NU;
    gate(
        "error_decay_gain",
        (gain - target).abs() <= 0.2 * target,
        &format!(
            "exponent {:.4} at k = 1, {:.4} at k = 3, gain {gain:.4} (R^2 {:.5}/{:.5})",
            fit1.exponent, fit3.exponent, fit1.r2, fit3.r2
        ),
        "cone-energy t-exponent gain 4 nu = 1.2 within 20% from e1 to e3",
    );
}

// ---------------------------------------------------------------------------
// 8. Spectral shapes of the linearized operator
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_spectral_shapes() {
    let data = &*SPECTRAL;
    let negatives = sturm_negative_count();

    let pick = |lo: f64, hi: f64| {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for m in &data.modes {
            if m.xi >= lo && m.xi <= hi {
                xs.push(m.xi);
                ys.push(m.rho);
            }
        }
        loglog_fit(&xs, &ys).0
    };
    let slope_lo = pick(1e-6, 1e-3);
    let slope_hi = pick(1e2, 1e5);

    // connection coefficient: |2 i xi^{1/2} a - 1| <= C xi^{-1/2} on [1e2, 1e5]
    let mut sup_c = 0.0f64;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for m in &data.modes {
        if m.xi >= 1e2 && m.xi <= 1e5 {
            let w = Complex64::new(0.0, 2.0 * m.xi.sqrt()) * m.a;
            let dev = (w - 1.0).norm();
            sup_c = sup_c.max(dev * m.xi.sqrt());
            xs.push(m.xi);
            ys.push(dev);
        }
    }
    let (a_slope, _, _) = loglog_fit(&xs, &ys);

    // free-operator calibration: rho = sqrt(xi)/pi to quadrature tolerance
    let free = SpectralData::compute(&SpectralOptions {
        free: true,
        n_xi: 60,
        ..Default::default()
    })
    .unwrap();
    let mut worst_free = 0.0f64;
    for m in &free.modes {
        let exact = m.xi.sqrt() / std::f64::consts::PI;
        worst_free = worst_free.max((m.rho - exact).abs() / exact);
    }

    gate(
        "spectral_shapes",
        negatives == 1
            && (slope_lo + 0.5).abs() < 0.025
            && (slope_hi - 0.5).abs() < 0.025
            && sup_c.is_finite()
            && a_slope < -0.4
            && worst_free < 1e-5,
        &format!(
            "negatives {negatives}, rho slopes {slope_lo:.4}/{slope_hi:.4}, \
             sqrt(xi)|2i sqrt(xi) a - 1| <= {sup_c:.3} (slope {a_slope:.3}), \
             free-density defect {worst_free:.2e}"
        ),
        "one negative eigenvalue; slopes -1/2 and +1/2 within 5%; \
         connection defect O(xi^{-1/2}); free density sqrt(xi)/pi within 1e-5",
    );
}

// ---------------------------------------------------------------------------
// 9. Transform isometry: Plancherel and round-trip on a 10-function battery
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_transform_isometry() {
    let data = &*SPECTRAL;
    let battery: Vec<(f64, f64, f64)> = vec![
        // (power p, width w, shift s): f(r) = r^p exp(-((r-s)/w)^2) - decaying,
        // vanishing at r = 0, spread over widths and locations
        (1.0, 0.7, 0.0),
        (2.0, 0.7, 0.0),
        (1.0, 2.0, 0.0),
        (2.0, 2.0, 0.0),
        (1.0, 5.0, 0.0),
        (2.0, 5.0, 0.0),
        (1.0, 1.0, 3.0),
        (2.0, 1.5, 4.0),
        (1.0, 0.5, 2.0),
        (3.0, 1.0, 0.0),
    ];
    let mut worst_pl = 0.0f64;
    let mut worst_rt = 0.0f64;
    for &(pw, w, s) in &battery {
        let f = move |r: f64| r.powf(pw) * (-((r - s) / w) * ((r - s) / w)).exp();
        let r_sup = (s + 6.0 * w).max(6.0 * w);
        let (x_d, x) = data.forward(&f, r_sup);
        let trans = (x_d * x_d + data.weighted_l2_sq(&x, 0.0)).sqrt();
        let direct = l2_on(&f, r_sup + w);
        worst_pl = worst_pl.max((trans / direct - 1.0).abs());

        // round trip in L^2(dR)
        let n = 400;
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for i in 1..n {
            let r = r_sup * i as f64 / n as f64;
            let back = data.inverse(x_d, &x, r);
            num += (back - f(r)) * (back - f(r));
            den += f(r) * f(r);
        }
        worst_rt = worst_rt.max((num / den).sqrt());
    }
    gate(
        "transform_isometry",
        worst_pl < 0.01 && worst_rt < 0.01,
        &format!("Plancherel defect {worst_pl:.2e}, round-trip defect {worst_rt:.2e}"),
        "both within 1% on the 10-function battery",
    );
}

// ---------------------------------------------------------------------------
// 10. Parametrix solution property and the two-weight inequality
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_solution_operator() {
    let mut par = parametrix();
    par.opts = ParametrixOptions::accurate();
    let orders = fd_order_battery(&par, 20, SEED);
    let worst_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);

    let par = parametrix();
    let rows =
        basicpara_battery(&par, SPECTRAL.xi_d, N_POW, 4, &[0.0, 0.25, 0.5], SEED).unwrap();
    let ratio_max = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    let ratio_min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let xd_max = rows.iter().map(|r| r.xd_ratio).fold(0.0f64, f64::max);

    gate(
        "solution_operator",
        worst_order >= 1.8
            && ratio_max.is_finite()
            && ratio_min > 0.0
            && ratio_max < 1e3
            && xd_max.is_finite()
            && xd_max < 1e3,
        &format!(
            "FD order >= {worst_order:.3} on 20 sources, \
             norm-loss ratio in [{ratio_min:.3}, {ratio_max:.3}] at alpha in {{0, 1/4, 1/2}}, \
             discrete ratio <= {xd_max:.3}"
        ),
        "pulled-back residual order >= 1.8; uniform two-weight constant; \
         |x_d| tau^N bounded",
    );
}

// ---------------------------------------------------------------------------
// 11. First iterate of the leading source (carrier, envelope, decay)
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_first_iterate() {
    let start = std::time::Instant::now();
    let par = parametrix();
    let report =
        first_iterate(&par, &SOURCE, SPECTRAL.xi_d, &FirstIterateOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let env_ok = (report.envelope_slope + 1.25).abs() <= 0.125 && report.envelope_worst_r2 > 0.9;
    let carrier_ok = report.zero_spacing_worst <= 0.02 && report.carrier_mass_min > 0.9;
    let dtau_ok = (report.dtau_exponent + (N_POW + 1.0)).abs() <= 0.05 * (N_POW + 1.0);
    let origin_ok = report.near_origin_sup.is_finite() && report.near_origin_sup > 0.0;
    let xd_ok = report.xd_sup.is_finite();
    let time_ok = elapsed <= 900.0;

    gate(
        "first_iterate",
        env_ok && carrier_ok && dtau_ok && origin_ok && xd_ok && time_ok,
        &format!(
            "envelope slope {:.4} (R^2 {:.4}), zero-spacing dev {:.4}, carrier mass {:.3}, \
             transport exponent {:.4}, near-origin sup {:.3}, tau^(N+1) x_d sup {:.3}, {:.0} s",
            report.envelope_slope,
            report.envelope_worst_r2,
            report.zero_spacing_worst,
            report.carrier_mass_min,
            report.dtau_exponent,
            report.near_origin_sup,
            report.xd_sup,
            elapsed
        ),
        "envelope xi^{-5/4} within 10%; carrier spacing pi/(nu tau) within 2%; \
         transport exponent -(N+1) within 5%; near-origin and discrete sups bounded; \
         <= 15 min",
    );
}

// ---------------------------------------------------------------------------
// 12. Picard contraction with the transference hook disabled
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_picard_contraction() {
    let par = parametrix();
    let sol = &*BUILD3;
    let u_low = move |t: f64, r: f64| evaluate_u(sol, t, r.max(1e-300)).unwrap_or(0.0);
    let report = picard_iteration(
        &par,
        &SOURCE,
        SPECTRAL.xi_d,
        &u_low,
        &ZeroHook,
        &PicardOptions::default(),
    )
    .unwrap();
    let worst = report.ratios.iter().cloned().fold(0.0f64, f64::max);
    gate(
        "picard_contraction",
        report.ratios.len() >= 2 && worst <= 1.0 / 3.0,
        &format!("update ratios {:?}", report.ratios),
        "each successive weighted update shrinks by >= 3x over three steps",
    );
}
