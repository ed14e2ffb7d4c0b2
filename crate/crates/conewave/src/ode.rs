//! Solvers for the two linear operators driving the construction:
//! L0 = d^2/dR^2 + (2/R) d/dR + 5 W^4 in the inner variable, and the family
//! L_beta = (1-a^2) d^2/da^2 + (2(beta-1)a + 2/a) d/da - beta^2 + beta
//! on the cone interval 0 < a < 1.

use crate::series::{
    BetaExponent, ConeExpansion, ConeKind, InnerExpansion, LogLadder, SingularTerm,
    TruncationConfig,
};
use crate::util::{integrate, rk45, Cheb};
use crate::{Error, Result};
use num_rational::BigRational;

/// Closed forms for the L0 fundamental system phi_1, phi_2 and the conjugated
/// pair tilde phi_i = R phi_i with unit Wronskian.
pub struct L0FundamentalSystem;

impl L0FundamentalSystem {
    pub fn phi1(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        (1.0 - r * r / 3.0) / (s * s.sqrt())
    }

    pub fn dphi1(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        r * (r * r / 9.0 - 5.0 / 3.0) / (s * s * s.sqrt())
    }

    pub fn phi2(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        let p = 1.0 - 2.0 * r * r + r.powi(4) / 9.0;
        p / (r * s * s.sqrt())
    }

    pub fn dphi2(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        let p = 1.0 - 2.0 * r * r + r.powi(4) / 9.0;
        let dp = -4.0 * r + 4.0 * r.powi(3) / 9.0;
        dp / (r * s * s.sqrt()) - p / (r * r * s * s.sqrt()) - p / (s * s * s.sqrt())
    }

    pub fn d2phi1(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        (r * r / 3.0 - 5.0 / 3.0) / (s * s * s.sqrt())
            - (5.0 * r / 3.0) * (r.powi(3) / 9.0 - 5.0 * r / 3.0) / (s * s * s * s.sqrt())
    }

    pub fn d2phi2(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        let p = 1.0 - 2.0 * r * r + r.powi(4) / 9.0;
        let dp = -4.0 * r + 4.0 * r.powi(3) / 9.0;
        let ddp = -4.0 + 4.0 * r * r / 3.0;
        ddp / (r * s * s.sqrt())
            - 2.0 * dp / (r * r * s * s.sqrt())
            - 2.0 * dp / (s * s * s.sqrt())
            + 2.0 * p / (r.powi(3) * s * s.sqrt())
            + p / (r * s * s * s.sqrt())
            + (5.0 * r / 3.0) * p / (s * s * s * s.sqrt())
    }

    pub fn tphi1(r: f64) -> f64 {
        r * Self::phi1(r)
    }

    pub fn dtphi1(r: f64) -> f64 {
        Self::phi1(r) + r * Self::dphi1(r)
    }

    pub fn tphi2(r: f64) -> f64 {
        let s = 1.0 + r * r / 3.0;
        (1.0 - 2.0 * r * r + r.powi(4) / 9.0) / (s * s.sqrt())
    }

    pub fn dtphi2(r: f64) -> f64 {
        Self::phi2(r) + r * Self::dphi2(r)
    }

    /// phi_1 = -sqrt(3)/R (1-x)(1+x)^{-3/2} with x = 3/R^2, as a log-ladder.
    pub fn phi1_ladder(depth: usize) -> LogLadder {
        let mut out = LogLadder::zero();
        out.k = -1;
        let mut b_prev = 0.0;
        let mut b = 1.0; // binom(-3/2, n)
        for n in 0..=depth / 2 {
            let a_n = b - b_prev;
            out.set_coeff(2 * n, 0, -3.0f64.sqrt() * a_n * 3.0f64.powi(n as i32));
            b_prev = b;
            b *= -(1.5 + n as f64) / (n as f64 + 1.0);
        }
        out
    }

    /// phi_2 = (1-6x+x^2)(1+x)^{-3/2}/sqrt(3) with x = 3/R^2, as a log-ladder.
    pub fn phi2_ladder(depth: usize) -> LogLadder {
        let mut binoms = vec![0.0; depth / 2 + 3];
        let mut binom = 1.0;
        for (n, v) in binoms.iter_mut().enumerate() {
            *v = binom;
            binom *= -(1.5 + n as f64) / (n as f64 + 1.0);
        }
        let mut out = LogLadder::zero();
        out.k = 0;
        for n in 0..=depth / 2 {
            let a_n = binoms[n] - 6.0 * if n >= 1 { binoms[n - 1] } else { 0.0 }
                + if n >= 2 { binoms[n - 2] } else { 0.0 };
            out.set_coeff(2 * n, 0, a_n * 3.0f64.powi(n as i32) / 3.0f64.sqrt());
        }
        out
    }
}

/// Taylor coefficient of R^{2i} in 5 W^4 = 5 (1+R^2/3)^{-2}.
fn w4_taylor(i: usize) -> f64 {
    5.0 * (i as f64 + 1.0) * (-1.0f64 / 3.0).powi(i as i32)
}

/// 5 W^4 = 45 R^{-4} (1+3/R^2)^{-2} as a log-ladder.
fn w4_ladder(depth: usize) -> LogLadder {
    let mut out = LogLadder::zero();
    out.k = -4;
    for n in 0..=depth / 2 {
        out.set_coeff(2 * n, 0, 45.0 * (n as f64 + 1.0) * (-3.0f64).powi(n as i32));
    }
    out
}

/// Term-wise inverse of the flat radial Laplacian d^2/dR^2 + (2/R) d/dR on a
/// log-ladder. Each row at power p maps to power q = p+2; the resonant powers
/// q = 0 and q = -1 raise the log degree by one.
fn invert_flat(l: &LogLadder) -> LogLadder {
    let mut out = LogLadder::zero();
    out.k = l.k + 2;
    for (i, row) in l.c.iter().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let q = l.k - i as i32 + 2;
        let jn = row.len();
        if q != 0 && q != -1 {
            // q(q+1) x_j + (2q+1)(j+1) x_{j+1} + (j+2)(j+1) x_{j+2} = c_j
            let qf = q as f64;
            let mut x = vec![0.0; jn];
            for j in (0..jn).rev() {
                let hi1 = if j + 1 < jn { x[j + 1] } else { 0.0 };
                let hi2 = if j + 2 < jn { x[j + 2] } else { 0.0 };
                x[j] = (row[j]
                    - (2.0 * qf + 1.0) * (j as f64 + 1.0) * hi1
                    - (j as f64 + 2.0) * (j as f64 + 1.0) * hi2)
                    / (qf * (qf + 1.0));
            }
            for (j, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    out.set_coeff(i, j, out.coeff(i, j) + v);
                }
            }
        } else {
            // basis log^m (q = 0) or log^m / R (q = -1), m = 1..jn
            let mut y = vec![0.0; jn + 2];
            for j in (0..jn).rev() {
                let hi2 = y[j + 2];
                y[j + 1] = if q == 0 {
                    (row[j] - (j as f64 + 2.0) * (j as f64 + 1.0) * hi2) / (j as f64 + 1.0)
                } else {
                    ((j as f64 + 2.0) * (j as f64 + 1.0) * hi2 - row[j]) / (j as f64 + 1.0)
                };
            }
            for (m, &v) in y.iter().enumerate() {
                if v != 0.0 {
                    out.set_coeff(i, m, out.coeff(i, m) + v);
                }
            }
        }
    }
    out
}

/// Drop ladder rows below the given power.
fn trim_below(l: &mut LogLadder, min_power: i32) {
    let keep = (l.k - min_power + 1).max(0) as usize;
    l.truncate(keep);
}

/// Variation-of-parameters value and derivative of the zero-Cauchy-data
/// solution of L0 v = f at radius r, by adaptive quadrature.
fn l0_vop(f: &InnerExpansion, r: f64) -> (f64, f64) {
    type Fs = L0FundamentalSystem;
    let g1 = |x: f64| Fs::tphi1(x) * x * f.eval(x);
    let g2 = |x: f64| Fs::tphi2(x) * x * f.eval(x);
    // Two passes: a coarse estimate converts the target (~1e-14 relative)
    // into an absolute tolerance, so the refinement budget is never exhausted
    // on large integrands.
    let (c1, _) = integrate(&g1, 0.0, r, 1e-9);
    let (c2, _) = integrate(&g2, 0.0, r, 1e-9);
    let (i1, _) = integrate(&g1, 0.0, r, 1e-14 * (c1.abs() + 1e-3));
    let (i2, _) = integrate(&g2, 0.0, r, 1e-14 * (c2.abs() + 1e-3));
    let v = (Fs::tphi1(r) * i2 - Fs::tphi2(r) * i1) / r;
    let dv = -v / r + (Fs::dtphi1(r) * i2 - Fs::dtphi2(r) * i1) / r;
    (v, dv)
}

/// Solve L0 v = f with v(0) = v'(0) = 0 for f in S^0(R^{-1} log^l R).
/// The output carries all three representations: Taylor recursion at zero,
/// quadrature-backed interpolant mid-range, and a log-ladder at infinity
/// obtained by Neumann iteration on the flat Laplacian plus a homogeneous
/// correction restoring the zero-Cauchy-data branch.
pub fn solve_l0(f: &InnerExpansion, cfg: &TruncationConfig) -> Result<InnerExpansion> {
    if f.is_zero() {
        return Ok(InnerExpansion::zero_expansion(cfg));
    }
    if let Some((k, _)) = f.ladder.classify(cfg.class_tol) {
        if k > -1 {
            return Err(Error::InputClass(format!(
                "solve_l0 needs decay R^-1 at infinity, got R^{k}"
            )));
        }
    }
    if f.m < 0 || f.m % 2 != 0 {
        return Err(Error::InputClass(format!(
            "solve_l0 needs an even analytic input at R=0, got leading power {}",
            f.m
        )));
    }

    // Taylor recursion at zero: (n+2)(n+3) v_{n+2} = f_n - [5 W^4 v]_n over
    // even n; v starts two powers above f.
    let mv = f.m + 2;
    let nz = cfg.zero_terms;
    let mut v_half = vec![0.0; (mv / 2) as usize + nz]; // coeff of R^{2p} at index p
    for p in (mv / 2) as usize..v_half.len() {
        // equation at n = 2p - 2
        let n = 2 * p as i32 - 2;
        let fp = p - 1; // f coefficient of R^{2(p-1)}
        let fcoef = if 2 * fp as i32 >= f.m {
            f.zero.get(fp - (f.m / 2) as usize).copied().unwrap_or(0.0)
        } else {
            0.0
        };
        let mut conv = 0.0;
        for q in (mv / 2) as usize..p {
            conv += w4_taylor(fp - q) * v_half[q];
        }
        v_half[p] = (fcoef - conv) / ((n as f64 + 2.0) * (n as f64 + 3.0));
    }
    let zero: Vec<f64> = v_half[(mv / 2) as usize..].to_vec();

    // Ladder at infinity: Neumann iteration v = sum (-A^{-1} 5W^4)^n A^{-1} f
    // with A the flat radial Laplacian; each pass lowers the top power by 2.
    let min_power = 2 - cfg.inf_terms as i32;
    let w4 = w4_ladder(cfg.inf_terms + 4);
    let mut residual = f.ladder.clone();
    trim_below(&mut residual, min_power - 2);
    let mut ladder = LogLadder::zero();
    while !residual.is_zero() && residual.k >= min_power - 2 {
        let mut w = invert_flat(&residual);
        trim_below(&mut w, min_power);
        if w.is_zero() {
            break;
        }
        ladder = ladder.add(&w);
        residual = w.mul(&w4.scale(-1.0), cfg.inf_terms + 4);
        trim_below(&mut residual, min_power - 2);
    }

    // Homogeneous correction: match value and slope of the quadrature solution
    // at a radius where the ladder truncation is negligible.
    type Fs = L0FundamentalSystem;
    let rm = 50.0;
    let (vn, dvn) = l0_vop(f, rm);
    let vl = ladder.eval(rm);
    let dvl = ladder.apply_rdr().eval(rm) / rm;
    let (p1, p2) = (Fs::phi1(rm), Fs::phi2(rm));
    let (d1, d2) = (Fs::dphi1(rm), Fs::dphi2(rm));
    let det = p1 * d2 - p2 * d1; // = -1/rm^2, never zero
    let alpha = ((vn - vl) * d2 - (dvn - dvl) * p2) / det;
    let gamma = ((dvn - dvl) * p1 - (vn - vl) * d1) / det;
    ladder = ladder.add(&Fs::phi1_ladder(cfg.inf_terms).scale(alpha));
    ladder = ladder.add(&Fs::phi2_ladder(cfg.inf_terms).scale(gamma));
    trim_below(&mut ladder, min_power);

    Ok(InnerExpansion::from_parts(mv, zero, ladder, cfg, |r| l0_vop(f, r).0))
}

/// kappa(n) in L_beta a^n = n(n+1) a^{n-2} + kappa(n) a^n.
fn kappa(beta: f64, n: f64) -> f64 {
    2.0 * n * (beta - 1.0) - n * (n - 1.0) + beta - beta * beta
}

/// Interior power-series recursion for L_beta q = f with q(0) = q'(0) = 0,
/// given the Taylor coefficients of f at a = 0. Returns `n` coefficients of q.
pub fn lbeta_taylor(beta: f64, f: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut q = vec![0.0; n];
    for m in 0..n.saturating_sub(2) {
        let den = (m as f64 + 2.0) * (m as f64 + 3.0);
        if den.abs() < 1e-12 {
            return Err(Error::Resonance(format!(
                "vanishing leading denominator at interior order {m}"
            )));
        }
        let fm = f.get(m).copied().unwrap_or(0.0);
        q[m + 2] = (fm - kappa(beta, m as f64) * q[m]) / den;
    }
    Ok(q)
}

/// Exact-rational interior recursion, for rational beta and rhs.
pub fn lbeta_taylor_exact(beta: &BigRational, f: &[BigRational], n: usize) -> Vec<BigRational> {
    use num_traits::Zero;
    let zero = BigRational::zero();
    let big = |v: i64| BigRational::from_integer(v.into());
    let mut q = vec![zero.clone(); n];
    for m in 0..n.saturating_sub(2) {
        let mb = big(m as i64);
        let kap = big(2) * &mb * (beta - big(1)) - &mb * (&mb - big(1)) + beta
            - beta * beta;
        let den = (&mb + big(2)) * (&mb + big(3));
        let fm = f.get(m).cloned().unwrap_or_else(|| zero.clone());
        q[m + 2] = (fm - kap * &q[m]) / den;
    }
    q
}

/// Worst absolute defect between the float Taylor recursion and its exact
/// rational counterpart for the two boundary exponents of a rational
/// nu = nu_num / nu_den: beta_2 = (3 nu - 1)/2 with unit source and
/// beta_1 = (nu - 1)/2 with linear source.
pub fn taylor_rational_defect(nu_num: i64, nu_den: i64, n: usize) -> Result<f64> {
    use num_traits::{One, ToPrimitive, Zero};
    if nu_den <= 0 || nu_num <= 0 {
        return Err(Error::Config(format!(
            "rational nu must be positive, got {nu_num}/{nu_den}"
        )));
    }
    let nu = nu_num as f64 / nu_den as f64;
    let big = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let cases: [(BigRational, f64, Vec<BigRational>, Vec<f64>); 2] = [
        (
            big(3 * nu_num - nu_den, 2 * nu_den),
            (3.0 * nu - 1.0) / 2.0,
            vec![BigRational::one()],
            vec![1.0],
        ),
        (
            big(nu_num - nu_den, 2 * nu_den),
            (nu - 1.0) / 2.0,
            vec![BigRational::zero(), BigRational::one()],
            vec![0.0, 1.0],
        ),
    ];
    let mut worst = 0.0f64;
    for (beta_q, beta_f, f_q, f_f) in cases {
        let exact = lbeta_taylor_exact(&beta_q, &f_q, n);
        let float = lbeta_taylor(beta_f, &f_f, n)?;
        for (e, f) in exact.iter().zip(&float) {
            worst = worst.max((e.to_f64().unwrap_or(f64::NAN) - f).abs());
        }
    }
    Ok(worst)
}

/// Power-series solution of L_beta q = f for polynomial f (eq. coefficients
/// of a^i). The returned expansion is certified away from the cone boundary:
/// its boundary representation is intentionally left to the Green solver.
pub fn lbeta_power_solve(beta: f64, f: &[f64], cfg: &TruncationConfig) -> Result<ConeExpansion> {
    let deep = 800;
    let q = lbeta_taylor(beta, f, deep)?;
    let n0 = q.iter().position(|&c| c != 0.0).unwrap_or(0);
    let eval = |a: f64| {
        let mut p = 0.0;
        for &c in q.iter().rev() {
            p = p * a + c;
        }
        p
    };
    let zone = (cfg.cone_zone.0, 0.97);
    let lo = (zone.0 * 0.5).max(1e-3);
    Ok(ConeExpansion {
        kind: ConeKind::Q,
        n0: n0 as u32,
        zero: q[n0..n0 + cfg.cone_zero_terms.min(deep - n0)].to_vec(),
        mid: Cheb::fit(lo, zone.1, cfg.mid_cheb, eval),
        reg1: vec![],
        sing: vec![],
        zone,
    })
}

/// Fundamental system of L_beta around a = 1 in the variable u = 1-a:
/// psi1 analytic with psi1(1) = 1 (plus c psi2 log u in the resonant case
/// beta in {0, 1, 2, ...}), psi2 = u^{beta+1} psi20(u) with psi20(1) = 1.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LbetaBasis {
    pub beta: f64,
    /// Taylor coefficients of the analytic part of psi1 in u.
    pub psi1: Vec<f64>,
    /// Resonant log coefficient c (zero when beta is not in Z_0^+).
    pub log_c: f64,
    /// Taylor coefficients of psi20.
    pub psi20: Vec<f64>,
    /// Wronskian normalization: psi1' psi2 - psi1 psi2' = k (1-a^2)^beta a^{-2}.
    pub k: f64,
}

fn horner(c: &[f64], u: f64) -> f64 {
    let mut p = 0.0;
    for &v in c.iter().rev() {
        p = p * u + v;
    }
    p
}

fn horner_d(c: &[f64], u: f64) -> f64 {
    let mut q = 0.0;
    for (n, &v) in c.iter().enumerate().skip(1).rev() {
        q = q * u + n as f64 * v;
    }
    q
}

impl LbetaBasis {
    pub fn psi2_u(&self, u: f64) -> f64 {
        u.powf(self.beta + 1.0) * horner(&self.psi20, u)
    }

    fn dpsi2_du(&self, u: f64) -> f64 {
        (self.beta + 1.0) * u.powf(self.beta) * horner(&self.psi20, u)
            + u.powf(self.beta + 1.0) * horner_d(&self.psi20, u)
    }

    pub fn psi1_u(&self, u: f64) -> f64 {
        let mut v = horner(&self.psi1, u);
        if self.log_c != 0.0 {
            v += self.log_c * self.psi2_u(u) * u.ln();
        }
        v
    }

    fn dpsi1_du(&self, u: f64) -> f64 {
        let mut v = horner_d(&self.psi1, u);
        if self.log_c != 0.0 {
            v += self.log_c * (self.dpsi2_du(u) * u.ln() + self.psi2_u(u) / u);
        }
        v
    }

    pub fn psi1_a(&self, a: f64) -> f64 {
        self.psi1_u(1.0 - a)
    }

    pub fn psi2_a(&self, a: f64) -> f64 {
        self.psi2_u(1.0 - a)
    }

    pub fn dpsi1_a(&self, a: f64) -> f64 {
        -self.dpsi1_du(1.0 - a)
    }

    pub fn dpsi2_a(&self, a: f64) -> f64 {
        -self.dpsi2_du(1.0 - a)
    }

    /// Wronskian psi1' psi2 - psi1 psi2' (derivatives in a).
    pub fn wronskian(&self, a: f64) -> f64 {
        self.dpsi1_a(a) * self.psi2_a(a) - self.psi1_a(a) * self.dpsi2_a(a)
    }
}

/// Homogeneous Frobenius recursion for L_beta at u = 1-a: coefficient q_m of
/// u^{s+m} satisfies
///   2(s+m)(s+m-1-beta) q_m + A(s+m-1) q_{m-1} - 2 sum_{j<m} (s+j) q_j = 0
/// with A(p) = -p(p-1) + 2(beta-1)p + beta - beta^2.
fn frob_recurse(beta: f64, s: f64, n: usize) -> Vec<f64> {
    let a_of = |p: f64| -p * (p - 1.0) + 2.0 * (beta - 1.0) * p + beta - beta * beta;
    let mut q = vec![0.0; n];
    q[0] = 1.0;
    let mut tail = 2.0 * s * q[0];
    for m in 1..n {
        let sm = s + m as f64;
        let den = 2.0 * sm * (sm - 1.0 - beta);
        q[m] = (tail - a_of(sm - 1.0) * q[m - 1]) / den;
        tail += 2.0 * sm * q[m];
    }
    q
}

pub fn lbeta_frobenius_basis(beta: f64, n_terms: usize) -> Result<LbetaBasis> {
    if beta <= -0.5 {
        return Err(Error::Config(format!("beta = {beta} out of range (need beta > -1/2)")));
    }
    let psi20 = frob_recurse(beta, beta + 1.0, n_terms);
    let resonant = beta >= -1e-9 && (beta - beta.round()).abs() < 1e-9;
    let (psi1, log_c) = if !resonant {
        (frob_recurse(beta, 0.0, n_terms), 0.0)
    } else {
        // psi1 = sum d_l u^l + c psi2 log u; the s = 0 recursion jams at
        // m = beta + 1, where the log branch supplies the missing term.
        let bint = beta.round() as usize;
        let a_of = |p: f64| -p * (p - 1.0) + 2.0 * (beta - 1.0) * p + beta - beta * beta;
        // r_m: coefficients of B(psi2) = L(psi2 log u) as a series in u^{beta+m}
        let mut r = vec![0.0; n_terms];
        let mut run = 0.0;
        for (m, rm) in r.iter_mut().enumerate() {
            let qm = psi20.get(m).copied().unwrap_or(0.0);
            let qm1 = if m >= 1 { psi20[m - 1] } else { 0.0 };
            *rm = (2.0 * beta + 4.0 * m as f64 + 2.0) * qm - (2.0 * m as f64 + 1.0) * qm1
                - 2.0 * run;
            run += qm;
        }
        let mut d = vec![0.0; n_terms];
        d[0] = 1.0;
        let mut tail = 0.0; // 2 sum_j j d_j
        let mut c = 0.0;
        for m in 1..n_terms {
            let mf = m as f64;
            let lhs_rest = a_of(mf - 1.0) * d[m - 1] - tail;
            if m == bint + 1 {
                c = -lhs_rest / r[0];
                d[m] = 0.0;
            } else {
                let rhs = if m > bint + 1 { -c * r[m - 1 - bint] } else { 0.0 };
                d[m] = (rhs - lhs_rest) / (2.0 * mf * (mf - 1.0 - beta));
            }
            tail += 2.0 * mf * d[m];
        }
        (d, c)
    };
    let mut basis = LbetaBasis { beta, psi1, log_c, psi20, k: 1.0 };
    let am = 0.5;
    basis.k = basis.wronskian(am) * am * am / (1.0 - am * am).powf(beta);
    if basis.k.abs() < 1e-12 {
        return Err(Error::WronskianDegenerate(format!("L_beta basis at beta = {beta}")));
    }
    Ok(basis)
}

/// One term of a boundary series: coefficient tables q[m][l] of
/// u^{s+m} (log u)^l.
struct FrobComponent {
    s: f64,
    q: Vec<Vec<f64>>,
}

impl FrobComponent {
    fn eval(&self, u: f64) -> f64 {
        let lu = u.ln();
        let mut total = 0.0;
        for (m, row) in self.q.iter().enumerate() {
            let mut logpoly = 0.0;
            for &c in row.iter().rev() {
                logpoly = logpoly * lu + c;
            }
            total += logpoly * u.powf(self.s + m as f64);
        }
        total
    }

    fn deval_du(&self, u: f64) -> f64 {
        let lu = u.ln();
        let mut total = 0.0;
        for (m, row) in self.q.iter().enumerate() {
            let p = self.s + m as f64;
            for (l, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let lp = if l == 0 { 1.0 } else { lu.powi(l as i32) };
                total += c * p * u.powf(p - 1.0) * lp;
                if l > 0 {
                    total += c * l as f64 * u.powf(p - 1.0) * lu.powi(l as i32 - 1);
                }
            }
        }
        total
    }
}

/// Particular solution of L_beta q = sum f[m][l] u^{sigma+m} (log u)^l near
/// u = 0 (a = 1), as a Frobenius series with exponent s = sigma + 1. A
/// vanishing diagonal (s + m - 1 = beta) escalates the log degree by one.
fn frobenius_particular(
    beta: f64,
    sigma: f64,
    f: &[Vec<f64>],
    n_terms: usize,
) -> Result<FrobComponent> {
    let s = sigma + 1.0;
    let f_width = f.iter().map(|r| r.len()).max().unwrap_or(0);
    let width = f_width + 2;
    let mut q = vec![vec![0.0; width]; n_terms];
    let a_of = |p: f64| -p * (p - 1.0) + 2.0 * (beta - 1.0) * p + beta - beta * beta;
    for m in 0..n_terms {
        let sm = s + m as f64;
        if sm.abs() < 1e-9 {
            return Err(Error::Resonance(format!(
                "boundary exponent hit zero at order {m} (s = {s})"
            )));
        }
        let diag = 2.0 * sm * (sm - 1.0 - beta);
        let resonant = diag.abs() < 1e-9;
        for l in (0..width).rev() {
            // known contributions at (m, l) besides the unknown
            let mut rhs = f.get(m).and_then(|r| r.get(l)).copied().unwrap_or(0.0);
            // same-m higher logs (skip the one being solved for in the
            // resonant branch)
            let q_l1 = if l + 1 < width { q[m][l + 1] } else { 0.0 };
            let q_l2 = if l + 2 < width { q[m][l + 2] } else { 0.0 };
            if !resonant {
                rhs -= 2.0 * (l as f64 + 1.0) * (2.0 * sm - 1.0 - beta) * q_l1;
            }
            rhs -= 2.0 * (l as f64 + 2.0) * (l as f64 + 1.0) * q_l2;
            if m >= 1 {
                let pm1 = sm - 1.0;
                let r1 = &q[m - 1];
                rhs -= a_of(pm1) * r1[l];
                if l + 1 < width {
                    rhs -= (-(2.0 * pm1 - 1.0) * (l as f64 + 1.0)
                        + 2.0 * (beta - 1.0) * (l as f64 + 1.0))
                        * r1[l + 1];
                }
                if l + 2 < width {
                    rhs -= -(l as f64 + 2.0) * (l as f64 + 1.0) * r1[l + 2];
                }
            }
            for (j, rj) in q.iter().enumerate().take(m) {
                rhs += 2.0 * (s + j as f64) * rj[l];
                if l + 1 < width {
                    rhs += 2.0 * (l as f64 + 1.0) * rj[l + 1];
                }
            }
            if resonant {
                // coefficient of q_{m, l+1} is 2(l+1)(2(s+m)-1-beta) = 2(l+1)(s+m)
                if l + 1 < width {
                    q[m][l + 1] = rhs / (2.0 * (l as f64 + 1.0) * sm);
                } else if rhs.abs() > 1e-9 {
                    return Err(Error::Resonance(format!(
                        "log escalation exceeded table width at order {m}"
                    )));
                }
                if l == 0 {
                    q[m][0] = 0.0; // free; absorbed by the homogeneous match
                }
            } else {
                q[m][l] = rhs / diag;
            }
        }
    }
    Ok(FrobComponent { s, q })
}

/// Solve L_beta q = f with q(0) = q'(0) = 0 by the Green kernel built from
/// the boundary fundamental system, returning all three representations:
/// interior Taylor recursion, quadrature-backed interpolant mid-range, and
/// analytic-plus-singular series at the cone boundary obtained from Frobenius
/// particular solutions matched against the quadrature solution.
pub fn lbeta_green_solve(
    beta: f64,
    tag: &BetaExponent,
    f: &ConeExpansion,
    cfg: &TruncationConfig,
) -> Result<ConeExpansion> {
    if f.is_zero() {
        return Ok(ConeExpansion::zero_expansion(cfg));
    }
    let basis = lbeta_frobenius_basis(beta, 4 * cfg.cone_reg_terms)?;

    // interior Taylor recursion
    let mut f0 = vec![0.0; f.n0 as usize + f.zero.len()];
    for (i, &c) in f.zero.iter().enumerate() {
        f0[f.n0 as usize + i] = c;
    }
    let q0 = lbeta_taylor(beta, &f0, cfg.cone_zero_terms + 2)?;
    let n0 = q0.iter().position(|&c| c.abs() > 0.0).unwrap_or(0);

    // The u-series of the basis has radius 1 (the basis is singular like 1/a
    // at a = 0), so psi_i cannot be evaluated from it near a = 0. The products
    // a psi_i(a) are analytic on [0, 1); continue them below the switch point
    // by numerical integration and interpolate.
    let a_switch = 0.55;
    let continued = |which: usize| {
        Cheb::fit(0.0, a_switch + 0.05, 72, |x| {
            let (v, d) = if which == 0 {
                (basis.psi1_a(0.6), basis.dpsi1_a(0.6))
            } else {
                (basis.psi2_a(0.6), basis.dpsi2_a(0.6))
            };
            if x < 1e-6 {
                return 0.0;
            }
            x * numeric_integrate(OdeOp::LBeta(beta), 0.6, [v, d], &[x])[0][0]
        })
    };
    let apsi1_lo = continued(0);
    let apsi2_lo = continued(1);
    let psi1_any = |a: f64| if a >= a_switch { basis.psi1_a(a) } else { apsi1_lo.eval(a) / a };
    let psi2_any = |a: f64| if a >= a_switch { basis.psi2_a(a) } else { apsi2_lo.eval(a) / a };

    // quadrature evaluator from the Green kernel
    let kinv = 1.0 / basis.k;
    let i1_f = |x: f64| psi1_any(x) * (1.0 - x * x).powf(-beta - 1.0) * x * x * f.eval(x);
    let i2_f = |x: f64| psi2_any(x) * (1.0 - x * x).powf(-beta - 1.0) * x * x * f.eval(x);
    let q_num = |a: f64| -> (f64, f64) {
        let (i1, _) = integrate(&i1_f, 0.0, a, 1e-12);
        let (i2, _) = integrate(&i2_f, 0.0, a, 1e-12);
        let v = kinv * (psi1_any(a) * i2 - psi2_any(a) * i1);
        let dv = kinv * (basis.dpsi1_a(a) * i2 - basis.dpsi2_a(a) * i1);
        (v, dv)
    };

    // boundary representation: particular series per rhs component
    let n_frob = cfg.cone_reg_terms;
    let mut parts: Vec<FrobComponent> = vec![];
    if f.reg1.iter().any(|&c| c != 0.0) {
        let rows: Vec<Vec<f64>> = f.reg1.iter().map(|&c| vec![c]).collect();
        parts.push(frobenius_particular(beta, 0.0, &rows, n_frob)?);
    }
    for t in &f.sing {
        let rows: Vec<Vec<f64>> = t
            .coeffs
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; t.logj as usize + 1];
                row[t.logj as usize] = c;
                row
            })
            .collect();
        parts.push(frobenius_particular(beta, t.gamma, &rows, n_frob)?);
    }

    // homogeneous match at a point inside the boundary zone
    let am = 0.9;
    let um = 1.0 - am;
    let (vn, dvn) = q_num(am);
    let vp: f64 = parts.iter().map(|p| p.eval(um)).sum();
    let dvp: f64 = parts.iter().map(|p| -p.deval_du(um)).sum();
    let (p1, p2) = (basis.psi1_a(am), basis.psi2_a(am));
    let (d1, d2) = (basis.dpsi1_a(am), basis.dpsi2_a(am));
    let det = p1 * d2 - p2 * d1;
    if det.abs() < 1e-14 {
        return Err(Error::WronskianDegenerate(format!(
            "boundary match at beta = {beta}"
        )));
    }
    let c1 = ((vn - vp) * d2 - (dvn - dvp) * p2) / det;
    let c2 = ((dvn - dvp) * p1 - (vn - vp) * d1) / det;

    // assemble reg1 + singular terms
    let reg_len = cfg.cone_reg_terms;
    let mut reg1 = vec![0.0; reg_len];
    let mut sing: Vec<SingularTerm> = vec![];
    let mut push = |gamma: f64, logj: u32, coeffs: Vec<f64>, reg1: &mut Vec<f64>| {
        if coeffs.iter().all(|&c| c == 0.0) {
            return;
        }
        let g_round = gamma.round();
        if logj == 0 && (gamma - g_round).abs() < 1e-9 && g_round >= 0.0 {
            let off = g_round as usize;
            for (n, &c) in coeffs.iter().enumerate() {
                if off + n < reg1.len() {
                    reg1[off + n] += c;
                }
            }
        } else {
            let term = SingularTerm { beta: tag.clone(), gamma, logj, coeffs };
            let merged = sing.iter_mut().find(|t| {
                t.logj == term.logj && (t.gamma - term.gamma).abs() < 1e-11
            });
            match merged {
                Some(t) => {
                    if t.coeffs.len() < term.coeffs.len() {
                        t.coeffs.resize(term.coeffs.len(), 0.0);
                    }
                    for (dst, src) in t.coeffs.iter_mut().zip(&term.coeffs) {
                        *dst += src;
                    }
                }
                None => sing.push(term),
            }
        }
    };
    for p in &parts {
        let width = p.q.iter().map(|r| r.len()).max().unwrap_or(0);
        for l in 0..width {
            let coeffs: Vec<f64> = p.q.iter().map(|r| r.get(l).copied().unwrap_or(0.0)).collect();
            push(p.s, l as u32, coeffs, &mut reg1);
        }
    }
    // c1 psi1 (+ resonant log piece) and c2 psi2
    push(0.0, 0, basis.psi1.iter().map(|&v| c1 * v).collect(), &mut reg1);
    if basis.log_c != 0.0 {
        push(
            beta + 1.0,
            1,
            basis.psi20.iter().map(|&v| c1 * basis.log_c * v).collect(),
            &mut reg1,
        );
    }
    push(beta + 1.0, 0, basis.psi20.iter().map(|&v| c2 * v).collect(), &mut reg1);

    let zone = cfg.cone_zone;
    let mid = ConeExpansion::fit_mid(zone, cfg.mid_cheb, |a| q_num(a).0);
    Ok(ConeExpansion {
        kind: ConeKind::Q,
        n0: n0 as u32,
        zero: q0[n0..].to_vec(),
        mid,
        reg1,
        sing,
        zone,
    })
}

/// Operators accepted by the numerical cross-validation oracle.
#[derive(Debug, Clone, Copy)]
pub enum OdeOp {
    /// L0 in R.
    L0,
    /// L_beta in a.
    LBeta(f64),
    /// The half-line Schroedinger operator shifted by the spectral parameter:
    /// (-d^2/dR^2 - 5 W^4 - xi) y = 0.
    SchroedingerShift(f64),
}

/// Adaptive high-order integration of the homogeneous equation op(y) = 0 from
/// Cauchy data (y, y') at x0, sampled at the requested points.
pub fn numeric_integrate(op: OdeOp, x0: f64, y0: [f64; 2], xs: &[f64]) -> Vec<[f64; 2]> {
    let f = move |x: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = match op {
            OdeOp::L0 => {
                let w4 = (1.0 + x * x / 3.0).powi(-2);
                -(2.0 / x) * y[1] - 5.0 * w4 * y[0]
            }
            OdeOp::LBeta(beta) => {
                let denom = 1.0 - x * x;
                -((2.0 * (beta - 1.0) * x + 2.0 / x) * y[1] + (beta - beta * beta) * y[0]) / denom
            }
            OdeOp::SchroedingerShift(xi) => {
                let w4 = (1.0 + x * x / 3.0).powi(-2);
                -(5.0 * w4 + xi) * y[0]
            }
        };
    };
    rk45(&f, x0, &y0, xs, 1e-12)
        .into_iter()
        .map(|v| [v[0], v[1]])
        .collect()
}
