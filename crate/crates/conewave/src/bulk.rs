//! Bulk construction of the approximate blow-up profiles u_k inside the
//! light cone by an alternating odd/even correction scheme.
//!
//! Everything is carried in the "stripped" normalization: corrections are
//! stored as v_hat = lambda^{-1/2} v and errors as e_hat = t^2 lambda^{-1/2} e,
//! both finite sums of separated terms f(R) g(a) b^s ([`MixedExpansion`]).
//! In this normalization the full wave-plus-nonlinearity calculus closes term
//! by term:
//!
//!   t^2 lambda^{-1/2} (d_tt - d_rr - 2/r d_r) lambda^{1/2} [f(R) g(a) b^s]
//!     = -b^{s-2} (Lap_R f) g
//!       + b^s [ ((A^2 - A) f) g - 2 (A f)(a g') + 2 f (a g')
//!               + f ((a^2-1) g'') - 2 (RdR f)(a^{-1} g') - 2 f (a^{-1} g') ]
//!
//! with A = nu*s - (1+nu) D, D = 1/2 + R d/dR, Lap_R = d_RR + (2/R) d_R.
//! (Verified against high-precision finite differences of the unstripped
//! operator; see the wave_operator_matches_finite_differences test.)
//!
//! Odd steps solve mu^2 L0 v_hat = e_hat^0 radially with the cone variable
//! frozen; even steps extract the growing ladder rows R^{0,1} (log R)^j into
//! cone ODEs L_beta X = rhs + couplings and regularize the monomials R and
//! log R into rho = R^2 (1+R^2)^{-1/2} and Lam = (1/2) log(1+R^2) so that all
//! representations stay even-analytic at R = 0.

use crate::ode::{lbeta_green_solve, solve_l0};
use crate::scaling::ScalingParams;
use crate::series::{
    BetaExponent, ConeExpansion, ConeKind, InnerExpansion, LogLadder, MixedExpansion, MixedTerm,
    TruncationConfig,
};
use crate::{Error, Result};

/// Reference b used when pruning negligible terms (corresponds to t ~ 0.07
/// at nu = 0.3, inside the verification window).
const B_REF: f64 = 0.45;

/// Gate for the even-step cancellation residuals (relative to the magnitude
/// of the cancelling contributions). These would vanish identically for exact
/// cone solves; the gate certifies the dropped amount is solver noise.
const NOISE_GATE: f64 = 1e-4;

/// Gate for the odd-step radial solve defects (relative to the source).
const DEFECT_GATE: f64 = 1e-4;

/// Maximum log R order for which regularized atoms are precomputed.
const JMAX: usize = 6;

/// Cone cap: the construction lives on 0 < r <= t < T_CAP.
pub const T_CAP: f64 = 0.5;

// ---------------------------------------------------------------------------
// radial atoms
// ---------------------------------------------------------------------------

/// W(R) = (1 + R^2/3)^{-1/2}, the static profile, as an InnerExpansion.
pub fn ground_state(cfg: &TruncationConfig) -> InnerExpansion {
    let mut zero = vec![0.0; cfg.zero_terms];
    let mut binom = 1.0;
    for (i, z) in zero.iter_mut().enumerate() {
        *z = binom / 3.0f64.powi(i as i32);
        binom *= -(0.5 + i as f64) / (i as f64 + 1.0);
    }
    // W = sqrt(3)/R (1 + 3/R^2)^{-1/2} at infinity.
    let mut ladder = LogLadder::zero();
    ladder.k = -1;
    let mut b = 1.0;
    for i in 0..cfg.inf_terms / 2 + 1 {
        ladder.set_coeff(2 * i, 0, 3.0f64.sqrt() * b * 3.0f64.powi(i as i32));
        b *= -(0.5 + i as f64) / (i as f64 + 1.0);
    }
    InnerExpansion::from_parts(0, zero, ladder, cfg, |r| (1.0 + r * r / 3.0).powf(-0.5))
}

/// rho(R) = R^2 (3+R^2)^{-1/2}: the even-analytic regularization of R.
/// The scale 3 matches W's, so the Taylor radius sqrt(3) clears the zone
/// switch at R = 0.8 with room to spare.
fn rho_atom(cfg: &TruncationConfig) -> InnerExpansion {
    let mut zero = vec![0.0; cfg.zero_terms];
    let mut binom = 1.0;
    for (i, z) in zero.iter_mut().enumerate() {
        *z = binom / (3.0f64.sqrt() * 3.0f64.powi(i as i32));
        binom *= -(0.5 + i as f64) / (i as f64 + 1.0);
    }
    // rho = R (1 + 3 R^{-2})^{-1/2} = sum binom(-1/2, i) 3^i R^{1-2i};
    // the top row is exactly R, so extraction against rho is exact.
    let mut ladder = LogLadder::zero();
    ladder.k = 1;
    let mut b = 1.0;
    for i in 0..cfg.inf_terms / 2 + 1 {
        ladder.set_coeff(2 * i, 0, b * 3.0f64.powi(i as i32));
        b *= -(0.5 + i as f64) / (i as f64 + 1.0);
    }
    InnerExpansion::from_parts(2, zero, ladder, cfg, |r| r * r / (3.0 + r * r).sqrt())
}

/// Lam(R) = (1/2) log(3+R^2): the even-analytic regularization of log R,
/// again with Taylor radius sqrt(3).
fn lam_atom(cfg: &TruncationConfig) -> InnerExpansion {
    let mut zero = vec![0.0; cfg.zero_terms];
    zero[0] = 0.5 * 3.0f64.ln();
    for (i, z) in zero.iter_mut().enumerate().skip(1) {
        *z = (if i % 2 == 1 { 1.0 } else { -1.0 }) / (2.0 * i as f64 * 3.0f64.powi(i as i32));
    }
    // Lam = log R + (1/2) log(1 + 3 R^{-2}); the top row is exactly log R.
    let mut ladder = LogLadder::zero();
    ladder.k = 0;
    ladder.set_coeff(0, 1, 1.0);
    for i in 1..=cfg.inf_terms / 2 {
        ladder.set_coeff(
            2 * i,
            0,
            (if i % 2 == 1 { 1.0 } else { -1.0 }) * 3.0f64.powi(i as i32) / (2.0 * i as f64),
        );
    }
    InnerExpansion::from_parts(0, zero, ladder, cfg, |r| 0.5 * (3.0 + r * r).ln())
}

/// Precomputed radial building blocks shared by every step of a build.
pub struct RadialAtoms {
    pub w: InnerExpansion,
    pub w2: InnerExpansion,
    pub w3: InnerExpansion,
    pub w4: InnerExpansion,
    pub rho: InnerExpansion,
    /// lam[j] = Lam^j (lam[0] = 1).
    pub lam: Vec<InnerExpansion>,
    /// rho_lam[j] = rho * Lam^j.
    pub rho_lam: Vec<InnerExpansion>,
}

impl RadialAtoms {
    pub fn new(cfg: &TruncationConfig) -> Self {
        let w = ground_state(cfg);
        let w2 = w.mul(&w, cfg);
        let w3 = w2.mul(&w, cfg);
        let w4 = w2.mul(&w2, cfg);
        let rho = rho_atom(cfg);
        let lam1 = lam_atom(cfg);
        let mut lam = vec![InnerExpansion::one(cfg)];
        for j in 1..=JMAX {
            lam.push(lam[j - 1].mul(&lam1, cfg));
        }
        let rho_lam = lam.iter().map(|l| rho.mul(l, cfg)).collect();
        RadialAtoms { w, w2, w3, w4, rho, lam, rho_lam }
    }
}

// ---------------------------------------------------------------------------
// cone helpers
// ---------------------------------------------------------------------------

fn a_poly(cfg: &TruncationConfig) -> ConeExpansion {
    ConeExpansion::poly(&[0.0, 1.0], ConeKind::QPrime, cfg)
}

fn a2_minus_one(cfg: &TruncationConfig) -> ConeExpansion {
    ConeExpansion::poly(&[-1.0, 0.0, 1.0], ConeKind::QPrime, cfg)
}

fn one_minus_a2(cfg: &TruncationConfig) -> ConeExpansion {
    ConeExpansion::poly(&[1.0, 0.0, -1.0], ConeKind::QPrime, cfg)
}

/// Divide a cone expansion by a. Requires vanishing at a = 0; the boundary
/// series are multiplied by 1/a = 1/(1-u) (geometric), the kind and the
/// singular exponents are unchanged.
fn cone_div_a(g: &ConeExpansion, cfg: &TruncationConfig) -> Result<ConeExpansion> {
    if g.is_zero() {
        return Ok(ConeExpansion::zero_expansion(cfg));
    }
    if g.n0 == 0 && g.zero.first().map_or(false, |&c| c != 0.0) {
        return Err(Error::InputClass(
            "division by a of a cone factor not vanishing at a = 0".into(),
        ));
    }
    let mut out = g.clone();
    if out.n0 == 0 {
        if !out.zero.is_empty() {
            out.zero.remove(0);
        }
    } else {
        out.n0 -= 1;
    }
    let reg_len = cfg.cone_reg_terms;
    let geom = |series: &[f64]| -> Vec<f64> {
        let mut o = vec![0.0; reg_len];
        let mut run = 0.0;
        for (n, v) in o.iter_mut().enumerate() {
            run += series.get(n).copied().unwrap_or(0.0);
            *v = run;
        }
        o
    };
    out.reg1 = geom(&out.reg1);
    for t in &mut out.sing {
        t.coeffs = geom(&t.coeffs);
    }
    let src = g.clone();
    out.mid = ConeExpansion::fit_mid(g.zone, cfg.mid_cheb, |a| src.eval(a) / a);
    Ok(out)
}

fn cone_div_a2(g: &ConeExpansion, cfg: &TruncationConfig) -> Result<ConeExpansion> {
    cone_div_a(&cone_div_a(g, cfg)?, cfg)
}

fn sup_radial(f: &InnerExpansion) -> f64 {
    let mut m = 0.0f64;
    for i in 0..48 {
        let r = 0.05 * (80.0f64 / 0.05).powf(i as f64 / 47.0);
        m = m.max(f.eval(r).abs());
    }
    m
}

fn sup_cone(g: &ConeExpansion) -> f64 {
    let mut m = 0.0f64;
    for i in 0..49 {
        let a = 0.02 + 0.96 * i as f64 / 48.0;
        m = m.max(g.eval(a).abs());
    }
    m
}

/// The leading boundary exponent of a singular term after discarding leading
/// zero coefficients (integer offsets are stored as leading zeros).
fn effective_gamma(t: &crate::series::SingularTerm) -> Option<f64> {
    let maxc = t.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if maxc == 0.0 {
        return None;
    }
    t.coeffs
        .iter()
        .position(|&c| c.abs() > maxc * 1e-9)
        .map(|n| t.gamma + n as f64)
}

/// Kind-Q compatibility: every boundary singularity has exponent at least
/// beta + 1 (one full power of 1-a above the Q' floor). Terms with no
/// singular part at all are strictly smoother and accepted.
fn q_compatible(g: &ConeExpansion, nu: f64) -> bool {
    g.sing.iter().all(|t| match effective_gamma(t) {
        None => true,
        Some(ga) => ga >= t.beta.value(nu) + 1.0 - 1e-9,
    })
}

fn qprime_compatible(g: &ConeExpansion, nu: f64) -> bool {
    g.sing.iter().all(|t| match effective_gamma(t) {
        None => true,
        Some(ga) => ga >= t.beta.value(nu) - 1e-9,
    })
}

// ---------------------------------------------------------------------------
// the stripped wave operator on separated terms
// ---------------------------------------------------------------------------

/// How the -b^{s-2} (Lap_R f) g piece of the wave operator is emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LapMode {
    /// Emit it as stored: level s-2 with radial Lap_R f.
    Raw,
    /// Emit it at level s as -(R^2 Lap_R f)(a^{-2} g): exact since a = R b.
    /// Requires the cone factor to vanish to second order at a = 0. Used by
    /// the even step so that the cancellation bookkeeping sees all rows at
    /// the same levels.
    Absorb,
    /// Omit it. Used by the odd step, where -b^{s-2}(Lap_R f) g cancels
    /// structurally against the solved source and the 5 W^4 part of the
    /// nonlinearity (the defect of the radial solve is checked and dropped).
    Skip,
}

/// A f = nu*s*f - (1+nu) D f, the action of lambda^{-1/2} t d_t lambda^{1/2}
/// on the radial factor of a term at b-power s.
fn apply_a(f: &InnerExpansion, nu: f64, s: f64, cfg: &TruncationConfig) -> InnerExpansion {
    f.apply_d().scale(-(1.0 + nu)).add(&f.scale(nu * s), cfg)
}

/// All pieces of the stripped wave operator applied to one separated term.
pub fn wave_pieces(
    term: &MixedTerm,
    nu: f64,
    lap: LapMode,
    cfg: &TruncationConfig,
) -> Result<MixedExpansion> {
    let f = &term.radial;
    let g = &term.cone;
    let s = term.b_power;
    let sf = s as f64;
    let af = apply_a(f, nu, sf, cfg);
    let aaf = apply_a(&af, nu, sf, cfg);
    let a2maf = aaf.add(&af.scale(-1.0), cfg);
    let rdrf = f.apply_rdr();

    let mut terms: Vec<MixedTerm> = vec![];
    match lap {
        LapMode::Skip => {}
        LapMode::Raw | LapMode::Absorb => {
            // R^2 Lap_R f = (RdR)^2 f + RdR f.
            let r2lap = rdrf.apply_rdr().add(&rdrf, cfg);
            if lap == LapMode::Raw {
                terms.push(MixedTerm {
                    radial: r2lap.shift_power(-2, cfg).scale(-1.0),
                    cone: g.clone(),
                    b_power: s - 2,
                });
            } else {
                terms.push(MixedTerm {
                    radial: r2lap.scale(-1.0),
                    cone: cone_div_a2(g, cfg)?,
                    b_power: s,
                });
            }
        }
    }

    let dg = g.deriv_a(cfg)?;
    let adg = dg.mul(&a_poly(cfg), cfg);
    let ainv_dg = g.apply_ainv_da(cfg)?;
    let d2g = dg.deriv_a(cfg)?;
    let a2m1_d2g = d2g.mul(&a2_minus_one(cfg), cfg);

    terms.push(MixedTerm { radial: a2maf, cone: g.clone(), b_power: s });
    terms.push(MixedTerm { radial: af.scale(-2.0), cone: adg.clone(), b_power: s });
    terms.push(MixedTerm { radial: f.scale(2.0), cone: adg, b_power: s });
    terms.push(MixedTerm { radial: f.clone(), cone: a2m1_d2g, b_power: s });
    terms.push(MixedTerm { radial: rdrf.scale(-2.0), cone: ainv_dg.clone(), b_power: s });
    terms.push(MixedTerm { radial: f.scale(-2.0), cone: ainv_dg, b_power: s });
    Ok(MixedExpansion {
        terms: terms.into_iter().filter(|t| !t.radial.is_zero() && !t.cone.is_zero()).collect(),
    })
}

// ---------------------------------------------------------------------------
// pruning with a configurable b cap
// ---------------------------------------------------------------------------

fn term_magnitude(t: &MixedTerm, b_ref: f64) -> f64 {
    let rmax = [0.0, 0.5, 2.0, 8.0, 50.0]
        .iter()
        .fold(0.0f64, |m, &r| m.max(t.radial.eval(r).abs()));
    let cmax = [0.05, 0.3, 0.6, 0.95]
        .iter()
        .fold(0.0f64, |m, &a| m.max(t.cone.eval(a).abs()));
    rmax * cmax * b_ref.powi(t.b_power)
}

/// Magnitude-based pruning with the b-degree cap relaxed by `extra` (used on
/// intermediates that still get multiplied by b^{-2}).
fn prune_b(x: &MixedExpansion, cfg: &TruncationConfig, extra: i32) -> MixedExpansion {
    let mags: Vec<f64> = x.terms.iter().map(|t| term_magnitude(t, B_REF)).collect();
    let peak = mags.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak == 0.0 {
        return MixedExpansion::zero();
    }
    let keep = peak * 1e-13;
    let cap = cfg.b_degree as i32 + extra;
    MixedExpansion {
        terms: x
            .terms
            .iter()
            .zip(&mags)
            .filter(|(t, &m)| m > keep && t.b_power <= cap && !t.radial.is_zero() && !t.cone.is_zero())
            .map(|(t, _)| t.clone())
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// step bookkeeping types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepParity {
    Odd,
    Even,
}

/// One aggregated growing row of an error expansion: the cone-ODE right-hand
/// side at inner level m (the coefficient of b^m L^j after converting row
/// R^p at b-power s to level m = s - p with an explicit a^p factor).
#[derive(Debug, Clone)]
pub struct ExtractionBucket {
    pub m: i32,
    pub j: usize,
    /// True when the rhs came from R^1 rows (odd cone parity, carries the
    /// explicit factor a); false for R^0 rows (even parity).
    pub odd: bool,
    pub rhs: ConeExpansion,
    /// Sum of sup norms of the individual contributions (reference scale for
    /// cancellation checks).
    pub scale: f64,
}

/// Result of extracting the growing rows at the given b-levels:
/// `principal` re-sums the extracted rows with regularized atoms (so that
/// principal + remainder == input exactly), `buckets` aggregates the rows
/// into per-(level, log-order, parity) cone functions.
pub struct Extraction {
    pub buckets: Vec<ExtractionBucket>,
    pub principal: MixedExpansion,
    pub remainder: MixedExpansion,
}

fn extract_rows(
    e: &MixedExpansion,
    levels: &[i32],
    atoms: &RadialAtoms,
    cfg: &TruncationConfig,
) -> Result<Extraction> {
    let mut buckets: Vec<ExtractionBucket> = vec![];
    let mut principal = MixedExpansion::zero();
    let mut remainder = MixedExpansion::zero();
    let ap = a_poly(cfg);

    for t in &e.terms {
        if t.radial.is_zero() || t.cone.is_zero() {
            continue;
        }
        let lad = &t.radial.ladder;
        let maxc = lad.c.iter().flat_map(|r| r.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if !levels.contains(&t.b_power) || maxc == 0.0 {
            remainder.terms.push(t.clone());
            continue;
        }
        let thresh = maxc * cfg.class_tol;
        // no admissible object grows faster than R^1
        for (i, row) in lad.c.iter().enumerate() {
            let p = lad.k - i as i32;
            if p >= 2 && row.iter().any(|c| c.abs() > thresh) {
                return Err(Error::InputClass(format!(
                    "term at b^{} grows like R^{p}: not extractable",
                    t.b_power
                )));
            }
        }
        let s = t.b_power;
        let mut removed = InnerExpansion::zero_expansion(cfg);
        let mut any = false;
        for p in [1i32, 0i32] {
            let i = lad.k - p;
            if i < 0 {
                continue;
            }
            let Some(row) = lad.c.get(i as usize) else { continue };
            for (j, &c) in row.iter().enumerate() {
                if c.abs() <= thresh {
                    continue;
                }
                if j >= atoms.lam.len() {
                    return Err(Error::Config(format!(
                        "log order {j} exceeds precomputed atom depth"
                    )));
                }
                any = true;
                let atom = if p == 1 { &atoms.rho_lam[j] } else { &atoms.lam[j] };
                removed = removed.add(&atom.scale(c), cfg);
                principal.terms.push(MixedTerm {
                    radial: atom.scale(c),
                    cone: t.cone.clone(),
                    b_power: s,
                });
                // rhs contribution at level m = s - p, with the explicit a^p
                let contrib = if p == 1 {
                    t.cone.scale(c).mul(&ap, cfg)
                } else {
                    t.cone.scale(c)
                };
                let scale = sup_cone(&contrib);
                let m = s - p;
                let odd = p == 1;
                match buckets.iter_mut().find(|b| b.m == m && b.j == j && b.odd == odd) {
                    Some(b) => {
                        b.rhs = b.rhs.add(&contrib, cfg);
                        b.scale += scale;
                    }
                    None => buckets.push(ExtractionBucket { m, j, odd, rhs: contrib, scale }),
                }
            }
        }
        if any {
            remainder.terms.push(MixedTerm {
                radial: t.radial.add(&removed.scale(-1.0), cfg),
                cone: t.cone.clone(),
                b_power: s,
            });
        } else {
            remainder.terms.push(t.clone());
        }
    }
    Ok(Extraction { buckets, principal, remainder })
}

/// Returns true when the term's radial factor decays at R = infinity (top
/// ladder power <= -1, or no significant ladder at all).
fn is_decaying(t: &MixedTerm, cfg: &TruncationConfig) -> bool {
    match t.radial.ladder.classify(cfg.class_tol) {
        Some((k, _)) => k <= -1,
        None => true,
    }
}

/// Split an error expansion: odd steps separate radially decaying terms (the
/// solvable principal part) from the growing remainder; even steps separate
/// the growing rows at levels {2k, 2k+1} (re-summed with regularized atoms)
/// from everything else. The two pieces always re-sum to the input.
pub fn split_error(
    e: &MixedExpansion,
    parity: StepParity,
    pair_k: u32,
    atoms: &RadialAtoms,
    cfg: &TruncationConfig,
) -> Result<(MixedExpansion, MixedExpansion)> {
    match parity {
        StepParity::Odd => {
            let mut e0 = MixedExpansion::zero();
            let mut e1 = MixedExpansion::zero();
            for t in &e.terms {
                if t.radial.is_zero() || t.cone.is_zero() {
                    continue;
                }
                if is_decaying(t, cfg) {
                    e0.terms.push(t.clone());
                } else {
                    e1.terms.push(t.clone());
                }
            }
            Ok((e0, e1))
        }
        StepParity::Even => {
            let levels = [2 * pair_k as i32, 2 * pair_k as i32 + 1];
            let ex = extract_rows(e, &levels, atoms, cfg)?;
            Ok((ex.principal, ex.remainder))
        }
    }
}

// ---------------------------------------------------------------------------
// e0
// ---------------------------------------------------------------------------

/// The error of u_0 = lambda^{1/2} W(R), stripped:
/// t^2 lambda^{-1/2} e_0 = (1+nu)^2 D^2 W + (1+nu) D W.
pub fn compute_e0(params: &ScalingParams, cfg: &TruncationConfig) -> MixedExpansion {
    let nu = params.nu;
    let w = ground_state(cfg);
    let dw = w.apply_d();
    let d2w = dw.apply_d();
    let radial = d2w.scale((1.0 + nu) * (1.0 + nu)).add(&dw.scale(1.0 + nu), cfg);
    MixedExpansion::from_radial(radial, cfg)
}

// ---------------------------------------------------------------------------
// odd step
// ---------------------------------------------------------------------------

/// A residual dropped after being checked against its gate (solver defects
/// and cancellation noise), recorded in the build manifest.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DroppedResidual {
    pub label: String,
    pub relative: f64,
}

/// Solve mu^2 L0 v_hat = e_hat^0 term by term with the cone factor frozen.
/// Also returns the relative L0-defects of the radial solves (these are the
/// amounts silently dropped by the structural cancellation in the error
/// update).
pub fn odd_correction(
    e0: &MixedExpansion,
    atoms: &RadialAtoms,
    cfg: &TruncationConfig,
) -> Result<(MixedExpansion, Vec<DroppedResidual>)> {
    let mut v = MixedExpansion::zero();
    let mut dropped = vec![];
    for (idx, t) in e0.terms.iter().enumerate() {
        if t.radial.is_zero() || t.cone.is_zero() {
            continue;
        }
        let h = solve_l0(&t.radial, cfg)?;
        // defect of the radial solve: L0 h - f on a grid
        let rdrh = h.apply_rdr();
        let r2lap = rdrh.apply_rdr().add(&rdrh, cfg);
        let mut worst = 0.0f64;
        let fsup = sup_radial(&t.radial).max(1e-300);
        for i in 0..40 {
            let r = 0.2 * (60.0f64 / 0.2).powf(i as f64 / 39.0);
            let l0h = r2lap.eval(r) / (r * r) + 5.0 * atoms.w4.eval(r) * h.eval(r);
            worst = worst.max((l0h - t.radial.eval(r)).abs());
        }
        let rel = worst / fsup;
        if rel > DEFECT_GATE {
            return Err(Error::ClassificationFailure(format!(
                "radial solve defect {rel:.3e} exceeds gate on source term {idx}"
            )));
        }
        dropped.push(DroppedResidual {
            label: format!("odd radial solve defect, source term {idx} at b^{}", t.b_power),
            relative: rel,
        });
        v.terms.push(MixedTerm { radial: h, cone: t.cone.clone(), b_power: t.b_power + 2 });
    }
    Ok((v, dropped))
}

/// Error update after an odd correction:
///   e_new = e^1 + [wave(v) without its Lap_R piece] - N'
/// where N' = b^{-2} [5 (u^4 - W^4) v + 10 u^3 v^2 + 10 u^2 v^3 + 5 u v^4 + v^5]
/// with u the previous full profile. The omitted Lap_R piece, the 5 W^4 v
/// part of the nonlinearity and the solved source e^0 cancel exactly up to
/// the recorded solve defects.
pub fn odd_error_update(
    e1: &MixedExpansion,
    v: &MixedExpansion,
    u_dev_before: &MixedExpansion,
    atoms: &RadialAtoms,
    nu: f64,
    cfg: &TruncationConfig,
) -> Result<MixedExpansion> {
    let mut e = e1.clone();
    for t in &v.terms {
        e = e.add(&wave_pieces(t, nu, LapMode::Skip, cfg)?);
    }
    let n = nonlinearity(u_dev_before, v, true, atoms, cfg);
    Ok(prune_b(&e.add(&n.scale(-1.0)), cfg, 0))
}

/// The quintic nonlinearity increment b^{-2} [(u+v)^5 - u^5 - 5 W^4 v · flag]
/// expanded in separated terms; `subtract_w4` removes the 5 W^4 v part (odd
/// steps cancel it against the radial solve).
fn nonlinearity(
    u_dev: &MixedExpansion,
    v: &MixedExpansion,
    subtract_w4: bool,
    atoms: &RadialAtoms,
    cfg: &TruncationConfig,
) -> MixedExpansion {
    let extra = 2; // intermediates still get multiplied by b^{-2}
    let p = |x: MixedExpansion| prune_b(&x, cfg, extra);
    let w_mx = MixedExpansion::from_radial(atoms.w.clone(), cfg);
    let u = w_mx.add(u_dev);
    let u2 = p(u.mul(&u, cfg));
    let u3 = p(u2.mul(&u, cfg));
    let quart = if subtract_w4 {
        if u_dev.is_zero() {
            MixedExpansion::zero()
        } else {
            // u^4 - W^4 = (u - W)(u^3 + u^2 W + u W^2 + W^3)
            let bracket = u3
                .add(&u2.mul_radial(&atoms.w, cfg))
                .add(&u.mul_radial(&atoms.w2, cfg))
                .add(&MixedExpansion::from_radial(atoms.w3.clone(), cfg));
            p(u_dev.mul(&bracket, cfg))
        }
    } else {
        p(u3.mul(&u, cfg))
    };
    let v2 = p(v.mul(v, cfg));
    let v3 = p(v2.mul(v, cfg));
    let v4 = p(v3.mul(v, cfg));
    let v5 = p(v4.mul(v, cfg));
    let n = quart
        .mul(v, cfg)
        .scale(5.0)
        .add(&u3.mul(&v2, cfg).scale(10.0))
        .add(&u2.mul(&v3, cfg).scale(10.0))
        .add(&u.mul(&v4, cfg).scale(5.0))
        .add(&v5);
    prune_b(&n, cfg, extra).mul_b(-2)
}

// ---------------------------------------------------------------------------
// even step
// ---------------------------------------------------------------------------

/// One solved component of the even-step triangular system.
#[derive(Debug, Clone)]
pub struct SolvedComponent {
    pub m: i32,
    pub j: usize,
    pub odd: bool,
    pub beta: f64,
    pub x: ConeExpansion,
}

/// Everything produced by an even correction step: the split of the incoming
/// error (principal + remainder), the solved cone components and the
/// assembled correction v_{2k}.
pub struct EvenStep {
    pub principal: MixedExpansion,
    pub remainder: MixedExpansion,
    pub solved: Vec<SolvedComponent>,
    pub v: MixedExpansion,
}

fn beta_tag(m: i32, pair_k: u32) -> Result<BetaExponent> {
    let offset = m - (2 * pair_k as i32 - 1);
    match offset {
        0 => Ok(BetaExponent::first(pair_k)),
        1 => Ok(BetaExponent::second(pair_k)),
        2 => Ok(BetaExponent::first(pair_k + 1)),
        _ => Err(Error::InputClass(format!(
            "inner level {m} outside the pair-{pair_k} families"
        ))),
    }
}

/// The lower-order couplings of the descending-j system: with
/// X_{j'} multiplying (log)^{j'} at inner level m, the equation is
///   L_beta X_j = rhs_j
///     + (j+1) [ (1+nu)(1-2 beta) X_{j+1} - a^{-2} X_{j+1}
///               + 2 (1+nu) a X'_{j+1} - 2 a^{-1} X'_{j+1} ]
///     + (j+2)(j+1) [ (1+nu)^2 - a^{-2} ] X_{j+2}.
/// (Derived from the A-calculus above and verified against high-precision
/// finite differences; see log_coupling_matches_finite_differences.)
fn coupling(
    x1: &ConeExpansion,
    x2: Option<&ConeExpansion>,
    j: usize,
    beta: f64,
    nu: f64,
    cfg: &TruncationConfig,
) -> Result<ConeExpansion> {
    let jp1 = (j + 1) as f64;
    let dx = x1.deriv_a(cfg)?;
    let adx = dx.mul(&a_poly(cfg), cfg);
    let aindx = x1.apply_ainv_da(cfg)?;
    let mut c = x1
        .scale(jp1 * (1.0 + nu) * (1.0 - 2.0 * beta))
        .add(&cone_div_a2(x1, cfg)?.scale(-jp1), cfg)
        .add(&adx.scale(2.0 * jp1 * (1.0 + nu)), cfg)
        .add(&aindx.scale(-2.0 * jp1), cfg);
    if let Some(x2) = x2 {
        let f2 = ((j + 2) * (j + 1)) as f64;
        c = c
            .add(&x2.scale(f2 * (1.0 + nu) * (1.0 + nu)), cfg)
            .add(&cone_div_a2(x2, cfg)?.scale(-f2), cfg);
    }
    Ok(c)
}

/// Even correction: extract the growing rows of e_{2k-1} at levels
/// {2k, 2k+1}, solve the resulting triangular cone systems per level and
/// parity (j descending, with components above the top log order zero), and
/// assemble v_{2k} from regularized atoms:
/// even-parity solutions X enter as Lam^j X b^m, odd-parity ones as
/// (rho Lam^j)(X/a) b^{m+1}.
pub fn even_correction(
    e: &MixedExpansion,
    pair_k: u32,
    nu: f64,
    atoms: &RadialAtoms,
    cfg: &TruncationConfig,
) -> Result<EvenStep> {
    let levels = [2 * pair_k as i32, 2 * pair_k as i32 + 1];
    let ex = extract_rows(e, &levels, atoms, cfg)?;
    let mut solved: Vec<SolvedComponent> = vec![];
    let mut v = MixedExpansion::zero();

    // group buckets by (m, parity)
    let mut groups: Vec<(i32, bool)> = vec![];
    for b in &ex.buckets {
        if !groups.contains(&(b.m, b.odd)) {
            groups.push((b.m, b.odd));
        }
    }
    groups.sort();
    for (m, odd) in groups {
        let tag = beta_tag(m, pair_k)?;
        let beta = (m as f64 - 0.5) * nu - 0.5;
        let jmax = ex
            .buckets
            .iter()
            .filter(|b| b.m == m && b.odd == odd)
            .map(|b| b.j)
            .max()
            .unwrap();
        let mut xs: Vec<ConeExpansion> = vec![ConeExpansion::zero_expansion(cfg); jmax + 1];
        for j in (0..=jmax).rev() {
            let mut rhs = ex
                .buckets
                .iter()
                .find(|b| b.m == m && b.odd == odd && b.j == j)
                .map(|b| b.rhs.clone())
                .unwrap_or_else(|| ConeExpansion::zero_expansion(cfg));
            if j + 1 <= jmax && !xs[j + 1].is_zero() {
                let x2 = if j + 2 <= jmax && !xs[j + 2].is_zero() { Some(&xs[j + 2]) } else { None };
                rhs = rhs.add(&coupling(&xs[j + 1], x2, j, beta, nu, cfg)?, cfg);
            }
            xs[j] = lbeta_green_solve(beta, &tag, &rhs, cfg)?;
        }
        for (j, x) in xs.into_iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            if odd {
                v.terms.push(MixedTerm {
                    radial: atoms.rho_lam[j].clone(),
                    cone: cone_div_a(&x, cfg)?,
                    b_power: m + 1,
                });
            } else {
                v.terms.push(MixedTerm { radial: atoms.lam[j].clone(), cone: x.clone(), b_power: m });
            }
            solved.push(SolvedComponent { m, j, odd, beta, x });
        }
    }
    Ok(EvenStep { principal: ex.principal, remainder: ex.remainder, solved, v })
}

/// Light-cone normalization: rewrite every radially decaying term whose cone
/// factor is only Q'-compatible as (1-a^2) w + R^2 b^2 w; the first piece
/// gains the missing power of 1-a, the second joins the growing b^2 part.
fn qqp_normalize(e: &MixedExpansion, nu: f64, cfg: &TruncationConfig) -> MixedExpansion {
    let near_poly = one_minus_a2(cfg);
    let mut out = MixedExpansion::zero();
    for t in &e.terms {
        if is_decaying(t, cfg) && !q_compatible(&t.cone, nu) {
            out.terms.push(MixedTerm {
                radial: t.radial.clone(),
                cone: t.cone.mul(&near_poly, cfg),
                b_power: t.b_power,
            });
            out.terms.push(MixedTerm {
                radial: t.radial.shift_power(2, cfg),
                cone: t.cone.clone(),
                b_power: t.b_power + 2,
            });
        } else {
            out.terms.push(t.clone());
        }
    }
    out
}

/// Error update after an even correction:
///   e_new = remainder + clean(principal + wave(v)) - N_even,
/// where clean() re-extracts the growing rows of principal + wave(v) — which
/// encode exactly the residuals of the solved cone equations — verifies that
/// each aggregated row is below the noise gate, and drops them.
pub fn even_error_update(
    step: &EvenStep,
    u_dev_before: &MixedExpansion,
    pair_k: u32,
    nu: f64,
    atoms: &RadialAtoms,
    cfg: &TruncationConfig,
) -> Result<(MixedExpansion, Vec<DroppedResidual>)> {
    let levels = [2 * pair_k as i32, 2 * pair_k as i32 + 1];
    let mut m_exp = step.principal.clone();
    for t in &step.v.terms {
        m_exp = m_exp.add(&wave_pieces(t, nu, LapMode::Absorb, cfg)?);
    }
    let ex = extract_rows(&m_exp, &levels, atoms, cfg)?;
    let mut dropped = vec![];
    for b in &ex.buckets {
        let resid = sup_cone(&b.rhs);
        let rel = resid / b.scale.max(1e-300);
        if rel > NOISE_GATE {
            return Err(Error::ClassificationFailure(format!(
                "even-step cancellation residual {rel:.3e} at level {} log^{} (parity {}) exceeds gate",
                b.m, b.j, if b.odd { "odd" } else { "even" }
            )));
        }
        dropped.push(DroppedResidual {
            label: format!(
                "even cancellation residual, level {} log^{} {}",
                b.m,
                b.j,
                if b.odd { "odd" } else { "even" }
            ),
            relative: rel,
        });
    }
    let n = nonlinearity(u_dev_before, &step.v, false, atoms, cfg);
    let e = step.remainder.add(&ex.remainder).add(&n.scale(-1.0));
    Ok((prune_b(&qqp_normalize(&e, nu, cfg), cfg, 0), dropped))
}

// ---------------------------------------------------------------------------
// membership certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct MembershipRecord {
    pub display: String,
    pub pass: bool,
    pub detail: String,
    /// Largest log R order observed among the terms.
    pub log_order: usize,
}

#[derive(Debug, Clone, Copy)]
enum CertMode {
    /// Corrections: every boundary singularity Q-compatible.
    QKind,
    /// Odd errors: Q'-compatible suffices.
    QPrimeKind,
    /// Even errors: decaying terms must be Q-compatible, growing ones
    /// Q'-compatible.
    EvenError,
}

/// Classification tolerant of one-sided vanishing: a numerically empty zero
/// table means "vanishes to all stored orders" (no constraint, reported as a
/// large order), an empty ladder means decay faster than any stored power.
fn classify_lenient(f: &InnerExpansion, tol: f64) -> Option<(i32, i32, usize)> {
    let maxz = f.zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let m = if maxz == 0.0 {
        None
    } else {
        f.zero.iter().position(|v| v.abs() > maxz * tol).map(|i| f.m + 2 * i as i32)
    };
    let kl = f.ladder.classify(tol);
    if m.is_none() && kl.is_none() {
        return None;
    }
    Some((
        m.unwrap_or(100),
        kl.map(|(k, _)| k).unwrap_or(-100),
        kl.map(|(_, l)| l).unwrap_or(0),
    ))
}

/// Effective vanishing order of the cone factor at a = 0 (leading index of
/// the Taylor table, counting numerically-zero leading entries).
fn cone_vanishing(g: &ConeExpansion, tol: f64) -> i32 {
    let maxz = g.zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if maxz == 0.0 {
        return g.n0 as i32;
    }
    let off = g.zero.iter().position(|v| v.abs() > maxz * tol).unwrap_or(0);
    g.n0 as i32 + off as i32
}

/// Certify that every term of `x` fits inside the class
/// lambda^{1/2} mu^{-K} IS^{m_req}(R^{k_req} log^*, kind): per separated
/// term f(R) g(a) b^s with radial top power k', the exact rewrites
/// R b = a and b^{-2} R^{-2} = a^{-2} put it in the class iff
/// s - K + k_req - k' >= 0 and the vanishing order satisfies
/// m - max(0, k' - k_req) >= m_req. A cone factor vanishing like a^n at
/// a = 0 contributes n to the vanishing order via the exact trade
/// g = a^n g~, f g b^s = (R^n f) g~ b^{s+n}, which leaves s - k' invariant.
fn certify(
    x: &MixedExpansion,
    display: &str,
    big_k: i32,
    k_req: i32,
    m_req: i32,
    mode: CertMode,
    nu: f64,
    cfg: &TruncationConfig,
) -> MembershipRecord {
    let mut pass = true;
    let mut detail = String::new();
    let mut log_order = 0usize;
    for (idx, t) in x.terms.iter().enumerate() {
        if t.radial.is_zero() || t.cone.is_zero() {
            continue;
        }
        let Some((m, kp, ell)) = classify_lenient(&t.radial, cfg.class_tol) else { continue };
        log_order = log_order.max(ell);
        let mut fail = |msg: String| {
            pass = false;
            if detail.is_empty() {
                detail = msg;
            }
        };
        let (k_eff, kind_ok) = match mode {
            CertMode::QKind => (k_req, q_compatible(&t.cone, nu)),
            CertMode::QPrimeKind => (k_req, qprime_compatible(&t.cone, nu)),
            CertMode::EvenError => {
                if kp <= -1 {
                    (-1, q_compatible(&t.cone, nu))
                } else {
                    // growing terms carry the extra b^2 of the Q' branch
                    (1, qprime_compatible(&t.cone, nu))
                }
            }
        };
        let big_k_eff = match mode {
            CertMode::EvenError => {
                if kp <= -1 {
                    big_k
                } else {
                    big_k + 2
                }
            }
            _ => big_k,
        };
        if t.b_power - big_k_eff + k_eff - kp < 0 {
            fail(format!(
                "term {idx}: b^{} R^{kp} too large for mu^-{big_k_eff} R^{k_eff} class",
                t.b_power
            ));
        }
        let m_tot = m + cone_vanishing(&t.cone, cfg.class_tol);
        if m_tot - 0.max(kp - k_eff) < m_req {
            fail(format!(
                "term {idx}: vanishing order {m_tot} below {m_req} after trading R^{}",
                0.max(kp - k_eff)
            ));
        }
        if !kind_ok {
            fail(format!("term {idx}: cone boundary exponents below the required kind"));
        }
    }
    MembershipRecord { display: display.to_string(), pass, detail, log_order }
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct Correction {
    /// 1-based step index j (v_j).
    pub index: u32,
    /// The correction is lambda^{1/2} * payload with payload carrying b^s,
    /// s >= mu_inverse_power.
    pub lambda_half_power: u32,
    pub mu_inverse_power: u32,
    pub payload: MixedExpansion,
    pub provenance: String,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BuildManifest {
    pub schema_version: u32,
    pub nu: f64,
    pub k: u32,
    pub truncation: TruncationConfig,
    /// Observed log R orders of v_{2k-1}, e_{2k-1}, e_{2k}.
    pub m_seq: Vec<usize>,
    pub p_seq: Vec<usize>,
    pub q_seq: Vec<usize>,
    pub memberships: Vec<MembershipRecord>,
    pub dropped_residuals: Vec<DroppedResidual>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ApproximateSolution {
    pub params: ScalingParams,
    pub corrections: Vec<Correction>,
    /// The current stripped error t^2 lambda^{-1/2} e_k.
    pub error: MixedExpansion,
    pub k: u32,
    pub manifest: BuildManifest,
}

/// Run the alternating correction scheme to k_target corrections, certifying
/// every intermediate membership. The first failed membership aborts with the
/// offending term's provenance.
pub fn build(
    params: &ScalingParams,
    k_target: u32,
    cfg: &TruncationConfig,
) -> Result<ApproximateSolution> {
    let start = std::time::Instant::now();
    let nu = params.nu;
    let atoms = RadialAtoms::new(cfg);
    let mut e = compute_e0(params, cfg);
    let mut u_dev = MixedExpansion::zero();
    let mut corrections = vec![];
    let mut memberships = vec![];
    let mut dropped_all = vec![];
    let (mut m_seq, mut p_seq, mut q_seq) = (vec![], vec![], vec![]);

    for j in 1..=k_target {
        let pair = (j + 1) / 2;
        let kk = pair as i32;
        if j % 2 == 1 {
            let (e0, e1) = split_error(&e, StepParity::Odd, pair, &atoms, cfg)?;
            let (v, dropped) = odd_correction(&e0, &atoms, cfg)?;
            dropped_all.extend(dropped);
            let e_new = odd_error_update(&e1, &v, &u_dev, &atoms, nu, cfg)?;
            let rec_v = certify(
                &v,
                &format!("v_{j} in lambda^1/2 mu^-{} IS^2(R log^m, Q)", 2 * kk),
                2 * kk,
                1,
                2,
                CertMode::QKind,
                nu,
                cfg,
            );
            let rec_e = certify(
                &e_new,
                &format!("t^2 e_{j} in lambda^1/2 mu^-{} IS^0(R log^p, Q')", 2 * kk),
                2 * kk,
                1,
                0,
                CertMode::QPrimeKind,
                nu,
                cfg,
            );
            m_seq.push(rec_v.log_order);
            p_seq.push(rec_e.log_order);
            let failed = (!rec_v.pass).then(|| rec_v.detail.clone());
            memberships.push(rec_v);
            let failed = failed.or_else(|| (!rec_e.pass).then(|| rec_e.detail.clone()));
            memberships.push(rec_e);
            if let Some(d) = failed {
                return Err(Error::ClassificationFailure(format!("step {j}: {d}")));
            }
            corrections.push(Correction {
                index: j,
                lambda_half_power: 1,
                mu_inverse_power: 2 * pair,
                payload: v.clone(),
                provenance: format!("odd step, radial solves of the pair-{pair} principal part"),
            });
            u_dev = u_dev.add(&v);
            e = e_new;
        } else {
            let step = even_correction(&e, pair, nu, &atoms, cfg)?;
            let (e_new, dropped) = even_error_update(&step, &u_dev, pair, nu, &atoms, cfg)?;
            dropped_all.extend(dropped);
            let rec_v = certify(
                &step.v,
                &format!("v_{j} in lambda^1/2 mu^-{} IS^2(R^3 log^p, Q)", 2 * kk + 2),
                2 * kk + 2,
                3,
                2,
                CertMode::QKind,
                nu,
                cfg,
            );
            let rec_e = certify(
                &e_new,
                &format!(
                    "t^2 e_{j} in lambda^1/2 mu^-{} (IS^0(R^-1 log^q, Q) + b^2 IS^0(R log^q, Q'))",
                    2 * kk
                ),
                2 * kk,
                -1,
                0,
                CertMode::EvenError,
                nu,
                cfg,
            );
            q_seq.push(rec_e.log_order);
            let failed = (!rec_v.pass).then(|| rec_v.detail.clone());
            memberships.push(rec_v);
            let failed = failed.or_else(|| (!rec_e.pass).then(|| rec_e.detail.clone()));
            memberships.push(rec_e);
            if let Some(d) = failed {
                return Err(Error::ClassificationFailure(format!("step {j}: {d}")));
            }
            corrections.push(Correction {
                index: j,
                lambda_half_power: 1,
                mu_inverse_power: 2 * pair + 2,
                payload: step.v.clone(),
                provenance: format!("even step, cone solves of the pair-{pair} growing rows"),
            });
            u_dev = u_dev.add(&step.v);
            e = e_new;
        }
    }

    let manifest = BuildManifest {
        schema_version: 1,
        nu,
        k: k_target,
        truncation: cfg.clone(),
        m_seq,
        p_seq,
        q_seq,
        memberships,
        dropped_residuals: dropped_all,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(ApproximateSolution { params: *params, corrections, error: e, k: k_target, manifest })
}

/// Evaluate u_k(t, r) = lambda^{1/2} [W(R) + sum_j payload_j(R, a, b)] on the
/// open cone 0 < r <= t < T_CAP.
pub fn evaluate_u(sol: &ApproximateSolution, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0 && r > 0.0 && r <= t && t < T_CAP) {
        return Err(Error::OutOfCone { r, t });
    }
    let lam = sol.params.lambda(t);
    let rr = r * lam;
    let a = r / t;
    let b = sol.params.small_b(t);
    let mut val = (1.0 + rr * rr / 3.0).powf(-0.5);
    for c in &sol.corrections {
        val += c.payload.evaluate(rr, a, b, 1e-9)?;
    }
    Ok(lam.sqrt() * val)
}

#[cfg(test)]
mod tests;
