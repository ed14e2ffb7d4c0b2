//! Cone-variable expansions: functions of a = r/t on [0, 1) with prescribed
//! (1-a)^{beta(i)+1} (kind Q) or (1-a)^{beta(i)} (kind Q') singular behavior
//! at the light cone, plus log(1-a) corrections in the resonant case.

use super::TruncationConfig;
use crate::util::Cheb;

/// Exponent bookkeeping for the cone-boundary singularities. The value is
/// sum over K of ((2k-3/2)nu - 1/2) plus sum over K' of ((2k-1/2)nu - 1/2);
/// the multisets record which corrections contributed.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BetaExponent {
    pub kk: Vec<u32>,
    pub kp: Vec<u32>,
}

impl BetaExponent {
    pub fn empty() -> Self {
        BetaExponent { kk: vec![], kp: vec![] }
    }

    /// Single contribution from correction pair k, first family.
    pub fn first(k: u32) -> Self {
        BetaExponent { kk: vec![k], kp: vec![] }
    }

    /// Single contribution from correction pair k, second family.
    pub fn second(k: u32) -> Self {
        BetaExponent { kk: vec![], kp: vec![k] }
    }

    pub fn value(&self, nu: f64) -> f64 {
        let s1: f64 = self.kk.iter().map(|&k| (2.0 * k as f64 - 1.5) * nu - 0.5).sum();
        let s2: f64 = self.kp.iter().map(|&k| (2.0 * k as f64 - 0.5) * nu - 0.5).sum();
        s1 + s2
    }

    pub fn is_empty(&self) -> bool {
        self.kk.is_empty() && self.kp.is_empty()
    }

    /// Union of the contributing multisets (exponent values add).
    pub fn combine(&self, other: &Self) -> Self {
        let mut kk = self.kk.clone();
        kk.extend_from_slice(&other.kk);
        kk.sort_unstable();
        let mut kp = self.kp.clone();
        kp.extend_from_slice(&other.kp);
        kp.sort_unstable();
        BetaExponent { kk, kp }
    }

    /// Resonance: the exponent value is a nonnegative integer, which happens
    /// exactly when log(1-a) corrections are forced.
    pub fn is_resonant(&self, nu: f64, tol: f64) -> bool {
        let v = self.value(nu);
        v > -tol && (v - v.round()).abs() < tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConeKind {
    /// Vanishes at a = 0 with an even expansion; singular terms carry
    /// exponents beta(i) + 1.
    Q,
    /// Image of Q under a^{-1} d/da; singular exponents beta(i).
    QPrime,
}

impl ConeKind {
    pub fn shift(self) -> u32 {
        match self {
            ConeKind::Q => 1,
            ConeKind::QPrime => 0,
        }
    }
}

/// One singular component at the cone boundary:
/// (1-a)^gamma * (log(1-a))^logj * sum_n coeffs[n] (1-a)^n.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SingularTerm {
    /// Which corrections produced the exponent (bookkeeping only).
    pub beta: BetaExponent,
    /// The actual leading exponent gamma = beta + kind shift (+ absorbed
    /// integer offsets folded into leading zeros of `coeffs`).
    pub gamma: f64,
    pub logj: u32,
    pub coeffs: Vec<f64>,
}

impl SingularTerm {
    pub fn eval(&self, u: f64) -> f64 {
        let mut poly = 0.0;
        for &c in self.coeffs.iter().rev() {
            poly = poly * u + c;
        }
        let logs = if self.logj == 0 { 1.0 } else { u.ln().powi(self.logj as i32) };
        poly * u.powf(self.gamma) * logs
    }
}

/// Truncated representation of a kind-Q or kind-Q' function of a on [0, 1):
/// Taylor series at a = 0, Chebyshev interpolant mid-range, and an analytic
/// plus singular expansion in u = 1-a at the cone boundary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ConeExpansion {
    pub kind: ConeKind,
    /// First stored power at a = 0; `zero[i]` is the coefficient of a^{n0+i}.
    pub n0: u32,
    pub zero: Vec<f64>,
    pub mid: Cheb,
    /// Analytic part at a = 1: sum reg1[n] (1-a)^n.
    pub reg1: Vec<f64>,
    pub sing: Vec<SingularTerm>,
    /// Switch points (a_lo, a_hi).
    pub zone: (f64, f64),
}

impl ConeExpansion {
    pub fn zero_expansion(cfg: &TruncationConfig) -> Self {
        ConeExpansion {
            kind: ConeKind::Q,
            n0: 0,
            zero: vec![],
            mid: Self::fit_mid(cfg.cone_zone, 4, |_| 0.0),
            reg1: vec![],
            sing: vec![],
            zone: cfg.cone_zone,
        }
    }

    pub fn fit_mid(zone: (f64, f64), n: usize, f: impl FnMut(f64) -> f64) -> Cheb {
        let lo = (zone.0 * 0.5).max(1e-3);
        let hi = zone.1 + 0.5 * (1.0 - zone.1);
        Cheb::fit(lo, hi, n, f)
    }

    /// Polynomial in a (analytic on the closed cone, no singular terms).
    /// `coeffs[i]` multiplies a^i.
    pub fn poly(coeffs: &[f64], kind: ConeKind, cfg: &TruncationConfig) -> Self {
        let n0 = coeffs.iter().position(|&c| c != 0.0).unwrap_or(0) as u32;
        let zero: Vec<f64> = coeffs[n0 as usize..].to_vec();
        // Re-expand around a = 1: a^i = (1-u)^i.
        let mut reg1 = vec![0.0; cfg.cone_reg_terms];
        for (i, &ci) in coeffs.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let mut binom = 1.0;
            for (n, r) in reg1.iter_mut().enumerate().take(i + 1) {
                *r += ci * binom * if n % 2 == 0 { 1.0 } else { -1.0 };
                binom *= (i - n) as f64 / (n as f64 + 1.0);
            }
        }
        let eval = |a: f64| {
            let mut p = 0.0;
            for &c in coeffs.iter().rev() {
                p = p * a + c;
            }
            p
        };
        ConeExpansion {
            kind,
            n0,
            zero,
            mid: Self::fit_mid(cfg.cone_zone, 24, eval),
            reg1,
            sing: vec![],
            zone: cfg.cone_zone,
        }
    }

    pub fn constant(v: f64, cfg: &TruncationConfig) -> Self {
        Self::poly(&[v], ConeKind::QPrime, cfg)
    }

    pub fn is_zero(&self) -> bool {
        self.zero.iter().all(|&v| v == 0.0)
            && self.reg1.iter().all(|&v| v == 0.0)
            && self.sing.iter().all(|t| t.coeffs.iter().all(|&v| v == 0.0))
    }

    fn eval_zero_rep(&self, a: f64) -> f64 {
        let mut poly = 0.0;
        for &c in self.zero.iter().rev() {
            poly = poly * a + c;
        }
        if self.n0 == 0 {
            poly
        } else {
            poly * a.powi(self.n0 as i32)
        }
    }

    fn eval_one_rep(&self, a: f64) -> f64 {
        let u = 1.0 - a;
        let mut reg = 0.0;
        for &c in self.reg1.iter().rev() {
            reg = reg * u + c;
        }
        reg + self.sing.iter().map(|t| t.eval(u)).sum::<f64>()
    }

    pub fn eval(&self, a: f64) -> f64 {
        if a <= self.zone.0 {
            self.eval_zero_rep(a)
        } else if a >= self.zone.1 {
            self.eval_one_rep(a)
        } else {
            self.mid.eval(a)
        }
    }

    /// Representation disagreement at the two switch points.
    pub fn zone_mismatch(&self) -> (f64, f64) {
        let lo = (self.eval_zero_rep(self.zone.0) - self.mid.eval(self.zone.0)).abs();
        let hi = (self.eval_one_rep(self.zone.1) - self.mid.eval(self.zone.1)).abs();
        (lo, hi)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.zero.iter_mut().for_each(|v| *v *= s);
        out.reg1.iter_mut().for_each(|v| *v *= s);
        out.mid.c.iter_mut().for_each(|v| *v *= s);
        for t in &mut out.sing {
            t.coeffs.iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    fn merge_sing(list: &mut Vec<SingularTerm>, term: SingularTerm) {
        if term.coeffs.iter().all(|&v| v == 0.0) {
            return;
        }
        for t in list.iter_mut() {
            if t.logj == term.logj && (t.gamma - term.gamma).abs() < 1e-11 {
                if t.coeffs.len() < term.coeffs.len() {
                    t.coeffs.resize(term.coeffs.len(), 0.0);
                }
                for (dst, src) in t.coeffs.iter_mut().zip(&term.coeffs) {
                    *dst += src;
                }
                return;
            }
        }
        list.push(term);
    }

    /// Sum. Adding Q to Q' demotes the Q side to kind Q' (its singular
    /// exponents beta+1 become beta + one absorbed power of 1-a).
    pub fn add(&self, other: &Self, cfg: &TruncationConfig) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let kind = if self.kind == other.kind { self.kind } else { ConeKind::QPrime };
        let n0 = self.n0.min(other.n0);
        let len = cfg.cone_zero_terms;
        let mut zero = vec![0.0; len];
        for (i, z) in zero.iter_mut().enumerate() {
            let p = n0 + i as u32;
            if p >= self.n0 {
                *z += self.zero.get((p - self.n0) as usize).copied().unwrap_or(0.0);
            }
            if p >= other.n0 {
                *z += other.zero.get((p - other.n0) as usize).copied().unwrap_or(0.0);
            }
        }
        let mut reg1 = vec![0.0; self.reg1.len().max(other.reg1.len())];
        for (i, r) in reg1.iter_mut().enumerate() {
            *r = self.reg1.get(i).copied().unwrap_or(0.0) + other.reg1.get(i).copied().unwrap_or(0.0);
        }
        let mut sing = vec![];
        for src in [self, other] {
            for t in &src.sing {
                Self::merge_sing(&mut sing, t.clone());
            }
        }
        let zone = self.zone;
        let mid = Self::fit_mid(zone, cfg.mid_cheb, |a| self.eval(a) + other.eval(a));
        ConeExpansion { kind, n0, zero, mid, reg1, sing, zone }
    }

    /// Product. Kind algebra: Q*Q -> Q, anything involving Q' -> Q'.
    /// Singular exponents add through the multiset union; integer excess is
    /// absorbed as leading zeros of the coefficient series.
    pub fn mul(&self, other: &Self, cfg: &TruncationConfig) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero_expansion(cfg);
        }
        let kind = if self.kind == ConeKind::Q && other.kind == ConeKind::Q {
            ConeKind::Q
        } else {
            ConeKind::QPrime
        };
        let n0 = self.n0 + other.n0;
        let len = cfg.cone_zero_terms;
        let mut zero = vec![0.0; len.min(self.zero.len() + other.zero.len())];
        for (i1, &a) in self.zero.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (i2, &b) in other.zero.iter().enumerate() {
                if i1 + i2 < zero.len() {
                    zero[i1 + i2] += a * b;
                }
            }
        }
        let reg_len = cfg.cone_reg_terms;
        let conv = |x: &[f64], y: &[f64]| {
            let mut out = vec![0.0; reg_len.min(x.len() + y.len())];
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (j, &yj) in y.iter().enumerate() {
                    if i + j < out.len() {
                        out[i + j] += xi * yj;
                    }
                }
            }
            out
        };
        let mut reg1 = conv(&self.reg1, &other.reg1);
        reg1.resize(reg_len, 0.0);
        let mut sing: Vec<SingularTerm> = vec![];
        // analytic x singular (both directions)
        for (ana, s) in [(&self.reg1, &other.sing), (&other.reg1, &self.sing)] {
            for t in s.iter() {
                Self::merge_sing(
                    &mut sing,
                    SingularTerm {
                        beta: t.beta.clone(),
                        gamma: t.gamma,
                        logj: t.logj,
                        coeffs: conv(ana, &t.coeffs),
                    },
                );
            }
        }
        // singular x singular: exponents add on the combined multiset; any
        // integer excess over beta + shift just means extra regularity
        for t1 in &self.sing {
            for t2 in &other.sing {
                let beta = t1.beta.combine(&t2.beta);
                let gamma = t1.gamma + t2.gamma;
                Self::merge_sing(
                    &mut sing,
                    SingularTerm {
                        beta,
                        gamma,
                        logj: t1.logj + t2.logj,
                        coeffs: conv(&t1.coeffs, &t2.coeffs),
                    },
                );
            }
        }
        let zone = self.zone;
        let mid = Self::fit_mid(zone, cfg.mid_cheb, |a| self.eval(a) * other.eval(a));
        ConeExpansion { kind, n0, zero, mid, reg1, sing, zone }
    }

    /// a^{-1} d/da, the map taking Q into Q'. Every singular exponent drops
    /// by one; the analytic-at-1 prefactor 1/a = 1/(1-u) is expanded.
    pub fn apply_ainv_da(&self, cfg: &TruncationConfig) -> crate::Result<Self> {
        self.derivative_impl(cfg, true)
    }

    /// Plain d/da; also lands in kind Q'.
    pub fn deriv_a(&self, cfg: &TruncationConfig) -> crate::Result<Self> {
        self.derivative_impl(cfg, false)
    }

    fn derivative_impl(&self, cfg: &TruncationConfig, divide_by_a: bool) -> crate::Result<Self> {
        // Taylor at 0.
        let drop = if divide_by_a { 2 } else { 1 };
        let mut n0 = 0u32;
        let mut zero = vec![];
        for (i, &c) in self.zero.iter().enumerate() {
            let p = self.n0 as i32 + i as i32;
            let coef = p as f64 * c;
            if coef == 0.0 {
                continue;
            }
            let pnew = p - drop;
            if pnew < 0 {
                return Err(crate::Error::ClassificationFailure(format!(
                    "a^{{-1}}d/da would create power a^{pnew}"
                )));
            }
            if zero.is_empty() {
                n0 = pnew as u32;
            }
            let idx = (pnew as u32 - n0) as usize;
            if zero.len() <= idx {
                zero.resize(idx + 1, 0.0);
            }
            zero[idx] += coef;
        }
        zero.truncate(cfg.cone_zero_terms);

        // 1/a = sum_k u^k near u = 0.
        let reg_len = cfg.cone_reg_terms;
        let geom_mul = |series: &[f64]| -> Vec<f64> {
            if !divide_by_a {
                return series.to_vec();
            }
            let mut out = vec![0.0; reg_len.min(series.len() + reg_len)];
            for (i, &si) in series.iter().enumerate() {
                for o in out.iter_mut().skip(i) {
                    *o += si;
                }
            }
            out
        };
        // d/da of the analytic part: -(d/du) sum r_n u^n.
        let mut dreg = vec![0.0; self.reg1.len().saturating_sub(1)];
        for (n, d) in dreg.iter_mut().enumerate() {
            *d = -((n + 1) as f64) * self.reg1[n + 1];
        }
        let reg1 = geom_mul(&dreg);

        let mut sing = vec![];
        for t in &self.sing {
            // d/da [u^g h(u) log^j u] = -(g u^{g-1} h + u^g h' + j u^{g-1} h) ...
            let mut main = vec![0.0; reg_len.min(t.coeffs.len() + 1)];
            for (n, &c) in t.coeffs.iter().enumerate() {
                // -(g+n) c u^{g+n-1}
                if n < main.len() {
                    main[n] += -(t.gamma + n as f64) * c;
                }
            }
            Self::merge_sing(
                &mut sing,
                SingularTerm {
                    beta: t.beta.clone(),
                    gamma: t.gamma - 1.0,
                    logj: t.logj,
                    coeffs: geom_mul(&main),
                },
            );
            if t.logj > 0 {
                let lower: Vec<f64> = t.coeffs.iter().map(|&c| -(t.logj as f64) * c).collect();
                Self::merge_sing(
                    &mut sing,
                    SingularTerm {
                        beta: t.beta.clone(),
                        gamma: t.gamma - 1.0,
                        logj: t.logj - 1,
                        coeffs: geom_mul(&lower),
                    },
                );
            }
        }
        let zone = self.zone;
        let dmid = self.mid.deriv();
        let mid = Self::fit_mid(zone, cfg.mid_cheb, |a| {
            if divide_by_a { dmid.eval(a) / a } else { dmid.eval(a) }
        });
        Ok(ConeExpansion { kind: ConeKind::QPrime, n0, zero, mid, reg1, sing, zone })
    }

    /// Even-at-zero check: relative size of odd-power coefficients, taking the
    /// parity of the leading power as reference.
    pub fn odd_contamination(&self) -> f64 {
        let maxc = self.zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if maxc == 0.0 {
            return 0.0;
        }
        self.zero
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == 1)
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
            / maxc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> TruncationConfig {
        TruncationConfig::default()
    }

    #[test]
    fn beta_exponent_values() {
        let b = BetaExponent::first(1);
        assert_relative_eq!(b.value(0.3), 0.5 * 0.3 - 0.5, epsilon = 1e-14);
        let c = BetaExponent::second(1);
        assert_relative_eq!(c.value(0.3), 1.5 * 0.3 - 0.5, epsilon = 1e-14);
        let u = b.combine(&c);
        assert_relative_eq!(u.value(0.3), b.value(0.3) + c.value(0.3), epsilon = 1e-14);
        // nu = 1 makes (2k-3/2)nu - 1/2 = 0 for k = 1: resonant.
        assert!(BetaExponent::first(1).is_resonant(1.0, 1e-9));
        assert!(!BetaExponent::first(1).is_resonant(0.3, 1e-9));
    }

    #[test]
    fn poly_representation_consistent() {
        let c = cfg();
        let p = ConeExpansion::poly(&[0.0, 2.0, -1.0], ConeKind::Q, &c);
        for &a in &[0.05, 0.2, 0.5, 0.93, 0.999] {
            assert_relative_eq!(p.eval(a), 2.0 * a - a * a, epsilon = 1e-10);
        }
        let (lo, hi) = p.zone_mismatch();
        assert!(lo < 1e-12 && hi < 1e-12);
    }

    #[test]
    fn product_of_q_is_q() {
        let c = cfg();
        let p = ConeExpansion::poly(&[0.0, 0.0, 1.0], ConeKind::Q, &c);
        let q = p.mul(&p, &c);
        assert_eq!(q.kind, ConeKind::Q);
        assert_eq!(q.n0, 4);
        for &a in &[0.1, 0.6, 0.97] {
            assert_relative_eq!(q.eval(a), a.powi(4), epsilon = 1e-9);
        }
    }

    /// (1-a^2)^gamma as a ConeExpansion: even at a = 0, singular exponent
    /// gamma at the boundary with coefficient series from (1+a)^gamma = (2-u)^gamma.
    fn boundary_power(beta: BetaExponent, nu: f64, c: &TruncationConfig) -> ConeExpansion {
        let gamma = beta.value(nu) + 1.0;
        // Taylor at 0: sum_i binom(gamma, i) (-a^2)^i.
        let mut zero = vec![0.0; c.cone_zero_terms];
        let mut binom = 1.0;
        for i in 0..c.cone_zero_terms / 2 {
            zero[2 * i] = binom * if i % 2 == 0 { 1.0 } else { -1.0 };
            binom *= (gamma - i as f64) / (i as f64 + 1.0);
        }
        // (2-u)^gamma = 2^gamma sum_n binom(gamma, n) (-u/2)^n.
        let mut coeffs = vec![0.0; c.cone_reg_terms];
        let mut binom = 2.0f64.powf(gamma);
        for (n, co) in coeffs.iter_mut().enumerate() {
            *co = binom * if n % 2 == 0 { 1.0 } else { -1.0 };
            binom *= (gamma - n as f64) / (2.0 * (n as f64 + 1.0));
        }
        let zone = c.cone_zone;
        ConeExpansion {
            kind: ConeKind::Q,
            n0: 0,
            zero,
            mid: ConeExpansion::fit_mid(zone, c.mid_cheb, |a| (1.0 - a * a).powf(gamma)),
            reg1: vec![],
            sing: vec![SingularTerm { beta, gamma, logj: 0, coeffs }],
            zone,
        }
    }

    #[test]
    fn boundary_power_zones_agree() {
        let c = cfg();
        let s = boundary_power(BetaExponent::first(1), 0.3, &c);
        let gamma = BetaExponent::first(1).value(0.3) + 1.0;
        for &a in &[0.0, 0.1, 0.29, 0.5, 0.89, 0.95, 0.9999] {
            assert_relative_eq!(s.eval(a), (1.0 - a * a).powf(gamma), max_relative = 1e-9);
        }
        let (lo, hi) = s.zone_mismatch();
        assert!(lo < 1e-9 && hi < 1e-9, "mismatch {lo} {hi}");
    }

    #[test]
    fn singular_product_combines_exponents() {
        let c = cfg();
        let nu = 0.3;
        let beta = BetaExponent::first(1);
        let gamma = beta.value(nu) + 1.0;
        let s = boundary_power(beta.clone(), nu, &c);
        let p = s.mul(&s, &c);
        assert_eq!(p.kind, ConeKind::Q);
        for &a in &[0.1, 0.5, 0.95, 0.999] {
            assert_relative_eq!(
                p.eval(a),
                (1.0 - a * a).powf(2.0 * gamma),
                max_relative = 1e-8
            );
        }
        // the squared term must sit on the combined multiset
        let both = beta.combine(&beta);
        assert!(p
            .sing
            .iter()
            .any(|t| t.beta == both && (t.gamma - 2.0 * gamma).abs() < 1e-12));
    }

    #[test]
    fn ainv_da_maps_q_to_qprime() {
        let c = cfg();
        let nu = 0.3;
        let beta = BetaExponent::first(1);
        let gamma = beta.value(nu) + 1.0;
        let s = boundary_power(beta, nu, &c);
        let d = s.apply_ainv_da(&c).unwrap();
        assert_eq!(d.kind, ConeKind::QPrime);
        // a^{-1} d/da (1-a^2)^gamma = -2 gamma (1-a^2)^{gamma-1}
        for &a in &[0.1, 0.5, 0.95, 0.999] {
            assert_relative_eq!(
                d.eval(a),
                -2.0 * gamma * (1.0 - a * a).powf(gamma - 1.0),
                max_relative = 1e-7
            );
        }
        assert!(d.sing.iter().any(|t| (t.gamma - (gamma - 1.0)).abs() < 1e-12));
    }

    #[test]
    fn add_merges_matching_singular_terms() {
        let c = cfg();
        let s = boundary_power(BetaExponent::first(1), 0.3, &c);
        let t = s.add(&s, &c);
        assert_eq!(t.sing.len(), 1);
        assert_relative_eq!(t.sing[0].coeffs[0], 2.0 * s.sing[0].coeffs[0], epsilon = 1e-13);
        for &a in &[0.1, 0.6, 0.99] {
            assert_relative_eq!(t.eval(a), 2.0 * s.eval(a), max_relative = 1e-9);
        }
    }
}
