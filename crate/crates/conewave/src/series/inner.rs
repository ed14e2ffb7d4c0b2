//! Inner-variable expansions: functions of R represented by an even Taylor
//! series at R = 0, a Chebyshev interpolant mid-range, and a log-ladder at
//! R = infinity, with validated switch points between the three zones.

use super::ladder::LogLadder;
use super::TruncationConfig;
use crate::util::Cheb;

/// Truncated representation of an element of S^m(R^k (log R)^ell):
/// `v = R^m * (even series)` near zero, `ladder` near infinity, and a
/// Chebyshev interpolant in log R in between.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct InnerExpansion {
    /// Vanishing order at R = 0; `zero[i]` is the coefficient of R^{m+2i}.
    pub m: i32,
    pub zero: Vec<f64>,
    pub ladder: LogLadder,
    /// Interpolant in x = log R, covering a margin beyond both switch points.
    pub mid: Cheb,
    /// Switch radii: zero rep below, ladder above, interpolant between.
    pub zone: (f64, f64),
}

impl InnerExpansion {
    /// Build from the two end representations and a mid-range evaluator.
    pub fn from_parts(
        m: i32,
        zero: Vec<f64>,
        ladder: LogLadder,
        cfg: &TruncationConfig,
        f: impl FnMut(f64) -> f64,
    ) -> Self {
        let zone = cfg.zone;
        let mid = Self::fit_mid(zone, cfg.mid_cheb, f);
        InnerExpansion { m, zero, ladder, mid, zone }
    }

    pub fn fit_mid(zone: (f64, f64), n: usize, mut f: impl FnMut(f64) -> f64) -> Cheb {
        Cheb::fit((zone.0 * 0.5).ln(), (zone.1 * 2.0).ln(), n, |x| f(x.exp()))
    }

    pub fn zero_expansion(cfg: &TruncationConfig) -> Self {
        InnerExpansion {
            m: 0,
            zero: vec![],
            ladder: LogLadder::zero(),
            mid: Self::fit_mid(cfg.zone, 4, |_| 0.0),
            zone: cfg.zone,
        }
    }

    /// The constant-one expansion (multiplicative identity).
    pub fn one(cfg: &TruncationConfig) -> Self {
        InnerExpansion {
            m: 0,
            zero: vec![1.0],
            ladder: LogLadder::constant(1.0),
            mid: Self::fit_mid(cfg.zone, 4, |_| 1.0),
            zone: cfg.zone,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.zero.iter().all(|&v| v == 0.0) && self.ladder.is_zero()
    }

    fn eval_zero_rep(&self, r: f64) -> f64 {
        let r2 = r * r;
        let mut poly = 0.0;
        for &c in self.zero.iter().rev() {
            poly = poly * r2 + c;
        }
        if self.m == 0 {
            poly
        } else if r == 0.0 {
            0.0
        } else {
            poly * r.powi(self.m)
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.zone.0 {
            self.eval_zero_rep(r)
        } else if r >= self.zone.1 {
            self.ladder.eval(r)
        } else {
            self.mid.eval(r.ln())
        }
    }

    /// Representation disagreement at the two switch points (absolute).
    pub fn zone_mismatch(&self) -> (f64, f64) {
        let lo = (self.eval_zero_rep(self.zone.0) - self.mid.eval(self.zone.0.ln())).abs();
        let hi = (self.ladder.eval(self.zone.1) - self.mid.eval(self.zone.1.ln())).abs();
        (lo, hi)
    }

    pub fn scale(&self, s: f64) -> Self {
        InnerExpansion {
            m: self.m,
            zero: self.zero.iter().map(|v| v * s).collect(),
            ladder: self.ladder.scale(s),
            mid: Cheb {
                lo: self.mid.lo,
                hi: self.mid.hi,
                c: self.mid.c.iter().map(|v| v * s).collect(),
            },
            zone: self.zone,
        }
    }

    pub fn add(&self, other: &Self, cfg: &TruncationConfig) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let m = self.m.min(other.m);
        debug_assert_eq!((self.m - other.m) % 2, 0, "parity mismatch in inner addition");
        let n = cfg.zero_terms;
        let mut zero = vec![0.0; n];
        for (i, z) in zero.iter_mut().enumerate() {
            let p = m + 2 * i as i32;
            let i1 = (p - self.m) / 2;
            let i2 = (p - other.m) / 2;
            if i1 >= 0 {
                *z += self.zero.get(i1 as usize).copied().unwrap_or(0.0);
            }
            if i2 >= 0 {
                *z += other.zero.get(i2 as usize).copied().unwrap_or(0.0);
            }
        }
        let mut ladder = self.ladder.add(&other.ladder);
        ladder.truncate(cfg.inf_terms);
        let zone = self.zone;
        let mid = Self::fit_mid(zone, cfg.mid_cheb, |r| self.eval(r) + other.eval(r));
        InnerExpansion { m, zero, ladder, mid, zone }
    }

    pub fn mul(&self, other: &Self, cfg: &TruncationConfig) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero_expansion(cfg);
        }
        let m = self.m + other.m;
        let n = cfg.zero_terms;
        let mut zero = vec![0.0; n.min(self.zero.len() + other.zero.len())];
        for (i1, &a) in self.zero.iter().enumerate() {
            for (i2, &b) in other.zero.iter().enumerate() {
                if i1 + i2 < zero.len() {
                    zero[i1 + i2] += a * b;
                }
            }
        }
        let ladder = self.ladder.mul(&other.ladder, cfg.inf_terms);
        let zone = self.zone;
        let mid = Self::fit_mid(zone, cfg.mid_cheb, |r| self.eval(r) * other.eval(r));
        InnerExpansion { m, zero, ladder, mid, zone }
    }

    pub fn powi(&self, p: u32, cfg: &TruncationConfig) -> Self {
        let mut out = Self::one(cfg);
        for _ in 0..p {
            out = out.mul(self, cfg);
        }
        out
    }

    /// D = 1/2 + R d/dR, applied exactly on both end representations and by
    /// Chebyshev differentiation in log R mid-range.
    pub fn apply_d(&self) -> Self {
        let zero = self
            .zero
            .iter()
            .enumerate()
            .map(|(i, &c)| (0.5 + (self.m + 2 * i as i32) as f64) * c)
            .collect();
        let ladder = self.ladder.apply_d();
        let d = self.mid.deriv();
        let mid = Cheb {
            lo: self.mid.lo,
            hi: self.mid.hi,
            c: {
                let mut c: Vec<f64> = self.mid.c.iter().map(|v| 0.5 * v).collect();
                for (i, dv) in d.c.iter().enumerate() {
                    if i < c.len() {
                        c[i] += dv;
                    } else {
                        c.push(*dv);
                    }
                }
                c
            },
        };
        InnerExpansion { m: self.m, zero, ladder, mid, zone: self.zone }
    }

    /// R d/dR, same mechanics as [`apply_d`] without the 1/2.
    pub fn apply_rdr(&self) -> Self {
        let zero = self
            .zero
            .iter()
            .enumerate()
            .map(|(i, &c)| ((self.m + 2 * i as i32) as f64) * c)
            .collect();
        let ladder = self.ladder.apply_rdr();
        let mid = self.mid.deriv();
        InnerExpansion { m: self.m, zero, ladder, mid, zone: self.zone }
    }

    /// Multiply by R^p. Flips stored parity when p is odd; values are exact.
    pub fn shift_power(&self, p: i32, cfg: &TruncationConfig) -> Self {
        let ladder = self.ladder.shift_power(p);
        let zone = self.zone;
        let mid = Self::fit_mid(zone, cfg.mid_cheb, |r| self.eval(r) * r.powi(p));
        InnerExpansion { m: self.m + p, zero: self.zero.clone(), ladder, mid, zone }
    }

    /// Tightest certified classification (m, k, ell), pruning coefficients
    /// below `rel_tol` of the largest in each table.
    pub fn classify(&self, rel_tol: f64) -> crate::Result<(i32, i32, usize)> {
        let maxz = self.zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m_eff = if maxz == 0.0 {
            None
        } else {
            self.zero
                .iter()
                .position(|v| v.abs() > maxz * rel_tol)
                .map(|i0| self.m + 2 * i0 as i32)
        };
        let kl = self.ladder.classify(rel_tol);
        match (m_eff, kl) {
            (Some(m), Some((k, ell))) => Ok((m, k, ell)),
            _ => Err(crate::Error::ClassificationFailure(
                "leading coefficients below noise threshold".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> TruncationConfig {
        TruncationConfig::default()
    }

    /// W(R) = (1 + R^2/3)^{-1/2} assembled as an InnerExpansion.
    fn ground_state(cfg: &TruncationConfig) -> InnerExpansion {
        // Taylor at 0: sum binom(-1/2, i) (R^2/3)^i.
        let mut zero = vec![0.0; cfg.zero_terms];
        let mut binom = 1.0;
        for (i, z) in zero.iter_mut().enumerate() {
            *z = binom / 3.0f64.powi(i as i32);
            binom *= -(0.5 + i as f64) / (i as f64 + 1.0);
        }
        // Ladder: W = sqrt(3)/R * (1 + 3/R^2)^{-1/2}.
        let mut ladder = LogLadder::zero();
        let mut b = 1.0;
        for i in 0..cfg.inf_terms / 2 + 1 {
            ladder.set_coeff(2 * i, 0, 3.0f64.sqrt() * b * 3.0f64.powi(i as i32));
            b *= -(0.5 + i as f64) / (i as f64 + 1.0);
        }
        ladder.k = -1;
        InnerExpansion::from_parts(0, zero, ladder, cfg, |r| (1.0 + r * r / 3.0).powf(-0.5))
    }

    #[test]
    fn ground_state_zones_agree() {
        let w = ground_state(&cfg());
        let (lo, hi) = w.zone_mismatch();
        assert!(lo < 1e-8, "zero-rep mismatch {lo}");
        assert!(hi < 1e-8, "ladder mismatch {hi}");
        assert_relative_eq!(w.eval(0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(w.eval(50.0), (1.0 + 2500.0 / 3.0f64).powf(-0.5), max_relative = 1e-10);
    }

    #[test]
    fn product_matches_direct_expansion() {
        // W * W must equal the expansion of (1 + R^2/3)^{-1}.
        let c = cfg();
        let w = ground_state(&c);
        let w2 = w.mul(&w, &c);
        // Taylor of (1+x)^{-1} at x = R^2/3: (-1)^i / 3^i.
        for i in 0..6 {
            assert_relative_eq!(
                w2.zero[i],
                (-1.0f64).powi(i as i32) / 3.0f64.powi(i as i32),
                epsilon = 1e-12
            );
        }
        for &r in &[0.3, 2.0, 30.0] {
            assert_relative_eq!(w2.eval(r), 1.0 / (1.0 + r * r / 3.0), max_relative = 1e-8);
        }
    }

    #[test]
    fn one_is_identity() {
        let c = cfg();
        let w = ground_state(&c);
        let p = w.mul(&InnerExpansion::one(&c), &c);
        for &r in &[0.0, 0.7, 5.0, 100.0] {
            assert_relative_eq!(p.eval(r), w.eval(r), epsilon = 1e-9);
        }
    }

    #[test]
    fn apply_d_on_constant() {
        let c = cfg();
        let half = InnerExpansion::one(&c).apply_d();
        for &r in &[0.0, 1.0, 10.0, 200.0] {
            assert_relative_eq!(half.eval(r), 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn apply_d_matches_finite_difference() {
        let c = cfg();
        let w = ground_state(&c);
        let dw = w.apply_d();
        let h = 1e-5;
        for &r in &[0.4, 2.0, 8.0, 40.0] {
            let fd = 0.5 * w.eval(r) + r * (w.eval(r + h) - w.eval(r - h)) / (2.0 * h);
            assert_relative_eq!(dw.eval(r), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn classify_product_adds_orders() {
        let c = cfg();
        let w = ground_state(&c);
        // R^2 * W^2 has m = 2 at zero and top power k = 2 - 2 = 0 at infinity.
        let r2w2 = w.mul(&w, &c).shift_power(2, &c);
        let (m, k, ell) = r2w2.classify(1e-10).unwrap();
        assert_eq!(m, 2);
        assert_eq!(k, 0);
        assert_eq!(ell, 0);
    }

    #[test]
    fn shift_power_preserves_values() {
        let c = cfg();
        let w = ground_state(&c);
        let shifted = w.shift_power(-1, &c);
        for &r in &[0.5, 3.0, 60.0] {
            assert_relative_eq!(shifted.eval(r), w.eval(r) / r, max_relative = 1e-8);
        }
    }
}
