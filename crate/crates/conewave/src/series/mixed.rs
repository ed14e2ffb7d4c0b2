//! Mixed two-scale expansions: finite sums of separated terms
//! f(R) * g(a) * b^s on the cone 0 <= a <= 1, with b = 1/(t*lambda) and
//! a = R*b. The operator calculus of the construction (D, t d/dt, cone
//! derivatives) closes on this class term by term.

use super::cone::{ConeExpansion, ConeKind};
use super::inner::InnerExpansion;
use super::TruncationConfig;

/// One separated term f(R) * g(a) * b^s. The power of b may be negative on
/// intermediates (mu^2 factors from t^2 weights); assembled objects are
/// expected to end up with nonnegative powers only.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MixedTerm {
    pub radial: InnerExpansion,
    pub cone: ConeExpansion,
    pub b_power: i32,
}

impl MixedTerm {
    /// Crude magnitude estimate used for pruning: sampled sup of the factors
    /// times the reference b raised to the term's power.
    fn magnitude(&self, b_ref: f64) -> f64 {
        let rmax = [0.0, 0.5, 2.0, 8.0, 50.0]
            .iter()
            .fold(0.0f64, |m, &r| m.max(self.radial.eval(r).abs()));
        let cmax = [0.05, 0.3, 0.6, 0.95]
            .iter()
            .fold(0.0f64, |m, &a| m.max(self.cone.eval(a).abs()));
        rmax * cmax * b_ref.powi(self.b_power)
    }
}

/// How [`MixedExpansion::change_variables`] should rewrite the bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rewrite {
    /// No-op (useful as a baseline in tests).
    Identity,
    /// Trade one power of b for a/R in every b-carrying term.
    BElimination,
    /// Split w = (1-a^2) w + R^2 b^2 w and re-sum (the light-cone split used
    /// by the even error update).
    QqpSplit,
}

/// Finite sum of separated terms; the working representation for every bulk
/// object (corrections, errors, nonlinearities).
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MixedExpansion {
    pub terms: Vec<MixedTerm>,
}

/// Classification of one kind-component of a mixed expansion:
/// (m, k, ell, minimum b power over contributing terms).
pub type ClassTuple = (i32, i32, usize, i32);

/// Structural classification of a mixed expansion, split by cone kind since
/// the even-step errors are sums of a Q part and a b^2-weighted Q' part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MixedClass {
    pub q_part: Option<ClassTuple>,
    pub qprime_part: Option<ClassTuple>,
}

impl MixedExpansion {
    pub fn zero() -> Self {
        MixedExpansion { terms: vec![] }
    }

    pub fn term(radial: InnerExpansion, cone: ConeExpansion, b_power: i32) -> Self {
        MixedExpansion { terms: vec![MixedTerm { radial, cone, b_power }] }
    }

    /// Purely radial object (cone factor identically one).
    pub fn from_radial(radial: InnerExpansion, cfg: &TruncationConfig) -> Self {
        Self::term(radial, ConeExpansion::constant(1.0, cfg), 0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() || self.terms.iter().all(|t| t.radial.is_zero() || t.cone.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        MixedExpansion { terms }
    }

    pub fn scale(&self, s: f64) -> Self {
        MixedExpansion {
            terms: self
                .terms
                .iter()
                .map(|t| MixedTerm {
                    radial: t.radial.scale(s),
                    cone: t.cone.clone(),
                    b_power: t.b_power,
                })
                .collect(),
        }
    }

    /// Shift every term's power of b (multiplication by b^p = mu^{-p}).
    pub fn mul_b(&self, p: i32) -> Self {
        MixedExpansion {
            terms: self
                .terms
                .iter()
                .map(|t| MixedTerm {
                    radial: t.radial.clone(),
                    cone: t.cone.clone(),
                    b_power: t.b_power + p,
                })
                .collect(),
        }
    }

    /// Drop terms that are negligible at the reference scale `b_ref` or that
    /// exceed the stored b-degree. Returns the pruned expansion.
    pub fn prune(&self, cfg: &TruncationConfig, b_ref: f64) -> Self {
        let mags: Vec<f64> = self.terms.iter().map(|t| t.magnitude(b_ref)).collect();
        let peak = mags.iter().fold(0.0f64, |m, &v| m.max(v));
        if peak == 0.0 {
            return MixedExpansion::zero();
        }
        let keep = peak * 1e-13;
        MixedExpansion {
            terms: self
                .terms
                .iter()
                .zip(&mags)
                .filter(|(t, &m)| m > keep && t.b_power <= cfg.b_degree as i32)
                .map(|(t, _)| t.clone())
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self, cfg: &TruncationConfig) -> Self {
        let mut terms = vec![];
        for t1 in &self.terms {
            for t2 in &other.terms {
                terms.push(MixedTerm {
                    radial: t1.radial.mul(&t2.radial, cfg),
                    cone: t1.cone.mul(&t2.cone, cfg),
                    b_power: t1.b_power + t2.b_power,
                });
            }
        }
        MixedExpansion { terms }
    }

    /// D = 1/2 + R d/dR at fixed (a, b): acts on the radial factors only.
    pub fn apply_d(&self) -> Self {
        self.map_radial(|r| r.apply_d())
    }

    /// R d/dR at fixed (a, b).
    pub fn apply_rdr(&self) -> Self {
        self.map_radial(|r| r.apply_rdr())
    }

    fn map_radial(&self, f: impl Fn(&InnerExpansion) -> InnerExpansion) -> Self {
        MixedExpansion {
            terms: self
                .terms
                .iter()
                .map(|t| MixedTerm { radial: f(&t.radial), cone: t.cone.clone(), b_power: t.b_power })
                .collect(),
        }
    }

    /// d/da at fixed (R, b): acts on the cone factors only.
    pub fn deriv_a(&self, cfg: &TruncationConfig) -> crate::Result<Self> {
        let mut terms = vec![];
        for t in &self.terms {
            terms.push(MixedTerm {
                radial: t.radial.clone(),
                cone: t.cone.deriv_a(cfg)?,
                b_power: t.b_power,
            });
        }
        Ok(MixedExpansion { terms })
    }

    /// Multiply every cone factor by a fixed cone expansion.
    pub fn mul_cone(&self, g: &ConeExpansion, cfg: &TruncationConfig) -> Self {
        MixedExpansion {
            terms: self
                .terms
                .iter()
                .map(|t| MixedTerm {
                    radial: t.radial.clone(),
                    cone: t.cone.mul(g, cfg),
                    b_power: t.b_power,
                })
                .collect(),
        }
    }

    /// Multiply every radial factor by a fixed inner expansion.
    pub fn mul_radial(&self, f: &InnerExpansion, cfg: &TruncationConfig) -> Self {
        MixedExpansion {
            terms: self
                .terms
                .iter()
                .map(|t| MixedTerm {
                    radial: t.radial.mul(f, cfg),
                    cone: t.cone.clone(),
                    b_power: t.b_power,
                })
                .collect(),
        }
    }

    pub fn eval_unchecked(&self, r: f64, a: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.radial.eval(r) * t.cone.eval(a) * b.powi(t.b_power))
            .sum()
    }

    /// Evaluate at a consistent cone point: a must equal R*b up to `tol`.
    pub fn evaluate(&self, r: f64, a: f64, b: f64, tol: f64) -> crate::Result<f64> {
        let mismatch = (a - r * b).abs();
        if mismatch > tol * (1.0 + a.abs()) {
            return Err(crate::Error::InconsistentCoordinates { mismatch });
        }
        Ok(self.eval_unchecked(r, a, b))
    }

    /// Semantically equal rewrite of the monomial bookkeeping.
    pub fn change_variables(&self, rw: Rewrite, cfg: &TruncationConfig) -> crate::Result<Self> {
        match rw {
            Rewrite::Identity => Ok(self.clone()),
            Rewrite::BElimination => {
                let mut terms = vec![];
                for t in &self.terms {
                    if t.b_power >= 1 {
                        let times_a = ConeExpansion::poly(&[0.0, 1.0], ConeKind::QPrime, cfg);
                        terms.push(MixedTerm {
                            radial: t.radial.shift_power(-1, cfg),
                            cone: t.cone.mul(&times_a, cfg),
                            b_power: t.b_power - 1,
                        });
                    } else {
                        terms.push(t.clone());
                    }
                }
                Ok(MixedExpansion { terms })
            }
            Rewrite::QqpSplit => {
                let (near, far) = self.qqp_split(cfg);
                Ok(near.add(&far))
            }
        }
    }

    /// The light-cone split w = (1-a^2) w + R^2 b^2 w. The first piece
    /// degenerates at the cone boundary, the second carries the extra
    /// mu^{-2} smallness.
    pub fn qqp_split(&self, cfg: &TruncationConfig) -> (Self, Self) {
        let one_minus_a2 = ConeExpansion::poly(&[1.0, 0.0, -1.0], ConeKind::QPrime, cfg);
        let near = self.mul_cone(&one_minus_a2, cfg);
        let far = MixedExpansion {
            terms: self
                .terms
                .iter()
                .map(|t| MixedTerm {
                    radial: t.radial.shift_power(2, cfg),
                    cone: t.cone.clone(),
                    b_power: t.b_power + 2,
                })
                .collect(),
        };
        (near, far)
    }

    /// Tightest certified classification, split by cone kind. Noise pruning
    /// uses `cfg.class_tol` inside each factor table.
    pub fn classify(&self, cfg: &TruncationConfig) -> crate::Result<MixedClass> {
        let mut q: Option<ClassTuple> = None;
        let mut qp: Option<ClassTuple> = None;
        for t in &self.terms {
            if t.radial.is_zero() || t.cone.is_zero() {
                continue;
            }
            let (m, k, ell) = t.radial.classify(cfg.class_tol)?;
            let slot = match t.cone.kind {
                ConeKind::Q => &mut q,
                ConeKind::QPrime => &mut qp,
            };
            *slot = Some(match slot.take() {
                None => (m, k, ell, t.b_power),
                Some((m0, k0, l0, b0)) => (m0.min(m), k0.max(k), l0.max(ell), b0.min(t.b_power)),
            });
        }
        if q.is_none() && qp.is_none() {
            return Err(crate::Error::ClassificationFailure("all terms vanish".into()));
        }
        Ok(MixedClass { q_part: q, qprime_part: qp })
    }
}
