//! Asymptotic log-ladder at R = infinity: finite tables
//! sum_{i,j} c[i][j] R^{k-i} (log R)^j.

/// Truncated asymptotic expansion at R = infinity. Row `i` holds the
/// coefficients of R^{k-i} (log R)^j for j = 0..row.len().
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogLadder {
    /// Top power of R.
    pub k: i32,
    /// Coefficient rows, one per descending power of R.
    pub c: Vec<Vec<f64>>,
}

impl LogLadder {
    pub fn zero() -> Self {
        LogLadder { k: 0, c: vec![] }
    }

    /// Single term coef * R^k (log R)^j.
    pub fn term(k: i32, j: usize, coef: f64) -> Self {
        let mut row = vec![0.0; j + 1];
        row[j] = coef;
        LogLadder { k, c: vec![row] }
    }

    pub fn constant(v: f64) -> Self {
        LogLadder::term(0, 0, v)
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|r| r.iter().all(|&v| v == 0.0))
    }

    pub fn depth(&self) -> usize {
        self.c.len()
    }

    /// Coefficient of R^{k-i}(log R)^j, zero outside the stored table.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.c.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0)
    }

    pub fn set_coeff(&mut self, i: usize, j: usize, v: f64) {
        while self.c.len() <= i {
            self.c.push(vec![]);
        }
        let row = &mut self.c[i];
        while row.len() <= j {
            row.push(0.0);
        }
        row[j] = v;
    }

    pub fn eval(&self, r: f64) -> f64 {
        let lr = r.ln();
        let mut total = 0.0;
        for (i, row) in self.c.iter().enumerate() {
            let p = self.k - i as i32;
            let mut logpoly = 0.0;
            for &cj in row.iter().rev() {
                logpoly = logpoly * lr + cj;
            }
            total += logpoly * r.powi(p);
        }
        total
    }

    pub fn scale(&self, s: f64) -> Self {
        LogLadder {
            k: self.k,
            c: self.c.iter().map(|r| r.iter().map(|v| v * s).collect()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let k = self.k.max(other.k);
        let depth = ((k - self.k) as usize + self.depth()).max((k - other.k) as usize + other.depth());
        let mut out = LogLadder { k, c: vec![] };
        for i in 0..depth {
            let p = k - i as i32;
            let i1 = self.k - p;
            let i2 = other.k - p;
            let jmax = [
                if i1 >= 0 { self.c.get(i1 as usize).map_or(0, |r| r.len()) } else { 0 },
                if i2 >= 0 { other.c.get(i2 as usize).map_or(0, |r| r.len()) } else { 0 },
            ]
            .into_iter()
            .max()
            .unwrap();
            for j in 0..jmax {
                let v = (if i1 >= 0 { self.coeff(i1 as usize, j) } else { 0.0 })
                    + (if i2 >= 0 { other.coeff(i2 as usize, j) } else { 0.0 });
                if v != 0.0 {
                    out.set_coeff(i, j, v);
                }
            }
        }
        out
    }

    /// Product, truncated to `depth` rows of the result.
    pub fn mul(&self, other: &Self, depth: usize) -> Self {
        let mut out = LogLadder { k: self.k + other.k, c: vec![] };
        for (i1, r1) in self.c.iter().enumerate() {
            for (i2, r2) in other.c.iter().enumerate() {
                let i = i1 + i2;
                if i >= depth {
                    continue;
                }
                for (j1, &a) in r1.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (j2, &b) in r2.iter().enumerate() {
                        if b == 0.0 {
                            continue;
                        }
                        let v = out.coeff(i, j1 + j2) + a * b;
                        out.set_coeff(i, j1 + j2, v);
                    }
                }
            }
        }
        out
    }

    /// Apply D = 1/2 + R d/dR term by term:
    /// R^p log^j -> (1/2 + p) R^p log^j + j R^p log^{j-1}.
    pub fn apply_d(&self) -> Self {
        let mut out = LogLadder { k: self.k, c: vec![] };
        for (i, row) in self.c.iter().enumerate() {
            let p = (self.k - i as i32) as f64;
            for (j, &cj) in row.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                let v = out.coeff(i, j) + (0.5 + p) * cj;
                out.set_coeff(i, j, v);
                if j > 0 {
                    let w = out.coeff(i, j - 1) + j as f64 * cj;
                    out.set_coeff(i, j - 1, w);
                }
            }
        }
        out
    }

    /// Apply R d/dR term by term.
    pub fn apply_rdr(&self) -> Self {
        let mut out = LogLadder { k: self.k, c: vec![] };
        for (i, row) in self.c.iter().enumerate() {
            let p = (self.k - i as i32) as f64;
            for (j, &cj) in row.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                if p != 0.0 {
                    let v = out.coeff(i, j) + p * cj;
                    out.set_coeff(i, j, v);
                }
                if j > 0 {
                    let w = out.coeff(i, j - 1) + j as f64 * cj;
                    out.set_coeff(i, j - 1, w);
                }
            }
        }
        out
    }

    /// Multiply by R^p (pure power shift).
    pub fn shift_power(&self, p: i32) -> Self {
        LogLadder { k: self.k + p, c: self.c.clone() }
    }

    pub fn truncate(&mut self, depth: usize) {
        self.c.truncate(depth);
    }

    /// Effective (k, ell) after discarding coefficients below `rel_tol` times
    /// the largest stored coefficient: the tightest classification the table
    /// certifies. Returns None for the (numerically) zero ladder.
    pub fn classify(&self, rel_tol: f64) -> Option<(i32, usize)> {
        let maxc = self
            .c
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if maxc == 0.0 {
            return None;
        }
        let thresh = maxc * rel_tol;
        let mut top_k: Option<i32> = None;
        let mut ell: i32 = 0;
        for (i, row) in self.c.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v.abs() > thresh {
                    let p = self.k - i as i32;
                    if top_k.is_none() {
                        top_k = Some(p);
                    }
                    let k0 = top_k.unwrap();
                    if p > k0 {
                        top_k = Some(p);
                    }
                    // ell is the excess of log order over the descent index
                    // relative to the top power: j <= ell + i_eff.
                    let i_eff = (top_k.unwrap() - p) as i32;
                    ell = ell.max(j as i32 - i_eff);
                }
            }
        }
        top_k.map(|k| (k, ell.max(0) as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_single_term() {
        let l = LogLadder::term(2, 1, 3.0);
        let r = 5.0f64;
        assert_relative_eq!(l.eval(r), 3.0 * r * r * r.ln(), epsilon = 1e-12);
    }

    #[test]
    fn add_aligns_powers() {
        let a = LogLadder::term(1, 0, 2.0);
        let b = LogLadder::term(-1, 0, 5.0);
        let s = a.add(&b);
        assert_eq!(s.k, 1);
        let r = 3.0f64;
        assert_relative_eq!(s.eval(r), 2.0 * r + 5.0 / r, epsilon = 1e-12);
    }

    #[test]
    fn mul_convolves_logs() {
        let a = LogLadder::term(1, 1, 2.0); // 2 R log R
        let b = LogLadder::term(-2, 1, 3.0); // 3 R^-2 log R
        let p = a.mul(&b, 8);
        let r = 7.0f64;
        assert_relative_eq!(p.eval(r), 6.0 * r.ln().powi(2) / r, epsilon = 1e-12);
        assert_eq!(p.k, -1);
    }

    #[test]
    fn apply_d_matches_derivative() {
        // v = R^2 log R; D v = (1/2 + R d/dR) v = 2.5 R^2 log R + R^2
        let l = LogLadder::term(2, 1, 1.0).apply_d();
        let r = 4.0f64;
        assert_relative_eq!(l.eval(r), 2.5 * r * r * r.ln() + r * r, epsilon = 1e-12);
    }

    #[test]
    fn classify_ignores_noise() {
        let mut l = LogLadder::term(1, 0, 1.0);
        l.set_coeff(0, 3, 1e-15); // noise far below the leading coefficient
        l.set_coeff(2, 1, 0.5); // genuine R^{-1} log R term
        let (k, ell) = l.classify(1e-12).unwrap();
        assert_eq!(k, 1);
        // j=1 at descent 2 is within j <= ell + i for ell = 0
        assert_eq!(ell, 0);
    }
}
