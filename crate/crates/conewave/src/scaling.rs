//! Scaling frame shared by every stage: lambda(t) = t^{-1-nu} and the derived
//! variables tau, R, a, b.

/// Scaling parameters and coordinate changes for the frame
/// lambda(t) = t^{-1-nu}, mu(t) = t*lambda(t) = t^{-nu}, tau = t^{-nu}/nu,
/// R = lambda*r, a = r/t, b = 1/mu.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ScalingParams {
    pub nu: f64,
    /// Lower end of the tau range used by the Fourier-side stages.
    pub tau0: f64,
}

impl ScalingParams {
    pub fn new(nu: f64, tau0: f64) -> crate::Result<Self> {
        if !(nu > 0.0) {
            return Err(crate::Error::Config(format!("nu must be positive, got {nu}")));
        }
        if !(tau0 > 0.0) {
            return Err(crate::Error::Config(format!("tau0 must be positive, got {tau0}")));
        }
        Ok(ScalingParams { nu, tau0 })
    }

    pub fn lambda(&self, t: f64) -> f64 {
        t.powf(-1.0 - self.nu)
    }

    /// mu = t * lambda = t^{-nu}; the two-scale gap between R and a.
    pub fn mu(&self, t: f64) -> f64 {
        t.powf(-self.nu)
    }

    pub fn tau(&self, t: f64) -> f64 {
        t.powf(-self.nu) / self.nu
    }

    pub fn t_of_tau(&self, tau: f64) -> f64 {
        (self.nu * tau).powf(-1.0 / self.nu)
    }

    /// lambda as a function of tau: (nu*tau)^{(1+nu)/nu}.
    pub fn lambda_of_tau(&self, tau: f64) -> f64 {
        (self.nu * tau).powf((1.0 + self.nu) / self.nu)
    }

    pub fn inner_radius(&self, t: f64, r: f64) -> f64 {
        self.lambda(t) * r
    }

    pub fn cone_a(&self, t: f64, r: f64) -> f64 {
        r / t
    }

    pub fn small_b(&self, t: f64) -> f64 {
        1.0 / self.mu(t)
    }

    /// beta_nu(tau) = lambda'(tau)/lambda(tau) = (1+nu)/(nu*tau).
    pub fn beta_nu(&self, tau: f64) -> f64 {
        (1.0 + self.nu) / (self.nu * tau)
    }

    /// The constant beta_nu'(tau)/beta_nu(tau)^2 = -nu/(1+nu).
    pub fn beta_nu_ratio(&self) -> f64 {
        -self.nu / (1.0 + self.nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ScalingParams {
        ScalingParams::new(0.3, 10.0).unwrap()
    }

    #[test]
    fn lambda_power_identity() {
        let p = params();
        for &t in &[1e-3, 1e-2, 0.1, 0.5, 2.0] {
            assert_relative_eq!(p.lambda(t) * t.powf(1.0 + p.nu), 1.0, epsilon = 1e-13);
            assert_relative_eq!(p.mu(t), t.powf(-p.nu), epsilon = 1e-13);
            assert_relative_eq!(p.tau(t) * p.nu * t.powf(p.nu), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn tau_roundtrip_and_lambda_of_tau() {
        let p = params();
        for &t in &[1e-3, 0.05, 0.4] {
            let tau = p.tau(t);
            assert_relative_eq!(p.t_of_tau(tau), t, epsilon = 1e-12);
            assert_relative_eq!(p.lambda_of_tau(tau), p.lambda(t), max_relative = 1e-12);
        }
    }

    #[test]
    fn beta_nu_matches_log_derivative_of_lambda() {
        let p = params();
        let h = 1e-5;
        for &tau in &[12.0, 50.0, 300.0] {
            let fd = (p.lambda_of_tau(tau + h).ln() - p.lambda_of_tau(tau - h).ln()) / (2.0 * h);
            assert_relative_eq!(p.beta_nu(tau), fd, max_relative = 1e-8);
            let fd2 = (p.beta_nu(tau + h) - p.beta_nu(tau - h)) / (2.0 * h);
            assert_relative_eq!(fd2 / p.beta_nu(tau).powi(2), p.beta_nu_ratio(), max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ScalingParams::new(0.0, 1.0).is_err());
        assert!(ScalingParams::new(0.3, 0.0).is_err());
    }
}
