use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Ellipticity data shared by every kernel and operator of a problem.
///
/// Kernels of order `sigma` are trapped between `lambda (2 - sigma) / |y|^(n + sigma)`
/// and `lambda_upper (2 - sigma) / |y|^(n + sigma)`. At `sigma = 2` the class is
/// second order with coefficients between `c_n lambda` and `c_n lambda_upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityParams {
    pub n: usize,
    pub sigma: f64,
    pub sigma0: f64,
    pub lambda: f64,
    pub lambda_upper: f64,
    pub c_n: f64,
}

impl EllipticityParams {
    pub fn new(
        n: usize,
        sigma: f64,
        sigma0: f64,
        lambda: f64,
        lambda_upper: f64,
    ) -> Result<Self> {
        Self {
            n,
            sigma,
            sigma0,
            lambda,
            lambda_upper,
            c_n: 1.0,
        }
        .validated()
    }

    /// One-dimensional parameters with `sigma0 = sigma`.
    pub fn one_d(sigma: f64, lambda: f64, lambda_upper: f64) -> Result<Self> {
        Self::new(1, sigma, sigma.min(1.999_999), lambda, lambda_upper)
    }

    pub fn with_c_n(mut self, c_n: f64) -> Result<Self> {
        self.c_n = c_n;
        self.validated()
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.sigma = sigma;
        self.sigma0 = self.sigma0.min(sigma);
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.n == 1 || self.n == 2) {
            return domain(format!("dimension must be 1 or 2, got {}", self.n));
        }
        if !(self.sigma0 > 0.0 && self.sigma0 < 2.0) {
            return domain(format!("sigma0 must lie in (0, 2), got {}", self.sigma0));
        }
        if !(self.sigma >= self.sigma0 && self.sigma <= 2.0) {
            return domain(format!(
                "sigma must lie in [sigma0, 2] = [{}, 2], got {}",
                self.sigma0, self.sigma
            ));
        }
        if !(self.lambda > 0.0 && self.lambda_upper >= self.lambda && self.lambda_upper.is_finite()) {
            return domain(format!(
                "need 0 < lambda <= Lambda, got lambda = {}, Lambda = {}",
                self.lambda, self.lambda_upper
            ));
        }
        if !(self.c_n > 0.0 && self.c_n.is_finite()) {
            return domain(format!("c_n must be positive, got {}", self.c_n));
        }
        Ok(self)
    }

    /// `2 - sigma`, the kernel normalization.
    pub fn normalization(&self) -> f64 {
        2.0 - self.sigma
    }

    pub fn is_second_order(&self) -> bool {
        self.sigma >= 2.0
    }
}
