use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters shared by every module.
///
/// `temperature` defaults to `1/n`, the value at which the Gibbs measure of the
/// plasma coincides with the quasi-hole density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub m: u64,
    pub omega: f64,
    pub k: f64,
    pub g: f64,
    pub temperature: f64,
}

impl ModelParams {
    pub fn new(n: usize, m: u64) -> Self {
        ModelParams {
            n,
            m,
            omega: 0.0,
            k: 0.0,
            g: 1.0,
            temperature: 1.0 / n.max(1) as f64,
        }
    }

    pub fn with_trap(mut self, omega: f64, k: f64) -> Self {
        self.omega = omega;
        self.k = k;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    /// Same parameters with a different vortex degree (temperature unchanged).
    pub fn with_m(mut self, m: u64) -> Self {
        self.m = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParams("N must be >= 1".into()));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidParams(format!("k must be >= 0, got {}", self.k)));
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidParams(format!("g must be >= 0, got {}", self.g)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidParams(format!(
                "T must be > 0, got {}",
                self.temperature
            )));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidParams("omega must be finite".into()));
        }
        Ok(())
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// m/N, the charge of the pinned vortex in plasma units.
    pub fn vortex_charge(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Minimum of the trap potential, √(m/N).
    pub fn r_opt(&self) -> f64 {
        self.vortex_charge().sqrt()
    }

    /// Inner and outer radius of the electrostatic annulus (inner radius 0 for m = 0).
    pub fn electrostatic_radii(&self) -> (f64, f64) {
        let a = self.vortex_charge();
        (a.sqrt(), (2.0 + a).sqrt())
    }

    /// Whether T equals the plasma-analogy value 1/N up to rounding.
    pub fn is_default_temperature(&self) -> bool {
        (self.temperature * self.nf() - 1.0).abs() < 1e-12
    }

    /// Electrostatic regime m <= N², thermal beyond.
    pub fn is_thermal(&self) -> bool {
        (self.m as f64) > self.nf() * self.nf()
    }
}
