//! Physical constants, unit systems and numerically stable hyperbolic helpers.

use crate::error::{positive, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const KB: f64 = 1.380_649e-23;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of a singly charged 40Ca ion (kg).
pub const CA40_MASS: f64 = 39.962_590_863 * AMU - 9.109_383_701_5e-31;
/// Speed of light (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    pub hbar: f64,
    pub kb: f64,
}

impl UnitSystem {
    pub const SI: UnitSystem = UnitSystem { hbar: HBAR, kb: KB };
    pub const NATURAL: UnitSystem = UnitSystem { hbar: 1.0, kb: 1.0 };

    pub fn new(hbar: f64, kb: f64) -> Result<Self> {
        Ok(Self {
            hbar: positive("hbar", hbar)?,
            kb: positive("kB", kb)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        positive("hbar", self.hbar)?;
        positive("kB", self.kb)?;
        Ok(())
    }

    /// Inverse temperature 1/(kB T).
    pub fn beta(&self, temperature: f64) -> f64 {
        1.0 / (self.kb * temperature)
    }

    pub fn temperature(&self, beta: f64) -> f64 {
        1.0 / (self.kb * beta)
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::SI
    }
}

/// coth(x) for x > 0, stable for both tiny and huge arguments.
pub fn coth(x: f64) -> f64 {
    if x > 0.5 {
        // e^{2x} overflows to inf for large x, giving exactly 1.
        1.0 + 2.0 / ((2.0 * x).exp() - 1.0)
    } else {
        let em1 = (2.0 * x).exp_m1();
        (em1 + 2.0) / em1
    }
}

/// Inverse of [`coth`] on (1, inf).
pub fn acoth(c: f64) -> f64 {
    0.5 * (2.0 / (c - 1.0)).ln_1p()
}
